use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::cross_service::{GlobalPath, NodeRef, Segment};
use crate::minisrv::{lower, parse_source};
use crate::model::{ElementKind, Program};
use crate::reasoner::{ConstraintAnswer, ScriptedOracle};
use crate::search::flow_between;
use crate::testkit::{random_constraint, FormulaConfig};
use crate::Manifest;

fn int_eq(var: &str, value: i64) -> Formula {
    Formula::Atom(Atom::IntConst {
        var: var.into(),
        op: CmpOp::Eq,
        value,
    })
}

fn str_eq(var: &str, lit: &str, eq: bool) -> Formula {
    Formula::Atom(Atom::Str {
        var: var.into(),
        rhs: StrRhs::Lit { value: lit.into() },
        eq,
    })
}

fn decl(pairs: &[(&str, Sort)]) -> BTreeMap<String, Sort> {
    pairs.iter().map(|(n, s)| (n.to_string(), *s)).collect()
}

#[test]
fn empty_conjunction_is_sat() {
    let c = PathConstraint::trivial();
    match check_sat(&c) {
        SatResult::Sat { witness } => assert!(eval_witness(&c, &witness).unwrap()),
        other => panic!("{other:?}"),
    }
}

#[test]
fn contradictory_int_equalities() {
    let c = PathConstraint::new(
        decl(&[("x", Sort::Int)]),
        Formula::And(vec![int_eq("x", 1), int_eq("x", 2)]),
    );
    assert_eq!(check_sat(&c), SatResult::Unsat);
}

#[test]
fn contradictory_string_guards() {
    let c = PathConstraint::new(
        decl(&[("h.mode", Sort::String)]),
        Formula::And(vec![str_eq("h.mode", "A", true), str_eq("h.mode", "B", true)]),
    );
    assert!(check_sat(&c).is_unsat());
}

#[test]
fn interval_and_disequalities() {
    // 0 <= x < 2, y in the same class, x != 0, x != 1 → unsat
    let f = Formula::And(vec![
        Formula::Atom(Atom::IntConst {
            var: "x".into(),
            op: CmpOp::Ge,
            value: 0,
        }),
        Formula::Atom(Atom::IntConst {
            var: "y".into(),
            op: CmpOp::Lt,
            value: 2,
        }),
        Formula::Atom(Atom::IntVars {
            a: "x".into(),
            b: "y".into(),
            eq: true,
        }),
        Formula::not(int_eq("x", 0)),
        Formula::not(int_eq("y", 1)),
    ]);
    let c = PathConstraint::new(decl(&[("x", Sort::Int), ("y", Sort::Int)]), f);
    assert!(check_sat(&c).is_unsat());
}

#[test]
fn fresh_strings_satisfy_disequalities() {
    let f = Formula::And(vec![
        str_eq("s", "a", false),
        str_eq("t", "a", false),
        Formula::Atom(Atom::Str {
            var: "s".into(),
            rhs: StrRhs::Var { name: "t".into() },
            eq: false,
        }),
    ]);
    let c = PathConstraint::new(decl(&[("s", Sort::String), ("t", Sort::String)]), f);
    match check_sat(&c) {
        SatResult::Sat { witness } => assert!(eval_witness(&c, &witness).unwrap()),
        other => panic!("{other:?}"),
    }
}

#[test]
fn cube_overflow_is_unknown() {
    // 13 binary disjunctions → 8192 cubes
    let f = Formula::And(
        (0..13)
            .map(|i| Formula::Or(vec![int_eq(&format!("x{i}"), 0), int_eq(&format!("x{i}"), 1)]))
            .collect(),
    );
    let vars = (0..13).map(|i| (format!("x{i}"), Sort::Int)).collect();
    let c = PathConstraint::new(vars, f);
    assert!(matches!(check_sat(&c), SatResult::Unknown { .. }));
}

#[test]
fn eval_examples() {
    let c = PathConstraint::new(decl(&[("x", Sort::Int)]), int_eq("x", 1));
    let a: Assignment = [("x".to_string(), Value::Int(1))].into();
    assert!(eval_witness(&c, &a).unwrap());

    let c = PathConstraint::new(
        decl(&[("x", Sort::Int), ("y", Sort::String)]),
        Formula::And(vec![int_eq("x", 1), str_eq("y", "a", false)]),
    );
    let a: Assignment = [
        ("x".to_string(), Value::Int(1)),
        ("y".to_string(), Value::Str("a".into())),
    ]
    .into();
    assert!(!eval_witness(&c, &a).unwrap());

    let missing: Assignment = [("x".to_string(), Value::Int(1))].into();
    assert_eq!(
        eval_witness(&c, &missing),
        Err(ConstraintError::MissingVariable("y".into()))
    );
}

#[test]
fn validate_rejects_undeclared_and_mismatched() {
    let c = PathConstraint::new(BTreeMap::new(), int_eq("x", 1));
    assert_eq!(c.validate(), Err(ConstraintError::Undeclared("x".into())));
    let c = PathConstraint::new(decl(&[("x", Sort::String)]), int_eq("x", 1));
    assert!(matches!(c.validate(), Err(ConstraintError::SortMismatch { .. })));
}

#[test]
fn smtlib_layout() {
    let c = PathConstraint::new(decl(&[("x", Sort::Int)]), int_eq("x", 1));
    assert_eq!(
        emit_smtlib(&c),
        "(declare-const x Int)\n(assert (= x 1))\n(check-sat)\n"
    );
    assert_eq!(emit_smtlib(&PathConstraint::trivial()), "(check-sat)\n");
}

#[test]
fn smtlib_mixed_sorts_golden() {
    let c = PathConstraint::new(
        decl(&[("h.n", Sort::Int), ("h.mode", Sort::String), ("h.on", Sort::Bool)]),
        Formula::And(vec![
            str_eq("h.mode", "A \"q\"", true),
            Formula::Atom(Atom::IntConst {
                var: "h.n".into(),
                op: CmpOp::Ge,
                value: -3,
            }),
            Formula::Or(vec![
                Formula::Atom(Atom::BoolVar { var: "h.on".into() }),
                Formula::not(str_eq("h.mode", "B", false)),
            ]),
        ]),
    );
    let expected = "\
(declare-const h.mode String)
(declare-const h.n Int)
(declare-const h.on Bool)
(assert (= h.mode \"A \"\"q\"\"\"))
(assert (>= h.n (- 3)))
(assert (or h.on (not (not (= h.mode \"B\")))))
(check-sat)
";
    let text = emit_smtlib(&c);
    assert_eq!(text, expected);
    check_smtlib(&text).unwrap();
}

#[test]
fn smtlib_quotes_awkward_names() {
    let c = PathConstraint::new(
        decl(&[("1st|x", Sort::Bool)]),
        Formula::Atom(Atom::BoolVar { var: "1st|x".into() }),
    );
    let text = emit_smtlib(&c);
    assert!(text.contains("|1st_x|"), "{text}");
    check_smtlib(&text).unwrap();
}

#[test]
fn checker_rejects_malformed_scripts() {
    for bad in [
        "(assert (= x 1))",
        "(declare-const x Int)(assert (= x \"a\"))",
        "(declare-const x Int)(assert x)",
        "(declare-const x Int",
        "(frobnicate)",
        "(declare-const x Int)(declare-const x Int)",
    ] {
        assert!(check_smtlib(bad).is_err(), "{bad}");
    }
    check_smtlib("(set-logic ALL)\n(declare-fun b () Bool)\n(assert (=> b true))\n(check-sat)\n(get-model)\n").unwrap();
}

// ---- guard extraction over MiniSrv ----

const GUARDED: &str = r#"
@route("POST", "/h")
fn handler(request) {
    mode = request.param("mode")
    n = 3
    if mode == "A" {
        if mode == "B" {
            db.write(mode)
        }
    }
    if n > 5 {
        x = 1
    } else {
        exec(mode)
    }
    if helper(mode) {
        db.write(mode + n)
    }
}

fn helper(m) {
    return m
}
"#;

fn guarded_program() -> Program {
    let s = lower(&parse_source(GUARDED, "svc", "h.msv").unwrap(), "svc").unwrap();
    let manifest: Manifest =
        serde_json::from_str(r#"{"version":1,"services":[{"name":"svc","entry":true,"files":["h.msv"]}]}"#).unwrap();
    Program::new(vec![s.with_entry(true)], manifest)
}

fn path_to(program: &Program, needle: &str) -> GlobalPath {
    let s = &program.services[0];
    let ep = s.elements().iter().find(|e| e.kind == ElementKind::Endpoint);
    let src = ep
        .or_else(|| s.elements().iter().find(|e| e.kind == ElementKind::Parameter))
        .unwrap();
    let dst = s
        .elements()
        .iter()
        .find(|e| e.kind == ElementKind::Call && e.source == needle)
        .unwrap_or_else(|| panic!("no call `{needle}`"));
    let fp = flow_between(s, &src.id, &dst.id).unwrap_or_else(|| panic!("no flow to `{needle}`"));
    GlobalPath {
        nodes: vec![NodeRef::new("svc", src.id.clone()), NodeRef::new("svc", dst.id.clone())],
        segments: vec![Segment::Intra {
            service: "svc".into(),
            path: fp,
        }],
    }
}

#[test]
fn nested_string_guards_are_unsat() {
    let p = guarded_program();
    let path = path_to(&p, "db.write(mode)");
    let guards = collect_guards(&p, &path).unwrap();
    let conds: Vec<&str> = guards.iter().map(|g| g.condition.as_str()).collect();
    assert_eq!(conds, vec!["mode == \"A\"", "mode == \"B\""]);
    let answer = extract_path_constraints(&p, &path, &ScriptedOracle::default()).unwrap();
    let ConstraintAnswer::Predicates { constraint } = answer else {
        panic!("{answer:?}")
    };
    assert_eq!(constraint.variables, decl(&[("handler.mode", Sort::String)]));
    assert!(check_sat(&constraint).is_unsat());
}

#[test]
fn else_branch_is_negated() {
    let p = guarded_program();
    let path = path_to(&p, "exec(mode)");
    let guards = collect_guards(&p, &path).unwrap();
    assert_eq!(guards.len(), 1);
    assert!(guards[0].negated);
    let ConstraintAnswer::Predicates { constraint } = translate_guards(&guards) else {
        panic!()
    };
    assert_eq!(constraint.formula.to_string(), "(!handler.n > 5)");
    // n = 3 is not propagated, so the else branch stays feasible
    assert!(matches!(check_sat(&constraint), SatResult::Sat { .. }));
}

#[test]
fn helper_call_in_guard_is_skipped() {
    let p = guarded_program();
    let path = path_to(&p, "db.write(mode + n)");
    let ConstraintAnswer::Skipped { reason } = translate_guards(&collect_guards(&p, &path).unwrap()) else {
        panic!()
    };
    assert!(reason.contains("calls a function"), "{reason}");
}

#[test]
fn no_guards_gives_true() {
    let text = "@route(\"POST\", \"/f\")\nfn f(request) {\n    r = request.param(\"role\")\n    db.write(r)\n}\n";
    let s = lower(&parse_source(text, "svc", "f.msv").unwrap(), "svc").unwrap();
    let manifest: Manifest =
        serde_json::from_str(r#"{"version":1,"services":[{"name":"svc","entry":true,"files":["f.msv"]}]}"#).unwrap();
    let p = Program::new(vec![s], manifest);
    let path = path_to(&p, "db.write(r)");
    let ConstraintAnswer::Predicates { constraint } = translate_guards(&collect_guards(&p, &path).unwrap()) else {
        panic!()
    };
    assert_eq!(constraint, PathConstraint::new(BTreeMap::new(), Formula::And(vec![])));
}

#[test]
fn translation_skip_rules() {
    let guard = |cond: &str, vars: &[(&str, TypeTag, usize)]| GuardView {
        element: "g".into(),
        service: "svc".into(),
        function: "f".into(),
        file: "f.msv".into(),
        line: 1,
        col: 1,
        condition: cond.into(),
        negated: false,
        vars: vars
            .iter()
            .map(|(n, t, d)| {
                (
                    n.to_string(),
                    VarInfo {
                        scoped: format!("f.{n}"),
                        ty: *t,
                        defs: *d,
                    },
                )
            })
            .collect(),
    };
    use crate::model::TypeTag;
    let skipped = |g: GuardView| matches!(translate_guards(&[g]), ConstraintAnswer::Skipped { .. });
    assert!(skipped(guard("a.b == 1", &[("a", TypeTag::Unknown, 1)])));
    assert!(skipped(guard("a + 1 == 2", &[("a", TypeTag::Int, 1)])));
    assert!(skipped(guard("a == 1", &[("a", TypeTag::Int, 2)])));
    assert!(skipped(guard(
        "a == b",
        &[("a", TypeTag::Unknown, 1), ("b", TypeTag::Unknown, 1)]
    )));
    assert!(skipped(guard("a < \"x\"", &[("a", TypeTag::String, 1)])));
    assert!(skipped(guard("a == 1 && a == \"x\"", &[("a", TypeTag::Unknown, 1)])));
    assert!(!skipped(guard("2 < a || a == 0", &[("a", TypeTag::Unknown, 1)])));
    let ConstraintAnswer::Predicates { constraint } = translate_guards(&[guard(
        "2 < a && 1 == 1 && b",
        &[("a", TypeTag::Int, 1), ("b", TypeTag::Bool, 1)],
    )]) else {
        panic!()
    };
    assert_eq!(constraint.formula.to_string(), "(((f.a > 2 && true) && f.b))");
}

// ---- random formulas against bounded enumeration ----

fn string_literals(f: &Formula, out: &mut BTreeSet<String>) {
    match f {
        Formula::And(fs) | Formula::Or(fs) => fs.iter().for_each(|x| string_literals(x, out)),
        Formula::Not(x) => string_literals(x, out),
        Formula::Atom(Atom::Str {
            rhs: StrRhs::Lit { value },
            ..
        }) => {
            out.insert(value.clone());
        }
        Formula::Atom(_) => {}
    }
}

/// Independent model search: ints in [-8, 8], strings from the occurring
/// literals plus one fresh value per string variable, both booleans.
pub(crate) fn enumerate_model(c: &PathConstraint) -> Option<Assignment> {
    let mut lits = BTreeSet::new();
    string_literals(&c.formula, &mut lits);
    let n_str = c.variables.values().filter(|s| **s == Sort::String).count();
    let mut strs: Vec<String> = lits.into_iter().collect();
    strs.extend((0..n_str).map(|i| format!("~fresh{i}")));
    let domains: Vec<(String, Vec<Value>)> = c
        .variables
        .iter()
        .map(|(v, s)| {
            let d = match s {
                Sort::Int => (-8..=8).map(Value::Int).collect(),
                Sort::String => strs.iter().cloned().map(Value::Str).collect(),
                Sort::Bool => vec![Value::Bool(false), Value::Bool(true)],
            };
            (v.clone(), d)
        })
        .collect();
    let mut idx = vec![0usize; domains.len()];
    loop {
        let a: Assignment = domains
            .iter()
            .zip(&idx)
            .map(|((v, d), &i)| (v.clone(), d[i].clone()))
            .collect();
        if eval_formula(&c.formula, &a).unwrap() {
            return Some(a);
        }
        let mut k = 0;
        loop {
            if k == idx.len() {
                return None;
            }
            idx[k] += 1;
            if idx[k] < domains[k].1.len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

#[test]
fn random_formulas_agree_with_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let cfg = FormulaConfig::default();
    let mut unknown = 0;
    for i in 0..200 {
        let c = random_constraint(&mut rng, &cfg);
        c.validate().unwrap();
        let model = enumerate_model(&c);
        match check_sat(&c) {
            SatResult::Sat { witness } => {
                assert!(
                    eval_witness(&c, &witness).unwrap(),
                    "case {i}: bad witness for {}",
                    c.formula
                );
                assert!(model.is_some(), "case {i}: Sat but no bounded model for {}", c.formula);
            }
            SatResult::Unsat => assert!(model.is_none(), "case {i}: Unsat but model {model:?} for {}", c.formula),
            SatResult::Unknown { .. } => unknown += 1,
        }
    }
    assert!(unknown < 200);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn smtlib_is_deterministic_and_well_formed(seed in any::<u64>()) {
        let c = random_constraint(&mut ChaCha8Rng::seed_from_u64(seed), &FormulaConfig::default());
        let text = emit_smtlib(&c);
        prop_assert_eq!(&text, &emit_smtlib(&c));
        prop_assert!(check_smtlib(&text).is_ok(), "{}", text);
        prop_assert!(text.ends_with("(check-sat)\n"));
    }

    #[test]
    fn sat_witnesses_evaluate_true(seed in any::<u64>()) {
        let c = random_constraint(&mut ChaCha8Rng::seed_from_u64(seed), &FormulaConfig::default());
        if let SatResult::Sat { witness } = check_sat(&c) {
            prop_assert!(eval_witness(&c, &witness).unwrap());
        }
    }

    #[test]
    fn negation_flips_validity(seed in any::<u64>()) {
        // c and !c cannot both be Unsat
        let c = random_constraint(&mut ChaCha8Rng::seed_from_u64(seed), &FormulaConfig::default());
        let neg = PathConstraint::new(c.variables.clone(), Formula::not(c.formula.clone()));
        prop_assert!(!(check_sat(&c).is_unsat() && check_sat(&neg).is_unsat()));
    }

    #[test]
    fn constraint_json_round_trips(seed in any::<u64>()) {
        let c = random_constraint(&mut ChaCha8Rng::seed_from_u64(seed), &FormulaConfig::default());
        let text = serde_json::to_string(&c).unwrap();
        let back: PathConstraint = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back, c);
    }
}
