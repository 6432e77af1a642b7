//! Path constraints over a small decidable fragment.
//!
//! Atoms: `int-var ⋈ int-const`, `int-var ==/!= int-var`,
//! `string-var ==/!= (string-literal | string-var)`, boolean variables and
//! boolean literals; formulas are closed under and/or/not.

mod extract;
mod smtlib;
mod solver;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use extract::{collect_guards, extract_path_constraints, translate_guards, GuardView, VarInfo};
pub use smtlib::{check_smtlib, emit_smtlib};
pub use solver::{check_sat, CUBE_LIMIT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sort {
    Int,
    String,
    Bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn negate(self) -> CmpOp {
        match self {
            CmpOp::Eq => CmpOp::Ne,
            CmpOp::Ne => CmpOp::Eq,
            CmpOp::Lt => CmpOp::Ge,
            CmpOp::Le => CmpOp::Gt,
            CmpOp::Gt => CmpOp::Le,
            CmpOp::Ge => CmpOp::Lt,
        }
    }

    /// The operator with its operands swapped (`c < x` is `x > c`).
    pub fn flip(self) -> CmpOp {
        match self {
            CmpOp::Lt => CmpOp::Gt,
            CmpOp::Le => CmpOp::Ge,
            CmpOp::Gt => CmpOp::Lt,
            CmpOp::Ge => CmpOp::Le,
            op => op,
        }
    }

    pub fn eval<T: Ord>(self, a: T, b: T) -> bool {
        match self {
            CmpOp::Eq => a == b,
            CmpOp::Ne => a != b,
            CmpOp::Lt => a < b,
            CmpOp::Le => a <= b,
            CmpOp::Gt => a > b,
            CmpOp::Ge => a >= b,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StrRhs {
    Lit { value: String },
    Var { name: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "atom", rename_all = "snake_case")]
pub enum Atom {
    IntConst { var: String, op: CmpOp, value: i64 },
    IntVars { a: String, b: String, eq: bool },
    Str { var: String, rhs: StrRhs, eq: bool },
    BoolVar { var: String },
    BoolLit { value: bool },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "op", content = "args", rename_all = "snake_case")]
pub enum Formula {
    Atom(Atom),
    And(Vec<Formula>),
    Or(Vec<Formula>),
    Not(Box<Formula>),
}

impl Formula {
    pub fn truth() -> Formula {
        Formula::And(Vec::new())
    }

    pub fn not(f: Formula) -> Formula {
        Formula::Not(Box::new(f))
    }

    /// Top-level conjuncts (flattening nested `and`).
    pub fn conjuncts(&self) -> Vec<&Formula> {
        match self {
            Formula::And(fs) => fs.iter().flat_map(Formula::conjuncts).collect(),
            f => vec![f],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathConstraint {
    pub variables: BTreeMap<String, Sort>,
    pub formula: Formula,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConstraintError {
    #[error("undeclared variable `{0}`")]
    Undeclared(String),
    #[error("variable `{var}` used as {used:?} but declared {declared:?}")]
    SortMismatch { var: String, used: Sort, declared: Sort },
    #[error("missing value for variable `{0}`")]
    MissingVariable(String),
}

impl PathConstraint {
    pub fn new(variables: BTreeMap<String, Sort>, formula: Formula) -> PathConstraint {
        PathConstraint { variables, formula }
    }

    pub fn trivial() -> PathConstraint {
        PathConstraint::new(BTreeMap::new(), Formula::truth())
    }

    /// Checks that every atom references a declared variable of the right sort.
    pub fn validate(&self) -> Result<(), ConstraintError> {
        fn want(c: &PathConstraint, v: &str, s: Sort) -> Result<(), ConstraintError> {
            match c.variables.get(v) {
                None => Err(ConstraintError::Undeclared(v.to_string())),
                Some(&d) if d != s => Err(ConstraintError::SortMismatch {
                    var: v.to_string(),
                    used: s,
                    declared: d,
                }),
                Some(_) => Ok(()),
            }
        }
        fn walk(c: &PathConstraint, f: &Formula) -> Result<(), ConstraintError> {
            match f {
                Formula::And(fs) | Formula::Or(fs) => fs.iter().try_for_each(|f| walk(c, f)),
                Formula::Not(f) => walk(c, f),
                Formula::Atom(a) => match a {
                    Atom::IntConst { var, .. } => want(c, var, Sort::Int),
                    Atom::IntVars { a, b, .. } => {
                        want(c, a, Sort::Int)?;
                        want(c, b, Sort::Int)
                    }
                    Atom::Str { var, rhs, .. } => {
                        want(c, var, Sort::String)?;
                        match rhs {
                            StrRhs::Var { name } => want(c, name, Sort::String),
                            StrRhs::Lit { .. } => Ok(()),
                        }
                    }
                    Atom::BoolVar { var } => want(c, var, Sort::Bool),
                    Atom::BoolLit { .. } => Ok(()),
                },
            }
        }
        walk(self, &self.formula)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Int(i64),
    Str(String),
    Bool(bool),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(v) => write!(f, "{v}"),
            Value::Str(s) => write!(f, "{s:?}"),
            Value::Bool(b) => write!(f, "{b}"),
        }
    }
}

pub type Assignment = BTreeMap<String, Value>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum SatResult {
    Sat { witness: Assignment },
    Unsat,
    Unknown { reason: String },
}

impl SatResult {
    pub fn is_unsat(&self) -> bool {
        matches!(self, SatResult::Unsat)
    }
}

fn value<'a>(a: &'a Assignment, v: &str) -> Result<&'a Value, ConstraintError> {
    a.get(v).ok_or_else(|| ConstraintError::MissingVariable(v.to_string()))
}

fn int(a: &Assignment, v: &str) -> Result<i64, ConstraintError> {
    match value(a, v)? {
        Value::Int(i) => Ok(*i),
        _ => Err(ConstraintError::SortMismatch {
            var: v.to_string(),
            used: Sort::Int,
            declared: sort_of(value(a, v)?),
        }),
    }
}

fn string<'a>(a: &'a Assignment, v: &str) -> Result<&'a str, ConstraintError> {
    match value(a, v)? {
        Value::Str(s) => Ok(s),
        other => Err(ConstraintError::SortMismatch {
            var: v.to_string(),
            used: Sort::String,
            declared: sort_of(other),
        }),
    }
}

fn sort_of(v: &Value) -> Sort {
    match v {
        Value::Int(_) => Sort::Int,
        Value::Str(_) => Sort::String,
        Value::Bool(_) => Sort::Bool,
    }
}

/// Concrete evaluation of a formula under an assignment.
pub fn eval_witness(c: &PathConstraint, a: &Assignment) -> Result<bool, ConstraintError> {
    for v in c.variables.keys() {
        value(a, v)?;
    }
    eval_formula(&c.formula, a)
}

pub fn eval_formula(f: &Formula, a: &Assignment) -> Result<bool, ConstraintError> {
    Ok(match f {
        Formula::And(fs) => {
            for f in fs {
                if !eval_formula(f, a)? {
                    return Ok(false);
                }
            }
            true
        }
        Formula::Or(fs) => {
            for f in fs {
                if eval_formula(f, a)? {
                    return Ok(true);
                }
            }
            false
        }
        Formula::Not(f) => !eval_formula(f, a)?,
        Formula::Atom(at) => match at {
            Atom::IntConst { var, op, value } => op.eval(int(a, var)?, *value),
            Atom::IntVars { a: x, b: y, eq } => (int(a, x)? == int(a, y)?) == *eq,
            Atom::Str { var, rhs, eq } => {
                let l = string(a, var)?;
                let r = match rhs {
                    StrRhs::Lit { value } => value.as_str(),
                    StrRhs::Var { name } => string(a, name)?,
                };
                (l == r) == *eq
            }
            Atom::BoolVar { var } => match value(a, var)? {
                Value::Bool(b) => *b,
                other => {
                    return Err(ConstraintError::SortMismatch {
                        var: var.clone(),
                        used: Sort::Bool,
                        declared: sort_of(other),
                    })
                }
            },
            Atom::BoolLit { value } => *value,
        },
    })
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::And(fs) if fs.is_empty() => f.write_str("true"),
            Formula::Or(fs) if fs.is_empty() => f.write_str("false"),
            Formula::And(fs) | Formula::Or(fs) => {
                let sep = if matches!(self, Formula::And(_)) {
                    " && "
                } else {
                    " || "
                };
                f.write_str("(")?;
                for (i, x) in fs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(sep)?;
                    }
                    write!(f, "{x}")?;
                }
                f.write_str(")")
            }
            Formula::Not(x) => write!(f, "!{x}"),
            Formula::Atom(a) => match a {
                Atom::IntConst { var, op, value } => write!(f, "{var} {} {value}", op.symbol()),
                Atom::IntVars { a, b, eq } => write!(f, "{a} {} {b}", if *eq { "==" } else { "!=" }),
                Atom::Str { var, rhs, eq } => {
                    let op = if *eq { "==" } else { "!=" };
                    match rhs {
                        StrRhs::Lit { value } => write!(f, "{var} {op} {value:?}"),
                        StrRhs::Var { name } => write!(f, "{var} {op} {name}"),
                    }
                }
                Atom::BoolVar { var } => f.write_str(var),
                Atom::BoolLit { value } => write!(f, "{value}"),
            },
        }
    }
}

#[cfg(test)]
mod tests;
