//! Loading a program from a directory: the manifest plus each service's
//! `.msv` sources and `.facts.jsonl` dumps.

use std::io::BufReader;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::facts::{read_facts, read_manifest, FactsError, FileKind, ManifestError, MANIFEST_FILE};
use crate::minisrv::{lower_files, parse_source, LoweringError, ParseError};
use crate::model::{validate_program, IntegrityViolation, Program, Service};

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("no {MANIFEST_FILE} in {}", .0.display())]
    MissingManifest(PathBuf),
    #[error("{MANIFEST_FILE}: {0}")]
    Manifest(ManifestError),
    #[error("cannot read {}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(ParseError),
    #[error("service `{service}`: {error}")]
    Lowering { service: String, error: LoweringError },
    #[error("{file}: {error}")]
    Facts { file: String, error: FactsError },
    #[error("program is not well-formed: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<IntegrityViolation>),
}

fn read(path: &Path) -> Result<String, LoadError> {
    std::fs::read_to_string(path).map_err(|source| LoadError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads `dir/privflow.manifest.json` and builds every listed service.
/// MiniSrv files of one service are lowered together; facts files are
/// merged in. The result is checked with [`validate_program`].
pub fn load_program(dir: &Path) -> Result<Program, LoadError> {
    let manifest_path = dir.join(MANIFEST_FILE);
    if !manifest_path.is_file() {
        return Err(LoadError::MissingManifest(dir.to_path_buf()));
    }
    let manifest = read_manifest(&manifest_path).map_err(LoadError::Manifest)?;
    let mut services = Vec::new();
    for entry in &manifest.services {
        let mut asts = Vec::new();
        let mut dumps = Vec::new();
        for f in &entry.files {
            let path = dir.join(f);
            match FileKind::of(f) {
                Some(FileKind::MiniSrv) => {
                    let text = read(&path)?;
                    asts.push(parse_source(&text, &entry.name, f).map_err(LoadError::Parse)?);
                }
                Some(FileKind::Facts) => {
                    let file = std::fs::File::open(&path).map_err(|source| LoadError::Io {
                        path: path.clone(),
                        source,
                    })?;
                    let s = read_facts(BufReader::new(file), &entry.name)
                        .map_err(|error| LoadError::Facts { file: f.clone(), error })?;
                    dumps.push(s);
                }
                None => unreachable!("manifest validation rejects other files"),
            }
        }
        let lowered = lower_files(&asts, &entry.name, entry.entry).map_err(|error| LoadError::Lowering {
            service: entry.name.clone(),
            error,
        })?;
        let mut elements = lowered.service.elements().to_vec();
        let mut edges: Vec<_> = lowered.service.edges().iter().cloned().collect();
        let mut channels = lowered.service.supplied_channels().to_vec();
        for d in dumps {
            elements.extend(d.elements().iter().cloned());
            edges.extend(d.edges().iter().cloned());
            channels.extend(d.supplied_channels().iter().cloned());
        }
        services.push(Service::new(entry.name.clone(), entry.entry, elements, edges, channels));
    }
    let program = Program::new(services, manifest);
    let violations = validate_program(&program);
    if violations.is_empty() {
        Ok(program)
    } else {
        Err(LoadError::Invalid(violations))
    }
}
