use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub const MANIFEST_FILE: &str = "privflow.manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u32,
    pub services: Vec<ServiceEntry>,
    #[serde(default)]
    pub gateway_routes: Vec<GatewayRoute>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceEntry {
    pub name: String,
    #[serde(default)]
    pub entry: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_url: Option<String>,
    /// `.msv` sources and/or `.facts.jsonl` dumps, relative to the manifest.
    #[serde(default)]
    pub files: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GatewayRoute {
    pub prefix: String,
    pub target: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileKind {
    MiniSrv,
    Facts,
}

impl FileKind {
    pub fn of(path: &str) -> Option<FileKind> {
        if path.ends_with(".facts.jsonl") {
            Some(FileKind::Facts)
        } else if path.ends_with(".msv") {
            Some(FileKind::MiniSrv)
        } else {
            None
        }
    }
}

/// A manifest problem, located by a field path such as `services[1].name`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestError {
    pub field: String,
    pub reason: String,
}

impl ManifestError {
    fn new(field: impl Into<String>, reason: impl Into<String>) -> ManifestError {
        ManifestError {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

impl fmt::Display for ManifestError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.field.is_empty() {
            f.write_str(&self.reason)
        } else {
            write!(f, "{}: {}", self.field, self.reason)
        }
    }
}

impl std::error::Error for ManifestError {}

impl Manifest {
    pub fn entry(&self) -> Option<&ServiceEntry> {
        self.services.iter().find(|s| s.entry)
    }

    pub fn validate(&self) -> Result<(), ManifestError> {
        if self.version != 1 {
            return Err(ManifestError::new(
                "version",
                format!("unsupported version {}", self.version),
            ));
        }
        if self.services.is_empty() {
            return Err(ManifestError::new("services", "empty"));
        }
        let mut names = HashSet::new();
        for (i, s) in self.services.iter().enumerate() {
            if s.name.is_empty() {
                return Err(ManifestError::new(format!("services[{i}].name"), "empty"));
            }
            if !names.insert(s.name.as_str()) {
                return Err(ManifestError::new(
                    format!("services[{i}].name"),
                    format!("duplicate service `{}`", s.name),
                ));
            }
            for (j, f) in s.files.iter().enumerate() {
                if FileKind::of(f).is_none() {
                    return Err(ManifestError::new(
                        format!("services[{i}].files[{j}]"),
                        format!("unsupported file type `{f}` (expected .msv or .facts.jsonl)"),
                    ));
                }
            }
        }
        match self.services.iter().filter(|s| s.entry).count() {
            0 => return Err(ManifestError::new("services", "no entry")),
            1 => {}
            _ => return Err(ManifestError::new("services", "multiple entry")),
        }
        for (i, r) in self.gateway_routes.iter().enumerate() {
            if !r.prefix.starts_with('/') {
                return Err(ManifestError::new(
                    format!("gateway_routes[{i}].prefix"),
                    "must start with \"/\"",
                ));
            }
            if !names.contains(r.target.as_str()) {
                return Err(ManifestError::new(
                    format!("gateway_routes[{i}].target"),
                    format!("unknown service `{}`", r.target),
                ));
            }
        }
        Ok(())
    }
}

pub fn parse_manifest(text: &str) -> Result<Manifest, ManifestError> {
    let m: Manifest = serde_json::from_str(text).map_err(|e| ManifestError::new("", e.to_string()))?;
    m.validate()?;
    Ok(m)
}

pub fn read_manifest(file: &Path) -> Result<Manifest, ManifestError> {
    let text = std::fs::read_to_string(file)
        .map_err(|e| ManifestError::new("", format!("cannot read {}: {e}", file.display())))?;
    parse_manifest(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO: &str = r#"{
        "version": 1,
        "services": [
            {"name": "gateway", "entry": true, "files": ["gw.msv"]},
            {"name": "users", "base_url": "http://users:80", "files": ["u.facts.jsonl"]}
        ],
        "gateway_routes": [{"prefix": "/api/user", "target": "users"}]
    }"#;

    #[test]
    fn minimal_valid() {
        let m = parse_manifest(TWO).unwrap();
        assert_eq!(m.entry().unwrap().name, "gateway");
        assert_eq!(
            m.gateway_routes,
            vec![GatewayRoute {
                prefix: "/api/user".into(),
                target: "users".into()
            }]
        );
    }

    #[test]
    fn multiple_entries() {
        let text = TWO.replace(r#""name": "users","#, r#""name": "users", "entry": true,"#);
        let err = parse_manifest(&text).unwrap_err();
        assert_eq!(err.to_string(), "services: multiple entry");
    }

    #[test]
    fn no_entry() {
        let text = TWO.replace(r#""entry": true, "#, "");
        assert_eq!(parse_manifest(&text).unwrap_err().to_string(), "services: no entry");
    }

    #[test]
    fn bad_prefix_and_target() {
        let t = TWO.replace(r#""prefix": "/api/user""#, r#""prefix": "api""#);
        assert_eq!(parse_manifest(&t).unwrap_err().field, "gateway_routes[0].prefix");
        let t = TWO.replace(r#""target": "users""#, r#""target": "nobody""#);
        assert_eq!(parse_manifest(&t).unwrap_err().field, "gateway_routes[0].target");
    }

    #[test]
    fn bad_extension() {
        let t = TWO.replace("gw.msv", "gw.py");
        assert_eq!(parse_manifest(&t).unwrap_err().field, "services[0].files[0]");
    }

    #[test]
    fn unknown_field_rejected() {
        let t = TWO.replace(r#""version": 1,"#, r#""version": 1, "extra": 2,"#);
        assert!(parse_manifest(&t).is_err());
    }
}
