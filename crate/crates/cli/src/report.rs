use std::fs;
use std::path::{Path, PathBuf};

use morphflow::pipeline::StageRecord;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Clone, Debug, Serialize)]
pub struct InputDigest {
    pub path: PathBuf,
    pub sha256: String,
}

/// Machine-readable record of one invocation.
///
/// Struct fields serialize in declaration order and JSON objects with sorted
/// keys, so two runs differ only in the `seconds` fields.
#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub command: &'static str,
    pub version: &'static str,
    pub parameters: serde_json::Value,
    pub inputs: Vec<InputDigest>,
    pub levels: Vec<StageRecord>,
    pub outputs: Vec<PathBuf>,
    pub results: serde_json::Value,
    pub seconds: f64,
}

impl RunReport {
    pub fn new(command: &'static str, parameters: &impl Serialize) -> Self {
        Self {
            command,
            version: env!("CARGO_PKG_VERSION"),
            parameters: serde_json::to_value(parameters).expect("parameters serialize"),
            inputs: Vec::new(),
            levels: Vec::new(),
            outputs: Vec::new(),
            results: serde_json::Value::Null,
            seconds: 0.0,
        }
    }

    pub fn digest(&mut self, path: &Path) -> Result<(), CliError> {
        let bytes = fs::read(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => {
                CliError::Usage(format!("input {} does not exist", path.display()))
            }
            _ => CliError::io(path, e),
        })?;
        self.inputs.push(InputDigest {
            path: path.to_owned(),
            sha256: hex::encode(Sha256::digest(&bytes)),
        });
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}
