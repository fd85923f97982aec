//! Report assembly, input digests and exit codes.

use std::fmt::Display;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

pub const EXIT_PASS: u8 = 0;
pub const EXIT_FAIL: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_INTERNAL: u8 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Internal(String),
}

pub type CliResult<T = ()> = Result<T, CliError>;

pub fn usage(m: impl Display) -> CliError {
    CliError::Usage(m.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub status: Status,
    pub witness: Option<String>,
    pub depth: Option<usize>,
}

#[derive(Debug, Serialize)]
struct Report<'a> {
    command: &'a [String],
    inputs_digest: String,
    output: &'a Map<String, Value>,
    checks: &'a [Check],
    exit_status: u8,
}

/// Accumulates outputs and checks for one command.
pub struct Context {
    command: Vec<String>,
    hasher: Sha256,
    output: Map<String, Value>,
    checks: Vec<Check>,
}

impl Context {
    pub fn new(command: Vec<String>) -> Self {
        let mut hasher = Sha256::new();
        for a in &command {
            hasher.update(a.as_bytes());
            hasher.update([0]);
        }
        Context { command, hasher, output: Map::new(), checks: Vec::new() }
    }

    pub fn read(&mut self, path: &Path) -> CliResult<String> {
        let text = std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
        self.hasher.update(text.as_bytes());
        Ok(text)
    }

    pub fn document<T: DeserializeOwned>(&mut self, path: &Path) -> CliResult<T> {
        let text = self.read(path)?;
        serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
    }

    pub fn output(&mut self, key: &str, value: impl Serialize) -> CliResult {
        let v = serde_json::to_value(value).map_err(|e| CliError::Internal(e.to_string()))?;
        self.output.insert(key.to_string(), v);
        Ok(())
    }

    pub fn check(&mut self, name: &str, pass: bool, witness: Option<String>, depth: Option<usize>) {
        let status = if pass { Status::Pass } else { Status::Fail };
        self.checks.push(Check { name: name.to_string(), status, witness, depth });
    }

    /// Records a failed check for a library error and yields None.
    pub fn attempt<T, E: Display>(&mut self, name: &str, r: Result<T, E>) -> Option<T> {
        match r {
            Ok(v) => Some(v),
            Err(e) => {
                self.check(name, false, Some(e.to_string()), None);
                None
            }
        }
    }

    pub fn write_dot(&self, path: Option<&Path>, dot: impl FnOnce() -> String) -> CliResult {
        if let Some(p) = path {
            std::fs::write(p, dot()).map_err(|e| CliError::Internal(format!("cannot write {}: {e}", p.display())))?;
        }
        Ok(())
    }

    /// Prints the report and returns the exit code.
    pub fn finish(self) -> CliResult<u8> {
        let failed = self.checks.iter().any(|c| c.status == Status::Fail);
        let exit_status = if failed { EXIT_FAIL } else { EXIT_PASS };
        let report = Report {
            command: &self.command,
            inputs_digest: format!("{:x}", self.hasher.finalize()),
            output: &self.output,
            checks: &self.checks,
            exit_status,
        };
        let text = serde_json::to_string_pretty(&report).map_err(|e| CliError::Internal(e.to_string()))?;
        let mut out = std::io::stdout().lock();
        match writeln!(out, "{text}") {
            Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(CliError::Internal(e.to_string())),
            _ => Ok(exit_status),
        }
    }
}
