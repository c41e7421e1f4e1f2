use std::io::Write;
use std::path::Path;

use logsob_core::functionals::MeshMetadata;
use serde::Serialize;

use crate::failure::Failure;

pub const SCHEMA: &str = "logsob-report/1";

#[derive(Debug, Serialize)]
pub struct Tool {
    pub name: &'static str,
    pub version: &'static str,
}

#[derive(Debug, Serialize)]
pub struct CommandEcho {
    pub name: String,
    pub args: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct ReportEnvelope<P: Serialize> {
    pub schema: &'static str,
    pub tool: Tool,
    pub mesh: MeshMetadata,
    pub command: CommandEcho,
    pub payload: P,
}

impl<P: Serialize> ReportEnvelope<P> {
    pub fn new(command: &str, argv: &[String], mesh: MeshMetadata, payload: P) -> Self {
        Self {
            schema: SCHEMA,
            tool: Tool { name: "logsob", version: env!("CARGO_PKG_VERSION") },
            mesh,
            command: CommandEcho { name: command.to_string(), args: argv.to_vec() },
            payload,
        }
    }
}

pub fn emit<P: Serialize>(envelope: &ReportEnvelope<P>, path: Option<&Path>) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(envelope)?;
    text.push('\n');
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| Failure::data(format!("{}: {e}", p.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
            Ok(())
        }
    }
}

pub fn write_csv<R: Serialize>(path: &Path, rows: &[R]) -> Result<(), Failure> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Stderr table writer that can be silenced.
pub struct Table {
    quiet: bool,
}

impl Table {
    pub fn new(quiet: bool) -> Self {
        Self { quiet }
    }

    pub fn line(&self, text: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", text.as_ref());
        }
    }
}
