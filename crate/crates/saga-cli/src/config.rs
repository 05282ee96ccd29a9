//! Config loading: JSON files with strict unknown-key rejection, overridden
//! by command-line flags, echoed back for reproducibility.

use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::CliError;

/// Floating mode a command runs in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FloatMode {
    F32,
    F64,
}

impl std::fmt::Display for FloatMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FloatMode::F32 => f.write_str("f32"),
            FloatMode::F64 => f.write_str("f64"),
        }
    }
}

/// Flags shared by every subcommand. Flag values win over config-file keys.
#[derive(Debug, Args)]
pub struct CommonArgs {
    /// JSON config file (flat key/value document; unknown keys are rejected)
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Root RNG seed, overriding the config file
    #[arg(long)]
    pub seed: Option<u64>,

    /// Run in 32-bit floating mode
    #[arg(long = "f32", conflicts_with = "use_f64")]
    pub use_f32: bool,

    /// Run in 64-bit floating mode
    #[arg(long = "f64")]
    pub use_f64: bool,
}

impl CommonArgs {
    /// Float mode requested by flags, if any.
    pub fn float_override(&self) -> Option<FloatMode> {
        if self.use_f32 {
            Some(FloatMode::F32)
        } else if self.use_f64 {
            Some(FloatMode::F64)
        } else {
            None
        }
    }
}

/// Loads the command's config: defaults, then file keys, then flag
/// overrides are applied by the caller. A malformed file is a usage error
/// carrying serde's message (which names the offending key and the line and
/// column); an unreadable file is an I/O error.
pub fn load<C: DeserializeOwned + Default>(path: Option<&Path>) -> Result<C, CliError> {
    let Some(path) = path else {
        return Ok(C::default());
    };
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("{}: {}", path.display(), e)))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("{}: {}", path.display(), e)))
}

/// Echoes the effective config (defaults merged with file and flags) to
/// stderr so every run records its inputs without polluting CSV on stdout.
pub fn echo_effective<C: Serialize>(command: &str, cfg: &C) {
    let body = serde_json::to_string(cfg).unwrap_or_else(|_| "<unserializable>".into());
    eprintln!("# {} config {}", command, body);
}
