//! `saga flops` — analytic cost model next to instrumented multiply counts.
//!
//! Uses the single-head accounting convention; each (N, d) pair runs one
//! instrumented forward and the `match` column records exact integer
//! agreement of every term.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Args;
use serde::{Deserialize, Serialize};

use saga_kernels::analysis::{flop_model, measured_flops};
use saga_kernels::attention::{AttnConfig, Phi};
use saga_kernels::linalg::RngSeed;

use crate::config::{self, CommonArgs, FloatMode};
use crate::output::Csv;
use crate::CliError;

#[derive(Debug, Args)]
pub struct FlopsArgs {
    #[command(flatten)]
    pub common: CommonArgs,

    /// CSV output path (stdout when omitted)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlopsConfig {
    pub seed: u64,
    pub n_list: Vec<usize>,
    pub d_list: Vec<usize>,
    pub dwc_kernel: usize,
    pub float: FloatMode,
}

impl Default for FlopsConfig {
    fn default() -> Self {
        FlopsConfig {
            seed: 42,
            n_list: vec![196, 1024],
            d_list: vec![64, 128],
            dwc_kernel: 3,
            float: FloatMode::F64,
        }
    }
}

pub fn run(args: FlopsArgs) -> Result<ExitCode, CliError> {
    let mut cfg: FlopsConfig = config::load(args.common.config.as_deref())?;
    if let Some(s) = args.common.seed {
        cfg.seed = s;
    }
    if let Some(f) = args.common.float_override() {
        cfg.float = f;
    }
    config::echo_effective("flops", &cfg);
    if cfg.n_list.is_empty() || cfg.d_list.is_empty() {
        return Err(CliError::Usage("n_list and d_list must be nonempty".into()));
    }

    let mut csv = Csv::new(&[
        "N",
        "d",
        "k",
        "proj",
        "hadamard",
        "attn",
        "dwc",
        "gate_aug",
        "total_model",
        "total_measured",
        "match",
    ]);
    for &n in &cfg.n_list {
        for &d in &cfg.d_list {
            let attn = AttnConfig::with_auto_grid(n, d, 1, cfg.dwc_kernel, Phi::Relu)?;
            let model = flop_model(&attn);
            let measured = match cfg.float {
                FloatMode::F32 => measured_flops::<f32>(&attn, RngSeed(cfg.seed))?,
                FloatMode::F64 => measured_flops::<f64>(&attn, RngSeed(cfg.seed))?,
            };
            let matches = measured.proj == model.proj_flops
                && measured.hadamard == model.hadamard_flops
                && measured.attn == model.attn_flops
                && measured.dwc == model.dwc_flops
                && measured.gate_aug == model.gate_aug_flops
                && measured.composed_total == model.total;
            csv.push_row([
                n.to_string(),
                d.to_string(),
                cfg.dwc_kernel.to_string(),
                model.proj_flops.to_string(),
                model.hadamard_flops.to_string(),
                model.attn_flops.to_string(),
                model.dwc_flops.to_string(),
                model.gate_aug_flops.to_string(),
                model.total.to_string(),
                measured.composed_total.to_string(),
                matches.to_string(),
            ]);
        }
    }
    csv.emit(args.out.as_deref())?;
    Ok(ExitCode::SUCCESS)
}
