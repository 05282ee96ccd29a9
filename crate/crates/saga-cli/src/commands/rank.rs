//! `saga rank` — rank sweep of the aggregated key-value state over token
//! diversity, with optional SVG chart.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Args;
use serde::{Deserialize, Serialize};

use saga_kernels::analysis::{rank_experiment, RankTrace};
use saga_kernels::attention::{AttnConfig, Phi};
use saga_kernels::linalg::RngSeed;
use saga_kernels::Scalar;

use crate::config::{self, CommonArgs, FloatMode};
use crate::output::{write_text, Csv};
use crate::svg::{LineChart, Series};
use crate::CliError;

#[derive(Debug, Args)]
pub struct RankArgs {
    #[command(flatten)]
    pub common: CommonArgs,

    /// CSV output path (stdout when omitted)
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Also write a line chart next to the CSV (requires --out)
    #[arg(long)]
    pub svg: bool,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RankConfig {
    pub seed: u64,
    pub n_distinct: Vec<usize>,
    pub n_tokens: usize,
    pub model_dim: usize,
    pub heads: usize,
    pub rel_tol: f64,
    pub float: FloatMode,
}

impl Default for RankConfig {
    fn default() -> Self {
        RankConfig {
            seed: 42,
            n_distinct: vec![1, 2, 4, 8, 16, 32],
            n_tokens: 32,
            model_dim: 16,
            heads: 1,
            rel_tol: 1e-8,
            float: FloatMode::F64,
        }
    }
}

pub fn run(args: RankArgs) -> Result<ExitCode, CliError> {
    let mut cfg: RankConfig = config::load(args.common.config.as_deref())?;
    if let Some(s) = args.common.seed {
        cfg.seed = s;
    }
    if let Some(f) = args.common.float_override() {
        cfg.float = f;
    }
    config::echo_effective("rank", &cfg);

    if cfg.n_distinct.is_empty() {
        return Err(CliError::Usage("n_distinct sweep list is empty".into()));
    }
    if args.svg && args.out.is_none() {
        return Err(CliError::Usage("--svg requires --out".into()));
    }

    let traces = match cfg.float {
        FloatMode::F32 => sweep::<f32>(&cfg)?,
        FloatMode::F64 => sweep::<f64>(&cfg)?,
    };

    let mut csv = Csv::new(&[
        "n_distinct",
        "head",
        "rank_ungated",
        "rank_gated",
        "full_rank_bound",
    ]);
    for (n_distinct, trace) in &traces {
        for entry in &trace.entries {
            csv.push_row([
                n_distinct.to_string(),
                entry.head.to_string(),
                entry.rank_ungated.to_string(),
                entry.rank_gated.to_string(),
                entry.full_rank_bound.to_string(),
            ]);
        }
    }
    csv.emit(args.out.as_deref())?;

    if args.svg {
        let out = args.out.as_ref().expect("checked above");
        let chart = chart(&traces);
        write_text(&out.with_extension("svg"), &chart.render())?;
    }
    Ok(ExitCode::SUCCESS)
}

fn sweep<T: Scalar>(cfg: &RankConfig) -> Result<Vec<(usize, RankTrace)>, CliError> {
    let attn = AttnConfig::with_auto_grid(cfg.n_tokens, cfg.model_dim, cfg.heads, 3, Phi::Relu)?;
    let rel_tol = T::from_f64(cfg.rel_tol);
    let mut traces = Vec::with_capacity(cfg.n_distinct.len());
    for &n_distinct in &cfg.n_distinct {
        let seed = RngSeed(cfg.seed).stream("rank").child(n_distinct as u64);
        traces.push((n_distinct, rank_experiment::<T>(&attn, n_distinct, rel_tol, seed)?));
    }
    Ok(traces)
}

fn chart(traces: &[(usize, RankTrace)]) -> LineChart {
    let heads = traces
        .first()
        .map(|(_, t)| t.entries.len())
        .unwrap_or(0);
    let mut series = Vec::new();
    for h in 0..heads {
        let suffix = if heads > 1 {
            format!(" (head {h})")
        } else {
            String::new()
        };
        series.push(Series {
            name: format!("ungated{suffix}"),
            points: traces
                .iter()
                .map(|(nd, t)| (*nd as f64, t.entries[h].rank_ungated as f64))
                .collect(),
        });
        series.push(Series {
            name: format!("gated{suffix}"),
            points: traces
                .iter()
                .map(|(nd, t)| (*nd as f64, t.entries[h].rank_gated as f64))
                .collect(),
        });
    }
    series.push(Series {
        name: "full rank bound".into(),
        points: traces
            .iter()
            .map(|(nd, t)| (*nd as f64, t.entries[0].full_rank_bound as f64))
            .collect(),
    });
    LineChart {
        title: "state rank vs token diversity".into(),
        x_label: "distinct tokens".into(),
        y_label: "numerical rank".into(),
        log_x: false,
        log_y: false,
        series,
    }
}
