//! `saga bench` — scaling benchmarks with log-log exponent fits, CSV
//! emission, and an optional log-log chart.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Args;
use serde::{Deserialize, Serialize};

use saga_kernels::bench::{crossover_report, run_bench, BenchKernel, BenchRequest, BenchRun};
use saga_kernels::linalg::RngSeed;

use crate::config::{self, CommonArgs, FloatMode};
use crate::output::{write_text, Csv};
use crate::svg::{LineChart, Series};
use crate::CliError;

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub common: CommonArgs,

    /// CSV output path (stdout when omitted)
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Also write a log-log chart next to the CSV (requires --out)
    #[arg(long)]
    pub svg: bool,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchConfig {
    pub seed: u64,
    pub kernels: Vec<String>,
    pub n_grid: Vec<usize>,
    pub model_dim: usize,
    pub heads: usize,
    pub dwc_kernel: usize,
    pub repeats: usize,
    pub warmup: usize,
    /// Opt into the rayon pool; timing is single-threaded by default so
    /// exponents measure the algorithm.
    pub parallel: bool,
    pub float: FloatMode,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            seed: 42,
            kernels: BenchKernel::ALL.iter().map(|k| k.name().to_string()).collect(),
            n_grid: vec![256, 1024, 4096, 16384],
            model_dim: 64,
            heads: 2,
            dwc_kernel: 3,
            repeats: 5,
            warmup: 2,
            parallel: false,
            float: FloatMode::F32,
        }
    }
}

pub fn run(args: BenchArgs) -> Result<ExitCode, CliError> {
    let mut cfg: BenchConfig = config::load(args.common.config.as_deref())?;
    if let Some(s) = args.common.seed {
        cfg.seed = s;
    }
    if let Some(f) = args.common.float_override() {
        cfg.float = f;
    }
    config::echo_effective("bench", &cfg);
    if args.svg && args.out.is_none() {
        return Err(CliError::Usage("--svg requires --out".into()));
    }
    if cfg.kernels.is_empty() {
        return Err(CliError::Usage("kernel list is empty".into()));
    }

    let mut runs: Vec<BenchRun> = Vec::new();
    for name in &cfg.kernels {
        let request = BenchRequest {
            kernel: BenchKernel::parse(name)?,
            n_grid: cfg.n_grid.clone(),
            model_dim: cfg.model_dim,
            heads: cfg.heads,
            dwc_kernel: cfg.dwc_kernel,
            repeats: cfg.repeats,
            warmup: cfg.warmup,
            seed: RngSeed(cfg.seed),
            parallel: cfg.parallel,
        };
        let run = match cfg.float {
            FloatMode::F32 => run_bench::<f32>(&request)?,
            FloatMode::F64 => run_bench::<f64>(&request)?,
        };
        for point in run.points.iter().filter(|p| !p.reliable) {
            eprintln!(
                "# warning: {} at N={} measured {}ns, below timer confidence; excluded from fit",
                name, point.n, point.median_ns
            );
        }
        eprintln!("# {} fitted exponent {:.4}", name, run.fitted_exponent);
        runs.push(run);
    }

    let mut csv = Csv::new(&[
        "kernel",
        "N",
        "median_ns",
        "fitted_exponent",
        "workspace_elements",
    ]);
    for run in &runs {
        for point in &run.points {
            csv.push_row([
                run.request.kernel.name().to_string(),
                point.n.to_string(),
                point.median_ns.to_string(),
                format!("{:.6}", run.fitted_exponent),
                point.workspace_elements.to_string(),
            ]);
        }
    }
    csv.emit(args.out.as_deref())?;

    // Crossover between the linear-cost block and the softmax baseline,
    // when both were timed.
    let find = |kernel: BenchKernel| runs.iter().find(|r| r.request.kernel == kernel);
    if let (Some(saga), Some(softmax)) = (find(BenchKernel::SagaDecomposed), find(BenchKernel::Softmax)) {
        let report = crossover_report(saga, softmax)?;
        eprintln!("# crossover saga_decomposed vs softmax: {}", report);
    }

    if args.svg {
        let out = args.out.as_ref().expect("checked above");
        let chart = LineChart {
            title: "forward wall time vs token count".into(),
            x_label: "tokens (log)".into(),
            y_label: "median ns (log)".into(),
            log_x: true,
            log_y: true,
            series: runs
                .iter()
                .map(|run| Series {
                    name: format!(
                        "{} (exp {:.2})",
                        run.request.kernel.name(),
                        run.fitted_exponent
                    ),
                    points: run
                        .points
                        .iter()
                        .map(|p| (p.n as f64, p.median_ns.max(1) as f64))
                        .collect(),
                })
                .collect(),
        };
        write_text(&out.with_extension("svg"), &chart.render())?;
    }
    Ok(ExitCode::SUCCESS)
}
