//! Wall-clock scaling harness.
//!
//! Times each kernel over a geometric token grid, takes the median of
//! repeated runs after warmup, and fits a log-log scaling exponent by least
//! squares. Runs are single-threaded by default — the fitted exponent should
//! reflect algorithmic cost, not thread scheduling — with parallel execution
//! available as an explicit opt-in.

use std::fmt;
use std::time::Instant;

use crate::attention::{
    gated_attention_decomposed, gated_attention_naive, linear_attention_unnormalized,
    saga_block_forward, softmax_attention, AttnConfig, Phi, SagaParams,
};
use crate::error::{KernelError, Result};
use crate::linalg::{random_matrix, sigmoid_map, InitScheme, Matrix, RngSeed};
use crate::parallel::with_single_thread;
use crate::scalar::Scalar;

/// Kernels the harness can time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchKernel {
    /// Softmax attention at full model width.
    Softmax,
    /// Unnormalized linear attention at full model width.
    LinearUnnorm,
    /// The full gated block (decomposed path inside).
    SagaDecomposed,
    /// The memory-naive gated aggregation at per-head width. Exists for
    /// correctness and memory comparison, not speed.
    SagaNaiveOracle,
}

impl BenchKernel {
    pub const ALL: [BenchKernel; 4] = [
        BenchKernel::Softmax,
        BenchKernel::LinearUnnorm,
        BenchKernel::SagaDecomposed,
        BenchKernel::SagaNaiveOracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BenchKernel::Softmax => "softmax",
            BenchKernel::LinearUnnorm => "linear_unnorm",
            BenchKernel::SagaDecomposed => "saga_decomposed",
            BenchKernel::SagaNaiveOracle => "saga_naive_oracle",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == name)
            .ok_or_else(|| {
                KernelError::contract(
                    "bench_kernel",
                    format!(
                        "unknown kernel '{}', expected one of softmax, linear_unnorm, \
                         saga_decomposed, saga_naive_oracle",
                        name
                    ),
                )
            })
    }
}

impl fmt::Display for BenchKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One timing request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BenchRequest {
    pub kernel: BenchKernel,
    pub n_grid: Vec<usize>,
    pub model_dim: usize,
    pub heads: usize,
    pub dwc_kernel: usize,
    pub repeats: usize,
    pub warmup: usize,
    pub seed: RngSeed,
    /// Opt into the process rayon pool; off by default so exponents measure
    /// the algorithm.
    pub parallel: bool,
}

/// Timing of one grid point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BenchPoint {
    pub n: usize,
    pub median_ns: u64,
    /// False when the median is under a microsecond: too close to timer
    /// resolution to trust, and excluded from the exponent fit.
    pub reliable: bool,
    /// Peak transient elements of the kernel at this size (measured for the
    /// gated kernels, by construction for the streaming ones).
    pub workspace_elements: u64,
}

/// A completed run: per-point medians plus the fitted log-log exponent over
/// the reliable points.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRun {
    pub request: BenchRequest,
    pub points: Vec<BenchPoint>,
    pub fitted_exponent: f64,
}

/// Least-squares slope of `ln t` against `ln n`.
pub fn fit_exponent(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let mean_x = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in logs {
        num += (x - mean_x) * (y - mean_y);
        den += (x - mean_x) * (x - mean_x);
    }
    num / den
}

/// The naive oracle is never timed above this token count when its per-head
/// state exceeds this element count; it exists for correctness, not speed.
const NAIVE_MAX_TOKENS: usize = 4096;
const NAIVE_MAX_STATE: usize = 4096;

/// Timer floor below which a median is flagged unreliable.
const RELIABLE_FLOOR_NS: u64 = 1_000;

enum BenchInputs<T: Scalar> {
    Qkv {
        q: Matrix<T>,
        k: Matrix<T>,
        v: Matrix<T>,
    },
    Gated {
        q: Matrix<T>,
        k: Matrix<T>,
        v: Matrix<T>,
        a: Matrix<T>,
        b: Matrix<T>,
    },
    Block {
        x: Matrix<T>,
        params: SagaParams<T>,
        cfg: AttnConfig,
    },
}

fn build_inputs<T: Scalar>(req: &BenchRequest, n: usize) -> Result<BenchInputs<T>> {
    let seed = req.seed.stream(req.kernel.name()).child(n as u64);
    let d = req.model_dim;
    let head_dim = d / req.heads;
    let normal = InitScheme::Normal { scale: 1.0 };
    match req.kernel {
        BenchKernel::Softmax | BenchKernel::LinearUnnorm => Ok(BenchInputs::Qkv {
            q: random_matrix(n, d, seed.stream("q"), normal)?,
            k: random_matrix(n, d, seed.stream("k"), normal)?,
            v: random_matrix(n, d, seed.stream("v"), normal)?,
        }),
        BenchKernel::SagaNaiveOracle => Ok(BenchInputs::Gated {
            q: random_matrix(n, head_dim, seed.stream("q"), normal)?,
            k: random_matrix(n, head_dim, seed.stream("k"), normal)?,
            v: random_matrix(n, head_dim, seed.stream("v"), normal)?,
            a: sigmoid_map(&random_matrix(n, head_dim, seed.stream("a"), normal)?),
            b: sigmoid_map(&random_matrix(n, head_dim, seed.stream("b"), normal)?),
        }),
        BenchKernel::SagaDecomposed => {
            let cfg = AttnConfig::with_auto_grid(n, d, req.heads, req.dwc_kernel, Phi::Relu)?;
            Ok(BenchInputs::Block {
                x: random_matrix(n, d, seed.stream("x"), normal)?,
                params: SagaParams::random(&cfg, req.seed.stream("params"))?,
                cfg,
            })
        }
    }
}

/// Times the requested kernel across the token grid.
///
/// The grid must have at least 4 points spanning at least a 16x range;
/// `repeats >= 5` and `warmup >= 2`. Inputs are regenerated deterministically
/// from the seed for every point, so identical requests time identical data.
pub fn run_bench<T: Scalar>(req: &BenchRequest) -> Result<BenchRun> {
    validate_request(req)?;
    let scale = T::from_f64((req.model_dim as f64).sqrt());

    let mut points = Vec::with_capacity(req.n_grid.len());
    for &n in &req.n_grid {
        let inputs = build_inputs::<T>(req, n)?;
        let workspace = workspace_elements(req, n, &inputs)?;
        let mut samples = Vec::with_capacity(req.repeats);
        let kernel = req.kernel;
        with_single_thread(!req.parallel, || -> Result<()> {
            for _ in 0..req.warmup {
                dispatch(kernel, &inputs, scale)?;
            }
            for _ in 0..req.repeats {
                let start = Instant::now();
                dispatch(kernel, &inputs, scale)?;
                samples.push(start.elapsed().as_nanos() as u64);
            }
            Ok(())
        })?;
        samples.sort_unstable();
        let median_ns = median(&samples);
        points.push(BenchPoint {
            n,
            median_ns,
            reliable: median_ns >= RELIABLE_FLOOR_NS,
            workspace_elements: workspace,
        });
    }

    let fit_points: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.reliable)
        .map(|p| (p.n as f64, p.median_ns as f64))
        .collect();
    if fit_points.len() < 2 {
        return Err(KernelError::contract(
            "run_bench",
            "fewer than 2 reliable timing points; enlarge the problem sizes",
        ));
    }
    Ok(BenchRun {
        request: req.clone(),
        points,
        fitted_exponent: fit_exponent(&fit_points),
    })
}

fn dispatch<T: Scalar>(kernel: BenchKernel, inputs: &BenchInputs<T>, scale: T) -> Result<()> {
    match (kernel, inputs) {
        (BenchKernel::Softmax, BenchInputs::Qkv { q, k, v }) => {
            let out = softmax_attention(q, k, v, scale)?;
            std::hint::black_box(&out);
        }
        (BenchKernel::LinearUnnorm, BenchInputs::Qkv { q, k, v }) => {
            let (out, _) = linear_attention_unnormalized(q, k, v)?;
            std::hint::black_box(&out);
        }
        (BenchKernel::SagaNaiveOracle, BenchInputs::Gated { q, k, v, a, b }) => {
            let (out, _, _) = gated_attention_naive(q, k, v, a, b)?;
            std::hint::black_box(&out);
        }
        (BenchKernel::SagaDecomposed, BenchInputs::Block { x, params, cfg }) => {
            let (out, _) = saga_block_forward(x, params, cfg)?;
            std::hint::black_box(&out);
        }
        _ => unreachable!("inputs are built for the requested kernel"),
    }
    Ok(())
}

fn workspace_elements<T: Scalar>(
    req: &BenchRequest,
    n: usize,
    inputs: &BenchInputs<T>,
) -> Result<u64> {
    let head_dim = req.model_dim / req.heads;
    match req.kernel {
        // One length-N score row per worker.
        BenchKernel::Softmax => Ok(n as u64),
        // K^T V and Q S allocate only their returned outputs.
        BenchKernel::LinearUnnorm => Ok(0),
        BenchKernel::SagaNaiveOracle => match inputs {
            BenchInputs::Gated { q, k, v, a, b } => {
                let (_, _, ws) = gated_attention_naive(q, k, v, a, b)?;
                Ok(ws.peak_elements)
            }
            _ => unreachable!("naive oracle uses gated inputs"),
        },
        // Per-head footprint of the decomposed kernel at this token count.
        BenchKernel::SagaDecomposed => {
            let seed = req.seed.stream("workspace_probe").child(n as u64);
            let normal = InitScheme::Normal { scale: 1.0 };
            let q: Matrix<T> = random_matrix(n, head_dim, seed.stream("q"), normal)?;
            let k: Matrix<T> = random_matrix(n, head_dim, seed.stream("k"), normal)?;
            let v: Matrix<T> = random_matrix(n, head_dim, seed.stream("v"), normal)?;
            let a = sigmoid_map(&random_matrix::<T>(n, head_dim, seed.stream("a"), normal)?);
            let b = sigmoid_map(&random_matrix::<T>(n, head_dim, seed.stream("b"), normal)?);
            let (_, _, ws) = gated_attention_decomposed(&q, &k, &v, &a, &b)?;
            Ok(ws.peak_elements)
        }
    }
}

fn validate_request(req: &BenchRequest) -> Result<()> {
    if req.model_dim == 0 || req.heads == 0 || req.model_dim % req.heads != 0 {
        return Err(KernelError::contract(
            "run_bench",
            format!(
                "model_dim {} must split evenly into {} heads",
                req.model_dim, req.heads
            ),
        ));
    }
    if req.n_grid.len() < 4 {
        return Err(KernelError::contract(
            "run_bench",
            format!("grid has {} points, need at least 4", req.n_grid.len()),
        ));
    }
    let min = *req.n_grid.iter().min().expect("nonempty grid");
    let max = *req.n_grid.iter().max().expect("nonempty grid");
    if min == 0 || max < 16 * min {
        return Err(KernelError::contract(
            "run_bench",
            format!("grid {}..{} must span at least a 16x range", min, max),
        ));
    }
    if req.repeats < 5 || req.warmup < 2 {
        return Err(KernelError::contract(
            "run_bench",
            format!(
                "repeats {} must be >= 5 and warmup {} >= 2",
                req.repeats, req.warmup
            ),
        ));
    }
    if req.kernel == BenchKernel::SagaNaiveOracle {
        let head_dim = req.model_dim / req.heads;
        if max > NAIVE_MAX_TOKENS && head_dim * head_dim > NAIVE_MAX_STATE {
            return Err(KernelError::contract(
                "run_bench",
                format!(
                    "naive oracle guard: N={} with per-head state {} elements is \
                     pathological; cap the grid at {} tokens or shrink the heads",
                    max,
                    head_dim * head_dim,
                    NAIVE_MAX_TOKENS
                ),
            ));
        }
    }
    Ok(())
}

fn median(sorted: &[u64]) -> u64 {
    let mid = sorted.len() / 2;
    if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        (sorted[mid - 1] + sorted[mid]) / 2
    }
}

/// Where one run first becomes faster than another on a shared grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CrossoverReport {
    /// Smallest grid N where the first run's median is strictly below the
    /// second's, if any.
    pub crossover_n: Option<usize>,
}

impl fmt::Display for CrossoverReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.crossover_n {
            Some(n) => write!(f, "crossover at N={}", n),
            None => f.write_str("none in range"),
        }
    }
}

pub fn crossover_report(a: &BenchRun, b: &BenchRun) -> Result<CrossoverReport> {
    let grid_a: Vec<usize> = a.points.iter().map(|p| p.n).collect();
    let grid_b: Vec<usize> = b.points.iter().map(|p| p.n).collect();
    if grid_a != grid_b {
        return Err(KernelError::contract(
            "crossover_report",
            format!("grids differ: {:?} vs {:?}", grid_a, grid_b),
        ));
    }
    let crossover_n = a
        .points
        .iter()
        .zip(&b.points)
        .find(|(pa, pb)| pa.median_ns < pb.median_ns)
        .map(|(pa, _)| pa.n);
    Ok(CrossoverReport { crossover_n })
}
