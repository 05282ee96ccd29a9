//! `saga check` — the kernel equivalence and invariant suite.
//!
//! Each check reruns one of the library's falsifiable identities over seeded
//! random draws, prints its worst error against the mode's tolerance, and
//! the command exits 0 only if every check passes. The first failing case's
//! seed and shape are printed so a failure is reproducible.

use std::process::ExitCode;

use clap::Args;
use serde::{Deserialize, Serialize};

use saga_kernels::attention::{
    causal_recurrence, gated_attention_decomposed, gated_attention_naive,
    linear_attention_normalized, linear_attention_unnormalized, softmax_attention, Phi,
};
use saga_kernels::linalg::{
    hadamard, outer, random_matrix, sigmoid_map, InitScheme, Matrix, RngSeed,
};
use saga_kernels::Scalar;

use crate::config::{self, CommonArgs, FloatMode};
use crate::CliError;

#[derive(Debug, Args)]
pub struct CheckArgs {
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckConfig {
    pub seed: u64,
    /// Seeded draws per check and shape.
    pub cases: u64,
    /// Test hook: corrupts one gate draw on the decomposed side of the
    /// oracle-equivalence check, to prove the detector trips.
    pub inject_fault: bool,
    pub float: FloatMode,
}

impl Default for CheckConfig {
    fn default() -> Self {
        CheckConfig {
            seed: 42,
            cases: 40,
            inject_fault: false,
            float: FloatMode::F64,
        }
    }
}

struct Tols {
    hadamard: f64,
    oracle: f64,
    identity_gate: f64,
    causal: f64,
    reorder: f64,
    hull: f64,
    permutation: f64,
}

fn tols<T: Scalar>() -> Tols {
    if T::NAME == "f32" {
        Tols {
            hadamard: 1e-4,
            oracle: 1e-3,
            identity_gate: 1e-4,
            causal: 1e-3,
            reorder: 1e-3,
            hull: 1e-4,
            permutation: 1e-3,
        }
    } else {
        Tols {
            hadamard: 1e-12,
            oracle: 1e-10,
            identity_gate: 1e-12,
            causal: 1e-12,
            reorder: 1e-9,
            hull: 1e-12,
            permutation: 1e-12,
        }
    }
}

struct Outcome {
    name: &'static str,
    worst: f64,
    tol: f64,
    first_failure: Option<String>,
}

impl Outcome {
    fn passed(&self) -> bool {
        self.worst <= self.tol
    }
}

pub fn run(args: CheckArgs) -> Result<ExitCode, CliError> {
    let mut cfg: CheckConfig = config::load(args.common.config.as_deref())?;
    if let Some(s) = args.common.seed {
        cfg.seed = s;
    }
    if let Some(f) = args.common.float_override() {
        cfg.float = f;
    }
    config::echo_effective("check", &cfg);
    match cfg.float {
        FloatMode::F32 => run_checks::<f32>(&cfg),
        FloatMode::F64 => run_checks::<f64>(&cfg),
    }
}

fn run_checks<T: Scalar>(cfg: &CheckConfig) -> Result<ExitCode, CliError> {
    let tols = tols::<T>();
    let root = RngSeed(cfg.seed);
    let outcomes = vec![
        hadamard_identity::<T>(root, cfg.cases, tols.hadamard)?,
        oracle_equivalence::<T>(root, cfg.cases, tols.oracle, cfg.inject_fault)?,
        identity_gate_reduction::<T>(root, cfg.cases, tols.identity_gate)?,
        causal_consistency::<T>(root, cfg.cases, tols.causal)?,
        reordering_equivalence::<T>(root, cfg.cases, tols.reorder)?,
        softmax_convexity::<T>(root, cfg.cases, tols.hull)?,
        permutation_equivariance::<T>(root, cfg.cases, tols.permutation)?,
        workspace_dominance::<T>(root)?,
    ];

    let mut all_pass = true;
    for outcome in &outcomes {
        let verdict = if outcome.passed() { "PASS" } else { "FAIL" };
        println!(
            "check {}: max error {:.3e} (tol {:.1e}) {}",
            outcome.name, outcome.worst, outcome.tol, verdict
        );
        if !outcome.passed() {
            all_pass = false;
            if let Some(case) = &outcome.first_failure {
                println!("  first failing case: {}", case);
            }
        }
    }
    let passed = outcomes.iter().filter(|o| o.passed()).count();
    println!("check suite: {}/{} passed", passed, outcomes.len());
    Ok(if all_pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn rand_m<T: Scalar>(rows: usize, cols: usize, seed: RngSeed) -> Matrix<T> {
    random_matrix(rows, cols, seed, InitScheme::Normal { scale: 1.0 })
        .expect("valid shapes by construction")
}

fn rand_gate<T: Scalar>(rows: usize, cols: usize, seed: RngSeed) -> Matrix<T> {
    sigmoid_map(&rand_m(rows, cols, seed))
}

/// Tracks the worst error together with the first case that broke the
/// tolerance.
struct Tracker {
    worst: f64,
    tol: f64,
    first_failure: Option<String>,
}

impl Tracker {
    fn new(tol: f64) -> Self {
        Tracker {
            worst: 0.0,
            tol,
            first_failure: None,
        }
    }

    fn record(&mut self, err: f64, case: impl FnOnce() -> String) {
        if err > self.tol && self.first_failure.is_none() {
            self.first_failure = Some(case());
        }
        self.worst = self.worst.max(err);
    }

    fn finish(self, name: &'static str) -> Outcome {
        Outcome {
            name,
            worst: self.worst,
            tol: self.tol,
            first_failure: self.first_failure,
        }
    }
}

fn hadamard_identity<T: Scalar>(root: RngSeed, cases: u64, tol: f64) -> Result<Outcome, CliError> {
    let mut tracker = Tracker::new(tol);
    for d in [1usize, 2, 8, 64] {
        for case in 0..cases {
            let s = root.stream("hadamard").child(d as u64).child(case);
            let a = rand_m::<T>(d, 1, s.stream("a"));
            let c = rand_m::<T>(d, 1, s.stream("c"));
            let b = rand_m::<T>(1, d, s.stream("b"));
            let e = rand_m::<T>(1, d, s.stream("e"));
            let lhs = hadamard(&outer(&a, &b)?, &outer(&c, &e)?)?;
            let rhs = outer(&hadamard(&a, &c)?, &hadamard(&b, &e)?)?;
            let err = lhs.max_abs_diff(&rhs).to_f64();
            tracker.record(err, || format!("seed={} d={}", s.0, d));
        }
    }
    Ok(tracker.finish("hadamard_identity"))
}

fn oracle_equivalence<T: Scalar>(
    root: RngSeed,
    cases: u64,
    tol: f64,
    inject_fault: bool,
) -> Result<Outcome, CliError> {
    let mut tracker = Tracker::new(tol);
    for (n, dim) in [(1usize, 2usize), (4, 4), (16, 8), (64, 8)] {
        for case in 0..cases {
            let s = root.stream("oracle").child(n as u64).child(case);
            let q = rand_m::<T>(n, dim, s.stream("q"));
            let k = rand_m::<T>(n, dim, s.stream("k"));
            let v = rand_m::<T>(n, dim, s.stream("v"));
            let a = rand_gate::<T>(n, dim, s.stream("a"));
            let b = rand_gate::<T>(n, dim, s.stream("b"));
            // The fault hook feeds the decomposed side a rescaled key gate
            // so the two paths genuinely disagree.
            let a_fast = if inject_fault && case == 0 {
                a.scale(T::from_f64(0.5))
            } else {
                a.clone()
            };
            let (fast, _, _) = gated_attention_decomposed(&q, &k, &v, &a_fast, &b)?;
            let (slow, _, _) = gated_attention_naive(&q, &k, &v, &a, &b)?;
            let err = fast.max_abs_diff(&slow).to_f64();
            tracker.record(err, || format!("seed={} shape N={} dk=dv={}", s.0, n, dim));
        }
    }
    Ok(tracker.finish("oracle_equivalence"))
}

fn identity_gate_reduction<T: Scalar>(
    root: RngSeed,
    cases: u64,
    tol: f64,
) -> Result<Outcome, CliError> {
    let mut tracker = Tracker::new(tol);
    let (n, dim) = (12usize, 6usize);
    for case in 0..cases {
        let s = root.stream("identity_gate").child(case);
        let q = rand_m::<T>(n, dim, s.stream("q"));
        let k = rand_m::<T>(n, dim, s.stream("k"));
        let v = rand_m::<T>(n, dim, s.stream("v"));
        let ones = Matrix::<T>::ones(n, dim);
        let (gated, _, _) = gated_attention_decomposed(&q, &k, &v, &ones, &ones)?;
        let (plain, _) = linear_attention_unnormalized(&q, &k, &v)?;
        let err = gated.max_abs_diff(&plain).to_f64();
        tracker.record(err, || format!("seed={} shape N={} dk=dv={}", s.0, n, dim));
    }
    Ok(tracker.finish("identity_gate_reduction"))
}

fn causal_consistency<T: Scalar>(root: RngSeed, cases: u64, tol: f64) -> Result<Outcome, CliError> {
    let mut tracker = Tracker::new(tol);
    let (n, dim) = (10usize, 5usize);
    for case in 0..cases {
        let s = root.stream("causal").child(case);
        let q = rand_m::<T>(n, dim, s.stream("q"));
        let k = rand_m::<T>(n, dim, s.stream("k"));
        let v = rand_m::<T>(n, dim, s.stream("v"));
        let causal = causal_recurrence(&q, &k, &v)?;
        let (full, _) = linear_attention_unnormalized(&q, &k, &v)?;
        let mut err: f64 = 0.0;
        for j in 0..dim {
            err = err.max((causal.get(n - 1, j) - full.get(n - 1, j)).abs().to_f64());
        }
        tracker.record(err, || format!("seed={} shape N={} dk=dv={}", s.0, n, dim));
    }
    Ok(tracker.finish("causal_consistency"))
}

fn reordering_equivalence<T: Scalar>(
    root: RngSeed,
    cases: u64,
    tol: f64,
) -> Result<Outcome, CliError> {
    let mut tracker = Tracker::new(tol);
    let (n, dk, dv) = (9usize, 4usize, 5usize);
    let guard = 1e-6;
    for case in 0..cases {
        let s = root.stream("reorder").child(case);
        let q = rand_m::<T>(n, dk, s.stream("q"));
        let k = rand_m::<T>(n, dk, s.stream("k"));
        let v = rand_m::<T>(n, dv, s.stream("v"));
        let fast = linear_attention_normalized(&q, &k, &v, Phi::Relu)?;
        // Token-by-token evaluation in the original order of operations.
        let pq = Phi::Relu.apply(&q);
        let pk = Phi::Relu.apply(&k);
        let mut err: f64 = 0.0;
        for t in 0..n {
            let mut numer = vec![0.0f64; dv];
            let mut denom = 0.0f64;
            for i in 0..n {
                let mut affinity = 0.0f64;
                for c in 0..dk {
                    affinity += pq.get(t, c).to_f64() * pk.get(i, c).to_f64();
                }
                denom += affinity;
                for (acc, j) in numer.iter_mut().zip(0..dv) {
                    *acc += affinity * v.get(i, j).to_f64();
                }
            }
            for (j, &num) in numer.iter().enumerate() {
                let expect = num / (denom + guard);
                let got = fast.get(t, j).to_f64();
                let rel = (got - expect).abs() / got.abs().max(expect.abs()).max(1e-9);
                err = err.max(rel);
            }
        }
        tracker.record(err, || format!("seed={} shape N={} dk={} dv={}", s.0, n, dk, dv));
    }
    Ok(tracker.finish("reordering_equivalence"))
}

fn softmax_convexity<T: Scalar>(root: RngSeed, cases: u64, tol: f64) -> Result<Outcome, CliError> {
    let mut tracker = Tracker::new(tol);
    let (n, dim) = (11usize, 4usize);
    for case in 0..cases {
        let s = root.stream("convexity").child(case);
        let q = rand_m::<T>(n, dim, s.stream("q"));
        let k = rand_m::<T>(n, dim, s.stream("k"));
        let v = rand_m::<T>(n, dim, s.stream("v"));
        let out = softmax_attention(&q, &k, &v, T::from_f64((dim as f64).sqrt()))?;
        let mut violation: f64 = 0.0;
        for j in 0..dim {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for i in 0..n {
                lo = lo.min(v.get(i, j).to_f64());
                hi = hi.max(v.get(i, j).to_f64());
            }
            for t in 0..n {
                let x = out.get(t, j).to_f64();
                violation = violation.max(lo - x).max(x - hi);
            }
        }
        tracker.record(violation.max(0.0), || {
            format!("seed={} shape N={} d={}", s.0, n, dim)
        });
    }
    Ok(tracker.finish("softmax_convexity"))
}

fn permutation_equivariance<T: Scalar>(
    root: RngSeed,
    cases: u64,
    tol: f64,
) -> Result<Outcome, CliError> {
    let mut tracker = Tracker::new(tol);
    let (n, dim) = (10usize, 4usize);
    for case in 0..cases {
        let s = root.stream("permutation").child(case);
        let q = rand_m::<T>(n, dim, s.stream("q"));
        let k = rand_m::<T>(n, dim, s.stream("k"));
        let v = rand_m::<T>(n, dim, s.stream("v"));
        let a = rand_gate::<T>(n, dim, s.stream("a"));
        let b = rand_gate::<T>(n, dim, s.stream("b"));
        let (out, state, _) = gated_attention_decomposed(&q, &k, &v, &a, &b)?;

        let rotate = (case as usize % (n - 1)) + 1;
        let perm: Vec<usize> = (0..n).map(|i| (i + rotate) % n).collect();
        let permuted = |m: &Matrix<T>| -> Matrix<T> {
            let mut data = Vec::with_capacity(n * m.cols());
            for &src in &perm {
                data.extend_from_slice(m.row(src));
            }
            Matrix::from_vec(n, m.cols(), data).expect("permutation preserves shape")
        };
        let (out_p, state_p, _) = gated_attention_decomposed(
            &permuted(&q),
            &permuted(&k),
            &permuted(&v),
            &permuted(&a),
            &permuted(&b),
        )?;
        let err = state.state.max_abs_diff(&state_p.state).to_f64().max(
            permuted(&out).max_abs_diff(&out_p).to_f64(),
        );
        tracker.record(err, || format!("seed={} shape N={} dk=dv={}", s.0, n, dim));
    }
    Ok(tracker.finish("permutation_equivariance"))
}

fn workspace_dominance<T: Scalar>(root: RngSeed) -> Result<Outcome, CliError> {
    // Value reported is the smallest margin (naive - decomposed) over the
    // shape grid, negated so "error above tolerance zero" means a violation.
    let mut worst_margin = i128::MAX;
    let mut first_failure = None;
    for (n, dim) in [(2usize, 2usize), (8, 4), (64, 16), (256, 32)] {
        let s = root.stream("workspace").child(n as u64);
        let q = rand_m::<T>(n, dim, s.stream("q"));
        let k = rand_m::<T>(n, dim, s.stream("k"));
        let v = rand_m::<T>(n, dim, s.stream("v"));
        let a = rand_gate::<T>(n, dim, s.stream("a"));
        let b = rand_gate::<T>(n, dim, s.stream("b"));
        let (_, _, fast) = gated_attention_decomposed(&q, &k, &v, &a, &b)?;
        let (_, _, slow) = gated_attention_naive(&q, &k, &v, &a, &b)?;
        let margin = slow.peak_elements as i128 - fast.peak_elements as i128;
        if margin <= 0 && first_failure.is_none() {
            first_failure = Some(format!("shape N={} dk=dv={}", n, dim));
        }
        worst_margin = worst_margin.min(margin);
    }
    Ok(Outcome {
        name: "workspace_dominance",
        worst: if worst_margin > 0 { 0.0 } else { 1.0 },
        tol: 0.5,
        first_failure,
    })
}
