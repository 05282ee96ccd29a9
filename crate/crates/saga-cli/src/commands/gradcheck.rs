//! `saga gradcheck` — central finite differences against the analytic
//! backward pass of the full block.

use std::process::ExitCode;

use clap::Args;
use serde::{Deserialize, Serialize};

use saga_kernels::attention::{AttnConfig, Phi, SagaParams};
use saga_kernels::grad::{backward_saga_block, block_loss, finite_diff_check};
use saga_kernels::linalg::{random_matrix, InitScheme, Matrix, RngSeed};
use saga_kernels::Scalar;

use crate::config::{self, CommonArgs, FloatMode};
use crate::CliError;

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GradcheckConfig {
    pub seed: u64,
    pub trials: u64,
    pub step: f64,
    pub threshold: f64,
    pub n_tokens: usize,
    pub model_dim: usize,
    pub heads: usize,
    pub grid_h: usize,
    pub grid_w: usize,
    pub dwc_kernel: usize,
    pub float: FloatMode,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        GradcheckConfig {
            seed: 42,
            trials: 20,
            step: 1e-5,
            threshold: 1e-4,
            n_tokens: 16,
            model_dim: 8,
            heads: 2,
            grid_h: 4,
            grid_w: 4,
            dwc_kernel: 3,
            float: FloatMode::F64,
        }
    }
}

pub fn run(args: GradcheckArgs) -> Result<ExitCode, CliError> {
    let mut cfg: GradcheckConfig = config::load(args.common.config.as_deref())?;
    if let Some(s) = args.common.seed {
        cfg.seed = s;
    }
    if let Some(f) = args.common.float_override() {
        cfg.float = f;
    }
    config::echo_effective("gradcheck", &cfg);
    match cfg.float {
        FloatMode::F32 => run_gradcheck::<f32>(&cfg),
        FloatMode::F64 => run_gradcheck::<f64>(&cfg),
    }
}

fn run_gradcheck<T: Scalar>(cfg: &GradcheckConfig) -> Result<ExitCode, CliError> {
    let attn = AttnConfig::new(
        cfg.n_tokens,
        cfg.model_dim,
        cfg.heads,
        cfg.grid_h,
        cfg.grid_w,
        cfg.dwc_kernel,
        Phi::Relu,
    )?;
    let step = T::from_f64(cfg.step);
    let mut worst: f64 = 0.0;

    for trial in 0..cfg.trials {
        let seed = RngSeed(cfg.seed).stream("gradcheck").child(trial);
        let params = SagaParams::<T>::random(&attn, seed.stream("params"))?;
        let normal = InitScheme::Normal { scale: 1.0 };
        let x = random_matrix::<T>(attn.n_tokens, attn.model_dim, seed.stream("x"), normal)?;
        let d_out = random_matrix::<T>(attn.n_tokens, attn.model_dim, seed.stream("dout"), normal)?;
        let grads = backward_saga_block(&x, &params, &attn, &d_out)?;

        let mut trial_worst = finite_diff_check(
            &mut |m: &Matrix<T>| block_loss(m, &params, &attn, &d_out),
            &x,
            &grads.d_x,
            step,
        )?
        .to_f64();

        type Install<T> = Box<dyn Fn(&mut SagaParams<T>, Matrix<T>)>;
        let cases: Vec<(&Matrix<T>, &Matrix<T>, Install<T>)> = vec![
            (&params.w_q, &grads.d_w_q, Box::new(|p, m| p.w_q = m)),
            (&params.w_k, &grads.d_w_k, Box::new(|p, m| p.w_k = m)),
            (&params.w_v, &grads.d_w_v, Box::new(|p, m| p.w_v = m)),
            (&params.w_a, &grads.d_w_a, Box::new(|p, m| p.w_a = m)),
            (&params.w_b, &grads.d_w_b, Box::new(|p, m| p.w_b = m)),
            (&params.w_g, &grads.d_w_g, Box::new(|p, m| p.w_g = m)),
            (&params.w_out, &grads.d_w_out, Box::new(|p, m| p.w_out = m)),
            (
                &params.dwc_bias,
                &grads.d_dwc_bias,
                Box::new(|p, m| p.dwc_bias = m),
            ),
        ];
        for (point, analytic, install) in cases {
            let err = finite_diff_check(
                &mut |m: &Matrix<T>| {
                    let mut p2 = params.clone();
                    install(&mut p2, m.clone());
                    block_loss(&x, &p2, &attn, &d_out)
                },
                point,
                analytic,
                step,
            )?;
            trial_worst = trial_worst.max(err.to_f64());
        }
        for c in 0..attn.model_dim {
            let err = finite_diff_check(
                &mut |m: &Matrix<T>| {
                    let mut p2 = params.clone();
                    p2.dwc_weights[c] = m.clone();
                    block_loss(&x, &p2, &attn, &d_out)
                },
                &params.dwc_weights[c],
                &grads.d_dwc_weights[c],
                step,
            )?;
            trial_worst = trial_worst.max(err.to_f64());
        }
        println!("gradcheck trial {}: worst relative error {:.3e}", trial, trial_worst);
        worst = worst.max(trial_worst);
    }

    let pass = worst <= cfg.threshold;
    println!(
        "gradcheck: worst relative error {:.3e} over {} trials (threshold {:.1e}) {}",
        worst,
        cfg.trials,
        cfg.threshold,
        if pass { "PASS" } else { "FAIL" }
    );
    Ok(if pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}
