//! Monte-Carlo validation of the concentration bounds.
//!
//! Two experiments: the operator-norm deviation of centered outer-product
//! sums of subgaussian vectors against the martingale width, and the uniform
//! deviation of both loss estimators against their stated widths. Violations
//! are counted at geometric checkpoints; the "for all t" quantifier is
//! approximated by the union over checkpoints, and probes only lower-bound
//! the supremum over `(c, ν)`, so a clean report is necessary evidence, not
//! proof.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::environment::{sample_round, EnvError, Instance};
use crate::estimators::{ConfidenceParams, EstimatorError, KnownCovState, UnknownCovState};
use crate::linalg::SymMatrix;
use crate::oracle::{self, OracleError};
use crate::rng::episode_rng;

#[derive(Debug, Error)]
pub enum ConcentrationError {
    #[error("need at least {min} trials, got {got}")]
    TooFewTrials { min: usize, got: usize },
    #[error("need at least {min} probes, got {got}")]
    TooFewProbes { min: usize, got: usize },
    #[error("invalid parameter: {0}")]
    BadParam(String),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

/// Outcome of one Monte-Carlo experiment against a probabilistic bound.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ViolationReport {
    pub trials: usize,
    pub checkpoints: Vec<usize>,
    /// Trials violating the bound at each checkpoint.
    pub violations_at: Vec<usize>,
    /// Trials violating the bound at any checkpoint.
    pub any_violation_trials: usize,
    pub violation_frequency: f64,
    /// The bound's stated failure probability (δ or 3δ).
    pub nominal: f64,
    /// Loss experiment only: per trial, the max normalized deviation seen at
    /// each checkpoint (empty for the matrix experiment).
    pub per_trial_max_dev: Vec<Vec<f64>>,
}

/// Checkpoints `{16, 32, ..}` doubling up to and including `t_max`.
pub fn geometric_checkpoints(t_max: usize) -> Vec<usize> {
    let mut cps = Vec::new();
    let mut t = 16usize;
    while t < t_max {
        cps.push(t);
        t *= 2;
    }
    if t_max >= 1 {
        cps.push(t_max);
    }
    cps.dedup();
    cps
}

/// Draws i.i.d. `N(0, R²I_d)` vectors and tracks
/// `‖Σ_s z_s z_sᵀ − t·R²I‖_op` against the width
/// `√(8tβ_t² ln(3dt(t+1)/δ))` (with the zero-mean version of β, i.e. S=0).
pub fn mc_matrix_concentration(
    d: usize,
    r: f64,
    t_max: usize,
    delta: f64,
    trials: usize,
    seed: u64,
) -> Result<ViolationReport, ConcentrationError> {
    if trials < 100 {
        return Err(ConcentrationError::TooFewTrials {
            min: 100,
            got: trials,
        });
    }
    if t_max < 1 {
        return Err(ConcentrationError::BadParam("t_max must be >= 1".into()));
    }
    let conf = ConfidenceParams::new(d, r, 0.0, delta)?;
    let checkpoints = geometric_checkpoints(t_max);
    let bounds: Vec<f64> = checkpoints.iter().map(|&t| conf.azuma_width(t)).collect();

    let per_trial: Vec<Vec<bool>> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = episode_rng(seed, trial as u64);
            let mut acc = SymMatrix::zeros(d);
            let mut flags = vec![false; checkpoints.len()];
            let mut next = 0usize;
            for t in 1..=t_max {
                let z: Vec<f64> = (0..d)
                    .map(|_| r * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                acc.add_outer(&z, 1.0);
                if next < checkpoints.len() && t == checkpoints[next] {
                    let mut centered = acc.clone();
                    centered.add_scaled_identity(-(t as f64) * r * r);
                    let dev = centered.op_norm().expect("finite accumulator");
                    if dev > bounds[next] {
                        flags[next] = true;
                    }
                    next += 1;
                }
            }
            flags
        })
        .collect();

    Ok(summarize(
        trials,
        checkpoints,
        per_trial,
        Vec::new(),
        delta,
    ))
}

/// Simulates histories under uniformly random grid costs and probes both
/// estimators at random `(c, ν)` pairs against their widths. The report's
/// nominal failure probability is `3δ`.
#[allow(clippy::too_many_arguments)]
pub fn mc_loss_uniform(
    instance: &Instance,
    t_max: usize,
    delta: f64,
    trials: usize,
    probes: usize,
    grid_size: usize,
    seed: u64,
) -> Result<ViolationReport, ConcentrationError> {
    if probes < 10 {
        return Err(ConcentrationError::TooFewProbes {
            min: 10,
            got: probes,
        });
    }
    if trials < 1 {
        return Err(ConcentrationError::TooFewTrials { min: 1, got: trials });
    }
    if grid_size < 1 || t_max < 1 {
        return Err(ConcentrationError::BadParam(
            "grid_size and t_max must be >= 1".into(),
        ));
    }
    let conf = ConfidenceParams::new(
        instance.d,
        instance.r_subgauss,
        instance.s_bound,
        delta,
    )?;
    let checkpoints = geometric_checkpoints(t_max);

    let results: Vec<(Vec<bool>, Vec<f64>)> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = episode_rng(seed, trial as u64);
            // Separate probe stream keeps the history independent of the
            // probe count.
            let mut probe_rng = episode_rng(seed ^ 0x9e3779b97f4a7c15, trial as u64);
            let mut kc = KnownCovState::new(instance.d);
            let mut uc = UnknownCovState::with_grid(instance.d, grid_size);
            let mut flags = vec![false; checkpoints.len()];
            let mut max_devs = vec![0.0f64; checkpoints.len()];
            let mut next = 0usize;
            for t in 1..=t_max {
                let arm = rng.gen_range(1..=grid_size);
                let cost = arm as f64 / grid_size as f64;
                let s = sample_round(instance, cost, &mut rng).expect("valid cost");
                kc.update(cost, &s, &instance.profile).expect("update");
                uc.update(arm, &s).expect("arm in range");
                if next < checkpoints.len() && t == checkpoints[next] {
                    let width = conf.kc_loss_width(t);
                    let mut worst = 0.0f64;
                    let mut violated = false;
                    for _ in 0..probes {
                        let c = probe_rng.gen::<f64>();
                        let nu =
                            oracle::sample_in_ball(instance.d, instance.s_bound, &mut probe_rng);
                        let quad = kc
                            .quadratic(c, instance.lambda, &instance.profile, &conf, false)
                            .expect("t >= 1");
                        let emp = quad.eval(&nu).expect("dims match");
                        let truth =
                            oracle::expected_loss(instance, c, &nu).expect("valid cost");
                        let dev = (emp - t as f64 * truth).abs();
                        worst = worst.max(dev / t as f64);
                        if dev > width {
                            violated = true;
                        }
                    }
                    // Per-arm check of the cost-local estimator.
                    for k in 1..=grid_size {
                        let n_k = uc.visits(k).expect("arm in range");
                        if n_k == 0 {
                            continue;
                        }
                        let arm_width = conf.uc_bonus(t, n_k) * n_k as f64;
                        let c_k = uc.arm_cost(k).expect("arm in range");
                        for _ in 0..probes.min(10) {
                            let nu = oracle::sample_in_ball(
                                instance.d,
                                instance.s_bound,
                                &mut probe_rng,
                            );
                            let quad = uc.quadratic(k, instance.lambda).expect("arm in range");
                            let emp = quad.eval(&nu).expect("dims match");
                            let truth =
                                oracle::expected_loss(instance, c_k, &nu).expect("valid cost");
                            let dev = (emp - n_k as f64 * truth).abs();
                            if dev > arm_width {
                                violated = true;
                            }
                        }
                    }
                    if violated {
                        flags[next] = true;
                    }
                    max_devs[next] = worst;
                    next += 1;
                }
            }
            (flags, max_devs)
        })
        .collect();

    let (per_trial, devs): (Vec<Vec<bool>>, Vec<Vec<f64>>) = results.into_iter().unzip();
    Ok(summarize(trials, checkpoints, per_trial, devs, 3.0 * delta))
}

fn summarize(
    trials: usize,
    checkpoints: Vec<usize>,
    per_trial: Vec<Vec<bool>>,
    per_trial_max_dev: Vec<Vec<f64>>,
    nominal: f64,
) -> ViolationReport {
    let mut violations_at = vec![0usize; checkpoints.len()];
    let mut any = 0usize;
    for flags in &per_trial {
        if flags.iter().any(|&f| f) {
            any += 1;
        }
        for (i, &f) in flags.iter().enumerate() {
            if f {
                violations_at[i] += 1;
            }
        }
    }
    ViolationReport {
        trials,
        checkpoints,
        violations_at,
        any_violation_trials: any,
        violation_frequency: any as f64 / trials as f64,
        nominal,
        per_trial_max_dev,
    }
}
