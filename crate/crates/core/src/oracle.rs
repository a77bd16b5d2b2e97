//! Exact expected losses and the benchmark used to score regret.
//!
//! For a payment `c` and linear predictor `ν`, the expected loss is the
//! closed-form quadratic
//! `ℓ(c,ν) = νᵀΣ_x̂(c)ν − 2νᵀΣ_xθ* + θ*ᵀΣ_xθ* + λc` (plus the output-noise
//! variance when present). The per-cost optimum is `ν̄(c) = Σ_x̂(c)⁻¹Σ_xθ*`,
//! projected onto the S-ball when necessary.

use serde::Serialize;
use std::fmt::Write as _;
use thiserror::Error;

use crate::environment::{EnvError, Instance};
use crate::linalg::{self, norm, LinalgError, SymMatrix};
use crate::rng::EpisodeRng;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("sigma_x_hat({c}) is singular beyond tolerance (min eigenvalue {min_eig:e})")]
    Singular { c: f64, min_eig: f64 },
    #[error("invalid parameter: {0}")]
    BadParam(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// `ℓ(c, ν)`: expected squared prediction error at payment `c` plus `λc`
/// plus the output-noise variance.
pub fn expected_loss(instance: &Instance, c: f64, nu: &[f64]) -> Result<f64, OracleError> {
    let sigma_hat = instance.sigma_x_hat(c)?;
    let sigma_x = instance.sigma_x();
    let sx_theta = sigma_x.matvec(&instance.theta_star);
    let value = linalg::quad_form(&sigma_hat, nu)? - 2.0 * linalg::dot(nu, &sx_theta)
        + linalg::dot(&instance.theta_star, &sx_theta)
        + instance.lambda * c
        + instance.output_noise_var;
    Ok(value)
}

/// Solves `Σ_x̂(c) ν = Σ_x θ*` through the eigendecomposition, flooring
/// eigenvalues at `1e-12·λ_max` to tame near-singular covariances.
fn solve_spd(sigma_hat: &SymMatrix, rhs: &[f64], c: f64) -> Result<Vec<f64>, OracleError> {
    let eig = linalg::sym_eigen(sigma_hat)?;
    let lam_max = eig.eigenvalues[sigma_hat.dim() - 1];
    if lam_max <= 0.0 {
        return Err(OracleError::Singular {
            c,
            min_eig: eig.eigenvalues[0],
        });
    }
    let floor = 1e-12 * lam_max;
    if eig.eigenvalues[0] < -1e-9 * lam_max {
        return Err(OracleError::Singular {
            c,
            min_eig: eig.eigenvalues[0],
        });
    }
    let mut out = vec![0.0; rhs.len()];
    for (lam, q) in eig.eigenvalues.iter().zip(eig.eigenvectors.iter()) {
        let coef = linalg::dot(q, rhs) / lam.max(floor);
        for (o, qi) in out.iter_mut().zip(q.iter()) {
            *o += coef * qi;
        }
    }
    Ok(out)
}

/// `ν*(c)`: the unconstrained optimum `ν̄(c)` when it fits in the S-ball,
/// otherwise the exact ball-constrained minimizer.
pub fn optimal_predictor(instance: &Instance, c: f64) -> Result<Vec<f64>, OracleError> {
    let sigma_hat = instance.sigma_x_hat(c)?;
    let rhs = instance.sigma_x().matvec(&instance.theta_star);
    let nu_bar = solve_spd(&sigma_hat, &rhs, c)?;
    if norm(&nu_bar) <= instance.s_bound {
        return Ok(nu_bar);
    }
    Ok(linalg::min_quadratic_on_ball(
        &sigma_hat,
        &rhs,
        instance.s_bound,
        1e-10,
    )?)
}

/// `ℓ*(c) = ℓ(c, ν*(c))`.
pub fn optimal_loss_at(instance: &Instance, c: f64) -> Result<f64, OracleError> {
    let nu = optimal_predictor(instance, c)?;
    expected_loss(instance, c, &nu)
}

/// The loss benchmark evaluated on the grid `{0, 1/M, ..., 1}`.
///
/// `ell_star` is the grid minimum; by one-sided Lipschitzness the continuous
/// infimum lies within `slack = λ/M` below it.
#[derive(Debug, Clone, Serialize)]
pub struct LossLandscape {
    pub instance_id: String,
    pub costs: Vec<f64>,
    pub losses: Vec<f64>,
    pub predictors: Vec<Vec<f64>>,
    pub ell_star: f64,
    pub c_star: f64,
    pub slack: f64,
}

impl LossLandscape {
    /// CSV with columns `c,loss_opt,nu_opt_0..nu_opt_{d-1}`.
    pub fn to_csv(&self) -> String {
        let d = self.predictors.first().map(|p| p.len()).unwrap_or(0);
        let mut out = String::from("c,loss_opt");
        for i in 0..d {
            let _ = write!(out, ",nu_opt_{i}");
        }
        out.push('\n');
        for ((c, loss), nu) in self
            .costs
            .iter()
            .zip(self.losses.iter())
            .zip(self.predictors.iter())
        {
            let _ = write!(out, "{c},{loss}");
            for v in nu {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }
}

/// Evaluates the per-cost optimum over an `(M+1)`-point grid.
pub fn loss_landscape(instance: &Instance, m: usize) -> Result<LossLandscape, OracleError> {
    if m < 2 {
        return Err(OracleError::BadParam("grid M must be >= 2".into()));
    }
    let mut costs = Vec::with_capacity(m + 1);
    let mut losses = Vec::with_capacity(m + 1);
    let mut predictors = Vec::with_capacity(m + 1);
    let mut best = (f64::INFINITY, 0.0);
    for i in 0..=m {
        let c = i as f64 / m as f64;
        let nu = optimal_predictor(instance, c)?;
        let loss = expected_loss(instance, c, &nu)?;
        if loss < best.0 {
            best = (loss, c);
        }
        costs.push(c);
        losses.push(loss);
        predictors.push(nu);
    }
    Ok(LossLandscape {
        instance_id: instance.fingerprint(),
        costs,
        losses,
        predictors,
        ell_star: best.0,
        c_star: best.1,
        slack: instance.lambda / m as f64,
    })
}

/// Ceiling on any feasible loss: `6S²(R²d + S²) + λ` plus the output-noise
/// variance.
pub fn max_loss_bound(instance: &Instance) -> f64 {
    let s2 = instance.s_bound * instance.s_bound;
    let r2 = instance.r_subgauss * instance.r_subgauss;
    6.0 * s2 * (r2 * instance.d as f64 + s2) + instance.lambda + instance.output_noise_var
}

/// Checks the loss ceiling over random feasible `(c, ν)` pairs.
pub fn check_max_loss_bound(
    instance: &Instance,
    samples: usize,
    rng: &mut EpisodeRng,
) -> Result<bool, OracleError> {
    use rand::Rng;
    let bound = max_loss_bound(instance);
    for _ in 0..samples {
        let c = rng.gen::<f64>();
        let nu = sample_in_ball(instance.d, instance.s_bound, rng);
        if expected_loss(instance, c, &nu)? > bound {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Uniform draw from the radius-`r` ball in `d` dimensions.
pub fn sample_in_ball(d: usize, r: f64, rng: &mut EpisodeRng) -> Vec<f64> {
    use rand::Rng;
    use rand_distr::StandardNormal;
    let mut v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let n = norm(&v);
    let radius = r * rng.gen::<f64>().powf(1.0 / d as f64);
    if n > 0.0 {
        for x in &mut v {
            *x *= radius / n;
        }
    }
    v
}
