//! Noise-covariance profiles, problem instances and per-round sampling.
//!
//! A profile maps a payment `c ∈ [0,1]` to the noise covariance `Σ_n(c)`;
//! raising the payment can only shrink the noise in the Loewner order. An
//! [`Instance`] bundles a profile with the feature distribution and the
//! scalars (`λ`, `S`, `R`, output-noise variance) that define one environment.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, norm, LinalgError, SymMatrix};
use crate::rng::EpisodeRng;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("cost {c} outside [0, 1]")]
    CostOutOfRange { c: f64 },
    #[error("invalid parameter: {0}")]
    BadParam(String),
    #[error("noise covariance at c={c} is not PSD (min eigenvalue {min_eig:e})")]
    NotPsd { c: f64, min_eig: f64 },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// The smooth profile `f(c) = (1−c)/(1+c)`.
pub fn f_ratio(c: f64) -> f64 {
    (1.0 - c) / (1.0 + c)
}

/// Left knot of the modified interval of the `k`-th perturbed profile on a
/// size-`grid_size` family: `c_k = 1/2 + (k−1)/(4K)`.
pub fn perturbation_knot(k: usize, grid_size: usize) -> f64 {
    0.5 + (k as f64 - 1.0) / (4.0 * grid_size as f64)
}

/// The interval `[c_k, c_{k+1})` where the perturbed profile dips below the
/// smooth one.
pub fn modified_interval(k: usize, grid_size: usize) -> (f64, f64) {
    (
        perturbation_knot(k, grid_size),
        perturbation_knot(k + 1, grid_size),
    )
}

/// Scalar variance of the perturbed profile: follows `f` outside
/// `[c_k, c_{k+1})`, dips linearly to `f(c_{k+1})` on the first half of the
/// interval and stays there on the second half.
pub fn perturbed_f_ratio(c: f64, k: usize, grid_size: usize) -> f64 {
    let (ck, ck1) = modified_interval(k, grid_size);
    let mid = 0.5 * (ck + ck1);
    if c >= ck && c < mid {
        f_ratio(ck) + 2.0 * (c - ck) / (ck1 - ck) * (f_ratio(ck1) - f_ratio(ck))
    } else if c >= mid && c < ck1 {
        f_ratio(ck1)
    } else {
        f_ratio(c)
    }
}

/// KL divergence between centered Gaussians of variances `v1` and `v2`.
pub fn kl_gaussian(v1: f64, v2: f64) -> Result<f64, EnvError> {
    if v1 <= 0.0 || v2 <= 0.0 {
        return Err(EnvError::BadParam(format!(
            "variances must be positive, got {v1} and {v2}"
        )));
    }
    let r = v1 / v2;
    Ok(0.5 * (r - r.ln() - 1.0))
}

/// Map from payment to noise covariance, nonincreasing in the Loewner order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum CovarianceProfile {
    /// Payment-independent noise.
    Constant { sigma: SymMatrix },
    /// `sigma_high` below the threshold cost, `sigma_low` from it onward.
    Step {
        sigma_high: SymMatrix,
        sigma_low: SymMatrix,
        threshold: f64,
    },
    /// `f(c) · I_dim` with `f(c) = (1−c)/(1+c)`.
    FRatio { dim: usize },
    /// `f` with a hidden dip on the `k`-th of `grid_size` disjoint intervals.
    PerturbedFRatio {
        dim: usize,
        k: usize,
        grid_size: usize,
    },
    /// Linear interpolation between `(cost, covariance)` knots, clamped
    /// outside the knot range. Knots must be sorted by cost.
    PiecewiseLinear { knots: Vec<(f64, SymMatrix)> },
}

impl CovarianceProfile {
    pub fn dim(&self) -> usize {
        match self {
            CovarianceProfile::Constant { sigma } => sigma.dim(),
            CovarianceProfile::Step { sigma_high, .. } => sigma_high.dim(),
            CovarianceProfile::FRatio { dim } => *dim,
            CovarianceProfile::PerturbedFRatio { dim, .. } => *dim,
            CovarianceProfile::PiecewiseLinear { knots } => {
                knots.first().map(|(_, m)| m.dim()).unwrap_or(0)
            }
        }
    }

    fn check(&self) -> Result<(), EnvError> {
        match self {
            CovarianceProfile::Constant { .. } => {}
            CovarianceProfile::Step {
                sigma_high,
                sigma_low,
                threshold,
            } => {
                if sigma_high.dim() != sigma_low.dim() {
                    return Err(EnvError::BadParam(
                        "step profile levels must share a dimension".into(),
                    ));
                }
                if !(0.0..=1.0).contains(threshold) {
                    return Err(EnvError::BadParam(format!(
                        "step threshold {threshold} outside [0, 1]"
                    )));
                }
            }
            CovarianceProfile::FRatio { dim } => {
                if *dim == 0 {
                    return Err(EnvError::BadParam("profile dim must be >= 1".into()));
                }
            }
            CovarianceProfile::PerturbedFRatio { dim, k, grid_size } => {
                if *dim == 0 {
                    return Err(EnvError::BadParam("profile dim must be >= 1".into()));
                }
                if *grid_size == 0 || *k == 0 || k > grid_size {
                    return Err(EnvError::BadParam(format!(
                        "perturbation index k={k} must satisfy 1 <= k <= {grid_size}"
                    )));
                }
            }
            CovarianceProfile::PiecewiseLinear { knots } => {
                if knots.is_empty() {
                    return Err(EnvError::BadParam("need at least one knot".into()));
                }
                let dim = knots[0].1.dim();
                for w in knots.windows(2) {
                    if w[1].0 <= w[0].0 {
                        return Err(EnvError::BadParam(
                            "knot costs must be strictly increasing".into(),
                        ));
                    }
                }
                if knots.iter().any(|(_, m)| m.dim() != dim) {
                    return Err(EnvError::BadParam(
                        "all knots must share a dimension".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Noise covariance at payment `c`.
pub fn sigma_n(profile: &CovarianceProfile, c: f64) -> Result<SymMatrix, EnvError> {
    if !(0.0..=1.0).contains(&c) {
        return Err(EnvError::CostOutOfRange { c });
    }
    profile.check()?;
    Ok(match profile {
        CovarianceProfile::Constant { sigma } => sigma.clone(),
        CovarianceProfile::Step {
            sigma_high,
            sigma_low,
            threshold,
        } => {
            if c < *threshold {
                sigma_high.clone()
            } else {
                sigma_low.clone()
            }
        }
        CovarianceProfile::FRatio { dim } => SymMatrix::scaled_identity(*dim, f_ratio(c)),
        CovarianceProfile::PerturbedFRatio { dim, k, grid_size } => {
            SymMatrix::scaled_identity(*dim, perturbed_f_ratio(c, *k, *grid_size))
        }
        CovarianceProfile::PiecewiseLinear { knots } => {
            if c <= knots[0].0 {
                knots[0].1.clone()
            } else if c >= knots[knots.len() - 1].0 {
                knots[knots.len() - 1].1.clone()
            } else {
                let hi = knots.iter().position(|(kc, _)| *kc > c).unwrap();
                let (c0, m0) = &knots[hi - 1];
                let (c1, m1) = &knots[hi];
                let w = (c - c0) / (c1 - c0);
                let mut out = m0.scaled(1.0 - w);
                out.add_scaled(m1, w);
                out
            }
        }
    })
}

/// One grid pair that breaks the profile contract.
#[derive(Debug, Clone, Serialize)]
pub enum ProfileViolation {
    NotPsd { c: f64, min_eig: f64 },
    NotMonotone { c1: f64, c2: f64, min_eig: f64 },
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub grid_size: usize,
    pub violations: Vec<ProfileViolation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks PSD at every grid cost and Loewner monotonicity over every grid
/// pair `c1 <= c2`, at tolerance 1e-9. Quadratic in `grid_size`.
pub fn validate_profile(
    profile: &CovarianceProfile,
    grid_size: usize,
) -> Result<ValidationReport, EnvError> {
    if grid_size < 2 {
        return Err(EnvError::BadParam("grid_size must be >= 2".into()));
    }
    const TOL: f64 = 1e-9;
    let costs: Vec<f64> = (0..grid_size)
        .map(|i| i as f64 / (grid_size - 1) as f64)
        .collect();
    let mats: Vec<SymMatrix> = costs
        .iter()
        .map(|&c| sigma_n(profile, c))
        .collect::<Result<_, _>>()?;
    let dim = profile.dim();
    let zero = SymMatrix::zeros(dim);
    let mut violations = Vec::new();
    for (c, m) in costs.iter().zip(mats.iter()) {
        if !linalg::loewner_leq(&zero, m, TOL)? {
            violations.push(ProfileViolation::NotPsd {
                c: *c,
                min_eig: m.min_eigenvalue()?,
            });
        }
    }
    for i in 0..grid_size {
        for j in (i + 1)..grid_size {
            // Require sigma_n(c2) ⪯ sigma_n(c1).
            if !linalg::loewner_leq(&mats[j], &mats[i], TOL)? {
                violations.push(ProfileViolation::NotMonotone {
                    c1: costs[i],
                    c2: costs[j],
                    min_eig: mats[i].sub(&mats[j]).min_eigenvalue()?,
                });
            }
        }
    }
    Ok(ValidationReport {
        grid_size,
        violations,
    })
}

/// A complete environment: feature distribution, noise profile and the
/// scalar problem constants.
///
/// Feature draws are Gaussian, `x ~ N(x_mean, x_cov_centered)`; the
/// second-moment matrix is `Σ_x = x_cov_centered + x_mean x_meanᵀ`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "InstanceRaw")]
pub struct Instance {
    pub d: usize,
    pub theta_star: Vec<f64>,
    pub x_mean: Vec<f64>,
    pub x_cov_centered: SymMatrix,
    pub profile: CovarianceProfile,
    pub lambda: f64,
    pub s_bound: f64,
    pub r_subgauss: f64,
    #[serde(default)]
    pub output_noise_var: f64,
}

/// Field-for-field mirror of [`Instance`] without the invariant checks.
/// Lets diagnostic tools load a possibly-broken instance and report which
/// contracts it violates instead of failing at parse time.
#[derive(Debug, Clone, Deserialize)]
pub struct InstanceRaw {
    pub d: usize,
    pub theta_star: Vec<f64>,
    pub x_mean: Vec<f64>,
    pub x_cov_centered: SymMatrix,
    pub profile: CovarianceProfile,
    pub lambda: f64,
    pub s_bound: f64,
    pub r_subgauss: f64,
    #[serde(default)]
    pub output_noise_var: f64,
}

impl InstanceRaw {
    /// Builds the instance without running [`Instance::validate`].
    pub fn into_unvalidated(self) -> Instance {
        Instance {
            d: self.d,
            theta_star: self.theta_star,
            x_mean: self.x_mean,
            x_cov_centered: self.x_cov_centered,
            profile: self.profile,
            lambda: self.lambda,
            s_bound: self.s_bound,
            r_subgauss: self.r_subgauss,
            output_noise_var: self.output_noise_var,
        }
    }
}

impl TryFrom<InstanceRaw> for Instance {
    type Error = EnvError;

    fn try_from(raw: InstanceRaw) -> Result<Self, Self::Error> {
        let inst = raw.into_unvalidated();
        inst.validate()?;
        Ok(inst)
    }
}

impl Instance {
    /// Builds an instance, deriving `R` as the subgaussian constant of the
    /// Gaussian environment: `sqrt(max(λ_max(C_x), λ_max(Σ_n(0))))`.
    pub fn new(
        theta_star: Vec<f64>,
        x_mean: Vec<f64>,
        x_cov_centered: SymMatrix,
        profile: CovarianceProfile,
        lambda: f64,
        s_bound: f64,
        output_noise_var: f64,
    ) -> Result<Self, EnvError> {
        let d = theta_star.len();
        let lam_cx = sym_eig_max(&x_cov_centered)?;
        let lam_n0 = sym_eig_max(&sigma_n(&profile, 0.0)?)?;
        let r_subgauss = lam_cx.max(lam_n0).max(0.0).sqrt();
        let inst = Instance {
            d,
            theta_star,
            x_mean,
            x_cov_centered,
            profile,
            lambda,
            s_bound,
            r_subgauss,
            output_noise_var,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        if self.d == 0 {
            return Err(EnvError::BadParam("d must be >= 1".into()));
        }
        let dims_ok = self.theta_star.len() == self.d
            && self.x_mean.len() == self.d
            && self.x_cov_centered.dim() == self.d
            && self.profile.dim() == self.d;
        if !dims_ok {
            return Err(EnvError::BadParam(
                "theta_star, x_mean, x_cov_centered and profile must share dimension d".into(),
            ));
        }
        self.profile.check()?;
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(EnvError::BadParam(format!(
                "lambda must be positive, got {}",
                self.lambda
            )));
        }
        if !(self.s_bound > 0.0 && self.s_bound.is_finite()) {
            return Err(EnvError::BadParam(format!(
                "s_bound must be positive, got {}",
                self.s_bound
            )));
        }
        if !(self.r_subgauss > 0.0 && self.r_subgauss.is_finite()) {
            return Err(EnvError::BadParam(format!(
                "r_subgauss must be positive, got {}",
                self.r_subgauss
            )));
        }
        if !(self.output_noise_var >= 0.0 && self.output_noise_var.is_finite()) {
            return Err(EnvError::BadParam(format!(
                "output_noise_var must be nonnegative, got {}",
                self.output_noise_var
            )));
        }
        if self.theta_star.iter().any(|v| !v.is_finite())
            || self.x_mean.iter().any(|v| !v.is_finite())
        {
            return Err(EnvError::BadParam("non-finite instance data".into()));
        }
        const SLACK: f64 = 1e-12;
        if norm(&self.theta_star) > self.s_bound * (1.0 + SLACK) {
            return Err(EnvError::BadParam(format!(
                "theta_star norm {} exceeds s_bound {}",
                norm(&self.theta_star),
                self.s_bound
            )));
        }
        if norm(&self.x_mean) > self.s_bound * (1.0 + SLACK) {
            return Err(EnvError::BadParam(format!(
                "x_mean norm {} exceeds s_bound {}",
                norm(&self.x_mean),
                self.s_bound
            )));
        }
        // Centered feature covariance must be PSD.
        let min_cx = self.x_cov_centered.min_eigenvalue()?;
        if min_cx < -1e-9 {
            return Err(EnvError::BadParam(format!(
                "x_cov_centered is not PSD (min eigenvalue {min_cx:e})"
            )));
        }
        // The noisy-feature covariance at the maximal payment must be
        // strictly positive definite.
        let full = self.sigma_x_hat(1.0)?;
        let min_full = full.min_eigenvalue()?;
        if min_full <= 1e-12 {
            return Err(EnvError::BadParam(format!(
                "sigma_x_hat(1) is not positive definite (min eigenvalue {min_full:e})"
            )));
        }
        Ok(())
    }

    /// Second moment of the features, `Σ_x = C_x + x̄ x̄ᵀ`.
    pub fn sigma_x(&self) -> SymMatrix {
        let mut m = self.x_cov_centered.clone();
        m.add_outer(&self.x_mean, 1.0);
        m
    }

    /// Second moment of the noisy features at payment `c`.
    pub fn sigma_x_hat(&self, c: f64) -> Result<SymMatrix, EnvError> {
        let mut m = self.sigma_x();
        m.add_scaled(&sigma_n(&self.profile, c)?, 1.0);
        Ok(m)
    }

    /// Stable content hash used to key logs and sweeps.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(self).expect("instance serializes");
        // FNV-1a, 64-bit.
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in json.as_bytes() {
            h ^= *b as u64;
            h = h.wrapping_mul(0x100_0000_01b3);
        }
        format!("{h:016x}")
    }
}

fn sym_eig_max(m: &SymMatrix) -> Result<f64, EnvError> {
    let e = linalg::sym_eigen(m)?;
    Ok(e.eigenvalues[m.dim() - 1])
}

/// One round of the environment: true features, noise, their sum, and the
/// (possibly noisy) output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundSample {
    pub x: Vec<f64>,
    pub n: Vec<f64>,
    pub x_hat: Vec<f64>,
    pub y: f64,
}

/// Square-root factor of a PSD matrix via eigendecomposition, clamping
/// eigenvalue dust at zero. Returns columns `f_i` with `Σ f_i f_iᵀ = A`.
fn psd_sqrt_columns(a: &SymMatrix, label: f64) -> Result<Vec<Vec<f64>>, EnvError> {
    let e = linalg::sym_eigen(a)?;
    let scale = e.eigenvalues[a.dim() - 1].abs().max(1.0);
    if e.eigenvalues[0] < -1e-9 * scale {
        return Err(EnvError::NotPsd {
            c: label,
            min_eig: e.eigenvalues[0],
        });
    }
    Ok(e.eigenvalues
        .iter()
        .zip(e.eigenvectors.iter())
        .map(|(lam, q)| {
            let s = lam.max(0.0).sqrt();
            q.iter().map(|v| v * s).collect()
        })
        .collect())
}

fn gaussian_vec(cols: &[Vec<f64>], mean: &[f64], rng: &mut EpisodeRng) -> Vec<f64> {
    let mut out = mean.to_vec();
    for col in cols {
        let z: f64 = rng.sample(StandardNormal);
        for (o, c) in out.iter_mut().zip(col.iter()) {
            *o += z * c;
        }
    }
    out
}

/// Draws `(x, n, x̂, y)` at payment `c`: `x ~ N(x̄, C_x)`,
/// `n ~ N(0, Σ_n(c))` independent of `x`, `y = xᵀθ* + η`.
pub fn sample_round(
    instance: &Instance,
    c: f64,
    rng: &mut EpisodeRng,
) -> Result<RoundSample, EnvError> {
    let noise_cov = sigma_n(&instance.profile, c)?;
    let x_cols = psd_sqrt_columns(&instance.x_cov_centered, -1.0)?;
    let n_cols = psd_sqrt_columns(&noise_cov, c)?;
    let x = gaussian_vec(&x_cols, &instance.x_mean, rng);
    let n = gaussian_vec(&n_cols, &vec![0.0; instance.d], rng);
    let x_hat: Vec<f64> = x.iter().zip(n.iter()).map(|(a, b)| a + b).collect();
    let eta: f64 = rng.sample::<f64, _>(StandardNormal) * instance.output_noise_var.sqrt();
    let y = linalg::dot(&x, &instance.theta_star) + eta;
    Ok(RoundSample { x, n, x_hat, y })
}

/// The two-point hard family: 1-D instances with a step noise profile
/// (`σ_n²(c) = 1{c < 1/2}`), `θ* = 1`, `λ = 1`, and feature variances
/// `1 − eps` and `1 + eps`. The first prefers paying 0, the second 1/2.
pub fn make_lower_bound_known(eps: f64) -> Result<(Instance, Instance), EnvError> {
    if !(eps > 0.0 && eps <= 0.5) {
        return Err(EnvError::BadParam(format!(
            "eps must lie in (0, 1/2], got {eps}"
        )));
    }
    let profile = CovarianceProfile::Step {
        sigma_high: SymMatrix::diag(&[1.0]),
        sigma_low: SymMatrix::diag(&[0.0]),
        threshold: 0.5,
    };
    let make = |var: f64| {
        Instance::new(
            vec![1.0],
            vec![0.0],
            SymMatrix::diag(&[var]),
            profile.clone(),
            1.0,
            1.0,
            0.0,
        )
    };
    Ok((make(1.0 - eps)?, make(1.0 + eps)?))
}

/// The smooth hard family: a baseline whose optimal loss is flat at 1/2
/// plus `k_env` perturbed instances, each hiding a strictly better payment
/// inside its own interval.
pub fn make_lower_bound_unknown(k_env: usize) -> Result<(Instance, Vec<Instance>), EnvError> {
    if k_env < 1 {
        return Err(EnvError::BadParam("need at least one perturbation".into()));
    }
    let base = Instance::new(
        vec![1.0],
        vec![0.0],
        SymMatrix::diag(&[1.0]),
        CovarianceProfile::FRatio { dim: 1 },
        0.5,
        1.0,
        0.0,
    )?;
    let perturbed = (1..=k_env)
        .map(|k| {
            Instance::new(
                vec![1.0],
                vec![0.0],
                SymMatrix::diag(&[1.0]),
                CovarianceProfile::PerturbedFRatio {
                    dim: 1,
                    k,
                    grid_size: k_env,
                },
                0.5,
                1.0,
                0.0,
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok((base, perturbed))
}
