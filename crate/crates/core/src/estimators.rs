//! Empirical loss estimators and their confidence widths.
//!
//! With known noise covariances, every sample informs every payment level:
//! the accumulator carries `Σ_s (x̂_s x̂_sᵀ − Σ_n(c_s))` so that adding back
//! `t·Σ_n(c)` shifts the noise covariance from the paid costs to any query
//! cost. With unknown covariances, each grid cost keeps its own plain
//! least-squares accumulator and a visit count.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::environment::{sigma_n, CovarianceProfile, EnvError, RoundSample};
use crate::linalg::{self, LinalgError, SymMatrix};

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error("arm {k} outside 1..={num_arms}")]
    ArmOutOfRange { k: usize, num_arms: usize },
    #[error("arm {k} has no observations yet; run the initialization phase first")]
    EmptyArm { k: usize },
    #[error("confidence level delta={0} outside (0, 1]")]
    BadDelta(f64),
    #[error("invalid parameter: {0}")]
    BadParam(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Inputs of the confidence widths: dimension, subgaussian constant,
/// predictor-norm bound and failure probability.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConfidenceParams {
    pub d: usize,
    pub r: f64,
    pub s: f64,
    pub delta: f64,
}

/// The subgaussian-norm coefficient
/// `β_t = R²(d + 2√(d·L) + 2L) + S²(1 + 2√(L/d))` with `L = ln(3t(t+1)/δ)`.
pub fn beta(t: usize, d: usize, r: f64, s: f64, delta: f64) -> Result<f64, EstimatorError> {
    ConfidenceParams::new(d, r, s, delta)?.checked_beta(t)
}

impl ConfidenceParams {
    pub fn new(d: usize, r: f64, s: f64, delta: f64) -> Result<Self, EstimatorError> {
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(EstimatorError::BadDelta(delta));
        }
        if d == 0 {
            return Err(EstimatorError::BadParam("d must be >= 1".into()));
        }
        if !(r >= 0.0 && s >= 0.0) {
            return Err(EstimatorError::BadParam("r and s must be nonnegative".into()));
        }
        Ok(ConfidenceParams { d, r, s, delta })
    }

    fn log_plain(&self, t: usize) -> f64 {
        let t = t as f64;
        (3.0 * t * (t + 1.0) / self.delta).ln()
    }

    fn log_dim(&self, t: usize) -> f64 {
        let t = t as f64;
        (3.0 * self.d as f64 * t * (t + 1.0) / self.delta).ln()
    }

    fn checked_beta(&self, t: usize) -> Result<f64, EstimatorError> {
        if t == 0 {
            return Err(EstimatorError::BadParam("beta needs t >= 1".into()));
        }
        Ok(self.beta(t))
    }

    pub fn beta(&self, t: usize) -> f64 {
        let l = self.log_plain(t);
        let d = self.d as f64;
        self.r * self.r * (d + 2.0 * (d * l).sqrt() + 2.0 * l)
            + self.s * self.s * (1.0 + 2.0 * (l / d).sqrt())
    }

    /// Martingale deviation scale `√(8tβ_t² ln(3dt(t+1)/δ))`.
    pub fn azuma_width(&self, t: usize) -> f64 {
        let b = self.beta(t);
        (8.0 * t as f64 * b * b * self.log_dim(t)).sqrt()
    }

    /// Regularization weight `γ_t = 2√(8tβ_t² ln(3dt(t+1)/δ))`.
    pub fn gamma(&self, t: usize) -> f64 {
        2.0 * self.azuma_width(t)
    }

    /// Uniform deviation of the shared-sample loss estimator:
    /// `|L̂(c,ν) − tℓ(c,ν)| ≤ 9S²·azuma_width(t)`.
    pub fn kc_loss_width(&self, t: usize) -> f64 {
        9.0 * self.s * self.s * self.azuma_width(t)
    }

    /// Optimism bonus for an arm with `n_k` visits at round `t`:
    /// `9S²√(8β_t² ln(3dt(t+1)/δ) / n_k)`.
    pub fn uc_bonus(&self, t: usize, n_k: usize) -> f64 {
        let b = self.beta(t);
        9.0 * self.s * self.s * (8.0 * b * b * self.log_dim(t) / n_k as f64).sqrt()
    }
}

/// A loss estimator reduced to its quadratic form:
/// `L(ν) = νᵀ A_eff ν − 2 bᵀν + constant`.
#[derive(Debug, Clone)]
pub struct QuadraticLoss {
    pub a_eff: SymMatrix,
    pub b: Vec<f64>,
    pub constant: f64,
}

impl QuadraticLoss {
    pub fn eval(&self, nu: &[f64]) -> Result<f64, LinalgError> {
        Ok(linalg::quad_form(&self.a_eff, nu)? - 2.0 * linalg::dot(&self.b, nu) + self.constant)
    }

    /// Exact minimizer over the S-ball (handles indefinite `a_eff`).
    pub fn minimize_on_ball(&self, s: f64, tol: f64) -> Result<Vec<f64>, LinalgError> {
        linalg::min_quadratic_on_ball(&self.a_eff, &self.b, s, tol)
    }
}

/// Sufficient statistics of the shared-sample estimator (known covariances):
/// `t`, `Σ(x̂x̂ᵀ − Σ_n(c_s))`, `Σ x̂ y`, `Σ y²`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KnownCovState {
    t: usize,
    a_acc: SymMatrix,
    b_acc: Vec<f64>,
    q_acc: f64,
}

impl KnownCovState {
    pub fn new(d: usize) -> Self {
        KnownCovState {
            t: 0,
            a_acc: SymMatrix::zeros(d),
            b_acc: vec![0.0; d],
            q_acc: 0.0,
        }
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn a_acc(&self) -> &SymMatrix {
        &self.a_acc
    }

    /// Folds in one round paid at `c_s`.
    pub fn update(
        &mut self,
        c_s: f64,
        sample: &RoundSample,
        profile: &CovarianceProfile,
    ) -> Result<(), EstimatorError> {
        let noise = sigma_n(profile, c_s)?;
        self.a_acc.add_outer(&sample.x_hat, 1.0);
        self.a_acc.add_scaled(&noise, -1.0);
        for (b, xh) in self.b_acc.iter_mut().zip(sample.x_hat.iter()) {
            *b += xh * sample.y;
        }
        self.q_acc += sample.y * sample.y;
        self.t += 1;
        Ok(())
    }

    /// Quadratic form of `L̂(c, ·)`: `A_eff = A_acc + t·Σ_n(c)` plus `γ_t I`
    /// when regularized; the constant term is `Σy² + tλc`.
    pub fn quadratic(
        &self,
        c: f64,
        lambda: f64,
        profile: &CovarianceProfile,
        conf: &ConfidenceParams,
        regularized: bool,
    ) -> Result<QuadraticLoss, EstimatorError> {
        if self.t == 0 {
            return Err(EstimatorError::BadParam(
                "estimator is empty; no quadratic yet".into(),
            ));
        }
        let mut a_eff = self.a_acc.clone();
        a_eff.add_scaled(&sigma_n(profile, c)?, self.t as f64);
        if regularized {
            a_eff.add_scaled_identity(conf.gamma(self.t));
        }
        Ok(QuadraticLoss {
            a_eff,
            b: self.b_acc.clone(),
            constant: self.q_acc + self.t as f64 * lambda * c,
        })
    }
}

/// Per-arm accumulator of the cost-local estimator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArmState {
    pub cost: f64,
    pub a: SymMatrix,
    pub b: Vec<f64>,
    pub q: f64,
    pub visits: usize,
}

/// Cost-local estimator (unknown covariances): one least-squares accumulator
/// and a visit count per grid cost.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UnknownCovState {
    t: usize,
    arms: Vec<ArmState>,
}

impl UnknownCovState {
    /// Arms at the grid costs `{1/K, ..., 1}`.
    pub fn with_grid(d: usize, grid_size: usize) -> Self {
        let costs = (1..=grid_size)
            .map(|k| k as f64 / grid_size as f64)
            .collect();
        Self::with_costs(d, costs)
    }

    pub fn with_costs(d: usize, costs: Vec<f64>) -> Self {
        UnknownCovState {
            t: 0,
            arms: costs
                .into_iter()
                .map(|cost| ArmState {
                    cost,
                    a: SymMatrix::zeros(d),
                    b: vec![0.0; d],
                    q: 0.0,
                    visits: 0,
                })
                .collect(),
        }
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn num_arms(&self) -> usize {
        self.arms.len()
    }

    pub fn arm(&self, k: usize) -> Result<&ArmState, EstimatorError> {
        if k == 0 || k > self.arms.len() {
            return Err(EstimatorError::ArmOutOfRange {
                k,
                num_arms: self.arms.len(),
            });
        }
        Ok(&self.arms[k - 1])
    }

    pub fn arm_cost(&self, k: usize) -> Result<f64, EstimatorError> {
        Ok(self.arm(k)?.cost)
    }

    pub fn visits(&self, k: usize) -> Result<usize, EstimatorError> {
        Ok(self.arm(k)?.visits)
    }

    /// Folds one round into arm `k` only.
    pub fn update(&mut self, k: usize, sample: &RoundSample) -> Result<(), EstimatorError> {
        if k == 0 || k > self.arms.len() {
            return Err(EstimatorError::ArmOutOfRange {
                k,
                num_arms: self.arms.len(),
            });
        }
        let arm = &mut self.arms[k - 1];
        arm.a.add_outer(&sample.x_hat, 1.0);
        for (b, xh) in arm.b.iter_mut().zip(sample.x_hat.iter()) {
            *b += xh * sample.y;
        }
        arm.q += sample.y * sample.y;
        arm.visits += 1;
        self.t += 1;
        Ok(())
    }

    /// Quadratic form of the arm's accumulated loss, including the payment
    /// term `N_k · λ · c_k`.
    pub fn quadratic(&self, k: usize, lambda: f64) -> Result<QuadraticLoss, EstimatorError> {
        let arm = self.arm(k)?;
        Ok(QuadraticLoss {
            a_eff: arm.a.clone(),
            b: arm.b.clone(),
            constant: arm.q + arm.visits as f64 * lambda * arm.cost,
        })
    }

    /// Optimistic index of arm `k` at round `t`: mean empirical loss at the
    /// arm's empirical-best predictor minus the visit-count bonus.
    pub fn ucb_index(
        &self,
        k: usize,
        lambda: f64,
        conf: &ConfidenceParams,
        t: usize,
    ) -> Result<f64, EstimatorError> {
        let arm = self.arm(k)?;
        if arm.visits == 0 {
            return Err(EstimatorError::EmptyArm { k });
        }
        let quad = self.quadratic(k, lambda)?;
        let nu = quad.minimize_on_ball(conf.s.max(f64::MIN_POSITIVE), 1e-10)?;
        let value = quad.eval(&nu)?;
        Ok(value / arm.visits as f64 - conf.uc_bonus(t, arm.visits))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{sample_round, CovarianceProfile, Instance};
    use crate::oracle::{expected_loss, sample_in_ball};
    use crate::rng::episode_rng;

    const LN6: f64 = 1.791759469228055;

    fn test_conf() -> ConfidenceParams {
        ConfidenceParams::new(1, 1.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn beta_at_unit_parameters() {
        let b = beta(1, 1, 1.0, 1.0, 1.0).unwrap();
        let want = 1.0 + 2.0 * LN6.sqrt() + 2.0 * LN6 + 1.0 + 2.0 * LN6.sqrt();
        assert!((b - want).abs() < 1e-12);
        assert!((b - 10.94).abs() < 5e-3, "{b}");
    }

    #[test]
    fn beta_degenerate_constants() {
        for t in [1usize, 10, 1000] {
            assert_eq!(beta(t, 3, 0.0, 0.0, 0.5).unwrap(), 0.0);
        }
    }

    #[test]
    fn beta_monotone_in_t() {
        let conf = ConfidenceParams::new(2, 1.0, 1.0, 0.01).unwrap();
        let mut prev = conf.beta(1);
        for t in 2..=10_000 {
            let b = conf.beta(t);
            assert!(b >= prev, "beta dipped at t={t}");
            prev = b;
        }
    }

    #[test]
    fn beta_rejects_bad_delta() {
        assert!(beta(1, 1, 1.0, 1.0, 0.0).is_err());
        assert!(beta(1, 1, 1.0, 1.0, 1.5).is_err());
    }

    #[test]
    fn width_values_and_decay() {
        let conf = test_conf();
        let w1 = conf.kc_loss_width(1);
        assert!((w1 - 9.0 * (8.0f64 * 10.937784 * 10.937784 * LN6).sqrt()).abs() < 1e-3);
        assert!((w1 - 372.7).abs() < 0.1, "{w1}");
        assert!((conf.azuma_width(1) - 41.4).abs() < 0.05);
        // Normalized width shrinks with t.
        assert!(conf.kc_loss_width(1_000_000) / 1e6 < conf.kc_loss_width(10_000) / 1e4);
        // S = 0 kills the width entirely.
        let conf0 = ConfidenceParams::new(1, 1.0, 0.0, 1.0).unwrap();
        assert_eq!(conf0.kc_loss_width(17), 0.0);
    }

    fn small_instance(output_noise: f64) -> Instance {
        Instance::new(
            vec![0.6, -0.3],
            vec![0.1, 0.0],
            SymMatrix::from_rows(&[vec![0.9, 0.2], vec![0.2, 0.7]]).unwrap(),
            CovarianceProfile::FRatio { dim: 2 },
            0.8,
            1.0,
            output_noise,
        )
        .unwrap()
    }

    #[test]
    fn kc_single_update_accumulators() {
        let inst = small_instance(0.0);
        let mut rng = episode_rng(2, 0);
        let c_s = 0.4;
        let s = sample_round(&inst, c_s, &mut rng).unwrap();
        let mut state = KnownCovState::new(2);
        state.update(c_s, &s, &inst.profile).unwrap();
        let mut want = SymMatrix::zeros(2);
        want.add_outer(&s.x_hat, 1.0);
        want.add_scaled(&sigma_n(&inst.profile, c_s).unwrap(), -1.0);
        assert_eq!(state.a_acc(), &want);
        assert_eq!(state.t(), 1);
    }

    #[test]
    fn kc_updates_commute() {
        let inst = small_instance(0.0);
        let mut rng = episode_rng(3, 0);
        let s1 = sample_round(&inst, 0.2, &mut rng).unwrap();
        let s2 = sample_round(&inst, 0.9, &mut rng).unwrap();
        let mut a = KnownCovState::new(2);
        a.update(0.2, &s1, &inst.profile).unwrap();
        a.update(0.9, &s2, &inst.profile).unwrap();
        let mut b = KnownCovState::new(2);
        b.update(0.9, &s2, &inst.profile).unwrap();
        b.update(0.2, &s1, &inst.profile).unwrap();
        let qa = a
            .quadratic(0.5, inst.lambda, &inst.profile, &test_conf(), false)
            .unwrap();
        let qb = b
            .quadratic(0.5, inst.lambda, &inst.profile, &test_conf(), false)
            .unwrap();
        let nu = [0.3, -0.2];
        let va = qa.eval(&nu).unwrap();
        let vb = qb.eval(&nu).unwrap();
        assert!((va - vb).abs() <= 1e-12 * va.abs().max(1.0));
    }

    #[test]
    fn kc_mean_accumulator_estimates_feature_second_moment() {
        let inst = small_instance(0.0);
        let sigma_x = inst.sigma_x();
        let mut rng = episode_rng(4, 0);
        let mut state = KnownCovState::new(2);
        let t = 10_000usize;
        let mut entry_sq = [0.0; 4];
        for i in 0..t {
            let c_s = (i % 11) as f64 / 10.0;
            let s = sample_round(&inst, c_s, &mut rng).unwrap();
            state.update(c_s, &s, &inst.profile).unwrap();
            let noise = sigma_n(&inst.profile, c_s).unwrap();
            for r in 0..2 {
                for cc in r..2 {
                    let v = s.x_hat[r] * s.x_hat[cc] - noise.get(r, cc);
                    entry_sq[r * 2 + cc] += v * v;
                }
            }
        }
        for r in 0..2 {
            for cc in r..2 {
                let mean = state.a_acc().get(r, cc) / t as f64;
                let want = sigma_x.get(r, cc);
                let var =
                    (entry_sq[r * 2 + cc] / t as f64 - mean * mean).max(0.0);
                let se = (var / t as f64).sqrt();
                assert!(
                    (mean - want).abs() <= 5.0 * se,
                    "entry ({r},{cc}): {mean} vs {want} (se {se})"
                );
            }
        }
    }

    #[test]
    fn kc_quadratic_constant_profile_ignores_query_cost() {
        let inst = Instance::new(
            vec![0.5],
            vec![0.0],
            SymMatrix::diag(&[1.0]),
            CovarianceProfile::Constant {
                sigma: SymMatrix::diag(&[0.3]),
            },
            1.0,
            1.0,
            0.0,
        )
        .unwrap();
        let mut rng = episode_rng(5, 0);
        let mut state = KnownCovState::new(1);
        for _ in 0..20 {
            let s = sample_round(&inst, 0.5, &mut rng).unwrap();
            state.update(0.5, &s, &inst.profile).unwrap();
        }
        let qa = state
            .quadratic(0.1, inst.lambda, &inst.profile, &test_conf(), false)
            .unwrap();
        let qb = state
            .quadratic(0.9, inst.lambda, &inst.profile, &test_conf(), false)
            .unwrap();
        assert_eq!(qa.a_eff, qb.a_eff);
        // At nu = 0 the loss is q_acc + t*lambda*c.
        let v = qa.eval(&[0.0]).unwrap();
        assert!((v - (qa.constant)).abs() < 1e-15);
        assert!((qb.eval(&[0.0]).unwrap() - qa.eval(&[0.0]).unwrap() - 20.0 * 0.8).abs() < 1e-9);
    }

    #[test]
    fn kc_quadratic_matches_literal_sum() {
        let inst = small_instance(0.3);
        let mut rng = episode_rng(6, 0);
        let mut state = KnownCovState::new(2);
        let mut history = Vec::new();
        for i in 0..50 {
            let c_s = ((i * 7) % 11) as f64 / 10.0;
            let s = sample_round(&inst, c_s, &mut rng).unwrap();
            state.update(c_s, &s, &inst.profile).unwrap();
            history.push((c_s, s));
        }
        let conf = test_conf();
        for trial in 0..20 {
            let c = (trial as f64) / 19.0;
            let nu = sample_in_ball(2, 1.0, &mut rng);
            for regularized in [false, true] {
                let quad = state
                    .quadratic(c, inst.lambda, &inst.profile, &conf, regularized)
                    .unwrap();
                let got = quad.eval(&nu).unwrap();
                // Independent evaluation: the literal per-round sum.
                let sig_c = sigma_n(&inst.profile, c).unwrap();
                let mut literal = 0.0;
                for (c_s, s) in &history {
                    let err = linalg::dot(&s.x_hat, &nu) - s.y;
                    let shift = sig_c.sub(&sigma_n(&inst.profile, *c_s).unwrap());
                    literal += err * err
                        + linalg::quad_form(&shift, &nu).unwrap()
                        + inst.lambda * c;
                }
                if regularized {
                    literal += conf.gamma(state.t()) * linalg::dot(&nu, &nu);
                }
                assert!(
                    (got - literal).abs() <= 1e-7 * literal.abs().max(1.0),
                    "c={c}: {got} vs {literal}"
                );
            }
        }
    }

    #[test]
    fn kc_monte_carlo_mean_matches_expected_loss() {
        // Includes output noise: both sides carry the same shift.
        let inst = small_instance(0.4);
        let c = 0.6;
        let nu = [0.4, 0.2];
        let want = expected_loss(&inst, c, &nu).unwrap();
        let histories = 10_000usize;
        let t = 30usize;
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for h in 0..histories {
            let mut rng = episode_rng(900, h as u64);
            let mut state = KnownCovState::new(2);
            for i in 0..t {
                let c_s = (i % 5) as f64 / 4.0;
                let s = sample_round(&inst, c_s, &mut rng).unwrap();
                state.update(c_s, &s, &inst.profile).unwrap();
            }
            let quad = state
                .quadratic(c, inst.lambda, &inst.profile, &test_conf(), false)
                .unwrap();
            let v = quad.eval(&nu).unwrap() / t as f64;
            sum += v;
            sum_sq += v * v;
        }
        let mean = sum / histories as f64;
        let var = (sum_sq / histories as f64 - mean * mean).max(0.0);
        let se = (var / histories as f64).sqrt();
        assert!(
            (mean - want).abs() <= 5.0 * se,
            "mean {mean} vs {want} (se {se})"
        );
    }

    #[test]
    fn regularized_quadratic_is_strictly_convex() {
        let inst = small_instance(0.0);
        let conf = ConfidenceParams::new(2, inst.r_subgauss, inst.s_bound, 0.05).unwrap();
        for h in 0..20 {
            let mut rng = episode_rng(901, h);
            let mut state = KnownCovState::new(2);
            for i in 0..2000 {
                let c_s = (i % 7) as f64 / 6.0;
                let s = sample_round(&inst, c_s, &mut rng).unwrap();
                state.update(c_s, &s, &inst.profile).unwrap();
            }
            for c in [0.0, 0.5, 1.0] {
                let quad = state
                    .quadratic(c, inst.lambda, &inst.profile, &conf, true)
                    .unwrap();
                assert!(quad.a_eff.min_eigenvalue().unwrap() > 0.0);
            }
        }
    }

    #[test]
    fn uc_update_touches_one_arm() {
        let inst = small_instance(0.0);
        let mut rng = episode_rng(7, 0);
        let mut state = UnknownCovState::with_grid(2, 4);
        let s = sample_round(&inst, 0.5, &mut rng).unwrap();
        state.update(2, &s).unwrap();
        assert_eq!(state.visits(2).unwrap(), 1);
        assert_eq!(state.visits(1).unwrap(), 0);
        assert_eq!(state.t(), 1);
        assert!(state.update(0, &s).is_err());
        assert!(state.update(5, &s).is_err());
    }

    #[test]
    fn uc_zero_predictor_loss_is_payments_plus_outputs() {
        let inst = small_instance(0.0);
        let mut rng = episode_rng(8, 0);
        let mut state = UnknownCovState::with_grid(2, 4);
        let k = 3usize;
        let c_k = state.arm_cost(k).unwrap();
        let mut q_sum = 0.0;
        let m = 9usize;
        for _ in 0..m {
            let s = sample_round(&inst, c_k, &mut rng).unwrap();
            q_sum += s.y * s.y;
            state.update(k, &s).unwrap();
        }
        let quad = state.quadratic(k, inst.lambda).unwrap();
        let v = quad.eval(&[0.0, 0.0]).unwrap();
        let want = q_sum + m as f64 * inst.lambda * c_k;
        assert!((v - want).abs() <= 1e-12 * want.abs().max(1.0));
    }

    #[test]
    fn single_cost_history_makes_estimators_identical() {
        let inst = small_instance(0.2);
        let grid = 5usize;
        let k = 4usize;
        let c = k as f64 / grid as f64;
        let mut rng = episode_rng(9, 0);
        let mut kc = KnownCovState::new(2);
        let mut uc = UnknownCovState::with_grid(2, grid);
        for _ in 0..200 {
            let s = sample_round(&inst, c, &mut rng).unwrap();
            kc.update(c, &s, &inst.profile).unwrap();
            uc.update(k, &s).unwrap();
        }
        let qk = kc
            .quadratic(c, inst.lambda, &inst.profile, &test_conf(), false)
            .unwrap();
        let qu = uc.quadratic(k, inst.lambda).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let a = qk.a_eff.get(i, j);
                let b = qu.a_eff.get(i, j);
                assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0), "({i},{j})");
            }
        }
        for (a, b) in qk.b.iter().zip(qu.b.iter()) {
            assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
        }
        assert!((qk.constant - qu.constant).abs() <= 1e-9 * qk.constant.abs().max(1.0));
    }

    #[test]
    fn ucb_prefers_less_visited_arm() {
        // Identical (empty) accumulators at the same cost, unequal visit
        // counts: the bonus alone orders the indices.
        let conf = ConfidenceParams::new(2, 1.0, 1.0, 0.1).unwrap();
        let mut state = UnknownCovState::with_grid(2, 2);
        state.arms[0].cost = 0.5;
        state.arms[1].cost = 0.5;
        state.arms[0].visits = 1;
        state.arms[1].visits = 4;
        let i1 = state.ucb_index(1, 0.5, &conf, 10).unwrap();
        let i2 = state.ucb_index(2, 0.5, &conf, 10).unwrap();
        assert!(i1 < i2, "i1={i1}, i2={i2}");
        // Shrinking a visit count strictly lowers that arm's index.
        state.arms[1].visits = 2;
        let i2_less = state.ucb_index(2, 0.5, &conf, 10).unwrap();
        assert!(i2_less < i2);
    }

    #[test]
    fn ucb_without_norm_bound_is_mean_loss() {
        let inst = small_instance(0.0);
        let mut rng = episode_rng(10, 0);
        let mut state = UnknownCovState::with_grid(2, 2);
        for _ in 0..3 {
            let s = sample_round(&inst, 1.0, &mut rng).unwrap();
            state.update(2, &s).unwrap();
        }
        let conf0 = ConfidenceParams::new(2, 1.0, 0.0, 0.1).unwrap();
        let quad = state.quadratic(2, inst.lambda).unwrap();
        let mean = quad.eval(&[0.0, 0.0]).unwrap() / 3.0;
        let idx = state.ucb_index(2, inst.lambda, &conf0, 10).unwrap();
        assert!((idx - mean).abs() <= 1e-9 * mean.abs().max(1.0));
    }

    #[test]
    fn ucb_bonus_halves_when_visits_quadruple() {
        let conf = ConfidenceParams::new(2, 1.0, 1.0, 0.1).unwrap();
        let t = 100;
        let b1 = conf.uc_bonus(t, 1);
        let b4 = conf.uc_bonus(t, 4);
        let b16 = conf.uc_bonus(t, 16);
        assert_eq!(b4 / b1, 0.5);
        assert_eq!(b16 / b4, 0.5);
    }

    #[test]
    fn ucb_requires_initialization() {
        let state = UnknownCovState::with_grid(2, 3);
        let conf = ConfidenceParams::new(2, 1.0, 1.0, 0.1).unwrap();
        assert!(matches!(
            state.ucb_index(1, 0.5, &conf, 5),
            Err(EstimatorError::EmptyArm { k: 1 })
        ));
    }

    #[test]
    fn state_serde_roundtrip() {
        let inst = small_instance(0.0);
        let mut rng = episode_rng(11, 0);
        let mut kc = KnownCovState::new(2);
        let s = sample_round(&inst, 0.3, &mut rng).unwrap();
        kc.update(0.3, &s, &inst.profile).unwrap();
        let json = serde_json::to_string(&kc).unwrap();
        let back: KnownCovState = serde_json::from_str(&json).unwrap();
        assert_eq!(back.t(), 1);
        assert_eq!(back.a_acc(), kc.a_acc());
    }
}
