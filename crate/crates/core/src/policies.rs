//! The two learning policies and their parameter schedules.
//!
//! Known covariances: every round, minimize the shared-sample loss over the
//! S-ball at each grid cost and play the greedy argmin. Unknown covariances:
//! play each grid cost once, then follow the optimistic index.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::environment::{CovarianceProfile, EnvError, Instance, RoundSample};
use crate::estimators::{
    ConfidenceParams, EstimatorError, KnownCovState, UnknownCovState,
};
use crate::linalg::LinalgError;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("ball solver failed on arm {arm}: {source}")]
    Solver {
        arm: usize,
        #[source]
        source: LinalgError,
    },
    #[error("bad policy config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Env(#[from] EnvError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PolicyKind {
    KnownCov,
    UnknownCov,
}

/// Schedule for the greedy policy: `δ = 1/T` (clamped below 1) and
/// `K = ⌈λT⌉`.
pub fn alg1_params(t_horizon: usize, lambda: f64) -> (f64, usize) {
    let delta = (1.0 / t_horizon as f64).min(0.999);
    let k = (lambda * t_horizon as f64).ceil() as usize;
    (delta, k.max(1))
}

/// Schedule for the optimistic policy:
/// `K = ⌈T^{1/3} λ^{2/3} / (S²(R²d + S²))^{2/3}⌉` and `δ = 1/(KT)`.
pub fn alg2_params(t_horizon: usize, lambda: f64, s: f64, r: f64, d: usize) -> (f64, usize) {
    let s2 = s * s;
    let scale = (s2 * (r * r * d as f64 + s2)).powf(2.0 / 3.0);
    let k = ((t_horizon as f64).powf(1.0 / 3.0) * lambda.powf(2.0 / 3.0) / scale).ceil() as usize;
    let k = k.max(1);
    let delta = (1.0 / (k as f64 * t_horizon as f64)).min(0.999);
    (delta, k)
}

/// Resolved policy parameters for one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub kind: PolicyKind,
    pub horizon: usize,
    pub grid_size: usize,
    pub delta: f64,
    pub k_overridden: bool,
    pub delta_overridden: bool,
    /// Known-covariance policy only: add the `γ_t‖ν‖²` term before
    /// minimizing. Off by default; the ball solver handles the unregularized
    /// (possibly indefinite) objective exactly.
    pub regularized: bool,
    /// Unknown-covariance policy only: prepend a zero-cost arm to the grid.
    pub include_zero_cost: bool,
    pub solver_tol: f64,
    pub lambda: f64,
    pub s_bound: f64,
    pub r_subgauss: f64,
    pub d: usize,
}

impl PolicyConfig {
    /// Applies the default schedule for `kind` at horizon `t_horizon`.
    pub fn from_schedule(kind: PolicyKind, t_horizon: usize, instance: &Instance) -> Self {
        let t = t_horizon.max(1);
        let (delta, grid_size) = match kind {
            PolicyKind::KnownCov => alg1_params(t, instance.lambda),
            PolicyKind::UnknownCov => alg2_params(
                t,
                instance.lambda,
                instance.s_bound,
                instance.r_subgauss,
                instance.d,
            ),
        };
        PolicyConfig {
            kind,
            horizon: t_horizon,
            grid_size,
            delta,
            k_overridden: false,
            delta_overridden: false,
            regularized: false,
            include_zero_cost: false,
            solver_tol: 1e-10,
            lambda: instance.lambda,
            s_bound: instance.s_bound,
            r_subgauss: instance.r_subgauss,
            d: instance.d,
        }
    }

    pub fn with_grid_size(mut self, k: usize) -> Self {
        self.grid_size = k.max(1);
        self.k_overridden = true;
        self
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self.delta_overridden = true;
        self
    }

    pub fn confidence(&self) -> Result<ConfidenceParams, EstimatorError> {
        ConfidenceParams::new(self.d, self.r_subgauss, self.s_bound, self.delta)
    }
}

/// One round's choice: the grid arm, its cost, the predictor, and the
/// per-arm objective values used to pick it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolicyDecision {
    pub arm: usize,
    pub cost: f64,
    pub predictor: Vec<f64>,
    pub objectives: Vec<f64>,
}

/// Greedy step over the grid `{k/K}`: minimize the (optionally regularized)
/// shared-sample quadratic on the S-ball at each cost and take the smallest
/// objective, breaking ties toward the smallest arm.
pub fn alg1_step(
    state: &KnownCovState,
    conf: &ConfidenceParams,
    profile: &CovarianceProfile,
    lambda: f64,
    grid_size: usize,
    regularized: bool,
    solver_tol: f64,
) -> Result<PolicyDecision, PolicyError> {
    let d = profile.dim();
    if state.t() == 0 {
        // Empty history: every arm ties at zero loss.
        return Ok(PolicyDecision {
            arm: 1,
            cost: 1.0 / grid_size as f64,
            predictor: vec![0.0; d],
            objectives: vec![0.0; grid_size],
        });
    }
    let mut best: Option<(usize, f64, Vec<f64>)> = None;
    let mut objectives = Vec::with_capacity(grid_size);
    for k in 1..=grid_size {
        let c = k as f64 / grid_size as f64;
        let quad = state.quadratic(c, lambda, profile, conf, regularized)?;
        let nu = quad
            .minimize_on_ball(conf.s.max(f64::MIN_POSITIVE), solver_tol)
            .map_err(|source| PolicyError::Solver { arm: k, source })?;
        let obj = quad.eval(&nu).map_err(|source| PolicyError::Solver { arm: k, source })?;
        objectives.push(obj);
        if best.as_ref().is_none_or(|(_, b, _)| obj < *b) {
            best = Some((k, obj, nu));
        }
    }
    let (arm, _, predictor) = best.expect("grid_size >= 1");
    Ok(PolicyDecision {
        arm,
        cost: arm as f64 / grid_size as f64,
        predictor,
        objectives,
    })
}

/// Optimistic step: forced round-robin through rounds `1..=K`, then the
/// minimal index, ties toward the smallest arm.
pub fn alg2_step(
    state: &UnknownCovState,
    conf: &ConfidenceParams,
    lambda: f64,
    t: usize,
    solver_tol: f64,
) -> Result<PolicyDecision, PolicyError> {
    let num_arms = state.num_arms();
    if t == 0 {
        return Err(PolicyError::BadConfig("rounds are 1-based".into()));
    }
    if t <= num_arms {
        let cost = state.arm_cost(t)?;
        return Ok(PolicyDecision {
            arm: t,
            cost,
            predictor: vec![0.0; conf.d],
            objectives: vec![0.0; num_arms],
        });
    }
    let mut best: Option<(usize, f64)> = None;
    let mut objectives = Vec::with_capacity(num_arms);
    for k in 1..=num_arms {
        let idx = state.ucb_index(k, lambda, conf, t)?;
        objectives.push(idx);
        if best.as_ref().is_none_or(|(_, b)| idx < *b) {
            best = Some((k, idx));
        }
    }
    let (arm, _) = best.expect("num_arms >= 1");
    let quad = state.quadratic(arm, lambda)?;
    let predictor = quad
        .minimize_on_ball(conf.s.max(f64::MIN_POSITIVE), solver_tol)
        .map_err(|source| PolicyError::Solver { arm, source })?;
    Ok(PolicyDecision {
        arm,
        cost: state.arm_cost(arm)?,
        predictor,
        objectives,
    })
}

/// Single-owner policy state for one episode.
#[derive(Debug, Clone)]
pub enum Policy {
    Known {
        state: KnownCovState,
        conf: ConfidenceParams,
        profile: CovarianceProfile,
        cfg: PolicyConfig,
    },
    Unknown {
        state: UnknownCovState,
        conf: ConfidenceParams,
        cfg: PolicyConfig,
    },
}

impl Policy {
    pub fn new(cfg: &PolicyConfig, instance: &Instance) -> Result<Self, PolicyError> {
        let conf = cfg.confidence()?;
        Ok(match cfg.kind {
            PolicyKind::KnownCov => Policy::Known {
                state: KnownCovState::new(instance.d),
                conf,
                profile: instance.profile.clone(),
                cfg: cfg.clone(),
            },
            PolicyKind::UnknownCov => {
                let mut costs: Vec<f64> = (1..=cfg.grid_size)
                    .map(|k| k as f64 / cfg.grid_size as f64)
                    .collect();
                if cfg.include_zero_cost {
                    costs.insert(0, 0.0);
                }
                Policy::Unknown {
                    state: UnknownCovState::with_costs(instance.d, costs),
                    conf,
                    cfg: cfg.clone(),
                }
            }
        })
    }

    /// Decision for round `t` (1-based), before observing that round.
    pub fn decide(&self, t: usize) -> Result<PolicyDecision, PolicyError> {
        match self {
            Policy::Known {
                state,
                conf,
                profile,
                cfg,
            } => alg1_step(
                state,
                conf,
                profile,
                cfg.lambda,
                cfg.grid_size,
                cfg.regularized,
                cfg.solver_tol,
            ),
            Policy::Unknown { state, conf, cfg } => {
                alg2_step(state, conf, cfg.lambda, t, cfg.solver_tol)
            }
        }
    }

    /// Folds the revealed sample into the estimator.
    pub fn observe(
        &mut self,
        decision: &PolicyDecision,
        sample: &RoundSample,
    ) -> Result<(), PolicyError> {
        match self {
            Policy::Known { state, profile, .. } => {
                state.update(decision.cost, sample, profile)?;
            }
            Policy::Unknown { state, .. } => {
                state.update(decision.arm, sample)?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{make_lower_bound_unknown, sample_round};
    use crate::rng::episode_rng;

    #[test]
    fn alg1_schedule_values() {
        assert_eq!(alg1_params(100, 0.5), (0.01, 50));
        let (delta, k) = alg1_params(1, 0.1);
        assert_eq!(delta, 0.999);
        assert_eq!(k, 1);
        assert_eq!(alg1_params(10_000, 1.0), (1e-4, 10_000));
    }

    #[test]
    fn alg2_schedule_values() {
        let (delta, k) = alg2_params(1000, 1.0, 1.0, 1.0, 1);
        assert_eq!(k, 7);
        assert!((delta - 1.0 / 7000.0).abs() < 1e-18);
        let (_, k_tiny) = alg2_params(1000, 1e-9, 1.0, 1.0, 1);
        assert_eq!(k_tiny, 1);
    }

    #[test]
    fn alg2_grid_grows_like_cube_root() {
        for t in [1_000usize, 10_000, 100_000, 1_000_000] {
            let (_, k1) = alg2_params(t, 1.0, 1.0, 1.0, 1);
            let (_, k8) = alg2_params(8 * t, 1.0, 1.0, 1.0, 1);
            let ratio = k8 as f64 / k1 as f64;
            assert!((1.8..=2.2).contains(&ratio), "T={t}: ratio {ratio}");
        }
    }

    #[test]
    fn alg1_empty_state_ties_to_first_arm() {
        let (base, _) = make_lower_bound_unknown(2).unwrap();
        let cfg = PolicyConfig::from_schedule(PolicyKind::KnownCov, 16, &base).with_grid_size(5);
        let policy = Policy::new(&cfg, &base).unwrap();
        let d = policy.decide(1).unwrap();
        assert_eq!(d.arm, 1);
        assert_eq!(d.predictor, vec![0.0]);
        assert!(d.objectives.iter().all(|&o| o == 0.0));
    }

    #[test]
    fn alg2_initialization_phase() {
        let (base, _) = make_lower_bound_unknown(2).unwrap();
        let cfg =
            PolicyConfig::from_schedule(PolicyKind::UnknownCov, 100, &base).with_grid_size(5);
        let mut policy = Policy::new(&cfg, &base).unwrap();
        let mut rng = episode_rng(1, 0);
        for t in 1..=5 {
            let d = policy.decide(t).unwrap();
            assert_eq!(d.arm, t);
            assert!((d.cost - t as f64 / 5.0).abs() < 1e-15);
            assert_eq!(d.predictor, vec![0.0]);
            let s = sample_round(&base, d.cost, &mut rng).unwrap();
            policy.observe(&d, &s).unwrap();
        }
        // After initialization every arm has one visit.
        if let Policy::Unknown { state, .. } = &policy {
            for k in 1..=5 {
                assert_eq!(state.visits(k).unwrap(), 1);
            }
        } else {
            panic!("wrong policy variant");
        }
        // Round 6 is free to pick any arm via the index.
        let d = policy.decide(6).unwrap();
        assert!(d.arm >= 1 && d.arm <= 5);
        assert_eq!(d.objectives.len(), 5);
    }

    #[test]
    fn alg2_identical_arms_tie_to_first() {
        let (base, _) = make_lower_bound_unknown(2).unwrap();
        let cfg =
            PolicyConfig::from_schedule(PolicyKind::UnknownCov, 100, &base).with_grid_size(3);
        let conf = cfg.confidence().unwrap();
        // Empty accumulators with forced equal visits at equal costs.
        let mut state = UnknownCovState::with_costs(1, vec![0.4, 0.4, 0.4]);
        let mut rng = episode_rng(2, 0);
        let s = sample_round(&base, 0.4, &mut rng).unwrap();
        for k in 1..=3 {
            state.update(k, &s).unwrap();
        }
        let d = alg2_step(&state, &conf, base.lambda, 4, 1e-10).unwrap();
        assert_eq!(d.arm, 1);
    }

    #[test]
    fn decisions_stay_on_grid_and_in_ball() {
        let (base, perturbed) = make_lower_bound_unknown(4).unwrap();
        let inst = &perturbed[1];
        for kind in [PolicyKind::KnownCov, PolicyKind::UnknownCov] {
            let cfg = PolicyConfig::from_schedule(kind, 64, inst).with_grid_size(8);
            let mut policy = Policy::new(&cfg, inst).unwrap();
            let mut rng = episode_rng(5, 1);
            for t in 1..=64 {
                let d = policy.decide(t).unwrap();
                let on_grid = (1..=8).any(|k| (d.cost - k as f64 / 8.0).abs() < 1e-15);
                assert!(on_grid, "cost {} off grid", d.cost);
                let nn = crate::linalg::norm(&d.predictor);
                assert!(nn <= inst.s_bound + 1e-8, "norm {nn}");
                let s = sample_round(inst, d.cost, &mut rng).unwrap();
                policy.observe(&d, &s).unwrap();
            }
        }
        drop(base);
    }

    #[test]
    fn zero_cost_arm_flag_prepends_arm() {
        let (base, _) = make_lower_bound_unknown(2).unwrap();
        let mut cfg =
            PolicyConfig::from_schedule(PolicyKind::UnknownCov, 32, &base).with_grid_size(4);
        cfg.include_zero_cost = true;
        let policy = Policy::new(&cfg, &base).unwrap();
        let d = policy.decide(1).unwrap();
        assert_eq!(d.arm, 1);
        assert_eq!(d.cost, 0.0);
    }
}
