//! Episode execution, regret scoring, multi-seed sweeps and rate fitting.
//!
//! Regret is scored in expectation: each round's `ℓ(c_t, ν_t)` comes from
//! the oracle, and the benchmark `ℓ*` is the grid minimum of the instance's
//! loss landscape (with its `λ/M` discretization slack reported alongside).
//! Realized losses are logged as well, but only to check consistency.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use thiserror::Error;

use crate::environment::{sample_round, EnvError, Instance};
use crate::linalg;
use crate::oracle::{self, LossLandscape, OracleError};
use crate::policies::{Policy, PolicyConfig, PolicyError, PolicyKind};
use crate::rng::episode_rng;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("episode aborted at round {round}: {message}")]
    Aborted {
        round: usize,
        message: String,
        partial: Box<RunLog>,
    },
    #[error("landscape was computed for instance {landscape} but the log is for {log}")]
    InstanceMismatch { landscape: String, log: String },
    #[error("rate fit requires >= 3 positive points, got {0}")]
    TooFewPoints(usize),
    #[error("sweep needs at least one {0}")]
    EmptySweepAxis(&'static str),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Env(#[from] EnvError),
}

/// Per-round record of one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub t: usize,
    pub arm: usize,
    pub cost: f64,
    pub predictor: Vec<f64>,
    pub realized_sq_err: f64,
    pub realized_loss: f64,
    pub expected_loss: f64,
    pub regret_cum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub instance_id: String,
    pub seed: u64,
    pub horizon: usize,
    pub ell_star: f64,
    pub oracle_slack: f64,
    pub final_regret: f64,
    pub mean_round_regret: f64,
    pub policy: PolicyConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub summary: RunSummary,
    pub records: Vec<RoundRecord>,
}

impl RunLog {
    /// CSV with columns `t,k,cost,loss_expected,loss_realized,regret_cum`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,k,cost,loss_expected,loss_realized,regret_cum\n");
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.t, r.arm, r.cost, r.expected_loss, r.realized_loss, r.regret_cum
            );
        }
        out
    }
}

/// Runs one episode of `cfg.horizon` rounds against `instance`, scoring
/// regret with the supplied landscape. Decision, sampling, prediction and
/// estimator update follow the round protocol exactly; identical
/// `(instance, cfg, seed)` reproduce the log bitwise.
pub fn run_episode(
    instance: &Instance,
    cfg: &PolicyConfig,
    landscape: &LossLandscape,
    seed: u64,
) -> Result<RunLog, HarnessError> {
    let instance_id = instance.fingerprint();
    if landscape.instance_id != instance_id {
        return Err(HarnessError::InstanceMismatch {
            landscape: landscape.instance_id.clone(),
            log: instance_id,
        });
    }
    let mut policy = Policy::new(cfg, instance)?;
    let mut rng = episode_rng(seed, 0);
    let mut records: Vec<RoundRecord> = Vec::with_capacity(cfg.horizon);
    let mut regret_cum = 0.0;
    let make_log = |records: Vec<RoundRecord>, regret_cum: f64| -> RunLog {
        let horizon = records.len();
        RunLog {
            summary: RunSummary {
                instance_id: instance_id.clone(),
                seed,
                horizon,
                ell_star: landscape.ell_star,
                oracle_slack: landscape.slack,
                final_regret: regret_cum,
                mean_round_regret: if horizon > 0 {
                    regret_cum / horizon as f64
                } else {
                    0.0
                },
                policy: cfg.clone(),
            },
            records,
        }
    };

    for t in 1..=cfg.horizon {
        let step = (|| -> Result<RoundRecord, HarnessError> {
            let decision = policy.decide(t)?;
            let sample = sample_round(instance, decision.cost, &mut rng)?;
            let prediction = linalg::dot(&sample.x_hat, &decision.predictor);
            let sq_err = (prediction - sample.y) * (prediction - sample.y);
            let realized_loss = sq_err + instance.lambda * decision.cost;
            let expected_loss = oracle::expected_loss(instance, decision.cost, &decision.predictor)?;
            policy.observe(&decision, &sample)?;
            Ok(RoundRecord {
                t,
                arm: decision.arm,
                cost: decision.cost,
                predictor: decision.predictor,
                realized_sq_err: sq_err,
                realized_loss,
                expected_loss,
                regret_cum: 0.0, // filled below
            })
        })();
        match step {
            Ok(mut rec) => {
                regret_cum += rec.expected_loss - landscape.ell_star;
                rec.regret_cum = regret_cum;
                records.push(rec);
            }
            Err(e) => {
                let partial = make_log(records, regret_cum);
                return Err(HarnessError::Aborted {
                    round: t,
                    message: e.to_string(),
                    partial: Box::new(partial),
                });
            }
        }
    }
    Ok(make_log(records, regret_cum))
}

/// Total expected regret of a log against the landscape's benchmark,
/// recomputed from the per-round expected losses.
pub fn expected_regret(log: &RunLog, landscape: &LossLandscape) -> Result<f64, HarnessError> {
    if log.summary.instance_id != landscape.instance_id {
        return Err(HarnessError::InstanceMismatch {
            landscape: landscape.instance_id.clone(),
            log: log.summary.instance_id.clone(),
        });
    }
    let total: f64 = log.records.iter().map(|r| r.expected_loss).sum();
    Ok(total - log.records.len() as f64 * landscape.ell_star)
}

/// Sweep configuration: the policy variant plus the grids to run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepConfig {
    pub kind: PolicyKind,
    pub horizons: Vec<usize>,
    pub seeds: Vec<u64>,
    pub oracle_m: usize,
    pub grid_override: Option<usize>,
    pub delta_override: Option<f64>,
    pub regularized: bool,
}

impl SweepConfig {
    pub fn new(kind: PolicyKind, horizons: Vec<usize>, seeds: Vec<u64>) -> Self {
        SweepConfig {
            kind,
            horizons,
            seeds,
            oracle_m: 10_000,
            grid_override: None,
            delta_override: None,
            regularized: false,
        }
    }

    pub fn policy_config(&self, t_horizon: usize, instance: &Instance) -> PolicyConfig {
        let mut cfg = PolicyConfig::from_schedule(self.kind, t_horizon, instance);
        if let Some(k) = self.grid_override {
            cfg = cfg.with_grid_size(k);
        }
        if let Some(d) = self.delta_override {
            cfg = cfg.with_delta(d);
        }
        cfg.regularized = self.regularized;
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub instance_id: String,
    pub horizon: usize,
    pub seed: u64,
    pub regret: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub instance_id: String,
    pub horizon: usize,
    pub mean: f64,
    pub stderr: f64,
    pub n_seeds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub stderr: f64,
    pub n_points: usize,
    pub dropped_nonpositive: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepFailure {
    pub instance_id: String,
    pub horizon: usize,
    pub seed: u64,
    pub message: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
    pub per_horizon: Vec<SweepEntry>,
    /// One `(instance_id, fit)` pair per instance with >= 3 positive means.
    pub fits: Vec<(String, RateFit)>,
    pub failures: Vec<SweepFailure>,
}

impl SweepResult {
    /// CSV rows `T,mean,stderr,n_seeds` for one instance.
    pub fn to_csv(&self, instance_id: &str) -> String {
        let mut out = String::from("T,mean,stderr,n_seeds\n");
        for e in self
            .per_horizon
            .iter()
            .filter(|e| e.instance_id == instance_id)
        {
            let _ = writeln!(out, "{},{},{},{}", e.horizon, e.mean, e.stderr, e.n_seeds);
        }
        out
    }

    pub fn fit_for(&self, instance_id: &str) -> Option<&RateFit> {
        self.fits
            .iter()
            .find(|(id, _)| id == instance_id)
            .map(|(_, f)| f)
    }
}

/// Runs every `(instance, horizon, seed)` combination in parallel,
/// aggregates per-horizon means and fits the log-log rate per instance.
/// Individual episode failures are recorded, not fatal.
pub fn sweep(instances: &[Instance], cfg: &SweepConfig) -> Result<SweepResult, HarnessError> {
    if instances.is_empty() {
        return Err(HarnessError::EmptySweepAxis("instance"));
    }
    if cfg.horizons.is_empty() {
        return Err(HarnessError::EmptySweepAxis("horizon"));
    }
    if cfg.seeds.is_empty() {
        return Err(HarnessError::EmptySweepAxis("seed"));
    }
    let landscapes: Vec<LossLandscape> = instances
        .iter()
        .map(|inst| oracle::loss_landscape(inst, cfg.oracle_m))
        .collect::<Result<_, _>>()?;

    let mut jobs = Vec::new();
    for (ii, inst) in instances.iter().enumerate() {
        for &t in &cfg.horizons {
            for &seed in &cfg.seeds {
                jobs.push((ii, t, seed, inst));
            }
        }
    }
    let outcomes: Vec<Result<SweepPoint, SweepFailure>> = jobs
        .par_iter()
        .map(|&(ii, t, seed, inst)| {
            let pc = cfg.policy_config(t, inst);
            match run_episode(inst, &pc, &landscapes[ii], seed) {
                Ok(log) => Ok(SweepPoint {
                    instance_id: log.summary.instance_id.clone(),
                    horizon: t,
                    seed,
                    regret: log.summary.final_regret,
                }),
                Err(e) => Err(SweepFailure {
                    instance_id: inst.fingerprint(),
                    horizon: t,
                    seed,
                    message: e.to_string(),
                }),
            }
        })
        .collect();

    let mut points = Vec::new();
    let mut failures = Vec::new();
    for o in outcomes {
        match o {
            Ok(p) => points.push(p),
            Err(f) => failures.push(f),
        }
    }
    points.sort_by(|a, b| {
        (&a.instance_id, a.horizon, a.seed).cmp(&(&b.instance_id, b.horizon, b.seed))
    });

    let mut per_horizon: Vec<SweepEntry> = Vec::new();
    for p in &points {
        match per_horizon
            .iter_mut()
            .find(|e| e.instance_id == p.instance_id && e.horizon == p.horizon)
        {
            Some(e) => {
                // First pass accumulates sums; finalized below.
                e.mean += p.regret;
                e.n_seeds += 1;
            }
            None => per_horizon.push(SweepEntry {
                instance_id: p.instance_id.clone(),
                horizon: p.horizon,
                mean: p.regret,
                stderr: 0.0,
                n_seeds: 1,
            }),
        }
    }
    for e in &mut per_horizon {
        e.mean /= e.n_seeds as f64;
    }
    for e in &mut per_horizon {
        if e.n_seeds > 1 {
            let ss: f64 = points
                .iter()
                .filter(|p| p.instance_id == e.instance_id && p.horizon == e.horizon)
                .map(|p| (p.regret - e.mean) * (p.regret - e.mean))
                .sum();
            e.stderr = (ss / (e.n_seeds as f64 - 1.0) / e.n_seeds as f64).sqrt();
        }
    }

    let mut ids: Vec<String> = Vec::new();
    for e in &per_horizon {
        if !ids.contains(&e.instance_id) {
            ids.push(e.instance_id.clone());
        }
    }
    let mut fits = Vec::new();
    for id in ids {
        let pts: Vec<(f64, f64)> = per_horizon
            .iter()
            .filter(|e| e.instance_id == id)
            .map(|e| (e.horizon as f64, e.mean))
            .collect();
        if let Ok(fit) = fit_rate(&pts) {
            fits.push((id, fit));
        }
    }
    Ok(SweepResult {
        points,
        per_horizon,
        fits,
        failures,
    })
}

/// Most frequent cost over the final quarter of a log's rounds (ties go to
/// the smaller cost). `None` for empty logs.
pub fn modal_final_quarter_cost(log: &RunLog) -> Option<f64> {
    if log.records.is_empty() {
        return None;
    }
    let start = log.records.len() - (log.records.len() / 4).max(1);
    let mut costs: Vec<f64> = log.records[start..].iter().map(|r| r.cost).collect();
    costs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut best = (costs[0], 0usize);
    let mut i = 0;
    while i < costs.len() {
        let mut j = i;
        while j < costs.len() && costs[j] == costs[i] {
            j += 1;
        }
        if j - i > best.1 {
            best = (costs[i], j - i);
        }
        i = j;
    }
    Some(best.0)
}

/// Ordinary least squares on `(ln T, ln regret)`. Nonpositive regret values
/// are dropped (they have no log); fewer than 3 surviving points is an error.
pub fn fit_rate(points: &[(f64, f64)]) -> Result<RateFit, HarnessError> {
    let usable: Vec<(f64, f64)> = points
        .iter()
        .filter(|(t, r)| *t > 0.0 && *r > 0.0)
        .map(|(t, r)| (t.ln(), r.ln()))
        .collect();
    let dropped = points.len() - usable.len();
    if usable.len() < 3 {
        return Err(HarnessError::TooFewPoints(usable.len()));
    }
    let n = usable.len() as f64;
    let mean_x = usable.iter().map(|(x, _)| x).sum::<f64>() / n;
    let mean_y = usable.iter().map(|(_, y)| y).sum::<f64>() / n;
    let sxx: f64 = usable.iter().map(|(x, _)| (x - mean_x) * (x - mean_x)).sum();
    let sxy: f64 = usable
        .iter()
        .map(|(x, y)| (x - mean_x) * (y - mean_y))
        .sum();
    if sxx <= 0.0 {
        return Err(HarnessError::TooFewPoints(1));
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let rss: f64 = usable
        .iter()
        .map(|(x, y)| {
            let e = y - (intercept + slope * x);
            e * e
        })
        .sum();
    let stderr = if usable.len() > 2 {
        (rss / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok(RateFit {
        slope,
        stderr,
        n_points: usable.len(),
        dropped_nonpositive: dropped,
    })
}
