//! Command-line harness: single episodes, sweeps with rate fits, instance
//! validation, concentration experiments, and the hard-instance suites.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or validation error.

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use paidreg::concentration::{mc_loss_uniform, mc_matrix_concentration};
use paidreg::environment::{
    f_ratio, kl_gaussian, make_lower_bound_known, make_lower_bound_unknown, modified_interval,
    perturbed_f_ratio, validate_profile, CovarianceProfile, Instance, InstanceRaw,
};
use paidreg::harness::{modal_final_quarter_cost, run_episode, sweep, SweepConfig};
use paidreg::linalg::norm;
use paidreg::oracle::loss_landscape;
use paidreg::policies::{PolicyConfig, PolicyKind};

mod config;
use config::ExperimentConfig;

#[derive(Parser)]
#[command(
    name = "paidreg",
    about = "Online linear regression with paid (noise-reducible) features",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one episode and write its per-round log plus a JSON summary.
    Run(RunArgs),
    /// Run a horizon x seed sweep; optionally fit the log-log regret rate.
    Sweep(SweepArgs),
    /// Check an instance file against the environment contracts.
    Validate(ValidateArgs),
    /// Monte-Carlo validation of the concentration bounds.
    Concentration(ConcentrationArgs),
    /// Run the hard-instance suites with the matching policy.
    LowerBound(LowerBoundArgs),
}

#[derive(Args)]
struct CommonIo {
    /// Output directory (default: $PAIDREG_OUT or ./out).
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

impl CommonIo {
    fn dir(&self) -> PathBuf {
        self.out_dir.clone().unwrap_or_else(|| {
            std::env::var_os("PAIDREG_OUT")
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from("out"))
        })
    }
}

#[derive(Args)]
struct RunArgs {
    /// Instance JSON file.
    #[arg(long)]
    instance: Option<PathBuf>,
    /// Experiment config JSON (flags override file values).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Policy variant: known | unknown.
    #[arg(long)]
    policy: Option<String>,
    #[arg(long = "T")]
    horizon: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Cost-grid size override (defaults to the schedule value).
    #[arg(long = "K")]
    grid: Option<usize>,
    /// Confidence override (defaults to the schedule value).
    #[arg(long)]
    delta: Option<f64>,
    /// Add the gamma_t regularizer to the known-covariance objective.
    #[arg(long)]
    regularized: bool,
    /// Oracle grid resolution for the regret benchmark.
    #[arg(long)]
    oracle_m: Option<usize>,
    #[command(flatten)]
    io: CommonIo,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    instance: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    policy: Option<String>,
    /// Comma-separated horizons, e.g. 1024,2048,4096.
    #[arg(long, value_delimiter = ',')]
    horizons: Vec<usize>,
    /// Number of seeds (0..n-1).
    #[arg(long)]
    seeds: Option<usize>,
    /// Fit the log-log rate (requires >= 3 horizons).
    #[arg(long)]
    fit: bool,
    #[arg(long = "K")]
    grid: Option<usize>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    regularized: bool,
    #[arg(long)]
    oracle_m: Option<usize>,
    #[command(flatten)]
    io: CommonIo,
}

#[derive(Args)]
struct ValidateArgs {
    /// Instance JSON file.
    instance: PathBuf,
    /// Validation grid size.
    #[arg(long, default_value_t = 512)]
    grid: usize,
}

#[derive(Args)]
struct ConcentrationArgs {
    /// Which experiment: matrix | loss | both.
    #[arg(long, default_value = "both")]
    which: String,
    #[arg(long, default_value_t = 1)]
    d: usize,
    #[arg(long, default_value_t = 1.0)]
    r: f64,
    #[arg(long, default_value_t = 10_000)]
    t_max: usize,
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    #[arg(long, default_value_t = 100)]
    probes: usize,
    #[arg(long, default_value_t = 8)]
    grid_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Instance for the loss experiment (defaults to the flat baseline).
    #[arg(long)]
    instance: Option<PathBuf>,
    #[command(flatten)]
    io: CommonIo,
}

#[derive(Args)]
struct LowerBoundArgs {
    #[command(subcommand)]
    suite: LowerBoundSuite,
}

#[derive(Subcommand)]
enum LowerBoundSuite {
    /// Two-point family (step noise profile), run with the known-covariance
    /// policy.
    Known(LbKnownArgs),
    /// Perturbed smooth family, run with the unknown-covariance policy.
    Unknown(LbUnknownArgs),
}

#[derive(Args)]
struct LbKnownArgs {
    #[arg(long, default_value_t = 0.3)]
    eps: f64,
    #[arg(long = "T", default_value_t = 16_384)]
    horizon: usize,
    #[arg(long, default_value_t = 20)]
    seeds: usize,
    /// Cost-grid size for the policy.
    #[arg(long = "K", default_value_t = 32)]
    grid: usize,
    #[arg(long, default_value_t = 10_000)]
    oracle_m: usize,
    #[command(flatten)]
    io: CommonIo,
}

#[derive(Args)]
struct LbUnknownArgs {
    /// Number of perturbed instances (each hides a dip in its own interval).
    #[arg(long = "K", default_value_t = 4)]
    family: usize,
    #[arg(long = "T", default_value_t = 65_536)]
    horizon: usize,
    #[arg(long, default_value_t = 20)]
    seeds: usize,
    #[arg(long, default_value_t = 10_000)]
    oracle_m: usize,
    #[command(flatten)]
    io: CommonIo,
}

/// Errors that should exit with the usage/validation code.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for UsageError {}

pub(crate) fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(UsageError(msg.into()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Validate(args) => cmd_validate(args),
        Command::Concentration(args) => cmd_concentration(args),
        Command::LowerBound(args) => match args.suite {
            LowerBoundSuite::Known(a) => cmd_lower_bound_known(a),
            LowerBoundSuite::Unknown(a) => cmd_lower_bound_unknown(a),
        },
    }
}

fn load_instance(path: &Path) -> Result<Instance> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read instance file {}: {e}", path.display())))?;
    let inst: Instance = serde_json::from_str(&text)
        .map_err(|e| usage(format!("invalid instance in {}: {e}", path.display())))?;
    Ok(inst)
}

fn parse_policy(s: &str) -> Result<PolicyKind> {
    match s {
        "known" => Ok(PolicyKind::KnownCov),
        "unknown" => Ok(PolicyKind::UnknownCov),
        other => Err(usage(format!(
            "unknown policy '{other}' (expected 'known' or 'unknown')"
        ))),
    }
}

fn write_out(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("creating output directory {}", dir.display()))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let file_cfg = ExperimentConfig::load_opt(args.config.as_deref())?;
    let cli_instance = args.instance.clone();
    let instance_path = args
        .instance
        .or_else(|| file_cfg.instance_path())
        .ok_or_else(|| usage("--instance (or a config file with one) is required"))?;
    let instance = match file_cfg.inline_instance() {
        Some(inst) if cli_instance.is_none() => inst,
        _ => load_instance(&instance_path)?,
    };
    let kind = parse_policy(
        args.policy
            .or(file_cfg.policy.clone())
            .as_deref()
            .unwrap_or("known"),
    )?;
    let horizon = args
        .horizon
        .or(file_cfg.horizon())
        .ok_or_else(|| usage("--T is required"))?;
    let seed = args.seed.or(file_cfg.seed).unwrap_or(0);
    let oracle_m = args.oracle_m.or(file_cfg.oracle_m).unwrap_or(10_000);

    let mut cfg = PolicyConfig::from_schedule(kind, horizon, &instance);
    if let Some(k) = args.grid.or(file_cfg.k_override) {
        cfg = cfg.with_grid_size(k);
    }
    if let Some(d) = args.delta.or(file_cfg.delta_override) {
        cfg = cfg.with_delta(d);
    }
    cfg.regularized = args.regularized || file_cfg.regularized.unwrap_or(false);

    let landscape = loss_landscape(&instance, oracle_m)?;
    let log = run_episode(&instance, &cfg, &landscape, seed)?;

    let dir = args.io.dir();
    let tag = format!(
        "{}_T{}_seed{}",
        if kind == PolicyKind::KnownCov { "known" } else { "unknown" },
        horizon,
        seed
    );
    let csv_path = write_out(&dir, &format!("runlog_{tag}.csv"), &log.to_csv())?;
    let json_path = write_out(
        &dir,
        &format!("run_summary_{tag}.json"),
        &serde_json::to_string_pretty(&log.summary)?,
    )?;
    println!("final regret: {:.6}", log.summary.final_regret);
    println!("per-round average: {:.6}", log.summary.mean_round_regret);
    println!("wrote {} and {}", csv_path.display(), json_path.display());
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let file_cfg = ExperimentConfig::load_opt(args.config.as_deref())?;
    let cli_instance = args.instance.clone();
    let instance_path = args
        .instance
        .or_else(|| file_cfg.instance_path())
        .ok_or_else(|| usage("--instance (or a config file with one) is required"))?;
    let instance = match file_cfg.inline_instance() {
        Some(inst) if cli_instance.is_none() => inst,
        _ => load_instance(&instance_path)?,
    };
    let kind = parse_policy(
        args.policy
            .or(file_cfg.policy.clone())
            .as_deref()
            .unwrap_or("known"),
    )?;
    let horizons = if args.horizons.is_empty() {
        file_cfg.horizons.clone().unwrap_or_default()
    } else {
        args.horizons.clone()
    };
    if horizons.is_empty() {
        return Err(usage("--horizons is required"));
    }
    let mut sorted = horizons.clone();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted != horizons {
        return Err(usage("horizons must be positive, sorted and distinct"));
    }
    if args.fit && horizons.len() < 3 {
        return Err(usage("rate fit requires >= 3 horizons"));
    }
    let n_seeds = args.seeds.or(file_cfg.seeds).unwrap_or(20);
    if n_seeds == 0 {
        return Err(usage("need at least one seed"));
    }

    let mut cfg = SweepConfig::new(kind, horizons, (0..n_seeds as u64).collect());
    cfg.oracle_m = args.oracle_m.or(file_cfg.oracle_m).unwrap_or(10_000);
    cfg.grid_override = args.grid.or(file_cfg.k_override);
    cfg.delta_override = args.delta.or(file_cfg.delta_override);
    cfg.regularized = args.regularized || file_cfg.regularized.unwrap_or(false);

    let result = sweep(std::slice::from_ref(&instance), &cfg)?;
    let id = instance.fingerprint();
    let dir = args.io.dir();
    let csv_path = write_out(&dir, "sweep.csv", &result.to_csv(&id))?;
    let json_path = write_out(&dir, "sweep.json", &serde_json::to_string_pretty(&result)?)?;
    for e in &result.per_horizon {
        println!(
            "T={:7}  mean regret {:12.4}  (stderr {:.4}, {} seeds)",
            e.horizon, e.mean, e.stderr, e.n_seeds
        );
    }
    if args.fit {
        match result.fit_for(&id) {
            Some(fit) => println!("fitted rate exponent: {:.4} +- {:.4}", fit.slope, fit.stderr),
            None => println!("fitted rate exponent: unavailable (nonpositive means)"),
        }
    }
    if !result.failures.is_empty() {
        eprintln!("{} episodes failed; see sweep.json", result.failures.len());
    }
    println!("wrote {} and {}", csv_path.display(), json_path.display());
    Ok(())
}

fn cmd_validate(args: ValidateArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.instance).map_err(|e| {
        usage(format!(
            "cannot read instance file {}: {e}",
            args.instance.display()
        ))
    })?;
    let raw: InstanceRaw = serde_json::from_str(&text).map_err(|e| {
        usage(format!(
            "invalid instance in {}: {e}",
            args.instance.display()
        ))
    })?;
    let mut failures = 0usize;
    let mut check = |name: &str, ok: bool, detail: String| {
        if ok {
            println!("PASS {name}{detail}");
        } else {
            println!("FAIL {name}{detail}");
            failures += 1;
        }
    };

    let dims_ok = raw.theta_star.len() == raw.d
        && raw.x_mean.len() == raw.d
        && raw.x_cov_centered.dim() == raw.d
        && raw.profile.dim() == raw.d;
    check("dimension-consistency", dims_ok, format!(" (d={})", raw.d));
    if !dims_ok {
        return Err(usage("1 check(s) failed"));
    }
    let instance = raw.into_unvalidated();

    let report = validate_profile(&instance.profile, args.grid)?;
    check(
        "profile-monotone-psd",
        report.is_clean(),
        format!(" ({} grid points, {} violations)", args.grid, report.violations.len()),
    );

    let full_cov = instance.sigma_x_hat(1.0)?;
    let min_eig = full_cov.min_eigenvalue()?;
    check(
        "sigma-x-hat-positive-definite",
        min_eig > 1e-12,
        format!(" (min eigenvalue {min_eig:.3e})"),
    );

    let theta_norm = norm(&instance.theta_star);
    check(
        "theta-norm-bound",
        theta_norm <= instance.s_bound * (1.0 + 1e-12),
        format!(" (|theta|={theta_norm:.6}, S={})", instance.s_bound),
    );
    let mean_norm = norm(&instance.x_mean);
    check(
        "mean-norm-bound",
        mean_norm <= instance.s_bound * (1.0 + 1e-12),
        format!(" (|x_mean|={mean_norm:.6}, S={})", instance.s_bound),
    );

    if let CovarianceProfile::PerturbedFRatio { k, grid_size, .. } = &instance.profile {
        let (lo, hi) = modified_interval(*k, *grid_size);
        let bound = 1.0 / (grid_size * grid_size) as f64;
        let mut ok = true;
        for i in 0..=10_000 {
            let c = i as f64 / 10_000.0;
            let kl = kl_gaussian(f_ratio(c), perturbed_f_ratio(c, *k, *grid_size)).unwrap_or(0.0);
            let inside = c >= lo && c < hi;
            if (inside && kl > bound + 1e-15) || (!inside && kl != 0.0) {
                ok = false;
                break;
            }
        }
        check(
            "kl-interval-bound",
            ok,
            format!(" (interval [{lo}, {hi}), bound {bound:.6})"),
        );
    }

    if failures > 0 {
        return Err(usage(format!("{failures} check(s) failed")));
    }
    Ok(())
}

fn cmd_concentration(args: ConcentrationArgs) -> Result<()> {
    if args.trials < 100 {
        eprintln!("warning: below minimum trials (need >= 100, got {})", args.trials);
        return Err(usage("below minimum trials"));
    }
    let dir = args.io.dir();
    let mut any_exceeded = false;
    let slack = |nominal: f64| {
        3.0 * (nominal.clamp(1e-12, 1.0) * (1.0 - nominal).max(0.0) / args.trials as f64).sqrt()
    };

    if args.which == "matrix" || args.which == "both" {
        let rep = mc_matrix_concentration(args.d, args.r, args.t_max, args.delta, args.trials, args.seed)?;
        let limit = rep.nominal + slack(rep.nominal);
        println!(
            "matrix: violation frequency {:.4} vs nominal {:.4} (+{:.4} slack)",
            rep.violation_frequency,
            rep.nominal,
            limit - rep.nominal
        );
        any_exceeded |= rep.violation_frequency > limit;
        write_out(&dir, "concentration_matrix.json", &serde_json::to_string_pretty(&rep)?)?;
    }
    if args.which == "loss" || args.which == "both" {
        let instance = match &args.instance {
            Some(p) => load_instance(p)?,
            None => make_lower_bound_unknown(2)?.0,
        };
        let rep = mc_loss_uniform(
            &instance,
            args.t_max.min(4096),
            args.delta,
            args.trials,
            args.probes,
            args.grid_size,
            args.seed,
        )?;
        let limit = rep.nominal + slack(rep.nominal);
        println!(
            "loss: violation frequency {:.4} vs nominal {:.4} (+{:.4} slack)",
            rep.violation_frequency,
            rep.nominal,
            limit - rep.nominal
        );
        any_exceeded |= rep.violation_frequency > limit;
        write_out(&dir, "concentration_loss.json", &serde_json::to_string_pretty(&rep)?)?;
    }
    if !(args.which == "matrix" || args.which == "loss" || args.which == "both") {
        return Err(usage(format!("unknown experiment '{}'", args.which)));
    }
    if any_exceeded {
        return Err(anyhow!("violation frequency exceeded nominal + slack"));
    }
    Ok(())
}

fn cmd_lower_bound_known(args: LbKnownArgs) -> Result<()> {
    if !(args.eps > 0.0 && args.eps <= 0.5) {
        return Err(usage(format!("eps must lie in (0, 1/2], got {}", args.eps)));
    }
    let (minus, plus) = make_lower_bound_known(args.eps)?;
    let dir = args.io.dir();
    let grid = args.grid;
    let mut report = Vec::new();
    for (label, inst, target) in [
        ("minus", &minus, 1.0 / grid as f64),
        ("plus", &plus, 0.5),
    ] {
        let landscape = loss_landscape(inst, args.oracle_m)?;
        let cfg = PolicyConfig::from_schedule(PolicyKind::KnownCov, args.horizon, inst)
            .with_grid_size(grid);
        let mut regrets = Vec::new();
        let mut modal_hits = 0usize;
        let mut modal_costs = Vec::new();
        for seed in 0..args.seeds as u64 {
            let log = run_episode(inst, &cfg, &landscape, seed)?;
            regrets.push(log.summary.final_regret);
            let modal = modal_final_quarter_cost(&log).unwrap_or(f64::NAN);
            modal_costs.push(modal);
            if (modal - target).abs() < 1e-12 {
                modal_hits += 1;
            }
        }
        let mean = regrets.iter().sum::<f64>() / regrets.len() as f64;
        println!(
            "{label}: mean regret {mean:.3}, modal late cost hits target {target} in {modal_hits}/{} seeds",
            args.seeds
        );
        report.push(serde_json::json!({
            "instance": label,
            "eps": args.eps,
            "target_cost": target,
            "mean_regret": mean,
            "modal_hits": modal_hits,
            "seeds": args.seeds,
            "modal_costs": modal_costs,
        }));
    }
    write_out(
        &dir,
        "lower_bound_known.json",
        &serde_json::to_string_pretty(&serde_json::Value::Array(report))?,
    )?;
    Ok(())
}

fn cmd_lower_bound_unknown(args: LbUnknownArgs) -> Result<()> {
    if args.family < 1 {
        return Err(usage("family size K must be >= 1"));
    }
    let (_, perturbed) = make_lower_bound_unknown(args.family)?;
    let dir = args.io.dir();
    let mut report = Vec::new();
    for (idx, inst) in perturbed.iter().enumerate() {
        let k = idx + 1;
        let (lo, hi) = modified_interval(k, args.family);
        let landscape = loss_landscape(inst, args.oracle_m)?;
        let cfg = PolicyConfig::from_schedule(PolicyKind::UnknownCov, args.horizon, inst);
        let mut regrets = Vec::new();
        let mut modal_hits = 0usize;
        let mut modal_costs = Vec::new();
        for seed in 0..args.seeds as u64 {
            let log = run_episode(inst, &cfg, &landscape, seed)?;
            regrets.push(log.summary.final_regret);
            let modal = modal_final_quarter_cost(&log).unwrap_or(f64::NAN);
            modal_costs.push(modal);
            if modal >= lo && modal < hi {
                modal_hits += 1;
            }
        }
        let mean = regrets.iter().sum::<f64>() / regrets.len() as f64;
        println!(
            "p_{k}: mean regret {mean:.3}, modal late cost in [{lo:.4}, {hi:.4}) in {modal_hits}/{} seeds",
            args.seeds
        );
        report.push(serde_json::json!({
            "instance": format!("p_{k}"),
            "interval": [lo, hi],
            "mean_regret": mean,
            "modal_hits": modal_hits,
            "seeds": args.seeds,
            "modal_costs": modal_costs,
        }));
    }
    write_out(
        &dir,
        "lower_bound_unknown.json",
        &serde_json::to_string_pretty(&serde_json::Value::Array(report))?,
    )?;
    Ok(())
}
