//! Command-line harness for the options-with-failure EM experiments.
//!
//! Every subcommand reads a `key = value` configuration file (see
//! [`config`]) and writes CSV files into an output directory. All randomness
//! is seeded from the configuration, so outputs are byte-identical across
//! reruns.

mod config;

use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use config::Config;
use options_em::em::{em_run, EmConfig};
use options_em::experiment::{
    mu_sweep, percentile_buckets, random_init_sweep, run_experiment, write_buckets_csv,
    ExperimentConfig, InitMode,
};
use options_em::model::{PolicyFamily, PriorMu, Theta};
use options_em::oracle::oracle_equivalence_check;
use options_em::sim::{make_grid_env, path_rng, sample_stationary, sample_stationary_with_rng};
use options_em::stability::{
    mixing_constants, parameter_perturbation_experiment, tv_forgetting_experiment,
};

#[derive(Parser)]
#[command(
    name = "options-em",
    version,
    about = "EM-based imitation learning of options-with-failure policies"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Configuration file (`key = value` lines under `[sections]`).
    #[arg(long)]
    config: PathBuf,
    /// Output directory for CSV files (created if missing).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Sample expert demonstration paths and write them as CSV.
    Simulate(CommonArgs),
    /// Fit one sampled demonstration with EM and write the iteration trace.
    Em(CommonArgs),
    /// Multi-path experiment: err(n, T) curves, optional percentile buckets
    /// and prior / random-initialization sweeps.
    Experiment(CommonArgs),
    /// Check the smoothing recursions against the enumeration oracle.
    OracleCheck(CommonArgs),
    /// Mixing constants plus forgetting and perturbation measurements.
    Stability(CommonArgs),
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => cmd_simulate(&args),
        Command::Em(args) => cmd_em(&args),
        Command::Experiment(args) => cmd_experiment(&args),
        Command::OracleCheck(args) => cmd_oracle_check(&args),
        Command::Stability(args) => cmd_stability(&args),
    };
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn theta_from_triple(triple: (f64, f64, f64)) -> Result<Theta> {
    Theta::target_seeking(triple.0, triple.1, triple.2)
        .map_err(|e| anyhow::anyhow!("invalid theta triple: {e}"))
}

fn cmd_simulate(args: &CommonArgs) -> Result<()> {
    let cfg = Config::load(&args.config)?;
    let s = cfg.section("simulate");
    let zeta = s.get_or("zeta", 0.1)?;
    let theta = theta_from_triple(s.get_triple("theta")?.unwrap_or((0.6, 0.7, 0.8)))?;
    let t_len: usize = s.get_or("t", 10_000)?;
    let burn_in: usize = s.get_or("burn_in", 10_000)?;
    let n_paths: usize = s.get_or("n_paths", 1)?;
    let master_seed: u64 = s.get_or("master_seed", 0)?;
    let include_hidden: bool = s.get_or("include_hidden", true)?;

    let family = PolicyFamily::target_seeking(zeta)?;
    let tables = family.tables(&theta)?;
    let env = make_grid_env();
    fs::create_dir_all(&args.out)?;
    for path_id in 0..n_paths {
        let mut rng = path_rng(master_seed, path_id as u64);
        let traj =
            sample_stationary_with_rng(&tables, &env, t_len, burn_in, master_seed, &mut rng)?;
        let mut buf = Vec::new();
        traj.write_csv(&mut buf, include_hidden)?;
        fs::write(args.out.join(format!("path_{path_id}.csv")), buf)?;
    }
    println!("wrote {n_paths} path file(s) of length {t_len} to {}", args.out.display());
    Ok(())
}

fn cmd_em(args: &CommonArgs) -> Result<()> {
    let cfg = Config::load(&args.config)?;
    let s = cfg.section("em");
    let zeta = s.get_or("zeta", 0.1)?;
    let theta_star = theta_from_triple(s.get_triple("theta_star")?.unwrap_or((0.6, 0.7, 0.8)))?;
    let theta0 = theta_from_triple(s.get_triple("theta0")?.unwrap_or((0.5, 0.6, 0.7)))?;
    let t_len: usize = s.get_or("t", 5000)?;
    let burn_in: usize = s.get_or("burn_in", 10_000)?;
    let n_iters: usize = s.get_or("n_iters", 300)?;
    let mu_rightend: f64 = s.get_or("mu_rightend", 1.0)?;
    let master_seed: u64 = s.get_or("master_seed", 0)?;
    let early_stop_tol: f64 = s.get_or("early_stop_tol", 0.0)?;

    let family = PolicyFamily::target_seeking(zeta)?;
    let env = make_grid_env();
    let traj = sample_stationary(&family, &theta_star, &env, t_len, burn_in, master_seed)?;
    let em_config = EmConfig {
        n_iters,
        mu: PriorMu::new(vec![1.0 - mu_rightend, mu_rightend])?,
        theta0,
        early_stop_tol,
    };
    let trace = em_run(&family, &traj.observations(), &em_config)?;
    fs::create_dir_all(&args.out)?;
    let mut buf = Vec::new();
    trace.write_csv(&mut buf)?;
    fs::write(args.out.join("trace.csv"), buf)?;
    let final_theta = trace.final_theta();
    println!(
        "iterations: {}; final estimate: {:?}; distance to truth: {:.6e}",
        trace.stopped_at,
        final_theta.flatten(),
        final_theta.l2_distance(&theta_star)?
    );
    Ok(())
}

fn experiment_config(cfg: &Config) -> Result<ExperimentConfig> {
    let s = cfg.section("experiment");
    let preset = s.raw("preset").unwrap_or("desk");
    let master_seed: u64 = s.get_or("master_seed", 0)?;
    let mut out = match preset {
        "desk" => ExperimentConfig::desk(master_seed),
        "full" => ExperimentConfig::full_scale(master_seed),
        other => bail!("[experiment] preset must be `desk` or `full`, got {other:?}"),
    };
    if let Some(z) = s.get("zeta")? {
        out.zeta = z;
    }
    if let Some(triple) = s.get_triple("theta_star")? {
        out.theta_star = theta_from_triple(triple)?;
    }
    match (s.get_triple("theta0")?, s.get::<f64>("random_init_scale")?) {
        (Some(triple), None) => out.init = InitMode::Fixed(theta_from_triple(triple)?),
        (None, Some(scale)) => out.init = InitMode::Random { scale },
        (None, None) => {}
        (Some(_), Some(_)) => bail!("[experiment] theta0 and random_init_scale are exclusive"),
    }
    if let Some(t_list) = s.get_list("t_list")? {
        out.t_list = t_list;
    }
    if let Some(n) = s.get("n_paths")? {
        out.n_paths = n;
    }
    if let Some(n) = s.get("n_iters")? {
        out.n_iters = n;
    }
    if let Some(m) = s.get("mu_rightend")? {
        out.mu_rightend = m;
    }
    if let Some(b) = s.get("burn_in")? {
        out.burn_in = b;
    }
    if let Some(tol) = s.get("early_stop_tol")? {
        out.early_stop_tol = tol;
    }
    Ok(out)
}

fn parse_intervals(raw: &str) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::new();
    for part in raw.split(',') {
        let Some((lo, hi)) = part.trim().split_once(':') else {
            bail!("[percentiles] intervals: expected lo:hi, got {part:?}");
        };
        out.push((lo.trim().parse()?, hi.trim().parse()?));
    }
    Ok(out)
}

fn cmd_experiment(args: &CommonArgs) -> Result<()> {
    let cfg = Config::load(&args.config)?;
    let exp = experiment_config(&cfg)?;
    let table = run_experiment(&exp, Some(&args.out))?;
    for t_len in table.t_values() {
        let errs = table.mean_err(t_len);
        println!(
            "T={t_len}: err(0)={:.6}, err({})={:.6}",
            errs[0],
            exp.n_iters,
            errs[exp.n_iters]
        );
    }

    if cfg.has_section("percentiles") {
        let raw = cfg
            .section("percentiles")
            .raw("intervals")
            .unwrap_or("0:50,50:100,90:100")
            .to_string();
        let intervals = parse_intervals(&raw)?;
        for t_len in table.t_values() {
            let buckets = percentile_buckets(&table, t_len, &intervals)?;
            let mut buf = Vec::new();
            write_buckets_csv(&mut buf, &buckets)?;
            fs::write(args.out.join(format!("err_buckets_T{t_len}.csv")), buf)?;
        }
        println!("wrote percentile bucket curves for {:?}", intervals);
    }

    if cfg.has_section("mu_sweep") {
        let values = cfg
            .section("mu_sweep")
            .get_list::<f64>("mu_values")?
            .unwrap_or_else(|| vec![0.2, 0.5, 0.8]);
        let legs = mu_sweep(&exp, &values, Some(&args.out.join("mu_sweep")))?;
        for leg in &legs {
            let final_err = leg.table.mean_err(exp.t_list[0])[exp.n_iters];
            println!("mu={}: final err={final_err:.6}", leg.label);
        }
    }

    if cfg.has_section("random_init") {
        let values = cfg
            .section("random_init")
            .get_list::<f64>("w_values")?
            .unwrap_or_else(|| vec![0.1, 0.2, 0.3]);
        let legs = random_init_sweep(&exp, &values, Some(&args.out.join("random_init")))?;
        for leg in &legs {
            let curve = leg.table.mean_err(exp.t_list[0]);
            println!(
                "w={}: err(0)={:.6}, final err={:.6}",
                leg.label, curve[0], curve[exp.n_iters]
            );
        }
    }
    Ok(())
}

fn cmd_oracle_check(args: &CommonArgs) -> Result<()> {
    let cfg = Config::load(&args.config)?;
    let s = cfg.section("oracle_check");
    let n_instances: usize = s.get_or("n_instances", 100)?;
    let master_seed: u64 = s.get_or("master_seed", 42)?;
    let tol: f64 = s.get_or("tol", 1e-9)?;

    let report = oracle_equivalence_check(n_instances, master_seed, tol)
        .context("running oracle equivalence check")?;
    fs::create_dir_all(&args.out)?;
    let mut buf = Vec::new();
    report.write_csv(&mut buf)?;
    fs::write(args.out.join("oracle_check.csv"), buf)?;
    println!(
        "{} instances, max deviation {:.3e} (tolerance {:.1e})",
        n_instances,
        report.max_dev(),
        tol
    );
    if !report.all_within_tol() {
        bail!("oracle equivalence check failed");
    }
    println!("oracle check: PASS");
    Ok(())
}

fn cmd_stability(args: &CommonArgs) -> Result<()> {
    let cfg = Config::load(&args.config)?;
    let s = cfg.section("stability");
    let zeta = s.get_or("zeta", 0.1)?;
    let theta = theta_from_triple(s.get_triple("theta")?.unwrap_or((0.6, 0.7, 0.8)))?;
    let t_len: usize = s.get_or("t", 4000)?;
    let burn_in: usize = s.get_or("burn_in", 10_000)?;
    let core_start: usize = s.get_or("core_start", 1500)?;
    let core_len: usize = s.get_or("core_len", 100)?;
    let k_list = s
        .get_list::<usize>("k_list")?
        .unwrap_or_else(|| vec![1, 10, 100, 1000]);
    let master_seed: u64 = s.get_or("master_seed", 0)?;
    let delta = s.get_triple("delta")?.unwrap_or((0.05, -0.04, 0.03));

    let family = PolicyFamily::target_seeking(zeta)?;
    let mc = mixing_constants(&family);
    println!(
        "c_b={:.6e} eps_b={:.6e} forgetting_rate={:.12}",
        mc.c_b, mc.eps_b, mc.forgetting_rate
    );

    let env = make_grid_env();
    let traj = sample_stationary(&family, &theta, &env, t_len, burn_in, master_seed)?;
    let obs = traj.observations();
    fs::create_dir_all(&args.out)?;

    let report = tv_forgetting_experiment(
        &family,
        &theta,
        &obs,
        core_start..core_start + core_len,
        &k_list,
    )?;
    let mut buf = Vec::new();
    report.write_csv(&mut buf)?;
    fs::write(args.out.join("forgetting.csv"), buf)?;
    for row in &report.rows {
        println!(
            "k={}: measured TV {:.3e} <= bound {:.3e}",
            row.k, row.measured_tv, row.bound
        );
    }

    let vals = theta.flatten();
    let theta_hat = theta_from_triple((vals[0] + delta.0, vals[1] + delta.1, vals[2] + delta.2))
        .context("theta + delta must stay inside the constraint box")?;
    let mu = PriorMu::new(vec![0.5, 0.5])?;
    let report = parameter_perturbation_experiment(&family, &theta, &theta_hat, &obs, &mu)?;
    let mut buf = Vec::new();
    report.write_csv(&mut buf)?;
    fs::write(args.out.join("perturbation.csv"), buf)?;
    println!(
        "perturbation: |delta|={:.3e}, max TV {:.3e}",
        report.delta_norm, report.max_tv
    );
    Ok(())
}
