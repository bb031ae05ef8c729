//! Multi-path EM experiments on the line-world instance with deterministic
//! CSV output.
//!
//! A single experiment samples `n_paths` approximately stationary
//! demonstration paths from the expert policy, runs the EM loop on prefixes
//! of each path (one prefix per requested `T`), and aggregates the estimation
//! error `err(n, T)`: the mean over paths of the Euclidean distance between
//! the iteration-`n` estimate and the true parameter.
//!
//! Determinism: every random draw is keyed by `(master_seed, purpose, path)`
//! through the ChaCha stream counter, per-path results are reduced in path
//! order, and floats are printed with a fixed 12-significant-digit format, so
//! the full output is a pure function of the configuration. Paths are
//! sampled once at the longest requested length and shared by all `T` legs
//! (and across sweep legs) as prefixes.
//!
//! Written files per run: `err.csv` (columns `n, err_T<len>...`),
//! `paths_T<len>.csv` (per-path errors), and `manifest.txt` echoing the
//! configuration with a SHA-256 hash per file. Sweeps write one combined
//! error file per `T` instead.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::em::{em_run, EmConfig};
use crate::error::{Error, Result};
use crate::fmt::sig12;
use crate::model::{PolicyFamily, PriorMu, Theta, SCALAR_BOX};
use crate::sim::{make_grid_env, path_rng, sample_stationary_with_rng, ObservationSequence};

/// Stream-counter salts so that trajectory and initialization draws never
/// collide for the same master seed.
const SALT_TRAJECTORY: u64 = 0;
const SALT_INIT: u64 = 1 << 32;

/// How the initial estimate of each path is chosen.
#[derive(Debug, Clone)]
pub enum InitMode {
    /// The same initial estimate for every path.
    Fixed(Theta),
    /// Per-path `theta0 = theta_star - scale * x`, with `x` drawn uniformly
    /// from `[0,1]^3`, clamped into the constraint box. The draws depend on
    /// the path index but not on `scale`.
    Random { scale: f64 },
}

/// Full configuration of one experiment run on the line-world instance.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub zeta: f64,
    pub theta_star: Theta,
    /// Observation lengths; paths are sampled at the maximum and sliced.
    pub t_list: Vec<usize>,
    pub n_paths: usize,
    pub n_iters: usize,
    pub init: InitMode,
    /// Prior weight `mu(RIGHTEND | s_1)`.
    pub mu_rightend: f64,
    pub burn_in: usize,
    pub master_seed: u64,
    /// Forwarded to the EM loop; 0 disables early stopping.
    pub early_stop_tol: f64,
}

impl ExperimentConfig {
    /// The full-scale setup: 50 paths, N = 1000, T in {5000, 8000, 10000},
    /// burn-in 10000, fixed init (0.5, 0.6, 0.7) and a point-mass prior on
    /// RIGHTEND.
    pub fn full_scale(master_seed: u64) -> Self {
        Self {
            zeta: 0.1,
            theta_star: Theta::target_seeking(0.6, 0.7, 0.8).expect("reference parameters"),
            t_list: vec![5000, 8000, 10000],
            n_paths: 50,
            n_iters: 1000,
            init: InitMode::Fixed(Theta::target_seeking(0.5, 0.6, 0.7).expect("initial estimate")),
            mu_rightend: 1.0,
            burn_in: 10_000,
            master_seed,
            early_stop_tol: 0.0,
        }
    }

    /// Desk-scale preset: 10 paths, N = 300, T in {2000, 5000}.
    pub fn desk(master_seed: u64) -> Self {
        Self {
            t_list: vec![2000, 5000],
            n_paths: 10,
            n_iters: 300,
            ..Self::full_scale(master_seed)
        }
    }

    fn validate(&self) -> Result<()> {
        if self.t_list.is_empty() || self.t_list.iter().any(|&t| t < 2) {
            return Err(Error::Config("t_list must contain lengths >= 2".into()));
        }
        if self.n_paths == 0 || self.n_iters == 0 {
            return Err(Error::Config("n_paths and n_iters must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.mu_rightend) {
            return Err(Error::Config(format!(
                "mu_rightend must lie in [0, 1], got {}",
                self.mu_rightend
            )));
        }
        if let InitMode::Random { scale } = self.init {
            if !(0.0..=0.5).contains(&scale) {
                return Err(Error::Config(format!(
                    "random init scale must lie in [0, 0.5], got {scale}"
                )));
            }
        }
        Ok(())
    }

    fn mu(&self) -> Result<PriorMu> {
        PriorMu::new(vec![1.0 - self.mu_rightend, self.mu_rightend])
    }

    /// Echo of the configuration for the manifest.
    fn echo(&self) -> Vec<(String, String)> {
        let init = match &self.init {
            InitMode::Fixed(th) => {
                let v = th.flatten();
                format!("fixed({},{},{})", v[0], v[1], v[2])
            }
            InitMode::Random { scale } => format!("random({scale})"),
        };
        let star = self.theta_star.flatten();
        vec![
            ("zeta".into(), self.zeta.to_string()),
            (
                "theta_star".into(),
                format!("{},{},{}", star[0], star[1], star[2]),
            ),
            (
                "t_list".into(),
                self.t_list
                    .iter()
                    .map(|t| t.to_string())
                    .collect::<Vec<_>>()
                    .join(","),
            ),
            ("n_paths".into(), self.n_paths.to_string()),
            ("n_iters".into(), self.n_iters.to_string()),
            ("init".into(), init),
            ("mu_rightend".into(), self.mu_rightend.to_string()),
            ("burn_in".into(), self.burn_in.to_string()),
            ("master_seed".into(), self.master_seed.to_string()),
            ("early_stop_tol".into(), self.early_stop_tol.to_string()),
        ]
    }
}

/// Errors of one EM run: `errs[n]` is the distance of the iteration-`n`
/// estimate from the true parameter. If early stopping truncated the run the
/// final value is repeated, since the estimate no longer moves.
#[derive(Debug, Clone)]
pub struct PathRun {
    pub t_len: usize,
    pub path_id: usize,
    pub errs: Vec<f64>,
}

/// Per-path and aggregated estimation errors of one experiment.
#[derive(Debug, Clone)]
pub struct ErrTable {
    pub n_iters: usize,
    pub runs: Vec<PathRun>,
}

impl ErrTable {
    /// The distinct observation lengths present, in run order.
    pub fn t_values(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for run in &self.runs {
            if !out.contains(&run.t_len) {
                out.push(run.t_len);
            }
        }
        out
    }

    fn runs_for(&self, t_len: usize) -> Vec<&PathRun> {
        self.runs.iter().filter(|r| r.t_len == t_len).collect()
    }

    /// `err(n, T)` for `n = 0..=n_iters`.
    pub fn mean_err(&self, t_len: usize) -> Vec<f64> {
        let runs = self.runs_for(t_len);
        let mut out = vec![0.0; self.n_iters + 1];
        for run in &runs {
            for (n, e) in run.errs.iter().enumerate() {
                out[n] += e;
            }
        }
        for v in &mut out {
            *v /= runs.len() as f64;
        }
        out
    }

    /// Writes `n,err_T<len>...` with one error column per observation length.
    pub fn write_mean_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        let ts = self.t_values();
        let header: Vec<String> = ts.iter().map(|t| format!("err_T{t}")).collect();
        writeln!(out, "n,{}", header.join(","))?;
        let curves: Vec<Vec<f64>> = ts.iter().map(|&t| self.mean_err(t)).collect();
        for n in 0..=self.n_iters {
            let row: Vec<String> = curves.iter().map(|c| sig12(c[n])).collect();
            writeln!(out, "{n},{}", row.join(","))?;
        }
        Ok(())
    }

    /// Writes `path_id,n,err` rows for one observation length.
    pub fn write_paths_csv<W: Write>(&self, out: &mut W, t_len: usize) -> Result<()> {
        writeln!(out, "path_id,n,err")?;
        for run in self.runs_for(t_len) {
            for (n, e) in run.errs.iter().enumerate() {
                writeln!(out, "{},{n},{}", run.path_id, sig12(*e))?;
            }
        }
        Ok(())
    }
}

/// Draws the initial estimate for one path.
fn initial_theta(config: &ExperimentConfig, path_id: usize) -> Result<Theta> {
    match &config.init {
        InitMode::Fixed(th) => Ok(th.clone()),
        InitMode::Random { scale } => {
            let mut rng = path_rng(config.master_seed, SALT_INIT + path_id as u64);
            let star = config.theta_star.flatten();
            let mut vals = [0.0; 3];
            for (v, s) in vals.iter_mut().zip(&star) {
                let x: f64 = rand::Rng::random(&mut rng);
                *v = (s - scale * x).clamp(SCALAR_BOX.0, SCALAR_BOX.1);
            }
            Theta::target_seeking(vals[0], vals[1], vals[2])
        }
    }
}

/// Runs the experiment described by `config`; writes CSV output when
/// `out_dir` is given.
pub fn run_experiment(config: &ExperimentConfig, out_dir: Option<&Path>) -> Result<ErrTable> {
    config.validate()?;
    let family = PolicyFamily::target_seeking(config.zeta)?;
    family.check_theta(&config.theta_star)?;
    let env = make_grid_env();
    let expert_tables = family.tables(&config.theta_star)?;
    let mu = config.mu()?;
    let max_t = *config.t_list.iter().max().expect("non-empty t_list");

    let results: Vec<Result<Vec<PathRun>>> = (0..config.n_paths)
        .into_par_iter()
        .map(|path_id| {
            let salt = SALT_TRAJECTORY + path_id as u64;
            let mut rng = path_rng(config.master_seed, salt);
            let traj = sample_stationary_with_rng(
                &expert_tables,
                &env,
                max_t,
                config.burn_in,
                config.master_seed,
                &mut rng,
            )?;
            let theta0 = initial_theta(config, path_id)?;
            let full_obs = traj.observations();
            let mut runs = Vec::with_capacity(config.t_list.len());
            for &t_len in &config.t_list {
                let obs = ObservationSequence::new(
                    full_obs.states[..t_len].to_vec(),
                    full_obs.actions[..t_len].to_vec(),
                )?;
                let em_config = EmConfig {
                    n_iters: config.n_iters,
                    mu: mu.clone(),
                    theta0: theta0.clone(),
                    early_stop_tol: config.early_stop_tol,
                };
                let trace = em_run(&family, &obs, &em_config)?;
                let mut errs: Vec<f64> = trace
                    .thetas
                    .iter()
                    .map(|th| th.l2_distance(&config.theta_star))
                    .collect::<Result<_>>()?;
                while errs.len() < config.n_iters + 1 {
                    errs.push(*errs.last().expect("trace holds theta0"));
                }
                runs.push(PathRun {
                    t_len,
                    path_id,
                    errs,
                });
            }
            Ok(runs)
        })
        .collect();

    // Reduce in path order so aggregation is independent of scheduling.
    let mut runs = Vec::with_capacity(config.n_paths * config.t_list.len());
    for r in results {
        runs.extend(r?);
    }
    // Group by T for readability of the per-path files.
    let mut ordered = Vec::with_capacity(runs.len());
    for &t_len in &config.t_list {
        ordered.extend(runs.iter().filter(|r| r.t_len == t_len).cloned());
    }
    let table = ErrTable {
        n_iters: config.n_iters,
        runs: ordered,
    };

    if let Some(dir) = out_dir {
        let mut files = Vec::new();
        let mut buf = Vec::new();
        table.write_mean_csv(&mut buf)?;
        files.push(write_file(dir, "err.csv", &buf)?);
        for &t_len in &config.t_list {
            let mut buf = Vec::new();
            table.write_paths_csv(&mut buf, t_len)?;
            files.push(write_file(dir, &format!("paths_T{t_len}.csv"), &buf)?);
        }
        write_manifest(dir, &config.echo(), &files)?;
    }

    Ok(table)
}

/// Mean error curves restricted to percentile buckets of the final error.
#[derive(Debug, Clone)]
pub struct BucketCurve {
    pub interval: (f64, f64),
    pub n_paths: usize,
    pub mean_err: Vec<f64>,
}

/// Buckets the paths of one `T` leg by the percentile of their final error
/// and averages the error curves within each bucket.
///
/// A path whose final error sits at rank `i` (zero-based, ties broken by
/// path id) has percentile `100 * (i + 1) / n`; bucket `(lo, hi]` collects
/// the paths with `lo < percentile <= hi`, so adjacent buckets partition the
/// paths and boundary ties resolve to the lower bucket.
pub fn percentile_buckets(
    table: &ErrTable,
    t_len: usize,
    intervals: &[(f64, f64)],
) -> Result<Vec<BucketCurve>> {
    let runs: Vec<&PathRun> = table.runs.iter().filter(|r| r.t_len == t_len).collect();
    if runs.is_empty() {
        return Err(Error::Config(format!(
            "no runs recorded for T = {t_len}"
        )));
    }
    let n = runs.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        let (a, b) = (runs[i].errs.last().unwrap(), runs[j].errs.last().unwrap());
        a.partial_cmp(b)
            .unwrap()
            .then(runs[i].path_id.cmp(&runs[j].path_id))
    });

    let mut out = Vec::with_capacity(intervals.len());
    for &(lo, hi) in intervals {
        let members: Vec<&PathRun> = order
            .iter()
            .enumerate()
            .filter(|(rank, _)| {
                let pct = 100.0 * (rank + 1) as f64 / n as f64;
                pct > lo && pct <= hi
            })
            .map(|(_, &i)| runs[i])
            .collect();
        if members.is_empty() {
            return Err(Error::EmptyBucket { lo, hi });
        }
        let mut mean = vec![0.0; table.n_iters + 1];
        for run in &members {
            for (n_it, e) in run.errs.iter().enumerate() {
                mean[n_it] += e;
            }
        }
        for v in &mut mean {
            *v /= members.len() as f64;
        }
        out.push(BucketCurve {
            interval: (lo, hi),
            n_paths: members.len(),
            mean_err: mean,
        });
    }
    Ok(out)
}

/// Writes `n,err_I<lo>_<hi>...` columns for a set of bucket curves.
pub fn write_buckets_csv<W: Write>(out: &mut W, buckets: &[BucketCurve]) -> Result<()> {
    let header: Vec<String> = buckets
        .iter()
        .map(|b| format!("err_I{}_{}", b.interval.0, b.interval.1))
        .collect();
    writeln!(out, "n,{}", header.join(","))?;
    let len = buckets[0].mean_err.len();
    for n in 0..len {
        let row: Vec<String> = buckets.iter().map(|b| sig12(b.mean_err[n])).collect();
        writeln!(out, "{n},{}", row.join(","))?;
    }
    Ok(())
}

/// One labelled leg of a sweep.
#[derive(Debug, Clone)]
pub struct SweepLeg {
    pub label: f64,
    pub table: ErrTable,
}

fn write_sweep_csvs(
    dir: &Path,
    prefix: &str,
    config_echo: &[(String, String)],
    t_list: &[usize],
    n_iters: usize,
    legs: &[SweepLeg],
) -> Result<()> {
    let mut files = Vec::new();
    for &t_len in t_list {
        let mut buf = Vec::new();
        let header: Vec<String> = legs
            .iter()
            .map(|leg| format!("err_{prefix}{}", leg.label))
            .collect();
        writeln!(&mut buf, "n,{}", header.join(","))?;
        let curves: Vec<Vec<f64>> = legs.iter().map(|leg| leg.table.mean_err(t_len)).collect();
        for n in 0..=n_iters {
            let row: Vec<String> = curves.iter().map(|c| sig12(c[n])).collect();
            writeln!(&mut buf, "{n},{}", row.join(","))?;
        }
        files.push(write_file(dir, &format!("err_{prefix}_T{t_len}.csv"), &buf)?);
    }
    write_manifest(dir, config_echo, &files)
}

/// Runs the experiment once per prior weight in `mu_values`, reusing the
/// same trajectories (the sampling seeds do not depend on the prior).
pub fn mu_sweep(
    config: &ExperimentConfig,
    mu_values: &[f64],
    out_dir: Option<&Path>,
) -> Result<Vec<SweepLeg>> {
    let mut legs = Vec::with_capacity(mu_values.len());
    for &mu in mu_values {
        let leg_config = ExperimentConfig {
            mu_rightend: mu,
            ..config.clone()
        };
        legs.push(SweepLeg {
            label: mu,
            table: run_experiment(&leg_config, None)?,
        });
    }
    if let Some(dir) = out_dir {
        let mut echo = config.echo();
        echo.push((
            "mu_values".into(),
            mu_values
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(","),
        ));
        write_sweep_csvs(dir, "mu", &echo, &config.t_list, config.n_iters, &legs)?;
    }
    Ok(legs)
}

/// Runs the experiment once per randomization scale in `w_list`. The
/// per-path uniform draws are shared across scales, so the legs differ only
/// in how far the initial estimates sit from the truth.
pub fn random_init_sweep(
    config: &ExperimentConfig,
    w_list: &[f64],
    out_dir: Option<&Path>,
) -> Result<Vec<SweepLeg>> {
    let mut legs = Vec::with_capacity(w_list.len());
    for &w in w_list {
        let leg_config = ExperimentConfig {
            init: InitMode::Random { scale: w },
            ..config.clone()
        };
        legs.push(SweepLeg {
            label: w,
            table: run_experiment(&leg_config, None)?,
        });
    }
    if let Some(dir) = out_dir {
        let mut echo = config.echo();
        echo.push((
            "w_values".into(),
            w_list
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(","),
        ));
        write_sweep_csvs(dir, "w", &echo, &config.t_list, config.n_iters, &legs)?;
    }
    Ok(legs)
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<(String, String, usize)> {
    fs::create_dir_all(dir)?;
    let path: PathBuf = dir.join(name);
    fs::write(&path, bytes)?;
    let digest = Sha256::digest(bytes);
    let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    Ok((name.to_string(), hex, bytes.len()))
}

fn write_manifest(
    dir: &Path,
    config_echo: &[(String, String)],
    files: &[(String, String, usize)],
) -> Result<()> {
    let mut buf = Vec::new();
    writeln!(&mut buf, "# experiment manifest")?;
    for (key, value) in config_echo {
        writeln!(&mut buf, "config.{key} = {value}")?;
    }
    for (name, hash, bytes) in files {
        writeln!(&mut buf, "file {name} sha256={hash} bytes={bytes}")?;
    }
    fs::write(dir.join("manifest.txt"), buf)?;
    Ok(())
}
