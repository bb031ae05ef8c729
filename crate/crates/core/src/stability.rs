//! Mixing constants and empirical smoothing-stability measurements.
//!
//! The options-with-failure chain satisfies a one-step minorization whose
//! strength is controlled by `c_b`, the smallest termination probability over
//! the whole constraint set, via `eps_b = c_b / 2`. Influence on the smoothed
//! posterior decays geometrically with per-step factor
//! `1 - eps_b^2 * zeta / |O|` (the *forgetting rate*).
//!
//! This module computes those constants exactly for both families and
//! provides two measurement loops:
//!
//! - [`tv_forgetting_experiment`] smooths the same window under two distinct
//!   window-head priors and checks the measured total-variation distance at
//!   the window center against the analytic bound for every window radius
//!   `k`. A measured violation is reported as an error: the bound holds
//!   analytically, so exceeding it indicates a smoothing bug.
//! - [`parameter_perturbation_experiment`] smooths the same observations
//!   under two parameters and reports the per-step total-variation distance
//!   against the parameter distance. Analytic Lipschitz constants are not
//!   computed; the experiment targets the qualitative conclusion (bounded
//!   TV / distance ratio).
//!
//! For the tabular family the floor makes `c_b` tiny and the bound close to
//! vacuous at experiment scales; reports carry the bound as-is rather than
//! tightening it per parameter.

use std::io::Write;
use std::ops::Range;

use crate::error::{Error, Result};
use crate::fmt::sig12;
use crate::model::{FamilyKind, PolicyFamily, PriorMu, Theta, SCALAR_BOX, TABULAR_FLOOR};
use crate::sim::ObservationSequence;
use crate::smoothing::{smooth, windowed_smooth_with_prior};

/// Constants of the one-step minorization of the latent chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixingConstants {
    /// Smallest termination probability over arguments and the parameter set.
    pub c_b: f64,
    /// Minorization constant `c_b / 2`.
    pub eps_b: f64,
    /// Geometric decay factor `1 - eps_b^2 * zeta / |O|` per step.
    pub forgetting_rate: f64,
}

/// Exact mixing constants for the family's constraint set.
pub fn mixing_constants(family: &PolicyFamily) -> MixingConstants {
    let c_b = match family.kind() {
        // min over the box of min(theta_b, 1 - theta_b), attained at a corner.
        FamilyKind::TargetSeeking => SCALAR_BOX.0.min(1.0 - SCALAR_BOX.1),
        // The floor is the infimum over floored tables.
        FamilyKind::Tabular => TABULAR_FLOOR,
    };
    let eps_b = c_b / 2.0;
    let forgetting_rate =
        1.0 - eps_b * eps_b * family.zeta() / family.spaces().n_options as f64;
    MixingConstants {
        c_b,
        eps_b,
        forgetting_rate,
    }
}

/// Total variation distance between two distributions over the same cells.
pub fn tv_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / 2.0
}

/// One measurement of the forgetting experiment.
#[derive(Debug, Clone, Copy)]
pub struct ForgettingRow {
    pub k: usize,
    pub measured_tv: f64,
    pub bound: f64,
}

/// Result of [`tv_forgetting_experiment`].
#[derive(Debug, Clone)]
pub struct ForgettingReport {
    pub rows: Vec<ForgettingRow>,
    pub forgetting_rate: f64,
    /// Index of the measured center within the core window (zero-based).
    pub center_offset: usize,
    pub core_len: usize,
}

impl ForgettingReport {
    /// Writes `k,measured,bound` rows.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "k,measured,bound")?;
        for row in &self.rows {
            writeln!(
                out,
                "{},{},{}",
                row.k,
                sig12(row.measured_tv),
                sig12(row.bound)
            )?;
        }
        Ok(())
    }
}

/// Smooths the core window of `long_obs` under two maximally distinct
/// window-head priors for every radius `k` and measures the total-variation
/// distance of the smoothed posterior at the window center.
///
/// The analytic bound at the center (one-based offset `t` in a core window of
/// length `T`) is `rate^k + rate^(T + k - t)` with `rate` the forgetting
/// rate. Any measured violation yields [`Error::BoundViolated`].
pub fn tv_forgetting_experiment(
    family: &PolicyFamily,
    theta: &Theta,
    long_obs: &ObservationSequence,
    core: Range<usize>,
    k_list: &[usize],
) -> Result<ForgettingReport> {
    let n_o = family.spaces().n_options;
    if n_o < 2 {
        return Err(Error::InvalidParameter(
            "forgetting experiment needs at least two options".into(),
        ));
    }
    if core.start >= core.end || core.end > long_obs.len() {
        return Err(Error::WindowOutOfRange {
            start: core.start,
            end: core.end,
            radius: 0,
            len: long_obs.len(),
        });
    }
    let core_len = core.end - core.start;
    let center_offset = (core_len - 1) / 2;
    let rate = mixing_constants(family).forgetting_rate;
    let prior_a = PriorMu::point_mass(n_o, 0)?;
    let prior_b = PriorMu::point_mass(n_o, 1)?;

    let mut rows = Vec::with_capacity(k_list.len());
    for &k in k_list {
        let ga = windowed_smooth_with_prior(family, theta, long_obs, core.clone(), k, &prior_a)?;
        let gb = windowed_smooth_with_prior(family, theta, long_obs, core.clone(), k, &prior_b)?;
        let measured_tv = tv_distance(
            ga.gamma_slice(center_offset),
            gb.gamma_slice(center_offset),
        );
        // One-based center position within the core window.
        let t = (center_offset + 1) as f64;
        let bound = rate.powi(k as i32) + rate.powf(core_len as f64 + k as f64 - t);
        rows.push(ForgettingRow {
            k,
            measured_tv,
            bound,
        });
    }

    if let Some(row) = rows.iter().find(|r| r.measured_tv > r.bound) {
        return Err(Error::BoundViolated {
            k: row.k,
            measured: row.measured_tv,
            bound: row.bound,
        });
    }

    Ok(ForgettingReport {
        rows,
        forgetting_rate: rate,
        center_offset,
        core_len,
    })
}

/// Result of [`parameter_perturbation_experiment`].
#[derive(Debug, Clone)]
pub struct PerturbationReport {
    /// Per-step total variation between the two smoothed posteriors.
    pub tvs: Vec<f64>,
    /// Euclidean distance between the two parameter triples.
    pub delta_norm: f64,
    pub max_tv: f64,
}

impl PerturbationReport {
    /// Writes `t,tv,delta_norm` rows.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "t,tv,delta_norm")?;
        for (t, tv) in self.tvs.iter().enumerate() {
            writeln!(out, "{t},{},{}", sig12(*tv), sig12(self.delta_norm))?;
        }
        Ok(())
    }
}

/// Smooths `obs` under `theta` and `theta_hat` and measures the per-step
/// total-variation distance between the posteriors.
pub fn parameter_perturbation_experiment(
    family: &PolicyFamily,
    theta: &Theta,
    theta_hat: &Theta,
    obs: &ObservationSequence,
    mu: &PriorMu,
) -> Result<PerturbationReport> {
    let base = smooth(family, theta, obs, mu)?;
    let pert = smooth(family, theta_hat, obs, mu)?;
    let tvs: Vec<f64> = (0..obs.len())
        .map(|t| tv_distance(base.gamma_slice(t), pert.gamma_slice(t)))
        .collect();
    let delta_norm = theta.l2_distance(theta_hat)?;
    let max_tv = tvs.iter().cloned().fold(0.0, f64::max);
    Ok(PerturbationReport {
        tvs,
        delta_norm,
        max_tv,
    })
}
