//! EM loop: Q-function evaluation, exact M-steps, and the full algorithm.
//!
//! Each iteration smooths the observations at the current parameter estimate
//! and then maximizes the Q-function
//!
//! ```text
//! Q(theta' | theta) = (1/T) [ sum_{j=0..T-2} sum_{o,b} gamma2_j(o, b) log pi_b(b | s_{j+1}, o)
//!                           + sum_{t=0..T-1} sum_{o,b} gamma_t(o, b)  log pi_lo(a_t | s_t, o)
//!                           + sum_{t=0..T-1} sum_{o}   gamma_t(o, 1)  log pi_hi(o | s_t) ]
//! ```
//!
//! over the constraint set. The termination term for the very first step is
//! dropped (its influence is O(1/T) and vanishes for long sequences), and the
//! whole expression is normalized by `T` even though the termination sum has
//! `T - 1` terms; neither choice affects the maximizer.
//!
//! Both families admit exact maximizers. Tabular: per conditional slice, the
//! normalized expected counts, floored like every tabular parameter. Target
//! seeking: each scalar is a posterior count ratio clamped to the constraint
//! box. A slice (or ratio) whose posterior mass vanishes keeps its previous
//! value, the limit of vanishing regularization.

use std::io::Write;

use crate::error::{Error, Result};
use crate::fmt::sig12;
use crate::model::{FamilyKind, PolicyFamily, PriorMu, Theta, SCALAR_BOX};
use crate::sim::ObservationSequence;
use crate::smoothing::{smooth, SmoothingTable};

/// Configuration for one EM run.
#[derive(Debug, Clone)]
pub struct EmConfig {
    /// Number of iterations `N >= 1`.
    pub n_iters: usize,
    /// Prior over the option preceding the first observed step.
    pub mu: PriorMu,
    /// Initial parameter estimate.
    pub theta0: Theta,
    /// Stop once consecutive estimates are closer than this in Euclidean
    /// norm; `0.0` (the default in the experiments) disables early stopping.
    pub early_stop_tol: f64,
}

/// Per-iteration record of one EM run.
///
/// `thetas` holds the `stopped_at + 1` estimates starting at `theta0`. For
/// iteration `n >= 1`, `q_values[n-1]` is `Q(theta^(n) | theta^(n-1))` and
/// `log_marginals[n-1]` is the marginal log-likelihood at `theta^(n-1)`
/// (computed by that iteration's smoothing pass).
#[derive(Debug, Clone)]
pub struct EmTrace {
    pub thetas: Vec<Theta>,
    pub q_values: Vec<f64>,
    pub log_marginals: Vec<f64>,
    pub stopped_at: usize,
}

impl EmTrace {
    pub fn final_theta(&self) -> &Theta {
        self.thetas.last().expect("trace holds at least theta0")
    }

    /// Writes `n,<theta components>,q_value,log_marginal` rows. The `n = 0`
    /// row has no associated Q-value or marginal and writes `nan`.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        let header: Vec<String> = match &self.thetas[0] {
            Theta::TargetSeeking { .. } => {
                vec!["theta_hi".into(), "theta_lo".into(), "theta_b".into()]
            }
            Theta::Tabular { .. } => (0..self.thetas[0].flatten().len())
                .map(|i| format!("theta_{i}"))
                .collect(),
        };
        writeln!(out, "n,{},q_value,log_marginal", header.join(","))?;
        for (n, theta) in self.thetas.iter().enumerate() {
            let comps: Vec<String> = theta.flatten().iter().map(|&x| sig12(x)).collect();
            let (q, lml) = if n == 0 {
                (f64::NAN, f64::NAN)
            } else {
                (self.q_values[n - 1], self.log_marginals[n - 1])
            };
            writeln!(out, "{n},{},{},{}", comps.join(","), sig12(q), sig12(lml))?;
        }
        Ok(())
    }
}

fn check_tables_match(
    family: &PolicyFamily,
    tables: &SmoothingTable,
    obs: &ObservationSequence,
) -> Result<()> {
    if tables.t_len() != obs.len() || tables.n_options() != family.spaces().n_options {
        return Err(Error::LengthMismatch(format!(
            "smoothing table is {} steps x {} options, observations are {} steps x {} options",
            tables.t_len(),
            tables.n_options(),
            obs.len(),
            family.spaces().n_options
        )));
    }
    Ok(())
}

/// Q-function value at `theta_prime` given smoothing tables computed at some
/// other parameter for the same observations.
pub fn q_value(
    family: &PolicyFamily,
    theta_prime: &Theta,
    tables: &SmoothingTable,
    obs: &ObservationSequence,
) -> Result<f64> {
    let prime = family.tables(theta_prime)?;
    check_tables_match(family, tables, obs)?;
    let n_o = family.spaces().n_options;
    let t_len = obs.len();

    let mut acc = 0.0;
    for j in 0..t_len - 1 {
        let s = obs.states[j + 1];
        for o in 0..n_o {
            for b in 0..2 {
                acc += tables.gamma2(j, o, b) * prime.pi_b(b, s, o).ln();
            }
        }
    }
    for t in 0..t_len {
        let (s, a) = (obs.states[t], obs.actions[t]);
        for o in 0..n_o {
            let lo_term = prime.pi_lo(a, s, o).ln();
            acc += (tables.gamma(t, o, 0) + tables.gamma(t, o, 1)) * lo_term;
            acc += tables.gamma(t, o, 1) * prime.pi_hi(o, s).ln();
        }
    }
    Ok(acc / t_len as f64)
}

fn clamp_or_keep(num: f64, denom: f64, prev: f64) -> f64 {
    if denom > 0.0 {
        (num / denom).clamp(SCALAR_BOX.0, SCALAR_BOX.1)
    } else {
        prev
    }
}

fn m_step_target_seeking(
    prev: &Theta,
    tables: &SmoothingTable,
    obs: &ObservationSequence,
) -> Result<Theta> {
    let Theta::TargetSeeking {
        hi: prev_hi,
        lo: prev_lo,
        b: prev_b,
    } = prev
    else {
        return Err(Error::InvalidParameter(
            "previous theta does not match the target-seeking family".into(),
        ));
    };
    let t_len = obs.len();

    // hi: posterior termination mass on the option matching the state's half.
    let mut num_hi = 0.0;
    let mut denom_hi = 0.0;
    // lo: posterior option mass on the action matching the option direction.
    let mut num_lo = 0.0;
    for t in 0..t_len {
        let (s, a) = (obs.states[t], obs.actions[t]);
        let g_left = tables.gamma(t, 0, 1);
        let g_right = tables.gamma(t, 1, 1);
        denom_hi += g_left + g_right;
        num_hi += if s <= 1 { g_left } else { g_right };
        let m_left = tables.gamma(t, 0, 0) + g_left;
        let m_right = tables.gamma(t, 1, 0) + g_right;
        num_lo += if a == 0 { m_left } else { m_right };
    }

    // b: two-step posterior mass consistent with terminating exactly at the
    // option's target end state.
    let mut num_b = 0.0;
    for j in 0..t_len - 1 {
        let s = obs.states[j + 1];
        for o_prev in 0..2 {
            let at_target = (o_prev == 0 && s == 0) || (o_prev == 1 && s == 3);
            num_b += if at_target {
                tables.gamma2(j, o_prev, 1)
            } else {
                tables.gamma2(j, o_prev, 0)
            };
        }
    }

    Ok(Theta::TargetSeeking {
        hi: clamp_or_keep(num_hi, denom_hi, *prev_hi),
        lo: clamp_or_keep(num_lo, t_len as f64, *prev_lo),
        b: clamp_or_keep(num_b, (t_len - 1) as f64, *prev_b),
    })
}

fn m_step_tabular(
    family: &PolicyFamily,
    prev: &Theta,
    tables: &SmoothingTable,
    obs: &ObservationSequence,
) -> Result<Theta> {
    let Theta::Tabular {
        hi: prev_hi,
        lo: prev_lo,
        b: prev_b,
    } = prev
    else {
        return Err(Error::InvalidParameter(
            "previous theta does not match the tabular family".into(),
        ));
    };
    let spaces = family.spaces();
    let (ns, no, na) = (spaces.n_states, spaces.n_options, spaces.n_actions);
    let t_len = obs.len();

    let mut hi_counts = vec![0.0; ns * no];
    let mut lo_counts = vec![0.0; ns * no * na];
    let mut b_counts = vec![0.0; ns * no * 2];
    for t in 0..t_len {
        let (s, a) = (obs.states[t], obs.actions[t]);
        for o in 0..no {
            hi_counts[s * no + o] += tables.gamma(t, o, 1);
            lo_counts[(s * no + o) * na + a] += tables.gamma(t, o, 0) + tables.gamma(t, o, 1);
        }
    }
    for j in 0..t_len - 1 {
        let s = obs.states[j + 1];
        for o_prev in 0..no {
            for b in 0..2 {
                b_counts[(s * no + o_prev) * 2 + b] += tables.gamma2(j, o_prev, b);
            }
        }
    }

    // Per slice: normalized counts, floored; empty slices keep the previous
    // parameters verbatim.
    let assemble = |counts: &[f64], prev: &[f64], width: usize| -> Vec<f64> {
        let mut out = Vec::with_capacity(counts.len());
        for (slice, prev_slice) in counts.chunks(width).zip(prev.chunks(width)) {
            let sum: f64 = slice.iter().sum();
            if sum > 0.0 {
                let mut normalized: Vec<f64> = slice.iter().map(|&c| c / sum).collect();
                crate::model::floor_slice(&mut normalized).expect("normalized counts");
                out.extend_from_slice(&normalized);
            } else {
                out.extend_from_slice(prev_slice);
            }
        }
        out
    };

    Ok(Theta::Tabular {
        hi: assemble(&hi_counts, prev_hi, no),
        lo: assemble(&lo_counts, prev_lo, na),
        b: assemble(&b_counts, prev_b, 2),
    })
}

/// Exact maximizer of the Q-function over the family's constraint set, given
/// smoothing tables computed at `prev`. Conditional slices with no posterior
/// mass retain their previous values.
pub fn m_step(
    family: &PolicyFamily,
    prev: &Theta,
    tables: &SmoothingTable,
    obs: &ObservationSequence,
) -> Result<Theta> {
    family.check_theta(prev)?;
    check_tables_match(family, tables, obs)?;
    match family.kind() {
        FamilyKind::TargetSeeking => m_step_target_seeking(prev, tables, obs),
        FamilyKind::Tabular => m_step_tabular(family, prev, tables, obs),
    }
}

/// Runs the full EM loop and records the per-iteration trace.
pub fn em_run(
    family: &PolicyFamily,
    obs: &ObservationSequence,
    config: &EmConfig,
) -> Result<EmTrace> {
    if config.n_iters == 0 {
        return Err(Error::InvalidParameter("n_iters must be >= 1".into()));
    }
    family.check_theta(&config.theta0)?;

    let mut thetas = vec![config.theta0.clone()];
    let mut q_values = Vec::with_capacity(config.n_iters);
    let mut log_marginals = Vec::with_capacity(config.n_iters);
    let mut stopped_at = 0;
    for n in 1..=config.n_iters {
        let current = &thetas[n - 1];
        let tables = smooth(family, current, obs, &config.mu)?;
        log_marginals.push(tables.log_marginal());
        let next = m_step(family, current, &tables, obs)?;
        q_values.push(q_value(family, &next, &tables, obs)?);
        let step = next.l2_distance(&thetas[n - 1])?;
        thetas.push(next);
        stopped_at = n;
        if config.early_stop_tol > 0.0 && step < config.early_stop_tol {
            break;
        }
    }

    Ok(EmTrace {
        thetas,
        q_values,
        log_marginals,
        stopped_at,
    })
}
