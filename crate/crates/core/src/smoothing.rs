//! Scaled forward-backward smoothing over the latent `(option, termination)`
//! pairs.
//!
//! All four posterior quantities are computed with per-step renormalization
//! and accumulated log normalizers (standard scaled Baum-Welch), which is
//! O(T |O|^2) with no under/overflow even at T = 10^4:
//!
//! - forward message `alpha_t(o, b)`: scaled conditional of `(O_t, B_t)`
//!   given the observation prefix,
//! - backward message `beta_t(o, b)`: scaled likelihood of the observation
//!   suffix given `(O_t, B_t)`, boundary `beta_{T-1} = (2|O|)^{-1}`,
//! - smoothing `gamma_t(o, b) ~ alpha_t * beta_t`,
//! - two-step smoothing `gamma2` over `(O_{t-1}, B_t)`.
//!
//! Time indices are zero-based throughout: a sequence has steps `0..T`, and
//! `gamma2` slice `j` covers the transition `j -> j+1` (so it holds the
//! posterior of the option at step `j` jointly with the termination indicator
//! at step `j+1`).
//!
//! The sum of the forward log normalizers equals the marginal log-likelihood
//! of the observations under the policy factors alone; environment transition
//! factors are constant in the latent variables and excluded by convention
//! (they cancel from every posterior).
//!
//! [`windowed_smooth`] runs the same recursions over an enlarged window
//! `[center - k, center + k)` of a longer observation sequence. The true
//! stationary prior at the window head is unknowable, so it is replaced by a
//! uniform option prior by default; geometric forgetting makes the head prior
//! immaterial once `k` is large, and `stability::tv_forgetting_experiment`
//! measures exactly that.

use std::io::Write;
use std::ops::Range;

use crate::error::{Error, Result};
use crate::model::{PolicyFamily, PolicyTables, PriorMu, Spaces, Theta};
use crate::sim::ObservationSequence;

/// Normalized per-time distributions over `(option, termination)` cells plus
/// per-step log normalizers.
#[derive(Debug, Clone)]
pub struct MessageTable {
    n_options: usize,
    /// `T` slices of width `2|O|`, cell `(o, b)` at `o * 2 + b`.
    values: Vec<f64>,
    /// One log normalizer per step.
    log_norms: Vec<f64>,
}

impl MessageTable {
    fn width(&self) -> usize {
        2 * self.n_options
    }

    pub fn t_len(&self) -> usize {
        self.log_norms.len()
    }

    pub fn n_options(&self) -> usize {
        self.n_options
    }

    #[inline]
    pub fn prob(&self, t: usize, o: usize, b: usize) -> f64 {
        self.values[t * self.width() + o * 2 + b]
    }

    /// The normalized slice at step `t`, cell `(o, b)` at `o * 2 + b`.
    pub fn slice(&self, t: usize) -> &[f64] {
        let w = self.width();
        &self.values[t * w..(t + 1) * w]
    }

    /// Log of the normalizer applied at step `t`.
    pub fn log_norm(&self, t: usize) -> f64 {
        self.log_norms[t]
    }
}

/// Smoothing (`gamma`) and two-step smoothing (`gamma2`) posteriors for one
/// observation sequence, plus the marginal log-likelihood.
#[derive(Debug, Clone)]
pub struct SmoothingTable {
    n_options: usize,
    /// `T` slices of width `2|O|`.
    gamma: Vec<f64>,
    /// `T - 1` slices; slice `j` is the posterior of `(O_j, B_{j+1})`.
    gamma2: Vec<f64>,
    log_marginal: f64,
}

impl SmoothingTable {
    /// Assembles a table from raw slices (used by the enumeration oracle).
    pub(crate) fn from_parts(
        n_options: usize,
        gamma: Vec<f64>,
        gamma2: Vec<f64>,
        log_marginal: f64,
    ) -> Self {
        Self {
            n_options,
            gamma,
            gamma2,
            log_marginal,
        }
    }

    fn width(&self) -> usize {
        2 * self.n_options
    }

    pub fn t_len(&self) -> usize {
        self.gamma.len() / (2 * self.n_options)
    }

    pub fn n_options(&self) -> usize {
        self.n_options
    }

    #[inline]
    pub fn gamma(&self, t: usize, o: usize, b: usize) -> f64 {
        self.gamma[t * self.width() + o * 2 + b]
    }

    pub fn gamma_slice(&self, t: usize) -> &[f64] {
        let w = self.width();
        &self.gamma[t * w..(t + 1) * w]
    }

    /// Two-step posterior for the transition `j -> j+1`: probability of the
    /// option at step `j` jointly with the termination indicator at `j+1`.
    #[inline]
    pub fn gamma2(&self, j: usize, o_prev: usize, b: usize) -> f64 {
        self.gamma2[j * self.width() + o_prev * 2 + b]
    }

    pub fn gamma2_slice(&self, j: usize) -> &[f64] {
        let w = self.width();
        &self.gamma2[j * w..(j + 1) * w]
    }

    /// Marginal log-likelihood of the observations (policy factors only).
    pub fn log_marginal(&self) -> f64 {
        self.log_marginal
    }

    /// Writes `t,o,b,gamma,gamma2` rows; the `gamma2` column of row `t` holds
    /// the entry for `(O_{t-1} = o, B_t = b)` and is empty at `t = 0`.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "t,o,b,gamma,gamma2")?;
        for t in 0..self.t_len() {
            for o in 0..self.n_options {
                for b in 0..2 {
                    if t == 0 {
                        writeln!(out, "{t},{o},{b},{},", crate::fmt::sig12(self.gamma(t, o, b)))?;
                    } else {
                        writeln!(
                            out,
                            "{t},{o},{b},{},{}",
                            crate::fmt::sig12(self.gamma(t, o, b)),
                            crate::fmt::sig12(self.gamma2(t - 1, o, b))
                        )?;
                    }
                }
            }
        }
        Ok(())
    }
}

fn check_obs(spaces: &Spaces, obs: &ObservationSequence) -> Result<()> {
    if obs.len() < 2 {
        return Err(Error::SequenceTooShort { t: obs.len() });
    }
    for &s in &obs.states {
        if s >= spaces.n_states {
            return Err(Error::IndexOutOfRange {
                what: "state",
                value: s,
                limit: spaces.n_states,
            });
        }
    }
    for &a in &obs.actions {
        if a >= spaces.n_actions {
            return Err(Error::IndexOutOfRange {
                what: "action",
                value: a,
                limit: spaces.n_actions,
            });
        }
    }
    Ok(())
}

fn check_mu(spaces: &Spaces, mu: &PriorMu) -> Result<()> {
    if mu.len() != spaces.n_options {
        return Err(Error::LengthMismatch(format!(
            "mu has {} entries, option space has {}",
            mu.len(),
            spaces.n_options
        )));
    }
    Ok(())
}

/// Normalizes `slice` in place and returns `ln` of its sum.
fn normalize(slice: &mut [f64], t: usize) -> Result<f64> {
    let sum: f64 = slice.iter().sum();
    if !(sum > 0.0) || !sum.is_finite() {
        return Err(Error::ZeroMass { t });
    }
    for v in slice.iter_mut() {
        *v /= sum;
    }
    Ok(sum.ln())
}

fn forward_impl(
    tables: &PolicyTables,
    obs: &ObservationSequence,
    mu: &PriorMu,
) -> Result<MessageTable> {
    let n_o = tables.spaces().n_options;
    let w = 2 * n_o;
    let t_len = obs.len();
    let mut values = vec![0.0; t_len * w];
    let mut log_norms = vec![0.0; t_len];

    // First step: expectation over the prior option.
    {
        let (s, a) = (obs.states[0], obs.actions[0]);
        let slice = &mut values[0..w];
        for o in 0..n_o {
            for b in 0..2 {
                let mut acc = 0.0;
                for o0 in 0..n_o {
                    acc += mu.prob(o0) * tables.h(o0, s, a, o, b);
                }
                slice[o * 2 + b] = acc;
            }
        }
        log_norms[0] = normalize(slice, 0)?;
    }

    let mut prev_marginal = vec![0.0; n_o];
    for t in 1..t_len {
        let (s, a) = (obs.states[t], obs.actions[t]);
        let (head, tail) = values.split_at_mut(t * w);
        let prev = &head[(t - 1) * w..t * w];
        // The recursion only needs the option marginal of the previous slice.
        for o_prev in 0..n_o {
            prev_marginal[o_prev] = prev[o_prev * 2] + prev[o_prev * 2 + 1];
        }
        let slice = &mut tail[0..w];
        for o in 0..n_o {
            for b in 0..2 {
                let mut acc = 0.0;
                for (o_prev, &m) in prev_marginal.iter().enumerate() {
                    acc += tables.h(o_prev, s, a, o, b) * m;
                }
                slice[o * 2 + b] = acc;
            }
        }
        log_norms[t] = normalize(slice, t)?;
    }

    Ok(MessageTable {
        n_options: n_o,
        values,
        log_norms,
    })
}

fn backward_impl(tables: &PolicyTables, obs: &ObservationSequence) -> Result<MessageTable> {
    let n_o = tables.spaces().n_options;
    let w = 2 * n_o;
    let t_len = obs.len();
    let mut values = vec![0.0; t_len * w];
    let mut log_norms = vec![0.0; t_len];

    // Boundary condition: the constant (2|O|)^{-1}.
    let boundary = 1.0 / w as f64;
    for v in &mut values[(t_len - 1) * w..] {
        *v = boundary;
    }
    log_norms[t_len - 1] = 0.0;

    for t in (0..t_len - 1).rev() {
        let (s_next, a_next) = (obs.states[t + 1], obs.actions[t + 1]);
        let (head, tail) = values.split_at_mut((t + 1) * w);
        let next = &tail[0..w];
        let slice = &mut head[t * w..(t + 1) * w];
        for o in 0..n_o {
            let mut acc = 0.0;
            for o_next in 0..n_o {
                for b_next in 0..2 {
                    acc += tables.h(o, s_next, a_next, o_next, b_next) * next[o_next * 2 + b_next];
                }
            }
            // The recursion does not involve b_t, so both cells share the value.
            slice[o * 2] = acc;
            slice[o * 2 + 1] = acc;
        }
        log_norms[t] = normalize(slice, t)?;
    }

    Ok(MessageTable {
        n_options: n_o,
        values,
        log_norms,
    })
}

fn smooth_impl(
    tables: &PolicyTables,
    obs: &ObservationSequence,
    mu: &PriorMu,
) -> Result<SmoothingTable> {
    let alpha = forward_impl(tables, obs, mu)?;
    let beta = backward_impl(tables, obs)?;
    let n_o = alpha.n_options;
    let w = 2 * n_o;
    let t_len = obs.len();

    let mut gamma = vec![0.0; t_len * w];
    for t in 0..t_len {
        let a = alpha.slice(t);
        let b = beta.slice(t);
        let slice = &mut gamma[t * w..(t + 1) * w];
        for (i, slot) in slice.iter_mut().enumerate() {
            *slot = a[i] * b[i];
        }
        normalize(slice, t)?;
    }

    let mut gamma2 = vec![0.0; (t_len - 1) * w];
    for j in 0..t_len - 1 {
        let (s, a_obs) = (obs.states[j + 1], obs.actions[j + 1]);
        let alpha_prev = alpha.slice(j);
        let beta_next = beta.slice(j + 1);
        let slice = &mut gamma2[j * w..(j + 1) * w];
        for o_prev in 0..n_o {
            let alpha_marg = alpha_prev[o_prev * 2] + alpha_prev[o_prev * 2 + 1];
            for b in 0..2 {
                let mut inner = 0.0;
                for o in 0..n_o {
                    inner += tables.bar_pi_hi(o, s, o_prev, b)
                        * tables.pi_lo(a_obs, s, o)
                        * beta_next[o * 2 + b];
                }
                slice[o_prev * 2 + b] = tables.pi_b(b, s, o_prev) * inner * alpha_marg;
            }
        }
        normalize(slice, j + 1)?;
    }

    let log_marginal = (0..t_len).map(|t| alpha.log_norm(t)).sum();

    Ok(SmoothingTable {
        n_options: n_o,
        gamma,
        gamma2,
        log_marginal,
    })
}

/// Forward messages `alpha_t` for the whole sequence.
pub fn forward_messages(
    family: &PolicyFamily,
    theta: &Theta,
    obs: &ObservationSequence,
    mu: &PriorMu,
) -> Result<MessageTable> {
    let tables = family.tables(theta)?;
    check_obs(family.spaces(), obs)?;
    check_mu(family.spaces(), mu)?;
    forward_impl(&tables, obs, mu)
}

/// Backward messages `beta_t` for the whole sequence.
pub fn backward_messages(
    family: &PolicyFamily,
    theta: &Theta,
    obs: &ObservationSequence,
) -> Result<MessageTable> {
    let tables = family.tables(theta)?;
    check_obs(family.spaces(), obs)?;
    backward_impl(&tables, obs)
}

/// Smoothing and two-step smoothing posteriors plus the marginal
/// log-likelihood.
pub fn smooth(
    family: &PolicyFamily,
    theta: &Theta,
    obs: &ObservationSequence,
    mu: &PriorMu,
) -> Result<SmoothingTable> {
    let tables = family.tables(theta)?;
    check_obs(family.spaces(), obs)?;
    check_mu(family.spaces(), mu)?;
    smooth_impl(&tables, obs, mu)
}

/// Marginal log-likelihood of the observations under the policy factors
/// (environment transition factors excluded by convention).
pub fn marginal_log_likelihood(
    family: &PolicyFamily,
    theta: &Theta,
    obs: &ObservationSequence,
    mu: &PriorMu,
) -> Result<f64> {
    let tables = family.tables(theta)?;
    check_obs(family.spaces(), obs)?;
    check_mu(family.spaces(), mu)?;
    let alpha = forward_impl(&tables, obs, mu)?;
    Ok((0..obs.len()).map(|t| alpha.log_norm(t)).sum())
}

/// Windowed smoothing with a uniform option prior at the window head.
///
/// Runs the recursions over `[center.start - k, center.end + k)` of
/// `long_obs` and returns the posterior restricted to `center`.
pub fn windowed_smooth(
    family: &PolicyFamily,
    theta: &Theta,
    long_obs: &ObservationSequence,
    center: Range<usize>,
    k: usize,
) -> Result<SmoothingTable> {
    let head = PriorMu::uniform(family.spaces().n_options);
    windowed_smooth_with_prior(family, theta, long_obs, center, k, &head)
}

/// Windowed smoothing with an explicit window-head option prior.
pub fn windowed_smooth_with_prior(
    family: &PolicyFamily,
    theta: &Theta,
    long_obs: &ObservationSequence,
    center: Range<usize>,
    k: usize,
    head_prior: &PriorMu,
) -> Result<SmoothingTable> {
    let tables = family.tables(theta)?;
    check_mu(family.spaces(), head_prior)?;
    if center.start >= center.end || center.end > long_obs.len() {
        return Err(Error::WindowOutOfRange {
            start: center.start,
            end: center.end,
            radius: k,
            len: long_obs.len(),
        });
    }
    let Some(win_start) = center.start.checked_sub(k) else {
        return Err(Error::WindowOutOfRange {
            start: center.start,
            end: center.end,
            radius: k,
            len: long_obs.len(),
        });
    };
    let win_end = center.end + k;
    if win_end > long_obs.len() {
        return Err(Error::WindowOutOfRange {
            start: center.start,
            end: center.end,
            radius: k,
            len: long_obs.len(),
        });
    }

    let window = long_obs.slice(win_start, win_end)?;
    check_obs(family.spaces(), &window)?;
    let full = smooth_impl(&tables, &window, head_prior)?;

    // Restrict to the center range. gamma2 keeps only transitions whose both
    // endpoints fall inside the center.
    let n_o = full.n_options;
    let w = 2 * n_o;
    let c0 = center.start - win_start;
    let c_len = center.end - center.start;
    let gamma = full.gamma[c0 * w..(c0 + c_len) * w].to_vec();
    let gamma2 = if c_len >= 2 {
        full.gamma2[c0 * w..(c0 + c_len - 1) * w].to_vec()
    } else {
        Vec::new()
    };
    Ok(SmoothingTable {
        n_options: n_o,
        gamma,
        gamma2,
        log_marginal: full.log_marginal,
    })
}
