//! Brute-force ground truth by exhaustive latent enumeration.
//!
//! For small instances, every latent assignment `(o_0, b_1, o_1, ..., b_T,
//! o_T)` is enumerated with an explicit odometer and its joint weight
//! accumulated, yielding exact posteriors, marginal likelihood and
//! posterior-weighted complete log-likelihoods. Used as the reference for the
//! recursive smoothing implementation and the Q-function.
//!
//! Environment transition factors are constant across latent paths: they are
//! multiplied into the accumulated posterior masses for faithfulness to the
//! joint distribution but cancel in every normalization, and the marginal
//! likelihood convention *excludes* them to match
//! [`smoothing::marginal_log_likelihood`](crate::smoothing::marginal_log_likelihood).
//!
//! Enumeration size is guarded: `|O|^(T+1) * 2^T` must stay below 10^7.

use crate::error::{Error, Result};
use crate::model::{Environment, PolicyFamily, PolicyTables, PriorMu, Theta};
use crate::sim::ObservationSequence;
use crate::smoothing::SmoothingTable;

const MAX_PATHS: f64 = 1e7;

/// Odometer over mixed-radix digits with cached prefix weight products.
///
/// `factor(digits, i)` must return the weight factor contributed by digit
/// `i`, reading only digits `0..=i`.
struct Odometer {
    digits: Vec<usize>,
    radixes: Vec<usize>,
    /// `prefix[i]` is the product of factors of digits `0..i`.
    prefix: Vec<f64>,
}

impl Odometer {
    fn new(radixes: Vec<usize>, factor: &mut impl FnMut(&[usize], usize) -> f64) -> Self {
        let n = radixes.len();
        let mut odo = Self {
            digits: vec![0; n],
            radixes,
            prefix: vec![1.0; n + 1],
        };
        odo.refill_from(0, factor);
        odo
    }

    fn refill_from(&mut self, start: usize, factor: &mut impl FnMut(&[usize], usize) -> f64) {
        for i in start..self.digits.len() {
            self.prefix[i + 1] = self.prefix[i] * factor(&self.digits, i);
        }
    }

    /// Full-path weight under the current digit assignment.
    fn weight(&self) -> f64 {
        self.prefix[self.digits.len()]
    }

    /// Advances to the next assignment; returns `false` after the last one.
    fn advance(&mut self, factor: &mut impl FnMut(&[usize], usize) -> f64) -> bool {
        let n = self.digits.len();
        for i in (0..n).rev() {
            if self.digits[i] + 1 < self.radixes[i] {
                self.digits[i] += 1;
                for d in &mut self.digits[i + 1..] {
                    *d = 0;
                }
                self.refill_from(i, factor);
                return true;
            }
        }
        false
    }
}

fn check_instance(
    family: &PolicyFamily,
    obs: &ObservationSequence,
    env: &Environment,
) -> Result<()> {
    let spaces = family.spaces();
    if obs.len() < 2 {
        return Err(Error::SequenceTooShort { t: obs.len() });
    }
    if env.n_states() != spaces.n_states || env.n_actions() != spaces.n_actions {
        return Err(Error::LengthMismatch(
            "environment shape does not match family spaces".into(),
        ));
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
    let t_len = obs.len() as f64;
    let paths = (spaces.n_options as f64).powf(t_len + 1.0) * 2f64.powf(t_len);
    if paths > MAX_PATHS {
        return Err(Error::EnumerationTooLarge {
            paths,
            limit: MAX_PATHS,
        });
    }
    Ok(())
}

/// Digit layout for a latent path over `steps` time steps:
/// digit 0 is `o_0`; digits `2t+1` and `2t+2` are `(b_t, o_t)`.
fn latent_radixes(n_options: usize, steps: usize) -> Vec<usize> {
    let mut radixes = Vec::with_capacity(2 * steps + 1);
    radixes.push(n_options);
    for _ in 0..steps {
        radixes.push(2);
        radixes.push(n_options);
    }
    radixes
}

/// Weight factor of digit `i` for the first `steps` observation steps: the
/// prior for `o_0`, `pi_b` for termination digits, `bar_pi_hi * pi_lo` for
/// option digits. Environment factors are handled separately.
fn latent_factor(
    tables: &PolicyTables,
    obs: &ObservationSequence,
    mu: &PriorMu,
    digits: &[usize],
    i: usize,
) -> f64 {
    if i == 0 {
        return mu.prob(digits[0]);
    }
    let t = (i - 1) / 2;
    let s = obs.states[t];
    let o_prev = if t == 0 { digits[0] } else { digits[2 * t] };
    if i % 2 == 1 {
        // termination digit b_t
        tables.pi_b(digits[i], s, o_prev)
    } else {
        // option digit o_t
        let b = digits[i - 1];
        let o = digits[i];
        tables.bar_pi_hi(o, s, o_prev, b) * tables.pi_lo(obs.actions[t], s, o)
    }
}

/// Product of the latent-independent environment factors over the sequence.
fn env_product(env: &Environment, obs: &ObservationSequence) -> f64 {
    (0..obs.len() - 1)
        .map(|t| env.prob(obs.states[t + 1], obs.states[t], obs.actions[t]))
        .product()
}

/// Exact smoothing posteriors by full enumeration.
pub fn oracle_smoothing(
    family: &PolicyFamily,
    theta: &Theta,
    obs: &ObservationSequence,
    mu: &PriorMu,
    env: &Environment,
) -> Result<SmoothingTable> {
    let tables = family.tables(theta)?;
    check_instance(family, obs, env)?;
    let n_o = family.spaces().n_options;
    let w = 2 * n_o;
    let t_len = obs.len();
    let env_prod = env_product(env, obs);
    if !(env_prod > 0.0) {
        return Err(Error::InvalidDistribution(
            "observation sequence impossible under the environment kernel".into(),
        ));
    }

    let mut factor = |digits: &[usize], i: usize| latent_factor(&tables, obs, mu, digits, i);
    let mut odo = Odometer::new(latent_radixes(n_o, t_len), &mut factor);
    let mut gamma = vec![0.0; t_len * w];
    let mut gamma2 = vec![0.0; (t_len - 1) * w];
    let mut total = 0.0;
    loop {
        let weight = odo.weight() * env_prod;
        total += weight;
        for t in 0..t_len {
            let (b, o) = (odo.digits[2 * t + 1], odo.digits[2 * t + 2]);
            gamma[t * w + o * 2 + b] += weight;
            if t >= 1 {
                let o_prev = odo.digits[2 * t];
                gamma2[(t - 1) * w + o_prev * 2 + b] += weight;
            }
        }
        if !odo.advance(&mut factor) {
            break;
        }
    }
    if !(total > 0.0) {
        return Err(Error::ZeroMass { t: 0 });
    }
    for v in gamma.iter_mut().chain(gamma2.iter_mut()) {
        *v /= total;
    }
    // Marginal likelihood convention excludes environment factors.
    let log_marginal = (total / env_prod).ln();
    Ok(SmoothingTable::from_parts(n_o, gamma, gamma2, log_marginal))
}

/// Exact marginal log-likelihood (policy factors only) by full enumeration.
pub fn oracle_marginal(
    family: &PolicyFamily,
    theta: &Theta,
    obs: &ObservationSequence,
    mu: &PriorMu,
    env: &Environment,
) -> Result<f64> {
    let tables = family.tables(theta)?;
    check_instance(family, obs, env)?;
    let n_o = family.spaces().n_options;
    let mut factor = |digits: &[usize], i: usize| latent_factor(&tables, obs, mu, digits, i);
    let mut odo = Odometer::new(latent_radixes(n_o, obs.len()), &mut factor);
    let mut total = 0.0;
    loop {
        total += odo.weight();
        if !odo.advance(&mut factor) {
            break;
        }
    }
    Ok(total.ln())
}

/// Exact forward messages: slice `t` is the normalized distribution of
/// `(O_t, B_t)` given the observation prefix, enumerated from the definition.
pub fn oracle_forward(
    family: &PolicyFamily,
    theta: &Theta,
    obs: &ObservationSequence,
    mu: &PriorMu,
    env: &Environment,
) -> Result<Vec<Vec<f64>>> {
    let tables = family.tables(theta)?;
    check_instance(family, obs, env)?;
    let n_o = family.spaces().n_options;
    let mut out = Vec::with_capacity(obs.len());
    for t in 0..obs.len() {
        // Enumerate latent prefixes (o_0, (b, o)_{0..=t}).
        let mut factor = |digits: &[usize], i: usize| latent_factor(&tables, obs, mu, digits, i);
        let mut odo = Odometer::new(latent_radixes(n_o, t + 1), &mut factor);
        let mut slice = vec![0.0; 2 * n_o];
        loop {
            let (b, o) = (odo.digits[2 * t + 1], odo.digits[2 * t + 2]);
            slice[o * 2 + b] += odo.weight();
            if !odo.advance(&mut factor) {
                break;
            }
        }
        let sum: f64 = slice.iter().sum();
        for v in &mut slice {
            *v /= sum;
        }
        out.push(slice);
    }
    Ok(out)
}

/// Exact backward messages: slice `t` is the normalized likelihood of the
/// observation suffix given `(O_t, B_t)`, enumerated from the definition.
/// The suffix likelihood does not depend on `B_t`, so both termination cells
/// of a slice coincide; at `t = T-1` the slice is uniform.
pub fn oracle_backward(
    family: &PolicyFamily,
    theta: &Theta,
    obs: &ObservationSequence,
    env: &Environment,
) -> Result<Vec<Vec<f64>>> {
    let tables = family.tables(theta)?;
    check_instance(family, obs, env)?;
    let n_o = family.spaces().n_options;
    let t_len = obs.len();
    let mut out = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let mut slice = vec![0.0; 2 * n_o];
        for o_t in 0..n_o {
            // Enumerate suffix latents ((b, o)_{t+1..T}) conditioned on o_t.
            let steps = t_len - 1 - t;
            let mut acc = 0.0;
            if steps == 0 {
                acc = 1.0;
            } else {
                let radixes: Vec<usize> = (0..steps).flat_map(|_| [2, n_o]).collect();
                let mut factor = |digits: &[usize], i: usize| {
                    let u = t + 1 + i / 2;
                    let s = obs.states[u];
                    let o_prev = if i / 2 == 0 { o_t } else { digits[i / 2 * 2 - 1] };
                    if i % 2 == 0 {
                        tables.pi_b(digits[i], s, o_prev)
                    } else {
                        tables.bar_pi_hi(digits[i], s, o_prev, digits[i - 1])
                            * tables.pi_lo(obs.actions[u], s, digits[i])
                    }
                };
                let mut odo = Odometer::new(radixes, &mut factor);
                loop {
                    acc += odo.weight();
                    if !odo.advance(&mut factor) {
                        break;
                    }
                }
            }
            slice[o_t * 2] = acc;
            slice[o_t * 2 + 1] = acc;
        }
        let sum: f64 = slice.iter().sum();
        for v in &mut slice {
            *v /= sum;
        }
        out.push(slice);
    }
    Ok(out)
}

/// Posterior-weighted complete log-likelihood, normalized by `T`, with the
/// posterior taken at `theta` and the log-likelihood at `theta_prime`. The
/// first-step termination term is dropped, matching the Q-function
/// convention of [`em::q_value`](crate::em::q_value).
pub fn oracle_q(
    family: &PolicyFamily,
    theta_prime: &Theta,
    theta: &Theta,
    obs: &ObservationSequence,
    mu: &PriorMu,
    env: &Environment,
) -> Result<f64> {
    let tables = family.tables(theta)?;
    let tables_prime = family.tables(theta_prime)?;
    check_instance(family, obs, env)?;
    let n_o = family.spaces().n_options;
    let t_len = obs.len();

    let mut factor = |digits: &[usize], i: usize| latent_factor(&tables, obs, mu, digits, i);
    let mut odo = Odometer::new(latent_radixes(n_o, t_len), &mut factor);
    let mut total = 0.0;
    let mut weighted_score = 0.0;
    loop {
        let weight = odo.weight();
        let mut score = 0.0;
        for t in 0..t_len {
            let (s, a) = (obs.states[t], obs.actions[t]);
            let (b, o) = (odo.digits[2 * t + 1], odo.digits[2 * t + 2]);
            if t >= 1 {
                let o_prev = odo.digits[2 * t];
                score += tables_prime.pi_b(b, s, o_prev).ln();
            }
            score += tables_prime.pi_lo(a, s, o).ln();
            if b == 1 {
                score += tables_prime.pi_hi(o, s).ln();
            }
        }
        total += weight;
        weighted_score += weight * score;
        if !odo.advance(&mut factor) {
            break;
        }
    }
    Ok(weighted_score / total / t_len as f64)
}

/// Largest absolute deviations between the recursive smoothing quantities and
/// the enumeration oracle on one random instance.
#[derive(Debug, Clone)]
pub struct EquivalenceRow {
    pub instance: usize,
    pub n_states: usize,
    pub n_actions: usize,
    pub n_options: usize,
    pub t_len: usize,
    pub gamma_dev: f64,
    pub gamma2_dev: f64,
    pub alpha_dev: f64,
    pub beta_dev: f64,
    pub log_marginal_dev: f64,
    pub q_dev: f64,
}

impl EquivalenceRow {
    pub fn max_dev(&self) -> f64 {
        self.gamma_dev
            .max(self.gamma2_dev)
            .max(self.alpha_dev)
            .max(self.beta_dev)
            .max(self.log_marginal_dev)
            .max(self.q_dev)
    }
}

/// Report of [`oracle_equivalence_check`].
#[derive(Debug, Clone)]
pub struct EquivalenceReport {
    pub rows: Vec<EquivalenceRow>,
    pub tol: f64,
}

impl EquivalenceReport {
    pub fn max_dev(&self) -> f64 {
        self.rows.iter().map(|r| r.max_dev()).fold(0.0, f64::max)
    }

    pub fn all_within_tol(&self) -> bool {
        self.max_dev() <= self.tol
    }

    /// Writes one row per instance with the per-quantity deviations.
    pub fn write_csv<W: std::io::Write>(&self, out: &mut W) -> Result<()> {
        writeln!(
            out,
            "instance,n_states,n_actions,n_options,t_len,gamma,gamma2,alpha,beta,log_marginal,q"
        )?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{:.3e},{:.3e},{:.3e},{:.3e},{:.3e},{:.3e}",
                r.instance,
                r.n_states,
                r.n_actions,
                r.n_options,
                r.t_len,
                r.gamma_dev,
                r.gamma2_dev,
                r.alpha_dev,
                r.beta_dev,
                r.log_marginal_dev,
                r.q_dev
            )?;
        }
        Ok(())
    }
}

fn max_slice_dev(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Compares the recursive smoothing implementation and the Q-function against
/// this module's enumeration on seeded random small instances (mixing tabular
/// and target-seeking families, |S| <= 4, |A| <= 2, |O| <= 3, T <= 8).
pub fn oracle_equivalence_check(
    n_instances: usize,
    master_seed: u64,
    tol: f64,
) -> Result<EquivalenceReport> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(master_seed);
    let mut rows = Vec::with_capacity(n_instances);
    for instance in 0..n_instances {
        let (family, theta, theta_prime) = if instance % 4 == 3 {
            let fam = PolicyFamily::target_seeking(rng.random_range(0.05..0.5))?;
            (
                fam,
                Theta::random_target_seeking(&mut rng),
                Theta::random_target_seeking(&mut rng),
            )
        } else {
            let spaces = crate::model::Spaces::new(
                rng.random_range(2..=4),
                rng.random_range(1..=2),
                rng.random_range(2..=3),
            )?;
            let fam = PolicyFamily::tabular(spaces, rng.random_range(0.05..0.5))?;
            (
                fam,
                Theta::random_tabular(&spaces, &mut rng),
                Theta::random_tabular(&spaces, &mut rng),
            )
        };
        let spaces = *family.spaces();
        // Keep the enumeration small when the option space is large.
        let t_max = if spaces.n_options == 3 { 7 } else { 8 };
        let t_len = rng.random_range(2..=t_max);
        let env = Environment::random(&spaces, &mut rng);
        let mu = PriorMu::random(spaces.n_options, &mut rng);
        let states = (0..t_len)
            .map(|_| rng.random_range(0..spaces.n_states))
            .collect();
        let actions = (0..t_len)
            .map(|_| rng.random_range(0..spaces.n_actions))
            .collect();
        let obs = ObservationSequence::new(states, actions)?;

        let fast = crate::smoothing::smooth(&family, &theta, &obs, &mu)?;
        let fast_alpha = crate::smoothing::forward_messages(&family, &theta, &obs, &mu)?;
        let fast_beta = crate::smoothing::backward_messages(&family, &theta, &obs)?;
        let slow = oracle_smoothing(&family, &theta, &obs, &mu, &env)?;
        let slow_alpha = oracle_forward(&family, &theta, &obs, &mu, &env)?;
        let slow_beta = oracle_backward(&family, &theta, &obs, &env)?;
        let slow_lml = oracle_marginal(&family, &theta, &obs, &mu, &env)?;
        let fast_q = crate::em::q_value(&family, &theta_prime, &fast, &obs)?;
        let slow_q = oracle_q(&family, &theta_prime, &theta, &obs, &mu, &env)?;

        let mut row = EquivalenceRow {
            instance,
            n_states: spaces.n_states,
            n_actions: spaces.n_actions,
            n_options: spaces.n_options,
            t_len,
            gamma_dev: 0.0,
            gamma2_dev: 0.0,
            alpha_dev: 0.0,
            beta_dev: 0.0,
            log_marginal_dev: (fast.log_marginal() - slow_lml).abs(),
            q_dev: (fast_q - slow_q).abs(),
        };
        for t in 0..t_len {
            row.gamma_dev = row
                .gamma_dev
                .max(max_slice_dev(fast.gamma_slice(t), slow.gamma_slice(t)));
            row.alpha_dev = row
                .alpha_dev
                .max(max_slice_dev(fast_alpha.slice(t), &slow_alpha[t]));
            row.beta_dev = row
                .beta_dev
                .max(max_slice_dev(fast_beta.slice(t), &slow_beta[t]));
        }
        for j in 0..t_len - 1 {
            row.gamma2_dev = row
                .gamma2_dev
                .max(max_slice_dev(fast.gamma2_slice(j), slow.gamma2_slice(j)));
        }
        rows.push(row);
    }
    Ok(EquivalenceReport { rows, tol })
}
