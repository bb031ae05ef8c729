//! Sampling expert trajectories from the hierarchical decision process.
//!
//! Sampling is driven by ChaCha8, seeded explicitly, so trajectories are
//! reproducible bit-for-bit across platforms. Per step the draws happen in a
//! fixed order (termination, option, action, next state), each consuming one
//! uniform. Independent per-path streams are derived from a master seed via
//! the ChaCha stream counter (see [`path_rng`]).

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{Environment, PolicyFamily, PolicyTables, Theta};

/// Pre-burn-in initial condition used by [`sample_stationary`]. Arbitrary;
/// the chain forgets it geometrically fast.
const STATIONARY_INIT: (usize, usize) = (1, 1);

/// Observed part of a demonstration: states and actions, both of length `T`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObservationSequence {
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
}

impl ObservationSequence {
    pub fn new(states: Vec<usize>, actions: Vec<usize>) -> Result<Self> {
        if states.len() != actions.len() {
            return Err(Error::LengthMismatch(format!(
                "states length {} != actions length {}",
                states.len(),
                actions.len()
            )));
        }
        Ok(Self { states, actions })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Copy of the sub-sequence `[start, end)`.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start > end || end > self.len() {
            return Err(Error::WindowOutOfRange {
                start,
                end,
                radius: 0,
                len: self.len(),
            });
        }
        Ok(Self {
            states: self.states[start..end].to_vec(),
            actions: self.actions[start..end].to_vec(),
        })
    }
}

/// A sampled path: observed states and actions plus the hidden options and
/// termination indicators.
///
/// `o0` is the option active *before* the first recorded step, i.e. the
/// conditioning option for `terminations[0]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trajectory {
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
    pub options: Vec<usize>,
    pub terminations: Vec<usize>,
    pub o0: usize,
    pub seed: u64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// The observable part of the trajectory.
    pub fn observations(&self) -> ObservationSequence {
        ObservationSequence {
            states: self.states.clone(),
            actions: self.actions.clone(),
        }
    }

    /// Writes `t,s,a[,o,b]` rows with a header.
    pub fn write_csv<W: Write>(&self, out: &mut W, include_hidden: bool) -> Result<()> {
        if include_hidden {
            writeln!(out, "t,s,a,o,b")?;
            for t in 0..self.len() {
                writeln!(
                    out,
                    "{},{},{},{},{}",
                    t, self.states[t], self.actions[t], self.options[t], self.terminations[t]
                )?;
            }
        } else {
            writeln!(out, "t,s,a")?;
            for t in 0..self.len() {
                writeln!(out, "{},{},{}", t, self.states[t], self.actions[t])?;
            }
        }
        Ok(())
    }
}

/// The four-state line world: from `s`, RIGHT moves uniformly into
/// `{s, ..., 3}` and LEFT uniformly into `{0, ..., s}`.
pub fn make_grid_env() -> Environment {
    let n = 4;
    let mut probs = vec![0.0; n * 2 * n];
    for s in 0..n {
        // action 0 = LEFT
        for s2 in 0..=s {
            probs[(s * 2) * n + s2] = 1.0 / (s + 1) as f64;
        }
        // action 1 = RIGHT
        for s2 in s..n {
            probs[(s * 2 + 1) * n + s2] = 1.0 / (n - s) as f64;
        }
    }
    Environment::new(n, 2, probs).expect("grid environment is a valid kernel")
}

/// RNG for one sampled path: `master_seed` picks the key, `salt` the ChaCha
/// stream, so distinct salts give independent reproducible streams.
pub fn path_rng(master_seed: u64, salt: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(salt);
    rng
}

/// Inverse-CDF draw from a pmf slice using a single uniform.
#[inline]
fn sample_pmf<R: Rng + ?Sized>(rng: &mut R, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

fn check_env_matches(family: &PolicyFamily, env: &Environment) -> Result<()> {
    let spaces = family.spaces();
    if env.n_states() != spaces.n_states || env.n_actions() != spaces.n_actions {
        return Err(Error::LengthMismatch(format!(
            "environment is {}x{}, family expects {}x{}",
            env.n_states(),
            env.n_actions(),
            spaces.n_states,
            spaces.n_actions
        )));
    }
    Ok(())
}

/// Core simulation loop shared by the public sampling entry points.
fn simulate<R: Rng + ?Sized>(
    tables: &PolicyTables,
    env: &Environment,
    o0: usize,
    s1: usize,
    steps: usize,
    rng: &mut R,
) -> Trajectory {
    let n_o = tables.spaces().n_options;
    let mut states = Vec::with_capacity(steps);
    let mut actions = Vec::with_capacity(steps);
    let mut options = Vec::with_capacity(steps);
    let mut terms = Vec::with_capacity(steps);
    let mut option_row = vec![0.0; n_o];
    let mut action_row = vec![0.0; tables.spaces().n_actions];

    let mut s = s1;
    let mut o_prev = o0;
    for _ in 0..steps {
        let b = if rng.random::<f64>() < tables.pi_b(1, s, o_prev) {
            1
        } else {
            0
        };
        for (o, slot) in option_row.iter_mut().enumerate() {
            *slot = tables.bar_pi_hi(o, s, o_prev, b);
        }
        let o = sample_pmf(rng, &option_row);
        for (a, slot) in action_row.iter_mut().enumerate() {
            *slot = tables.pi_lo(a, s, o);
        }
        let a = sample_pmf(rng, &action_row);
        let s_next = sample_pmf(rng, env.row(s, a));

        states.push(s);
        actions.push(a);
        options.push(o);
        terms.push(b);
        o_prev = o;
        s = s_next;
    }

    Trajectory {
        states,
        actions,
        options,
        terminations: terms,
        o0,
        seed: 0,
    }
}

/// Samples a trajectory of length `t_len` from the hierarchical decision
/// process started at `(o0, s1)`.
///
/// Per step: `b_t ~ pi_b(.|s_t, o_{t-1})`, `o_t ~ bar_pi_hi(.|s_t, o_{t-1}, b_t)`,
/// `a_t ~ pi_lo(.|s_t, o_t)`, `s_{t+1} ~ P(.|s_t, a_t)`.
pub fn sample_trajectory(
    family: &PolicyFamily,
    theta: &Theta,
    env: &Environment,
    o0: usize,
    s1: usize,
    t_len: usize,
    seed: u64,
) -> Result<Trajectory> {
    let tables = family.tables(theta)?;
    check_env_matches(family, env)?;
    let spaces = family.spaces();
    if o0 >= spaces.n_options {
        return Err(Error::IndexOutOfRange {
            what: "option",
            value: o0,
            limit: spaces.n_options,
        });
    }
    if s1 >= spaces.n_states {
        return Err(Error::IndexOutOfRange {
            what: "state",
            value: s1,
            limit: spaces.n_states,
        });
    }
    if t_len < 2 {
        return Err(Error::SequenceTooShort { t: t_len });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut traj = simulate(&tables, env, o0, s1, t_len, &mut rng);
    traj.seed = seed;
    Ok(traj)
}

/// Samples `burn_in + t_len` steps from an arbitrary initial condition and
/// returns the last `t_len` steps, so the retained window is approximately
/// stationary. The returned `o0` is the hidden option active just before the
/// window starts.
pub fn sample_stationary(
    family: &PolicyFamily,
    theta: &Theta,
    env: &Environment,
    t_len: usize,
    burn_in: usize,
    seed: u64,
) -> Result<Trajectory> {
    let tables = family.tables(theta)?;
    check_env_matches(family, env)?;
    if t_len < 2 {
        return Err(Error::SequenceTooShort { t: t_len });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_stationary_with_rng(&tables, env, t_len, burn_in, seed, &mut rng)
}

/// Same as [`sample_stationary`] but drawing from a caller-provided RNG,
/// typically built with [`path_rng`]. `seed_tag` is recorded on the
/// trajectory for bookkeeping only.
pub fn sample_stationary_with_rng<R: Rng + ?Sized>(
    tables: &PolicyTables,
    env: &Environment,
    t_len: usize,
    burn_in: usize,
    seed_tag: u64,
    rng: &mut R,
) -> Result<Trajectory> {
    if t_len < 2 {
        return Err(Error::SequenceTooShort { t: t_len });
    }
    let (o0, s1) = STATIONARY_INIT;
    let full = simulate(tables, env, o0, s1, burn_in + t_len, rng);
    let o0_window = if burn_in == 0 {
        o0
    } else {
        full.options[burn_in - 1]
    };
    Ok(Trajectory {
        states: full.states[burn_in..].to_vec(),
        actions: full.actions[burn_in..].to_vec(),
        options: full.options[burn_in..].to_vec(),
        terminations: full.terminations[burn_in..].to_vec(),
        o0: o0_window,
        seed: seed_tag,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Spaces, Theta, LEFT, RIGHT};
    use std::collections::HashMap;

    #[test]
    fn grid_env_rows_match_uniform_rule() {
        let env = make_grid_env();
        // From the second state, RIGHT reaches {1,2,3} uniformly.
        assert!((env.prob(2, 1, RIGHT) - 1.0 / 3.0).abs() < 1e-15);
        // From the left end state, LEFT stays put.
        assert_eq!(env.prob(0, 0, LEFT), 1.0);
        for s in 0..4 {
            for a in 0..2 {
                let sum: f64 = env.row(s, a).iter().sum();
                assert!((sum - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn fixed_seed_replays_identical_trajectory() {
        let fam = PolicyFamily::target_seeking(0.1).unwrap();
        let th = Theta::target_seeking(0.6, 0.7, 0.8).unwrap();
        let env = make_grid_env();
        let a = sample_trajectory(&fam, &th, &env, 0, 0, 500, 42).unwrap();
        let b = sample_trajectory(&fam, &th, &env, 0, 0, 500, 42).unwrap();
        assert_eq!(a, b);
        let c = sample_trajectory(&fam, &th, &env, 0, 0, 500, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn near_degenerate_termination_gives_all_ones() {
        let spaces = Spaces::new(2, 2, 2).unwrap();
        let fam = PolicyFamily::tabular(spaces, 0.1).unwrap();
        // pi_b(1|.) as close to 1 as the floor allows.
        let th = Theta::tabular(
            &spaces,
            vec![0.5; 4],
            vec![0.5; 8],
            vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0],
        )
        .unwrap();
        let env = Environment::new(2, 2, vec![0.5; 8]).unwrap();
        let traj = sample_trajectory(&fam, &th, &env, 0, 0, 1000, 9).unwrap();
        assert!(traj.terminations.iter().all(|&b| b == 1));
    }

    #[test]
    fn switch_frequency_on_non_termination_matches_zeta() {
        let fam = PolicyFamily::target_seeking(0.1).unwrap();
        let th = Theta::target_seeking(0.6, 0.7, 0.8).unwrap();
        let env = make_grid_env();
        let traj = sample_trajectory(&fam, &th, &env, 0, 0, 100_000, 4242).unwrap();
        let mut n_cond = 0usize;
        let mut n_switch = 0usize;
        let mut o_prev = traj.o0;
        for t in 0..traj.len() {
            if traj.terminations[t] == 0 {
                n_cond += 1;
                if traj.options[t] != o_prev {
                    n_switch += 1;
                }
            }
            o_prev = traj.options[t];
        }
        // Given b_t = 0 the option switches with probability zeta * (|O|-1)/|O|.
        let p = 0.1 * 0.5;
        let freq = n_switch as f64 / n_cond as f64;
        let se = (p * (1.0 - p) / n_cond as f64).sqrt();
        assert!(
            (freq - p).abs() < 3.0 * se,
            "freq {freq}, expected {p} +- {}",
            3.0 * se
        );
    }

    #[test]
    fn single_step_frequencies_match_eval_probabilities() {
        // One-state environment so every step shares the same state context.
        let spaces = Spaces::new(1, 2, 2).unwrap();
        let fam = PolicyFamily::tabular(spaces, 0.2).unwrap();
        let mut rng = path_rng(77, 0);
        let th = Theta::random_tabular(&spaces, &mut rng);
        let env = Environment::new(1, 2, vec![1.0, 1.0]).unwrap();
        let n = 100_000;
        let traj = sample_trajectory(&fam, &th, &env, 0, 0, n, 123).unwrap();

        // freq(b_t = 1 | o_{t-1} = o) against pi_b(1 | s=0, o).
        let mut count: HashMap<usize, (usize, usize)> = HashMap::new();
        let mut o_prev = traj.o0;
        for t in 0..n {
            let e = count.entry(o_prev).or_default();
            e.0 += 1;
            e.1 += traj.terminations[t];
            o_prev = traj.options[t];
        }
        for (o, (total, ones)) in count {
            let p = fam.pi_b(&th, 1, 0, o).unwrap();
            let freq = ones as f64 / total as f64;
            let se = (p * (1.0 - p) / total as f64).sqrt();
            assert!((freq - p).abs() < 4.0 * se, "pi_b freq {freq} vs {p}");
        }

        // freq(a_t = a | o_t = o) against pi_lo(a | s=0, o).
        let mut count: HashMap<(usize, usize), usize> = HashMap::new();
        let mut tot: HashMap<usize, usize> = HashMap::new();
        for t in 0..n {
            *count.entry((traj.options[t], traj.actions[t])).or_default() += 1;
            *tot.entry(traj.options[t]).or_default() += 1;
        }
        for ((o, a), c) in count {
            let p = fam.pi_lo(&th, a, 0, o).unwrap();
            let total = tot[&o];
            let freq = c as f64 / total as f64;
            let se = (p * (1.0 - p) / total as f64).sqrt();
            assert!((freq - p).abs() < 4.0 * se, "pi_lo freq {freq} vs {p}");
        }
    }

    #[test]
    fn stationary_with_zero_burn_in_reduces_to_plain_sampling() {
        let fam = PolicyFamily::target_seeking(0.1).unwrap();
        let th = Theta::target_seeking(0.6, 0.7, 0.8).unwrap();
        let env = make_grid_env();
        let a = sample_stationary(&fam, &th, &env, 300, 0, 5).unwrap();
        let b = sample_trajectory(&fam, &th, &env, 1, 1, 300, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn post_burn_in_marginal_is_approximately_invariant() {
        let fam = PolicyFamily::target_seeking(0.1).unwrap();
        let th = Theta::target_seeking(0.6, 0.7, 0.8).unwrap();
        let env = make_grid_env();
        let n = 100_000;
        let traj = sample_stationary(&fam, &th, &env, n + 1, 10_000, 31).unwrap();

        // Empirical marginal of (O_{t-1}, S_t) at lag 0 vs lag 1.
        let pair = |i: usize| -> (usize, usize) {
            let o = if i == 0 { traj.o0 } else { traj.options[i - 1] };
            (o, traj.states[i])
        };
        let mut h0 = [0.0; 2 * 4];
        let mut h1 = [0.0; 2 * 4];
        for i in 0..n {
            let (o, s) = pair(i);
            h0[o * 4 + s] += 1.0 / n as f64;
            let (o, s) = pair(i + 1);
            h1[o * 4 + s] += 1.0 / n as f64;
        }
        let tv: f64 = h0
            .iter()
            .zip(&h1)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            / 2.0;
        assert!(tv < 0.02, "tv = {tv}");
    }

    #[test]
    fn csv_round_trip_shapes() {
        let fam = PolicyFamily::target_seeking(0.1).unwrap();
        let th = Theta::target_seeking(0.6, 0.7, 0.8).unwrap();
        let env = make_grid_env();
        let traj = sample_trajectory(&fam, &th, &env, 0, 0, 5, 1).unwrap();
        let mut hidden = Vec::new();
        traj.write_csv(&mut hidden, true).unwrap();
        let text = String::from_utf8(hidden).unwrap();
        assert!(text.starts_with("t,s,a,o,b\n"));
        assert_eq!(text.lines().count(), 6);
        let mut plain = Vec::new();
        traj.write_csv(&mut plain, false).unwrap();
        assert!(String::from_utf8(plain).unwrap().starts_with("t,s,a\n"));
    }
}
