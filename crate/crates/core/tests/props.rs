//! Property-based invariants over random instances.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use options_em::model::{Environment, PolicyFamily, PriorMu, Spaces, Theta};
use options_em::sim::{sample_trajectory, ObservationSequence};
use options_em::smoothing::{
    backward_messages, forward_messages, marginal_log_likelihood, smooth,
};

#[derive(Debug, Clone)]
struct Instance {
    family: PolicyFamily,
    theta: Theta,
    obs: ObservationSequence,
    mu: PriorMu,
}

fn instance_strategy() -> impl Strategy<Value = Instance> {
    (2usize..=4, 1usize..=2, 2usize..=3, 2usize..=30, any::<u64>()).prop_map(
        |(n_states, n_actions, n_options, t_len, seed)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let spaces = Spaces::new(n_states, n_actions, n_options).unwrap();
            let zeta = rng.random_range(0.02..0.6);
            let family = PolicyFamily::tabular(spaces, zeta).unwrap();
            let theta = Theta::random_tabular(&spaces, &mut rng);
            let states = (0..t_len).map(|_| rng.random_range(0..n_states)).collect();
            let actions = (0..t_len).map(|_| rng.random_range(0..n_actions)).collect();
            let obs = ObservationSequence::new(states, actions).unwrap();
            let mu = PriorMu::random(n_options, &mut rng);
            Instance {
                family,
                theta,
                obs,
                mu,
            }
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn conditional_pmfs_are_strictly_positive_and_normalized(inst in instance_strategy()) {
        let spaces = *inst.family.spaces();
        for s in 0..spaces.n_states {
            let hi_sum: f64 = (0..spaces.n_options)
                .map(|o| inst.family.pi_hi(&inst.theta, o, s).unwrap())
                .sum();
            prop_assert!((hi_sum - 1.0).abs() < 1e-12);
            for o in 0..spaces.n_options {
                prop_assert!(inst.family.pi_hi(&inst.theta, o, s).unwrap() > 0.0);
                let lo_sum: f64 = (0..spaces.n_actions)
                    .map(|a| inst.family.pi_lo(&inst.theta, a, s, o).unwrap())
                    .sum();
                prop_assert!((lo_sum - 1.0).abs() < 1e-12);
                let b_sum: f64 = (0..2)
                    .map(|b| inst.family.pi_b(&inst.theta, b, s, o).unwrap())
                    .sum();
                prop_assert!((b_sum - 1.0).abs() < 1e-12);
                for b in 0..2 {
                    let bar_sum: f64 = (0..spaces.n_options)
                        .map(|o2| inst.family.bar_pi_hi(&inst.theta, o2, s, o, b).unwrap())
                        .sum();
                    prop_assert!((bar_sum - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn terminating_bar_pi_hi_delegates_to_pi_hi(inst in instance_strategy()) {
        let spaces = *inst.family.spaces();
        for s in 0..spaces.n_states {
            for o in 0..spaces.n_options {
                for o_prev in 0..spaces.n_options {
                    prop_assert_eq!(
                        inst.family.bar_pi_hi(&inst.theta, o, s, o_prev, 1).unwrap(),
                        inst.family.pi_hi(&inst.theta, o, s).unwrap()
                    );
                }
            }
        }
    }

    #[test]
    fn smoothing_slices_are_normalized_and_consistent(inst in instance_strategy()) {
        let tables = smooth(&inst.family, &inst.theta, &inst.obs, &inst.mu).unwrap();
        let t_len = inst.obs.len();
        let n_o = inst.family.spaces().n_options;
        for t in 0..t_len {
            let sum: f64 = tables.gamma_slice(t).iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-10);
        }
        for j in 0..t_len - 1 {
            let sum: f64 = tables.gamma2_slice(j).iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-10);
            // Law of total probability across the two posteriors.
            for o in 0..n_o {
                let lhs = tables.gamma2(j, o, 0) + tables.gamma2(j, o, 1);
                let rhs = tables.gamma(j, o, 0) + tables.gamma(j, o, 1);
                prop_assert!((lhs - rhs).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn unscaled_reconstruction_is_time_uniform(inst in instance_strategy()) {
        let alpha = forward_messages(&inst.family, &inst.theta, &inst.obs, &inst.mu).unwrap();
        let beta = backward_messages(&inst.family, &inst.theta, &inst.obs).unwrap();
        let t_len = inst.obs.len();
        let mut cum = 0.0;
        let mut cum_alpha = Vec::with_capacity(t_len);
        for t in 0..t_len {
            cum += alpha.log_norm(t);
            cum_alpha.push(cum);
        }
        let mut suf = vec![0.0; t_len];
        let mut acc = 0.0;
        for t in (0..t_len).rev() {
            acc += beta.log_norm(t);
            suf[t] = acc;
        }
        let mass_at = |t: usize| {
            let dot: f64 = alpha
                .slice(t)
                .iter()
                .zip(beta.slice(t))
                .map(|(a, b)| a * b)
                .sum();
            dot.ln() + cum_alpha[t] + suf[t]
        };
        let first = mass_at(0);
        for t in 1..t_len {
            let rel = (mass_at(t) - first).abs() / first.abs().max(1.0);
            prop_assert!(rel < 1e-9, "t={} mass {} vs {}", t, mass_at(t), first);
        }
    }

    #[test]
    fn marginal_log_likelihood_is_nonpositive(inst in instance_strategy()) {
        let lml = marginal_log_likelihood(&inst.family, &inst.theta, &inst.obs, &inst.mu).unwrap();
        // A single-action space makes the exact value 0; allow rounding noise
        // accumulated across the per-step normalizers.
        prop_assert!(lml <= 1e-10, "lml = {lml}");
        prop_assert!(lml.is_finite());
    }

    #[test]
    fn sampling_is_deterministic_in_the_seed(seed in any::<u64>(), t_len in 2usize..200) {
        let fam = PolicyFamily::target_seeking(0.1).unwrap();
        let th = Theta::target_seeking(0.6, 0.7, 0.8).unwrap();
        let env = options_em::sim::make_grid_env();
        let a = sample_trajectory(&fam, &th, &env, 0, 0, t_len, seed).unwrap();
        let b = sample_trajectory(&fam, &th, &env, 0, 0, t_len, seed).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn random_environments_have_valid_rows(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spaces = Spaces::new(4, 2, 2).unwrap();
        let env = Environment::random(&spaces, &mut rng);
        for s in 0..4 {
            for a in 0..2 {
                let sum: f64 = env.row(s, a).iter().sum();
                prop_assert!((sum - 1.0).abs() < 1e-12);
                prop_assert!(env.row(s, a).iter().all(|&p| p > 0.0));
            }
        }
    }
}
