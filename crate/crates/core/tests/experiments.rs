//! Qualitative behavior of the experiment drivers at desk scale.

use options_em::em::{em_run, EmConfig};
use options_em::experiment::{random_init_sweep, ExperimentConfig};
use options_em::model::{PolicyFamily, PriorMu, Theta};
use options_em::sim::{make_grid_env, sample_stationary};
use options_em::smoothing::forward_messages;

#[test]
fn prior_choice_moves_alpha_but_barely_moves_the_final_estimate() {
    let family = PolicyFamily::target_seeking(0.1).unwrap();
    let theta_star = Theta::target_seeking(0.6, 0.7, 0.8).unwrap();
    let env = make_grid_env();
    let traj = sample_stationary(&family, &theta_star, &env, 2000, 2000, 5).unwrap();
    let obs = traj.observations();
    let theta0 = Theta::target_seeking(0.5, 0.6, 0.7).unwrap();

    let point = PriorMu::point_mass(2, 1).unwrap();
    let uniform = PriorMu::uniform(2);
    let alpha_point = forward_messages(&family, &theta0, &obs, &point).unwrap();
    let alpha_uniform = forward_messages(&family, &theta0, &obs, &uniform).unwrap();
    let first_step_tv: f64 = alpha_point
        .slice(0)
        .iter()
        .zip(alpha_uniform.slice(0))
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / 2.0;
    assert!(first_step_tv > 0.1, "tv = {first_step_tv}");

    let mut finals = Vec::new();
    for mu in [point, uniform] {
        let config = EmConfig {
            n_iters: 200,
            mu,
            theta0: theta0.clone(),
            early_stop_tol: 0.0,
        };
        finals.push(em_run(&family, &obs, &config).unwrap().final_theta().clone());
    }
    let dist = finals[0].l2_distance(&finals[1]).unwrap();
    assert!(dist < 0.02, "final estimates {dist} apart");
}

#[test]
fn early_iterations_decay_in_aggregate_and_most_paths_improve() {
    let config = ExperimentConfig {
        t_list: vec![2000, 5000],
        n_paths: 10,
        n_iters: 300,
        master_seed: 0,
        ..ExperimentConfig::desk(0)
    };
    let table = options_em::experiment::run_experiment(&config, None).unwrap();

    // The mean error is non-increasing over the first ten iterations, with
    // at most one violation tolerated across both lengths.
    let mut violations = 0;
    for t_len in [2000, 5000] {
        let curve = table.mean_err(t_len);
        for n in 0..10 {
            if curve[n + 1] > curve[n] {
                violations += 1;
            }
        }
    }
    assert!(violations <= 1, "{violations} early-phase increases");

    // Most individual paths end closer to the truth than they started.
    for t_len in [2000, 5000] {
        let improved = table
            .runs
            .iter()
            .filter(|r| r.t_len == t_len)
            .filter(|r| r.errs[config.n_iters] < r.errs[0])
            .count();
        assert!(improved > 5, "T={t_len}: only {improved}/10 paths improved");
    }
}

#[test]
fn random_initialization_scales_behave_as_expected() {
    let config = ExperimentConfig {
        t_list: vec![8000],
        n_paths: 8,
        n_iters: 300,
        master_seed: 3,
        ..ExperimentConfig::desk(3)
    };
    let legs = random_init_sweep(&config, &[0.1, 0.2, 0.3], None).unwrap();
    let curve = |i: usize| legs[i].table.mean_err(8000);
    let (c1, c2, c3) = (curve(0), curve(1), curve(2));

    // Initial errors grow with the scale.
    assert!(c1[0] < c2[0] && c2[0] < c3[0]);
    // The intermediate scale at least halves its initial error on average.
    assert!(
        c2[300] <= 0.5 * c2[0],
        "w=0.2: {} -> {}",
        c2[0],
        c2[300]
    );
    // The largest scale fails to reach the vicinity of the truth: its final
    // error barely improves and stays above both smaller scales'.
    assert!(c3[300] > 0.8 * c3[0], "w=0.3 ratio {}", c3[300] / c3[0]);
    assert!(c3[300] > c1[300] && c3[300] > c2[300]);
}
