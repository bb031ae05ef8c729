//! Imitation learning of hierarchical options-with-failure policies from
//! unsegmented state-action demonstrations.
//!
//! An expert acts through a three-level policy: a high level policy picks an
//! option given the state, a low level policy picks an action given state and
//! option, and a termination policy decides whether the current option ends.
//! On non-termination the option is additionally resampled uniformly with a
//! small failure probability `zeta`, which guarantees one-step mixing of the
//! latent chain. Only states and actions are observed; options and
//! termination indicators are latent.
//!
//! The crate provides:
//!
//! - [`model`]: spaces, parameter sets, the policy triple and the combined
//!   per-step factor used by all recursions.
//! - [`sim`]: trajectory sampling from the hierarchical decision process,
//!   including approximately stationary sampling via burn-in, and the
//!   four-state line-world environment used by the bundled experiments.
//! - [`smoothing`]: scaled forward-backward computation of the posterior of
//!   the latent `(option, termination)` pairs, windowed variants, and the
//!   marginal log-likelihood.
//! - [`em`]: the Baum-Welch style EM loop with exact M-steps for both
//!   supported policy families.
//! - [`oracle`]: brute-force enumeration over all latent paths on small
//!   instances, used as ground truth in tests.
//! - [`stability`]: mixing constants and empirical checks of the geometric
//!   forgetting and parameter-perturbation behavior of the smoother.
//! - [`experiment`]: seeded multi-path experiment drivers with deterministic
//!   CSV output.
//!
//! # Example
//!
//! Sample a demonstration from a known expert and recover its parameters:
//!
//! ```
//! use options_em::em::{em_run, EmConfig};
//! use options_em::model::{PolicyFamily, PriorMu, Theta};
//! use options_em::sim::{make_grid_env, sample_stationary};
//!
//! let family = PolicyFamily::target_seeking(0.1)?;
//! let expert = Theta::target_seeking(0.6, 0.7, 0.8)?;
//! let env = make_grid_env();
//! let demo = sample_stationary(&family, &expert, &env, 2000, 2000, 7)?;
//!
//! let config = EmConfig {
//!     n_iters: 50,
//!     mu: PriorMu::uniform(2),
//!     theta0: Theta::target_seeking(0.5, 0.6, 0.7)?,
//!     early_stop_tol: 0.0,
//! };
//! let trace = em_run(&family, &demo.observations(), &config)?;
//! let err = trace.final_theta().l2_distance(&expert)?;
//! assert!(err < trace.thetas[0].l2_distance(&expert)?);
//! # Ok::<(), options_em::Error>(())
//! ```

pub mod em;
pub mod error;
pub mod experiment;
pub mod model;
pub mod oracle;
pub mod sim;
pub mod smoothing;
pub mod stability;

pub use error::{Error, Result};

pub(crate) mod fmt {
    /// Formats a float with 12 significant digits for CSV output.
    pub(crate) fn sig12(x: f64) -> String {
        if x.is_nan() {
            "nan".into()
        } else {
            format!("{x:.11e}")
        }
    }
}
