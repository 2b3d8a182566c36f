//! Bootstrapped ensembles for transitions and rewards, and the
//! Bradley-Terry preference model built on top of them.

mod lbfgs;
pub mod preference;
pub mod reward;
pub mod transition;

pub use preference::{preference_prob, preference_uncertainty, sa_return, sigmoid, PreferenceRecord};
pub use reward::{centered_reward_prior, fit_anchored_reward_ensemble, fit_reward_ensemble, RewardEnsemble, RewardFitParams};
pub use transition::{fit_transition_ensemble, MdpShape, TransitionEnsemble, TransitionFitParams};

/// Largest pairwise spread of a quantity across ensemble members.
pub(crate) fn spread(values: impl IntoIterator<Item = f64>) -> f64 {
    let (lo, hi) = values.into_iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if lo.is_finite() {
        hi - lo
    } else {
        0.0
    }
}
