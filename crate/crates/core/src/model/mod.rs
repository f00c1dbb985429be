//! Domain types, link functions, likelihood, and synthetic-data generators.

mod design;
mod likelihood;
mod link;
mod simulate;
mod spline;
mod types;

pub use design::{CovariateMatrix, TransformSpec, TransformTerm};
pub use likelihood::{log_likelihood, q_mean};
pub use link::{
    apply_zero_inflation, composition_from_state, composition_linear_positive,
    composition_logistic_normal, Link,
};
pub use simulate::{
    sample_multinomial, simulate_dataset, DepthLaw, EffectPattern, ScenarioSpec, SigmaLaw,
    SimulatedDataset, YBlockSpec,
};
pub use spline::BSplineBasis;
pub use types::{Hyperparams, LatentState, OtuTable};
