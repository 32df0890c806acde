//! Clustering of 2-D measurements into straight-line trajectories.
//!
//! A dataset of `(x, y)` points produced by several targets moving on straight
//! lines is modelled as a mixture of linear regressions with Gaussian noise.
//! The mixture is fitted by expectation-maximization ([`fit_em`]), the number
//! of lines can be chosen by an information criterion ([`select_order`]), and
//! the `eval` / `scenario` / `baselines` modules provide everything needed to
//! benchmark the fit against K-means and KNN on synthetic data.

pub mod baselines;
pub mod em;
pub mod eval;
pub mod model;
pub mod order;
pub mod rng;
pub mod scenario;

pub use baselines::{
    kmeans, knn, stratified_split, BaselineError, KMeansConfig, KMeansFit, KnnConfig,
};
pub use em::{
    e_step, fit_em, fit_em_from, initialize, m_step_component, m_step_weights,
    sequential_line_fit, EmConfig, EmError, EmFit, FitReport, MStepFailure,
};
pub use eval::{
    consistency, map_assign, match_labels, per_target_error, prmse, rmse_count, LabelMatching,
    Labeling, MetricsReport, ParamRmse,
};
pub use model::{
    log_component_density, log_likelihood, variance_floor, ComponentParams, Dataset, Measurement,
    MixtureModel, ModelError, Responsibilities,
};
pub use order::{
    fit_all_orders, n_params, penalty, select_from_fits, select_order, Criterion, OrderError,
    OrderFit, OrderSelection,
};
pub use rng::CounterRng;
pub use scenario::{builtin, generate, ScenarioError, ScenarioSpec, TargetLine};
