//! Solution-separation ARAIM with correct false-alert allocation under
//! time-correlated pseudorange noise.
//!
//! The crate is organized by pipeline stage:
//!
//! * [`stats`] — standard-normal tail function, inverse, and error function;
//! * [`navsol`] — snapshot weighted-least-squares full and sub-solutions
//!   with all separation covariances;
//! * [`araim`] — decision thresholds, vertical protection levels,
//!   detection, and availability statistics;
//! * [`gmpfa`] — first-order Gauss-Markov noise model, the analytical
//!   conditional outlier probability, the survivor Monte-Carlo estimator,
//!   and the correction coefficient that repairs the per-sample
//!   false-alert probability for correlated noise;
//! * [`scenario`] — geometry files, synthetic constellations, and
//!   elevation-binned error budgets.

pub mod araim;
pub mod error;
pub mod gmpfa;
pub mod navsol;
pub mod scenario;
pub mod stats;

pub use araim::{
    availability_stats, decision_threshold, detect, evaluate_epoch, max_bias_term,
    missed_detection_bound, nominal_bias_term, pfa_per_sample, vertical_protection_level,
    AvailabilitySummary, ExclusionIntegrity, IntegrityConfig, IntegrityOutput, PfaMode,
};
pub use error::{Error, Result};
pub use gmpfa::{
    conditional_pdf_k1, correction_coefficient, mc_conditional_pout, pout1_analytic,
    quantile_bound, simulate_false_alerts, FalseAlertReport, GmParams, PfaSeries,
};
pub use navsol::{
    full_solution, separation_covariance, solve_position, subsolution, vertical_separation,
    ErrorBudget, FullSolution, GeometryEpoch, NavEstimate, SolutionSet, SubSolution,
};
pub use scenario::{
    apply_budget, load_geometry, load_geometry_str, save_geometry, synth_constellation,
    BudgetConfig, LoadedEpoch, LoadedGeometry, SkyPoint,
};
pub use stats::{erf, q_tail, q_tail_inv, Probability, Quantile};
