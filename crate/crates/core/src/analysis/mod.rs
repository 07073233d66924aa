//! Front extraction, sandwich checks against the front law, the
//! sub-solution residual and the upper envelope of the linear problem.

mod envelope;
mod front;
mod subsolution;

pub use envelope::{comparison_test, verify_upper_envelope, ComparisonReport, EnvelopeReport, EnvelopeRow};
pub use front::{
    fit_log_slope, level_set_position, monotone_violation, sandwich_check, FrontTrace, LevelPosition, SandwichReport,
    SandwichRow,
};
pub use subsolution::{
    build_subsolution, lambda_zero, verify_subsolution, Regime, SubSolution, SubsolutionReport, SubsolutionRow,
};
