//! Scenario documents, experiment drivers and file output.

mod config;
mod output;
mod report;
mod run;

pub use config::{
    parse_config, CostSection, GadSection, GridSection, OutputsSection, PlantSection, Scenario,
    ScenarioConfig, StealthSection,
};
pub use output::{trajectory_csv, write_atomic, SUMMARY_FILE, TRAJECTORY_FILE};
pub use report::{
    config_hash, percent_increase, AttackSummary, GridInfo, NominalSummary, Provenance, SummaryReport,
};
pub use run::{
    attack_pipeline, grad_check, nominal_baseline, run_attack, run_grad_check, run_nominal, run_sweep,
    smooth_probe_attack, AttackRun, GradCheckEntry, GradCheckPass, GradCheckReport, NominalRun, Outcome,
    SweepParameter, SweepReport, SweepRow, GRAD_CHECK_GAIN_SCALE, GRAD_CHECK_MIN_SHRINK, GRAD_CHECK_POINTS, GRAD_CHECK_TOL,
};

/// Caveat printed by `reproduce-paper`.
pub const PRESET_CAVEAT: &str = "note: the reference study does not report its initial state, \
step sizes or initialization; this preset uses x0 = [1, 1], lambda_K = lambda_delta = 1e-2 and \
a constant initial attack of 0.37, so numbers are not expected to match the published ones";
