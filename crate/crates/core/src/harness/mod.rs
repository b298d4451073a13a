//! Configuration, seeded Monte Carlo experiments and result files.

pub mod config;
pub mod output;
pub mod run;

pub use config::{parse_config, snr_to_power, ExperimentConfig, Solver, SweepPoint, TargetMode};
pub use output::{emit_results, write_pep_csv, write_pep_sequences_csv, write_sweep_csv, write_trials_csv};
pub use run::{
    aggregate, draw_scenario, run_pep_analysis, run_sweep, run_trial, setup_trial, with_threads, AggregateRow, Experiment, PepRow, PepSequenceRow, Scenario,
    SolverOutcome, SweepResult, TrialRecord, TrialSetup,
};
