//! Experiment harness: validated JSON scenario configs, built-in presets,
//! reconstruction/edit/sweep runners, CSV and SVG emission, and the
//! invariant selftest suite backing the command-line interface.

pub mod config;
pub mod csv;
pub mod plot;
pub mod presets;
pub mod run;
pub mod selftest;

pub use config::{load_config, ScenarioConfig};
pub use csv::{
    curves_csv, results_csv, sweep_summary, timings_csv, trace_csv, CURVE_HEADER,
};
pub use plot::emit_plot;
pub use presets::{preset_config, Preset, PresetTask};
pub use run::{
    run_edit, run_eta_sweep, run_reconstruction, CurveRow, ReconOutput, ResultRow,
    SweepOutput, SweepTrend, TraceRow,
};
pub use selftest::{selftest, selftest_with, SelftestMutation, SelftestReport};
