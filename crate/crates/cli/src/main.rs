//! Command-line front end: scenario runs (reconstruct, edit, sweep-eta),
//! the invariant selftest, and curve plotting.
//!
//! Exit codes: 0 success, 1 selftest failure, 2 configuration error,
//! 3 runtime error. All default outputs are byte-reproducible; wall-clock
//! timings only appear behind `--timings` in their own table.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rfedit_core::harness::{
    curves_csv, emit_plot, load_config, preset_config, results_csv, run_edit, run_eta_sweep,
    run_reconstruction, selftest_with, sweep_summary, timings_csv, trace_csv, Preset,
    PresetTask, ScenarioConfig, SelftestMutation,
};
use rfedit_core::{Error, Result};

const EXIT_SELFTEST_FAILED: u8 = 1;
const EXIT_CONFIG_ERROR: u8 = 2;
const EXIT_RUNTIME_ERROR: u8 = 3;

#[derive(Parser)]
#[command(
    name = "rfedit",
    version,
    about = "Inversion and editing experiments on exact mixture velocity fields"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Invert and replay every configured method, writing result, curve,
    /// and trace tables.
    Reconstruct(RunArgs),
    /// Run the six editing flag combinations on the configured scenario.
    Edit(RunArgs),
    /// Re-run the configured edit over a grid of guidance weights.
    SweepEta(SweepArgs),
    /// Run the built-in invariant suite, one line per check.
    Selftest(SelftestArgs),
    /// Render a curve CSV to an SVG line plot.
    Plot(PlotArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON scenario config; mutually exclusive with --preset.
    #[arg(long, value_name = "PATH", conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in scenario: tiny, standard, or flux-scale.
    #[arg(long, value_name = "NAME")]
    preset: Option<String>,
    /// Directory the tables are written into (created if missing).
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Offset added to every seed in the config.
    #[arg(long, value_name = "N", default_value_t = 0)]
    seed_offset: u64,
    /// Also write wall-clock timings; that table is not reproducible.
    #[arg(long)]
    timings: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Comma-separated guidance weights, each in [0, 1].
    #[arg(
        long,
        value_name = "LIST",
        value_delimiter = ',',
        default_value = "1.0,0.9,0.8,0.7"
    )]
    etas: Vec<f64>,
}

#[derive(Args)]
struct SelftestArgs {
    /// Corrupt the straight-line velocity sign to prove the suite catches
    /// a broken build.
    #[arg(long, hide = true)]
    mutate_linear_sign: bool,
}

#[derive(Args)]
struct PlotArgs {
    /// Curve CSV produced by the reconstruct subcommand.
    #[arg(long, value_name = "PATH")]
    input: PathBuf,
    /// Directory the SVG is written into (created if missing).
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Reconstruct(args) => run_with_config(&args, PresetTask::Reconstruct, |cfg| {
            cmd_reconstruct(cfg, &args)
        }),
        Command::Edit(args) => {
            run_with_config(&args, PresetTask::Edit, |cfg| cmd_edit(cfg, &args))
        }
        Command::SweepEta(args) => run_with_config(&args.run, PresetTask::Edit, |cfg| {
            cmd_sweep(cfg, &args)
        }),
        Command::Selftest(args) => cmd_selftest(&args),
        Command::Plot(args) => match cmd_plot(&args) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => fail(&e),
        },
    }
}

/// Resolves --config/--preset, then hands the config to the task body.
/// Resolution problems are config errors; the body classifies its own.
fn run_with_config(
    args: &RunArgs,
    task: PresetTask,
    body: impl FnOnce(ScenarioConfig) -> Result<()>,
) -> ExitCode {
    let mut config = match resolve_config(args, task) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG_ERROR);
        }
    };
    if args.seed_offset != 0 {
        config.seeds = config
            .seeds
            .iter()
            .map(|s| s.saturating_add(args.seed_offset))
            .collect();
    }
    match body(config) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}

fn resolve_config(args: &RunArgs, task: PresetTask) -> Result<ScenarioConfig> {
    match (&args.config, &args.preset) {
        (Some(path), None) => load_config(path),
        (None, Some(name)) => Ok(preset_config(Preset::from_tag(name)?, task)),
        (None, None) => Err(Error::config("pass either --config or --preset")),
        (Some(_), Some(_)) => unreachable!("clap rejects the combination"),
    }
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    let code = match e {
        Error::InvalidConfig { .. } | Error::Parse { .. } => EXIT_CONFIG_ERROR,
        _ => EXIT_RUNTIME_ERROR,
    };
    ExitCode::from(code)
}

fn write_table(dir: &Path, name: &str, text: &str, rows: usize) -> Result<()> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, text)?;
    println!("wrote {} ({rows} rows)", path.display());
    Ok(())
}

fn cmd_reconstruct(config: ScenarioConfig, args: &RunArgs) -> Result<()> {
    let out = run_reconstruction(&config)?;
    let names = &config.output;
    write_table(&args.out, &names.results, &results_csv(&out.rows), out.rows.len())?;
    write_table(&args.out, &names.curves, &curves_csv(&out.curves), out.curves.len())?;
    write_table(
        &args.out,
        &names.trace_summary,
        &trace_csv(&out.trace_rows),
        out.trace_rows.len(),
    )?;
    if args.timings {
        write_table(&args.out, &names.timings, &timings_csv(&out.rows), out.rows.len())?;
    }
    Ok(())
}

fn cmd_edit(config: ScenarioConfig, args: &RunArgs) -> Result<()> {
    let rows = run_edit(&config)?;
    let names = &config.output;
    write_table(&args.out, &names.results, &results_csv(&rows), rows.len())?;
    if args.timings {
        write_table(&args.out, &names.timings, &timings_csv(&rows), rows.len())?;
    }
    Ok(())
}

fn cmd_sweep(config: ScenarioConfig, args: &SweepArgs) -> Result<()> {
    let out = run_eta_sweep(&config, &args.etas)?;
    let names = &config.output;
    write_table(
        &args.run.out,
        &names.results,
        &results_csv(&out.rows),
        out.rows.len(),
    )?;
    let summary = sweep_summary(&out.trend);
    write_table(
        &args.run.out,
        &names.sweep_summary,
        &summary,
        out.trend.etas.len(),
    )?;
    if args.run.timings {
        write_table(
            &args.run.out,
            &names.timings,
            &timings_csv(&out.rows),
            out.rows.len(),
        )?;
    }
    Ok(())
}

fn cmd_selftest(args: &SelftestArgs) -> ExitCode {
    let mutation = if args.mutate_linear_sign {
        SelftestMutation::FlipLinearVelocitySign
    } else {
        SelftestMutation::None
    };
    match selftest_with(mutation) {
        Ok(report) => {
            print!("{}", report.render());
            if report.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_SELFTEST_FAILED)
            }
        }
        Err(e) => fail(&e),
    }
}

fn cmd_plot(args: &PlotArgs) -> Result<()> {
    let text = fs::read_to_string(&args.input).map_err(|e| Error::Parse {
        what: args.input.display().to_string(),
        detail: e.to_string(),
    })?;
    let svg = emit_plot(&text)?;
    fs::create_dir_all(&args.out)?;
    let path = args.out.join("curves.svg");
    fs::write(&path, &svg)?;
    println!("wrote {}", path.display());
    Ok(())
}
