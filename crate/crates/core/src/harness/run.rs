//! Experiment orchestration: reconstruction and editing sweeps over
//! (method, seed) cells, with one fresh field and random stream per cell
//! so evaluation counts and draws never interleave across runs.

use std::time::Instant;

use rayon::prelude::*;

use crate::baselines::{fixed_noise_trace, midpoint_invert};
use crate::dna::{dna_invert, reconstruct_trajectory, DnaTrace};
use crate::error::{Error, Result};
use crate::flow::{euler_forward, vanilla_invert, Schedule};
use crate::harness::config::ScenarioConfig;
use crate::math::RngStream;
use crate::metrics::{mse, target_loglik};
use crate::mvg::{eta_sweep, mvg_edit, EditConfig};
use crate::velocity::{Condition, VelocityField};
use crate::Vector;

/// One experiment outcome. Optional metrics stay empty in the CSV when a
/// run kind does not produce them.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub method: String,
    pub seed: u64,
    pub steps: usize,
    pub nfe: u64,
    pub terminal_mse: Option<f64>,
    pub background_mse: Option<f64>,
    pub target_loglik: Option<f64>,
    pub eta: Option<f64>,
    pub flags: String,
    /// Diagnostic only; emitted to the timings sidecar, never to the
    /// deterministic outputs.
    pub wall_time_ms: Option<f64>,
}

/// Per-step reconstruction error against the inversion trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    pub method: String,
    pub seed: u64,
    pub t: usize,
    pub sigma: f64,
    pub error: f64,
}

/// Per-step trace summary for the inversion methods that produce one.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub method: String,
    pub seed: u64,
    pub t: usize,
    pub sigma: f64,
    pub offset_norm: f64,
    pub noise_step_norm: f64,
}

#[derive(Debug, Clone)]
pub struct ReconOutput {
    pub rows: Vec<ResultRow>,
    pub curves: Vec<CurveRow>,
    pub trace_rows: Vec<TraceRow>,
}

/// Group means per eta (descending) and the non-increasing trend flags,
/// allowing ties within twice the standard error of the paired per-seed
/// differences.
#[derive(Debug, Clone)]
pub struct SweepTrend {
    pub etas: Vec<f64>,
    pub background_means: Vec<f64>,
    pub loglik_means: Vec<f64>,
    pub background_non_increasing: bool,
    pub loglik_non_increasing: bool,
}

#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub rows: Vec<ResultRow>,
    pub trend: SweepTrend,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum ReconMethod {
    Dna,
    FixedNoise,
    Midpoint,
    Vanilla,
}

impl ReconMethod {
    fn tag(self) -> &'static str {
        match self {
            ReconMethod::Dna => "dna",
            ReconMethod::FixedNoise => "fixed_noise",
            ReconMethod::Midpoint => "midpoint",
            ReconMethod::Vanilla => "vanilla",
        }
    }

    fn from_tag(tag: &str) -> Result<Self> {
        match tag {
            "dna" => Ok(ReconMethod::Dna),
            "fixed_noise" => Ok(ReconMethod::FixedNoise),
            "midpoint" => Ok(ReconMethod::Midpoint),
            "vanilla" => Ok(ReconMethod::Vanilla),
            other => Err(Error::Parse {
                what: "method".to_string(),
                detail: format!("unknown method `{other}`"),
            }),
        }
    }
}

/// The six editing flag combinations: trace kind x residual offsets x
/// mobile guidance.
pub const EDIT_COMBOS: [(&str, bool, bool); 6] = [
    ("fixed_noise", false, false),
    ("dna", false, false),
    ("fixed_noise", true, false),
    ("dna", true, false),
    ("dna", false, true),
    ("dna", true, true),
];

/// Canonical label for a flag pair, used in the `flags` CSV column.
pub fn flags_tag(use_res_offset: bool, use_mvg: bool) -> &'static str {
    match (use_res_offset, use_mvg) {
        (false, false) => "plain",
        (true, false) => "offsets",
        (false, true) => "mvg",
        (true, true) => "offsets+mvg",
    }
}

fn l2(v: &Vector) -> f64 {
    v.dot(v).sqrt()
}

/// Runs the cell closure over every cell, honoring `RFEDIT_THREADS` as a
/// cap on worker threads. Output order matches input order.
fn run_cells<C, T, F>(cells: &[C], f: F) -> Result<Vec<T>>
where
    C: Sync,
    T: Send,
    F: Fn(&C) -> Result<T> + Sync,
{
    let cap = std::env::var("RFEDIT_THREADS")
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .filter(|&n| n >= 1);
    match cap {
        Some(1) => cells.iter().map(&f).collect(),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| cells.par_iter().map(&f).collect()),
            Err(_) => cells.iter().map(&f).collect(),
        },
        None => cells.par_iter().map(&f).collect(),
    }
}

struct ReconCell {
    row: ResultRow,
    curves: Vec<CurveRow>,
    trace_rows: Vec<TraceRow>,
}

fn sample_source(
    config: &ScenarioConfig,
    field: &crate::velocity::MixtureField,
    cond: &Condition,
    rng: &mut RngStream,
) -> Result<Vector> {
    let mix = field
        .mixture(&cond.mixture_id)
        .ok_or_else(|| Error::UnknownCondition {
            name: cond.mixture_id.clone(),
        })?;
    debug_assert_eq!(mix.dim(), config.dim);
    Ok(mix.sample(rng))
}

fn trace_rows_for(method: &str, seed: u64, sched: &Schedule, trace: &DnaTrace) -> Vec<TraceRow> {
    (0..sched.steps())
        .map(|t| TraceRow {
            method: method.to_string(),
            seed,
            t,
            sigma: sched.sigma(t),
            offset_norm: l2(&trace.offsets[t]),
            noise_step_norm: l2(&(&trace.s_series[t + 1] - &trace.s_series[t])),
        })
        .collect()
}

fn run_recon_cell(
    config: &ScenarioConfig,
    sched: &Schedule,
    src_cond: &Condition,
    method: ReconMethod,
    seed: u64,
) -> Result<ReconCell> {
    let field = config.build_field()?;
    let mut rng = RngStream::new(seed);
    let x = sample_source(config, &field, src_cond, &mut rng)?;
    let started = Instant::now();

    let (inversion_states, recon_states, trace_rows) = match method {
        ReconMethod::Vanilla => {
            let traj = vanilla_invert(&x, &field, src_cond, sched)?;
            let recon = euler_forward(&traj.states[0], 0, &field, src_cond, sched)?;
            (traj.states, recon.states, Vec::new())
        }
        ReconMethod::Midpoint => {
            let traj = midpoint_invert(&x, &field, src_cond, sched)?;
            let recon = euler_forward(&traj.states[0], 0, &field, src_cond, sched)?;
            (traj.states, recon.states, Vec::new())
        }
        ReconMethod::FixedNoise => {
            let trace = fixed_noise_trace(&x, &field, src_cond, sched, &mut rng)?;
            let recon = reconstruct_trajectory(&trace, &field, src_cond, sched, false)?;
            let rows = trace_rows_for(method.tag(), seed, sched, &trace);
            (trace.latents, recon.states, rows)
        }
        ReconMethod::Dna => {
            let trace = dna_invert(&x, &field, src_cond, sched, &mut rng)?;
            let recon = reconstruct_trajectory(&trace, &field, src_cond, sched, true)?;
            let rows = trace_rows_for(method.tag(), seed, sched, &trace);
            (trace.latents, recon.states, rows)
        }
    };

    let wall = started.elapsed().as_secs_f64() * 1e3;
    let terminal_mse = mse(recon_states.last().expect("nonempty"), &x, None)?;
    let curves = (1..=sched.steps())
        .map(|t| {
            Ok(CurveRow {
                method: method.tag().to_string(),
                seed,
                t,
                sigma: sched.sigma(t),
                error: mse(&recon_states[t], &inversion_states[t], None)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(ReconCell {
        row: ResultRow {
            method: method.tag().to_string(),
            seed,
            steps: sched.steps(),
            nfe: field.evals(),
            terminal_mse: Some(terminal_mse),
            background_mse: None,
            target_loglik: None,
            eta: None,
            flags: String::new(),
            wall_time_ms: Some(wall),
        },
        curves,
        trace_rows,
    })
}

/// Inverts and reconstructs per (method, seed), reporting terminal error,
/// per-step error curves, and trace summaries. Rows are sorted by
/// (method, seed).
pub fn run_reconstruction(config: &ScenarioConfig) -> Result<ReconOutput> {
    config.validate()?;
    let sched = config.build_schedule()?;
    let src_cond = config.resolved_src_cond()?;
    let mut methods = config
        .methods
        .iter()
        .map(|m| ReconMethod::from_tag(m))
        .collect::<Result<Vec<_>>>()?;
    methods.sort_by_key(|m| m.tag());

    let mut cells = Vec::new();
    for &method in &methods {
        let mut seeds = config.seeds.clone();
        seeds.sort_unstable();
        for seed in seeds {
            cells.push((method, seed));
        }
    }
    let outs = run_cells(&cells, |&(method, seed)| {
        run_recon_cell(config, &sched, &src_cond, method, seed)
    })?;

    let mut output = ReconOutput {
        rows: Vec::with_capacity(outs.len()),
        curves: Vec::new(),
        trace_rows: Vec::new(),
    };
    for cell in outs {
        output.rows.push(cell.row);
        output.curves.extend(cell.curves);
        output.trace_rows.extend(cell.trace_rows);
    }
    Ok(output)
}

fn run_edit_cell(
    config: &ScenarioConfig,
    sched: &Schedule,
    trace_kind: &str,
    use_res_offset: bool,
    use_mvg: bool,
    eta: f64,
    seed: u64,
) -> Result<ResultRow> {
    let field = config.build_field()?;
    let src_cond = config.resolved_src_cond()?;
    let tgt_cond = config.resolved_tgt_cond()?;
    let mut rng = RngStream::new(seed);
    let x = sample_source(config, &field, &src_cond, &mut rng)?;
    let started = Instant::now();

    let trace = match trace_kind {
        "dna" => dna_invert(&x, &field, &src_cond, sched, &mut rng)?,
        "fixed_noise" => fixed_noise_trace(&x, &field, &src_cond, sched, &mut rng)?,
        other => {
            return Err(Error::Parse {
                what: "trace kind".to_string(),
                detail: format!("unknown trace kind `{other}`"),
            })
        }
    };
    let cfg = EditConfig {
        eta,
        t_start: config.edit.t_start,
        use_res_offset,
        use_mvg,
        src_cond,
        tgt_cond,
    };
    let result = mvg_edit(&trace, &x, &field, &cfg, sched)?;

    let scenario = config.build_scenario(x)?;
    let background_mse = scenario.background_mse(&result.edited)?;
    let loglik = target_loglik(&result.edited, &scenario)?;
    let wall = started.elapsed().as_secs_f64() * 1e3;

    Ok(ResultRow {
        method: trace_kind.to_string(),
        seed,
        steps: sched.steps(),
        nfe: field.evals(),
        terminal_mse: None,
        background_mse: Some(background_mse),
        target_loglik: Some(loglik),
        eta: Some(eta),
        flags: flags_tag(use_res_offset, use_mvg).to_string(),
        wall_time_ms: Some(wall),
    })
}

/// Runs every editing flag combination per seed on the configured
/// scenario. Rows are sorted by (method, flags, seed).
pub fn run_edit(config: &ScenarioConfig) -> Result<Vec<ResultRow>> {
    config.validate()?;
    if config.background_dims.is_none() || config.edit_dims.is_none() {
        return Err(Error::config(
            "editing requires background_dims and edit_dims",
        ));
    }
    let sched = config.build_schedule()?;

    let mut cells = Vec::new();
    for &(kind, offsets, mvg) in &EDIT_COMBOS {
        let mut seeds = config.seeds.clone();
        seeds.sort_unstable();
        for seed in seeds {
            cells.push((kind, offsets, mvg, seed));
        }
    }
    cells.sort_by_key(|&(kind, offsets, mvg, seed)| (kind, flags_tag(offsets, mvg), seed));

    run_cells(&cells, |&(kind, offsets, mvg, seed)| {
        run_edit_cell(config, &sched, kind, offsets, mvg, config.edit.eta, seed)
    })
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Standard error of the mean of paired differences a[i] - b[i]; zero when
/// fewer than two pairs exist.
fn paired_sem(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len();
    if n < 2 {
        return 0.0;
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let m = mean(&diffs);
    let var = diffs.iter().map(|d| (d - m).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    (var / n as f64).sqrt()
}

fn non_increasing_within_noise(per_eta: &[Vec<f64>]) -> bool {
    per_eta.windows(2).all(|w| {
        let allowance = 2.0 * paired_sem(&w[1], &w[0]);
        mean(&w[1]) <= mean(&w[0]) + allowance
    })
}

/// Sweeps eta over the configured edit (trace kind dna, flags from the
/// config), one row per (eta, seed). Rows are grouped by eta in the given
/// order, seeds ascending within a group.
pub fn run_eta_sweep(config: &ScenarioConfig, etas: &[f64]) -> Result<SweepOutput> {
    config.validate()?;
    if config.background_dims.is_none() || config.edit_dims.is_none() {
        return Err(Error::config(
            "editing requires background_dims and edit_dims",
        ));
    }
    let mut problems = Vec::new();
    if etas.is_empty() {
        problems.push("eta grid must be nonempty".to_string());
    }
    for &eta in etas {
        if !eta.is_finite() || !(0.0..=1.0).contains(&eta) {
            problems.push(format!("eta must lie in [0, 1], got {eta}"));
        }
    }
    if !problems.is_empty() {
        return Err(Error::InvalidConfig { problems });
    }
    let sched = config.build_schedule()?;

    let mut seeds = config.seeds.clone();
    seeds.sort_unstable();

    // One cell per seed: the trace is shared across the whole eta grid.
    struct SeedOut {
        rows: Vec<ResultRow>,
    }
    let outs = run_cells(&seeds, |&seed| {
        let field = config.build_field()?;
        let src_cond = config.resolved_src_cond()?;
        let tgt_cond = config.resolved_tgt_cond()?;
        let mut rng = RngStream::new(seed);
        let x = sample_source(config, &field, &src_cond, &mut rng)?;
        let started = Instant::now();
        let trace = dna_invert(&x, &field, &src_cond, &sched, &mut rng)?;
        let cfg = EditConfig {
            eta: config.edit.eta,
            t_start: config.edit.t_start,
            use_res_offset: config.edit.use_res_offset,
            use_mvg: config.edit.use_mvg,
            src_cond,
            tgt_cond,
        };
        let results = eta_sweep(&trace, &x, &field, &cfg, &sched, etas)?;
        let wall = started.elapsed().as_secs_f64() * 1e3;
        let scenario = config.build_scenario(x)?;
        let rows = etas
            .iter()
            .zip(&results)
            .map(|(&eta, res)| {
                Ok(ResultRow {
                    method: "dna".to_string(),
                    seed,
                    steps: sched.steps(),
                    // The trace is shared across the grid; each row carries
                    // what this eta would cost standalone.
                    nfe: trace.nfe + res.nfe,
                    terminal_mse: None,
                    background_mse: Some(scenario.background_mse(&res.edited)?),
                    target_loglik: Some(target_loglik(&res.edited, &scenario)?),
                    eta: Some(eta),
                    flags: flags_tag(cfg.use_res_offset, cfg.use_mvg).to_string(),
                    wall_time_ms: Some(wall),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SeedOut { rows })
    })?;

    // Regroup seed-major results into eta-major row order.
    let mut rows = Vec::with_capacity(seeds.len() * etas.len());
    for ei in 0..etas.len() {
        for out in &outs {
            rows.push(out.rows[ei].clone());
        }
    }

    // Trend over distinct etas in descending order.
    let mut distinct: Vec<f64> = etas.to_vec();
    distinct.sort_by(|a, b| b.partial_cmp(a).expect("finite etas"));
    distinct.dedup();
    let collect = |eta: f64, pick: fn(&ResultRow) -> f64| -> Vec<f64> {
        let ei = etas.iter().position(|&e| e == eta).expect("eta present");
        outs.iter().map(|o| pick(&o.rows[ei])).collect()
    };
    let bg_series: Vec<Vec<f64>> = distinct
        .iter()
        .map(|&e| collect(e, |r| r.background_mse.expect("edit row")))
        .collect();
    let ll_series: Vec<Vec<f64>> = distinct
        .iter()
        .map(|&e| collect(e, |r| r.target_loglik.expect("edit row")))
        .collect();
    let trend = SweepTrend {
        etas: distinct,
        background_means: bg_series.iter().map(|v| mean(v)).collect(),
        loglik_means: ll_series.iter().map(|v| mean(v)).collect(),
        background_non_increasing: non_increasing_within_noise(&bg_series),
        loglik_non_increasing: non_increasing_within_noise(&ll_series),
    };
    Ok(SweepOutput { rows, trend })
}
