//! Reference methods the alignment and guidance solvers are measured
//! against: interpolation inversion with one fixed noise draw, the
//! accumulator-style edit with iid or aligned source points, and a
//! midpoint (second-order) inversion stand-in.

use crate::dna::DnaTrace;
use crate::error::{Error, Result};
use crate::flow::{interpolate_latent, Schedule, Trajectory};
use crate::math::{RngStream, Vector};
use crate::velocity::{Condition, VelocityField};

/// Tags for the comparison methods, as they appear in configs and reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    FixedNoise,
    FloweditIid,
    FloweditAligned,
    MidpointInversion,
    Vanilla,
}

impl BaselineKind {
    pub fn tag(&self) -> &'static str {
        match self {
            BaselineKind::FixedNoise => "fixed_noise",
            BaselineKind::FloweditIid => "flowedit_iid",
            BaselineKind::FloweditAligned => "flowedit_aligned",
            BaselineKind::MidpointInversion => "midpoint_inversion",
            BaselineKind::Vanilla => "vanilla",
        }
    }

    pub fn from_tag(tag: &str) -> Result<Self> {
        Ok(match tag {
            "fixed_noise" => BaselineKind::FixedNoise,
            "flowedit_iid" => BaselineKind::FloweditIid,
            "flowedit_aligned" => BaselineKind::FloweditAligned,
            "midpoint_inversion" => BaselineKind::MidpointInversion,
            "vanilla" => BaselineKind::Vanilla,
            other => {
                return Err(Error::Parse {
                    what: "baseline tag".into(),
                    detail: format!("unknown tag '{other}'"),
                })
            }
        })
    }
}

/// Interpolation inversion against a single fixed noise draw: each latent
/// is interpolated toward the same S to pick the evaluation point, then
/// stepped with inverse Euler. No alignment happens, so the noise series
/// is constant and the residual offsets do not vanish.
///
/// The result reuses the trace container; its offsets and source velocities
/// feed the same reconstruction and editing paths as aligned traces.
pub fn fixed_noise_trace(
    image: &Vector,
    field: &dyn VelocityField,
    src_cond: &Condition,
    sched: &Schedule,
    rng: &mut RngStream,
) -> Result<DnaTrace> {
    let t_count = sched.steps();
    let d = image.len();
    let before = field.evals();
    let s = rng.sample_standard_normal(d);
    let mut latents = vec![Vector::zeros(d); t_count + 1];
    let mut offsets = vec![Vector::zeros(d); t_count];
    let mut src_velocities = vec![Vector::zeros(d); t_count];
    latents[t_count] = image.clone();
    for t in (0..t_count).rev() {
        let z_star =
            interpolate_latent(&latents[t + 1], &s, sched.sigma(t), sched.sigma(t + 1))?;
        let v = field.eval(&z_star, sched.sigma(t), src_cond)?;
        let z_t = &latents[t + 1] - &(&v * (sched.sigma(t + 1) - sched.sigma(t)));
        offsets[t] = &z_star - &z_t;
        src_velocities[t] = v;
        latents[t] = z_t;
    }
    Ok(DnaTrace {
        s_final: s.clone(),
        s_series: vec![s; t_count + 1],
        latents,
        offsets,
        src_velocities,
        sigmas: sched.sigmas().to_vec(),
        nfe: field.evals() - before,
    })
}

/// Trajectory view of [`fixed_noise_trace`].
pub fn fixed_noise_invert(
    image: &Vector,
    field: &dyn VelocityField,
    src_cond: &Condition,
    sched: &Schedule,
    rng: &mut RngStream,
) -> Result<Trajectory> {
    let trace = fixed_noise_trace(image, field, src_cond, sched, rng)?;
    Ok(Trajectory {
        nfe: trace.nfe,
        states: trace.latents,
    })
}

/// Where the accumulator edit takes its per-step source points from.
pub enum NoiseMode<'a> {
    /// Fresh noise draw per step; the source velocity costs one evaluation.
    Iid,
    /// Offset-corrected latents and replayed velocities from a trace.
    Aligned(&'a DnaTrace),
}

/// Accumulator edit bookkeeping for invariant checks and export.
#[derive(Debug, Clone)]
pub struct FloweditDetail {
    pub output: Vector,
    /// Accumulator after each step, starting at the source image.
    pub accumulator: Vec<Vector>,
    pub src_points: Vec<Vector>,
    pub tgt_points: Vec<Vector>,
    pub nfe: u64,
}

/// Accumulator-style edit: the output starts at the source image and adds
/// up target-minus-source velocity differences, with the target always
/// evaluated at the parallelogram point acc + z_src − source.
pub fn flowedit_detailed(
    source_image: &Vector,
    field: &dyn VelocityField,
    src_cond: &Condition,
    tgt_cond: &Condition,
    sched: &Schedule,
    rng: &mut RngStream,
    mode: NoiseMode<'_>,
) -> Result<FloweditDetail> {
    let t_count = sched.steps();
    let d = source_image.len();
    if let NoiseMode::Aligned(trace) = &mode {
        trace.check_schedule(sched)?;
        if trace.s_final.len() != d {
            return Err(Error::DimMismatch {
                context: "flowedit source_image",
                expected: trace.s_final.len(),
                got: d,
            });
        }
    }
    let before = field.evals();
    let mut acc = source_image.clone();
    let mut accumulator = Vec::with_capacity(t_count + 1);
    let mut src_points = Vec::with_capacity(t_count);
    let mut tgt_points = Vec::with_capacity(t_count);
    accumulator.push(acc.clone());
    for t in 0..t_count {
        let sigma_t = sched.sigma(t);
        let (z_src, v_src) = match &mode {
            NoiseMode::Iid => {
                let s = rng.sample_standard_normal(d);
                let z = source_image * sigma_t + &(&s * (1.0 - sigma_t));
                let v = field.eval(&z, sigma_t, src_cond)?;
                (z, v)
            }
            NoiseMode::Aligned(trace) => (
                &trace.latents[t] + &trace.offsets[t],
                trace.src_velocities[t].clone(),
            ),
        };
        let z_tgt = &(&acc + &z_src) - source_image;
        let v_tgt = field.eval(&z_tgt, sigma_t, tgt_cond)?;
        acc = &acc + &(&(&v_tgt - &v_src) * (sched.sigma(t + 1) - sigma_t));
        accumulator.push(acc.clone());
        src_points.push(z_src);
        tgt_points.push(z_tgt);
    }
    Ok(FloweditDetail {
        output: acc,
        accumulator,
        src_points,
        tgt_points,
        nfe: field.evals() - before,
    })
}

/// Terminal output of [`flowedit_detailed`].
pub fn flowedit(
    source_image: &Vector,
    field: &dyn VelocityField,
    src_cond: &Condition,
    tgt_cond: &Condition,
    sched: &Schedule,
    rng: &mut RngStream,
    mode: NoiseMode<'_>,
) -> Result<Vector> {
    flowedit_detailed(source_image, field, src_cond, tgt_cond, sched, rng, mode)
        .map(|detail| detail.output)
}

/// Second-order inversion: half an Euler step with the stale velocity,
/// re-evaluate at the midpoint, take the full step with that. Two
/// evaluations per step.
pub fn midpoint_invert(
    image: &Vector,
    field: &dyn VelocityField,
    cond: &Condition,
    sched: &Schedule,
) -> Result<Trajectory> {
    let t_count = sched.steps();
    let before = field.evals();
    let mut states = vec![Vector::zeros(image.len()); t_count + 1];
    states[t_count] = image.clone();
    for t in (0..t_count).rev() {
        let dsig = sched.sigma(t + 1) - sched.sigma(t);
        let v1 = field.eval(&states[t + 1], sched.sigma(t + 1), cond)?;
        let z_mid = &states[t + 1] - &(&v1 * (dsig / 2.0));
        let sigma_mid = (sched.sigma(t) + sched.sigma(t + 1)) / 2.0;
        let v2 = field.eval(&z_mid, sigma_mid, cond)?;
        states[t] = &states[t + 1] - &(&v2 * dsig);
    }
    Ok(Trajectory {
        states,
        nfe: field.evals() - before,
    })
}
