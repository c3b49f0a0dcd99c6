//! Direct noise alignment: invert a clean state by walking the timestep
//! grid downward while shifting the noise endpoint so that the straight
//! line to the current latent agrees with the field, then reconstruct
//! exactly by adding the stored residual offsets back.

use crate::error::{Error, Result};
use crate::flow::{interpolate_latent, Schedule, Trajectory};
use crate::math::{RngStream, Vector};
use crate::velocity::{Condition, VelocityField};

/// Everything an alignment run produces, indexed by timestep.
///
/// `s_series[t]` is the aligned noise S_t (so `s_series[0] == s_final`),
/// `latents[t]` the latent Z_t with `latents[T]` the source image, and
/// `offsets[t]`, `src_velocities[t]` the per-step residual offset and the
/// field evaluation consumed at step t.
#[derive(Debug, Clone)]
pub struct DnaTrace {
    pub s_final: Vector,
    pub s_series: Vec<Vector>,
    pub latents: Vec<Vector>,
    pub offsets: Vec<Vector>,
    pub src_velocities: Vec<Vector>,
    /// Grid the trace was produced on; consumers reject other schedules.
    pub sigmas: Vec<f64>,
    pub nfe: u64,
}

impl DnaTrace {
    pub fn steps(&self) -> usize {
        self.latents.len() - 1
    }

    pub fn source_image(&self) -> &Vector {
        self.latents.last().expect("trace is never empty")
    }

    pub(crate) fn check_schedule(&self, sched: &Schedule) -> Result<()> {
        if self.sigmas != sched.sigmas() {
            return Err(Error::ScheduleMismatch {
                detail: format!(
                    "trace built on {} steps over a different grid than the {}-step schedule",
                    self.steps(),
                    sched.steps()
                ),
            });
        }
        Ok(())
    }
}

/// Output of one alignment step at timestep t.
#[derive(Debug, Clone)]
pub struct DnaStep {
    pub s: Vector,
    pub z: Vector,
    pub offset: Vector,
    pub v_src: Vector,
}

fn dna_step_inner(
    z_next: &Vector,
    s_next: &Vector,
    sigma_t: f64,
    sigma_next: f64,
    field: &dyn VelocityField,
    cond: &Condition,
    flip_linear_sign: bool,
) -> Result<DnaStep> {
    let z_star = interpolate_latent(z_next, s_next, sigma_t, sigma_next)?;
    // Straight-line velocity in the image-minus-noise direction.
    let mut v_linear = (z_next - s_next) / sigma_next;
    if flip_linear_sign {
        v_linear = -v_linear;
    }
    let v_src = field.eval(&z_star, sigma_t, cond)?;
    let delta_v = &v_linear - &v_src;
    let s_t = s_next + &(&delta_v * sigma_next);
    let z_t = &z_star + &(&delta_v * (sigma_next - sigma_t));
    let offset = &z_star - &z_t;
    Ok(DnaStep {
        s: s_t,
        z: z_t,
        offset,
        v_src,
    })
}

/// One noise-alignment step: interpolate the latent down to sigma_t, compare
/// the straight-line velocity (z_next − s_next)/sigma_next against the field
/// at the interpolated point, and move both the noise and the latent by the
/// difference. Returns the new noise, new latent, residual offset, and the
/// field velocity it consumed (one evaluation).
pub fn dna_step(
    z_next: &Vector,
    s_next: &Vector,
    sigma_t: f64,
    sigma_next: f64,
    field: &dyn VelocityField,
    cond: &Condition,
) -> Result<DnaStep> {
    dna_step_inner(z_next, s_next, sigma_t, sigma_next, field, cond, false)
}

pub(crate) fn dna_invert_with(
    image: &Vector,
    field: &dyn VelocityField,
    src_cond: &Condition,
    sched: &Schedule,
    rng: &mut RngStream,
    flip_linear_sign: bool,
) -> Result<DnaTrace> {
    let t_count = sched.steps();
    let d = image.len();
    let before = field.evals();
    let mut latents = vec![Vector::zeros(d); t_count + 1];
    let mut s_series = vec![Vector::zeros(d); t_count + 1];
    let mut offsets = vec![Vector::zeros(d); t_count];
    let mut src_velocities = vec![Vector::zeros(d); t_count];
    latents[t_count] = image.clone();
    // The terminal noise is fresh per run; alignment shifts it downward.
    s_series[t_count] = rng.sample_standard_normal(d);
    for t in (0..t_count).rev() {
        let step = dna_step_inner(
            &latents[t + 1],
            &s_series[t + 1],
            sched.sigma(t),
            sched.sigma(t + 1),
            field,
            src_cond,
            flip_linear_sign,
        )?;
        latents[t] = step.z;
        s_series[t] = step.s;
        offsets[t] = step.offset;
        src_velocities[t] = step.v_src;
    }
    Ok(DnaTrace {
        s_final: s_series[0].clone(),
        s_series,
        latents,
        offsets,
        src_velocities,
        sigmas: sched.sigmas().to_vec(),
        nfe: field.evals() - before,
    })
}

/// Aligns a fresh noise draw to the given clean state, stepping t = T−1
/// down to 0. Consumes exactly T field evaluations and one standard-normal
/// draw of the state's dimension from the stream.
pub fn dna_invert(
    image: &Vector,
    field: &dyn VelocityField,
    src_cond: &Condition,
    sched: &Schedule,
    rng: &mut RngStream,
) -> Result<DnaTrace> {
    dna_invert_with(image, field, src_cond, sched, rng, false)
}

/// Forward pass over a trace: from the aligned noise endpoint, Euler-step
/// with the field evaluated at Z_t + offsets[t] when `use_offsets` is set,
/// at Z_t otherwise. Returns the whole state sequence.
///
/// With offsets on, every evaluation lands exactly on the point the
/// inversion already queried, so the stored velocities replay and the
/// terminal state reproduces the source up to rounding.
pub fn reconstruct_trajectory(
    trace: &DnaTrace,
    field: &dyn VelocityField,
    src_cond: &Condition,
    sched: &Schedule,
    use_offsets: bool,
) -> Result<Trajectory> {
    trace.check_schedule(sched)?;
    let t_count = sched.steps();
    let before = field.evals();
    let mut states = Vec::with_capacity(t_count + 1);
    let mut z = trace.latents[0].clone();
    states.push(z.clone());
    for t in 0..t_count {
        let point = if use_offsets {
            &z + &trace.offsets[t]
        } else {
            z.clone()
        };
        let v = field.eval(&point, sched.sigma(t), src_cond)?;
        z = &z + &(v * (sched.sigma(t + 1) - sched.sigma(t)));
        states.push(z.clone());
    }
    Ok(Trajectory {
        states,
        nfe: field.evals() - before,
    })
}

/// Terminal state of [`reconstruct_trajectory`]; consumes exactly T
/// field evaluations.
pub fn reconstruct(
    trace: &DnaTrace,
    field: &dyn VelocityField,
    src_cond: &Condition,
    sched: &Schedule,
    use_offsets: bool,
) -> Result<Vector> {
    reconstruct_trajectory(trace, field, src_cond, sched, use_offsets)
        .map(|traj| traj.states.into_iter().last().expect("nonempty"))
}

/// Diagnostic noise increments s_series[t] − s_series[t+stride] for every t
/// with t + stride ≤ T. Frames at stride-aligned t telescope to
/// s_series[0] − s_series[T]; a stride beyond T yields nothing.
pub fn noise_delta_frames(trace: &DnaTrace, stride: usize) -> Vec<Vector> {
    let t_count = trace.steps();
    if stride == 0 || stride > t_count {
        return Vec::new();
    }
    (0..=t_count - stride)
        .map(|t| &trace.s_series[t] - &trace.s_series[t + stride])
        .collect()
}
