//! Editing with mobile velocity guidance: denoise under the target
//! condition while blending toward a reference trajectory that starts at
//! the source image and drifts by the accumulated velocity difference.
//! Source velocities are replayed from the alignment trace, so each edit
//! step costs only the target evaluation.

use crate::dna::DnaTrace;
use crate::error::{Error, Result};
use crate::flow::Schedule;
use crate::math::Vector;
use crate::velocity::{Condition, VelocityField};

/// Edit hyperparameters and conditions.
///
/// `eta` trades fidelity to the reference (0) against the raw target flow
/// (1). `t_start` skips the earliest, noisiest steps. The flags ablate the
/// residual offsets and the guidance blend independently.
#[derive(Debug, Clone, PartialEq)]
pub struct EditConfig {
    pub eta: f64,
    pub t_start: usize,
    pub use_res_offset: bool,
    pub use_mvg: bool,
    pub src_cond: Condition,
    pub tgt_cond: Condition,
}

impl EditConfig {
    /// Checks every field and reports all violations at once.
    pub fn validate(&self, steps: usize) -> Result<()> {
        let mut problems = Vec::new();
        if !self.eta.is_finite() || !(0.0..=1.0).contains(&self.eta) {
            problems.push(format!("eta must lie in [0, 1], got {}", self.eta));
        }
        if self.t_start >= steps {
            problems.push(format!(
                "t_start must be below T = {steps}, got {}",
                self.t_start
            ));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig { problems })
        }
    }
}

/// Edit output with the full guidance bookkeeping.
///
/// `edit_traj` and `mvg_traj` hold states for t = t_start..=T (length
/// T − t_start + 1); `delta_v_series[i]` is the velocity difference consumed
/// at step t_start + i.
#[derive(Debug, Clone)]
pub struct EditResult {
    pub edited: Vector,
    pub edit_traj: Vec<Vector>,
    pub mvg_traj: Vec<Vector>,
    pub delta_v_series: Vec<Vector>,
    pub nfe: u64,
}

/// Runs one guided edit over the trace's schedule tail.
///
/// Per step t: evaluate the target velocity at the edit state (plus the
/// stored residual offset when enabled), advance the mobile reference by
/// the difference against the replayed source velocity, then step the edit
/// state by the eta-blend of target velocity and the pull
/// (Z_mvg − Z_edit)/(1 − sigma_t) toward the advanced reference.
pub fn mvg_edit(
    trace: &DnaTrace,
    source_image: &Vector,
    field: &dyn VelocityField,
    cfg: &EditConfig,
    sched: &Schedule,
) -> Result<EditResult> {
    trace.check_schedule(sched)?;
    cfg.validate(sched.steps())?;
    let d = trace.s_final.len();
    if source_image.len() != d {
        return Err(Error::DimMismatch {
            context: "mvg_edit source_image",
            expected: d,
            got: source_image.len(),
        });
    }
    let t_count = sched.steps();
    let t_start = cfg.t_start;
    let before = field.evals();

    let mut z_edit = trace.latents[t_start].clone();
    let mut z_mvg = source_image.clone();
    let mut edit_traj = Vec::with_capacity(t_count - t_start + 1);
    let mut mvg_traj = Vec::with_capacity(t_count - t_start + 1);
    let mut delta_v_series = Vec::with_capacity(t_count - t_start);
    edit_traj.push(z_edit.clone());
    mvg_traj.push(z_mvg.clone());

    for t in t_start..t_count {
        let sigma_t = sched.sigma(t);
        let dsig = sched.sigma(t + 1) - sigma_t;
        let point = if cfg.use_res_offset {
            &z_edit + &trace.offsets[t]
        } else {
            z_edit.clone()
        };
        let v_tgt = field.eval(&point, sigma_t, &cfg.tgt_cond)?;
        let delta_v = &v_tgt - &trace.src_velocities[t];
        // The reference advances first; the pull below sees the moved point.
        z_mvg = &z_mvg + &(&delta_v * dsig);
        let v_edit = if cfg.use_mvg {
            let v_mvg = (&z_mvg - &z_edit) / (1.0 - sigma_t);
            &(&v_tgt * cfg.eta) + &(&v_mvg * (1.0 - cfg.eta))
        } else {
            v_tgt
        };
        z_edit = &z_edit + &(&v_edit * dsig);
        edit_traj.push(z_edit.clone());
        mvg_traj.push(z_mvg.clone());
        delta_v_series.push(delta_v);
    }

    Ok(EditResult {
        edited: z_edit,
        edit_traj,
        mvg_traj,
        delta_v_series,
        nfe: field.evals() - before,
    })
}

/// One edit per eta over the same trace and start state.
pub fn eta_sweep(
    trace: &DnaTrace,
    source_image: &Vector,
    field: &dyn VelocityField,
    cfg: &EditConfig,
    sched: &Schedule,
    etas: &[f64],
) -> Result<Vec<EditResult>> {
    let mut problems = Vec::new();
    if etas.is_empty() {
        problems.push("eta sweep needs at least one value".to_string());
    }
    for &e in etas {
        if !e.is_finite() || !(0.0..=1.0).contains(&e) {
            problems.push(format!("sweep eta must lie in [0, 1], got {e}"));
        }
    }
    if !problems.is_empty() {
        return Err(Error::InvalidConfig { problems });
    }
    etas.iter()
        .map(|&eta| {
            let run_cfg = EditConfig {
                eta,
                ..cfg.clone()
            };
            mvg_edit(trace, source_image, field, &run_cfg, sched)
        })
        .collect()
}
