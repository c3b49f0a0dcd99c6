//! Discretized rectified-flow machinery: schedules, Euler transport,
//! interpolated latents, and the approximate inversion that noise
//! alignment improves on.
//!
//! Convention, fixed for the whole workspace: sigma is the image weight,
//! Z_sigma = sigma·X + (1−sigma)·S, and fields approximate E[X − S | Z].
//! Index t runs from 0 (pure noise, sigma=0) to T (clean image, sigma=1).

use crate::error::{Error, Result};
use crate::math::Vector;
use crate::velocity::{Condition, VelocityField};

/// Grid spacing for schedule construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Spacing {
    Uniform,
    /// Timestep-shift transform with factor s > 0; s = 1 is uniform.
    Shifted(f64),
}

/// Image-weight grid sigma_0 < ... < sigma_T with endpoints 0 and 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    sigmas: Vec<f64>,
}

/// Builds a schedule of T steps.
///
/// Uniform spacing puts sigma_i = i/T. Shifted spacing applies the
/// noise-side transform u -> s·u/(1 + (s−1)·u) to u_i = 1 − i/T and
/// returns sigma_i = 1 − transformed, concentrating steps where the
/// image weight is small.
pub fn make_schedule(steps: usize, spacing: Spacing) -> Result<Schedule> {
    if steps == 0 {
        return Err(Error::InvalidSchedule {
            reason: "T must be at least 1".into(),
        });
    }
    let sigmas = match spacing {
        Spacing::Uniform => (0..=steps).map(|i| i as f64 / steps as f64).collect(),
        Spacing::Shifted(s) => {
            if !(s > 0.0) || !s.is_finite() {
                return Err(Error::InvalidSchedule {
                    reason: format!("shift factor must be positive and finite, got {s}"),
                });
            }
            (0..=steps)
                .map(|i| {
                    let u = 1.0 - i as f64 / steps as f64;
                    1.0 - s * u / (1.0 + (s - 1.0) * u)
                })
                .collect()
        }
    };
    Schedule::from_sigmas(sigmas)
}

impl Schedule {
    pub fn uniform(steps: usize) -> Result<Self> {
        make_schedule(steps, Spacing::Uniform)
    }

    pub fn shifted(steps: usize, shift: f64) -> Result<Self> {
        make_schedule(steps, Spacing::Shifted(shift))
    }

    /// Validates the grid invariants: strictly increasing, sigma_0 = 0,
    /// sigma_T = 1, at least one step.
    pub fn from_sigmas(sigmas: Vec<f64>) -> Result<Self> {
        if sigmas.len() < 2 {
            return Err(Error::InvalidSchedule {
                reason: "need at least two grid points".into(),
            });
        }
        if sigmas[0] != 0.0 {
            return Err(Error::InvalidSchedule {
                reason: format!("sigma_0 must be 0, got {}", sigmas[0]),
            });
        }
        if *sigmas.last().unwrap() != 1.0 {
            return Err(Error::InvalidSchedule {
                reason: format!("sigma_T must be 1, got {}", sigmas.last().unwrap()),
            });
        }
        for w in sigmas.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::InvalidSchedule {
                    reason: format!("grid not strictly increasing at {} -> {}", w[0], w[1]),
                });
            }
        }
        Ok(Schedule { sigmas })
    }

    /// Number of steps T (one less than the number of grid points).
    pub fn steps(&self) -> usize {
        self.sigmas.len() - 1
    }

    pub fn sigma(&self, t: usize) -> f64 {
        self.sigmas[t]
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }
}

/// State sequence indexed by timestep plus the velocity evaluations it cost.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub states: Vec<Vector>,
    pub nfe: u64,
}

impl Trajectory {
    pub fn terminal(&self) -> &Vector {
        self.states.last().expect("trajectory is never empty")
    }
}

/// Euler transport Z_{t+1} = Z_t + v(Z_t, sigma_t)·(sigma_{t+1} − sigma_t)
/// from start_index up to T. States below start_index are filled with the
/// start state so trajectories always align with the schedule grid.
pub fn euler_forward(
    z_start: &Vector,
    start_index: usize,
    field: &dyn VelocityField,
    cond: &Condition,
    sched: &Schedule,
) -> Result<Trajectory> {
    let t_count = sched.steps();
    if start_index >= t_count {
        return Err(Error::DegenerateStep {
            step: start_index,
            reason: format!("start index must be below T = {t_count}"),
        });
    }
    let before = field.evals();
    let mut states = Vec::with_capacity(t_count + 1);
    for _ in 0..=start_index {
        states.push(z_start.clone());
    }
    let mut z = z_start.clone();
    for t in start_index..t_count {
        let v = field.eval(&z, sched.sigma(t), cond)?;
        let dsigma = sched.sigma(t + 1) - sched.sigma(t);
        z = &z + &(v * dsigma);
        states.push(z.clone());
    }
    Ok(Trajectory {
        states,
        nfe: field.evals() - before,
    })
}

/// Interpolates the next latent toward the noise at a lower image weight:
/// (sigma_t/sigma_next)·z_next + (1 − sigma_t/sigma_next)·s_next.
///
/// If z_next lies on the line sigma_next·X + (1−sigma_next)·s_next, the
/// result lies on the same line at sigma_t.
pub fn interpolate_latent(
    z_next: &Vector,
    s_next: &Vector,
    sigma_t: f64,
    sigma_next: f64,
) -> Result<Vector> {
    if sigma_next == 0.0 {
        return Err(Error::DegenerateStep {
            step: 0,
            reason: "interpolation target sigma is 0".into(),
        });
    }
    if !(0.0..=1.0).contains(&sigma_next) || !(0.0..=1.0).contains(&sigma_t) || sigma_t >= sigma_next
    {
        return Err(Error::DegenerateStep {
            step: 0,
            reason: format!("need 0 <= sigma_t < sigma_next <= 1, got {sigma_t}, {sigma_next}"),
        });
    }
    if z_next.len() != s_next.len() {
        return Err(Error::DimMismatch {
            context: "interpolate_latent",
            expected: z_next.len(),
            got: s_next.len(),
        });
    }
    let ratio = sigma_t / sigma_next;
    Ok(z_next * ratio + &(s_next * (1.0 - ratio)))
}

/// Approximate inversion: reverse Euler with the velocity evaluated at the
/// available next-step latent, Z_t = Z_{t+1} − v(Z_{t+1}, sigma_{t+1})·dsigma.
/// Drift accumulates because the evaluation point is one step stale.
pub fn vanilla_invert(
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
        let v = field.eval(&states[t + 1], sched.sigma(t + 1), cond)?;
        let dsigma = sched.sigma(t + 1) - sched.sigma(t);
        states[t] = &states[t + 1] - &(v * dsigma);
    }
    Ok(Trajectory {
        states,
        nfe: field.evals() - before,
    })
}
