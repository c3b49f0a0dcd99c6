//! Vector-space evaluation: squared-error metrics with coordinate masks,
//! per-step reconstruction error curves, moment diagnostics for noise
//! vectors, and an editability score against the target distribution.

use crate::dna::DnaTrace;
use crate::error::{Error, Result};
use crate::flow::Schedule;
use crate::math::Vector;
use crate::velocity::{Condition, GaussianMixture, VelocityField};

/// An editing task: which coordinates the edit may change, which it must
/// preserve, the two distributions, and the concrete source point under
/// evaluation.
///
/// Background preservation is meaningful only when the two mixtures agree
/// on the background coordinates, so construction checks the marginal
/// parameters match component by component.
#[derive(Debug, Clone)]
pub struct EditScenario {
    pub dims_background: Vec<usize>,
    pub dims_edit: Vec<usize>,
    pub src: GaussianMixture,
    pub tgt: GaussianMixture,
    pub source_point: Vector,
}

impl EditScenario {
    pub fn new(
        dims_background: Vec<usize>,
        dims_edit: Vec<usize>,
        src: GaussianMixture,
        tgt: GaussianMixture,
        source_point: Vector,
    ) -> Result<Self> {
        let d = src.dim();
        if tgt.dim() != d {
            return Err(Error::DimMismatch {
                context: "EditScenario mixtures",
                expected: d,
                got: tgt.dim(),
            });
        }
        if source_point.len() != d {
            return Err(Error::DimMismatch {
                context: "EditScenario source_point",
                expected: d,
                got: source_point.len(),
            });
        }
        let mut seen = vec![0u8; d];
        for &i in dims_background.iter().chain(&dims_edit) {
            if i >= d {
                return Err(Error::config(format!(
                    "scenario dim {i} out of range for d = {d}"
                )));
            }
            seen[i] += 1;
        }
        if seen.iter().any(|&c| c != 1) {
            return Err(Error::config(
                "background and edit dims must be disjoint and cover every coordinate",
            ));
        }
        if src.component_count() != tgt.component_count() {
            return Err(Error::config(
                "mixtures must pair up component by component to share a background marginal",
            ));
        }
        for k in 0..src.component_count() {
            if (src.weights()[k] - tgt.weights()[k]).abs() > 1e-12 {
                return Err(Error::config(format!(
                    "component {k}: source and target weights differ"
                )));
            }
            for &i in &dims_background {
                if (src.means()[k][i] - tgt.means()[k][i]).abs() > 1e-12 {
                    return Err(Error::config(format!(
                        "component {k}: background mean differs on dim {i}"
                    )));
                }
                for &j in &dims_background {
                    let a = src.covs()[k].matrix()[[i, j]];
                    let b = tgt.covs()[k].matrix()[[i, j]];
                    if (a - b).abs() > 1e-12 {
                        return Err(Error::config(format!(
                            "component {k}: background covariance differs at ({i}, {j})"
                        )));
                    }
                }
            }
        }
        Ok(EditScenario {
            dims_background,
            dims_edit,
            src,
            tgt,
            source_point,
        })
    }

    /// Preservation error: mse against the source point on background dims.
    pub fn background_mse(&self, edited: &Vector) -> Result<f64> {
        mse(edited, &self.source_point, Some(&self.dims_background))
    }
}

/// Mean squared difference, optionally restricted to selected coordinates.
pub fn mse(a: &Vector, b: &Vector, dims: Option<&[usize]>) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimMismatch {
            context: "mse",
            expected: a.len(),
            got: b.len(),
        });
    }
    match dims {
        None => Ok(a
            .iter()
            .zip(b.iter())
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            / a.len() as f64),
        Some(idx) => {
            if idx.is_empty() {
                return Err(Error::DimMismatch {
                    context: "mse dims",
                    expected: 1,
                    got: 0,
                });
            }
            let mut total = 0.0;
            for &i in idx {
                if i >= a.len() {
                    return Err(Error::DimMismatch {
                        context: "mse dims",
                        expected: a.len(),
                        got: i,
                    });
                }
                total += (a[i] - b[i]) * (a[i] - b[i]);
            }
            Ok(total / idx.len() as f64)
        }
    }
}

/// Per-step reconstruction error: entry t−1 is the mse between the replayed
/// state after stepping to t and the trace latent Z_t, for t = 1..=T.
///
/// With offsets every entry sits at rounding level; without them the curve
/// shows how the replay drifts off the inversion path.
pub fn recon_error_curve(
    trace: &DnaTrace,
    field: &dyn VelocityField,
    cond: &Condition,
    sched: &Schedule,
    use_offsets: bool,
) -> Result<Vec<f64>> {
    let traj = crate::dna::reconstruct_trajectory(trace, field, cond, sched, use_offsets)?;
    (1..traj.states.len())
        .map(|t| mse(&traj.states[t], &trace.latents[t], None))
        .collect()
}

/// Sample moments of a vector's coordinates.
///
/// `degenerate` marks (numerically) zero variance, in which case the
/// normalized moments are reported as 0 instead of a division blow-up.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseMoments {
    pub mean: f64,
    pub var: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    pub degenerate: bool,
}

/// Coordinate-wise moments of s, as a drift diagnostic for aligned noise.
pub fn noise_moments(s: &Vector) -> NoiseMoments {
    let d = s.len();
    if d == 0 {
        return NoiseMoments {
            mean: 0.0,
            var: 0.0,
            skewness: 0.0,
            excess_kurtosis: 0.0,
            degenerate: true,
        };
    }
    let n = d as f64;
    let mean = s.iter().sum::<f64>() / n;
    let mut m2 = 0.0;
    let mut m3 = 0.0;
    let mut m4 = 0.0;
    for &x in s.iter() {
        let c = x - mean;
        m2 += c * c;
        m3 += c * c * c;
        m4 += c * c * c * c;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    let degenerate = m2 <= 1e-24 * (1.0 + mean * mean);
    let (skewness, excess_kurtosis) = if degenerate {
        (0.0, 0.0)
    } else {
        (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
    };
    NoiseMoments {
        mean,
        var: m2,
        skewness,
        excess_kurtosis,
        degenerate,
    }
}

/// Editability score: log density of x's edit coordinates under the target
/// mixture's marginal on those coordinates.
pub fn target_loglik(x: &Vector, scenario: &EditScenario) -> Result<f64> {
    if x.len() != scenario.src.dim() {
        return Err(Error::DimMismatch {
            context: "target_loglik",
            expected: scenario.src.dim(),
            got: x.len(),
        });
    }
    let sub = Vector::from_iter(scenario.dims_edit.iter().map(|&i| x[i]));
    scenario.tgt.marginal(&scenario.dims_edit)?.logpdf(&sub)
}
