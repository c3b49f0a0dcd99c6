//! Velocity fields over Gaussian-mixture data.
//!
//! For X drawn from a mixture and S standard normal, the exact minimizer of
//! the flow-matching objective at Z_sigma = sigma·X + (1−sigma)·S is the
//! conditional expectation E[X − S | Z_sigma = z], which has a closed form
//! per mixture component. That closed form stands in for a pretrained model,
//! with named mixtures playing the role of prompts.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::math::{gauss_logpdf, RngStream, SpdMatrix, Vector};

/// Finite mixture of full-covariance Gaussians.
#[derive(Debug, Clone)]
pub struct GaussianMixture {
    weights: Vec<f64>,
    means: Vec<Vector>,
    covs: Vec<SpdMatrix>,
}

impl GaussianMixture {
    /// Validates component counts, nonnegative weights summing to 1 within
    /// 1e-12, and consistent dimensions. Covariances are already SPD by
    /// construction of [`SpdMatrix`].
    pub fn new(weights: Vec<f64>, means: Vec<Vector>, covs: Vec<SpdMatrix>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Field {
                reason: "mixture needs at least one component".into(),
            });
        }
        if means.len() != weights.len() || covs.len() != weights.len() {
            return Err(Error::DimMismatch {
                context: "GaussianMixture components",
                expected: weights.len(),
                got: means.len().min(covs.len()),
            });
        }
        if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(Error::Field {
                reason: "mixture weights must be finite and nonnegative".into(),
            });
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Field {
                reason: format!("mixture weights sum to {total}, expected 1"),
            });
        }
        let d = means[0].len();
        for m in &means {
            if m.len() != d {
                return Err(Error::DimMismatch {
                    context: "GaussianMixture means",
                    expected: d,
                    got: m.len(),
                });
            }
        }
        for c in &covs {
            if c.dim() != d {
                return Err(Error::DimMismatch {
                    context: "GaussianMixture covs",
                    expected: d,
                    got: c.dim(),
                });
            }
        }
        Ok(GaussianMixture {
            weights,
            means,
            covs,
        })
    }

    /// Mixture with every component's covariance equal to var·I.
    pub fn isotropic(weights: Vec<f64>, means: Vec<Vector>, var: f64) -> Result<Self> {
        let d = means.first().map(|m| m.len()).unwrap_or(0);
        let covs = (0..means.len())
            .map(|_| SpdMatrix::scaled_identity(d, var))
            .collect::<Result<Vec<_>>>()?;
        GaussianMixture::new(weights, means, covs)
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn component_count(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[Vector] {
        &self.means
    }

    pub fn covs(&self) -> &[SpdMatrix] {
        &self.covs
    }

    /// Mixture mean sum_k w_k·mu_k.
    pub fn mean(&self) -> Vector {
        let mut m = Vector::zeros(self.dim());
        for (w, mu) in self.weights.iter().zip(&self.means) {
            m = m + &(mu * *w);
        }
        m
    }

    /// One draw: weighted component pick, then mu_k + L_k·eps.
    pub fn sample(&self, rng: &mut RngStream) -> Vector {
        let k = rng.pick_weighted(&self.weights);
        let eps = rng.sample_standard_normal(self.dim());
        &self.means[k] + &self.covs[k].factor().dot(&eps)
    }

    /// Log density at x, stabilized with log-sum-exp across components.
    pub fn logpdf(&self, x: &Vector) -> Result<f64> {
        let mut terms = Vec::with_capacity(self.weights.len());
        for k in 0..self.weights.len() {
            if self.weights[k] == 0.0 {
                continue;
            }
            terms.push(self.weights[k].ln() + gauss_logpdf(x, &self.means[k], &self.covs[k])?);
        }
        Ok(log_sum_exp(&terms))
    }

    /// Marginal mixture on the given (distinct, in-range) coordinates.
    pub fn marginal(&self, dims: &[usize]) -> Result<GaussianMixture> {
        let d = self.dim();
        if dims.is_empty() {
            return Err(Error::Field {
                reason: "marginal needs at least one coordinate".into(),
            });
        }
        if let Some(&bad) = dims.iter().find(|&&i| i >= d) {
            return Err(Error::DimMismatch {
                context: "GaussianMixture::marginal",
                expected: d,
                got: bad,
            });
        }
        let means = self
            .means
            .iter()
            .map(|m| Vector::from_iter(dims.iter().map(|&i| m[i])))
            .collect();
        let covs = self
            .covs
            .iter()
            .map(|c| {
                let full = c.matrix();
                let mut sub = Array2::<f64>::zeros((dims.len(), dims.len()));
                for (a, &i) in dims.iter().enumerate() {
                    for (b, &j) in dims.iter().enumerate() {
                        sub[[a, b]] = full[[i, j]];
                    }
                }
                SpdMatrix::new(sub)
            })
            .collect::<Result<Vec<_>>>()?;
        GaussianMixture::new(self.weights.clone(), means, covs)
    }
}

/// Prompt-like conditioning: which named mixture drives the field, with an
/// optional guidance blend against an unconditional mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct Condition {
    pub mixture_id: String,
    /// 1 disables guidance entirely; must be finite and >= 0.
    pub guidance_scale: f64,
    pub uncond_id: Option<String>,
}

impl Condition {
    pub fn plain(mixture_id: impl Into<String>) -> Self {
        Condition {
            mixture_id: mixture_id.into(),
            guidance_scale: 1.0,
            uncond_id: None,
        }
    }

    pub fn guided(
        mixture_id: impl Into<String>,
        guidance_scale: f64,
        uncond_id: Option<String>,
    ) -> Self {
        Condition {
            mixture_id: mixture_id.into(),
            guidance_scale,
            uncond_id: uncond_id.map(Into::into),
        }
    }
}

/// Evaluation contract shared by the exact mixture field and test doubles.
///
/// Evaluation mutates nothing but the counter, so fields are safe to share
/// across concurrent runs; counts are only meaningful per serialized run.
pub trait VelocityField: Sync {
    fn eval(&self, z: &Vector, sigma: f64, cond: &Condition) -> Result<Vector>;

    /// Total velocity evaluations so far (guidance counts its two branches).
    fn evals(&self) -> u64;

    fn dim(&self) -> usize;
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&sigma) {
        return Err(Error::Field {
            reason: format!("sigma must lie in [0, 1], got {sigma}"),
        });
    }
    Ok(())
}

/// Per-component posterior weights r_k(z) and conditional velocities
/// E[X − S | z, k] at image weight sigma.
fn component_stats(
    z: &Vector,
    sigma: f64,
    mix: &GaussianMixture,
) -> Result<(Vec<f64>, Vec<Vector>)> {
    check_sigma(sigma)?;
    if z.len() != mix.dim() {
        return Err(Error::DimMismatch {
            context: "mixture_velocity",
            expected: mix.dim(),
            got: z.len(),
        });
    }
    let d = mix.dim();
    let noise_var = (1.0 - sigma) * (1.0 - sigma);
    let k_count = mix.component_count();
    let mut log_terms = Vec::with_capacity(k_count);
    let mut cond_vels = Vec::with_capacity(k_count);
    for k in 0..k_count {
        let sigma_k = mix.covs()[k].matrix();
        let latent_cov =
            SpdMatrix::new(sigma_k * (sigma * sigma) + Array2::<f64>::eye(d) * noise_var)?;
        let center = &mix.means()[k] * sigma;
        let diff = z - &center;
        let u = latent_cov.solve(&diff);
        // E[X|z,k] − E[S|z,k] = mu_k + (sigma·Sigma_k − (1−sigma)·I)·u
        let ex = &mix.means()[k] + &(sigma_k.dot(&u) * sigma);
        let es = &u * (1.0 - sigma);
        cond_vels.push(&ex - &es);
        let lw = if mix.weights()[k] == 0.0 {
            f64::NEG_INFINITY
        } else {
            mix.weights()[k].ln()
        };
        log_terms.push(lw + gauss_logpdf(z, &center, &latent_cov)?);
    }
    let total = log_sum_exp(&log_terms);
    let resp = log_terms.iter().map(|lt| (lt - total).exp()).collect();
    Ok((resp, cond_vels))
}

/// Posterior component weights at image weight sigma; they sum to 1.
pub fn responsibilities(z: &Vector, sigma: f64, mix: &GaussianMixture) -> Result<Vec<f64>> {
    component_stats(z, sigma, mix).map(|(r, _)| r)
}

/// Exact conditional-expectation velocity E[X − S | Z_sigma = z] for X ~ mix.
///
/// The same formula covers the endpoints: at sigma = 1 it reduces to z, at
/// sigma = 0 to mixture mean − z.
pub fn mixture_velocity(z: &Vector, sigma: f64, mix: &GaussianMixture) -> Result<Vector> {
    let (resp, cond_vels) = component_stats(z, sigma, mix)?;
    let mut v = Vector::zeros(z.len());
    for (r, cv) in resp.iter().zip(&cond_vels) {
        v = v + &(cv * *r);
    }
    Ok(v)
}

/// Guidance blend v_u + g·(v_c − v_u) over named mixtures.
///
/// g = 1 short-circuits to the conditional velocity without resolving (or
/// costing) the unconditional branch. A missing `uncond_id` falls back to a
/// broad N(0, 9I) prior standing in for a null prompt.
pub fn guided_velocity(
    z: &Vector,
    sigma: f64,
    cond: &Condition,
    mixtures: &BTreeMap<String, GaussianMixture>,
) -> Result<Vector> {
    let g = cond.guidance_scale;
    if !g.is_finite() || g < 0.0 {
        return Err(Error::Field {
            reason: format!("guidance scale must be finite and nonnegative, got {g}"),
        });
    }
    let mix = mixtures
        .get(&cond.mixture_id)
        .ok_or_else(|| Error::UnknownCondition {
            name: cond.mixture_id.clone(),
        })?;
    let v_c = mixture_velocity(z, sigma, mix)?;
    if g == 1.0 {
        return Ok(v_c);
    }
    let v_u = match &cond.uncond_id {
        Some(id) => {
            let unc = mixtures.get(id).ok_or_else(|| Error::UnknownCondition {
                name: id.clone(),
            })?;
            mixture_velocity(z, sigma, unc)?
        }
        None => {
            let broad =
                GaussianMixture::isotropic(vec![1.0], vec![Vector::zeros(z.len())], 9.0)?;
            mixture_velocity(z, sigma, &broad)?
        }
    };
    let delta = &v_c - &v_u;
    Ok(&v_u + &(delta * g))
}

/// Exact mixture field with named prompts and an NFE counter.
#[derive(Debug)]
pub struct MixtureField {
    mixtures: BTreeMap<String, GaussianMixture>,
    dim: usize,
    counter: AtomicU64,
}

impl MixtureField {
    pub fn new(dim: usize) -> Self {
        MixtureField {
            mixtures: BTreeMap::new(),
            dim,
            counter: AtomicU64::new(0),
        }
    }

    pub fn insert(&mut self, id: impl Into<String>, mix: GaussianMixture) -> Result<()> {
        if mix.dim() != self.dim {
            return Err(Error::DimMismatch {
                context: "MixtureField::insert",
                expected: self.dim,
                got: mix.dim(),
            });
        }
        self.mixtures.insert(id.into(), mix);
        Ok(())
    }

    pub fn mixture(&self, id: &str) -> Option<&GaussianMixture> {
        self.mixtures.get(id)
    }

    pub fn mixtures(&self) -> &BTreeMap<String, GaussianMixture> {
        &self.mixtures
    }
}

impl VelocityField for MixtureField {
    fn eval(&self, z: &Vector, sigma: f64, cond: &Condition) -> Result<Vector> {
        let v = guided_velocity(z, sigma, cond, &self.mixtures)?;
        let cost = if cond.guidance_scale == 1.0 { 1 } else { 2 };
        self.counter.fetch_add(cost, Ordering::Relaxed);
        Ok(v)
    }

    fn evals(&self) -> u64 {
        self.counter.load(Ordering::Relaxed)
    }

    fn dim(&self) -> usize {
        self.dim
    }
}

/// Behavior of a test double.
#[derive(Debug, Clone)]
pub enum FixedKind {
    Zero,
    Constant(Vector),
    /// Straight-line pull (x0 − z)/(1 − sigma): along any line
    /// sigma·X + (1−sigma)·S with X = x0 it evaluates to exactly X − S,
    /// which zeroes the alignment residual by construction.
    LinearTo(Vector),
}

/// Deterministic stand-in field for exercising solvers without mixtures.
#[derive(Debug)]
pub struct FixedField {
    kind: FixedKind,
    dim: usize,
    counter: AtomicU64,
}

pub fn fixed_test_field(kind: FixedKind, dim: usize) -> Result<FixedField> {
    let vec_len = match &kind {
        FixedKind::Zero => dim,
        FixedKind::Constant(c) => c.len(),
        FixedKind::LinearTo(x0) => x0.len(),
    };
    if vec_len != dim {
        return Err(Error::DimMismatch {
            context: "fixed_test_field",
            expected: dim,
            got: vec_len,
        });
    }
    Ok(FixedField {
        kind,
        dim,
        counter: AtomicU64::new(0),
    })
}

impl VelocityField for FixedField {
    fn eval(&self, z: &Vector, sigma: f64, _cond: &Condition) -> Result<Vector> {
        check_sigma(sigma)?;
        if z.len() != self.dim {
            return Err(Error::DimMismatch {
                context: "FixedField::eval",
                expected: self.dim,
                got: z.len(),
            });
        }
        self.counter.fetch_add(1, Ordering::Relaxed);
        Ok(match &self.kind {
            FixedKind::Zero => Vector::zeros(self.dim),
            FixedKind::Constant(c) => c.clone(),
            FixedKind::LinearTo(x0) => {
                if sigma >= 1.0 {
                    // Clean-endpoint identity v(z, 1) = z shared by every
                    // exact conditional-expectation field.
                    z.clone()
                } else {
                    (x0 - z) / (1.0 - sigma)
                }
            }
        })
    }

    fn evals(&self) -> u64 {
        self.counter.load(Ordering::Relaxed)
    }

    fn dim(&self) -> usize {
        self.dim
    }
}
