//! Dense linear algebra and seeded randomness for low-dimensional scenarios.
//!
//! Everything runs in double precision on dimensions small enough (d <= 64,
//! enforced at config load) that a textbook Cholesky beats pulling in a
//! linear-algebra crate.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};

pub type Vector = Array1<f64>;

/// Lower-triangular Cholesky factor L with A = L·Lᵀ.
///
/// The caller guarantees symmetry; only the lower triangle is read.
pub fn cholesky(a: &Array2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimMismatch {
            context: "cholesky",
            expected: n,
            got: a.ncols(),
        });
    }
    let mut l = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[[i, j]];
            for k in 0..j {
                sum -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                // Catches non-positive pivots and NaN in one comparison.
                if !(sum > 0.0) {
                    return Err(Error::NotSpd { pivot: i });
                }
                l[[i, j]] = sum.sqrt();
            } else {
                l[[i, j]] = sum / l[[j, j]];
            }
        }
    }
    Ok(l)
}

/// Solve (L·Lᵀ)·x = b given the lower-triangular factor.
pub fn chol_solve(l: &Array2<f64>, b: &Vector) -> Vector {
    let n = l.nrows();
    debug_assert_eq!(b.len(), n);
    let mut y = b.clone();
    for i in 0..n {
        for k in 0..i {
            let t = y[k] * l[[i, k]];
            y[i] -= t;
        }
        y[i] /= l[[i, i]];
    }
    for i in (0..n).rev() {
        for k in (i + 1)..n {
            let t = y[k] * l[[k, i]];
            y[i] -= t;
        }
        y[i] /= l[[i, i]];
    }
    y
}

/// Symmetric positive definite matrix with its Cholesky factor attached.
#[derive(Debug, Clone)]
pub struct SpdMatrix {
    a: Array2<f64>,
    l: Array2<f64>,
}

impl SpdMatrix {
    /// Validates squareness, symmetry (1e-12 relative), and positive
    /// definiteness via the factorization itself.
    pub fn new(a: Array2<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::DimMismatch {
                context: "SpdMatrix::new",
                expected: n,
                got: a.ncols(),
            });
        }
        let scale = a.iter().fold(0.0f64, |m, &x| m.max(x.abs())).max(1.0);
        let mut asym = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                asym = asym.max((a[[i, j]] - a[[j, i]]).abs());
            }
        }
        if asym > 1e-12 * scale {
            return Err(Error::NotSymmetric { asymmetry: asym });
        }
        let l = cholesky(&a)?;
        Ok(SpdMatrix { a, l })
    }

    pub fn identity(d: usize) -> Self {
        SpdMatrix {
            a: Array2::eye(d),
            l: Array2::eye(d),
        }
    }

    /// s·I with s > 0.
    pub fn scaled_identity(d: usize, s: f64) -> Result<Self> {
        if !(s > 0.0) {
            return Err(Error::NotSpd { pivot: 0 });
        }
        Ok(SpdMatrix {
            a: Array2::eye(d) * s,
            l: Array2::eye(d) * s.sqrt(),
        })
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.a
    }

    pub fn factor(&self) -> &Array2<f64> {
        &self.l
    }

    pub fn solve(&self, b: &Vector) -> Vector {
        chol_solve(&self.l, b)
    }

    pub fn mul_vec(&self, x: &Vector) -> Vector {
        self.a.dot(x)
    }

    pub fn log_det(&self) -> f64 {
        2.0 * self.l.diag().iter().map(|&d| d.ln()).sum::<f64>()
    }
}

const LN_2PI: f64 = 1.837877066409345483560659472811;

/// Log density of N(mean, cov) at x.
pub fn gauss_logpdf(x: &Vector, mean: &Vector, cov: &SpdMatrix) -> Result<f64> {
    let d = cov.dim();
    if x.len() != d {
        return Err(Error::DimMismatch {
            context: "gauss_logpdf x",
            expected: d,
            got: x.len(),
        });
    }
    if mean.len() != d {
        return Err(Error::DimMismatch {
            context: "gauss_logpdf mean",
            expected: d,
            got: mean.len(),
        });
    }
    let resid = x - mean;
    let sol = cov.solve(&resid);
    let quad = resid.dot(&sol);
    Ok(-0.5 * (d as f64 * LN_2PI + cov.log_det() + quad))
}

/// Deterministic seeded random stream (ChaCha12 core).
///
/// Normal variates come from a fixed Box-Muller transform rather than a
/// library sampler so the exact stream is pinned by this crate and cannot
/// shift under a dependency upgrade. Pairs are drawn per call with no
/// cached leftover: a d-dimensional draw always consumes ceil(d/2) pairs.
pub struct RngStream {
    rng: ChaCha12Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        RngStream {
            rng: ChaCha12Rng::seed_from_u64(seed),
        }
    }

    /// Uniform draw in [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// One Box-Muller pair of independent standard normals.
    pub fn normal_pair(&mut self) -> (f64, f64) {
        // 1 - u in (0, 1] keeps the logarithm finite.
        let u1 = 1.0 - self.rng.random::<f64>();
        let u2 = self.rng.random::<f64>();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        (r * theta.cos(), r * theta.sin())
    }

    /// i.i.d. standard normal vector of length d.
    pub fn sample_standard_normal(&mut self, d: usize) -> Vector {
        let mut out = Vec::with_capacity(d);
        while out.len() < d {
            let (a, b) = self.normal_pair();
            out.push(a);
            if out.len() < d {
                out.push(b);
            }
        }
        Vector::from(out)
    }

    /// Index draw proportional to the given nonnegative weights.
    pub fn pick_weighted(&mut self, weights: &[f64]) -> usize {
        let total: f64 = weights.iter().sum();
        let u = self.uniform() * total;
        let mut acc = 0.0;
        for (i, w) in weights.iter().enumerate() {
            acc += w;
            if u < acc {
                return i;
            }
        }
        weights.len() - 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn cholesky_identity() {
        let l = cholesky(&Array2::eye(3)).unwrap();
        assert_eq!(l, Array2::<f64>::eye(3));
    }

    #[test]
    fn cholesky_diagonal_roots() {
        let l = cholesky(&array![[4.0, 0.0], [0.0, 9.0]]).unwrap();
        assert_eq!(l, array![[2.0, 0.0], [0.0, 3.0]]);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let err = cholesky(&array![[1.0, 2.0], [2.0, 1.0]]).unwrap_err();
        match err {
            Error::NotSpd { pivot } => assert_eq!(pivot, 1),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn spd_rejects_asymmetric() {
        let err = SpdMatrix::new(array![[1.0, 0.5], [0.2, 1.0]]).unwrap_err();
        assert!(matches!(err, Error::NotSymmetric { .. }));
    }

    fn random_spd(rng: &mut RngStream, d: usize) -> Array2<f64> {
        let mut b = Array2::<f64>::zeros((d, d));
        for i in 0..d {
            for j in 0..d {
                b[[i, j]] = rng.normal_pair().0;
            }
        }
        b.t().dot(&b) + Array2::<f64>::eye(d)
    }

    #[test]
    fn cholesky_reconstructs_random_spd() {
        let mut rng = RngStream::new(11);
        for d in [2usize, 5, 16] {
            let a = random_spd(&mut rng, d);
            let l = cholesky(&a).unwrap();
            let rec = l.dot(&l.t());
            let num = (&rec - &a).iter().fold(0.0f64, |m, &x| m.max(x.abs()));
            let den = a.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
            assert!(num / den <= 1e-10, "relative residual {}", num / den);
        }
    }

    #[test]
    fn cholesky_is_identity_on_factors() {
        // Factor a product built from a known lower-triangular matrix with
        // positive diagonal; the factorization must return it unchanged.
        let mut rng = RngStream::new(7);
        for d in [3usize, 8] {
            let mut l0 = Array2::<f64>::zeros((d, d));
            for i in 0..d {
                for j in 0..i {
                    l0[[i, j]] = rng.normal_pair().0;
                }
                l0[[i, i]] = 0.5 + rng.uniform();
            }
            let a = l0.dot(&l0.t());
            let l = cholesky(&a).unwrap();
            let diff = (&l - &l0).iter().fold(0.0f64, |m, &x| m.max(x.abs()));
            assert!(diff <= 1e-10, "factor drift {diff}");
        }
    }

    #[test]
    fn chol_solve_inverts() {
        let mut rng = RngStream::new(3);
        let a = random_spd(&mut rng, 6);
        let spd = SpdMatrix::new(a).unwrap();
        let x = rng.sample_standard_normal(6);
        let b = spd.mul_vec(&x);
        let back = spd.solve(&b);
        for i in 0..6 {
            assert!((back[i] - x[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn logpdf_standard_normal_at_mode() {
        let v = gauss_logpdf(
            &array![0.0],
            &array![0.0],
            &SpdMatrix::identity(1),
        )
        .unwrap();
        assert!((v - (-0.918938533204672742)).abs() < 1e-12);
    }

    #[test]
    fn logpdf_two_dim_at_mode() {
        let v = gauss_logpdf(
            &array![0.0, 0.0],
            &array![0.0, 0.0],
            &SpdMatrix::identity(2),
        )
        .unwrap();
        assert!((v + LN_2PI).abs() < 1e-12);
    }

    #[test]
    fn logpdf_integrates_to_one() {
        // Trapezoid quadrature over [-10, 10]; the integrand and all its
        // derivatives are ~1e-22 at the endpoints, so h = 1e-3 is far
        // inside the 1e-8 budget.
        let cov = SpdMatrix::new(array![[0.7]]).unwrap();
        let mean = array![0.3];
        let h = 1e-3;
        let n = (20.0 / h) as usize;
        let mut total = 0.0;
        for i in 0..=n {
            let x = -10.0 + i as f64 * h;
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            total += w * gauss_logpdf(&array![x], &mean, &cov).unwrap().exp();
        }
        total *= h;
        assert!((total - 1.0).abs() <= 1e-8, "integral {total}");
    }

    #[test]
    fn logpdf_permutation_invariant() {
        let mut rng = RngStream::new(19);
        let a = random_spd(&mut rng, 4);
        let cov = SpdMatrix::new(a.clone()).unwrap();
        let x = rng.sample_standard_normal(4);
        let mean = rng.sample_standard_normal(4);
        let base = gauss_logpdf(&x, &mean, &cov).unwrap();

        let perm = [2usize, 0, 3, 1];
        let px = Vector::from_iter(perm.iter().map(|&i| x[i]));
        let pmean = Vector::from_iter(perm.iter().map(|&i| mean[i]));
        let mut pa = Array2::<f64>::zeros((4, 4));
        for i in 0..4 {
            for j in 0..4 {
                pa[[i, j]] = a[[perm[i], perm[j]]];
            }
        }
        let pcov = SpdMatrix::new(pa).unwrap();
        let permuted = gauss_logpdf(&px, &pmean, &pcov).unwrap();
        assert!((base - permuted).abs() < 1e-12);
    }

    #[test]
    fn rng_same_seed_replays() {
        let mut a = RngStream::new(42);
        let mut b = RngStream::new(42);
        assert_eq!(a.sample_standard_normal(9), b.sample_standard_normal(9));
        assert_eq!(a.uniform(), b.uniform());
    }

    #[test]
    fn rng_seeds_separate_streams() {
        let mut a = RngStream::new(1);
        let mut b = RngStream::new(2);
        assert_ne!(a.sample_standard_normal(4), b.sample_standard_normal(4));
    }

    #[test]
    fn rng_draw_width_does_not_shift_stream_pairs() {
        // Odd-length draws burn the unused half of the final pair, so the
        // next draw starts on a fresh pair regardless of history length.
        let mut a = RngStream::new(5);
        let mut b = RngStream::new(5);
        a.sample_standard_normal(3);
        b.sample_standard_normal(4);
        assert_eq!(a.sample_standard_normal(2), b.sample_standard_normal(2));
    }

    #[test]
    fn normals_match_law_of_large_numbers() {
        let mut rng = RngStream::new(1234);
        let d = 4;
        let n = 250_000;
        let mut sum = vec![0.0; d];
        let mut sumsq = vec![0.0; d];
        for _ in 0..n {
            let v = rng.sample_standard_normal(d);
            for i in 0..d {
                sum[i] += v[i];
                sumsq[i] += v[i] * v[i];
            }
        }
        for i in 0..d {
            let mean = sum[i] / n as f64;
            let var = sumsq[i] / n as f64 - mean * mean;
            assert!(mean.abs() <= 0.01, "mean[{i}] = {mean}");
            assert!((var - 1.0).abs() <= 0.01, "var[{i}] = {var}");
        }
    }

    #[test]
    fn pick_weighted_hits_every_bucket() {
        let mut rng = RngStream::new(8);
        let w = [0.2, 0.5, 0.3];
        let mut counts = [0usize; 3];
        for _ in 0..30_000 {
            counts[rng.pick_weighted(&w)] += 1;
        }
        for (c, expect) in counts.iter().zip([0.2, 0.5, 0.3]) {
            let frac = *c as f64 / 30_000.0;
            assert!((frac - expect).abs() < 0.02, "frac {frac} vs {expect}");
        }
    }

    proptest! {
        #[test]
        fn solve_then_mul_roundtrips(seed in 0u64..500) {
            let mut rng = RngStream::new(seed);
            let a = random_spd(&mut rng, 5);
            let spd = SpdMatrix::new(a).unwrap();
            let b = rng.sample_standard_normal(5);
            let x = spd.solve(&b);
            let back = spd.mul_vec(&x);
            for i in 0..5 {
                prop_assert!((back[i] - b[i]).abs() < 1e-8);
            }
        }
    }
}
