//! Eigenvalues, the semicircle and Marchenko–Pastur laws, and BBP outlier predictions.

use std::f64::consts::PI;

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::{evd, svd};
use faer::diag::Diag;
use faer::{Mat, Par};

use crate::error::{Error, Result};
use crate::quadrature::integrate_value;

/// Default absolute margin above the bulk edge for counting outliers.
pub const OUTLIER_TOL: f64 = 0.05;

/// Eigenvalues in non-increasing order.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
}

impl Spectrum {
    pub fn from_unsorted(mut eigenvalues: Vec<f64>) -> Self {
        eigenvalues.sort_by(|a, b| b.total_cmp(a));
        Self { eigenvalues }
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn largest(&self) -> Option<f64> {
        self.eigenvalues.first().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.eigenvalues.iter().copied()
    }
}

/// Full spectrum of an exactly symmetric matrix.
pub fn eigenvalues_sym(matrix: &Mat<f64>) -> Result<Spectrum> {
    let n = matrix.nrows();
    if matrix.ncols() != n {
        return Err(Error::Dimension(format!(
            "expected a square matrix, got {}x{}",
            n,
            matrix.ncols()
        )));
    }
    for j in 0..n {
        for i in 0..j {
            if matrix[(i, j)] != matrix[(j, i)] {
                return Err(Error::Validation(format!(
                    "matrix is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    check_finite(matrix)?;
    let par = Par::Seq;
    let mut s = Diag::<f64>::zeros(n);
    let scratch = evd::self_adjoint_evd_scratch::<f64>(
        n,
        evd::ComputeEigenvectors::No,
        par,
        Default::default(),
    );
    evd::self_adjoint_evd(
        matrix.as_ref(),
        s.as_mut(),
        None,
        par,
        MemStack::new(&mut MemBuffer::new(scratch)),
        Default::default(),
    )
    .map_err(|e| Error::LinAlg(format!("symmetric eigensolver: {e:?}")))?;
    Ok(Spectrum::from_unsorted(
        s.column_vector().iter().copied().collect(),
    ))
}

/// Eigenvalues of `Y Y^T`, computed as squared singular values of `Y`.
pub fn gram_spectrum(y: &Mat<f64>) -> Result<Spectrum> {
    let (m, n) = (y.nrows(), y.ncols());
    if m > n {
        return Err(Error::Dimension(format!(
            "gram spectrum needs M <= N, got {m}x{n}"
        )));
    }
    check_finite(y)?;
    let par = Par::Seq;
    let mut s = Diag::<f64>::zeros(m);
    let scratch = svd::svd_scratch::<f64>(
        m,
        n,
        svd::ComputeSvdVectors::No,
        svd::ComputeSvdVectors::No,
        par,
        Default::default(),
    );
    svd::svd(
        y.as_ref(),
        s.as_mut(),
        None,
        None,
        par,
        MemStack::new(&mut MemBuffer::new(scratch)),
        Default::default(),
    )
    .map_err(|e| Error::LinAlg(format!("singular value decomposition: {e:?}")))?;
    Ok(Spectrum::from_unsorted(
        s.column_vector().iter().map(|v| v * v).collect(),
    ))
}

fn check_finite(m: &Mat<f64>) -> Result<()> {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if !m[(i, j)].is_finite() {
                return Err(Error::Validation(format!("non-finite entry at ({i}, {j})")));
            }
        }
    }
    Ok(())
}

/// Semicircle Stieltjes transform for `|z| > 2`, the root of `s² + zs + 1 = 0` with `|s| < 1`.
pub fn semicircle_stieltjes(z: f64) -> Result<f64> {
    if !(z.abs() > 2.0) {
        return Err(Error::domain("semicircle_stieltjes", format!("z = {z} lies in [-2, 2]")));
    }
    // -2/(z + sqrt(z²-4)) equals (-z + sqrt(z²-4))/2 without the cancellation.
    let r = (z * z - 4.0).sqrt();
    Ok(if z > 0.0 { -2.0 / (z + r) } else { 2.0 / (r - z) })
}

/// Semicircle law on `[-2, 2]`.
#[derive(Clone, Copy, Debug, Default)]
pub struct SemicircleLaw;

impl SemicircleLaw {
    pub fn density(&self, x: f64) -> f64 {
        if x.abs() >= 2.0 {
            0.0
        } else {
            (4.0 - x * x).sqrt() / (2.0 * PI)
        }
    }

    /// `∫ f dμ_sc` via `x = 2 cos θ`.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> Result<f64> {
        integrate_value(
            |t| {
                let s = t.sin();
                f(2.0 * t.cos()) * 2.0 * s * s / PI
            },
            0.0,
            PI,
        )
    }
}

/// Marchenko–Pastur law of ratio `d0 = M/N ∈ (0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MpLaw {
    pub d0: f64,
}

impl MpLaw {
    pub fn new(d0: f64) -> Result<Self> {
        if !(d0 > 0.0 && d0 <= 1.0) {
            return Err(Error::Validation(format!("d0 must lie in (0, 1], got {d0}")));
        }
        Ok(Self { d0 })
    }

    pub fn d_minus(&self) -> f64 {
        (1.0 - self.d0.sqrt()).powi(2)
    }

    pub fn d_plus(&self) -> f64 {
        (1.0 + self.d0.sqrt()).powi(2)
    }

    pub fn density(&self, x: f64) -> f64 {
        let (lo, hi) = (self.d_minus(), self.d_plus());
        if x <= lo || x >= hi {
            0.0
        } else {
            ((hi - x) * (x - lo)).sqrt() / (2.0 * PI * self.d0 * x)
        }
    }

    /// `∫ f dμ_MP` via `x = 1 + d0 + 2 sqrt(d0) cos θ`.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> Result<f64> {
        let c = 1.0 + self.d0;
        let r = 2.0 * self.d0.sqrt();
        integrate_value(
            |t| {
                let x = c + r * t.cos();
                let s = r * t.sin();
                f(x) * s * s / (2.0 * PI * self.d0 * x)
            },
            0.0,
            PI,
        )
    }

    /// Stieltjes transform for real `z` outside `[d_-, d_+]`, `z ≠ 0`.
    pub fn stieltjes(&self, z: f64) -> Result<f64> {
        mp_stieltjes(z, self)
    }

    /// Companion transform `d0 s(z) + (d0 - 1)/z`.
    pub fn companion_stieltjes(&self, z: f64) -> Result<f64> {
        Ok(self.d0 * mp_stieltjes(z, self)? + (self.d0 - 1.0) / z)
    }
}

pub fn mp_stieltjes(z: f64, law: &MpLaw) -> Result<f64> {
    let d0 = law.d0;
    if z == 0.0 || (z >= law.d_minus() && z <= law.d_plus()) || !z.is_finite() {
        return Err(Error::domain(
            "mp_stieltjes",
            format!(
                "z = {z} is zero or inside [{}, {}]",
                law.d_minus(),
                law.d_plus()
            ),
        ));
    }
    // s = (B + sqrt(D)) / (2 d0 z) with B = 1 - d0 - z, D = B² - 4 d0 z; the
    // sign of the root is chosen per side and the ratio rationalized.
    let b = 1.0 - d0 - z;
    let disc = (b * b - 4.0 * d0 * z).max(0.0).sqrt();
    Ok(if z > law.d_plus() {
        2.0 / (b - disc)
    } else {
        2.0 / (b + disc)
    })
}

/// Limiting outlier location and squared eigenvector overlap.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BbpPrediction {
    pub outlier_location: f64,
    pub overlap: f64,
    pub supercritical: bool,
}

pub fn bbp_wigner(lambda_eff: f64) -> BbpPrediction {
    if lambda_eff > 1.0 {
        let r = lambda_eff.sqrt();
        BbpPrediction {
            outlier_location: r + 1.0 / r,
            overlap: 1.0 - 1.0 / lambda_eff,
            supercritical: true,
        }
    } else {
        BbpPrediction {
            outlier_location: 2.0,
            overlap: 0.0,
            supercritical: false,
        }
    }
}

pub fn bbp_rect(lambda_eff: f64, law: &MpLaw) -> BbpPrediction {
    let d0 = law.d0;
    if lambda_eff > d0.sqrt() {
        BbpPrediction {
            outlier_location: (1.0 + lambda_eff) * (1.0 + d0 / lambda_eff),
            overlap: 1.0 - d0 * (1.0 + lambda_eff) / (lambda_eff * (lambda_eff + d0)),
            supercritical: true,
        }
    } else {
        BbpPrediction {
            outlier_location: law.d_plus(),
            overlap: 0.0,
            supercritical: false,
        }
    }
}

/// Number of eigenvalues strictly above `edge + tol`.
pub fn count_outliers(spectrum: &Spectrum, edge: f64, tol: f64) -> usize {
    spectrum.iter().filter(|&x| x > edge + tol).count()
}
