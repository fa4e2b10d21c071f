//! Noise densities and the scalar functionals of them that the entrywise
//! transforms and the transformed CLTs consume.
//!
//! Every built-in density is symmetric with unit variance. Functionals are
//! computed by adaptive quadrature on `[-T, T]`, where `T` is the first point
//! at which the density has fallen below `1e-16 * g(0)`. Integrands are
//! written in terms of the score `h = -g'/g` and the curvature ratio `g''/g`
//! so that tails never divide two underflowing numbers.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::sync::Arc;

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{integrate, QuadOptions};

const TAIL_RATIO: f64 = 1e-16;
const CLOSED_FORM_TOL: f64 = 1e-6;

/// Closed-form evaluators for a user-supplied density.
///
/// Tabulated densities are deliberately unsupported: the Fisher information
/// depends on `g'` and finite-difference noise would corrupt it.
pub trait DensityFn: Send + Sync + fmt::Debug {
    fn density(&self, x: f64) -> f64;
    fn derivative(&self, x: f64) -> f64;
    fn second_derivative(&self, x: f64) -> f64;
    fn sample(&self, rng: &mut dyn RngCore) -> f64;
    fn name(&self) -> String {
        "custom".to_owned()
    }
}

/// A symmetric, unit-variance noise density.
#[derive(Clone, Debug)]
pub enum Density {
    Gaussian,
    /// `a * Rademacher + sqrt(1 - a^2) * N(0, 1)`, with `0 < a < 1`.
    Bimodal { a: f64 },
    /// `1 / (2 cosh(pi x / 2))`.
    Sech,
    Custom(Arc<dyn DensityFn>),
}

fn gaussian_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

fn sech(x: f64) -> f64 {
    1.0 / x.cosh()
}

impl Density {
    pub fn name(&self) -> String {
        match self {
            Density::Gaussian => "gaussian".to_owned(),
            Density::Bimodal { a } => format!("bimodal({a})"),
            Density::Sech => "sech".to_owned(),
            Density::Custom(c) => c.name(),
        }
    }

    pub fn density(&self, x: f64) -> f64 {
        match self {
            Density::Gaussian => gaussian_pdf(x),
            Density::Bimodal { a } => {
                let var = 1.0 - a * a;
                let norm = 1.0 / (2.0 * (2.0 * PI * var).sqrt());
                norm * ((-(x - a).powi(2) / (2.0 * var)).exp()
                    + (-(x + a).powi(2) / (2.0 * var)).exp())
            }
            Density::Sech => 0.5 / (FRAC_PI_2 * x).cosh(),
            Density::Custom(c) => c.density(x),
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match self {
            Density::Custom(c) => c.derivative(x),
            _ => -self.score(x) * self.density(x),
        }
    }

    pub fn second_derivative(&self, x: f64) -> f64 {
        match self {
            Density::Custom(c) => c.second_derivative(x),
            _ => self.curvature_ratio(x) * self.density(x),
        }
    }

    /// The score `h(x) = -g'(x) / g(x)`.
    pub fn score(&self, x: f64) -> f64 {
        match self {
            Density::Gaussian => x,
            Density::Bimodal { a } => {
                let var = 1.0 - a * a;
                (x - a * (a * x / var).tanh()) / var
            }
            Density::Sech => FRAC_PI_2 * (FRAC_PI_2 * x).tanh(),
            Density::Custom(c) => -c.derivative(x) / c.density(x),
        }
    }

    /// `h'(x)`.
    pub fn score_derivative(&self, x: f64) -> f64 {
        match self {
            Density::Gaussian => 1.0,
            Density::Bimodal { a } => {
                let var = 1.0 - a * a;
                let s = sech(a * x / var);
                (1.0 - a * a / var * s * s) / var
            }
            Density::Sech => {
                let s = sech(FRAC_PI_2 * x);
                FRAC_PI_2 * FRAC_PI_2 * s * s
            }
            Density::Custom(_) => {
                let h = self.score(x);
                h * h - self.curvature_ratio(x)
            }
        }
    }

    /// `g''(x) / g(x)`.
    pub fn curvature_ratio(&self, x: f64) -> f64 {
        match self {
            Density::Gaussian => x * x - 1.0,
            Density::Sech => {
                let s = sech(FRAC_PI_2 * x);
                FRAC_PI_2 * FRAC_PI_2 * (1.0 - 2.0 * s * s)
            }
            Density::Bimodal { .. } => {
                let h = self.score(x);
                h * h - self.score_derivative(x)
            }
            Density::Custom(c) => c.second_derivative(x) / c.density(x),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Density::Gaussian => rng.sample(StandardNormal),
            Density::Bimodal { a } => {
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                let z: f64 = rng.sample(StandardNormal);
                a * sign + (1.0 - a * a).sqrt() * z
            }
            Density::Sech => {
                // Inverse of the CDF (2/pi) atan(exp(pi x / 2)); u in the open interval (0, 1).
                let u = loop {
                    let u: f64 = rng.random();
                    if u > 0.0 {
                        break u;
                    }
                };
                (2.0 / PI) * (FRAC_PI_2 * u).tan().ln()
            }
            Density::Custom(c) => {
                let mut adapter = RngAdapter(rng);
                c.sample(&mut adapter)
            }
        }
    }

    /// Half-width of the integration window.
    pub fn truncation(&self) -> f64 {
        let g0 = self.density(0.0);
        let below = |t: f64| self.density(t) < TAIL_RATIO * g0;
        let mut hi = 1.0;
        while !below(hi) {
            hi *= 2.0;
            if hi > 1e4 {
                return hi;
            }
        }
        let mut lo = hi / 2.0;
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if below(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }

    /// `∫ f(x) g(x) dx` over the truncated window.
    pub fn expect<F: Fn(f64) -> f64>(&self, f: F) -> Result<f64> {
        let t = self.truncation();
        let opts = QuadOptions::default();
        integrate(|x| f(x) * self.density(x), -t, t, opts).map(|r| r.value)
    }

    fn validate(&self) -> Result<()> {
        if let Density::Bimodal { a } = self {
            if !(*a > 0.0 && *a < 1.0) {
                return Err(Error::Validation(format!(
                    "bimodal mixing amplitude must lie in (0, 1), got {a}"
                )));
            }
        }
        for &x in &[0.0, 0.3, 1.0, 1.7, 3.0] {
            let gp = self.density(x);
            let gm = self.density(-x);
            if !(gp > 0.0) || !gp.is_finite() {
                return Err(Error::Validation(format!(
                    "density of {} is not positive at {x}",
                    self.name()
                )));
            }
            if (gp - gm).abs() > 1e-12 * gp.max(1e-300) {
                return Err(Error::Validation(format!(
                    "density of {} is not symmetric at {x}",
                    self.name()
                )));
            }
        }
        Ok(())
    }
}

struct RngAdapter<'a, R: ?Sized>(&'a mut R);

impl<R: RngCore + ?Sized> RngCore for RngAdapter<'_, R> {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }
    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.0.fill_bytes(dst)
    }
}

/// Off-diagonal density `g`, optional diagonal density `g_d` (defaults to `g`),
/// and the diagonal second-moment scale `w2`.
#[derive(Clone, Debug)]
pub struct NoiseModel {
    pub density: Density,
    pub diagonal: Option<Density>,
    pub w2: f64,
}

/// Fisher informations and the two fourth-order functionals of the score.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NoiseFunctionals {
    pub fisher: f64,
    pub fisher_diag: f64,
    pub gh: f64,
    pub w4_tilde: f64,
}

impl NoiseFunctionals {
    /// The values a standard Gaussian produces; every transformed formula collapses here.
    pub const GAUSSIAN: NoiseFunctionals = NoiseFunctionals {
        fisher: 1.0,
        fisher_diag: 1.0,
        gh: 1.0,
        w4_tilde: 3.0,
    };

    pub fn compute(model: &NoiseModel) -> Result<Self> {
        if model.is_gaussian() {
            return Ok(Self::GAUSSIAN);
        }
        Ok(Self {
            fisher: fisher(model, false)?,
            fisher_diag: fisher(model, true)?,
            gh: gh_functional(model)?,
            w4_tilde: transformed_fourth_moment(model)?,
        })
    }
}

/// `M_q = E[q']`, `V_q = E[q^2]`, `E_q = E[x q(x)]` for `q = h_alpha`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransformFunctionals {
    pub alpha: f64,
    pub m_q: f64,
    pub v_q: f64,
    pub e_q: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Moments {
    pub w2: f64,
    pub w3: f64,
    pub w4: f64,
}

impl NoiseModel {
    pub fn new(density: Density) -> Result<Self> {
        density.validate()?;
        Ok(Self {
            density,
            diagonal: None,
            w2: 1.0,
        })
    }

    pub fn gaussian() -> Self {
        Self {
            density: Density::Gaussian,
            diagonal: None,
            w2: 1.0,
        }
    }

    /// Gaussian noise with GOE diagonal scaling (`w2 = 2`).
    pub fn goe() -> Self {
        Self::gaussian().with_w2(2.0)
    }

    pub fn bimodal(a: f64) -> Result<Self> {
        Self::new(Density::Bimodal { a })
    }

    pub fn sech() -> Self {
        Self {
            density: Density::Sech,
            diagonal: None,
            w2: 1.0,
        }
    }

    pub fn custom(f: Arc<dyn DensityFn>) -> Result<Self> {
        Self::new(Density::Custom(f))
    }

    pub fn with_w2(mut self, w2: f64) -> Self {
        self.w2 = w2;
        self
    }

    pub fn with_diagonal(mut self, diagonal: Density) -> Result<Self> {
        diagonal.validate()?;
        self.diagonal = Some(diagonal);
        Ok(self)
    }

    pub fn diagonal_density(&self) -> &Density {
        self.diagonal.as_ref().unwrap_or(&self.density)
    }

    pub fn name(&self) -> String {
        self.density.name()
    }

    pub fn is_gaussian(&self) -> bool {
        matches!(self.density, Density::Gaussian)
            && matches!(self.diagonal_density(), Density::Gaussian)
    }

    pub fn validate(&self) -> Result<()> {
        self.density.validate()?;
        if let Some(d) = &self.diagonal {
            d.validate()?;
        }
        if !(self.w2 > 0.0) || !self.w2.is_finite() {
            return Err(Error::Validation(format!("w2 must be positive, got {}", self.w2)));
        }
        Ok(())
    }
}

pub fn density(model: &NoiseModel, x: f64) -> f64 {
    model.density.density(x)
}

pub fn score(model: &NoiseModel, x: f64, diagonal: bool) -> f64 {
    if diagonal {
        model.diagonal_density().score(x)
    } else {
        model.density.score(x)
    }
}

/// Fisher information `∫ g'^2 / g` of `g` (or of `g_d` when `diagonal`).
pub fn fisher(model: &NoiseModel, diagonal: bool) -> Result<f64> {
    let d = if diagonal {
        model.diagonal_density()
    } else {
        &model.density
    };
    d.expect(|x| {
        let h = d.score(x);
        h * h
    })
}

/// `G^H = (1 / 2F_g) ∫ g'^2 g'' / g^2`.
pub fn gh_functional(model: &NoiseModel) -> Result<f64> {
    let d = &model.density;
    let f = fisher(model, false)?;
    let integral = d.expect(|x| {
        let h = d.score(x);
        h * h * d.curvature_ratio(x)
    })?;
    Ok(integral / (2.0 * f))
}

/// `w̃4 = (1 / F_g^2) ∫ g'^4 / g^3`, the fourth moment of the normalized transformed entries.
pub fn transformed_fourth_moment(model: &NoiseModel) -> Result<f64> {
    let d = &model.density;
    let f = fisher(model, false)?;
    let integral = d.expect(|x| d.score(x).powi(4))?;
    Ok(integral / (f * f))
}

/// Closed-form `(M_q, V_q, E_q)` for `q = h_alpha`, cross-checked by quadrature.
pub fn transform_functionals(model: &NoiseModel, alpha: f64) -> Result<TransformFunctionals> {
    let f = fisher(model, false)?;
    let closed = TransformFunctionals {
        alpha,
        m_q: f + alpha,
        v_q: f + 2.0 * alpha + alpha * alpha,
        e_q: 1.0 + alpha,
    };
    let quad = transform_functionals_quadrature(model, alpha)?;
    let checks = [
        ("M_q", closed.m_q, quad.m_q),
        ("V_q", closed.v_q, quad.v_q),
        ("E_q", closed.e_q, quad.e_q),
    ];
    for (what, c, q) in checks {
        if (c - q).abs() > CLOSED_FORM_TOL * c.abs().max(1.0) {
            return Err(Error::Consistency {
                what,
                closed: c,
                quadrature: q,
            });
        }
    }
    Ok(closed)
}

/// `(M_q, V_q, E_q)` by direct quadrature of `q' = h' + alpha`, `q^2` and `x q`.
pub fn transform_functionals_quadrature(
    model: &NoiseModel,
    alpha: f64,
) -> Result<TransformFunctionals> {
    let d = &model.density;
    let q = |x: f64| d.score(x) + alpha * x;
    Ok(TransformFunctionals {
        alpha,
        m_q: d.expect(|x| d.score_derivative(x) + alpha)?,
        v_q: d.expect(|x| q(x).powi(2))?,
        e_q: d.expect(|x| x * q(x))?,
    })
}

/// Configured `w2` and the third and fourth moments of `g` (quadrature unless Gaussian).
pub fn moments(model: &NoiseModel) -> Result<Moments> {
    let d = &model.density;
    if let Density::Gaussian = d {
        return Ok(Moments {
            w2: model.w2,
            w3: 0.0,
            w4: 3.0,
        });
    }
    let w3 = d.expect(|x| x.powi(3))?;
    let w4 = d.expect(|x| x.powi(4))?;
    Ok(Moments {
        w2: model.w2,
        w3,
        w4,
    })
}

/// `n` i.i.d. draws from `g`.
pub fn sample<R: Rng + ?Sized>(model: &NoiseModel, rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| model.density.sample(rng)).collect()
}

/// JSON form: `{"kind": "sech"}`, `{"kind": "bimodal", "a": 0.8660254}`, `{"kind": "gaussian", "w2": 2.0}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseConfig {
    Gaussian {
        #[serde(default)]
        w2: Option<f64>,
    },
    Bimodal {
        a: f64,
        #[serde(default)]
        w2: Option<f64>,
    },
    Sech {
        #[serde(default)]
        w2: Option<f64>,
    },
}

impl NoiseConfig {
    pub fn build(&self) -> Result<NoiseModel> {
        let (model, w2) = match *self {
            NoiseConfig::Gaussian { w2 } => (NoiseModel::gaussian(), w2),
            NoiseConfig::Bimodal { a, w2 } => (NoiseModel::bimodal(a)?, w2),
            NoiseConfig::Sech { w2 } => (NoiseModel::sech(), w2),
        };
        let model = model.with_w2(w2.unwrap_or(1.0));
        model.validate()?;
        Ok(model)
    }
}
