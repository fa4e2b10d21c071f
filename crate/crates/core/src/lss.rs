//! Linear spectral statistics: the log-determinant test statistics, their
//! closed-form CLT parameters, and the Chebyshev-series CLT used to
//! cross-check them for arbitrary test functions.
//!
//! Four cases are covered: Wigner and rectangular, each raw or after the
//! entrywise transform. In every case the mean under `k` spikes of strength
//! `ω` is `m_k = m_0 + k V_0 / 2`; [`CltParams`] stores the per-spike shift
//! separately so that identity is checkable rather than built in.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::noise::NoiseFunctionals;
use crate::spectral::Spectrum;

/// Default truncation order of the Chebyshev series.
pub const DEFAULT_L_MAX: usize = 200;
const SERIES_TOL: f64 = 1e-8;

/// Model and moment data that fix the form of the statistic and its CLT.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LssCase {
    Wigner { w2: f64, w4: f64 },
    Rect { d0: f64, w4: f64 },
    WignerTransformed { w2: f64, functionals: NoiseFunctionals },
    RectTransformed { d0: f64, functionals: NoiseFunctionals },
}

impl LssCase {
    pub fn name(&self) -> &'static str {
        match self {
            LssCase::Wigner { .. } => "wigner",
            LssCase::Rect { .. } => "rect",
            LssCase::WignerTransformed { .. } => "wigner_transformed",
            LssCase::RectTransformed { .. } => "rect_transformed",
        }
    }

    pub fn is_rect(&self) -> bool {
        matches!(self, LssCase::Rect { .. } | LssCase::RectTransformed { .. })
    }

    pub fn is_transformed(&self) -> bool {
        matches!(
            self,
            LssCase::WignerTransformed { .. } | LssCase::RectTransformed { .. }
        )
    }

    /// Largest admissible `ω` (exclusive).
    pub fn omega_limit(&self) -> f64 {
        match *self {
            LssCase::Wigner { .. } => 1.0,
            LssCase::Rect { d0, .. } => d0.sqrt(),
            LssCase::WignerTransformed { functionals, .. } => 1.0 / functionals.fisher,
            LssCase::RectTransformed { d0, functionals } => d0.sqrt() / functionals.fisher,
        }
    }

    fn validate(&self) -> Result<()> {
        let (fourth, scale) = match *self {
            LssCase::Wigner { w2, w4 } => (w4, w2),
            LssCase::Rect { d0, w4 } => (w4, d0),
            LssCase::WignerTransformed { w2, functionals } => (functionals.w4_tilde, w2),
            LssCase::RectTransformed { d0, functionals } => (functionals.w4_tilde, d0),
        };
        if !(fourth > 1.0) {
            return Err(Error::domain(
                "lss",
                format!("fourth moment must exceed 1, got {fourth}"),
            ));
        }
        if !(scale > 0.0) {
            return Err(Error::domain("lss", format!("w2 and d0 must be positive, got {scale}")));
        }
        if self.is_rect() && scale > 1.0 {
            return Err(Error::domain("lss", format!("d0 must lie in (0, 1], got {scale}")));
        }
        if let LssCase::WignerTransformed { functionals, .. }
        | LssCase::RectTransformed { functionals, .. } = self
        {
            if !(functionals.fisher > 0.0 && functionals.fisher_diag > 0.0) {
                return Err(Error::domain("lss", "Fisher information must be positive"));
            }
        }
        Ok(())
    }

    fn check_omega(&self, omega: f64, allow_zero: bool) -> Result<()> {
        self.validate()?;
        let limit = self.omega_limit();
        let low_ok = if allow_zero { omega >= 0.0 } else { omega > 0.0 };
        if !(low_ok && omega < limit) {
            return Err(Error::domain(
                "lss",
                format!(
                    "ω = {omega} outside the subcritical range ({}, {limit}) for the {} case",
                    if allow_zero { "[0" } else { "(0" },
                    self.name()
                ),
            ));
        }
        Ok(())
    }

    /// The statistic `L_ω` evaluated on a spectrum.
    pub fn statistic(&self, spectrum: &Spectrum, omega: f64) -> Result<f64> {
        // Wigner statistics are identically zero at ω = 0; rectangular ones are singular there.
        self.check_omega(omega, !self.is_rect())?;
        let phi = self.optimal_phi_unchecked(omega);
        let term = phi.terms[0];
        let count = spectrum.len() as f64;
        let mut sum_mu = 0.0;
        let mut sum_mu2 = 0.0;
        let mut log_sum = 0.0;
        for mu in spectrum.iter() {
            let arg = term.p - term.q * mu;
            if !(arg > 0.0) {
                return Err(Error::Supercritical {
                    eigenvalue: mu,
                    pole: term.p / term.q,
                });
            }
            log_sum += arg.ln();
            sum_mu += mu;
            sum_mu2 += mu * mu;
        }
        let centered = match *self {
            LssCase::Wigner { .. } | LssCase::WignerTransformed { .. } => {
                // ∫ log(1 + θ - sqrt(θ) x) dμ_sc = θ/2 and ∫ x² dμ_sc = 1.
                let theta = term.q * term.q;
                theta * count / 2.0 + term.lin * sum_mu + term.quad * (sum_mu2 - count)
            }
            LssCase::Rect { d0, .. } | LssCase::RectTransformed { d0, .. } => {
                let theta = self.rect_theta(omega);
                term.lin * (sum_mu - count)
                    + count
                        * (theta / d0 - (theta / d0).ln() - (1.0 - d0) / d0 * theta.ln_1p())
            }
        };
        Ok(-log_sum + centered)
    }

    fn rect_theta(&self, omega: f64) -> f64 {
        match *self {
            LssCase::RectTransformed { functionals, .. } => omega * functionals.fisher,
            _ => omega,
        }
    }

    /// Closed-form null mean, variance and per-spike mean shift.
    pub fn clt(&self, omega: f64) -> Result<CltParams> {
        self.check_omega(omega, false)?;
        let (m0, shift, v0) = match *self {
            LssCase::Wigner { w2, w4 } => {
                let l = -(-omega).ln_1p();
                let b = 2.0 / w2 - 1.0;
                let c = 1.0 / (w4 - 1.0) - 0.5;
                (
                    0.5 * l + ((w2 - 1.0) / (w4 - 1.0) - 0.5) * omega + (w4 - 3.0) * omega * omega / 4.0,
                    l + b * omega + c * omega * omega,
                    2.0 * l + 2.0 * b * omega + 2.0 * c * omega * omega,
                )
            }
            LssCase::Rect { d0, w4 } => {
                let r = omega * omega / d0;
                let l = -(-r).ln_1p();
                let c = 2.0 / (w4 - 1.0) - 1.0;
                (
                    0.5 * l + 0.5 * r * (w4 - 3.0),
                    l + r * c,
                    2.0 * l + 2.0 * r * c,
                )
            }
            LssCase::WignerTransformed { w2, functionals } => {
                let NoiseFunctionals {
                    fisher: f,
                    fisher_diag: fd,
                    gh: g,
                    w4_tilde: w4t,
                } = functionals;
                let theta = omega * f;
                let l = -(-theta).ln_1p();
                let b = 2.0 * fd / w2 - f;
                let c = g * g / (w4t - 1.0) - f * f / 2.0;
                (
                    0.5 * l
                        + ((w2 - 1.0) * g / (w4t - 1.0) - f / 2.0) * omega
                        + (w4t - 3.0) * theta * theta / 4.0,
                    l + b * omega + c * omega * omega,
                    2.0 * l + 2.0 * b * omega + 2.0 * c * omega * omega,
                )
            }
            LssCase::RectTransformed { d0, functionals } => {
                let NoiseFunctionals {
                    fisher: f,
                    gh: g,
                    w4_tilde: w4t,
                    ..
                } = functionals;
                let r = omega * omega * f * f / d0;
                let l = -(-r).ln_1p();
                let c = (2.0 * omega * omega / d0) * (g * g / (w4t - 1.0) - f * f / 2.0);
                (0.5 * l + 0.5 * r * (w4t - 3.0), l + c, 2.0 * l + 2.0 * c)
            }
        };
        Ok(CltParams {
            case: *self,
            omega,
            m0,
            v0,
            shift,
        })
    }

    /// The statistic's generating function, the optimal LSS test function for this case.
    pub fn optimal_phi(&self, omega: f64) -> Result<OptimalPhi> {
        self.check_omega(omega, !self.is_rect())?;
        Ok(self.optimal_phi_unchecked(omega))
    }

    /// `Φ_Ω = Σ_s φ_{ω_s}`.
    pub fn optimal_phi_multi(&self, omegas: &[f64]) -> Result<OptimalPhi> {
        let mut terms = Vec::with_capacity(omegas.len());
        for &w in omegas {
            terms.extend(self.optimal_phi(w)?.terms);
        }
        Ok(OptimalPhi { terms })
    }

    fn optimal_phi_unchecked(&self, omega: f64) -> OptimalPhi {
        let term = match *self {
            LssCase::Wigner { w2, w4 } => {
                let r = omega.sqrt();
                PhiTerm {
                    p: 1.0 + omega,
                    q: r,
                    lin: r * (2.0 / w2 - 1.0),
                    quad: omega * (1.0 / (w4 - 1.0) - 0.5),
                }
            }
            LssCase::Rect { d0, w4 } => PhiTerm {
                p: (1.0 + d0 / omega) * (1.0 + omega),
                q: 1.0,
                lin: (omega / d0) * (2.0 / (w4 - 1.0) - 1.0),
                quad: 0.0,
            },
            LssCase::WignerTransformed { w2, functionals } => {
                let f = functionals.fisher;
                let theta = omega * f;
                PhiTerm {
                    p: 1.0 + theta,
                    q: theta.sqrt(),
                    lin: omega.sqrt() * (2.0 * functionals.fisher_diag.sqrt() / w2 - f.sqrt()),
                    quad: omega * (functionals.gh / (functionals.w4_tilde - 1.0) - f / 2.0),
                }
            }
            LssCase::RectTransformed { d0, functionals } => {
                let f = functionals.fisher;
                let theta = omega * f;
                PhiTerm {
                    p: (d0 / theta + 1.0) * (theta + 1.0),
                    q: 1.0,
                    lin: (2.0 * omega / d0)
                        * (functionals.gh / (functionals.w4_tilde - 1.0) - f / 2.0),
                    quad: 0.0,
                }
            }
        };
        OptimalPhi { terms: vec![term] }
    }

    /// Chebyshev-series mean of `Σ f(μ_i) - N ∫ f dμ` under spikes `omegas`.
    pub fn mean_series<F: SpectralFunction + ?Sized>(
        &self,
        f: &F,
        omegas: &[f64],
        l_max: usize,
    ) -> Result<SeriesValue> {
        self.validate()?;
        check_l_max(l_max)?;
        for &w in omegas {
            self.check_omega(w, false)?;
        }
        let g = self.rescaled(f);
        let tau = ChebyshevCoeffs::compute(&g, l_max)?;
        let t = &tau.tau;
        let ends = (g.eval(2.0)? + g.eval(-2.0)?) / 4.0;
        let mut value = ends - t[0] / 2.0;
        let mut tail_terms = Vec::new();
        match *self {
            LssCase::Wigner { w2, w4 } => {
                value += (w2 - 2.0) * t[2] + (w4 - 3.0) * tau.get(4);
                for &w in omegas {
                    add_power_series(&mut value, &mut tail_terms, t, 1, |l| w.powf(l as f64 / 2.0));
                }
            }
            LssCase::WignerTransformed { w2, functionals } => {
                value += (w2 - 2.0) * t[2] + (functionals.w4_tilde - 3.0) * tau.get(4);
                let f = functionals.fisher;
                for &w in omegas {
                    value += (w * functionals.fisher_diag).sqrt() * t[1] + w * functionals.gh * t[2];
                    add_power_series(&mut value, &mut tail_terms, t, 3, |l| {
                        (w * f).powf(l as f64 / 2.0)
                    });
                }
            }
            LssCase::Rect { d0, w4 } => {
                value += (w4 - 3.0) * t[2];
                for &w in omegas {
                    let r = w / d0.sqrt();
                    add_power_series(&mut value, &mut tail_terms, t, 1, |l| r.powi(l as i32));
                }
            }
            LssCase::RectTransformed { d0, functionals } => {
                value += (functionals.w4_tilde - 3.0) * t[2];
                let f = functionals.fisher;
                for &w in omegas {
                    value += (w / d0.sqrt()) * (functionals.gh - f) * t[1];
                    let r = w * f / d0.sqrt();
                    add_power_series(&mut value, &mut tail_terms, t, 1, |l| r.powi(l as i32));
                }
            }
        }
        let tail = tail_terms.iter().copied().fold(0.0, f64::max).max(tau.tail);
        Ok(SeriesValue::new(value, tail))
    }

    /// Chebyshev-series variance of the LSS of `f`.
    pub fn variance_series<F: SpectralFunction + ?Sized>(
        &self,
        f: &F,
        l_max: usize,
    ) -> Result<SeriesValue> {
        self.validate()?;
        check_l_max(l_max)?;
        let g = self.rescaled(f);
        let tau = ChebyshevCoeffs::compute(&g, l_max)?;
        let t = &tau.tau;
        let sum: f64 = (1..t.len()).map(|l| l as f64 * t[l] * t[l]).sum();
        let value = match *self {
            LssCase::Wigner { w2, w4 } => {
                (w2 - 2.0) * t[1] * t[1] + 2.0 * (w4 - 3.0) * t[2] * t[2] + 2.0 * sum
            }
            LssCase::WignerTransformed { w2, functionals } => {
                (w2 - 2.0) * t[1] * t[1]
                    + 2.0 * (functionals.w4_tilde - 3.0) * t[2] * t[2]
                    + 2.0 * sum
            }
            LssCase::Rect { w4, .. } => 2.0 * sum + (w4 - 3.0) * t[1] * t[1],
            LssCase::RectTransformed { functionals, .. } => {
                2.0 * sum + (functionals.w4_tilde - 3.0) * t[1] * t[1]
            }
        };
        let tail = 2.0 * (t.len() as f64) * tau.tail * tau.tail + tau.tail;
        Ok(SeriesValue::new(value, tail))
    }

    fn rescaled<'a, F: SpectralFunction + ?Sized>(&self, f: &'a F) -> Rescaled<'a, F> {
        match *self {
            LssCase::Rect { d0, .. } | LssCase::RectTransformed { d0, .. } => Rescaled {
                f,
                scale: d0.sqrt(),
                shift: 1.0 + d0,
            },
            _ => Rescaled {
                f,
                scale: 1.0,
                shift: 0.0,
            },
        }
    }
}

fn check_l_max(l_max: usize) -> Result<()> {
    if l_max < 20 {
        return Err(Error::Validation(format!(
            "series truncation order must be at least 20, got {l_max}"
        )));
    }
    Ok(())
}

fn add_power_series(
    value: &mut f64,
    tail_terms: &mut Vec<f64>,
    tau: &[f64],
    start: usize,
    weight: impl Fn(usize) -> f64,
) {
    let l_max = tau.len() - 1;
    for (l, &t) in tau.iter().enumerate().skip(start) {
        let term = weight(l) * t;
        *value += term;
        if l + 4 > l_max {
            tail_terms.push(term.abs());
        }
    }
}

// f̃(x) = f(scale x + shift): maps [-2, 2] onto the bulk support.
struct Rescaled<'a, F: ?Sized> {
    f: &'a F,
    scale: f64,
    shift: f64,
}

impl<F: SpectralFunction + ?Sized> SpectralFunction for Rescaled<'_, F> {
    fn eval(&self, x: f64) -> Result<f64> {
        self.f.eval(self.scale * x + self.shift)
    }
}

/// Limiting Gaussian parameters of a statistic.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CltParams {
    pub case: LssCase,
    pub omega: f64,
    pub m0: f64,
    pub v0: f64,
    /// Mean increment per spike.
    pub shift: f64,
}

impl CltParams {
    pub fn mk(&self, k: usize) -> f64 {
        self.m0 + k as f64 * self.shift
    }

    /// Critical value `(m_{k1} + m_{k2}) / 2`.
    pub fn m_mid(&self, k1: usize, k2: usize) -> f64 {
        0.5 * (self.mk(k1) + self.mk(k2))
    }
}

pub fn stat_wigner(spectrum: &Spectrum, omega: f64, w2: f64, w4: f64) -> Result<f64> {
    LssCase::Wigner { w2, w4 }.statistic(spectrum, omega)
}

pub fn stat_rect(spectrum: &Spectrum, omega: f64, d0: f64, w4: f64) -> Result<f64> {
    LssCase::Rect { d0, w4 }.statistic(spectrum, omega)
}

pub fn stat_wigner_transformed(
    spectrum: &Spectrum,
    omega: f64,
    functionals: &NoiseFunctionals,
    w2: f64,
) -> Result<f64> {
    LssCase::WignerTransformed {
        w2,
        functionals: *functionals,
    }
    .statistic(spectrum, omega)
}

pub fn stat_rect_transformed(
    spectrum: &Spectrum,
    omega: f64,
    d0: f64,
    functionals: &NoiseFunctionals,
) -> Result<f64> {
    LssCase::RectTransformed {
        d0,
        functionals: *functionals,
    }
    .statistic(spectrum, omega)
}

pub fn clt_wigner(omega: f64, w2: f64, w4: f64) -> Result<CltParams> {
    LssCase::Wigner { w2, w4 }.clt(omega)
}

pub fn clt_rect(omega: f64, d0: f64, w4: f64) -> Result<CltParams> {
    LssCase::Rect { d0, w4 }.clt(omega)
}

pub fn clt_wigner_transformed(omega: f64, functionals: &NoiseFunctionals, w2: f64) -> Result<CltParams> {
    LssCase::WignerTransformed {
        w2,
        functionals: *functionals,
    }
    .clt(omega)
}

pub fn clt_rect_transformed(omega: f64, d0: f64, functionals: &NoiseFunctionals) -> Result<CltParams> {
    LssCase::RectTransformed {
        d0,
        functionals: *functionals,
    }
    .clt(omega)
}

/// A real function evaluated on spectra.
pub trait SpectralFunction {
    fn eval(&self, x: f64) -> Result<f64>;
}

impl<F: Fn(f64) -> f64> SpectralFunction for F {
    fn eval(&self, x: f64) -> Result<f64> {
        Ok(self(x))
    }
}

/// `lin x + quad x² - log(p - q x)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PhiTerm {
    pub p: f64,
    pub q: f64,
    pub lin: f64,
    pub quad: f64,
}

/// Sum of [`PhiTerm`]s, one per SNR.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OptimalPhi {
    pub terms: Vec<PhiTerm>,
}

impl SpectralFunction for OptimalPhi {
    fn eval(&self, x: f64) -> Result<f64> {
        let mut s = 0.0;
        for t in &self.terms {
            let arg = t.p - t.q * x;
            if !(arg > 0.0) {
                return Err(Error::domain(
                    "optimal_phi",
                    format!("log argument {arg} is not positive at x = {x}"),
                ));
            }
            s += t.lin * x + t.quad * x * x - arg.ln();
        }
        Ok(s)
    }
}

/// `τ_0 … τ_L` of `f` on `[-2, 2]`, with `τ_ℓ = (1/π) ∫ T_ℓ(x/2) f(x) / sqrt(4 - x²) dx`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChebyshevCoeffs {
    pub tau: Vec<f64>,
    /// Magnitude of the largest of the last few coefficients.
    pub tail: f64,
}

impl ChebyshevCoeffs {
    /// Gauss–Chebyshev rule with `max(4 L, 256)` nodes.
    pub fn compute<F: SpectralFunction + ?Sized>(f: &F, l_max: usize) -> Result<Self> {
        let n = (4 * l_max).max(256);
        let nodes: Vec<(f64, f64)> = (0..n)
            .map(|j| {
                let theta = (j as f64 + 0.5) * PI / n as f64;
                f.eval(2.0 * theta.cos()).map(|v| (theta, v))
            })
            .collect::<Result<_>>()?;
        let tau: Vec<f64> = (0..=l_max)
            .map(|l| {
                nodes
                    .iter()
                    .map(|&(theta, v)| (l as f64 * theta).cos() * v)
                    .sum::<f64>()
                    / n as f64
            })
            .collect();
        let tail = tau[l_max.saturating_sub(3)..]
            .iter()
            .map(|t| t.abs())
            .fold(0.0, f64::max);
        Ok(Self { tau, tail })
    }

    pub fn get(&self, l: usize) -> f64 {
        self.tau.get(l).copied().unwrap_or(0.0)
    }
}

pub fn chebyshev_tau<F: SpectralFunction + ?Sized>(f: &F, ell: usize, l_max: usize) -> Result<f64> {
    Ok(ChebyshevCoeffs::compute(f, l_max.max(ell))?.get(ell))
}

/// A truncated series value with its tail estimate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeriesValue {
    pub value: f64,
    pub tail: f64,
    pub converged: bool,
}

impl SeriesValue {
    fn new(value: f64, tail: f64) -> Self {
        Self {
            value,
            tail,
            converged: tail <= SERIES_TOL * value.abs().max(1.0),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::MpLaw;
    use proptest::prelude::*;

    fn sech_functionals() -> NoiseFunctionals {
        NoiseFunctionals {
            fisher: PI * PI / 8.0,
            fisher_diag: PI * PI / 8.0,
            gh: PI * PI / 16.0,
            w4_tilde: 1.5,
        }
    }

    fn spectrum(v: &[f64]) -> Spectrum {
        Spectrum::from_unsorted(v.to_vec())
    }

    #[test]
    fn wigner_statistic_values() {
        let s = spectrum(&[1.3, 0.2, -0.7, -1.9]);
        assert_eq!(stat_wigner(&s, 0.0, 1.0, 5.0).unwrap(), 0.0);
        let omega: f64 = 0.3;
        let goe = stat_wigner(&s, omega, 2.0, 3.0).unwrap();
        let direct: f64 = -s.iter().map(|m| (1.0 + omega - omega.sqrt() * m).ln()).sum::<f64>()
            + omega * 4.0 / 2.0;
        assert!((goe - direct).abs() < 1e-14);
        let v = stat_wigner(&spectrum(&[0.5, -0.5]), 0.25, 1.0, 5.0).unwrap();
        assert!((v - -0.061_715_108_108_164_38).abs() < 1e-14, "{v}");
    }

    #[test]
    fn rect_statistic_values() {
        let v = stat_rect(&spectrum(&[1.5; 4]), 0.3, 0.5, 5.0).unwrap();
        assert!((v - 0.088_485_188_219_742_22).abs() < 1e-13, "{v}");
        assert!(matches!(stat_rect(&spectrum(&[1.0]), 0.0, 0.5, 3.0), Err(Error::Domain { .. })));
        assert!(stat_rect(&spectrum(&[1.0]), 0.8, 0.5, 3.0).is_err());
    }

    #[test]
    fn supercritical_spectrum_is_typed() {
        // Pole of the ω = 0.25 Wigner statistic is (1 + ω)/sqrt(ω) = 2.5.
        let err = stat_wigner(&spectrum(&[2.6, 0.0]), 0.25, 1.0, 3.0).unwrap_err();
        assert!(matches!(err, Error::Supercritical { .. }));
        assert!(err.is_numerical());
    }

    #[test]
    fn transformed_sech_statistics_match_explicit_forms() {
        let f = sech_functionals();
        let s = spectrum(&[1.1, 0.4, -0.3, -1.5, 0.05]);
        let n = s.len() as f64;
        let lam: f64 = 0.5;
        let tr: f64 = s.iter().sum();
        let tr2: f64 = s.iter().map(|m| m * m).sum();
        let a = PI * PI * lam / 8.0;
        let expected = -s.iter().map(|m| (1.0 + a - a.sqrt() * m).ln()).sum::<f64>()
            + PI * PI * lam * n / 16.0
            + PI * lam.sqrt() / (2.0 * 2f64.sqrt()) * tr
            + PI * PI * lam / 16.0 * (tr2 - n);
        let got = stat_wigner_transformed(&s, lam, &f, 1.0).unwrap();
        assert!((got - expected).abs() < 1e-12);

        let d0 = 0.5;
        let omega = 0.3;
        let s = spectrum(&[2.1, 1.4, 0.9, 0.3]);
        let m = s.len() as f64;
        let theta = omega * f.fisher;
        let expected = -s
            .iter()
            .map(|x| ((1.0 + d0 / theta) * (1.0 + theta) - x).ln())
            .sum::<f64>()
            + PI * PI * omega / (8.0 * d0) * (s.iter().sum::<f64>() - m)
            + m * (theta / d0 - (theta / d0).ln() - (1.0 - d0) / d0 * (1.0 + theta).ln());
        let got = stat_rect_transformed(&s, omega, d0, &f).unwrap();
        assert!((got - expected).abs() < 1e-12);
        assert!(stat_rect_transformed(&s, 0.0, d0, &f).is_err());
        assert_eq!(stat_wigner_transformed(&s, 0.0, &f, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn gaussian_collapse() {
        let g = NoiseFunctionals::GAUSSIAN;
        let s = spectrum(&[1.2, 0.4, -0.1, -1.3]);
        for w2 in [1.0, 2.0] {
            let a = stat_wigner(&s, 0.4, w2, 3.0).unwrap();
            let b = stat_wigner_transformed(&s, 0.4, &g, w2).unwrap();
            assert!((a - b).abs() < 1e-10);
            let a = clt_wigner(0.4, w2, 3.0).unwrap();
            let b = clt_wigner_transformed(0.4, &g, w2).unwrap();
            assert!((a.m0 - b.m0).abs() < 1e-12 && (a.v0 - b.v0).abs() < 1e-12);
            assert!((a.mk(2) - b.mk(2)).abs() < 1e-12);
        }
        let s = spectrum(&[2.0, 1.4, 0.6]);
        let a = stat_rect(&s, 0.3, 0.5, 3.0).unwrap();
        let b = stat_rect_transformed(&s, 0.3, 0.5, &g).unwrap();
        assert!((a - b).abs() < 1e-10);
        let a = clt_rect(0.3, 0.5, 3.0).unwrap();
        let b = clt_rect_transformed(0.3, 0.5, &g).unwrap();
        assert!((a.m0 - b.m0).abs() < 1e-12 && (a.v0 - b.v0).abs() < 1e-12);
    }

    #[test]
    fn clt_closed_form_values() {
        let p = clt_wigner(0.5, 2.0, 3.0).unwrap();
        assert!((p.m0 - 0.346_573_590_279_972_6).abs() < 1e-12);
        assert!((p.v0 - 1.386_294_361_119_890_6).abs() < 1e-12);
        // Critical value between H1 and H_k2 for GOE: -(k2+2)/2 log(1 - ω).
        for k2 in 2..6 {
            let expected = -((k2 + 2) as f64) / 2.0 * 0.5f64.ln();
            assert!((p.m_mid(1, k2) - expected).abs() < 1e-12);
        }
        // Same for sech noise: adds k2 ω/2 - (k2 - 3) ω²/8.
        for omega in [0.2f64, 0.5] {
            let p = clt_wigner(omega, 1.0, 5.0).unwrap();
            for k2 in 2..6 {
                let k = k2 as f64;
                let expected = -(k + 2.0) / 2.0 * (1.0 - omega).ln() + k * omega / 2.0
                    - (k - 3.0) * omega * omega / 8.0;
                assert!((p.m_mid(1, k2) - expected).abs() < 1e-12);
            }
        }

        let p = clt_wigner(0.5, 1.0, 5.0).unwrap();
        assert!((p.m0 - 0.221_573_590_279_972_65).abs() < 1e-12);
        assert!((p.v0 - 2.261_294_361_119_890_6).abs() < 1e-12);
        assert!((p.mk(3) - p.m0 - 1.5 * p.v0).abs() < 1e-12);

        let p = clt_wigner_transformed(0.5, &sech_functionals(), 1.0).unwrap();
        assert!((p.m0 - 0.028_550_484_010_742_005).abs() < 1e-12);
        assert!((p.shift - 1.576_179_714_546_332_9).abs() < 1e-12);

        let p = clt_rect_transformed(0.3, 0.5, &sech_functionals()).unwrap();
        assert!((p.m0 - -0.045_395_103_568_803_78).abs() < 1e-12);
        assert!((p.v0 - 0.640_308_791_324_180_5).abs() < 1e-12);

        let p = clt_rect(0.3, 0.5, 3.0).unwrap();
        assert!((p.m0 + 0.5 * 0.82f64.ln()).abs() < 1e-14);
        assert!((p.v0 + 2.0 * 0.82f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn rect_rank_one_mean_and_midpoint() {
        for (omega, d0, w4) in [(0.3, 0.5, 3.0), (0.5, 0.8, 5.0), (0.1, 0.25, 1.8)] {
            let p = clt_rect(omega, d0, w4).unwrap();
            let r: f64 = omega * omega / d0;
            let m_omega = p.m0 - (1.0 - r).ln() + r * (2.0 / (w4 - 1.0) - 1.0);
            assert!((p.mk(1) - m_omega).abs() < 1e-12);
            let mid = -(1.0 - r).ln() + r / 2.0 * (2.0 / (w4 - 1.0) + w4 - 4.0);
            assert!((p.m_mid(0, 1) - mid).abs() < 1e-12);
        }
    }

    #[test]
    fn sech_critical_values() {
        // Closed-form sech critical values for the rank-one rectangular test.
        let (omega, d0) = (0.3f64, 0.5);
        let raw = clt_rect(omega, d0, 5.0).unwrap().m_mid(0, 1);
        let expected = -(1.0 - omega * omega / d0).ln() + 3.0 * omega * omega / (4.0 * d0);
        assert!((raw - expected).abs() < 1e-12);
        let t = clt_rect_transformed(omega, d0, &sech_functionals()).unwrap().m_mid(0, 1);
        let p4 = PI.powi(4);
        let expected = -(1.0 - omega * omega * p4 / (64.0 * d0)).ln() - 3.0 * p4 * omega * omega / (256.0 * d0);
        assert!((t - expected).abs() < 1e-12);
    }

    #[test]
    fn transformation_increases_variance() {
        let raw = clt_wigner(0.4, 1.0, 5.0).unwrap();
        let t = clt_wigner_transformed(0.4, &sech_functionals(), 1.0).unwrap();
        assert!(t.v0 > raw.v0);
    }

    #[test]
    fn clt_domain_errors() {
        assert!(clt_wigner(1.0, 1.0, 3.0).is_err());
        assert!(clt_wigner(0.0, 1.0, 3.0).is_err());
        assert!(clt_wigner(0.5, 1.0, 1.0).is_err());
        assert!(clt_rect(0.75, 0.5, 3.0).is_err());
        assert!(clt_wigner_transformed(0.9, &sech_functionals(), 1.0).is_err());
        assert!(clt_rect_transformed(0.6, 0.5, &sech_functionals()).is_err());
    }

    #[test]
    fn chebyshev_basics() {
        assert!((chebyshev_tau(&|_: f64| 1.0, 0, 20).unwrap() - 1.0).abs() < 1e-14);
        assert!((chebyshev_tau(&|x: f64| x, 1, 20).unwrap() - 1.0).abs() < 1e-14);
        for j in 1..6usize {
            let tj = move |x: f64| (j as f64 * (x / 2.0).acos()).cos();
            let c = ChebyshevCoeffs::compute(&tj, 20).unwrap();
            for (i, &t) in c.tau.iter().enumerate() {
                let expected = if i == j { 0.5 } else { 0.0 };
                assert!((t - expected).abs() < 1e-13, "T_{j}: τ_{i} = {t}");
            }
        }
    }

    #[test]
    fn chebyshev_of_optimal_phi() {
        let omega: f64 = 0.5;
        let phi = LssCase::Wigner { w2: 2.0, w4: 3.0 }.optimal_phi(omega).unwrap();
        let c = ChebyshevCoeffs::compute(&phi, 60).unwrap();
        // -log(1 - sqrt(ω) x + ω) = 2 Σ ω^{ℓ/2} T_ℓ(x/2) / ℓ; the quadratic part vanishes for w4 = 3.
        for l in 1..=60 {
            let expected = omega.powf(l as f64 / 2.0) / l as f64;
            assert!((c.tau[l] - expected).abs() < 1e-8, "{l}");
        }
    }

    fn cases() -> Vec<LssCase> {
        vec![
            LssCase::Wigner { w2: 2.0, w4: 3.0 },
            LssCase::Wigner { w2: 1.0, w4: 5.0 },
            LssCase::Wigner { w2: 1.0, w4: 1.3 },
            LssCase::Rect { d0: 0.5, w4: 5.0 },
            LssCase::Rect { d0: 1.0, w4: 2.0 },
            LssCase::WignerTransformed {
                w2: 1.0,
                functionals: sech_functionals(),
            },
            LssCase::WignerTransformed {
                w2: 2.0,
                functionals: NoiseFunctionals {
                    fisher: 2.508_185_171_354_302,
                    fisher_diag: 1.0,
                    gh: 3.300_453_637_763_587,
                    w4_tilde: 3.947_619_588_207_873,
                },
            },
            LssCase::RectTransformed {
                d0: 0.5,
                functionals: sech_functionals(),
            },
        ]
    }

    #[test]
    fn series_matches_closed_forms() {
        for case in cases() {
            let omega = 0.6 * case.omega_limit();
            let p = case.clt(omega).unwrap();
            let phi = case.optimal_phi(omega).unwrap();
            for k in 0..3 {
                let omegas = vec![omega; k];
                let m = case.mean_series(&phi, &omegas, DEFAULT_L_MAX).unwrap();
                assert!(m.converged, "{case:?}");
                assert!((m.value - p.mk(k)).abs() < 1e-6, "{case:?} k={k}: {} vs {}", m.value, p.mk(k));
            }
            let v = case.variance_series(&phi, DEFAULT_L_MAX).unwrap();
            assert!(v.converged);
            assert!((v.value - p.v0).abs() < 1e-6, "{case:?}: {} vs {}", v.value, p.v0);
        }
    }

    #[test]
    fn series_edge_cases() {
        let case = LssCase::Wigner { w2: 1.0, w4: 5.0 };
        let v = case.variance_series(&|_: f64| 3.0, 40).unwrap();
        assert!(v.value.abs() < 1e-14);
        assert!(case.variance_series(&|_: f64| 3.0, 10).is_err());
        let f = |x: f64| (0.3 * x).exp();
        let null = case.mean_series(&f, &[], 60).unwrap().value;
        let a = case.mean_series(&f, &[0.2], 60).unwrap().value - null;
        let b = case.mean_series(&f, &[0.4], 60).unwrap().value - null;
        let both = case.mean_series(&f, &[0.2, 0.4], 60).unwrap().value - null;
        assert!((both - a - b).abs() < 1e-12);
        assert!(case.mean_series(&f, &[1.2], 60).is_err());
    }

    #[test]
    fn multi_snr_phi_matches_series() {
        let case = LssCase::Wigner { w2: 1.0, w4: 5.0 };
        let omegas = [0.2, 0.5];
        let phi = case.optimal_phi_multi(&omegas).unwrap();
        let single: Vec<_> = omegas.iter().map(|&w| case.optimal_phi(w).unwrap()).collect();
        for x in [-1.5, 0.0, 1.7] {
            let sum: f64 = single.iter().map(|p| p.eval(x).unwrap()).sum();
            assert!((phi.eval(x).unwrap() - sum).abs() < 1e-14);
        }
    }

    #[test]
    fn optimal_phi_domain() {
        let phi = LssCase::Wigner { w2: 1.0, w4: 5.0 }.optimal_phi(0.0).unwrap();
        assert_eq!(phi.eval(1.3).unwrap(), 0.0);
        let (omega, d0) = (0.3, 0.5);
        let phi = LssCase::Rect { d0, w4: 3.0 }.optimal_phi(omega).unwrap();
        let pole = (1.0 + d0 / omega) * (1.0 + omega);
        assert!(matches!(phi.eval(pole), Err(Error::Domain { .. })));
    }

    #[test]
    fn statistic_is_centered_optimal_phi() {
        // L = Σ φ(μ_i) - M ∫ φ dμ, with the centering integral by quadrature.
        let spec: Vec<f64> = (0..64).map(|i| 0.1 + 2.6 * i as f64 / 63.0).collect();
        let s = spectrum(&spec);
        for case in [
            LssCase::Rect { d0: 0.5, w4: 5.0 },
            LssCase::RectTransformed {
                d0: 0.5,
                functionals: sech_functionals(),
            },
        ] {
            let omega = 0.3;
            let phi = case.optimal_phi(omega).unwrap();
            let law = MpLaw::new(0.5).unwrap();
            let centering = law.integrate(|x| phi.eval(x).unwrap()).unwrap();
            let direct: f64 = s.iter().map(|x| phi.eval(x).unwrap()).sum::<f64>() - 64.0 * centering;
            let stat = case.statistic(&s, omega).unwrap();
            assert!((direct - stat).abs() < 1e-6, "{case:?}: {direct} vs {stat}");
        }
        let spec: Vec<f64> = (0..64).map(|i| -1.9 + 3.8 * i as f64 / 63.0).collect();
        let s = spectrum(&spec);
        for case in [LssCase::Wigner { w2: 1.0, w4: 5.0 }, LssCase::WignerTransformed { w2: 1.0, functionals: sech_functionals() }] {
            let omega = 0.3;
            let phi = case.optimal_phi(omega).unwrap();
            let centering = crate::spectral::SemicircleLaw.integrate(|x| phi.eval(x).unwrap()).unwrap();
            let direct: f64 = s.iter().map(|x| phi.eval(x).unwrap()).sum::<f64>() - 64.0 * centering;
            let stat = case.statistic(&s, omega).unwrap();
            assert!((direct - stat).abs() < 1e-6, "{case:?}: {direct} vs {stat}");
        }
    }

    proptest! {
        #[test]
        fn mean_shift_identity(frac in 0.01f64..0.99, w2 in 0.5f64..3.0, w4 in 1.05f64..9.0,
                               d0 in 0.05f64..=1.0, fisher in 1.0f64..6.0, gh in 0.2f64..4.0,
                               w4t in 1.05f64..6.0, k in 0usize..6) {
            let functionals = NoiseFunctionals { fisher, fisher_diag: fisher * 0.9, gh, w4_tilde: w4t };
            for case in [
                LssCase::Wigner { w2, w4 },
                LssCase::Rect { d0, w4 },
                LssCase::WignerTransformed { w2, functionals },
                LssCase::RectTransformed { d0, functionals },
            ] {
                let p = case.clt(frac * case.omega_limit()).unwrap();
                prop_assert!((p.mk(k) - p.m0 - k as f64 * p.v0 / 2.0).abs() < 1e-12 * p.v0.abs().max(1.0));
            }
        }

        #[test]
        fn null_variance_positive(frac in 0.01f64..0.99, w4 in 1.05f64..9.0, d0 in 0.05f64..=1.0) {
            prop_assert!(clt_wigner(frac, 1.0, w4).unwrap().v0 > 0.0);
            prop_assert!(clt_wigner(frac, 2.0, w4).unwrap().v0 > 0.0);
            prop_assert!(clt_rect(frac * d0.sqrt(), d0, w4).unwrap().v0 > 0.0);
        }

        #[test]
        fn chebyshev_generating_identity(x in -1.0f64..=1.0, big in any::<bool>(), l in 5usize..60) {
            let t: f64 = if big { 0.6 } else { 0.3 };
            let mut prev = 1.0;
            let mut cur = x;
            let mut sum = t * x;
            for ell in 2..=l {
                let next = 2.0 * x * cur - prev;
                prev = cur;
                cur = next;
                sum += t.powi(ell as i32) * cur / ell as f64;
            }
            let exact = -0.5 * (1.0 - 2.0 * t * x + t * t).ln();
            // The bound sits below double-precision roundoff for large l.
            prop_assert!((sum - exact).abs() < t.powi(l as i32 + 1) / (1.0 - t) + 1e-15);
        }
    }
}
