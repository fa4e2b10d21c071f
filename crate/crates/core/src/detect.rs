//! Midpoint hypothesis tests, rank estimation and their limiting error rates.

use faer::Mat;
use statrs::function::erf;

use crate::error::{Error, Result};
use crate::lss::{CltParams, LssCase};
use crate::models::{DataMatrix, ModelKind};
use crate::noise::{moments, Moments, NoiseFunctionals, NoiseModel};
use crate::spectral::{eigenvalues_sym, gram_spectrum, Spectrum};
use crate::transforms::{transform_rect, transform_wigner};

/// `(2/sqrt(π)) ∫_x^∞ e^{-t²} dt`.
pub fn erfc_std(x: f64) -> f64 {
    erf::erfc(x)
}

/// `H_{k1}: k = k1` against `H_{k2}: k = k2`, both with spikes of strength `omega`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HypothesisPair {
    pub k1: usize,
    pub k2: usize,
    pub omega: f64,
}

impl HypothesisPair {
    pub fn new(k1: usize, k2: usize, omega: f64) -> Result<Self> {
        if k1 >= k2 {
            return Err(Error::Validation(format!("need k1 < k2, got k1 = {k1}, k2 = {k2}")));
        }
        if !(omega > 0.0) || !omega.is_finite() {
            return Err(Error::Validation(format!("ω must be positive, got {omega}")));
        }
        Ok(Self { k1, k2, omega })
    }

    pub fn gap(&self) -> usize {
        self.k2 - self.k1
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Decision {
    /// Either `k1` or `k2`.
    pub accepted: usize,
    pub statistic: f64,
    pub threshold: f64,
}

/// Accepts `k1` iff `L ≤ (m_{k1} + m_{k2}) / 2`.
pub fn decide(statistic: f64, params: &CltParams, pair: &HypothesisPair) -> Decision {
    let threshold = params.m_mid(pair.k1, pair.k2);
    Decision {
        accepted: if statistic <= threshold { pair.k1 } else { pair.k2 },
        statistic,
        threshold,
    }
}

/// Limiting Type I + Type II error of the midpoint test.
pub fn theoretical_error(pair: &HypothesisPair, v0: f64) -> Result<f64> {
    check_v0(v0)?;
    Ok(erfc_std(pair.gap() as f64 / 4.0 * (v0 / 2.0).sqrt()))
}

fn check_v0(v0: f64) -> Result<()> {
    if !(v0 >= 0.0) || !v0.is_finite() {
        return Err(Error::Validation(format!("V0 must be non-negative, got {v0}")));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RankEstimate {
    pub kappa: usize,
    pub kappa_prime: f64,
    pub clamped: bool,
}

/// `κ' = 2 (L - m0) / V0`; `κ = 0` below `(m0 + m1)/2`, else `κ'` rounded half down.
pub fn estimate_rank(statistic: f64, params: &CltParams, k_max: Option<usize>) -> RankEstimate {
    let kappa_prime = 2.0 * (statistic - params.m0) / params.v0;
    let mut kappa = if statistic <= params.m_mid(0, 1) {
        0
    } else {
        // A relative nudge so that κ' = j + 1/2 lands on j despite rounding in κ'.
        let nudge = if kappa_prime.is_finite() { 1e-9 * kappa_prime.abs().max(1.0) } else { 0.0 };
        (kappa_prime - 0.5 - nudge).ceil().max(1.0) as usize
    };
    let mut clamped = false;
    if let Some(k) = k_max {
        if kappa > k {
            kappa = k;
            clamped = true;
        }
    }
    RankEstimate {
        kappa,
        kappa_prime,
        clamped,
    }
}

/// Limiting misclassification rate of the rank estimator for prior `probs` on `0..=K`.
///
/// With `bounded`, ranks `0` and `K` can only be misread on one side.
/// Without it, only rank `0` is one-sided.
pub fn theoretical_rank_error(probs: &[f64], v0: f64, bounded: bool) -> Result<f64> {
    check_v0(v0)?;
    if probs.is_empty() {
        return Err(Error::Validation("rank prior is empty".to_owned()));
    }
    if probs.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
        return Err(Error::Validation("rank prior has a negative or non-finite entry".to_owned()));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Validation(format!("rank prior sums to {total}, not 1")));
    }
    let e = erfc_std(0.25 * (v0 / 2.0).sqrt());
    let one_sided = if bounded && probs.len() > 1 {
        probs[0] + probs[probs.len() - 1]
    } else {
        probs[0]
    };
    Ok((1.0 - one_sided / 2.0) * e)
}

/// Moments and score functionals of a noise model, computed once.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseSummary {
    pub moments: Moments,
    pub functionals: NoiseFunctionals,
}

impl NoiseSummary {
    pub fn compute(noise: &NoiseModel) -> Result<Self> {
        Ok(Self {
            moments: moments(noise)?,
            functionals: NoiseFunctionals::compute(noise)?,
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct DetectorOptions {
    pub transformed: bool,
}

/// Transform, spectrum, statistic and CLT parameters for one model and one `ω`.
#[derive(Clone, Debug)]
pub struct Detector {
    kind: ModelKind,
    noise: NoiseModel,
    summary: NoiseSummary,
    transformed: bool,
    case: LssCase,
    params: CltParams,
}

impl Detector {
    pub fn new(
        kind: ModelKind,
        noise: &NoiseModel,
        summary: NoiseSummary,
        d0: f64,
        omega: f64,
        options: DetectorOptions,
    ) -> Result<Self> {
        let w2 = noise.w2;
        let w4 = summary.moments.w4;
        let functionals = summary.functionals;
        let case = match (kind, options.transformed) {
            (ModelKind::Wigner, false) => LssCase::Wigner { w2, w4 },
            (ModelKind::Wigner, true) => LssCase::WignerTransformed { w2, functionals },
            (_, false) => LssCase::Rect { d0, w4 },
            (ModelKind::RectAdditive, true) => LssCase::RectTransformed { d0, functionals },
            (ModelKind::RectMultiplicative, true) => {
                return Err(Error::Validation(
                    "the transformed test is not available for the multiplicative model".to_owned(),
                ))
            }
        };
        let params = case.clt(omega)?;
        Ok(Self {
            kind,
            noise: noise.clone(),
            summary,
            transformed: options.transformed,
            case,
            params,
        })
    }

    /// Builds a detector for the model `data` was drawn from.
    pub fn for_data(data: &DataMatrix, omega: f64, options: DetectorOptions) -> Result<Self> {
        let spec = &data.spec;
        let summary = NoiseSummary::compute(&spec.noise)?;
        Self::new(spec.kind, &spec.noise, summary, spec.d0(), omega, options)
    }

    pub fn case(&self) -> &LssCase {
        &self.case
    }

    pub fn params(&self) -> &CltParams {
        &self.params
    }

    /// The spectrum the statistic is computed from, after the optional transform.
    pub fn spectrum(&self, values: &Mat<f64>) -> Result<Spectrum> {
        let f = &self.summary.functionals;
        match (self.kind, self.transformed) {
            (ModelKind::Wigner, false) => eigenvalues_sym(values),
            (ModelKind::Wigner, true) => eigenvalues_sym(&transform_wigner(values, &self.noise, f)?),
            (_, false) => gram_spectrum(values),
            (_, true) => gram_spectrum(&transform_rect(values, &self.noise, f.fisher, 0.0)?),
        }
    }

    pub fn statistic(&self, values: &Mat<f64>) -> Result<f64> {
        self.case.statistic(&self.spectrum(values)?, self.params.omega)
    }

    pub fn test(&self, values: &Mat<f64>, pair: &HypothesisPair) -> Result<Decision> {
        if (pair.omega - self.params.omega).abs() > 1e-15 * pair.omega {
            return Err(Error::Validation(format!(
                "detector built for ω = {}, hypothesis pair uses ω = {}",
                self.params.omega, pair.omega
            )));
        }
        Ok(decide(self.statistic(values)?, &self.params, pair))
    }

    pub fn rank(&self, values: &Mat<f64>, k_max: Option<usize>) -> Result<RankEstimate> {
        Ok(estimate_rank(self.statistic(values)?, &self.params, k_max))
    }

    pub fn theoretical_error(&self, pair: &HypothesisPair) -> Result<f64> {
        theoretical_error(pair, self.params.v0)
    }
}

/// Transform (optional), spectrum, statistic and decision for one data matrix.
pub fn run_test(data: &DataMatrix, pair: &HypothesisPair, options: DetectorOptions) -> Result<Decision> {
    Detector::for_data(data, pair.omega, options)?.test(&data.values, pair)
}
