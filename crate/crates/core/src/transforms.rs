//! Entrywise score transforms and the effective signal strengths they achieve.

use faer::Mat;
use serde::de::{self, Deserializer};
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::noise::{transform_functionals_quadrature, NoiseFunctionals, NoiseModel};

/// `M̃_ij = h(sqrt(N) M_ij) / sqrt(F_g N)` off the diagonal and
/// `M̃_ii = sqrt(w2 / (F_gd N)) h_d(sqrt(N / w2) M_ii)` on it.
pub fn transform_wigner(
    m: &Mat<f64>,
    noise: &NoiseModel,
    functionals: &NoiseFunctionals,
) -> Result<Mat<f64>> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::Dimension(format!(
            "wigner transform needs a square matrix, got {}x{}",
            n,
            m.ncols()
        )));
    }
    let nf = n as f64;
    let root_n = nf.sqrt();
    let off_scale = 1.0 / (functionals.fisher * nf).sqrt();
    let diag_in = (nf / noise.w2).sqrt();
    let diag_out = (noise.w2 / (functionals.fisher_diag * nf)).sqrt();
    let g = &noise.density;
    let g_d = noise.diagonal_density();
    let mut out = Mat::zeros(n, n);
    for j in 0..n {
        for i in 0..j {
            let v = g.score(root_n * m[(i, j)]) * off_scale;
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
        out[(j, j)] = diag_out * g_d.score(diag_in * m[(j, j)]);
    }
    Ok(out)
}

/// `Ỹ_ij = h_α(sqrt(N) Y_ij) / sqrt((α² + 2α + F_g) N)` with `h_α(x) = h(x) + αx`.
pub fn transform_rect(y: &Mat<f64>, noise: &NoiseModel, fisher: f64, alpha: f64) -> Result<Mat<f64>> {
    let v = alpha * alpha + 2.0 * alpha + fisher;
    if !(v > 0.0) {
        return Err(Error::domain(
            "transform_rect",
            format!("normalization α² + 2α + F_g = {v} is not positive"),
        ));
    }
    let nf = y.ncols() as f64;
    let root_n = nf.sqrt();
    let scale = 1.0 / (v * nf).sqrt();
    let g = &noise.density;
    Ok(Mat::from_fn(y.nrows(), y.ncols(), |i, j| {
        let x = root_n * y[(i, j)];
        (g.score(x) + alpha * x) * scale
    }))
}

fn radicand(gamma: f64, fisher: f64) -> f64 {
    4.0 * fisher + 4.0 * gamma * fisher + gamma * gamma * fisher * fisher
}

/// The mixing weight maximizing the multiplicative effective SNR for one `γ`.
pub fn optimal_alpha(gamma: f64, fisher: f64) -> f64 {
    (-gamma * fisher + radicand(gamma, fisher).sqrt()) / (2.0 * (1.0 + gamma))
}

/// The multiplicative effective SNR at the optimal `α`.
pub fn lambda_g(gamma: f64, fisher: f64) -> f64 {
    gamma + gamma * gamma * fisher / 2.0 + gamma * radicand(gamma, fisher).sqrt() / 2.0
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RectKind {
    Additive,
    Multiplicative,
}

/// Effective SNR after `h_α`. `snr` is `λ` for the additive model and `γ` for the multiplicative one.
pub fn effective_snr(kind: RectKind, snr: f64, fisher: f64, alpha: f64) -> f64 {
    let v = alpha * alpha + 2.0 * alpha + fisher;
    match kind {
        RectKind::Additive => snr * (fisher + alpha).powi(2) / v,
        RectKind::Multiplicative => {
            let g = snr;
            (2.0 * g * (1.0 + alpha) * (fisher + alpha) + g * g * (alpha + fisher).powi(2)) / v
        }
    }
}

/// Same quantity from quadrature values of `M_q`, `V_q`, `E_q`.
pub fn effective_snr_quadrature(
    kind: RectKind,
    snr: f64,
    noise: &NoiseModel,
    alpha: f64,
) -> Result<f64> {
    let q = transform_functionals_quadrature(noise, alpha)?;
    Ok(match kind {
        RectKind::Additive => snr * q.m_q * q.m_q / q.v_q,
        RectKind::Multiplicative => {
            let g = snr;
            (2.0 * g * q.m_q * q.e_q + g * g * q.m_q * q.m_q) / q.v_q
        }
    })
}

/// Per-spike optimum of the multiplicative transform.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransformOptimum {
    pub gamma: f64,
    pub fisher: f64,
    pub alpha_g: f64,
    pub lambda_g: f64,
}

impl TransformOptimum {
    pub fn new(gamma: f64, fisher: f64) -> Result<Self> {
        if !(gamma > 0.0) || !(fisher >= 1.0 - 1e-12) {
            return Err(Error::domain(
                "TransformOptimum",
                format!("need γ > 0 and F_g >= 1, got γ = {gamma}, F_g = {fisher}"),
            ));
        }
        Ok(Self {
            gamma,
            fisher,
            alpha_g: optimal_alpha(gamma, fisher),
            lambda_g: lambda_g(gamma, fisher),
        })
    }

    pub fn lambda_eff_at(&self, alpha: f64) -> f64 {
        effective_snr(RectKind::Multiplicative, self.gamma, self.fisher, alpha)
    }
}

/// Which `α` a rectangular transform uses.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub enum AlphaChoice {
    #[default]
    SqrtFisher,
    Zero,
    Value(f64),
}

impl AlphaChoice {
    pub fn resolve(self, fisher: f64) -> f64 {
        match self {
            AlphaChoice::SqrtFisher => fisher.sqrt(),
            AlphaChoice::Zero => 0.0,
            AlphaChoice::Value(a) => a,
        }
    }
}

impl Serialize for AlphaChoice {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            AlphaChoice::SqrtFisher => s.serialize_str("sqrt_Fg"),
            AlphaChoice::Zero => s.serialize_str("zero"),
            AlphaChoice::Value(a) => s.serialize_f64(*a),
        }
    }
}

impl<'de> Deserialize<'de> for AlphaChoice {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Name(String),
            Number(f64),
        }
        match Raw::deserialize(d)? {
            Raw::Number(a) if a.is_finite() => Ok(AlphaChoice::Value(a)),
            Raw::Number(a) => Err(de::Error::custom(format!("alpha must be finite, got {a}"))),
            Raw::Name(s) => match s.as_str() {
                "sqrt_Fg" => Ok(AlphaChoice::SqrtFisher),
                "zero" => Ok(AlphaChoice::Zero),
                other => Err(de::Error::custom(format!(
                    "alpha must be \"sqrt_Fg\", \"zero\" or a number, got \"{other}\""
                ))),
            },
        }
    }
}
