//! Spike priors and the three spiked data-matrix models.
//!
//! All builders draw the spike before the noise, so a rank-zero spec consumes
//! exactly the same random stream as the noise alone.

use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::NoiseModel;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpikePrior {
    /// Entries `±1/sqrt(dim)`, independent across entries and columns.
    RademacherIid,
    /// Gaussian columns, orthonormalized.
    Spherical,
}

/// Draws a `dim × k` spike matrix from `prior`.
pub fn sample_spike<R: Rng + ?Sized>(
    prior: SpikePrior,
    dim: usize,
    k: usize,
    rng: &mut R,
) -> Result<Mat<f64>> {
    if k > dim {
        return Err(Error::Dimension(format!(
            "spike rank {k} exceeds dimension {dim}"
        )));
    }
    match prior {
        SpikePrior::RademacherIid => {
            let s = 1.0 / (dim as f64).sqrt();
            let mut u = Mat::zeros(dim, k);
            for j in 0..k {
                for i in 0..dim {
                    u[(i, j)] = if rng.random::<bool>() { s } else { -s };
                }
            }
            Ok(u)
        }
        SpikePrior::Spherical => {
            let mut u = Mat::zeros(dim, k);
            for j in 0..k {
                for i in 0..dim {
                    u[(i, j)] = rng.sample::<f64, _>(StandardNormal);
                }
            }
            orthonormalize(&mut u)?;
            Ok(u)
        }
    }
}

// Modified Gram-Schmidt, two passes.
fn orthonormalize(u: &mut Mat<f64>) -> Result<()> {
    let (n, k) = (u.nrows(), u.ncols());
    for j in 0..k {
        for _ in 0..2 {
            for p in 0..j {
                let dot: f64 = (0..n).map(|i| u[(i, p)] * u[(i, j)]).sum();
                for i in 0..n {
                    u[(i, j)] -= dot * u[(i, p)];
                }
            }
        }
        let norm = (0..n).map(|i| u[(i, j)].powi(2)).sum::<f64>().sqrt();
        if !(norm > 1e-12) {
            return Err(Error::LinAlg("degenerate spike column".to_owned()));
        }
        for i in 0..n {
            u[(i, j)] /= norm;
        }
    }
    Ok(())
}

/// Signal strengths `λ_1 ≥ … ≥ λ_k > 0`.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct SnrSpec {
    pub lambdas: Vec<f64>,
}

impl SnrSpec {
    pub fn new(lambdas: Vec<f64>) -> Result<Self> {
        let s = Self { lambdas };
        s.validate()?;
        Ok(s)
    }

    pub fn none() -> Self {
        Self::default()
    }

    pub fn rank(&self) -> usize {
        self.lambdas.len()
    }

    /// `γ = sqrt(1 + λ) - 1`, so that `2γ + γ² = λ`.
    pub fn gammas(&self) -> Vec<f64> {
        self.lambdas.iter().map(|&l| gamma_of(l)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        for (i, &l) in self.lambdas.iter().enumerate() {
            if !(l > 0.0) || !l.is_finite() {
                return Err(Error::Validation(format!("snr {i} must be positive, got {l}")));
            }
            if i > 0 && l > self.lambdas[i - 1] {
                return Err(Error::Validation(
                    "snr values must be non-increasing".to_owned(),
                ));
            }
        }
        Ok(())
    }
}

pub fn gamma_of(lambda: f64) -> f64 {
    // sqrt(1+λ) - 1 without cancellation for small λ.
    lambda / ((1.0 + lambda).sqrt() + 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Wigner,
    RectAdditive,
    RectMultiplicative,
}

impl ModelKind {
    pub fn is_rect(self) -> bool {
        !matches!(self, ModelKind::Wigner)
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Wigner => "wigner",
            ModelKind::RectAdditive => "rect_additive",
            ModelKind::RectMultiplicative => "rect_multiplicative",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wigner" => Ok(ModelKind::Wigner),
            "rect_additive" | "additive" => Ok(ModelKind::RectAdditive),
            "rect_multiplicative" | "multiplicative" => Ok(ModelKind::RectMultiplicative),
            _ => Err(Error::Validation(format!("unknown model kind `{s}`"))),
        }
    }
}

/// Dimensions, noise, prior and signal strengths of one model instance.
/// `n` is the column dimension; `m` the row dimension (equal to `n` for Wigner).
#[derive(Clone, Debug)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub n: usize,
    pub m: usize,
    pub noise: NoiseModel,
    pub prior: SpikePrior,
    pub snr: SnrSpec,
}

impl ModelSpec {
    pub fn wigner(n: usize, noise: NoiseModel, prior: SpikePrior, snr: SnrSpec) -> Self {
        Self {
            kind: ModelKind::Wigner,
            n,
            m: n,
            noise,
            prior,
            snr,
        }
    }

    pub fn rect(
        kind: ModelKind,
        m: usize,
        n: usize,
        noise: NoiseModel,
        prior: SpikePrior,
        snr: SnrSpec,
    ) -> Self {
        Self {
            kind,
            n,
            m,
            noise,
            prior,
            snr,
        }
    }

    pub fn d0(&self) -> f64 {
        self.m as f64 / self.n as f64
    }

    pub fn with_snr(&self, snr: SnrSpec) -> Self {
        Self {
            snr,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m == 0 {
            return Err(Error::Dimension("matrix dimensions must be positive".to_owned()));
        }
        match self.kind {
            ModelKind::Wigner if self.m != self.n => {
                return Err(Error::Dimension(format!(
                    "wigner model needs M = N, got {}x{}",
                    self.m, self.n
                )))
            }
            _ if self.m > self.n => {
                return Err(Error::Dimension(format!(
                    "rectangular models need M <= N (transpose the data), got {}x{}",
                    self.m, self.n
                )))
            }
            _ => {}
        }
        if self.snr.rank() > self.m {
            return Err(Error::Dimension(format!(
                "spike rank {} exceeds dimension {}",
                self.snr.rank(),
                self.m
            )));
        }
        self.snr.validate()?;
        self.noise.validate()
    }
}

#[derive(Clone, Debug)]
pub struct DataMatrix {
    pub values: Mat<f64>,
    pub spec: ModelSpec,
    pub seed: Option<u64>,
}

fn expect_kind(spec: &ModelSpec, kind: ModelKind) -> Result<()> {
    spec.validate()?;
    if spec.kind != kind {
        return Err(Error::Validation(format!(
            "expected a {} spec, got {}",
            kind.name(),
            spec.kind.name()
        )));
    }
    Ok(())
}

/// Wigner noise: off-diagonal `g/sqrt(N)` mirrored, diagonal `g_d sqrt(w2/N)`.
pub fn wigner_noise<R: Rng + ?Sized>(noise: &NoiseModel, n: usize, rng: &mut R) -> Mat<f64> {
    let off = 1.0 / (n as f64).sqrt();
    let diag = (noise.w2 / n as f64).sqrt();
    let g_d = noise.diagonal_density();
    let mut w = Mat::zeros(n, n);
    for j in 0..n {
        for i in 0..j {
            let x = noise.density.sample(rng) * off;
            w[(i, j)] = x;
            w[(j, i)] = x;
        }
        w[(j, j)] = g_d.sample(rng) * diag;
    }
    w
}

/// `M × N` matrix of i.i.d. `g/sqrt(N)` entries, filled column by column.
pub fn rect_noise<R: Rng + ?Sized>(noise: &NoiseModel, m: usize, n: usize, rng: &mut R) -> Mat<f64> {
    let s = 1.0 / (n as f64).sqrt();
    let mut x = Mat::zeros(m, n);
    for j in 0..n {
        for i in 0..m {
            x[(i, j)] = noise.density.sample(rng) * s;
        }
    }
    x
}

/// `M = U Λ^{1/2} U^T + W`.
pub fn build_spiked_wigner<R: Rng + ?Sized>(spec: &ModelSpec, rng: &mut R) -> Result<DataMatrix> {
    expect_kind(spec, ModelKind::Wigner)?;
    let n = spec.n;
    let u = sample_spike(spec.prior, n, spec.snr.rank(), rng)?;
    let mut m = wigner_noise(&spec.noise, n, rng);
    for (l, &lambda) in spec.snr.lambdas.iter().enumerate() {
        let s = lambda.sqrt();
        for j in 0..n {
            let uj = s * u[(j, l)];
            for i in 0..n {
                m[(i, j)] += u[(i, l)] * uj;
            }
        }
    }
    symmetrize(&mut m);
    Ok(DataMatrix {
        values: m,
        spec: spec.clone(),
        seed: None,
    })
}

// Rank-one updates are symmetric in exact arithmetic; copy the upper triangle
// so the stored matrix is symmetric bit for bit.
fn symmetrize(m: &mut Mat<f64>) {
    let n = m.nrows();
    for j in 0..n {
        for i in 0..j {
            m[(j, i)] = m[(i, j)];
        }
    }
}

/// `Y = U Λ^{1/2} V^T + X`.
pub fn build_additive<R: Rng + ?Sized>(spec: &ModelSpec, rng: &mut R) -> Result<DataMatrix> {
    expect_kind(spec, ModelKind::RectAdditive)?;
    let k = spec.snr.rank();
    let u = sample_spike(spec.prior, spec.m, k, rng)?;
    let v = sample_spike(spec.prior, spec.n, k, rng)?;
    let mut y = rect_noise(&spec.noise, spec.m, spec.n, rng);
    for (l, &lambda) in spec.snr.lambdas.iter().enumerate() {
        let s = lambda.sqrt();
        for j in 0..spec.n {
            let vj = s * v[(j, l)];
            for i in 0..spec.m {
                y[(i, j)] += u[(i, l)] * vj;
            }
        }
    }
    Ok(DataMatrix {
        values: y,
        spec: spec.clone(),
        seed: None,
    })
}

/// `Y = (I + U Γ U^T) X` with `γ = sqrt(1 + λ) - 1`.
pub fn build_multiplicative<R: Rng + ?Sized>(spec: &ModelSpec, rng: &mut R) -> Result<DataMatrix> {
    expect_kind(spec, ModelKind::RectMultiplicative)?;
    let k = spec.snr.rank();
    let u = sample_spike(spec.prior, spec.m, k, rng)?;
    let x = rect_noise(&spec.noise, spec.m, spec.n, rng);
    if k == 0 {
        return Ok(DataMatrix {
            values: x,
            spec: spec.clone(),
            seed: None,
        });
    }
    let mut g = Mat::zeros(k, k);
    for (l, gamma) in spec.snr.gammas().into_iter().enumerate() {
        g[(l, l)] = gamma;
    }
    let y = &x + &u * (&g * (u.transpose() * &x));
    Ok(DataMatrix {
        values: y,
        spec: spec.clone(),
        seed: None,
    })
}

pub fn build_with_rng<R: Rng + ?Sized>(spec: &ModelSpec, rng: &mut R) -> Result<DataMatrix> {
    match spec.kind {
        ModelKind::Wigner => build_spiked_wigner(spec, rng),
        ModelKind::RectAdditive => build_additive(spec, rng),
        ModelKind::RectMultiplicative => build_multiplicative(spec, rng),
    }
}

/// Builds a data matrix from a ChaCha8 stream seeded with `seed`.
pub fn build(spec: &ModelSpec, seed: u64) -> Result<DataMatrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = build_with_rng(spec, &mut rng)?;
    data.seed = Some(seed);
    Ok(data)
}
