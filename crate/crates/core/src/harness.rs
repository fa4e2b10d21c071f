//! Seeded Monte Carlo experiments over a grid of signal strengths, with CSV output.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detect::{
    theoretical_error, theoretical_rank_error, Detector, DetectorOptions, HypothesisPair,
    NoiseSummary,
};
use crate::error::{Error, Result};
use crate::models::{build, gamma_of, ModelKind, ModelSpec, SnrSpec, SpikePrior};
use crate::noise::{NoiseConfig, NoiseModel};
use crate::spectral::{
    bbp_rect, bbp_wigner, count_outliers, eigenvalues_sym, gram_spectrum, MpLaw, OUTLIER_TOL,
};
use crate::transforms::{effective_snr, transform_rect, transform_wigner, AlphaChoice, RectKind};

/// Overrides the thread count passed on the command line.
pub const THREADS_ENV: &str = "SPIKED_DETECT_THREADS";

pub const CSV_HEADER: [&str; 13] = [
    "experiment",
    "model",
    "noise",
    "transformed",
    "snr",
    "k1",
    "k2",
    "trials",
    "empirical_error",
    "stderr",
    "theory_error",
    "seed",
    "supercritical",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    /// Outlier counts of the raw or transformed spectrum for one set of spikes.
    BbpOutliers,
    /// Midpoint test of `k1` against `k2` spikes, half the trials under each.
    WeakDetection,
    /// Rank estimation with the true rank cycling through `0..=k_max`.
    RankEstimation,
    /// Statistic under `k1` spikes against its limiting mean and variance.
    CltNull,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::BbpOutliers => "bbp_outliers",
            Experiment::WeakDetection => "weak_detection",
            Experiment::RankEstimation => "rank_estimation",
            Experiment::CltNull => "clt_null",
        }
    }
}

/// The model without its signal strengths, which come from the grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelTemplate {
    pub kind: ModelKind,
    pub n: usize,
    /// Row dimension of rectangular models; ignored for Wigner.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    pub noise: NoiseConfig,
    #[serde(default = "default_prior")]
    pub prior: SpikePrior,
}

fn default_prior() -> SpikePrior {
    SpikePrior::RademacherIid
}

impl ModelTemplate {
    pub fn spec(&self) -> Result<ModelSpec> {
        let noise = self.noise.build()?;
        let spec = match self.kind {
            ModelKind::Wigner => ModelSpec::wigner(self.n, noise, self.prior, SnrSpec::none()),
            kind => {
                let m = self.m.ok_or_else(|| Error::Config {
                    key: "model.m".to_owned(),
                    message: "rectangular models need a row dimension".to_owned(),
                })?;
                ModelSpec::rect(kind, m, self.n, noise, self.prior, SnrSpec::none())
            }
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Spike strengths `λ_ℓ` for `ℓ = 1..=count`, placed just above the transformed threshold.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SnrPreset {
    /// `(ℓ + 1/F_g) / (ℓ + 1)`.
    Lam { count: usize },
    /// `(ℓ sqrt(d0) + sqrt(d0)/F_g) / (ℓ + 1)`.
    LamSim { count: usize },
    /// `(ℓ sqrt(d0) + 2 sqrt(d0)/(1 + sqrt(F_g))) / (ℓ + 1)`.
    LamSimMult { count: usize },
}

impl SnrPreset {
    /// Values in ascending `ℓ`.
    pub fn values(self, fisher: f64, d0: f64) -> Vec<f64> {
        let (count, base, floor) = match self {
            SnrPreset::Lam { count } => (count, 1.0, 1.0 / fisher),
            SnrPreset::LamSim { count } => (count, d0.sqrt(), d0.sqrt() / fisher),
            SnrPreset::LamSimMult { count } => {
                (count, d0.sqrt(), 2.0 * d0.sqrt() / (1.0 + fisher.sqrt()))
            }
        };
        (1..=count)
            .map(|l| {
                let l = l as f64;
                (l * base + floor) / (l + 1.0)
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformConfig {
    #[serde(default)]
    pub enabled: bool,
    /// Used by `bbp_outliers` on rectangular models. The tests always use `α = 0`.
    #[serde(default)]
    pub alpha: AlphaChoice,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub experiment: Experiment,
    pub model: ModelTemplate,
    /// `ω` values for the tests, or the spike strengths of a `bbp_outliers` run.
    #[serde(default)]
    pub snr_grid: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr_preset: Option<SnrPreset>,
    pub trials: usize,
    #[serde(default)]
    pub k1: usize,
    #[serde(default = "default_k2")]
    pub k2: usize,
    #[serde(default = "default_k_max")]
    pub k_max: usize,
    #[serde(default)]
    pub transform: TransformConfig,
    /// Eigenvalues above `edge + outlier_tol` count as outliers.
    #[serde(default = "default_outlier_tol")]
    pub outlier_tol: f64,
    #[serde(default)]
    pub master_seed: u64,
}

fn default_k2() -> usize {
    1
}

fn default_k_max() -> usize {
    4
}

fn default_outlier_tol() -> f64 {
    OUTLIER_TOL
}

fn config_error(key: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Config {
        key: key.into(),
        message: message.into(),
    }
}

impl SimConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: SimConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            let key = if path == "." { unknown_field(&inner.to_string()) } else { path };
            config_error(key, inner.to_string())
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.master_seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(config_error("trials", "need at least one trial"));
        }
        if self.experiment == Experiment::WeakDetection && self.trials % 2 != 0 {
            return Err(config_error(
                "trials",
                "weak detection splits trials evenly between the two hypotheses; use an even count",
            ));
        }
        if self.experiment == Experiment::WeakDetection && self.k1 >= self.k2 {
            return Err(config_error("k2", format!("need k1 < k2, got {} and {}", self.k1, self.k2)));
        }
        if !self.snr_grid.is_empty() && self.snr_preset.is_some() {
            return Err(config_error("snr_preset", "give either snr_grid or snr_preset, not both"));
        }
        if !(self.outlier_tol >= 0.0) {
            return Err(config_error("outlier_tol", "must be non-negative"));
        }
        for (i, &w) in self.snr_grid.iter().enumerate() {
            if !(w > 0.0) || !w.is_finite() {
                return Err(config_error(format!("snr_grid[{i}]"), format!("{w} is not positive")));
            }
        }
        let spec = self.model.spec()?;
        let grid = self.grid()?;
        if self.experiment == Experiment::BbpOutliers {
            if grid.len() > spec.m {
                return Err(config_error("snr_grid", "more spikes than the matrix dimension"));
            }
            return Ok(());
        }
        let ranks = match self.experiment {
            Experiment::RankEstimation => self.k_max,
            _ => self.k1.max(self.k2),
        };
        if ranks > spec.m {
            return Err(config_error("k2", "spike rank exceeds the matrix dimension"));
        }
        if self.transform.enabled && spec.kind == ModelKind::RectMultiplicative {
            return Err(config_error(
                "transform.enabled",
                "the transformed test is not available for the multiplicative model",
            ));
        }
        let summary = NoiseSummary::compute(&spec.noise)?;
        for (i, &w) in grid.iter().enumerate() {
            let detector = Detector::new(spec.kind, &spec.noise, summary, spec.d0(), w, self.options());
            if let Err(e) = detector {
                return Err(config_error(format!("snr_grid[{i}]"), e.to_string()));
            }
        }
        Ok(())
    }

    fn options(&self) -> DetectorOptions {
        DetectorOptions {
            transformed: self.transform.enabled,
        }
    }

    /// The explicit grid, or the preset expanded for this model's noise.
    pub fn grid(&self) -> Result<Vec<f64>> {
        match self.snr_preset {
            None => Ok(self.snr_grid.clone()),
            Some(preset) => {
                let spec = self.model.spec()?;
                let fisher = NoiseSummary::compute(&spec.noise)?.functionals.fisher;
                Ok(preset.values(fisher, spec.d0()))
            }
        }
    }
}

fn unknown_field(message: &str) -> String {
    message
        .split('`')
        .nth(1)
        .map(str::to_owned)
        .unwrap_or_else(|| ".".to_owned())
}

/// One row of the output.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridPoint {
    /// One `ω` for the tests; the whole spike set for `bbp_outliers`.
    pub snr: Vec<f64>,
    pub k1: usize,
    pub k2: usize,
    pub trials: usize,
    pub empirical_error: f64,
    pub stderr: f64,
    pub theory_error: f64,
    /// Trials with an eigenvalue past the statistic's pole. They count as `L = +∞` in the
    /// error rates and are left out of the `clt_null` moments.
    pub supercritical: usize,
    /// `bbp_outliers`: number of trials with each outlier count.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub outlier_histogram: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expected_outliers: Option<usize>,
    /// `clt_null`: sample mean and variance of the statistic and their limits.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clt: Option<CltCheck>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CltCheck {
    pub mean: f64,
    pub variance: f64,
    pub m_k: f64,
    pub v0: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimSummary {
    pub config: SimConfig,
    pub model: String,
    pub noise: String,
    pub points: Vec<GridPoint>,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Seed of trial `trial` at grid point `grid`.
pub fn trial_seed(master_seed: u64, grid: usize, trial: usize) -> u64 {
    let g = splitmix64(master_seed ^ splitmix64(grid as u64));
    splitmix64(g ^ splitmix64((trial as u64) ^ 0x5851_f42d_4c95_7f2d))
}

/// Reads the thread count from the environment, falling back to `cli`.
pub fn resolve_threads(cli: Option<usize>) -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => v.trim().parse::<usize>().map(Some).map_err(|_| {
            config_error(THREADS_ENV, format!("`{v}` is not a thread count"))
        }),
        Err(_) => Ok(cli),
    }
}

#[derive(Clone, Copy, Debug)]
struct Outcome {
    /// Hypothesis index for weak detection, true rank for rank estimation.
    group: usize,
    wrong: bool,
    /// Statistic value, or outlier count for `bbp_outliers`.
    value: f64,
    supercritical: bool,
}

struct PointPlan {
    snr: Vec<f64>,
    detector: Option<Detector>,
    expected_outliers: usize,
}

struct Runner<'a> {
    config: &'a SimConfig,
    spec: ModelSpec,
    summary: NoiseSummary,
}

impl Runner<'_> {
    fn plan(&self, grid: &[f64]) -> Result<Vec<PointPlan>> {
        if self.config.experiment == Experiment::BbpOutliers {
            if grid.is_empty() {
                return Ok(Vec::new());
            }
            let mut spikes = grid.to_vec();
            spikes.sort_by(|a, b| b.total_cmp(a));
            let expected = self.expected_outliers(&spikes)?;
            return Ok(vec![PointPlan {
                snr: spikes,
                detector: None,
                expected_outliers: expected,
            }]);
        }
        grid.iter()
            .map(|&w| {
                let detector = Detector::new(
                    self.spec.kind,
                    &self.spec.noise,
                    self.summary,
                    self.spec.d0(),
                    w,
                    self.config.options(),
                )?;
                Ok(PointPlan {
                    snr: vec![w],
                    detector: Some(detector),
                    expected_outliers: 0,
                })
            })
            .collect()
    }

    fn alpha(&self) -> f64 {
        self.config.transform.alpha.resolve(self.summary.functionals.fisher)
    }

    fn expected_outliers(&self, spikes: &[f64]) -> Result<usize> {
        let f = self.summary.functionals.fisher;
        let transformed = self.config.transform.enabled;
        let law = MpLaw::new(self.spec.d0())?;
        Ok(spikes
            .iter()
            .filter(|&&lam| match self.spec.kind {
                ModelKind::Wigner => bbp_wigner(if transformed { lam * f } else { lam }).supercritical,
                ModelKind::RectAdditive => {
                    let eff = if transformed {
                        effective_snr(RectKind::Additive, lam, f, self.alpha())
                    } else {
                        lam
                    };
                    bbp_rect(eff, &law).supercritical
                }
                ModelKind::RectMultiplicative => {
                    // Without the transform the population covariance spike is (1 + γ)² - 1 = λ.
                    let eff = if transformed {
                        effective_snr(RectKind::Multiplicative, gamma_of(lam), f, self.alpha())
                    } else {
                        lam
                    };
                    bbp_rect(eff, &law).supercritical
                }
            })
            .count())
    }

    fn trial(&self, plan: &PointPlan, seed: u64, trial: usize) -> Result<Outcome> {
        let cfg = self.config;
        match cfg.experiment {
            Experiment::BbpOutliers => {
                let data = build(&self.spec.with_snr(SnrSpec::new(plan.snr.clone())?), seed)?;
                let f = &self.summary.functionals;
                let (spectrum, edge) = match (self.spec.kind, cfg.transform.enabled) {
                    (ModelKind::Wigner, false) => (eigenvalues_sym(&data.values)?, 2.0),
                    (ModelKind::Wigner, true) => (
                        eigenvalues_sym(&transform_wigner(&data.values, &self.spec.noise, f)?)?,
                        2.0,
                    ),
                    (_, transformed) => {
                        let values = if transformed {
                            transform_rect(&data.values, &self.spec.noise, f.fisher, self.alpha())?
                        } else {
                            data.values
                        };
                        (gram_spectrum(&values)?, MpLaw::new(self.spec.d0())?.d_plus())
                    }
                };
                let count = count_outliers(&spectrum, edge, cfg.outlier_tol);
                Ok(Outcome {
                    group: 0,
                    wrong: count != plan.expected_outliers,
                    value: count as f64,
                    supercritical: false,
                })
            }
            Experiment::WeakDetection => {
                let (group, k) = if trial % 2 == 0 { (0, cfg.k1) } else { (1, cfg.k2) };
                let omega = plan.snr[0];
                let pair = HypothesisPair::new(cfg.k1, cfg.k2, omega)?;
                self.statistic_trial(plan, k, seed, group, |det, l| {
                    let accepted_k1 = l <= det.params().m_mid(pair.k1, pair.k2);
                    accepted_k1 == (group == 1)
                })
            }
            Experiment::RankEstimation => {
                let k = trial % (cfg.k_max + 1);
                self.statistic_trial(plan, k, seed, k, |det, l| {
                    crate::detect::estimate_rank(l, det.params(), Some(cfg.k_max)).kappa != k
                })
            }
            Experiment::CltNull => {
                let m_mid = |det: &Detector| det.params().m_mid(cfg.k1, cfg.k1 + 1);
                self.statistic_trial(plan, cfg.k1, seed, 0, |det, l| l > m_mid(det))
            }
        }
    }

    fn statistic_trial<F>(&self, plan: &PointPlan, k: usize, seed: u64, group: usize, wrong: F) -> Result<Outcome>
    where
        F: Fn(&Detector, f64) -> bool,
    {
        let detector = plan.detector.as_ref().expect("test experiments carry a detector");
        let spec = self.spec.with_snr(SnrSpec::new(vec![plan.snr[0]; k])?);
        let data = build(&spec, seed)?;
        match detector.statistic(&data.values) {
            Ok(l) => Ok(Outcome {
                group,
                wrong: wrong(detector, l),
                value: l,
                supercritical: false,
            }),
            // The statistic diverges to +∞ as an eigenvalue approaches the pole, so a trial past
            // it is scored as L = +∞.
            Err(Error::Supercritical { .. }) => Ok(Outcome {
                group,
                wrong: wrong(detector, f64::INFINITY),
                value: f64::INFINITY,
                supercritical: true,
            }),
            Err(e) => Err(e),
        }
    }

    fn aggregate(&self, plan: &PointPlan, outcomes: &[Outcome]) -> Result<GridPoint> {
        let cfg = self.config;
        let supercritical = outcomes.iter().filter(|o| o.supercritical).count();
        // Moments need finite statistics; rates score supercritical trials as L = +∞.
        let valid: Vec<&Outcome> = outcomes
            .iter()
            .filter(|o| cfg.experiment != Experiment::CltNull || !o.supercritical)
            .collect();
        let rate = |items: &[&Outcome]| -> (f64, f64) {
            let n = items.len() as f64;
            let e = items.iter().filter(|o| o.wrong).count() as f64 / n;
            (e, e * (1.0 - e) / n)
        };
        let (k1, k2) = match cfg.experiment {
            Experiment::BbpOutliers => (0, plan.snr.len()),
            Experiment::RankEstimation => (0, cfg.k_max),
            Experiment::CltNull => (cfg.k1, cfg.k1 + 1),
            Experiment::WeakDetection => (cfg.k1, cfg.k2),
        };
        let (empirical_error, variance) = if cfg.experiment == Experiment::WeakDetection {
            let (a, b): (Vec<&Outcome>, Vec<&Outcome>) = valid.iter().partition(|o| o.group == 0);
            let (e1, v1) = rate(&a);
            let (e2, v2) = rate(&b);
            (e1 + e2, v1 + v2)
        } else {
            rate(&valid)
        };
        let v0 = plan.detector.as_ref().map(|d| d.params().v0);
        let theory_error = match cfg.experiment {
            Experiment::BbpOutliers => 0.0,
            Experiment::WeakDetection => theoretical_error(&HypothesisPair::new(k1, k2, plan.snr[0])?, v0.unwrap_or(0.0))?,
            Experiment::RankEstimation => {
                let probs = vec![1.0 / (cfg.k_max + 1) as f64; cfg.k_max + 1];
                theoretical_rank_error(&probs, v0.unwrap_or(0.0), true)?
            }
            Experiment::CltNull => 0.5 * theoretical_error(&HypothesisPair::new(k1, k2, plan.snr[0])?, v0.unwrap_or(0.0))?,
        };
        let mut histogram = Vec::new();
        if cfg.experiment == Experiment::BbpOutliers {
            for o in &valid {
                let c = o.value as usize;
                if histogram.len() <= c {
                    histogram.resize(c + 1, 0);
                }
                histogram[c] += 1;
            }
        }
        let clt = match (cfg.experiment, plan.detector.as_ref()) {
            (Experiment::CltNull, Some(det)) => {
                let n = valid.len() as f64;
                let mean = valid.iter().map(|o| o.value).sum::<f64>() / n;
                let variance = valid.iter().map(|o| (o.value - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
                Some(CltCheck {
                    mean,
                    variance,
                    m_k: det.params().mk(cfg.k1),
                    v0: det.params().v0,
                })
            }
            _ => None,
        };
        Ok(GridPoint {
            snr: plan.snr.clone(),
            k1,
            k2,
            trials: outcomes.len(),
            empirical_error,
            stderr: variance.sqrt(),
            theory_error,
            supercritical,
            outlier_histogram: histogram,
            expected_outliers: (cfg.experiment == Experiment::BbpOutliers).then_some(plan.expected_outliers),
            clt,
        })
    }
}

/// Runs every trial of `config` on the current rayon pool.
///
/// The summary depends only on `config`: each trial owns an rng derived from
/// `(master_seed, grid index, trial index)` and results are reduced in index order.
pub fn run_trials(config: &SimConfig) -> Result<SimSummary> {
    config.validate()?;
    let spec = config.model.spec()?;
    let summary = NoiseSummary::compute(&spec.noise)?;
    let runner = Runner {
        config,
        spec,
        summary,
    };
    let plans = runner.plan(&config.grid()?)?;
    let trials = config.trials;
    let outcomes = (0..plans.len() * trials)
        .into_par_iter()
        .map(|idx| {
            let (g, t) = (idx / trials, idx % trials);
            runner.trial(&plans[g], trial_seed(config.master_seed, g, t), t)
        })
        .collect::<Result<Vec<_>>>()?;
    let points = plans
        .iter()
        .zip(outcomes.chunks(trials.max(1)))
        .map(|(plan, chunk)| runner.aggregate(plan, chunk))
        .collect::<Result<Vec<_>>>()?;
    Ok(SimSummary {
        config: config.clone(),
        model: runner.spec.kind.name().to_owned(),
        noise: runner.spec.noise.name(),
        points,
    })
}

/// As [`run_trials`], on a dedicated pool of `threads` workers.
pub fn run_trials_with_threads(config: &SimConfig, threads: usize) -> Result<SimSummary> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| config_error("threads", e.to_string()))?;
    pool.install(|| run_trials(config))
}

/// `x` rounded to 9 significant digits, in fixed notation where that stays short.
pub fn format_sig9(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".to_owned() } else { format!("{x}") };
    }
    let sci = format!("{x:.8e}");
    let exp: i32 = sci.split_once('e').and_then(|(_, e)| e.parse().ok()).unwrap_or(0);
    if !(-5..9).contains(&exp) {
        return sci;
    }
    let fixed = format!("{:.*}", (8 - exp) as usize, x);
    if fixed.contains('.') {
        fixed.trim_end_matches('0').trim_end_matches('.').to_owned()
    } else {
        fixed
    }
}

fn csv_rows(summary: &SimSummary) -> impl Iterator<Item = [String; 13]> + '_ {
    let c = &summary.config;
    summary.points.iter().map(move |p| {
        [
            c.experiment.name().to_owned(),
            summary.model.clone(),
            summary.noise.clone(),
            c.transform.enabled.to_string(),
            p.snr.iter().map(|&s| format_sig9(s)).collect::<Vec<_>>().join(";"),
            p.k1.to_string(),
            p.k2.to_string(),
            p.trials.to_string(),
            format_sig9(p.empirical_error),
            format_sig9(p.stderr),
            format_sig9(p.theory_error),
            c.master_seed.to_string(),
            p.supercritical.to_string(),
        ]
    })
}

/// Writes the header and one row per grid point, in grid order.
pub fn write_csv<W: Write>(summary: &SimSummary, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for row in csv_rows(summary) {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_csv(summary: &SimSummary, path: &Path) -> Result<()> {
    let io_err = |source| Error::Io {
        path: path.to_owned(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    write_csv(summary, BufWriter::new(file)).map_err(|e| io_err(e.into()))
}

/// Noise model named on the command line: `gaussian`, `sech`, `bimodal` (a = sqrt(3)/2) or `bimodal:<a>`.
pub fn parse_noise(name: &str) -> Result<NoiseModel> {
    let config = match name.split_once(':') {
        None if name == "gaussian" => NoiseConfig::Gaussian { w2: None },
        None if name == "sech" => NoiseConfig::Sech { w2: None },
        None if name == "bimodal" => NoiseConfig::Bimodal {
            a: 3f64.sqrt() / 2.0,
            w2: None,
        },
        Some(("bimodal", a)) => NoiseConfig::Bimodal {
            a: a.parse().map_err(|_| Error::Validation(format!("bad bimodal parameter `{a}`")))?,
            w2: None,
        },
        _ => return Err(Error::Validation(format!("unknown noise `{name}`"))),
    };
    config.build()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn goe_config(experiment: Experiment, grid: Vec<f64>, trials: usize) -> SimConfig {
        SimConfig {
            experiment,
            model: ModelTemplate {
                kind: ModelKind::Wigner,
                n: 48,
                m: None,
                noise: NoiseConfig::Gaussian { w2: Some(2.0) },
                prior: SpikePrior::RademacherIid,
            },
            snr_grid: grid,
            snr_preset: None,
            trials,
            k1: 0,
            k2: 1,
            k_max: 4,
            transform: TransformConfig::default(),
            outlier_tol: OUTLIER_TOL,
            master_seed: 11,
        }
    }

    #[test]
    fn presets_match_closed_forms() {
        let f = 2.5;
        let lam = SnrPreset::Lam { count: 3 }.values(f, 1.0);
        assert!((lam[0] - (1.0 + 0.4) / 2.0).abs() < 1e-15);
        assert!((lam[2] - (3.0 + 0.4) / 4.0).abs() < 1e-15);
        let d0: f64 = 0.5;
        let sim = SnrPreset::LamSim { count: 3 }.values(f, d0);
        assert!((sim[1] - (2.0 * d0.sqrt() + d0.sqrt() / f) / 3.0).abs() < 1e-15);
        let mult = SnrPreset::LamSimMult { count: 3 }.values(f, d0);
        assert!((mult[0] - (d0.sqrt() + 2.0 * d0.sqrt() / (1.0 + f.sqrt())) / 2.0).abs() < 1e-15);
        for v in [lam, sim, mult] {
            assert!(v.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn seeds_are_distinct() {
        let mut seen = std::collections::HashSet::new();
        for g in 0..20 {
            for t in 0..200 {
                assert!(seen.insert(trial_seed(3, g, t)));
            }
        }
        assert_ne!(trial_seed(1, 0, 0), trial_seed(2, 0, 0));
    }

    #[test]
    fn sig9_formatting() {
        assert_eq!(format_sig9(0.0), "0");
        assert_eq!(format_sig9(0.5), "0.5");
        assert_eq!(format_sig9(1.0 / 3.0), "0.333333333");
        assert_eq!(format_sig9(2.0 / 3.0 * 1e-7), "6.66666667e-8");
        assert_eq!(format_sig9(9.9999999999), "10");
        assert_eq!(format_sig9(-1234.56789123), "-1234.56789");
        assert_eq!(format_sig9(f64::NAN), "NaN");
        for x in [0.123456789123, 7.77e-3, 12345.678901] {
            let y: f64 = format_sig9(x).parse().unwrap();
            assert!(((x - y) / x).abs() < 5e-9);
        }
    }

    #[test]
    fn config_validation() {
        let mut c = goe_config(Experiment::WeakDetection, vec![0.5], 3);
        assert!(matches!(c.validate(), Err(Error::Config { ref key, .. }) if key == "trials"));
        c.trials = 0;
        assert!(c.validate().is_err());
        c.trials = 4;
        c.k1 = 2;
        assert!(c.validate().is_err());
        c.k1 = 0;
        c.snr_grid = vec![1.5];
        assert!(matches!(c.validate(), Err(Error::Config { ref key, .. }) if key == "snr_grid[0]"));
        c.snr_grid = vec![0.5];
        c.snr_preset = Some(SnrPreset::Lam { count: 2 });
        assert!(c.validate().is_err());
    }

    #[test]
    fn json_errors_name_the_key() {
        let bad_type = r#"{"experiment": "clt_null", "model": {"kind": "wigner", "n": "big",
            "noise": {"kind": "gaussian"}}, "trials": 10}"#;
        match SimConfig::from_json(bad_type) {
            Err(Error::Config { key, .. }) => assert_eq!(key, "model.n"),
            other => panic!("{other:?}"),
        }
        let unknown = r#"{"experiment": "clt_null", "model": {"kind": "wigner", "n": 8,
            "noise": {"kind": "gaussian"}}, "trials": 10, "trails": 3}"#;
        match SimConfig::from_json(unknown) {
            Err(Error::Config { key, .. }) => assert_eq!(key, "trails"),
            other => panic!("{other:?}"),
        }
        let missing = r#"{"experiment": "clt_null", "model": {"kind": "wigner", "n": 8,
            "noise": {"kind": "gaussian"}}}"#;
        match SimConfig::from_json(missing) {
            Err(Error::Config { key, .. }) => assert_eq!(key, "trials"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn single_trial_is_deterministic() {
        let c = goe_config(Experiment::CltNull, vec![0.3, 0.6], 1);
        assert_eq!(run_trials(&c).unwrap(), run_trials(&c).unwrap());
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let c = goe_config(Experiment::RankEstimation, vec![0.4], 30);
        let a = run_trials_with_threads(&c, 1).unwrap();
        let b = run_trials_with_threads(&c, 4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn weak_detection_splits_trials() {
        let mut c = goe_config(Experiment::WeakDetection, vec![0.5], 40);
        c.k1 = 1;
        c.k2 = 3;
        let s = run_trials(&c).unwrap();
        let p = &s.points[0];
        assert_eq!((p.k1, p.k2, p.trials), (1, 3, 40));
        assert!((0.0..=2.0).contains(&p.empirical_error));
        assert!(p.stderr > 0.0 && p.stderr <= (2.0 * 0.25 / 20.0f64).sqrt() + 1e-12);
    }

    #[test]
    fn empty_grid_gives_no_points() {
        let c = goe_config(Experiment::CltNull, vec![], 5);
        assert!(run_trials(&c).unwrap().points.is_empty());
    }

    #[test]
    fn parses_noise_names() {
        assert!(parse_noise("gaussian").unwrap().is_gaussian());
        assert_eq!(parse_noise("sech").unwrap().name(), "sech");
        assert_eq!(parse_noise("bimodal:0.5").unwrap().name(), "bimodal(0.5)");
        assert!(parse_noise("bimodal:x").is_err());
        assert!(parse_noise("cauchy").is_err());
    }
}
