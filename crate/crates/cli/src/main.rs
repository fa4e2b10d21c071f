use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use spiked_detect::detect::{Detector, DetectorOptions, HypothesisPair, NoiseSummary};
use spiked_detect::harness::{
    emit_csv, parse_noise, resolve_threads, run_trials, run_trials_with_threads, write_csv,
    Experiment, ModelTemplate, SimConfig, TransformConfig, THREADS_ENV,
};
use spiked_detect::models::{build, gamma_of, ModelKind, ModelSpec, SnrSpec, SpikePrior};
use spiked_detect::noise::{NoiseConfig, NoiseFunctionals};
use spiked_detect::spectral::{bbp_rect, bbp_wigner, count_outliers, eigenvalues_sym, gram_spectrum, MpLaw, OUTLIER_TOL};
use spiked_detect::transforms::{effective_snr, transform_rect, transform_wigner, AlphaChoice, RectKind};
use spiked_detect::{Error, Result};

#[derive(Parser)]
#[command(name = "spiked-detect", version, about = "Spiked random matrix detection: transformed PCA, weak-detection tests, rank estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the Fisher informations and score functionals of a noise density.
    Fisher {
        /// gaussian, sech, bimodal (a = sqrt(3)/2) or bimodal:<a>.
        #[arg(long, default_value = "gaussian")]
        noise: String,
    },
    /// Sample one spiked matrix and print the top of its (optionally transformed) spectrum.
    Spectrum {
        #[command(flatten)]
        model: ModelArgs,
        /// Comma-separated spike strengths λ.
        #[arg(long, value_delimiter = ',', default_value = "")]
        snr: Vec<f64>,
        /// Apply the entrywise score transform first.
        #[arg(long)]
        transformed: bool,
        /// Mixing weight for rectangular transforms: sqrt_Fg, zero or a number.
        #[arg(long, default_value = "sqrt_Fg")]
        alpha: String,
        /// Number of leading eigenvalues to print.
        #[arg(long, default_value_t = 10)]
        top: usize,
    },
    /// Run the midpoint test of k1 against k2 spikes of strength --snr on one sample.
    Test {
        #[command(flatten)]
        model: ModelArgs,
        /// Hypothesized spike strength ω.
        #[arg(long)]
        snr: f64,
        #[arg(long, default_value_t = 0)]
        k1: usize,
        #[arg(long, default_value_t = 1)]
        k2: usize,
        /// Number of spikes planted in the sample (defaults to k1).
        #[arg(long)]
        k: Option<usize>,
        /// Strength of the planted spikes (defaults to --snr).
        #[arg(long)]
        data_snr: Option<f64>,
        /// Use the statistic of the transformed matrix.
        #[arg(long)]
        transformed: bool,
    },
    /// Estimate the number of spikes of strength --snr in one sample.
    Rank {
        #[command(flatten)]
        model: ModelArgs,
        /// Spike strength ω.
        #[arg(long)]
        snr: f64,
        /// Largest admissible rank; larger estimates are clamped.
        #[arg(long)]
        kmax: Option<usize>,
        /// Number of spikes planted in the sample.
        #[arg(long, default_value_t = 0)]
        k: usize,
        /// Strength of the planted spikes (defaults to --snr).
        #[arg(long)]
        data_snr: Option<f64>,
        #[arg(long)]
        transformed: bool,
    },
    /// Run a Monte Carlo experiment described by a JSON config and write CSV.
    Simulate {
        /// Experiment config (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Output CSV; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Master seed; overrides the config's master_seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads; the SPIKED_DETECT_THREADS environment variable takes precedence.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Compare the sample mean and variance of the statistic with its limiting values.
    CltCheck {
        #[command(flatten)]
        model: ModelArgs,
        /// Spike strength ω of the statistic.
        #[arg(long)]
        snr: f64,
        /// Number of spikes planted in every sample.
        #[arg(long, default_value_t = 0)]
        k: usize,
        #[arg(long, default_value_t = 500)]
        trials: usize,
        #[arg(long)]
        transformed: bool,
        /// Worker threads; the SPIKED_DETECT_THREADS environment variable takes precedence.
        #[arg(long)]
        threads: Option<usize>,
    },
}

#[derive(Args)]
struct ModelArgs {
    /// wigner, additive or multiplicative.
    #[arg(long, default_value = "wigner")]
    model: String,
    /// gaussian, sech, bimodal (a = sqrt(3)/2) or bimodal:<a>.
    #[arg(long, default_value = "gaussian")]
    noise: String,
    /// Column dimension (the matrix size for Wigner).
    #[arg(long, default_value_t = 256)]
    n: usize,
    /// Row dimension of rectangular models (defaults to n/2).
    #[arg(long)]
    m: Option<usize>,
    /// Diagonal variance of the Wigner noise.
    #[arg(long, default_value_t = 1.0)]
    w2: f64,
    /// rademacher_iid or spherical.
    #[arg(long, default_value = "rademacher_iid")]
    prior: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl ModelArgs {
    fn kind(&self) -> Result<ModelKind> {
        self.model.parse()
    }

    fn prior(&self) -> Result<SpikePrior> {
        match self.prior.as_str() {
            "rademacher_iid" | "rademacher" => Ok(SpikePrior::RademacherIid),
            "spherical" => Ok(SpikePrior::Spherical),
            p => Err(Error::Validation(format!("unknown prior `{p}`"))),
        }
    }

    fn spec(&self, snr: SnrSpec) -> Result<ModelSpec> {
        let noise = parse_noise(&self.noise)?.with_w2(self.w2);
        let spec = match self.kind()? {
            ModelKind::Wigner => ModelSpec::wigner(self.n, noise, self.prior()?, snr),
            kind => ModelSpec::rect(kind, self.m.unwrap_or(self.n / 2), self.n, noise, self.prior()?, snr),
        };
        spec.validate()?;
        Ok(spec)
    }

    fn noise_config(&self) -> Result<NoiseConfig> {
        let w2 = Some(self.w2);
        Ok(match self.noise.split_once(':') {
            None if self.noise == "gaussian" => NoiseConfig::Gaussian { w2 },
            None if self.noise == "sech" => NoiseConfig::Sech { w2 },
            None if self.noise == "bimodal" => NoiseConfig::Bimodal { a: 3f64.sqrt() / 2.0, w2 },
            Some(("bimodal", a)) => NoiseConfig::Bimodal {
                a: a.parse().map_err(|_| Error::Validation(format!("bad bimodal parameter `{a}`")))?,
                w2,
            },
            _ => return Err(Error::Validation(format!("unknown noise `{}`", self.noise))),
        })
    }
}

fn parse_alpha(s: &str) -> Result<AlphaChoice> {
    match s {
        "sqrt_Fg" => Ok(AlphaChoice::SqrtFisher),
        "zero" => Ok(AlphaChoice::Zero),
        v => v
            .parse()
            .map(AlphaChoice::Value)
            .map_err(|_| Error::Validation(format!("bad alpha `{v}`"))),
    }
}

fn fisher(noise: &str) -> Result<()> {
    let f = NoiseFunctionals::compute(&parse_noise(noise)?)?;
    println!("F_g={:.9}", f.fisher);
    println!("F_gd={:.9}", f.fisher_diag);
    println!("G_H={:.9}", f.gh);
    println!("w4_tilde={:.9}", f.w4_tilde);
    Ok(())
}

fn spectrum(model: &ModelArgs, snr: &[f64], transformed: bool, alpha: &str, top: usize) -> Result<()> {
    let mut spikes = snr.to_vec();
    spikes.sort_by(|a, b| b.total_cmp(a));
    let spec = model.spec(SnrSpec::new(spikes.clone())?)?;
    let data = build(&spec, model.seed)?;
    let f = NoiseFunctionals::compute(&spec.noise)?;
    let alpha = parse_alpha(alpha)?.resolve(f.fisher);
    let law = MpLaw::new(spec.d0())?;
    let (spec_vals, edge) = match (spec.kind, transformed) {
        (ModelKind::Wigner, false) => (eigenvalues_sym(&data.values)?, 2.0),
        (ModelKind::Wigner, true) => (eigenvalues_sym(&transform_wigner(&data.values, &spec.noise, &f)?)?, 2.0),
        (_, false) => (gram_spectrum(&data.values)?, law.d_plus()),
        (_, true) => (gram_spectrum(&transform_rect(&data.values, &spec.noise, f.fisher, alpha)?)?, law.d_plus()),
    };
    println!("model={} noise={} transformed={}", spec.kind.name(), spec.noise.name(), transformed);
    println!("bulk_edge={edge:.9}");
    for &lam in &spikes {
        let prediction = match (spec.kind, transformed) {
            (ModelKind::Wigner, t) => bbp_wigner(if t { lam * f.fisher } else { lam }),
            (ModelKind::RectAdditive, true) => bbp_rect(effective_snr(RectKind::Additive, lam, f.fisher, alpha), &law),
            (ModelKind::RectMultiplicative, true) => {
                bbp_rect(effective_snr(RectKind::Multiplicative, gamma_of(lam), f.fisher, alpha), &law)
            }
            (_, false) => bbp_rect(lam, &law),
        };
        println!(
            "spike lambda={lam:.9} supercritical={} predicted_location={:.9}",
            prediction.supercritical, prediction.outlier_location
        );
    }
    println!("outliers={}", count_outliers(&spec_vals, edge, OUTLIER_TOL));
    for (i, x) in spec_vals.iter().take(top).enumerate() {
        println!("eigenvalue[{i}]={x:.9}");
    }
    Ok(())
}

fn detector(model: &ModelArgs, omega: f64, transformed: bool) -> Result<(ModelSpec, Detector)> {
    let spec = model.spec(SnrSpec::none())?;
    let summary = NoiseSummary::compute(&spec.noise)?;
    let det = Detector::new(spec.kind, &spec.noise, summary, spec.d0(), omega, DetectorOptions { transformed })?;
    Ok((spec, det))
}

fn sample(spec: &ModelSpec, k: usize, strength: f64, seed: u64) -> Result<spiked_detect::models::DataMatrix> {
    build(&spec.with_snr(SnrSpec::new(vec![strength; k])?), seed)
}

fn test(model: &ModelArgs, snr: f64, k1: usize, k2: usize, k: Option<usize>, data_snr: Option<f64>, transformed: bool) -> Result<()> {
    let pair = HypothesisPair::new(k1, k2, snr)?;
    let (spec, det) = detector(model, snr, transformed)?;
    let data = sample(&spec, k.unwrap_or(k1), data_snr.unwrap_or(snr), model.seed)?;
    let decision = det.test(&data.values, &pair)?;
    println!("case={}", det.case().name());
    println!("statistic={:.9}", decision.statistic);
    println!("threshold={:.9}", decision.threshold);
    println!("decision=accept k={}", decision.accepted);
    println!("theoretical_error={:.9}", det.theoretical_error(&pair)?);
    Ok(())
}

fn rank(model: &ModelArgs, snr: f64, kmax: Option<usize>, k: usize, data_snr: Option<f64>, transformed: bool) -> Result<()> {
    let (spec, det) = detector(model, snr, transformed)?;
    let data = sample(&spec, k, data_snr.unwrap_or(snr), model.seed)?;
    let est = det.rank(&data.values, kmax)?;
    println!("case={}", det.case().name());
    println!("statistic={:.9}", det.statistic(&data.values)?);
    println!("kappa_prime={:.9}", est.kappa_prime);
    println!("kappa={}", est.kappa);
    println!("clamped={}", est.clamped);
    Ok(())
}

fn run(config: &SimConfig, threads: Option<usize>) -> Result<spiked_detect::harness::SimSummary> {
    match resolve_threads(threads)? {
        Some(t) => run_trials_with_threads(config, t),
        None => run_trials(config),
    }
}

fn simulate(config: &PathBuf, out: Option<&PathBuf>, seed: Option<u64>, threads: Option<usize>) -> Result<()> {
    let mut cfg = SimConfig::from_file(config)?;
    if let Some(s) = seed {
        cfg = cfg.with_seed(s);
    }
    let summary = run(&cfg, threads)?;
    match out {
        Some(path) => {
            emit_csv(&summary, path)?;
            eprintln!("wrote {} rows to {}", summary.points.len(), path.display());
        }
        None => write_csv(&summary, std::io::stdout().lock()).map_err(|e| Error::Io {
            path: PathBuf::from("<stdout>"),
            source: e.into(),
        })?,
    }
    Ok(())
}

fn clt_check(model: &ModelArgs, snr: f64, k: usize, trials: usize, transformed: bool, threads: Option<usize>) -> Result<()> {
    let kind = model.kind()?;
    let config = SimConfig {
        experiment: Experiment::CltNull,
        model: ModelTemplate {
            kind,
            n: model.n,
            m: kind.is_rect().then(|| model.m.unwrap_or(model.n / 2)),
            noise: model.noise_config()?,
            prior: model.prior()?,
        },
        snr_grid: vec![snr],
        snr_preset: None,
        trials,
        k1: k,
        k2: k + 1,
        k_max: 4,
        transform: TransformConfig { enabled: transformed, alpha: AlphaChoice::Zero },
        outlier_tol: OUTLIER_TOL,
        master_seed: model.seed,
    };
    let summary = run(&config, threads)?;
    let point = &summary.points[0];
    let clt = point.clt.expect("clt_null reports sample moments");
    let valid = (point.trials - point.supercritical) as f64;
    let stderr = (clt.variance / valid).sqrt();
    println!("samples={} supercritical={}", point.trials, point.supercritical);
    println!("mean={:.9} m_k={:.9} z={:.3}", clt.mean, clt.m_k, (clt.mean - clt.m_k) / stderr);
    println!("variance={:.9} v0={:.9} ratio={:.6}", clt.variance, clt.v0, clt.variance / clt.v0);
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Fisher { noise } => fisher(&noise),
        Command::Spectrum { model, snr, transformed, alpha, top } => spectrum(&model, &snr, transformed, &alpha, top),
        Command::Test { model, snr, k1, k2, k, data_snr, transformed } => test(&model, snr, k1, k2, k, data_snr, transformed),
        Command::Rank { model, snr, kmax, k, data_snr, transformed } => rank(&model, snr, kmax, k, data_snr, transformed),
        Command::Simulate { config, out, seed, threads } => simulate(&config, out.as_ref(), seed, threads),
        Command::CltCheck { model, snr, k, trials, transformed, threads } => {
            clt_check(&model, snr, k, trials, transformed, threads)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, Error::Config { .. }) && std::env::var(THREADS_ENV).is_ok() {
                eprintln!("note: {THREADS_ENV} is set");
            }
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}
