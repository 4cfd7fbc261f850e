//! Fitting model parameters by minimising the mean squared error between
//! denoised and clean images over a corpus.

use std::fmt;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::diffusion::{evolve, Model, ModelKind, ModelSpec, TauPolicy};
use crate::error::{Error, Result};
use crate::image::{add_noise, mse, ImageGrid, NoiseSpec};
use crate::io::read_image;
use crate::kv::{fmt_level, KvFile};
use crate::optimize::{minimize, OptimizeConfig};
use crate::params::DEFAULT_STEPS;
use crate::scales::{bank_from_reduced, default_scales, ReducedParams, ScaleBank};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    pub clean: ImageGrid,
    pub noisy: ImageGrid,
    pub stddev: f64,
}

/// Clean/noisy pairs, each tagged with the noise level it was made with.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Corpus {
    pairs: Vec<TrainingPair>,
}

impl Corpus {
    pub fn new(pairs: Vec<TrainingPair>) -> Result<Self> {
        for p in &pairs {
            p.clean.same_shape(&p.noisy)?;
            if !(p.stddev > 0.0 && p.stddev.is_finite()) {
                return Err(Error::invalid(format!("noise level must be > 0, got {}", p.stddev)));
            }
        }
        Ok(Self { pairs })
    }

    /// Reads a manifest with one `clean noisy s` triple per line. Paths are
    /// relative to the manifest; blank lines and `#` comments are skipped.
    pub fn from_manifest(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut pairs = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Config {
                path: format!("{}:{}", path.display(), n + 1),
                message,
            };
            let fields: Vec<&str> = line.split_whitespace().collect();
            let [clean, noisy, s] = fields[..] else {
                return Err(err(format!("expected `clean noisy stddev`, found {line:?}")));
            };
            let stddev: f64 = s.parse().map_err(|_| err(format!("invalid noise level {s:?}")))?;
            let load = |p: &str| read_image(base.join(p)).map_err(|e| err(format!("{p}: {e}")));
            pairs.push(TrainingPair {
                clean: load(clean)?,
                noisy: load(noisy)?,
                stddev,
            });
        }
        if pairs.is_empty() {
            return Err(Error::Config {
                path: path.display().to_string(),
                message: "manifest lists no images".into(),
            });
        }
        Self::new(pairs)
    }

    /// Noisy copies of every clean image at every level. The pair for image
    /// `i` at level index `k` uses seed `seed + k * len + i`.
    pub fn synthesize(clean: &[ImageGrid], levels: &[f64], seed: u64) -> Result<Self> {
        let mut pairs = Vec::with_capacity(clean.len() * levels.len());
        for (k, &s) in levels.iter().enumerate() {
            for (i, c) in clean.iter().enumerate() {
                let seed = seed.wrapping_add((k * clean.len() + i) as u64);
                pairs.push(TrainingPair {
                    clean: c.clone(),
                    noisy: add_noise(c, NoiseSpec::new(s, seed)?)?,
                    stddev: s,
                });
            }
        }
        Self::new(pairs)
    }

    /// Writes every pair as PFM files next to a manifest in `dir`.
    pub fn write_manifest(&self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let mut text = String::new();
        for (i, p) in self.pairs.iter().enumerate() {
            let clean = format!("clean_{i:03}.pfm");
            let noisy = format!("noisy_{i:03}.pfm");
            crate::io::write_image(&p.clean, dir.join(&clean))?;
            crate::io::write_image(&p.noisy, dir.join(&noisy))?;
            text.push_str(&format!("{clean} {noisy} {}\n", fmt_level(p.stddev)));
        }
        let manifest = dir.join("manifest.txt");
        std::fs::write(&manifest, text)?;
        Ok(manifest)
    }

    pub fn pairs(&self) -> &[TrainingPair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Distinct noise levels in ascending order.
    pub fn levels(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.pairs.iter().map(|p| p.stddev).collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    }

    pub fn at_level(&self, s: f64) -> Corpus {
        Corpus {
            pairs: self.pairs.iter().filter(|p| p.stddev == s).cloned().collect(),
        }
    }
}

/// Mean squared error of `spec` over the pairs, evaluated concurrently and
/// summed in corpus order.
pub fn mean_mse(pairs: &[TrainingPair], spec: &ModelSpec) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::invalid("empty corpus"));
    }
    let errors: Vec<Result<f64>> = pairs
        .par_iter()
        .map(|p| evolve(&p.noisy, spec).and_then(|e| mse(&e.image, &p.clean)))
        .collect();
    let mut total = 0.0;
    for e in errors {
        total += e?;
    }
    Ok(total / pairs.len() as f64)
}

/// Loss of a level-dependent model: per-level mean MSE, averaged over the
/// levels present in the corpus.
pub fn corpus_loss(corpus: &Corpus, mut spec_at: impl FnMut(f64) -> Result<ModelSpec>) -> Result<f64> {
    let levels = corpus.levels();
    if levels.is_empty() {
        return Err(Error::invalid("empty corpus"));
    }
    let mut total = 0.0;
    for &s in &levels {
        let sub = corpus.at_level(s);
        total += mean_mse(sub.pairs(), &spec_at(s)?)?;
    }
    Ok(total / levels.len() as f64)
}

/// Smoothness penalty `sum (gamma_{i+1} - gamma_i)^2 + sum (lambda_{i+1} - lambda_i)^2`.
pub fn regulariser(bank: &ScaleBank) -> f64 {
    let sq = |v: &[f64]| v.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum::<f64>();
    sq(bank.gammas()) + sq(bank.lambdas())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainMode {
    /// `alpha`, `beta`, `lambda0`, jointly over all noise levels.
    Reduced,
    /// Per-scale `gamma_2..gamma_N` and `lambda_1..lambda_N` at one level.
    Full,
    Pm,
    Eed,
}

impl std::str::FromStr for TrainMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "reduced" => Ok(TrainMode::Reduced),
            "full" => Ok(TrainMode::Full),
            "pm" => Ok(TrainMode::Pm),
            "eed" => Ok(TrainMode::Eed),
            other => Err(Error::invalid(format!(
                "unknown training mode {other:?} (expected reduced, full, pm or eed)"
            ))),
        }
    }
}

impl fmt::Display for TrainMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TrainMode::Reduced => "reduced",
            TrainMode::Full => "full",
            TrainMode::Pm => "pm",
            TrainMode::Eed => "eed",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub mode: TrainMode,
    /// IID or IAD for the reduced and full modes.
    pub model: ModelKind,
    pub steps: usize,
    pub tau: TauPolicy,
    pub scales: Vec<f64>,
    /// Smoothness weight for the full mode; `None` picks
    /// `1e-3 * initial loss / initial penalty`.
    pub epsilon: Option<f64>,
    /// Starting point for the reduced mode.
    pub reduced_init: ReducedParams,
    /// Starting point for the full mode; defaults to the bank generated by
    /// `reduced_init`.
    pub full_init: Option<ScaleBank>,
    pub optimizer: OptimizeConfig,
}

/// Starting point of reduced-mode training: the published weights with the
/// contrast rescaled to grey values in [0, 255].
pub const REDUCED_INIT: ReducedParams = ReducedParams {
    alpha: 1.64,
    beta: 2.46,
    lambda0: 0.75,
};

impl TrainConfig {
    pub fn new(mode: TrainMode) -> Self {
        Self {
            mode,
            model: ModelKind::Iad,
            steps: DEFAULT_STEPS,
            tau: TauPolicy::default(),
            scales: default_scales(),
            epsilon: None,
            reduced_init: REDUCED_INIT,
            full_init: None,
            optimizer: OptimizeConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::invalid("step count must be >= 1"));
        }
        self.tau.validate()?;
        self.optimizer.validate()?;
        self.reduced_init.validate()?;
        if matches!(self.mode, TrainMode::Reduced | TrainMode::Full) && !self.model.is_multiscale() {
            return Err(Error::invalid(format!(
                "{} training needs iid or iad, got {}",
                self.mode, self.model
            )));
        }
        if let Some(e) = self.epsilon {
            if !(e >= 0.0 && e.is_finite()) {
                return Err(Error::invalid(format!("smoothness weight must be >= 0, got {e}")));
            }
        }
        if self.scales.is_empty() {
            return Err(Error::invalid("at least one scale is needed"));
        }
        Ok(())
    }
}

/// PM or EED parameters fitted at one noise level.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelFit {
    pub stddev: f64,
    pub model: Model,
    /// With an automatic step the safety factor is trained along with the
    /// model, which sets the diffusion time reached in the fixed step count.
    pub tau: TauPolicy,
}

/// Trained parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum Trained {
    /// PM or EED, one fit per noise level.
    PerLevel { kind: ModelKind, levels: Vec<LevelFit> },
    Reduced {
        kind: ModelKind,
        params: ReducedParams,
        scales: Vec<f64>,
    },
    Full {
        kind: ModelKind,
        bank: ScaleBank,
        stddev: f64,
    },
}

impl Trained {
    pub fn kind(&self) -> ModelKind {
        match self {
            Trained::PerLevel { kind, .. } | Trained::Reduced { kind, .. } | Trained::Full { kind, .. } => *kind,
        }
    }

    fn nearest(levels: &[LevelFit], s: f64) -> Result<&LevelFit> {
        levels
            .iter()
            .min_by(|a, b| (a.stddev - s).abs().total_cmp(&(b.stddev - s).abs()))
            .ok_or_else(|| Error::invalid("no trained levels"))
    }

    /// The model to use at noise level `s`.
    pub fn model_at(&self, s: f64) -> Result<Model> {
        match self {
            Trained::PerLevel { levels, .. } => Ok(Self::nearest(levels, s)?.model.clone()),
            Trained::Reduced { kind, params, scales } => Model::multiscale_reduced(*kind, params, s, scales),
            Trained::Full { kind, bank, .. } => Ok(multiscale(*kind, bank.clone())),
        }
    }

    /// Evolution settings at noise level `s`. `tau` applies unless a time
    /// step was trained for that level.
    pub fn spec_at(&self, s: f64, steps: usize, tau: TauPolicy) -> Result<ModelSpec> {
        let tau = match self {
            Trained::PerLevel { levels, .. } => Self::nearest(levels, s)?.tau,
            _ => tau,
        };
        ModelSpec::new(self.model_at(s)?, steps, tau)
    }

    /// Parameter file contents; `steps` and `tau` are recorded as well.
    pub fn to_kv(&self, steps: usize, tau: TauPolicy) -> KvFile {
        let mut kv = KvFile::new("trained");
        kv.set("model", self.kind().name());
        match self {
            Trained::PerLevel { levels, .. } => {
                let single = levels.len() == 1;
                for fit in levels {
                    let key = |k: &str| if single { k.to_string() } else { format!("{k}@{}", fmt_level(fit.stddev)) };
                    match fit.model {
                        Model::Pm { lambda } => kv.set_f64(key("lambda"), lambda),
                        Model::Eed { lambda, sigma } => {
                            kv.set_f64(key("lambda"), lambda);
                            kv.set_f64(key("sigma"), sigma);
                        }
                        _ => unreachable!("per-level fits are PM or EED"),
                    }
                    kv.set(key("tau"), fit.tau.to_string());
                }
            }
            Trained::Reduced { params, scales, .. } => {
                kv.set_f64("alpha", params.alpha);
                kv.set_f64("beta", params.beta);
                kv.set_f64("lambda0", params.lambda0);
                kv.set_list("sigmas", scales);
            }
            Trained::Full { bank, stddev, .. } => {
                bank.write_kv(&mut kv);
                kv.set_f64("stddev", *stddev);
            }
        }
        kv.set("steps", steps.to_string());
        if !matches!(self, Trained::PerLevel { .. }) {
            kv.set("tau", tau.to_string());
        }
        kv
    }
}

fn multiscale(kind: ModelKind, bank: ScaleBank) -> Model {
    if kind == ModelKind::Iid {
        Model::Iid(bank)
    } else {
        Model::Iad(bank)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub trained: Trained,
    /// Final objective, including the smoothness penalty in full mode.
    pub loss: f64,
    pub initial_loss: f64,
    /// Best objective after every evaluation (concatenated over levels for
    /// the per-level PM and EED modes).
    pub trace: Vec<f64>,
    /// Smoothness weight actually used (full mode only).
    pub epsilon: Option<f64>,
}

impl TrainReport {
    pub fn evaluations(&self) -> usize {
        self.trace.len()
    }

    /// CSV with columns `evaluation,loss`.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("evaluation,loss\n");
        for (i, l) in self.trace.iter().enumerate() {
            out.push_str(&format!("{},{l:?}\n", i + 1));
        }
        out
    }
}

/// Runs the optimiser for `config.mode`. All parameters are searched in
/// log space, so they stay positive.
pub fn train(corpus: &Corpus, config: &TrainConfig) -> Result<TrainReport> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(Error::invalid("empty corpus"));
    }
    match config.mode {
        TrainMode::Pm | TrainMode::Eed => train_per_level(corpus, config),
        TrainMode::Reduced => train_reduced(corpus, config),
        TrainMode::Full => train_full(corpus, config),
    }
}

fn spec(config: &TrainConfig, model: Model) -> Result<ModelSpec> {
    ModelSpec::new(model, config.steps, config.tau)
}

/// Loss for the optimiser: errors (such as a fixed time step violating the
/// bound) become `+inf`.
fn guarded(r: Result<f64>) -> f64 {
    r.unwrap_or(f64::INFINITY)
}

fn ln(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| x.ln()).collect()
}

fn train_per_level(corpus: &Corpus, config: &TrainConfig) -> Result<TrainReport> {
    let pm = config.mode == TrainMode::Pm;
    let n = if pm { 1 } else { 2 };
    let mut trace = Vec::new();
    let (mut loss, mut initial) = (0.0, 0.0);
    let mut fits = Vec::new();
    let levels = corpus.levels();
    for &s in &levels {
        let sub = corpus.at_level(s);
        let make = |x: &[f64]| -> (Model, TauPolicy) {
            let model = if pm {
                Model::Pm { lambda: x[0].exp() }
            } else {
                Model::Eed {
                    lambda: x[0].exp(),
                    sigma: x[1].exp(),
                }
            };
            let tau = match config.tau {
                TauPolicy::Auto { .. } => TauPolicy::Auto {
                    safety: x[n].exp().min(1.0),
                },
                fixed => fixed,
            };
            (model, tau)
        };
        let mut init = if pm { ln(&[0.5 * s]) } else { ln(&[0.25 * s, 1.0]) };
        // Half the configured factor, so the first simplex reaches both
        // shorter and longer diffusion times.
        if let TauPolicy::Auto { safety } = config.tau {
            init.push((0.5 * safety).ln());
        }
        let r = minimize(
            |x| {
                let (model, tau) = make(x);
                guarded(ModelSpec::new(model, config.steps, tau).and_then(|sp| mean_mse(sub.pairs(), &sp)))
            },
            &init,
            &config.optimizer,
        )?;
        if !r.loss.is_finite() {
            return Err(Error::NonFinite(format!("training loss at noise level {s}")));
        }
        loss += r.loss / levels.len() as f64;
        initial += r.trace[0] / levels.len() as f64;
        trace.extend_from_slice(&r.trace);
        let (model, tau) = make(&r.x);
        fits.push(LevelFit { stddev: s, model, tau });
    }
    Ok(TrainReport {
        trained: Trained::PerLevel {
            kind: if pm { ModelKind::Pm } else { ModelKind::Eed },
            levels: fits,
        },
        loss,
        initial_loss: initial,
        trace,
        epsilon: None,
    })
}

fn train_reduced(corpus: &Corpus, config: &TrainConfig) -> Result<TrainReport> {
    let make = |x: &[f64]| ReducedParams {
        alpha: x[0].exp(),
        beta: x[1].exp(),
        lambda0: x[2].exp(),
    };
    let objective = |x: &[f64]| {
        let p = make(x);
        guarded(corpus_loss(corpus, |s| {
            spec(config, Model::multiscale_reduced(config.model, &p, s, &config.scales)?)
        }))
    };
    let r = minimize(objective, &ln(&config.reduced_init.to_array()), &config.optimizer)?;
    if !r.loss.is_finite() {
        return Err(Error::NonFinite("training loss".into()));
    }
    Ok(TrainReport {
        trained: Trained::Reduced {
            kind: config.model,
            params: make(&r.x),
            scales: config.scales.clone(),
        },
        loss: r.loss,
        initial_loss: r.trace[0],
        trace: r.trace,
        epsilon: None,
    })
}

/// Full-mode objective: mean MSE plus `epsilon` times the smoothness penalty.
pub fn full_objective(corpus: &Corpus, kind: ModelKind, bank: &ScaleBank, steps: usize, tau: TauPolicy, epsilon: f64) -> Result<f64> {
    let spec = ModelSpec::new(multiscale(kind, bank.clone()), steps, tau)?;
    Ok(mean_mse(corpus.pairs(), &spec)? + epsilon * regulariser(bank))
}

fn train_full(corpus: &Corpus, config: &TrainConfig) -> Result<TrainReport> {
    let levels = corpus.levels();
    let [s] = levels[..] else {
        return Err(Error::invalid(format!(
            "full training needs a single noise level, corpus has {}",
            levels.len()
        )));
    };
    let init = match &config.full_init {
        Some(b) => b.clone(),
        None => bank_from_reduced(&config.reduced_init, s, &config.scales)?,
    };
    let n = init.len();
    let sigmas = init.sigmas().to_vec();
    let g1 = init.gammas()[0];
    if !(g1 > 0.0) || init.gammas().iter().any(|&g| g <= 0.0) {
        return Err(Error::invalid("full training needs positive initial weights"));
    }
    // gamma_1 is fixed: a global weight is interchangeable with the time step.
    let make = |x: &[f64]| -> Result<ScaleBank> {
        let mut gammas = vec![g1];
        gammas.extend(x[..n - 1].iter().map(|v| v.exp()));
        let lambdas = x[n - 1..].iter().map(|v| v.exp()).collect();
        ScaleBank::new(sigmas.clone(), gammas, lambdas)
    };
    let mut x0 = ln(&init.gammas()[1..]);
    x0.extend(ln(init.lambdas()));
    let epsilon = match config.epsilon {
        Some(e) => e,
        None => {
            let l0 = full_objective(corpus, config.model, &init, config.steps, config.tau, 0.0)?;
            1e-3 * l0 / (regulariser(&init) + 1e-12)
        }
    };
    let objective = |x: &[f64]| {
        guarded(make(x).and_then(|b| full_objective(corpus, config.model, &b, config.steps, config.tau, epsilon)))
    };
    let r = minimize(objective, &x0, &config.optimizer)?;
    if !r.loss.is_finite() {
        return Err(Error::NonFinite("training loss".into()));
    }
    Ok(TrainReport {
        trained: Trained::Full {
            kind: config.model,
            bank: make(&r.x)?,
            stddev: s,
        },
        loss: r.loss,
        initial_loss: r.trace[0],
        trace: r.trace,
        epsilon: Some(epsilon),
    })
}
