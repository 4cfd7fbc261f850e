//! The `iad` command-line front end.
//!
//! Every subcommand accepts `--config FILE`, a `key = value` file whose keys
//! are flag names (`-` may be written as `_`). Explicit flags win over the
//! file. Errors print one line `error: <class>: <reason>` on stderr, where
//! class is `usage`, `data` or `numerical`, and exit with 1, 2 or 3.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{CommandFactory, Parser, Subcommand};

use crate::bench::{benchmark, BenchModel};
use crate::diffusion::{evolve, Model, ModelKind, TauPolicy};
use crate::error::{Error, ErrorClass, Result};
use crate::image::{add_noise, NoiseSpec, QualityReport};
use crate::io::{read_image, write_image};
use crate::kv::{fmt_f64, KvFile};
use crate::optimize::OptimizeConfig;
use crate::params::{default_params, model_from_kv, read_params, reduced_from_kv, spec_from_kv};
use crate::scales::{sample_scales, DEFAULT_SCALE_COUNT, DEFAULT_SIGMA_MAX, DEFAULT_SIGMA_MIN};
use crate::training::{train, Corpus, TrainConfig, TrainMode};

#[derive(Debug, Parser)]
#[command(name = "iad", version, about = "Nonlinear diffusion denoising with PM, EED, IID and IAD")]
#[command(args_override_self = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Add Gaussian noise to an image.
    Noise {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        stddev: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Denoise an image.
    Denoise {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// pm, eed, iid or iad; overrides the model in --params.
        #[arg(long)]
        model: Option<String>,
        /// Parameter file; inline flags override its values.
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        lambda0: Option<f64>,
        /// Scale sampling `n,sigma_min,sigma_max`.
        #[arg(long)]
        scales: Option<String>,
        /// Noise level used to evaluate reduced parameters.
        #[arg(long)]
        stddev: Option<f64>,
        #[arg(long)]
        steps: Option<usize>,
        /// `auto`, `auto:<safety>` or a fixed step.
        #[arg(long)]
        tau: Option<String>,
    },
    /// Print MSE and PSNR between two images.
    Metrics {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
    },
    /// Fit model parameters to a corpus.
    Train {
        #[arg(long)]
        mode: String,
        /// Manifest with `clean noisy stddev` lines.
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// iid or iad (reduced and full modes).
        #[arg(long, default_value = "iad")]
        model: String,
        #[arg(long, default_value_t = 200)]
        budget: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        steps: usize,
        #[arg(long, default_value = "auto")]
        tau: String,
        #[arg(long)]
        scales: Option<String>,
        /// Smoothness weight (full mode).
        #[arg(long)]
        epsilon: Option<f64>,
        /// Starting parameters: reduced `alpha`, `beta`, `lambda0`, or an
        /// explicit bank for full mode.
        #[arg(long)]
        init: Option<PathBuf>,
        /// CSV of the best loss after each evaluation.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Compare models by mean PSNR over a corpus.
    Bench {
        #[arg(long)]
        corpus: PathBuf,
        /// Comma-separated `name` or `name=paramfile` entries.
        #[arg(long)]
        models: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write per-scale weights and contrasts as CSV.
    Curves {
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        stddev: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Runs the CLI and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match expand_config(args).and_then(|a| Cli::try_parse_from(a).map_err(CliError::Clap)) {
        Ok(cli) => cli,
        Err(CliError::Clap(e)) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return 0;
            }
            if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand {
                let _ = e.print();
                return 1;
            }
            report("usage", &e.to_string());
            return 1;
        }
        Err(CliError::Lib(e)) => return fail(&e),
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => fail(&e),
    }
}

enum CliError {
    Clap(clap::Error),
    Lib(Error),
}

fn report(class: &str, message: &str) {
    let first = message
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty())
        .unwrap_or("unknown error");
    let first = first.strip_prefix("error: ").unwrap_or(first);
    let _ = writeln!(std::io::stderr(), "error: {class}: {first}");
}

fn fail(e: &Error) -> i32 {
    let (class, code) = exit_code(e);
    report(class, &e.to_string());
    code
}

pub fn exit_code(e: &Error) -> (&'static str, i32) {
    match e.class() {
        ErrorClass::Usage => ("usage", 1),
        ErrorClass::Data => ("data", 2),
        ErrorClass::Numerical => ("numerical", 3),
    }
}

/// Replaces `--config FILE` by the flags it lists, placed before the
/// explicit flags so those take precedence.
fn expand_config(args: Vec<OsString>) -> std::result::Result<Vec<OsString>, CliError> {
    let mut rest = Vec::with_capacity(args.len());
    let mut config = None;
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            let Some(path) = it.next() else {
                return Err(CliError::Lib(Error::invalid("--config needs a file")));
            };
            config = Some(PathBuf::from(path));
        } else if let Some(path) = s.strip_prefix("--config=") {
            config = Some(PathBuf::from(path));
        } else {
            rest.push(a);
        }
    }
    let Some(path) = config else {
        return Ok(rest);
    };
    let kv = KvFile::read(&path).map_err(CliError::Lib)?;
    // The subcommand is the first argument after the program name.
    let Some(sub) = rest.get(1).map(|s| s.to_string_lossy().into_owned()) else {
        return Ok(rest);
    };
    let cmd = Cli::command();
    let Some(sc) = cmd.find_subcommand(&sub) else {
        return Ok(rest);
    };
    let known: Vec<String> = sc
        .get_arguments()
        .filter_map(|a| a.get_long().map(str::to_owned))
        .collect();
    let mut injected = Vec::new();
    for (key, value) in kv.iter() {
        let flag = key.replace('_', "-");
        if !known.contains(&flag) {
            return Err(CliError::Lib(Error::invalid(format!(
                "{}: unknown key {key:?} for {sub}",
                path.display()
            ))));
        }
        injected.push(OsString::from(format!("--{flag}")));
        injected.push(OsString::from(value));
    }
    rest.splice(2..2, injected);
    Ok(rest)
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Noise {
            input,
            out,
            stddev,
            seed,
        } => {
            let img = read_image(&input)?;
            write_image(&add_noise(&img, NoiseSpec::new(stddev, seed)?)?, &out)
        }
        Command::Denoise {
            input,
            out,
            model,
            params,
            lambda,
            sigma,
            alpha,
            beta,
            lambda0,
            scales,
            stddev,
            steps,
            tau,
        } => {
            let mut kv = match &params {
                Some(p) => read_params(p)?,
                None => KvFile::new("flags"),
            };
            if let Some(m) = model {
                let kind: ModelKind = m.parse()?;
                kv.set("model", kind.name());
            }
            for (key, v) in [("lambda", lambda), ("sigma", sigma), ("alpha", alpha), ("beta", beta), ("lambda0", lambda0)] {
                if let Some(v) = v {
                    kv.set_f64(key, v);
                }
            }
            if let Some(text) = scales {
                set_scales(&mut kv, &text)?;
            }
            // Multiscale models without any weights fall back to the default
            // reduced parameters.
            let kind = crate::params::kind_from_kv(&kv)?;
            let weights = ["alpha", "beta", "lambda0", "gammas", "lambdas"];
            if kind.is_multiscale() && !kv.keys().any(|k| weights.contains(&k.split('@').next().unwrap_or(k))) {
                for (k, v) in default_params(kind).iter() {
                    if k != "model" {
                        kv.set(k, v);
                    }
                }
            }
            if let Some(k) = steps {
                kv.set("steps", k.to_string());
            }
            if let Some(t) = tau {
                kv.set("tau", t.parse::<TauPolicy>()?.to_string());
            }
            let spec = spec_from_kv(&kv, stddev)?;
            let img = read_image(&input)?;
            let result = evolve(&img, &spec)?;
            write_image(&result.image, &out)
        }
        Command::Metrics { a, b } => {
            let q = QualityReport::compare(&read_image(&a)?, &read_image(&b)?)?;
            println!("mse={} psnr={}", fmt_f64(q.mse), fmt_f64(q.psnr));
            Ok(())
        }
        Command::Train {
            mode,
            corpus,
            out,
            model,
            budget,
            seed,
            steps,
            tau,
            scales,
            epsilon,
            init,
            trace,
        } => {
            let mode: TrainMode = mode.parse()?;
            let mut config = TrainConfig::new(mode);
            config.model = model.parse()?;
            config.steps = steps;
            config.tau = tau.parse()?;
            config.epsilon = epsilon;
            config.optimizer = OptimizeConfig {
                budget,
                seed,
                ..OptimizeConfig::default()
            };
            if let Some(text) = scales {
                config.scales = parse_scales(&text)?;
            }
            let corpus = Corpus::from_manifest(&corpus)?;
            if let Some(path) = init {
                apply_init(&mut config, &read_params(&path)?, &corpus)?;
            }
            let report = train(&corpus, &config)?;
            report.trained.to_kv(config.steps, config.tau).write(&out)?;
            if let Some(path) = trace {
                std::fs::write(path, report.trace_csv())?;
            }
            println!(
                "loss={} initial={} evaluations={}",
                fmt_f64(report.loss),
                fmt_f64(report.initial_loss),
                report.evaluations()
            );
            Ok(())
        }
        Command::Bench { corpus, models, out } => {
            let corpus = Corpus::from_manifest(&corpus)?;
            let models = models
                .split(',')
                .filter(|m| !m.trim().is_empty())
                .map(BenchModel::parse)
                .collect::<Result<Vec<_>>>()?;
            let table = benchmark(&corpus, &models)?;
            if let Some(path) = out {
                std::fs::write(path, table.to_csv())?;
            }
            print!("{}", table.to_text());
            Ok(())
        }
        Command::Curves { params, stddev, out } => {
            let kv = read_params(&params)?;
            let csv = curves_csv(&model_from_kv(&kv, stddev)?)?;
            match out {
                Some(path) => std::fs::write(path, csv)?,
                None => print!("{csv}"),
            }
            Ok(())
        }
    }
}

/// Parses `n,sigma_min,sigma_max`.
pub fn parse_scales(text: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    let bad = || Error::invalid(format!("scales must be `n,sigma_min,sigma_max`, got {text:?}"));
    let [n, lo, hi] = parts[..] else {
        return Err(bad());
    };
    let n = if n.is_empty() { DEFAULT_SCALE_COUNT } else { n.parse().map_err(|_| bad())? };
    let lo = if lo.is_empty() { DEFAULT_SIGMA_MIN } else { lo.parse().map_err(|_| bad())? };
    let hi = if hi.is_empty() { DEFAULT_SIGMA_MAX } else { hi.parse().map_err(|_| bad())? };
    sample_scales(n, lo, hi)
}

fn set_scales(kv: &mut KvFile, text: &str) -> Result<()> {
    let scales = parse_scales(text)?;
    for key in ["n", "sigma_min", "sigma_max", "sigmas"] {
        kv.remove(key);
    }
    kv.set_list("sigmas", &scales);
    Ok(())
}

fn apply_init(config: &mut TrainConfig, kv: &KvFile, corpus: &Corpus) -> Result<()> {
    let level = match corpus.levels()[..] {
        [s] => Some(s),
        _ => None,
    };
    if let Some(p) = reduced_from_kv(kv, level)? {
        config.reduced_init = p;
    } else if config.mode != TrainMode::Full {
        return Err(Error::invalid("--init needs alpha, beta and lambda0 for this mode"));
    }
    if config.mode == TrainMode::Full {
        if let Model::Iid(b) | Model::Iad(b) = model_from_kv(kv, level)? {
            config.scales = b.sigmas().to_vec();
            config.full_init = Some(b);
        }
    }
    Ok(())
}

/// `sigma,gamma,lambda` rows for a multiscale model.
pub fn curves_csv(model: &Model) -> Result<String> {
    let (Model::Iid(bank) | Model::Iad(bank)) = model else {
        return Err(Error::invalid(format!("{} has no per-scale parameters", model.kind())));
    };
    let mut out = String::from("sigma,gamma,lambda\n");
    for i in 0..bank.len() {
        out.push_str(&format!(
            "{},{},{}\n",
            fmt_f64(bank.sigmas()[i]),
            fmt_f64(bank.gammas()[i]),
            fmt_f64(bank.lambdas()[i])
        ));
    }
    Ok(out)
}
