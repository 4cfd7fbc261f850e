//! Model parameter files.
//!
//! A parameter file is a [`KvFile`] naming the model and its parameters:
//!
//! ```text
//! model = iad
//! alpha = 1.64
//! beta = 2.46
//! lambda0 = 1.47
//! n = 8
//! sigma_min = 0.25
//! sigma_max = 7
//! ```
//!
//! PM uses `lambda`, EED `lambda` and `sigma`. IID and IAD take either the
//! reduced parameters `alpha`, `beta`, `lambda0` (evaluated at the noise level
//! of the image) or explicit `sigmas`, `gammas`, `lambdas` lists. Scales come
//! from `sigmas` or from `n`, `sigma_min`, `sigma_max`. Any value may be
//! given per noise level as `key@<s>`. `steps` and `tau` are optional.

use std::path::Path;

use crate::diffusion::{Model, ModelKind, ModelSpec, TauPolicy};
use crate::error::{Error, Result};
use crate::kv::KvFile;
use crate::scales::{sample_scales, ReducedParams, ScaleBank, DEFAULT_SCALE_COUNT, DEFAULT_SIGMA_MAX, DEFAULT_SIGMA_MIN};

pub const DEFAULT_STEPS: usize = 10;

pub const PARAM_KEYS: &[&str] = &[
    "model", "lambda", "sigma", "alpha", "beta", "lambda0", "n", "sigma_min", "sigma_max", "sigmas", "gammas",
    "lambdas", "steps", "tau", "stddev",
];

pub fn read_params(path: impl AsRef<Path>) -> Result<KvFile> {
    let kv = KvFile::read(path)?;
    kv.check_keys(PARAM_KEYS)?;
    Ok(kv)
}

fn missing(kv: &KvFile, key: &str, level: Option<f64>) -> Error {
    let at = level.map_or(String::new(), |s| format!(" for noise level {s}"));
    Error::invalid(format!("parameter {key:?} missing{at} ({kv_origin})", kv_origin = kv_origin(kv)))
}

fn kv_origin(kv: &KvFile) -> String {
    kv.get_str("model").map_or_else(|| "no model".into(), |m| format!("model {m}"))
}

fn require(kv: &KvFile, key: &str, level: Option<f64>) -> Result<f64> {
    kv.get_f64_at(key, level)?.ok_or_else(|| missing(kv, key, level))
}

pub fn kind_from_kv(kv: &KvFile) -> Result<ModelKind> {
    kv.get_str("model")
        .ok_or_else(|| Error::invalid("parameter \"model\" missing"))?
        .parse()
}

/// Scales from `sigmas` or `n`, `sigma_min`, `sigma_max` (defaults apply).
pub fn scales_from_kv(kv: &KvFile, level: Option<f64>) -> Result<Vec<f64>> {
    if let Some(s) = kv.get_list_at("sigmas", level)? {
        return Ok(s);
    }
    let n = kv.get_usize("n")?.unwrap_or(DEFAULT_SCALE_COUNT);
    let lo = kv.get_f64_at("sigma_min", level)?.unwrap_or(DEFAULT_SIGMA_MIN);
    let hi = kv.get_f64_at("sigma_max", level)?.unwrap_or(DEFAULT_SIGMA_MAX);
    sample_scales(n, lo, hi)
}

pub fn reduced_from_kv(kv: &KvFile, level: Option<f64>) -> Result<Option<ReducedParams>> {
    let a = kv.get_f64_at("alpha", level)?;
    let b = kv.get_f64_at("beta", level)?;
    let l = kv.get_f64_at("lambda0", level)?;
    match (a, b, l) {
        (None, None, None) => Ok(None),
        (Some(a), Some(b), Some(l)) => ReducedParams::new(a, b, l).map(Some),
        _ => Err(Error::invalid("reduced parameters need all of alpha, beta and lambda0")),
    }
}

/// The model described by `kv` at noise level `level`.
///
/// The level is only needed for reduced IID/IAD parameters and to select
/// `key@<s>` overrides; `stddev` in the file serves as a fallback.
pub fn model_from_kv(kv: &KvFile, level: Option<f64>) -> Result<Model> {
    let level = match level {
        Some(s) => Some(s),
        None => kv.get_f64("stddev")?,
    };
    let kind = kind_from_kv(kv)?;
    let model = match kind {
        ModelKind::Pm => Model::Pm {
            lambda: require(kv, "lambda", level)?,
        },
        ModelKind::Eed => Model::Eed {
            lambda: require(kv, "lambda", level)?,
            sigma: require(kv, "sigma", level)?,
        },
        ModelKind::Iid | ModelKind::Iad => {
            let bank = bank_from_kv(kv, level)?;
            if kind == ModelKind::Iid {
                Model::Iid(bank)
            } else {
                Model::Iad(bank)
            }
        }
    };
    model.validate()?;
    Ok(model)
}

fn bank_from_kv(kv: &KvFile, level: Option<f64>) -> Result<ScaleBank> {
    let scales = scales_from_kv(kv, level)?;
    if let Some(p) = reduced_from_kv(kv, level)? {
        let s = level.ok_or_else(|| {
            Error::invalid("reduced parameters need the noise level (pass --stddev or set stddev)")
        })?;
        return crate::scales::bank_from_reduced(&p, s, &scales);
    }
    let gammas = kv.get_list_at("gammas", level)?.ok_or_else(|| missing(kv, "gammas", level))?;
    let lambdas = kv.get_list_at("lambdas", level)?.ok_or_else(|| missing(kv, "lambdas", level))?;
    ScaleBank::new(scales, gammas, lambdas)
}

/// Full evolution settings: the model plus `steps` and `tau` (defaults
/// 10 and automatic).
pub fn spec_from_kv(kv: &KvFile, level: Option<f64>) -> Result<ModelSpec> {
    let model = model_from_kv(kv, level)?;
    let level = match level {
        Some(s) => Some(s),
        None => kv.get_f64("stddev")?,
    };
    let steps = kv.get_usize("steps")?.unwrap_or(DEFAULT_STEPS);
    let tau = match kv.get_str_at("tau", level) {
        Some(t) => t.parse::<TauPolicy>()?,
        None => TauPolicy::default(),
    };
    ModelSpec::new(model, steps, tau)
}

/// Parameters in the file format for a model at a fixed level.
pub fn model_to_kv(model: &Model) -> KvFile {
    let mut kv = KvFile::new("generated");
    kv.set("model", model.kind().name());
    match model {
        Model::Pm { lambda } => kv.set_f64("lambda", *lambda),
        Model::Eed { lambda, sigma } => {
            kv.set_f64("lambda", *lambda);
            kv.set_f64("sigma", *sigma);
        }
        Model::Iid(bank) | Model::Iad(bank) => bank.write_kv(&mut kv),
    }
    kv
}

/// Reduced parameters retrained for grey values in [0, 255] with the
/// default scale range.
pub const RETRAINED: ReducedParams = ReducedParams {
    alpha: 0.28,
    beta: 2.35,
    lambda0: 0.77,
};

/// Default parameters used when a benchmark names a model without a file.
/// The PM and EED contrasts are tuned for s = 50; the reduced IID and IAD
/// parameters adapt to the noise level.
pub fn default_params(kind: ModelKind) -> KvFile {
    let mut kv = KvFile::new(format!("default {kind}"));
    kv.set("model", kind.name());
    match kind {
        ModelKind::Pm => kv.set_f64("lambda", 30.0),
        ModelKind::Eed => {
            kv.set_f64("lambda", 15.0);
            kv.set_f64("sigma", 0.75);
        }
        ModelKind::Iid | ModelKind::Iad => {
            let p = RETRAINED;
            kv.set_f64("alpha", p.alpha);
            kv.set_f64("beta", p.beta);
            kv.set_f64("lambda0", p.lambda0);
        }
    }
    kv
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scales::{bank_from_reduced, default_scales};

    fn parse(text: &str) -> KvFile {
        let kv = KvFile::parse(text, "test").unwrap();
        kv.check_keys(PARAM_KEYS).unwrap();
        kv
    }

    #[test]
    fn scalar_models() {
        let kv = parse("model = pm\nlambda = 3\nlambda@50 = 20\n");
        assert_eq!(model_from_kv(&kv, None).unwrap(), Model::Pm { lambda: 3.0 });
        assert_eq!(model_from_kv(&kv, Some(50.0)).unwrap(), Model::Pm { lambda: 20.0 });
        let kv = parse("model = eed\nlambda = 3\n");
        assert!(model_from_kv(&kv, None).is_err());
        let kv = parse("model = eed\nlambda = 3\nsigma = 1.5\nsteps = 4\ntau = 0.1\n");
        let spec = spec_from_kv(&kv, None).unwrap();
        assert_eq!(spec.model, Model::Eed { lambda: 3.0, sigma: 1.5 });
        assert_eq!(spec.steps, 4);
        assert_eq!(spec.tau, TauPolicy::Fixed(0.1));
    }

    #[test]
    fn reduced_models_need_a_level() {
        let kv = parse("model = iad\nalpha = 1.64\nbeta = 2.46\nlambda0 = 1.47\n");
        assert!(model_from_kv(&kv, None).is_err());
        let m = model_from_kv(&kv, Some(30.0)).unwrap();
        let bank = bank_from_reduced(&ReducedParams::PUBLISHED, 30.0, &default_scales()).unwrap();
        assert_eq!(m, Model::Iad(bank));
        let kv = parse("model = iid\nalpha = 1\nbeta = 1\n");
        assert!(model_from_kv(&kv, Some(30.0)).is_err());
    }

    #[test]
    fn explicit_banks_round_trip() {
        let bank = ScaleBank::new(vec![0.5, 1.0, 2.0], vec![1.0, 0.5, 0.1], vec![9.0, 5.0, 2.0]).unwrap();
        let model = Model::Iid(bank);
        let kv = KvFile::parse(&model_to_kv(&model).to_string(), "x").unwrap();
        assert_eq!(model_from_kv(&kv, None).unwrap(), model);
        let kv = parse("model = iad\nn = 3\nsigma_min = 1\nsigma_max = 4\ngammas = 1,1,1\nlambdas = 1,1,1\n");
        let Model::Iad(b) = model_from_kv(&kv, None).unwrap() else { panic!() };
        assert_eq!(b.sigmas(), &[1.0, 2.0, 4.0]);
    }

    #[test]
    fn defaults_are_complete() {
        for kind in ModelKind::ALL {
            let kv = default_params(kind);
            kv.check_keys(PARAM_KEYS).unwrap();
            assert_eq!(model_from_kv(&kv, Some(25.0)).unwrap().kind(), kind);
        }
    }
}
