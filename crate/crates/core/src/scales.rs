//! Discrete scale sampling and the reduced parameter functions
//! `gamma(sigma, s) = exp(-alpha sigma^2 / sqrt(s))` and
//! `lambda(sigma, s) = lambda0 s / (1 + beta sigma^2)`.

use crate::error::{Error, Result};
use crate::kv::KvFile;

pub const DEFAULT_SCALE_COUNT: usize = 8;
pub const DEFAULT_SIGMA_MIN: f64 = 0.25;
pub const DEFAULT_SIGMA_MAX: f64 = 7.0;

/// `n` scales in geometric progression from `sigma_min` to `sigma_max`.
pub fn sample_scales(n: usize, sigma_min: f64, sigma_max: f64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::invalid("scale count must be >= 1"));
    }
    if !(sigma_min > 0.0 && sigma_min.is_finite() && sigma_max >= sigma_min && sigma_max.is_finite()) {
        return Err(Error::invalid(format!(
            "invalid scale range [{sigma_min}, {sigma_max}]"
        )));
    }
    if n == 1 {
        return Ok(vec![sigma_min]);
    }
    if n > 1 && sigma_max == sigma_min {
        return Err(Error::invalid("several scales need sigma_max > sigma_min"));
    }
    let ratio = (sigma_max / sigma_min).powf(1.0 / (n - 1) as f64);
    let mut out: Vec<f64> = (0..n).map(|i| sigma_min * ratio.powf(i as f64)).collect();
    out[n - 1] = sigma_max;
    Ok(out)
}

pub fn default_scales() -> Vec<f64> {
    sample_scales(DEFAULT_SCALE_COUNT, DEFAULT_SIGMA_MIN, DEFAULT_SIGMA_MAX)
        .expect("default scale range is valid")
}

/// The three scalars that generate all per-scale weights and contrasts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReducedParams {
    pub alpha: f64,
    pub beta: f64,
    pub lambda0: f64,
}

impl ReducedParams {
    /// Values fitted jointly over noise levels 10..60 in the original study.
    pub const PUBLISHED: ReducedParams = ReducedParams {
        alpha: 1.64,
        beta: 2.46,
        lambda0: 1.47,
    };

    pub fn new(alpha: f64, beta: f64, lambda0: f64) -> Result<Self> {
        let p = Self { alpha, beta, lambda0 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("lambda0", self.lambda0)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be > 0, got {v}")));
            }
        }
        Ok(())
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.alpha, self.beta, self.lambda0]
    }
}

fn check_noise(s: f64) -> Result<()> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::invalid(format!("noise stddev must be > 0, got {s}")));
    }
    Ok(())
}

pub fn gamma_of(sigma: f64, s: f64, p: &ReducedParams) -> Result<f64> {
    check_noise(s)?;
    Ok((-p.alpha * sigma * sigma / s.sqrt()).exp())
}

pub fn lambda_of(sigma: f64, s: f64, p: &ReducedParams) -> Result<f64> {
    check_noise(s)?;
    Ok(p.lambda0 * s / (1.0 + p.beta * sigma * sigma))
}

/// Per-scale weights and contrast parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleBank {
    sigmas: Vec<f64>,
    gammas: Vec<f64>,
    lambdas: Vec<f64>,
}

impl ScaleBank {
    pub fn new(sigmas: Vec<f64>, gammas: Vec<f64>, lambdas: Vec<f64>) -> Result<Self> {
        let n = sigmas.len();
        if n == 0 {
            return Err(Error::invalid("scale bank needs at least one scale"));
        }
        if gammas.len() != n || lambdas.len() != n {
            return Err(Error::invalid(format!(
                "scale bank lengths differ: {} sigmas, {} gammas, {} lambdas",
                n,
                gammas.len(),
                lambdas.len()
            )));
        }
        if sigmas.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::invalid("scales must be finite and >= 0"));
        }
        if sigmas.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("scales must be strictly increasing"));
        }
        if gammas.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
            return Err(Error::invalid("weights must be finite and >= 0"));
        }
        if lambdas.iter().any(|l| !(*l > 0.0)) {
            return Err(Error::invalid("contrast parameters must be > 0"));
        }
        Ok(Self {
            sigmas,
            gammas,
            lambdas,
        })
    }

    pub fn len(&self) -> usize {
        self.sigmas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigmas.is_empty()
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    pub fn gammas(&self) -> &[f64] {
        &self.gammas
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn write_kv(&self, kv: &mut KvFile) {
        kv.set_list("sigmas", &self.sigmas);
        kv.set_list("gammas", &self.gammas);
        kv.set_list("lambdas", &self.lambdas);
    }
}

pub fn bank_from_reduced(p: &ReducedParams, s: f64, scales: &[f64]) -> Result<ScaleBank> {
    p.validate()?;
    let gammas = scales.iter().map(|&x| gamma_of(x, s, p)).collect::<Result<Vec<_>>>()?;
    let lambdas = scales.iter().map(|&x| lambda_of(x, s, p)).collect::<Result<Vec<_>>>()?;
    ScaleBank::new(scales.to_vec(), gammas, lambdas)
}
