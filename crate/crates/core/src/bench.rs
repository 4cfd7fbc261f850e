//! Mean PSNR of several models over a corpus, per noise level.

use rayon::prelude::*;

use crate::diffusion::{evolve, ModelSpec};
use crate::error::{Error, Result};
use crate::image::psnr;
use crate::kv::{fmt_level, KvFile};
use crate::params::{default_params, read_params, spec_from_kv};
use crate::training::Corpus;

/// A named parameter file; the model is resolved per noise level.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchModel {
    pub label: String,
    pub params: KvFile,
}

impl BenchModel {
    pub fn new(label: impl Into<String>, params: KvFile) -> Self {
        Self {
            label: label.into(),
            params,
        }
    }

    /// Parses `name` or `name=paramfile`. A bare model name uses the
    /// default parameters of that model.
    pub fn parse(arg: &str) -> Result<Self> {
        match arg.split_once('=') {
            Some((label, path)) => Ok(Self::new(label.trim(), read_params(path.trim())?)),
            None => {
                let kind = arg.parse()?;
                Ok(Self::new(arg.trim(), default_params(kind)))
            }
        }
    }

    pub fn spec_at(&self, s: f64) -> Result<ModelSpec> {
        spec_from_kv(&self.params, Some(s))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchTable {
    pub levels: Vec<f64>,
    pub labels: Vec<String>,
    /// `psnr[m][k]`: mean PSNR of model `m` at level `levels[k]`.
    pub psnr: Vec<Vec<f64>>,
}

impl BenchTable {
    pub fn get(&self, label: &str, s: f64) -> Option<f64> {
        let m = self.labels.iter().position(|l| l == label)?;
        let k = self.levels.iter().position(|&l| l == s)?;
        Some(self.psnr[m][k])
    }

    /// One row per noise level, one column per model.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("stddev");
        for l in &self.labels {
            out.push(',');
            out.push_str(l);
        }
        out.push('\n');
        for (k, &s) in self.levels.iter().enumerate() {
            out.push_str(&fmt_level(s));
            for row in &self.psnr {
                out.push_str(&format!(",{:.4}", row[k]));
            }
            out.push('\n');
        }
        out
    }

    pub fn to_text(&self) -> String {
        let width = self.labels.iter().map(|l| l.len()).max().unwrap_or(0).max(8);
        let mut out = format!("{:>6}", "s");
        for l in &self.labels {
            out.push_str(&format!("  {l:>width$}"));
        }
        out.push('\n');
        for (k, &s) in self.levels.iter().enumerate() {
            out.push_str(&format!("{:>6}", fmt_level(s)));
            for row in &self.psnr {
                out.push_str(&format!("  {:>width$.2}", row[k]));
            }
            out.push('\n');
        }
        out
    }
}

/// Evaluates every model at every noise level of the corpus. Images are
/// processed concurrently; averages are taken in corpus order.
pub fn benchmark(corpus: &Corpus, models: &[BenchModel]) -> Result<BenchTable> {
    if corpus.is_empty() {
        return Err(Error::invalid("empty corpus"));
    }
    if models.is_empty() {
        return Err(Error::invalid("no models to compare"));
    }
    let levels = corpus.levels();
    let mut table = Vec::with_capacity(models.len());
    for m in models {
        let mut row = Vec::with_capacity(levels.len());
        for &s in &levels {
            let spec = m.spec_at(s)?;
            let sub = corpus.at_level(s);
            let values: Vec<Result<f64>> = sub
                .pairs()
                .par_iter()
                .map(|p| evolve(&p.noisy, &spec).and_then(|e| psnr(&e.image, &p.clean)))
                .collect();
            let mut total = 0.0;
            for v in values {
                total += v?;
            }
            row.push(total / sub.len() as f64);
        }
        table.push(row);
    }
    Ok(BenchTable {
        levels,
        labels: models.iter().map(|m| m.label.clone()).collect(),
        psnr: table,
    })
}
