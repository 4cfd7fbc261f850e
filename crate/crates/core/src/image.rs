//! Grey-value images, Gaussian noise synthesis and quality metrics.
//!
//! Grey values use the `[0, 255]` convention but are never clamped: noise
//! and diffusion are free to leave the nominal range.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Peak grey value used by PSNR.
pub const PEAK: f64 = 255.0;

/// A row-major 2D field of finite grey values, at least 3x3.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl ImageGrid {
    /// Smallest admissible side length (the stencils need a 3x3 neighbourhood).
    pub const MIN_SIDE: usize = 3;

    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width < Self::MIN_SIDE || height < Self::MIN_SIDE {
            return Err(Error::InvalidImage(format!(
                "{width}x{height} is smaller than {0}x{0}",
                Self::MIN_SIDE
            )));
        }
        if data.len() != width * height {
            return Err(Error::InvalidImage(format!(
                "{} values for a {width}x{height} grid",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidImage(format!(
                "non-finite value at ({}, {})",
                i % width,
                i / width
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    /// Builds an image from `f(x, y)`, `x` being the column index.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    /// Wraps buffers produced by the library's own kernels; finiteness is
    /// checked by the callers that can fail (see `diffusion::evolve`).
    pub(crate) fn from_parts(width: usize, height: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * height);
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn same_shape(&self, other: &ImageGrid) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::DimensionMismatch {
                left_width: self.width,
                left_height: self.height,
                right_width: other.width,
                right_height: other.height,
            });
        }
        Ok(())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }

    pub fn norm_l2(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn norm_l1(&self) -> f64 {
        self.data.iter().map(|v| v.abs()).sum()
    }

    /// Euclidean inner product; panics on shape mismatch.
    pub fn dot(&self, other: &ImageGrid) -> f64 {
        assert_eq!(self.data.len(), other.data.len(), "shape mismatch in dot");
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> ImageGrid {
        let mut data = Vec::with_capacity(self.data.len());
        for x in 0..self.width {
            for y in 0..self.height {
                data.push(self.get(x, y));
            }
        }
        ImageGrid::from_parts(self.height, self.width, data)
    }

    pub fn flip_horizontal(&self) -> ImageGrid {
        let mut data = self.data.clone();
        for row in data.chunks_exact_mut(self.width) {
            row.reverse();
        }
        ImageGrid::from_parts(self.width, self.height, data)
    }

    pub fn flip_vertical(&self) -> ImageGrid {
        let data = self
            .data
            .chunks_exact(self.width)
            .rev()
            .flatten()
            .copied()
            .collect();
        ImageGrid::from_parts(self.width, self.height, data)
    }

    /// Counter-clockwise quarter turn (in display orientation, y down).
    pub fn rotate90(&self) -> ImageGrid {
        self.transpose().flip_vertical()
    }

    pub fn rotate180(&self) -> ImageGrid {
        let mut data = self.data.clone();
        data.reverse();
        ImageGrid::from_parts(self.width, self.height, data)
    }

    pub fn rotate270(&self) -> ImageGrid {
        self.transpose().flip_horizontal()
    }
}

/// Additive Gaussian noise with a deterministic seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub stddev: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(stddev: f64, seed: u64) -> Result<Self> {
        if !(stddev.is_finite() && stddev >= 0.0) {
            return Err(Error::invalid(format!("noise stddev must be >= 0, got {stddev}")));
        }
        Ok(Self { stddev, seed })
    }
}

/// Adds i.i.d. zero-mean Gaussian noise. The result is not clipped to the
/// grey-value range, so the noise statistics stay Gaussian.
pub fn add_noise(img: &ImageGrid, spec: NoiseSpec) -> Result<ImageGrid> {
    let spec = NoiseSpec::new(spec.stddev, spec.seed)?;
    if spec.stddev == 0.0 {
        return Ok(img.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let data = img
        .data
        .iter()
        .map(|&v| {
            let z: f64 = StandardNormal.sample(&mut rng);
            v + spec.stddev * z
        })
        .collect();
    Ok(ImageGrid::from_parts(img.width, img.height, data))
}

pub fn mse(a: &ImageGrid, b: &ImageGrid) -> Result<f64> {
    a.same_shape(b)?;
    let sum: f64 = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok(sum / a.data.len() as f64)
}

/// PSNR for the 255 peak. Identical images are an error rather than `inf`.
pub fn psnr(a: &ImageGrid, b: &ImageGrid) -> Result<f64> {
    psnr_from_mse(mse(a, b)?)
}

pub fn psnr_from_mse(mse: f64) -> Result<f64> {
    if mse == 0.0 {
        return Err(Error::IdenticalImages);
    }
    if !mse.is_finite() {
        return Err(Error::NonFinite(format!("mse = {mse}")));
    }
    Ok(10.0 * (PEAK * PEAK / mse).log10())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QualityReport {
    pub mse: f64,
    pub psnr: f64,
}

impl QualityReport {
    pub fn compare(a: &ImageGrid, b: &ImageGrid) -> Result<Self> {
        let mse = mse(a, b)?;
        Ok(Self {
            mse,
            psnr: psnr_from_mse(mse)?,
        })
    }
}
