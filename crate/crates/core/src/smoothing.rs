//! Sampled Gaussian convolution with half-sample symmetric boundaries.
//!
//! With the `u[-1-j] = u[j]` extension the 2D convolution matrix is
//! symmetric and has unit column sums, so it is self-adjoint and preserves
//! the grey-value sum. The multiscale step relies on both properties.

use crate::error::{Error, Result};
use crate::image::ImageGrid;

/// Truncation radius in units of sigma.
pub const TRUNCATION: f64 = 4.0;

/// A normalised, symmetric 1D Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianKernel {
    sigma: f64,
    radius: usize,
    /// Taps for offsets `-radius..=radius`.
    weights: Vec<f64>,
}

impl GaussianKernel {
    pub fn new(sigma: f64) -> Result<Self> {
        build_kernel(sigma)
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn taps(&self) -> &[f64] {
        &self.weights
    }

    /// Tap for offset `k` (zero outside the support).
    pub fn tap(&self, k: isize) -> f64 {
        let i = k + self.radius as isize;
        if i < 0 || i as usize >= self.weights.len() {
            0.0
        } else {
            self.weights[i as usize]
        }
    }

    pub fn is_identity(&self) -> bool {
        self.radius == 0
    }

    /// Discrete-time Fourier transform `sum_k w_k cos(k omega)` (real, even).
    pub fn frequency_response(&self, omega: f64) -> f64 {
        let r = self.radius;
        let mut acc = self.weights[r];
        for k in 1..=r {
            acc += 2.0 * self.weights[r + k] * (k as f64 * omega).cos();
        }
        acc
    }
}

pub fn build_kernel(sigma: f64) -> Result<GaussianKernel> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::invalid(format!("kernel sigma must be >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(GaussianKernel {
            sigma,
            radius: 0,
            weights: vec![1.0],
        });
    }
    let radius = (TRUNCATION * sigma).ceil() as usize;
    let denom = 2.0 * sigma * sigma;
    let half: Vec<f64> = (0..=radius).map(|k| (-((k * k) as f64) / denom).exp()).collect();
    let total = half[0] + 2.0 * half[1..].iter().sum::<f64>();
    let mut weights = Vec::with_capacity(2 * radius + 1);
    weights.extend(half.iter().rev().map(|w| w / total));
    weights.extend(half[1..].iter().map(|w| w / total));
    Ok(GaussianKernel {
        sigma,
        radius,
        weights,
    })
}

/// Half-sample symmetric reflection of an arbitrary index into `0..n`.
#[inline]
pub(crate) fn reflect(i: isize, n: usize) -> usize {
    let period = 2 * n as isize;
    let m = i.rem_euclid(period) as usize;
    if m < n {
        m
    } else {
        2 * n - 1 - m
    }
}

pub fn convolve(img: &ImageGrid, kernel: &GaussianKernel) -> ImageGrid {
    let mut out = vec![0.0; img.len()];
    let mut scratch = Vec::new();
    convolve_into(img.data(), img.width(), img.height(), kernel, &mut out, &mut scratch);
    ImageGrid::from_parts(img.width(), img.height(), out)
}

/// Separable convolution (rows, then columns) of a `width x height` buffer.
pub(crate) fn convolve_into(
    src: &[f64],
    width: usize,
    height: usize,
    kernel: &GaussianKernel,
    dst: &mut [f64],
    scratch: &mut Vec<f64>,
) {
    debug_assert_eq!(src.len(), width * height);
    debug_assert_eq!(dst.len(), width * height);
    if kernel.is_identity() {
        dst.copy_from_slice(src);
        return;
    }
    let r = kernel.radius;
    let centre = kernel.weights[r];
    let side = &kernel.weights[r + 1..];

    // Horizontal pass into `scratch`.
    scratch.resize(width * height, 0.0);
    let mut ext = vec![0.0; width + 2 * r];
    for (row, out) in src.chunks_exact(width).zip(scratch.chunks_exact_mut(width)) {
        for (j, e) in ext.iter_mut().enumerate() {
            *e = row[reflect(j as isize - r as isize, width)];
        }
        for (x, o) in out.iter_mut().enumerate() {
            let c = x + r;
            let mut acc = centre * ext[c];
            for (k, &w) in side.iter().enumerate() {
                acc += w * (ext[c - k - 1] + ext[c + k + 1]);
            }
            *o = acc;
        }
    }

    // Vertical pass, accumulating whole rows.
    for y in 0..height {
        let out = &mut dst[y * width..(y + 1) * width];
        let mid = &scratch[y * width..(y + 1) * width];
        for (o, &m) in out.iter_mut().zip(mid) {
            *o = centre * m;
        }
        for (k, &w) in side.iter().enumerate() {
            let d = k as isize + 1;
            let up = reflect(y as isize - d, height);
            let down = reflect(y as isize + d, height);
            let a = &scratch[up * width..(up + 1) * width];
            let b = &scratch[down * width..(down + 1) * width];
            for ((o, &p), &q) in out.iter_mut().zip(a).zip(b) {
                *o += w * (p + q);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lcg_image(w: usize, h: usize, seed: u64) -> ImageGrid {
        let mut s = seed;
        ImageGrid::from_fn(w, h, |_, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64 * 255.0
        })
        .unwrap()
    }

    /// Brute-force 2D convolution with an explicit mirrored lookup.
    fn convolve_direct(img: &ImageGrid, k: &GaussianKernel) -> ImageGrid {
        let r = k.radius() as isize;
        ImageGrid::from_fn(img.width(), img.height(), |x, y| {
            let mut acc = 0.0;
            for dy in -r..=r {
                for dx in -r..=r {
                    let xx = reflect(x as isize + dx, img.width());
                    let yy = reflect(y as isize + dy, img.height());
                    acc += k.tap(dx) * k.tap(dy) * img.get(xx, yy);
                }
            }
            acc
        })
        .unwrap()
    }

    #[test]
    fn kernel_examples() {
        let k0 = build_kernel(0.0).unwrap();
        assert_eq!(k0.taps(), &[1.0]);
        let k1 = build_kernel(1.0).unwrap();
        assert_eq!(k1.radius(), 4);
        let expected = 1.0
            / (1.0 + 2.0 * ((-0.5f64).exp() + (-2.0f64).exp() + (-4.5f64).exp() + (-8.0f64).exp()));
        assert!((k1.tap(0) - expected).abs() < 1e-15);
        assert!((k1.tap(0) - 0.398943).abs() < 1e-6);
        assert!(build_kernel(-0.1).is_err());
        assert!(build_kernel(f64::NAN).is_err());
        assert_eq!(build_kernel(2.3).unwrap().radius(), 10);
    }

    #[test]
    fn kernel_sums_to_one_and_is_symmetric() {
        for &s in &[0.1, 0.5, 0.7289, 1.0, 2.5, 7.0, 13.3] {
            let k = build_kernel(s).unwrap();
            assert!((k.taps().iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let t = k.taps();
            assert!(t.iter().zip(t.iter().rev()).all(|(a, b)| a == b));
            assert!((k.frequency_response(0.0) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn reflect_indices() {
        let n = 4;
        let got: Vec<usize> = (-6..10).map(|i| reflect(i, n)).collect();
        assert_eq!(got, vec![2, 3, 3, 2, 1, 0, 0, 1, 2, 3, 3, 2, 1, 0, 0, 1]);
    }

    #[test]
    fn constant_image_unchanged() {
        let img = ImageGrid::filled(9, 7, 42.5).unwrap();
        let out = convolve(&img, &build_kernel(2.0).unwrap());
        assert!(out.data().iter().all(|v| (v - 42.5).abs() < 1e-12));
    }

    #[test]
    fn impulse_gives_product_of_taps() {
        let n = 41;
        let img = ImageGrid::from_fn(n, n, |x, y| if x == 20 && y == 20 { 1.0 } else { 0.0 }).unwrap();
        let k = build_kernel(1.5).unwrap();
        let out = convolve(&img, &k);
        for y in 0..n {
            for x in 0..n {
                let expected = k.tap(x as isize - 20) * k.tap(y as isize - 20);
                assert!((out.get(x, y) - expected).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn matches_direct_convolution_with_wide_kernel() {
        // radius exceeds the image size, exercising repeated reflection
        let img = lcg_image(6, 5, 1);
        for &s in &[0.7, 3.0] {
            let k = build_kernel(s).unwrap();
            let fast = convolve(&img, &k);
            let slow = convolve_direct(&img, &k);
            for (a, b) in fast.data().iter().zip(slow.data()) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn mean_preserved_and_adjoint() {
        let a = lcg_image(37, 23, 2);
        let b = lcg_image(37, 23, 3);
        for &s in &[0.5, 1.7, 6.0, 20.0] {
            let k = build_kernel(s).unwrap();
            let ka = convolve(&a, &k);
            assert!((ka.mean() - a.mean()).abs() <= 1e-10 * a.mean().abs());
            let lhs = ka.dot(&b);
            let rhs = a.dot(&convolve(&b, &k));
            assert!((lhs - rhs).abs() <= 1e-8 * lhs.abs(), "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn approximate_semigroup_on_smooth_image() {
        let img = ImageGrid::from_fn(96, 96, |x, y| {
            let (x, y) = (x as f64 / 95.0, y as f64 / 95.0);
            100.0 + 50.0 * (3.0 * x).sin() * (2.0 * y).cos()
        })
        .unwrap();
        let (s1, s2) = (1.2, 1.6);
        let twice = convolve(&convolve(&img, &build_kernel(s1).unwrap()), &build_kernel(s2).unwrap());
        let once = convolve(&img, &build_kernel((s1 * s1 + s2 * s2).sqrt()).unwrap());
        let rel = twice
            .data()
            .iter()
            .zip(once.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
            / once.norm_l2()
            * (once.len() as f64).sqrt();
        assert!(rel < 1e-3, "relative deviation {rel}");
    }
}
