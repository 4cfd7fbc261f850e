//! Diffusivity, closed-form 2x2 symmetric eigen-decomposition, matrix-valued
//! diffusivity and structure tensors.

use crate::error::{Error, Result};
use crate::image::ImageGrid;

/// Relative eigenvalue gap below which a tensor is treated as isotropic.
pub const DEGENERACY_TOLERANCE: f64 = 1e-12;

/// Exponential diffusivity `exp(-x2 / (2 lambda^2))`.
///
/// `lambda = +inf` is accepted and yields the linear (heat equation) limit.
pub fn diffusivity(x2: f64, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    if !(x2 >= 0.0) {
        return Err(Error::invalid(format!("squared gradient must be >= 0, got {x2}")));
    }
    Ok(g(x2, lambda))
}

pub(crate) fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0) {
        return Err(Error::invalid(format!("contrast parameter must be > 0, got {lambda}")));
    }
    Ok(())
}

#[inline]
pub(crate) fn g(x2: f64, lambda: f64) -> f64 {
    (-x2 / (2.0 * lambda * lambda)).exp()
}

/// Symmetric matrix `[[a, b], [b, c]]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SymMat2 {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl SymMat2 {
    pub const IDENTITY: SymMat2 = SymMat2 { a: 1.0, b: 0.0, c: 1.0 };

    pub fn new(a: f64, b: f64, c: f64) -> Self {
        Self { a, b, c }
    }

    pub fn diagonal(a: f64, c: f64) -> Self {
        Self { a, b: 0.0, c }
    }

    /// Outer product `v v^T`.
    pub fn outer(v: [f64; 2]) -> Self {
        Self {
            a: v[0] * v[0],
            b: v[0] * v[1],
            c: v[1] * v[1],
        }
    }

    pub fn trace(&self) -> f64 {
        self.a + self.c
    }

    pub fn det(&self) -> f64 {
        self.a * self.c - self.b * self.b
    }

    pub fn mul_vec(&self, v: [f64; 2]) -> [f64; 2] {
        [self.a * v[0] + self.b * v[1], self.b * v[0] + self.c * v[1]]
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::new(self.a * s, self.b * s, self.c * s)
    }

    pub fn add(&self, o: &SymMat2) -> Self {
        Self::new(self.a + o.a, self.b + o.b, self.c + o.c)
    }

    /// `R M R^T` for a rotation by `theta` radians.
    pub fn rotated(&self, theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        let col0 = [c, s];
        let col1 = [-s, c];
        // R M R^T = sum_ij M_ij r_i r_j^T with r_i the columns of R
        let m = [[self.a, self.b], [self.b, self.c]];
        let cols = [col0, col1];
        let mut out = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                for p in 0..2 {
                    for q in 0..2 {
                        out[p][q] += m[i][j] * cols[i][p] * cols[j][q];
                    }
                }
            }
        }
        Self::new(out[0][0], 0.5 * (out[0][1] + out[1][0]), out[1][1])
    }

    /// Positive semidefinite up to `1e-9 (a + c)^2` on the determinant.
    pub fn is_psd(&self) -> bool {
        let tol = 1e-9 * self.trace() * self.trace();
        self.a >= 0.0 && self.c >= 0.0 && self.det() >= -tol
    }

    pub fn is_finite(&self) -> bool {
        self.a.is_finite() && self.b.is_finite() && self.c.is_finite()
    }
}

/// Eigenvalues `mu1 >= mu2` and the unit eigenvector of `mu1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenPair {
    pub mu1: f64,
    pub mu2: f64,
    pub v1: [f64; 2],
    /// Set when the eigenvalue gap is below the degeneracy tolerance; `v1`
    /// is then the conventional `(1, 0)`.
    pub degenerate: bool,
}

impl EigenPair {
    pub fn v2(&self) -> [f64; 2] {
        [-self.v1[1], self.v1[0]]
    }

    pub fn reconstruct(&self) -> SymMat2 {
        SymMat2::outer(self.v1)
            .scale(self.mu1)
            .add(&SymMat2::outer(self.v2()).scale(self.mu2))
    }
}

pub fn eig_sym2(m: SymMat2) -> EigenPair {
    let SymMat2 { a, b, c } = m;
    let mean = 0.5 * (a + c);
    let half_diff = 0.5 * (a - c);
    let dev = half_diff.hypot(b);
    let mu1 = mean + dev;
    let mu2 = mean - dev;
    if dev <= DEGENERACY_TOLERANCE * a.abs().max(c.abs()).max(1.0) {
        return EigenPair {
            mu1,
            mu2,
            v1: [1.0, 0.0],
            degenerate: true,
        };
    }
    // Two candidate null vectors of (m - mu1 I); the longer one is the
    // numerically safer choice.
    let p = [b, mu1 - a];
    let q = [mu1 - c, b];
    let np = p[0] * p[0] + p[1] * p[1];
    let nq = q[0] * q[0] + q[1] * q[1];
    let (v, n) = if np >= nq { (p, np) } else { (q, nq) };
    let n = n.sqrt();
    EigenPair {
        mu1,
        mu2,
        v1: [v[0] / n, v[1] / n],
        degenerate: false,
    }
}

/// `g(J)`: same eigenvectors as `J`, eigenvalues `g(mu1)`, `g(mu2)`.
pub fn matrix_diffusivity(j: SymMat2, lambda: f64) -> Result<SymMat2> {
    check_lambda(lambda)?;
    if !j.is_finite() {
        return Err(Error::NonFinite("structure tensor entry".into()));
    }
    if !j.is_psd() {
        return Err(Error::invalid(format!("structure tensor {j:?} is not positive semidefinite")));
    }
    Ok(matrix_g(&eig_sym2(j), lambda))
}

/// Matrix diffusivity from a precomputed decomposition. Tiny negative
/// eigenvalues from rounding are clamped so the result stays in `(0, 1]`.
#[inline]
pub(crate) fn matrix_g(e: &EigenPair, lambda: f64) -> SymMat2 {
    if e.degenerate {
        let s = g(0.5 * (e.mu1 + e.mu2).max(0.0), lambda);
        return SymMat2::diagonal(s, s);
    }
    let g1 = g(e.mu1.max(0.0), lambda);
    let g2 = g(e.mu2.max(0.0), lambda);
    // g2 I + (g1 - g2) v1 v1^T
    let d = g1 - g2;
    let [x, y] = e.v1;
    SymMat2::new(g2 + d * x * x, d * x * y, g2 + d * y * y)
}

/// A per-pixel 2-vector field.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    pub width: usize,
    pub height: usize,
    pub gx: Vec<f64>,
    pub gy: Vec<f64>,
}

impl GradientField {
    pub fn get(&self, x: usize, y: usize) -> [f64; 2] {
        let i = y * self.width + x;
        [self.gx[i], self.gy[i]]
    }
}

/// Central differences with mirrored neighbours, so the normal derivative
/// vanishes on the boundary. `x` runs along rows, `y` down the columns.
pub fn gradient_central(img: &ImageGrid) -> GradientField {
    let (w, h) = (img.width(), img.height());
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    gradient_into(img.data(), w, h, &mut gx, &mut gy);
    GradientField {
        width: w,
        height: h,
        gx,
        gy,
    }
}

pub(crate) fn gradient_into(u: &[f64], w: usize, h: usize, gx: &mut [f64], gy: &mut [f64]) {
    for y in 0..h {
        let row = &u[y * w..(y + 1) * w];
        let out = &mut gx[y * w..(y + 1) * w];
        out[0] = 0.0;
        out[w - 1] = 0.0;
        for x in 1..w - 1 {
            out[x] = 0.5 * (row[x + 1] - row[x - 1]);
        }
    }
    gy[..w].fill(0.0);
    gy[(h - 1) * w..].fill(0.0);
    for y in 1..h - 1 {
        let up = &u[(y - 1) * w..y * w];
        let down = &u[(y + 1) * w..(y + 2) * w];
        let out = &mut gy[y * w..(y + 1) * w];
        for ((o, a), b) in out.iter_mut().zip(up).zip(down) {
            *o = 0.5 * (b - a);
        }
    }
}

/// A per-pixel symmetric 2x2 tensor field, stored as three planes.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorField {
    pub width: usize,
    pub height: usize,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
}

impl TensorField {
    pub fn zeros(width: usize, height: usize) -> Self {
        let n = width * height;
        Self {
            width,
            height,
            a: vec![0.0; n],
            b: vec![0.0; n],
            c: vec![0.0; n],
        }
    }

    pub fn constant(width: usize, height: usize, m: SymMat2) -> Self {
        let n = width * height;
        Self {
            width,
            height,
            a: vec![m.a; n],
            b: vec![m.b; n],
            c: vec![m.c; n],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> SymMat2) -> Self {
        let mut t = Self::zeros(width, height);
        for y in 0..height {
            for x in 0..width {
                t.set(x, y, f(x, y));
            }
        }
        t
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    pub fn get(&self, x: usize, y: usize) -> SymMat2 {
        let i = y * self.width + x;
        SymMat2::new(self.a[i], self.b[i], self.c[i])
    }

    pub fn set(&mut self, x: usize, y: usize, m: SymMat2) {
        let i = y * self.width + x;
        self.a[i] = m.a;
        self.b[i] = m.b;
        self.c[i] = m.c;
    }

    /// Adds `weight * g g^T` for every pixel.
    pub(crate) fn accumulate_outer(&mut self, gx: &[f64], gy: &[f64], weight: f64) {
        for i in 0..self.a.len() {
            let (x, y) = (gx[i], gy[i]);
            self.a[i] += weight * x * x;
            self.b[i] += weight * x * y;
            self.c[i] += weight * y * y;
        }
    }

    /// Applies `matrix_diffusivity` pixel-wise.
    pub fn map_diffusivity(&self, lambda: f64) -> Result<TensorField> {
        check_lambda(lambda)?;
        let mut out = TensorField::zeros(self.width, self.height);
        for i in 0..self.len() {
            let d = matrix_g(&eig_sym2(SymMat2::new(self.a[i], self.b[i], self.c[i])), lambda);
            out.a[i] = d.a;
            out.b[i] = d.b;
            out.c[i] = d.c;
        }
        Ok(out)
    }
}

/// Per-pixel outer product of the gradient; rank one everywhere.
pub fn structure_tensor(grad: &GradientField) -> TensorField {
    let mut t = TensorField::zeros(grad.width, grad.height);
    t.accumulate_outer(&grad.gx, &grad.gy, 1.0);
    t
}
