//! Explicit schemes for the four diffusion models.
//!
//! Every model is advanced with `u <- u + tau L(u) u`, where the linear
//! operator `L` is frozen within a step and rebuilt from the current iterate
//! before the next one. `L` is always a weighted sum of terms
//! `w K A K` with `K` a Gaussian smoothing (the identity for PM and EED), `A`
//! an assembled nonnegativity stencil and `w >= 0`, so it is symmetric and
//! conserves the grey-value sum.
//!
//! | model | stencil tensor | terms |
//! |-------|----------------|-------|
//! | PM    | `g(|grad u|^2) I` | one, `K = I` |
//! | EED   | `g(J)` with `J` from `K_sigma * u` | one, `K = I` |
//! | IID   | `g_i(sum_j |G_j|^2) I` | one per scale, `w = gamma_i^2`, `K = K_sigma_i` |
//! | IAD   | `g_i(J_gamma)`, `J_gamma = sum_j G_j G_j^T` | one per scale |
//!
//! with `G_j = gamma_j grad(K_sigma_j * u)`.

use crate::error::{Error, Result};
use crate::image::ImageGrid;
use crate::scales::{bank_from_reduced, ReducedParams, ScaleBank};
use crate::smoothing::{build_kernel, convolve_into, GaussianKernel};
use crate::stencil::{assemble_isotropic, assemble_stencil, StencilField};
use crate::tensor::{check_lambda, eig_sym2, g, gradient_into, matrix_g, SymMat2, TensorField};

/// Default fraction of the stability limit used by the automatic policy.
pub const DEFAULT_SAFETY: f64 = 0.9;

/// Time step used when the operator vanishes and no bound exists.
pub const FALLBACK_TAU: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Pm,
    Eed,
    Iid,
    Iad,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Pm, ModelKind::Eed, ModelKind::Iid, ModelKind::Iad];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Pm => "pm",
            ModelKind::Eed => "eed",
            ModelKind::Iid => "iid",
            ModelKind::Iad => "iad",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ModelKind::Pm => "PM",
            ModelKind::Eed => "EED",
            ModelKind::Iid => "IID",
            ModelKind::Iad => "IAD",
        }
    }

    pub fn is_multiscale(self) -> bool {
        matches!(self, ModelKind::Iid | ModelKind::Iad)
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pm" => Ok(ModelKind::Pm),
            "eed" => Ok(ModelKind::Eed),
            "iid" => Ok(ModelKind::Iid),
            "iad" => Ok(ModelKind::Iad),
            other => Err(Error::invalid(format!("unknown model {other:?} (pm|eed|iid|iad)"))),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A model together with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Pm { lambda: f64 },
    Eed { lambda: f64, sigma: f64 },
    Iid(ScaleBank),
    Iad(ScaleBank),
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Pm { .. } => ModelKind::Pm,
            Model::Eed { .. } => ModelKind::Eed,
            Model::Iid(_) => ModelKind::Iid,
            Model::Iad(_) => ModelKind::Iad,
        }
    }

    /// IID or IAD from the reduced parameters at noise level `s`.
    pub fn multiscale_reduced(kind: ModelKind, p: &ReducedParams, s: f64, scales: &[f64]) -> Result<Model> {
        let bank = bank_from_reduced(p, s, scales)?;
        match kind {
            ModelKind::Iid => Ok(Model::Iid(bank)),
            ModelKind::Iad => Ok(Model::Iad(bank)),
            _ => Err(Error::invalid(format!("{kind} is not a multiscale model"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Model::Pm { lambda } => check_lambda(*lambda),
            Model::Eed { lambda, sigma } => {
                check_lambda(*lambda)?;
                build_kernel(*sigma).map(|_| ())
            }
            // banks are validated on construction
            Model::Iid(_) | Model::Iad(_) => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TauPolicy {
    /// A user time step, rejected if it exceeds the stability bound.
    Fixed(f64),
    /// `safety * 2 / rho`, recomputed every step.
    Auto { safety: f64 },
}

impl Default for TauPolicy {
    fn default() -> Self {
        TauPolicy::Auto {
            safety: DEFAULT_SAFETY,
        }
    }
}

impl TauPolicy {
    pub fn validate(&self) -> Result<()> {
        match *self {
            TauPolicy::Fixed(t) if !(t > 0.0 && t.is_finite()) => {
                Err(Error::invalid(format!("time step must be > 0, got {t}")))
            }
            TauPolicy::Auto { safety } if !(safety > 0.0 && safety <= 1.0) => {
                Err(Error::invalid(format!("safety factor must lie in (0, 1], got {safety}")))
            }
            _ => Ok(()),
        }
    }
}

impl std::str::FromStr for TauPolicy {
    type Err = Error;

    /// `auto`, `auto:<safety>` or a positive number.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let policy = if s == "auto" {
            TauPolicy::default()
        } else if let Some(rest) = s.strip_prefix("auto:") {
            let safety = rest
                .parse::<f64>()
                .map_err(|_| Error::invalid(format!("invalid safety factor {rest:?}")))?;
            TauPolicy::Auto { safety }
        } else {
            let tau = s
                .parse::<f64>()
                .map_err(|_| Error::invalid(format!("invalid time step {s:?} (auto, auto:<safety> or a number)")))?;
            TauPolicy::Fixed(tau)
        };
        policy.validate()?;
        Ok(policy)
    }
}

impl std::fmt::Display for TauPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TauPolicy::Fixed(t) => write!(f, "{t:?}"),
            TauPolicy::Auto { safety } => write!(f, "auto:{safety:?}"),
        }
    }
}

/// Everything needed to run an evolution.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub model: Model,
    pub steps: usize,
    pub tau: TauPolicy,
}

impl ModelSpec {
    pub fn new(model: Model, steps: usize, tau: TauPolicy) -> Result<Self> {
        let spec = Self { model, steps, tau };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::invalid("step count must be >= 1"));
        }
        self.tau.validate()?;
        self.model.validate()
    }
}

/// One `w K A K` term of a frozen step operator.
#[derive(Debug, Clone)]
struct Term {
    kernel: GaussianKernel,
    weight: f64,
    stencil: StencilField,
    /// `K u` for the iterate the operator was built from.
    smoothed: Option<Vec<f64>>,
}

/// The linear operator `L` of one explicit step, with tensors frozen at the
/// iterate it was built from.
#[derive(Debug, Clone)]
pub struct StepOperator {
    width: usize,
    height: usize,
    terms: Vec<Term>,
}

impl StepOperator {
    /// Builds the operator for `model` at iterate `u`.
    pub fn build(model: &Model, u: &ImageGrid) -> Result<Self> {
        model.validate()?;
        let (w, h) = (u.width(), u.height());
        let terms = match model {
            Model::Pm { lambda } => vec![local_term(pm_stencil(u, *lambda))],
            Model::Eed { lambda, sigma } => vec![local_term(eed_stencil(u, *lambda, *sigma)?)],
            Model::Iid(bank) => multiscale_terms(u, bank, false)?,
            Model::Iad(bank) => multiscale_terms(u, bank, true)?,
        };
        Ok(Self {
            width: w,
            height: h,
            terms,
        })
    }

    /// Stencils of the individual terms (one for PM/EED, one per scale for
    /// IID/IAD).
    pub fn stencils(&self) -> impl Iterator<Item = &StencilField> {
        self.terms.iter().map(|t| &t.stencil)
    }

    /// Upper bound on the spectral radius of `L`.
    ///
    /// Unsmoothed terms contribute `w rho_G(A)` with the Gershgorin estimate
    /// `rho_G`. For the smoothed terms of IID and IAD the smaller of
    /// `sum_i w_i rho_G(A_i)` (valid since each smoothing has norm at most one)
    /// and [`fourier_bound`](Self::fourier_bound) is used; the latter accounts
    /// for the damping of high frequencies by the outer smoothings.
    pub fn spectral_bound(&self) -> f64 {
        let local: f64 = self
            .terms
            .iter()
            .filter(|t| t.weight > 0.0 && t.kernel.is_identity())
            .map(|t| t.weight * t.stencil.gershgorin_bound())
            .sum();
        let smoothed = self.gershgorin_bound() - local;
        if smoothed > 0.0 {
            local + smoothed.min(self.fourier_bound_where(|t| !t.kernel.is_identity()))
        } else {
            local
        }
    }

    /// `sum_i w_i rho_G(A_i)` over all terms.
    pub fn gershgorin_bound(&self) -> f64 {
        self.terms
            .iter()
            .filter(|t| t.weight > 0.0)
            .map(|t| t.weight * t.stencil.gershgorin_bound())
            .sum()
    }

    /// Frequency-domain bound on the spectral radius of `L`.
    ///
    /// `|<x, A x>| <= c_x |D_x x|^2 + c_y |D_y x|^2` (see
    /// [`StencilField::axial_path_bounds`]). The reflecting Gaussian and the
    /// Neumann axial differences are both diagonal in the cosine basis, so the
    /// quadratic form of every term is dominated by a diagonal multiplier and
    /// the largest value of their sum bounds `rho(L)`.
    pub fn fourier_bound(&self) -> f64 {
        self.fourier_bound_where(|_| true)
    }

    fn fourier_bound_where(&self, include: impl Fn(&Term) -> bool) -> f64 {
        let (w, h) = (self.width, self.height);
        let axis = |kernel: &GaussianKernel, n: usize| -> (Vec<f64>, Vec<f64>) {
            (0..n)
                .map(|k| {
                    let omega = std::f64::consts::PI * k as f64 / n as f64;
                    let s = kernel.frequency_response(omega).powi(2);
                    (s, s * 4.0 * (0.5 * omega).sin().powi(2))
                })
                .unzip()
        };
        let mut multiplier = vec![0.0; w * h];
        for term in self.terms.iter().filter(|t| t.weight > 0.0 && include(t)) {
            let (cx, cy) = term.stencil.axial_path_bounds();
            let (cx, cy) = (term.weight * cx, term.weight * cy);
            let (gx, fx) = axis(&term.kernel, w);
            let (gy, fy) = axis(&term.kernel, h);
            for ky in 0..h {
                let row = &mut multiplier[ky * w..(ky + 1) * w];
                for (kx, m) in row.iter_mut().enumerate() {
                    *m += cx * fx[kx] * gy[ky] + cy * gx[kx] * fy[ky];
                }
            }
        }
        multiplier.into_iter().fold(0.0, f64::max)
    }

    /// `L x`.
    pub fn apply(&self, x: &ImageGrid) -> Result<ImageGrid> {
        if x.width() != self.width || x.height() != self.height {
            return Err(Error::DimensionMismatch {
                left_width: self.width,
                left_height: self.height,
                right_width: x.width(),
                right_height: x.height(),
            });
        }
        let out = self.apply_buffer(x.data(), false);
        Ok(ImageGrid::from_parts(self.width, self.height, out))
    }

    /// `L x`; with `reuse_smoothed` the cached `K u` replaces `K x`, which is
    /// only valid when `x` is the iterate the operator was built from.
    fn apply_buffer(&self, x: &[f64], reuse_smoothed: bool) -> Vec<f64> {
        let n = self.width * self.height;
        let mut total = vec![0.0; n];
        let mut smoothed = vec![0.0; n];
        let mut rate = vec![0.0; n];
        let mut back = vec![0.0; n];
        let mut scratch = Vec::new();
        for term in &self.terms {
            if term.weight == 0.0 {
                continue;
            }
            let v: &[f64] = match (&term.smoothed, reuse_smoothed, term.kernel.is_identity()) {
                (_, _, true) => x,
                (Some(cached), true, false) => cached,
                _ => {
                    convolve_into(x, self.width, self.height, &term.kernel, &mut smoothed, &mut scratch);
                    &smoothed
                }
            };
            term.stencil.apply_into(v, &mut rate);
            let r: &[f64] = if term.kernel.is_identity() {
                &rate
            } else {
                convolve_into(&rate, self.width, self.height, &term.kernel, &mut back, &mut scratch);
                &back
            };
            if term.weight == 1.0 {
                for (t, v) in total.iter_mut().zip(r) {
                    *t += v;
                }
            } else {
                for (t, v) in total.iter_mut().zip(r) {
                    *t += term.weight * v;
                }
            }
        }
        total
    }
}

fn local_term(stencil: StencilField) -> Term {
    Term {
        kernel: build_kernel(0.0).expect("zero scale is valid"),
        weight: 1.0,
        stencil,
        smoothed: None,
    }
}

fn pm_stencil(u: &ImageGrid, lambda: f64) -> StencilField {
    let (w, h) = (u.width(), u.height());
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    gradient_into(u.data(), w, h, &mut gx, &mut gy);
    let diff: Vec<f64> = gx.iter().zip(&gy).map(|(x, y)| g(x * x + y * y, lambda)).collect();
    assemble_isotropic(w, h, &diff)
}

/// EED diffusion tensors `g(J)` with `J` built from the presmoothed image.
pub fn eed_tensors(u: &ImageGrid, lambda: f64, sigma: f64) -> Result<TensorField> {
    check_lambda(lambda)?;
    let kernel = build_kernel(sigma)?;
    let (w, h) = (u.width(), u.height());
    let mut v = vec![0.0; w * h];
    convolve_into(u.data(), w, h, &kernel, &mut v, &mut Vec::new());
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    gradient_into(&v, w, h, &mut gx, &mut gy);
    let mut j = TensorField::zeros(w, h);
    j.accumulate_outer(&gx, &gy, 1.0);
    j.map_diffusivity(lambda)
}

fn eed_stencil(u: &ImageGrid, lambda: f64, sigma: f64) -> Result<StencilField> {
    Ok(assemble_stencil(&eed_tensors(u, lambda, sigma)?))
}

/// Per-scale smoothed images and the multiscale structure tensor
/// `J_gamma = sum_i gamma_i^2 grad(K_i u) grad(K_i u)^T`.
pub fn multiscale_structure(u: &ImageGrid, bank: &ScaleBank) -> Result<(Vec<Vec<f64>>, TensorField)> {
    let (w, h) = (u.width(), u.height());
    let n = w * h;
    let mut smoothed = Vec::with_capacity(bank.len());
    let mut j = TensorField::zeros(w, h);
    let mut scratch = Vec::new();
    let mut gx = vec![0.0; n];
    let mut gy = vec![0.0; n];
    for (&sigma, &gamma) in bank.sigmas().iter().zip(bank.gammas()) {
        let kernel = build_kernel(sigma)?;
        let mut v = vec![0.0; n];
        convolve_into(u.data(), w, h, &kernel, &mut v, &mut scratch);
        if gamma > 0.0 {
            gradient_into(&v, w, h, &mut gx, &mut gy);
            for (x, y) in gx.iter_mut().zip(gy.iter_mut()) {
                *x *= gamma;
                *y *= gamma;
            }
            j.accumulate_outer(&gx, &gy, 1.0);
        }
        smoothed.push(v);
    }
    Ok((smoothed, j))
}

fn multiscale_terms(u: &ImageGrid, bank: &ScaleBank, anisotropic: bool) -> Result<Vec<Term>> {
    let (w, h) = (u.width(), u.height());
    let n = w * h;
    let (smoothed, j) = multiscale_structure(u, bank)?;
    let mut terms = Vec::with_capacity(bank.len());
    if anisotropic {
        let eig: Vec<_> = (0..n)
            .map(|i| eig_sym2(SymMat2::new(j.a[i], j.b[i], j.c[i])))
            .collect();
        let mut d = TensorField::zeros(w, h);
        for ((v, &sigma), (&gamma, &lambda)) in smoothed
            .into_iter()
            .zip(bank.sigmas())
            .zip(bank.gammas().iter().zip(bank.lambdas()))
        {
            for (i, e) in eig.iter().enumerate() {
                let m = matrix_g(e, lambda);
                d.a[i] = m.a;
                d.b[i] = m.b;
                d.c[i] = m.c;
            }
            terms.push(Term {
                kernel: build_kernel(sigma)?,
                weight: gamma * gamma,
                stencil: assemble_stencil(&d),
                smoothed: Some(v),
            });
        }
    } else {
        let magnitude: Vec<f64> = j.a.iter().zip(&j.c).map(|(a, c)| a + c).collect();
        let mut diff = vec![0.0; n];
        for ((v, &sigma), (&gamma, &lambda)) in smoothed
            .into_iter()
            .zip(bank.sigmas())
            .zip(bank.gammas().iter().zip(bank.lambdas()))
        {
            for (d, &m) in diff.iter_mut().zip(&magnitude) {
                *d = g(m, lambda);
            }
            terms.push(Term {
                kernel: build_kernel(sigma)?,
                weight: gamma * gamma,
                stencil: assemble_isotropic(w, h, &diff),
                smoothed: Some(v),
            });
        }
    }
    Ok(terms)
}

/// Largest stable time step `2 / rho` for an operator (infinite when the
/// operator vanishes).
pub fn max_stable_tau(op: &StepOperator) -> f64 {
    let rho = op.spectral_bound();
    if rho > 0.0 {
        2.0 / rho
    } else {
        f64::INFINITY
    }
}

/// Time step for the current operator under `policy`.
pub fn stable_tau(op: &StepOperator, policy: TauPolicy) -> Result<f64> {
    policy.validate()?;
    let max = max_stable_tau(op);
    match policy {
        TauPolicy::Fixed(tau) if tau > max => Err(Error::UnstableTimeStep { tau, max }),
        TauPolicy::Fixed(tau) => Ok(tau),
        TauPolicy::Auto { safety } if max.is_finite() => Ok(safety * max),
        TauPolicy::Auto { .. } => Ok(FALLBACK_TAU),
    }
}

/// One explicit step with a given operator and time step.
fn advance(u: &ImageGrid, op: &StepOperator, tau: f64) -> Result<ImageGrid> {
    let rate = op.apply_buffer(u.data(), true);
    let data: Vec<f64> = u.data().iter().zip(&rate).map(|(x, r)| x + tau * r).collect();
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!(
            "pixel ({}, {}) after explicit step",
            i % u.width(),
            i / u.width()
        )));
    }
    Ok(ImageGrid::from_parts(u.width(), u.height(), data))
}

/// One step of `model` with an explicit, bound-checked time step.
pub fn step(u: &ImageGrid, model: &Model, tau: f64) -> Result<ImageGrid> {
    let op = StepOperator::build(model, u)?;
    let tau = stable_tau(&op, TauPolicy::Fixed(tau))?;
    advance(u, &op, tau)
}

pub fn pm_step(u: &ImageGrid, lambda: f64, tau: f64) -> Result<ImageGrid> {
    step(u, &Model::Pm { lambda }, tau)
}

pub fn eed_step(u: &ImageGrid, lambda: f64, sigma: f64, tau: f64) -> Result<ImageGrid> {
    step(u, &Model::Eed { lambda, sigma }, tau)
}

pub fn iid_step(u: &ImageGrid, bank: &ScaleBank, tau: f64) -> Result<ImageGrid> {
    step(u, &Model::Iid(bank.clone()), tau)
}

pub fn iad_step(u: &ImageGrid, bank: &ScaleBank, tau: f64) -> Result<ImageGrid> {
    step(u, &Model::Iad(bank.clone()), tau)
}

/// Result of [`evolve`].
#[derive(Debug, Clone)]
pub struct Evolution {
    pub image: ImageGrid,
    /// Time step of every iteration.
    pub taus: Vec<f64>,
}

impl Evolution {
    /// Total diffusion time `T = sum tau`.
    pub fn time(&self) -> f64 {
        self.taus.iter().sum()
    }
}

/// Runs `spec.steps` explicit steps starting from `f`.
pub fn evolve(f: &ImageGrid, spec: &ModelSpec) -> Result<Evolution> {
    evolve_with(f, spec, |_, _| {})
}

/// Like [`evolve`], calling `observe(k, u_k)` after every step.
pub fn evolve_with(
    f: &ImageGrid,
    spec: &ModelSpec,
    mut observe: impl FnMut(usize, &ImageGrid),
) -> Result<Evolution> {
    spec.validate()?;
    let mut u = f.clone();
    let mut taus = Vec::with_capacity(spec.steps);
    for k in 0..spec.steps {
        let op = StepOperator::build(&spec.model, &u)?;
        let tau = stable_tau(&op, spec.tau)?;
        u = advance(&u, &op, tau)?;
        taus.push(tau);
        observe(k + 1, &u);
    }
    Ok(Evolution { image: u, taus })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scales::default_scales;
    use crate::tensor::diffusivity;

    fn noise_image(w: usize, h: usize, seed: u64) -> ImageGrid {
        let mut s = seed.wrapping_mul(2654435761).wrapping_add(12345);
        ImageGrid::from_fn(w, h, |_, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64 * 255.0
        })
        .unwrap()
    }

    fn all_models() -> Vec<Model> {
        let p = ReducedParams::PUBLISHED;
        let scales = [0.5, 1.0, 2.0];
        vec![
            Model::Pm { lambda: 8.0 },
            Model::Eed { lambda: 5.0, sigma: 1.0 },
            Model::multiscale_reduced(ModelKind::Iid, &p, 30.0, &scales).unwrap(),
            Model::multiscale_reduced(ModelKind::Iad, &p, 30.0, &scales).unwrap(),
        ]
    }

    fn max_diff(a: &ImageGrid, b: &ImageGrid) -> f64 {
        a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn model_kind_round_trip() {
        for kind in ModelKind::ALL {
            assert_eq!(kind.name().parse::<ModelKind>().unwrap(), kind);
        }
        assert!("xyz".parse::<ModelKind>().is_err());
    }

    #[test]
    fn tau_policy_parsing() {
        assert_eq!("auto".parse::<TauPolicy>().unwrap(), TauPolicy::default());
        assert_eq!("auto:0.5".parse::<TauPolicy>().unwrap(), TauPolicy::Auto { safety: 0.5 });
        assert_eq!("0.1".parse::<TauPolicy>().unwrap(), TauPolicy::Fixed(0.1));
        assert!("auto:1.5".parse::<TauPolicy>().is_err());
        assert!("-1".parse::<TauPolicy>().is_err());
        assert!("fast".parse::<TauPolicy>().is_err());
        let p = TauPolicy::Auto { safety: 0.75 };
        assert_eq!(p.to_string().parse::<TauPolicy>().unwrap(), p);
    }

    #[test]
    fn spec_validation() {
        assert!(ModelSpec::new(Model::Pm { lambda: 1.0 }, 0, TauPolicy::default()).is_err());
        assert!(ModelSpec::new(Model::Pm { lambda: -1.0 }, 1, TauPolicy::default()).is_err());
        assert!(ModelSpec::new(Model::Eed { lambda: 1.0, sigma: -1.0 }, 1, TauPolicy::default()).is_err());
        assert!(ModelSpec::new(Model::Pm { lambda: f64::INFINITY }, 1, TauPolicy::default()).is_ok());
    }

    #[test]
    fn constant_image_is_unchanged() {
        let f = ImageGrid::filled(9, 7, 42.0).unwrap();
        for model in all_models() {
            let spec = ModelSpec::new(model, 3, TauPolicy::default()).unwrap();
            let out = evolve(&f, &spec).unwrap();
            assert!(max_diff(&out.image, &f) < 1e-12);
        }
    }

    #[test]
    fn mean_is_conserved() {
        let f = noise_image(23, 17, 3);
        for model in all_models() {
            let spec = ModelSpec::new(model, 4, TauPolicy::default()).unwrap();
            let out = evolve(&f, &spec).unwrap();
            assert!((out.image.mean() - f.mean()).abs() <= 1e-10 * f.mean());
        }
    }

    #[test]
    fn single_scale_iad_is_eed_without_presmoothing() {
        let f = noise_image(20, 16, 5);
        let bank = ScaleBank::new(vec![0.0], vec![1.0], vec![7.0]).unwrap();
        for tau in [0.01, 0.1] {
            let a = iad_step(&f, &bank, tau).unwrap();
            let b = eed_step(&f, 7.0, 0.0, tau).unwrap();
            assert_eq!(a, b);
        }
        let iad = StepOperator::build(&Model::Iad(bank), &f).unwrap();
        let eed = StepOperator::build(&Model::Eed { lambda: 7.0, sigma: 0.0 }, &f).unwrap();
        assert_eq!(iad.spectral_bound(), eed.spectral_bound());
        assert_eq!(max_stable_tau(&iad), max_stable_tau(&eed));
    }

    #[test]
    fn eed_without_presmoothing_has_pm_flux() {
        let f = noise_image(15, 12, 9);
        let lambda = 20.0;
        let d = eed_tensors(&f, lambda, 0.0).unwrap();
        let grad = crate::tensor::gradient_central(&f);
        for y in 0..f.height() {
            for x in 0..f.width() {
                let gv = grad.get(x, y);
                let flux = d.get(x, y).mul_vec(gv);
                let g = diffusivity(gv[0] * gv[0] + gv[1] * gv[1], lambda).unwrap();
                assert!((flux[0] - g * gv[0]).abs() < 1e-8 && (flux[1] - g * gv[1]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn heat_step_of_impulse() {
        let mut data = vec![0.0; 49];
        data[24] = 1.0;
        let f = ImageGrid::new(7, 7, data).unwrap();
        let out = pm_step(&f, f64::INFINITY, 0.2).unwrap();
        assert!((out.get(3, 3) - 0.2).abs() < 1e-15);
        for (x, y) in [(2, 3), (4, 3), (3, 2), (3, 4)] {
            assert!((out.get(x, y) - 0.2).abs() < 1e-15);
        }
        assert_eq!(out.get(2, 2), 0.0);
    }

    #[test]
    fn heat_equation_bound() {
        let f = noise_image(12, 12, 1);
        let op = StepOperator::build(&Model::Pm { lambda: f64::INFINITY }, &f).unwrap();
        assert_eq!(op.spectral_bound(), 8.0);
        assert_eq!(max_stable_tau(&op), 0.25);
        assert!((stable_tau(&op, TauPolicy::default()).unwrap() - 0.225).abs() < 1e-15);
        assert_eq!(stable_tau(&op, TauPolicy::Fixed(0.25)).unwrap(), 0.25);
        let err = stable_tau(&op, TauPolicy::Fixed(0.3)).unwrap_err();
        assert!(matches!(err, Error::UnstableTimeStep { .. }));
        let bank = ScaleBank::new(vec![0.0], vec![1.0], vec![f64::INFINITY]).unwrap();
        let iad = StepOperator::build(&Model::Iad(bank), &f).unwrap();
        assert_eq!(max_stable_tau(&iad), 0.25);
    }

    #[test]
    fn fixed_step_over_bound_fails() {
        let f = noise_image(10, 10, 2);
        let spec = ModelSpec::new(Model::Pm { lambda: 1e6 }, 2, TauPolicy::Fixed(10.0)).unwrap();
        assert!(matches!(evolve(&f, &spec), Err(Error::UnstableTimeStep { .. })));
    }

    #[test]
    fn frequency_bound_dominates_power_iteration() {
        let f = noise_image(24, 20, 4);
        for model in all_models() {
            let op = StepOperator::build(&model, &f).unwrap();
            let mut x = noise_image(24, 20, 8);
            let mut rho = 0.0;
            for _ in 0..200 {
                let y = op.apply(&x).unwrap();
                rho = y.norm_l2() / x.norm_l2();
                let k = 1.0 / y.norm_l2();
                x = ImageGrid::new(24, 20, y.data().iter().map(|v| v * k).collect()).unwrap();
            }
            assert!(rho <= op.fourier_bound() * (1.0 + 1e-9), "{model:?}");
            assert!(rho <= op.spectral_bound() * (1.0 + 1e-9), "{model:?}");
        }
    }

    #[test]
    fn iid_diffusivity_matches_iad_leading_eigenvalue_on_ramp() {
        let (w, h) = (32, 28);
        let f = ImageGrid::from_fn(w, h, |x, y| 3.0 * x as f64 + 1.5 * y as f64).unwrap();
        let bank = bank_from_reduced(&ReducedParams::PUBLISHED, 20.0, &[0.5, 1.5]).unwrap();
        let (_, j) = multiscale_structure(&f, &bank).unwrap();
        // Mirroring bends the ramp near the border, so only the interior is rank one.
        let interior = (0..w * h).filter(|i| (8..w - 8).contains(&(i % w)) && (8..h - 8).contains(&(i / w)));
        for i in interior {
            let m = j.a[i] + j.c[i];
            let e = eig_sym2(SymMat2::new(j.a[i], j.b[i], j.c[i]));
            assert!(e.mu2.abs() <= 1e-9 * m.max(1.0));
            for &lambda in bank.lambdas() {
                let iad = matrix_g(&e, lambda);
                let along = iad.mul_vec(e.v1);
                let mu = along[0] * e.v1[0] + along[1] * e.v1[1];
                assert!((mu - g(m, lambda)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn eed_smooths_along_a_vertical_edge() {
        let f = ImageGrid::from_fn(20, 20, |x, _| if x < 10 { 0.0 } else { 100.0 }).unwrap();
        let d = eed_tensors(&f, 2.0, 1.0).unwrap();
        for y in 0..20 {
            for x in [9, 10] {
                let m = d.get(x, y);
                assert!((m.c - 1.0).abs() < 1e-9 && m.b.abs() < 1e-9);
                assert!(m.a < 0.1);
            }
        }
    }

    #[test]
    fn evolution_commutes_with_the_dihedral_group() {
        let f = noise_image(18, 14, 11);
        let transforms: [fn(&ImageGrid) -> ImageGrid; 6] = [
            ImageGrid::rotate90,
            ImageGrid::rotate180,
            ImageGrid::rotate270,
            ImageGrid::flip_horizontal,
            ImageGrid::flip_vertical,
            ImageGrid::transpose,
        ];
        for model in all_models() {
            let spec = ModelSpec::new(model, 3, TauPolicy::default()).unwrap();
            let base = evolve(&f, &spec).unwrap().image;
            for t in transforms {
                let moved = evolve(&t(&f), &spec).unwrap().image;
                assert!(max_diff(&moved, &t(&base)) < 1e-8, "{:?}", spec.model.kind());
            }
        }
    }

    #[test]
    fn norm_does_not_grow() {
        for seed in 0..4 {
            let f = noise_image(32, 32, seed);
            for model in all_models() {
                let spec = ModelSpec::new(model, 5, TauPolicy::default()).unwrap();
                let mut prev = f.norm_l2();
                evolve_with(&f, &spec, |_, u| {
                    let n = u.norm_l2();
                    assert!(n <= prev * (1.0 + 1e-9));
                    prev = n;
                })
                .unwrap();
            }
        }
    }

    #[test]
    fn default_scales_run_on_small_images() {
        let f = noise_image(8, 8, 0);
        let m = Model::multiscale_reduced(ModelKind::Iad, &ReducedParams::PUBLISHED, 50.0, &default_scales()).unwrap();
        let out = evolve(&f, &ModelSpec::new(m, 2, TauPolicy::default()).unwrap()).unwrap();
        assert!(out.image.all_finite());
        assert_eq!(out.taus.len(), 2);
    }
}
