//! Integrodifferential anisotropic diffusion (IAD) for image denoising,
//! together with the Perona-Malik (PM), edge-enhancing (EED) and
//! integrodifferential isotropic (IID) baselines.
//!
//! The crate is organised bottom-up:
//!
//! * [`image`] and [`io`]: grey-value grids, noise synthesis, MSE/PSNR, PGM/PFM files.
//! * [`smoothing`]: sampled Gaussian convolution with mirrored boundaries.
//! * [`tensor`]: diffusivities, 2x2 eigen-decomposition, structure tensors.
//! * [`stencil`]: the nonnegativity discretisation of `div(D grad u)`.
//! * [`scales`]: scale sampling and the reduced three-parameter model.
//! * [`diffusion`]: explicit steps, stable time steps and `evolve`.
//! * [`training`], [`optimize`], [`bench`]: fitting parameters and comparing models.

pub mod bench;
pub mod cli;
pub mod error;
pub mod image;
pub mod io;
pub mod kv;
pub mod optimize;
pub mod params;
pub mod scales;
pub mod smoothing;
pub mod stencil;
pub mod tensor;
pub mod diffusion;
pub mod training;

pub use diffusion::{evolve, Evolution, Model, ModelKind, ModelSpec, StepOperator, TauPolicy};
pub use error::{Error, ErrorClass, Result};
pub use image::{add_noise, mse, psnr, ImageGrid, NoiseSpec, QualityReport};
pub use scales::{ReducedParams, ScaleBank};
