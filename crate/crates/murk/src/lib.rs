//! Polarized volumetric Monte Carlo rendering and inverse estimation of
//! subsurface scattering parameters.
//!
//! The crate is organized bottom-up:
//!
//! - [`math`]: small fixed-size vector/frame helpers.
//! - [`stokes`]: linear-polarization Stokes vectors, Mueller matrices and the
//!   four-angle polarizer capture model.
//! - [`fresnel`]: polarized smooth dielectric interface.
//! - [`medium`]: homogeneous scattering medium with the Henyey-Greenstein
//!   phase function.
//! - [`scene`]: camera, shapes, environment lighting and scene description.
//! - [`render`]: the polarized volumetric path tracer and image containers.
//! - [`dataset`]: synthetic polarimetric dataset generation and PFM I/O.
//! - [`inverse`]: analysis-by-synthesis estimation of medium parameters and
//!   illumination from polarimetric captures.

pub mod dataset;
pub mod error;
pub mod fresnel;
pub mod inverse;
pub mod math;
pub mod medium;
pub mod render;
pub mod rng;
pub mod scene;
pub mod stokes;

pub use error::{Error, Result};
