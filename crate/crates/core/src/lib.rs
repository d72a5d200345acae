//! Blob particle method for driven mass diffusion in bounded 3-D domains.
//!
//! Mass is carried by Gaussian blobs of equal mass. Each time step advects
//! the blobs, applies a volumetric source, relaxes them along the entropic
//! gradient flow confined by a penalty barrier, and then restores prescribed
//! boundary densities or fluxes in thin layers next to the boundary.
//!
//! Everything numeric is generic over [`Real`] (`f32` or `f64`); the aliases
//! at the crate root fix the scalar to `f64`.

// `!(x > 0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod blobs;
pub mod boundary;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod observables;
pub mod scalar;
pub mod stepper;
pub mod vec3;

pub use error::{Error, Result};
pub use scalar::Real;
pub use vec3::Vec3;

pub type Vec3d = Vec3<f64>;
pub type Domain = geometry::Domain<f64>;
pub type BoundaryPatch = geometry::BoundaryPatch<f64>;
pub type ParticleSet = blobs::ParticleSet<f64>;
pub type KernelParams = blobs::KernelParams<f64>;
pub type SimParams = stepper::SimParams<f64>;
pub type BoundaryCondition = boundary::BoundaryCondition<f64>;
pub type TimeSeries = observables::TimeSeries<f64>;
pub type FitReport = observables::FitReport<f64>;

/// Single-precision aliases.
pub mod f32 {
    pub type Vec3 = crate::Vec3<f32>;
    pub type Domain = crate::geometry::Domain<f32>;
    pub type ParticleSet = crate::blobs::ParticleSet<f32>;
    pub type KernelParams = crate::blobs::KernelParams<f32>;
    pub type SimParams = crate::stepper::SimParams<f32>;
}
