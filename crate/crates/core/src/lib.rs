//! Dynamic light field networks: ray-to-color regressors with non-bending ray
//! deformation and hyperspace lifting, plus their attribute-controllable
//! extension, trained by distillation from an integration-based teacher over
//! analytic dynamic scenes.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checkpoint;
pub mod error;
pub mod image;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod pipeline;
pub mod ray;
pub mod scene;
pub mod train;
pub mod vec3;

pub use error::{Error, Result};
pub use vec3::Vec3;
