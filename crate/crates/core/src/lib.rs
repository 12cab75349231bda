//! Minimum Riesz and Green energy problems for condensers whose plates touch.

pub mod error;
pub mod balayage;
pub mod config;
pub mod geometry;
pub mod green;
pub mod kelvin;
pub mod kernel;
pub mod linalg;
pub mod pipeline;
pub mod problems;
pub mod qp;
pub mod verify;

pub use error::{Error, Result};
pub use geometry::{DomainKind, DomainSpec, Label, PointCloud};
pub use kernel::{DiscreteMeasure, KernelKind, KernelOperator};
