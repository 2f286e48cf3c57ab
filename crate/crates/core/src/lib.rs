//! Probability of agreement between spatial and spatiotemporal Gaussian
//! processes: covariance models, simulation, pairwise-likelihood fitting,
//! delta-method inference and a greenness-imagery pipeline.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agreement;
pub mod covariance;
pub mod error;
pub mod estimation;
pub mod imagery;
pub mod linalg;
pub mod quadrature;
pub mod randomfield;
pub mod special;

pub use error::{Error, Result};
