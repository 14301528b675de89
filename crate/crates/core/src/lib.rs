//! Nearest-neighbour matching estimators for covariate shift and average
//! treatment effects, together with the numerical machinery used to check
//! their behaviour: boundary-geometry conditions, order-statistic laws of
//! the k-NN radius, bias constants and Monte Carlo rate sweeps.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod datagen;
pub mod error;
pub mod estimators;
pub mod geometry;
pub mod harness;
pub mod knn;
pub mod points;
pub mod polybasis;
pub mod quadrature;
pub mod rng;
pub mod sample;
pub mod sampling;
pub mod stats;

pub use error::{Error, Result};
pub use knn::{CatchmentProfile, Neighbour, NnIndex};
pub use points::PointSet;
pub use polybasis::MultiIndexBasis;
pub use sample::{AteSample, LabeledSample};
pub use stats::Estimate;
