//! Evaluation toolkit for optical 6-DoF tool tracking against a ground-truth
//! reference system.
//!
//! The pipeline runs ingest, temporal pairing, frame registration, outlier
//! cleaning and metric computation, then aggregates per-trial results into
//! a [`report::MetricReport`]. A deterministic [`simulator`] produces
//! synthetic sessions with labelled faults for testing every stage.

// `!(x > lo)` is used on purpose so NaN fails range checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cleaning;
pub mod error;
pub mod evaluate;
pub mod ingest;
pub mod manifest;
pub mod metrics;
pub mod model;
pub mod reference;
pub mod registration;
pub mod report;
pub mod simulator;
pub mod stats;
pub mod temporal;

pub use error::{Error, Result};
pub use model::{
    apply, compose, FrameId, Pose, PoseSeries, Quaternion, RigidTransform, Timestamp, Vec3,
};
