//! Non-neural core of a promptable multi-animal 3D reconstruction pipeline.
//!
//! The crate is organised by pipeline stage:
//!
//! * [`body_model`] and [`template`]: the articulated animal function mapping
//!   shape, pose and translation to a posed mesh with regressed keypoints.
//! * [`projection`]: pinhole camera and normalized bounding boxes.
//! * [`matcher`]: set-prediction matching cost and optimal assignment.
//! * [`losses`]: multi-task training objective, including denoising groups.
//! * [`metrics`]: Procrustes alignment, PA-MPJPE, PCK, OKS and AP/mAP.
//! * [`scene`]: seeded multi-animal layout synthesis and the annotation schema.
//! * [`decoder`]: forward-only token mechanics of the promptable decoder.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod body_model;
pub mod container;
pub mod decoder;
pub mod error;
pub mod image;
pub mod losses;
pub mod matcher;
pub mod metrics;
pub mod projection;
pub mod scene;
pub mod seeds;
pub mod template;

pub use error::{Error, Result};
