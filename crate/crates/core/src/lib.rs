//! Iterative self-training pipeline for Y-shaped tree skeleton masks.
//!
//! The crate covers the whole automated labelling loop: blob filtering,
//! genetic-algorithm fitting of a 14-parameter Y-tree template, mask repair,
//! segmentation metrics (mIOU, boundary F1, Complete Grid Scan), the dataset
//! iteration orchestrator, and a synthetic orchard benchmark with a mock
//! predictor.

pub mod batch;
pub mod error;
pub mod filters;
pub mod ga;
pub mod mask;
pub mod metrics;
pub mod orchestrator;
pub mod repair;
pub mod seeds;
pub mod synthetic;
pub mod template;

pub use error::{Error, ErrorKind, Result};
