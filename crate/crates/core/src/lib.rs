//! Contour tracking by minimizing the Earth Mover's Distance between
//! Tensor-SIFT signatures with a narrow-band level set.
//!
//! The pipeline: dense SIFT descriptors are compressed by a rank-K CP
//! decomposition ([`tensor`], [`sift`]), clustered into a signature
//! ([`signature`]), compared by a transportation simplex ([`emd`]) whose duals
//! drive a region force ([`force`]) that evolves a level set ([`levelset`]).
//! [`tracker`] ties the steps together frame by frame.

pub mod config;
pub mod ellipse;
pub mod emd;
pub mod error;
pub mod force;
pub mod image;
pub mod initializer;
pub mod levelset;
pub mod mec;
pub mod pnm;
pub mod region;
pub mod sift;
pub mod signature;
pub mod synth;
pub mod tensor;
mod textfmt;
pub mod tracker;

pub use config::{parse_config, SequenceSpec};
pub use ellipse::Ellipse;
pub use nalgebra::DMatrix;
pub use emd::{emd, EmdValue};
pub use error::{Error, Result};
pub use image::{GrayImage, RgbImage};
pub use levelset::LevelSetGrid;
pub use region::RegionMask;
pub use sift::FeatureImage;
pub use signature::{CenteredSignature, ClusterSet, KernelKind, Signature};
pub use synth::{generate_synthetic, SyntheticSceneSpec};
pub use tensor::{CpBasis, Tensor4};
pub use tracker::{
    build_reference, overlap_error, run_sequence, FrameResult, ReferenceModel, StopReason, Tracker, TrackerConfig,
};
