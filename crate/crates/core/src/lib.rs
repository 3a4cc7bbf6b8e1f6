//! Single-image view synthesis for labels wrapped on cylindrical bottles.
//!
//! From one photograph of a bottle label this crate recovers the 2D projective
//! description of the label region (elliptical rims, silhouette edges, vanishing
//! point), extracts longitudinal line samples, and re-projects them onto a
//! virtual bottle at an arbitrary pose using the view-invariant cross-ratio.
//! The result is an unlimited supply of perspective-realistic synthetic views
//! of the same label, plus the canonical front-view normalization used at
//! query time.
//!
//! Module map:
//!
//! - [`geometry`] — homogeneous points/lines and cross-ratio algebra
//! - [`conic`] — ellipses, conic fitting, tangents, common external tangents
//! - [`camera`] — pinhole camera, posed cylinder, analytic rim/silhouette projection
//! - [`render`] — ray-cast reference renderer (test oracle)
//! - [`rim`] — rim detection: edge blocks, chains, ellipse fitting
//! - [`synth`] — line-sample extraction and cross-ratio re-projection
//! - [`retrieval`] — cosine distance, batch-all triplet loss, top-k ranking

pub mod camera;
pub mod conic;
pub mod geometry;
pub mod render;
pub mod retrieval;
pub mod rim;
pub mod synth;

pub use camera::{CameraIntrinsics, CylinderModel, Pose, TargetRegion};
pub use conic::Ellipse;
pub use geometry::{HLine, HPoint};
pub use retrieval::{Embedding, TripletBatch, TripletStats};
pub use rim::{LabelRegion, RimDetectParams};
pub use synth::{LineSample, SampledLabel};
