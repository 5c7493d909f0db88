//! Seamless blending of coarsely registered, overlapping photos.
//!
//! Each pairwise blend partitions the canvas into left-only, right-only and overlap
//! regions, estimates dense optical flow across the overlap in both directions, derives a
//! distance-based blend coefficient, and mixes flow-warped colors with a per-pixel softmax.
//! [`pipeline::stitch_all`] applies this fold left to right over a whole layout.

pub mod blender;
pub mod blendfield;
pub mod distance;
pub mod error;
pub mod flow;
pub mod metrics;
pub mod pipeline;
pub mod raster;
pub mod region;
pub mod synth;

pub use blender::{blend_pair, feather_blend, BlendParams};
pub use blendfield::{compute_blend, BlendField};
pub use distance::{distance_transform, DistanceField};
pub use error::{Error, Result};
pub use flow::{bidirectional_flow, dense_pyr_lk, flow_magnitude, FlowField, FlowParams};
pub use metrics::{estimate_translation, misalignment_score};
pub use pipeline::{parse_layout, stitch_all, CanvasLayout, StitchReport};
pub use raster::{ImageBuf, Mask};
pub use region::{compute_partition, crop_overlap, Region, RegionPartition};
