//! A 4D driving-scene engine.
//!
//! The pipeline reconstructs a temporally aligned point-cloud scene from
//! surround-view depth and pose data, then renders sparse keyframe videos
//! under decoupled space (camera pose) and time (frame selection) controls:
//!
//! 1. [`reconstruction`] lifts per-view depth maps into ego-frame clouds and
//!    fuses the surround views of each frame;
//! 2. [`alignment`] maps each frame into a shared world frame using the
//!    recorded ego pose, then refines the pose by iterative closest point
//!    against the accumulated scene;
//! 3. [`rendering`] projects the aligned scene into sparse keyframes, with
//!    frozen-time and frozen-space controls, object removal, and training
//!    pair export for a downstream point-conditioned video generator;
//! 4. [`evaluation`] scores renders against references (PSNR, SSIM).
//!
//! [`scene_io`] owns every on-disk format and [`synth_oracle`] generates
//! fully analytic scenes with exact ground truth, which the test suites use
//! as their oracle. [`geometry`] is the shared SE(3) and pinhole math.

pub use nalgebra;

pub mod alignment;
pub mod evaluation;
pub mod geometry;
mod kdtree;
pub mod reconstruction;
pub mod rendering;
pub mod scene_io;
pub mod synth_oracle;
