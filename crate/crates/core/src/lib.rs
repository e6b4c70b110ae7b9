//! Sorting-free stochastic rasterizer for 3D Gaussian splat scenes.
//!
//! The forward path estimates alpha blending with an unbiased Monte Carlo
//! estimator: every splat is tested in arbitrary order, accepted with
//! probability equal to its per-pixel alpha, and the nearest accepted sample
//! wins. No global or per-pixel sort is required, which also removes popping
//! artifacts when the per-fragment plane depth is used. The backward path is
//! a detached gradient estimator driven by path-replay over the same keyed
//! random stream.
//!
//! The crate is `no_std` (with `alloc`); all IO and the CLI live in the
//! companion `stochsplat` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod backward;
pub mod forward;
pub mod freeflight;
pub mod image;
pub mod math;
pub mod metrics;
pub mod optim;
pub mod projection;
pub mod rng;
pub mod scene;
pub mod taa;

pub use forward::{DepthMode, RenderConfig};
pub use image::Image;
pub use scene::{Camera, Gaussian3D, Scene};
