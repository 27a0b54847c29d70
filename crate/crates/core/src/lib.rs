//! # graspsynth
//!
//! Synthesis of functional grasps for articulated hand models from object
//! geometry plus a *contact map*: a labelling of sampled object-surface points
//! as attractive (the hand should touch there) or repulsive (it should stay
//! clear). The pipeline is
//!
//! 1. **geometry** — triangle meshes, surface sampling, and signed distance
//!    fields (dense grids for objects, analytic primitives for hand segments);
//! 2. **hand** — articulated hand models (kinematic tree, per-segment SDFs,
//!    contact sites, thumb reference point) loaded from TOML configs;
//! 3. **contact** — contact-map construction from per-vertex scalar fields or
//!    manual regions, with a compact binary file format;
//! 4. **sampler** — seeded stochastic search: grasp seeds on the object
//!    surface, heuristic finger closing, and simulated annealing over the
//!    palm pose, keeping the best poses per seed;
//! 5. **objective / optimizer** — a least-squares grasp objective over the
//!    contact map (attractive pull, gated repulsive push, thumb placement,
//!    intersection penalties) refined with Levenberg–Marquardt on the pose
//!    manifold;
//! 6. **pipeline** — end-to-end synthesis producing a ranked grasp set, plus
//!    an evaluation harness that scores ranking quality on scripted scenarios.
//!
//! All randomness flows through explicitly seeded generators; a fixed seed
//! yields byte-identical outputs regardless of thread count.

pub mod contact;
pub mod error;
pub mod export;
pub mod geometry;
pub mod hand;
pub mod object;
pub mod objective;
pub mod optimizer;
pub mod pipeline;
pub mod sampler;

pub use error::{Error, Result};

/// Derives a per-stream RNG seed from a global seed and a stream index.
///
/// Uses a splitmix64 step so that nearby indices yield uncorrelated streams.
/// Every parallel work item gets its own stream keyed by its index, which
/// keeps results independent of scheduling and thread count.
pub fn derive_seed(global: u64, stream: u64) -> u64 {
    let mut z = global
        .wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(stream.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
