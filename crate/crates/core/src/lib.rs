//! Tooling for contact-aware video world models.
//!
//! * [`splat`] renders 3D contact forces into camera-aligned RGB splat images.
//! * [`excitation`] synthesizes Ornstein-Uhlenbeck joystick commands and
//!   workspace-clipped end-effector trajectories.
//! * [`tokens`] holds the discrete-token machinery: FSQ index math, factorized
//!   vocabularies, masking strategies and MaskGIT-style iterative decoding.
//! * [`dynamics`] is a forward-only spatial-temporal transformer at toy scale,
//!   with the factorized losses.
//! * [`dataset`] packs and loads episode archives.
//! * [`gate`] is the collision gate used in the planning loop.
//! * [`cli`] wires everything into the `dreamkit` binary.

pub mod cli;
pub mod dataset;
pub mod dynamics;
pub mod excitation;
pub mod gate;
pub mod image;
pub mod rng;
pub mod splat;
pub mod tokens;

pub use rng::{seeded_rng, DkRng};
