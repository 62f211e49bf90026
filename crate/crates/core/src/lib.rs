//! Desk-scale autonomy stack for a ring-collecting competition robot.
//!
//! The crate bundles the pieces that made up the original robot system,
//! rebuilt as deterministic, testable components:
//!
//! - [`geometry`] holds the coordinate-frame math (inverse camera
//!   projection with depth, mount-tilt correction, alliance-frame
//!   rotation, robot-frame transforms, normalization and noise).
//! - [`vision`] is the classical preprocessing front-end (HSV threshold,
//!   box blur, masking, candidate extraction) with a pluggable detector
//!   standing where the learned model ran.
//! - [`sim`] is the 2D game simulation (unicycle robots, ring pickup,
//!   pinning, visibility culling, the 27-value observation contract with
//!   frame stacking, and the reward function).
//! - [`policy`] provides scripted controllers (greedy pursuit, grid A*
//!   with path following) and a remote adapter that fetches actions over
//!   the link.
//! - [`link`] is the brain/coprocessor packet protocol (line-framed
//!   codec, iterator-based duplicate suppression, alternating endpoint
//!   state machines over swappable transports).
//! - [`harness`] backs the command-line tool (batch episode runs, image
//!   processing, loopback drives, the self-check suite).

pub mod error;
pub mod geometry;
pub mod harness;
pub mod link;
pub mod policy;
pub mod sim;
pub mod vision;

pub use error::{Error, Result};
