//! Language-centric agent for a symbolic blocks world.
//!
//! The pieces mirror the agent's loop: a [`world`] to act in, a caption
//! oracle in [`semantics`] that turns scenes into text verdicts, a task
//! decomposer in [`instruction`], a goal-conditioned [`policy`] trained by
//! behavioral cloning on the trajectories kept in [`buffers`], the
//! Collect & Infer [`trainer`], and the test-time [`executive`].

pub mod error;
pub mod executive;
pub mod instruction;
pub mod policy;
pub mod buffers;
pub mod trainer;
pub mod seeding;
pub mod semantics;
pub mod world;

pub use error::*;
