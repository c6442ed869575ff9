//! Shared-autonomy teleoperation engine.
//!
//! The operator's goal is inferred with a grasp-level hidden Markov model,
//! an assistive controller follows the keypoints of the most probable grasp
//! once a goal is confident enough, and the executed command linearly blends
//! operator and assistance. [`harness`] runs seeded batches of simulated
//! operators through that loop; [`session`] drives the same loop from live
//! input.

pub mod arbitration;
pub mod assist;
pub mod harness;
pub mod inference;
pub mod operator;
pub mod oracle;
pub mod session;
pub mod workspace;

#[cfg(test)]
mod testutil;
