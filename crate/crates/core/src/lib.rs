//! Desk-scale laboratory for contact-rich manipulation transfer: a peg is
//! extracted from (or inserted into) a clearance-limited hole under combined
//! kinematic, visual, and tactile sensing. The crate bundles the simulation
//! environment, sensor synthesis, trajectory reversal with action
//! randomization, an actor-critic training stack with hybrid replay and
//! behavior-cloning regularization, scripted baselines, and the evaluation
//! harness that backs the `peglab` command-line tool.

pub mod config;
pub mod dataset;
pub mod env;
pub mod geom;
pub mod harness;
pub mod nn;
pub mod reversal;
pub mod rl;
pub mod rng;
pub mod sensors;
pub mod types;
