//! Vertiport schedule management: a minute-resolution simulator of four eVTOL
//! vehicles around a small vertiport, the reward used to score takeoff,
//! landing, battery, delay and separation decisions, baseline schedulers, and
//! a PPO learner with graph-convolutional feature extraction.

pub mod baselines;
pub mod config;
pub mod conflict;
pub mod domain;
pub mod exec;
pub mod harness;
pub mod learn;
pub mod reward;
pub mod sim;

pub use domain::{Action, ActionMask};
pub use sim::{SimConfig, SimState};
