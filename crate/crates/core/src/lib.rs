//! Detection and early warning of repetitive loops in long-chain text
//! generation.
//!
//! The crate is organised around a [`trace::Trace`], one recorded generation
//! run. From a trace you can
//!
//! * find exact textual loops ([`textual`]), offline or token by token,
//! * score sentences with a linear hidden-state probe ([`classifier`]),
//! * accumulate those scores in a one-sided CUSUM with persistence gating
//!   ([`cusum`]) to raise an alert before the repetition appears,
//! * cluster sentence states into a reasoning graph and look for
//!   trajectory cycles ([`graph`]),
//! * compute entropy, pivot-token and attention statistics ([`signals`]),
//! * and score all of the above against ground truth ([`eval`]).

pub mod classifier;
pub mod cusum;
pub mod error;
pub mod eval;
pub mod graph;
pub mod signals;
pub mod textual;
pub mod trace;

pub use error::{Error, Result};
