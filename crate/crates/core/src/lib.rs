//! Sum-rate power control for the K-user interference channel.
//!
//! The crate is organised bottom-up:
//!
//! * [`channel`] draws fading realizations (Rayleigh, Rician, random geometry)
//!   and stores them as squared link gains.
//! * [`metrics`] evaluates per-user rates under treating-interference-as-noise
//!   and holds the minimum-rate feasibility algebra.
//! * [`nnet`] is a small dense-network engine (batch norm, ReLU, sigmoid,
//!   exact backprop, ADAM).
//! * [`pcnet`] builds power-control networks on top of it, trains them
//!   unsupervised on the negated sum rate, and turns outputs into deployable
//!   power profiles.
//! * [`ensemble`] runs several trained networks and keeps the best profile
//!   per channel sample.
//! * [`baselines`] contains the classical comparison solvers.
//! * [`io`] defines the on-disk dataset, model and manifest formats.

pub mod baselines;
pub mod channel;
pub mod ensemble;
mod error;
pub mod io;
pub mod metrics;
pub mod nnet;
pub mod pcnet;
pub mod rng;

pub use error::{Error, Result};
