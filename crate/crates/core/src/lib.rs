//! Indoor-factory (InF-DH) channel fingerprint simulator with neural
//! direct-positioning models.
//!
//! The crate covers the whole pipeline: a seeded statistical channel over a
//! virtual factory ([`channel`], [`fading`]), labeled fingerprint datasets
//! ([`dataset`]), small residual regressors trained from scratch ([`nn`]),
//! positioning-error statistics ([`eval`]) and the experiment drivers that
//! tie them together ([`experiment`]).

pub mod channel;
pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod fading;
pub mod nn;
pub mod rng;

pub use error::{Error, Result};
