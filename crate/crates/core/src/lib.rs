//! Simulation and analysis of entangled-photon distribution from a
//! low-Earth-orbit platform to one or two ground stations.
//!
//! The crate is organised bottom up: [`geometry`] predicts passes,
//! [`photonics`] holds the source and link-budget model, [`linksim`] turns a
//! pass into timestamped detection logs, [`timing`] corrects and matches
//! those logs, [`protocols`] turns matched pairs into keys and Bell tests,
//! and [`scenario`] strings it all together into the three experiment runs.
//! [`analysis`] holds the stand-alone physics calculators.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod catalog;
pub mod config;
pub mod geometry;
pub mod linksim;
pub mod photonics;
pub mod protocols;
pub mod rng;
pub mod scenario;
pub mod timing;
