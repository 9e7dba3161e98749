//! Fault detection for satellite constellations from inter-satellite ranges.
//!
//! The pipeline: propagate a Keplerian constellation ([`constellation`]),
//! derive the occultation-limited link graph ([`linkgraph`]), list its
//! 6-cliques ([`cliques`]), synthesize noisy and biased two-way ranges
//! ([`ranging`]), and test each clique's geometric-centered EDM for
//! non-embeddability in 3D ([`edm`]). The greedy voting detector lives in
//! [`detector`]; thresholds and the learned threshold predictor in
//! [`calibration`]; seeded Monte-Carlo campaigns in [`experiment`].

pub mod calibration;
pub mod cliques;
pub mod constellation;
pub mod detector;
pub mod edm;
pub mod error;
pub mod experiment;
pub mod linkgraph;
pub mod ranging;
pub mod scenario;
pub mod seeding;

pub use error::{Error, Result};
