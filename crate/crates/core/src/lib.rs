//! Topology identifiability and reconstruction for heterogeneous networks of
//! discrete-time linear node systems.
//!
//! A network couples node systems `(A_i, B_i, C_i)` through an interconnection
//! matrix `Q`, an external input map `R` and an external output map `S`:
//!
//! ```text
//! x(t+1) = (A + B Q C) x(t) + B R u(t)
//! y(t)   = S C x(t)
//! ```
//!
//! The crate answers two questions: whether `Q` (and hence the weighted
//! directed graph it encodes) is determined by the input/output behaviour
//! ([`identifiability`]), and how to recover it from measured data
//! ([`markov_est`] followed by [`sylvester`]). [`graph`] turns matrices into
//! edge sets and back, and [`io`] holds the file formats.

pub mod error;
pub mod graph;
pub mod identifiability;
pub mod io;
pub mod linalg;
pub mod lti;
pub mod markov_est;
pub mod noise;
pub mod sylvester;

pub use error::{Error, Result};
pub use lti::{simulate, transfer_eval, MarkovOutput, MarkovSequence, Network, NodeSystem, StateSpaceSystem};
