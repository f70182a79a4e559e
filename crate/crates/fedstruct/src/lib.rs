//! Subgraph federated learning with decoupled graph convolutions.
//!
//! A deterministic multi-client simulator for semi-supervised node
//! classification where each client owns a subgraph of one global graph.
//! Clients never exchange node features; instead they collaboratively
//! acquire their rows of a combined multi-hop adjacency matrix and learn
//! from node structure features shared alongside.

pub mod error;
pub mod fed;
pub mod graph;
pub mod louvain;
pub mod model;
pub mod nsf;
pub mod partition;
pub mod propagate;
pub mod rng;
pub mod sparse;
pub mod xp;

pub use error::{Error, Result};
