//! Mean robust optimization over clustered data.
//!
//! The uncertain parameter `u` is observed through `N` samples which are
//! clustered into `K` groups. Robust constraints are enforced over the set of
//! `K`-tuples of points whose weighted distances to the cluster centroids stay
//! within a radius `eps`. `K = 1` gives a classical robust counterpart and
//! `K = N` a Wasserstein distributionally robust program.

pub mod clustering;
pub mod conic;
pub mod cutting_plane;
pub mod data;
pub mod error;
pub mod experiments;
pub mod families;
pub mod guarantees;
pub mod projection;
pub mod reformulate;

pub use error::{MroError, Result};
