//! Tests whether temperature-indexed choice frequencies come from a Boltzmann
//! or softmax model, recovers the energy and noise map, and checks convexity.

pub mod axioms;
pub mod boltzmann;
pub mod concat;
pub mod convexity;
pub mod io;
pub mod model;
pub mod recovery;
pub mod stats;
pub mod synth;
pub mod trend;
