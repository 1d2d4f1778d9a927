//! Model-free finite- and infinite-horizon LQR for externally symmetric
//! linear systems, driven purely by input/output experiments on a plant.

pub mod error;
pub mod feedback;
pub mod linalg;
pub mod lti;
pub mod noise_study;
pub mod plant;
pub mod pontryagin;
pub mod riccati;
pub mod signals;
pub mod solver;

pub use error::{Error, Result};
pub use lti::{SignatureMatrix, StateSpace};
pub use plant::{InitialState, NoiseModel, Plant, SimulatedPlant};
pub use signals::{Norm, Signal, TimeGrid};
