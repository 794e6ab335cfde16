//! Simulation, action masking and value learning for a seven-zone fan-coil
//! cooling plant.
//!
//! The crate is layered bottom-up: zone heat balance ([`thermal`]), equipment
//! laws ([`equipment`]), the chilled-water network ([`hydraulics`]), comfort
//! and reward ([`comfort`]), the episodic environment ([`env`]), feasible
//! action sets ([`mask`]) and the masked DQN learner ([`dqn`]).

pub mod comfort;
pub mod dqn;
pub mod env;
pub mod equipment;
pub mod error;
pub mod hydraulics;
pub mod mask;
pub mod scenario;
pub mod thermal;

pub use error::{Error, Result};
pub use scenario::{Scenario, ZONES};
