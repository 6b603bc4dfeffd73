//! Reference-frame-free qubits stored in trios (and quartets) of spin-1/2
//! atoms: operator algebra, stray-field noise, Hamiltonians, geometric
//! imperfections, master-equation and trajectory evolution, and the optical
//! lattice that holds the atoms.

pub mod error;
pub mod linalg;
pub mod spin;
pub mod hamiltonians;
pub mod noise;
pub mod geometry;
pub mod evolution;
pub mod lattice;
pub mod validate;

pub use error::{Result, RffError};
