//! Cumulant expansions of unitary groups, the star algebra of operator
//! sequences, and solvers for the hierarchies of correlation operators and
//! reduced density operators of finite-dimensional quantum many-particle
//! systems.

pub mod bbgky;
pub mod cumulants;
pub mod error;
pub mod evolution;
pub mod hamiltonian;
pub mod hierarchy;
pub mod io;
pub mod operators;
pub mod partitions;
pub mod random;
pub mod scenario;
pub mod star_algebra;
pub mod verify;

pub use error::{Error, Result};
pub use evolution::{Dynamics, UnitaryGroup};
pub use hamiltonian::SystemSpec;
pub use hierarchy::{CorrelationState, DensityState};
pub use operators::{CMatrix, ManyBodyOperator, C64};
pub use partitions::{ClusterSet, ParticleSet, Partition};
pub use star_algebra::OperatorSequence;
