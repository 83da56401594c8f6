//! Quantum-virtual-path states on a periodic grid.
//!
//! * [`hilbert`]: grid, state vectors, the conjugate transform.
//! * [`generators`]: forward/backward generator pairs and time reversal.
//! * [`qvp`]: path-sum builders, the q-binomial oracle, limit kets.
//! * [`analysis`]: lobe statistics and closed-form predictions.

pub mod analysis;
pub mod error;
pub mod generators;
pub mod hilbert;
pub mod mp;
pub mod qvp;

pub use error::{Error, Result};
pub use generators::{build_commuting, build_weyl_pair, phen_pair, Direction, GeneratorPair, PhenomenologicalPair, Regime};
pub use hilbert::{conjugate_transform, fidelity, gaussian_state, make_grid, GridSpace, Representation, StateVector};
pub use qvp::{build_qvp, qbinomial_oracle, ConditionalState, QvpParams, ResolutionPolicy};
