//! Single point positioning from a mix of full and fractional (modulo
//! code-period) pseudoranges across two satellite constellations.
//!
//! - [`model`]: domain types and the wrap/unwrap arithmetic.
//! - [`geometry`]: line-of-sight vectors, WGS-84 conversions, elevation, GDOP.
//! - [`solver`]: Gauss-Newton solver for full pseudoranges.
//! - [`mixed`]: ambiguity recovery behind a GDOP gate, then a full re-solve.
//! - [`simulator`]: nominal constellations, measurement synthesis, grid scans.
//! - [`io`]: JSON epoch/solution files and grid exports.

// Negated comparisons are used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod geometry;
pub mod io;
pub mod mixed;
pub mod model;
pub mod simulator;
pub mod solver;

pub use mixed::{compute_beta, mixed_solve, recover_ambiguities, GateConfig, GateRecord, MixedError, MixedResult};
pub use model::{
    unwrap_with_integer, validate_epoch, wrap_to_fraction, ConstellationId, MeasurementEpoch, MeasurementKind, Modulus,
    PositionSolution, RecoveryReport, SatId, SatelliteObservation,
};
pub use solver::{solve_full, SolveError, SolverConfig, UnknownLayout};
