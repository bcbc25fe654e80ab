//! Gauss-Newton point solver for full pseudoranges.
//!
//! Single-constellation mode estimates `[x, y, z, b]`. Dual-constellation
//! mode adds `b_AB`, the time offset carried by constellation-B rows, so the
//! linearized rows are `[-eᵀ, 1]` for A and `[-eᵀ, 1, 1]` for B.

use nalgebra::{DMatrix, DVector, SymmetricEigen, Vector3};
use thiserror::Error;

use crate::geometry::{self, LosSet, SINGULAR_RATIO};
use crate::model::{ConstellationId, PositionSolution, SatId, SatelliteObservation};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnknownLayout {
    SingleConstellation,
    DualConstellation,
}

impl UnknownLayout {
    pub fn unknowns(self) -> usize {
        match self {
            UnknownLayout::SingleConstellation => 4,
            UnknownLayout::DualConstellation => 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub max_iterations: usize,
    pub update_norm_tol_m: f64,
    /// `[x, y, z, b, b_AB]`; the trailing element is ignored in
    /// single-constellation mode.
    pub initial_state: Option<[f64; 5]>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iterations: 20,
            update_norm_tol_m: 1e-4,
            initial_state: None,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("invalid solver config: {0}")]
    InvalidConfig(&'static str),
    #[error("insufficient measurements: need {needed}, got {got}")]
    InsufficientMeasurements { needed: usize, got: usize },
    #[error("dual-constellation solve needs observations from both constellations; none from {0}")]
    MissingConstellation(ConstellationId),
    #[error("observation {0} is not a full pseudorange")]
    NotFull(SatId),
    #[error("singular geometry (smallest eigenvalue {smallest_eigenvalue:e})")]
    SingularGeometry { smallest_eigenvalue: f64 },
    #[error("no convergence after {} iterations (last update {:.3e} m)", .state.iterations, .state.final_update_norm_m)]
    NotConverged { state: Box<PositionSolution> },
}

impl SolverConfig {
    fn validate(&self) -> Result<(), SolveError> {
        if self.max_iterations < 1 {
            return Err(SolveError::InvalidConfig("max_iterations must be at least 1"));
        }
        if !(self.update_norm_tol_m > 0.0) {
            return Err(SolveError::InvalidConfig("update_norm_tol_m must be positive"));
        }
        Ok(())
    }
}

/// Solves for the receiver state from full pseudoranges.
///
/// Observations are processed in sat-id order internally so that the result
/// does not depend on how the caller ordered them; residuals are reported in
/// the caller's order.
pub fn solve_full(
    observations: &[SatelliteObservation],
    layout: UnknownLayout,
    config: &SolverConfig,
) -> Result<PositionSolution, SolveError> {
    config.validate()?;
    if let Some(o) = observations.iter().find(|o| !o.kind.is_full()) {
        return Err(SolveError::NotFull(o.sat_id.clone()));
    }
    let n_unknowns = layout.unknowns();
    if observations.len() < n_unknowns {
        return Err(SolveError::InsufficientMeasurements {
            needed: n_unknowns,
            got: observations.len(),
        });
    }
    if layout == UnknownLayout::DualConstellation {
        for c in [ConstellationId::A, ConstellationId::B] {
            if !observations.iter().any(|o| o.constellation == c) {
                return Err(SolveError::MissingConstellation(c));
            }
        }
    }

    let mut order: Vec<usize> = (0..observations.len()).collect();
    order.sort_by(|&i, &j| observations[i].sat_id.cmp(&observations[j].sat_id));
    let sorted: Vec<&SatelliteObservation> = order.iter().map(|&i| &observations[i]).collect();

    let init = config.initial_state.unwrap_or([0.0; 5]);
    let mut state = DVector::from_fn(n_unknowns, |i, _| init[i]);
    let mut iterations = 0;
    let mut update_norm = f64::INFINITY;

    while iterations < config.max_iterations {
        iterations += 1;
        let (h, r) = linearize(&sorted, &state, layout);
        let normal = h.transpose() * &h;
        check_rank(&normal)?;
        let rhs = h.transpose() * r;
        let dx = normal
            .cholesky()
            .map(|c| c.solve(&rhs))
            .ok_or(SolveError::SingularGeometry {
                smallest_eigenvalue: 0.0,
            })?;
        update_norm = dx.norm();
        state += dx;
        if update_norm < config.update_norm_tol_m {
            break;
        }
    }

    let solution = assemble(observations, &state, layout, iterations, update_norm);
    if update_norm < config.update_norm_tol_m {
        Ok(solution)
    } else {
        Err(SolveError::NotConverged {
            state: Box::new(solution),
        })
    }
}

fn linearize(
    obs: &[&SatelliteObservation],
    state: &DVector<f64>,
    layout: UnknownLayout,
) -> (DMatrix<f64>, DVector<f64>) {
    let pos = Vector3::new(state[0], state[1], state[2]);
    let n = layout.unknowns();
    let mut h = DMatrix::zeros(obs.len(), n);
    let mut r = DVector::zeros(obs.len());
    for (row, o) in obs.iter().enumerate() {
        let d = o.sat_pos - pos;
        let range = d.norm();
        let e = d / range;
        let mut predicted = range + state[3];
        h[(row, 0)] = -e.x;
        h[(row, 1)] = -e.y;
        h[(row, 2)] = -e.z;
        h[(row, 3)] = 1.0;
        if layout == UnknownLayout::DualConstellation && o.constellation == ConstellationId::B {
            h[(row, 4)] = 1.0;
            predicted += state[4];
        }
        r[row] = o.pseudorange - predicted;
    }
    (h, r)
}

fn check_rank(normal: &DMatrix<f64>) -> Result<(), SolveError> {
    let eig = SymmetricEigen::new(normal.clone());
    let smallest = eig.eigenvalues.min();
    let largest = eig.eigenvalues.max();
    if smallest >= SINGULAR_RATIO * largest {
        Ok(())
    } else {
        Err(SolveError::SingularGeometry {
            smallest_eigenvalue: smallest,
        })
    }
}

fn assemble(
    observations: &[SatelliteObservation],
    state: &DVector<f64>,
    layout: UnknownLayout,
    iterations: usize,
    final_update_norm_m: f64,
) -> PositionSolution {
    let position = Vector3::new(state[0], state[1], state[2]);
    let offset = (layout == UnknownLayout::DualConstellation).then(|| state[4]);
    let residuals_m = observations
        .iter()
        .map(|o| {
            let mut predicted = (o.sat_pos - position).norm() + state[3];
            if o.constellation == ConstellationId::B {
                predicted += offset.unwrap_or(0.0);
            }
            o.pseudorange - predicted
        })
        .collect();
    let gdop_full = LosSet::from_positions(observations.iter().map(|o| &o.sat_pos), &position)
        .ok()
        .and_then(|los| geometry::gdop(&los).ok())
        .map(|g| g.value());
    PositionSolution {
        position,
        clock_bias_m: state[3],
        intersystem_offset_m: offset,
        iterations,
        final_update_norm_m,
        gdop_full,
        residuals_m,
    }
}
