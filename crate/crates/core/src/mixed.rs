//! Dual-constellation positioning from mixed full and fractional pseudoranges.
//!
//! The procedure:
//!
//! 1. Pick the constellation that supplies at least four full pseudoranges
//!    and solve `[x, y, z, b]` from those fulls alone.
//! 2. Gate: the GDOP of the full-measurement satellites at that estimate must
//!    be below `β = (α - |b_AB|max) / max|δρ|`. Under that condition the
//!    predicted range to every other satellite is within `α` of the truth, so
//!    rounding to the nearest modulus cannot pick the wrong integer.
//! 3. Recover every fractional pseudorange, from either constellation, as
//!    `z + N·c_T` with `N = round((‖X - x̂‖ + b̂ - z) / c_T)`. The inter-system
//!    offset is left out of the prediction; the gate's `α - |b_AB|` margin
//!    absorbs it.
//! 4. Re-solve with every measurement, now all full, estimating `b_AB` when
//!    both constellations are present.
//!
//! When both constellations already have four or more fulls the first step is
//! a dual solve over all fulls, and fractionals are predicted with the
//! estimated offset included.

use nalgebra::Vector3;
use thiserror::Error;

use crate::geometry::{self, GeometryError, LosSet};
use crate::model::{
    unwrap_with_integer, wrap_to_fraction, ConstellationId, MeasurementEpoch, MeasurementKind, Modulus,
    PositionSolution, RecoveryReport, SatId, SatelliteObservation,
};
use crate::solver::{solve_full, SolveError, SolverConfig, UnknownLayout};

/// Inter-system offset bound (m): 1.1 µs of light travel, rounded.
pub const DEFAULT_B_AB_BOUND_M: f64 = 330.0;
/// Conservative 3σ UERE bound (m).
pub const DEFAULT_MAX_UERE_M: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateConfig {
    /// Half-cycle threshold `α` (m).
    pub alpha_m: f64,
    pub b_ab_bound_m: f64,
    pub max_uere_m: f64,
}

impl GateConfig {
    /// Defaults with `α` set to exactly half of `modulus`.
    pub fn for_modulus(modulus: Modulus) -> Self {
        GateConfig {
            alpha_m: modulus.half(),
            b_ab_bound_m: DEFAULT_B_AB_BOUND_M,
            max_uere_m: DEFAULT_MAX_UERE_M,
        }
    }

    pub fn validate(&self) -> Result<(), MixedError> {
        let ok = self.alpha_m.is_finite()
            && self.b_ab_bound_m >= 0.0
            && self.alpha_m > self.b_ab_bound_m
            && self.max_uere_m > 0.0
            && self.max_uere_m.is_finite();
        if ok {
            Ok(())
        } else {
            Err(MixedError::InvalidGateConfig(*self))
        }
    }
}

impl Default for GateConfig {
    fn default() -> Self {
        GateConfig::for_modulus(Modulus::one_ms())
    }
}

/// `β = (α - |b_AB|) / max|δρ|`.
pub fn compute_beta(gate: &GateConfig) -> Result<f64, MixedError> {
    gate.validate()?;
    Ok((gate.alpha_m - gate.b_ab_bound_m) / gate.max_uere_m)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateRecord {
    /// `None` when the full-measurement geometry is singular.
    pub gdop_full: Option<f64>,
    pub beta: f64,
    pub passed: bool,
}

impl GateRecord {
    pub fn evaluate(gdop_full: Option<f64>, beta: f64) -> Self {
        GateRecord {
            gdop_full,
            beta,
            passed: matches!(gdop_full, Some(g) if g < beta),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixedResult {
    pub solution: PositionSolution,
    pub recoveries: Vec<RecoveryReport>,
    pub gate: GateRecord,
    pub intermediate_full_only_solution: PositionSolution,
    /// Constellation whose fulls bootstrapped the solve; `None` when both had
    /// enough fulls and the bootstrap was a dual solve.
    pub reference: Option<ConstellationId>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MixedError {
    #[error("invalid gate config {0:?}: need alpha > b_AB bound >= 0 and max UERE > 0")]
    InvalidGateConfig(GateConfig),
    #[error("observation {0} is not fractional")]
    NotFractional(SatId),
    #[error("insufficient full measurements: A has {a}, B has {b}; need 4 from one constellation")]
    InsufficientFullMeasurements { a: usize, b: usize },
    #[error("GDOP gate failed: gdop {} >= beta {}", .gate.gdop_full.map_or("singular".to_string(), |g| format!("{g:.3}")), .gate.beta)]
    GateFailed {
        gate: GateRecord,
        /// `None` when the full-only solve never converged to a state.
        intermediate: Option<Box<PositionSolution>>,
    },
    #[error("full-only solve failed: {0}")]
    FullOnlySolve(SolveError),
    #[error("final solve failed: {source}")]
    FinalSolve {
        source: SolveError,
        gate: GateRecord,
        recoveries: Vec<RecoveryReport>,
        intermediate: Box<PositionSolution>,
    },
}

/// Recovers full pseudoranges from fractional ones given a position and
/// clock estimate. Output order matches the input.
pub fn recover_ambiguities(
    fractionals: &[SatelliteObservation],
    est_pos: &Vector3<f64>,
    est_clock_m: f64,
) -> Result<Vec<RecoveryReport>, MixedError> {
    fractionals
        .iter()
        .map(|o| match o.kind {
            MeasurementKind::Fractional(m) => Ok(recover_one(o, m, est_pos, est_clock_m)),
            MeasurementKind::Full => Err(MixedError::NotFractional(o.sat_id.clone())),
        })
        .collect()
}

fn recover_one(o: &SatelliteObservation, m: Modulus, est_pos: &Vector3<f64>, est_clock_m: f64) -> RecoveryReport {
    let predicted = (o.sat_pos - est_pos).norm() + est_clock_m;
    let gap = predicted - o.pseudorange;
    let integer = (gap / m.meters()).round() as i64;
    RecoveryReport {
        sat_id: o.sat_id.clone(),
        fractional_m: o.pseudorange,
        integer,
        recovered_full_m: unwrap_with_integer(o.pseudorange, integer, m),
        predicted_range_error_m: wrap_to_fraction(gap, m).unwrap_or(f64::NAN),
    }
}

/// GDOP of the given satellites seen from `user_pos`; `None` if singular or
/// fewer than four.
pub fn full_gdop<'a, I>(sat_positions: I, user_pos: &Vector3<f64>) -> Option<f64>
where
    I: IntoIterator<Item = &'a Vector3<f64>>,
{
    LosSet::from_positions(sat_positions, user_pos)
        .and_then(|los| geometry::gdop(&los))
        .map(|g| g.value())
        .map_err(|_: GeometryError| ())
        .ok()
}

pub fn mixed_solve(
    epoch: &MeasurementEpoch,
    gate: &GateConfig,
    solver_config: &SolverConfig,
) -> Result<MixedResult, MixedError> {
    let beta = compute_beta(gate)?;
    let n_a = epoch.count_full(ConstellationId::A);
    let n_b = epoch.count_full(ConstellationId::B);

    let reference = match (n_a >= 4, n_b >= 4) {
        (true, true) => None,
        (true, false) => Some(ConstellationId::A),
        (false, true) => Some(ConstellationId::B),
        (false, false) => return Err(MixedError::InsufficientFullMeasurements { a: n_a, b: n_b }),
    };

    let bootstrap: Vec<SatelliteObservation> = epoch
        .fulls()
        .filter(|o| reference.is_none_or(|c| o.constellation == c))
        .cloned()
        .collect();
    let layout = if reference.is_some() {
        UnknownLayout::SingleConstellation
    } else {
        UnknownLayout::DualConstellation
    };
    // Gate on the reference constellation's fulls; with both available, on
    // the constellation with more of them.
    let gate_constellation = reference.unwrap_or(if n_b > n_a {
        ConstellationId::B
    } else {
        ConstellationId::A
    });
    let gate_sats: Vec<Vector3<f64>> = bootstrap
        .iter()
        .filter(|o| o.constellation == gate_constellation)
        .map(|o| o.sat_pos)
        .collect();

    let intermediate = match bootstrap_solve(&bootstrap, layout, solver_config) {
        Ok(s) => s,
        Err(err) => {
            // A full-only geometry too weak to converge from any start is a
            // gate failure when the geometry at the last iterate confirms it.
            let gdop = match &err {
                SolveError::SingularGeometry { .. } => None,
                SolveError::NotConverged { state } => full_gdop(&gate_sats, &state.position),
                _ => return Err(MixedError::FullOnlySolve(err)),
            };
            let gate = GateRecord::evaluate(gdop, beta);
            if gate.passed {
                return Err(MixedError::FullOnlySolve(err));
            }
            let intermediate = match err {
                SolveError::NotConverged { state } => Some(state),
                _ => None,
            };
            return Err(MixedError::GateFailed { gate, intermediate });
        }
    };

    let gdop_full = full_gdop(&gate_sats, &intermediate.position);
    let gate_record = GateRecord::evaluate(gdop_full, beta);
    if !gate_record.passed {
        return Err(MixedError::GateFailed {
            gate: gate_record,
            intermediate: Some(Box::new(intermediate)),
        });
    }

    let mut recoveries = Vec::new();
    let mut all_full = Vec::with_capacity(epoch.observations.len());
    for o in &epoch.observations {
        match o.kind {
            MeasurementKind::Full => all_full.push(o.clone()),
            MeasurementKind::Fractional(m) => {
                let mut clock = intermediate.clock_bias_m;
                if reference.is_none() && o.constellation == ConstellationId::B {
                    clock += intermediate.intersystem_offset_m.unwrap_or(0.0);
                }
                let rec = recover_one(o, m, &intermediate.position, clock);
                all_full.push(SatelliteObservation {
                    pseudorange: rec.recovered_full_m,
                    kind: MeasurementKind::Full,
                    ..o.clone()
                });
                recoveries.push(rec);
            }
        }
    }

    let has_a = all_full.iter().any(|o| o.constellation == ConstellationId::A);
    let has_b = all_full.iter().any(|o| o.constellation == ConstellationId::B);
    let final_layout = if has_a && has_b {
        UnknownLayout::DualConstellation
    } else {
        UnknownLayout::SingleConstellation
    };
    let warm = warm_start(&intermediate, reference, final_layout);
    let final_config = SolverConfig {
        initial_state: Some(warm),
        ..solver_config.clone()
    };
    match solve_full(&all_full, final_layout, &final_config) {
        Ok(solution) => Ok(MixedResult {
            solution,
            recoveries,
            gate: gate_record,
            intermediate_full_only_solution: intermediate,
            reference,
        }),
        Err(source) => Err(MixedError::FinalSolve {
            source,
            gate: gate_record,
            recoveries,
            intermediate: Box::new(intermediate),
        }),
    }
}

/// Solves from the configured initial state (all zeros by default). If the
/// geometry is singular there or the iteration does not converge, retries from
/// fixed points on the Earth's surface and keeps the converged solution with
/// the smallest residuals.
///
/// The geocenter is a degenerate start for GEO-only fulls: every GEO is
/// nearly equidistant from it and the satellites lie close to a plane through
/// it, so the first linearization loses the out-of-plane direction.
pub fn bootstrap_solve(
    observations: &[SatelliteObservation],
    layout: UnknownLayout,
    config: &SolverConfig,
) -> Result<PositionSolution, SolveError> {
    let first = match solve_full(observations, layout, config) {
        Ok(s) => return Ok(s),
        Err(e @ (SolveError::SingularGeometry { .. } | SolveError::NotConverged { .. })) => e,
        Err(e) => return Err(e),
    };
    let init = config.initial_state.unwrap_or([0.0; 5]);
    let mut best: Option<PositionSolution> = None;
    for seed in surface_seeds() {
        let cfg = SolverConfig {
            initial_state: Some([seed.x, seed.y, seed.z, init[3], init[4]]),
            ..config.clone()
        };
        if let Ok(s) = solve_full(observations, layout, &cfg) {
            if best.as_ref().is_none_or(|b| rss(&s) < rss(b)) {
                best = Some(s);
            }
        }
    }
    best.ok_or(first)
}

fn rss(s: &PositionSolution) -> f64 {
    s.residuals_m.iter().map(|r| r * r).sum()
}

/// Points on the equatorial radius along the coordinate axes and the octant
/// diagonals.
fn surface_seeds() -> Vec<Vector3<f64>> {
    let mut seeds = Vec::with_capacity(14);
    for axis in 0..3 {
        for sign in [1.0, -1.0] {
            let mut v = Vector3::zeros();
            v[axis] = sign;
            seeds.push(v);
        }
    }
    for sx in [1.0, -1.0] {
        for sy in [1.0, -1.0] {
            for sz in [1.0, -1.0] {
                seeds.push(Vector3::new(sx, sy, sz).normalize());
            }
        }
    }
    seeds.into_iter().map(|v| v * geometry::WGS84_A).collect()
}

/// Initial state for the final solve. A single-constellation bootstrap on B
/// estimated `b + b_AB`, which is A's clock plus an offset of zero to start.
fn warm_start(intermediate: &PositionSolution, reference: Option<ConstellationId>, layout: UnknownLayout) -> [f64; 5] {
    let p = intermediate.position;
    let offset = match (reference, layout) {
        (None, _) => intermediate.intersystem_offset_m.unwrap_or(0.0),
        _ => 0.0,
    };
    [p.x, p.y, p.z, intermediate.clock_bias_m, offset]
}
