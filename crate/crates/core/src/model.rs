//! Domain types, physical constants and the modular arithmetic that turns a
//! full pseudorange into a fractional one and back.
//!
//! A fractional pseudorange is the full pseudorange reduced modulo `c_T`, the
//! light-travel distance of the code (or data bit) period `T`. Fractions are
//! mapped into the symmetric interval `[-c_T/2, c_T/2)` by nearest-integer
//! rounding, so that `full = fraction + N * c_T` for an integer `N`.

use std::collections::HashSet;
use std::fmt;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("non-finite value: {0}")]
    NonFinite(f64),
    #[error("modulus must be positive and finite, got {0} m")]
    InvalidModulus(f64),
}

/// One of the two navigation constellations in an epoch.
///
/// Constellation `A` is the time reference: the receiver clock bias is
/// expressed relative to it and `B` carries the additional inter-system offset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ConstellationId {
    A,
    B,
}

impl ConstellationId {
    pub fn other(self) -> Self {
        match self {
            ConstellationId::A => ConstellationId::B,
            ConstellationId::B => ConstellationId::A,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ConstellationId::A => "A",
            ConstellationId::B => "B",
        }
    }
}

impl fmt::Display for ConstellationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Opaque satellite identifier, e.g. `"BDS 6"` or `"G18"`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SatId(pub String);

impl SatId {
    pub fn new(id: impl Into<String>) -> Self {
        SatId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for SatId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for SatId {
    fn from(s: &str) -> Self {
        SatId(s.to_owned())
    }
}

/// Ambiguity modulus `c_T` in meters.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Modulus(f64);

impl Modulus {
    pub fn from_meters(c_t: f64) -> Result<Self, ModelError> {
        if c_t.is_finite() && c_t > 0.0 {
            Ok(Modulus(c_t))
        } else {
            Err(ModelError::InvalidModulus(c_t))
        }
    }

    /// Modulus for a period given in milliseconds. `from_millis(1.0)` is
    /// exactly 299 792.458 m.
    pub fn from_millis(ms: f64) -> Result<Self, ModelError> {
        Self::from_meters(SPEED_OF_LIGHT * ms / 1000.0)
    }

    pub fn from_seconds(t: f64) -> Result<Self, ModelError> {
        Self::from_meters(SPEED_OF_LIGHT * t)
    }

    /// 1 ms C/A code period.
    pub fn one_ms() -> Self {
        Modulus(SPEED_OF_LIGHT / 1000.0)
    }

    pub fn meters(self) -> f64 {
        self.0
    }

    pub fn seconds(self) -> f64 {
        self.0 / SPEED_OF_LIGHT
    }

    pub fn half(self) -> f64 {
        0.5 * self.0
    }
}

impl Default for Modulus {
    fn default() -> Self {
        Modulus::one_ms()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MeasurementKind {
    Full,
    Fractional(Modulus),
}

impl MeasurementKind {
    pub fn is_full(self) -> bool {
        matches!(self, MeasurementKind::Full)
    }

    pub fn modulus(self) -> Option<Modulus> {
        match self {
            MeasurementKind::Full => None,
            MeasurementKind::Fractional(m) => Some(m),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SatelliteObservation {
    pub sat_id: SatId,
    pub constellation: ConstellationId,
    /// ECEF position of the satellite (m).
    pub sat_pos: Vector3<f64>,
    /// Pseudorange (m), full or reduced modulo `c_T`.
    pub pseudorange: f64,
    pub kind: MeasurementKind,
}

impl SatelliteObservation {
    pub fn full(
        sat_id: impl Into<SatId>,
        constellation: ConstellationId,
        sat_pos: Vector3<f64>,
        pseudorange: f64,
    ) -> Self {
        SatelliteObservation {
            sat_id: sat_id.into(),
            constellation,
            sat_pos,
            pseudorange,
            kind: MeasurementKind::Full,
        }
    }

    pub fn fractional(
        sat_id: impl Into<SatId>,
        constellation: ConstellationId,
        sat_pos: Vector3<f64>,
        pseudorange: f64,
        modulus: Modulus,
    ) -> Self {
        SatelliteObservation {
            sat_id: sat_id.into(),
            constellation,
            sat_pos,
            pseudorange,
            kind: MeasurementKind::Fractional(modulus),
        }
    }
}

impl From<String> for SatId {
    fn from(s: String) -> Self {
        SatId(s)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MeasurementEpoch {
    /// Label only; never used in the math.
    pub epoch_time: f64,
    pub observations: Vec<SatelliteObservation>,
}

impl MeasurementEpoch {
    pub fn new(epoch_time: f64, observations: Vec<SatelliteObservation>) -> Self {
        MeasurementEpoch {
            epoch_time,
            observations,
        }
    }

    pub fn fulls(&self) -> impl Iterator<Item = &SatelliteObservation> {
        self.observations.iter().filter(|o| o.kind.is_full())
    }

    pub fn fractionals(&self) -> impl Iterator<Item = &SatelliteObservation> {
        self.observations.iter().filter(|o| !o.kind.is_full())
    }

    pub fn count_full(&self, constellation: ConstellationId) -> usize {
        self.fulls().filter(|o| o.constellation == constellation).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PositionSolution {
    /// Receiver ECEF position (m).
    pub position: Vector3<f64>,
    /// Receiver clock bias relative to the reference time scale (m).
    pub clock_bias_m: f64,
    /// Constellation-B minus constellation-A time offset (m). `None` for
    /// single-constellation solves.
    pub intersystem_offset_m: Option<f64>,
    pub iterations: usize,
    pub final_update_norm_m: f64,
    /// GDOP of the solved satellites at the final position; `None` when the
    /// 4-column geometry is singular.
    pub gdop_full: Option<f64>,
    /// Post-fit residuals, in the order of the input observations.
    pub residuals_m: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryReport {
    pub sat_id: SatId,
    pub fractional_m: f64,
    pub integer: i64,
    pub recovered_full_m: f64,
    /// Predicted minus observed range before rounding, wrapped into
    /// `[-c_T/2, c_T/2)`.
    pub predicted_range_error_m: f64,
}

/// Reduces a full pseudorange modulo `c_T` into `[-c_T/2, c_T/2)`.
///
/// Uses `full - round(full / c_T) * c_T` with ties rounded away from zero. A
/// negative tie, which would land on `+c_T/2`, is folded back to `-c_T/2` so
/// the interval stays half-open.
pub fn wrap_to_fraction(full_pr: f64, modulus: Modulus) -> Result<f64, ModelError> {
    if !full_pr.is_finite() {
        return Err(ModelError::NonFinite(full_pr));
    }
    let c_t = modulus.meters();
    let mut r = full_pr - (full_pr / c_t).round() * c_t;
    let half = 0.5 * c_t;
    if r >= half {
        r -= c_t;
    } else if r < -half {
        r += c_t;
    }
    Ok(r)
}

/// Integer `k` such that `full_pr ≈ wrap_to_fraction(full_pr) + k * c_T`.
pub fn integer_part(full_pr: f64, modulus: Modulus) -> Result<i64, ModelError> {
    let frac = wrap_to_fraction(full_pr, modulus)?;
    Ok(((full_pr - frac) / modulus.meters()).round() as i64)
}

pub fn unwrap_with_integer(fractional_pr: f64, integer: i64, modulus: Modulus) -> f64 {
    fractional_pr + integer as f64 * modulus.meters()
}

/// Sanity limits used by [`validate_epoch`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationLimits {
    pub min_sat_radius_m: f64,
    pub max_sat_radius_m: f64,
}

impl Default for ValidationLimits {
    fn default() -> Self {
        ValidationLimits {
            min_sat_radius_m: 6.5e6,
            max_sat_radius_m: 5.0e7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Violation {
    #[error("duplicate id {0}")]
    DuplicateId(SatId),
    #[error("{sat_id}: fractional value {value} m out of band for modulus {modulus_m} m")]
    OutOfBand { sat_id: SatId, value: f64, modulus_m: f64 },
    #[error("{sat_id}: non-finite {field}")]
    NonFinite { sat_id: SatId, field: &'static str },
    #[error("{sat_id}: satellite radius {radius_m} m outside sanity bounds")]
    ImplausibleSatellitePosition { sat_id: SatId, radius_m: f64 },
}

pub fn validate_epoch(epoch: &MeasurementEpoch) -> Vec<Violation> {
    validate_epoch_with(epoch, &ValidationLimits::default())
}

pub fn validate_epoch_with(epoch: &MeasurementEpoch, limits: &ValidationLimits) -> Vec<Violation> {
    let mut violations = Vec::new();
    let mut seen = HashSet::new();
    for obs in &epoch.observations {
        if !seen.insert(&obs.sat_id) {
            violations.push(Violation::DuplicateId(obs.sat_id.clone()));
        }
        if !obs.pseudorange.is_finite() {
            violations.push(Violation::NonFinite {
                sat_id: obs.sat_id.clone(),
                field: "pseudorange",
            });
        }
        if obs.sat_pos.iter().any(|c| !c.is_finite()) {
            violations.push(Violation::NonFinite {
                sat_id: obs.sat_id.clone(),
                field: "sat_pos",
            });
        } else {
            let radius = obs.sat_pos.norm();
            if radius < limits.min_sat_radius_m || radius > limits.max_sat_radius_m {
                violations.push(Violation::ImplausibleSatellitePosition {
                    sat_id: obs.sat_id.clone(),
                    radius_m: radius,
                });
            }
        }
        if let MeasurementKind::Fractional(m) = obs.kind {
            let half = m.half();
            if obs.pseudorange.is_finite() && !(-half..half).contains(&obs.pseudorange) {
                violations.push(Violation::OutOfBand {
                    sat_id: obs.sat_id.clone(),
                    value: obs.pseudorange,
                    modulus_m: m.meters(),
                });
            }
        }
    }
    violations
}
