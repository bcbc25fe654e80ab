//! JSON epoch and solution documents, plus CSV/GeoJSON grid exports.
//!
//! Epoch file:
//!
//! ```json
//! {
//!   "epoch_time_s": 0.0,
//!   "observations": [
//!     {"sat_id": "C01", "constellation": "A", "sat_pos_ecef_m": [x, y, z],
//!      "pseudorange_m": 39876543.21, "kind": "full"},
//!     {"sat_id": "G18", "constellation": "B", "sat_pos_ecef_m": [x, y, z],
//!      "pseudorange_m": -9000.01, "kind": "fractional", "modulus_m": 299792.458}
//!   ]
//! }
//! ```

use std::fmt::Write as _;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::geometry::ecef_to_geodetic;
use crate::mixed::{GateRecord, MixedError, MixedResult};
use crate::model::{
    validate_epoch, ConstellationId, MeasurementEpoch, MeasurementKind, Modulus, PositionSolution, RecoveryReport,
    SatId, SatelliteObservation, Violation, SPEED_OF_LIGHT,
};
use crate::simulator::GridReport;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("observation {index} ({sat_id}): {reason}")]
    Schema {
        index: usize,
        sat_id: String,
        reason: String,
    },
    #[error("invalid epoch: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KindTag {
    Full,
    Fractional,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationRecord {
    pub sat_id: SatId,
    pub constellation: ConstellationId,
    pub sat_pos_ecef_m: [f64; 3],
    pub pseudorange_m: f64,
    pub kind: KindTag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modulus_m: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpochFile {
    pub epoch_time_s: f64,
    pub observations: Vec<ObservationRecord>,
}

impl EpochFile {
    pub fn from_epoch(epoch: &MeasurementEpoch) -> Self {
        EpochFile {
            epoch_time_s: epoch.epoch_time,
            observations: epoch
                .observations
                .iter()
                .map(|o| ObservationRecord {
                    sat_id: o.sat_id.clone(),
                    constellation: o.constellation,
                    sat_pos_ecef_m: [o.sat_pos.x, o.sat_pos.y, o.sat_pos.z],
                    pseudorange_m: o.pseudorange,
                    kind: match o.kind {
                        MeasurementKind::Full => KindTag::Full,
                        MeasurementKind::Fractional(_) => KindTag::Fractional,
                    },
                    modulus_m: o.kind.modulus().map(Modulus::meters),
                })
                .collect(),
        }
    }

    /// Converts to a domain epoch, enforcing `modulus_m` iff fractional and
    /// the epoch validity checks.
    pub fn to_epoch(&self) -> Result<MeasurementEpoch, FormatError> {
        let mut observations = Vec::with_capacity(self.observations.len());
        for (index, r) in self.observations.iter().enumerate() {
            let schema = |reason: &str| FormatError::Schema {
                index,
                sat_id: r.sat_id.to_string(),
                reason: reason.to_owned(),
            };
            let kind = match (r.kind, r.modulus_m) {
                (KindTag::Full, None) => MeasurementKind::Full,
                (KindTag::Full, Some(_)) => return Err(schema("modulus_m given for a full observation")),
                (KindTag::Fractional, None) => return Err(schema("modulus_m required for a fractional observation")),
                (KindTag::Fractional, Some(m)) => {
                    MeasurementKind::Fractional(Modulus::from_meters(m).map_err(|e| schema(&e.to_string()))?)
                }
            };
            observations.push(SatelliteObservation {
                sat_id: r.sat_id.clone(),
                constellation: r.constellation,
                sat_pos: Vector3::from(r.sat_pos_ecef_m),
                pseudorange: r.pseudorange_m,
                kind,
            });
        }
        let epoch = MeasurementEpoch::new(self.epoch_time_s, observations);
        let violations = validate_epoch(&epoch);
        if violations.is_empty() {
            Ok(epoch)
        } else {
            Err(FormatError::Invalid(violations))
        }
    }

    pub fn parse(text: &str) -> Result<Self, FormatError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("epoch file serializes")
    }
}

pub fn parse_epoch(text: &str) -> Result<MeasurementEpoch, FormatError> {
    EpochFile::parse(text)?.to_epoch()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeodeticRecord {
    pub latitude_deg: f64,
    pub longitude_deg: f64,
    pub height_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionRecord {
    pub position_ecef_m: [f64; 3],
    pub geodetic: GeodeticRecord,
    pub clock_bias_m: f64,
    pub clock_bias_s: f64,
    pub intersystem_offset_m: Option<f64>,
    pub intersystem_offset_s: Option<f64>,
    pub iterations: usize,
    pub final_update_norm_m: f64,
    pub gdop_full: Option<f64>,
    pub residuals_m: Vec<f64>,
}

impl From<&PositionSolution> for SolutionRecord {
    fn from(s: &PositionSolution) -> Self {
        let g = ecef_to_geodetic(&s.position);
        SolutionRecord {
            position_ecef_m: [s.position.x, s.position.y, s.position.z],
            geodetic: GeodeticRecord {
                latitude_deg: g.latitude_deg,
                longitude_deg: g.longitude_deg,
                height_m: g.height_m,
            },
            clock_bias_m: s.clock_bias_m,
            clock_bias_s: s.clock_bias_m / SPEED_OF_LIGHT,
            intersystem_offset_m: s.intersystem_offset_m,
            intersystem_offset_s: s.intersystem_offset_m.map(|b| b / SPEED_OF_LIGHT),
            iterations: s.iterations,
            final_update_norm_m: s.final_update_norm_m,
            gdop_full: s.gdop_full,
            residuals_m: s.residuals_m.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateRecordFile {
    pub gdop: Option<f64>,
    pub beta: f64,
    pub passed: bool,
}

impl From<&GateRecord> for GateRecordFile {
    fn from(g: &GateRecord) -> Self {
        GateRecordFile {
            gdop: g.gdop_full,
            beta: g.beta,
            passed: g.passed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryRecord {
    pub sat_id: SatId,
    pub fractional_m: f64,
    #[serde(rename = "N")]
    pub integer: i64,
    pub recovered_full_m: f64,
    pub predicted_range_error_m: f64,
}

impl From<&RecoveryReport> for RecoveryRecord {
    fn from(r: &RecoveryReport) -> Self {
        RecoveryRecord {
            sat_id: r.sat_id.clone(),
            fractional_m: r.fractional_m,
            integer: r.integer,
            recovered_full_m: r.recovered_full_m,
            predicted_range_error_m: r.predicted_range_error_m,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Ok,
    GateFailed,
    InsufficientMeasurements,
    /// Non-convergence or singular geometry.
    NotConverged,
    InvalidInput,
}

impl SolveStatus {
    pub fn exit_code(self) -> i32 {
        match self {
            SolveStatus::Ok => 0,
            SolveStatus::InvalidInput => 1,
            SolveStatus::GateFailed => 2,
            SolveStatus::InsufficientMeasurements => 3,
            SolveStatus::NotConverged => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionFile {
    pub status: SolveStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_constellation: Option<ConstellationId>,
    #[serde(default)]
    pub solution: Option<SolutionRecord>,
    #[serde(default)]
    pub gate: Option<GateRecordFile>,
    #[serde(default)]
    pub recoveries: Vec<RecoveryRecord>,
    #[serde(default)]
    pub intermediate_full_only_solution: Option<SolutionRecord>,
}

impl SolutionFile {
    pub fn from_result(r: &MixedResult) -> Self {
        SolutionFile {
            status: SolveStatus::Ok,
            message: None,
            reference_constellation: r.reference,
            solution: Some((&r.solution).into()),
            gate: Some((&r.gate).into()),
            recoveries: r.recoveries.iter().map(Into::into).collect(),
            intermediate_full_only_solution: Some((&r.intermediate_full_only_solution).into()),
        }
    }

    /// Failure document keeping whatever the procedure produced before it
    /// stopped.
    pub fn from_error(e: &MixedError) -> Self {
        use crate::solver::SolveError;
        let status = match e {
            MixedError::InvalidGateConfig(_) | MixedError::NotFractional(_) => SolveStatus::InvalidInput,
            MixedError::InsufficientFullMeasurements { .. } => SolveStatus::InsufficientMeasurements,
            MixedError::GateFailed { .. } => SolveStatus::GateFailed,
            MixedError::FullOnlySolve(s) | MixedError::FinalSolve { source: s, .. } => match s {
                SolveError::SingularGeometry { .. } | SolveError::NotConverged { .. } => SolveStatus::NotConverged,
                SolveError::InsufficientMeasurements { .. } => SolveStatus::InsufficientMeasurements,
                _ => SolveStatus::InvalidInput,
            },
        };
        let mut file = SolutionFile::failure(status, e.to_string());
        match e {
            MixedError::GateFailed { gate, intermediate } => {
                file.gate = Some(gate.into());
                file.intermediate_full_only_solution = intermediate.as_deref().map(Into::into);
            }
            MixedError::FinalSolve {
                gate,
                recoveries,
                intermediate,
                ..
            } => {
                file.gate = Some(gate.into());
                file.recoveries = recoveries.iter().map(Into::into).collect();
                file.intermediate_full_only_solution = Some(intermediate.as_ref().into());
            }
            _ => {}
        }
        file
    }

    pub fn failure(status: SolveStatus, message: String) -> Self {
        SolutionFile {
            status,
            message: Some(message),
            reference_constellation: None,
            solution: None,
            gate: None,
            recoveries: Vec::new(),
            intermediate_full_only_solution: None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("solution file serializes")
    }

    pub fn parse(text: &str) -> Result<Self, FormatError> {
        Ok(serde_json::from_str(text)?)
    }
}

pub fn grid_to_csv(report: &GridReport) -> String {
    let mut out = String::from("latitude_deg,longitude_deg,n_visible_fastnav,gdop,class\n");
    for p in &report.points {
        let gdop = p.gdop.map(|g| format!("{g:.6}")).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            p.latitude_deg,
            p.longitude_deg,
            p.n_visible_fastnav,
            gdop,
            p.class.as_str()
        );
    }
    out
}

pub fn grid_to_geojson(report: &GridReport) -> serde_json::Value {
    let features: Vec<serde_json::Value> = report
        .points
        .iter()
        .map(|p| {
            json!({
                "type": "Feature",
                "geometry": {"type": "Point", "coordinates": [p.longitude_deg, p.latitude_deg]},
                "properties": {
                    "n_visible_fastnav": p.n_visible_fastnav,
                    "gdop": p.gdop,
                    "class": p.class.as_str(),
                }
            })
        })
        .collect();
    json!({
        "type": "FeatureCollection",
        "time_s": report.time_s,
        "grid_step_deg": report.grid_step_deg,
        "beta": report.beta,
        "summary": report.summary,
        "warnings": report.warnings,
        "features": features,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"{
      "epoch_time_s": 12.5,
      "observations": [
        {"sat_id": "C01", "constellation": "A", "sat_pos_ecef_m": [-3.2e7, 2.7e7, 1000.0],
         "pseudorange_m": 39000000.0, "kind": "full"},
        {"sat_id": "G18", "constellation": "B", "sat_pos_ecef_m": [1.5e7, 7.5e6, 2.0e7],
         "pseudorange_m": -9000.01, "kind": "fractional", "modulus_m": 299792.458}
      ]
    }"#;

    #[test]
    fn parse_sample() {
        let e = parse_epoch(SAMPLE).unwrap();
        assert_eq!(e.observations.len(), 2);
        assert_eq!(e.observations[1].kind, MeasurementKind::Fractional(Modulus::one_ms()));
        let again = parse_epoch(&EpochFile::from_epoch(&e).to_json()).unwrap();
        assert_eq!(again, e);
    }

    #[test]
    fn modulus_required_iff_fractional() {
        let missing = SAMPLE.replace(r#", "modulus_m": 299792.458"#, "");
        assert!(matches!(
            parse_epoch(&missing),
            Err(FormatError::Schema { index: 1, .. })
        ));
        let extra = SAMPLE.replace(r#""kind": "full""#, r#""kind": "full", "modulus_m": 1.0"#);
        assert!(matches!(parse_epoch(&extra), Err(FormatError::Schema { index: 0, .. })));
    }

    #[test]
    fn json_errors_carry_location() {
        let bad = SAMPLE.replace(r#""constellation": "B""#, r#""constellation": "C""#);
        match parse_epoch(&bad) {
            Err(FormatError::Json(e)) => assert!(e.line() > 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn invalid_epoch_reports_violations() {
        let dup = SAMPLE.replace("G18", "C01");
        assert!(matches!(parse_epoch(&dup), Err(FormatError::Invalid(v)) if v.len() == 1));
    }
}
