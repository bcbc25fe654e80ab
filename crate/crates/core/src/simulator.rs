//! Constellation propagation, measurement synthesis and ground-grid scans.
//!
//! Orbits are nominal Keplerian sets. ECEF coincides with the inertial frame
//! at `t = 0` and rotates at the WGS-84 Earth rate after that. Ranges are pure
//! Euclidean distances; no light-time or Sagnac terms are modeled, matching the
//! solver's range model.

use std::collections::{HashMap, HashSet};
use std::f64::consts::TAU;

use nalgebra::Vector3;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{self, geodetic_to_ecef, local_up, GeoPoint, LosSet};
use crate::mixed::{compute_beta, GateConfig, MixedError};
use crate::model::{
    wrap_to_fraction, ConstellationId, MeasurementEpoch, MeasurementKind, Modulus, SatId, SatelliteObservation,
    SPEED_OF_LIGHT,
};

/// Earth gravitational parameter (m³/s²).
pub const GM_EARTH: f64 = 3.986_004_418e14;
/// Earth rotation rate (rad/s).
pub const EARTH_ROTATION_RATE: f64 = 7.292_115_146_7e-5;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid orbital elements for {sat_id}: {reason}")]
    InvalidElements { sat_id: SatId, reason: &'static str },
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error(transparent)]
    Gate(#[from] MixedError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum OrbitKind {
    Geo,
    Igso,
    Meo,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrbitalElements {
    pub semi_major_axis_m: f64,
    #[serde(default)]
    pub eccentricity: f64,
    pub inclination_deg: f64,
    /// Right ascension of the ascending node at `t = 0`, which is also its
    /// ECEF longitude at that instant.
    pub raan_deg: f64,
    /// Mean argument of latitude at `epoch_s`. Perigee sits at the node.
    pub arg_latitude_at_epoch_deg: f64,
    #[serde(default)]
    pub epoch_s: f64,
    pub kind: OrbitKind,
}

/// Radius of a circular orbit whose period is one sidereal day.
pub fn geosynchronous_radius() -> f64 {
    (GM_EARTH / (EARTH_ROTATION_RATE * EARTH_ROTATION_RATE)).cbrt()
}

impl OrbitalElements {
    pub fn geostationary(longitude_deg: f64) -> Self {
        OrbitalElements {
            semi_major_axis_m: geosynchronous_radius(),
            eccentricity: 0.0,
            inclination_deg: 0.0,
            raan_deg: longitude_deg,
            arg_latitude_at_epoch_deg: 0.0,
            epoch_s: 0.0,
            kind: OrbitKind::Geo,
        }
    }

    /// Geosynchronous orbit over `longitude_deg` at `t = 0`, with the given
    /// inclination and argument of latitude.
    pub fn geosynchronous(longitude_deg: f64, inclination_deg: f64, arg_latitude_deg: f64) -> Self {
        let (su, cu) = arg_latitude_deg.to_radians().sin_cos();
        // Longitude offset of the satellite from its node in the equatorial
        // projection.
        let along = (su * inclination_deg.to_radians().cos()).atan2(cu).to_degrees();
        OrbitalElements {
            semi_major_axis_m: geosynchronous_radius(),
            eccentricity: 0.0,
            inclination_deg,
            raan_deg: longitude_deg - along,
            arg_latitude_at_epoch_deg: arg_latitude_deg,
            epoch_s: 0.0,
            kind: OrbitKind::Geo,
        }
    }

    pub fn circular(kind: OrbitKind, a: f64, inclination_deg: f64, raan_deg: f64, arg_latitude_deg: f64) -> Self {
        OrbitalElements {
            semi_major_axis_m: a,
            eccentricity: 0.0,
            inclination_deg,
            raan_deg,
            arg_latitude_at_epoch_deg: arg_latitude_deg,
            epoch_s: 0.0,
            kind,
        }
    }

    pub fn validate(&self) -> Result<(), &'static str> {
        if !(self.semi_major_axis_m > 6.6e6) {
            return Err("semi-major axis must exceed 6.6e6 m");
        }
        if !(0.0..0.1).contains(&self.eccentricity) {
            return Err("eccentricity must be in [0, 0.1)");
        }
        Ok(())
    }

    pub fn mean_motion(&self) -> f64 {
        (GM_EARTH / self.semi_major_axis_m.powi(3)).sqrt()
    }

    pub fn period_s(&self) -> f64 {
        TAU / self.mean_motion()
    }
}

/// Inertial position at time `t`.
pub fn propagate_inertial(el: &OrbitalElements, t: f64) -> Vector3<f64> {
    let a = el.semi_major_axis_m;
    let e = el.eccentricity;
    let mean = el.arg_latitude_at_epoch_deg.to_radians() + el.mean_motion() * (t - el.epoch_s);
    let (radius, u) = if e == 0.0 {
        (a, mean)
    } else {
        let m = mean.rem_euclid(TAU);
        let mut ecc_anom = m;
        for _ in 0..20 {
            let step = (ecc_anom - e * ecc_anom.sin() - m) / (1.0 - e * ecc_anom.cos());
            ecc_anom -= step;
            if step.abs() < 1e-14 {
                break;
            }
        }
        let nu = 2.0 * ((1.0 + e).sqrt() * (ecc_anom / 2.0).sin()).atan2((1.0 - e).sqrt() * (ecc_anom / 2.0).cos());
        (a * (1.0 - e * ecc_anom.cos()), nu)
    };
    let (su, cu) = u.sin_cos();
    let (si, ci) = el.inclination_deg.to_radians().sin_cos();
    let (so, co) = el.raan_deg.to_radians().sin_cos();
    Vector3::new(
        radius * (co * cu - so * su * ci),
        radius * (so * cu + co * su * ci),
        radius * su * si,
    )
}

/// ECEF position at time `t`.
pub fn propagate(el: &OrbitalElements, t: f64) -> Vector3<f64> {
    let r = propagate_inertial(el, t);
    let (s, c) = (EARTH_ROTATION_RATE * t).sin_cos();
    Vector3::new(c * r.x + s * r.y, -s * r.x + c * r.y, r.z)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataRate {
    /// Full pseudorange available early (e.g. 500 bps GEO navigation data).
    FastNav,
    SlowNav,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SatelliteConfig {
    pub sat_id: SatId,
    pub elements: OrbitalElements,
    pub data_rate: DataRate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstellationConfig {
    pub id: ConstellationId,
    #[serde(default)]
    pub label: Option<String>,
    pub satellites: Vec<SatelliteConfig>,
}

impl ConstellationConfig {
    /// BDS-like layout: 5 GEOs (FastNav), 5 IGSOs and 4 MEOs.
    pub fn nominal_bds(id: ConstellationId) -> Self {
        let geo = geosynchronous_radius();
        let mut sats = Vec::new();
        // Operational GEOs drift to inclinations of a degree or so; exactly
        // equatorial slots would put every GEO in one plane.
        let geo_slots = [
            (58.75, 1.6, 0.0),
            (80.0, 1.1, 72.0),
            (110.5, 0.7, 144.0),
            (140.0, 0.5, 216.0),
            (160.0, 1.4, 288.0),
        ];
        for (k, (lon, incl, phase)) in geo_slots.into_iter().enumerate() {
            sats.push(SatelliteConfig {
                sat_id: SatId::new(format!("C{:02}", k + 1)),
                elements: OrbitalElements::geosynchronous(lon, incl, phase),
                data_rate: DataRate::FastNav,
            });
        }
        // Three planes 120° apart with ground tracks crossing the equator at
        // 118°E, plus two more on a 95°E track.
        let igso = [(118.0, 0.0), (118.0, 120.0), (118.0, 240.0), (95.0, 0.0), (95.0, 120.0)];
        for (k, (node_lon, shift)) in igso.into_iter().enumerate() {
            sats.push(SatelliteConfig {
                sat_id: SatId::new(format!("C{:02}", k + 6)),
                elements: OrbitalElements::circular(OrbitKind::Igso, geo, 55.0, node_lon + shift, -shift),
                data_rate: DataRate::SlowNav,
            });
        }
        for (k, (raan, u)) in [(0.0, 0.0), (0.0, 90.0), (120.0, 45.0), (240.0, 135.0)]
            .into_iter()
            .enumerate()
        {
            sats.push(SatelliteConfig {
                sat_id: SatId::new(format!("C{:02}", k + 11)),
                elements: OrbitalElements::circular(OrbitKind::Meo, 27_906_000.0, 55.0, raan, u),
                data_rate: DataRate::SlowNav,
            });
        }
        ConstellationConfig {
            id,
            label: Some("BDS".into()),
            satellites: sats,
        }
    }

    /// GPS-like layout: 24 MEOs in 6 planes of 4.
    pub fn nominal_gps(id: ConstellationId) -> Self {
        let mut sats = Vec::new();
        for plane in 0..6 {
            for slot in 0..4 {
                let n = plane * 4 + slot + 1;
                sats.push(SatelliteConfig {
                    sat_id: SatId::new(format!("G{n:02}")),
                    elements: OrbitalElements::circular(
                        OrbitKind::Meo,
                        26_560_000.0,
                        55.0,
                        60.0 * plane as f64,
                        90.0 * slot as f64 + 15.0 * plane as f64,
                    ),
                    data_rate: DataRate::SlowNav,
                });
            }
        }
        ConstellationConfig {
            id,
            label: Some("GPS".into()),
            satellites: sats,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimScenario {
    pub constellations: Vec<ConstellationConfig>,
    /// Receiver clock bias relative to constellation A (s).
    #[serde(default = "default_clock_bias")]
    pub clock_bias_s: f64,
    /// Constellation-B time offset relative to A (s).
    #[serde(default = "default_offset")]
    pub intersystem_offset_s: f64,
    #[serde(default = "default_sigma")]
    pub noise_sigma_m: f64,
    #[serde(default)]
    pub rng_seed: u64,
    #[serde(default = "default_mask")]
    pub elevation_mask_deg: f64,
}

fn default_clock_bias() -> f64 {
    0.010
}
fn default_offset() -> f64 {
    1.1e-6
}
fn default_sigma() -> f64 {
    1.3
}
fn default_mask() -> f64 {
    5.0
}

impl SimScenario {
    /// BDS-like constellation as A (time reference, GEO fulls) and GPS-like
    /// as B, with 10 ms receiver clock bias, 1.1 µs inter-system offset and
    /// 1.3 m noise.
    pub fn nominal(rng_seed: u64) -> Self {
        SimScenario {
            constellations: vec![
                ConstellationConfig::nominal_bds(ConstellationId::A),
                ConstellationConfig::nominal_gps(ConstellationId::B),
            ],
            clock_bias_s: default_clock_bias(),
            intersystem_offset_s: default_offset(),
            noise_sigma_m: default_sigma(),
            rng_seed,
            elevation_mask_deg: default_mask(),
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.constellations.is_empty() || self.constellations.len() > 2 {
            return Err(SimError::InvalidScenario(format!(
                "expected 1 or 2 constellations, got {}",
                self.constellations.len()
            )));
        }
        if self.constellations.len() == 2 && self.constellations[0].id == self.constellations[1].id {
            return Err(SimError::InvalidScenario("constellation ids must differ".into()));
        }
        if !(self.noise_sigma_m >= 0.0) {
            return Err(SimError::InvalidScenario("noise_sigma_m must be >= 0".into()));
        }
        let mut ids = HashSet::new();
        for c in &self.constellations {
            if c.satellites.is_empty() {
                return Err(SimError::InvalidScenario(format!(
                    "constellation {} has no satellites",
                    c.id
                )));
            }
            for s in &c.satellites {
                if !ids.insert(&s.sat_id) {
                    return Err(SimError::InvalidScenario(format!("duplicate sat_id {}", s.sat_id)));
                }
                s.elements.validate().map_err(|reason| SimError::InvalidElements {
                    sat_id: s.sat_id.clone(),
                    reason,
                })?;
            }
        }
        Ok(())
    }

    pub fn clock_bias_m(&self) -> f64 {
        self.clock_bias_s * SPEED_OF_LIGHT
    }

    pub fn intersystem_offset_m(&self) -> f64 {
        self.intersystem_offset_s * SPEED_OF_LIGHT
    }

    fn satellites(&self) -> impl Iterator<Item = (ConstellationId, &SatelliteConfig)> {
        self.constellations
            .iter()
            .flat_map(|c| c.satellites.iter().map(move |s| (c.id, s)))
    }

    /// All satellite ECEF positions at `t`, in scenario order.
    pub fn positions_at(&self, t: f64) -> Vec<SatState<'_>> {
        self.satellites()
            .map(|(constellation, cfg)| SatState {
                constellation,
                cfg,
                pos: propagate(&cfg.elements, t),
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct SatState<'a> {
    pub constellation: ConstellationId,
    pub cfg: &'a SatelliteConfig,
    pub pos: Vector3<f64>,
}

/// Which satellites are emitted as fractional pseudoranges.
#[derive(Debug, Clone, PartialEq)]
pub enum FracPolicy {
    AllFull,
    /// FastNav satellites full, the rest fractional with the given modulus.
    FastNavFull(Modulus),
    /// Explicit per-satellite kinds; unlisted satellites use `default`.
    PerSatellite {
        kinds: HashMap<SatId, MeasurementKind>,
        default: MeasurementKind,
    },
}

impl FracPolicy {
    pub fn kind_for(&self, sat: &SatelliteConfig) -> MeasurementKind {
        match self {
            FracPolicy::AllFull => MeasurementKind::Full,
            FracPolicy::FastNavFull(m) => match sat.data_rate {
                DataRate::FastNav => MeasurementKind::Full,
                DataRate::SlowNav => MeasurementKind::Fractional(*m),
            },
            FracPolicy::PerSatellite { kinds, default } => kinds.get(&sat.sat_id).copied().unwrap_or(*default),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthSatellite {
    pub sat_id: SatId,
    pub constellation: ConstellationId,
    pub range_m: f64,
    pub noise_m: f64,
    pub full_pseudorange_m: f64,
}

/// Ground truth for a synthesized epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub epoch_time_s: f64,
    pub position_ecef_m: [f64; 3],
    pub clock_bias_m: f64,
    pub clock_bias_s: f64,
    pub intersystem_offset_m: f64,
    pub intersystem_offset_s: f64,
    pub satellites: Vec<TruthSatellite>,
}

impl TruthRecord {
    pub fn position(&self) -> Vector3<f64> {
        Vector3::from(self.position_ecef_m)
    }

    pub fn full_for(&self, sat_id: &SatId) -> Option<f64> {
        self.satellites
            .iter()
            .find(|s| &s.sat_id == sat_id)
            .map(|s| s.full_pseudorange_m)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticEpoch {
    pub epoch: MeasurementEpoch,
    pub truth: TruthRecord,
    /// Set when no satellite cleared the elevation mask.
    pub no_visible_satellites: bool,
}

impl SyntheticEpoch {
    /// The same epoch with every pseudorange replaced by its true full value.
    pub fn all_full(&self) -> MeasurementEpoch {
        let observations = self
            .epoch
            .observations
            .iter()
            .zip(&self.truth.satellites)
            .map(|(o, t)| SatelliteObservation {
                pseudorange: t.full_pseudorange_m,
                kind: MeasurementKind::Full,
                ..o.clone()
            })
            .collect();
        MeasurementEpoch::new(self.epoch.epoch_time, observations)
    }
}

/// Synthesizes one epoch with noise seeded from `scenario.rng_seed`.
pub fn synthesize_epoch(
    scenario: &SimScenario,
    truth_pos: &Vector3<f64>,
    t: f64,
    policy: &FracPolicy,
) -> Result<SyntheticEpoch, SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.rng_seed);
    synthesize_epoch_with_rng(scenario, truth_pos, t, policy, &mut rng)
}

/// Synthesizes one epoch drawing noise from `rng`: one Gaussian draw per
/// visible satellite, in scenario order.
pub fn synthesize_epoch_with_rng<R: Rng + ?Sized>(
    scenario: &SimScenario,
    truth_pos: &Vector3<f64>,
    t: f64,
    policy: &FracPolicy,
    rng: &mut R,
) -> Result<SyntheticEpoch, SimError> {
    scenario.validate()?;
    let up = local_up(truth_pos).map_err(|e| SimError::InvalidScenario(e.to_string()))?;
    let noise = Normal::new(0.0, scenario.noise_sigma_m).map_err(|e| SimError::InvalidScenario(e.to_string()))?;
    let clock = scenario.clock_bias_m();
    let offset = scenario.intersystem_offset_m();

    let mut observations = Vec::new();
    let mut truth_sats = Vec::new();
    for s in scenario.positions_at(t) {
        let el = match geometry::elevation_with_up(&s.pos, truth_pos, &up) {
            Ok(el) => el,
            Err(_) => continue,
        };
        if el < scenario.elevation_mask_deg {
            continue;
        }
        let range = (s.pos - truth_pos).norm();
        let eps = if scenario.noise_sigma_m > 0.0 {
            noise.sample(rng)
        } else {
            0.0
        };
        let mut full = range + clock + eps;
        if s.constellation == ConstellationId::B {
            full += offset;
        }
        let kind = policy.kind_for(s.cfg);
        let pseudorange = match kind {
            MeasurementKind::Full => full,
            MeasurementKind::Fractional(m) => {
                wrap_to_fraction(full, m).map_err(|e| SimError::InvalidScenario(e.to_string()))?
            }
        };
        observations.push(SatelliteObservation {
            sat_id: s.cfg.sat_id.clone(),
            constellation: s.constellation,
            sat_pos: s.pos,
            pseudorange,
            kind,
        });
        truth_sats.push(TruthSatellite {
            sat_id: s.cfg.sat_id.clone(),
            constellation: s.constellation,
            range_m: range,
            noise_m: eps,
            full_pseudorange_m: full,
        });
    }

    let no_visible_satellites = observations.is_empty();
    Ok(SyntheticEpoch {
        epoch: MeasurementEpoch::new(t, observations),
        truth: TruthRecord {
            epoch_time_s: t,
            position_ecef_m: [truth_pos.x, truth_pos.y, truth_pos.z],
            clock_bias_m: clock,
            clock_bias_s: scenario.clock_bias_s,
            intersystem_offset_m: offset,
            intersystem_offset_s: scenario.intersystem_offset_s,
            satellites: truth_sats,
        },
        no_visible_satellites,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridClass {
    FewerThanFourVisible,
    VisibleGateFail,
    GatePass,
}

impl GridClass {
    pub fn as_str(self) -> &'static str {
        match self {
            GridClass::FewerThanFourVisible => "fewer_than_four_visible",
            GridClass::VisibleGateFail => "visible_gate_fail",
            GridClass::GatePass => "gate_pass",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub latitude_deg: f64,
    pub longitude_deg: f64,
    pub n_visible_fastnav: usize,
    /// `None` when fewer than four are visible or the geometry is singular.
    pub gdop: Option<f64>,
    pub class: GridClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSummary {
    pub total_points: usize,
    pub fewer_than_four_visible: usize,
    pub visible_gate_fail: usize,
    pub gate_pass: usize,
    /// gate-pass points over points with at least four visible.
    pub pass_ratio_points: f64,
    /// Same ratio with each point weighted by cos(latitude).
    pub pass_ratio_area: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub time_s: f64,
    pub grid_step_deg: f64,
    pub elevation_mask_deg: f64,
    pub beta: f64,
    pub points: Vec<GridPoint>,
    pub summary: GridSummary,
    pub warnings: Vec<String>,
}

/// Grid nodes: latitudes from -90 to 90 inclusive, longitudes from -180 up to
/// but excluding 180.
pub fn grid_nodes(step_deg: f64) -> (Vec<(f64, f64)>, Vec<String>) {
    let mut warnings = Vec::new();
    let lon_steps = 360.0 / step_deg;
    if (lon_steps - lon_steps.round()).abs() > 1e-9 {
        warnings.push(format!("grid step {step_deg} deg does not divide 360"));
    }
    let n_lat = (180.0 / step_deg + 1e-9).floor() as usize + 1;
    let n_lon = (360.0 / step_deg - 1e-9).ceil() as usize;
    let mut nodes = Vec::with_capacity(n_lat * n_lon);
    for i in 0..n_lat {
        let lat = (-90.0 + i as f64 * step_deg).min(90.0);
        for j in 0..n_lon {
            nodes.push((lat, -180.0 + j as f64 * step_deg));
        }
    }
    (nodes, warnings)
}

/// FastNav satellites visible from a point and the classification they give.
pub fn classify_point(
    fastnav: &[Vector3<f64>],
    user: &Vector3<f64>,
    mask_deg: f64,
    beta: f64,
) -> (usize, Option<f64>, GridClass) {
    let up = match local_up(user) {
        Ok(up) => up,
        Err(_) => return (0, None, GridClass::FewerThanFourVisible),
    };
    let visible: Vec<&Vector3<f64>> = fastnav
        .iter()
        .filter(|p| geometry::elevation_with_up(p, user, &up).is_ok_and(|el| el >= mask_deg))
        .collect();
    if visible.len() < 4 {
        return (visible.len(), None, GridClass::FewerThanFourVisible);
    }
    let gdop = LosSet::from_positions(visible.iter().copied(), user)
        .and_then(|los| geometry::gdop(&los))
        .map(|g| g.value())
        .ok();
    let class = match gdop {
        Some(g) if g < beta => GridClass::GatePass,
        _ => GridClass::VisibleGateFail,
    };
    (visible.len(), gdop, class)
}

pub fn grid_scan(
    scenario: &SimScenario,
    t: f64,
    grid_step_deg: f64,
    gate: &GateConfig,
) -> Result<GridReport, SimError> {
    scenario.validate()?;
    if !(grid_step_deg > 0.0) {
        return Err(SimError::InvalidScenario("grid step must be positive".into()));
    }
    let beta = compute_beta(gate)?;
    let fastnav: Vec<Vector3<f64>> = scenario
        .positions_at(t)
        .into_iter()
        .filter(|s| s.cfg.data_rate == DataRate::FastNav)
        .map(|s| s.pos)
        .collect();
    let (nodes, warnings) = grid_nodes(grid_step_deg);
    let mask = scenario.elevation_mask_deg;
    let points: Vec<GridPoint> = nodes
        .par_iter()
        .map(|&(lat, lon)| {
            let user = geodetic_to_ecef(&GeoPoint {
                latitude_deg: lat,
                longitude_deg: lon,
                height_m: 0.0,
            });
            let (n_visible_fastnav, gdop, class) = classify_point(&fastnav, &user, mask, beta);
            GridPoint {
                latitude_deg: lat,
                longitude_deg: lon,
                n_visible_fastnav,
                gdop,
                class,
            }
        })
        .collect();
    let summary = summarize(&points);
    Ok(GridReport {
        time_s: t,
        grid_step_deg,
        elevation_mask_deg: mask,
        beta,
        points,
        summary,
        warnings,
    })
}

fn summarize(points: &[GridPoint]) -> GridSummary {
    let count = |c: GridClass| points.iter().filter(|p| p.class == c).count();
    let weight = |c: Option<GridClass>| -> f64 {
        points
            .iter()
            .filter(|p| match c {
                Some(c) => p.class == c,
                None => p.class != GridClass::FewerThanFourVisible,
            })
            .map(|p| p.latitude_deg.to_radians().cos().max(0.0))
            .sum()
    };
    let fewer = count(GridClass::FewerThanFourVisible);
    let fail = count(GridClass::VisibleGateFail);
    let pass = count(GridClass::GatePass);
    let ratio = |num: f64, den: f64| if den > 0.0 { num / den } else { 0.0 };
    GridSummary {
        total_points: points.len(),
        fewer_than_four_visible: fewer,
        visible_gate_fail: fail,
        gate_pass: pass,
        pass_ratio_points: ratio(pass as f64, (pass + fail) as f64),
        pass_ratio_area: ratio(weight(Some(GridClass::GatePass)), weight(None)),
    }
}

/// Scans `t_start, t_start + t_step, ...` up to `t_end` and returns the first
/// epoch with the fewest gate-pass points.
pub fn worst_epoch_search(
    scenario: &SimScenario,
    t_start: f64,
    t_end: f64,
    t_step: f64,
    grid_step_deg: f64,
    gate: &GateConfig,
) -> Result<(f64, GridReport), SimError> {
    if !(t_start < t_end) || !(t_step > 0.0) {
        return Err(SimError::InvalidScenario("need t_start < t_end and t_step > 0".into()));
    }
    let n = ((t_end - t_start) / t_step + 1e-9).floor() as usize + 1;
    let mut best: Option<GridReport> = None;
    for k in 0..n {
        let t = t_start + k as f64 * t_step;
        let report = grid_scan(scenario, t, grid_step_deg, gate)?;
        if best
            .as_ref()
            .is_none_or(|b| report.summary.gate_pass < b.summary.gate_pass)
        {
            best = Some(report);
        }
    }
    let best = best.expect("at least one epoch scanned");
    Ok((best.time_s, best))
}
