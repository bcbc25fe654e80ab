//! Line-of-sight geometry, WGS-84 conversions, elevation and GDOP.

use nalgebra::{Dyn, Matrix4, OMatrix, Vector3, Vector4, U4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// WGS-84 semi-major axis (m).
pub const WGS84_A: f64 = 6_378_137.0;
/// WGS-84 flattening.
pub const WGS84_F: f64 = 1.0 / 298.257_223_563;
/// WGS-84 semi-minor axis (m).
pub const WGS84_B: f64 = WGS84_A * (1.0 - WGS84_F);
/// First eccentricity squared.
pub const WGS84_E2: f64 = WGS84_F * (2.0 - WGS84_F);

/// Relative eigenvalue threshold below which `HᵀH` is treated as singular.
pub const SINGULAR_RATIO: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("degenerate geometry: {0}")]
    Degenerate(&'static str),
    #[error("singular geometry (smallest eigenvalue {smallest_eigenvalue:e})")]
    Singular { smallest_eigenvalue: f64 },
    #[error("need at least {needed} line-of-sight vectors, got {got}")]
    TooFewVectors { needed: usize, got: usize },
    #[error("line-of-sight vector {index} is not unit length (norm {norm})")]
    NotUnit { index: usize, norm: f64 },
    #[error("invalid geodetic point: {0}")]
    InvalidPoint(&'static str),
}

pub fn los_unit_vector(sat_pos: &Vector3<f64>, user_pos: &Vector3<f64>) -> Result<Vector3<f64>, GeometryError> {
    let d = sat_pos - user_pos;
    let n = d.norm();
    if !(n > 0.0) || !n.is_finite() {
        return Err(GeometryError::Degenerate("satellite and user coincide"));
    }
    Ok(d / n)
}

/// Set of unit line-of-sight vectors from the user to each satellite.
#[derive(Debug, Clone, PartialEq)]
pub struct LosSet(Vec<Vector3<f64>>);

impl LosSet {
    pub fn new(unit_vectors: Vec<Vector3<f64>>) -> Result<Self, GeometryError> {
        for (index, v) in unit_vectors.iter().enumerate() {
            let norm = v.norm();
            if !((norm - 1.0).abs() <= 1e-12) {
                return Err(GeometryError::NotUnit { index, norm });
            }
        }
        Ok(LosSet(unit_vectors))
    }

    pub fn from_positions<'a, I>(sats: I, user_pos: &Vector3<f64>) -> Result<Self, GeometryError>
    where
        I: IntoIterator<Item = &'a Vector3<f64>>,
    {
        let v = sats
            .into_iter()
            .map(|s| los_unit_vector(s, user_pos))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(LosSet(v))
    }

    pub fn vectors(&self) -> &[Vector3<f64>] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `H` with rows `[-eᵀ, 1]`.
    pub fn design_matrix(&self) -> OMatrix<f64, Dyn, U4> {
        OMatrix::<f64, Dyn, U4>::from_fn(self.0.len(), |i, j| if j < 3 { -self.0[i][j] } else { 1.0 })
    }

    /// `HᵀH` with rows of `H` equal to `[-eᵀ, 1]`.
    pub fn normal_matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::zeros();
        for e in &self.0 {
            let row = Vector4::new(-e.x, -e.y, -e.z, 1.0);
            m += row * row.transpose();
        }
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gdop {
    /// `sqrt(trace((HᵀH)⁻¹))`.
    pub trace_form: f64,
    /// `sqrt(Σ 1/λᵢ)` over the eigenvalues of `HᵀH`.
    pub eigen_form: f64,
    /// Eigenvalues of `HᵀH`, ascending.
    pub eigenvalues: [f64; 4],
}

impl Gdop {
    pub fn value(&self) -> f64 {
        self.eigen_form
    }
}

/// Computes GDOP in both the trace and eigenvalue formulations.
///
/// Both routes work on `H` itself rather than on `HᵀH`: the trace form
/// inverts the triangular factor of a QR decomposition, and the eigenvalues
/// of `HᵀH` are the squared singular values of `H`.
pub fn gdop(los: &LosSet) -> Result<Gdop, GeometryError> {
    if los.len() < 4 {
        return Err(GeometryError::TooFewVectors {
            needed: 4,
            got: los.len(),
        });
    }
    let h = los.design_matrix();
    let svd = h.clone().svd(false, false);
    let mut eigenvalues = [0.0; 4];
    for (dst, s) in eigenvalues.iter_mut().zip(svd.singular_values.iter()) {
        *dst = s * s;
    }
    eigenvalues.sort_by(f64::total_cmp);
    let smallest = eigenvalues[0];
    let largest = eigenvalues[3];
    if !(smallest >= SINGULAR_RATIO * largest) {
        return Err(GeometryError::Singular {
            smallest_eigenvalue: smallest,
        });
    }
    let r: Matrix4<f64> = h.qr().r().fixed_view::<4, 4>(0, 0).into_owned();
    let r_inv = r
        .solve_upper_triangular(&Matrix4::identity())
        .ok_or(GeometryError::Singular {
            smallest_eigenvalue: smallest,
        })?;
    Ok(Gdop {
        trace_form: r_inv.norm(),
        eigen_form: eigenvalues.iter().map(|l| 1.0 / l).sum::<f64>().sqrt(),
        eigenvalues,
    })
}

/// Geodetic coordinates on the WGS-84 ellipsoid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub latitude_deg: f64,
    pub longitude_deg: f64,
    pub height_m: f64,
}

impl GeoPoint {
    pub fn new(latitude_deg: f64, longitude_deg: f64, height_m: f64) -> Result<Self, GeometryError> {
        if !(-90.0..=90.0).contains(&latitude_deg) {
            return Err(GeometryError::InvalidPoint("latitude outside [-90, 90]"));
        }
        if !(-180.0..180.0).contains(&longitude_deg) {
            return Err(GeometryError::InvalidPoint("longitude outside [-180, 180)"));
        }
        if !height_m.is_finite() {
            return Err(GeometryError::InvalidPoint("non-finite height"));
        }
        Ok(GeoPoint {
            latitude_deg,
            longitude_deg,
            height_m,
        })
    }
}

pub fn geodetic_to_ecef(p: &GeoPoint) -> Vector3<f64> {
    let (sin_lat, cos_lat) = p.latitude_deg.to_radians().sin_cos();
    let (sin_lon, cos_lon) = p.longitude_deg.to_radians().sin_cos();
    let n = WGS84_A / (1.0 - WGS84_E2 * sin_lat * sin_lat).sqrt();
    Vector3::new(
        (n + p.height_m) * cos_lat * cos_lon,
        (n + p.height_m) * cos_lat * sin_lon,
        (n * (1.0 - WGS84_E2) + p.height_m) * sin_lat,
    )
}

/// Inverse of [`geodetic_to_ecef`], by Bowring iteration on the parametric
/// latitude. Height is computed with a form that stays well conditioned on
/// the polar axis.
pub fn ecef_to_geodetic(x: &Vector3<f64>) -> GeoPoint {
    let p = x.x.hypot(x.y);
    let ep2 = WGS84_E2 / (1.0 - WGS84_E2);
    let mut beta = x.z.atan2((1.0 - WGS84_F) * p);
    let mut lat = 0.0;
    for _ in 0..8 {
        let (sb, cb) = beta.sin_cos();
        lat = (x.z + ep2 * WGS84_B * sb * sb * sb).atan2(p - WGS84_E2 * WGS84_A * cb * cb * cb);
        let next = ((1.0 - WGS84_F) * lat.sin()).atan2(lat.cos());
        if (next - beta).abs() < 1e-15 {
            break;
        }
        beta = next;
    }
    let (sin_lat, cos_lat) = lat.sin_cos();
    let height = p * cos_lat + x.z * sin_lat - WGS84_A * (1.0 - WGS84_E2 * sin_lat * sin_lat).sqrt();
    let mut lon = x.y.atan2(x.x).to_degrees();
    if lon >= 180.0 {
        lon -= 360.0;
    }
    GeoPoint {
        latitude_deg: lat.to_degrees(),
        longitude_deg: lon,
        height_m: height,
    }
}

/// Local ellipsoid normal ("up") at an ECEF position.
pub fn local_up(user_pos: &Vector3<f64>) -> Result<Vector3<f64>, GeometryError> {
    if user_pos.norm() < 1.0 {
        return Err(GeometryError::Degenerate("user at geocenter"));
    }
    let g = ecef_to_geodetic(user_pos);
    let (sin_lat, cos_lat) = g.latitude_deg.to_radians().sin_cos();
    let (sin_lon, cos_lon) = g.longitude_deg.to_radians().sin_cos();
    Ok(Vector3::new(cos_lat * cos_lon, cos_lat * sin_lon, sin_lat))
}

/// Elevation of the satellite above the local horizontal plane (degrees).
pub fn elevation_deg(sat_pos: &Vector3<f64>, user_pos: &Vector3<f64>) -> Result<f64, GeometryError> {
    let up = local_up(user_pos)?;
    elevation_with_up(sat_pos, user_pos, &up)
}

/// Same as [`elevation_deg`] with a precomputed local up vector.
pub fn elevation_with_up(
    sat_pos: &Vector3<f64>,
    user_pos: &Vector3<f64>,
    up: &Vector3<f64>,
) -> Result<f64, GeometryError> {
    let e = los_unit_vector(sat_pos, user_pos)?;
    let vertical = e.dot(up);
    let horizontal = (e - up * vertical).norm();
    Ok(vertical.atan2(horizontal).to_degrees())
}
