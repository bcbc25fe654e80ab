#![allow(dead_code)]

use mixfix::geometry::{ecef_to_geodetic, elevation_deg, geodetic_to_ecef, GeoPoint};
use mixfix::model::{wrap_to_fraction, ConstellationId, MeasurementEpoch, Modulus, SatelliteObservation};
use mixfix::simulator::{DataRate, SimScenario};
use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// (satellite, full pseudorange, fractional pseudorange, recovered full) as
/// printed in the published simulation table.
pub const TABLE1: [(&str, f64, f64, f64); 8] = [
    ("BDS 6", 42_578_331.90, 7_802.87, 42_578_331.90),
    ("BDS 7", 43_977_853.55, -91_637.78, 43_977_853.55),
    ("BDS 13", 24_920_128.79, 37_354.78, 24_920_128.79),
    ("BDS 14", 26_122_983.62, 41_039.78, 26_122_983.62),
    ("GPS 3", 28_345_069.65, -135_213.86, 28_345_069.65),
    ("GPS 11", 26_047_901.81, -34_042.04, 26_047_901.81),
    ("GPS 18", 23_974_396.63, -9_000.01, 23_974_396.63),
    ("GPS 26", 24_044_662.90, 61_266.27, 24_044_662.90),
];

/// Table values are printed to 2 decimals; the bound is inclusive and the
/// extra 1e-6 m only absorbs binary representation of the decimal inputs.
pub const TABLE_TOL_M: f64 = 0.01 + 1e-6;

pub fn table_truth() -> Vector3<f64> {
    geodetic_to_ecef(&GeoPoint::new(30.0, 110.0, 50.0).unwrap())
}

/// Point at the given azimuth/elevation and range from `user`.
pub fn sat_at(user: &Vector3<f64>, az_deg: f64, el_deg: f64, range: f64) -> Vector3<f64> {
    let g = ecef_to_geodetic(user);
    let (sl, cl) = g.latitude_deg.to_radians().sin_cos();
    let (so, co) = g.longitude_deg.to_radians().sin_cos();
    let east = Vector3::new(-so, co, 0.0);
    let north = Vector3::new(-sl * co, -sl * so, cl);
    let up = Vector3::new(cl * co, cl * so, sl);
    let (sa, ca) = az_deg.to_radians().sin_cos();
    let (se, ce) = el_deg.to_radians().sin_cos();
    user + (east * (ce * sa) + north * (ce * ca) + up * se) * range
}

pub struct TableEpoch {
    pub truth: Vector3<f64>,
    pub clock_bias_m: f64,
    pub offset_m: f64,
    /// 4+ GEO fulls from the nominal scenario, then the 8 table satellites
    /// as fractionals.
    pub mixed: MeasurementEpoch,
    /// Same satellites with every pseudorange full.
    pub all_full: MeasurementEpoch,
}

/// Epoch with the nominal scenario's visible GEOs as full measurements
/// (b = 10 ms, σ = 1.3 m) and the eight table satellites placed so that their
/// full pseudoranges, including clock, b_AB = 1.1 µs for GPS and noise,
/// equal the table values exactly.
pub fn table_epoch(seed: u64) -> TableEpoch {
    let scenario = SimScenario::nominal(seed);
    let truth = table_truth();
    let clock = scenario.clock_bias_m();
    let offset = scenario.intersystem_offset_m();
    let noise = Normal::new(0.0, scenario.noise_sigma_m).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = Modulus::one_ms();

    let mut mixed = Vec::new();
    let mut full = Vec::new();
    for s in scenario.positions_at(0.0) {
        if s.cfg.data_rate != DataRate::FastNav || elevation_deg(&s.pos, &truth).unwrap() < 5.0 {
            continue;
        }
        let pr = (s.pos - truth).norm() + clock + noise.sample(&mut rng);
        let o = SatelliteObservation::full(s.cfg.sat_id.clone(), ConstellationId::A, s.pos, pr);
        mixed.push(o.clone());
        full.push(o);
    }
    assert!(mixed.len() >= 4);

    for (k, (id, full_pr, _, _)) in TABLE1.iter().enumerate() {
        let constellation = if id.starts_with("BDS") {
            ConstellationId::A
        } else {
            ConstellationId::B
        };
        let mut range = full_pr - clock - noise.sample(&mut rng);
        if constellation == ConstellationId::B {
            range -= offset;
        }
        let az = 45.0 * k as f64 + 10.0;
        let el = 15.0 + 8.0 * k as f64;
        let pos = sat_at(&truth, az, el, range);
        full.push(SatelliteObservation::full(*id, constellation, pos, *full_pr));
        mixed.push(SatelliteObservation::fractional(
            *id,
            constellation,
            pos,
            wrap_to_fraction(*full_pr, m).unwrap(),
            m,
        ));
    }
    TableEpoch {
        truth,
        clock_bias_m: clock,
        offset_m: offset,
        mixed: MeasurementEpoch::new(0.0, mixed),
        all_full: MeasurementEpoch::new(0.0, full),
    }
}
