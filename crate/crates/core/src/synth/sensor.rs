use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::terrain::HeightField;
use crate::error::{Error, Result};
use crate::survey::Survey;

/// Bisection stops once the bracket on the vertical drop is this small (meters).
const ROOT_TOLERANCE: f64 = 1e-4;

/// Straight survey line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Track {
    pub start: [f64; 2],
    /// Heading in degrees, counter-clockwise from +x.
    pub heading_deg: f64,
}

impl Default for Track {
    fn default() -> Self {
        Self { start: [50.0, 100.0], heading_deg: 0.0 }
    }
}

impl Track {
    fn direction(&self) -> [f64; 2] {
        let (s, c) = self.heading_deg.to_radians().sin_cos();
        [c, s]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorConfig {
    pub beams: usize,
    /// Full fan opening, degrees.
    pub swath_angle: f64,
    /// Height of the transducer above the local seafloor, meters.
    pub altitude: f64,
    /// Along-track distance between pings, meters (speed / ping rate).
    pub ping_spacing: f64,
    pub pings: usize,
    pub track: Track,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self {
            beams: 400,
            swath_angle: 120.0,
            altitude: 20.0,
            ping_spacing: 2.0 / 2.5,
            pings: 32,
            track: Track::default(),
        }
    }
}

impl SensorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(format!("sensor: {m}")));
        if self.beams < 2 {
            return bad(format!("beams must be at least 2, got {}", self.beams));
        }
        if !(self.swath_angle > 0.0 && self.swath_angle < 180.0) {
            return bad(format!("swath_angle must be in (0, 180), got {}", self.swath_angle));
        }
        if !(self.altitude > 0.0 && self.ping_spacing > 0.0) {
            return bad("altitude and ping_spacing must be positive".into());
        }
        Ok(())
    }

    /// Beam angles from vertical, radians, uniformly spanning the swath.
    pub fn beam_angles(&self) -> Vec<f64> {
        let half = 0.5 * self.swath_angle.to_radians();
        let step = 2.0 * half / (self.beams - 1) as f64;
        (0..self.beams).map(|b| -half + b as f64 * step).collect()
    }

    /// Across-track half width of the swath over a flat floor.
    pub fn half_swath_width(&self) -> f64 {
        self.altitude * (0.5 * self.swath_angle.to_radians()).tan()
    }
}

/// Trace a planar fan of beams per ping and intersect each with the terrain.
///
/// Returns a survey whose raw and clean points coincide and whose mask is all false.
pub fn simulate_survey(terrain: &HeightField, sensor: &SensorConfig) -> Result<Survey> {
    sensor.validate()?;
    let dir = sensor.track.direction();
    // Across-track unit vector (to port).
    let across = [-dir[1], dir[0]];
    let start = sensor.track.start;
    let margin = sensor.half_swath_width();
    let end = [
        start[0] + dir[0] * sensor.ping_spacing * sensor.pings.saturating_sub(1) as f64,
        start[1] + dir[1] * sensor.ping_spacing * sensor.pings.saturating_sub(1) as f64,
    ];
    for p in [start, end] {
        for s in [-margin, margin] {
            let (x, y) = (p[0] + s * across[0], p[1] + s * across[1]);
            if !terrain.contains(x, y) {
                return Err(Error::InvalidConfig(format!(
                    "track leaves the terrain extent (swath edge at ({x:.1}, {y:.1}))"
                )));
            }
        }
    }

    let angles = sensor.beam_angles();
    let mut xyz = Vec::with_capacity(sensor.pings * sensor.beams);
    for ping in 0..sensor.pings {
        let along = ping as f64 * sensor.ping_spacing;
        let v = [start[0] + dir[0] * along, start[1] + dir[1] * along];
        let vehicle_depth = terrain.depth(v[0], v[1]) - sensor.altitude;
        for (beam, &theta) in angles.iter().enumerate() {
            let tan = theta.tan();
            let at = |t: f64| [v[0] + t * tan * across[0], v[1] + t * tan * across[1]];
            // Seafloor depth minus ray depth after a vertical drop of t meters.
            let gap = |t: f64| {
                let p = at(t);
                terrain.depth(p[0], p[1]) - (vehicle_depth + t)
            };
            let miss = Error::RayMiss { ping, beam };
            let mut hi = 2.0 * sensor.altitude;
            while gap(hi) > 0.0 {
                hi *= 2.0;
                let p = at(hi);
                if !terrain.contains(p[0], p[1]) || hi > 1e6 {
                    return Err(miss);
                }
            }
            let mut lo = 0.0;
            while hi - lo > ROOT_TOLERANCE {
                let mid = 0.5 * (lo + hi);
                if gap(mid) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let p = at(0.5 * (lo + hi));
            if !terrain.contains(p[0], p[1]) {
                return Err(miss);
            }
            xyz.push([p[0], p[1], terrain.depth(p[0], p[1])]);
        }
    }

    let mut survey = Survey::new(sensor.pings, sensor.beams, xyz.clone())?;
    survey.xyz_clean = Some(xyz);
    survey.outlier_mask = Some(vec![false; survey.len()]);
    survey.meta = BTreeMap::new();
    Ok(survey)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::terrain::{gen_terrain, TerrainConfig};

    fn flat() -> HeightField {
        gen_terrain(&TerrainConfig { num_bumps: 0, groove_count: 0, ..Default::default() }).unwrap()
    }

    #[test]
    fn flat_floor_depths_and_offsets() {
        let sensor = SensorConfig { beams: 41, ..Default::default() };
        let s = simulate_survey(&flat(), &sensor).unwrap();
        assert!(s.xyz_raw.iter().all(|p| p[2] == 90.0));
        let angles = sensor.beam_angles();
        for ping in 0..sensor.pings {
            for (b, theta) in angles.iter().enumerate() {
                let p = s.xyz_raw[s.index(ping, b)];
                let offset = p[1] - sensor.track.start[1];
                assert!((offset - 20.0 * theta.tan()).abs() <= 1e-3);
            }
        }
        let outer = s.xyz_raw[40][1] - 100.0;
        assert!((outer - 34.641).abs() < 1e-3, "{outer}");
    }

    #[test]
    fn x_constant_within_ping_and_increasing() {
        let s = simulate_survey(&flat(), &SensorConfig { beams: 16, ..Default::default() }).unwrap();
        for ping in 0..s.pings {
            let x0 = s.xyz_raw[s.index(ping, 0)][0];
            assert!((0..16).all(|b| s.xyz_raw[s.index(ping, b)][0] == x0));
            if ping > 0 {
                let prev = s.xyz_raw[s.index(ping - 1, 0)][0];
                assert!((x0 - prev - 0.8).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn rough_terrain_points_lie_on_surface() {
        let t = gen_terrain(&TerrainConfig { seed: 3, ..Default::default() }).unwrap();
        let s = simulate_survey(&t, &SensorConfig { beams: 64, pings: 50, ..Default::default() }).unwrap();
        for p in &s.xyz_raw {
            assert_eq!(p[2], t.depth(p[0], p[1]));
        }
    }

    #[test]
    fn track_outside_extent_is_rejected() {
        let sensor = SensorConfig {
            track: Track { start: [50.0, 10.0], heading_deg: 0.0 },
            ..Default::default()
        };
        assert!(simulate_survey(&flat(), &sensor).is_err());
    }
}
