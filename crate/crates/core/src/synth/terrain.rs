use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Gaussian bumps are truncated at this many sigmas and rescaled so the
/// field stays continuous and the peak keeps its nominal amplitude.
const BUMP_CUTOFF_SIGMAS: f64 = 4.0;
const CELL_SIZE: f64 = 32.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TerrainConfig {
    /// Size of the area in meters along x and y; the origin is the lower-left corner.
    pub extent: [f64; 2],
    /// Depth of the flat reference floor, meters (positive down).
    pub base_depth: f64,
    pub num_bumps: usize,
    /// Signed amplitude range, meters.
    pub bump_amplitude: [f64; 2],
    pub bump_sigma: [f64; 2],
    pub groove_count: usize,
    pub groove_depth: f64,
    pub groove_width: f64,
    pub groove_length: [f64; 2],
    pub seed: u64,
}

impl Default for TerrainConfig {
    fn default() -> Self {
        Self {
            extent: [1000.0, 200.0],
            base_depth: 90.0,
            num_bumps: 100,
            bump_amplitude: [-2.0, 2.0],
            bump_sigma: [4.0, 25.0],
            groove_count: 30,
            groove_depth: 0.4,
            groove_width: 2.5,
            groove_length: [40.0, 300.0],
            seed: 0,
        }
    }
}

impl TerrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("terrain: {m}")));
        if !(self.extent[0] > 0.0 && self.extent[1] > 0.0) {
            return bad("extent must be positive");
        }
        if !self.base_depth.is_finite() {
            return bad("base_depth must be finite");
        }
        if self.num_bumps > 0
            && !(self.bump_sigma[0] > 0.0 && self.bump_sigma[0] <= self.bump_sigma[1])
        {
            return bad("bump_sigma must be a positive, ordered range");
        }
        if self.bump_amplitude[0] > self.bump_amplitude[1] {
            return bad("bump_amplitude range is reversed");
        }
        if self.groove_count > 0
            && !(self.groove_width > 0.0
                && self.groove_length[0] >= 0.0
                && self.groove_length[0] <= self.groove_length[1])
        {
            return bad("groove width/length invalid");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bump {
    pub center: [f64; 2],
    pub amplitude: f64,
    pub sigma: f64,
}

impl Bump {
    fn radius(&self) -> f64 {
        BUMP_CUTOFF_SIGMAS * self.sigma
    }

    fn eval(&self, x: f64, y: f64) -> f64 {
        let r2 = (x - self.center[0]).powi(2) + (y - self.center[1]).powi(2);
        let cut = (-0.5 * BUMP_CUTOFF_SIGMAS * BUMP_CUTOFF_SIGMAS).exp();
        let g = (-0.5 * r2 / (self.sigma * self.sigma)).exp();
        if g <= cut {
            0.0
        } else {
            self.amplitude * (g - cut) / (1.0 - cut)
        }
    }
}

/// A straight trawl-mark style groove with a raised-cosine cross-section.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Groove {
    pub start: [f64; 2],
    pub end: [f64; 2],
    pub width: f64,
    pub depth: f64,
}

impl Groove {
    fn eval(&self, x: f64, y: f64) -> f64 {
        let (dx, dy) = (self.end[0] - self.start[0], self.end[1] - self.start[1]);
        let len2 = dx * dx + dy * dy;
        let t = if len2 > 0.0 {
            (((x - self.start[0]) * dx + (y - self.start[1]) * dy) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let d = ((x - self.start[0] - t * dx).powi(2) + (y - self.start[1] - t * dy).powi(2)).sqrt();
        if d >= self.width {
            0.0
        } else {
            self.depth * 0.5 * (1.0 + (std::f64::consts::PI * d / self.width).cos())
        }
    }

    fn bbox(&self) -> [f64; 4] {
        [
            self.start[0].min(self.end[0]) - self.width,
            self.start[1].min(self.end[1]) - self.width,
            self.start[0].max(self.end[0]) + self.width,
            self.start[1].max(self.end[1]) + self.width,
        ]
    }
}

#[derive(Debug, Clone, Copy)]
enum Feature {
    Bump(usize),
    Groove(usize),
}

/// Continuous depth field `z(x, y)`; features are bucketed on a coarse grid.
#[derive(Debug, Clone)]
pub struct HeightField {
    pub base_depth: f64,
    pub extent: [f64; 2],
    bumps: Vec<Bump>,
    grooves: Vec<Groove>,
    origin: [f64; 2],
    cells: [usize; 2],
    buckets: Vec<Vec<Feature>>,
}

impl HeightField {
    pub fn from_features(base_depth: f64, extent: [f64; 2], bumps: Vec<Bump>, grooves: Vec<Groove>) -> Self {
        let mut boxes: Vec<(Feature, [f64; 4])> = Vec::new();
        for (i, b) in bumps.iter().enumerate() {
            let r = b.radius();
            boxes.push((
                Feature::Bump(i),
                [b.center[0] - r, b.center[1] - r, b.center[0] + r, b.center[1] + r],
            ));
        }
        for (i, g) in grooves.iter().enumerate() {
            boxes.push((Feature::Groove(i), g.bbox()));
        }
        let mut lo = [0.0f64, 0.0];
        let mut hi = extent;
        for (_, b) in &boxes {
            lo = [lo[0].min(b[0]), lo[1].min(b[1])];
            hi = [hi[0].max(b[2]), hi[1].max(b[3])];
        }
        let cells = [
            (((hi[0] - lo[0]) / CELL_SIZE).ceil() as usize).max(1),
            (((hi[1] - lo[1]) / CELL_SIZE).ceil() as usize).max(1),
        ];
        let mut buckets = vec![Vec::new(); cells[0] * cells[1]];
        let cell_of = |v: f64, axis: usize| -> usize {
            (((v - lo[axis]) / CELL_SIZE).floor().max(0.0) as usize).min(cells[axis] - 1)
        };
        for (f, b) in boxes {
            for cx in cell_of(b[0], 0)..=cell_of(b[2], 0) {
                for cy in cell_of(b[1], 1)..=cell_of(b[3], 1) {
                    buckets[cy * cells[0] + cx].push(f);
                }
            }
        }
        Self { base_depth, extent, bumps, grooves, origin: lo, cells, buckets }
    }

    pub fn bumps(&self) -> &[Bump] {
        &self.bumps
    }

    pub fn grooves(&self) -> &[Groove] {
        &self.grooves
    }

    /// Depth at `(x, y)`; defined everywhere, flat outside all features.
    pub fn depth(&self, x: f64, y: f64) -> f64 {
        let fx = (x - self.origin[0]) / CELL_SIZE;
        let fy = (y - self.origin[1]) / CELL_SIZE;
        if !(fx >= 0.0 && fy >= 0.0) || fx as usize >= self.cells[0] || fy as usize >= self.cells[1] {
            return self.base_depth;
        }
        let mut z = self.base_depth;
        for f in &self.buckets[fy as usize * self.cells[0] + fx as usize] {
            z += match *f {
                Feature::Bump(i) => self.bumps[i].eval(x, y),
                Feature::Groove(i) => self.grooves[i].eval(x, y),
            };
        }
        z
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        (0.0..=self.extent[0]).contains(&x) && (0.0..=self.extent[1]).contains(&y)
    }
}

fn range(rng: &mut impl Rng, r: [f64; 2]) -> f64 {
    if r[1] > r[0] {
        rng.random_range(r[0]..r[1])
    } else {
        r[0]
    }
}

/// Random seafloor: base depth plus Gaussian bumps and linear grooves.
pub fn gen_terrain(cfg: &TerrainConfig) -> Result<HeightField> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let [w, h] = cfg.extent;
    let bumps = (0..cfg.num_bumps)
        .map(|_| Bump {
            center: [rng.random_range(0.0..w), rng.random_range(0.0..h)],
            amplitude: range(&mut rng, cfg.bump_amplitude),
            sigma: range(&mut rng, cfg.bump_sigma),
        })
        .collect();
    let grooves = (0..cfg.groove_count)
        .map(|_| {
            let c = [rng.random_range(0.0..w), rng.random_range(0.0..h)];
            let heading = rng.random_range(0.0..std::f64::consts::PI);
            let half = 0.5 * range(&mut rng, cfg.groove_length);
            let (s, co) = heading.sin_cos();
            Groove {
                start: [c[0] - half * co, c[1] - half * s],
                end: [c[0] + half * co, c[1] + half * s],
                width: cfg.groove_width,
                depth: cfg.groove_depth,
            }
        })
        .collect();
    Ok(HeightField::from_features(cfg.base_depth, cfg.extent, bumps, grooves))
}
