//! Linear-region rasters and logit profiles for networks with 2D inputs.

use std::collections::HashMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::datasets::{RayDataset2D, RayVariant};
use crate::error::{config_err, shape_err, Result};
use crate::io::encode_ppm;
use crate::network::Network;
use crate::numerics::Tensor;
use crate::verify::{evaluate_points, Nap};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds { x_min: -2.0, x_max: 2.0, y_min: -2.0, y_max: 2.0 }
    }
}

pub const DEFAULT_RESOLUTION: usize = 512;

#[derive(Clone, Debug)]
pub struct RegionRaster {
    pub bounds: Bounds,
    pub width: usize,
    pub height: usize,
    /// region index per cell, row 0 at `y_max`
    pub cells: Vec<u32>,
    /// distinct patterns in order of first appearance
    pub patterns: Vec<Nap>,
    /// per region: reaches the raster edge, directly or along a ray from the origin
    pub reaches_edge: Vec<bool>,
    pub color_seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RasterSummary {
    pub bounds: Bounds,
    pub width: usize,
    pub height: usize,
    pub region_count: usize,
    pub bounded_region_count: usize,
    pub color_seed: u64,
}

fn require_2d(net: &Network) -> Result<()> {
    if net.input_shape != [2] {
        return Err(config_err!("network {} takes inputs {:?}, not 2D points", net.name, net.input_shape));
    }
    Ok(())
}

/// NAP of every cell centre over `bounds` at `width × height`.
pub fn rasterize_regions(net: &Network, bounds: Bounds, width: usize, height: usize) -> Result<RegionRaster> {
    require_2d(net)?;
    if width == 0 || height == 0 {
        return Err(config_err!("raster resolution must be positive, got {width}x{height}"));
    }
    if !(bounds.x_min < bounds.x_max && bounds.y_min < bounds.y_max) {
        return Err(config_err!("empty raster bounds {bounds:?}"));
    }
    let dx = (bounds.x_max - bounds.x_min) / width as f64;
    let dy = (bounds.y_max - bounds.y_min) / height as f64;
    let rows_per_task = (4096 / width).max(1);
    let row_starts: Vec<usize> = (0..height).step_by(rows_per_task).collect();
    let chunks: Vec<Vec<Nap>> = row_starts
        .par_iter()
        .map(|&r0| {
            let r1 = (r0 + rows_per_task).min(height);
            let mut pts = Vec::with_capacity((r1 - r0) * width * 2);
            for r in r0..r1 {
                let y = bounds.y_max - (r as f64 + 0.5) * dy;
                for c in 0..width {
                    pts.push(bounds.x_min + (c as f64 + 0.5) * dx);
                    pts.push(y);
                }
            }
            let pts = Tensor::new(vec![(r1 - r0) * width, 2], pts)?;
            Ok(evaluate_points(net, &pts)?.into_iter().map(|e| e.nap).collect())
        })
        .collect::<Result<_>>()?;

    let mut index: HashMap<Nap, u32> = HashMap::new();
    let mut patterns = Vec::new();
    let mut cells = Vec::with_capacity(width * height);
    for nap in chunks.into_iter().flatten() {
        let id = *index.entry(nap.clone()).or_insert_with(|| {
            patterns.push(nap);
            (patterns.len() - 1) as u32
        });
        cells.push(id);
    }
    let mut raster = RegionRaster { bounds, width, height, cells, patterns, reaches_edge: Vec::new(), color_seed: 0 };
    raster.reaches_edge = trace_to_edge(net, &raster)?;
    Ok(raster)
}

/// Point where the ray from the origin through `p` leaves `bounds`.
fn edge_point(b: Bounds, p: [f64; 2]) -> Option<[f64; 2]> {
    let limit = |v: f64, lo: f64, hi: f64| {
        if v > 0.0 {
            hi / v
        } else if v < 0.0 {
            lo / v
        } else {
            f64::INFINITY
        }
    };
    let t = limit(p[0], b.x_min, b.x_max).min(limit(p[1], b.y_min, b.y_max));
    (t.is_finite() && t > 0.0).then(|| [t * p[0], t * p[1]])
}

/// A region reaches the edge if it owns a border cell, or if the ray from the
/// origin through one of its cells meets the bounds inside the same region.
fn trace_to_edge(net: &Network, raster: &RegionRaster) -> Result<Vec<bool>> {
    let mut reaches = raster.touches_border();
    let mut probes = Vec::new();
    let mut owners = Vec::new();
    for r in 0..raster.height {
        for c in 0..raster.width {
            let id = raster.region_at(r, c);
            if reaches[id as usize] {
                continue;
            }
            if let Some(q) = edge_point(raster.bounds, raster.cell_center(r, c)) {
                probes.extend_from_slice(&q);
                owners.push(id);
            }
        }
    }
    if owners.is_empty() {
        return Ok(reaches);
    }
    let evals = evaluate_points(net, &Tensor::new(vec![owners.len(), 2], probes)?)?;
    for (id, e) in owners.into_iter().zip(evals) {
        if e.nap == raster.patterns[id as usize] {
            reaches[id as usize] = true;
        }
    }
    Ok(reaches)
}

impl RegionRaster {
    pub fn region_count(&self) -> usize {
        self.patterns.len()
    }

    pub fn cell_center(&self, row: usize, col: usize) -> [f64; 2] {
        let b = self.bounds;
        let dx = (b.x_max - b.x_min) / self.width as f64;
        let dy = (b.y_max - b.y_min) / self.height as f64;
        [b.x_min + (col as f64 + 0.5) * dx, b.y_max - (row as f64 + 0.5) * dy]
    }

    pub fn region_at(&self, row: usize, col: usize) -> u32 {
        self.cells[row * self.width + col]
    }

    /// Per region, whether any of its cells lies on the raster border.
    pub fn touches_border(&self) -> Vec<bool> {
        let mut touches = vec![false; self.patterns.len()];
        let (w, h) = (self.width, self.height);
        for c in 0..w {
            touches[self.cells[c] as usize] = true;
            touches[self.cells[(h - 1) * w + c] as usize] = true;
        }
        for r in 0..h {
            touches[self.cells[r * w] as usize] = true;
            touches[self.cells[r * w + w - 1] as usize] = true;
        }
        touches
    }

    /// Regions that reach neither the raster border nor the edge of the bounds along a ray.
    pub fn bounded_region_count(&self) -> usize {
        self.reaches_edge.iter().filter(|&&t| !t).count()
    }

    pub fn summary(&self) -> RasterSummary {
        RasterSummary {
            bounds: self.bounds,
            width: self.width,
            height: self.height,
            region_count: self.region_count(),
            bounded_region_count: self.bounded_region_count(),
            color_seed: self.color_seed,
        }
    }

    pub fn region_color(&self, region: u32) -> [u8; 3] {
        let mut h = Sha256::new();
        h.update(self.color_seed.to_le_bytes());
        h.update(self.patterns[region as usize].digest().as_bytes());
        let d = h.finalize();
        [d[0], d[1], d[2]]
    }

    /// Binary PPM with one colour per region.
    pub fn to_ppm(&self) -> Vec<u8> {
        let palette: Vec<[u8; 3]> = (0..self.patterns.len() as u32).map(|r| self.region_color(r)).collect();
        let rgb: Vec<[u8; 3]> = self.cells.iter().map(|&r| palette[r as usize]).collect();
        encode_ppm(self.width, self.height, &rgb)
    }

    /// `x,y,nap_digest` per cell, row-major from the top row.
    pub fn to_csv(&self) -> String {
        let digests: Vec<String> = self.patterns.iter().map(Nap::digest).collect();
        let mut out = String::from("x,y,nap_digest\n");
        for r in 0..self.height {
            for c in 0..self.width {
                let [x, y] = self.cell_center(r, c);
                let _ = writeln!(out, "{x},{y},{}", digests[self.region_at(r, c) as usize]);
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RayProfile {
    pub direction: [f64; 2],
    pub radii: Vec<f64>,
    /// `logits[k][c]`: class `c` at `radii[k]`
    pub logits: Vec<Vec<f64>>,
}

/// Logits at `r·direction` for each radius.
pub fn ray_profile(net: &Network, direction: [f64; 2], radii: &[f64]) -> Result<RayProfile> {
    require_2d(net)?;
    let norm = direction[0].hypot(direction[1]);
    if (norm - 1.0).abs() > 1e-9 {
        return Err(config_err!("ray direction must have unit norm, got {norm}"));
    }
    if radii.is_empty() || radii[0] <= 0.0 || radii.windows(2).any(|w| w[1] <= w[0]) || radii.iter().any(|r| !r.is_finite()) {
        return Err(config_err!("radii must be positive, finite and strictly increasing"));
    }
    let pts: Vec<f64> = radii.iter().flat_map(|&r| [r * direction[0], r * direction[1]]).collect();
    let logits = net.logits_batch(&Tensor::new(vec![radii.len(), 2], pts)?)?;
    Ok(RayProfile {
        direction,
        radii: radii.to_vec(),
        logits: (0..radii.len()).map(|k| logits.row(k).to_vec()).collect(),
    })
}

impl RayProfile {
    /// `r,logit_0,logit_1,…`
    pub fn to_csv(&self) -> String {
        let classes = self.logits.first().map_or(0, Vec::len);
        let mut out = String::from("r");
        for c in 0..classes {
            let _ = write!(out, ",logit_{c}");
        }
        out.push('\n');
        for (r, row) in self.radii.iter().zip(&self.logits) {
            out.push_str(&r.to_string());
            for v in row {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointFit {
    pub point: [f64; 2],
    pub label: usize,
    pub logit: f64,
    pub fitted: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub variant: RayVariant,
    pub points: Vec<PointFit>,
    pub fitted: usize,
    pub accuracy: f64,
}

/// Binary score of a 2D network: its single logit, or `z_1 − z_0` for two logits.
fn binary_scores(net: &Network, points: &Tensor) -> Result<Vec<f64>> {
    let logits = net.logits_batch(points)?;
    match net.class_count {
        1 => Ok(logits.data().to_vec()),
        2 => Ok((0..logits.batch()).map(|i| logits.row(i)[1] - logits.row(i)[0]).collect()),
        c => Err(shape_err!("fit report needs a binary head, network has {c} outputs")),
    }
}

/// A point is fitted when its score is negative for label 0 and positive for label 1.
pub fn fit_report(net: &Network, ds: &RayDataset2D) -> Result<FitReport> {
    if net.input_shape != [2] {
        return Err(shape_err!("network {} takes inputs {:?}, not 2D points", net.name, net.input_shape));
    }
    let scores = binary_scores(net, &ds.points)?;
    let points: Vec<PointFit> = scores
        .iter()
        .zip(&ds.labels)
        .enumerate()
        .map(|(i, (&logit, &label))| {
            let p = ds.points.row(i);
            let fitted = if label == 0 { logit < 0.0 } else { logit > 0.0 };
            PointFit { point: [p[0], p[1]], label, logit, fitted }
        })
        .collect();
    let fitted = points.iter().filter(|p| p.fitted).count();
    let accuracy = if points.is_empty() { 0.0 } else { fitted as f64 / points.len() as f64 };
    Ok(FitReport { variant: ds.variant, points, fitted, accuracy })
}
