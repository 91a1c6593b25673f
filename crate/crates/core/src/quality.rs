//! Point-cloud fidelity against the true object surface, and mesh size
//! relative to the voxel grid it replaces.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::accumulate::GridSpec;
use crate::cloud::PointCloud;
use crate::delaunay::TetMesh;
use crate::phantom::Phantom;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    /// Per-point distance to the nearest surface (mm). Written separately as CSV.
    #[serde(skip)]
    pub distances: Vec<f64>,
    pub point_count: usize,
    pub grid_res: f64,
    /// Half the voxel diagonal: `grid_res·√3/2`.
    pub tolerance: f64,
    /// Fraction of points within `tolerance`; `None` for an empty cloud.
    pub optimum_fraction: Option<f64>,
    pub mean_distance: Option<f64>,
    pub p95_distance: Option<f64>,
    pub max_distance: Option<f64>,
    /// Set when the cloud was empty and the summary is undefined.
    pub empty: bool,
}

pub fn tolerance_for(grid_res: f64) -> f64 {
    grid_res * 3f64.sqrt() / 2.0
}

/// Scores precomputed distances.
pub fn report_from_distances(distances: Vec<f64>, grid_res: f64) -> Result<QualityReport> {
    if !(grid_res > 0.0 && grid_res.is_finite()) {
        return Err(Error::InputValidation(format!("grid resolution must be positive, got {grid_res}")));
    }
    if let Some(d) = distances.iter().find(|d| !(d.is_finite() && **d >= 0.0)) {
        return Err(Error::InputValidation(format!("invalid surface distance {d}")));
    }
    let tolerance = tolerance_for(grid_res);
    let n = distances.len();
    let mut report = QualityReport {
        distances,
        point_count: n,
        grid_res,
        tolerance,
        optimum_fraction: None,
        mean_distance: None,
        p95_distance: None,
        max_distance: None,
        empty: n == 0,
    };
    if n > 0 {
        let within = report.distances.iter().filter(|&&d| d <= tolerance).count();
        report.optimum_fraction = Some(within as f64 / n as f64);
        report.mean_distance = Some(report.distances.iter().sum::<f64>() / n as f64);
        let mut sorted = report.distances.clone();
        sorted.sort_by(f64::total_cmp);
        report.p95_distance = Some(nearest_rank(&sorted, 0.95));
        report.max_distance = sorted.last().copied();
    }
    Ok(report)
}

fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

/// Distance from every cloud point to the phantom surface, scored against
/// the voxel half-diagonal.
pub fn cloud_quality(cloud: &PointCloud, truth: &Phantom, grid_res: f64) -> Result<QualityReport> {
    let distances: Vec<f64> = cloud.points.par_iter().map(|p| truth.surface_distance(p)).collect();
    report_from_distances(distances, grid_res)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Compression {
    pub cells: usize,
    pub voxels: usize,
    pub ratio: f64,
}

pub fn compression_ratio(mesh: &TetMesh, grid: &GridSpec) -> Compression {
    compression_from_counts(mesh.len(), grid.voxel_count())
}

pub fn compression_from_counts(cells: usize, voxels: usize) -> Compression {
    Compression { cells, voxels, ratio: cells as f64 / voxels as f64 }
}

impl QualityReport {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    /// One line per point: `index,x,y,z,distance`.
    pub fn write_csv(&self, path: &Path, cloud: &PointCloud) -> Result<()> {
        if cloud.len() != self.distances.len() {
            return Err(Error::InputValidation("cloud and report sizes differ".into()));
        }
        let mut s = String::from("index,x,y,z,distance\n");
        for (i, (p, d)) in cloud.points.iter().zip(&self.distances).enumerate() {
            let _ = writeln!(s, "{i},{},{},{},{d}", p.x, p.y, p.z);
        }
        fs::write(path, s).map_err(|e| Error::io(path, e))
    }

    /// Histogram rows `(bin_center, count, fraction)` with bins of width
    /// `tolerance / 4`; the last bin collects everything beyond four tolerances.
    pub fn histogram(&self) -> Vec<(f64, usize, f64)> {
        let width = self.tolerance / 4.0;
        let bins = 16;
        let mut counts = vec![0usize; bins + 1];
        for &d in &self.distances {
            counts[((d / width) as usize).min(bins)] += 1;
        }
        let n = self.distances.len().max(1) as f64;
        counts
            .iter()
            .enumerate()
            .map(|(i, &c)| ((i as f64 + 0.5) * width, c, c as f64 / n))
            .collect()
    }

    /// Whitespace-separated histogram for gnuplot.
    pub fn write_histogram(&self, path: &Path) -> Result<()> {
        let mut s = format!("# tolerance {}\n# bin_center count fraction\n", self.tolerance);
        for (c, k, f) in self.histogram() {
            let _ = writeln!(s, "{c} {k} {f}");
        }
        fs::write(path, s).map_err(|e| Error::io(path, e))
    }
}
