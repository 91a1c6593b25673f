//! Ray-driven backprojection of binary edge maps into a voxel count volume.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::edge2d::EdgeMap;
use crate::error::{Error, Result};
use crate::geometry::{AcquisitionGeometry, Ray};
use crate::Vec3;

/// Regular voxel lattice. Voxel `(i, j, k)` spans
/// `origin + (i, j, k) * voxel_size` to `origin + (i+1, j+1, k+1) * voxel_size`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub dims: [usize; 3],
    #[serde(rename = "origin_mm")]
    pub origin: [f64; 3],
    #[serde(rename = "voxel_size_mm")]
    pub voxel_size: [f64; 3],
}

impl GridSpec {
    /// Isotropic grid centered on the isocenter.
    pub fn centered(dims: [usize; 3], voxel: f64) -> Result<GridSpec> {
        let origin = [0, 1, 2].map(|a| -0.5 * dims[a] as f64 * voxel);
        let g = GridSpec {
            dims,
            origin,
            voxel_size: [voxel; 3],
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.iter().any(|&n| n < 2) {
            return Err(Error::InvalidGeometry(format!("grid dims {:?} must be at least 2", self.dims)));
        }
        if self.voxel_size.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidGeometry(format!("voxel size {:?} must be positive", self.voxel_size)));
        }
        if self.origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::InvalidGeometry("grid origin must be finite".into()));
        }
        Ok(())
    }

    pub fn voxel_count(&self) -> usize {
        self.dims.iter().product()
    }

    /// Isotropic voxel edge; the largest edge otherwise.
    pub fn resolution(&self) -> f64 {
        self.voxel_size.iter().copied().fold(0.0, f64::max)
    }

    #[inline]
    pub fn linear_index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn voxel_coords(&self, l: usize) -> [usize; 3] {
        let [nx, ny, _] = self.dims;
        [l % nx, (l / nx) % ny, l / (nx * ny)]
    }

    /// Coordinate of lattice plane `i` along `axis`.
    #[inline]
    pub fn plane(&self, axis: usize, i: usize) -> f64 {
        self.origin[axis] + i as f64 * self.voxel_size[axis]
    }

    pub fn centroid(&self, l: usize) -> Vec3 {
        let c = self.voxel_coords(l);
        Vec3::from([0, 1, 2].map(|a| self.origin[a] + (c[a] as f64 + 0.5) * self.voxel_size[a]))
    }
}

/// Voxels whose open interior the ray (`t ≥ 0`) passes through, in order of
/// traversal. Segments of zero length, such as a ray grazing a voxel face or
/// edge, do not count.
pub fn traverse_ray(grid: &GridSpec, ray: &Ray) -> Vec<usize> {
    let mut out = Vec::new();
    traverse_ray_into(grid, ray, &mut out);
    out
}

/// Appends the traversal to `out`; returns the number of voxels added.
pub fn traverse_ray_into(grid: &GridSpec, ray: &Ray, out: &mut Vec<usize>) -> usize {
    let start = out.len();
    let o = ray.origin;
    let d = ray.direction;
    let mut t_enter = 0.0f64;
    let mut t_exit = f64::INFINITY;
    // Per axis: fixed index for axis-parallel rays, otherwise the plane
    // counter state for the merge below.
    let mut fixed = [None::<usize>; 3];
    for a in 0..3 {
        let n = grid.dims[a];
        if d[a] == 0.0 {
            let lo = grid.plane(a, 0);
            let hi = grid.plane(a, n);
            if !(o[a] > lo && o[a] < hi) {
                return 0;
            }
            let mut i = (((o[a] - lo) / grid.voxel_size[a]).floor() as usize).min(n - 1);
            while i > 0 && o[a] <= grid.plane(a, i) {
                i -= 1;
            }
            while i + 1 < n && o[a] >= grid.plane(a, i + 1) {
                i += 1;
            }
            if o[a] <= grid.plane(a, i) || o[a] >= grid.plane(a, i + 1) {
                return 0;
            }
            fixed[a] = Some(i);
        } else {
            let t0 = (grid.plane(a, 0) - o[a]) / d[a];
            let t1 = (grid.plane(a, n) - o[a]) / d[a];
            t_enter = t_enter.max(t0.min(t1));
            t_exit = t_exit.min(t0.max(t1));
        }
    }
    if !(t_enter < t_exit) {
        return 0;
    }
    // Plane number `c` in traversal order along axis `a`, and its t.
    let plane_t = |a: usize, c: usize| -> f64 {
        let n = grid.dims[a];
        let i = if d[a] > 0.0 { c } else { n - c };
        (grid.plane(a, i) - o[a]) / d[a]
    };
    // crossed[a] = planes with t ≤ current t.
    let mut crossed = [0usize; 3];
    for a in 0..3 {
        if fixed[a].is_none() {
            let n = grid.dims[a];
            while crossed[a] <= n && plane_t(a, crossed[a]) <= t_enter {
                crossed[a] += 1;
            }
        }
    }
    let index_on = |a: usize, crossed: &[usize; 3]| -> usize {
        match fixed[a] {
            Some(i) => i,
            None if d[a] > 0.0 => crossed[a] - 1,
            None => grid.dims[a] - crossed[a],
        }
    };
    let mut t = t_enter;
    while t < t_exit {
        let mut t_next = t_exit;
        for a in 0..3 {
            if fixed[a].is_none() && crossed[a] <= grid.dims[a] {
                t_next = t_next.min(plane_t(a, crossed[a]));
            }
        }
        if t_next > t {
            let idx = [0, 1, 2].map(|a| index_on(a, &crossed));
            out.push(grid.linear_index(idx[0], idx[1], idx[2]));
        }
        for a in 0..3 {
            if fixed[a].is_none() {
                while crossed[a] <= grid.dims[a] && plane_t(a, crossed[a]) <= t_next {
                    crossed[a] += 1;
                }
            }
        }
        t = t_next;
    }
    out.len() - start
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AccumulationMode {
    /// Each view adds at most 1 to a voxel, so counts never exceed the
    /// number of views.
    #[default]
    Saturated,
    /// Every edge ray through a voxel adds 1.
    Unsaturated,
}

/// Per-voxel edge-ray counts.
#[derive(Debug, Clone, PartialEq)]
pub struct CountVolume {
    pub grid: GridSpec,
    pub counts: Vec<u32>,
    pub num_views: usize,
    pub mode: AccumulationMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CountHeader {
    dims: [usize; 3],
    origin_mm: [f64; 3],
    voxel_size_mm: [f64; 3],
    num_views: usize,
    saturated: bool,
    dtype: String,
    order: String,
}

impl CountVolume {
    pub fn get(&self, i: usize, j: usize, k: usize) -> u32 {
        self.counts[self.grid.linear_index(i, j, k)]
    }

    pub fn nonzero(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }

    pub fn header_path(raw: &Path) -> PathBuf {
        raw.with_extension("json")
    }

    /// Raw little-endian u32, x fastest, plus a `.json` header beside it.
    pub fn write(&self, raw: &Path) -> Result<()> {
        let bytes: Vec<u8> = self.counts.iter().flat_map(|c| c.to_le_bytes()).collect();
        std::fs::write(raw, bytes).map_err(|e| Error::io(raw, e))?;
        let header = CountHeader {
            dims: self.grid.dims,
            origin_mm: self.grid.origin,
            voxel_size_mm: self.grid.voxel_size,
            num_views: self.num_views,
            saturated: self.mode == AccumulationMode::Saturated,
            dtype: "u32le".into(),
            order: "x-fastest".into(),
        };
        let hp = Self::header_path(raw);
        std::fs::write(&hp, serde_json::to_string_pretty(&header)?).map_err(|e| Error::io(&hp, e))
    }

    pub fn read(raw: &Path) -> Result<CountVolume> {
        let hp = Self::header_path(raw);
        let text = std::fs::read_to_string(&hp).map_err(|e| Error::io(&hp, e))?;
        let h: CountHeader = serde_json::from_str(&text)?;
        if h.dtype != "u32le" || h.order != "x-fastest" {
            return Err(Error::Config(format!("unsupported count layout {} / {}", h.dtype, h.order)));
        }
        let grid = GridSpec {
            dims: h.dims,
            origin: h.origin_mm,
            voxel_size: h.voxel_size_mm,
        };
        grid.validate()?;
        let bytes = std::fs::read(raw).map_err(|e| Error::io(raw, e))?;
        if bytes.len() != grid.voxel_count() * 4 {
            return Err(Error::Parse {
                offset: bytes.len() as u64,
                message: format!("count file holds {} bytes, expected {}", bytes.len(), grid.voxel_count() * 4),
            });
        }
        let counts = bytes
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(CountVolume {
            grid,
            counts,
            num_views: h.num_views,
            mode: if h.saturated {
                AccumulationMode::Saturated
            } else {
                AccumulationMode::Unsaturated
            },
        })
    }
}

fn check_inputs(maps: &[EdgeMap], geom: &AcquisitionGeometry, grid: &GridSpec) -> Result<()> {
    geom.validate()?;
    grid.validate()?;
    if maps.len() != geom.num_projections {
        return Err(Error::Config(format!(
            "{} edge maps for {} projections",
            maps.len(),
            geom.num_projections
        )));
    }
    for (k, m) in maps.iter().enumerate() {
        if m.dims() != geom.detector_pixels {
            return Err(Error::Config(format!(
                "edge map {k} is {:?}, detector is {:?}",
                m.dims(),
                geom.detector_pixels
            )));
        }
    }
    Ok(())
}

/// Voxel incidences of one view, deduplicated in saturated mode.
fn view_hits(map: &EdgeMap, k: usize, geom: &AcquisitionGeometry, grid: &GridSpec, mode: AccumulationMode) -> Result<Vec<usize>> {
    let mut hits = Vec::new();
    for v in 0..map.height {
        for u in 0..map.width {
            if map.get(u, v) != 0 {
                let ray = geom.ray_for_pixel(k, u, v)?;
                traverse_ray_into(grid, &ray, &mut hits);
            }
        }
    }
    if mode == AccumulationMode::Saturated {
        hits.sort_unstable();
        hits.dedup();
    }
    Ok(hits)
}

/// Counts of edge rays per voxel over all views. Views are processed in
/// parallel into per-worker partial grids that are summed at the end; the
/// result does not depend on the number of workers.
pub fn backproject_edge_maps(
    maps: &[EdgeMap],
    geom: &AcquisitionGeometry,
    grid: &GridSpec,
    mode: AccumulationMode,
) -> Result<CountVolume> {
    check_inputs(maps, geom, grid)?;
    let m = grid.voxel_count();
    let counts = maps
        .par_iter()
        .enumerate()
        .try_fold(
            || vec![0u32; m],
            |mut acc, (k, map)| -> Result<Vec<u32>> {
                for l in view_hits(map, k, geom, grid, mode)? {
                    acc[l] += 1;
                }
                Ok(acc)
            },
        )
        .try_reduce(
            || vec![0u32; m],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(&b) {
                    *x += y;
                }
                Ok(a)
            },
        )?;
    Ok(CountVolume {
        grid: grid.clone(),
        counts,
        num_views: maps.len(),
        mode,
    })
}

/// Single-threaded reference path.
pub fn backproject_edge_maps_serial(
    maps: &[EdgeMap],
    geom: &AcquisitionGeometry,
    grid: &GridSpec,
    mode: AccumulationMode,
) -> Result<CountVolume> {
    check_inputs(maps, geom, grid)?;
    let mut counts = vec![0u32; grid.voxel_count()];
    for (k, map) in maps.iter().enumerate() {
        for l in view_hits(map, k, geom, grid, mode)? {
            counts[l] += 1;
        }
    }
    Ok(CountVolume {
        grid: grid.clone(),
        counts,
        num_views: maps.len(),
        mode,
    })
}
