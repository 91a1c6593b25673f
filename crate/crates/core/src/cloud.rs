//! Seed point clouds: voxel selection, k-nearest-neighbour queries and
//! sparse-outlier removal.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::accumulate::CountVolume;
use crate::error::{Error, Result};
use crate::statmodel::SliceDecision;
use crate::Vec3;

/// Points with the voxel and count they came from.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    pub voxels: Vec<usize>,
    pub counts: Vec<u32>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn from_points(points: Vec<Vec3>) -> Self {
        let n = points.len();
        PointCloud {
            points,
            voxels: (0..n).collect(),
            counts: vec![0; n],
        }
    }

    fn subset(&self, keep: &[bool]) -> PointCloud {
        let mut out = PointCloud::default();
        for (i, _) in keep.iter().enumerate().filter(|(_, &k)| k) {
            out.points.push(self.points[i]);
            out.voxels.push(self.voxels[i]);
            out.counts.push(self.counts[i]);
        }
        out
    }

    pub fn write_xyz(&self, path: &Path) -> Result<()> {
        let mut s = String::with_capacity(self.len() * 40);
        for p in &self.points {
            s.push_str(&format!("{} {} {}\n", p.x, p.y, p.z));
        }
        std::fs::write(path, s).map_err(|e| Error::io(path, e))
    }

    pub fn read_xyz(path: &Path) -> Result<PointCloud> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut points = Vec::new();
        let mut offset = 0u64;
        for line in text.split_inclusive('\n') {
            let t = line.trim();
            if !t.is_empty() && !t.starts_with('#') {
                let v: Vec<f64> = t
                    .split_whitespace()
                    .take(3)
                    .map(str::parse)
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| Error::Parse {
                        offset,
                        message: format!("bad point line `{t}`"),
                    })?;
                if v.len() != 3 {
                    return Err(Error::Parse {
                        offset,
                        message: format!("expected 3 coordinates in `{t}`"),
                    });
                }
                points.push(Vec3::new(v[0], v[1], v[2]));
            }
            offset += line.len() as u64;
        }
        Ok(PointCloud::from_points(points))
    }

    /// Binary little-endian PLY with float32 coordinates and a uint count.
    pub fn write_ply(&self, path: &Path) -> Result<()> {
        let mut buf = format!(
            "ply\nformat binary_little_endian 1.0\nelement vertex {}\n\
             property float x\nproperty float y\nproperty float z\nproperty uint count\nend_header\n",
            self.len()
        )
        .into_bytes();
        for (p, c) in self.points.iter().zip(&self.counts) {
            for v in [p.x, p.y, p.z] {
                buf.extend_from_slice(&(v as f32).to_le_bytes());
            }
            buf.extend_from_slice(&c.to_le_bytes());
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&buf).map_err(|e| Error::io(path, e))
    }
}

/// Centroids of voxels whose count strictly exceeds their slice's threshold.
pub fn extract_points(volume: &CountVolume, decisions: &[SliceDecision]) -> Result<PointCloud> {
    let [nx, ny, nz] = volume.grid.dims;
    let mut lambda = vec![None; nz];
    for d in decisions {
        if d.slice >= nz {
            return Err(Error::Index {
                what: "slice",
                index: d.slice,
                limit: nz,
            });
        }
        lambda[d.slice] = Some(d.lambda);
    }
    if let Some(k) = lambda.iter().position(Option::is_none) {
        return Err(Error::Config(format!("no threshold for slice {k}")));
    }
    let mut cloud = PointCloud::default();
    for (l, &n) in volume.counts.iter().enumerate() {
        let k = l / (nx * ny);
        if n as u64 > lambda[k].unwrap_or(u64::MAX) {
            cloud.points.push(volume.grid.centroid(l));
            cloud.voxels.push(l);
            cloud.counts.push(n);
        }
    }
    Ok(cloud)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

/// Max-heap entry ordered by (squared distance, index).
#[derive(PartialEq)]
struct Candidate(f64, usize);

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

/// Balanced kd-tree over a borrowed point set.
pub struct KdTree<'a> {
    points: &'a [Vec3],
    order: Vec<usize>,
    root: Node,
}

const LEAF_SIZE: usize = 8;

impl<'a> KdTree<'a> {
    pub fn build(points: &'a [Vec3]) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        let root = Self::build_node(points, &mut order, 0, points.len());
        KdTree { points, order, root }
    }

    fn build_node(points: &[Vec3], order: &mut [usize], start: usize, end: usize) -> Node {
        if end - start <= LEAF_SIZE {
            return Node::Leaf { start, end };
        }
        let slice = &mut order[start..end];
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for &i in slice.iter() {
            lo = lo.inf(&points[i]);
            hi = hi.sup(&points[i]);
        }
        let axis = (hi - lo).imax();
        let mid = slice.len() / 2;
        slice.select_nth_unstable_by(mid, |&a, &b| {
            points[a][axis].total_cmp(&points[b][axis]).then(a.cmp(&b))
        });
        let value = points[slice[mid]][axis];
        Node::Split {
            axis,
            value,
            left: Box::new(Self::build_node(points, order, start, start + mid)),
            right: Box::new(Self::build_node(points, order, start + mid, end)),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// The `k` closest points, nearest first; equal distances ordered by index.
    pub fn k_nearest(&self, p: &Vec3, k: usize) -> Result<Vec<Neighbor>> {
        if k > self.points.len() {
            return Err(Error::Query(format!("k = {k} exceeds cloud size {}", self.points.len())));
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        if k > 0 {
            self.search(&self.root, p, k, &mut heap);
        }
        let mut out: Vec<Candidate> = heap.into_vec();
        out.sort();
        Ok(out
            .into_iter()
            .map(|Candidate(d2, index)| Neighbor {
                index,
                distance: d2.sqrt(),
            })
            .collect())
    }

    fn search(&self, node: &Node, p: &Vec3, k: usize, heap: &mut BinaryHeap<Candidate>) {
        match node {
            Node::Leaf { start, end } => {
                for &i in &self.order[*start..*end] {
                    let c = Candidate((self.points[i] - p).norm_squared(), i);
                    if heap.len() < k {
                        heap.push(c);
                    } else if c < *heap.peek().expect("heap holds k entries") {
                        heap.pop();
                        heap.push(c);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = p[*axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, p, k, heap);
                // Equal distance may still win on index, so prune only on strict excess.
                if heap.len() < k || diff * diff <= heap.peek().map_or(f64::INFINITY, |c| c.0) {
                    self.search(far, p, k, heap);
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutlierParams {
    pub k: usize,
    pub multiplier: f64,
}

impl Default for OutlierParams {
    fn default() -> Self {
        OutlierParams { k: 8, multiplier: 1.0 }
    }
}

impl OutlierParams {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || !self.multiplier.is_finite() {
            return Err(Error::Config(format!("invalid outlier parameters {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierReport {
    pub removed: usize,
    /// Statistics of the mean k-NN distances; absent when filtering was skipped.
    pub mean: Option<f64>,
    pub std_dev: Option<f64>,
    pub cutoff: Option<f64>,
    /// Set when the cloud was too small to filter and was returned as is.
    pub skipped: bool,
}

/// Mean distance from each point to its `k` nearest other points.
pub fn mean_knn_distances(points: &[Vec3], k: usize) -> Result<Vec<f64>> {
    let tree = KdTree::build(points);
    points
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let nb = tree.k_nearest(p, k + 1)?;
            let others: Vec<f64> = nb.iter().filter(|n| n.index != i).take(k).map(|n| n.distance).collect();
            Ok(others.iter().sum::<f64>() / k as f64)
        })
        .collect()
}

/// Drops points whose mean k-NN distance exceeds `μ + multiplier·σ`.
pub fn knn_outlier_removal(cloud: &PointCloud, params: &OutlierParams) -> Result<(PointCloud, OutlierReport)> {
    params.validate()?;
    if cloud.len() <= params.k {
        log::warn!(
            "cloud of {} points is too small for {}-NN outlier removal; left unchanged",
            cloud.len(),
            params.k
        );
        return Ok((
            cloud.clone(),
            OutlierReport {
                removed: 0,
                mean: None,
                std_dev: None,
                cutoff: None,
                skipped: true,
            },
        ));
    }
    let d = mean_knn_distances(&cloud.points, params.k)?;
    // Summing in sorted order keeps the statistics independent of input order.
    let mut sorted = d.clone();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mean = sorted.iter().sum::<f64>() / n;
    let mut sq: Vec<f64> = sorted.iter().map(|x| (x - mean).powi(2)).collect();
    sq.sort_by(f64::total_cmp);
    let std_dev = (sq.iter().sum::<f64>() / n).sqrt();
    let cutoff = mean + params.multiplier * std_dev;
    let keep: Vec<bool> = d.iter().map(|&x| x <= cutoff).collect();
    let out = cloud.subset(&keep);
    let removed = cloud.len() - out.len();
    Ok((
        out,
        OutlierReport {
            removed,
            mean: Some(mean),
            std_dev: Some(std_dev),
            cutoff: Some(cutoff),
            skipped: false,
        },
    ))
}
