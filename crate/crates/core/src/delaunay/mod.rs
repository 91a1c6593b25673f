//! 3D Delaunay tetrahedralization of a point cloud.
//!
//! Incremental Bowyer–Watson insertion with exact predicates. The convex hull
//! is closed off by "ghost" tetrahedra that join each hull face to a vertex at
//! infinity, so no enclosing simplex has to be invented and removed later.
//! Cospherical ties are broken by symbolic perturbation keyed on vertex index,
//! which makes the output independent of insertion order.

mod expansion;
pub mod io;
pub mod predicates;

use std::collections::HashMap;

use log::warn;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cloud::PointCloud;
use crate::{Error, Result, Vec3};
use predicates::{insphere_perturbed, orient3d};

/// Neighbour marker for faces on the convex hull.
pub const HULL: u32 = u32::MAX;

/// Vertex-local indices of the face opposite each vertex, ordered so that the
/// opposite vertex sees the face with positive orientation.
pub const FACES: [[usize; 3]; 4] = [[1, 3, 2], [0, 2, 3], [0, 3, 1], [0, 1, 2]];

/// Relative volume below which extracted tetrahedra count as slivers.
pub const SLIVER_VOLUME_FACTOR: f64 = 1e-12;

const DEFAULT_SEED: u64 = 0x5eed_de1a;
const INF: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq)]
pub struct TetMesh {
    pub vertices: Vec<Vec3>,
    /// Positively oriented vertex quadruples.
    pub tets: Vec<[u32; 4]>,
    /// `neighbors[t][i]` is the tet across the face opposite vertex `i`, or [`HULL`].
    pub neighbors: Vec<[u32; 4]>,
}

impl TetMesh {
    /// Builds a mesh from explicit cells, re-orienting negative cells and
    /// deriving face adjacency.
    pub fn from_tets(vertices: Vec<Vec3>, mut tets: Vec<[u32; 4]>) -> Result<TetMesh> {
        let n = vertices.len();
        for (t, tet) in tets.iter_mut().enumerate() {
            for &v in tet.iter() {
                if v as usize >= n {
                    return Err(Error::Index { what: "tet vertex", index: v as usize, limit: n });
                }
            }
            let p = tet.map(|v| vertices[v as usize]);
            match orient3d(&p[0], &p[1], &p[2], &p[3]) {
                1 => {}
                -1 => tet.swap(0, 1),
                _ => return Err(Error::MeshIntegrity(format!("tet {t} has zero volume"))),
            }
        }
        let neighbors = link_faces(&tets)?;
        Ok(TetMesh { vertices, tets, neighbors })
    }

    pub fn len(&self) -> usize {
        self.tets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tets.is_empty()
    }

    pub fn tet_points(&self, t: usize) -> [Vec3; 4] {
        self.tets[t].map(|v| self.vertices[v as usize])
    }

    /// Vertex indices of face `f` of tet `t`, seen positively from inside.
    pub fn face(&self, t: usize, f: usize) -> [u32; 3] {
        FACES[f].map(|k| self.tets[t][k])
    }

    pub fn volume(&self, t: usize) -> f64 {
        let [a, b, c, d] = self.tet_points(t);
        signed_volume(&a, &b, &c, &d)
    }

    pub fn centroid(&self, t: usize) -> Vec3 {
        let p = self.tet_points(t);
        (p[0] + p[1] + p[2] + p[3]) / 4.0
    }

    /// `(tet, face)` pairs lying on the convex hull.
    pub fn hull_faces(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (t, nb) in self.neighbors.iter().enumerate() {
            for (f, &n) in nb.iter().enumerate() {
                if n == HULL {
                    out.push((t, f));
                }
            }
        }
        out
    }

    pub fn bounding_diagonal(&self) -> f64 {
        bounding_diagonal(&self.vertices)
    }

    /// Checks orientation, sliver threshold and adjacency symmetry.
    pub fn validate(&self) -> Result<()> {
        if self.neighbors.len() != self.tets.len() {
            return Err(Error::MeshIntegrity("adjacency table size mismatch".into()));
        }
        let diag = self.bounding_diagonal();
        let min_volume = SLIVER_VOLUME_FACTOR * diag.powi(3);
        for t in 0..self.tets.len() {
            for &v in &self.tets[t] {
                if v as usize >= self.vertices.len() {
                    return Err(Error::Index { what: "tet vertex", index: v as usize, limit: self.vertices.len() });
                }
            }
            let vol = self.volume(t);
            if !(vol > min_volume) {
                return Err(Error::MeshIntegrity(format!("tet {t} has volume {vol:e}")));
            }
            for f in 0..4 {
                let n = self.neighbors[t][f];
                if n == HULL {
                    continue;
                }
                let n = n as usize;
                if n >= self.tets.len() {
                    return Err(Error::Index { what: "neighbor", index: n, limit: self.tets.len() });
                }
                let back = self.neighbors[n].iter().filter(|&&m| m as usize == t).count();
                if back != 1 {
                    return Err(Error::MeshIntegrity(format!("adjacency between {t} and {n} is not symmetric")));
                }
                let mut mine = self.face(t, f);
                mine.sort_unstable();
                let g = self.neighbors[n].iter().position(|&m| m as usize == t).unwrap();
                let mut theirs = self.face(n, g);
                theirs.sort_unstable();
                if mine != theirs {
                    return Err(Error::MeshIntegrity(format!("tets {t} and {n} disagree on their shared face")));
                }
            }
        }
        Ok(())
    }

    /// Cells as sorted vertex quadruples in sorted order; handy for comparing meshes.
    pub fn canonical_cells(&self) -> Vec<[u32; 4]> {
        let mut cells: Vec<[u32; 4]> = self
            .tets
            .iter()
            .map(|t| {
                let mut s = *t;
                s.sort_unstable();
                s
            })
            .collect();
        cells.sort_unstable();
        cells
    }
}

fn link_faces(tets: &[[u32; 4]]) -> Result<Vec<[u32; 4]>> {
    let mut neighbors = vec![[HULL; 4]; tets.len()];
    let mut open: HashMap<[u32; 3], (u32, usize)> = HashMap::with_capacity(tets.len() * 2);
    for (t, tet) in tets.iter().enumerate() {
        for (f, face) in FACES.iter().enumerate() {
            let mut key = face.map(|k| tet[k]);
            key.sort_unstable();
            match open.remove(&key) {
                Some((u, g)) => {
                    if neighbors[u as usize][g] != HULL {
                        return Err(Error::MeshIntegrity(format!("face {key:?} shared by more than two tets")));
                    }
                    neighbors[t][f] = u;
                    neighbors[u as usize][g] = t as u32;
                }
                None => {
                    open.insert(key, (t as u32, f));
                }
            }
        }
    }
    Ok(neighbors)
}

pub fn signed_volume(a: &Vec3, b: &Vec3, c: &Vec3, d: &Vec3) -> f64 {
    (b - a).dot(&(c - a).cross(&(d - a))) / 6.0
}

fn bounding_diagonal(points: &[Vec3]) -> f64 {
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    for p in points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    if points.is_empty() {
        0.0
    } else {
        (hi - lo).norm()
    }
}

/// Center and radius of the sphere through four points.
pub fn circumsphere(a: &Vec3, b: &Vec3, c: &Vec3, d: &Vec3) -> Result<(Vec3, f64)> {
    if orient3d(a, b, c, d) == 0 {
        return Err(Error::Degeneracy("circumsphere of a flat tetrahedron".into()));
    }
    let (u, v, w) = (b - a, c - a, d - a);
    let denom = 2.0 * u.dot(&v.cross(&w));
    let offset = (v.cross(&w) * u.norm_squared() + w.cross(&u) * v.norm_squared() + u.cross(&v) * w.norm_squared()) / denom;
    Ok((a + offset, offset.norm()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeshStats {
    pub cell_count: usize,
    pub vertex_count: usize,
    pub total_volume: f64,
    /// Smallest dihedral angle over all cells, in degrees.
    pub min_dihedral_deg: f64,
}

pub fn mesh_stats(mesh: &TetMesh) -> MeshStats {
    let mut total = 0.0;
    let mut min_dihedral = f64::INFINITY;
    for t in 0..mesh.len() {
        total += mesh.volume(t).abs();
        min_dihedral = min_dihedral.min(min_dihedral_angle(&mesh.tet_points(t)));
    }
    MeshStats {
        cell_count: mesh.len(),
        vertex_count: mesh.vertices.len(),
        total_volume: total,
        min_dihedral_deg: if mesh.is_empty() { 0.0 } else { min_dihedral },
    }
}

/// Smallest of the six dihedral angles of a tetrahedron, in degrees.
pub fn min_dihedral_angle(p: &[Vec3; 4]) -> f64 {
    let centroid = (p[0] + p[1] + p[2] + p[3]) / 4.0;
    let normals: [Vec3; 4] = std::array::from_fn(|i| {
        let [a, b, c] = FACES[i].map(|k| p[k]);
        let n = (b - a).cross(&(c - a));
        if n.dot(&(a - centroid)) < 0.0 { -n } else { n }
    });
    let mut best = f64::INFINITY;
    for i in 0..4 {
        for j in i + 1..4 {
            let between = normals[i].cross(&normals[j]).norm().atan2(normals[i].dot(&normals[j]));
            best = best.min(180.0 - between.to_degrees());
        }
    }
    best
}

/// Tetrahedralizes the cloud's points.
pub fn tetrahedralize(cloud: &PointCloud) -> Result<TetMesh> {
    tetrahedralize_points(&cloud.points, DEFAULT_SEED)
}

/// Tetrahedralizes `points`; `seed` only affects the insertion order, not the result.
pub fn tetrahedralize_points(points: &[Vec3], seed: u64) -> Result<TetMesh> {
    if let Some(i) = points.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
        return Err(Error::InputValidation(format!("point {i} has a non-finite coordinate")));
    }
    let vertices = dedup(points);
    if vertices.len() < points.len() {
        warn!("dropped {} duplicate points before meshing", points.len() - vertices.len());
    }
    let simplex = initial_simplex(&vertices)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let order = brio_order(&vertices, &simplex, &mut rng);

    let mut builder = Builder::new(&vertices, simplex, rng);
    for &v in &order {
        builder.insert(v);
    }
    builder.extract()
}

fn dedup(points: &[Vec3]) -> Vec<Vec3> {
    let key = |p: &Vec3| p.map(|c| if c == 0.0 { 0.0 } else { c });
    let mut idx: Vec<usize> = (0..points.len()).collect();
    idx.sort_by(|&i, &j| {
        let (a, b) = (key(&points[i]), key(&points[j]));
        a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)).then(a.z.total_cmp(&b.z)).then(i.cmp(&j))
    });
    let mut keep = vec![true; points.len()];
    for w in idx.windows(2) {
        if key(&points[w[0]]) == key(&points[w[1]]) {
            keep[w[1]] = false;
        }
    }
    points.iter().zip(keep).filter(|(_, k)| *k).map(|(p, _)| key(p)).collect()
}

fn initial_simplex(pts: &[Vec3]) -> Result<[u32; 4]> {
    let flat = || Error::Dimensionality("points do not span three dimensions".into());
    if pts.len() < 4 {
        return Err(Error::Dimensionality(format!("need at least 4 distinct points, got {}", pts.len())));
    }
    let (a, b) = (pts[0], pts[1]);
    let probes = [a + Vec3::x(), a + Vec3::y(), a + Vec3::z()];
    let c = (2..pts.len())
        .find(|&k| probes.iter().any(|q| orient3d(&a, &b, &pts[k], q) != 0))
        .ok_or_else(flat)?;
    let d = (2..pts.len())
        .find(|&k| k != c && orient3d(&a, &b, &pts[c], &pts[k]) != 0)
        .ok_or_else(flat)?;
    if orient3d(&a, &b, &pts[c], &pts[d]) > 0 {
        Ok([0, 1, c as u32, d as u32])
    } else {
        Ok([1, 0, c as u32, d as u32])
    }
}

/// Biased randomized insertion order: shuffled, split into rounds of doubling
/// size, each round sorted along a Morton curve.
fn brio_order(pts: &[Vec3], skip: &[u32; 4], rng: &mut ChaCha8Rng) -> Vec<u32> {
    let mut order: Vec<u32> = (0..pts.len() as u32).filter(|v| !skip.contains(v)).collect();
    order.shuffle(rng);
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    for p in pts {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    let extent = (hi - lo).map(|e| if e > 0.0 { e } else { 1.0 });
    let morton = |p: &Vec3| -> u64 {
        let q = (p - lo).component_div(&extent).map(|t| ((t * 2_097_151.0) as u64).min(2_097_151));
        (0..21).fold(0u64, |acc, bit| {
            acc | (((q.x >> bit) & 1) << (3 * bit)) | (((q.y >> bit) & 1) << (3 * bit + 1)) | (((q.z >> bit) & 1) << (3 * bit + 2))
        })
    };
    let mut start = 0;
    let mut size = 16;
    while start < order.len() {
        let end = (start + size).min(order.len());
        order[start..end].sort_by_key(|&v| morton(&pts[v as usize]));
        start = end;
        size *= 2;
    }
    order
}

struct Builder<'a> {
    pts: &'a [Vec3],
    tets: Vec<[u32; 4]>,
    nbr: Vec<[u32; 4]>,
    alive: Vec<bool>,
    free: Vec<u32>,
    rng: ChaCha8Rng,
    last: u32,
    in_stamp: Vec<u32>,
    out_stamp: Vec<u32>,
    epoch: u32,
    open: HashMap<[u32; 3], (u32, usize)>,
}

impl<'a> Builder<'a> {
    fn new(pts: &'a [Vec3], first: [u32; 4], rng: ChaCha8Rng) -> Self {
        let mut b = Builder {
            pts,
            tets: Vec::with_capacity(pts.len() * 8),
            nbr: Vec::with_capacity(pts.len() * 8),
            alive: Vec::with_capacity(pts.len() * 8),
            free: Vec::new(),
            rng,
            last: 0,
            in_stamp: Vec::new(),
            out_stamp: Vec::new(),
            epoch: 0,
            open: HashMap::new(),
        };
        let t0 = b.alloc(first);
        let mut created = vec![t0];
        for (i, face) in FACES.iter().enumerate() {
            let [f0, f1, f2] = face.map(|k| first[k]);
            let g = b.alloc([f0, f2, f1, INF]);
            b.nbr[t0 as usize][i] = g;
            b.nbr[g as usize][3] = t0;
            created.push(g);
        }
        for &t in &created[1..] {
            b.link_open(t, &[0, 1, 2]);
        }
        b.last = t0;
        b
    }

    fn alloc(&mut self, verts: [u32; 4]) -> u32 {
        if let Some(t) = self.free.pop() {
            self.tets[t as usize] = verts;
            self.nbr[t as usize] = [HULL; 4];
            self.alive[t as usize] = true;
            t
        } else {
            self.tets.push(verts);
            self.nbr.push([HULL; 4]);
            self.alive.push(true);
            self.in_stamp.push(0);
            self.out_stamp.push(0);
            (self.tets.len() - 1) as u32
        }
    }

    /// Pairs up the given faces of `t` with previously seen open faces.
    fn link_open(&mut self, t: u32, faces: &[usize]) {
        for &f in faces {
            let mut key = FACES[f].map(|k| self.tets[t as usize][k]);
            key.sort_unstable();
            match self.open.remove(&key) {
                Some((u, g)) => {
                    self.nbr[t as usize][f] = u;
                    self.nbr[u as usize][g] = t;
                }
                None => {
                    self.open.insert(key, (t, f));
                }
            }
        }
    }

    fn point(&self, v: u32) -> &Vec3 {
        &self.pts[v as usize]
    }

    fn ghost_slot(&self, t: u32) -> Option<usize> {
        self.tets[t as usize].iter().position(|&v| v == INF)
    }

    fn orient_face(&self, t: u32, f: usize, p: u32) -> i32 {
        let [a, b, c] = FACES[f].map(|k| self.tets[t as usize][k]);
        orient3d(self.point(a), self.point(b), self.point(c), self.point(p))
    }

    fn in_circumsphere(&self, t: u32, p: u32) -> bool {
        let v = self.tets[t as usize];
        let pts = [self.point(v[0]), self.point(v[1]), self.point(v[2]), self.point(v[3]), self.point(p)];
        insphere_perturbed(pts, [v[0], v[1], v[2], v[3], p]) > 0
    }

    fn conflicts(&self, t: u32, p: u32) -> bool {
        match self.ghost_slot(t) {
            Some(j) => match self.orient_face(t, j, p) {
                1 => true,
                -1 => false,
                _ => self.in_circumsphere(self.nbr[t as usize][j], p),
            },
            None => self.in_circumsphere(t, p),
        }
    }

    /// Finds a tet in conflict with `p` by walking from the last created tet.
    fn locate(&mut self, p: u32) -> u32 {
        let mut t = self.last;
        let cap = 64 + self.tets.len();
        'walk: for _ in 0..cap {
            let start = self.rng.random_range(0..4);
            for k in 0..4 {
                let f = (start + k) % 4;
                if self.orient_face(t, f, p) < 0 {
                    t = self.nbr[t as usize][f];
                    if self.ghost_slot(t).is_some() {
                        return t;
                    }
                    continue 'walk;
                }
            }
            return t;
        }
        warn!("point location walk did not terminate; falling back to a scan");
        (0..self.tets.len() as u32)
            .find(|&t| self.alive[t as usize] && self.conflicts(t, p))
            .expect("some tetrahedron always conflicts with a new point")
    }

    fn insert(&mut self, p: u32) {
        let seed = self.locate(p);
        self.epoch += 1;
        let epoch = self.epoch;
        let mut cavity = vec![seed];
        self.in_stamp[seed as usize] = epoch;
        // (cavity tet, its face index, outside tet, outside's face index)
        let mut boundary: Vec<(u32, usize, u32, usize)> = Vec::new();
        let mut head = 0;
        while head < cavity.len() {
            let t = cavity[head];
            head += 1;
            for f in 0..4 {
                let n = self.nbr[t as usize][f];
                if self.in_stamp[n as usize] == epoch {
                    continue;
                }
                if self.out_stamp[n as usize] != epoch && self.conflicts(n, p) {
                    self.in_stamp[n as usize] = epoch;
                    cavity.push(n);
                } else {
                    self.out_stamp[n as usize] = epoch;
                    let back = self.nbr[n as usize].iter().position(|&m| m == t).unwrap();
                    boundary.push((t, f, n, back));
                }
            }
        }

        let fresh: Vec<([u32; 4], u32, usize)> = boundary
            .iter()
            .map(|&(t, f, n, back)| {
                let [a, b, c] = FACES[f].map(|k| self.tets[t as usize][k]);
                ([a, b, c, p], n, back)
            })
            .collect();
        for &t in &cavity {
            self.alive[t as usize] = false;
            self.free.push(t);
        }
        self.open.clear();
        let mut last_finite = None;
        for (verts, outside, back) in fresh {
            let t = self.alloc(verts);
            self.nbr[t as usize][3] = outside;
            self.nbr[outside as usize][back] = t;
            self.link_open(t, &[0, 1, 2]);
            if !verts.contains(&INF) {
                last_finite = Some(t);
            }
        }
        debug_assert!(self.open.is_empty());
        self.last = last_finite.expect("insertion creates at least one finite tet");
    }

    fn extract(self) -> Result<TetMesh> {
        let diag = bounding_diagonal(self.pts);
        let min_volume = SLIVER_VOLUME_FACTOR * diag.powi(3);
        let mut remap = vec![HULL; self.tets.len()];
        let mut tets = Vec::new();
        let mut dropped = 0usize;
        for t in 0..self.tets.len() {
            if !self.alive[t] || self.tets[t].contains(&INF) {
                continue;
            }
            let [a, b, c, d] = self.tets[t].map(|v| self.pts[v as usize]);
            if signed_volume(&a, &b, &c, &d) > min_volume {
                remap[t] = tets.len() as u32;
                tets.push(self.tets[t]);
            } else {
                dropped += 1;
            }
        }
        if dropped > 0 {
            warn!("discarded {dropped} sliver tetrahedra below {min_volume:e} mm^3");
        }
        let neighbors = (0..self.tets.len())
            .filter(|&t| remap[t] != HULL)
            .map(|t| self.nbr[t].map(|n| remap[n as usize]))
            .collect();
        Ok(TetMesh { vertices: self.pts.to_vec(), tets, neighbors })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Uniform};

    fn random_points(n: usize, seed: u64) -> Vec<Vec3> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = Uniform::new(-1.0, 1.0).unwrap();
        (0..n).map(|_| Vec3::new(u.sample(&mut rng), u.sample(&mut rng), u.sample(&mut rng))).collect()
    }

    fn empty_sphere_violations(mesh: &TetMesh) -> usize {
        let mut bad = 0;
        for t in 0..mesh.len() {
            let [a, b, c, d] = mesh.tet_points(t);
            for (v, p) in mesh.vertices.iter().enumerate() {
                if mesh.tets[t].contains(&(v as u32)) {
                    continue;
                }
                if predicates::insphere(&a, &b, &c, &d, p) > 0 {
                    bad += 1;
                }
            }
        }
        bad
    }

    /// Hull volume by brute force over all point triples: a triple is a hull
    /// facet when every other point lies strictly on one side of its plane.
    /// Assumes general position.
    fn hull_volume(points: &[Vec3]) -> f64 {
        let n = points.len();
        let centroid = points.iter().sum::<Vec3>() / n as f64;
        let mut vol = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                for k in j + 1..n {
                    let (a, b, c) = (points[i], points[j], points[k]);
                    let mut sides = [0usize; 3];
                    for (m, p) in points.iter().enumerate() {
                        if m != i && m != j && m != k {
                            sides[(orient3d(&a, &b, &c, p) + 1) as usize] += 1;
                        }
                    }
                    assert_eq!(sides[1], 0, "hull oracle needs points in general position");
                    if sides[0] == 0 || sides[2] == 0 {
                        let normal = (b - a).cross(&(c - a));
                        vol += normal.dot(&(a - centroid)).abs() / 6.0;
                    }
                }
            }
        }
        vol
    }

    #[test]
    fn single_tet() {
        let pts = vec![Vec3::zeros(), Vec3::x(), Vec3::y(), Vec3::z()];
        let mesh = tetrahedralize_points(&pts, 1).unwrap();
        assert_eq!(mesh.len(), 1);
        assert!(mesh.volume(0) > 0.0);
        assert_eq!(mesh.neighbors[0], [HULL; 4]);
        assert_eq!(mesh_stats(&mesh).cell_count, 1);
    }

    #[test]
    fn face_table_sees_opposite_vertex_positively() {
        let p = [Vec3::zeros(), Vec3::x(), Vec3::y(), Vec3::z()];
        for (i, face) in FACES.iter().enumerate() {
            let [a, b, c] = face.map(|k| p[k]);
            assert_eq!(orient3d(&a, &b, &c, &p[i]), 1);
        }
    }

    #[test]
    fn corners_plus_centroid_give_star() {
        let mut pts = vec![Vec3::zeros(), Vec3::x(), Vec3::y(), Vec3::z()];
        pts.push(Vec3::repeat(0.25));
        let mesh = tetrahedralize_points(&pts, 3).unwrap();
        assert_eq!(mesh.len(), 4);
        assert!(mesh.tets.iter().all(|t| t.contains(&4)));
        mesh.validate().unwrap();
        assert!((mesh_stats(&mesh).total_volume - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn random_cloud_is_delaunay_and_fills_hull() {
        let pts = random_points(200, 11);
        let mesh = tetrahedralize_points(&pts, 5).unwrap();
        mesh.validate().unwrap();
        assert_eq!(empty_sphere_violations(&mesh), 0);
        let hull = hull_volume(&pts);
        let total = mesh_stats(&mesh).total_volume;
        assert!(((total - hull) / hull).abs() < 1e-9, "{total} vs {hull}");
    }

    #[test]
    fn lattice_cloud_is_handled() {
        let mut pts = Vec::new();
        for i in 0..5 {
            for j in 0..5 {
                for k in 0..5 {
                    pts.push(Vec3::new(i as f64, j as f64, k as f64) * 0.5 + Vec3::new(3.0, -1.0, 0.25));
                }
            }
        }
        let mesh = tetrahedralize_points(&pts, 9).unwrap();
        mesh.validate().unwrap();
        assert_eq!(empty_sphere_violations(&mesh), 0);
        assert!((mesh_stats(&mesh).total_volume - 8.0).abs() < 1e-12);
        // Perturbation makes the result a function of vertex ids only.
        let other = tetrahedralize_points(&pts, 1234).unwrap();
        assert_eq!(mesh.canonical_cells(), other.canonical_cells());
    }

    #[test]
    fn insertion_order_does_not_change_tets() {
        let pts = random_points(300, 21);
        let a = tetrahedralize_points(&pts, 1).unwrap();
        let b = tetrahedralize_points(&pts, 2).unwrap();
        assert_eq!(a.canonical_cells(), b.canonical_cells());

        let mut perm: Vec<usize> = (0..pts.len()).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(4));
        let shuffled: Vec<Vec3> = perm.iter().map(|&i| pts[i]).collect();
        let c = tetrahedralize_points(&shuffled, 3).unwrap();
        let mut relabeled: Vec<[u32; 4]> = c
            .tets
            .iter()
            .map(|t| {
                let mut s = t.map(|v| perm[v as usize] as u32);
                s.sort_unstable();
                s
            })
            .collect();
        relabeled.sort_unstable();
        assert_eq!(a.canonical_cells(), relabeled);
    }

    #[test]
    fn duplicates_are_dropped() {
        let mut pts = random_points(30, 2);
        pts.push(pts[3]);
        pts.push(pts[7]);
        let mesh = tetrahedralize_points(&pts, 0).unwrap();
        assert_eq!(mesh.vertices.len(), 30);
        mesh.validate().unwrap();
    }

    #[test]
    fn flat_input_is_rejected() {
        let planar: Vec<Vec3> = random_points(20, 5).into_iter().map(|p| Vec3::new(p.x, p.y, 2.0)).collect();
        assert!(matches!(tetrahedralize_points(&planar, 0), Err(Error::Dimensionality(_))));
        let line: Vec<Vec3> = (0..10).map(|i| Vec3::new(i as f64, 2.0 * i as f64, 0.5)).collect();
        assert!(matches!(tetrahedralize_points(&line, 0), Err(Error::Dimensionality(_))));
        assert!(matches!(tetrahedralize_points(&line[..3], 0), Err(Error::Dimensionality(_))));
    }

    #[test]
    fn circumsphere_examples() {
        let (c, r) = circumsphere(&Vec3::zeros(), &Vec3::x(), &Vec3::y(), &Vec3::z()).unwrap();
        assert!((c - Vec3::repeat(0.5)).norm() < 1e-15);
        assert!((r - 3f64.sqrt() / 2.0).abs() < 1e-15);

        let h = (2.0f64 / 3.0).sqrt();
        let reg = [
            Vec3::zeros(),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.5, 3f64.sqrt() / 2.0, 0.0),
            Vec3::new(0.5, 3f64.sqrt() / 6.0, h),
        ];
        let (_, r) = circumsphere(&reg[0], &reg[1], &reg[2], &reg[3]).unwrap();
        assert!((r - (3.0f64 / 8.0).sqrt()).abs() < 1e-14);

        let flat = circumsphere(&Vec3::zeros(), &Vec3::x(), &Vec3::y(), &Vec3::new(1.0, 1.0, 0.0));
        assert!(matches!(flat, Err(Error::Degeneracy(_))));

        let pts = random_points(400, 8);
        for q in pts.chunks(4) {
            let (c, r) = circumsphere(&q[0], &q[1], &q[2], &q[3]).unwrap();
            for p in q {
                assert!(((p - c).norm() - r).abs() <= 1e-9 * r);
            }
        }
    }

    fn cube_five_tets() -> TetMesh {
        let v: Vec<Vec3> = (0..8).map(|i| Vec3::new((i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64)).collect();
        let tets = vec![[0, 1, 2, 4], [1, 3, 2, 7], [1, 4, 5, 7], [2, 4, 7, 6], [1, 2, 4, 7]];
        TetMesh::from_tets(v, tets).unwrap()
    }

    #[test]
    fn cube_decomposition_stats() {
        let mesh = cube_five_tets();
        mesh.validate().unwrap();
        let s = mesh_stats(&mesh);
        assert_eq!(s.cell_count, 5);
        assert_eq!(s.vertex_count, 8);
        assert!((s.total_volume - 1.0).abs() < 1e-15);
        assert_eq!(mesh.hull_faces().len(), 12);
        // Corner tets bottom out where the diagonal face meets an axis plane.
        assert!((s.min_dihedral_deg - (1.0f64 / 3f64.sqrt()).acos().to_degrees()).abs() < 1e-9);
    }

    #[test]
    fn regular_tet_dihedral() {
        let h = (2.0f64 / 3.0).sqrt();
        let reg = [Vec3::zeros(), Vec3::x(), Vec3::new(0.5, 3f64.sqrt() / 2.0, 0.0), Vec3::new(0.5, 3f64.sqrt() / 6.0, h)];
        assert!((min_dihedral_angle(&reg) - (1.0f64 / 3.0).acos().to_degrees()).abs() < 1e-9);
    }

    #[test]
    fn from_tets_rejects_bad_input() {
        let v = vec![Vec3::zeros(), Vec3::x(), Vec3::y(), Vec3::new(1.0, 1.0, 0.0)];
        assert!(TetMesh::from_tets(v.clone(), vec![[0, 1, 2, 3]]).is_err());
        assert!(TetMesh::from_tets(v, vec![[0, 1, 2, 9]]).is_err());
    }
}
