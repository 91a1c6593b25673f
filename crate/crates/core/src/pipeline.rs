//! End-to-end orchestration: configuration, the individual stages, and the
//! run manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::accumulate::{backproject_edge_maps, AccumulationMode, CountVolume, GridSpec};
use crate::cloud::{extract_points, knn_outlier_removal, OutlierParams, OutlierReport, PointCloud};
use crate::delaunay::io::{write_medit, write_vtk, CellField};
use crate::delaunay::{mesh_stats, tetrahedralize_points, MeshStats, TetMesh};
use crate::edge2d::{canny_all, edge_count, read_edge_map, write_pbm, CannyParams, EdgeMap};
use crate::geometry::AcquisitionGeometry;
use crate::phantom::{library, simulate_projections, Phantom, PhantomDescription, ProjectionSet};
use crate::quality::{cloud_quality, compression_ratio, Compression, QualityReport};
use crate::recon::{sart_reconstruct, MeshProjector, SartParams, SartResult};
use crate::statmodel::{select_model_and_threshold, write_decisions_json, QuantileMethod, SelectionParams, SliceDecision};
use crate::{Error, Result};

/// Where the object comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PhantomSource {
    /// One of the built-in names (`sphere`, `cone`, `shepp-logan`).
    Builtin(String),
    /// A phantom description JSON file.
    File(PathBuf),
    /// A watertight STL surface with uniform attenuation.
    Stl { path: PathBuf, attenuation: f64 },
    Inline(PhantomDescription),
}

impl Default for PhantomSource {
    fn default() -> Self {
        PhantomSource::Builtin("sphere".into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    pub num_projections: usize,
    pub sod_mm: f64,
    pub sdd_mm: f64,
    pub detector_px: [usize; 2],
    pub pixel_pitch_mm: [f64; 2],
    /// Explicit view angles; a uniform full circle when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub angles_rad: Option<Vec<f64>>,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        GeometryConfig {
            num_projections: 30,
            sod_mm: 500.0,
            sdd_mm: 1000.0,
            detector_px: [256, 256],
            pixel_pitch_mm: [1.2, 1.2],
            angles_rad: None,
        }
    }
}

impl GeometryConfig {
    pub fn build(&self) -> Result<AcquisitionGeometry> {
        let mut geom = AcquisitionGeometry {
            num_projections: self.num_projections,
            source_to_isocenter: self.sod_mm,
            source_to_detector: self.sdd_mm,
            detector_pixels: (self.detector_px[0], self.detector_px[1]),
            pixel_pitch: (self.pixel_pitch_mm[0], self.pixel_pitch_mm[1]),
            angles: (0..self.num_projections)
                .map(|k| 2.0 * std::f64::consts::PI * k as f64 / self.num_projections.max(1) as f64)
                .collect(),
        };
        if let Some(a) = &self.angles_rad {
            geom.angles = a.clone();
        }
        geom.validate()?;
        Ok(geom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub dims: [usize; 3],
    /// Physical size of the grid along each axis.
    pub extent_mm: [f64; 3],
    pub center_mm: [f64; 3],
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { dims: [128; 3], extent_mm: [128.0; 3], center_mm: [0.0; 3] }
    }
}

impl GridConfig {
    pub fn build(&self) -> Result<GridSpec> {
        let voxel_size = [0, 1, 2].map(|a| self.extent_mm[a] / self.dims[a].max(1) as f64);
        let origin = [0, 1, 2].map(|a| self.center_mm[a] - 0.5 * self.extent_mm[a]);
        let grid = GridSpec { dims: self.dims, origin, voxel_size };
        grid.validate()?;
        Ok(grid)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    /// Tolerance-limit significance; chosen from the grid size when absent.
    pub alpha_limit: Option<f64>,
    pub alpha_test: f64,
    pub per_slice: bool,
    pub non_null_only: bool,
    /// Count each voxel at most once per view.
    pub saturated: bool,
    pub method: QuantileMethod,
}

impl Default for FilterConfig {
    fn default() -> Self {
        let s = SelectionParams::default();
        FilterConfig {
            alpha_limit: None,
            alpha_test: s.alpha_test,
            per_slice: s.per_slice,
            non_null_only: s.non_null_only,
            saturated: true,
            method: s.method,
        }
    }
}

/// Significance used for grids of the given size: 0.05 up to 128 voxels per
/// side, 0.01 up to 256, 0.001 beyond.
pub fn default_alpha_for_dims(dims: [usize; 3]) -> f64 {
    match dims.iter().copied().max().unwrap_or(0) {
        0..=128 => 0.05,
        129..=256 => 0.01,
        _ => 0.001,
    }
}

impl FilterConfig {
    pub fn selection(&self, dims: [usize; 3]) -> SelectionParams {
        SelectionParams {
            alpha_limit: self.alpha_limit.unwrap_or_else(|| default_alpha_for_dims(dims)),
            alpha_test: self.alpha_test,
            per_slice: self.per_slice,
            non_null_only: self.non_null_only,
            method: self.method,
        }
    }

    pub fn mode(&self) -> AccumulationMode {
        if self.saturated {
            AccumulationMode::Saturated
        } else {
            AccumulationMode::Unsaturated
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconConfig {
    pub enabled: bool,
    pub relax: f64,
    pub sweeps: usize,
    pub init: f64,
    pub nonnegative: bool,
    pub track_residual: bool,
}

impl Default for ReconConfig {
    fn default() -> Self {
        let s = SartParams::default();
        ReconConfig {
            enabled: true,
            relax: s.relax,
            sweeps: 10,
            init: s.init,
            nonnegative: s.nonnegative,
            track_residual: s.track_residual,
        }
    }
}

impl ReconConfig {
    pub fn sart(&self) -> SartParams {
        SartParams {
            relax: self.relax,
            sweeps: self.sweeps,
            init: self.init,
            nonnegative: self.nonnegative,
            track_residual: self.track_residual,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub phantom: PhantomSource,
    pub geometry: GeometryConfig,
    pub grid: GridConfig,
    pub canny: CannyParams,
    pub filter: FilterConfig,
    pub cloud: OutlierParams,
    pub recon: ReconConfig,
    /// Seeds every randomized step (mesh insertion order).
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            phantom: PhantomSource::default(),
            geometry: GeometryConfig::default(),
            grid: GridConfig::default(),
            canny: CannyParams::default(),
            filter: FilterConfig::default(),
            cloud: OutlierParams::default(),
            recon: ReconConfig::default(),
            seed: 0,
            output_dir: PathBuf::from("meshseed-out"),
            base_dir: None,
        }
    }
}

impl PipelineConfig {
    pub fn from_json_str(text: &str) -> Result<PipelineConfig> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid configuration: {e}")))
    }

    pub fn from_json_file(path: &Path) -> Result<PipelineConfig> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_json_str(&text).map_err(|e| e.context(path.display().to_string()))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        match &self.base_dir {
            Some(base) if p.is_relative() => base.join(p),
            _ => p.to_path_buf(),
        }
    }

    /// Checks every block without touching the file system.
    pub fn validate(&self) -> Result<()> {
        self.geometry.build()?;
        self.grid.build()?;
        self.canny.validate()?;
        self.filter.selection(self.grid.dims).validate()?;
        self.cloud.validate()?;
        self.recon.sart().validate()?;
        Ok(())
    }

    pub fn load_phantom(&self) -> Result<Phantom> {
        let phantom = match &self.phantom {
            PhantomSource::Builtin(name) => library::builtin(name)?,
            PhantomSource::File(p) => Phantom::from_json_file(&self.resolve(p))?,
            PhantomSource::Stl { path, attenuation } => Phantom::from_stl(&self.resolve(path), *attenuation)?,
            PhantomSource::Inline(desc) => Phantom::from_description(desc, self.base_dir.as_deref())?,
        };
        phantom.validate()?;
        Ok(phantom)
    }
}

/// Line integrals as stored on disk (32-bit floats).
pub fn stage_project(phantom: &Phantom, geom: &AcquisitionGeometry) -> Result<ProjectionSet> {
    Ok(simulate_projections(phantom, geom)?.quantized_f32())
}

pub fn stage_edges(projections: &ProjectionSet, canny: &CannyParams) -> Result<Vec<EdgeMap>> {
    canny.validate()?;
    projections.validate()?;
    canny_all(&projections.images, canny)
}

#[derive(Debug, Clone)]
pub struct SeedOutput {
    pub volume: CountVolume,
    pub selection: SelectionParams,
    pub decisions: Vec<SliceDecision>,
    pub raw_cloud: PointCloud,
    pub cloud: PointCloud,
    pub outliers: Option<OutlierReport>,
}

impl SeedOutput {
    pub fn is_empty(&self) -> bool {
        self.cloud.is_empty()
    }
}

/// Backprojection, threshold selection, extraction and outlier removal.
pub fn stage_seed(
    maps: &[EdgeMap],
    geom: &AcquisitionGeometry,
    grid: &GridSpec,
    filter: &FilterConfig,
    outlier: &OutlierParams,
) -> Result<SeedOutput> {
    if maps.len() != geom.num_projections {
        return Err(Error::Config(format!(
            "num_projections: geometry has {} views but {} edge maps were given",
            geom.num_projections,
            maps.len()
        )));
    }
    for (k, m) in maps.iter().enumerate() {
        if m.dims() != geom.detector_pixels {
            return Err(Error::Config(format!(
                "detector_px: edge map {k} is {:?}, geometry says {:?}",
                m.dims(),
                geom.detector_pixels
            )));
        }
    }
    let selection = filter.selection(grid.dims);
    selection.validate()?;
    let volume = backproject_edge_maps(maps, geom, grid, filter.mode())?;
    if volume.nonzero() == 0 {
        warn!("no voxel was crossed by an edge ray; the cloud is empty");
        return Ok(SeedOutput {
            volume,
            selection,
            decisions: Vec::new(),
            raw_cloud: PointCloud::from_points(Vec::new()),
            cloud: PointCloud::from_points(Vec::new()),
            outliers: None,
        });
    }
    let decisions = select_model_and_threshold(&volume, &selection)?;
    let raw_cloud = extract_points(&volume, &decisions)?;
    let (cloud, report) = knn_outlier_removal(&raw_cloud, outlier)?;
    info!("seed: {} voxels above threshold, {} kept after outlier removal", raw_cloud.len(), cloud.len());
    Ok(SeedOutput { volume, selection, decisions, raw_cloud, cloud, outliers: Some(report) })
}

pub fn stage_mesh(cloud: &PointCloud, seed: u64) -> Result<TetMesh> {
    if cloud.is_empty() {
        return Err(Error::EmptyCloud("nothing to mesh".into()));
    }
    tetrahedralize_points(&cloud.points, seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub quality: QualityReport,
    pub compression: Compression,
    pub mesh: MeshStats,
}

/// Quality is scored against the voxel edge; for anisotropic grids the
/// largest edge is used.
pub fn stage_eval(cloud: &PointCloud, mesh: &TetMesh, truth: &Phantom, grid: &GridSpec) -> Result<EvalReport> {
    let grid_res = grid.voxel_size.iter().copied().fold(0.0, f64::max);
    Ok(EvalReport {
        quality: cloud_quality(cloud, truth, grid_res)?,
        compression: compression_ratio(mesh, grid),
        mesh: mesh_stats(mesh),
    })
}

pub fn stage_recon(mesh: &TetMesh, data: &ProjectionSet, params: &SartParams) -> Result<SartResult> {
    let projector = MeshProjector::new(mesh)?;
    sart_reconstruct(&projector, data, params)
}

/// Writes one `view_NNNN.pbm` per map plus the geometry sidecar.
pub fn write_edge_maps(dir: &Path, maps: &[EdgeMap], geom: &AcquisitionGeometry) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::with_capacity(maps.len() + 1);
    for (k, m) in maps.iter().enumerate() {
        let p = dir.join(format!("view_{k:04}.pbm"));
        write_pbm(m, &p)?;
        written.push(p);
    }
    let g = dir.join("geometry.json");
    geom.to_json_file(&g)?;
    written.push(g);
    Ok(written)
}

pub fn read_edge_maps(dir: &Path) -> Result<(Vec<EdgeMap>, AcquisitionGeometry)> {
    let geom = AcquisitionGeometry::from_json_file(&dir.join("geometry.json"))?;
    let maps = (0..geom.num_projections)
        .map(|k| read_edge_map(&dir.join(format!("view_{k:04}.pbm"))))
        .collect::<Result<Vec<_>>>()?;
    Ok((maps, geom))
}

/// Seed-stage files: counts, decisions, raw and filtered clouds.
pub fn write_seed_outputs(dir: &Path, seed: &SeedOutput) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let counts = dir.join("counts.u32");
    seed.volume.write(&counts)?;
    let decisions = dir.join("decisions.json");
    write_decisions_json(&seed.decisions, &decisions)?;
    let raw = dir.join("cloud_raw.xyz");
    seed.raw_cloud.write_xyz(&raw)?;
    let xyz = dir.join("cloud.xyz");
    seed.cloud.write_xyz(&xyz)?;
    let ply = dir.join("cloud.ply");
    seed.cloud.write_ply(&ply)?;
    let outliers = dir.join("outliers.json");
    write_json(&outliers, &seed.outliers)?;
    let mut out = vec![counts.clone(), CountVolume::header_path(&counts), decisions, raw, xyz, ply, outliers];
    if seed.is_empty() {
        let diag = dir.join("diagnostic.json");
        write_json(&diag, &empty_cloud_diagnostic(seed))?;
        out.push(diag);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub status: String,
    pub message: String,
    pub nonzero_voxels: usize,
    pub raw_points: usize,
}

pub fn empty_cloud_diagnostic(seed: &SeedOutput) -> Diagnostic {
    let message = if seed.volume.nonzero() == 0 {
        "no edge ray crossed the grid; check the projections and edge thresholds".to_string()
    } else {
        "no voxel count exceeded its slice threshold".to_string()
    };
    Diagnostic {
        status: "empty_cloud".into(),
        message,
        nonzero_voxels: seed.volume.nonzero(),
        raw_points: seed.raw_cloud.len(),
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub edge_pixels: usize,
    pub nonzero_voxels: usize,
    pub raw_points: usize,
    pub cloud_points: usize,
    pub outliers: Option<OutlierReport>,
    pub mesh: Option<MeshStats>,
    pub compression: Option<Compression>,
    pub quality: Option<QualityReport>,
    pub untouched_cells: Option<usize>,
    pub residual_first: Option<f64>,
    pub residual_last: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    /// Effective configuration, every tunable included.
    pub config: PipelineConfig,
    pub effective_alpha_limit: f64,
    pub threads: usize,
    pub stages: Vec<StageTiming>,
    pub total_seconds: f64,
    pub summary: RunSummary,
    pub outputs: Vec<PathBuf>,
}

/// Remembers what a run wrote so a failed run can remove it again.
#[derive(Debug, Default)]
pub struct OutputTracker {
    pub files: Vec<PathBuf>,
    dirs: Vec<PathBuf>,
}

impl OutputTracker {
    pub fn add(&mut self, p: PathBuf) {
        self.files.push(p);
    }

    pub fn extend(&mut self, ps: impl IntoIterator<Item = PathBuf>) {
        self.files.extend(ps);
    }

    /// Creates `dir` if needed, remembering it when it did not exist before.
    pub fn ensure_dir(&mut self, dir: &Path) -> Result<()> {
        if !dir.exists() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            self.dirs.push(dir.to_path_buf());
        }
        Ok(())
    }

    pub fn remove_all(&mut self) {
        for f in self.files.drain(..) {
            let _ = fs::remove_file(&f);
        }
        for d in self.dirs.drain(..).rev() {
            let _ = fs::remove_dir(&d);
        }
    }
}

struct Clock {
    start: Instant,
    stages: Vec<StageTiming>,
}

impl Clock {
    fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let t = Instant::now();
        let out = f().map_err(|e| e.context(format!("stage `{stage}`")))?;
        let seconds = t.elapsed().as_secs_f64();
        info!("stage {stage}: {seconds:.3} s");
        self.stages.push(StageTiming { stage: stage.into(), seconds });
        Ok(out)
    }
}

/// Runs every stage, writing outputs and `manifest.json` into the configured
/// output directory. Files from a failed run are removed, except when the
/// failure is an empty cloud, whose seed outputs and diagnostic are kept.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<Manifest> {
    cfg.validate()?;
    let out_dir = cfg.resolve(&cfg.output_dir);
    let mut tracker = OutputTracker::default();
    let result = run_stages(cfg, &out_dir, &mut tracker);
    match &result {
        Err(e) if !matches!(e.root(), Error::EmptyCloud(_)) => tracker.remove_all(),
        _ => {}
    }
    result
}

fn run_stages(cfg: &PipelineConfig, out: &Path, tracker: &mut OutputTracker) -> Result<Manifest> {
    tracker.ensure_dir(out)?;
    let geom = cfg.geometry.build()?;
    let grid = cfg.grid.build()?;
    let mut clock = Clock { start: Instant::now(), stages: Vec::new() };
    let mut summary = RunSummary::default();

    let phantom = clock.time("phantom", || {
        let phantom = cfg.load_phantom()?;
        let p = out.join("phantom.json");
        write_json(&p, &phantom.description())?;
        tracker.add(p);
        Ok(phantom)
    })?;

    let projections = clock.time("project", || {
        let proj = stage_project(&phantom, &geom)?;
        let raw = out.join("projections.f32");
        proj.write_concatenated(&raw)?;
        tracker.add(raw.clone());
        tracker.add(crate::phantom::sidecar_path(&raw));
        Ok(proj)
    })?;

    let maps = clock.time("edges", || {
        let maps = stage_edges(&projections, &cfg.canny)?;
        let dir = out.join("edges");
        tracker.ensure_dir(&dir)?;
        tracker.extend(write_edge_maps(&dir, &maps, &geom)?);
        Ok(maps)
    })?;
    summary.edge_pixels = maps.iter().map(edge_count).sum();

    let seed = clock.time("seed", || {
        let seed = stage_seed(&maps, &geom, &grid, &cfg.filter, &cfg.cloud)?;
        tracker.extend(write_seed_outputs(out, &seed)?);
        Ok(seed)
    })?;
    summary.nonzero_voxels = seed.volume.nonzero();
    summary.raw_points = seed.raw_cloud.len();
    summary.cloud_points = seed.cloud.len();
    summary.outliers = seed.outliers.clone();

    let finish = |clock: Clock, summary: RunSummary, tracker: &mut OutputTracker| -> Result<Manifest> {
        let manifest = Manifest {
            tool: "meshseed".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config: cfg.clone(),
            effective_alpha_limit: seed.selection.alpha_limit,
            threads: rayon::current_num_threads(),
            total_seconds: clock.start.elapsed().as_secs_f64(),
            stages: clock.stages,
            summary,
            outputs: tracker.files.clone(),
        };
        let p = out.join("manifest.json");
        write_json(&p, &manifest)?;
        tracker.add(p);
        Ok(manifest)
    };

    if seed.is_empty() {
        finish(clock, summary, tracker)?;
        return Err(Error::EmptyCloud(empty_cloud_diagnostic(&seed).message));
    }

    let mesh = clock.time("mesh", || {
        let mesh = stage_mesh(&seed.cloud, cfg.seed)?;
        let (vtk, medit) = (out.join("mesh.vtk"), out.join("mesh.mesh"));
        write_vtk(&vtk, &mesh, &[])?;
        write_medit(&medit, &mesh)?;
        tracker.extend([vtk, medit]);
        Ok(mesh)
    })?;

    let eval = clock.time("eval", || {
        let eval = stage_eval(&seed.cloud, &mesh, &phantom, &grid)?;
        let (q, csv, hist) = (out.join("quality.json"), out.join("distances.csv"), out.join("distances_hist.dat"));
        write_json(&q, &eval)?;
        eval.quality.write_csv(&csv, &seed.cloud)?;
        eval.quality.write_histogram(&hist)?;
        tracker.extend([q, csv, hist]);
        Ok(eval)
    })?;
    summary.mesh = Some(eval.mesh);
    summary.compression = Some(eval.compression);
    summary.quality = Some(eval.quality);

    if cfg.recon.enabled {
        let result = clock.time("recon", || {
            let result = stage_recon(&mesh, &projections, &cfg.recon.sart())?;
            let vtk = out.join("recon.vtk");
            let fields = [
                CellField { name: "attenuation".into(), values: result.values.clone() },
                CellField {
                    name: "touched".into(),
                    values: result.touched.iter().map(|&t| if t { 1.0 } else { 0.0 }).collect(),
                },
            ];
            write_vtk(&vtk, &mesh, &fields)?;
            tracker.add(vtk);
            if !result.residuals.is_empty() {
                let csv = out.join("residuals.csv");
                result.write_residual_csv(&csv)?;
                tracker.add(csv);
            }
            Ok(result)
        })?;
        summary.untouched_cells = Some(result.untouched_count());
        summary.residual_first = result.residuals.first().copied();
        summary.residual_last = result.residuals.last().copied();
    }

    finish(clock, summary, tracker)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config(dir: &Path) -> PipelineConfig {
        let mut cfg = PipelineConfig::default();
        cfg.geometry = GeometryConfig {
            num_projections: 12,
            detector_px: [96, 96],
            pixel_pitch_mm: [3.2, 3.2],
            ..GeometryConfig::default()
        };
        cfg.grid = GridConfig { dims: [48; 3], extent_mm: [128.0; 3], center_mm: [0.0; 3] };
        cfg.recon.sweeps = 2;
        cfg.output_dir = dir.to_path_buf();
        cfg
    }

    #[test]
    fn default_config_round_trips_and_rejects_unknown_keys() {
        let cfg = PipelineConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(PipelineConfig::from_json_str(&text).unwrap(), cfg);
        assert_eq!(PipelineConfig::from_json_str("{}").unwrap(), cfg);
        let bad = PipelineConfig::from_json_str(r#"{"grid": {"dims": [8, 8, 8], "spacing": 1}}"#);
        assert!(matches!(bad, Err(Error::Config(_))));
        let cfg = PipelineConfig::from_json_str(r#"{"phantom": {"builtin": "cone"}, "canny": {"sigma": 2.0}}"#).unwrap();
        assert_eq!(cfg.canny.sigma, 2.0);
        assert_eq!(cfg.phantom, PhantomSource::Builtin("cone".into()));
    }

    #[test]
    fn alpha_follows_grid_size() {
        assert_eq!(default_alpha_for_dims([128; 3]), 0.05);
        assert_eq!(default_alpha_for_dims([256; 3]), 0.01);
        assert_eq!(default_alpha_for_dims([512; 3]), 0.001);
        let f = FilterConfig { alpha_limit: Some(0.2), ..Default::default() };
        assert_eq!(f.selection([512; 3]).alpha_limit, 0.2);
    }

    #[test]
    fn grid_block_builds_centered_grid() {
        let g = GridConfig::default().build().unwrap();
        assert_eq!(g.origin, [-64.0; 3]);
        assert_eq!(g.voxel_size, [1.0; 3]);
    }

    #[test]
    fn small_pipeline_runs_and_writes_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config(dir.path());
        let m = run_pipeline(&cfg).unwrap();
        assert!(m.summary.mesh.unwrap().cell_count > 0);
        let names: Vec<&str> = m.stages.iter().map(|s| s.stage.as_str()).collect();
        assert_eq!(names, ["phantom", "project", "edges", "seed", "mesh", "eval", "recon"]);
        for f in &m.outputs {
            assert!(f.exists(), "{}", f.display());
        }
        let back: Manifest = serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
        assert_eq!(back.config.grid, cfg.grid);
        assert!(back.summary.residual_last.unwrap() < back.summary.residual_first.unwrap());
    }

    #[test]
    fn staged_run_matches_pipeline() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config(dir.path());
        let mut no_recon = cfg.clone();
        no_recon.recon.enabled = false;
        run_pipeline(&no_recon).unwrap();

        let proj = ProjectionSet::read(&dir.path().join("projections.f32")).unwrap();
        let maps = stage_edges(&proj, &cfg.canny).unwrap();
        let staged = tempfile::tempdir().unwrap();
        write_edge_maps(staged.path(), &maps, &proj.geometry).unwrap();
        let (maps, geom) = read_edge_maps(staged.path()).unwrap();
        let seed = stage_seed(&maps, &geom, &cfg.grid.build().unwrap(), &cfg.filter, &cfg.cloud).unwrap();
        write_seed_outputs(staged.path(), &seed).unwrap();
        for f in ["counts.u32", "cloud.xyz", "cloud_raw.xyz", "decisions.json"] {
            assert_eq!(fs::read(dir.path().join(f)).unwrap(), fs::read(staged.path().join(f)).unwrap(), "{f}");
        }
    }

    #[test]
    fn empty_projections_give_empty_cloud() {
        let geom = small_config(Path::new(".")).geometry.build().unwrap();
        let (nu, nv) = geom.detector_pixels;
        let maps = vec![EdgeMap::new(nu, nv); geom.num_projections];
        let grid = GridConfig::default().build().unwrap();
        let seed = stage_seed(&maps, &geom, &grid, &FilterConfig::default(), &OutlierParams::default()).unwrap();
        assert!(seed.is_empty());
        assert_eq!(empty_cloud_diagnostic(&seed).status, "empty_cloud");
        assert!(matches!(stage_mesh(&seed.cloud, 0), Err(Error::EmptyCloud(_))));
    }

    #[test]
    fn mismatched_stage_inputs_name_the_field() {
        let geom = small_config(Path::new(".")).geometry.build().unwrap();
        let grid = GridConfig::default().build().unwrap();
        let maps = vec![EdgeMap::new(96, 96); 3];
        let err = stage_seed(&maps, &geom, &grid, &FilterConfig::default(), &OutlierParams::default()).unwrap_err();
        assert!(err.to_string().contains("num_projections"));
        let maps = vec![EdgeMap::new(10, 96); 12];
        let err = stage_seed(&maps, &geom, &grid, &FilterConfig::default(), &OutlierParams::default()).unwrap_err();
        assert!(err.to_string().contains("detector_px"));
    }

    #[test]
    fn failed_run_removes_its_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("run");
        let mut cfg = small_config(&out);
        cfg.phantom = PhantomSource::Stl { path: dir.path().join("missing.stl"), attenuation: 0.02 };
        assert!(run_pipeline(&cfg).is_err());
        assert!(!out.exists());
    }
}
