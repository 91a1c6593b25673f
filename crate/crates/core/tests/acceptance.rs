//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the process exits non-zero when any criterion fails.

use std::collections::HashSet;
use std::time::Instant;

use num_rational::BigRational;
use num_traits::{FromPrimitive, Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use meshseed::accumulate::{backproject_edge_maps, backproject_edge_maps_serial, AccumulationMode, CountVolume, GridSpec};
use meshseed::delaunay::predicates::{insphere, orient3d};
use meshseed::delaunay::{circumsphere, signed_volume, tetrahedralize_points, TetMesh};
use meshseed::edge2d::EdgeMap;
use meshseed::geometry::{make_circular_geometry, AcquisitionGeometry, Ray};
use meshseed::image::Image;
use meshseed::phantom::library::{DEFAULT_ATTENUATION, DEFAULT_SPHERE_RADIUS};
use meshseed::pipeline::{
    run_pipeline, stage_edges, stage_eval, stage_mesh, stage_project, stage_recon, stage_seed, EvalReport, PhantomSource,
    PipelineConfig, SeedOutput,
};
use meshseed::recon::{forward_project, residual_sum_sq, sart_reconstruct, MeshProjector, SartParams};
use meshseed::statmodel::{
    plackett_estimate, poisson_cdf, select_model_and_threshold, ztp_quantile, CountModel, QuantileMethod, SelectionParams,
    ZtpModel,
};
use meshseed::Vec3;

struct Outcome {
    name: String,
    pass: bool,
}

#[derive(Default)]
struct Report {
    outcomes: Vec<Outcome>,
}

impl Report {
    fn record(&mut self, name: &str, pass: bool, detail: String) {
        println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
        self.outcomes.push(Outcome { name: name.into(), pass });
    }
}

struct SphereRun {
    cfg: PipelineConfig,
    seed: SeedOutput,
    mesh: TetMesh,
    eval: EvalReport,
    seconds: f64,
}

fn run_to_eval(cfg: &PipelineConfig) -> SphereRun {
    let start = Instant::now();
    let geom = cfg.geometry.build().unwrap();
    let grid = cfg.grid.build().unwrap();
    let phantom = cfg.load_phantom().unwrap();
    let proj = stage_project(&phantom, &geom).unwrap();
    let maps = stage_edges(&proj, &cfg.canny).unwrap();
    let seed = stage_seed(&maps, &geom, &grid, &cfg.filter, &cfg.cloud).unwrap();
    let mesh = stage_mesh(&seed.cloud, cfg.seed).unwrap();
    let eval = stage_eval(&seed.cloud, &mesh, &phantom, &grid).unwrap();
    SphereRun { cfg: cfg.clone(), seed, mesh, eval, seconds: start.elapsed().as_secs_f64() }
}

fn sphere_config(sigma: f64) -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.phantom = PhantomSource::Builtin("sphere".into());
    cfg.geometry.num_projections = 30;
    cfg.geometry.detector_px = [256, 256];
    cfg.grid.dims = [128; 3];
    cfg.filter.alpha_limit = Some(0.05);
    cfg.canny.sigma = sigma;
    cfg
}

fn compression(report: &mut Report, tag: &str, run: &SphereRun) {
    let cells = run.mesh.len();
    let ratio = cells as f64 / (128.0f64).powi(3);
    let pass = ratio <= 0.03 && cells >= 1000 && run.seconds <= 60.0;
    report.record(
        &format!("1 sphere compression{tag}"),
        pass,
        format!(
            "{cells} cells, ratio {:.2}% (limit 3%), {} cloud points, {:.1} s (limit 60 s)",
            100.0 * ratio,
            run.seed.cloud.len(),
            run.seconds
        ),
    );
}

/// Fraction of cloud points within `w·√3/2` of the analytic sphere, computed
/// from the closed form rather than the library's distance query.
fn selection_quality(report: &mut Report, tag: &str, run: &SphereRun) {
    let grid = run.cfg.grid.build().unwrap();
    let w = grid.voxel_size.iter().copied().fold(0.0, f64::max);
    let tol = w * 3f64.sqrt() / 2.0;
    let pts = &run.seed.cloud.points;
    let good = pts.iter().filter(|p| (p.norm() - DEFAULT_SPHERE_RADIUS).abs() <= tol).count();
    let oracle = good as f64 / pts.len() as f64;
    let reported = run.eval.quality.optimum_fraction.unwrap_or(f64::NAN);
    let agree = (oracle - reported).abs() < 1e-12;
    report.record(
        &format!("2 point selection quality{tag}"),
        oracle >= 0.85 && agree,
        format!(
            "{:.1}% of {} points within {tol:.3} mm (limit 85%), mean {:.3} mm, p95 {:.3} mm, library/oracle agree: {agree}",
            100.0 * oracle,
            pts.len(),
            run.eval.quality.mean_distance.unwrap_or(f64::NAN),
            run.eval.quality.p95_distance.unwrap_or(f64::NAN),
        ),
    );
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn shepp_logan(report: &mut Report) {
    let mut cfg = PipelineConfig::default();
    cfg.phantom = PhantomSource::Builtin("shepp-logan".into());
    cfg.grid.dims = [128; 3];
    let run = run_to_eval(&cfg);
    let phantom = cfg.load_phantom().unwrap();
    let grid = cfg.grid.build().unwrap();
    let band = 2.0 * grid.voxel_size.iter().copied().fold(0.0, f64::max);
    let (mut near, mut far) = (Vec::new(), Vec::new());
    for t in 0..run.mesh.len() {
        let [a, b, c, d] = run.mesh.tet_points(t);
        let Ok((center, r)) = circumsphere(&a, &b, &c, &d) else { continue };
        if phantom.surface_distance(&center) <= band {
            near.push(r);
        } else {
            far.push(r);
        }
    }
    let ratio = run.mesh.len() as f64 / grid.voxel_count() as f64;
    let (mn, mf) = (median(near.clone()), median(far.clone()));
    report.record(
        "3 Shepp-Logan compression",
        ratio <= 0.08,
        format!("{} cells, ratio {:.2}% (limit 8%)", run.mesh.len(), 100.0 * ratio),
    );
    report.record(
        "3 Shepp-Logan interface density",
        mn < 0.5 * mf,
        format!(
            "median circumradius {mn:.3} mm over {} interface cells vs {mf:.3} mm over {} others (need < half)",
            near.len(),
            far.len()
        ),
    );
}

/// Draws from ZTP(θ) by rejecting zeros.
fn ztp_draws(theta: f64, n: usize, rng: &mut ChaCha8Rng) -> Vec<u32> {
    let pois = Poisson::new(theta).unwrap();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let k = pois.sample(rng) as u32;
        if k > 0 {
            out.push(k);
        }
    }
    out
}

fn ztp_suite(report: &mut Report) {
    let start = Instant::now();
    let (mut defining, mut agree, mut cases) = (true, true, 0);
    for theta in [0.5, 1.0, 2.0, 5.0, 10.0] {
        let model = ZtpModel::new(theta).unwrap();
        // Truncated CDF from the plain Poisson CDF, independent of the model's own.
        let f0 = (-theta).exp();
        let cdf = |n: u64| (poisson_cdf(theta, n).unwrap() - f0) / (1.0 - f0);
        for alpha in [0.05, 0.01, 0.001] {
            cases += 1;
            let lambda = ztp_quantile(&model, alpha, QuantileMethod::Exact).unwrap();
            let gil = ztp_quantile(&model, alpha, QuantileMethod::Gilchrist).unwrap();
            defining &= cdf(lambda) >= 1.0 - alpha - 1e-12 && (lambda == 1 || cdf(lambda - 1) < 1.0 - alpha);
            agree &= lambda == gil;
        }
    }
    report.record("4 ZTP quantile defining property", defining, format!("{cases} (θ, α) cases"));
    report.record("4 exact vs Gilchrist quantiles", agree, format!("{cases} (θ, α) cases"));

    let mut rng = ChaCha8Rng::seed_from_u64(0x9e37);
    let est = plackett_estimate(&ztp_draws(2.0, 100_000, &mut rng)).unwrap();
    report.record("4 Plackett estimator", (est - 2.0).abs() <= 0.05, format!("θ̂ = {est:.4} for θ = 2 (±0.05)"));

    // Per-slice selection on pure Poisson slices; choosing ZTP is the
    // test's rejection, which should occur at its nominal level.
    let params = SelectionParams { non_null_only: false, ..SelectionParams::default() };
    let grid = GridSpec::centered([40, 25, 2], 1.0).unwrap();
    let pois = Poisson::new(3.0).unwrap();
    let mut trials = 0;
    let mut rejected = 0;
    for _ in 0..1000 {
        let counts = (0..grid.voxel_count()).map(|_| pois.sample(&mut rng) as u32).collect();
        let vol = CountVolume { grid: grid.clone(), counts, num_views: 30, mode: AccumulationMode::Unsaturated };
        for d in select_model_and_threshold(&vol, &params).unwrap() {
            trials += 1;
            rejected += (d.model == CountModel::Ztp && !d.inherited) as usize;
        }
    }
    let rate = rejected as f64 / trials as f64;
    let secs = start.elapsed().as_secs_f64();
    report.record(
        "4 dispersion test calibration",
        (rate - 0.05).abs() <= 0.02 && secs < 30.0,
        format!("rejection rate {rate:.4} over {trials} Poisson(3) slices of 1000 (0.05 ± 0.02), suite {secs:.1} s (limit 30 s)"),
    );
}

fn q(v: f64) -> BigRational {
    BigRational::from_f64(v).unwrap()
}

/// Determinant by fraction-exact Gaussian elimination.
fn det(mut m: Vec<Vec<BigRational>>) -> BigRational {
    let n = m.len();
    let mut acc = BigRational::from_integer(1.into());
    for col in 0..n {
        let Some(piv) = (col..n).find(|&r| !m[r][col].is_zero()) else {
            return BigRational::zero();
        };
        if piv != col {
            m.swap(piv, col);
            acc = -acc;
        }
        let p = m[col][col].clone();
        acc *= &p;
        for r in col + 1..n {
            let f = &m[r][col] / &p;
            for c in col..n {
                let v = &f * &m[col][c];
                m[r][c] -= v;
            }
        }
    }
    acc
}

fn sign(v: &BigRational) -> i32 {
    if v.is_zero() {
        0
    } else if v.is_positive() {
        1
    } else {
        -1
    }
}

fn oracle_orient(a: &Vec3, b: &Vec3, c: &Vec3, d: &Vec3) -> i32 {
    let rows = [b, c, d].map(|p| (0..3).map(|i| q(p[i]) - q(a[i])).collect::<Vec<_>>());
    sign(&det(rows.to_vec()))
}

/// Positive when `e` lies inside the sphere through a positively oriented
/// `a, b, c, d`.
fn oracle_insphere(a: &Vec3, b: &Vec3, c: &Vec3, d: &Vec3, e: &Vec3) -> i32 {
    let rows = [a, b, c, d].map(|p| {
        let r: Vec<BigRational> = (0..3).map(|i| q(p[i]) - q(e[i])).collect();
        let lift = r.iter().fold(BigRational::zero(), |s, x| s + x * x);
        vec![r[0].clone(), r[1].clone(), r[2].clone(), lift]
    });
    -sign(&det(rows.to_vec()))
}

fn random_unit(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

fn nudge(v: f64, steps: i64) -> f64 {
    let mut x = v;
    for _ in 0..steps.abs() {
        x = if steps > 0 { x.next_up() } else { x.next_down() };
    }
    x
}

/// Integer points on the sphere of radius 3 about the origin.
const ON_SPHERE_3: [[f64; 3]; 30] = {
    let mut out = [[0.0; 3]; 30];
    let base = [[1.0, 2.0, 2.0], [2.0, 1.0, 2.0], [2.0, 2.0, 1.0]];
    let mut n = 0;
    let mut b = 0;
    while b < 3 {
        let mut s = 0;
        while s < 8 {
            let sx = if s & 1 == 0 { 1.0 } else { -1.0 };
            let sy = if s & 2 == 0 { 1.0 } else { -1.0 };
            let sz = if s & 4 == 0 { 1.0 } else { -1.0 };
            out[n] = [base[b][0] * sx, base[b][1] * sy, base[b][2] * sz];
            n += 1;
            s += 1;
        }
        b += 1;
    }
    let axes = [[3.0, 0.0, 0.0], [-3.0, 0.0, 0.0], [0.0, 3.0, 0.0], [0.0, -3.0, 0.0], [0.0, 0.0, 3.0], [0.0, 0.0, -3.0]];
    let mut a = 0;
    while a < 6 {
        out[n] = axes[a];
        n += 1;
        a += 1;
    }
    out
};

/// Alternates between orientation and in-sphere cases, half built from
/// lattice points so that exact ties occur, each optionally nudged by a few
/// ulps off the degenerate configuration.
fn predicate_fuzz(cases: usize) -> (usize, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(0xfeed);
    let mut mismatches = 0;
    let mut ties = 0;
    let mut checked = 0;
    let mut i = 0usize;
    while checked < cases {
        i += 1;
        let lattice = (i / 2) % 2 == 0;
        let scale = [1.0, 1e3, 1e-3][(i / 4) % 3];
        if i % 2 == 0 {
            let (a, b, c, mut d) = if lattice {
                let mut p = || Vec3::new(rng.random_range(-50..=50) as f64, rng.random_range(-50..=50) as f64, rng.random_range(-50..=50) as f64) * scale;
                let (a, b, c) = (p(), p(), p());
                let (s, t) = (rng.random_range(-3..=3) as f64, rng.random_range(-3..=3) as f64);
                (a, b, c, a + (b - a) * s + (c - a) * t)
            } else {
                let a = random_unit(&mut rng) * scale;
                let b = random_unit(&mut rng) * scale;
                let c = random_unit(&mut rng) * scale;
                let (s, t) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
                (a, b, c, a + (b - a) * s + (c - a) * t)
            };
            let k = rng.random_range(0..3);
            d[k] = nudge(d[k], rng.random_range(-2..=2));
            let want = oracle_orient(&a, &b, &c, &d);
            ties += (want == 0) as usize;
            checked += 1;
            mismatches += (orient3d(&a, &b, &c, &d) != want) as usize;
        } else {
            let (a, b, c, d, mut e) = if lattice {
                let shift = Vec3::new(rng.random_range(-20..=20) as f64, rng.random_range(-20..=20) as f64, rng.random_range(-20..=20) as f64);
                let mut p = || (Vec3::from(ON_SPHERE_3[rng.random_range(0..30)]) + shift) * scale;
                (p(), p(), p(), p(), p())
            } else {
                let mut p = || random_unit(&mut rng) * scale;
                (p(), p(), p(), p(), p())
            };
            let k = rng.random_range(0..3);
            e[k] = nudge(e[k], rng.random_range(-2..=2));
            let o = oracle_orient(&a, &b, &c, &d);
            if o == 0 {
                continue;
            }
            let (a, b) = if o < 0 { (b, a) } else { (a, b) };
            let want = oracle_insphere(&a, &b, &c, &d, &e);
            ties += (want == 0) as usize;
            checked += 1;
            mismatches += (insphere(&a, &b, &c, &d, &e) != want) as usize;
        }
    }
    (mismatches, ties)
}

/// Convex hull volume by incremental facet insertion, independent of the
/// tetrahedralization. Assumes general position.
fn hull_volume(pts: &[Vec3]) -> f64 {
    let orient = |a: &Vec3, b: &Vec3, c: &Vec3, d: &Vec3| (b - a).cross(&(c - a)).dot(&(d - a));
    let (i0, i1) = (0, 1);
    let i2 = (2..pts.len()).find(|&i| (pts[i1] - pts[i0]).cross(&(pts[i] - pts[i0])).norm() > 1e-9).unwrap();
    let i3 = (2..pts.len()).find(|&i| i != i2 && orient(&pts[i0], &pts[i1], &pts[i2], &pts[i]).abs() > 1e-9).unwrap();
    let inner = (pts[i0] + pts[i1] + pts[i2] + pts[i3]) / 4.0;
    // Faces stored with outward normals.
    let outward = |f: [usize; 3]| if orient(&pts[f[0]], &pts[f[1]], &pts[f[2]], &inner) < 0.0 { f } else { [f[0], f[2], f[1]] };
    let mut faces: Vec<[usize; 3]> =
        vec![outward([i0, i1, i2]), outward([i0, i1, i3]), outward([i0, i2, i3]), outward([i1, i2, i3])];
    for (p, pt) in pts.iter().enumerate() {
        if [i0, i1, i2, i3].contains(&p) {
            continue;
        }
        let visible: Vec<bool> =
            faces.iter().map(|f| orient(&pts[f[0]], &pts[f[1]], &pts[f[2]], pt) > 0.0).collect();
        if !visible.iter().any(|&v| v) {
            continue;
        }
        let mut edges: HashSet<(usize, usize)> = HashSet::new();
        for (f, _) in faces.iter().zip(&visible).filter(|(_, &v)| v) {
            for (u, v) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
                if !edges.remove(&(v, u)) {
                    edges.insert((u, v));
                }
            }
        }
        let mut kept: Vec<[usize; 3]> = faces.iter().zip(&visible).filter(|(_, &v)| !v).map(|(f, _)| *f).collect();
        kept.extend(edges.into_iter().map(|(u, v)| [u, v, p]));
        faces = kept;
    }
    faces
        .iter()
        .map(|f| (pts[f[0]] - inner).cross(&(pts[f[1]] - inner)).dot(&(pts[f[2]] - inner)) / 6.0)
        .sum()
}

fn delaunay_suite(report: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(0xde1a);
    let (mut tets, mut violations, mut worst_rel) = (0usize, 0usize, 0.0f64);
    for cloud in 0..50 {
        let n = rng.random_range(50..=500);
        let pts: Vec<Vec3> = (0..n)
            .map(|_| {
                if cloud % 2 == 0 {
                    Vec3::new(rng.random(), rng.random(), rng.random())
                } else {
                    random_unit(&mut rng) * rng.random_range(0.0f64..1.0).cbrt()
                }
            })
            .collect();
        let mesh = tetrahedralize_points(&pts, cloud as u64).unwrap();
        tets += mesh.len();
        for t in 0..mesh.len() {
            let [a, b, c, d] = mesh.tet_points(t);
            let own = mesh.tets[t];
            for (i, e) in mesh.vertices.iter().enumerate() {
                if !own.contains(&(i as u32)) && insphere(&a, &b, &c, &d, e) > 0 {
                    violations += 1;
                }
            }
        }
        let vol: f64 = (0..mesh.len()).map(|t| {
            let [a, b, c, d] = mesh.tet_points(t);
            signed_volume(&a, &b, &c, &d)
        }).sum();
        let hull = hull_volume(&pts);
        worst_rel = worst_rel.max((vol - hull).abs() / hull);
    }
    report.record(
        "5 Delaunay empty circumsphere",
        violations == 0,
        format!("{violations} violations over {tets} tets in 50 clouds of 50-500 points"),
    );
    report.record(
        "5 volume equals hull volume",
        worst_rel <= 1e-9,
        format!("worst relative difference {worst_rel:.2e} (limit 1e-9)"),
    );
    let start = Instant::now();
    let cases = 100_000;
    let (mismatches, ties) = predicate_fuzz(cases);
    report.record(
        "5 predicate fuzzing",
        mismatches == 0,
        format!(
            "{mismatches} mismatches in {cases} near-degenerate cases ({ties} exact ties) against rational arithmetic, {:.1} s",
            start.elapsed().as_secs_f64()
        ),
    );
}

/// Every voxel whose open box meets the ray in a segment of positive length.
fn voxels_on_ray(grid: &GridSpec, ray: &Ray) -> Vec<usize> {
    (0..grid.voxel_count())
        .filter(|&l| {
            let c = grid.voxel_coords(l);
            let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
            for a in 0..3 {
                let p0 = grid.origin[a] + c[a] as f64 * grid.voxel_size[a];
                let p1 = grid.origin[a] + (c[a] + 1) as f64 * grid.voxel_size[a];
                if ray.direction[a] == 0.0 {
                    if !(ray.origin[a] > p0 && ray.origin[a] < p1) {
                        return false;
                    }
                } else {
                    let ta = (p0 - ray.origin[a]) / ray.direction[a];
                    let tb = (p1 - ray.origin[a]) / ray.direction[a];
                    lo = lo.max(ta.min(tb));
                    hi = hi.min(ta.max(tb));
                }
            }
            lo < hi
        })
        .collect()
}

fn brute_counts(maps: &[EdgeMap], geom: &AcquisitionGeometry, grid: &GridSpec, mode: AccumulationMode) -> Vec<u32> {
    let mut counts = vec![0u32; grid.voxel_count()];
    for (k, map) in maps.iter().enumerate() {
        let mut seen = vec![false; grid.voxel_count()];
        for v in 0..map.height {
            for u in 0..map.width {
                if map.get(u, v) == 0 {
                    continue;
                }
                for l in voxels_on_ray(grid, &geom.ray_for_pixel(k, u, v).unwrap()) {
                    match mode {
                        AccumulationMode::Unsaturated => counts[l] += 1,
                        AccumulationMode::Saturated => {
                            if !seen[l] {
                                seen[l] = true;
                                counts[l] += 1;
                            }
                        }
                    }
                }
            }
        }
    }
    counts
}

fn backprojection(report: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(0xacc);
    let mut geom = make_circular_geometry(6, 500.0, 1000.0, (24, 24), (2.4, 2.4)).unwrap();
    for a in geom.angles.iter_mut() {
        *a += rng.random_range(0.0..0.5);
    }
    let grid = GridSpec::centered([32; 3], 1.0).unwrap();
    let maps: Vec<EdgeMap> = (0..6)
        .map(|_| Image::from_vec(24, 24, (0..576).map(|_| (rng.random::<f64>() < 0.12) as u8).collect()))
        .collect();
    let mut exact = true;
    for mode in [AccumulationMode::Saturated, AccumulationMode::Unsaturated] {
        let got = backproject_edge_maps(&maps, &geom, &grid, mode).unwrap();
        exact &= got.counts == brute_counts(&maps, &geom, &grid, mode);
    }
    report.record(
        "6 backprojection oracle",
        exact,
        format!("32³ grid, 6 random edge maps of 24², both accumulation modes, exact equality: {exact}"),
    );

    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| backproject_edge_maps(&maps, &geom, &grid, AccumulationMode::Saturated).unwrap())
    };
    let one = run(1);
    let many = run(4);
    let serial = backproject_edge_maps_serial(&maps, &geom, &grid, AccumulationMode::Saturated).unwrap();
    let same = one == many && one == serial;
    report.record("6 thread-count determinism", same, format!("1 vs 4 workers vs serial path identical: {same}"));
}

fn centered_cube() -> TetMesh {
    let v: Vec<Vec3> = (0..8)
        .map(|i| Vec3::new((i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64) - Vec3::repeat(0.5))
        .collect();
    TetMesh::from_tets(v, vec![[0, 1, 2, 4], [1, 3, 2, 7], [1, 4, 5, 7], [2, 4, 7, 6], [1, 2, 4, 7]]).unwrap()
}

fn sart_cube(report: &mut Report) {
    let mesh = centered_cube();
    let proj = MeshProjector::new(&mesh).unwrap();
    let geom = make_circular_geometry(60, 10.0, 20.0, (32, 32), (0.1, 0.1)).unwrap();
    let truth = [0.2, 0.5, 0.9, 0.4, 0.7];
    let data = forward_project(&proj, &truth, &geom).unwrap();
    let sweeps = 100;
    let res = sart_reconstruct(&proj, &data, &SartParams { relax: 1.0, sweeps, ..SartParams::default() }).unwrap();
    let rmse = (res.values.iter().zip(&truth).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / 5.0).sqrt();
    let norm = (truth.iter().map(|v| v * v).sum::<f64>() / 5.0).sqrt();
    report.record(
        "7 SART five-tet cube",
        rmse / norm < 0.01,
        format!("relative RMSE {:.3e} after {sweeps} sweeps, 60 views (limit 1e-2)", rmse / norm),
    );
}

fn sart_sphere(report: &mut Report, run: &SphereRun) {
    let geom = run.cfg.geometry.build().unwrap();
    let phantom = run.cfg.load_phantom().unwrap();
    let data = stage_project(&phantom, &geom).unwrap();
    let params = run.cfg.recon.sart();
    let start = Instant::now();
    let res = stage_recon(&run.mesh, &data, &params).unwrap();
    let proj = MeshProjector::new(&run.mesh).unwrap();
    let initial = residual_sum_sq(&proj, &vec![params.init; run.mesh.len()], &data).unwrap();
    let last = *res.residuals.last().unwrap();
    let reduction = 1.0 - last / initial;
    // Cells whose vertices all lie in the ball lie wholly inside it.
    let inside: Vec<usize> = (0..run.mesh.len())
        .filter(|&t| run.mesh.tet_points(t).iter().all(|p| p.norm() <= DEFAULT_SPHERE_RADIUS))
        .collect();
    let vol: f64 = inside.iter().map(|&t| run.mesh.volume(t)).sum();
    let mean = inside.iter().map(|&t| res.values[t] * run.mesh.volume(t)).sum::<f64>() / vol;
    let rel = (mean - DEFAULT_ATTENUATION).abs() / DEFAULT_ATTENUATION;
    report.record(
        "7 SART sphere residual",
        reduction >= 0.9,
        format!(
            "final/initial residual {:.3e} (reduction {:.2}%) over {} sweeps, {:.1} s (need ≥ 90%)",
            last / initial,
            100.0 * reduction,
            params.sweeps,
            start.elapsed().as_secs_f64()
        ),
    );
    report.record(
        "7 SART sphere interior mean",
        rel <= 0.1,
        format!("volume-weighted mean {mean:.5} over {} interior cells vs {DEFAULT_ATTENUATION} (off by {:.1}%, limit 10%)", inside.len(), 100.0 * rel),
    );
}

fn reproducibility(report: &mut Report) {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut cfg = sphere_config(1.4);
    cfg.recon.enabled = false;
    let meshes: Vec<_> = dirs
        .iter()
        .map(|d| {
            cfg.output_dir = d.path().to_path_buf();
            run_pipeline(&cfg).unwrap();
            meshseed::delaunay::io::read_mesh(&d.path().join("mesh.vtk")).unwrap().0
        })
        .collect();
    let file = |i: usize, f: &str| std::fs::read(dirs[i].path().join(f)).unwrap();
    let clouds = file(0, "cloud.xyz") == file(1, "cloud.xyz") && file(0, "cloud.ply") == file(1, "cloud.ply");
    let tets = meshes[0].canonical_cells() == meshes[1].canonical_cells() && file(0, "mesh.vtk") == file(1, "mesh.vtk");
    let quality = file(0, "quality.json") == file(1, "quality.json");
    report.record(
        "8 end-to-end reproducibility",
        clouds && tets && quality,
        format!("clouds identical: {clouds}, tet sets identical: {tets}, quality reports identical: {quality}"),
    );
}

fn main() {
    let mut report = Report::default();

    let base = run_to_eval(&sphere_config(1.4));
    compression(&mut report, "", &base);
    selection_quality(&mut report, "", &base);
    for sigma in [0.7, 2.1] {
        let run = run_to_eval(&sphere_config(sigma));
        let tag = format!(" (Canny sigma {sigma})");
        compression(&mut report, &tag, &run);
        selection_quality(&mut report, &tag, &run);
    }
    shepp_logan(&mut report);
    ztp_suite(&mut report);
    delaunay_suite(&mut report);
    backprojection(&mut report);
    sart_cube(&mut report);
    sart_sphere(&mut report, &base);
    reproducibility(&mut report);

    let failed: Vec<&str> = report.outcomes.iter().filter(|o| !o.pass).map(|o| o.name.as_str()).collect();
    println!(
        "acceptance: {} passed, {} failed",
        report.outcomes.len() - failed.len(),
        failed.len()
    );
    if !failed.is_empty() {
        println!("failed: {}", failed.join("; "));
        std::process::exit(1);
    }
}
