//! Robust orientation and in-sphere tests.
//!
//! Each predicate first evaluates the determinant in plain floating point and
//! compares it with a forward error bound. Only when the bound cannot certify
//! the sign is the determinant recomputed exactly with expansion arithmetic.
//! Expansions are exact only while no product underflows or overflows, so
//! inputs with coordinates of extreme magnitude go to big-integer arithmetic.

use num_bigint::BigInt;

use super::expansion::{self as ex, Expansion};
use crate::Vec3;

const EPSILON: f64 = f64::EPSILON * 0.5;
const ORIENT_BOUND: f64 = (7.0 + 56.0 * EPSILON) * EPSILON;
const INSPHERE_BOUND: f64 = (16.0 + 224.0 * EPSILON) * EPSILON;

/// Sign of `det[b-a, c-a, d-a]`. Positive for the canonical simplex
/// `(0,0,0),(1,0,0),(0,1,0),(0,0,1)`.
pub fn orient3d(a: &Vec3, b: &Vec3, c: &Vec3, d: &Vec3) -> i32 {
    if !in_safe_range(&[a, b, c, d]) {
        return orient3d_bigint(a, b, c, d);
    }
    let (ux, uy, uz) = (b.x - a.x, b.y - a.y, b.z - a.z);
    let (vx, vy, vz) = (c.x - a.x, c.y - a.y, c.z - a.z);
    let (wx, wy, wz) = (d.x - a.x, d.y - a.y, d.z - a.z);
    let m1 = vy * wz - vz * wy;
    let m2 = vz * wx - vx * wz;
    let m3 = vx * wy - vy * wx;
    let det = ux * m1 + uy * m2 + uz * m3;
    let permanent = ux.abs() * ((vy * wz).abs() + (vz * wy).abs())
        + uy.abs() * ((vz * wx).abs() + (vx * wz).abs())
        + uz.abs() * ((vx * wy).abs() + (vy * wx).abs());
    let bound = ORIENT_BOUND * permanent;
    if det > bound {
        1
    } else if det < -bound {
        -1
    } else {
        orient3d_exact(a, b, c, d)
    }
}

fn rel(p: &Vec3, o: &Vec3) -> [Expansion; 3] {
    [ex::diff(p.x, o.x), ex::diff(p.y, o.y), ex::diff(p.z, o.z)]
}

fn det3(r0: &[Expansion; 3], r1: &[Expansion; 3], r2: &[Expansion; 3]) -> Expansion {
    let m1 = ex::sub(&ex::mul(&r1[1], &r2[2]), &ex::mul(&r1[2], &r2[1]));
    let m2 = ex::sub(&ex::mul(&r1[2], &r2[0]), &ex::mul(&r1[0], &r2[2]));
    let m3 = ex::sub(&ex::mul(&r1[0], &r2[1]), &ex::mul(&r1[1], &r2[0]));
    ex::sum(
        &ex::sum(&ex::mul(&r0[0], &m1), &ex::mul(&r0[1], &m2)),
        &ex::mul(&r0[2], &m3),
    )
}

pub fn orient3d_exact(a: &Vec3, b: &Vec3, c: &Vec3, d: &Vec3) -> i32 {
    if !in_safe_range(&[a, b, c, d]) {
        return orient3d_bigint(a, b, c, d);
    }
    ex::sign(&det3(&rel(b, a), &rel(c, a), &rel(d, a)))
}

/// Positive when `e` lies strictly inside the sphere through `a, b, c, d`,
/// assuming `orient3d(a, b, c, d) > 0`; zero when cospherical.
pub fn insphere(a: &Vec3, b: &Vec3, c: &Vec3, d: &Vec3, e: &Vec3) -> i32 {
    if !in_safe_range(&[a, b, c, d, e]) {
        return insphere_bigint(a, b, c, d, e);
    }
    let (aex, aey, aez) = (a.x - e.x, a.y - e.y, a.z - e.z);
    let (bex, bey, bez) = (b.x - e.x, b.y - e.y, b.z - e.z);
    let (cex, cey, cez) = (c.x - e.x, c.y - e.y, c.z - e.z);
    let (dex, dey, dez) = (d.x - e.x, d.y - e.y, d.z - e.z);

    let ab = aex * bey - bex * aey;
    let bc = bex * cey - cex * bey;
    let cd = cex * dey - dex * cey;
    let da = dex * aey - aex * dey;
    let ac = aex * cey - cex * aey;
    let bd = bex * dey - dex * bey;

    let abc = aez * bc - bez * ac + cez * ab;
    let bcd = bez * cd - cez * bd + dez * bc;
    let cda = cez * da + dez * ac + aez * cd;
    let dab = dez * ab + aez * bd + bez * da;

    let alift = aex * aex + aey * aey + aez * aez;
    let blift = bex * bex + bey * bey + bez * bez;
    let clift = cex * cex + cey * cey + cez * cez;
    let dlift = dex * dex + dey * dey + dez * dez;

    let det = (dlift * abc - clift * dab) + (blift * cda - alift * bcd);

    let p = |x1: f64, y1: f64, x2: f64, y2: f64| (x1 * y2).abs() + (x2 * y1).abs();
    let abp = p(aex, aey, bex, bey);
    let bcp = p(bex, bey, cex, cey);
    let cdp = p(cex, cey, dex, dey);
    let dap = p(dex, dey, aex, aey);
    let acp = p(aex, aey, cex, cey);
    let bdp = p(bex, bey, dex, dey);
    let permanent = (cdp * bez.abs() + bdp * cez.abs() + bcp * dez.abs()) * alift
        + (dap * cez.abs() + acp * dez.abs() + cdp * aez.abs()) * blift
        + (abp * dez.abs() + bdp * aez.abs() + dap * bez.abs()) * clift
        + (bcp * aez.abs() + acp * bez.abs() + abp * cez.abs()) * dlift;
    let bound = INSPHERE_BOUND * permanent;
    if det > bound {
        -1
    } else if det < -bound {
        1
    } else {
        insphere_exact(a, b, c, d, e)
    }
}

pub fn insphere_exact(a: &Vec3, b: &Vec3, c: &Vec3, d: &Vec3, e: &Vec3) -> i32 {
    if !in_safe_range(&[a, b, c, d, e]) {
        return insphere_bigint(a, b, c, d, e);
    }
    let rows = [rel(a, e), rel(b, e), rel(c, e), rel(d, e)];
    let lift = |r: &[Expansion; 3]| {
        ex::sum(&ex::sum(&ex::mul(&r[0], &r[0]), &ex::mul(&r[1], &r[1])), &ex::mul(&r[2], &r[2]))
    };
    // Cofactor expansion along the lifted column.
    let m_a = det3(&rows[1], &rows[2], &rows[3]);
    let m_b = det3(&rows[0], &rows[2], &rows[3]);
    let m_c = det3(&rows[0], &rows[1], &rows[3]);
    let m_d = det3(&rows[0], &rows[1], &rows[2]);
    let det = ex::sum(
        &ex::sub(&ex::mul(&lift(&rows[3]), &m_d), &ex::mul(&lift(&rows[2]), &m_c)),
        &ex::sub(&ex::mul(&lift(&rows[1]), &m_b), &ex::mul(&lift(&rows[0]), &m_a)),
    );
    -ex::sign(&det)
}

/// Nonzero magnitudes for which every intermediate product of the in-sphere
/// determinant, error terms included, stays within the normal range.
const SAFE_MIN: f64 = 7.888609052210118e-31; // 2^-100
const SAFE_MAX: f64 = 1.2676506002282294e30; // 2^100

fn in_safe_range(pts: &[&Vec3]) -> bool {
    pts.iter().all(|p| p.iter().all(|&x| x == 0.0 || (SAFE_MIN..=SAFE_MAX).contains(&x.abs())))
}

/// Coordinates as integers in units of the smallest exponent present.
fn to_integers<const N: usize>(pts: [&Vec3; N]) -> [[BigInt; 3]; N] {
    let decode = |x: f64| -> (i64, i32) {
        let bits = x.to_bits();
        let exp = ((bits >> 52) & 0x7ff) as i32;
        let frac = (bits & ((1u64 << 52) - 1)) as i64;
        let (m, e) = if exp == 0 { (frac, -1074) } else { (frac | (1i64 << 52), exp - 1075) };
        (if x.is_sign_negative() { -m } else { m }, e)
    };
    let emin = pts
        .iter()
        .flat_map(|p| p.iter())
        .filter(|x| **x != 0.0)
        .map(|&x| decode(x).1)
        .min()
        .unwrap_or(0);
    pts.map(|p| [0, 1, 2].map(|i| {
        let (m, e) = decode(p[i]);
        BigInt::from(m) << (e - emin) as usize
    }))
}

fn det3_int(r: [[BigInt; 3]; 3]) -> BigInt {
    let [u, v, w] = r;
    &u[0] * (&v[1] * &w[2] - &v[2] * &w[1]) + &u[1] * (&v[2] * &w[0] - &v[0] * &w[2])
        + &u[2] * (&v[0] * &w[1] - &v[1] * &w[0])
}

fn sign_int(v: &BigInt) -> i32 {
    match v.sign() {
        num_bigint::Sign::Minus => -1,
        num_bigint::Sign::NoSign => 0,
        num_bigint::Sign::Plus => 1,
    }
}

fn orient3d_bigint(a: &Vec3, b: &Vec3, c: &Vec3, d: &Vec3) -> i32 {
    let [a, b, c, d] = to_integers([a, b, c, d]);
    let rel = |p: &[BigInt; 3]| [0, 1, 2].map(|i| &p[i] - &a[i]);
    sign_int(&det3_int([rel(&b), rel(&c), rel(&d)]))
}

fn insphere_bigint(a: &Vec3, b: &Vec3, c: &Vec3, d: &Vec3, e: &Vec3) -> i32 {
    let [a, b, c, d, e] = to_integers([a, b, c, d, e]);
    let rows = [&a, &b, &c, &d].map(|p| [0, 1, 2].map(|i| &p[i] - &e[i]));
    let lift = |r: &[BigInt; 3]| &r[0] * &r[0] + &r[1] * &r[1] + &r[2] * &r[2];
    let minor = |i: usize, j: usize, k: usize| det3_int([rows[i].clone(), rows[j].clone(), rows[k].clone()]);
    let det = (lift(&rows[3]) * minor(0, 1, 2) - lift(&rows[2]) * minor(0, 1, 3))
        + (lift(&rows[1]) * minor(0, 2, 3) - lift(&rows[0]) * minor(1, 2, 3));
    -sign_int(&det)
}

/// In-sphere test with symbolic perturbation: vertex `ids` give each point an
/// infinitesimal lift that grows with the id, so the result is never zero
/// when `a, b, c, d` span a tetrahedron.
pub fn insphere_perturbed(pts: [&Vec3; 5], ids: [u32; 5]) -> i32 {
    let s = insphere(pts[0], pts[1], pts[2], pts[3], pts[4]);
    if s != 0 {
        return s;
    }
    let mut order = [0usize, 1, 2, 3, 4];
    order.sort_unstable_by(|&i, &j| ids[j].cmp(&ids[i]));
    for &j in &order {
        let others: Vec<&Vec3> = (0..5).filter(|&k| k != j).map(|k| pts[k]).collect();
        let o = orient3d(others[0], others[1], others[2], others[3]);
        if o != 0 {
            // Cofactor sign of the lifted entry in row j is (-1)^j (0-based).
            let cof = if j % 2 == 0 { o } else { -o };
            return -cof;
        }
    }
    0
}
