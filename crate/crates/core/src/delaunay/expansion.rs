//! Floating-point expansion arithmetic: exact sums and products represented
//! as non-overlapping sequences of doubles in increasing magnitude.

#[inline]
pub fn fast_two_sum(a: f64, b: f64) -> (f64, f64) {
    let x = a + b;
    let bv = x - a;
    (x, b - bv)
}

#[inline]
pub fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let x = a + b;
    let bv = x - a;
    let av = x - bv;
    (x, (a - av) + (b - bv))
}

#[inline]
pub fn two_diff(a: f64, b: f64) -> (f64, f64) {
    two_sum(a, -b)
}

#[inline]
pub fn two_product(a: f64, b: f64) -> (f64, f64) {
    let x = a * b;
    (x, a.mul_add(b, -x))
}

pub type Expansion = Vec<f64>;

/// Exact `a - b` as an expansion.
pub fn diff(a: f64, b: f64) -> Expansion {
    let (x, y) = two_diff(a, b);
    compress([y, x])
}

fn compress<const N: usize>(parts: [f64; N]) -> Expansion {
    parts.into_iter().filter(|&v| v != 0.0).collect()
}

/// `e + b`.
pub fn grow(e: &[f64], b: f64) -> Expansion {
    let mut out = Vec::with_capacity(e.len() + 1);
    let mut q = b;
    for &ei in e {
        let (s, h) = two_sum(q, ei);
        if h != 0.0 {
            out.push(h);
        }
        q = s;
    }
    if q != 0.0 {
        out.push(q);
    }
    out
}

/// `e + f`.
pub fn sum(e: &[f64], f: &[f64]) -> Expansion {
    let (mut acc, other) = if e.len() >= f.len() { (e.to_vec(), f) } else { (f.to_vec(), e) };
    for &fi in other {
        acc = grow(&acc, fi);
    }
    acc
}

pub fn negate(e: &[f64]) -> Expansion {
    e.iter().map(|v| -v).collect()
}

/// `e - f`.
pub fn sub(e: &[f64], f: &[f64]) -> Expansion {
    sum(e, &negate(f))
}

/// `e · b`.
pub fn scale(e: &[f64], b: f64) -> Expansion {
    let mut out = Vec::with_capacity(2 * e.len());
    let Some((&e0, rest)) = e.split_first() else {
        return out;
    };
    let (mut q, h) = two_product(e0, b);
    if h != 0.0 {
        out.push(h);
    }
    for &ei in rest {
        let (p1, p0) = two_product(ei, b);
        let (s, h) = two_sum(q, p0);
        if h != 0.0 {
            out.push(h);
        }
        let (s2, h2) = fast_two_sum(p1, s);
        if h2 != 0.0 {
            out.push(h2);
        }
        q = s2;
    }
    if q != 0.0 {
        out.push(q);
    }
    out
}

/// `e · f`.
pub fn mul(e: &[f64], f: &[f64]) -> Expansion {
    let (long, short) = if e.len() >= f.len() { (e, f) } else { (f, e) };
    let mut acc = Vec::new();
    for &fi in short {
        acc = sum(&acc, &scale(long, fi));
    }
    acc
}

/// Sign of the exact value: -1, 0 or 1.
pub fn sign(e: &[f64]) -> i32 {
    match e.last() {
        Some(&v) if v > 0.0 => 1,
        Some(&v) if v < 0.0 => -1,
        _ => 0,
    }
}
