//! Canny edge detection on projection images.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

/// Binary edge mask; every value is 0 or 1.
pub type EdgeMap = Image<u8>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CannyParams {
    pub sigma: f64,
    pub high_percentile: f64,
    pub low_ratio: f64,
    /// Explicit gradient-magnitude thresholds; each overrides its automatic value.
    pub low: Option<f64>,
    pub high: Option<f64>,
}

impl Default for CannyParams {
    fn default() -> Self {
        CannyParams {
            sigma: 1.4,
            high_percentile: 0.90,
            low_ratio: 0.4,
            low: None,
            high: None,
        }
    }
}

impl CannyParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Config(format!("sigma must be positive, got {}", self.sigma)));
        }
        if !(self.high_percentile > 0.0 && self.high_percentile < 1.0) {
            return Err(Error::Config(format!(
                "high_percentile must be in (0, 1), got {}",
                self.high_percentile
            )));
        }
        if !(self.low_ratio > 0.0 && self.low_ratio < 1.0) {
            return Err(Error::Config(format!("low_ratio must be in (0, 1), got {}", self.low_ratio)));
        }
        for t in [self.low, self.high].into_iter().flatten() {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(Error::Config(format!("threshold must be finite and non-negative, got {t}")));
            }
        }
        Ok(())
    }
}

/// Index into `[0, n)` with half-sample symmetric reflection (`…b a | a b …`).
#[inline]
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - 1 - m }) as usize
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as isize;
    let w: Vec<f64> = (-r..=r)
        .map(|x| (-(x * x) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

pub fn gaussian_blur(img: &Image<f64>, sigma: f64) -> Image<f64> {
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let (w, h) = img.dims();
    let mut tmp = Image::new(w, h);
    for v in 0..h {
        for u in 0..w {
            let mut acc = 0.0;
            for (j, kw) in k.iter().enumerate() {
                acc += kw * img.get(reflect(u as isize + j as isize - r, w), v);
            }
            tmp.set(u, v, acc);
        }
    }
    let mut out = Image::new(w, h);
    for v in 0..h {
        for u in 0..w {
            let mut acc = 0.0;
            for (j, kw) in k.iter().enumerate() {
                acc += kw * tmp.get(u, reflect(v as isize + j as isize - r, h));
            }
            out.set(u, v, acc);
        }
    }
    out
}

/// Sobel gradients `(gx, gy)` with reflective borders; `gx` grows with `u`.
pub fn sobel(img: &Image<f64>) -> (Image<f64>, Image<f64>) {
    let (w, h) = img.dims();
    let mut gx = Image::new(w, h);
    let mut gy = Image::new(w, h);
    let at = |u: isize, v: isize| img.get(reflect(u, w), reflect(v, h));
    for v in 0..h as isize {
        for u in 0..w as isize {
            let x = (at(u + 1, v - 1) + 2.0 * at(u + 1, v) + at(u + 1, v + 1))
                - (at(u - 1, v - 1) + 2.0 * at(u - 1, v) + at(u - 1, v + 1));
            let y = (at(u - 1, v + 1) + 2.0 * at(u, v + 1) + at(u + 1, v + 1))
                - (at(u - 1, v - 1) + 2.0 * at(u, v - 1) + at(u + 1, v - 1));
            gx.set(u as usize, v as usize, x);
            gy.set(u as usize, v as usize, y);
        }
    }
    (gx, gy)
}

/// `(low, high)` from the non-zero gradient magnitudes. High is the
/// nearest-rank `high_percentile` quantile; `(0, 0)` when all are zero.
pub fn auto_thresholds(magnitudes: &[f64], params: &CannyParams) -> (f64, f64) {
    let max = magnitudes.iter().copied().fold(0.0, f64::max);
    // Rounding residue in flat regions is not a gradient.
    let floor = max * 1e-9;
    let mut nz: Vec<f64> = magnitudes.iter().copied().filter(|&m| m > floor).collect();
    if nz.is_empty() {
        return (0.0, 0.0);
    }
    nz.sort_by(f64::total_cmp);
    let rank = ((params.high_percentile * nz.len() as f64).ceil() as usize).clamp(1, nz.len());
    let high = params.high.unwrap_or(nz[rank - 1]);
    let low = params.low.unwrap_or(params.low_ratio * high);
    (low, high)
}

fn direction_bin(gx: f64, gy: f64) -> usize {
    // Angle folded into [0, 180) degrees, then 4 sectors centered on 0/45/90/135.
    let mut a = gy.atan2(gx).to_degrees();
    if a < 0.0 {
        a += 180.0;
    }
    if !(22.5..157.5).contains(&a) {
        0
    } else if a < 67.5 {
        1
    } else if a < 112.5 {
        2
    } else {
        3
    }
}

/// Magnitudes surviving non-maximum suppression; suppressed pixels are 0.
/// A pixel survives when it is strictly above its predecessor along the
/// gradient and not below its successor, so a symmetric plateau keeps one.
pub fn non_maximum_suppression(gx: &Image<f64>, gy: &Image<f64>) -> Image<f64> {
    const STEPS: [(isize, isize); 4] = [(1, 0), (1, 1), (0, 1), (-1, 1)];
    let (w, h) = gx.dims();
    let mag: Vec<f64> = gx.data.iter().zip(&gy.data).map(|(x, y)| x.hypot(*y)).collect();
    let m = |u: isize, v: isize| {
        if u < 0 || v < 0 || u >= w as isize || v >= h as isize {
            0.0
        } else {
            mag[v as usize * w + u as usize]
        }
    };
    let mut out = Image::new(w, h);
    for v in 0..h {
        for u in 0..w {
            let c = mag[v * w + u];
            if c == 0.0 {
                continue;
            }
            let (du, dv) = STEPS[direction_bin(gx.get(u, v), gy.get(u, v))];
            let (ui, vi) = (u as isize, v as isize);
            if c > m(ui - du, vi - dv) && c >= m(ui + du, vi + dv) {
                out.set(u, v, c);
            }
        }
    }
    out
}

/// Pixels of `thin` ≥ `low` that are 8-connected to a pixel ≥ `high`.
pub fn hysteresis(thin: &Image<f64>, low: f64, high: f64) -> EdgeMap {
    let (w, h) = thin.dims();
    let mut out: EdgeMap = Image::new(w, h);
    if high <= 0.0 {
        return out;
    }
    let mut stack: Vec<usize> = Vec::new();
    for (i, &m) in thin.data.iter().enumerate() {
        if m > 0.0 && m >= high && out.data[i] == 0 {
            out.data[i] = 1;
            stack.push(i);
            while let Some(j) = stack.pop() {
                let (u, v) = ((j % w) as isize, (j / w) as isize);
                for dv in -1..=1 {
                    for du in -1..=1 {
                        let (nu, nv) = (u + du, v + dv);
                        if nu < 0 || nv < 0 || nu >= w as isize || nv >= h as isize {
                            continue;
                        }
                        let k = nv as usize * w + nu as usize;
                        if out.data[k] == 0 && thin.data[k] > 0.0 && thin.data[k] >= low {
                            out.data[k] = 1;
                            stack.push(k);
                        }
                    }
                }
            }
        }
    }
    out
}

pub fn canny_edges(img: &Image<f64>, params: &CannyParams) -> Result<EdgeMap> {
    params.validate()?;
    let (w, h) = img.dims();
    if w < 3 || h < 3 {
        return Err(Error::InputValidation(format!("image {w}x{h} is smaller than 3x3")));
    }
    if let Some(i) = img.data.iter().position(|v| !v.is_finite()) {
        return Err(Error::InputValidation(format!(
            "non-finite pixel at ({}, {})",
            i % w,
            i / w
        )));
    }
    let smooth = gaussian_blur(img, params.sigma);
    let (gx, gy) = sobel(&smooth);
    let mag: Vec<f64> = gx.data.iter().zip(&gy.data).map(|(x, y)| x.hypot(*y)).collect();
    let (low, high) = auto_thresholds(&mag, params);
    let thin = non_maximum_suppression(&gx, &gy);
    Ok(hysteresis(&thin, low, high))
}

/// One edge map per image, in input order.
pub fn canny_all(images: &[Image<f64>], params: &CannyParams) -> Result<Vec<EdgeMap>> {
    images
        .par_iter()
        .enumerate()
        .map(|(k, img)| canny_edges(img, params).map_err(|e| e.context(format!("projection {k}"))))
        .collect()
}

pub fn edge_count(map: &EdgeMap) -> usize {
    map.data.iter().filter(|&&b| b != 0).count()
}

pub fn write_pbm(map: &EdgeMap, path: &Path) -> Result<()> {
    let mut buf = format!("P4\n{} {}\n", map.width, map.height).into_bytes();
    let row_bytes = map.width.div_ceil(8);
    for v in 0..map.height {
        let mut row = vec![0u8; row_bytes];
        for u in 0..map.width {
            if map.get(u, v) != 0 {
                row[u / 8] |= 0x80 >> (u % 8);
            }
        }
        buf.extend_from_slice(&row);
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn write_pgm(map: &EdgeMap, path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut buf = format!("P5\n{} {}\n255\n", map.width, map.height).into_bytes();
    buf.extend(map.data.iter().map(|&b| if b != 0 { 255u8 } else { 0 }));
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

/// Reads a P4 bitmap or a P5 graymap (non-zero gray = edge).
pub fn read_edge_map(path: &Path) -> Result<EdgeMap> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_edge_map(&bytes)
}

pub fn parse_edge_map(bytes: &[u8]) -> Result<EdgeMap> {
    let mut pos = 0usize;
    let token = |pos: &mut usize| -> Result<String> {
        let mut t = String::new();
        while *pos < bytes.len() {
            let c = bytes[*pos];
            if c == b'#' && t.is_empty() {
                while *pos < bytes.len() && bytes[*pos] != b'\n' {
                    *pos += 1;
                }
                continue;
            }
            *pos += 1;
            if c.is_ascii_whitespace() {
                if !t.is_empty() {
                    return Ok(t);
                }
            } else {
                t.push(c as char);
            }
        }
        Err(Error::Parse {
            offset: *pos as u64,
            message: "unexpected end of header".into(),
        })
    };
    let magic = token(&mut pos)?;
    let number = |t: String, at: usize| -> Result<usize> {
        t.parse().map_err(|_| Error::Parse {
            offset: at as u64,
            message: format!("bad header number `{t}`"),
        })
    };
    let width = number(token(&mut pos)?, pos)?;
    let height = number(token(&mut pos)?, pos)?;
    let maxval = if magic == "P5" { Some(number(token(&mut pos)?, pos)?) } else { None };
    let body = &bytes[pos..];
    let mut map: EdgeMap = Image::new(width, height);
    let short = |need: usize| Error::Parse {
        offset: bytes.len() as u64,
        message: format!("image body has {} bytes, expected {need}", body.len()),
    };
    match (magic.as_str(), maxval) {
        ("P4", None) => {
            let row_bytes = width.div_ceil(8);
            if body.len() < row_bytes * height {
                return Err(short(row_bytes * height));
            }
            for v in 0..height {
                for u in 0..width {
                    let byte = body[v * row_bytes + u / 8];
                    map.set(u, v, (byte >> (7 - u % 8)) & 1);
                }
            }
        }
        ("P5", Some(m)) if (1..=255).contains(&m) => {
            if body.len() < width * height {
                return Err(short(width * height));
            }
            for (d, &b) in map.data.iter_mut().zip(body) {
                *d = u8::from(b != 0);
            }
        }
        _ => {
            return Err(Error::Parse {
                offset: 0,
                message: format!("unsupported image header `{magic}`"),
            })
        }
    }
    Ok(map)
}
