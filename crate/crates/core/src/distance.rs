//! Exact Euclidean distance transform.
//!
//! Two separable passes of the lower-envelope-of-parabolas algorithm (Felzenszwalb and
//! Huttenlocher): first along every column, then along every row. Linear in the number of
//! pixels and exact on the integer grid.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::raster::Mask;

/// Distance of each pixel to the nearest set pixel of a mask, in pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceField {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl DistanceField {
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }
}

/// Exact Euclidean distance from every pixel to the nearest `true` pixel of `mask`.
///
/// Fails with [`Error::EmptyRegion`] when the mask has no set pixels.
pub fn distance_transform(mask: &Mask) -> Result<DistanceField> {
    let (w, h) = mask.dims();
    if w == 0 || h == 0 {
        return Err(Error::contract("distance transform of an empty canvas"));
    }
    if !mask.any() {
        return Err(Error::EmptyRegion);
    }

    // Column pass, stored column-major: cols[x * h + y] = squared vertical distance.
    let mut cols = vec![0.0; w * h];
    cols.par_chunks_mut(h).enumerate().for_each_init(
        || Scratch::new(h),
        |scratch, (x, out)| {
            let f: Vec<f64> = (0..h)
                .map(|y| if mask.get(x, y) { 0.0 } else { f64::INFINITY })
                .collect();
            lower_envelope(&f, out, scratch);
        },
    );

    // Row pass, written row-major.
    let mut values = vec![0.0; w * h];
    values.par_chunks_mut(w).enumerate().for_each_init(
        || (Scratch::new(w), vec![0.0; w]),
        |(scratch, f), (y, out)| {
            for (x, v) in f.iter_mut().enumerate() {
                *v = cols[x * h + y];
            }
            lower_envelope(f, out, scratch);
            out.iter_mut().for_each(|d| *d = d.sqrt());
        },
    );

    Ok(DistanceField {
        width: w,
        height: h,
        values,
    })
}

struct Scratch {
    vertices: Vec<usize>,
    bounds: Vec<f64>,
}

impl Scratch {
    fn new(n: usize) -> Self {
        Self {
            vertices: Vec::with_capacity(n),
            bounds: Vec::with_capacity(n + 1),
        }
    }
}

/// 1-D squared distance transform: `out[q] = min_p (q - p)^2 + f[p]`.
///
/// Infinite samples contribute no parabola; if every sample is infinite the output is
/// infinite everywhere.
fn lower_envelope(f: &[f64], out: &mut [f64], s: &mut Scratch) {
    let n = f.len();
    s.vertices.clear();
    s.bounds.clear();

    for q in 0..n {
        if !f[q].is_finite() {
            continue;
        }
        let fq = f[q] + (q * q) as f64;
        loop {
            let Some(&p) = s.vertices.last() else {
                s.vertices.push(q);
                s.bounds.push(f64::NEG_INFINITY);
                break;
            };
            let fp = f[p] + (p * p) as f64;
            let cross = (fq - fp) / (2.0 * (q as f64 - p as f64));
            if cross <= *s.bounds.last().unwrap() {
                s.vertices.pop();
                s.bounds.pop();
            } else {
                s.vertices.push(q);
                s.bounds.push(cross);
                break;
            }
        }
    }

    if s.vertices.is_empty() {
        out.iter_mut().for_each(|v| *v = f64::INFINITY);
        return;
    }

    let mut k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        let qf = q as f64;
        while k + 1 < s.vertices.len() && s.bounds[k + 1] < qf {
            k += 1;
        }
        let p = s.vertices[k];
        let d = q as f64 - p as f64;
        *o = d * d + f[p];
    }
}
