//! Dense coarse-to-fine Lucas-Kanade.

use rayon::prelude::*;

use super::pyramid::{build_pyramid, usable_levels};
use super::{FlowField, FlowParams};
use crate::error::{ensure_same_dims, Error, Result};
use crate::raster::{ImageBuf, Mask};

/// Single-channel working plane.
struct Plane {
    w: usize,
    h: usize,
    data: Vec<f64>,
}

impl Plane {
    fn from_fn(w: usize, h: usize, f: impl Fn(usize, usize) -> f64 + Sync) -> Plane {
        let mut data = vec![0.0; w * h];
        data.par_chunks_mut(w.max(1))
            .enumerate()
            .for_each(|(y, row)| {
                for (x, v) in row.iter_mut().enumerate() {
                    *v = f(x, y);
                }
            });
        Plane { w, h, data }
    }

    #[inline]
    fn at(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.w + x]
    }

    /// Edge-clamped bilinear lookup.
    #[inline]
    fn sample(&self, x: f64, y: f64) -> f64 {
        let xc = x.clamp(0.0, (self.w - 1) as f64);
        let yc = y.clamp(0.0, (self.h - 1) as f64);
        let x0 = xc.floor() as usize;
        let y0 = yc.floor() as usize;
        let x1 = (x0 + 1).min(self.w - 1);
        let y1 = (y0 + 1).min(self.h - 1);
        let fx = xc - x0 as f64;
        let fy = yc - y0 as f64;
        let top = self.at(x0, y0) * (1.0 - fx) + self.at(x1, y0) * fx;
        let bot = self.at(x0, y1) * (1.0 - fx) + self.at(x1, y1) * fx;
        top * (1.0 - fy) + bot * fy
    }

    /// Sum over the window `[x-r, x+r] x [y-r, y+r]` clipped to the plane.
    fn box_sum(&self, r: usize) -> Plane {
        let (w, h) = (self.w, self.h);
        let horiz = Plane::from_fn(w, h, |x, y| {
            let row = &self.data[y * w..(y + 1) * w];
            row[x.saturating_sub(r)..=(x + r).min(w - 1)].iter().sum()
        });
        Plane::from_fn(w, h, |x, y| {
            (y.saturating_sub(r)..=(y + r).min(h - 1))
                .map(|yy| horiz.data[yy * w + x])
                .sum()
        })
    }

    /// Mean over the clipped 3x3 neighbourhood.
    fn box_blur1(&self) -> Plane {
        let sums = self.box_sum(1);
        Plane::from_fn(self.w, self.h, |x, y| {
            sums.at(x, y) / window_area(x, y, self.w, self.h, 1) as f64
        })
    }
}

#[inline]
fn window_area(x: usize, y: usize, w: usize, h: usize, r: usize) -> usize {
    let nx = (x + r).min(w - 1) - x.saturating_sub(r) + 1;
    let ny = (y + r).min(h - 1) - y.saturating_sub(r) + 1;
    nx * ny
}

/// Smaller eigenvalue of the symmetric matrix `[[a, b], [b, c]]`.
#[inline]
fn min_eigenvalue(a: f64, b: f64, c: f64) -> f64 {
    let half_trace = 0.5 * (a + c);
    let half_diff = 0.5 * (a - c);
    half_trace - (half_diff * half_diff + b * b).sqrt()
}

/// Scales `(u, v)` down so its norm does not exceed `limit`.
#[inline]
fn clamp_norm(u: f64, v: f64, limit: f64) -> (f64, f64) {
    let n = u.hypot(v);
    if n > limit {
        (u * limit / n, v * limit / n)
    } else {
        (u, v)
    }
}

/// Dense pyramidal Lucas-Kanade flow from `from` into `to`.
///
/// The result holds, at every pixel `p` of `from`, the displacement `d` such that
/// `from(p)` corresponds to `to(p + d)`. Both inputs must be single-channel and share
/// dimensions; their validity masks are ignored.
///
/// Pixels whose structure tensor is degenerate keep the flow propagated from the coarser
/// level; they are flagged invalid only when degenerate at every level.
pub fn dense_pyr_lk(from: &ImageBuf, to: &ImageBuf, params: &FlowParams) -> Result<FlowField> {
    ensure_same_dims("dense_pyr_lk", from.dims(), to.dims())?;
    if from.channels() != 1 || to.channels() != 1 {
        return Err(Error::contract(
            "dense_pyr_lk expects single-channel images",
        ));
    }
    params.validate()?;
    let (width, height) = from.dims();
    if width == 0 || height == 0 {
        return Err(Error::contract("dense_pyr_lk on an empty image"));
    }

    let levels = usable_levels(width, height, params.levels);
    let pyr_from = build_pyramid(from, levels)?;
    let pyr_to = build_pyramid(to, levels)?;
    let levels = pyr_from.len();

    let r = params.window_radius;
    let mut flow_u: Option<Plane> = None;
    let mut flow_v: Option<Plane> = None;
    let mut degenerate: Vec<Plane> = Vec::with_capacity(levels);

    for level in (0..levels).rev() {
        let src = &pyr_from[level];
        let dst = &pyr_to[level];
        let (w, h) = src.dims();
        let f = Plane {
            w,
            h,
            data: src.data().to_vec(),
        };
        let t = Plane {
            w,
            h,
            data: dst.data().to_vec(),
        };
        let limit = w.max(h) as f64;

        let (mut u, mut v) = match (flow_u.take(), flow_v.take()) {
            (Some(cu), Some(cv)) => (upsample(&cu, w, h), upsample(&cv, w, h)),
            _ => (
                Plane::from_fn(w, h, |_, _| 0.0),
                Plane::from_fn(w, h, |_, _| 0.0),
            ),
        };

        let gx = Plane::from_fn(w, h, |x, y| {
            0.5 * (f.at((x + 1).min(w - 1), y) - f.at(x.saturating_sub(1), y))
        });
        let gy = Plane::from_fn(w, h, |x, y| {
            0.5 * (f.at(x, (y + 1).min(h - 1)) - f.at(x, y.saturating_sub(1)))
        });
        let sxx = Plane::from_fn(w, h, |x, y| gx.at(x, y) * gx.at(x, y)).box_sum(r);
        let sxy = Plane::from_fn(w, h, |x, y| gx.at(x, y) * gy.at(x, y)).box_sum(r);
        let syy = Plane::from_fn(w, h, |x, y| gy.at(x, y) * gy.at(x, y)).box_sum(r);

        let degen = Plane::from_fn(w, h, |x, y| {
            let area = window_area(x, y, w, h, r) as f64;
            let lambda = min_eigenvalue(sxx.at(x, y), sxy.at(x, y), syy.at(x, y));
            if lambda < params.min_eigen_eps * area {
                1.0
            } else {
                0.0
            }
        });

        for _ in 0..params.iterations_per_level {
            let it = Plane::from_fn(w, h, |x, y| {
                t.sample(x as f64 + u.at(x, y), y as f64 + v.at(x, y)) - f.at(x, y)
            });
            let bx = Plane::from_fn(w, h, |x, y| gx.at(x, y) * it.at(x, y)).box_sum(r);
            let by = Plane::from_fn(w, h, |x, y| gy.at(x, y) * it.at(x, y)).box_sum(r);

            let step = |x: usize, y: usize| -> (f64, f64) {
                let (cu, cv) = (u.at(x, y), v.at(x, y));
                if degen.at(x, y) != 0.0 {
                    return (cu, cv);
                }
                let (a, b, c) = (sxx.at(x, y), sxy.at(x, y), syy.at(x, y));
                let det = a * c - b * b;
                // Solve G * delta = -[bx, by].
                let du = (-c * bx.at(x, y) + b * by.at(x, y)) / det;
                let dv = (b * bx.at(x, y) - a * by.at(x, y)) / det;
                if !(du.is_finite() && dv.is_finite()) {
                    return (cu, cv);
                }
                clamp_norm(cu + du, cv + dv, limit)
            };
            let mut steps = vec![(0.0, 0.0); w * h];
            steps.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
                for (x, s) in row.iter_mut().enumerate() {
                    *s = step(x, y);
                }
            });
            u = Plane {
                w,
                h,
                data: steps.iter().map(|s| s.0).collect(),
            };
            v = Plane {
                w,
                h,
                data: steps.iter().map(|s| s.1).collect(),
            };
        }

        for _ in 0..params.smoothing_passes {
            u = u.box_blur1();
            v = v.box_blur1();
        }

        degenerate.push(degen);
        flow_u = Some(u);
        flow_v = Some(v);
    }

    let u = flow_u.expect("at least one level");
    let v = flow_v.expect("at least one level");
    // `degenerate` was filled coarse-to-fine; index it by level.
    degenerate.reverse();
    let mut valid = Mask::new(width, height, false);
    for y in 0..height {
        for x in 0..width {
            let ok = degenerate.iter().enumerate().any(|(level, d)| {
                let lx = (x >> level).min(d.w - 1);
                let ly = (y >> level).min(d.h - 1);
                d.at(lx, ly) == 0.0
            });
            valid.set(x, y, ok);
        }
    }
    let vectors = u
        .data
        .iter()
        .zip(&v.data)
        .map(|(&a, &b)| [a as f32, b as f32])
        .collect();
    FlowField::from_vectors(width, height, vectors, valid)
}

/// Bilinear 2x upsampling of one flow component, doubling its values.
fn upsample(coarse: &Plane, w: usize, h: usize) -> Plane {
    Plane::from_fn(w, h, |x, y| {
        2.0 * coarse.sample(x as f64 * 0.5, y as f64 * 0.5)
    })
}
