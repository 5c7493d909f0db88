//! Normalized cross-correlation tools: global translation search and the patch-based
//! misalignment score used to compare blends.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{ensure_same_dims, Error, Result};
use crate::raster::ImageBuf;
use crate::region::{Region, RegionPartition};

pub const DEFAULT_PATCH_RADIUS: usize = 8;
pub const DEFAULT_STRIDE: usize = 32;
/// Patches whose intensity variance is below this are considered textureless.
pub const MIN_PATCH_VARIANCE: f64 = 1e-4;

/// Integer shifts in `[-r, r]^2` ordered by Euclidean norm, then lexicographically.
/// Scanning in this order and keeping only strict improvements implements the tie-break.
fn shifts_by_norm(r: isize) -> Vec<(isize, isize)> {
    let mut v: Vec<(isize, isize)> = (-r..=r)
        .flat_map(|dx| (-r..=r).map(move |dy| (dx, dy)))
        .collect();
    v.sort_by_key(|&(dx, dy)| (dx * dx + dy * dy, dx, dy));
    v
}

/// Zero-mean normalized cross-correlation of paired samples; `None` if either side is flat.
fn ncc(pairs: impl Iterator<Item = (f64, f64)>) -> Option<f64> {
    let (mut n, mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for (a, b) in pairs {
        n += 1.0;
        sa += a;
        sb += b;
        saa += a * a;
        sbb += b * b;
        sab += a * b;
    }
    if n < 2.0 {
        return None;
    }
    let va = saa - sa * sa / n;
    let vb = sbb - sb * sb / n;
    if va <= 1e-12 * n || vb <= 1e-12 * n {
        return None;
    }
    Some(((sab - sa * sb / n) / (va * vb).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Translation {
    pub dx: i64,
    pub dy: i64,
    /// NCC at the best shift, in `[-1, 1]`.
    pub score: f64,
}

/// Exhaustive integer search for the shift `(dx, dy)` maximizing the NCC between `a(p)`
/// and `b(p + (dx, dy))` over their valid overlap.
pub fn estimate_translation(a: &ImageBuf, b: &ImageBuf, max_shift: usize) -> Result<Translation> {
    ensure_same_dims("estimate_translation", a.dims(), b.dims())?;
    if a.channels() != 1 || b.channels() != 1 {
        return Err(Error::contract(
            "estimate_translation expects single-channel images",
        ));
    }
    let (w, h) = a.dims();
    if max_shift > w.min(h) / 4 {
        return Err(Error::contract(format!(
            "max_shift {max_shift} exceeds a quarter of the smaller side ({})",
            w.min(h) / 4
        )));
    }
    let flat = |img: &ImageBuf| {
        let vals = img
            .data()
            .iter()
            .zip(img.mask().as_slice())
            .filter(|(_, &m)| m)
            .map(|(&v, _)| v);
        ncc(vals.clone().zip(vals)).is_none()
    };
    if flat(a) || flat(b) {
        return Err(Error::NoTexture("input image is constant".into()));
    }

    let shifts = shifts_by_norm(max_shift as isize);
    let scores: Vec<Option<f64>> = shifts
        .par_iter()
        .map(|&(dx, dy)| {
            let pairs = (0..h as isize).flat_map(move |y| (0..w as isize).map(move |x| (x, y)));
            ncc(pairs.filter_map(|(x, y)| {
                let (bx, by) = (x + dx, y + dy);
                if bx < 0 || by < 0 || bx >= w as isize || by >= h as isize {
                    return None;
                }
                let (x, y, bx, by) = (x as usize, y as usize, bx as usize, by as usize);
                (a.is_valid(x, y) && b.is_valid(bx, by))
                    .then(|| (a.pixel(x, y)[0], b.pixel(bx, by)[0]))
            }))
        })
        .collect();

    let mut best: Option<Translation> = None;
    for (&(dx, dy), s) in shifts.iter().zip(scores) {
        if let Some(s) = s {
            if best.is_none_or(|b| s > b.score) {
                best = Some(Translation {
                    dx: dx as i64,
                    dy: dy as i64,
                    score: s,
                });
            }
        }
    }
    best.ok_or_else(|| Error::NoTexture("no shift produced a textured overlap".into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MisalignmentReport {
    /// Mean matched displacement, in pixels.
    pub score: f64,
    /// Number of textured patches that contributed.
    pub patches: usize,
}

/// Mean displacement (pixels) between left patches and their best NCC matches in `right`.
///
/// Patch centers lie on a `stride` grid over the overlap bounding box; a patch is used when
/// it lies entirely in the overlap and its variance is at least [`MIN_PATCH_VARIANCE`].
/// Matches are searched within `+-2 * patch_radius` and must lie on valid `right` pixels.
pub fn misalignment_score(
    left: &ImageBuf,
    right: &ImageBuf,
    partition: &RegionPartition,
    patch_radius: usize,
    stride: usize,
) -> Result<f64> {
    misalignment_report(left, right, partition, patch_radius, stride).map(|r| r.score)
}

pub fn misalignment_report(
    left: &ImageBuf,
    right: &ImageBuf,
    partition: &RegionPartition,
    patch_radius: usize,
    stride: usize,
) -> Result<MisalignmentReport> {
    ensure_same_dims("misalignment_score: left", left.dims(), partition.dims())?;
    ensure_same_dims("misalignment_score: right", right.dims(), partition.dims())?;
    if patch_radius == 0 || stride == 0 {
        return Err(Error::contract("patch_radius and stride must be positive"));
    }
    let bbox = partition
        .overlap_bbox()
        .ok_or(Error::NoOverlap { pair: None })?;
    let gl = left.to_gray();
    let gr = right.to_gray();
    let (w, h) = partition.dims();
    let r = patch_radius;
    let search = 2 * patch_radius as isize;
    let shifts = shifts_by_norm(search);

    let mut centers = Vec::new();
    let mut cy = bbox.y0 + r;
    while cy + r < bbox.y0 + bbox.height {
        let mut cx = bbox.x0 + r;
        while cx + r < bbox.x0 + bbox.width {
            centers.push((cx, cy));
            cx += stride;
        }
        cy += stride;
    }

    let side = 2 * r + 1;
    let displacements: Vec<Option<f64>> = centers
        .par_iter()
        .map(|&(cx, cy)| {
            let mut patch = Vec::with_capacity(side * side);
            for y in cy - r..=cy + r {
                for x in cx - r..=cx + r {
                    if partition.label(x, y) != Region::Overlap {
                        return None;
                    }
                    patch.push(gl.pixel(x, y)[0]);
                }
            }
            let mean = patch.iter().sum::<f64>() / patch.len() as f64;
            let var = patch.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / patch.len() as f64;
            if var < MIN_PATCH_VARIANCE {
                return None;
            }

            let mut best: Option<((isize, isize), f64)> = None;
            for &(dx, dy) in &shifts {
                let (x0, y0) = (cx as isize + dx - r as isize, cy as isize + dy - r as isize);
                if x0 < 0 || y0 < 0 || x0 as usize + side > w || y0 as usize + side > h {
                    continue;
                }
                let (x0, y0) = (x0 as usize, y0 as usize);
                let all_valid = (y0..y0 + side).all(|y| (x0..x0 + side).all(|x| gr.is_valid(x, y)));
                if !all_valid {
                    continue;
                }
                let pairs = (0..side)
                    .flat_map(|py| (0..side).map(move |px| (px, py)))
                    .map(|(px, py)| (patch[py * side + px], gr.pixel(x0 + px, y0 + py)[0]));
                if let Some(s) = ncc(pairs) {
                    if best.is_none_or(|(_, b)| s > b) {
                        best = Some(((dx, dy), s));
                    }
                }
            }
            best.map(|((dx, dy), _)| (dx as f64).hypot(dy as f64))
        })
        .collect();

    let used: Vec<f64> = displacements.into_iter().flatten().collect();
    if used.is_empty() {
        return Err(Error::NoTexture(
            "no textured patches in the overlap".into(),
        ));
    }
    Ok(MisalignmentReport {
        score: used.iter().sum::<f64>() / used.len() as f64,
        patches: used.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::Mask;
    use crate::region::compute_partition;
    use crate::synth;

    #[test]
    fn recovers_a_synthetic_shift() {
        let a = synth::smooth_texture(64, 64, 1, 21);
        let b = synth::translate(&a, 5, -3);
        let t = estimate_translation(&a, &b, 8).unwrap();
        assert_eq!((t.dx, t.dy), (5, -3));
        assert!(t.score > 0.99);
    }

    #[test]
    fn identical_images_give_zero_shift() {
        let a = synth::smooth_texture(32, 32, 1, 2);
        let t = estimate_translation(&a, &a, 4).unwrap();
        assert_eq!((t.dx, t.dy), (0, 0));
        assert!((t.score - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_images_have_no_texture() {
        let a = ImageBuf::from_gray(32, 32, vec![0.5; 1024]).unwrap();
        assert!(matches!(
            estimate_translation(&a, &a, 4),
            Err(Error::NoTexture(_))
        ));
        assert!(matches!(
            estimate_translation(&a, &a, 9),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn shift_order_puts_small_norms_first() {
        let s = shifts_by_norm(1);
        assert_eq!(s[0], (0, 0));
        assert_eq!(&s[1..5], &[(-1, 0), (0, -1), (0, 1), (1, 0)]);
    }

    fn overlap_pair(shift: (isize, isize)) -> (ImageBuf, ImageBuf, RegionPartition) {
        let tex = synth::smooth_texture(128, 96, 3, 8);
        // Overlap kept 16 px from the border so every true match stays on the canvas.
        let p = compute_partition(
            &Mask::rect(128, 96, 16, 16, 96, 64),
            &Mask::new(128, 96, true),
        )
        .unwrap();
        (tex.clone(), synth::translate(&tex, shift.0, shift.1), p)
    }

    #[test]
    fn zero_for_identical_overlap() {
        let (l, _, p) = overlap_pair((0, 0));
        assert_eq!(misalignment_score(&l, &l, &p, 8, 32).unwrap(), 0.0);
    }

    #[test]
    fn four_pixel_translation() {
        let (l, r, p) = overlap_pair((4, 0));
        let s = misalignment_score(&l, &r, &p, 8, 32).unwrap();
        assert!((s - 4.0).abs() <= 0.5, "score {s}");
    }

    #[test]
    fn translation_covariance() {
        for t in [(1, 1), (0, -3), (5, 2), (-6, 4)] {
            let (l, r, p) = overlap_pair(t);
            let s = misalignment_score(&l, &r, &p, 8, 16).unwrap();
            let norm = ((t.0 * t.0 + t.1 * t.1) as f64).sqrt();
            assert!((s - norm).abs() <= 0.5, "shift {t:?}: score {s}");
        }
    }

    #[test]
    fn flat_overlap_has_no_texture() {
        let l = ImageBuf::from_gray(64, 64, vec![0.3; 4096]).unwrap();
        let p = compute_partition(l.mask(), l.mask()).unwrap();
        assert!(matches!(
            misalignment_score(&l, &l, &p, 8, 16),
            Err(Error::NoTexture(_))
        ));
    }
}
