//! Global blending coefficient: 0 on the left-only side, 1 on the right-only side, and
//! the relative distance `Lmin / (Lmin + Rmin)` across the overlap.

use std::path::Path;

use crate::distance::{distance_transform, DistanceField};
use crate::error::Result;
use crate::raster::{ImageBuf, Mask};
use crate::region::{Region, RegionPartition};

/// Value used outside both images and wherever the distance ratio is undefined.
pub const NEUTRAL_BLEND: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct BlendField {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl BlendField {
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    /// Grayscale rendering `round(255 * b)`; brighter means closer to the right image.
    pub fn to_image(&self) -> ImageBuf {
        let data = self
            .values
            .iter()
            .map(|&b| (b.clamp(0.0, 1.0) * 255.0).round() / 255.0)
            .collect();
        ImageBuf::from_parts(
            self.width,
            self.height,
            1,
            data,
            Mask::new(self.width, self.height, true),
        )
        .expect("blend values are finite")
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_image().save_png(path)
    }
}

/// Computes the blend coefficient for every canvas pixel of `partition`.
///
/// Distances are measured to the left-only and right-only label masks. If either of those
/// regions is empty, overlap pixels get [`NEUTRAL_BLEND`].
pub fn compute_blend(partition: &RegionPartition) -> Result<BlendField> {
    let (w, h) = partition.dims();
    let counts = partition.counts();
    let distances: Option<(DistanceField, DistanceField)> =
        if counts.left_only > 0 && counts.right_only > 0 && counts.overlap > 0 {
            let (l, r) = rayon::join(
                || distance_transform(&partition.mask_of(Region::LeftOnly)),
                || distance_transform(&partition.mask_of(Region::RightOnly)),
            );
            Some((l?, r?))
        } else {
            None
        };

    let values = partition
        .labels()
        .iter()
        .enumerate()
        .map(|(k, label)| match label {
            Region::LeftOnly => 0.0,
            Region::RightOnly => 1.0,
            Region::Outside => NEUTRAL_BLEND,
            Region::Overlap => match &distances {
                Some((dl, dr)) => {
                    let (lmin, rmin) = (dl.values[k], dr.values[k]);
                    let sum = lmin + rmin;
                    if sum > 0.0 {
                        lmin / sum
                    } else {
                        NEUTRAL_BLEND
                    }
                }
                None => NEUTRAL_BLEND,
            },
        })
        .collect();

    Ok(BlendField {
        width: w,
        height: h,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::region::compute_partition;

    fn partition(w: usize, h: usize, l: Mask, r: Mask) -> RegionPartition {
        assert_eq!(l.dims(), (w, h));
        compute_partition(&l, &r).unwrap()
    }

    #[test]
    fn ten_pixel_strip_values() {
        let p = partition(
            10,
            1,
            Mask::rect(10, 1, 0, 0, 7, 1),
            Mask::rect(10, 1, 4, 0, 6, 1),
        );
        let b = compute_blend(&p).unwrap();
        assert_eq!(&b.values[..4], &[0.0; 4]);
        assert_eq!(b.get(4, 0), 0.25);
        assert_eq!(b.get(5, 0), 0.5);
        assert_eq!(b.get(6, 0), 0.75);
        assert_eq!(&b.values[7..], &[1.0; 3]);
    }

    #[test]
    fn outside_is_neutral() {
        let p = partition(
            12,
            3,
            Mask::rect(12, 3, 0, 0, 5, 2),
            Mask::rect(12, 3, 3, 0, 5, 2),
        );
        let b = compute_blend(&p).unwrap();
        for x in 0..12 {
            assert_eq!(b.get(x, 2), NEUTRAL_BLEND);
        }
        assert_eq!(b.get(11, 0), NEUTRAL_BLEND);
    }

    #[test]
    fn full_overlap_is_neutral() {
        let m = Mask::new(6, 6, true);
        let b = compute_blend(&partition(6, 6, m.clone(), m)).unwrap();
        assert!(b.values.iter().all(|&v| v == NEUTRAL_BLEND));
    }

    #[test]
    fn mirror_symmetric_layout_sums_to_one() {
        let (w, h) = (31, 9);
        let p = partition(
            w,
            h,
            Mask::rect(w, h, 0, 0, 20, h),
            Mask::rect(w, h, 11, 0, 20, h),
        );
        let b = compute_blend(&p).unwrap();
        for y in 0..h {
            for x in 0..w {
                assert!((b.get(x, y) + b.get(w - 1 - x, y) - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn monotone_across_a_vertical_overlap_band() {
        let (w, h) = (40, 12);
        let p = partition(
            w,
            h,
            Mask::rect(w, h, 0, 0, 25, h),
            Mask::rect(w, h, 15, 0, 25, h),
        );
        let b = compute_blend(&p).unwrap();
        for y in 0..h {
            for x in 15..25 {
                assert!(b.get(x + 1, y) >= b.get(x, y));
            }
            // Pixels touching the left-only side have Lmin = 1, hence b <= 0.5.
            assert!(b.get(15, y) <= 0.5);
        }
    }

    #[test]
    fn debug_image_scales_by_255() {
        let p = partition(
            10,
            1,
            Mask::rect(10, 1, 0, 0, 7, 1),
            Mask::rect(10, 1, 4, 0, 6, 1),
        );
        let img = compute_blend(&p).unwrap().to_image();
        assert_eq!(crate::raster::quantize(img.pixel(4, 0)[0]), 64);
        assert_eq!(crate::raster::quantize(img.pixel(9, 0)[0]), 255);
    }
}
