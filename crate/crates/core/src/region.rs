//! Canvas partitioning into left-only, right-only, overlap and outside regions.

use serde::Serialize;

use crate::error::{ensure_same_dims, Error, Result};
use crate::raster::{ImageBuf, Mask};

/// Classification of a canvas pixel with respect to the left and right images.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Region {
    /// Covered by the left image only.
    LeftOnly,
    /// Covered by the right image only.
    RightOnly,
    /// Covered by both images.
    Overlap,
    /// Covered by neither.
    Outside,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct RegionCounts {
    pub left_only: usize,
    pub right_only: usize,
    pub overlap: usize,
    pub outside: usize,
}

impl RegionCounts {
    pub fn total(&self) -> usize {
        self.left_only + self.right_only + self.overlap + self.outside
    }
}

/// Inclusive-exclusive axis-aligned box `[x0, x0+width) x [y0, y0+height)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundingBox {
    pub x0: usize,
    pub y0: usize,
    pub width: usize,
    pub height: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionPartition {
    width: usize,
    height: usize,
    labels: Vec<Region>,
    counts: RegionCounts,
}

impl RegionPartition {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn label(&self, x: usize, y: usize) -> Region {
        self.labels[y * self.width + x]
    }

    pub fn labels(&self) -> &[Region] {
        &self.labels
    }

    pub fn counts(&self) -> RegionCounts {
        self.counts
    }

    /// Mask of the pixels carrying `region`.
    pub fn mask_of(&self, region: Region) -> Mask {
        let bits = self.labels.iter().map(|&l| l == region).collect();
        Mask::from_vec(self.width, self.height, bits).expect("partition dims are consistent")
    }

    /// Tight bounding box of the overlap region, if any.
    pub fn overlap_bbox(&self) -> Option<BoundingBox> {
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        for y in 0..self.height {
            for x in 0..self.width {
                if self.label(x, y) == Region::Overlap {
                    x0 = x0.min(x);
                    y0 = y0.min(y);
                    x1 = x1.max(x);
                    y1 = y1.max(y);
                }
            }
        }
        (x0 != usize::MAX).then(|| BoundingBox {
            x0,
            y0,
            width: x1 - x0 + 1,
            height: y1 - y0 + 1,
        })
    }
}

/// Labels every canvas pixel from the validity masks of the two images.
pub fn compute_partition(left: &Mask, right: &Mask) -> Result<RegionPartition> {
    ensure_same_dims("compute_partition", left.dims(), right.dims())?;
    let mut counts = RegionCounts::default();
    let labels = left
        .as_slice()
        .iter()
        .zip(right.as_slice())
        .map(|(&l, &r)| {
            let region = match (l, r) {
                (true, false) => Region::LeftOnly,
                (false, true) => Region::RightOnly,
                (true, true) => Region::Overlap,
                (false, false) => Region::Outside,
            };
            match region {
                Region::LeftOnly => counts.left_only += 1,
                Region::RightOnly => counts.right_only += 1,
                Region::Overlap => counts.overlap += 1,
                Region::Outside => counts.outside += 1,
            }
            region
        })
        .collect();
    Ok(RegionPartition {
        width: left.width(),
        height: left.height(),
        labels,
        counts,
    })
}

/// An image cut down to the overlap's bounding box, remembering where it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlapCrop {
    pub image: ImageBuf,
    /// Canvas position of the crop's top-left pixel.
    pub offset: (usize, usize),
}

/// Cuts `img` down to the bounding box of the overlap; pixels in the box that are not
/// overlap pixels are marked invalid.
pub fn crop_overlap(img: &ImageBuf, partition: &RegionPartition) -> Result<OverlapCrop> {
    ensure_same_dims("crop_overlap", img.dims(), partition.dims())?;
    let bbox = partition
        .overlap_bbox()
        .ok_or(Error::NoOverlap { pair: None })?;
    let mut image = img.crop(bbox.x0, bbox.y0, bbox.width, bbox.height)?;
    for y in 0..bbox.height {
        for x in 0..bbox.width {
            if partition.label(bbox.x0 + x, bbox.y0 + y) != Region::Overlap {
                image.mask_mut().set(x, y, false);
            }
        }
    }
    Ok(OverlapCrop {
        image,
        offset: (bbox.x0, bbox.y0),
    })
}
