//! Dense optical flow between overlap crops.
//!
//! A [`FlowField`] computed from image `A` to image `B` stores, at every pixel `p` of
//! `A`, the displacement `d` such that `A(p)` corresponds to `B(p + d)`.

mod flo;
mod lk;
mod pyramid;

pub use flo::{decode_flo, encode_flo, read_flo, write_flo, FLO_MAGIC};
pub use lk::dense_pyr_lk;
pub use pyramid::{build_pyramid, usable_levels, MIN_LEVEL_SIDE};

use serde::{Deserialize, Serialize};

use crate::error::{ensure_same_dims, Error, Result};
use crate::raster::{ImageBuf, Mask, ScalarField};

/// Tuning knobs of the pyramidal Lucas-Kanade solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowParams {
    /// Pyramid depth (1 = single scale).
    pub levels: usize,
    /// LK window is `(2r+1)^2` pixels.
    pub window_radius: usize,
    pub iterations_per_level: usize,
    /// A pixel is degenerate when the smaller structure-tensor eigenvalue falls below
    /// `min_eigen_eps * window_area`.
    pub min_eigen_eps: f64,
    /// Radius-1 box blurs applied to the flow after each level.
    pub smoothing_passes: usize,
}

impl Default for FlowParams {
    fn default() -> Self {
        Self {
            levels: 4,
            window_radius: 8,
            iterations_per_level: 3,
            min_eigen_eps: 1e-4,
            smoothing_passes: 2,
        }
    }
}

impl FlowParams {
    pub fn validate(&self) -> Result<()> {
        if self.levels < 1 {
            return Err(Error::contract("levels must be >= 1"));
        }
        if self.window_radius < 1 {
            return Err(Error::contract("window_radius must be >= 1"));
        }
        if self.iterations_per_level < 1 {
            return Err(Error::contract("iterations_per_level must be >= 1"));
        }
        if !(self.min_eigen_eps > 0.0 && self.min_eigen_eps.is_finite()) {
            return Err(Error::contract("min_eigen_eps must be finite and > 0"));
        }
        Ok(())
    }
}

/// Per-pixel displacement field in pixel units.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    width: usize,
    height: usize,
    vectors: Vec<[f32; 2]>,
    valid: Mask,
}

impl FlowField {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            vectors: vec![[0.0; 2]; width * height],
            valid: Mask::new(width, height, true),
        }
    }

    /// Builds a field from raw vectors; every component must be finite.
    pub fn from_vectors(
        width: usize,
        height: usize,
        vectors: Vec<[f32; 2]>,
        valid: Mask,
    ) -> Result<Self> {
        if vectors.len() != width * height {
            return Err(Error::contract(format!(
                "flow of {width}x{height} needs {} vectors, got {}",
                width * height,
                vectors.len()
            )));
        }
        if valid.dims() != (width, height) {
            return Err(Error::contract(
                "flow validity mask does not match flow size",
            ));
        }
        if vectors.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::contract("flow contains non-finite components"));
        }
        Ok(Self {
            width,
            height,
            vectors,
            valid,
        })
    }

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
    pub fn get(&self, x: usize, y: usize) -> [f32; 2] {
        self.vectors[y * self.width + x]
    }

    pub fn vectors(&self) -> &[[f32; 2]] {
        &self.vectors
    }

    /// False where the solve was degenerate at every pyramid level.
    pub fn valid(&self) -> &Mask {
        &self.valid
    }

    /// Copies this (crop-sized) field into a zero field of canvas size at `offset`.
    /// Pixels outside the crop are zero and invalid.
    pub fn embed(
        &self,
        canvas_w: usize,
        canvas_h: usize,
        offset: (usize, usize),
    ) -> Result<FlowField> {
        let (ox, oy) = offset;
        if ox + self.width > canvas_w || oy + self.height > canvas_h {
            return Err(Error::contract("embedded flow exceeds canvas"));
        }
        let mut out = FlowField {
            width: canvas_w,
            height: canvas_h,
            vectors: vec![[0.0; 2]; canvas_w * canvas_h],
            valid: Mask::new(canvas_w, canvas_h, false),
        };
        for y in 0..self.height {
            let dst = (oy + y) * canvas_w + ox;
            out.vectors[dst..dst + self.width]
                .copy_from_slice(&self.vectors[y * self.width..(y + 1) * self.width]);
            for x in 0..self.width {
                out.valid.set(ox + x, oy + y, self.valid.get(x, y));
            }
        }
        Ok(out)
    }
}

/// Per-pixel Euclidean norm of a flow field, in pixels.
pub fn flow_magnitude(flow: &FlowField) -> ScalarField {
    ScalarField {
        width: flow.width,
        height: flow.height,
        values: flow
            .vectors
            .iter()
            .map(|&[dx, dy]| (dx as f64).hypot(dy as f64))
            .collect(),
    }
}

/// Flow in both directions between two overlap crops.
#[derive(Debug, Clone, PartialEq)]
pub struct BidirectionalFlow {
    /// Computed from the left crop into the right crop.
    pub left_to_right: FlowField,
    /// Computed from the right crop into the left crop.
    pub right_to_left: FlowField,
}

/// Computes both flow directions independently (and concurrently).
///
/// `right_to_left(p)` is the displacement `d` with `left(p + d)` matching `right(p)`;
/// `left_to_right` is the mirror quantity. Color crops are reduced to luminance and
/// invalid pixels are filled with the crop's mean valid intensity before solving.
pub fn bidirectional_flow(
    left: &ImageBuf,
    right: &ImageBuf,
    params: &FlowParams,
) -> Result<BidirectionalFlow> {
    ensure_same_dims("bidirectional_flow", left.dims(), right.dims())?;
    params.validate()?;
    let gl = flow_input(left);
    let gr = flow_input(right);
    let (ltr, rtl) = rayon::join(
        || dense_pyr_lk(&gl, &gr, params),
        || dense_pyr_lk(&gr, &gl, params),
    );
    Ok(BidirectionalFlow {
        left_to_right: ltr?,
        right_to_left: rtl?,
    })
}

fn flow_input(img: &ImageBuf) -> ImageBuf {
    let mut gray = img.to_gray();
    let n = gray.mask().count();
    if n == 0 || n == gray.width() * gray.height() {
        return gray;
    }
    let mean = gray
        .data()
        .iter()
        .zip(gray.mask().as_slice())
        .filter(|(_, &v)| v)
        .map(|(&d, _)| d)
        .sum::<f64>()
        / n as f64;
    let (data, valid) = gray.parts_mut();
    for (d, &v) in data.iter_mut().zip(valid.iter()) {
        if !v {
            *d = mean;
        }
    }
    gray
}
