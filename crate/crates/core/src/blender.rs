//! Flow-warped softmax blending of two canvas-aligned images, and a linear feathering
//! baseline.
//!
//! For an overlap pixel `(i, j)` with blend coefficient `b`, the left color is fetched at
//! `(i, j) + b * flow_rtol(i, j)` and the right color at `(i, j) + (1 - b) * flow_ltor(i, j)`.
//! Both colors are then mixed by a two-way softmax over `k * side_affinity * flow_term`,
//! where `side_affinity` is `1 - b` for the left and `b` for the right, and the flow term
//! `1 + c * |flow|` uses the magnitude of the flow that warps that side.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blendfield::BlendField;
use crate::error::{ensure_same_dims, Error, Result};
use crate::flow::FlowField;
use crate::raster::{ImageBuf, Mask};
use crate::region::{Region, RegionPartition};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlendParams {
    /// Softmax sharpness; larger values give a harder transition.
    pub k_softmax_sharpness: f64,
    /// Per-pixel weight of the flow magnitude in the softmax exponent.
    pub k_flow_mag_coef: f64,
}

impl Default for BlendParams {
    fn default() -> Self {
        Self {
            k_softmax_sharpness: 10.0,
            k_flow_mag_coef: 0.05,
        }
    }
}

impl BlendParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.k_softmax_sharpness.is_finite() && self.k_softmax_sharpness > 0.0) {
            return Err(Error::contract(
                "k_softmax_sharpness must be finite and > 0",
            ));
        }
        if !(self.k_flow_mag_coef.is_finite() && self.k_flow_mag_coef >= 0.0) {
            return Err(Error::contract("k_flow_mag_coef must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Softmax weights `(left, right)` for one overlap pixel.
///
/// `mag_rtol` / `mag_ltor` are the magnitudes of the flows used to warp the left and right
/// images respectively. Evaluated with max-subtraction so the exponentials never overflow.
#[inline]
pub fn softmax_weights(
    blend: f64,
    mag_rtol: f64,
    mag_ltor: f64,
    params: &BlendParams,
) -> (f64, f64) {
    let blend_l = 1.0 - blend;
    let blend_r = blend;
    let flow_l = 1.0 + params.k_flow_mag_coef * mag_rtol;
    let flow_r = 1.0 + params.k_flow_mag_coef * mag_ltor;
    let arg_l = params.k_softmax_sharpness * blend_l * flow_l;
    let arg_r = params.k_softmax_sharpness * blend_r * flow_r;
    let m = arg_l.max(arg_r);
    let exp_l = (arg_l - m).exp();
    let exp_r = (arg_r - m).exp();
    let sum = exp_l + exp_r;
    (exp_l / sum, exp_r / sum)
}

/// Result of [`blend_pair_detailed`].
#[derive(Debug, Clone)]
pub struct BlendOutput {
    pub image: ImageBuf,
    /// Left colors as fetched along the flow (overlap pixels only, others invalid).
    pub warped_left: ImageBuf,
    /// Right colors as fetched along the flow (overlap pixels only, others invalid).
    pub warped_right: ImageBuf,
}

/// Blends `left` and `right` into one canvas image.
///
/// Left-only pixels copy `left`, right-only pixels copy `right`, outside pixels are 0
/// and invalid. Flow fields must be canvas-sized (see [`FlowField::embed`]).
pub fn blend_pair(
    left: &ImageBuf,
    right: &ImageBuf,
    flow_ltor: &FlowField,
    flow_rtol: &FlowField,
    blend: &BlendField,
    partition: &RegionPartition,
    params: &BlendParams,
) -> Result<ImageBuf> {
    blend_pair_detailed(left, right, flow_ltor, flow_rtol, blend, partition, params)
        .map(|o| o.image)
}

/// [`blend_pair`] that also returns the flow-warped constituents of the overlap.
pub fn blend_pair_detailed(
    left: &ImageBuf,
    right: &ImageBuf,
    flow_ltor: &FlowField,
    flow_rtol: &FlowField,
    blend: &BlendField,
    partition: &RegionPartition,
    params: &BlendParams,
) -> Result<BlendOutput> {
    params.validate()?;
    let dims = partition.dims();
    ensure_same_dims("blend_pair: left", left.dims(), dims)?;
    ensure_same_dims("blend_pair: right", right.dims(), dims)?;
    ensure_same_dims("blend_pair: flow left-to-right", flow_ltor.dims(), dims)?;
    ensure_same_dims("blend_pair: flow right-to-left", flow_rtol.dims(), dims)?;
    ensure_same_dims("blend_pair: blend field", blend.dims(), dims)?;
    if left.channels() != right.channels() {
        return Err(Error::contract("blend_pair: channel count mismatch"));
    }
    if flow_ltor
        .vectors()
        .iter()
        .chain(flow_rtol.vectors())
        .flatten()
        .any(|c| !c.is_finite())
    {
        return Err(Error::contract("blend_pair: non-finite flow"));
    }

    let (w, h) = dims;
    let c = left.channels();
    let mut out = vec![0.0; w * h * c];
    let mut warped_l = vec![0.0; w * h * c];
    let mut warped_r = vec![0.0; w * h * c];

    out.par_chunks_mut(w * c)
        .zip(warped_l.par_chunks_mut(w * c))
        .zip(warped_r.par_chunks_mut(w * c))
        .enumerate()
        .for_each(|(j, ((row, row_l), row_r))| {
            let mut color_l = vec![0.0; c];
            let mut color_r = vec![0.0; c];
            for i in 0..w {
                let px = i * c..(i + 1) * c;
                match partition.label(i, j) {
                    Region::LeftOnly => row[px].copy_from_slice(left.pixel(i, j)),
                    Region::RightOnly => row[px].copy_from_slice(right.pixel(i, j)),
                    Region::Outside => {}
                    Region::Overlap => {
                        let b = blend.get(i, j);
                        let blend_l = 1.0 - b;
                        let blend_r = b;
                        let [rl_x, rl_y] = flow_rtol.get(i, j).map(f64::from);
                        let [lr_x, lr_y] = flow_ltor.get(i, j).map(f64::from);
                        let lx = i as f64 + rl_x * (1.0 - blend_l);
                        let ly = j as f64 + rl_y * (1.0 - blend_l);
                        left.sample_into(lx, ly, &mut color_l);
                        let rx = i as f64 + lr_x * (1.0 - blend_r);
                        let ry = j as f64 + lr_y * (1.0 - blend_r);
                        right.sample_into(rx, ry, &mut color_r);
                        let (soft_l, soft_r) =
                            softmax_weights(b, rl_x.hypot(rl_y), lr_x.hypot(lr_y), params);
                        for k in 0..c {
                            row[i * c + k] =
                                (color_l[k] * soft_l + color_r[k] * soft_r).clamp(0.0, 1.0);
                        }
                        row_l[px.clone()].copy_from_slice(&color_l);
                        row_r[px].copy_from_slice(&color_r);
                    }
                }
            }
        });

    let union = Mask::from_vec(
        w,
        h,
        partition
            .labels()
            .iter()
            .map(|&l| l != Region::Outside)
            .collect(),
    )?;
    let overlap = partition.mask_of(Region::Overlap);
    Ok(BlendOutput {
        image: ImageBuf::from_parts(w, h, c, out, union)?,
        warped_left: ImageBuf::from_parts(w, h, c, warped_l, overlap.clone())?,
        warped_right: ImageBuf::from_parts(w, h, c, warped_r, overlap)?,
    })
}

/// Linear feathering by the blend coefficient: `(1 - b) * left + b * right` on the overlap.
pub fn feather_blend(
    left: &ImageBuf,
    right: &ImageBuf,
    blend: &BlendField,
    partition: &RegionPartition,
) -> Result<ImageBuf> {
    let dims = partition.dims();
    ensure_same_dims("feather_blend: left", left.dims(), dims)?;
    ensure_same_dims("feather_blend: right", right.dims(), dims)?;
    ensure_same_dims("feather_blend: blend field", blend.dims(), dims)?;
    if left.channels() != right.channels() {
        return Err(Error::contract("feather_blend: channel count mismatch"));
    }
    let (w, h) = dims;
    let c = left.channels();
    let mut out = vec![0.0; w * h * c];
    out.par_chunks_mut(w * c).enumerate().for_each(|(j, row)| {
        for i in 0..w {
            let px = i * c..(i + 1) * c;
            match partition.label(i, j) {
                Region::LeftOnly => row[px].copy_from_slice(left.pixel(i, j)),
                Region::RightOnly => row[px].copy_from_slice(right.pixel(i, j)),
                Region::Outside => {}
                Region::Overlap => {
                    let b = blend.get(i, j);
                    for ((o, &l), &r) in row[px]
                        .iter_mut()
                        .zip(left.pixel(i, j))
                        .zip(right.pixel(i, j))
                    {
                        *o = ((1.0 - b) * l + b * r).clamp(0.0, 1.0);
                    }
                }
            }
        }
    });
    let union = Mask::from_vec(
        w,
        h,
        partition
            .labels()
            .iter()
            .map(|&l| l != Region::Outside)
            .collect(),
    )?;
    ImageBuf::from_parts(w, h, c, out, union)
}
