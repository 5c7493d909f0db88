//! Layout ingestion and left-to-right stitching of any number of positioned images.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::Value;

use crate::blender::{blend_pair_detailed, BlendParams};
use crate::blendfield::{compute_blend, BlendField};
use crate::error::{Error, Result};
use crate::flow::{bidirectional_flow, FlowField, FlowParams};
use crate::metrics::{misalignment_score, DEFAULT_PATCH_RADIUS, DEFAULT_STRIDE};
use crate::raster::{load_mask_png, ImageBuf};
use crate::region::{compute_partition, crop_overlap, RegionCounts, RegionPartition};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayoutEntry {
    /// Position of the entry in the layout file.
    pub index: usize,
    pub path: PathBuf,
    pub offset_x: usize,
    pub offset_y: usize,
    pub mask: Option<PathBuf>,
}

/// Images with their integer canvas placements, in stitching order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CanvasLayout {
    pub canvas_width: usize,
    pub canvas_height: usize,
    /// Sorted left-to-right by `offset_x`; ties keep file order.
    pub entries: Vec<LayoutEntry>,
}

/// Reads and validates a layout file. Relative image paths resolve against the file's
/// directory.
pub fn parse_layout(path: impl AsRef<Path>) -> Result<CanvasLayout> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let layout = parse_layout_str(&text, base)?;
    for e in &layout.entries {
        let (w, h) = image::image_dimensions(&e.path).map_err(|err| match err {
            image::ImageError::IoError(io) => Error::io(&e.path, io),
            other => Error::Format(format!("{}: {other}", e.path.display())),
        })?;
        check_fits(&layout, e, w as usize, h as usize)?;
    }
    Ok(layout)
}

/// Parses layout JSON without touching the filesystem.
pub fn parse_layout_str(text: &str, base_dir: &Path) -> Result<CanvasLayout> {
    let root: Value = serde_json::from_str(text).map_err(|e| Error::Parse {
        field: "<document>".into(),
        message: e.to_string(),
    })?;
    let canvas = field(&root, "canvas", "canvas")?;
    let canvas_width = uint(field(canvas, "width", "canvas.width")?, "canvas.width")?;
    let canvas_height = uint(field(canvas, "height", "canvas.height")?, "canvas.height")?;
    let images = field(&root, "images", "images")?
        .as_array()
        .ok_or_else(|| parse_err("images", "expected an array"))?;

    let mut entries = Vec::with_capacity(images.len());
    for (index, item) in images.iter().enumerate() {
        let name = |f: &str| format!("images[{index}].{f}");
        let rel = field(item, "path", &name("path"))?
            .as_str()
            .ok_or_else(|| parse_err(&name("path"), "expected a string"))?;
        let offset = field(item, "offset", &name("offset"))?;
        let offset_x = int(field(offset, "x", &name("offset.x"))?, &name("offset.x"))?;
        let offset_y = int(field(offset, "y", &name("offset.y"))?, &name("offset.y"))?;
        if offset_x < 0 || offset_y < 0 {
            return Err(Error::Layout(format!(
                "images[{index}] offset ({offset_x},{offset_y}) lies outside the canvas"
            )));
        }
        let mask = match item.get("mask") {
            None | Some(Value::Null) => None,
            Some(Value::String(s)) => Some(base_dir.join(s)),
            Some(_) => return Err(parse_err(&name("mask"), "expected a string or null")),
        };
        entries.push(LayoutEntry {
            index,
            path: base_dir.join(rel),
            offset_x: offset_x as usize,
            offset_y: offset_y as usize,
            mask,
        });
    }
    if entries.len() < 2 {
        return Err(Error::Layout("at least two images required".into()));
    }
    if canvas_width == 0 || canvas_height == 0 {
        return Err(Error::Layout("canvas must be non-empty".into()));
    }
    entries.sort_by_key(|e| e.offset_x);
    Ok(CanvasLayout {
        canvas_width,
        canvas_height,
        entries,
    })
}

fn parse_err(field: &str, message: &str) -> Error {
    Error::Parse {
        field: field.into(),
        message: message.into(),
    }
}

fn field<'a>(v: &'a Value, key: &str, name: &str) -> Result<&'a Value> {
    v.get(key).ok_or_else(|| parse_err(name, "missing field"))
}

fn int(v: &Value, name: &str) -> Result<i64> {
    v.as_i64()
        .ok_or_else(|| parse_err(name, "expected an integer"))
}

fn uint(v: &Value, name: &str) -> Result<usize> {
    v.as_u64()
        .map(|u| u as usize)
        .ok_or_else(|| parse_err(name, "expected a non-negative integer"))
}

fn check_fits(layout: &CanvasLayout, e: &LayoutEntry, w: usize, h: usize) -> Result<()> {
    if e.offset_x + w > layout.canvas_width || e.offset_y + h > layout.canvas_height {
        return Err(Error::Layout(format!(
            "images[{}] ({}x{} at {},{}) extends past the {}x{} canvas",
            e.index, w, h, e.offset_x, e.offset_y, layout.canvas_width, layout.canvas_height
        )));
    }
    Ok(())
}

/// Wall-clock seconds spent in each stage of one pairwise blend.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct StageTimings {
    pub partition: f64,
    pub flow: f64,
    pub blend_field: f64,
    pub blend: f64,
    pub metrics: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairReport {
    /// Layout index of the image blended in this step.
    pub entry: usize,
    pub regions: RegionCounts,
    pub overlap_pixels: usize,
    /// Mean flow magnitudes over the overlap, in pixels.
    pub mean_flow_left_to_right: f64,
    pub mean_flow_right_to_left: f64,
    /// Misalignment of the raw inputs over the overlap (pixels); `None` if untextured.
    pub misalignment_before: Option<f64>,
    /// Misalignment of the flow-warped constituents; `None` if untextured.
    pub misalignment_after: Option<f64>,
    pub timings: StageTimings,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StitchReport {
    pub canvas_width: usize,
    pub canvas_height: usize,
    pub pairs: Vec<PairReport>,
    pub total_seconds: f64,
}

impl StitchReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is always serializable")
    }
}

/// Intermediate products of a single pairwise blend.
#[derive(Debug, Clone)]
pub struct PairBlend {
    pub image: ImageBuf,
    pub partition: RegionPartition,
    pub blend: BlendField,
    pub flow_left_to_right: FlowField,
    pub flow_right_to_left: FlowField,
    pub warped_left: ImageBuf,
    pub warped_right: ImageBuf,
    pub report: PairReport,
}

/// Blends two canvas-sized images: partition, overlap crops, bidirectional flow, blend
/// field, then the flow-warped softmax blend.
pub fn blend_canvas_pair(
    left: &ImageBuf,
    right: &ImageBuf,
    flow_params: &FlowParams,
    blend_params: &BlendParams,
) -> Result<PairBlend> {
    flow_params.validate()?;
    blend_params.validate()?;
    let (cw, ch) = left.dims();
    let mut timings = StageTimings::default();

    let t = Instant::now();
    let partition = compute_partition(left.mask(), right.mask())?;
    let crop_l = crop_overlap(left, &partition)?;
    let crop_r = crop_overlap(right, &partition)?;
    timings.partition = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let flows = bidirectional_flow(&crop_l.image, &crop_r.image, flow_params)?;
    let crop_mask = crop_l.image.mask();
    let mean_mag = |f: &FlowField| {
        let (sum, n) = f
            .vectors()
            .iter()
            .zip(crop_mask.as_slice())
            .filter(|(_, &m)| m)
            .fold((0.0, 0usize), |(s, n), (v, _)| {
                (s + (v[0] as f64).hypot(v[1] as f64), n + 1)
            });
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    };
    let mean_ltor = mean_mag(&flows.left_to_right);
    let mean_rtol = mean_mag(&flows.right_to_left);
    let ltor = flows.left_to_right.embed(cw, ch, crop_l.offset)?;
    let rtol = flows.right_to_left.embed(cw, ch, crop_l.offset)?;
    timings.flow = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let blend = compute_blend(&partition)?;
    timings.blend_field = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let out = blend_pair_detailed(left, right, &ltor, &rtol, &blend, &partition, blend_params)?;
    timings.blend = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let score = |a: &ImageBuf, b: &ImageBuf| {
        misalignment_score(a, b, &partition, DEFAULT_PATCH_RADIUS, DEFAULT_STRIDE).ok()
    };
    let misalignment_before = score(left, right);
    let misalignment_after = score(&out.warped_left, &out.warped_right);
    timings.metrics = t.elapsed().as_secs_f64();

    let report = PairReport {
        entry: 1,
        regions: partition.counts(),
        overlap_pixels: partition.counts().overlap,
        mean_flow_left_to_right: mean_ltor,
        mean_flow_right_to_left: mean_rtol,
        misalignment_before,
        misalignment_after,
        timings,
    };
    Ok(PairBlend {
        image: out.image,
        partition,
        blend,
        flow_left_to_right: ltor,
        flow_right_to_left: rtol,
        warped_left: out.warped_left,
        warped_right: out.warped_right,
        report,
    })
}

/// An in-memory image with its canvas placement.
#[derive(Debug, Clone)]
pub struct PlacedImage {
    /// Identifier reported in errors and in the stitch report.
    pub index: usize,
    pub image: ImageBuf,
    pub offset: (usize, usize),
}

/// Folds the images left to right: the running panorama is the left image of every
/// pairwise blend and the next image the right one.
pub fn stitch_placed(
    canvas: (usize, usize),
    images: &[PlacedImage],
    flow_params: &FlowParams,
    blend_params: &BlendParams,
) -> Result<(ImageBuf, StitchReport)> {
    if images.len() < 2 {
        return Err(Error::Layout("at least two images required".into()));
    }
    let start = Instant::now();
    let channels = images.iter().map(|p| p.image.channels()).max().unwrap_or(1);
    let place = |p: &PlacedImage| -> Result<ImageBuf> {
        p.image
            .expand_channels(channels)?
            .place_on_canvas(canvas.0, canvas.1, p.offset.0, p.offset.1)
    };

    let mut order: Vec<&PlacedImage> = images.iter().collect();
    order.sort_by_key(|p| p.offset.0);

    let mut panorama = place(order[0])?;
    let mut pairs = Vec::with_capacity(order.len() - 1);
    for w in order.windows(2) {
        let right = place(w[1])?;
        let step = blend_canvas_pair(&panorama, &right, flow_params, blend_params).map_err(
            |e| match e {
                Error::NoOverlap { .. } => Error::NoOverlap {
                    pair: Some((w[0].index, w[1].index)),
                },
                other => other,
            },
        )?;
        let mut report = step.report;
        report.entry = w[1].index;
        pairs.push(report);
        panorama = step.image;
    }
    let report = StitchReport {
        canvas_width: canvas.0,
        canvas_height: canvas.1,
        pairs,
        total_seconds: start.elapsed().as_secs_f64(),
    };
    Ok((panorama, report))
}

/// Loads every image of `layout` (applying optional masks) and stitches them.
pub fn stitch_all(
    layout: &CanvasLayout,
    flow_params: &FlowParams,
    blend_params: &BlendParams,
) -> Result<(ImageBuf, StitchReport)> {
    let mut placed = Vec::with_capacity(layout.entries.len());
    for e in &layout.entries {
        let mut image = ImageBuf::load_png(&e.path)?;
        check_fits(layout, e, image.width(), image.height())?;
        if let Some(mask_path) = &e.mask {
            let mask = load_mask_png(mask_path)?;
            if mask.dims() != image.dims() {
                return Err(Error::Layout(format!(
                    "images[{}] mask {} does not match the image size",
                    e.index,
                    mask_path.display()
                )));
            }
            for (v, &m) in image
                .mask_mut()
                .as_mut_slice()
                .iter_mut()
                .zip(mask.as_slice())
            {
                *v &= m;
            }
        }
        placed.push(PlacedImage {
            index: e.index,
            image,
            offset: (e.offset_x, e.offset_y),
        });
    }
    stitch_placed(
        (layout.canvas_width, layout.canvas_height),
        &placed,
        flow_params,
        blend_params,
    )
}
