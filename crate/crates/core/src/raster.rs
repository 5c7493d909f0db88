//! Floating-point rasters, validity masks, sampling and PNG I/O.
//!
//! Coordinates follow the `(i, j)` convention used throughout the crate: `i` is the
//! column (horizontal, `x`) and `j` is the row (vertical, `y`). Buffers are row-major
//! and channel-interleaved.

use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, ImageEncoder, ImageFormat, ImageReader};

use crate::error::{Error, Result};

/// Rec.601 luma weights used wherever a color image is reduced to one channel.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

/// Per-pixel boolean raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize, value: bool) -> Self {
        Self {
            width,
            height,
            bits: vec![value; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::contract(format!(
                "mask of {width}x{height} needs {} entries, got {}",
                width * height,
                bits.len()
            )));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    /// Mask set inside the axis-aligned rectangle `[x0, x0+w) x [y0, y0+h)` (clipped to the raster).
    pub fn rect(width: usize, height: usize, x0: usize, y0: usize, w: usize, h: usize) -> Self {
        let mut m = Self::new(width, height, false);
        for y in y0..(y0 + h).min(height) {
            for x in x0..(x0 + w).min(width) {
                m.bits[y * width + x] = true;
            }
        }
        m
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
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.bits
    }

    pub fn as_mut_slice(&mut self) -> &mut [bool] {
        &mut self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn any(&self) -> bool {
        self.bits.iter().any(|&b| b)
    }
}

/// Real-valued single-channel field (flow magnitudes, distances, ...).
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn new(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            values: vec![value; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }
}

/// Multi-channel raster with intensities in `[0, 1]` and a validity mask.
///
/// `valid` is true where the image has content on the canvas.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuf {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
    valid: Mask,
}

impl ImageBuf {
    /// A zero-filled image whose pixels are all marked `valid`.
    pub fn new(width: usize, height: usize, channels: usize, valid: bool) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![0.0; width * height * channels],
            valid: Mask::new(width, height, valid),
        }
    }

    pub fn from_parts(
        width: usize,
        height: usize,
        channels: usize,
        data: Vec<f64>,
        valid: Mask,
    ) -> Result<Self> {
        if channels == 0 {
            return Err(Error::contract("image must have at least one channel"));
        }
        if data.len() != width * height * channels {
            return Err(Error::contract(format!(
                "image of {width}x{height}x{channels} needs {} samples, got {}",
                width * height * channels,
                data.len()
            )));
        }
        if valid.dims() != (width, height) {
            return Err(Error::contract("validity mask does not match image size"));
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::contract(format!("non-finite intensity {v}")));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
            valid,
        })
    }

    /// Single-channel image, all valid.
    pub fn from_gray(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        Self::from_parts(width, height, 1, data, Mask::new(width, height, true))
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn mask(&self) -> &Mask {
        &self.valid
    }

    pub fn mask_mut(&mut self) -> &mut Mask {
        &mut self.valid
    }

    /// Mutable access to data and mask together (for row-parallel writers).
    pub fn parts_mut(&mut self) -> (&mut [f64], &mut [bool]) {
        (&mut self.data, self.valid.as_mut_slice())
    }

    pub fn into_parts(self) -> (Vec<f64>, Mask) {
        (self.data, self.valid)
    }

    #[inline]
    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.valid.get(x, y)
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        let o = (y * self.width + x) * self.channels;
        &self.data[o..o + self.channels]
    }

    #[inline]
    pub fn pixel_mut(&mut self, x: usize, y: usize) -> &mut [f64] {
        let o = (y * self.width + x) * self.channels;
        &mut self.data[o..o + self.channels]
    }

    pub fn row(&self, y: usize) -> &[f64] {
        let stride = self.width * self.channels;
        &self.data[y * stride..(y + 1) * stride]
    }

    /// Bilinear lookup at real-valued `(x, y)` written into `out` (one value per channel).
    ///
    /// Coordinates are clamped to `[0, width-1] x [0, height-1]`. Invalid neighbours are
    /// dropped and the remaining weights renormalized; if every neighbour is invalid the
    /// result is 0.
    pub fn sample_into(&self, x: f64, y: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.channels);
        let xc = x.clamp(0.0, (self.width - 1) as f64);
        let yc = y.clamp(0.0, (self.height - 1) as f64);
        let x0 = xc.floor() as usize;
        let y0 = yc.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = xc - x0 as f64;
        let fy = yc - y0 as f64;

        let taps = [
            (x0, y0, (1.0 - fx) * (1.0 - fy)),
            (x1, y0, fx * (1.0 - fy)),
            (x0, y1, (1.0 - fx) * fy),
            (x1, y1, fx * fy),
        ];

        // Fast path: all four taps valid, plain bilinear.
        let all_valid = taps.iter().all(|&(tx, ty, _)| self.valid.get(tx, ty));
        out.iter_mut().for_each(|v| *v = 0.0);
        if all_valid {
            for &(tx, ty, w) in &taps {
                for (o, &p) in out.iter_mut().zip(self.pixel(tx, ty)) {
                    *o += w * p;
                }
            }
            return;
        }

        let mut wsum = 0.0;
        let mut nvalid = 0usize;
        for &(tx, ty, w) in &taps {
            if self.valid.get(tx, ty) {
                wsum += w;
                nvalid += 1;
            }
        }
        if nvalid == 0 {
            return;
        }
        // Valid neighbours can all sit at zero weight (e.g. an integer coordinate on an
        // invalid pixel); fall back to their plain average, the continuous limit.
        let uniform = wsum <= 1e-12;
        let norm = if uniform { nvalid as f64 } else { wsum };
        for &(tx, ty, w) in &taps {
            if !self.valid.get(tx, ty) {
                continue;
            }
            let w = if uniform { 1.0 } else { w };
            for (o, &p) in out.iter_mut().zip(self.pixel(tx, ty)) {
                *o += w * p / norm;
            }
        }
    }

    /// Allocating form of [`ImageBuf::sample_into`].
    pub fn bilinear_sample(&self, x: f64, y: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.channels];
        self.sample_into(x, y, &mut out);
        out
    }

    /// Rec.601 luminance as a single-channel image; single-channel input is cloned.
    pub fn to_gray(&self) -> ImageBuf {
        match self.channels {
            1 => self.clone(),
            3 => {
                let data = self
                    .data
                    .chunks_exact(3)
                    .map(|p| {
                        LUMA_WEIGHTS[0] * p[0] + LUMA_WEIGHTS[1] * p[1] + LUMA_WEIGHTS[2] * p[2]
                    })
                    .collect();
                ImageBuf {
                    width: self.width,
                    height: self.height,
                    channels: 1,
                    data,
                    valid: self.valid.clone(),
                }
            }
            c => {
                let data = self
                    .data
                    .chunks_exact(c)
                    .map(|p| p.iter().sum::<f64>() / c as f64)
                    .collect();
                ImageBuf {
                    width: self.width,
                    height: self.height,
                    channels: 1,
                    data,
                    valid: self.valid.clone(),
                }
            }
        }
    }

    /// Replicates a single-channel image into `channels` channels.
    pub fn expand_channels(&self, channels: usize) -> Result<ImageBuf> {
        if self.channels == channels {
            return Ok(self.clone());
        }
        if self.channels != 1 {
            return Err(Error::contract(format!(
                "cannot convert {}-channel image to {channels} channels",
                self.channels
            )));
        }
        let data = self
            .data
            .iter()
            .flat_map(|&v| std::iter::repeat_n(v, channels))
            .collect();
        Ok(ImageBuf {
            width: self.width,
            height: self.height,
            channels,
            data,
            valid: self.valid.clone(),
        })
    }

    /// Copy of the rectangle `[x0, x0+w) x [y0, y0+h)`.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<ImageBuf> {
        if x0 + w > self.width || y0 + h > self.height {
            return Err(Error::contract("crop rectangle exceeds image bounds"));
        }
        let c = self.channels;
        let mut data = Vec::with_capacity(w * h * c);
        let mut bits = Vec::with_capacity(w * h);
        for y in y0..y0 + h {
            let o = (y * self.width + x0) * c;
            data.extend_from_slice(&self.data[o..o + w * c]);
            bits.extend((x0..x0 + w).map(|x| self.valid.get(x, y)));
        }
        Ok(ImageBuf {
            width: w,
            height: h,
            channels: c,
            data,
            valid: Mask::from_vec(w, h, bits)?,
        })
    }

    /// Places this image at `(ox, oy)` on an empty canvas; pixels not covered are invalid.
    pub fn place_on_canvas(
        &self,
        canvas_w: usize,
        canvas_h: usize,
        ox: usize,
        oy: usize,
    ) -> Result<ImageBuf> {
        if ox + self.width > canvas_w || oy + self.height > canvas_h {
            return Err(Error::Layout(format!(
                "{}x{} image at ({ox},{oy}) does not fit a {canvas_w}x{canvas_h} canvas",
                self.width, self.height
            )));
        }
        let c = self.channels;
        let mut out = ImageBuf::new(canvas_w, canvas_h, c, false);
        for y in 0..self.height {
            let src = &self.data[y * self.width * c..(y + 1) * self.width * c];
            let o = ((oy + y) * canvas_w + ox) * c;
            out.data[o..o + self.width * c].copy_from_slice(src);
            for x in 0..self.width {
                out.valid.set(ox + x, oy + y, self.valid.get(x, y));
            }
        }
        Ok(out)
    }

    /// Clamps every intensity into `[0, 1]`.
    pub fn clamp_unit(&mut self) {
        self.data.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    }

    /// Decodes an 8-bit PNG (gray, gray+alpha, RGB or RGBA).
    ///
    /// Alpha, when present, becomes the validity mask (`alpha >= 128`) and is dropped.
    pub fn load_png(path: impl AsRef<Path>) -> Result<ImageBuf> {
        let path = path.as_ref();
        let reader = ImageReader::open(path)
            .map_err(|e| Error::io(path, e))?
            .with_guessed_format()
            .map_err(|e| Error::io(path, e))?;
        if reader.format() != Some(ImageFormat::Png) {
            return Err(Error::Format(format!(
                "{} is not a PNG file",
                path.display()
            )));
        }
        let img = reader.decode().map_err(|e| match e {
            image::ImageError::IoError(io) => Error::io(path, io),
            other => Error::Format(format!("{}: {other}", path.display())),
        })?;
        Self::from_dynamic(img)
    }

    /// Decodes PNG bytes held in memory.
    pub fn decode_png(bytes: &[u8]) -> Result<ImageBuf> {
        let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)
            .map_err(|e| Error::Format(e.to_string()))?;
        Self::from_dynamic(img)
    }

    fn from_dynamic(img: DynamicImage) -> Result<ImageBuf> {
        let (w, h) = (img.width() as usize, img.height() as usize);
        let (channels, has_alpha, raw): (usize, bool, Vec<u8>) = match img {
            DynamicImage::ImageLuma8(b) => (1, false, b.into_raw()),
            DynamicImage::ImageLumaA8(b) => (1, true, b.into_raw()),
            DynamicImage::ImageRgb8(b) => (3, false, b.into_raw()),
            DynamicImage::ImageRgba8(b) => (3, true, b.into_raw()),
            other => {
                return Err(Error::Format(format!(
                    "unsupported bit depth or color type {:?}; expected 8-bit gray/RGB/RGBA",
                    other.color()
                )))
            }
        };
        let stride = channels + has_alpha as usize;
        let mut data = Vec::with_capacity(w * h * channels);
        let mut bits = Vec::with_capacity(w * h);
        for px in raw.chunks_exact(stride) {
            data.extend(px[..channels].iter().map(|&b| b as f64 / 255.0));
            bits.push(!has_alpha || px[channels] >= 128);
        }
        ImageBuf::from_parts(w, h, channels, data, Mask::from_vec(w, h, bits)?)
    }

    /// Encodes as 8-bit PNG with fixed encoder settings.
    ///
    /// An alpha channel (0 or 255) is written only when some pixel is invalid.
    pub fn encode_png(&self) -> Result<Vec<u8>> {
        if self.channels != 1 && self.channels != 3 {
            return Err(Error::contract(format!(
                "PNG output supports 1 or 3 channels, got {}",
                self.channels
            )));
        }
        let with_alpha = self.valid.as_slice().iter().any(|&v| !v);
        let stride = self.channels + with_alpha as usize;
        let mut raw = Vec::with_capacity(self.width * self.height * stride);
        for (px, &valid) in self
            .data
            .chunks_exact(self.channels)
            .zip(self.valid.as_slice())
        {
            raw.extend(px.iter().map(|&v| quantize(v)));
            if with_alpha {
                raw.push(if valid { 255 } else { 0 });
            }
        }
        let color = match (self.channels, with_alpha) {
            (1, false) => image::ExtendedColorType::L8,
            (1, true) => image::ExtendedColorType::La8,
            (3, false) => image::ExtendedColorType::Rgb8,
            _ => image::ExtendedColorType::Rgba8,
        };
        let mut bytes = Vec::new();
        image::codecs::png::PngEncoder::new_with_quality(
            Cursor::new(&mut bytes),
            image::codecs::png::CompressionType::Default,
            image::codecs::png::FilterType::Adaptive,
        )
        .write_image(&raw, self.width as u32, self.height as u32, color)
        .map_err(|e| Error::Format(e.to_string()))?;
        Ok(bytes)
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = self.encode_png()?;
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }
}

/// Round-to-nearest 8-bit quantization of a unit intensity.
#[inline]
pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Loads a mask PNG: a pixel is set when its first channel is at least 128 and its alpha
/// (if any) is at least 128.
pub fn load_mask_png(path: impl AsRef<Path>) -> Result<Mask> {
    let img = ImageBuf::load_png(path)?;
    let (w, h) = img.dims();
    let bits = (0..w * h)
        .map(|k| img.valid.as_slice()[k] && img.data[k * img.channels] >= 128.0 / 255.0)
        .collect();
    Mask::from_vec(w, h, bits)
}
