//! Deterministic synthetic imagery for tests, benchmarks and demos.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::raster::{ImageBuf, Mask};

const OCTAVE_CELLS: [usize; 4] = [32, 16, 8, 4];

/// Multi-octave value noise in roughly `[0.05, 0.95]`, smooth enough for gradient-based
/// flow yet textured at every scale down to a few pixels.
pub fn smooth_texture(width: usize, height: usize, channels: usize, seed: u64) -> ImageBuf {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = vec![0.0; width * height * channels];
    for c in 0..channels {
        let mut plane = vec![0.0; width * height];
        let mut amp = 1.0;
        for &cell in &OCTAVE_CELLS {
            let gw = width / cell + 3;
            let gh = height / cell + 3;
            let grid: Vec<f64> = (0..gw * gh).map(|_| rng.gen::<f64>()).collect();
            for y in 0..height {
                let gy = y as f64 / cell as f64;
                let (y0, ty) = (gy.floor() as usize, smoothstep(gy.fract()));
                for x in 0..width {
                    let gx = x as f64 / cell as f64;
                    let (x0, tx) = (gx.floor() as usize, smoothstep(gx.fract()));
                    let g = |i: usize, j: usize| grid[j * gw + i];
                    let top = g(x0, y0) * (1.0 - tx) + g(x0 + 1, y0) * tx;
                    let bot = g(x0, y0 + 1) * (1.0 - tx) + g(x0 + 1, y0 + 1) * tx;
                    plane[y * width + x] += amp * (top * (1.0 - ty) + bot * ty);
                }
            }
            amp *= 0.6;
        }
        let (lo, hi) = plane
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        let span = (hi - lo).max(1e-12);
        for (k, v) in plane.iter().enumerate() {
            data[k * channels + c] = 0.05 + 0.9 * (v - lo) / span;
        }
    }
    ImageBuf::from_parts(
        width,
        height,
        channels,
        data,
        Mask::new(width, height, true),
    )
    .expect("generated values are finite")
}

fn smoothstep(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// `out(x, y) = img(x - dx, y - dy)` with edge clamping: content moves by `(dx, dy)`.
pub fn translate(img: &ImageBuf, dx: isize, dy: isize) -> ImageBuf {
    let (w, h) = img.dims();
    let c = img.channels();
    let mut data = Vec::with_capacity(w * h * c);
    for y in 0..h as isize {
        let sy = (y - dy).clamp(0, h as isize - 1) as usize;
        for x in 0..w as isize {
            let sx = (x - dx).clamp(0, w as isize - 1) as usize;
            data.extend_from_slice(img.pixel(sx, sy));
        }
    }
    ImageBuf::from_parts(w, h, c, data, img.mask().clone()).expect("same shape as input")
}

/// Rounds every intensity to the nearest multiple of 1/255, as an 8-bit file would.
pub fn quantize_8bit(img: &ImageBuf) -> ImageBuf {
    let mut out = img.clone();
    out.data_mut()
        .iter_mut()
        .for_each(|v| *v = crate::raster::quantize(*v) as f64 / 255.0);
    out
}

/// Two overlapping views of a planar background with a foreground block that sits at a
/// different canvas position in each view (parallax).
#[derive(Debug, Clone)]
pub struct ParallaxScene {
    pub canvas: (usize, usize),
    pub left: ImageBuf,
    pub left_offset: (usize, usize),
    pub right: ImageBuf,
    pub right_offset: (usize, usize),
    /// Foreground displacement from the left view to the right view, in pixels.
    pub disparity: (isize, isize),
}

/// Builds a parallax scene: views of `view_w x view_h` placed `step` pixels apart
/// horizontally, foreground block of side `block` centered in the overlap.
pub fn parallax_scene(
    view_w: usize,
    view_h: usize,
    step: usize,
    block: usize,
    disparity: (isize, isize),
    seed: u64,
) -> ParallaxScene {
    let canvas = (step + view_w, view_h);
    let background = smooth_texture(canvas.0, canvas.1, 3, seed);
    let foreground = smooth_texture(block, block, 3, seed.wrapping_add(0x9e37_79b9));
    let overlap_center = (step + view_w) / 2;
    let obj_left = (
        overlap_center as isize - block as isize / 2 - disparity.0 / 2,
        view_h as isize / 2 - block as isize / 2 - disparity.1 / 2,
    );
    let obj_right = (obj_left.0 + disparity.0, obj_left.1 + disparity.1);

    let render = |view_x: usize, obj: (isize, isize)| {
        let mut data = Vec::with_capacity(view_w * view_h * 3);
        for y in 0..view_h {
            for x in 0..view_w {
                let (cx, cy) = ((view_x + x) as isize, y as isize);
                let (fx, fy) = (cx - obj.0, cy - obj.1);
                if (0..block as isize).contains(&fx) && (0..block as isize).contains(&fy) {
                    data.extend_from_slice(foreground.pixel(fx as usize, fy as usize));
                } else {
                    data.extend_from_slice(background.pixel(cx as usize, cy as usize));
                }
            }
        }
        let img = ImageBuf::from_parts(view_w, view_h, 3, data, Mask::new(view_w, view_h, true))
            .expect("rendered values are finite");
        quantize_8bit(&img)
    };

    ParallaxScene {
        canvas,
        left: render(0, obj_left),
        left_offset: (0, 0),
        right: render(step, obj_right),
        right_offset: (step, 0),
        disparity,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn texture_is_deterministic_and_in_range() {
        let a = smooth_texture(50, 30, 3, 4);
        let b = smooth_texture(50, 30, 3, 4);
        assert_eq!(a, b);
        assert!(a
            .data()
            .iter()
            .all(|&v| (0.05 - 1e-12..=0.95 + 1e-12).contains(&v)));
        assert_ne!(a, smooth_texture(50, 30, 3, 5));
    }

    #[test]
    fn translate_moves_content() {
        let a = smooth_texture(20, 20, 1, 1);
        let t = translate(&a, 3, -2);
        assert_eq!(t.pixel(10, 10), a.pixel(7, 12));
    }

    #[test]
    fn parallax_views_agree_on_background() {
        let s = parallax_scene(160, 96, 80, 32, (8, 0), 3);
        assert_eq!(s.canvas, (240, 96));
        // Top-left of the overlap is background in both views.
        assert_eq!(s.left.pixel(80, 0), s.right.pixel(0, 0));
    }
}
