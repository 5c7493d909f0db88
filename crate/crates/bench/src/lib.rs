//! Shared workloads for the criterion benches.

use flowstitch::raster::Mask;
use flowstitch::synth::{self, ParallaxScene};
use flowstitch::ImageBuf;

/// A textured grayscale pair related by a small translation.
pub fn translated_pair(width: usize, height: usize, shift: (isize, isize)) -> (ImageBuf, ImageBuf) {
    let from = synth::smooth_texture(width, height, 1, 42);
    let to = synth::translate(&from, shift.0, shift.1);
    (from, to)
}

/// Random-looking binary mask with roughly `density` of the pixels set.
pub fn speckle_mask(width: usize, height: usize, density: f64) -> Mask {
    let noise = synth::smooth_texture(width, height, 1, 7);
    let bits = noise
        .data()
        .iter()
        .map(|&v| v < 0.05 + 0.9 * density)
        .collect();
    Mask::from_vec(width, height, bits).expect("sizes agree")
}

/// Two-view parallax scene sized for benchmarking the full pairwise blend.
pub fn scene(view_w: usize, view_h: usize) -> ParallaxScene {
    synth::parallax_scene(view_w, view_h, view_w / 2, view_h / 3, (8, 0), 5)
}
