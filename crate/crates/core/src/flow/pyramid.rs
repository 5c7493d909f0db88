use crate::error::{Error, Result};
use crate::raster::{ImageBuf, Mask};

/// Smallest side allowed for the coarsest level used by the flow solver.
pub const MIN_LEVEL_SIDE: usize = 8;

const BINOMIAL5: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];

/// Number of levels usable for a `width x height` image when `requested` are asked for,
/// keeping the coarsest level at least [`MIN_LEVEL_SIDE`] on each side.
pub fn usable_levels(width: usize, height: usize, requested: usize) -> usize {
    let mut levels = 1;
    let (mut w, mut h) = (width, height);
    while levels < requested {
        w /= 2;
        h /= 2;
        if w < MIN_LEVEL_SIDE || h < MIN_LEVEL_SIDE {
            break;
        }
        levels += 1;
    }
    levels
}

/// Gaussian pyramid: level 0 is `img`, each further level is the previous one smoothed
/// with the separable binomial kernel `(1,4,6,4,1)/16` (edge-clamped) and decimated by
/// keeping even-indexed pixels.
///
/// Stops early (returning fewer levels) if a level would become empty.
pub fn build_pyramid(img: &ImageBuf, levels: usize) -> Result<Vec<ImageBuf>> {
    if img.channels() != 1 {
        return Err(Error::contract(format!(
            "build_pyramid expects a single-channel image, got {} channels",
            img.channels()
        )));
    }
    if levels == 0 {
        return Err(Error::contract("pyramid needs at least one level"));
    }
    let mut out = vec![img.clone()];
    while out.len() < levels {
        let prev = out.last().unwrap();
        if prev.width() < 2 || prev.height() < 2 {
            break;
        }
        out.push(downsample(prev));
    }
    Ok(out)
}

fn downsample(img: &ImageBuf) -> ImageBuf {
    let (w, h) = img.dims();
    let src = img.data();
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;

    let mut horiz = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            horiz[y * w + x] = BINOMIAL5
                .iter()
                .enumerate()
                .map(|(k, c)| c * src[y * w + clamp(x as isize + k as isize - 2, w)])
                .sum();
        }
    }

    let (nw, nh) = (w / 2, h / 2);
    let mut data = Vec::with_capacity(nw * nh);
    let mut bits = Vec::with_capacity(nw * nh);
    for ny in 0..nh {
        let y = 2 * ny;
        for nx in 0..nw {
            let x = 2 * nx;
            data.push(
                BINOMIAL5
                    .iter()
                    .enumerate()
                    .map(|(k, c)| c * horiz[clamp(y as isize + k as isize - 2, h) * w + x])
                    .sum(),
            );
            bits.push(img.is_valid(x, y));
        }
    }
    let mask = Mask::from_vec(nw, nh, bits).expect("sizes agree");
    ImageBuf::from_parts(nw, nh, 1, data, mask).expect("finite input stays finite")
}
