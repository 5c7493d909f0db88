//! Acceptance criteria. Each test prints one `[PASS]` / `[FAIL]` line.
//!
//! Run with `cargo test -p flowstitch --test acceptance -- --nocapture --test-threads 1`
//! to see the report lines in order.

use std::time::Instant;

use flowstitch::blender::{blend_pair_detailed, feather_blend, BlendParams};
use flowstitch::flow::{decode_flo, encode_flo};
use flowstitch::metrics::{misalignment_score, DEFAULT_PATCH_RADIUS, DEFAULT_STRIDE};
use flowstitch::pipeline::{blend_canvas_pair, stitch_placed, PlacedImage};
use flowstitch::raster::Mask;
use flowstitch::synth;
use flowstitch::{
    compute_blend, compute_partition, dense_pyr_lk, distance_transform, BlendField, FlowField,
    FlowParams, ImageBuf, Region, RegionPartition,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(name: &str, pass: bool, detail: &str) {
    println!("[{}] {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "{name} failed: {detail}");
}

// ---------------------------------------------------------------------------------------
// Oracles. These are deliberately naive and share no code with the library kernels.

fn brute_force_distance(mask: &Mask) -> Vec<f64> {
    let (w, h) = mask.dims();
    let set: Vec<(f64, f64)> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .filter(|&(x, y)| mask.get(x, y))
        .map(|(x, y)| (x as f64, y as f64))
        .collect();
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let mut best = f64::INFINITY;
            for &(sx, sy) in &set {
                let d = ((x as f64 - sx).powi(2) + (y as f64 - sy).powi(2)).sqrt();
                if d < best {
                    best = d;
                }
            }
            out.push(best);
        }
    }
    out
}

/// Edge-clamped bilinear lookup with invalid taps dropped and weights renormalized.
fn naive_sample(img: &ImageBuf, x: f64, y: f64) -> Vec<f64> {
    let (w, h) = img.dims();
    let x = x.max(0.0).min((w - 1) as f64);
    let y = y.max(0.0).min((h - 1) as f64);
    let (xa, ya) = (x.floor() as usize, y.floor() as usize);
    let (xb, yb) = ((xa + 1).min(w - 1), (ya + 1).min(h - 1));
    let (ax, ay) = (x - xa as f64, y - ya as f64);
    let taps = [
        (xa, ya, (1.0 - ax) * (1.0 - ay)),
        (xb, ya, ax * (1.0 - ay)),
        (xa, yb, (1.0 - ax) * ay),
        (xb, yb, ax * ay),
    ];
    let valid: Vec<_> = taps.iter().filter(|t| img.is_valid(t.0, t.1)).collect();
    let mut out = vec![0.0; img.channels()];
    if valid.is_empty() {
        return out;
    }
    let total: f64 = valid.iter().map(|t| t.2).sum();
    for t in &valid {
        let wgt = if total <= 1e-12 {
            1.0 / valid.len() as f64
        } else {
            t.2 / total
        };
        for (o, v) in out.iter_mut().zip(img.pixel(t.0, t.1)) {
            *o += wgt * v;
        }
    }
    out
}

/// Line-by-line scalar evaluation of the flow-warped softmax blend.
#[allow(clippy::too_many_arguments)]
fn naive_blend(
    l: &ImageBuf,
    r: &ImageBuf,
    flow_ltor: &FlowField,
    flow_rtol: &FlowField,
    blend: &BlendField,
    part: &RegionPartition,
    k_sharp: f64,
    k_mag: f64,
) -> Vec<f64> {
    let (w, h) = part.dims();
    let c = l.channels();
    let mut f = vec![0.0; w * h * c];
    for j in 0..h {
        for i in 0..w {
            let px: Vec<f64> = match part.label(i, j) {
                Region::LeftOnly => l.pixel(i, j).to_vec(),
                Region::RightOnly => r.pixel(i, j).to_vec(),
                Region::Overlap => {
                    let blend_l = 1.0 - blend.get(i, j);
                    let blend_r = blend.get(i, j);
                    let rl = flow_rtol.get(i, j);
                    let lr = flow_ltor.get(i, j);
                    let lx = i as f64 + rl[0] as f64 * (1.0 - blend_l);
                    let ly = j as f64 + rl[1] as f64 * (1.0 - blend_l);
                    let color_l = naive_sample(l, lx, ly);
                    let rx = i as f64 + lr[0] as f64 * (1.0 - blend_r);
                    let ry = j as f64 + lr[1] as f64 * (1.0 - blend_r);
                    let color_r = naive_sample(r, rx, ry);
                    let mag_rl = ((rl[0] as f64).powi(2) + (rl[1] as f64).powi(2)).sqrt();
                    let mag_lr = ((lr[0] as f64).powi(2) + (lr[1] as f64).powi(2)).sqrt();
                    let flow_l = 1.0 + k_mag * mag_rl;
                    let exp_l = (k_sharp * blend_l * flow_l).exp();
                    let flow_r = 1.0 + k_mag * mag_lr;
                    let exp_r = (k_sharp * blend_r * flow_r).exp();
                    let soft_l = exp_l / (exp_l + exp_r);
                    let soft_r = exp_r / (exp_l + exp_r);
                    color_l
                        .iter()
                        .zip(&color_r)
                        .map(|(a, b)| (a * soft_l + b * soft_r).clamp(0.0, 1.0))
                        .collect()
                }
                Region::Outside => vec![0.0; c],
            };
            f[(j * w + i) * c..(j * w + i + 1) * c].copy_from_slice(&px);
        }
    }
    f
}

fn random_rect(rng: &mut ChaCha8Rng, w: usize, h: usize) -> (usize, usize, usize, usize) {
    let rw = rng.gen_range(w / 4..=w * 3 / 4);
    let rh = rng.gen_range(h / 4..=h);
    (rng.gen_range(0..=w - rw), rng.gen_range(0..=h - rh), rw, rh)
}

fn mean_epe(f: &FlowField, truth: (f64, f64), margin: usize) -> f64 {
    let (w, h) = f.dims();
    let mut s = 0.0;
    let mut n = 0usize;
    for y in margin..h - margin {
        for x in margin..w - margin {
            let d = f.get(x, y);
            s += (d[0] as f64 - truth.0).hypot(d[1] as f64 - truth.1);
            n += 1;
        }
    }
    s / n as f64
}

fn three_window_strip() -> (ImageBuf, Vec<PlacedImage>) {
    let source = synth::quantize_8bit(&synth::smooth_texture(1600, 600, 3, 2024));
    let (win, offsets) = (700, [0usize, 450, 900]);
    let placed = offsets
        .iter()
        .enumerate()
        .map(|(index, &x)| PlacedImage {
            index,
            image: source.crop(x, 0, win, 600).unwrap(),
            offset: (x, 0),
        })
        .collect();
    (source, placed)
}

// ---------------------------------------------------------------------------------------

#[test]
fn edt_matches_brute_force() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xed7);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let (w, h) = (rng.gen_range(1..=64), rng.gen_range(1..=64));
        let density = rng.gen_range(0.001..0.3);
        let mut bits: Vec<bool> = (0..w * h).map(|_| rng.gen_bool(density)).collect();
        let seed_px = rng.gen_range(0..w * h);
        bits[seed_px] = true;
        let mask = Mask::from_vec(w, h, bits).unwrap();
        let fast = distance_transform(&mask).unwrap();
        for (a, b) in fast.values.iter().zip(brute_force_distance(&mask)) {
            worst = worst.max((a - b).abs());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        "EDT oracle",
        worst <= 1e-6 && secs < 10.0,
        &format!("50 masks, max |fast - brute| = {worst:.2e}, {secs:.2} s"),
    );
}

#[test]
fn blend_field_conforms_to_definition() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xb1e);
    let (w, h) = (64, 48);
    let mut worst = 0.0f64;
    let mut exact = true;
    for _ in 0..20 {
        let (lx, ly, lw, lh) = random_rect(&mut rng, w, h);
        let (rx, ry, rw, rh) = random_rect(&mut rng, w, h);
        let part = compute_partition(
            &Mask::rect(w, h, lx, ly, lw, lh),
            &Mask::rect(w, h, rx, ry, rw, rh),
        )
        .unwrap();
        let field = compute_blend(&part).unwrap();
        let left_only = part.mask_of(Region::LeftOnly);
        let right_only = part.mask_of(Region::RightOnly);
        let (lmin, rmin) = if left_only.any() && right_only.any() {
            (
                Some(brute_force_distance(&left_only)),
                Some(brute_force_distance(&right_only)),
            )
        } else {
            (None, None)
        };
        for y in 0..h {
            for x in 0..w {
                let b = field.get(x, y);
                match part.label(x, y) {
                    Region::LeftOnly => exact &= b == 0.0,
                    Region::RightOnly => exact &= b == 1.0,
                    Region::Outside => exact &= b == 0.5,
                    Region::Overlap => {
                        let want = match (&lmin, &rmin) {
                            (Some(l), Some(r)) => {
                                let (a, c) = (l[y * w + x], r[y * w + x]);
                                a / (a + c)
                            }
                            _ => 0.5,
                        };
                        worst = worst.max((b - want).abs());
                    }
                }
            }
        }
    }
    report(
        "Blend coefficient conformance",
        exact && worst <= 1e-6,
        &format!("20 layouts, fixed regions exact = {exact}, overlap max err = {worst:.2e}"),
    );
}

#[test]
fn blend_matches_naive_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xc0de);
    let (w, h) = (128, 128);
    let mut worst = 0.0f64;
    for case in 0..10 {
        let (lx, ly, lw, lh) = random_rect(&mut rng, w, h);
        let (rx, ry, rw, rh) = random_rect(&mut rng, w, h);
        let lmask = Mask::rect(w, h, lx, ly, lw, lh);
        let rmask = Mask::rect(w, h, rx, ry, rw, rh);
        let tex_l = synth::smooth_texture(w, h, 3, 100 + case);
        let tex_r = synth::smooth_texture(w, h, 3, 200 + case);
        let (dl, _) = tex_l.into_parts();
        let (dr, _) = tex_r.into_parts();
        let l = ImageBuf::from_parts(w, h, 3, dl, lmask.clone()).unwrap();
        let r = ImageBuf::from_parts(w, h, 3, dr, rmask.clone()).unwrap();
        let part = compute_partition(&lmask, &rmask).unwrap();
        let field = compute_blend(&part).unwrap();
        let mut random_flow = || {
            let v = (0..w * h)
                .map(|_| [rng.gen_range(-12.0f32..12.0), rng.gen_range(-12.0f32..12.0)])
                .collect();
            FlowField::from_vectors(w, h, v, Mask::new(w, h, true)).unwrap()
        };
        let (ltor, rtol) = (random_flow(), random_flow());
        let params = BlendParams {
            k_softmax_sharpness: rng.gen_range(1.0..20.0),
            k_flow_mag_coef: rng.gen_range(0.0..0.2),
        };
        let fast = blend_pair_detailed(&l, &r, &ltor, &rtol, &field, &part, &params)
            .unwrap()
            .image;
        let slow = naive_blend(
            &l,
            &r,
            &ltor,
            &rtol,
            &field,
            &part,
            params.k_softmax_sharpness,
            params.k_flow_mag_coef,
        );
        for (a, b) in fast.data().iter().zip(&slow) {
            worst = worst.max((a - b).abs());
        }
    }
    report(
        "Blend oracle equivalence",
        worst <= 1e-6,
        &format!("10 random 128x128 cases, max per-channel diff = {worst:.2e}"),
    );
}

#[test]
fn flow_recovers_translations() {
    let params = FlowParams::default();
    let tex = synth::smooth_texture(128, 128, 1, 77);
    let mut lines = Vec::new();
    let mut pass = true;
    for shift in [(3isize, 0isize), (0, -4), (5, 3)] {
        let moved = synth::translate(&tex, shift.0, shift.1);
        let f = dense_pyr_lk(&tex, &moved, &params).unwrap();
        let epe = mean_epe(&f, (shift.0 as f64, shift.1 as f64), 16);
        pass &= epe <= 0.5;
        lines.push(format!("{shift:?} EPE {epe:.3}"));
    }
    report("Flow translation recovery", pass, &lines.join(", "));
}

#[test]
fn zero_flow_reduces_to_logistic_blend() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5157);
    let (w, h) = (100, 100);
    let full = Mask::new(w, h, true);
    let l = ImageBuf::from_parts(
        w,
        h,
        3,
        (0..w * h * 3).map(|_| rng.gen()).collect(),
        full.clone(),
    )
    .unwrap();
    let r = ImageBuf::from_parts(
        w,
        h,
        3,
        (0..w * h * 3).map(|_| rng.gen()).collect(),
        full.clone(),
    )
    .unwrap();
    let part = compute_partition(&full, &full).unwrap();
    let field = BlendField {
        width: w,
        height: h,
        values: (0..w * h).map(|_| rng.gen()).collect(),
    };
    let zero = FlowField::zeros(w, h);
    let mut worst = 0.0f64;
    for k in [10.0, 0.5, 37.0] {
        let params = BlendParams {
            k_softmax_sharpness: k,
            k_flow_mag_coef: 0.05,
        };
        let out = blend_pair_detailed(&l, &r, &zero, &zero, &field, &part, &params)
            .unwrap()
            .image;
        for p in 0..w * h {
            let b = field.values[p];
            let sigma = 1.0 / (1.0 + (-k * ((1.0 - b) - b)).exp());
            for c in 0..3 {
                let want = sigma * l.data()[p * 3 + c] + (1.0 - sigma) * r.data()[p * 3 + c];
                worst = worst.max((out.data()[p * 3 + c] - want).abs());
            }
        }
    }
    report(
        "Zero-flow softmax reduction",
        worst <= 1e-9,
        &format!("3 x 10^4 pixels, max diff = {worst:.2e}"),
    );
}

#[test]
fn flow_blend_halves_parallax_misalignment() {
    let disparities = [(6isize, 0isize), (7, 2), (8, 0), (9, -2), (10, 0)];
    let mut pass = true;
    let mut lines = Vec::new();
    for (k, &d) in disparities.iter().enumerate() {
        let s = synth::parallax_scene(320, 256, 160, 96, d, 31 + k as u64);
        let (cw, ch) = s.canvas;
        let left = s
            .left
            .place_on_canvas(cw, ch, s.left_offset.0, s.left_offset.1)
            .unwrap();
        let right = s
            .right
            .place_on_canvas(cw, ch, s.right_offset.0, s.right_offset.1)
            .unwrap();
        let pair = blend_canvas_pair(
            &left,
            &right,
            &FlowParams::default(),
            &BlendParams::default(),
        )
        .unwrap();
        // The feather baseline mixes the unwarped inputs, so its residual is that of (L, R).
        let feathered = feather_blend(&left, &right, &pair.blend, &pair.partition).unwrap();
        assert_eq!(feathered.mask(), pair.image.mask());
        let feather = misalignment_score(
            &left,
            &right,
            &pair.partition,
            DEFAULT_PATCH_RADIUS,
            DEFAULT_STRIDE,
        )
        .unwrap();
        let flow = misalignment_score(
            &pair.warped_left,
            &pair.warped_right,
            &pair.partition,
            DEFAULT_PATCH_RADIUS,
            DEFAULT_STRIDE,
        )
        .unwrap();
        pass &= flow <= 0.5 * feather;
        lines.push(format!("{d:?}: flow {flow:.3} vs feather {feather:.3}"));
    }
    report("Seam-reduction surrogate", pass, &lines.join("; "));
}

#[test]
fn identity_stitch_reproduces_source() {
    let (source, placed) = three_window_strip();
    let (out, _) = stitch_placed(
        (1600, 600),
        &placed,
        &FlowParams::default(),
        &BlendParams::default(),
    )
    .unwrap();
    let total = 1600 * 600;
    let close = (0..total)
        .filter(|&p| {
            out.data()[p * 3..p * 3 + 3]
                .iter()
                .zip(&source.data()[p * 3..p * 3 + 3])
                .all(|(a, b)| (a - b).abs() <= 1.0 / 255.0)
        })
        .count();
    let frac = close as f64 / total as f64;
    report(
        "Identity stitch",
        frac >= 0.99 && out.mask().count() == total,
        &format!("{:.4}% of pixels within 1/255", 100.0 * frac),
    );
}

#[test]
fn stitch_is_deterministic_across_thread_counts() {
    let (_, placed) = three_window_strip();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| {
            let (out, _) = stitch_placed(
                (1600, 600),
                &placed,
                &FlowParams::default(),
                &BlendParams::default(),
            )
            .unwrap();
            out.encode_png().unwrap()
        })
    };
    let (one, eight) = (run(1), run(8));
    report(
        "Determinism",
        one == eight,
        &format!(
            "PNG bytes identical for 1 and 8 threads ({} bytes)",
            one.len()
        ),
    );
}

#[test]
fn throughput_sanity_informational() {
    let s = synth::parallax_scene(1200, 1000, 800, 300, (8, 0), 99);
    let images = vec![
        PlacedImage {
            index: 0,
            image: s.left.clone(),
            offset: s.left_offset,
        },
        PlacedImage {
            index: 1,
            image: s.right.clone(),
            offset: s.right_offset,
        },
    ];
    let time = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        let t = Instant::now();
        pool.install(|| {
            stitch_placed(
                s.canvas,
                &images,
                &FlowParams::default(),
                &BlendParams::default(),
            )
            .unwrap()
        });
        t.elapsed().as_secs_f64()
    };
    let (t1, t4) = (time(1), time(4));
    let cores = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);
    println!(
        "[INFO] Throughput sanity: {}x{} canvas, 1 thread {t1:.2} s (target < 60 s), 4 threads {t4:.2} s, speedup {:.2}x (target >= 2x; {cores} hardware threads available)",
        s.canvas.0,
        s.canvas.1,
        t1 / t4
    );
}

#[test]
fn flo_round_trip_is_bit_identical() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xf10);
    let (w, h) = (97, 61);
    let v: Vec<[f32; 2]> = (0..w * h)
        .map(|_| {
            [
                f32::from_bits(rng.gen_range(0..0x7f00_0000)) * if rng.gen() { 1.0 } else { -1.0 },
                rng.gen_range(-1e3..1e3),
            ]
        })
        .collect();
    let f = FlowField::from_vectors(w, h, v, Mask::new(w, h, true)).unwrap();
    let bytes = encode_flo(&f);
    let back = decode_flo(&bytes).unwrap();
    let identical = back.dims() == f.dims()
        && back
            .vectors()
            .iter()
            .zip(f.vectors())
            .all(|(a, b)| a[0].to_bits() == b[0].to_bits() && a[1].to_bits() == b[1].to_bits())
        && encode_flo(&back) == bytes;
    report(
        ".flo round-trip",
        identical,
        &format!("{w}x{h} random field, {} bytes", bytes.len()),
    );
}
