//! `flowstitch` command-line front end.
//!
//! Exit codes: 0 success, 1 usage / contract / layout errors, 2 filesystem errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use flowstitch::metrics::{misalignment_report, DEFAULT_PATCH_RADIUS, DEFAULT_STRIDE};
use flowstitch::pipeline::{blend_canvas_pair, PairBlend};
use flowstitch::{
    compute_blend, compute_partition, feather_blend, parse_layout, stitch_all, BlendParams, Error,
    FlowParams, ImageBuf,
};

#[derive(Debug, Parser)]
#[command(
    name = "flowstitch",
    version,
    about = "Panorama blending with bidirectional optical flow"
)]
struct Cli {
    /// Worker threads; 0 picks one per hardware thread.
    #[arg(long, global = true, env = "FLOWSTITCH_THREADS", default_value_t = 0)]
    threads: usize,

    /// Repeat for more detail; -v prints the effective parameters.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Dense flow from one image to another, written as a .flo file.
    Flow {
        #[arg(long)]
        from: PathBuf,
        #[arg(long)]
        to: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        flow: FlowArgs,
    },
    /// Blend two images placed on a shared canvas.
    Blend {
        #[command(flatten)]
        pair: PairArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Method::Flow)]
        method: Method,
        /// Also write the blend coefficient as an 8-bit gray image.
        #[arg(long)]
        blend_field: Option<PathBuf>,
        #[command(flatten)]
        flow: FlowArgs,
        #[command(flatten)]
        blend: BlendArgs,
    },
    /// Stitch every image of a layout file.
    Stitch {
        #[arg(long)]
        layout: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Write the per-pair JSON report here.
        #[arg(long)]
        report: Option<PathBuf>,
        #[command(flatten)]
        flow: FlowArgs,
        #[command(flatten)]
        blend: BlendArgs,
    },
    /// Patch-matching misalignment of two placed images over their overlap.
    Metrics {
        #[command(flatten)]
        pair: PairArgs,
        /// Score the flow-warped constituents instead of the raw inputs.
        #[arg(long)]
        warped: bool,
        #[arg(long, default_value_t = DEFAULT_PATCH_RADIUS)]
        patch_radius: usize,
        #[arg(long, default_value_t = DEFAULT_STRIDE)]
        stride: usize,
        #[arg(long)]
        json: bool,
        #[command(flatten)]
        flow: FlowArgs,
        #[command(flatten)]
        blend: BlendArgs,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    Flow,
    Feather,
}

#[derive(Debug, Args)]
struct PairArgs {
    #[arg(long)]
    left: PathBuf,
    #[arg(long)]
    right: PathBuf,
    /// Canvas position of the left image, as X,Y.
    #[arg(long, value_parser = parse_offset, default_value = "0,0")]
    left_offset: (usize, usize),
    /// Canvas position of the right image, as X,Y.
    #[arg(long, value_parser = parse_offset)]
    right_offset: (usize, usize),
    /// Canvas size as WxH.
    #[arg(long, value_parser = parse_size)]
    canvas: (usize, usize),
}

#[derive(Debug, Args)]
struct FlowArgs {
    #[arg(long)]
    levels: Option<usize>,
    /// Lucas-Kanade window radius.
    #[arg(long)]
    window: Option<usize>,
    /// Iterations per pyramid level.
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    smoothing: Option<usize>,
}

impl FlowArgs {
    fn params(&self) -> flowstitch::Result<FlowParams> {
        let d = FlowParams::default();
        let p = FlowParams {
            levels: self.levels.unwrap_or(d.levels),
            window_radius: self.window.unwrap_or(d.window_radius),
            iterations_per_level: self.iters.unwrap_or(d.iterations_per_level),
            min_eigen_eps: self.eps.unwrap_or(d.min_eigen_eps),
            smoothing_passes: self.smoothing.unwrap_or(d.smoothing_passes),
        };
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Args)]
struct BlendArgs {
    #[arg(long)]
    k_sharpness: Option<f64>,
    #[arg(long)]
    k_flowmag: Option<f64>,
}

impl BlendArgs {
    fn params(&self) -> flowstitch::Result<BlendParams> {
        let d = BlendParams::default();
        let p = BlendParams {
            k_softmax_sharpness: self.k_sharpness.unwrap_or(d.k_softmax_sharpness),
            k_flow_mag_coef: self.k_flowmag.unwrap_or(d.k_flow_mag_coef),
        };
        p.validate()?;
        Ok(p)
    }
}

fn parse_pair(s: &str, sep: char, what: &str) -> Result<(usize, usize), String> {
    let (a, b) = s
        .split_once(sep)
        .ok_or_else(|| format!("expected {what}"))?;
    let num = |t: &str| {
        t.trim()
            .parse::<usize>()
            .map_err(|e| format!("expected {what}: {e}"))
    };
    Ok((num(a)?, num(b)?))
}

fn parse_offset(s: &str) -> Result<(usize, usize), String> {
    parse_pair(s, ',', "X,Y with non-negative integers")
}

fn parse_size(s: &str) -> Result<(usize, usize), String> {
    let (w, h) = parse_pair(&s.to_ascii_lowercase(), 'x', "WxH with positive integers")?;
    if w == 0 || h == 0 {
        return Err("canvas sides must be positive".into());
    }
    Ok((w, h))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
    {
        Ok(pool) => pool,
        Err(e) => {
            eprintln!("error: cannot start worker threads: {e}");
            return ExitCode::from(1);
        }
    };
    match pool.install(|| run(&cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    let io = e.chain().any(|c| {
        c.downcast_ref::<Error>().is_some_and(Error::is_io)
            || c.downcast_ref::<std::io::Error>().is_some()
    });
    if io {
        2
    } else {
        1
    }
}

/// Fails before any work is done when the output could never be written.
fn check_output(path: &Path) -> anyhow::Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() && !dir.is_dir() => Err(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("output directory {} does not exist", dir.display()),
        ))
        .with_context(|| format!("cannot write {}", path.display())),
        _ => Ok(()),
    }
}

fn log_params(verbose: u8, flow: Option<&FlowParams>, blend: Option<&BlendParams>) {
    if verbose == 0 {
        return;
    }
    if let Some(f) = flow {
        eprintln!(
            "flow parameters: {}",
            serde_json::to_string(f).unwrap_or_default()
        );
    }
    if let Some(b) = blend {
        eprintln!(
            "blend parameters: {}",
            serde_json::to_string(b).unwrap_or_default()
        );
    }
    eprintln!("threads: {}", rayon::current_num_threads());
}

fn load_pair(pair: &PairArgs) -> anyhow::Result<(ImageBuf, ImageBuf)> {
    let (cw, ch) = pair.canvas;
    let l = ImageBuf::load_png(&pair.left)?;
    let r = ImageBuf::load_png(&pair.right)?;
    let channels = l.channels().max(r.channels());
    let left = l.expand_channels(channels)?.place_on_canvas(
        cw,
        ch,
        pair.left_offset.0,
        pair.left_offset.1,
    )?;
    let right = r.expand_channels(channels)?.place_on_canvas(
        cw,
        ch,
        pair.right_offset.0,
        pair.right_offset.1,
    )?;
    Ok((left, right))
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Flow {
            from,
            to,
            out,
            flow,
        } => {
            let params = flow.params()?;
            log_params(cli.verbose, Some(&params), None);
            check_output(out)?;
            let a = ImageBuf::load_png(from)?;
            let b = ImageBuf::load_png(to)?;
            if a.dims() != b.dims() {
                bail!(Error::Contract(format!(
                    "flow inputs differ in size: {}x{} vs {}x{}",
                    a.width(),
                    a.height(),
                    b.width(),
                    b.height()
                )));
            }
            let field = flowstitch::dense_pyr_lk(&a.to_gray(), &b.to_gray(), &params)?;
            flowstitch::flow::write_flo(out, &field)?;
        }
        Command::Blend {
            pair,
            out,
            method,
            blend_field,
            flow,
            blend,
        } => {
            let (fp, bp) = (flow.params()?, blend.params()?);
            log_params(
                cli.verbose,
                (*method == Method::Flow).then_some(&fp),
                Some(&bp),
            );
            check_output(out)?;
            if let Some(p) = blend_field {
                check_output(p)?;
            }
            let (left, right) = load_pair(pair)?;
            let (image, field) = match method {
                Method::Flow => {
                    let PairBlend {
                        image,
                        blend,
                        report,
                        ..
                    } = blend_canvas_pair(&left, &right, &fp, &bp)?;
                    if cli.verbose > 0 {
                        eprintln!("{}", serde_json::to_string(&report)?);
                    }
                    (image, blend)
                }
                Method::Feather => {
                    let partition = compute_partition(left.mask(), right.mask())?;
                    if partition.overlap_bbox().is_none() {
                        bail!(Error::NoOverlap { pair: None });
                    }
                    let field = compute_blend(&partition)?;
                    (feather_blend(&left, &right, &field, &partition)?, field)
                }
            };
            image.save_png(out)?;
            if let Some(p) = blend_field {
                field.save_png(p)?;
            }
        }
        Command::Stitch {
            layout,
            out,
            report,
            flow,
            blend,
        } => {
            let (fp, bp) = (flow.params()?, blend.params()?);
            log_params(cli.verbose, Some(&fp), Some(&bp));
            check_output(out)?;
            if let Some(p) = report {
                check_output(p)?;
            }
            let layout = parse_layout(layout)?;
            let (pano, rep) = stitch_all(&layout, &fp, &bp)?;
            pano.save_png(out)?;
            if let Some(p) = report {
                std::fs::write(p, rep.to_json())
                    .with_context(|| format!("cannot write {}", p.display()))?;
            }
            if cli.verbose > 0 {
                eprintln!(
                    "stitched {} images in {:.2} s",
                    layout.entries.len(),
                    rep.total_seconds
                );
            }
        }
        Command::Metrics {
            pair,
            warped,
            patch_radius,
            stride,
            json,
            flow,
            blend,
        } => {
            let (left, right) = load_pair(pair)?;
            let (scored_left, scored_right, partition) = if *warped {
                let (fp, bp) = (flow.params()?, blend.params()?);
                log_params(cli.verbose, Some(&fp), Some(&bp));
                let p = blend_canvas_pair(&left, &right, &fp, &bp)?;
                (p.warped_left, p.warped_right, p.partition)
            } else {
                let partition = compute_partition(left.mask(), right.mask())?;
                (left, right, partition)
            };
            let rep = misalignment_report(
                &scored_left,
                &scored_right,
                &partition,
                *patch_radius,
                *stride,
            )?;
            if *json {
                let value = serde_json::json!({
                    "misalignment_px": rep.score,
                    "patches": rep.patches,
                    "patch_radius": patch_radius,
                    "stride": stride,
                    "warped": warped,
                });
                println!("{value}");
            } else {
                println!(
                    "misalignment {:.4} px over {} patches",
                    rep.score, rep.patches
                );
            }
        }
    }
    Ok(())
}
