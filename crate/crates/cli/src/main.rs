//! Operator surface: synthetic data generation, training, inference,
//! evaluation, gradient verification and parameter inspection.
//!
//! Exit codes: 0 success, 1 verification or metric failure, 2 I/O or
//! argument error, 3 manifest invariant violation.

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use threedfr::data::cdnet::{load_cdnet_video, make_window_default};
use threedfr::data::pnm::{write_pgm, write_ppm};
use threedfr::data::split::{Role, SplitManifest};
use threedfr::data::synth::{synth_sequence, SynthConfig};
use threedfr::data::SampleWindow;
use threedfr::metrics::{evaluate_video, Metrics};
use threedfr::net::{forward, init_params, NetworkParams, HISTORY_LEN};
use threedfr::tensor::Tensor5;
use threedfr::trainer::{
    load_checkpoint, save_checkpoint, train_with, SGDConfig, TrainError, VideoWindowSource,
};
use threedfr::verify::run_gradcheck_suite;

const EXIT_VERIFY: u8 = 1;
const EXIT_IO: u8 = 2;
const EXIT_MANIFEST: u8 = 3;

#[derive(Parser)]
#[command(name = "threedfr", about = "3D feature-reductionist change detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory; the sequence lands in CDnet layout beneath it.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 64)]
    width: usize,
    #[arg(long, default_value_t = 64)]
    height: usize,
    #[arg(long, default_value_t = 120)]
    frames: usize,
    #[arg(long, default_value_t = 2)]
    objects: usize,
    #[arg(long, default_value_t = 0.01)]
    noise: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

#[derive(Args)]
struct TrainArgs {
    /// CDnet-layout dataset root.
    #[arg(long)]
    data_root: PathBuf,
    /// Split manifest CSV; defaults to the built-in division.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Where to write the trained checkpoint.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Per-epoch loss CSV; defaults next to the checkpoint.
    #[arg(long)]
    loss_csv: Option<PathBuf>,
    #[arg(long, default_value_t = 60)]
    epochs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Cap on windows per epoch (0 = no cap).
    #[arg(long, default_value_t = 0)]
    max_windows: usize,
}

#[derive(Args)]
struct InferArgs {
    #[arg(long)]
    data_root: PathBuf,
    #[arg(long)]
    category: String,
    #[arg(long)]
    video: String,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    data_root: PathBuf,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Score the ground truth against itself (pipeline check).
    #[arg(long, default_value_t = false)]
    oracle: bool,
    /// Metrics CSV output path.
    #[arg(long)]
    out: PathBuf,
    /// Restrict to one category (useful with synthetic roots).
    #[arg(long)]
    category: Option<String>,
    /// Restrict to one video; requires --category.
    #[arg(long)]
    video: Option<String>,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Corrupt one analytic gradient to prove the checker detects it.
    #[arg(long, hide = true, default_value_t = false)]
    inject_fault: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a deterministic synthetic video with exact ground truth.
    Synth(SynthArgs),
    /// Train on a split's training rows and write a checkpoint.
    Train(TrainArgs),
    /// Write probability maps and thresholded masks for one video.
    Infer(InferArgs),
    /// Score test videos and write a metrics report.
    Eval(EvalArgs),
    /// Run the finite-difference verification suite.
    Gradcheck(GradcheckArgs),
    /// Print the per-layer parameter table.
    Params,
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Synth(a) => cmd_synth(a),
        Command::Train(a) => cmd_train(a),
        Command::Infer(a) => cmd_infer(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
        Command::Params => cmd_params(),
    }
}

fn io_fail(context: &str, err: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {}: {}", context, err);
    ExitCode::from(EXIT_IO)
}

fn cmd_synth(a: SynthArgs) -> ExitCode {
    let cfg = SynthConfig {
        width: a.width,
        height: a.height,
        frame_count: a.frames,
        object_count: a.objects,
        noise_sigma: a.noise,
        seed: a.seed,
    };
    let seq = match synth_sequence(&cfg) {
        Ok(s) => s,
        Err(e) => return io_fail("synth", e),
    };
    let base = a.out.join(&seq.category).join(&seq.video);
    let input = base.join("input");
    let gt = base.join("groundtruth");
    if let Err(e) = std::fs::create_dir_all(&input).and_then(|_| std::fs::create_dir_all(&gt)) {
        return io_fail("creating output directories", e);
    }
    for i in 1..=seq.frame_count() {
        let frame = seq.frame(i).expect("in-memory frame");
        let mask = seq.ground_truth(i).expect("in-memory ground truth");
        let fr = write_ppm(&input.join(format!("in{:06}.ppm", i)), &frame);
        let gr = write_pgm(&gt.join(format!("gt{:06}.pgm", i)), &mask);
        if let Err(e) = fr.and(gr) {
            return io_fail("writing frames", e);
        }
    }
    let roi = format!("{} {}\n", seq.first_eval_frame, seq.last_eval_frame);
    if let Err(e) = std::fs::write(base.join("temporalROI.txt"), roi) {
        return io_fail("writing temporalROI.txt", e);
    }
    println!(
        "wrote {} frames to {}",
        seq.frame_count(),
        base.display()
    );
    ExitCode::SUCCESS
}

fn load_manifest(path: &Option<PathBuf>) -> Result<SplitManifest, ExitCode> {
    let m = match path {
        Some(p) => SplitManifest::read_csv(p).map_err(|e| io_fail("reading manifest", e))?,
        None => threedfr::data::split::table2_manifest(),
    };
    if let Err(e) = m.validate() {
        eprintln!("error: {}", e);
        return Err(ExitCode::from(EXIT_MANIFEST));
    }
    Ok(m)
}

fn cmd_train(a: TrainArgs) -> ExitCode {
    let manifest = match load_manifest(&a.manifest) {
        Ok(m) => m,
        Err(code) => return code,
    };
    if !a.data_root.is_dir() {
        return io_fail("data root", "not a directory");
    }
    let mut videos = Vec::new();
    for entry in manifest.videos_with_role(Role::Train) {
        match load_cdnet_video(&a.data_root, &entry.category, &entry.video) {
            Ok(v) => videos.push(v),
            Err(e) => return io_fail("loading training video", e),
        }
    }
    let mut source = VideoWindowSource::new(videos, HISTORY_LEN);
    source.subsample(a.max_windows);
    let mut params = init_params(a.seed, 3);
    println!(
        "parameters: {} (reference 126.45K)",
        params.param_count()
    );
    let cfg = SGDConfig {
        epochs: a.epochs,
        shuffle_seed: a.seed,
        ..Default::default()
    };
    let run = match train_with(&mut params, &source, &cfg, |epoch, loss| {
        println!("epoch {:3}  loss {:.6}", epoch + 1, loss);
    }) {
        Ok(r) => r,
        Err(e) => return io_fail("training", e),
    };
    if let Err(e) = save_checkpoint(&params, &a.checkpoint) {
        return io_fail("writing checkpoint", e);
    }
    let loss_path = a
        .loss_csv
        .unwrap_or_else(|| a.checkpoint.with_extension("loss.csv"));
    let mut csv = String::from("epoch,loss\n");
    for (i, l) in run.epoch_losses.iter().enumerate() {
        csv.push_str(&format!("{},{:.6}\n", i + 1, l));
    }
    if let Err(e) = std::fs::write(&loss_path, csv) {
        return io_fail("writing loss CSV", e);
    }
    println!("checkpoint written to {}", a.checkpoint.display());
    ExitCode::SUCCESS
}

/// Crop a padded (1,1,1,H',W') map to the original frame size, scaled to
/// 8-bit.
fn map_to_pgm(map: &Tensor5, h: usize, w: usize) -> image::GrayImage {
    let mut img = image::GrayImage::new(w as u32, h as u32);
    for y in 0..h {
        let row = map.row(0, 0, 0, y);
        for x in 0..w {
            img.put_pixel(x as u32, y as u32, image::Luma([(row[x] * 255.0).round() as u8]));
        }
    }
    img
}

fn cmd_infer(a: InferArgs) -> ExitCode {
    let params = match load_checkpoint(&a.checkpoint, 3) {
        Ok(p) => p,
        Err(e) => return io_fail("loading checkpoint", e),
    };
    let seq = match load_cdnet_video(&a.data_root, &a.category, &a.video) {
        Ok(s) => s,
        Err(e) => return io_fail("loading video", e),
    };
    if let Err(e) = std::fs::create_dir_all(&a.out) {
        return io_fail("creating output directory", e);
    }
    let mut written = 0usize;
    for fi in seq.evaluable_frames(HISTORY_LEN) {
        let w = match make_window_default(&seq, fi) {
            Ok(w) => w,
            Err(e) => return io_fail("building window", e),
        };
        let (prob, _) = match forward(&w.history, &w.current, &params) {
            Ok(r) => r,
            Err(e) => return io_fail("forward pass", e),
        };
        let prob_img = map_to_pgm(&prob, w.orig_h, w.orig_w);
        let mask_map = prob.map(|p| if p > a.threshold { 1.0 } else { 0.0 });
        let mask_img = map_to_pgm(&mask_map, w.orig_h, w.orig_w);
        let pr = write_pgm(&a.out.join(format!("prob{:06}.pgm", fi)), &prob_img);
        let mr = write_pgm(&a.out.join(format!("mask{:06}.pgm", fi)), &mask_img);
        if let Err(e) = pr.and(mr) {
            return io_fail("writing outputs", e);
        }
        written += 1;
    }
    println!("wrote {} probability/mask pairs to {}", written, a.out.display());
    ExitCode::SUCCESS
}

fn predictor(
    params: Option<NetworkParams>,
) -> impl FnMut(&SampleWindow) -> Result<Tensor5, TrainError> {
    move |w: &SampleWindow| match &params {
        Some(p) => Ok(forward(&w.history, &w.current, p)?.0),
        // ground-truth oracle: echo the target as a probability map
        None => Ok(w.target.clone()),
    }
}

fn cmd_eval(a: EvalArgs) -> ExitCode {
    if a.oracle == a.checkpoint.is_some() {
        eprintln!("error: pass exactly one of --checkpoint or --oracle");
        return ExitCode::from(EXIT_IO);
    }
    let params = match &a.checkpoint {
        Some(p) => match load_checkpoint(p, 3) {
            Ok(p) => Some(p),
            Err(e) => return io_fail("loading checkpoint", e),
        },
        None => None,
    };
    let mut predict = predictor(params);
    let mut metrics = Metrics::default();
    if let Some(cat) = &a.category {
        // single category/video mode bypasses the manifest
        let videos: Vec<String> = match &a.video {
            Some(v) => vec![v.clone()],
            None => {
                eprintln!("error: --category requires --video");
                return ExitCode::from(EXIT_IO);
            }
        };
        for v in videos {
            let seq = match load_cdnet_video(&a.data_root, cat, &v) {
                Ok(s) => s,
                Err(e) => return io_fail("loading video", e),
            };
            match evaluate_video(&seq, HISTORY_LEN, &mut predict) {
                Ok(conf) => metrics.push_video(cat, &v, conf),
                Err(e) => return io_fail("evaluating", e),
            }
        }
    } else {
        let manifest = match load_manifest(&a.manifest) {
            Ok(m) => m,
            Err(code) => return code,
        };
        for entry in manifest.videos_with_role(Role::Test) {
            let seq = match load_cdnet_video(&a.data_root, &entry.category, &entry.video) {
                Ok(s) => s,
                Err(e) => return io_fail("loading video", e),
            };
            match evaluate_video(&seq, HISTORY_LEN, &mut predict) {
                Ok(conf) => metrics.push_video(&entry.category, &entry.video, conf),
                Err(e) => return io_fail("evaluating", e),
            }
        }
    }
    if let Err(e) = metrics.write_report(&a.out) {
        return io_fail("writing report", e);
    }
    match metrics.overall_fscore() {
        Some(f) => {
            println!("overall F-score: {:.4}", f);
            ExitCode::SUCCESS
        }
        None => {
            eprintln!("overall F-score undefined (no defined categories)");
            ExitCode::from(EXIT_VERIFY)
        }
    }
}

fn cmd_gradcheck(a: GradcheckArgs) -> ExitCode {
    let reports = run_gradcheck_suite(a.seed, a.inject_fault);
    let mut all_ok = true;
    for r in &reports {
        let status = if r.passed() { "PASS" } else { "FAIL" };
        println!(
            "{:<18} max rel err {:.3e}  (bound {:.0e})  {}",
            r.name, r.max_rel_err, r.bound, status
        );
        all_ok &= r.passed();
    }
    if all_ok {
        println!("all {} checks passed", reports.len());
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_VERIFY)
    }
}

fn cmd_params() -> ExitCode {
    let params = NetworkParams::architecture(3);
    println!("{:<14} {:>24} {:>10}", "layer", "weight shape", "params");
    for l in params.layers() {
        let s = l.weights.shape();
        let n = s.len() + l.bias.len();
        println!(
            "{:<14} {:>24} {:>10}",
            l.name,
            format!("({},{},{},{},{})", s.n, s.c, s.t, s.h, s.w),
            n
        );
    }
    println!("{:<14} {:>24} {:>10}", "total", "", params.param_count());
    ExitCode::SUCCESS
}
