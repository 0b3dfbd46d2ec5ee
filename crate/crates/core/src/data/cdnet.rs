//! CDnet-layout video ingestion and history-window construction.
//!
//! On-disk layout: `<root>/<category>/<video>/input/in%06d.jpg`,
//! `groundtruth/gt%06d.png`, `temporalROI.txt` (two ASCII integers).
//! Sequences can also live fully in memory (synthetic fixtures).

use super::pnm;
use super::{pad_to_8, DataError, SampleWindow};
use crate::net::HISTORY_LEN;
use crate::tensor::{Shape5, Tensor5};
use image::{GrayImage, RgbImage};
use std::path::{Path, PathBuf};

enum Frames {
    Disk(Vec<PathBuf>),
    Rgb(Vec<RgbImage>),
    Gray(Vec<GrayImage>),
}

impl Frames {
    fn len(&self) -> usize {
        match self {
            Frames::Disk(v) => v.len(),
            Frames::Rgb(v) => v.len(),
            Frames::Gray(v) => v.len(),
        }
    }
}

/// One video: ordered frames, optional ground truth, and the temporal
/// region of interest (1-based, inclusive).
pub struct VideoSequence {
    pub category: String,
    pub video: String,
    frames: Frames,
    gts: Option<Frames>,
    pub first_eval_frame: usize,
    pub last_eval_frame: usize,
}

fn decode_rgb(path: &Path) -> Result<RgbImage, DataError> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("ppm") => pnm::read_ppm(path),
        Some("pgm") => Ok(gray_to_rgb(&pnm::read_pgm(path)?)),
        _ => Ok(image::open(path)
            .map_err(|e| DataError::Decode(format!("{}: {}", path.display(), e)))?
            .to_rgb8()),
    }
}

fn gray_to_rgb(g: &GrayImage) -> RgbImage {
    let mut out = RgbImage::new(g.width(), g.height());
    for (o, p) in out.pixels_mut().zip(g.pixels()) {
        *o = image::Rgb([p.0[0]; 3]);
    }
    out
}

fn decode_gray(path: &Path) -> Result<GrayImage, DataError> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("pgm") => pnm::read_pgm(path),
        _ => Ok(image::open(path)
            .map_err(|e| DataError::Decode(format!("{}: {}", path.display(), e)))?
            .to_luma8()),
    }
}

impl VideoSequence {
    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn has_ground_truth(&self) -> bool {
        self.gts.is_some()
    }

    /// Decode frame `i` (1-based) as RGB.
    pub fn frame(&self, i: usize) -> Result<RgbImage, DataError> {
        if i == 0 || i > self.frames.len() {
            return Err(DataError::Window(format!("frame {} out of range", i)));
        }
        match &self.frames {
            Frames::Disk(paths) => decode_rgb(&paths[i - 1]),
            Frames::Rgb(imgs) => Ok(imgs[i - 1].clone()),
            Frames::Gray(imgs) => Ok(gray_to_rgb(&imgs[i - 1])),
        }
    }

    /// Decode ground truth for frame `i` (1-based) as grayscale labels.
    pub fn ground_truth(&self, i: usize) -> Result<GrayImage, DataError> {
        let gts = self
            .gts
            .as_ref()
            .ok_or_else(|| DataError::Ingestion("sequence has no ground truth".into()))?;
        if i == 0 || i > gts.len() {
            return Err(DataError::Window(format!("ground truth {} out of range", i)));
        }
        match gts {
            Frames::Disk(paths) => decode_gray(&paths[i - 1]),
            Frames::Gray(imgs) => Ok(imgs[i - 1].clone()),
            Frames::Rgb(_) => Err(DataError::Ingestion("unexpected RGB ground truth".into())),
        }
    }

    /// Build an in-memory sequence (synthetic fixtures).
    pub fn in_memory(
        category: &str,
        video: &str,
        frames: Vec<RgbImage>,
        gts: Vec<GrayImage>,
        first_eval_frame: usize,
        last_eval_frame: usize,
    ) -> Self {
        VideoSequence {
            category: category.to_string(),
            video: video.to_string(),
            frames: Frames::Rgb(frames),
            gts: Some(Frames::Gray(gts)),
            first_eval_frame,
            last_eval_frame,
        }
    }

    /// 1-based frame indices with full history available and inside the
    /// temporal region of interest.
    pub fn evaluable_frames(&self, m: usize) -> std::ops::RangeInclusive<usize> {
        let lo = self.first_eval_frame.max(m + 1);
        let hi = self.last_eval_frame.min(self.frame_count());
        lo..=hi
    }
}

fn sorted_files(dir: &Path, stem_prefix: &str) -> Result<Vec<PathBuf>, DataError> {
    if !dir.is_dir() {
        return Err(DataError::Ingestion(format!(
            "missing folder {}",
            dir.display()
        )));
    }
    let mut files: Vec<(usize, PathBuf)> = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
            continue;
        };
        let Some(num) = stem.strip_prefix(stem_prefix) else {
            continue;
        };
        let Ok(n) = num.parse::<usize>() else {
            continue;
        };
        files.push((n, path));
    }
    if files.is_empty() {
        return Err(DataError::Ingestion(format!(
            "no frames in {}",
            dir.display()
        )));
    }
    files.sort_by_key(|(n, _)| *n);
    Ok(files.into_iter().map(|(_, p)| p).collect())
}

/// Load one CDnet video directory.
pub fn load_cdnet_video(
    root: &Path,
    category: &str,
    video: &str,
) -> Result<VideoSequence, DataError> {
    let base = root.join(category).join(video);
    let frames = sorted_files(&base.join("input"), "in")?;
    let gt_dir = base.join("groundtruth");
    let gts = if gt_dir.is_dir() {
        let g = sorted_files(&gt_dir, "gt")?;
        if g.len() != frames.len() {
            return Err(DataError::Ingestion(format!(
                "{}: {} frames but {} ground-truth files",
                base.display(),
                frames.len(),
                g.len()
            )));
        }
        Some(Frames::Disk(g))
    } else {
        None
    };
    let roi_path = base.join("temporalROI.txt");
    let roi_text = std::fs::read_to_string(&roi_path)
        .map_err(|_| DataError::Ingestion(format!("missing {}", roi_path.display())))?;
    let nums: Vec<usize> = roi_text
        .split_whitespace()
        .map(|s| s.parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| DataError::Ingestion(format!("bad temporal ROI in {}", roi_path.display())))?;
    if nums.len() != 2 || nums[0] == 0 || nums[0] > nums[1] || nums[1] > frames.len() {
        return Err(DataError::Ingestion(format!(
            "bad temporal ROI {:?} for {} frames",
            nums,
            frames.len()
        )));
    }
    Ok(VideoSequence {
        category: category.to_string(),
        video: video.to_string(),
        frames: Frames::Disk(frames),
        gts,
        first_eval_frame: nums[0],
        last_eval_frame: nums[1],
    })
}

/// CDnet label convention: 255 foreground (evaluated), 0 background and 50
/// shadow (evaluated as background), 85 outside-ROI and 170 unknown
/// (ignored); anything else ignored.
pub fn gt_to_masks(gt: &GrayImage) -> (Tensor5, Tensor5) {
    let (w, h) = (gt.width() as usize, gt.height() as usize);
    let shape = Shape5::new(1, 1, 1, h, w);
    let mut target = Tensor5::zeros(shape).expect("valid shape");
    let mut evaluate = Tensor5::zeros(shape).expect("valid shape");
    for (k, p) in gt.pixels().enumerate() {
        let (t, e) = match p.0[0] {
            255 => (1.0, 1.0),
            0 | 50 => (0.0, 1.0),
            _ => (0.0, 0.0),
        };
        target.data_mut()[k] = t;
        evaluate.data_mut()[k] = e;
    }
    (target, evaluate)
}

/// Scale an RGB frame to [0,1] into the time slice `t` of `dst`, which
/// must already be zero-padded to at least the frame's size.
fn frame_into_tensor(img: &RgbImage, dst: &mut Tensor5, t: usize) {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let raw = img.as_raw();
    for c in 0..3 {
        for y in 0..h {
            let row = dst.row_mut(0, c, t, y);
            let base = y * w * 3 + c;
            for x in 0..w {
                row[x] = raw[base + x * 3] as f64 / 255.0;
            }
        }
    }
}

/// Scale an RGB frame to [0,1] and zero-pad to (hp, wp), producing
/// (1, 3, 1, hp, wp).
fn frame_to_tensor(img: &RgbImage, hp: usize, wp: usize) -> Tensor5 {
    let mut out = Tensor5::zeros(Shape5::new(1, 3, 1, hp, wp)).expect("valid shape");
    frame_into_tensor(img, &mut out, 0);
    out
}

fn pad_mask(mask: &Tensor5, hp: usize, wp: usize) -> Tensor5 {
    let s = mask.shape();
    let mut out = Tensor5::zeros(Shape5::new(1, 1, 1, hp, wp)).expect("valid shape");
    for y in 0..s.h {
        out.row_mut(0, 0, 0, y)[..s.w].copy_from_slice(mask.row(0, 0, 0, y));
    }
    out
}

/// Build the training/inference unit for 1-based `frame_index`: the `m`
/// frames strictly preceding it as history, the frame itself as current,
/// and its ground-truth masks. Frames are scaled to [0,1] and zero-padded
/// to multiples of 8 with the padded border ignored.
pub fn make_window(
    seq: &VideoSequence,
    frame_index: usize,
    m: usize,
) -> Result<SampleWindow, DataError> {
    if frame_index <= m {
        return Err(DataError::Window(format!(
            "frame {} has fewer than {} predecessors",
            frame_index, m
        )));
    }
    if frame_index > seq.frame_count() {
        return Err(DataError::Window(format!(
            "frame {} beyond end of video ({} frames)",
            frame_index,
            seq.frame_count()
        )));
    }
    let current_img = seq.frame(frame_index)?;
    let (w, h) = (current_img.width() as usize, current_img.height() as usize);
    let (hp, wp) = (pad_to_8(h), pad_to_8(w));
    let mut history = Tensor5::zeros(Shape5::new(1, 3, m, hp, wp))?;
    for (k, fi) in (frame_index - m..frame_index).enumerate() {
        let img = seq.frame(fi)?;
        if img.width() as usize != w || img.height() as usize != h {
            return Err(DataError::Ingestion(format!(
                "frame {} dimensions differ from current frame",
                fi
            )));
        }
        frame_into_tensor(&img, &mut history, k);
    }
    let current = frame_to_tensor(&current_img, hp, wp);
    let (target, evaluate) = if seq.has_ground_truth() {
        let gt = seq.ground_truth(frame_index)?;
        let (t, e) = gt_to_masks(&gt);
        (pad_mask(&t, hp, wp), pad_mask(&e, hp, wp))
    } else {
        let shape = Shape5::new(1, 1, 1, hp, wp);
        (Tensor5::zeros(shape)?, pad_mask(&Tensor5::filled(Shape5::new(1, 1, 1, h, w), 1.0)?, hp, wp))
    };
    Ok(SampleWindow {
        history,
        current,
        target,
        ignore_mask: evaluate,
        orig_h: h,
        orig_w: w,
    })
}

/// Convenience wrapper with the default history length.
pub fn make_window_default(seq: &VideoSequence, frame_index: usize) -> Result<SampleWindow, DataError> {
    make_window(seq, frame_index, HISTORY_LEN)
}
