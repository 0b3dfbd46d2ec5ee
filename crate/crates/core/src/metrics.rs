//! Confusion counts and F-score aggregation over videos, categories and
//! the whole split.

use crate::data::DataError;
use crate::tensor::{Tensor5, TensorError};
use std::path::Path;

pub const DECISION_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl Confusion {
    pub fn add(&mut self, other: &Confusion) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.tn += other.tn;
    }

    /// F-score = 2TP / (2TP + FP + FN); undefined when the denominator is
    /// zero (no foreground anywhere, none predicted).
    pub fn fscore(&self) -> Option<f64> {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            None
        } else {
            Some(2.0 * self.tp as f64 / denom as f64)
        }
    }

    pub fn precision(&self) -> Option<f64> {
        let d = self.tp + self.fp;
        (d > 0).then(|| self.tp as f64 / d as f64)
    }

    pub fn recall(&self) -> Option<f64> {
        let d = self.tp + self.fn_;
        (d > 0).then(|| self.tp as f64 / d as f64)
    }
}

/// Count one probability map against its target, skipping pixels whose
/// evaluation mask is zero. Decisions use p > 0.5 as foreground.
pub fn accumulate(
    conf: &mut Confusion,
    prob: &Tensor5,
    target: &Tensor5,
    evaluate: &Tensor5,
) -> Result<(), TensorError> {
    accumulate_with(conf, prob, target, evaluate, DECISION_THRESHOLD)
}

/// `accumulate` with an explicit decision threshold.
pub fn accumulate_with(
    conf: &mut Confusion,
    prob: &Tensor5,
    target: &Tensor5,
    evaluate: &Tensor5,
    threshold: f64,
) -> Result<(), TensorError> {
    if prob.shape() != target.shape() || prob.shape() != evaluate.shape() {
        return Err(TensorError::ShapeMismatch(format!(
            "metrics shapes {:?} / {:?} / {:?}",
            prob.shape(),
            target.shape(),
            evaluate.shape()
        )));
    }
    for ((&p, &t), &e) in prob.iter().zip(target.iter()).zip(evaluate.iter()) {
        if e == 0.0 {
            continue;
        }
        let pred_fg = p > threshold;
        let is_fg = t != 0.0;
        match (pred_fg, is_fg) {
            (true, true) => conf.tp += 1,
            (true, false) => conf.fp += 1,
            (false, true) => conf.fn_ += 1,
            (false, false) => conf.tn += 1,
        }
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct ScopedResult {
    pub scope: &'static str,
    pub name: String,
    pub confusion: Confusion,
}

#[derive(Debug, Clone, Default)]
pub struct Metrics {
    /// (category, video) confusion per evaluated video.
    pub videos: Vec<(String, String, Confusion)>,
}

impl Metrics {
    pub fn push_video(&mut self, category: &str, video: &str, conf: Confusion) {
        self.videos
            .push((category.to_string(), video.to_string(), conf));
    }

    pub fn categories(&self) -> Vec<String> {
        let mut cats = Vec::new();
        for (c, _, _) in &self.videos {
            if !cats.contains(c) {
                cats.push(c.clone());
            }
        }
        cats
    }

    /// Pixel counts pooled over a category's videos.
    pub fn category_confusion(&self, category: &str) -> Confusion {
        let mut conf = Confusion::default();
        for (c, _, v) in &self.videos {
            if c == category {
                conf.add(v);
            }
        }
        conf
    }

    /// Unweighted mean of per-category F-scores; categories with an
    /// undefined F-score are excluded from the mean.
    pub fn overall_fscore(&self) -> Option<f64> {
        let scores: Vec<f64> = self
            .categories()
            .iter()
            .filter_map(|c| self.category_confusion(c).fscore())
            .collect();
        if scores.is_empty() {
            None
        } else {
            Some(scores.iter().sum::<f64>() / scores.len() as f64)
        }
    }

    pub fn rows(&self) -> Vec<ScopedResult> {
        let mut out = Vec::new();
        for (c, v, conf) in &self.videos {
            out.push(ScopedResult {
                scope: "video",
                name: format!("{}/{}", c, v),
                confusion: *conf,
            });
        }
        for c in self.categories() {
            out.push(ScopedResult {
                scope: "category",
                name: c.clone(),
                confusion: self.category_confusion(&c),
            });
        }
        let mut all = Confusion::default();
        for (_, _, conf) in &self.videos {
            all.add(conf);
        }
        out.push(ScopedResult {
            scope: "overall",
            name: "all".into(),
            confusion: all,
        });
        out
    }

    /// CSV report: `scope,name,tp,fp,fn,tn,fscore`, F to four decimals or
    /// `undefined`.
    pub fn write_report(&self, path: &Path) -> Result<(), DataError> {
        let mut out = String::from("scope,name,tp,fp,fn,tn,fscore\n");
        for r in self.rows() {
            let f = match r.confusion.fscore() {
                Some(v) => format!("{:.4}", v),
                None => "undefined".into(),
            };
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.scope, r.name, r.confusion.tp, r.confusion.fp, r.confusion.fn_, r.confusion.tn, f
            ));
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

/// Score one video: run `predict` on every evaluable frame's window and
/// count against ground truth. The padded border is excluded by the
/// window's evaluation mask.
pub fn evaluate_video(
    seq: &crate::data::cdnet::VideoSequence,
    history_len: usize,
    mut predict: impl FnMut(&crate::data::SampleWindow) -> Result<Tensor5, crate::trainer::TrainError>,
) -> Result<Confusion, crate::trainer::TrainError> {
    let mut conf = Confusion::default();
    for fi in seq.evaluable_frames(history_len) {
        let w = crate::data::cdnet::make_window(seq, fi, history_len)?;
        let prob = predict(&w)?;
        accumulate(&mut conf, &prob, &w.target, &w.ignore_mask)?;
    }
    Ok(conf)
}

/// Score every test video of a manifest under a CDnet-layout root.
pub fn evaluate_split(
    root: &Path,
    manifest: &crate::data::split::SplitManifest,
    history_len: usize,
    mut predict: impl FnMut(&crate::data::SampleWindow) -> Result<Tensor5, crate::trainer::TrainError>,
) -> Result<Metrics, crate::trainer::TrainError> {
    let mut metrics = Metrics::default();
    for entry in manifest.videos_with_role(crate::data::split::Role::Test) {
        let seq = crate::data::cdnet::load_cdnet_video(root, &entry.category, &entry.video)?;
        let conf = evaluate_video(&seq, history_len, &mut predict)?;
        metrics.push_video(&entry.category, &entry.video, conf);
    }
    Ok(metrics)
}
