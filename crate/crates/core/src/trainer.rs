//! Plain SGD training loop, the step-decayed learning-rate schedule, and
//! binary checkpoint serialization.

use crate::data::cdnet::{make_window, VideoSequence};
use crate::data::{DataError, SampleWindow};
use crate::net::{backward, forward, Gradients, NetworkParams};
use crate::ops::bce_loss;
use crate::tensor::{Shape5, Tensor5, TensorError};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::io::{Read, Write};
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("data error: {0}")]
    Data(#[from] DataError),
    #[error("tensor error: {0}")]
    Tensor(#[from] TensorError),
    #[error("empty training set")]
    EmptySet,
}

/// Step-decayed SGD: start at `lr_initial`, subtract `lr_decrement` every
/// `decay_interval` epochs, never below `lr_floor`. Updates are applied
/// per sample (batch size 1).
#[derive(Debug, Clone)]
pub struct SGDConfig {
    pub lr_initial: f64,
    pub lr_decrement: f64,
    pub decay_interval: usize,
    pub lr_floor: f64,
    pub epochs: usize,
    pub shuffle_seed: u64,
}

impl Default for SGDConfig {
    fn default() -> Self {
        SGDConfig {
            lr_initial: 0.0006,
            lr_decrement: 0.0002,
            decay_interval: 20,
            lr_floor: 0.0001,
            epochs: 60,
            shuffle_seed: 0,
        }
    }
}

impl SGDConfig {
    /// Learning rate in force during 0-based `epoch`.
    pub fn lr_at_epoch(&self, epoch: usize) -> f64 {
        let steps = (epoch / self.decay_interval) as f64;
        (self.lr_initial - steps * self.lr_decrement).max(self.lr_floor)
    }
}

/// In-place update `w -= lr * g` over every layer.
pub fn sgd_step(params: &mut NetworkParams, grads: &Gradients, lr: f64) {
    for (l, g) in params.layers_mut().iter_mut().zip(grads.layers.iter()) {
        debug_assert_eq!(l.name, g.name);
        for (w, d) in l.weights.data_mut().iter_mut().zip(g.weights.iter()) {
            *w -= lr * d;
        }
        for (b, d) in l.bias.iter_mut().zip(g.bias.iter()) {
            *b -= lr * d;
        }
    }
}

/// A training set addressed by index. Windows are built on demand; a full
/// history window is several megabytes, so materializing whole epochs at
/// once is off the table.
pub trait SampleSource {
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    fn sample(&self, index: usize) -> Result<SampleWindow, DataError>;
}

/// Lazily yields one window per evaluable frame across a pool of videos.
pub struct VideoWindowSource {
    videos: Vec<VideoSequence>,
    /// (video index, 1-based frame index)
    index: Vec<(usize, usize)>,
    history_len: usize,
}

impl VideoWindowSource {
    pub fn new(videos: Vec<VideoSequence>, history_len: usize) -> Self {
        let mut index = Vec::new();
        for (vi, v) in videos.iter().enumerate() {
            for fi in v.evaluable_frames(history_len) {
                index.push((vi, fi));
            }
        }
        VideoWindowSource {
            videos,
            index,
            history_len,
        }
    }

    /// Thin the index to at most `max` windows, evenly spaced, so epoch
    /// cost is bounded regardless of video length.
    pub fn subsample(&mut self, max: usize) {
        if max == 0 || self.index.len() <= max {
            return;
        }
        let n = self.index.len();
        let picked: Vec<(usize, usize)> =
            (0..max).map(|k| self.index[k * n / max]).collect();
        self.index = picked;
    }
}

impl SampleSource for VideoWindowSource {
    fn len(&self) -> usize {
        self.index.len()
    }

    fn sample(&self, i: usize) -> Result<SampleWindow, DataError> {
        let (vi, fi) = self.index[i];
        make_window(&self.videos[vi], fi, self.history_len)
    }
}

#[derive(Debug, Clone)]
pub struct TrainRun {
    /// Mean masked BCE per epoch, in epoch order.
    pub epoch_losses: Vec<f64>,
}

/// One forward/backward/update step. Returns the masked loss.
pub fn train_step(
    params: &mut NetworkParams,
    window: &SampleWindow,
    lr: f64,
) -> Result<f64, TrainError> {
    let (prob, cache) = forward(&window.history, &window.current, params)?;
    let (loss, grad) = bce_loss(&prob, &window.target, &window.ignore_mask)?;
    let grads = backward(&cache, params, &grad)?;
    sgd_step(params, &grads, lr);
    Ok(loss)
}

/// Full training run: for each epoch, visit every sample once in a
/// seed-determined shuffled order, updating after each. `on_epoch` sees
/// (0-based epoch, mean loss) as epochs finish.
pub fn train_with(
    params: &mut NetworkParams,
    source: &dyn SampleSource,
    cfg: &SGDConfig,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<TrainRun, TrainError> {
    if source.is_empty() {
        return Err(TrainError::EmptySet);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.shuffle_seed);
    let mut order: Vec<usize> = (0..source.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let lr = cfg.lr_at_epoch(epoch);
        let mut total = 0.0;
        for &i in &order {
            let window = source.sample(i)?;
            total += train_step(params, &window, lr)?;
        }
        let mean = total / order.len() as f64;
        epoch_losses.push(mean);
        on_epoch(epoch, mean);
    }
    Ok(TrainRun { epoch_losses })
}

pub fn train(
    params: &mut NetworkParams,
    source: &dyn SampleSource,
    cfg: &SGDConfig,
) -> Result<TrainRun, TrainError> {
    train_with(params, source, cfg, |_, _| {})
}

// ---------------------------------------------------------------------------
// checkpoints

const CHECKPOINT_MAGIC: [u8; 4] = *b"3DFR";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint file: bad magic")]
    Format,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("architecture mismatch: {0}")]
    Architecture(String),
}

/// Layout, all little-endian: magic `3DFR`, u32 version, u32 layer count,
/// then per layer: u16 name length + UTF-8 name, five u32 weight dims
/// (out, in, kt, kh, kw), the f64 weights, u32 bias length, the f64 biases.
pub fn save_checkpoint(params: &NetworkParams, path: &Path) -> Result<(), CheckpointError> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(&CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(params.layers().len() as u32).to_le_bytes());
    for l in params.layers() {
        let name = l.name.as_bytes();
        buf.extend_from_slice(&(name.len() as u16).to_le_bytes());
        buf.extend_from_slice(name);
        let s = l.weights.shape();
        for d in [s.n, s.c, s.t, s.h, s.w] {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in l.weights.iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        buf.extend_from_slice(&(l.bias.len() as u32).to_le_bytes());
        for v in &l.bias {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.pos + n > self.buf.len() {
            return Err(CheckpointError::Corrupt("truncated file".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, CheckpointError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, CheckpointError> {
        let raw = self.take(n * 8)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

/// Load a checkpoint into a fresh parameter set. The stored layer table
/// must match the fixed architecture exactly (names, order, shapes).
pub fn load_checkpoint(path: &Path, input_channels: usize) -> Result<NetworkParams, CheckpointError> {
    let mut raw = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut raw)?;
    let mut r = Reader { buf: &raw, pos: 0 };
    if r.take(4)? != CHECKPOINT_MAGIC {
        return Err(CheckpointError::Format);
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::Version(version));
    }
    let mut params = NetworkParams::architecture(input_channels);
    let count = r.u32()? as usize;
    if count != params.layers().len() {
        return Err(CheckpointError::Architecture(format!(
            "{} layers stored, architecture has {}",
            count,
            params.layers().len()
        )));
    }
    for l in params.layers_mut() {
        let name_len = r.u16()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| CheckpointError::Corrupt("layer name is not UTF-8".into()))?;
        if name != l.name {
            return Err(CheckpointError::Architecture(format!(
                "layer {:?} stored where {:?} expected",
                name, l.name
            )));
        }
        let dims: Vec<usize> = (0..5).map(|_| r.u32().map(|v| v as usize)).collect::<Result<_, _>>()?;
        let shape = Shape5::new(dims[0], dims[1], dims[2], dims[3], dims[4]);
        if shape != l.weights.shape() {
            return Err(CheckpointError::Architecture(format!(
                "layer {}: stored shape {:?} differs from expected {:?}",
                l.name, shape, l.weights.shape()
            )));
        }
        let wdata = r.f64s(shape.len())?;
        l.weights = Tensor5::from_vec(shape, wdata)
            .map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
        let bias_len = r.u32()? as usize;
        if bias_len != l.bias.len() {
            return Err(CheckpointError::Architecture(format!(
                "layer {}: {} biases stored, expected {}",
                l.name,
                bias_len,
                l.bias.len()
            )));
        }
        l.bias = r.f64s(bias_len)?;
    }
    if r.pos != raw.len() {
        return Err(CheckpointError::Corrupt(format!(
            "{} trailing bytes",
            raw.len() - r.pos
        )));
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::init_params;

    #[test]
    fn schedule_matches_published_values() {
        let cfg = SGDConfig::default();
        assert!((cfg.lr_at_epoch(0) - 0.0006).abs() < 1e-15);
        assert!((cfg.lr_at_epoch(19) - 0.0006).abs() < 1e-15);
        assert!((cfg.lr_at_epoch(20) - 0.0004).abs() < 1e-15);
        assert!((cfg.lr_at_epoch(40) - 0.0002).abs() < 1e-15);
        assert!((cfg.lr_at_epoch(60) - 0.0001).abs() < 1e-15);
        assert!((cfg.lr_at_epoch(500) - 0.0001).abs() < 1e-15);
    }

    #[test]
    fn sgd_step_moves_against_gradient() {
        let mut p = init_params(3, 3);
        let before = p.to_flat();
        let mut g = Gradients::zeros_like(&p);
        g.layers[0].weights.data_mut()[0] = 2.0;
        g.layers[0].bias[0] = -1.0;
        sgd_step(&mut p, &g, 0.5);
        let after = p.to_flat();
        assert!((after[0] - (before[0] - 1.0)).abs() < 1e-15);
        let bias0 = p.layers()[0].weights.shape().len();
        assert!((after[bias0] - (before[bias0] + 0.5)).abs() < 1e-15);
        // no other parameter moved
        let moved = before
            .iter()
            .zip(after.iter())
            .filter(|(a, b)| a != b)
            .count();
        assert_eq!(moved, 2);
    }

    #[test]
    fn checkpoint_round_trip() {
        let p = init_params(11, 3);
        let path = std::env::temp_dir().join("threedfr_ckpt_roundtrip.bin");
        save_checkpoint(&p, &path).unwrap();
        let q = load_checkpoint(&path, 3).unwrap();
        assert_eq!(p.to_flat(), q.to_flat());
    }

    #[test]
    fn checkpoint_bad_magic_rejected() {
        let path = std::env::temp_dir().join("threedfr_ckpt_badmagic.bin");
        std::fs::write(&path, b"NOPE\x01\x00\x00\x00").unwrap();
        assert!(matches!(
            load_checkpoint(&path, 3),
            Err(CheckpointError::Format)
        ));
    }

    #[test]
    fn checkpoint_truncation_rejected() {
        let p = init_params(11, 3);
        let path = std::env::temp_dir().join("threedfr_ckpt_trunc.bin");
        save_checkpoint(&p, &path).unwrap();
        let mut raw = std::fs::read(&path).unwrap();
        raw.truncate(raw.len() / 2);
        std::fs::write(&path, &raw).unwrap();
        assert!(matches!(
            load_checkpoint(&path, 3),
            Err(CheckpointError::Corrupt(_))
        ));
    }

    #[test]
    fn checkpoint_wrong_version_rejected() {
        let p = init_params(11, 3);
        let path = std::env::temp_dir().join("threedfr_ckpt_ver.bin");
        save_checkpoint(&p, &path).unwrap();
        let mut raw = std::fs::read(&path).unwrap();
        raw[4] = 9;
        std::fs::write(&path, &raw).unwrap();
        assert!(matches!(
            load_checkpoint(&path, 3),
            Err(CheckpointError::Version(9))
        ));
    }
}
