//! The full change-detection network: three feature streams (temporal
//! reduction, current-frame features, temporal median) concatenated and
//! refined by a three-stage encoder-decoder with a sigmoid head.
//!
//! The pipeline is fixed, so gradients are composed by hand in `backward`
//! rather than through a generic autodiff tape.

use crate::ops::{
    branch_average, branch_average_backward, conv3d_backward_input, conv3d_backward_params,
    conv3d_forward, maxpool_122, maxpool_122_backward, relu, relu_backward, sigmoid,
    sigmoid_backward, tconv3d_backward, tconv3d_forward, upsample_122, upsample_122_backward,
    ConvSpec, PoolIndices,
};
use crate::tensor::{concat_channels, slice_channels, Shape5, Tensor5, TensorError};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Temporal depth of the history window; the three reduction stages
/// hard-code the 5 * 5 * 2 factorization.
pub const HISTORY_LEN: usize = 50;

/// Feature channels produced by each of the two learned streams.
pub const STREAM_CHANNELS: usize = 8;

/// Default input channel count (RGB).
pub const INPUT_CHANNELS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Conv,
    TConv,
}

/// Learnable weights, bias and geometry of one (transposed) convolution.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayerParams {
    pub name: String,
    pub kind: LayerKind,
    pub weights: Tensor5,
    pub bias: Vec<f64>,
    pub spec: ConvSpec,
}

struct LayerDesc {
    name: &'static str,
    kind: LayerKind,
    out_c: usize,
    in_c: usize,
    kt: usize,
    kh: usize,
    kw: usize,
    spec: ConvSpec,
}

/// The 25-layer table: 9 temporal-reduction branches, 3 current-frame
/// branches, 6 encoder convs, 6 decoder transposed convs and the head.
fn layer_descs(input_channels: usize) -> Vec<LayerDesc> {
    let mut v = Vec::with_capacity(25);
    let branch = |name, in_c, kt, k, stride_t| LayerDesc {
        name,
        kind: LayerKind::Conv,
        out_c: STREAM_CHANNELS,
        in_c,
        kt,
        kh: k,
        kw: k,
        spec: ConvSpec::new((stride_t, 1, 1), (0, (k - 1) / 2, (k - 1) / 2)),
    };
    v.push(branch("avfeat1.k1", input_channels, 5, 1, 5));
    v.push(branch("avfeat1.k3", input_channels, 5, 3, 5));
    v.push(branch("avfeat1.k5", input_channels, 5, 5, 5));
    v.push(branch("avfeat2.k1", STREAM_CHANNELS, 5, 1, 5));
    v.push(branch("avfeat2.k3", STREAM_CHANNELS, 5, 3, 5));
    v.push(branch("avfeat2.k5", STREAM_CHANNELS, 5, 5, 5));
    v.push(branch("avfeat3.k1", STREAM_CHANNELS, 2, 1, 2));
    v.push(branch("avfeat3.k3", STREAM_CHANNELS, 2, 3, 2));
    v.push(branch("avfeat3.k5", STREAM_CHANNELS, 2, 5, 2));
    v.push(branch("confeat.k1", input_channels, 1, 1, 1));
    v.push(branch("confeat.k3", input_channels, 1, 3, 1));
    v.push(branch("confeat.k5", input_channels, 1, 5, 1));
    let conv33 = |name, kind, out_c, in_c| LayerDesc {
        name,
        kind,
        out_c,
        in_c,
        kt: 1,
        kh: 3,
        kw: 3,
        spec: ConvSpec::same(3, 3),
    };
    let msfeat_c = 2 * STREAM_CHANNELS + input_channels;
    // encoder widths 2^(k+2), 2^(k+3) for k = 1..3
    v.push(conv33("enc1.conv1", LayerKind::Conv, 8, msfeat_c));
    v.push(conv33("enc1.conv2", LayerKind::Conv, 16, 8));
    v.push(conv33("enc2.conv1", LayerKind::Conv, 16, 16));
    v.push(conv33("enc2.conv2", LayerKind::Conv, 32, 16));
    v.push(conv33("enc3.conv1", LayerKind::Conv, 32, 32));
    v.push(conv33("enc3.conv2", LayerKind::Conv, 64, 32));
    // decoder widths 2^(7-k), 2^(6-k) for k = 1..3
    v.push(conv33("dec1.tconv1", LayerKind::TConv, 64, 64));
    v.push(conv33("dec1.tconv2", LayerKind::TConv, 32, 64));
    v.push(conv33("dec2.tconv1", LayerKind::TConv, 32, 32));
    v.push(conv33("dec2.tconv2", LayerKind::TConv, 16, 32));
    v.push(conv33("dec3.tconv1", LayerKind::TConv, 16, 16));
    v.push(conv33("dec3.tconv2", LayerKind::TConv, 8, 16));
    v.push(LayerDesc {
        name: "head",
        kind: LayerKind::TConv,
        out_c: 1,
        in_c: 8,
        kt: 1,
        kh: 1,
        kw: 1,
        spec: ConvSpec::same(1, 1),
    });
    v
}

/// All learnable parameters, addressable by stable layer names.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub input_channels: usize,
    layers: Vec<ConvLayerParams>,
}

impl NetworkParams {
    /// Zero-initialized parameters for the given input channel count.
    pub fn architecture(input_channels: usize) -> Self {
        let layers = layer_descs(input_channels)
            .into_iter()
            .map(|d| ConvLayerParams {
                name: d.name.to_string(),
                kind: d.kind,
                weights: Tensor5::zeros(Shape5::new(d.out_c, d.in_c, d.kt, d.kh, d.kw))
                    .expect("layer shape valid"),
                bias: vec![0.0; d.out_c],
                spec: d.spec,
            })
            .collect();
        NetworkParams {
            input_channels,
            layers,
        }
    }

    pub fn layers(&self) -> &[ConvLayerParams] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [ConvLayerParams] {
        &mut self.layers
    }

    pub fn layer(&self, name: &str) -> &ConvLayerParams {
        self.layers
            .iter()
            .find(|l| l.name == name)
            .unwrap_or_else(|| panic!("unknown layer {}", name))
    }

    pub fn index_of(&self, name: &str) -> usize {
        self.layers
            .iter()
            .position(|l| l.name == name)
            .unwrap_or_else(|| panic!("unknown layer {}", name))
    }

    /// Total number of learnable scalars (weights plus biases).
    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.shape().len() + l.bias.len())
            .sum()
    }

    /// Flatten every parameter (weights then bias, per layer, in layer
    /// order) into one vector.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(l.weights.data());
            out.extend_from_slice(&l.bias);
        }
        out
    }

    /// Inverse of `to_flat`.
    pub fn set_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.param_count());
        let mut off = 0;
        for l in &mut self.layers {
            let wn = l.weights.shape().len();
            l.weights.data_mut().copy_from_slice(&flat[off..off + wn]);
            off += wn;
            let bn = l.bias.len();
            l.bias.copy_from_slice(&flat[off..off + bn]);
            off += bn;
        }
    }
}

/// He-normal initialization: zero-mean, variance 2/fan_in per layer,
/// biases zero, fully determined by the seed.
pub fn init_params(seed: u64, input_channels: usize) -> NetworkParams {
    let mut params = NetworkParams::architecture(input_channels);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for l in &mut params.layers {
        let s = l.weights.shape();
        let fan_in = (s.c * s.t * s.h * s.w) as f64;
        let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("valid std");
        for w in l.weights.data_mut() {
            *w = normal.sample(&mut rng);
        }
    }
    params
}

/// One gradient tensor per layer, aligned with `NetworkParams` order.
#[derive(Debug, Clone)]
pub struct LayerGrads {
    pub name: String,
    pub weights: Tensor5,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Gradients {
    pub layers: Vec<LayerGrads>,
}

impl Gradients {
    pub fn zeros_like(params: &NetworkParams) -> Self {
        Gradients {
            layers: params
                .layers
                .iter()
                .map(|l| LayerGrads {
                    name: l.name.clone(),
                    weights: Tensor5::zeros(l.weights.shape()).expect("valid"),
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
        }
    }

    pub fn layer(&self, name: &str) -> &LayerGrads {
        self.layers
            .iter()
            .find(|l| l.name == name)
            .unwrap_or_else(|| panic!("unknown layer {}", name))
    }

    /// Flatten in the same order as `NetworkParams::to_flat`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(l.weights.data());
            out.extend_from_slice(&l.bias);
        }
        out
    }
}

// ---------------------------------------------------------------------------
// forward caches

pub struct AvFeatCache {
    /// Inputs to the three reduction stages (stage 1's input is the history).
    pub stage_inputs: Vec<Tensor5>,
}

pub struct ConFeatCache {
    pub input: Tensor5,
}

pub struct EncStageCache {
    pub input: Tensor5,
    pub mid: Tensor5,
    pub pool_idx: PoolIndices,
    pub pre_relu: Tensor5,
}

pub struct DecStageCache {
    pub up_out: Tensor5,
    pub mid: Tensor5,
    pub pre_relu: Tensor5,
}

pub struct HeadCache {
    pub input: Tensor5,
    pub prob: Tensor5,
}

/// Every intermediate needed to run the hand-composed backward pass.
pub struct ForwardCache {
    pub avfeat: AvFeatCache,
    pub confeat: ConFeatCache,
    pub enc: Vec<EncStageCache>,
    pub dec: Vec<DecStageCache>,
    pub head: HeadCache,
}

// ---------------------------------------------------------------------------
// forward

fn stage_branches(stage: &str) -> [String; 3] {
    [
        format!("{}.k1", stage),
        format!("{}.k3", stage),
        format!("{}.k5", stage),
    ]
}

fn branch_stage_forward(
    x: &Tensor5,
    p: &NetworkParams,
    stage: &str,
) -> Result<Tensor5, TensorError> {
    let names = stage_branches(stage);
    let outs = names
        .iter()
        .map(|n| {
            let l = p.layer(n);
            conv3d_forward(x, &l.weights, &l.bias, &l.spec)
        })
        .collect::<Result<Vec<_>, _>>()?;
    branch_average(&outs.iter().collect::<Vec<_>>())
}

/// Three-stage temporal reduction: depth 50 -> 10 -> 2 -> 1, each stage the
/// average of three receptive-field branches, spatial dims preserved.
pub fn avfeat_forward(
    history: &Tensor5,
    p: &NetworkParams,
) -> Result<(Tensor5, AvFeatCache), TensorError> {
    let s = history.shape();
    if s.t != HISTORY_LEN {
        return Err(TensorError::ShapeMismatch(format!(
            "avfeat expects temporal depth {}, got {}",
            HISTORY_LEN, s.t
        )));
    }
    let mut stage_inputs = Vec::with_capacity(3);
    let mut x = history.clone();
    for stage in ["avfeat1", "avfeat2", "avfeat3"] {
        stage_inputs.push(x.clone());
        x = branch_stage_forward(&x, p, stage)?;
    }
    debug_assert_eq!(x.shape().t, 1);
    Ok((x, AvFeatCache { stage_inputs }))
}

/// Multi-receptive-field features of the current frame.
pub fn confeat_forward(
    frame: &Tensor5,
    p: &NetworkParams,
) -> Result<(Tensor5, ConFeatCache), TensorError> {
    if frame.shape().t != 1 {
        return Err(TensorError::ShapeMismatch(format!(
            "confeat expects temporal depth 1, got {}",
            frame.shape().t
        )));
    }
    let out = branch_stage_forward(frame, p, "confeat")?;
    Ok((
        out,
        ConFeatCache {
            input: frame.clone(),
        },
    ))
}

/// Per-pixel, per-channel median over the temporal axis. Even window
/// lengths take the mean of the two middle order statistics.
pub fn temporal_median(history: &Tensor5) -> Result<Tensor5, TensorError> {
    let s = history.shape();
    let os = Shape5::new(s.n, s.c, 1, s.h, s.w);
    let mut out = Tensor5::zeros(os)?;
    // gather row-wise (contiguous reads), then select per pixel column
    let mut cols = vec![0.0f64; s.w * s.t];
    for n in 0..s.n {
        for c in 0..s.c {
            for h in 0..s.h {
                for t in 0..s.t {
                    let row = history.row(n, c, t, h);
                    for w in 0..s.w {
                        cols[w * s.t + t] = row[w];
                    }
                }
                let out_row = out.row_mut(n, c, 0, h);
                for w in 0..s.w {
                    let buf = &mut cols[w * s.t..(w + 1) * s.t];
                    let k = s.t / 2;
                    let (low, upper, _) = buf.select_nth_unstable_by(k, f64::total_cmp);
                    let m = if s.t % 2 == 1 {
                        *upper
                    } else {
                        let lower = low.iter().copied().fold(f64::MIN, f64::max);
                        0.5 * (lower + *upper)
                    };
                    out_row[w] = m;
                }
            }
        }
    }
    Ok(out)
}

fn check_spatial(s: Shape5) -> Result<(), TensorError> {
    if s.h % 8 != 0 || s.w % 8 != 0 || s.h == 0 || s.w == 0 {
        return Err(TensorError::ShapeMismatch(format!(
            "encoder needs h and w divisible by 8, got {}x{}",
            s.h, s.w
        )));
    }
    Ok(())
}

/// Three encoder stages: conv, conv, 2x2 max pool, relu. Spatial dims halve
/// per stage; channels 19 -> 8 -> 16 -> 32 -> 64 along the conv pairs.
pub fn encoder_forward(
    msfeat: &Tensor5,
    p: &NetworkParams,
) -> Result<(Tensor5, Vec<EncStageCache>), TensorError> {
    check_spatial(msfeat.shape())?;
    let mut caches = Vec::with_capacity(3);
    let mut x = msfeat.clone();
    for k in 1..=3 {
        let c1 = p.layer(&format!("enc{}.conv1", k));
        let c2 = p.layer(&format!("enc{}.conv2", k));
        let mid = conv3d_forward(&x, &c1.weights, &c1.bias, &c1.spec)?;
        let conv_out = conv3d_forward(&mid, &c2.weights, &c2.bias, &c2.spec)?;
        let (pooled, pool_idx) = maxpool_122(&conv_out)?;
        let out = relu(&pooled);
        caches.push(EncStageCache {
            input: x,
            mid,
            pool_idx,
            pre_relu: pooled,
        });
        x = out;
    }
    Ok((x, caches))
}

/// Three decoder stages (upsample, tconv, tconv, relu) followed by the
/// 1x1x1 transposed-conv head and sigmoid.
pub fn decoder_head_forward(
    mlen: &Tensor5,
    p: &NetworkParams,
) -> Result<(Tensor5, Vec<DecStageCache>, HeadCache), TensorError> {
    let mut caches = Vec::with_capacity(3);
    let mut x = mlen.clone();
    for k in 1..=3 {
        let t1 = p.layer(&format!("dec{}.tconv1", k));
        let t2 = p.layer(&format!("dec{}.tconv2", k));
        let up = upsample_122(&x)?;
        let mid = tconv3d_forward(&up, &t1.weights, &t1.bias, &t1.spec)?;
        let pre_relu = tconv3d_forward(&mid, &t2.weights, &t2.bias, &t2.spec)?;
        let out = relu(&pre_relu);
        caches.push(DecStageCache {
            up_out: up,
            mid,
            pre_relu,
        });
        x = out;
    }
    let head = p.layer("head");
    let logits = tconv3d_forward(&x, &head.weights, &head.bias, &head.spec)?;
    let prob = sigmoid(&logits);
    Ok((
        prob.clone(),
        caches,
        HeadCache {
            input: x,
            prob,
        },
    ))
}

/// Full pipeline: feature streams, channel concatenation, encoder,
/// decoder and head. Returns the change probability map and the cache the
/// backward pass consumes.
pub fn forward(
    history: &Tensor5,
    current: &Tensor5,
    p: &NetworkParams,
) -> Result<(Tensor5, ForwardCache), TensorError> {
    let (av, av_cache) = avfeat_forward(history, p)?;
    let (con, con_cache) = confeat_forward(current, p)?;
    let med = temporal_median(history)?;
    let msfeat = concat_channels(&[&av, &con, &med])?;
    let (mlen, enc_caches) = encoder_forward(&msfeat, p)?;
    let (prob, dec_caches, head_cache) = decoder_head_forward(&mlen, p)?;
    Ok((
        prob,
        ForwardCache {
            avfeat: av_cache,
            confeat: con_cache,
            enc: enc_caches,
            dec: dec_caches,
            head: head_cache,
        },
    ))
}

// ---------------------------------------------------------------------------
// backward

fn accumulate(grads: &mut Gradients, idx: usize, gw: Tensor5, gb: Vec<f64>) {
    let slot = &mut grads.layers[idx];
    for (a, b) in slot.weights.data_mut().iter_mut().zip(gw.iter()) {
        *a += b;
    }
    for (a, b) in slot.bias.iter_mut().zip(gb.iter()) {
        *a += b;
    }
}

/// Backward through one averaged-branch stage. Returns the gradient w.r.t.
/// the stage input unless `need_input_grad` is false (the first stage of
/// each stream feeds raw frames, which are not trained).
fn branch_stage_backward(
    p: &NetworkParams,
    grads: &mut Gradients,
    stage: &str,
    input: &Tensor5,
    grad_out: &Tensor5,
    need_input_grad: bool,
) -> Result<Option<Tensor5>, TensorError> {
    let names = stage_branches(stage);
    let per_branch = branch_average_backward(grad_out, names.len());
    let mut gx_total: Option<Tensor5> = None;
    for (name, g) in names.iter().zip(per_branch.iter()) {
        let idx = p.index_of(name);
        let l = &p.layers()[idx];
        let (gw, gb) = conv3d_backward_params(input, l.weights.shape(), &l.spec, g)?;
        accumulate(grads, idx, gw, gb);
        if need_input_grad {
            let gx = conv3d_backward_input(input.shape(), &l.weights, &l.spec, g)?;
            gx_total = Some(match gx_total {
                None => gx,
                Some(mut acc) => {
                    for (a, b) in acc.data_mut().iter_mut().zip(gx.iter()) {
                        *a += b;
                    }
                    acc
                }
            });
        }
    }
    Ok(gx_total)
}

/// Reverse-mode pass over the whole pipeline. Produces one gradient per
/// layer; the temporal-median channels of the concatenation receive no
/// parameters, so their gradient slice is discarded.
pub fn backward(
    cache: &ForwardCache,
    p: &NetworkParams,
    grad_prob_map: &Tensor5,
) -> Result<Gradients, TensorError> {
    let mut grads = Gradients::zeros_like(p);

    // head: sigmoid then 1x1x1 tconv
    let g_logits = sigmoid_backward(&cache.head.prob, grad_prob_map)?;
    let head_idx = p.index_of("head");
    let head = &p.layers()[head_idx];
    let (mut g, gw, gb) = tconv3d_backward(&cache.head.input, &head.weights, &head.spec, &g_logits)?;
    accumulate(&mut grads, head_idx, gw, gb);

    // decoder stages in reverse
    for k in (1..=3).rev() {
        let dc = &cache.dec[k - 1];
        let g_pre = relu_backward(&dc.pre_relu, &g)?;
        let i2 = p.index_of(&format!("dec{}.tconv2", k));
        let l2 = &p.layers()[i2];
        let (g_mid, gw2, gb2) = tconv3d_backward(&dc.mid, &l2.weights, &l2.spec, &g_pre)?;
        accumulate(&mut grads, i2, gw2, gb2);
        let i1 = p.index_of(&format!("dec{}.tconv1", k));
        let l1 = &p.layers()[i1];
        let (g_up, gw1, gb1) = tconv3d_backward(&dc.up_out, &l1.weights, &l1.spec, &g_mid)?;
        accumulate(&mut grads, i1, gw1, gb1);
        g = upsample_122_backward(&g_up)?;
    }

    // encoder stages in reverse
    for k in (1..=3).rev() {
        let ec = &cache.enc[k - 1];
        let g_pool = relu_backward(&ec.pre_relu, &g)?;
        let g_conv_out = maxpool_122_backward(&ec.pool_idx, &g_pool)?;
        let i2 = p.index_of(&format!("enc{}.conv2", k));
        let l2 = &p.layers()[i2];
        let (gw2, gb2) = conv3d_backward_params(&ec.mid, l2.weights.shape(), &l2.spec, &g_conv_out)?;
        accumulate(&mut grads, i2, gw2, gb2);
        let g_mid = conv3d_backward_input(ec.mid.shape(), &l2.weights, &l2.spec, &g_conv_out)?;
        let i1 = p.index_of(&format!("enc{}.conv1", k));
        let l1 = &p.layers()[i1];
        let (gw1, gb1) = conv3d_backward_params(&ec.input, l1.weights.shape(), &l1.spec, &g_mid)?;
        accumulate(&mut grads, i1, gw1, gb1);
        g = conv3d_backward_input(ec.input.shape(), &l1.weights, &l1.spec, &g_mid)?;
    }

    // concatenation split: AvFeat | ConFeat | median (discarded)
    let g_av = slice_channels(&g, 0, STREAM_CHANNELS)?;
    let g_con = slice_channels(&g, STREAM_CHANNELS, STREAM_CHANNELS)?;

    // ConFeat: parameters only, frame input is not trained
    branch_stage_backward(p, &mut grads, "confeat", &cache.confeat.input, &g_con, false)?;

    // AvFeat stages in reverse; stage 1 skips the input gradient
    let mut g_stage = g_av;
    for (k, stage) in [(3usize, "avfeat3"), (2, "avfeat2"), (1, "avfeat1")] {
        let input = &cache.avfeat.stage_inputs[k - 1];
        let gx = branch_stage_backward(p, &mut grads, stage, input, &g_stage, k > 1)?;
        match gx {
            Some(next) => g_stage = next,
            None => break,
        }
    }

    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::testutil::rand_tensor;

    #[test]
    fn layer_count_is_25() {
        let p = NetworkParams::architecture(3);
        assert_eq!(p.layers().len(), 25);
    }

    #[test]
    fn param_count_closed_form() {
        // per-layer out*in*kt*kh*kw + out, summed over the 25-layer table
        let expected: usize = [
            (8, 3, 5, 1, 1),
            (8, 3, 5, 3, 3),
            (8, 3, 5, 5, 5),
            (8, 8, 5, 1, 1),
            (8, 8, 5, 3, 3),
            (8, 8, 5, 5, 5),
            (8, 8, 2, 1, 1),
            (8, 8, 2, 3, 3),
            (8, 8, 2, 5, 5),
            (8, 3, 1, 1, 1),
            (8, 3, 1, 3, 3),
            (8, 3, 1, 5, 5),
            (8, 19, 1, 3, 3),
            (16, 8, 1, 3, 3),
            (16, 16, 1, 3, 3),
            (32, 16, 1, 3, 3),
            (32, 32, 1, 3, 3),
            (64, 32, 1, 3, 3),
            (64, 64, 1, 3, 3),
            (32, 64, 1, 3, 3),
            (32, 32, 1, 3, 3),
            (16, 32, 1, 3, 3),
            (16, 16, 1, 3, 3),
            (8, 16, 1, 3, 3),
            (1, 8, 1, 1, 1),
        ]
        .iter()
        .map(|&(o, i, kt, kh, kw)| o * i * kt * kh * kw + o)
        .sum();
        assert_eq!(expected, 130_817);
        let p = NetworkParams::architecture(3);
        assert_eq!(p.param_count(), expected);
        // within 8% of the reported 126.45K
        let gap = (p.param_count() as f64 - 126_450.0).abs() / 126_450.0;
        assert!(gap < 0.08, "gap = {}", gap);
    }

    #[test]
    fn param_count_monotone_in_channels() {
        // widening any channel dimension strictly increases the count
        let p3 = NetworkParams::architecture(3);
        let p6 = NetworkParams::architecture(6);
        assert!(p6.param_count() > p3.param_count());
    }

    #[test]
    fn init_is_deterministic_with_zero_biases() {
        let a = init_params(42, 3);
        let b = init_params(42, 3);
        assert_eq!(a, b);
        assert!(a.layers().iter().all(|l| l.bias.iter().all(|&v| v == 0.0)));
        let c = init_params(43, 3);
        assert_ne!(a, c);
    }

    #[test]
    fn init_variance_matches_fan_in() {
        let p = init_params(7, 3);
        let l = p.layer("avfeat2.k5"); // fan_in = 8 * 5 * 5 * 5 = 1000
        let n = l.weights.shape().len() as f64;
        let mean: f64 = l.weights.iter().sum::<f64>() / n;
        let var: f64 = l.weights.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let expect = 2.0 / 1000.0;
        assert!(
            (var - expect).abs() / expect < 0.2,
            "var = {}, expect = {}",
            var,
            expect
        );
    }

    #[test]
    fn avfeat_temporal_ladder() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let p = init_params(1, 3);
        let history = rand_tensor(Shape5::new(1, 3, 50, 8, 8), &mut rng);
        // per-stage depths
        let s1 = branch_stage_forward(&history, &p, "avfeat1").unwrap();
        assert_eq!(s1.shape(), Shape5::new(1, 8, 10, 8, 8));
        let s2 = branch_stage_forward(&s1, &p, "avfeat2").unwrap();
        assert_eq!(s2.shape(), Shape5::new(1, 8, 2, 8, 8));
        let s3 = branch_stage_forward(&s2, &p, "avfeat3").unwrap();
        assert_eq!(s3.shape(), Shape5::new(1, 8, 1, 8, 8));
        let (out, _) = avfeat_forward(&history, &p).unwrap();
        assert_eq!(out, s3);
    }

    #[test]
    fn avfeat_rejects_wrong_depth() {
        let p = init_params(1, 3);
        let history = Tensor5::zeros(Shape5::new(1, 3, 49, 8, 8)).unwrap();
        assert!(avfeat_forward(&history, &p).is_err());
    }

    #[test]
    fn zero_input_zero_bias_streams_are_zero() {
        let p = NetworkParams::architecture(3); // all-zero params
        let history = Tensor5::zeros(Shape5::new(1, 3, 50, 8, 8)).unwrap();
        let frame = Tensor5::zeros(Shape5::new(1, 3, 1, 8, 8)).unwrap();
        let (av, _) = avfeat_forward(&history, &p).unwrap();
        assert!(av.iter().all(|&v| v == 0.0));
        let (con, _) = confeat_forward(&frame, &p).unwrap();
        assert!(con.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn median_odd_window() {
        let mut h = Tensor5::zeros(Shape5::new(1, 1, 3, 1, 1)).unwrap();
        h.set([0, 0, 0, 0, 0], 0.2).unwrap();
        h.set([0, 0, 1, 0, 0], 0.8).unwrap();
        h.set([0, 0, 2, 0, 0], 0.4).unwrap();
        let m = temporal_median(&h).unwrap();
        assert_eq!(m.data(), &[0.4]);
    }

    #[test]
    fn median_constant_sequence() {
        let h = Tensor5::filled(Shape5::new(1, 3, 50, 4, 4), 0.6).unwrap();
        let m = temporal_median(&h).unwrap();
        assert_eq!(m.shape(), Shape5::new(1, 3, 1, 4, 4));
        assert!(m.iter().all(|&v| v == 0.6));
    }

    #[test]
    fn median_matches_sort_oracle_and_bounds() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let h = rand_tensor(Shape5::new(1, 2, 50, 3, 3), &mut rng);
        let m = temporal_median(&h).unwrap();
        let s = h.shape();
        for c in 0..s.c {
            for y in 0..s.h {
                for x in 0..s.w {
                    let mut vals: Vec<f64> = (0..s.t).map(|t| h.at(0, c, t, y, x)).collect();
                    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
                    let expect = 0.5 * (vals[24] + vals[25]);
                    let got = m.at(0, c, 0, y, x);
                    assert_eq!(got, expect);
                    assert!(got >= vals[0] && got <= vals[49]);
                }
            }
        }
    }

    #[test]
    fn median_invariant_under_frame_permutation() {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        let h = rand_tensor(Shape5::new(1, 1, 50, 2, 2), &mut rng);
        let m1 = temporal_median(&h).unwrap();
        let mut order: Vec<usize> = (0..50).collect();
        order.shuffle(&mut rng);
        let mut hp = Tensor5::zeros(h.shape()).unwrap();
        for (dst, &src) in order.iter().enumerate() {
            for y in 0..2 {
                for x in 0..2 {
                    *hp.at_mut(0, 0, dst, y, x) = h.at(0, 0, src, y, x);
                }
            }
        }
        let m2 = temporal_median(&hp).unwrap();
        assert_eq!(m1, m2);
    }

    #[test]
    fn encoder_decoder_shapes() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let p = init_params(2, 3);
        let msfeat = rand_tensor(Shape5::new(1, 19, 1, 64, 64), &mut rng);
        let (mlen, _) = encoder_forward(&msfeat, &p).unwrap();
        assert_eq!(mlen.shape(), Shape5::new(1, 64, 1, 8, 8));
        let (prob, _, _) = decoder_head_forward(&mlen, &p).unwrap();
        assert_eq!(prob.shape(), Shape5::new(1, 1, 1, 64, 64));
        assert!(prob.iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn encoder_rejects_indivisible_dims() {
        let p = init_params(2, 3);
        let msfeat = Tensor5::zeros(Shape5::new(1, 19, 1, 12, 16)).unwrap();
        assert!(encoder_forward(&msfeat, &p).is_err());
    }

    #[test]
    fn zero_params_give_uniform_half_map() {
        let p = NetworkParams::architecture(3);
        let mlen = Tensor5::zeros(Shape5::new(1, 64, 1, 8, 8)).unwrap();
        let (prob, _, _) = decoder_head_forward(&mlen, &p).unwrap();
        assert!(prob.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn forward_is_deterministic_and_matches_composition() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let p = init_params(3, 3);
        let history = rand_tensor(Shape5::new(1, 3, 50, 8, 8), &mut rng);
        let current = rand_tensor(Shape5::new(1, 3, 1, 8, 8), &mut rng);
        let (prob1, _) = forward(&history, &current, &p).unwrap();
        let (prob2, _) = forward(&history, &current, &p).unwrap();
        assert_eq!(prob1, prob2);
        // compositional oracle from the public sub-operations
        let (av, _) = avfeat_forward(&history, &p).unwrap();
        let (con, _) = confeat_forward(&current, &p).unwrap();
        let med = temporal_median(&history).unwrap();
        let msfeat = concat_channels(&[&av, &con, &med]).unwrap();
        assert_eq!(msfeat.shape().c, 19);
        let (mlen, _) = encoder_forward(&msfeat, &p).unwrap();
        let (prob_oracle, _, _) = decoder_head_forward(&mlen, &p).unwrap();
        assert_eq!(prob1, prob_oracle);
    }

    #[test]
    fn zero_upstream_grad_gives_zero_gradients() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let p = init_params(4, 3);
        let history = rand_tensor(Shape5::new(1, 3, 50, 8, 8), &mut rng);
        let current = rand_tensor(Shape5::new(1, 3, 1, 8, 8), &mut rng);
        let (prob, cache) = forward(&history, &current, &p).unwrap();
        let g = Tensor5::zeros(prob.shape()).unwrap();
        let grads = backward(&cache, &p, &g).unwrap();
        for l in &grads.layers {
            assert!(l.weights.iter().all(|&v| v == 0.0), "layer {}", l.name);
            assert!(l.bias.iter().all(|&v| v == 0.0), "layer {}", l.name);
        }
    }

    #[test]
    fn flat_round_trip() {
        let p = init_params(9, 3);
        let flat = p.to_flat();
        assert_eq!(flat.len(), p.param_count());
        let mut q = NetworkParams::architecture(3);
        q.set_flat(&flat);
        assert_eq!(p, q);
    }
}
