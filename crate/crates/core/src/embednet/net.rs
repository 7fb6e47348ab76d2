//! Forward pass, analytic backward pass and weight initialization.
//!
//! Convolutions use stride 2 with TF-style "same" zero padding, so a side of
//! `n` pixels becomes `ceil(n / 2)`. ReLU has subgradient 0 at 0.

use rand::Rng as _;
use rayon::prelude::*;

use super::loss::hinge;
use super::{
    conv_out_size, Architecture, EmbeddingVec, NetConfig, Weights, CONV1_KERNEL, CONV2_KERNEL, CONV_STRIDE,
    NORM_EPSILON,
};
use crate::imaging::Patch;
use crate::rng::rng_for;
use crate::triplet::Triplet;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy)]
struct ConvGeom {
    in_ch: usize,
    out_ch: usize,
    in_size: usize,
    out_size: usize,
    kernel: usize,
    pad: usize,
}

impl ConvGeom {
    fn new(in_ch: usize, out_ch: usize, in_size: usize, kernel: usize) -> Self {
        let out_size = conv_out_size(in_size);
        let total = ((out_size - 1) * CONV_STRIDE + kernel).saturating_sub(in_size);
        Self {
            in_ch,
            out_ch,
            in_size,
            out_size,
            kernel,
            pad: total / 2,
        }
    }

    /// Input coordinate for output position `o` and kernel tap `k`, if it
    /// falls inside the (unpadded) input.
    #[inline]
    fn source(&self, o: usize, k: usize) -> Option<usize> {
        let pos = (o * CONV_STRIDE + k).checked_sub(self.pad)?;
        (pos < self.in_size).then_some(pos)
    }

    fn forward(&self, input: &[f64], weight: &[f64], bias: &[f64]) -> Vec<f64> {
        let (n, k) = (self.in_size, self.kernel);
        let mut out = vec![0.0; self.out_ch * self.out_size * self.out_size];
        for oc in 0..self.out_ch {
            for oy in 0..self.out_size {
                for ox in 0..self.out_size {
                    let mut acc = bias[oc];
                    for ic in 0..self.in_ch {
                        let wbase = (oc * self.in_ch + ic) * k * k;
                        let ibase = ic * n * n;
                        for ky in 0..k {
                            let Some(iy) = self.source(oy, ky) else { continue };
                            for kx in 0..k {
                                let Some(ix) = self.source(ox, kx) else { continue };
                                acc += weight[wbase + ky * k + kx] * input[ibase + iy * n + ix];
                            }
                        }
                    }
                    out[(oc * self.out_size + oy) * self.out_size + ox] = acc;
                }
            }
        }
        out
    }

    /// Accumulate weight/bias gradients; return the input gradient when
    /// `want_input` is set.
    fn backward(
        &self,
        input: &[f64],
        weight: &[f64],
        d_out: &[f64],
        d_weight: &mut [f64],
        d_bias: &mut [f64],
        want_input: bool,
    ) -> Option<Vec<f64>> {
        let (n, k) = (self.in_size, self.kernel);
        let mut d_in = want_input.then(|| vec![0.0; self.in_ch * n * n]);
        for oc in 0..self.out_ch {
            for oy in 0..self.out_size {
                for ox in 0..self.out_size {
                    let g = d_out[(oc * self.out_size + oy) * self.out_size + ox];
                    if g == 0.0 {
                        continue;
                    }
                    d_bias[oc] += g;
                    for ic in 0..self.in_ch {
                        let wbase = (oc * self.in_ch + ic) * k * k;
                        let ibase = ic * n * n;
                        for ky in 0..k {
                            let Some(iy) = self.source(oy, ky) else { continue };
                            for kx in 0..k {
                                let Some(ix) = self.source(ox, kx) else { continue };
                                let widx = wbase + ky * k + kx;
                                let iidx = ibase + iy * n + ix;
                                d_weight[widx] += g * input[iidx];
                                if let Some(d) = d_in.as_mut() {
                                    d[iidx] += g * weight[widx];
                                }
                            }
                        }
                    }
                }
            }
        }
        d_in
    }
}

fn dense_forward(input: &[f64], weight: &[f64], bias: &[f64]) -> Vec<f64> {
    let n_in = input.len();
    bias.iter()
        .enumerate()
        .map(|(o, b)| {
            b + weight[o * n_in..(o + 1) * n_in]
                .iter()
                .zip(input)
                .map(|(w, x)| w * x)
                .sum::<f64>()
        })
        .collect()
}

fn dense_backward(
    input: &[f64],
    weight: &[f64],
    d_out: &[f64],
    d_weight: &mut [f64],
    d_bias: &mut [f64],
    want_input: bool,
) -> Option<Vec<f64>> {
    let n_in = input.len();
    let mut d_in = want_input.then(|| vec![0.0; n_in]);
    for (o, &g) in d_out.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        d_bias[o] += g;
        let row = o * n_in..(o + 1) * n_in;
        for (dw, x) in d_weight[row.clone()].iter_mut().zip(input) {
            *dw += g * x;
        }
        if let Some(d) = d_in.as_mut() {
            for (di, w) in d.iter_mut().zip(&weight[row]) {
                *di += g * w;
            }
        }
    }
    d_in
}

fn relu(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&x| if x > 0.0 { x } else { 0.0 }).collect()
}

fn relu_mask(grad: &mut [f64], pre: &[f64]) {
    for (g, &z) in grad.iter_mut().zip(pre) {
        if z <= 0.0 {
            *g = 0.0;
        }
    }
}

fn check(v: &[f64], layer: &'static str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { layer })
    }
}

/// Intermediate values of one forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct Trace {
    input: Vec<f64>,
    /// Pre-activations of the hidden layers (one for FC_ONLY, two for CONV).
    hidden_pre: Vec<Vec<f64>>,
    hidden_post: Vec<Vec<f64>>,
    /// Dense output before normalization.
    raw: Vec<f64>,
    raw_norm: f64,
    embedding: Vec<f64>,
}

impl Trace {
    pub fn embedding(&self) -> EmbeddingVec {
        EmbeddingVec::from_raw(self.embedding.clone())
    }

    /// Smallest |pre-activation| over all ReLU inputs; the loss is not
    /// differentiable where this is zero.
    pub fn min_abs_preactivation(&self) -> f64 {
        self.hidden_pre
            .iter()
            .flatten()
            .fold(f64::INFINITY, |m, z| m.min(z.abs()))
    }

    pub fn raw_norm(&self) -> f64 {
        self.raw_norm
    }
}

struct Params<'a> {
    w: &'a [f64],
    cfg: &'a NetConfig,
}

impl<'a> Params<'a> {
    fn seg(&self, name: &str) -> &'a [f64] {
        let layout = self.cfg.layout();
        let s = layout.segment(name).expect("segment exists for architecture");
        &self.w[s.offset..s.offset + s.len]
    }
}

fn conv_geoms(cfg: &NetConfig) -> (ConvGeom, ConvGeom) {
    let g1 = ConvGeom::new(1, cfg.conv1_channels, cfg.patch_resolution, CONV1_KERNEL);
    let g2 = ConvGeom::new(cfg.conv1_channels, cfg.conv2_channels, g1.out_size, CONV2_KERNEL);
    (g1, g2)
}

fn check_inputs(cfg: &NetConfig, weights: &Weights, patch: &Patch) -> Result<()> {
    if patch.resolution() != cfg.patch_resolution {
        return Err(Error::Shape(format!(
            "patch resolution {} does not match network resolution {}",
            patch.resolution(),
            cfg.patch_resolution
        )));
    }
    if weights.len() != cfg.layout().total() {
        return Err(Error::ConfigMismatch(format!(
            "{} weights for a network needing {}",
            weights.len(),
            cfg.layout().total()
        )));
    }
    weights.check_finite()
}

fn trace(cfg: &NetConfig, weights: &Weights, patch: &Patch) -> Result<Trace> {
    check_inputs(cfg, weights, patch)?;
    let p = Params {
        w: weights.as_slice(),
        cfg,
    };
    let input = patch.data().to_vec();
    let (hidden_pre, hidden_post, raw) = match cfg.architecture {
        Architecture::FcOnly => {
            let h = dense_forward(&input, p.seg("fc1.weight"), p.seg("fc1.bias"));
            check(&h, "fc1")?;
            let a = relu(&h);
            let raw = dense_forward(&a, p.seg("fc2.weight"), p.seg("fc2.bias"));
            check(&raw, "fc2")?;
            (vec![h], vec![a], raw)
        }
        Architecture::Conv => {
            let (g1, g2) = conv_geoms(cfg);
            let z1 = g1.forward(&input, p.seg("conv1.weight"), p.seg("conv1.bias"));
            check(&z1, "conv1")?;
            let a1 = relu(&z1);
            let z2 = g2.forward(&a1, p.seg("conv2.weight"), p.seg("conv2.bias"));
            check(&z2, "conv2")?;
            let a2 = relu(&z2);
            let raw = dense_forward(&a2, p.seg("fc.weight"), p.seg("fc.bias"));
            check(&raw, "fc")?;
            (vec![z1, z2], vec![a1, a2], raw)
        }
    };
    let raw_norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
    let denom = if raw_norm < NORM_EPSILON {
        raw_norm + NORM_EPSILON
    } else {
        raw_norm
    };
    let embedding: Vec<f64> = raw.iter().map(|x| x / denom).collect();
    check(&embedding, "l2_normalize")?;
    Ok(Trace {
        input,
        hidden_pre,
        hidden_post,
        raw,
        raw_norm,
        embedding,
    })
}

/// Embed one patch.
pub fn forward(cfg: &NetConfig, weights: &Weights, patch: &Patch) -> Result<EmbeddingVec> {
    trace(cfg, weights, patch).map(|t| t.embedding())
}

/// Forward pass that keeps every intermediate value.
pub fn forward_trace(cfg: &NetConfig, weights: &Weights, patch: &Patch) -> Result<Trace> {
    trace(cfg, weights, patch)
}

/// Backpropagate `d_embedding` (gradient w.r.t. the normalized output)
/// through one traced pass, accumulating into `grad`.
fn backprop(cfg: &NetConfig, weights: &Weights, t: &Trace, d_embedding: &[f64], grad: &mut [f64]) {
    // through y = z / n', with n' = |z| (+ eps when |z| is tiny)
    let n = t.raw_norm;
    let denom = if n < NORM_EPSILON { n + NORM_EPSILON } else { n };
    let gz: f64 = d_embedding.iter().zip(&t.raw).map(|(g, z)| g * z).sum();
    let d_raw: Vec<f64> = if n > 0.0 {
        d_embedding
            .iter()
            .zip(&t.raw)
            .map(|(g, z)| g / denom - z * gz / (n * denom * denom))
            .collect()
    } else {
        d_embedding.iter().map(|g| g / denom).collect()
    };

    let layout = cfg.layout();
    let w = weights.as_slice();
    let range = |name: &str| {
        let s = layout.segment(name).expect("segment exists for architecture");
        s.offset..s.offset + s.len
    };
    // split the gradient buffer into disjoint per-segment slices
    let mut slices: Vec<&mut [f64]> = Vec::with_capacity(layout.segments.len());
    let mut rest = grad;
    for s in &layout.segments {
        let (head, tail) = rest.split_at_mut(s.len);
        slices.push(head);
        rest = tail;
    }
    match cfg.architecture {
        Architecture::FcOnly => {
            let [dw1, db1, dw2, db2] = <[&mut [f64]; 4]>::try_from(slices).expect("four segments");
            let mut d_h = dense_backward(&t.hidden_post[0], &w[range("fc2.weight")], &d_raw, dw2, db2, true)
                .expect("input gradient requested");
            relu_mask(&mut d_h, &t.hidden_pre[0]);
            dense_backward(&t.input, &w[range("fc1.weight")], &d_h, dw1, db1, false);
        }
        Architecture::Conv => {
            let [dk1, db1, dk2, db2, dwf, dbf] = <[&mut [f64]; 6]>::try_from(slices).expect("six segments");
            let (g1, g2) = conv_geoms(cfg);
            let mut d_a2 = dense_backward(&t.hidden_post[1], &w[range("fc.weight")], &d_raw, dwf, dbf, true)
                .expect("input gradient requested");
            relu_mask(&mut d_a2, &t.hidden_pre[1]);
            let mut d_a1 = g2
                .backward(&t.hidden_post[0], &w[range("conv2.weight")], &d_a2, dk2, db2, true)
                .expect("input gradient requested");
            relu_mask(&mut d_a1, &t.hidden_pre[0]);
            g1.backward(&t.input, &w[range("conv1.weight")], &d_a1, dk1, db1, false);
        }
    }
}

/// Loss of one triplet and, when the hinge is active, its gradient.
fn triplet_term(cfg: &NetConfig, weights: &Weights, t: &Triplet) -> Result<(f64, Option<Vec<f64>>)> {
    let ta = trace(cfg, weights, &t.anchor)?;
    let tp = trace(cfg, weights, &t.positive)?;
    let tn = trace(cfg, weights, &t.negative)?;
    let (a, p, n) = (&ta.embedding, &tp.embedding, &tn.embedding);
    let d_ap: f64 = a.iter().zip(p).map(|(x, y)| (x - y) * (x - y)).sum();
    let d_an: f64 = a.iter().zip(n).map(|(x, y)| (x - y) * (x - y)).sum();
    let loss = hinge(d_ap, d_an, cfg.margin);
    if !loss.is_finite() {
        return Err(Error::NonFinite { layer: "triplet_loss" });
    }
    if loss <= 0.0 {
        return Ok((0.0, None));
    }
    // dL/da = 2(n - p), dL/dp = -2(a - p), dL/dn = 2(a - n)
    let ga: Vec<f64> = n.iter().zip(p).map(|(n, p)| 2.0 * (n - p)).collect();
    let gp: Vec<f64> = a.iter().zip(p).map(|(a, p)| -2.0 * (a - p)).collect();
    let gn: Vec<f64> = a.iter().zip(n).map(|(a, n)| 2.0 * (a - n)).collect();
    let mut grad = vec![0.0; weights.len()];
    backprop(cfg, weights, &ta, &ga, &mut grad);
    backprop(cfg, weights, &tp, &gp, &mut grad);
    backprop(cfg, weights, &tn, &gn, &mut grad);
    Ok((loss, Some(grad)))
}

/// Mean triplet loss over `batch` and its gradient w.r.t. the shared
/// weights. Per-triplet terms may be computed in parallel; they are summed
/// in batch order.
pub fn loss_and_gradient<T>(cfg: &NetConfig, weights: &Weights, batch: &[T]) -> Result<(f64, Vec<f64>)>
where
    T: std::borrow::Borrow<Triplet> + Sync,
{
    if batch.is_empty() {
        return Err(Error::Validation("empty triplet batch".into()));
    }
    let terms: Vec<(f64, Option<Vec<f64>>)> = batch
        .par_iter()
        .map(|t| triplet_term(cfg, weights, t.borrow()))
        .collect::<Result<_>>()?;
    let scale = 1.0 / batch.len() as f64;
    let mut grad = vec![0.0; weights.len()];
    let mut loss = 0.0;
    for (l, g) in terms {
        loss += l;
        if let Some(g) = g {
            for (acc, v) in grad.iter_mut().zip(g) {
                *acc += v;
            }
        }
    }
    for g in &mut grad {
        *g *= scale;
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite { layer: "gradient" });
    }
    Ok((loss * scale, grad))
}

/// Central finite-difference estimate of the mean-loss gradient, one
/// weight at a time. Slow; meant for checking [`loss_and_gradient`].
pub fn numerical_gradient<T>(cfg: &NetConfig, weights: &Weights, batch: &[T], step: f64) -> Result<Vec<f64>>
where
    T: std::borrow::Borrow<Triplet> + Sync,
{
    let loss = |w: &Weights| -> Result<f64> {
        let mut total = 0.0;
        for t in batch {
            let t = t.borrow();
            let a = trace(cfg, w, &t.anchor)?.embedding;
            let p = trace(cfg, w, &t.positive)?.embedding;
            let n = trace(cfg, w, &t.negative)?.embedding;
            let d_ap: f64 = a.iter().zip(&p).map(|(x, y)| (x - y) * (x - y)).sum();
            let d_an: f64 = a.iter().zip(&n).map(|(x, y)| (x - y) * (x - y)).sum();
            total += hinge(d_ap, d_an, cfg.margin);
        }
        Ok(total / batch.len() as f64)
    };
    (0..weights.len())
        .into_par_iter()
        .map(|i| {
            let mut w = weights.clone();
            let x = w.as_slice()[i];
            w.as_mut_slice()[i] = x + step;
            let up = loss(&w)?;
            w.as_mut_slice()[i] = x - step;
            let down = loss(&w)?;
            Ok((up - down) / (2.0 * step))
        })
        .collect()
}

/// Alias kept for symmetry with [`forward`].
pub fn backward(cfg: &NetConfig, weights: &Weights, batch: &[Triplet]) -> Result<(f64, Vec<f64>)> {
    loss_and_gradient(cfg, weights, batch)
}

/// Glorot-uniform weights, zero biases.
pub fn init_weights(cfg: &NetConfig, seed: u64) -> Result<Weights> {
    cfg.validate()?;
    let layout = cfg.layout();
    let mut data = vec![0.0; layout.total()];
    let p = cfg.patch_resolution;
    let fans: Vec<(&str, usize, usize)> = match cfg.architecture {
        Architecture::FcOnly => vec![
            ("fc1.weight", p * p, cfg.hidden_units),
            ("fc2.weight", cfg.hidden_units, cfg.embedding_dim),
        ],
        Architecture::Conv => {
            let s2 = conv_out_size(conv_out_size(p));
            let k1 = CONV1_KERNEL * CONV1_KERNEL;
            let k2 = CONV2_KERNEL * CONV2_KERNEL;
            vec![
                ("conv1.weight", k1, cfg.conv1_channels * k1),
                ("conv2.weight", cfg.conv1_channels * k2, cfg.conv2_channels * k2),
                ("fc.weight", cfg.conv2_channels * s2 * s2, cfg.embedding_dim),
            ]
        }
    };
    for (i, (name, fan_in, fan_out)) in fans.into_iter().enumerate() {
        let s = layout.segment(name).expect("segment exists");
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let mut rng = rng_for(seed, &[0x1417, i as u64]);
        for v in &mut data[s.offset..s.offset + s.len] {
            *v = rng.random_range(-limit..limit);
        }
    }
    Weights::new(cfg, data)
}

/// A configuration bundled with its trained weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: NetConfig,
    pub weights: Weights,
}

impl Model {
    pub fn new(config: NetConfig, weights: Weights) -> Result<Self> {
        config.validate()?;
        if weights.len() != config.layout().total() {
            return Err(Error::ConfigMismatch(format!(
                "{} weights for a network needing {}",
                weights.len(),
                config.layout().total()
            )));
        }
        Ok(Self { config, weights })
    }

    pub fn embed(&self, patch: &Patch) -> Result<EmbeddingVec> {
        forward(&self.config, &self.weights, patch)
    }

    pub fn embed_all(&self, patches: &[Patch]) -> Result<Vec<EmbeddingVec>> {
        patches.par_iter().map(|p| self.embed(p)).collect()
    }
}
