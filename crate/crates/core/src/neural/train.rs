//! Minibatch Adam training for autoencoders and frame classifiers.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::borrow::Borrow;

use super::{forward_cached, splice_row, Activation, Architecture, Cache, Mlp};
use crate::error::{Error, Result};
use crate::math::{ln, powf, sqrt};
use crate::matrix::{FeatureMatrix, Matrix};
use crate::rng::{derive_seed, derive_seed_indexed, permutation, rng_from};

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
/// Frames per chunk when evaluating full-data losses.
const EVAL_CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Loss {
    /// Mean over frames of ‖x − x̂‖², plus λ·Σ‖W‖².
    MseL2,
    /// Mean negative log-probability of the label, plus λ·Σ‖W‖².
    CrossEntropy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Drop probability for hidden units.
    pub dropout_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub l2_lambda: f64,
    pub seed: u64,
    pub loss: Loss,
    /// Fraction of utterances held out for the validation curve.
    pub validation_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            dropout_rate: 0.01,
            batch_size: 1024,
            epochs: 50,
            l2_lambda: 1e-4,
            seed: 0,
            loss: Loss::MseL2,
            validation_fraction: 0.05,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidConfig(format!("train config: {what}")));
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad("dropout_rate must be in [0, 1)");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.l2_lambda >= 0.0) {
            return bad("l2_lambda must be non-negative");
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return bad("validation_fraction must be in [0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    /// Full training-set loss before training and after every epoch.
    pub train_loss: Vec<f64>,
    /// Same for the held-out utterances; empty when nothing was held out.
    pub validation_loss: Vec<f64>,
    pub train_frames: usize,
    pub validation_frames: usize,
    pub train_utterances: usize,
    pub validation_utterances: usize,
    pub steps: usize,
}

/// Supervision for one batch: regression frames or class indices.
#[derive(Clone, Copy, Debug)]
pub enum Targets<'a> {
    Frames(&'a Matrix),
    Labels(&'a [usize]),
}

/// Frames addressed as (utterance, t), optionally spliced on the fly.
struct FrameSet<'a> {
    utts: Vec<&'a Matrix>,
    labels: Vec<usize>,
    index: Vec<(u32, u32)>,
    context: usize,
}

impl<'a> FrameSet<'a> {
    fn new(utts: Vec<&'a Matrix>, labels: Vec<usize>, context: usize) -> Self {
        let index = utts
            .iter()
            .enumerate()
            .flat_map(|(u, m)| (0..m.rows()).map(move |t| (u as u32, t as u32)))
            .collect();
        Self {
            utts,
            labels,
            index,
            context,
        }
    }

    fn len(&self) -> usize {
        self.index.len()
    }

    fn inputs(&self, idx: &[usize]) -> Matrix {
        let d = self.utts.first().map_or(0, |m| m.cols()) * (2 * self.context + 1);
        let mut x = Matrix::zeros(idx.len(), d);
        for (r, &i) in idx.iter().enumerate() {
            let (u, t) = self.index[i];
            let m = self.utts[u as usize];
            if self.context == 0 {
                x.row_mut(r).copy_from_slice(m.row(t as usize));
            } else {
                splice_row(m, t as usize, self.context, self.context, x.row_mut(r));
            }
        }
        x
    }

    fn labels(&self, idx: &[usize]) -> Vec<usize> {
        idx.iter().map(|&i| self.labels[self.index[i].0 as usize]).collect()
    }
}

fn check_loss(net: &Mlp, loss: Loss) -> Result<()> {
    let out = net.layers()[net.layers().len() - 1].activation;
    match (loss, out) {
        (Loss::CrossEntropy, Activation::Softmax) => Ok(()),
        (Loss::MseL2, a) if a != Activation::Softmax => Ok(()),
        _ => Err(Error::InvalidConfig(format!(
            "{loss:?} loss cannot train a {} output layer",
            out.name()
        ))),
    }
}

fn l2_penalty(net: &Mlp, lambda: f64) -> f64 {
    if lambda == 0.0 {
        return 0.0;
    }
    lambda
        * net
            .layers()
            .iter()
            .map(|l| l.weights.as_slice().iter().map(|w| w * w).sum::<f64>())
            .sum::<f64>()
}

/// Summed (not averaged) data loss of one batch of outputs.
fn data_loss_sum(out: &Matrix, targets: &Targets<'_>) -> f64 {
    match targets {
        Targets::Frames(y) => out
            .as_slice()
            .iter()
            .zip(y.as_slice())
            .map(|(a, b)| (a - b) * (a - b))
            .sum(),
        Targets::Labels(labels) => labels
            .iter()
            .enumerate()
            .map(|(r, &c)| -ln(out[(r, c)].max(f64::MIN_POSITIVE)))
            .sum(),
    }
}

/// Batch objective with dropout off.
#[cfg(test)]
pub(crate) fn batch_loss(net: &Mlp, x: &Matrix, targets: &Targets<'_>, lambda: f64) -> f64 {
    let out = net.run(x, net.layers().len());
    data_loss_sum(&out, targets) / x.rows() as f64 + l2_penalty(net, lambda)
}

/// Derivative of the objective with respect to one layer; shapes match the layer.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradient {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

/// Dropout-free batch objective (mean data loss plus `lambda·Σw²`) and its
/// analytic gradient, one entry per layer. MSE targets need a non-softmax
/// output layer; class labels need softmax.
pub fn objective_gradient(net: &Mlp, x: &Matrix, targets: Targets<'_>, lambda: f64) -> Result<(f64, Vec<Gradient>)> {
    net.check_input(x)?;
    if x.rows() == 0 {
        return Err(Error::Empty("gradient batch"));
    }
    match targets {
        Targets::Frames(y) => {
            check_loss(net, Loss::MseL2)?;
            if y.rows() != x.rows() || y.cols() != net.output_dim() {
                return Err(Error::ShapeMismatch(format!(
                    "targets are {}x{}, expected {}x{}",
                    y.rows(),
                    y.cols(),
                    x.rows(),
                    net.output_dim()
                )));
            }
        }
        Targets::Labels(labels) => {
            check_loss(net, Loss::CrossEntropy)?;
            if labels.len() != x.rows() {
                return Err(Error::DimMismatch {
                    expected: x.rows(),
                    found: labels.len(),
                });
            }
            if let Some(&c) = labels.iter().find(|&&c| c >= net.output_dim()) {
                return Err(Error::LabelOutOfRange {
                    label: c,
                    classes: net.output_dim(),
                });
            }
        }
    }
    let cache = forward_cached(net, x, 0.0, None);
    let loss = data_loss_sum(cache.output(), &targets) / x.rows() as f64 + l2_penalty(net, lambda);
    Ok((loss, backward(net, &cache, &targets, lambda)))
}

/// Gradients of the batch objective from a forward cache.
pub(crate) fn backward(net: &Mlp, cache: &Cache, targets: &Targets<'_>, lambda: f64) -> Vec<Gradient> {
    let layers = net.layers();
    let n = layers.len();
    let out = cache.output();
    let b = out.rows() as f64;
    let mut delta = match targets {
        Targets::Frames(y) => {
            let mut d = out.sub(y);
            for (dv, fv) in d.as_mut_slice().iter_mut().zip(cache.derivs[n - 1].as_slice()) {
                *dv *= 2.0 * fv / b;
            }
            d
        }
        Targets::Labels(labels) => {
            let mut d = out.clone();
            for (r, &c) in labels.iter().enumerate() {
                d[(r, c)] -= 1.0;
            }
            d.scale(1.0 / b);
            d
        }
    };
    let mut grads: Vec<Gradient> = Vec::with_capacity(n);
    for l in (0..n).rev() {
        let layer = &layers[l];
        let input = &cache.outputs[l];
        let mut gw = layer.weights.clone();
        gw.scale(2.0 * lambda);
        let mut gb = vec![0.0; layer.output_dim()];
        for (a_row, d_row) in input.row_iter().zip(delta.row_iter()) {
            crate::math::axpy(1.0, d_row, &mut gb);
            for (i, &a) in a_row.iter().enumerate() {
                if a != 0.0 {
                    crate::math::axpy(a, d_row, gw.row_mut(i));
                }
            }
        }
        if l > 0 {
            let deriv = &cache.derivs[l - 1];
            let mut prev = Matrix::zeros(delta.rows(), layer.input_dim());
            for r in 0..delta.rows() {
                let d_row = delta.row(r);
                let f_row = deriv.row(r);
                for (i, p) in prev.row_mut(r).iter_mut().enumerate() {
                    if f_row[i] != 0.0 {
                        *p = crate::math::dot(d_row, layer.weights.row(i)) * f_row[i];
                    }
                }
            }
            delta = prev;
        }
        grads.push(Gradient { weights: gw, bias: gb });
    }
    grads.reverse();
    grads
}

struct Adam {
    m: Vec<Gradient>,
    v: Vec<Gradient>,
    t: i32,
}

impl Adam {
    fn new(net: &Mlp) -> Self {
        let zeros = || {
            net.layers()
                .iter()
                .map(|l| Gradient {
                    weights: Matrix::zeros(l.input_dim(), l.output_dim()),
                    bias: vec![0.0; l.output_dim()],
                })
                .collect()
        };
        Self {
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }

    fn update(&mut self, net: &mut Mlp, grads: &[Gradient], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - powf(ADAM_BETA1, f64::from(self.t));
        let c2 = 1.0 - powf(ADAM_BETA2, f64::from(self.t));
        let step = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
            for (((p, &g), m), v) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                *p -= lr * (*m / c1) / (sqrt(*v / c2) + ADAM_EPS);
            }
        };
        for (((layer, g), m), v) in net.layers_mut().iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            step(
                layer.weights.as_mut_slice(),
                g.weights.as_slice(),
                m.weights.as_mut_slice(),
                v.weights.as_mut_slice(),
            );
            step(&mut layer.bias, &g.bias, &mut m.bias, &mut v.bias);
        }
    }
}

/// Full-set objective, evaluated in chunks.
fn set_loss(net: &Mlp, set: &FrameSet<'_>, targets_frames: bool, lambda: f64) -> f64 {
    let n = set.len();
    if n == 0 {
        return 0.0;
    }
    let all: Vec<usize> = (0..n).collect();
    let mut total = 0.0;
    for chunk in all.chunks(EVAL_CHUNK) {
        let x = set.inputs(chunk);
        let out = net.run(&x, net.layers().len());
        total += if targets_frames {
            data_loss_sum(&out, &Targets::Frames(&x))
        } else {
            let labels = set.labels(chunk);
            data_loss_sum(&out, &Targets::Labels(&labels))
        };
    }
    total / n as f64 + l2_penalty(net, lambda)
}

/// Whole utterances held out, chosen by seeded permutation.
fn split_utterances(n_utts: usize, fraction: f64, seed: u64) -> Vec<bool> {
    let n_val = (fraction * n_utts as f64) as usize;
    let mut held = vec![false; n_utts];
    if n_val == 0 || n_val >= n_utts {
        return held;
    }
    let mut rng = rng_from(derive_seed(seed, "validation"));
    for &u in permutation(&mut rng, n_utts).iter().take(n_val) {
        held[u] = true;
    }
    held
}

fn fit(
    mut net: Mlp,
    train: &FrameSet<'_>,
    valid: &FrameSet<'_>,
    autoencoder: bool,
    cfg: &TrainConfig,
) -> Result<(Mlp, TrainReport)> {
    if train.len() == 0 {
        return Err(Error::Empty("no training frames"));
    }
    let lambda = cfg.l2_lambda;
    let mut report = TrainReport {
        train_frames: train.len(),
        validation_frames: valid.len(),
        train_utterances: train.utts.len(),
        validation_utterances: valid.utts.len(),
        ..TrainReport::default()
    };
    let record = |net: &Mlp, report: &mut TrainReport| {
        report.train_loss.push(set_loss(net, train, autoencoder, lambda));
        if valid.len() > 0 {
            report.validation_loss.push(set_loss(net, valid, autoencoder, lambda));
        }
    };
    record(&net, &mut report);
    let mut adam = Adam::new(&net);
    for epoch in 0..cfg.epochs {
        let mut order_rng = rng_from(derive_seed_indexed(cfg.seed, "epoch-order", epoch as u64));
        let order = permutation(&mut order_rng, train.len());
        let mut drop_rng = rng_from(derive_seed_indexed(cfg.seed, "epoch-dropout", epoch as u64));
        for batch in order.chunks(cfg.batch_size) {
            let x = train.inputs(batch);
            let cache = forward_cached(&net, &x, cfg.dropout_rate, Some(&mut drop_rng));
            let grads = if autoencoder {
                backward(&net, &cache, &Targets::Frames(&x), lambda)
            } else {
                let labels = train.labels(batch);
                backward(&net, &cache, &Targets::Labels(&labels), lambda)
            };
            adam.update(&mut net, &grads, cfg.learning_rate);
            report.steps += 1;
        }
        record(&net, &mut report);
    }
    if net.layers().iter().any(|l| !l.weights.is_finite()) {
        return Err(Error::InvalidConfig("training diverged to non-finite weights".into()));
    }
    Ok((net, report))
}

fn split_sets<'a>(
    frames: &[&'a Matrix],
    labels: &[usize],
    context: usize,
    cfg: &TrainConfig,
) -> (FrameSet<'a>, FrameSet<'a>) {
    let held = split_utterances(frames.len(), cfg.validation_fraction, cfg.seed);
    let pick = |want: bool| {
        let idx: Vec<usize> = (0..frames.len()).filter(|&u| held[u] == want).collect();
        FrameSet::new(
            idx.iter().map(|&u| frames[u]).collect(),
            if labels.is_empty() {
                Vec::new()
            } else {
                idx.iter().map(|&u| labels[u]).collect()
            },
            context,
        )
    };
    (pick(false), pick(true))
}

fn check_utterances<'a>(data: impl Iterator<Item = &'a FeatureMatrix>, dim: usize) -> Result<Vec<&'a Matrix>> {
    data.map(|f| {
        if f.is_empty() {
            return Err(Error::EmptyUtterance(f.utterance_id.clone()));
        }
        if f.dim() != dim {
            return Err(Error::DimMismatch {
                expected: dim,
                found: f.dim(),
            });
        }
        Ok(&f.frames)
    })
    .collect()
}

/// Reconstruction training. With `init` the network starts from a copy of
/// it (fine-tuning); otherwise from a seeded random initialisation.
pub fn train_autoencoder<F: Borrow<FeatureMatrix>>(
    data: &[F],
    arch: &Architecture,
    cfg: &TrainConfig,
    init: Option<&Mlp>,
) -> Result<(Mlp, TrainReport)> {
    cfg.validate()?;
    arch.validate()?;
    if arch.input_dim != arch.output_dim {
        return Err(Error::DimMismatch {
            expected: arch.input_dim,
            found: arch.output_dim,
        });
    }
    let net = match init {
        Some(n) if n.architecture() != *arch => {
            return Err(Error::ShapeMismatch(
                "initial network does not match the architecture".into(),
            ))
        }
        Some(n) => n.clone(),
        None => Mlp::init(arch, cfg.seed)?,
    };
    check_loss(&net, Loss::MseL2)?;
    let frames = check_utterances(data.iter().map(Borrow::borrow), arch.input_dim)?;
    let (train, valid) = split_sets(&frames, &[], 0, cfg);
    fit(net, &train, &valid, true, cfg)
}

/// Cross-entropy training on already spliced frames.
pub fn train_classifier(
    data: &[(FeatureMatrix, usize)],
    arch: &Architecture,
    cfg: &TrainConfig,
) -> Result<(Mlp, TrainReport)> {
    classifier(data, 0, arch, cfg)
}

/// Cross-entropy training on raw frames spliced with `context` frames on
/// each side as batches are drawn, so the spliced set is never materialised.
pub fn train_classifier_spliced(
    data: &[(FeatureMatrix, usize)],
    context: usize,
    arch: &Architecture,
    cfg: &TrainConfig,
) -> Result<(Mlp, TrainReport)> {
    classifier(data, context, arch, cfg)
}

fn classifier(
    data: &[(FeatureMatrix, usize)],
    context: usize,
    arch: &Architecture,
    cfg: &TrainConfig,
) -> Result<(Mlp, TrainReport)> {
    cfg.validate()?;
    arch.validate()?;
    if arch.output_activation != Activation::Softmax {
        return Err(Error::InvalidConfig("classifier needs a softmax output".into()));
    }
    for (_, label) in data {
        if *label >= arch.output_dim {
            return Err(Error::LabelOutOfRange {
                label: *label,
                classes: arch.output_dim,
            });
        }
    }
    let raw_dim = arch.input_dim / (2 * context + 1);
    if raw_dim * (2 * context + 1) != arch.input_dim {
        return Err(Error::DimMismatch {
            expected: arch.input_dim,
            found: raw_dim * (2 * context + 1),
        });
    }
    let net = Mlp::init(arch, cfg.seed)?;
    let frames = check_utterances(data.iter().map(|(f, _)| f), raw_dim)?;
    let labels: Vec<usize> = data.iter().map(|(_, l)| *l).collect();
    let (train, valid) = split_sets(&frames, &labels, context, cfg);
    fit(net, &train, &valid, false, cfg)
}
