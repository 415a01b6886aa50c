//! A tanh MLP encoder producing an embedding that feeds two linear heads:
//! the standard classifier and the class-balanced classifier.
//!
//! ```text
//! x ─▶ tanh(W1 x + b1) ─▶ tanh(W2 · + b2) ─▶ e = tanh(W3 · + b3) ─┬─▶ head_std(e)
//!                                                                  └─▶ head_bal(e)
//! ```
//!
//! Backward passes are written by hand and checked against finite
//! differences in the tests below and in the acceptance suite.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::numcore::Mat;

const CKPT_TAG: &str = "semiforge-ckpt v1";

/// Layer sizes of the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelShape {
    pub d: usize,
    pub hidden: usize,
    pub embed: usize,
    pub k: usize,
}

impl ModelShape {
    pub fn new(d: usize, k: usize) -> Self {
        ModelShape { d, hidden: 64, embed: 16, k }
    }
}

/// Affine map `W x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: Mat,
    pub bias: Vec<f64>,
}

impl Layer {
    fn zeros(out_dim: usize, in_dim: usize) -> Self {
        Layer { weight: Mat::zeros(out_dim, in_dim), bias: vec![0.0; out_dim] }
    }

    fn init(out_dim: usize, in_dim: usize, rng: &mut impl Rng) -> Self {
        let std = 1.0 / (in_dim as f64).sqrt();
        let data = (0..out_dim * in_dim)
            .map(|_| std * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Layer {
            weight: Mat::from_vec(out_dim, in_dim, data).expect("sized buffer"),
            bias: vec![0.0; out_dim],
        }
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut z = self.weight.matvec(x);
        for (v, b) in z.iter_mut().zip(&self.bias) {
            *v += b;
        }
        z
    }

    fn num_params(&self) -> usize {
        self.weight.data().len() + self.bias.len()
    }

    fn accumulate(&mut self, upstream: &[f64], input: &[f64]) {
        self.weight.add_outer(upstream, input);
        for (b, u) in self.bias.iter_mut().zip(upstream) {
            *b += u;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub shape: ModelShape,
    pub enc1: Layer,
    pub enc2: Layer,
    pub embed: Layer,
    pub head_std: Layer,
    pub head_bal: Layer,
}

/// Gradients share the parameter layout.
pub type Gradients = ModelParams;

/// Names used for checkpoint blocks, in layer order.
const LAYER_NAMES: [&str; 5] = ["enc1", "enc2", "embed", "head_std", "head_bal"];

impl ModelParams {
    pub fn zeros(shape: ModelShape) -> Self {
        ModelParams {
            shape,
            enc1: Layer::zeros(shape.hidden, shape.d),
            enc2: Layer::zeros(shape.hidden, shape.hidden),
            embed: Layer::zeros(shape.embed, shape.hidden),
            head_std: Layer::zeros(shape.k, shape.embed),
            head_bal: Layer::zeros(shape.k, shape.embed),
        }
    }

    /// Gaussian weights with std `1/sqrt(fan_in)`, zero biases.
    pub fn init(shape: ModelShape, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ModelParams {
            shape,
            enc1: Layer::init(shape.hidden, shape.d, &mut rng),
            enc2: Layer::init(shape.hidden, shape.hidden, &mut rng),
            embed: Layer::init(shape.embed, shape.hidden, &mut rng),
            head_std: Layer::init(shape.k, shape.embed, &mut rng),
            head_bal: Layer::init(shape.k, shape.embed, &mut rng),
        }
    }

    fn layers(&self) -> [&Layer; 5] {
        [&self.enc1, &self.enc2, &self.embed, &self.head_std, &self.head_bal]
    }

    fn layers_mut(&mut self) -> [&mut Layer; 5] {
        [
            &mut self.enc1,
            &mut self.enc2,
            &mut self.embed,
            &mut self.head_std,
            &mut self.head_bal,
        ]
    }

    pub fn num_params(&self) -> usize {
        self.layers().iter().map(|l| l.num_params()).sum()
    }

    /// All parameters in a fixed order: per layer, weights then biases.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in self.layers() {
            out.extend_from_slice(l.weight.data());
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn assign_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::invalid(format!(
                "flat parameter vector has {} entries, model has {}",
                flat.len(),
                self.num_params()
            )));
        }
        let mut offset = 0;
        for l in self.layers_mut() {
            let n = l.weight.data().len();
            l.weight.data_mut().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
            let n = l.bias.len();
            l.bias.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.layers()
            .iter()
            .all(|l| l.weight.all_finite() && l.bias.iter().all(|b| b.is_finite()))
    }

    /// `self += scale · other`
    pub fn add_scaled(&mut self, other: &ModelParams, scale: f64) {
        for (a, b) in self.layers_mut().into_iter().zip(other.layers()) {
            for (x, y) in a.weight.data_mut().iter_mut().zip(b.weight.data()) {
                *x += scale * y;
            }
            for (x, y) in a.bias.iter_mut().zip(&b.bias) {
                *x += scale * y;
            }
        }
    }

    /// Sum of squared entries of the balanced head.
    pub fn head_bal_sq_norm(&self) -> f64 {
        let l = &self.head_bal;
        l.weight.data().iter().chain(&l.bias).map(|v| v * v).sum()
    }
}

/// Cached activations of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub input: Vec<f64>,
    pub hidden1: Vec<f64>,
    pub hidden2: Vec<f64>,
    pub embedding: Vec<f64>,
    pub logits_std: Vec<f64>,
    pub logits_bal: Vec<f64>,
}

fn tanh_in_place(v: &mut [f64]) {
    for x in v {
        *x = x.tanh();
    }
}

pub fn forward(params: &ModelParams, x: &[f64]) -> Result<ForwardTrace> {
    if x.len() != params.shape.d {
        return Err(Error::invalid(format!(
            "input has {} features, model expects {}",
            x.len(),
            params.shape.d
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("input contains non-finite values"));
    }
    let mut hidden1 = params.enc1.apply(x);
    tanh_in_place(&mut hidden1);
    let mut hidden2 = params.enc2.apply(&hidden1);
    tanh_in_place(&mut hidden2);
    let mut embedding = params.embed.apply(&hidden2);
    tanh_in_place(&mut embedding);
    let logits_std = params.head_std.apply(&embedding);
    let logits_bal = params.head_bal.apply(&embedding);
    Ok(ForwardTrace { input: x.to_vec(), hidden1, hidden2, embedding, logits_std, logits_bal })
}

/// Gradient of a scalar loss with respect to one sample's network outputs.
/// Absent entries are treated as zero.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OutputGrads {
    pub logits_std: Option<Vec<f64>>,
    pub logits_bal: Option<Vec<f64>>,
    pub embedding: Option<Vec<f64>>,
}

impl OutputGrads {
    pub fn is_zero(&self) -> bool {
        let z = |v: &Option<Vec<f64>>| v.as_ref().is_none_or(|g| g.iter().all(|x| *x == 0.0));
        z(&self.logits_std) && z(&self.logits_bal) && z(&self.embedding)
    }

    fn add_to(slot: &mut Option<Vec<f64>>, g: &[f64]) {
        match slot {
            Some(v) => {
                for (a, b) in v.iter_mut().zip(g) {
                    *a += b;
                }
            }
            None => *slot = Some(g.to_vec()),
        }
    }

    pub fn add_logits_std(&mut self, g: &[f64]) {
        Self::add_to(&mut self.logits_std, g);
    }

    pub fn add_logits_bal(&mut self, g: &[f64]) {
        Self::add_to(&mut self.logits_bal, g);
    }

    pub fn add_embedding(&mut self, g: &[f64]) {
        Self::add_to(&mut self.embedding, g);
    }
}

fn check_len(name: &str, v: &[f64], expect: usize) -> Result<()> {
    if v.len() != expect {
        return Err(Error::Inconsistent(format!(
            "{name} has length {}, expected {expect}",
            v.len()
        )));
    }
    Ok(())
}

/// Accumulates the parameter gradient of one sample into `grads`.
pub fn backward_into(
    params: &ModelParams,
    trace: &ForwardTrace,
    out: &OutputGrads,
    grads: &mut Gradients,
) -> Result<()> {
    let s = params.shape;
    check_len("trace input", &trace.input, s.d)?;
    check_len("trace hidden1", &trace.hidden1, s.hidden)?;
    check_len("trace hidden2", &trace.hidden2, s.hidden)?;
    check_len("trace embedding", &trace.embedding, s.embed)?;
    if grads.shape != s {
        return Err(Error::Inconsistent("gradient buffer shape differs from parameters".into()));
    }
    if out.is_zero() {
        return Ok(());
    }

    let mut d_embed = vec![0.0; s.embed];
    if let Some(g) = &out.logits_std {
        check_len("standard-head gradient", g, s.k)?;
        grads.head_std.accumulate(g, &trace.embedding);
        for (d, v) in d_embed.iter_mut().zip(params.head_std.weight.matvec_t(g)) {
            *d += v;
        }
    }
    if let Some(g) = &out.logits_bal {
        check_len("balanced-head gradient", g, s.k)?;
        grads.head_bal.accumulate(g, &trace.embedding);
        for (d, v) in d_embed.iter_mut().zip(params.head_bal.weight.matvec_t(g)) {
            *d += v;
        }
    }
    if let Some(g) = &out.embedding {
        check_len("embedding gradient", g, s.embed)?;
        for (d, v) in d_embed.iter_mut().zip(g) {
            *d += v;
        }
    }

    // Through the three tanh layers.
    let d_pre3: Vec<f64> = d_embed
        .iter()
        .zip(&trace.embedding)
        .map(|(g, e)| g * (1.0 - e * e))
        .collect();
    grads.embed.accumulate(&d_pre3, &trace.hidden2);
    let d_h2 = params.embed.weight.matvec_t(&d_pre3);
    let d_pre2: Vec<f64> = d_h2
        .iter()
        .zip(&trace.hidden2)
        .map(|(g, h)| g * (1.0 - h * h))
        .collect();
    grads.enc2.accumulate(&d_pre2, &trace.hidden1);
    let d_h1 = params.enc2.weight.matvec_t(&d_pre2);
    let d_pre1: Vec<f64> = d_h1
        .iter()
        .zip(&trace.hidden1)
        .map(|(g, h)| g * (1.0 - h * h))
        .collect();
    grads.enc1.accumulate(&d_pre1, &trace.input);
    Ok(())
}

/// Parameter gradient summed over a batch of samples.
pub fn backward(
    params: &ModelParams,
    traces: &[ForwardTrace],
    out: &[OutputGrads],
) -> Result<Gradients> {
    if traces.len() != out.len() {
        return Err(Error::Inconsistent(format!(
            "{} traces but {} output gradients",
            traces.len(),
            out.len()
        )));
    }
    let mut grads = ModelParams::zeros(params.shape);
    for (t, g) in traces.iter().zip(out) {
        backward_into(params, t, g, &mut grads)?;
    }
    Ok(grads)
}

/// Momentum SGD with L2 weight decay folded into the velocity.
#[derive(Debug, Clone, PartialEq)]
pub struct OptState {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: ModelParams,
}

impl OptState {
    pub fn new(shape: ModelShape, lr: f64, momentum: f64, weight_decay: f64) -> Self {
        OptState { lr, momentum, weight_decay, velocity: ModelParams::zeros(shape) }
    }
}

/// `v ← m·v + g + wd·θ;  θ ← θ − lr·v`
pub fn sgd_step(params: &mut ModelParams, grads: &Gradients, opt: &mut OptState) -> Result<()> {
    if grads.shape != params.shape || opt.velocity.shape != params.shape {
        return Err(Error::Inconsistent("optimizer buffers do not match parameter shapes".into()));
    }
    let (lr, m, wd) = (opt.lr, opt.momentum, opt.weight_decay);
    let update = |theta: &mut [f64], g: &[f64], v: &mut [f64]| {
        for ((t, g), v) in theta.iter_mut().zip(g).zip(v.iter_mut()) {
            *v = m * *v + g + wd * *t;
            *t -= lr * *v;
        }
    };
    for ((p, g), v) in params
        .layers_mut()
        .into_iter()
        .zip(grads.layers())
        .zip(opt.velocity.layers_mut())
    {
        update(p.weight.data_mut(), g.weight.data(), v.weight.data_mut());
        update(&mut p.bias, &g.bias, &mut v.bias);
    }
    Ok(())
}

pub fn checkpoint_to_string(params: &ModelParams) -> String {
    let s = params.shape;
    let mut out = String::new();
    let _ = writeln!(out, "{CKPT_TAG}");
    let _ = writeln!(out, "shape d={} hidden={} embed={} k={}", s.d, s.hidden, s.embed, s.k);
    let mut block = |name: &str, rows: usize, cols: usize, data: &[f64]| {
        let _ = writeln!(out, "block {name} {rows} {cols}");
        for r in 0..rows {
            let row: Vec<String> = data[r * cols..(r + 1) * cols].iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "{}", row.join(" "));
        }
    };
    for (name, l) in LAYER_NAMES.iter().zip(params.layers()) {
        block(&format!("{name}.weight"), l.weight.rows(), l.weight.cols(), l.weight.data());
        block(&format!("{name}.bias"), 1, l.bias.len(), &l.bias);
    }
    out
}

pub fn parse_checkpoint(text: &str) -> Result<ModelParams> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    match lines.next() {
        Some((_, l)) if l.trim() == CKPT_TAG => {}
        _ => return Err(Error::parse_line(1, format!("expected `{CKPT_TAG}` header"))),
    }
    let (lineno, shape_line) = lines.next().ok_or_else(|| Error::parse_line(2, "missing shape line"))?;
    let mut dims = [None; 4];
    let fields = shape_line
        .strip_prefix("shape")
        .ok_or_else(|| Error::parse_line(lineno, "expected `shape` line"))?;
    for f in fields.split_whitespace() {
        let (k, v) = f.split_once('=').ok_or_else(|| Error::parse_line(lineno, "malformed shape field"))?;
        let v: usize = v.parse().map_err(|_| Error::parse_line(lineno, "bad shape value"))?;
        let slot = match k {
            "d" => 0,
            "hidden" => 1,
            "embed" => 2,
            "k" => 3,
            _ => return Err(Error::parse_line(lineno, format!("unknown shape field `{k}`"))),
        };
        dims[slot] = Some(v);
    }
    let [Some(d), Some(hidden), Some(embed), Some(k)] = dims else {
        return Err(Error::parse_line(lineno, "shape line must define d, hidden, embed and k"));
    };
    let mut params = ModelParams::zeros(ModelShape { d, hidden, embed, k });

    let mut filled = 0usize;
    while let Some((lineno, line)) = lines.next() {
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        let [tag, name, rows, cols] = parts[..] else {
            return Err(Error::parse_line(lineno, "expected `block <name> <rows> <cols>`"));
        };
        if tag != "block" {
            return Err(Error::parse_line(lineno, "expected `block <name> <rows> <cols>`"));
        }
        let rows: usize = rows.parse().map_err(|_| Error::parse_line(lineno, "bad row count"))?;
        let cols: usize = cols.parse().map_err(|_| Error::parse_line(lineno, "bad column count"))?;
        let (layer_name, part) = name
            .split_once('.')
            .ok_or_else(|| Error::parse_line(lineno, format!("bad block name `{name}`")))?;
        let idx = LAYER_NAMES
            .iter()
            .position(|n| *n == layer_name)
            .ok_or_else(|| Error::parse_line(lineno, format!("unknown layer `{layer_name}`")))?;
        let layer = params.layers_mut().into_iter().nth(idx).expect("index from LAYER_NAMES");
        let target: &mut [f64] = match part {
            "weight" if rows == layer.weight.rows() && cols == layer.weight.cols() => layer.weight.data_mut(),
            "bias" if rows == 1 && cols == layer.bias.len() => &mut layer.bias,
            _ => return Err(Error::parse_line(lineno, format!("block `{name}` has unexpected shape {rows}x{cols}"))),
        };
        let mut values = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let (ln, row) = lines.next().ok_or_else(|| Error::parse_line(lineno, "truncated block"))?;
            for tok in row.split_whitespace() {
                let v: f64 = tok.parse().map_err(|_| Error::parse_line(ln, format!("bad value `{tok}`")))?;
                if !v.is_finite() {
                    return Err(Error::parse_line(ln, "non-finite parameter"));
                }
                values.push(v);
            }
        }
        if values.len() != target.len() {
            return Err(Error::parse_line(lineno, format!("block `{name}` has {} values", values.len())));
        }
        target.copy_from_slice(&values);
        filled += 1;
    }
    if filled != 2 * LAYER_NAMES.len() {
        return Err(Error::Parse {
            location: "end of file".into(),
            message: format!("expected {} blocks, found {filled}", 2 * LAYER_NAMES.len()),
        });
    }
    Ok(params)
}

pub fn save_checkpoint(params: &ModelParams, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, checkpoint_to_string(params)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ModelParams> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_checkpoint(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::{grad_check, log_softmax_raw, softmax_raw, FD_STEP};

    fn small() -> ModelShape {
        ModelShape { d: 4, hidden: 6, embed: 5, k: 3 }
    }

    fn sample_input(seed: u64, d: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..d).map(|_| rng.sample(StandardNormal)).collect()
    }

    // A scalar touching all three outputs: CE on both heads plus a linear
    // functional of the embedding.
    fn probe_loss(p: &ModelParams, x: &[f64], probe: &[f64]) -> f64 {
        let t = forward(p, x).unwrap();
        -log_softmax_raw(&t.logits_std, 1.0)[1] - log_softmax_raw(&t.logits_bal, 1.0)[2]
            + t.embedding.iter().zip(probe).map(|(a, b)| a * b).sum::<f64>()
    }

    fn probe_grads(p: &ModelParams, x: &[f64], probe: &[f64]) -> (ForwardTrace, OutputGrads) {
        let t = forward(p, x).unwrap();
        let mut gs = softmax_raw(&t.logits_std, 1.0);
        gs[1] -= 1.0;
        let mut gb = softmax_raw(&t.logits_bal, 1.0);
        gb[2] -= 1.0;
        let g = OutputGrads {
            logits_std: Some(gs),
            logits_bal: Some(gb),
            embedding: Some(probe.to_vec()),
        };
        (t, g)
    }

    #[test]
    fn zero_model_gives_uniform_predictions() {
        let p = ModelParams::zeros(small());
        let t = forward(&p, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!(t.logits_std.iter().chain(&t.logits_bal).all(|v| *v == 0.0));
        let probs = softmax_raw(&t.logits_std, 1.0);
        assert!(probs.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn forward_is_deterministic_and_validates() {
        let p = ModelParams::init(small(), 1);
        let x = sample_input(2, 4);
        assert_eq!(forward(&p, &x).unwrap(), forward(&p, &x).unwrap());
        assert!(forward(&p, &[1.0, 2.0]).is_err());
        assert!(forward(&p, &[1.0, 2.0, f64::NAN, 0.0]).is_err());
    }

    #[test]
    fn backward_matches_finite_differences() {
        let p = ModelParams::init(small(), 7);
        let x = sample_input(8, 4);
        let probe = [0.3, -0.2, 0.5, 0.1, -0.4];
        let (t, g) = probe_grads(&p, &x, &probe);
        let grads = backward(&p, &[t], &[g]).unwrap();
        let flat = p.flatten();
        let mut scratch = p.clone();
        let err = grad_check(
            |theta| {
                scratch.assign_flat(theta).unwrap();
                probe_loss(&scratch, &x, &probe)
            },
            &flat,
            &grads.flatten(),
            FD_STEP,
        )
        .unwrap();
        assert!(err < 1e-4, "max relative error {err}");
    }

    #[test]
    fn zero_output_gradient_gives_zero_parameter_gradient() {
        let p = ModelParams::init(small(), 3);
        let t = forward(&p, &sample_input(4, 4)).unwrap();
        let g = backward(&p, &[t], &[OutputGrads::default()]).unwrap();
        assert!(g.flatten().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn backward_is_linear() {
        let p = ModelParams::init(small(), 5);
        let x = sample_input(6, 4);
        let (t, g1) = probe_grads(&p, &x, &[0.1, 0.2, 0.3, 0.4, 0.5]);
        let g2 = OutputGrads {
            logits_std: Some(vec![0.2, -0.1, 0.7]),
            logits_bal: None,
            embedding: Some(vec![-1.0, 0.0, 0.5, 0.25, 2.0]),
        };
        let (a, b) = (0.7, -1.9);
        let scale = |g: &OutputGrads, c: f64| OutputGrads {
            logits_std: g.logits_std.as_ref().map(|v| v.iter().map(|x| c * x).collect()),
            logits_bal: g.logits_bal.as_ref().map(|v| v.iter().map(|x| c * x).collect()),
            embedding: g.embedding.as_ref().map(|v| v.iter().map(|x| c * x).collect()),
        };
        let mut combined = scale(&g1, a);
        let s2 = scale(&g2, b);
        combined.add_logits_std(s2.logits_std.as_ref().unwrap());
        combined.add_embedding(s2.embedding.as_ref().unwrap());
        let lhs = backward(&p, &[t.clone()], &[combined]).unwrap().flatten();
        let r1 = backward(&p, &[t.clone()], &[g1]).unwrap().flatten();
        let r2 = backward(&p, &[t], &[g2]).unwrap().flatten();
        for ((l, x), y) in lhs.iter().zip(&r1).zip(&r2) {
            assert!((l - (a * x + b * y)).abs() < 1e-9);
        }
    }

    #[test]
    fn batch_gradient_is_sum_of_per_sample() {
        let p = ModelParams::init(small(), 9);
        let probe = [0.2, 0.2, -0.3, 0.0, 0.1];
        let pairs: Vec<_> = (0..4).map(|i| probe_grads(&p, &sample_input(20 + i, 4), &probe)).collect();
        let traces: Vec<_> = pairs.iter().map(|(t, _)| t.clone()).collect();
        let outs: Vec<_> = pairs.iter().map(|(_, g)| g.clone()).collect();
        let batch = backward(&p, &traces, &outs).unwrap().flatten();
        let mut sum = vec![0.0; batch.len()];
        for (t, g) in pairs {
            for (s, v) in sum.iter_mut().zip(backward(&p, &[t], &[g]).unwrap().flatten()) {
                *s += v;
            }
        }
        for (a, b) in batch.iter().zip(&sum) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn backward_rejects_mismatched_trace() {
        let p = ModelParams::init(small(), 1);
        let other = ModelParams::init(ModelShape { d: 4, hidden: 7, embed: 5, k: 3 }, 1);
        let t = forward(&other, &sample_input(1, 4)).unwrap();
        let g = OutputGrads { logits_std: Some(vec![1.0, 0.0, 0.0]), ..Default::default() };
        assert!(matches!(backward(&p, &[t], &[g]), Err(Error::Inconsistent(_))));
        assert!(backward(&p, &[], &[OutputGrads::default()]).is_err());
    }

    #[test]
    fn sgd_zero_lr_and_plain_descent() {
        let mut p = ModelParams::init(small(), 2);
        let before = p.clone();
        let mut g = ModelParams::zeros(small());
        g.assign_flat(&vec![0.5; p.num_params()]).unwrap();
        let mut opt = OptState::new(small(), 0.0, 0.9, 5e-4);
        sgd_step(&mut p, &g, &mut opt).unwrap();
        assert_eq!(p, before);

        let mut opt = OptState::new(small(), 0.1, 0.0, 0.0);
        sgd_step(&mut p, &g, &mut opt).unwrap();
        for (a, b) in p.flatten().iter().zip(before.flatten()) {
            assert!((a - (b - 0.05)).abs() < 1e-15);
        }
    }

    #[test]
    fn sgd_descends_a_quadratic_bowl() {
        // L(θ) = ½‖θ − c‖², gradient θ − c.
        let mut p = ModelParams::init(small(), 4);
        let target: Vec<f64> = (0..p.num_params()).map(|i| (i as f64 * 0.37).sin()).collect();
        let loss = |p: &ModelParams| -> f64 {
            p.flatten().iter().zip(&target).map(|(a, b)| 0.5 * (a - b) * (a - b)).sum()
        };
        let mut opt = OptState::new(small(), 0.01, 0.5, 0.0);
        let mut prev = loss(&p);
        for _ in 0..100 {
            let mut g = ModelParams::zeros(small());
            let diff: Vec<f64> = p.flatten().iter().zip(&target).map(|(a, b)| a - b).collect();
            g.assign_flat(&diff).unwrap();
            sgd_step(&mut p, &g, &mut opt).unwrap();
            let cur = loss(&p);
            assert!(cur < prev);
            prev = cur;
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let p = ModelParams::init(small(), 11);
        let text = checkpoint_to_string(&p);
        assert!(text.starts_with("semiforge-ckpt v1\n"));
        assert_eq!(parse_checkpoint(&text).unwrap(), p);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&p, &path).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap(), p);
    }

    #[test]
    fn checkpoint_errors() {
        assert!(parse_checkpoint("semiforge-ckpt v2\n").is_err());
        let p = ModelParams::init(small(), 11);
        let text = checkpoint_to_string(&p);
        let truncated: String = text.lines().take(6).map(|l| format!("{l}\n")).collect();
        assert!(parse_checkpoint(&truncated).is_err());
        let bad = text.replacen("block enc2.bias 1 6", "block enc2.bias 1 5", 1);
        assert!(parse_checkpoint(&bad).is_err());
    }
}
