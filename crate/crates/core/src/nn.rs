//! Small multilayer perceptrons with Adam.
//!
//! Hidden layers are affine + ReLU + inverted dropout; the output layer is
//! affine followed by identity, sigmoid, or a row-wise softmax. Batches are
//! row-major `batch × width` slices and every matrix product goes through
//! `matrixmultiply::dgemm`.
//!
//! Each loss is paired with its natural output activation so the gradient
//! with respect to the output logits takes its simple closed form:
//!
//! | loss | output        | `∂L/∂z`                         |
//! |------|---------------|---------------------------------|
//! | MSE  | identity      | `2·mask·(y - t) / Σmask`        |
//! | BCE  | sigmoid       | `(σ(z) - t) / (B·n)`            |
//! | CCE  | softmax rows  | `(p·Σ_row t - t) / (B·rows)`    |

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Stream};

pub const FORMAT: &str = "leach-rlc-mlp";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputActivation {
    Identity,
    Sigmoid,
    /// Softmax over consecutive groups of this many outputs.
    SoftmaxRows(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Loss {
    Mse,
    Bce,
    Cce,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub layer_sizes: Vec<usize>,
    pub output: OutputActivation,
    /// Dropout after every hidden layer, training mode only.
    pub dropout: f64,
}

impl MlpSpec {
    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 || self.layer_sizes.contains(&0) {
            return Err(Error::param("layer_sizes", "need at least two non-empty layers"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::param("dropout", format!("must lie in [0, 1), got {}", self.dropout)));
        }
        if let OutputActivation::SoftmaxRows(w) = self.output {
            let out = *self.layer_sizes.last().unwrap();
            if w == 0 || !out.is_multiple_of(w) {
                return Err(Error::param("output", format!("softmax row width {w} does not divide {out}")));
            }
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    /// The loss whose gradient pairs with this output activation.
    pub fn natural_loss(&self) -> Loss {
        match self.output {
            OutputActivation::Identity => Loss::Mse,
            OutputActivation::Sigmoid => Loss::Bce,
            OutputActivation::SoftmaxRows(_) => Loss::Cce,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub loss: Loss,
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::param("learning_rate", "must be finite and >= 0"));
        }
        if self.batch_size == 0 {
            return Err(Error::param("batch_size", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Layer {
    n_in: usize,
    n_out: usize,
    /// `n_out × n_in`, row-major.
    w: Vec<f64>,
    b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
struct Adam {
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

/// Gradients laid out like the parameters: per layer, weights then biases.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    pub w: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct Mlp {
    spec: MlpSpec,
    layers: Vec<Layer>,
    adam: Adam,
    dropout_rng: Stream,
    steps: u64,
}

/// `c = a·b` with explicit strides; `a` is `m×k`, `b` is `k×n`, `c` is `m×n`
/// row-major and overwritten.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], rsa: usize, csa: usize, b: &[f64], rsb: usize, csb: usize, c: &mut [f64]) {
    debug_assert!(c.len() >= m * n);
    // SAFETY: the strides and dimensions describe in-bounds views of the
    // given slices, and `c` does not alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            0.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softmax_rows(z: &mut [f64], width: usize) {
    for row in z.chunks_mut(width) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}

struct Trace {
    /// Layer inputs (after activation and dropout), one per layer.
    inputs: Vec<Vec<f64>>,
    /// Dropout multipliers per hidden layer (empty when inactive).
    masks: Vec<Vec<f64>>,
    /// Output logits.
    logits: Vec<f64>,
}

impl Mlp {
    pub fn new(spec: MlpSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut init = rng::stream(seed, "mlp-init");
        let n_layers = spec.layer_sizes.len() - 1;
        let layers: Vec<Layer> = (0..n_layers)
            .map(|l| {
                let (n_in, n_out) = (spec.layer_sizes[l], spec.layer_sizes[l + 1]);
                // He-uniform for ReLU layers, Glorot-uniform for the output.
                let limit = if l + 1 < n_layers {
                    (6.0 / n_in as f64).sqrt()
                } else {
                    (6.0 / (n_in + n_out) as f64).sqrt()
                };
                let w = (0..n_in * n_out).map(|_| init.gen_range(-limit..limit)).collect();
                Layer { n_in, n_out, w, b: vec![0.0; n_out] }
            })
            .collect();
        let adam = Adam::for_layers(&layers);
        Ok(Self { spec, layers, adam, dropout_rng: rng::stream(seed, "mlp-dropout"), steps: 0 })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Optimiser steps taken so far.
    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Copies parameters from a network of identical shape; optimiser state
    /// is left alone.
    pub fn copy_params_from(&mut self, other: &Mlp) {
        assert_eq!(self.spec.layer_sizes, other.spec.layer_sizes);
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.w.copy_from_slice(&b.w);
            a.b.copy_from_slice(&b.b);
        }
    }

    pub fn params_equal(&self, other: &Mlp) -> bool {
        self.layers == other.layers
    }

    /// Sets every parameter to `v`.
    pub fn fill(&mut self, v: f64) {
        for l in &mut self.layers {
            l.w.iter_mut().for_each(|x| *x = v);
            l.b.iter_mut().for_each(|x| *x = v);
        }
    }

    /// Flat view of every parameter, layer by layer, weights before biases.
    pub fn params(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.w.iter().chain(&l.b).copied()).collect()
    }

    /// Overwrites every parameter in [`Mlp::params`] order.
    pub fn set_params(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.param_count() {
            return Err(Error::Dimension { context: "parameters", expected: self.param_count(), got: values.len() });
        }
        let mut it = values.iter();
        for l in &mut self.layers {
            for v in l.w.iter_mut().chain(l.b.iter_mut()) {
                *v = *it.next().expect("length checked");
            }
        }
        Ok(())
    }

    fn param_mut(&mut self, mut i: usize) -> &mut f64 {
        for l in &mut self.layers {
            if i < l.w.len() {
                return &mut l.w[i];
            }
            i -= l.w.len();
            if i < l.b.len() {
                return &mut l.b[i];
            }
            i -= l.b.len();
        }
        panic!("parameter index out of range")
    }

    fn check_batch(&self, x: &[f64], batch: usize) -> Result<()> {
        let want = batch * self.spec.input_dim();
        if x.len() != want {
            return Err(Error::Dimension { context: "mlp input", expected: want, got: x.len() });
        }
        Ok(())
    }

    fn run(&mut self, x: &[f64], batch: usize, mode: Mode) -> Trace {
        let n_layers = self.layers.len();
        let drop = if mode == Mode::Train { self.spec.dropout } else { 0.0 };
        let mut inputs = Vec::with_capacity(n_layers);
        let mut masks = Vec::with_capacity(n_layers - 1);
        let mut cur = x.to_vec();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = vec![0.0; batch * layer.n_out];
            gemm(batch, layer.n_in, layer.n_out, &cur, layer.n_in, 1, &layer.w, 1, layer.n_in, &mut z);
            for row in z.chunks_mut(layer.n_out) {
                for (v, b) in row.iter_mut().zip(&layer.b) {
                    *v += b;
                }
            }
            inputs.push(cur);
            if l + 1 == n_layers {
                return Trace { inputs, masks, logits: z };
            }
            for v in &mut z {
                *v = v.max(0.0);
            }
            if drop > 0.0 {
                let keep = 1.0 / (1.0 - drop);
                let mask: Vec<f64> =
                    (0..z.len()).map(|_| if self.dropout_rng.gen::<f64>() < drop { 0.0 } else { keep }).collect();
                for (v, m) in z.iter_mut().zip(&mask) {
                    *v *= m;
                }
                masks.push(mask);
            } else {
                masks.push(Vec::new());
            }
            cur = z;
        }
        unreachable!("at least one layer")
    }

    fn activate(&self, mut z: Vec<f64>) -> Vec<f64> {
        match self.spec.output {
            OutputActivation::Identity => {}
            OutputActivation::Sigmoid => z.iter_mut().for_each(|v| *v = sigmoid(*v)),
            OutputActivation::SoftmaxRows(w) => softmax_rows(&mut z, w),
        }
        z
    }

    /// Outputs for a batch of `batch` rows. Train mode applies dropout.
    pub fn forward_batch(&mut self, x: &[f64], batch: usize, mode: Mode) -> Result<Vec<f64>> {
        self.check_batch(x, batch)?;
        let t = self.run(x, batch, mode);
        Ok(self.activate(t.logits))
    }

    /// Eval-mode outputs for one input; does not touch any state.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.predict_batch(x, 1)
    }

    /// Eval-mode outputs for a batch; does not touch any state.
    pub fn predict_batch(&self, x: &[f64], batch: usize) -> Result<Vec<f64>> {
        self.check_batch(x, batch)?;
        let mut cur = x.to_vec();
        let n_layers = self.layers.len();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = vec![0.0; batch * layer.n_out];
            gemm(batch, layer.n_in, layer.n_out, &cur, layer.n_in, 1, &layer.w, 1, layer.n_in, &mut z);
            for row in z.chunks_mut(layer.n_out) {
                for (v, b) in row.iter_mut().zip(&layer.b) {
                    *v += b;
                }
            }
            if l + 1 < n_layers {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            cur = z;
        }
        Ok(self.activate(cur))
    }

    /// Mean loss and `∂L/∂logits` for a batch.
    fn loss_and_delta(&self, logits: &[f64], t: &[f64], loss: Loss, mask: Option<&[f64]>) -> (f64, Vec<f64>) {
        let n = logits.len();
        match (loss, self.spec.output) {
            (Loss::Mse, _) => {
                let count = mask.map_or(n as f64, |m| m.iter().sum::<f64>()).max(1.0);
                let mut l = 0.0;
                let mut d = vec![0.0; n];
                for i in 0..n {
                    let w = mask.map_or(1.0, |m| m[i]);
                    let e = logits[i] - t[i];
                    l += w * e * e;
                    d[i] = 2.0 * w * e / count;
                }
                (l / count, d)
            }
            (Loss::Bce, _) => {
                let count = n as f64;
                let mut l = 0.0;
                let mut d = vec![0.0; n];
                for i in 0..n {
                    let z = logits[i];
                    l += z.max(0.0) - z * t[i] + (-z.abs()).exp().ln_1p();
                    d[i] = (sigmoid(z) - t[i]) / count;
                }
                (l / count, d)
            }
            (Loss::Cce, OutputActivation::SoftmaxRows(w)) => {
                let rows = (n / w) as f64;
                let mut l = 0.0;
                let mut d = vec![0.0; n];
                for (r, (zr, tr)) in logits.chunks(w).zip(t.chunks(w)).enumerate() {
                    let max = zr.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let lse = max + zr.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
                    let tsum: f64 = tr.iter().sum();
                    for j in 0..w {
                        let logp = zr[j] - lse;
                        l -= tr[j] * logp;
                        d[r * w + j] = (logp.exp() * tsum - tr[j]) / rows;
                    }
                }
                (l / rows, d)
            }
            (Loss::Cce, _) => unreachable!("checked by check_loss"),
        }
    }

    fn check_loss(&self, loss: Loss) -> Result<()> {
        let ok = matches!(
            (loss, self.spec.output),
            (Loss::Mse, OutputActivation::Identity)
                | (Loss::Bce, OutputActivation::Sigmoid)
                | (Loss::Cce, OutputActivation::SoftmaxRows(_))
        );
        if ok {
            Ok(())
        } else {
            Err(Error::param("loss", format!("{loss:?} does not pair with {:?} outputs", self.spec.output)))
        }
    }

    /// Loss and parameter gradients for one batch.
    pub fn gradients(
        &mut self,
        x: &[f64],
        t: &[f64],
        batch: usize,
        loss: Loss,
        mask: Option<&[f64]>,
        mode: Mode,
    ) -> Result<(f64, Grads)> {
        self.check_batch(x, batch)?;
        self.check_loss(loss)?;
        let want = batch * self.spec.output_dim();
        if t.len() != want {
            return Err(Error::Dimension { context: "mlp target", expected: want, got: t.len() });
        }
        if let Some(m) = mask {
            if m.len() != want {
                return Err(Error::Dimension { context: "mlp loss mask", expected: want, got: m.len() });
            }
        }
        let trace = self.run(x, batch, mode);
        let (value, mut delta) = self.loss_and_delta(&trace.logits, t, loss, mask);

        let n_layers = self.layers.len();
        let mut gw: Vec<Vec<f64>> = Vec::with_capacity(n_layers);
        let mut gb: Vec<Vec<f64>> = Vec::with_capacity(n_layers);
        for l in (0..n_layers).rev() {
            let layer = &self.layers[l];
            let input = &trace.inputs[l];
            let mut dw = vec![0.0; layer.n_out * layer.n_in];
            gemm(layer.n_out, batch, layer.n_in, &delta, 1, layer.n_out, input, layer.n_in, 1, &mut dw);
            let mut db = vec![0.0; layer.n_out];
            for row in delta.chunks(layer.n_out) {
                for (g, d) in db.iter_mut().zip(row) {
                    *g += d;
                }
            }
            gw.push(dw);
            gb.push(db);
            if l > 0 {
                let mut dx = vec![0.0; batch * layer.n_in];
                gemm(batch, layer.n_out, layer.n_in, &delta, layer.n_out, 1, &layer.w, layer.n_in, 1, &mut dx);
                // Back through dropout and ReLU of the previous hidden layer.
                let mask = &trace.masks[l - 1];
                for (i, g) in dx.iter_mut().enumerate() {
                    if input[i] <= 0.0 {
                        *g = 0.0;
                    } else if !mask.is_empty() {
                        *g *= mask[i];
                    }
                }
                delta = dx;
            }
        }
        gw.reverse();
        gb.reverse();
        Ok((value, Grads { w: gw, b: gb }))
    }

    /// One Adam step on a batch; returns the loss before the update.
    pub fn train_step(
        &mut self,
        x: &[f64],
        t: &[f64],
        batch: usize,
        loss: Loss,
        learning_rate: f64,
        mask: Option<&[f64]>,
    ) -> Result<f64> {
        let (value, g) = self.gradients(x, t, batch, loss, mask, Mode::Train)?;
        if !value.is_finite() {
            let max_output = self.predict_batch(x, batch)?.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            return Err(Error::NonFiniteLoss { loss: value, step: self.steps, batch, max_output });
        }
        self.apply(&g, learning_rate);
        Ok(value)
    }

    fn apply(&mut self, g: &Grads, lr: f64) {
        self.steps += 1;
        self.adam.t += 1;
        let t = self.adam.t as i32;
        let c1 = 1.0 - BETA1.powi(t);
        let c2 = 1.0 - BETA2.powi(t);
        for (l, layer) in self.layers.iter_mut().enumerate() {
            for (params, grads, slot) in [(&mut layer.w, &g.w[l], 2 * l), (&mut layer.b, &g.b[l], 2 * l + 1)] {
                let m = &mut self.adam.m[slot];
                let v = &mut self.adam.v[slot];
                for i in 0..params.len() {
                    let gi = grads[i];
                    m[i] = BETA1 * m[i] + (1.0 - BETA1) * gi;
                    v[i] = BETA2 * v[i] + (1.0 - BETA2) * gi * gi;
                    if lr != 0.0 {
                        let mhat = m[i] / c1;
                        let vhat = v[i] / c2;
                        params[i] -= lr * mhat / (vhat.sqrt() + EPS);
                    }
                }
            }
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.checkpoint())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_checkpoint(serde_json::from_str(text)?)
    }

    /// The checkpoint as a JSON value, for embedding in larger documents.
    pub fn to_value(&self) -> Result<serde_json::Value> {
        Ok(serde_json::to_value(self.checkpoint())?)
    }

    pub fn from_value(v: serde_json::Value) -> Result<Self> {
        Self::from_checkpoint(serde_json::from_value(v)?)
    }

    fn checkpoint(&self) -> Checkpoint {
        Checkpoint { format: FORMAT.to_string(), version: FORMAT_VERSION, spec: self.spec.clone(), layers: self.layers.clone() }
    }

    fn from_checkpoint(c: Checkpoint) -> Result<Self> {
        if c.format != FORMAT || c.version != FORMAT_VERSION {
            return Err(Error::ModelFormat(format!("expected {FORMAT} v{FORMAT_VERSION}, found {} v{}", c.format, c.version)));
        }
        c.spec.validate()?;
        if c.layers.len() + 1 != c.spec.layer_sizes.len() {
            return Err(Error::ModelFormat("layer count does not match the layer sizes".into()));
        }
        for (i, l) in c.layers.iter().enumerate() {
            let (n_in, n_out) = (c.spec.layer_sizes[i], c.spec.layer_sizes[i + 1]);
            if l.n_in != n_in || l.n_out != n_out || l.w.len() != n_in * n_out || l.b.len() != n_out {
                return Err(Error::ModelFormat(format!("layer {i} has inconsistent dimensions")));
            }
        }
        let adam = Adam::for_layers(&c.layers);
        Ok(Self { spec: c.spec, layers: c.layers, adam, dropout_rng: rng::stream(0, "mlp-dropout"), steps: 0 })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

impl Adam {
    fn for_layers(layers: &[Layer]) -> Self {
        let shapes: Vec<usize> = layers.iter().flat_map(|l| [l.w.len(), l.b.len()]).collect();
        Adam { t: 0, m: shapes.iter().map(|&n| vec![0.0; n]).collect(), v: shapes.iter().map(|&n| vec![0.0; n]).collect() }
    }
}

/// On-disk form: JSON with a format tag and version, the architecture, then
/// each layer's dimensions, row-major weights and biases.
#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    spec: MlpSpec,
    layers: Vec<Layer>,
}

/// Largest relative error between analytic and central-difference
/// gradients, `|a - n| / max(|a| + |n|, 1e-6)`, with dropout disabled.
pub fn grad_check(net: &Mlp, x: &[f64], t: &[f64], batch: usize, loss: Loss) -> Result<f64> {
    const H: f64 = 1e-5;
    let mut net = net.clone();
    let (_, g) = net.gradients(x, t, batch, loss, None, Mode::Eval)?;
    let analytic: Vec<f64> = g.w.iter().zip(&g.b).flat_map(|(w, b)| w.iter().chain(b).copied()).collect();
    let mut worst = 0.0f64;
    for (i, &a) in analytic.iter().enumerate() {
        let orig = *net.param_mut(i);
        *net.param_mut(i) = orig + H;
        let (up, _) = net.gradients(x, t, batch, loss, None, Mode::Eval)?;
        *net.param_mut(i) = orig - H;
        let (down, _) = net.gradients(x, t, batch, loss, None, Mode::Eval)?;
        *net.param_mut(i) = orig;
        let numeric = (up - down) / (2.0 * H);
        worst = worst.max((a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-6));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(sizes: &[usize], output: OutputActivation) -> MlpSpec {
        MlpSpec { layer_sizes: sizes.to_vec(), output, dropout: 0.0 }
    }

    fn random(n: usize, seed: u64) -> Vec<f64> {
        let mut r = rng::stream(seed, "test-data");
        (0..n).map(|_| r.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn zero_network_outputs_zero() {
        let mut net = Mlp::new(spec(&[3, 4, 2], OutputActivation::Identity), 1).unwrap();
        net.fill(0.0);
        assert_eq!(net.predict(&[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn sigmoid_saturates() {
        let mut net = Mlp::new(spec(&[1, 2], OutputActivation::Sigmoid), 1).unwrap();
        net.fill(100.0);
        for y in net.predict(&[1.0]).unwrap() {
            assert!((y - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn softmax_rows_normalise() {
        let net = Mlp::new(spec(&[4, 8, 12], OutputActivation::SoftmaxRows(3)), 2).unwrap();
        let y = net.predict(&random(4, 3)).unwrap();
        for row in y.chunks(3) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_wrong_shapes() {
        let net = Mlp::new(spec(&[3, 2], OutputActivation::Identity), 1).unwrap();
        assert!(matches!(net.predict(&[1.0]), Err(Error::Dimension { .. })));
        assert!(Mlp::new(spec(&[3], OutputActivation::Identity), 1).is_err());
        assert!(Mlp::new(spec(&[3, 5], OutputActivation::SoftmaxRows(2)), 1).is_err());
        let mut net = Mlp::new(spec(&[3, 2], OutputActivation::Identity), 1).unwrap();
        assert!(net.train_step(&[0.0; 3], &[0.0; 2], 1, Loss::Bce, 0.1, None).is_err());
    }

    #[test]
    fn separable_bce_converges() {
        let mut net = Mlp::new(spec(&[2, 8, 1], OutputActivation::Sigmoid), 4).unwrap();
        let x = [1.0, 0.0, 0.0, 1.0];
        let t = [1.0, 0.0];
        let mut last = f64::INFINITY;
        for _ in 0..2000 {
            last = net.train_step(&x, &t, 2, Loss::Bce, 1e-2, None).unwrap();
        }
        assert!(last < 0.01, "{last}");
    }

    #[test]
    fn zero_learning_rate_freezes_weights() {
        let mut net = Mlp::new(spec(&[3, 5, 2], OutputActivation::Identity), 5).unwrap();
        let before = net.params();
        let x = random(6, 1);
        let t = random(4, 2);
        let l0 = net.train_step(&x, &t, 2, Loss::Mse, 0.0, None).unwrap();
        let l1 = net.train_step(&x, &t, 2, Loss::Mse, 0.0, None).unwrap();
        assert_eq!(before, net.params());
        assert_eq!(l0, l1);
    }

    #[test]
    fn single_sample_mse_by_hand() {
        // Identity map: one layer with w = I and b = 0.
        let mut net = Mlp::new(spec(&[2, 2], OutputActivation::Identity), 1).unwrap();
        net.fill(0.0);
        *net.param_mut(0) = 1.0;
        *net.param_mut(3) = 1.0;
        let l = net.train_step(&[0.5, -1.0], &[1.5, 1.0], 1, Loss::Mse, 0.0, None).unwrap();
        // ((0.5 - 1.5)^2 + (-1 - 1)^2) / 2
        assert_eq!(l, 2.5);
    }

    #[test]
    fn masked_mse_ignores_other_outputs() {
        let mut net = Mlp::new(spec(&[3, 4, 2], OutputActivation::Identity), 6).unwrap();
        let x = random(3, 1);
        let mask = [1.0, 0.0];
        let (_, a) = net.gradients(&x, &[0.3, 5.0], 1, Loss::Mse, Some(&mask), Mode::Eval).unwrap();
        let (_, b) = net.gradients(&x, &[0.3, -9.0], 1, Loss::Mse, Some(&mask), Mode::Eval).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn gradient_checks() {
        let x = random(4 * 3, 10);
        let net = Mlp::new(spec(&[4, 8, 2], OutputActivation::Identity), 11).unwrap();
        assert!(grad_check(&net, &x, &random(6, 12), 3, Loss::Mse).unwrap() < 1e-4);

        let net = Mlp::new(spec(&[4, 8, 2], OutputActivation::Sigmoid), 13).unwrap();
        let t: Vec<f64> = random(6, 14).iter().map(|v| f64::from(*v > 0.0)).collect();
        assert!(grad_check(&net, &x, &t, 3, Loss::Bce).unwrap() < 1e-4);

        let net = Mlp::new(spec(&[4, 8, 4], OutputActivation::SoftmaxRows(2)), 15).unwrap();
        let t = [1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0, 0.0, 1.0];
        assert!(grad_check(&net, &x, &t, 3, Loss::Cce).unwrap() < 1e-4);
    }

    #[test]
    fn dropout_only_in_training() {
        let mut net = Mlp::new(MlpSpec { dropout: 0.5, ..spec(&[4, 16, 2], OutputActivation::Identity) }, 3).unwrap();
        let x = random(4, 1);
        let a = net.predict(&x).unwrap();
        assert_eq!(a, net.forward_batch(&x, 1, Mode::Eval).unwrap());
        let t1 = net.forward_batch(&x, 1, Mode::Train).unwrap();
        let t2 = net.forward_batch(&x, 1, Mode::Train).unwrap();
        assert!(t1 != a || t2 != a);
    }

    #[test]
    fn same_seed_same_trajectory() {
        let run = || {
            let mut net = Mlp::new(MlpSpec { dropout: 0.2, ..spec(&[3, 6, 1], OutputActivation::Sigmoid) }, 9).unwrap();
            for i in 0..20 {
                net.train_step(&random(6, i), &[1.0, 0.0], 2, Loss::Bce, 1e-2, None).unwrap();
            }
            net.params()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn checkpoint_round_trip() {
        let net = Mlp::new(spec(&[3, 5, 4], OutputActivation::SoftmaxRows(2)), 8).unwrap();
        let back = Mlp::from_json(&net.to_json().unwrap()).unwrap();
        assert!(net.params_equal(&back));
        let x = random(3, 2);
        assert_eq!(net.predict(&x).unwrap(), back.predict(&x).unwrap());
        assert!(Mlp::from_json(&net.to_json().unwrap().replace(FORMAT, "other")).is_err());
    }

    #[test]
    fn non_finite_loss_is_reported() {
        let mut net = Mlp::new(spec(&[1, 1], OutputActivation::Identity), 1).unwrap();
        let err = net.train_step(&[f64::NAN], &[0.0], 1, Loss::Mse, 0.1, None).unwrap_err();
        assert!(matches!(err, Error::NonFiniteLoss { .. }));
    }

    #[test]
    fn gemm_strided_views() {
        // [1 2; 3 4] · [5 6; 7 8]ᵀ = [17 23; 39 53]
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [5.0, 6.0, 7.0, 8.0];
        let mut c = [0.0; 4];
        gemm(2, 2, 2, &a, 2, 1, &b, 1, 2, &mut c);
        assert_eq!(c, [17.0, 23.0, 39.0, 53.0]);
    }
}
