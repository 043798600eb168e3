//! Minimal dense feed-forward substrate: parameter storage, forward
//! evaluation, exact analytic gradients via backpropagation, elementary
//! losses, and Adam.
//!
//! All hidden layers use the leaky rectifier with a fixed negative slope;
//! the output layer is either logistic-sigmoid or identity. Weights are
//! row-major `[out x in]` like the rest of the crate.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mat::Mat;

/// Negative slope of the leaky rectifier, recorded once for reproducibility.
pub const LEAKY_SLOPE: f64 = 0.2;

/// Clamp applied to probabilities before a logarithm.
pub const CE_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutputActivation {
    Sigmoid,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossKind {
    CrossEntropy,
    AbsoluteError,
    SquaredError,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    in_dim: usize,
    out_dim: usize,
    /// Row-major `[out_dim x in_dim]`.
    weights: Vec<f64>,
    biases: Vec<f64>,
}

/// Dense feed-forward network: leaky-rectifier hidden layers plus a
/// sigmoid or identity output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpNetwork {
    layers: Vec<Layer>,
    output_activation: OutputActivation,
}

/// Cached activations from [`MlpNetwork::forward_cached`], consumed by
/// [`MlpNetwork::backward`].
pub struct ForwardCache {
    /// Input batch handed to the forward pass.
    input: Mat,
    /// Pre-activation `W x + b` per layer.
    pre: Vec<Mat>,
    /// Post-activation output per layer; last entry is the network output.
    act: Vec<Mat>,
}

impl ForwardCache {
    pub fn output(&self) -> &Mat {
        self.act.last().expect("cache has at least one layer")
    }

    /// Post-activation output of layer `idx` (0 = first layer).
    pub fn activation(&self, idx: usize) -> &Mat {
        &self.act[idx]
    }

    /// Smallest |pre-activation| over the hidden layers; finite-difference
    /// harnesses use this to stay away from the rectifier kink.
    pub fn min_abs_hidden_preactivation(&self) -> f64 {
        let mut min = f64::INFINITY;
        for z in &self.pre[..self.pre.len().saturating_sub(1)] {
            for &v in z.data() {
                min = min.min(v.abs());
            }
        }
        min
    }
}

/// Per-layer gradients, shaped like the network's parameters.
#[derive(Debug, Clone)]
pub struct NetGrads {
    pub layers: Vec<(Mat, Vec<f64>)>,
}

/// Result of a backward pass: parameter gradients plus the gradient of the
/// loss with respect to the network input (needed to compose networks).
#[derive(Debug)]
pub struct BackwardResult {
    pub grads: NetGrads,
    pub input_grad: Mat,
}

#[inline]
fn leaky(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        LEAKY_SLOPE * x
    }
}

#[inline]
fn leaky_deriv(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        LEAKY_SLOPE
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    // Clamped so saturated outputs stay strictly inside (0, 1).
    (1.0 / (1.0 + (-x).exp())).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON)
}

impl Layer {
    fn affine(&self, input: &Mat) -> Mat {
        let n = input.rows();
        let mut out = Mat::zeros(n, self.out_dim);
        for r in 0..n {
            let x = input.row(r);
            let dst = out.row_mut(r);
            for o in 0..self.out_dim {
                let w = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
                let mut acc = self.biases[o];
                for (wi, xi) in w.iter().zip(x.iter()) {
                    acc += wi * xi;
                }
                dst[o] = acc;
            }
        }
        out
    }
}

impl MlpNetwork {
    /// Build a network with the given layer widths, e.g. `[4, 8, 1]` for one
    /// hidden layer. Weights are drawn uniformly from
    /// `[-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out))]`, biases zero.
    pub fn new(dims: &[usize], output_activation: OutputActivation, rng: &mut ChaCha8Rng) -> Self {
        assert!(dims.len() >= 2, "need at least input and output widths");
        assert!(dims.iter().all(|&d| d > 0), "zero-width layer");
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for w in dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let weights = (0..fan_in * fan_out)
                .map(|_| rng.random_range(-bound..bound))
                .collect();
            layers.push(Layer {
                in_dim: fan_in,
                out_dim: fan_out,
                weights,
                biases: vec![0.0; fan_out],
            });
        }
        MlpNetwork {
            layers,
            output_activation,
        }
    }

    /// Network with all weights and biases zero; mostly for tests.
    pub fn zeroed(dims: &[usize], output_activation: OutputActivation) -> Self {
        let layers = dims
            .windows(2)
            .map(|w| Layer {
                in_dim: w[0],
                out_dim: w[1],
                weights: vec![0.0; w[0] * w[1]],
                biases: vec![0.0; w[1]],
            })
            .collect();
        MlpNetwork {
            layers,
            output_activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim
    }

    pub fn output_activation(&self) -> OutputActivation {
        self.output_activation
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.layers[0].in_dim];
        dims.extend(self.layers.iter().map(|l| l.out_dim));
        dims
    }

    /// Deterministic forward evaluation of a batch.
    pub fn forward(&self, batch: &Mat) -> Result<Mat> {
        Ok(self.forward_cached(batch)?.act.pop().unwrap())
    }

    /// Forward pass retaining every intermediate activation for backprop.
    pub fn forward_cached(&self, batch: &Mat) -> Result<ForwardCache> {
        if batch.cols() != self.input_dim() {
            return Err(Error::RejectedInput(format!(
                "batch has {} columns, network expects {}",
                batch.cols(),
                self.input_dim()
            )));
        }
        let n_layers = self.layers.len();
        let mut pre = Vec::with_capacity(n_layers);
        let mut act = Vec::with_capacity(n_layers);
        let mut cur = batch.clone();
        for (li, layer) in self.layers.iter().enumerate() {
            let z = layer.affine(&cur);
            let mut a = z.clone();
            if li + 1 < n_layers {
                for v in a.data_mut() {
                    *v = leaky(*v);
                }
            } else {
                match self.output_activation {
                    OutputActivation::Sigmoid => {
                        for v in a.data_mut() {
                            *v = sigmoid(*v);
                        }
                    }
                    OutputActivation::Identity => {}
                }
            }
            pre.push(z);
            cur = a.clone();
            act.push(a);
        }
        Ok(ForwardCache {
            input: batch.clone(),
            pre,
            act,
        })
    }

    /// Backpropagate `upstream` (dLoss/dOutput, post-activation) through the
    /// network, returning exact analytic parameter gradients and the
    /// gradient with respect to the input batch.
    pub fn backward(&self, cache: &ForwardCache, upstream: &Mat) -> Result<BackwardResult> {
        let n_layers = self.layers.len();
        if cache.pre.len() != n_layers || cache.act.len() != n_layers {
            return Err(Error::InternalState(
                "forward cache does not match network depth".into(),
            ));
        }
        let out = cache.output();
        if upstream.rows() != out.rows() || upstream.cols() != out.cols() {
            return Err(Error::InternalState(format!(
                "upstream gradient is {}x{}, output is {}x{}",
                upstream.rows(),
                upstream.cols(),
                out.rows(),
                out.cols()
            )));
        }
        if cache.input.cols() != self.input_dim() {
            return Err(Error::InternalState(
                "cached input does not match network input width".into(),
            ));
        }
        let n = upstream.rows();

        // delta = dLoss/dPreActivation for the layer being processed.
        let mut delta = upstream.clone();
        let last = n_layers - 1;
        match self.output_activation {
            OutputActivation::Sigmoid => {
                let y = &cache.act[last];
                for r in 0..n {
                    for c in 0..delta.cols() {
                        let s = y.get(r, c);
                        delta.set(r, c, delta.get(r, c) * s * (1.0 - s));
                    }
                }
            }
            OutputActivation::Identity => {}
        }

        let mut grads: Vec<(Mat, Vec<f64>)> = Vec::with_capacity(n_layers);
        for li in (0..n_layers).rev() {
            let layer = &self.layers[li];
            let input = if li == 0 { &cache.input } else { &cache.act[li - 1] };

            let mut dw = Mat::zeros(layer.out_dim, layer.in_dim);
            let mut db = vec![0.0; layer.out_dim];
            for r in 0..n {
                let drow = delta.row(r);
                let xrow = input.row(r);
                for o in 0..layer.out_dim {
                    let d = drow[o];
                    db[o] += d;
                    let wrow = dw.row_mut(o);
                    for (wi, xi) in wrow.iter_mut().zip(xrow.iter()) {
                        *wi += d * xi;
                    }
                }
            }
            grads.push((dw, db));

            // Gradient wrt this layer's input.
            let mut dinput = Mat::zeros(n, layer.in_dim);
            for r in 0..n {
                let drow = delta.row(r);
                let dst = dinput.row_mut(r);
                for o in 0..layer.out_dim {
                    let d = drow[o];
                    let w = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                    for (di, wi) in dst.iter_mut().zip(w.iter()) {
                        *di += d * wi;
                    }
                }
            }
            if li > 0 {
                let z_prev = &cache.pre[li - 1];
                for r in 0..n {
                    let dst = dinput.row_mut(r);
                    let zrow = z_prev.row(r);
                    for (di, zi) in dst.iter_mut().zip(zrow.iter()) {
                        *di *= leaky_deriv(*zi);
                    }
                }
            }
            delta = dinput;
        }
        grads.reverse();
        Ok(BackwardResult {
            grads: NetGrads { layers: grads },
            input_grad: delta,
        })
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    /// Append all parameters (per layer: weights row-major, then biases).
    pub fn write_params(&self, out: &mut Vec<f64>) {
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.biases);
        }
    }

    /// Overwrite parameters from a flat slice; returns values consumed.
    pub fn read_params(&mut self, src: &[f64]) -> usize {
        let mut off = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&src[off..off + nw]);
            off += nw;
            let nb = l.biases.len();
            l.biases.copy_from_slice(&src[off..off + nb]);
            off += nb;
        }
        off
    }

    /// Append gradients in the same flat order as [`write_params`].
    pub fn write_grads(grads: &NetGrads, out: &mut Vec<f64>) {
        for (dw, db) in &grads.layers {
            out.extend_from_slice(dw.data());
            out.extend_from_slice(db);
        }
    }

    /// Human-readable path of the flat parameter index `idx`, e.g.
    /// `layer1/weight[2,0]`.
    pub fn param_path(&self, idx: usize) -> String {
        let mut off = 0;
        for (li, l) in self.layers.iter().enumerate() {
            if idx < off + l.weights.len() {
                let k = idx - off;
                return format!("layer{}/weight[{},{}]", li, k / l.in_dim, k % l.in_dim);
            }
            off += l.weights.len();
            if idx < off + l.biases.len() {
                return format!("layer{}/bias[{}]", li, idx - off);
            }
            off += l.biases.len();
        }
        format!("param[{}]", idx)
    }

    pub fn params_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.biases.iter()).all(|v| v.is_finite()))
    }
}

/// Bias-corrected Adam state for one flat parameter block.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(param_count: usize, learning_rate: f64) -> Self {
        AdamState {
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            step: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.m
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.v
    }
}

/// One bias-corrected Adam update. `describe` maps a flat index to a
/// parameter path for the non-finite-gradient abort error.
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    describe: impl Fn(usize) -> String,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::RejectedInput(format!(
            "adam shapes disagree: {} params, {} grads, {} moments",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite {
            path: describe(i),
            detail: format!("gradient = {}", grads[i]),
        });
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= state.learning_rate * m_hat / (v_hat.sqrt() + state.epsilon);
        if !params[i].is_finite() {
            return Err(Error::NonFinite {
                path: describe(i),
                detail: format!("parameter became {}", params[i]),
            });
        }
    }
    Ok(())
}

/// Mean loss over every element of the batch.
pub fn loss_value(kind: LossKind, predictions: &Mat, targets: &Mat) -> Result<f64> {
    check_loss_shapes(predictions, targets)?;
    let n = predictions.data().len() as f64;
    let sum: f64 = predictions
        .data()
        .iter()
        .zip(targets.data().iter())
        .map(|(&p, &t)| match kind {
            LossKind::CrossEntropy => {
                let p = p.clamp(CE_CLAMP, 1.0 - CE_CLAMP);
                -t * p.ln() - (1.0 - t) * (1.0 - p).ln()
            }
            LossKind::AbsoluteError => (p - t).abs(),
            LossKind::SquaredError => (p - t) * (p - t),
        })
        .sum();
    Ok(sum / n)
}

/// Gradient of [`loss_value`] with respect to each prediction.
pub fn loss_grad(kind: LossKind, predictions: &Mat, targets: &Mat) -> Result<Mat> {
    check_loss_shapes(predictions, targets)?;
    let n = predictions.data().len() as f64;
    let mut out = Mat::zeros(predictions.rows(), predictions.cols());
    for (i, (&p, &t)) in predictions
        .data()
        .iter()
        .zip(targets.data().iter())
        .enumerate()
    {
        let g = match kind {
            LossKind::CrossEntropy => {
                if p <= CE_CLAMP || p >= 1.0 - CE_CLAMP {
                    // The clamped loss is flat here.
                    0.0
                } else {
                    -t / p + (1.0 - t) / (1.0 - p)
                }
            }
            LossKind::AbsoluteError => {
                // Subgradient 0 at the kink.
                if p > t {
                    1.0
                } else if p < t {
                    -1.0
                } else {
                    0.0
                }
            }
            LossKind::SquaredError => 2.0 * (p - t),
        };
        out.data_mut()[i] = g / n;
    }
    Ok(out)
}

fn check_loss_shapes(predictions: &Mat, targets: &Mat) -> Result<()> {
    if predictions.rows() == 0 || predictions.data().is_empty() {
        return Err(Error::RejectedInput("empty batch".into()));
    }
    if predictions.rows() != targets.rows() || predictions.cols() != targets.cols() {
        return Err(Error::RejectedInput(format!(
            "predictions {}x{} vs targets {}x{}",
            predictions.rows(),
            predictions.cols(),
            targets.rows(),
            targets.cols()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn zero_net_sigmoid_outputs_half() {
        let net = MlpNetwork::zeroed(&[3, 4, 2], OutputActivation::Sigmoid);
        let x = Mat::from_rows(&[vec![1.0, -2.0, 0.5], vec![10.0, 3.0, -7.0]]);
        let y = net.forward(&x).unwrap();
        for &v in y.data() {
            assert_eq!(v, 0.5);
        }
    }

    #[test]
    fn identity_single_layer_passes_value_through() {
        let mut net = MlpNetwork::zeroed(&[1, 1], OutputActivation::Identity);
        net.read_params(&[1.0, 0.0]);
        let y = net.forward(&Mat::column(&[3.0])).unwrap();
        assert_eq!(y.get(0, 0), 3.0);
    }

    // Independent scalar-loop oracle: evaluates each neuron on its own,
    // without going through Layer::affine.
    fn oracle_forward(net: &MlpNetwork, x: &[f64], out_sigmoid: bool) -> Vec<f64> {
        let mut flat = Vec::new();
        net.write_params(&mut flat);
        let dims = net.layer_dims();
        let mut cur = x.to_vec();
        let mut off = 0;
        for li in 0..dims.len() - 1 {
            let (fi, fo) = (dims[li], dims[li + 1]);
            let w = &flat[off..off + fi * fo];
            let b = &flat[off + fi * fo..off + fi * fo + fo];
            off += fi * fo + fo;
            let mut next = vec![0.0; fo];
            for o in 0..fo {
                let mut acc = b[o];
                for i in 0..fi {
                    acc += w[o * fi + i] * cur[i];
                }
                next[o] = if li + 1 < dims.len() - 1 {
                    if acc > 0.0 {
                        acc
                    } else {
                        LEAKY_SLOPE * acc
                    }
                } else if out_sigmoid {
                    1.0 / (1.0 + (-acc).exp())
                } else {
                    acc
                };
            }
            cur = next;
        }
        cur
    }

    #[test]
    fn random_net_matches_scalar_loop_oracle() {
        let mut r = rng(42);
        let net = MlpNetwork::new(&[5, 7, 3], OutputActivation::Sigmoid, &mut r);
        for _ in 0..20 {
            let x: Vec<f64> = (0..5).map(|_| r.random_range(-2.0..2.0)).collect();
            let got = net.forward(&Mat::from_rows(&[x.clone()])).unwrap();
            let want = oracle_forward(&net, &x, true);
            for (g, w) in got.row(0).iter().zip(want.iter()) {
                assert!((g - w).abs() < 1e-12, "forward {} vs oracle {}", g, w);
            }
        }
    }

    #[test]
    fn forward_rejects_dimension_mismatch() {
        let net = MlpNetwork::zeroed(&[3, 1], OutputActivation::Sigmoid);
        let err = net.forward(&Mat::zeros(2, 4)).unwrap_err();
        assert_eq!(err.kind(), "rejected-input");
    }

    #[test]
    fn sigmoid_outputs_stay_in_open_interval() {
        let mut net = MlpNetwork::zeroed(&[1, 1], OutputActivation::Sigmoid);
        net.read_params(&[100.0, 0.0]);
        let y = net.forward(&Mat::column(&[1e3, -1e3])).unwrap();
        for &v in y.data() {
            assert!(v > 0.0 && v < 1.0);
        }
        // Saturated predictions still give a finite clamped cross-entropy.
        let t = Mat::column(&[0.0, 1.0]);
        assert!(loss_value(LossKind::CrossEntropy, &y, &t).unwrap().is_finite());
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let mut r = rng(1);
        let net = MlpNetwork::new(&[4, 6, 2], OutputActivation::Sigmoid, &mut r);
        let x = Mat::from_rows(&[vec![0.3, -0.4, 1.1, 0.2]]);
        let cache = net.forward_cached(&x).unwrap();
        let up = Mat::zeros(1, 2);
        let back = net.backward(&cache, &up).unwrap();
        for (dw, db) in &back.grads.layers {
            assert!(dw.data().iter().all(|&v| v == 0.0));
            assert!(db.iter().all(|&v| v == 0.0));
        }
        assert!(back.input_grad.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_neuron_squared_error_closed_form() {
        // One linear neuron, one example: dL/dw = 2 (pred - target) * input.
        let mut net = MlpNetwork::zeroed(&[2, 1], OutputActivation::Identity);
        net.read_params(&[0.7, -0.3, 0.1]);
        let x = Mat::from_rows(&[vec![1.5, -2.0]]);
        let target = Mat::column(&[0.25]);
        let cache = net.forward_cached(&x).unwrap();
        let pred = cache.output().get(0, 0);
        let up = loss_grad(LossKind::SquaredError, cache.output(), &target).unwrap();
        let back = net.backward(&cache, &up).unwrap();
        let expect = |xi: f64| 2.0 * (pred - 0.25) * xi;
        assert!((back.grads.layers[0].0.get(0, 0) - expect(1.5)).abs() < 1e-12);
        assert!((back.grads.layers[0].0.get(0, 1) - expect(-2.0)).abs() < 1e-12);
        assert!((back.grads.layers[0].1[0] - 2.0 * (pred - 0.25)).abs() < 1e-12);
    }

    #[test]
    fn backward_rejects_mismatched_cache() {
        let mut r = rng(5);
        let net = MlpNetwork::new(&[3, 2], OutputActivation::Sigmoid, &mut r);
        let other = MlpNetwork::new(&[3, 2, 2], OutputActivation::Sigmoid, &mut r);
        let cache = net.forward_cached(&Mat::zeros(1, 3)).unwrap();
        let err = other.backward(&cache, &Mat::zeros(1, 2)).unwrap_err();
        assert_eq!(err.kind(), "internal-state");
    }

    #[test]
    fn adam_zero_gradients_keep_parameters() {
        let mut params = vec![0.4, -0.2, 1.0];
        let grads = vec![0.0; 3];
        let mut st = AdamState::new(3, 0.001);
        adam_step(&mut params, &grads, &mut st, |i| format!("p[{}]", i)).unwrap();
        assert_eq!(params, vec![0.4, -0.2, 1.0]);
        assert!(st.first_moment().iter().all(|&v| v == 0.0));
        assert!(st.second_moment().iter().all(|&v| v == 0.0));
        assert_eq!(st.step_count(), 1);
    }

    #[test]
    fn adam_constant_gradient_update_approaches_lr() {
        let mut params = vec![0.0];
        let mut st = AdamState::new(1, 0.01);
        let mut prev = params[0];
        let mut last_step = 0.0;
        for _ in 0..500 {
            adam_step(&mut params, &[2.5], &mut st, |_| String::new()).unwrap();
            last_step = prev - params[0];
            prev = params[0];
        }
        // With a constant gradient the bias-corrected update tends to lr * sign(g).
        assert!((last_step - 0.01).abs() < 1e-6, "step {}", last_step);
    }

    #[test]
    fn adam_three_steps_match_hand_recurrence() {
        // Hand-executed recurrence for grads (1, -1, 2), lr=0.1,
        // beta1=0.9, beta2=0.999, eps=1e-8, starting at 0.
        let mut params = vec![0.0];
        let mut st = AdamState::new(1, 0.1);
        let grads = [1.0, -1.0, 2.0];

        let (mut m, mut v, mut p) = (0.0f64, 0.0f64, 0.0f64);
        for (t, g) in grads.iter().enumerate() {
            adam_step(&mut params, &[*g], &mut st, |_| String::new()).unwrap();
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let m_hat = m / (1.0 - 0.9f64.powi(t as i32 + 1));
            let v_hat = v / (1.0 - 0.999f64.powi(t as i32 + 1));
            p -= 0.1 * m_hat / (v_hat.sqrt() + 1e-8);
            assert!(
                (params[0] - p).abs() < 1e-15,
                "step {}: {} vs {}",
                t,
                params[0],
                p
            );
        }
        // Frozen value from the recurrence above.
        assert!((params[0] - p).abs() < 1e-15);
        assert_eq!(st.step_count(), 3);
    }

    #[test]
    fn adam_rejects_non_finite_gradient() {
        let mut params = vec![0.0, 0.0];
        let mut st = AdamState::new(2, 0.1);
        let err = adam_step(
            &mut params,
            &[0.0, f64::NAN],
            &mut st,
            |i| format!("net/layer0/weight[{}]", i),
        )
        .unwrap_err();
        match err {
            Error::NonFinite { path, .. } => assert_eq!(path, "net/layer0/weight[1]"),
            other => panic!("unexpected error {:?}", other),
        }
    }

    #[test]
    fn loss_values_match_closed_forms() {
        let p = Mat::column(&[0.5]);
        let t = Mat::column(&[1.0]);
        let ce = loss_value(LossKind::CrossEntropy, &p, &t).unwrap();
        assert!((ce - std::f64::consts::LN_2).abs() < 1e-12);

        let p2 = Mat::column(&[0.3, -1.2]);
        assert_eq!(loss_value(LossKind::AbsoluteError, &p2, &p2).unwrap(), 0.0);

        let mut r = rng(9);
        let preds: Vec<f64> = (0..40).map(|_| r.random_range(-2.0..2.0)).collect();
        let targs: Vec<f64> = (0..40).map(|_| r.random_range(-2.0..2.0)).collect();
        let got = loss_value(
            LossKind::SquaredError,
            &Mat::column(&preds),
            &Mat::column(&targs),
        )
        .unwrap();
        // Naive summation oracle.
        let mut acc = 0.0;
        for i in 0..40 {
            acc += (preds[i] - targs[i]) * (preds[i] - targs[i]);
        }
        assert!((got - acc / 40.0).abs() < 1e-12);
    }

    #[test]
    fn empty_batch_rejected() {
        let e = loss_value(LossKind::SquaredError, &Mat::zeros(0, 1), &Mat::zeros(0, 1));
        assert_eq!(e.unwrap_err().kind(), "rejected-input");
    }

    #[test]
    fn seeded_init_is_deterministic() {
        let a = MlpNetwork::new(&[6, 4, 2], OutputActivation::Sigmoid, &mut rng(77));
        let b = MlpNetwork::new(&[6, 4, 2], OutputActivation::Sigmoid, &mut rng(77));
        assert_eq!(a, b);
    }

    #[test]
    fn param_path_names_layer_and_index() {
        let net = MlpNetwork::zeroed(&[2, 3, 1], OutputActivation::Sigmoid);
        assert_eq!(net.param_path(0), "layer0/weight[0,0]");
        assert_eq!(net.param_path(6), "layer0/bias[0]");
        assert_eq!(net.param_path(9), "layer1/weight[0,0]");
        assert_eq!(net.param_path(12), "layer1/bias[0]");
    }
}
