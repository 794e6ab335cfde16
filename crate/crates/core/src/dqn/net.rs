//! Fully connected Q-network with rectifier hidden layers and an identity
//! output layer, plus its Adam optimiser.
//!
//! Weights are stored output-major (`out × in`), so each action's output
//! weights form one contiguous row. Gradients of a TD batch touch only the
//! rows of the actions in the batch, and the optimiser exploits that.

use std::collections::BTreeMap;

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `out × in`.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    fn zeros(input: usize, output: usize) -> Self {
        Self {
            weights: Array2::zeros((output, input)),
            bias: Array1::zeros(output),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.nrows()
    }

    /// `x · Wᵀ + b` for a batch laid out one sample per row.
    fn affine(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut z = Array2::zeros((x.nrows(), self.output_dim()));
        for mut row in z.rows_mut() {
            row.assign(&self.bias);
        }
        general_mat_mul(1.0, &x, &self.weights.t(), 1.0, &mut z);
        z
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QNetwork {
    layers: Vec<Dense>,
}

impl QNetwork {
    /// Random network with the given layer widths, input first. Weights are
    /// drawn uniformly from `±1/√fan_in`, biases start at zero.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(sizes)?;
        for layer in &mut net.layers {
            let bound = 1.0 / (layer.input_dim() as f64).sqrt();
            layer.weights.mapv_inplace(|_| rng.random_range(-bound..bound));
        }
        Ok(net)
    }

    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::invalid(format!("invalid layer sizes {sizes:?}")));
        }
        let layers = sizes.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect();
        Ok(Self { layers })
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("a network needs at least one layer"));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.output_dim() {
                return Err(Error::invalid(format!("layer {i}: bias length mismatch")));
            }
            if i > 0 && layers[i - 1].output_dim() != l.input_dim() {
                return Err(Error::invalid(format!("layer {i}: input width mismatch")));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.input_dim()];
        sizes.extend(self.layers.iter().map(Dense::output_dim));
        sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    pub fn num_parameters(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    fn output_layer(&self) -> &Dense {
        &self.layers[self.layers.len() - 1]
    }

    fn check_input(&self, width: usize) -> Result<()> {
        if width != self.input_dim() {
            return Err(Error::invalid(format!(
                "input has {width} features, network expects {}",
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Activations entering the output layer, one row per sample.
    fn hidden_activations(&self, x: ArrayView2<f64>) -> Vec<Array2<f64>> {
        let hidden = &self.layers[..self.layers.len() - 1];
        let mut acts = Vec::with_capacity(hidden.len() + 1);
        acts.push(x.to_owned());
        for layer in hidden {
            let mut z = layer.affine(acts[acts.len() - 1].view());
            z.mapv_inplace(|v| v.max(0.0));
            acts.push(z);
        }
        acts
    }

    /// Q-values for one input. Uses matrix-vector products, which stream the
    /// output weights once instead of packing them for a matrix product.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x.len())?;
        let mut h = Array1::from(x.to_vec());
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = layer.weights.dot(&h);
            z += &layer.bias;
            if i < last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            h = z;
        }
        Ok(h.into_raw_vec_and_offset().0)
    }

    /// Q-values for a batch, `batch × actions`.
    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(x.ncols())?;
        let acts = self.hidden_activations(x);
        Ok(self.output_layer().affine(acts[acts.len() - 1].view()))
    }

    /// Activations entering the output layer, one row per sample.
    pub fn penultimate(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(x.ncols())?;
        let mut acts = self.hidden_activations(x);
        Ok(acts.pop().expect("input is always present"))
    }

    /// Q-value of one action from the activations entering the output
    /// layer. Costs one output row instead of the whole layer.
    pub fn action_value(&self, h: ArrayView1<f64>, action: usize) -> f64 {
        let out = self.output_layer();
        out.weights.row(action).dot(&h) + out.bias[action]
    }

    /// Mean squared TD error over the batch and its gradient with respect
    /// to every parameter. Only the output rows of `actions` receive
    /// gradient.
    pub fn loss_and_gradients(
        &self,
        x: ArrayView2<f64>,
        actions: &[usize],
        targets: &[f64],
    ) -> Result<(f64, Gradients)> {
        self.check_input(x.ncols())?;
        let batch = x.nrows();
        if batch == 0 || actions.len() != batch || targets.len() != batch {
            return Err(Error::invalid(format!(
                "batch of {batch} samples with {} actions and {} targets",
                actions.len(),
                targets.len()
            )));
        }
        let out = self.output_layer();
        if let Some(&a) = actions.iter().find(|&&a| a >= out.output_dim()) {
            return Err(Error::invalid(format!("action {a} outside the output layer")));
        }
        let acts = self.hidden_activations(x);
        let last = &acts[acts.len() - 1];
        let mut loss = 0.0;
        let mut dq = vec![0.0; batch];
        for i in 0..batch {
            let a = actions[i];
            let q = self.action_value(last.row(i), a);
            let err = q - targets[i];
            loss += err * err;
            dq[i] = 2.0 * err / batch as f64;
        }
        loss /= batch as f64;

        let mut rows: BTreeMap<usize, (Array1<f64>, f64)> = BTreeMap::new();
        let mut delta = Array2::zeros(last.raw_dim());
        for i in 0..batch {
            let a = actions[i];
            let entry = rows
                .entry(a)
                .or_insert_with(|| (Array1::zeros(last.ncols()), 0.0));
            entry.0.scaled_add(dq[i], &last.row(i));
            entry.1 += dq[i];
            delta.row_mut(i).scaled_add(dq[i], &out.weights.row(a));
        }

        let n_hidden = self.layers.len() - 1;
        let mut hidden = Vec::with_capacity(n_hidden);
        for l in (0..n_hidden).rev() {
            // rectifier derivative, taken from the post-activation values
            ndarray::Zip::from(&mut delta)
                .and(&acts[l + 1])
                .for_each(|d, &a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
            let dw = delta.t().dot(&acts[l]);
            let db = delta.sum_axis(Axis(0));
            let next = if l > 0 {
                Some(delta.dot(&self.layers[l].weights))
            } else {
                None
            };
            hidden.push(LayerGradient { weights: dw, bias: db });
            if let Some(n) = next {
                delta = n;
            }
        }
        hidden.reverse();
        let output_rows = rows
            .into_iter()
            .map(|(action, (weights, bias))| RowGradient { action, weights, bias })
            .collect();
        Ok((loss, Gradients { hidden, output_rows }))
    }

    /// All parameters, layer by layer, weights row-major then bias.
    pub fn parameters(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.num_parameters());
        for l in &self.layers {
            p.extend(l.weights.iter());
            p.extend(l.bias.iter());
        }
        p
    }

    pub fn set_parameters(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_parameters() {
            return Err(Error::invalid(format!(
                "{} parameters given, network has {}",
                params.len(),
                self.num_parameters()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Numerical("non-finite network parameter".into()));
        }
        let mut rest = params;
        for l in &mut self.layers {
            let (w, tail) = rest.split_at(l.weights.len());
            let (b, tail) = tail.split_at(l.bias.len());
            l.weights.iter_mut().zip(w).for_each(|(d, s)| *d = *s);
            l.bias.iter_mut().zip(b).for_each(|(d, s)| *d = *s);
            rest = tail;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Gradient of one output row (one action).
#[derive(Debug, Clone, PartialEq)]
pub struct RowGradient {
    pub action: usize,
    pub weights: Array1<f64>,
    pub bias: f64,
}

/// Dense gradients for the hidden layers and sparse rows for the output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub hidden: Vec<LayerGradient>,
    /// Sorted by action, one entry per distinct action.
    pub output_rows: Vec<RowGradient>,
}

impl Gradients {
    /// Flattened in the order of [`QNetwork::parameters`].
    pub fn to_dense(&self, net: &QNetwork) -> Vec<f64> {
        let mut g = Vec::with_capacity(net.num_parameters());
        for h in &self.hidden {
            g.extend(h.weights.iter());
            g.extend(h.bias.iter());
        }
        let out = net.output_layer();
        let mut w = Array2::<f64>::zeros(out.weights.raw_dim());
        let mut b = Array1::<f64>::zeros(out.bias.raw_dim());
        for r in &self.output_rows {
            w.row_mut(r.action).assign(&r.weights);
            b[r.action] = r.bias;
        }
        g.extend(w.iter());
        g.extend(b.iter());
        g
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam with dense moments on hidden layers and lazily updated moments on
/// the output layer: a row's moments decay only when that row receives
/// gradient. Bias correction uses the global step count.
#[derive(Debug, Clone)]
pub struct Adam {
    config: AdamConfig,
    step: u64,
    m: Vec<Dense>,
    v: Vec<Dense>,
}

impl Adam {
    pub fn new(net: &QNetwork, config: AdamConfig) -> Self {
        let zeros: Vec<Dense> = net
            .layers
            .iter()
            .map(|l| Dense::zeros(l.input_dim(), l.output_dim()))
            .collect();
        Self {
            config,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn apply(&mut self, net: &mut QNetwork, grads: &Gradients) -> Result<()> {
        let n = net.layers.len();
        if grads.hidden.len() != n - 1 {
            return Err(Error::invalid("gradient does not match the network depth"));
        }
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        let update = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
            *m = c.beta1 * *m + (1.0 - c.beta1) * g;
            *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
            *p -= c.learning_rate * (*m / bc1) / ((*v / bc2).sqrt() + c.epsilon);
        };
        for (l, g) in grads.hidden.iter().enumerate() {
            let layer = &mut net.layers[l];
            ndarray::Zip::from(&mut layer.weights)
                .and(&mut self.m[l].weights)
                .and(&mut self.v[l].weights)
                .and(&g.weights)
                .for_each(|p, m, v, &g| update(p, m, v, g));
            ndarray::Zip::from(&mut layer.bias)
                .and(&mut self.m[l].bias)
                .and(&mut self.v[l].bias)
                .and(&g.bias)
                .for_each(|p, m, v, &g| update(p, m, v, g));
        }
        let o = n - 1;
        for r in &grads.output_rows {
            let a = r.action;
            let mut wp = net.layers[o].weights.row_mut(a);
            let mut wm = self.m[o].weights.row_mut(a);
            let mut wv = self.v[o].weights.row_mut(a);
            ndarray::Zip::from(&mut wp)
                .and(&mut wm)
                .and(&mut wv)
                .and(&r.weights)
                .for_each(|p, m, v, &g| update(p, m, v, g));
            update(
                &mut net.layers[o].bias[a],
                &mut self.m[o].bias[a],
                &mut self.v[o].bias[a],
                r.bias,
            );
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy() -> (QNetwork, Array2<f64>, Vec<usize>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = QNetwork::new(&[3, 4, 4, 5], &mut rng).unwrap();
        let x = Array2::from_shape_fn((6, 3), |_| rng.random_range(-1.0..1.0));
        let actions = vec![0, 2, 2, 4, 1, 2];
        let targets = (0..6).map(|_| rng.random_range(-2.0..2.0)).collect();
        (net, x, actions, targets)
    }

    #[test]
    fn zero_weights_give_output_bias() {
        let mut net = QNetwork::zeros(&[4, 3, 6]).unwrap();
        net.layers_mut()[1].bias.fill(1.5);
        assert_eq!(net.forward(&[0.3, -1.0, 2.0, 0.0]).unwrap(), vec![1.5; 6]);
    }

    #[test]
    fn forward_is_deterministic_and_batched_consistently() {
        let (net, x, _, _) = toy();
        let batch = net.forward_batch(x.view()).unwrap();
        for i in 0..x.nrows() {
            let row = x.row(i).to_vec();
            let single = net.forward(&row).unwrap();
            assert_eq!(single, net.forward(&row).unwrap());
            for (a, b) in single.iter().zip(batch.row(i)) {
                assert!((a - b).abs() <= 1e-14);
            }
        }
        assert!(net.forward(&[0.0; 2]).is_err());
    }

    #[test]
    fn parameter_round_trip() {
        let (net, ..) = toy();
        let mut other = QNetwork::zeros(&net.sizes()).unwrap();
        other.set_parameters(&net.parameters()).unwrap();
        assert_eq!(other, net);
        assert!(other.set_parameters(&[0.0; 3]).is_err());
    }

    #[test]
    fn gradients_match_central_differences() {
        let (mut net, x, actions, targets) = toy();
        let (_, grads) = net.loss_and_gradients(x.view(), &actions, &targets).unwrap();
        let analytic = grads.to_dense(&net);
        let base = net.parameters();
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for k in 0..base.len() {
            let mut p = base.clone();
            p[k] = base[k] + h;
            net.set_parameters(&p).unwrap();
            let up = net.loss_and_gradients(x.view(), &actions, &targets).unwrap().0;
            p[k] = base[k] - h;
            net.set_parameters(&p).unwrap();
            let down = net.loss_and_gradients(x.view(), &actions, &targets).unwrap().0;
            let numeric = (up - down) / (2.0 * h);
            let rel = (analytic[k] - numeric).abs() / analytic[k].abs().max(numeric.abs()).max(1e-8);
            worst = worst.max(rel);
        }
        assert!(worst < 1e-4, "max relative error {worst}");
    }

    #[test]
    fn untouched_output_rows_have_no_gradient() {
        let (net, x, actions, targets) = toy();
        let (_, g) = net.loss_and_gradients(x.view(), &actions, &targets).unwrap();
        let rows: Vec<usize> = g.output_rows.iter().map(|r| r.action).collect();
        assert_eq!(rows, vec![0, 1, 2, 4]);
    }

    #[test]
    fn adam_with_zero_gradient_leaves_parameters() {
        let (_, x, actions, _) = toy();
        let mut net = QNetwork::zeros(&[3, 4, 4, 5]).unwrap();
        net.layers_mut()[2].bias = Array1::from(vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        let targets: Vec<f64> = actions.iter().map(|&a| a as f64 + 1.0).collect();
        let (loss, g) = net.loss_and_gradients(x.view(), &actions, &targets).unwrap();
        assert_eq!(loss, 0.0);
        let before = net.clone();
        let mut adam = Adam::new(&net, AdamConfig::default());
        adam.apply(&mut net, &g).unwrap();
        assert_eq!(net, before);
    }

    #[test]
    fn adam_reduces_loss_on_fixed_batch() {
        let (mut net, x, actions, targets) = toy();
        let mut adam = Adam::new(&net, AdamConfig { learning_rate: 1e-2, ..Default::default() });
        let mut losses = Vec::new();
        for _ in 0..50 {
            let (loss, g) = net.loss_and_gradients(x.view(), &actions, &targets).unwrap();
            losses.push(loss);
            adam.apply(&mut net, &g).unwrap();
        }
        assert!(losses[49] < losses[0] * 0.5, "{losses:?}");
    }
}
