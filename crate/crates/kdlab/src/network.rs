//! Fully-connected ReLU classifier with explicit forward pass and
//! hand-written backpropagation from an arbitrary logit gradient.
//!
//! Backprop starts from `dL/dz` supplied by the caller, so any of the loss
//! gradients in [`crate::losses`] plugs in directly as the training signal;
//! the infinite-temperature gradient trains exactly like a differentiable
//! loss would.

use crate::error::{Error, Result};
use crate::numerics::{argmax, l2_norm, Matrix, Rng};
use serde::{Deserialize, Serialize};

pub const CHECKPOINT_FORMAT_VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq)]
struct Layer {
    /// out x in.
    weights: Matrix,
    biases: Vec<f64>,
}

/// Dense feed-forward network: ReLU on every hidden layer, none on the output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    widths: Vec<usize>,
    layers: Vec<Layer>,
}

/// Per-layer intermediate values from one forward pass.
pub struct ForwardCache {
    input: Matrix,
    /// Pre-activations, one per layer; the last one is the logit matrix.
    pres: Vec<Matrix>,
    /// Post-ReLU activations, one per hidden layer.
    acts: Vec<Matrix>,
}

impl ForwardCache {
    /// Penultimate representation feeding the final linear layer, one row per sample.
    pub fn prelogits(&self) -> &Matrix {
        self.acts.last().expect("network has at least one hidden layer")
    }

    pub fn batch_size(&self) -> usize {
        self.input.rows()
    }
}

/// Gradient of the batch loss for one layer.
#[derive(Debug, Clone)]
pub struct LayerGrads {
    pub weights: Matrix,
    pub biases: Vec<f64>,
}

fn validate_widths(widths: &[usize]) -> Result<()> {
    if widths.len() < 3 {
        return Err(Error::invalid(
            "network needs input, at least one hidden layer, and output",
        ));
    }
    if widths.contains(&0) {
        return Err(Error::invalid("layer widths must be at least 1"));
    }
    if *widths.last().unwrap() < 2 {
        return Err(Error::invalid("output layer needs at least 2 classes"));
    }
    Ok(())
}

impl Mlp {
    /// Fresh network: weights uniform in `±sqrt(6 / fan_in)`, biases zero.
    pub fn init(widths: &[usize], seed: u64) -> Result<Mlp> {
        Mlp::init_with_rng(widths, &mut Rng::new(seed))
    }

    /// Like [`Mlp::init`] but drawing from a caller-owned stream.
    pub fn init_with_rng(widths: &[usize], rng: &mut Rng) -> Result<Mlp> {
        validate_widths(widths)?;
        let mut layers = Vec::with_capacity(widths.len() - 1);
        for w in widths.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / fan_in as f64).sqrt();
            let mut weights = Matrix::zeros(fan_out, fan_in);
            for o in 0..fan_out {
                for j in 0..fan_in {
                    weights.set(o, j, rng.uniform(-bound, bound));
                }
            }
            layers.push(Layer {
                weights,
                biases: vec![0.0; fan_out],
            });
        }
        Ok(Mlp {
            widths: widths.to_vec(),
            layers,
        })
    }

    /// Assemble a network from explicit parameters (used by tests and the
    /// checkpoint loader).
    pub fn from_parts(widths: Vec<usize>, params: Vec<(Matrix, Vec<f64>)>) -> Result<Mlp> {
        validate_widths(&widths)?;
        if params.len() != widths.len() - 1 {
            return Err(Error::shape(format!(
                "{} widths imply {} layers, got {}",
                widths.len(),
                widths.len() - 1,
                params.len()
            )));
        }
        let mut layers = Vec::with_capacity(params.len());
        for (i, (weights, biases)) in params.into_iter().enumerate() {
            let (fan_in, fan_out) = (widths[i], widths[i + 1]);
            if weights.rows() != fan_out || weights.cols() != fan_in || biases.len() != fan_out {
                return Err(Error::shape(format!(
                    "layer {i} expects {fan_out}x{fan_in} weights and {fan_out} biases"
                )));
            }
            if biases.iter().any(|b| !b.is_finite()) {
                return Err(Error::invalid("biases must be finite"));
            }
            layers.push(Layer { weights, biases });
        }
        Ok(Mlp { widths, layers })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    /// `z = x W^T + b`; every output entry accumulates the bias first, then
    /// the products over the input index in ascending order.
    fn affine(input: &Matrix, layer: &Layer) -> Matrix {
        let (n, fan_out) = (input.rows(), layer.biases.len());
        let mut out = Matrix::zeros(n, fan_out);
        for i in 0..n {
            let x = input.row(i);
            let row = out.row_mut(i);
            for (o, slot) in row.iter_mut().enumerate() {
                let w = layer.weights.row(o);
                let mut acc = layer.biases[o];
                for (xv, wv) in x.iter().zip(w.iter()) {
                    acc += xv * wv;
                }
                *slot = acc;
            }
        }
        out
    }

    /// Batch forward pass. Returns the logit matrix (one row per sample) and
    /// the cache needed for backprop.
    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, ForwardCache)> {
        if x.cols() != self.input_dim() {
            return Err(Error::shape(format!(
                "input has {} features, network expects {}",
                x.cols(),
                self.input_dim()
            )));
        }
        let mut pres = Vec::with_capacity(self.layers.len());
        let mut acts = Vec::with_capacity(self.layers.len() - 1);
        let mut current = x.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            let pre = Mlp::affine(&current, layer);
            pres.push(pre.clone());
            if l + 1 < self.layers.len() {
                let mut act = pre;
                for i in 0..act.rows() {
                    for v in act.row_mut(i) {
                        if *v < 0.0 {
                            *v = 0.0;
                        }
                    }
                }
                acts.push(act.clone());
                current = act;
            }
        }
        let logits = pres.last().unwrap().clone();
        Ok((
            logits,
            ForwardCache {
                input: x.clone(),
                pres,
                acts,
            },
        ))
    }

    /// Backpropagate an arbitrary per-sample logit gradient through the
    /// network. Parameter gradients are averaged over the batch, so the
    /// learning rate is insensitive to batch size.
    pub fn backward(&self, cache: &ForwardCache, dl_dz: &Matrix) -> Result<Vec<LayerGrads>> {
        let n = cache.batch_size();
        if dl_dz.rows() != n || dl_dz.cols() != self.output_dim() {
            return Err(Error::shape(format!(
                "logit gradient is {}x{}, expected {}x{}",
                dl_dz.rows(),
                dl_dz.cols(),
                n,
                self.output_dim()
            )));
        }
        if cache.pres.len() != self.layers.len() || cache.input.cols() != self.input_dim() {
            return Err(Error::shape("cache does not match this network".to_string()));
        }
        let inv_n = 1.0 / n as f64;
        let mut grads: Vec<LayerGrads> = Vec::with_capacity(self.layers.len());
        let mut delta = dl_dz.clone();
        for l in (0..self.layers.len()).rev() {
            let input_act: &Matrix = if l == 0 { &cache.input } else { &cache.acts[l - 1] };
            let fan_out = self.widths[l + 1];
            let fan_in = self.widths[l];

            let mut d_weights = Matrix::zeros(fan_out, fan_in);
            let mut d_biases = vec![0.0; fan_out];
            for i in 0..n {
                let drow = delta.row(i);
                let arow = input_act.row(i);
                for o in 0..fan_out {
                    let d = drow[o];
                    d_biases[o] += d;
                    let wrow = d_weights.row_mut(o);
                    for (slot, a) in wrow.iter_mut().zip(arow.iter()) {
                        *slot += d * a;
                    }
                }
            }
            let d_weights = d_weights.scale(inv_n);
            for b in &mut d_biases {
                *b *= inv_n;
            }
            grads.push(LayerGrads {
                weights: d_weights,
                biases: d_biases,
            });

            if l > 0 {
                // delta_prev = (delta W) gated by the ReLU derivative of the
                // previous pre-activation.
                let pre_prev = &cache.pres[l - 1];
                let mut next = Matrix::zeros(n, fan_in);
                for i in 0..n {
                    let drow = delta.row(i);
                    for j in 0..fan_in {
                        if pre_prev[(i, j)] > 0.0 {
                            let mut acc = 0.0;
                            for (o, d) in drow.iter().enumerate() {
                                acc += d * self.layers[l].weights[(o, j)];
                            }
                            next.set(i, j, acc);
                        }
                    }
                }
                delta = next;
            }
        }
        grads.reverse();
        Ok(grads)
    }

    /// Argmax class per sample; ties go to the lowest index.
    pub fn predict(&self, x: &Matrix) -> Result<Vec<usize>> {
        let (logits, _) = self.forward(x)?;
        Ok((0..logits.rows()).map(|i| argmax(logits.row(i))).collect())
    }

    /// Fraction of samples whose argmax logit matches the label.
    pub fn accuracy(&self, x: &Matrix, labels: &[usize]) -> Result<f64> {
        if x.rows() == 0 || labels.is_empty() {
            return Err(Error::invalid("accuracy needs at least one sample"));
        }
        if x.rows() != labels.len() {
            return Err(Error::shape(format!(
                "{} samples but {} labels",
                x.rows(),
                labels.len()
            )));
        }
        let predictions = self.predict(x)?;
        let correct = predictions
            .iter()
            .zip(labels.iter())
            .filter(|(p, y)| p == y)
            .count();
        Ok(correct as f64 / labels.len() as f64)
    }

    /// Cauchy-Schwarz lower bound on the logit-sum term for a given pre-logit:
    /// `-(1/2K^2) ||r||^2 * sum_n (sum_j W_jn)^2`, final bias excluded.
    pub fn prelogit_dilation_bound(&self, r: &[f64]) -> Result<f64> {
        let final_layer = self.layers.last().unwrap();
        let d = final_layer.weights.cols();
        let k = final_layer.weights.rows();
        if r.len() != d {
            return Err(Error::shape(format!(
                "pre-logit has {} entries, final layer expects {}",
                r.len(),
                d
            )));
        }
        let mut col_sq = 0.0;
        for n in 0..d {
            let mut col = 0.0;
            for j in 0..k {
                col += final_layer.weights[(j, n)];
            }
            col_sq += col * col;
        }
        let r_norm = l2_norm(r);
        Ok(-(r_norm * r_norm) * col_sq / (2.0 * (k * k) as f64))
    }

    /// Final-layer logits for a pre-logit vector with the bias excluded, i.e.
    /// `W r`; this is the quantity the dilation bound controls.
    pub fn logits_from_prelogit_no_bias(&self, r: &[f64]) -> Result<Vec<f64>> {
        let final_layer = self.layers.last().unwrap();
        if r.len() != final_layer.weights.cols() {
            return Err(Error::shape("pre-logit length mismatch".to_string()));
        }
        Ok((0..final_layer.weights.rows())
            .map(|o| crate::numerics::dot(final_layer.weights.row(o), r))
            .collect())
    }

    pub fn to_checkpoint_json(&self) -> String {
        let file = CheckpointFile {
            format_version: CHECKPOINT_FORMAT_VERSION,
            widths: self.widths.clone(),
            layers: self
                .layers
                .iter()
                .map(|l| CheckpointLayer {
                    weights: l.weights.data().to_vec(),
                    biases: l.biases.clone(),
                })
                .collect(),
        };
        serde_json::to_string(&file).expect("checkpoint serialization cannot fail")
    }

    pub fn from_checkpoint_json(text: &str) -> Result<Mlp> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(json_err)?;
        let version = value
            .get("format_version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| Error::Parse {
                line: 1,
                message: "missing or non-integer format_version".to_string(),
            })?;
        if version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let file: CheckpointFile = serde_json::from_value(value).map_err(json_err)?;
        let params = file
            .layers
            .into_iter()
            .enumerate()
            .map(|(i, l)| {
                if i + 1 >= file.widths.len() {
                    return Err(Error::shape("more layers than widths imply".to_string()));
                }
                let m = Matrix::from_vec(file.widths[i + 1], file.widths[i], l.weights)?;
                Ok((m, l.biases))
            })
            .collect::<Result<Vec<_>>>()?;
        Mlp::from_parts(file.widths, params)
    }
}

fn json_err(e: serde_json::Error) -> Error {
    Error::Parse {
        line: e.line(),
        message: e.to_string(),
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointFile {
    format_version: u64,
    widths: Vec<usize>,
    layers: Vec<CheckpointLayer>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointLayer {
    weights: Vec<f64>,
    biases: Vec<f64>,
}

/// SGD with momentum and weight decay folded into the gradient:
/// `v <- m v + (g + wd w)`, then `w <- w - lr v`.
#[derive(Debug, Clone)]
pub struct SgdState {
    lr: f64,
    momentum: f64,
    weight_decay: f64,
    velocity: Vec<LayerGrads>,
}

impl SgdState {
    pub fn new(net: &Mlp, lr: f64, momentum: f64, weight_decay: f64) -> Result<SgdState> {
        if !(lr.is_finite() && lr > 0.0) {
            return Err(Error::invalid(format!("learning rate must be positive, got {lr}")));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::invalid(format!(
                "momentum must lie in [0, 1), got {momentum}"
            )));
        }
        if !(weight_decay.is_finite() && weight_decay >= 0.0) {
            return Err(Error::invalid(format!(
                "weight decay must be non-negative, got {weight_decay}"
            )));
        }
        let velocity = net
            .layers
            .iter()
            .map(|l| LayerGrads {
                weights: Matrix::zeros(l.weights.rows(), l.weights.cols()),
                biases: vec![0.0; l.biases.len()],
            })
            .collect();
        Ok(SgdState {
            lr,
            momentum,
            weight_decay,
            velocity,
        })
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.lr = lr;
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn step(&mut self, net: &mut Mlp, grads: &[LayerGrads]) -> Result<()> {
        if grads.len() != net.layers.len() {
            return Err(Error::shape("gradient count does not match layers".to_string()));
        }
        for ((layer, grad), vel) in net
            .layers
            .iter_mut()
            .zip(grads.iter())
            .zip(self.velocity.iter_mut())
        {
            if grad.weights.rows() != layer.weights.rows()
                || grad.weights.cols() != layer.weights.cols()
                || grad.biases.len() != layer.biases.len()
            {
                return Err(Error::shape("gradient shape does not match layer".to_string()));
            }
            for o in 0..layer.weights.rows() {
                let w = layer.weights.row_mut(o);
                let g = grad.weights.row(o);
                let v = vel.weights.row_mut(o);
                for j in 0..w.len() {
                    v[j] = self.momentum * v[j] + (g[j] + self.weight_decay * w[j]);
                    w[j] -= self.lr * v[j];
                }
            }
            for ((b, g), v) in layer
                .biases
                .iter_mut()
                .zip(grad.biases.iter())
                .zip(vel.biases.iter_mut())
            {
                *v = self.momentum * *v + (g + self.weight_decay * *b);
                *b -= self.lr * *v;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::{ce_grad, ce_loss};
    use crate::numerics::softened_softmax;

    #[test]
    fn init_is_deterministic_and_within_bounds() {
        let a = Mlp::init(&[4, 8, 3], 7).unwrap();
        let b = Mlp::init(&[4, 8, 3], 7).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, Mlp::init(&[4, 8, 3], 8).unwrap());

        for (l, layer) in a.layers.iter().enumerate() {
            assert!(layer.biases.iter().all(|b| *b == 0.0));
            let bound = (6.0 / a.widths[l] as f64).sqrt();
            assert!(layer.weights.data().iter().all(|w| w.abs() <= bound));
        }
    }

    #[test]
    fn init_rejects_bad_widths() {
        assert!(Mlp::init(&[4, 3], 0).is_err());
        assert!(Mlp::init(&[4, 0, 3], 0).is_err());
        assert!(Mlp::init(&[4, 8, 1], 0).is_err());
    }

    #[test]
    fn zero_weight_network_outputs_biases() {
        let net = Mlp::from_parts(
            vec![2, 2, 2],
            vec![
                (Matrix::zeros(2, 2), vec![1.0, 2.0]),
                (Matrix::zeros(2, 2), vec![-0.5, 0.25]),
            ],
        )
        .unwrap();
        let x = Matrix::from_rows(&[vec![3.0, -4.0]]).unwrap();
        let (logits, _) = net.forward(&x).unwrap();
        assert_eq!(logits.row(0), &[-0.5, 0.25]);
    }

    #[test]
    fn hand_built_forward_pass() {
        // 2-2-2 net: hidden pre = [x0 + 2 x1, -x0 + x1 + 1], ReLU, then
        // logits = [h0 + h1, 2 h0 - h1 - 1].
        let net = Mlp::from_parts(
            vec![2, 2, 2],
            vec![
                (
                    Matrix::from_rows(&[vec![1.0, 2.0], vec![-1.0, 1.0]]).unwrap(),
                    vec![0.0, 1.0],
                ),
                (
                    Matrix::from_rows(&[vec![1.0, 1.0], vec![2.0, -1.0]]).unwrap(),
                    vec![0.0, -1.0],
                ),
            ],
        )
        .unwrap();
        let x = Matrix::from_rows(&[vec![1.0, 0.5]]).unwrap();
        // hidden pre = [2.0, 0.5] -> ReLU keeps both; logits = [2.5, 2.5].
        let (logits, cache) = net.forward(&x).unwrap();
        assert_eq!(logits.row(0), &[2.5, 2.5]);
        assert_eq!(cache.prelogits().row(0), &[2.0, 0.5]);

        // Negative hidden pre-activation is clamped.
        let x = Matrix::from_rows(&[vec![-2.0, 0.0]]).unwrap();
        // hidden pre = [-2, 3] -> act [0, 3]; logits = [3, -4].
        let (logits, cache) = net.forward(&x).unwrap();
        assert_eq!(logits.row(0), &[3.0, -4.0]);
        assert_eq!(cache.prelogits().row(0), &[0.0, 3.0]);
    }

    #[test]
    fn forward_rejects_wrong_input_dim() {
        let net = Mlp::init(&[4, 8, 3], 0).unwrap();
        let x = Matrix::zeros(2, 5);
        assert!(net.forward(&x).is_err());
    }

    #[test]
    fn zero_logit_gradient_gives_zero_parameter_gradients() {
        let net = Mlp::init(&[3, 4, 3], 1).unwrap();
        let x = Matrix::from_rows(&[vec![0.1, -0.2, 0.3], vec![1.0, 0.5, -1.0]]).unwrap();
        let (_, cache) = net.forward(&x).unwrap();
        let grads = net.backward(&cache, &Matrix::zeros(2, 3)).unwrap();
        for g in grads {
            assert!(g.weights.data().iter().all(|v| *v == 0.0));
            assert!(g.biases.iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn backward_is_linear_in_the_logit_gradient() {
        let net = Mlp::init(&[3, 4, 3], 2).unwrap();
        let x = Matrix::from_rows(&[vec![0.4, -0.7, 0.1]]).unwrap();
        let (_, cache) = net.forward(&x).unwrap();
        let g = Matrix::from_rows(&[vec![0.3, -0.8, 0.5]]).unwrap();
        let grads = net.backward(&cache, &g).unwrap();
        let grads_scaled = net.backward(&cache, &g.scale(2.5)).unwrap();
        for (a, b) in grads.iter().zip(grads_scaled.iter()) {
            for (x, y) in a.weights.data().iter().zip(b.weights.data().iter()) {
                assert!((2.5 * x - y).abs() < 1e-12);
            }
        }
    }

    /// Whole-network finite-difference check with a CE loss on a 3-4-3 net.
    #[test]
    fn backward_matches_finite_differences() {
        let widths = [3usize, 4, 3];
        let net = Mlp::init(&widths, 3).unwrap();
        let mut rng = Rng::new(99);
        let x = Matrix::from_vec(
            4,
            3,
            (0..12).map(|_| rng.uniform(-1.0, 1.0)).collect(),
        )
        .unwrap();
        let labels: Vec<usize> = (0..4).map(|_| rng.index(3)).collect();

        let batch_loss = |net: &Mlp| -> f64 {
            let (logits, _) = net.forward(&x).unwrap();
            let mut total = 0.0;
            for (i, &y) in labels.iter().enumerate() {
                let p = softened_softmax(logits.row(i), 1.0).unwrap();
                total += ce_loss(&p, y).unwrap();
            }
            total / labels.len() as f64
        };

        let (logits, cache) = net.forward(&x).unwrap();
        let mut dl_dz = Matrix::zeros(4, 3);
        for (i, &y) in labels.iter().enumerate() {
            let g = ce_grad(logits.row(i), y).unwrap();
            for (j, v) in g.iter().enumerate() {
                dl_dz.set(i, j, *v);
            }
        }
        let grads = net.backward(&cache, &dl_dz).unwrap();

        let step = 1e-5;
        let mut max_rel = 0.0f64;
        #[allow(clippy::needless_range_loop)] // l indexes layers of several nets
        for l in 0..net.layer_count() {
            for o in 0..net.layers[l].weights.rows() {
                for j in 0..net.layers[l].weights.cols() {
                    let mut plus = net.clone();
                    let mut minus = net.clone();
                    let w = plus.layers[l].weights[(o, j)];
                    plus.layers[l].weights.set(o, j, w + step);
                    minus.layers[l].weights.set(o, j, w - step);
                    let fd = (batch_loss(&plus) - batch_loss(&minus)) / (2.0 * step);
                    let got = grads[l].weights[(o, j)];
                    max_rel = max_rel.max((got - fd).abs() / fd.abs().max(1.0));
                }
            }
            for o in 0..net.layers[l].biases.len() {
                let mut plus = net.clone();
                let mut minus = net.clone();
                plus.layers[l].biases[o] += step;
                minus.layers[l].biases[o] -= step;
                let fd = (batch_loss(&plus) - batch_loss(&minus)) / (2.0 * step);
                let got = grads[l].biases[o];
                max_rel = max_rel.max((got - fd).abs() / fd.abs().max(1.0));
            }
        }
        assert!(max_rel < 1e-5, "max relative error {max_rel}");
    }

    #[test]
    fn sgd_plain_step() {
        let mut net = Mlp::from_parts(
            vec![2, 2, 2],
            vec![
                (Matrix::identity(2), vec![0.0, 0.0]),
                (Matrix::identity(2), vec![0.0, 0.0]),
            ],
        )
        .unwrap();
        let mut sgd = SgdState::new(&net, 0.5, 0.0, 0.0).unwrap();
        let grads = vec![
            LayerGrads {
                weights: Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap(),
                biases: vec![2.0, 0.0],
            },
            LayerGrads {
                weights: Matrix::zeros(2, 2),
                biases: vec![0.0, 0.0],
            },
        ];
        sgd.step(&mut net, &grads).unwrap();
        assert_eq!(net.layers[0].weights[(0, 0)], 0.5);
        assert_eq!(net.layers[0].biases[0], -1.0);
        // Zero gradient, zero decay: parameters unchanged.
        let before = net.clone();
        let zero = vec![
            LayerGrads {
                weights: Matrix::zeros(2, 2),
                biases: vec![0.0, 0.0],
            },
            LayerGrads {
                weights: Matrix::zeros(2, 2),
                biases: vec![0.0, 0.0],
            },
        ];
        let mut sgd = SgdState::new(&net, 0.5, 0.0, 0.0).unwrap();
        sgd.step(&mut net, &zero).unwrap();
        assert_eq!(net, before);
    }

    #[test]
    fn sgd_momentum_recurrence_hand_tracked() {
        // Scalar-ish parameter: track v and w by hand for two steps.
        // g = 1 each step, m = 0.9, wd = 0, lr = 0.1.
        // step 1: v = 1,    w = 1 - 0.1*1    = 0.9
        // step 2: v = 1.9,  w = 0.9 - 0.19   = 0.71
        let mut net = Mlp::from_parts(
            vec![2, 2, 2],
            vec![
                (
                    Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap(),
                    vec![0.0, 0.0],
                ),
                (Matrix::identity(2), vec![0.0, 0.0]),
            ],
        )
        .unwrap();
        let mut sgd = SgdState::new(&net, 0.1, 0.9, 0.0).unwrap();
        let mut g0 = Matrix::zeros(2, 2);
        g0.set(0, 0, 1.0);
        let grads = vec![
            LayerGrads {
                weights: g0,
                biases: vec![0.0, 0.0],
            },
            LayerGrads {
                weights: Matrix::zeros(2, 2),
                biases: vec![0.0, 0.0],
            },
        ];
        sgd.step(&mut net, &grads).unwrap();
        assert!((net.layers[0].weights[(0, 0)] - 0.9).abs() < 1e-15);
        sgd.step(&mut net, &grads).unwrap();
        assert!((net.layers[0].weights[(0, 0)] - 0.71).abs() < 1e-15);
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let net = Mlp::init(&[5, 7, 4], 12345).unwrap();
        let json = net.to_checkpoint_json();
        let loaded = Mlp::from_checkpoint_json(&json).unwrap();
        assert_eq!(net, loaded);
        assert_eq!(json, loaded.to_checkpoint_json());
    }

    #[test]
    fn checkpoint_rejects_truncation_and_bad_version() {
        let net = Mlp::init(&[3, 4, 2], 1).unwrap();
        let json = net.to_checkpoint_json();

        let truncated = &json[..json.len() / 2];
        assert!(matches!(
            Mlp::from_checkpoint_json(truncated),
            Err(Error::Parse { .. })
        ));

        let wrong = json.replace("\"format_version\":1", "\"format_version\":2");
        assert!(matches!(
            Mlp::from_checkpoint_json(&wrong),
            Err(Error::UnsupportedVersion(2))
        ));
    }

    #[test]
    fn accuracy_counts_argmax_hits() {
        // Identity-ish net so logits echo the input.
        let net = Mlp::from_parts(
            vec![2, 2, 2],
            vec![
                (Matrix::identity(2), vec![0.0, 0.0]),
                (Matrix::identity(2), vec![0.0, 0.0]),
            ],
        )
        .unwrap();
        let x = Matrix::from_rows(&[
            vec![2.0, 1.0],
            vec![0.5, 3.0],
            vec![4.0, 0.0],
            vec![1.0, 2.0],
        ])
        .unwrap();
        assert_eq!(net.accuracy(&x, &[0, 1, 0, 1]).unwrap(), 1.0);
        assert_eq!(net.accuracy(&x, &[1, 0, 1, 0]).unwrap(), 0.0);
        assert_eq!(net.accuracy(&x, &[0, 1, 0, 0]).unwrap(), 0.75);
        assert!(net.accuracy(&Matrix::zeros(0, 2), &[]).is_err());
    }

    #[test]
    fn dilation_bound_basics() {
        let net = Mlp::init(&[4, 6, 3], 5).unwrap();
        assert_eq!(net.prelogit_dilation_bound(&[0.0; 6]).unwrap(), 0.0);
        assert!(net.prelogit_dilation_bound(&[0.0; 4]).is_err());
    }

    #[test]
    fn dilation_bound_dominates_logit_sum_term() {
        let mut rng = Rng::new(77);
        for trial in 0..1000 {
            let net = Mlp::init(&[4, 6, 3], trial).unwrap();
            let r: Vec<f64> = (0..6).map(|_| rng.uniform(-2.0, 2.0)).collect();
            let z = net.logits_from_prelogit_no_bias(&r).unwrap();
            let k = 3.0;
            let sum: f64 = z.iter().sum();
            let target = -(sum * sum) / (2.0 * k * k);
            let bound = net.prelogit_dilation_bound(&r).unwrap();
            assert!(bound <= target + 1e-12, "bound {bound} target {target}");
        }
    }
}
