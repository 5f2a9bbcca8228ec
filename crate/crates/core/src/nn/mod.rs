//! Dense ReLU networks with a softmax head, analytic backpropagation and Adam.

mod adam;

pub use adam::{AdamConfig, AdamState};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{config, shape, Result};
use crate::matrix::Matrix;

/// Lower clamp applied to probabilities before any logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    None,
}

/// `y = act(x · W + b)` with `W` stored as (in × out).
#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer {
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn input_width(&self) -> usize {
        self.weights.rows()
    }

    pub fn output_width(&self) -> usize {
        self.weights.cols()
    }

    fn affine(&self, x: &Matrix) -> Result<Matrix> {
        let mut z = x.matmul(&self.weights)?;
        for r in 0..z.rows() {
            for (v, b) in z.row_mut(r).iter_mut().zip(&self.bias) {
                *v += b;
            }
        }
        Ok(z)
    }
}

/// Everything `backward` needs from a forward pass.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    /// Input of every layer; `inputs[0]` is the batch itself.
    pub inputs: Vec<Matrix>,
    /// `x · W + b` of every layer, before the activation.
    pub pre_activations: Vec<Matrix>,
    /// Softmax of the last layer's output, one row per example.
    pub probs: Matrix,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerGradients {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

/// Gradients with the same block layout as the network parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGradients>,
}

impl Gradients {
    pub fn blocks(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()])
            .collect()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.blocks().concat()
    }

    pub fn is_zero(&self) -> bool {
        self.blocks().iter().all(|b| b.iter().all(|&v| v == 0.0))
    }
}

/// One classifier: layers plus its own Adam moments.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpNetwork {
    layers: Vec<DenseLayer>,
    adam: AdamState,
    seed: u64,
}

impl MlpNetwork {
    /// Builds a network with ReLU hidden layers and a linear output layer
    /// feeding the softmax.
    ///
    /// Weights are drawn from U[-a, a] with a = sqrt(6 / fan_in); biases
    /// start at zero. The same `(widths, seed)` always yields bit-identical
    /// parameters.
    pub fn init(widths: &[usize], seed: u64) -> Result<Self> {
        if widths.len() < 2 {
            return Err(config(format!(
                "network needs at least input and output widths, got {widths:?}"
            )));
        }
        if widths.contains(&0) {
            return Err(config(format!("layer widths must be positive: {widths:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(widths.len() - 1);
        for (k, pair) in widths.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let bound = (6.0 / fan_in as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound)
                .map_err(|e| config(format!("init distribution: {e}")))?;
            let data = (0..fan_in * fan_out)
                .map(|_| dist.sample(&mut rng))
                .collect();
            let activation = if k + 2 == widths.len() {
                Activation::None
            } else {
                Activation::Relu
            };
            layers.push(DenseLayer {
                weights: Matrix::from_vec(fan_in, fan_out, data)?,
                bias: vec![0.0; fan_out],
                activation,
            });
        }
        Self::from_layers(layers, seed)
    }

    /// Wraps explicit layers, checking that widths chain.
    pub fn from_layers(layers: Vec<DenseLayer>, seed: u64) -> Result<Self> {
        if layers.is_empty() {
            return Err(config("network needs at least one layer"));
        }
        for (k, layer) in layers.iter().enumerate() {
            if layer.bias.len() != layer.output_width() {
                return Err(shape(format!(
                    "layer {k}: bias length {} != output width {}",
                    layer.bias.len(),
                    layer.output_width()
                )));
            }
            if let Some(next) = layers.get(k + 1) {
                if next.input_width() != layer.output_width() {
                    return Err(shape(format!(
                        "layer {k} outputs {} values but layer {} expects {}",
                        layer.output_width(),
                        k + 1,
                        next.input_width()
                    )));
                }
            }
        }
        let sizes: Vec<usize> = layers
            .iter()
            .flat_map(|l| [l.weights.as_slice().len(), l.bias.len()])
            .collect();
        Ok(Self {
            layers,
            adam: AdamState::new(&sizes),
            seed,
        })
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    /// Direct parameter access, e.g. for finite-difference checks.
    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn adam_state(&self) -> &AdamState {
        &self.adam
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].input_width()
    }

    pub fn output_width(&self) -> usize {
        self.layers[self.layers.len() - 1].output_width()
    }

    pub fn widths(&self) -> Vec<usize> {
        std::iter::once(self.input_width())
            .chain(self.layers.iter().map(DenseLayer::output_width))
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.as_slice().len() + l.bias.len())
            .sum()
    }

    /// All parameters, block by block (W0, b0, W1, b1, ...).
    pub fn parameters(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.as_slice().iter().chain(&l.bias))
            .copied()
            .collect()
    }

    fn block_names(&self) -> Vec<String> {
        (0..self.layers.len())
            .flat_map(|k| [format!("layer {k} weights"), format!("layer {k} bias")])
            .collect()
    }

    pub fn forward(&self, x: &Matrix) -> Result<ForwardTrace> {
        self.check_input(x)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        let mut current = x.clone();
        for layer in &self.layers {
            let z = layer.affine(&current)?;
            let a = activate(&z, layer.activation);
            inputs.push(std::mem::replace(&mut current, a));
            pre_activations.push(z);
        }
        let probs = softmax_rows(&current);
        Ok(ForwardTrace {
            inputs,
            pre_activations,
            probs,
        })
    }

    /// Softmax outputs only; does not retain intermediate activations.
    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x)?;
        let mut current = self.layers[0].affine(x)?;
        apply_activation(&mut current, self.layers[0].activation);
        for layer in &self.layers[1..] {
            current = layer.affine(&current)?;
            apply_activation(&mut current, layer.activation);
        }
        Ok(softmax_rows(&current))
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.input_width() {
            return Err(shape(format!(
                "input has {} features, network expects {}",
                x.cols(),
                self.input_width()
            )));
        }
        Ok(())
    }

    /// Gradients of an upstream loss with respect to every parameter, given
    /// `dL/dp` for the softmax outputs recorded in `trace`.
    ///
    /// Contributions are summed over the batch rows; any averaging belongs
    /// in `dl_dp`.
    pub fn backward(&self, trace: &ForwardTrace, dl_dp: &Matrix) -> Result<Gradients> {
        if dl_dp.shape() != trace.probs.shape() {
            return Err(shape(format!(
                "dL/dp is {:?} but probabilities are {:?}",
                dl_dp.shape(),
                trace.probs.shape()
            )));
        }
        if trace.inputs.len() != self.layers.len() {
            return Err(shape("trace does not belong to this network"));
        }

        // Softmax Jacobian: dz_j = p_j (g_j - Σ_k g_k p_k).
        let p = &trace.probs;
        let mut dz = Matrix::zeros(p.rows(), p.cols());
        for r in 0..p.rows() {
            let (pr, gr) = (p.row(r), dl_dp.row(r));
            let dot: f64 = pr.iter().zip(gr).map(|(a, b)| a * b).sum();
            for ((d, pj), gj) in dz.row_mut(r).iter_mut().zip(pr).zip(gr) {
                *d = pj * (gj - dot);
            }
        }

        let mut grads = Vec::with_capacity(self.layers.len());
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            if layer.activation == Activation::Relu {
                let z = &trace.pre_activations[k];
                for (d, &zv) in dz.as_mut_slice().iter_mut().zip(z.as_slice()) {
                    if zv <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            let weights = trace.inputs[k].t_matmul(&dz)?;
            let bias = dz.column_sums();
            if k > 0 {
                dz = dz.matmul_t(&layer.weights)?;
            }
            grads.push(LayerGradients { weights, bias });
        }
        grads.reverse();
        Ok(Gradients { layers: grads })
    }

    /// Applies one Adam step with this network's own moment estimates.
    pub fn adam_step(&mut self, grads: &Gradients, cfg: &AdamConfig) -> Result<()> {
        if grads.layers.len() != self.layers.len() {
            return Err(shape(format!(
                "{} gradient layers for a {}-layer network",
                grads.layers.len(),
                self.layers.len()
            )));
        }
        let names = self.block_names();
        let grad_blocks = grads.blocks();
        let mut params: Vec<&mut [f64]> = self
            .layers
            .iter_mut()
            .flat_map(|l| [l.weights.as_mut_slice(), l.bias.as_mut_slice()])
            .collect();
        self.adam.update(&mut params, &grad_blocks, &names, cfg)
    }
}

fn activate(z: &Matrix, activation: Activation) -> Matrix {
    let mut a = z.clone();
    apply_activation(&mut a, activation);
    a
}

fn apply_activation(z: &mut Matrix, activation: Activation) {
    if activation == Activation::Relu {
        for v in z.as_mut_slice() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
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
    out
}

/// Index of the largest entry of each row; ties go to the lowest index.
pub fn argmax_rows(m: &Matrix) -> Vec<usize> {
    (0..m.rows())
        .map(|r| {
            let row = m.row(r);
            let mut best = 0;
            for (j, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn zero_net(widths: &[usize]) -> MlpNetwork {
        let mut net = MlpNetwork::init(widths, 0).unwrap();
        for l in net.layers_mut() {
            l.weights.as_mut_slice().fill(0.0);
        }
        net
    }

    #[test]
    fn mnist_architecture_parameter_count() {
        let net = MlpNetwork::init(&[784, 256, 10], 1).unwrap();
        assert_eq!(net.parameter_count(), 784 * 256 + 256 + 256 * 10 + 10);
        assert_eq!(net.widths(), vec![784, 256, 10]);
        assert_eq!(net.layers()[0].activation, Activation::Relu);
        assert_eq!(net.layers()[1].activation, Activation::None);
    }

    #[test]
    fn init_is_seed_deterministic() {
        let a = MlpNetwork::init(&[2, 2], 7).unwrap();
        let b = MlpNetwork::init(&[2, 2], 7).unwrap();
        let bits =
            |n: &MlpNetwork| -> Vec<u64> { n.parameters().iter().map(|v| v.to_bits()).collect() };
        assert_eq!(bits(&a), bits(&b));
        let c = MlpNetwork::init(&[2, 2], 8).unwrap();
        assert_ne!(a.parameters(), c.parameters());
    }

    #[test]
    fn init_respects_fan_in_bound_and_zero_bias() {
        let net = MlpNetwork::init(&[24, 16, 3], 3).unwrap();
        for l in net.layers() {
            let bound = (6.0 / l.input_width() as f64).sqrt();
            assert!(l.weights.as_slice().iter().all(|w| w.abs() <= bound));
            assert!(l.bias.iter().all(|&b| b == 0.0));
        }
    }

    #[test]
    fn invalid_widths_are_config_errors() {
        assert!(matches!(
            MlpNetwork::init(&[], 0),
            Err(crate::Error::Config(_))
        ));
        assert!(matches!(
            MlpNetwork::init(&[4], 0),
            Err(crate::Error::Config(_))
        ));
        assert!(matches!(
            MlpNetwork::init(&[4, 0, 2], 0),
            Err(crate::Error::Config(_))
        ));
    }

    #[test]
    fn zero_weights_give_uniform_probabilities() {
        let net = zero_net(&[3, 5, 4]);
        let x = Matrix::from_rows(&[vec![1.0, -2.0, 0.5], vec![9.0, 9.0, 9.0]]).unwrap();
        let trace = net.forward(&x).unwrap();
        assert!(trace.probs.as_slice().iter().all(|&p| p == 0.25));
    }

    #[test]
    fn closed_form_softmax() {
        let layer = DenseLayer {
            weights: Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap(),
            bias: vec![0.0, 0.0],
            activation: Activation::None,
        };
        let net = MlpNetwork::from_layers(vec![layer], 0).unwrap();
        let x = Matrix::from_rows(&[vec![0.0, 3f64.ln()]]).unwrap();
        let p = net.forward(&x).unwrap().probs;
        assert!((p.get(0, 0) - 0.25).abs() < 1e-15);
        assert!((p.get(0, 1) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn softmax_survives_huge_logits() {
        let logits = Matrix::from_rows(&[vec![1000.0, 0.0, -1000.0]]).unwrap();
        let p = softmax_rows(&logits);
        assert!(p.is_finite());
        assert!((p.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn input_shape_mismatch() {
        let net = MlpNetwork::init(&[3, 2], 0).unwrap();
        let x = Matrix::zeros(1, 4);
        assert!(matches!(net.forward(&x), Err(crate::Error::Shape(_))));
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let net = MlpNetwork::init(&[4, 6, 3], 11).unwrap();
        let x = Matrix::from_rows(&vec![vec![0.1, 0.2, -0.3, 0.4]; 3]).unwrap();
        let trace = net.forward(&x).unwrap();
        let g = net.backward(&trace, &Matrix::zeros(3, 3)).unwrap();
        assert!(g.is_zero());
        assert!(net.backward(&trace, &Matrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn duplicated_example_doubles_gradient() {
        let net = MlpNetwork::init(&[4, 5, 3], 5).unwrap();
        let row = vec![0.3, -0.7, 1.1, 0.2];
        let upstream = vec![-0.4, 0.9, 0.25];
        let single = net
            .forward(&Matrix::from_rows(std::slice::from_ref(&row)).unwrap())
            .unwrap();
        let g1 = net
            .backward(
                &single,
                &Matrix::from_rows(std::slice::from_ref(&upstream)).unwrap(),
            )
            .unwrap();
        let double = net
            .forward(&Matrix::from_rows(&[row.clone(), row]).unwrap())
            .unwrap();
        let g2 = net
            .backward(
                &double,
                &Matrix::from_rows(&[upstream.clone(), upstream]).unwrap(),
            )
            .unwrap();
        for (a, b) in g1.flatten().iter().zip(g2.flatten()) {
            assert_eq!(2.0 * a, b);
        }
    }

    /// Cross-entropy on one example against central differences.
    #[test]
    fn cross_entropy_gradient_matches_finite_differences() {
        let mut net = MlpNetwork::init(&[5, 4, 3], 21).unwrap();
        let x = Matrix::from_rows(&[vec![0.4, -0.2, 0.9, 0.1, -0.6]]).unwrap();
        let label = 2;
        let loss = |n: &MlpNetwork| -n.forward(&x).unwrap().probs.get(0, label).ln();
        let trace = net.forward(&x).unwrap();
        let mut upstream = Matrix::zeros(1, 3);
        upstream.set(0, label, -1.0 / trace.probs.get(0, label));
        let analytic = net.backward(&trace, &upstream).unwrap().flatten();

        let h = 1e-5;
        let mut idx = 0;
        for k in 0..net.layers().len() {
            for block in 0..2 {
                let len = if block == 0 {
                    net.layers()[k].weights.as_slice().len()
                } else {
                    net.layers()[k].bias.len()
                };
                for i in 0..len {
                    let probe = |n: &mut MlpNetwork, delta: f64| {
                        let l = &mut n.layers_mut()[k];
                        if block == 0 {
                            l.weights.as_mut_slice()[i] += delta;
                        } else {
                            l.bias[i] += delta;
                        }
                    };
                    probe(&mut net, h);
                    let up = loss(&net);
                    probe(&mut net, -2.0 * h);
                    let down = loss(&net);
                    probe(&mut net, h);
                    let numeric = (up - down) / (2.0 * h);
                    let a = analytic[idx];
                    let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
                    assert!(rel < 1e-4, "param {idx}: {a} vs {numeric}");
                    idx += 1;
                }
            }
        }
    }

    #[test]
    fn adam_step_zero_gradient_is_noop_and_counts() {
        let mut net = MlpNetwork::init(&[3, 4, 2], 2).unwrap();
        let before = net.parameters();
        let x = Matrix::from_rows(&[vec![1.0, 2.0, 3.0]]).unwrap();
        let trace = net.forward(&x).unwrap();
        let g = net.backward(&trace, &Matrix::zeros(1, 2)).unwrap();
        net.adam_step(&g, &AdamConfig::default()).unwrap();
        assert_eq!(before, net.parameters());
        assert_eq!(net.adam_state().step(), 1);
    }

    #[test]
    fn adam_state_mirrors_parameter_blocks() {
        let net = MlpNetwork::init(&[6, 5, 4], 9).unwrap();
        assert_eq!(net.adam_state().block_sizes(), vec![30, 5, 20, 4]);
    }

    #[test]
    fn argmax_ties_pick_lowest_index() {
        let m = Matrix::from_rows(&[vec![0.2, 0.4, 0.4], vec![0.5, 0.5, 0.0]]).unwrap();
        assert_eq!(argmax_rows(&m), vec![1, 0]);
    }

    proptest! {
        #[test]
        fn softmax_rows_sum_to_one(
            seed in 0u64..1000,
            rows in 1usize..8,
            scale in 0.1f64..20.0,
        ) {
            let net = MlpNetwork::init(&[6, 5, 4], seed).unwrap();
            let data: Vec<f64> = (0..rows * 6)
                .map(|i| ((i as f64 + seed as f64) * 1.7).sin() * scale)
                .collect();
            let x = Matrix::from_vec(rows, 6, data).unwrap();
            let p = net.forward(&x).unwrap().probs;
            for r in 0..rows {
                let s: f64 = p.row(r).iter().sum();
                prop_assert!((s - 1.0).abs() < 1e-9);
                prop_assert!(p.row(r).iter().all(|&v| (0.0..=1.0).contains(&v)));
            }
        }
    }
}
