use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::numcore::{matmul, Matrix, Rng};

/// Initial PReLU slope.
pub const PRELU_INIT: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Prelu,
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Relu => "relu",
            Activation::Prelu => "prelu",
        })
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "relu" => Ok(Activation::Relu),
            "prelu" => Ok(Activation::Prelu),
            other => Err(Error::contract(format!(
                "unknown activation {other:?} (expected relu or prelu)"
            ))),
        }
    }
}

/// Dense embedding network layout: `input → hidden… → feature_dim`, with the
/// activation after every hidden layer and a linear embedding layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub feature_dim: usize,
    pub activation: Activation,
    pub init_seed: u64,
}

impl NetworkSpec {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.feature_dim == 0 || self.hidden_dims.contains(&0) {
            return Err(Error::contract("network dimensions must all be >= 1"));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` of every layer.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 1);
        let mut fan_in = self.input_dim;
        for &h in self.hidden_dims.iter().chain(std::iter::once(&self.feature_dim)) {
            dims.push((fan_in, h));
            fan_in = h;
        }
        dims
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// `fan_in x fan_out`
    pub weights: Matrix,
    /// `1 x fan_out`
    pub bias: Matrix,
    /// PReLU slopes, `1 x fan_out`; only on hidden layers of a PReLU network.
    pub slope: Option<Matrix>,
}

impl DenseLayer {
    fn params(&self) -> impl Iterator<Item = &Matrix> {
        [&self.weights, &self.bias].into_iter().chain(self.slope.as_ref())
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut Matrix> {
        [&mut self.weights, &mut self.bias]
            .into_iter()
            .chain(self.slope.as_mut())
    }
}

/// Network parameters plus one momentum buffer per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub spec: NetworkSpec,
    pub layers: Vec<DenseLayer>,
    pub velocity: Vec<Matrix>,
}

/// Intermediates of a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    inputs: Matrix,
    /// pre-activation of every layer
    pre: Vec<Matrix>,
    /// output of every layer (input to the next)
    post: Vec<Matrix>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub weights: Matrix,
    pub bias: Matrix,
    pub slope: Option<Matrix>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGrads {
    pub layers: Vec<LayerGrads>,
    /// Gradient with respect to the network input.
    pub inputs: Matrix,
}

impl ForwardCache {
    /// Pre-activation values of every layer, first layer first.
    pub fn pre_activations(&self) -> &[Matrix] {
        &self.pre
    }
}

impl NetworkGrads {
    /// Gradients in the same order as [`NetworkState::params`].
    pub fn tensors(&self) -> Vec<&Matrix> {
        self.layers
            .iter()
            .flat_map(|l| [&l.weights, &l.bias].into_iter().chain(l.slope.as_ref()))
            .collect()
    }
}

impl NetworkState {
    /// Glorot-uniform weights, zero biases, PReLU slopes at [`PRELU_INIT`].
    pub fn init(spec: &NetworkSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = Rng::derived(spec.init_seed, 0);
        let dims = spec.layer_dims();
        let last = dims.len() - 1;
        let layers: Vec<DenseLayer> = dims
            .iter()
            .enumerate()
            .map(|(l, &(fan_in, fan_out))| {
                let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                DenseLayer {
                    weights: Matrix::from_fn(fan_in, fan_out, |_, _| rng.uniform_in(-bound, bound)),
                    bias: Matrix::zeros(1, fan_out),
                    slope: (l != last && spec.activation == Activation::Prelu)
                        .then(|| Matrix::filled(1, fan_out, PRELU_INIT)),
                }
            })
            .collect();
        Ok(Self::from_layers(spec.clone(), layers))
    }

    /// Wraps existing parameters and allocates zeroed momentum buffers.
    pub fn from_layers(spec: NetworkSpec, layers: Vec<DenseLayer>) -> Self {
        let velocity = layers
            .iter()
            .flat_map(|l| l.params().map(|p| Matrix::zeros(p.rows(), p.cols())).collect::<Vec<_>>())
            .collect();
        NetworkState {
            spec,
            layers,
            velocity,
        }
    }

    pub fn params(&self) -> Vec<&Matrix> {
        self.layers.iter().flat_map(DenseLayer::params).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Matrix> {
        self.layers.iter_mut().flat_map(DenseLayer::params_mut).collect()
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.rows() * p.cols()).sum()
    }

    pub fn reset_velocity(&mut self) {
        self.velocity.iter_mut().for_each(|v| v.scale(0.0));
    }

    pub fn forward(&self, inputs: &Matrix) -> Result<(Matrix, ForwardCache)> {
        if inputs.cols() != self.spec.input_dim {
            return Err(Error::shape(
                "forward",
                format!(
                    "input dim {} vs network input dim {}",
                    inputs.cols(),
                    self.spec.input_dim
                ),
            ));
        }
        let last = self.layers.len() - 1;
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post = Vec::with_capacity(self.layers.len());
        let mut current = inputs.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = matmul(&current, &layer.weights)?;
            for r in 0..z.rows() {
                for (v, b) in z.row_mut(r).iter_mut().zip(layer.bias.as_slice()) {
                    *v += b;
                }
            }
            let out = if l == last {
                z.clone()
            } else {
                activate(&z, layer.slope.as_ref())
            };
            pre.push(z);
            post.push(out.clone());
            current = out;
        }
        Ok((
            current,
            ForwardCache {
                inputs: inputs.clone(),
                pre,
                post,
            },
        ))
    }

    pub fn backward(&self, cache: &ForwardCache, grad_features: &Matrix) -> Result<NetworkGrads> {
        let stale = cache.pre.len() != self.layers.len()
            || cache
                .pre
                .iter()
                .zip(&self.layers)
                .any(|(z, layer)| z.cols() != layer.weights.cols())
            || cache.inputs.cols() != self.spec.input_dim;
        if stale {
            return Err(Error::contract("forward cache does not belong to this network"));
        }
        let out = cache.post.last().expect("at least one layer");
        if grad_features.shape() != out.shape() {
            return Err(Error::shape(
                "backward",
                format!(
                    "gradient {}x{} vs features {}x{}",
                    grad_features.rows(),
                    grad_features.cols(),
                    out.rows(),
                    out.cols()
                ),
            ));
        }

        let last = self.layers.len() - 1;
        let mut grads: Vec<LayerGrads> = Vec::with_capacity(self.layers.len());
        let mut g = grad_features.clone();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let mut slope_grad = None;
            if l != last {
                let z = &cache.pre[l];
                let mut sg = layer.slope.as_ref().map(|s| Matrix::zeros(1, s.cols()));
                for r in 0..g.rows() {
                    for c in 0..g.cols() {
                        let zv = z.get(r, c);
                        if zv > 0.0 {
                            continue;
                        }
                        let upstream = g.get(r, c);
                        match (&layer.slope, sg.as_mut()) {
                            (Some(a), Some(sg)) => {
                                sg.add_at(0, c, upstream * zv);
                                g.set(r, c, upstream * a.get(0, c));
                            }
                            _ => g.set(r, c, 0.0),
                        }
                    }
                }
                slope_grad = sg;
            }
            let layer_input = if l == 0 { &cache.inputs } else { &cache.post[l - 1] };
            let weights = matmul(&layer_input.transpose(), &g)?;
            let mut bias = Matrix::zeros(1, g.cols());
            for r in 0..g.rows() {
                for (b, v) in bias.as_mut_slice().iter_mut().zip(g.row(r)) {
                    *b += v;
                }
            }
            let next = matmul(&g, &layer.weights.transpose())?;
            grads.push(LayerGrads {
                weights,
                bias,
                slope: slope_grad,
            });
            g = next;
        }
        grads.reverse();
        Ok(NetworkGrads {
            layers: grads,
            inputs: g,
        })
    }
}

fn activate(z: &Matrix, slope: Option<&Matrix>) -> Matrix {
    let mut out = z.clone();
    for r in 0..out.rows() {
        for (c, v) in out.row_mut(r).iter_mut().enumerate() {
            if *v <= 0.0 {
                *v = match slope {
                    Some(a) => a.get(0, c) * *v,
                    None => 0.0,
                };
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{numeric_gradient, relative_error};

    fn spec(activation: Activation, hidden: Vec<usize>) -> NetworkSpec {
        NetworkSpec {
            input_dim: 5,
            hidden_dims: hidden,
            feature_dim: 3,
            activation,
            init_seed: 42,
        }
    }

    #[test]
    fn identity_layer_passes_nonnegative_input() {
        let s = NetworkSpec {
            input_dim: 3,
            hidden_dims: vec![],
            feature_dim: 3,
            activation: Activation::Relu,
            init_seed: 0,
        };
        let layer = DenseLayer {
            weights: Matrix::identity(3),
            bias: Matrix::zeros(1, 3),
            slope: None,
        };
        let net = NetworkState::from_layers(s, vec![layer]);
        let x = Matrix::new(2, 3, vec![0.0, 1.0, 2.0, 3.5, 0.25, 9.0]).unwrap();
        assert_eq!(net.forward(&x).unwrap().0, x);
    }

    #[test]
    fn zero_input_zero_bias_gives_zero_features() {
        for act in [Activation::Relu, Activation::Prelu] {
            let net = NetworkState::init(&spec(act, vec![7, 4])).unwrap();
            let (f, _) = net.forward(&Matrix::zeros(3, 5)).unwrap();
            assert!(f.as_slice().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let net = NetworkState::init(&spec(Activation::Prelu, vec![6])).unwrap();
        let x = Matrix::from_fn(4, 5, |i, j| (i as f64 - j as f64) * 0.3);
        let (f, cache) = net.forward(&x).unwrap();
        let g = net.backward(&cache, &Matrix::zeros(f.rows(), f.cols())).unwrap();
        assert!(g.tensors().iter().all(|t| t.as_slice().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn single_linear_layer_closed_form() {
        let net = NetworkState::init(&spec(Activation::Relu, vec![])).unwrap();
        let x = Matrix::from_fn(4, 5, |i, j| ((i * 5 + j) as f64).sin());
        let (_, cache) = net.forward(&x).unwrap();
        let up = Matrix::from_fn(4, 3, |i, j| ((i + 2 * j) as f64).cos());
        let g = net.backward(&cache, &up).unwrap();
        assert_eq!(g.layers[0].weights, matmul(&x.transpose(), &up).unwrap());
    }

    #[test]
    fn mismatched_cache_and_inputs_are_rejected() {
        let a = NetworkState::init(&spec(Activation::Relu, vec![6])).unwrap();
        let b = NetworkState::init(&spec(Activation::Relu, vec![6, 2])).unwrap();
        let x = Matrix::zeros(2, 5);
        let (f, cache) = a.forward(&x).unwrap();
        assert!(b.backward(&cache, &f).is_err());
        assert!(a.backward(&cache, &Matrix::zeros(2, 4)).is_err());
        assert!(a.forward(&Matrix::zeros(2, 4)).is_err());
    }

    /// Finite differences of `<v, f(x)>` against backprop, for inputs and
    /// every parameter.
    #[test]
    fn backprop_matches_finite_differences() {
        for act in [Activation::Relu, Activation::Prelu] {
            let mut net = NetworkState::init(&spec(act, vec![7, 6])).unwrap();
            // push slopes and biases away from their init values
            let mut rng = Rng::new(9);
            for p in net.params_mut() {
                p.as_mut_slice().iter_mut().for_each(|v| *v += 0.1 * rng.normal());
            }
            let x = Matrix::from_fn(4, 5, |_, _| rng.normal());
            let v = Matrix::from_fn(4, 3, |_, _| rng.normal());
            let objective = |n: &NetworkState, x: &Matrix| {
                let (f, _) = n.forward(x).unwrap();
                f.as_slice().iter().zip(v.as_slice()).map(|(a, b)| a * b).sum::<f64>()
            };
            let (_, cache) = net.forward(&x).unwrap();
            let grads = net.backward(&cache, &v).unwrap();

            let mut xs = x.as_slice().to_vec();
            let num = numeric_gradient(&mut xs, 1e-5, |vals| {
                objective(&net, &Matrix::new(4, 5, vals.to_vec()).unwrap())
            });
            for (a, n) in grads.inputs.as_slice().iter().zip(&num) {
                assert!(relative_error(*a, *n) < 1e-5, "{act} input: {a} vs {n}");
            }

            let analytic: Vec<Vec<f64>> = grads.tensors().iter().map(|t| t.as_slice().to_vec()).collect();
            for (t, expected) in analytic.iter().enumerate() {
                let mut vals = net.params()[t].as_slice().to_vec();
                let num = numeric_gradient(&mut vals, 1e-5, |vals| {
                    let mut probe = net.clone();
                    probe.params_mut()[t].as_mut_slice().copy_from_slice(vals);
                    objective(&probe, &x)
                });
                for (a, n) in expected.iter().zip(&num) {
                    assert!(relative_error(*a, *n) < 1e-5, "{act} tensor {t}: {a} vs {n}");
                }
            }
        }
    }
}
