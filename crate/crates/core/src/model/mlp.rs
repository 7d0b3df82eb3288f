use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::{dot, Real};

/// Affine layer `y = W x + b` with `W` stored out×in.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense<T> {
    pub weight: Matrix<T>,
    pub bias: Vec<T>,
}

impl<T: Real> Dense<T> {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Matrix::zeros(output, input),
            bias: vec![T::zero(); output],
        }
    }

    /// Fan-in scaled uniform initialization, `U(-1/√in, 1/√in)` for weights and biases.
    pub fn init<R: Rng + ?Sized>(input: usize, output: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (input as f64).sqrt();
        let mut layer = Self::zeros(input, output);
        for w in layer.weight.data_mut() {
            *w = T::lit(rng.gen_range(-bound..bound));
        }
        for b in &mut layer.bias {
            *b = T::lit(rng.gen_range(-bound..bound));
        }
        layer
    }

    pub fn input_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.rows()
    }

    fn apply(&self, x: &[T]) -> Vec<T> {
        (0..self.output_dim())
            .map(|o| dot(self.weight.row(o), x) + self.bias[o])
            .collect()
    }
}

/// Feed-forward network with `tanh` between layers and a linear last layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp<T> {
    layers: Vec<Dense<T>>,
}

/// Activations recorded by [`Mlp::forward`].
#[derive(Clone, Debug)]
pub struct MlpCache<T> {
    /// Input to each layer.
    inputs: Vec<Vec<T>>,
    output: Vec<T>,
}

impl<T: Real> MlpCache<T> {
    pub fn output(&self) -> &[T] {
        &self.output
    }
}

/// Gradient record with the same layout as [`Mlp`].
#[derive(Clone, Debug, PartialEq)]
pub struct MlpGrads<T> {
    pub layers: Vec<Dense<T>>,
}

impl<T: Real> MlpGrads<T> {
    pub fn zeros_like(mlp: &Mlp<T>) -> Self {
        Self {
            layers: mlp
                .layers
                .iter()
                .map(|l| Dense::zeros(l.input_dim(), l.output_dim()))
                .collect(),
        }
    }

    pub fn accumulate(&mut self, other: &Self) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight.add_assign_scaled(&b.weight, T::one());
            for (x, &y) in a.bias.iter_mut().zip(&b.bias) {
                *x = *x + y;
            }
        }
    }

    pub fn scale(&mut self, s: T) {
        for l in &mut self.layers {
            l.weight = l.weight.scale(s);
            l.bias.iter_mut().for_each(|b| *b = *b * s);
        }
    }

    pub fn slices(&self) -> Vec<&[T]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.data(), l.bias.as_slice()])
            .collect()
    }

    pub fn is_zero(&self) -> bool {
        self.slices()
            .iter()
            .all(|s| s.iter().all(|&x| x == T::zero()))
    }
}

impl<T: Real> Mlp<T> {
    pub fn new(layers: Vec<Dense<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::ShapeMismatch(
                "an MLP needs at least one layer".into(),
            ));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(Error::ShapeMismatch(format!(
                    "layer {i} outputs {} but layer {} expects {}",
                    pair[0].output_dim(),
                    i + 1,
                    pair[1].input_dim()
                )));
            }
        }
        for l in &layers {
            if l.bias.len() != l.output_dim() {
                return Err(Error::ShapeMismatch("bias length".into()));
            }
            if !l.weight.is_finite() || l.bias.iter().any(|b| !b.is_finite()) {
                return Err(Error::NonFinite("mlp parameters".into()));
            }
        }
        Ok(Self { layers })
    }

    /// Randomly initialized network with the given layer widths.
    pub fn init<R: Rng + ?Sized>(widths: &[usize], rng: &mut R) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::ShapeMismatch("need input and output widths".into()));
        }
        Self::new(
            widths
                .windows(2)
                .map(|w| Dense::init(w[0], w[1], rng))
                .collect(),
        )
    }

    pub fn layers(&self) -> &[Dense<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense<T>] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.data().len() + l.bias.len())
            .sum()
    }

    pub fn forward(&self, x: &[T]) -> Result<(Vec<T>, MlpCache<T>)> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch(format!(
                "input has length {}, network expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = x.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut y = layer.apply(&h);
            if i < last {
                y.iter_mut().for_each(|v| *v = v.tanh());
            }
            inputs.push(std::mem::replace(&mut h, y));
        }
        Ok((h.clone(), MlpCache { inputs, output: h }))
    }

    /// Returns parameter gradients and the gradient with respect to the input.
    pub fn backward(&self, cache: &MlpCache<T>, grad_out: &[T]) -> Result<(MlpGrads<T>, Vec<T>)> {
        if cache.inputs.len() != self.layers.len()
            || cache
                .inputs
                .iter()
                .zip(&self.layers)
                .any(|(x, l)| x.len() != l.input_dim())
        {
            return Err(Error::StaleCache(
                "layer inputs disagree with network".into(),
            ));
        }
        if grad_out.len() != self.output_dim() {
            return Err(Error::StaleCache(format!(
                "output gradient has length {}, network outputs {}",
                grad_out.len(),
                self.output_dim()
            )));
        }
        let mut grads = MlpGrads::zeros_like(self);
        let mut g = grad_out.to_vec();
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let x = &cache.inputs[i];
            let gl = &mut grads.layers[i];
            for (o, &go) in g.iter().enumerate() {
                gl.bias[o] = go;
                if go == T::zero() {
                    continue;
                }
                for (w, &xi) in gl.weight.data_mut()[o * x.len()..(o + 1) * x.len()]
                    .iter_mut()
                    .zip(x)
                {
                    *w = go * xi;
                }
            }
            let mut gx = vec![T::zero(); x.len()];
            for (o, &go) in g.iter().enumerate() {
                if go == T::zero() {
                    continue;
                }
                for (gxi, &w) in gx.iter_mut().zip(layer.weight.row(o)) {
                    *gxi = *gxi + go * w;
                }
            }
            if i > 0 {
                // x = tanh(pre) for hidden layers
                for (gxi, &xi) in gx.iter_mut().zip(x) {
                    *gxi = *gxi * (T::one() - xi * xi);
                }
            }
            g = gx;
        }
        Ok((grads, g))
    }

    pub fn param_slices(&self) -> Vec<&[T]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.data(), l.bias.as_slice()])
            .collect()
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [T]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weight.data_mut(), l.bias.as_mut_slice()])
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.param_slices()
            .iter()
            .all(|s| s.iter().all(|x| x.is_finite()))
    }
}

/// Per-modality encoder. The loss sees `z / ‖z‖`; [`MlpEncoder::backward`]
/// takes the gradient with respect to that normalized output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpEncoder<T> {
    pub mlp: Mlp<T>,
}

#[derive(Clone, Debug)]
pub struct EncoderCache<T> {
    mlp: MlpCache<T>,
    norm: T,
    normalized: Vec<T>,
}

impl<T: Real> EncoderCache<T> {
    pub fn normalized(&self) -> &[T] {
        &self.normalized
    }

    pub fn pre_norm(&self) -> &[T] {
        self.mlp.output()
    }
}

impl<T: Real> MlpEncoder<T> {
    /// Two-layer tanh encoder `input → hidden → output`.
    pub fn init<R: Rng + ?Sized>(
        input: usize,
        hidden: usize,
        output: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Self {
            mlp: Mlp::init(&[input, hidden, output], rng)?,
        })
    }

    pub fn output_dim(&self) -> usize {
        self.mlp.output_dim()
    }

    /// Pre-normalization output and the cache for [`MlpEncoder::backward`].
    pub fn forward(&self, x: &[T]) -> Result<(Vec<T>, EncoderCache<T>)> {
        let (z, cache) = self.mlp.forward(x)?;
        let norm = dot(&z, &z).sqrt();
        let normalized = if norm > T::zero() {
            z.iter().map(|&v| v / norm).collect()
        } else {
            vec![T::zero(); z.len()]
        };
        Ok((
            z,
            EncoderCache {
                mlp: cache,
                norm,
                normalized,
            },
        ))
    }

    /// Chain rule through `z/‖z‖` and the network:
    /// `∂L/∂z_pre = (I − ẑẑᵀ)·∂L/∂ẑ / ‖z_pre‖`.
    pub fn backward(
        &self,
        cache: &EncoderCache<T>,
        grad_normalized: &[T],
    ) -> Result<(MlpGrads<T>, Vec<T>)> {
        if grad_normalized.len() != cache.normalized.len() {
            return Err(Error::StaleCache("gradient length".into()));
        }
        if cache.norm == T::zero() {
            return Err(Error::NonFinite("encoder output has zero norm".into()));
        }
        let zh = &cache.normalized;
        let proj = dot(zh, grad_normalized);
        let g_pre: Vec<T> = grad_normalized
            .iter()
            .zip(zh)
            .map(|(&g, &z)| (g - proj * z) / cache.norm)
            .collect();
        self.mlp.backward(&cache.mlp, &g_pre)
    }
}

/// Binary match predictor over a concatenated modality tuple:
/// `k·d → hidden (tanh) → 1`, probability via sigmoid of the logit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchingHead<T> {
    pub mlp: Mlp<T>,
}

impl<T: Real> MatchingHead<T> {
    pub fn init<R: Rng + ?Sized>(input: usize, hidden: usize, rng: &mut R) -> Result<Self> {
        Ok(Self {
            mlp: Mlp::init(&[input, hidden, 1], rng)?,
        })
    }

    pub fn new(mlp: Mlp<T>) -> Result<Self> {
        if mlp.layers().len() != 2 || mlp.output_dim() != 1 {
            return Err(Error::ShapeMismatch(
                "matching head must be two layers ending in one logit".into(),
            ));
        }
        Ok(Self { mlp })
    }

    pub fn input_dim(&self) -> usize {
        self.mlp.input_dim()
    }

    pub fn logit(&self, x: &[T]) -> Result<(T, MlpCache<T>)> {
        let (out, cache) = self.mlp.forward(x)?;
        Ok((out[0], cache))
    }
}

pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}
