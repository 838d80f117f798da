//! Parametric value approximators `h(u; theta)` with analytic Jacobians.
//!
//! Two families are supported: models linear in a fixed feature map (tabular
//! value functions are the one-hot special case) and fully connected tanh
//! networks with a scalar linear output.
//!
//! Parameter layout is shared by every module: layer by layer, the weight
//! matrix in row-major order (one row per output unit) followed by that
//! layer's biases. Linear models store one weight per feature and no bias.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_dim, Error, Result};

/// A model input, e.g. a one-hot state or a state-action concatenation.
pub type Input = Vec<f64>;

/// Parameter vector `theta` with finite entries.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamVector(DVector<f64>);

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        Self::from_vector(DVector::from_vec(values))
    }

    pub fn from_vector(values: DVector<f64>) -> Result<Self> {
        if values.iter().all(|v| v.is_finite()) {
            Ok(Self(values))
        } else {
            Err(Error::NonFinite("parameter vector"))
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self(DVector::zeros(dim))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn into_vector(self) -> DVector<f64> {
        self.0
    }
}

/// Deterministic map from a raw input to the features of a linear model.
/// User-supplied feature function for linear models.
pub type FeatureFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

#[derive(Clone)]
pub enum FeatureMap {
    Identity,
    /// The input followed by a constant 1.
    Affine,
    Custom {
        dim: usize,
        map: FeatureFn,
    },
}

impl FeatureMap {
    fn feature_dim(&self, input_dim: usize) -> usize {
        match self {
            FeatureMap::Identity => input_dim,
            FeatureMap::Affine => input_dim + 1,
            FeatureMap::Custom { dim, .. } => *dim,
        }
    }

    fn apply(&self, u: &[f64]) -> Result<Vec<f64>> {
        Ok(match self {
            FeatureMap::Identity => u.to_vec(),
            FeatureMap::Affine => {
                let mut v = Vec::with_capacity(u.len() + 1);
                v.extend_from_slice(u);
                v.push(1.0);
                v
            }
            FeatureMap::Custom { dim, map } => {
                let v = map(u);
                check_dim("custom feature map output", *dim, v.len())?;
                v
            }
        })
    }
}

impl fmt::Debug for FeatureMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureMap::Identity => f.write_str("Identity"),
            FeatureMap::Affine => f.write_str("Affine"),
            FeatureMap::Custom { dim, .. } => f.debug_struct("Custom").field("dim", dim).finish(),
        }
    }
}

#[derive(Clone, Debug)]
pub enum ModelKind {
    Linear {
        feature_map: FeatureMap,
    },
    /// `layer_widths` runs from the input width to the scalar output, e.g.
    /// `[2, 4, 1]`. Hidden layers use tanh, the output layer is affine.
    Mlp {
        layer_widths: Vec<usize>,
    },
}

/// The observation function `h(u; theta)`.
#[derive(Clone, Debug)]
pub struct ValueModel {
    input_dim: usize,
    param_dim: usize,
    kind: ModelKind,
}

impl ValueModel {
    pub fn linear(input_dim: usize, feature_map: FeatureMap) -> Result<Self> {
        let param_dim = feature_map.feature_dim(input_dim);
        if param_dim == 0 {
            return Err(Error::InvalidArgument(
                "linear model needs at least one feature".into(),
            ));
        }
        Ok(Self {
            input_dim,
            param_dim,
            kind: ModelKind::Linear { feature_map },
        })
    }

    /// One weight per state; inputs are one-hot state encodings.
    pub fn tabular(n_states: usize) -> Result<Self> {
        Self::linear(n_states, FeatureMap::Identity)
    }

    /// Fully connected tanh network with the given hidden widths and a scalar output.
    pub fn mlp(input_dim: usize, hidden: &[usize]) -> Result<Self> {
        if input_dim == 0 || hidden.contains(&0) {
            return Err(Error::InvalidArgument(
                "network layer widths must be positive".into(),
            ));
        }
        let mut layer_widths = Vec::with_capacity(hidden.len() + 2);
        layer_widths.push(input_dim);
        layer_widths.extend_from_slice(hidden);
        layer_widths.push(1);
        let param_dim = layer_widths.windows(2).map(|w| w[1] * (w[0] + 1)).sum();
        Ok(Self {
            input_dim,
            param_dim,
            kind: ModelKind::Mlp { layer_widths },
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn param_dim(&self) -> usize {
        self.param_dim
    }

    pub fn kind(&self) -> &ModelKind {
        &self.kind
    }

    pub fn is_linear(&self) -> bool {
        matches!(self.kind, ModelKind::Linear { .. })
    }

    /// Feature vector of a linear model. Errors for networks.
    pub fn features(&self, u: &[f64]) -> Result<DVector<f64>> {
        check_dim("model input", self.input_dim, u.len())?;
        match &self.kind {
            ModelKind::Linear { feature_map } => Ok(DVector::from_vec(feature_map.apply(u)?)),
            ModelKind::Mlp { .. } => Err(Error::InvalidArgument(
                "features are only defined for linear models".into(),
            )),
        }
    }

    fn check_params(&self, theta: &ParamVector) -> Result<()> {
        check_dim("parameter vector", self.param_dim, theta.len())
    }

    /// `h(u; theta)` for a single input.
    pub fn value(&self, theta: &ParamVector, u: &[f64]) -> Result<f64> {
        self.check_params(theta)?;
        check_dim("model input", self.input_dim, u.len())?;
        Ok(match &self.kind {
            ModelKind::Linear { feature_map } => feature_map
                .apply(u)?
                .iter()
                .zip(theta.as_slice())
                .map(|(x, w)| x * w)
                .sum(),
            ModelKind::Mlp { layer_widths } => {
                mlp_activations(layer_widths, theta.as_slice(), u).output
            }
        })
    }

    /// Stacked observations `[h(u_1), ..., h(u_N)]`.
    pub fn forward(&self, theta: &ParamVector, inputs: &[Input]) -> Result<DVector<f64>> {
        self.check_params(theta)?;
        let mut out = DVector::zeros(inputs.len());
        for (i, u) in inputs.iter().enumerate() {
            out[i] = self.value(theta, u)?;
        }
        Ok(out)
    }

    /// `d x N` matrix whose column `i` is the gradient of `h(u_i; theta)`.
    pub fn jacobian(&self, theta: &ParamVector, inputs: &[Input]) -> Result<DMatrix<f64>> {
        self.check_params(theta)?;
        let mut jac = DMatrix::zeros(self.param_dim, inputs.len());
        for (i, u) in inputs.iter().enumerate() {
            check_dim("model input", self.input_dim, u.len())?;
            match &self.kind {
                ModelKind::Linear { feature_map } => {
                    let phi = feature_map.apply(u)?;
                    jac.column_mut(i).copy_from_slice(&phi);
                }
                ModelKind::Mlp { layer_widths } => {
                    let mut col = vec![0.0; self.param_dim];
                    mlp_gradient(layer_widths, theta.as_slice(), u, &mut col);
                    jac.column_mut(i).copy_from_slice(&col);
                }
            }
        }
        Ok(jac)
    }

    /// Entries drawn i.i.d. uniform in `[-scale, scale]` from a seeded ChaCha8 stream.
    pub fn init_params(&self, seed: u64, scale: f64) -> Result<ParamVector> {
        if !(scale >= 0.0 && scale.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "initialization scale must be finite and non-negative, got {scale}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..self.param_dim)
            .map(|_| scale * (2.0 * rng.random::<f64>() - 1.0))
            .collect();
        ParamVector::new(values)
    }
}

struct Activations {
    /// Post-activation values per layer, starting with the input.
    layers: Vec<Vec<f64>>,
    output: f64,
}

fn mlp_activations(widths: &[usize], theta: &[f64], u: &[f64]) -> Activations {
    let n_layers = widths.len() - 1;
    let mut layers = Vec::with_capacity(n_layers);
    layers.push(u.to_vec());
    let mut offset = 0;
    let mut output = 0.0;
    for l in 0..n_layers {
        let (fan_in, fan_out) = (widths[l], widths[l + 1]);
        let weights = &theta[offset..offset + fan_in * fan_out];
        let biases = &theta[offset + fan_in * fan_out..offset + fan_out * (fan_in + 1)];
        offset += fan_out * (fan_in + 1);
        let prev = layers.last().expect("input layer");
        let z: Vec<f64> = (0..fan_out)
            .map(|r| {
                let row = &weights[r * fan_in..(r + 1) * fan_in];
                row.iter().zip(prev).map(|(w, a)| w * a).sum::<f64>() + biases[r]
            })
            .collect();
        if l + 1 == n_layers {
            output = z[0];
        } else {
            layers.push(z.into_iter().map(f64::tanh).collect());
        }
    }
    Activations { layers, output }
}

/// Reverse-mode gradient of the scalar output with respect to every parameter.
fn mlp_gradient(widths: &[usize], theta: &[f64], u: &[f64], grad: &mut [f64]) {
    let acts = mlp_activations(widths, theta, u);
    let n_layers = widths.len() - 1;

    let mut offsets = Vec::with_capacity(n_layers);
    let mut offset = 0;
    for l in 0..n_layers {
        offsets.push(offset);
        offset += widths[l + 1] * (widths[l] + 1);
    }

    // d output / d z for the current layer
    let mut delta = vec![1.0];
    for l in (0..n_layers).rev() {
        let (fan_in, fan_out) = (widths[l], widths[l + 1]);
        let base = offsets[l];
        let prev = &acts.layers[l];
        for r in 0..fan_out {
            for c in 0..fan_in {
                grad[base + r * fan_in + c] = delta[r] * prev[c];
            }
            grad[base + fan_in * fan_out + r] = delta[r];
        }
        if l > 0 {
            let weights = &theta[base..base + fan_in * fan_out];
            delta = (0..fan_in)
                .map(|c| {
                    let back: f64 = (0..fan_out)
                        .map(|r| weights[r * fan_in + c] * delta[r])
                        .sum();
                    back * (1.0 - prev[c] * prev[c])
                })
                .collect();
        }
    }
}
