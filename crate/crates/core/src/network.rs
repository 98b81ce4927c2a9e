//! The fully connected approximator and its optimizers.

use std::path::Path;

use ndarray::{ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GasError, Result};
use crate::rng::StageRng;

/// Weights and biases of a tanh MLP with a scalar linear output.
///
/// Storage is one flat vector. For each affine layer `l` (input to output)
/// it holds the weight matrix row-major with shape `(n_out, n_in)`, followed
/// by the bias vector of length `n_out`. Checkpoints use the same order.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams {
    layer_sizes: Vec<usize>,
    offsets: Vec<usize>,
    data: Vec<f64>,
}

fn validate_layers(sizes: &[usize]) -> Result<()> {
    if sizes.len() < 2 {
        return Err(GasError::InvalidLayers(sizes.to_vec(), "need at least an input and an output layer"));
    }
    if sizes.contains(&0) {
        return Err(GasError::InvalidLayers(sizes.to_vec(), "layer sizes must be positive"));
    }
    if *sizes.last().unwrap() != 1 {
        return Err(GasError::InvalidLayers(sizes.to_vec(), "output layer must have size 1"));
    }
    Ok(())
}

impl MlpParams {
    pub fn zeros(layer_sizes: &[usize]) -> Result<Self> {
        validate_layers(layer_sizes)?;
        let mut offsets = Vec::with_capacity(layer_sizes.len());
        let mut total = 0;
        for w in layer_sizes.windows(2) {
            offsets.push(total);
            total += w[1] * w[0] + w[1];
        }
        offsets.push(total);
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            offsets,
            data: vec![0.0; total],
        })
    }

    pub fn from_flat(layer_sizes: &[usize], data: Vec<f64>) -> Result<Self> {
        let mut p = Self::zeros(layer_sizes)?;
        if data.len() != p.data.len() {
            return Err(GasError::ShapeMismatch {
                expected: p.data.len(),
                got: data.len(),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(GasError::NonFinite { stage: "parameters", index: i });
        }
        p.data = data;
        Ok(p)
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layer_sizes: self.layer_sizes.clone(),
            offsets: self.offsets.clone(),
            data: vec![0.0; self.data.len()],
        }
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    /// Number of affine layers (hidden layers + output layer).
    pub fn num_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.layer_sizes == other.layer_sizes
    }

    fn dims(&self, layer: usize) -> (usize, usize, usize) {
        let n_in = self.layer_sizes[layer];
        let n_out = self.layer_sizes[layer + 1];
        (self.offsets[layer], n_in, n_out)
    }

    pub fn weight(&self, layer: usize) -> ArrayView2<'_, f64> {
        let (off, n_in, n_out) = self.dims(layer);
        ArrayView2::from_shape((n_out, n_in), &self.data[off..off + n_in * n_out]).unwrap()
    }

    pub fn bias(&self, layer: usize) -> ArrayView1<'_, f64> {
        let (off, n_in, n_out) = self.dims(layer);
        let b = off + n_in * n_out;
        ArrayView1::from(&self.data[b..b + n_out])
    }

    pub fn weight_mut(&mut self, layer: usize) -> ArrayViewMut2<'_, f64> {
        let (off, n_in, n_out) = self.dims(layer);
        ArrayViewMut2::from_shape((n_out, n_in), &mut self.data[off..off + n_in * n_out]).unwrap()
    }

    pub fn bias_mut(&mut self, layer: usize) -> ArrayViewMut1<'_, f64> {
        let (off, n_in, n_out) = self.dims(layer);
        let b = off + n_in * n_out;
        ArrayViewMut1::from(&mut self.data[b..b + n_out])
    }

    /// Weight and bias views for one layer, mutable at the same time.
    pub fn layer_mut(&mut self, layer: usize) -> (ArrayViewMut2<'_, f64>, ArrayViewMut1<'_, f64>) {
        let (off, n_in, n_out) = self.dims(layer);
        let (w, b) = self.data[off..off + n_in * n_out + n_out].split_at_mut(n_in * n_out);
        (
            ArrayViewMut2::from_shape((n_out, n_in), w).unwrap(),
            ArrayViewMut1::from(b),
        )
    }

    /// `self += scale * other`, used by gradient accumulation and line probes.
    pub fn axpy(&mut self, scale: f64, other: &Self) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Builds `[d, width × hidden, 1]`.
pub fn layer_sizes(input_dim: usize, width: usize, hidden_layers: usize) -> Vec<usize> {
    let mut v = vec![input_dim];
    v.extend(std::iter::repeat_n(width, hidden_layers));
    v.push(1);
    v
}

/// Xavier-uniform weights, zero biases.
pub fn init_mlp(layer_sizes: &[usize], rng: &mut StageRng) -> Result<MlpParams> {
    let mut p = MlpParams::zeros(layer_sizes)?;
    for l in 0..p.num_layers() {
        let fan_in = layer_sizes[l] as f64;
        let fan_out = layer_sizes[l + 1] as f64;
        let bound = (6.0 / (fan_in + fan_out)).sqrt();
        for w in p.weight_mut(l).iter_mut() {
            *w = rng.random_range(-bound..bound);
        }
    }
    Ok(p)
}

/// [`init_mlp`] seeded directly from an integer.
pub fn init_mlp_seeded(layer_sizes: &[usize], seed: u64) -> Result<MlpParams> {
    use rand::SeedableRng;
    init_mlp(layer_sizes, &mut StageRng::seed_from_u64(seed))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
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

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &MlpParams, config: AdamConfig) -> Self {
        Self {
            config,
            first_moment: vec![0.0; params.len()],
            second_moment: vec![0.0; params.len()],
            step: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum OptimizerState {
    Adam(AdamState),
    Sgd { learning_rate: f64, step: u64 },
}

impl OptimizerState {
    pub fn step_count(&self) -> u64 {
        match self {
            OptimizerState::Adam(s) => s.step,
            OptimizerState::Sgd { step, .. } => *step,
        }
    }

    /// Applies one update in place. A non-finite gradient refuses the step
    /// and leaves both parameters and state untouched.
    pub fn apply(&mut self, params: &mut MlpParams, grads: &MlpParams) -> Result<()> {
        if !params.same_shape(grads) {
            return Err(GasError::ShapeMismatch {
                expected: params.len(),
                got: grads.len(),
            });
        }
        if let Some(i) = grads.as_slice().iter().position(|g| !g.is_finite()) {
            return Err(GasError::NonFinite { stage: "gradient", index: i });
        }
        match self {
            OptimizerState::Adam(s) => {
                if s.first_moment.len() != params.len() {
                    return Err(GasError::ShapeMismatch {
                        expected: params.len(),
                        got: s.first_moment.len(),
                    });
                }
                s.step += 1;
                let AdamConfig { learning_rate, beta1, beta2, epsilon } = s.config;
                let t = s.step as i32;
                let bc1 = 1.0 - beta1.powi(t);
                let bc2 = 1.0 - beta2.powi(t);
                let theta = params.as_mut_slice();
                for i in 0..theta.len() {
                    let g = grads.as_slice()[i];
                    let m = beta1 * s.first_moment[i] + (1.0 - beta1) * g;
                    let v = beta2 * s.second_moment[i] + (1.0 - beta2) * g * g;
                    s.first_moment[i] = m;
                    s.second_moment[i] = v;
                    let m_hat = m / bc1;
                    let v_hat = v / bc2;
                    theta[i] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
                }
            }
            OptimizerState::Sgd { learning_rate, step } => {
                *step += 1;
                params.axpy(-*learning_rate, grads);
            }
        }
        Ok(())
    }
}

/// Pure form of [`OptimizerState::apply`].
pub fn optimizer_step(
    params: &MlpParams,
    grads: &MlpParams,
    state: &OptimizerState,
) -> Result<(MlpParams, OptimizerState)> {
    let mut p = params.clone();
    let mut s = state.clone();
    s.apply(&mut p, grads)?;
    Ok((p, s))
}

const CHECKPOINT_FORMAT: &str = "gas-mlp";
const CHECKPOINT_VERSION: u32 = 1;

/// On-disk JSON form of [`MlpParams`]; `params` follows the flat order
/// documented on [`MlpParams`].
#[derive(Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub layer_sizes: Vec<usize>,
    pub params: Vec<f64>,
}

impl Checkpoint {
    pub fn from_params(params: &MlpParams) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            layer_sizes: params.layer_sizes().to_vec(),
            params: params.as_slice().to_vec(),
        }
    }

    pub fn into_params(self) -> Result<MlpParams> {
        if self.format != CHECKPOINT_FORMAT || self.version != CHECKPOINT_VERSION {
            return Err(GasError::Checkpoint(format!(
                "unsupported format {} v{}",
                self.format, self.version
            )));
        }
        MlpParams::from_flat(&self.layer_sizes, self.params)
    }
}

pub fn save_checkpoint(params: &MlpParams, path: &Path) -> Result<()> {
    let json = serde_json::to_string(&Checkpoint::from_params(params))
        .map_err(|e| GasError::Checkpoint(e.to_string()))?;
    std::fs::write(path, json)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<MlpParams> {
    let text = std::fs::read_to_string(path)?;
    let ckpt: Checkpoint = serde_json::from_str(&text).map_err(|e| GasError::Checkpoint(e.to_string()))?;
    ckpt.into_params()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic() {
        let sizes = layer_sizes(2, 32, 6);
        let a = init_mlp_seeded(&sizes, 7).unwrap();
        let b = init_mlp_seeded(&sizes, 7).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, init_mlp_seeded(&sizes, 8).unwrap());
    }

    #[test]
    fn six_hidden_layers_give_seven_weight_matrices() {
        let sizes = layer_sizes(2, 32, 6);
        assert_eq!(sizes, vec![2, 32, 32, 32, 32, 32, 32, 1]);
        let p = init_mlp_seeded(&sizes, 1).unwrap();
        assert_eq!(p.num_layers(), 7);
        assert_eq!(p.weight(0).dim(), (32, 2));
        assert_eq!(p.weight(6).dim(), (1, 32));
    }

    #[test]
    fn xavier_bound_and_zero_bias() {
        let sizes = vec![3, 17, 5, 1];
        let p = init_mlp_seeded(&sizes, 3).unwrap();
        for l in 0..p.num_layers() {
            let bound = (6.0 / (sizes[l] + sizes[l + 1]) as f64).sqrt();
            assert!(p.weight(l).iter().all(|w| w.abs() <= bound));
            assert!(p.bias(l).iter().all(|b| *b == 0.0));
        }
    }

    #[test]
    fn rejects_bad_layer_lists() {
        assert!(MlpParams::zeros(&[]).is_err());
        assert!(MlpParams::zeros(&[2]).is_err());
        assert!(MlpParams::zeros(&[2, 8, 2]).is_err());
        assert!(MlpParams::zeros(&[2, 0, 1]).is_err());
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let p = init_mlp_seeded(&[2, 4, 1], 1).unwrap();
        let g = p.zeros_like();
        let state = OptimizerState::Adam(AdamState::new(&p, AdamConfig::default()));
        let (p2, s2) = optimizer_step(&p, &g, &state).unwrap();
        assert_eq!(p, p2);
        assert_eq!(s2.step_count(), 1);
    }

    #[test]
    fn constant_gradient_decreases_param() {
        let mut p = MlpParams::zeros(&[1, 1]).unwrap();
        let mut g = p.zeros_like();
        g.as_mut_slice()[0] = 0.7;
        let mut state = OptimizerState::Adam(AdamState::new(&p, AdamConfig::default()));
        let mut prev = p.as_slice()[0];
        for _ in 0..50 {
            state.apply(&mut p, &g).unwrap();
            let cur = p.as_slice()[0];
            assert!(cur < prev);
            prev = cur;
        }
    }

    #[test]
    fn quadratic_bowl_converges() {
        let mut p = MlpParams::zeros(&[1, 1]).unwrap();
        p.as_mut_slice()[0] = 1.0;
        let config = AdamConfig {
            learning_rate: 1e-2,
            ..AdamConfig::default()
        };
        let mut state = OptimizerState::Adam(AdamState::new(&p, config));
        let mut g = p.zeros_like();
        for _ in 0..5000 {
            let theta = p.as_slice()[0];
            g.as_mut_slice()[0] = 2.0 * theta;
            g.as_mut_slice()[1] = 0.0;
            state.apply(&mut p, &g).unwrap();
        }
        assert!(p.as_slice()[0].abs() < 1e-4, "theta = {}", p.as_slice()[0]);
    }

    #[test]
    fn non_finite_gradient_refused() {
        let mut p = init_mlp_seeded(&[2, 3, 1], 2).unwrap();
        let before = p.clone();
        let mut g = p.zeros_like();
        g.as_mut_slice()[4] = f64::NAN;
        let mut state = OptimizerState::Adam(AdamState::new(&p, AdamConfig::default()));
        assert!(matches!(state.apply(&mut p, &g), Err(GasError::NonFinite { index: 4, .. })));
        assert_eq!(p, before);
        assert_eq!(state.step_count(), 0);
    }

    #[test]
    fn sgd_step() {
        let mut p = MlpParams::zeros(&[1, 1]).unwrap();
        let mut g = p.zeros_like();
        g.as_mut_slice()[0] = 2.0;
        let mut s = OptimizerState::Sgd { learning_rate: 0.5, step: 0 };
        s.apply(&mut p, &g).unwrap();
        assert_eq!(p.as_slice()[0], -1.0);
    }

    #[test]
    fn checkpoint_roundtrip_is_exact() {
        let p = init_mlp_seeded(&[2, 5, 5, 1], 11).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        save_checkpoint(&p, &path).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap(), p);
    }
}
