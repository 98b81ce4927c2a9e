//! Second-order forward propagation along a single input axis.

use std::ops::{Add, Mul};

use crate::error::{GasError, Result};
use crate::network::MlpParams;

/// Value with its first and second directional derivatives along one axis.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Jet2 {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
}

impl Jet2 {
    pub const ZERO: Jet2 = Jet2 { value: 0.0, d1: 0.0, d2: 0.0 };

    pub fn new(value: f64, d1: f64, d2: f64) -> Self {
        Self { value, d1, d2 }
    }

    pub fn constant(value: f64) -> Self {
        Self { value, d1: 0.0, d2: 0.0 }
    }

    /// The seeded input coordinate: `(x, 1, 0)`.
    pub fn variable(value: f64) -> Self {
        Self { value, d1: 1.0, d2: 0.0 }
    }

    /// Chain rule through a scalar function given `(f, f', f'')` at `value`.
    pub fn chain(self, f: f64, df: f64, d2f: f64) -> Self {
        Self {
            value: f,
            d1: df * self.d1,
            d2: d2f * self.d1 * self.d1 + df * self.d2,
        }
    }

    pub fn tanh(self) -> Self {
        let t = self.value.tanh();
        let dt = 1.0 - t * t;
        self.chain(t, dt, -2.0 * t * dt)
    }
}

impl Add for Jet2 {
    type Output = Jet2;
    fn add(self, rhs: Jet2) -> Jet2 {
        Jet2::new(self.value + rhs.value, self.d1 + rhs.d1, self.d2 + rhs.d2)
    }
}

impl Mul<f64> for Jet2 {
    type Output = Jet2;
    fn mul(self, rhs: f64) -> Jet2 {
        Jet2::new(self.value * rhs, self.d1 * rhs, self.d2 * rhs)
    }
}

impl Mul for Jet2 {
    type Output = Jet2;
    fn mul(self, rhs: Jet2) -> Jet2 {
        Jet2::new(
            self.value * rhs.value,
            self.d1 * rhs.value + self.value * rhs.d1,
            self.d2 * rhs.value + 2.0 * self.d1 * rhs.d1 + self.value * rhs.d2,
        )
    }
}

fn check_input(params: &MlpParams, x: &[f64]) -> Result<()> {
    if x.len() != params.input_dim() {
        return Err(GasError::DimensionMismatch {
            layer: 0,
            expected: params.input_dim(),
            got: x.len(),
        });
    }
    Ok(())
}

/// Pushes jets through every layer: affine maps on all layers, tanh on
/// hidden layers only.
fn propagate<T, F>(params: &MlpParams, input: Vec<T>, zero: T, mut affine: F, act: fn(T) -> T) -> T
where
    T: Copy + One,
    F: FnMut(T, f64, T) -> T,
{
    let mut a = input;
    let n_layers = params.num_layers();
    for l in 0..n_layers {
        let w = params.weight(l);
        let b = params.bias(l);
        let mut z = Vec::with_capacity(w.nrows());
        for (row, &bias) in w.rows().into_iter().zip(b.iter()) {
            let mut acc = zero;
            for (&wij, &aj) in row.iter().zip(a.iter()) {
                acc = affine(acc, wij, aj);
            }
            z.push(affine(acc, bias, T::from_one()));
        }
        a = if l + 1 < n_layers { z.into_iter().map(act).collect() } else { z };
    }
    a[0]
}

trait One {
    fn from_one() -> Self;
}

impl One for f64 {
    fn from_one() -> Self {
        1.0
    }
}

impl One for Jet2 {
    fn from_one() -> Self {
        Jet2::constant(1.0)
    }
}

/// `u(x; params)`.
pub fn forward(params: &MlpParams, x: &[f64]) -> Result<f64> {
    check_input(params, x)?;
    let out = propagate(params, x.to_vec(), 0.0, |acc, w, a| acc + w * a, f64::tanh);
    if !out.is_finite() {
        return Err(GasError::NonFinite { stage: "forward", index: 0 });
    }
    Ok(out)
}

/// `(u, ∂u/∂x_axis, ∂²u/∂x_axis²)` exactly.
pub fn forward_jet(params: &MlpParams, x: &[f64], axis: usize) -> Result<Jet2> {
    check_input(params, x)?;
    if axis >= x.len() {
        return Err(GasError::AxisOutOfRange { axis, dim: x.len() });
    }
    let input = x
        .iter()
        .enumerate()
        .map(|(k, &v)| if k == axis { Jet2::variable(v) } else { Jet2::constant(v) })
        .collect();
    let out = propagate(params, input, Jet2::ZERO, |acc, w, a| acc + a * w, Jet2::tanh);
    if !(out.value.is_finite() && out.d1.is_finite() && out.d2.is_finite()) {
        return Err(GasError::NonFinite { stage: "jet", index: 0 });
    }
    Ok(out)
}

pub fn input_gradient(params: &MlpParams, x: &[f64]) -> Result<Vec<f64>> {
    (0..x.len()).map(|k| forward_jet(params, x, k).map(|j| j.d1)).collect()
}

pub fn laplacian(params: &MlpParams, x: &[f64]) -> Result<f64> {
    let mut sum = 0.0;
    for k in 0..x.len() {
        sum += forward_jet(params, x, k)?.d2;
    }
    Ok(sum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::init_mlp_seeded;

    fn tanh_net() -> MlpParams {
        // u(x) = tanh(x1): one hidden unit, identity readout.
        let mut p = MlpParams::zeros(&[2, 1, 1]).unwrap();
        p.weight_mut(0)[[0, 0]] = 1.0;
        p.weight_mut(1)[[0, 0]] = 1.0;
        p
    }

    #[test]
    fn tanh_at_origin() {
        let j = forward_jet(&tanh_net(), &[0.0, 0.4], 0).unwrap();
        assert_eq!(j, Jet2::new(0.0, 1.0, 0.0));
    }

    #[test]
    fn sum_of_inputs() {
        // Single affine layer realizing x1 + x2.
        let mut p = MlpParams::zeros(&[2, 1]).unwrap();
        p.weight_mut(0).fill(1.0);
        assert_eq!(forward(&p, &[1.0, 2.0]).unwrap(), 3.0);
        assert_eq!(laplacian(&p, &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(input_gradient(&p, &[1.0, 2.0]).unwrap(), vec![1.0, 1.0]);
    }

    #[test]
    fn zero_weights_give_final_bias() {
        let mut p = MlpParams::zeros(&[3, 8, 8, 1]).unwrap();
        p.bias_mut(2)[0] = -0.75;
        p.bias_mut(0).fill(0.3);
        assert_eq!(forward(&p, &[0.1, 0.2, 0.3]).unwrap(), -0.75);
        assert_eq!(input_gradient(&p, &[0.1, 0.2, 0.3]).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn errors() {
        let p = init_mlp_seeded(&[2, 4, 1], 0).unwrap();
        assert!(matches!(
            forward(&p, &[1.0]),
            Err(GasError::DimensionMismatch { layer: 0, expected: 2, got: 1 })
        ));
        assert!(matches!(
            forward_jet(&p, &[1.0, 0.0], 2),
            Err(GasError::AxisOutOfRange { axis: 2, dim: 2 })
        ));
    }

    #[test]
    fn jet_product_rule_matches_closed_form() {
        // f(x) = x^2 * tanh(x) at x = 0.3
        let x = Jet2::variable(0.3);
        let f = x * x * x.tanh();
        let t = 0.3f64.tanh();
        let dt = 1.0 - t * t;
        let d2t = -2.0 * t * dt;
        assert!((f.d1 - (2.0 * 0.3 * t + 0.09 * dt)).abs() < 1e-15);
        assert!((f.d2 - (2.0 * t + 4.0 * 0.3 * dt + 0.09 * d2t)).abs() < 1e-14);
    }

    #[test]
    fn composed_tanh_chain() {
        // tanh(2 tanh(x)) through the network equals the closed form.
        let mut p = MlpParams::zeros(&[1, 1, 1, 1]).unwrap();
        p.weight_mut(0)[[0, 0]] = 1.0;
        p.weight_mut(1)[[0, 0]] = 2.0;
        p.weight_mut(2)[[0, 0]] = 1.0;
        let x = 0.37;
        let j = forward_jet(&p, &[x], 0).unwrap();
        let direct = (Jet2::variable(x).tanh() * 2.0).tanh();
        assert!((j.value - direct.value).abs() < 1e-15);
        assert!((j.d1 - direct.d1).abs() < 1e-15);
        assert!((j.d2 - direct.d2).abs() < 1e-15);
        let t = x.tanh();
        let s = 1.0 - t * t;
        let outer = (2.0 * t).tanh();
        let so = 1.0 - outer * outer;
        assert!((j.d1 - so * 2.0 * s).abs() < 1e-14);
    }
}
