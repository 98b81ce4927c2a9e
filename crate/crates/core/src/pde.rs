//! Benchmark problems on `[-1, 1]^d` with Gaussian-bump manufactured
//! solutions `u*(x) = Σ_j exp(-c‖x - p_j‖²)`.

use serde::{Deserialize, Serialize};

use crate::autodiff::{forward, forward_jet, ResidualOperator};
use crate::error::{GasError, Result};
use crate::network::MlpParams;
use crate::points::BoxDomain;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    /// `-Δu`
    Poisson,
    /// `-∇·(u ∇‖x‖²) + Δu`, expanded as `-(2x·∇u + 2d·u) + Δu`.
    DriftDiffusion,
}

impl OperatorKind {
    pub fn name(self) -> &'static str {
        match self {
            OperatorKind::Poisson => "poisson",
            OperatorKind::DriftDiffusion => "drift_diffusion",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PdeProblem {
    pub dim: usize,
    pub operator: OperatorKind,
    pub sharpness: f64,
    pub centers: Vec<Vec<f64>>,
}

/// Nine centers on the lattice `{-0.5, 0, 0.5}²`, `i = 0..8`.
pub fn nine_peak_centers() -> Vec<Vec<f64>> {
    (0..9)
        .map(|i| vec![-0.5 + (i % 3) as f64 / 2.0, -0.5 + (i / 3) as f64 / 2.0])
        .collect()
}

impl PdeProblem {
    pub fn new(dim: usize, operator: OperatorKind, sharpness: f64, centers: Vec<Vec<f64>>) -> Result<Self> {
        if dim == 0 {
            return Err(GasError::InvalidArgument("dimension must be positive".into()));
        }
        if !(sharpness > 0.0 && sharpness.is_finite()) {
            return Err(GasError::InvalidArgument(format!("sharpness must be positive, got {sharpness}")));
        }
        let domain = BoxDomain::new(dim);
        for c in &centers {
            if !domain.contains(c) {
                return Err(GasError::OutsideDomain { point: c.clone() });
            }
        }
        Ok(Self {
            dim,
            operator,
            sharpness,
            centers,
        })
    }

    pub fn one_peak() -> Self {
        Self::new(2, OperatorKind::Poisson, 1000.0, vec![vec![0.5, 0.5]]).unwrap()
    }

    pub fn two_peak() -> Self {
        Self::new(
            2,
            OperatorKind::DriftDiffusion,
            1000.0,
            vec![vec![0.5, 0.5], vec![-0.5, -0.5]],
        )
        .unwrap()
    }

    pub fn nine_peak() -> Self {
        Self::new(2, OperatorKind::DriftDiffusion, 1000.0, nine_peak_centers()).unwrap()
    }

    pub fn high_dim(dim: usize) -> Self {
        Self::new(dim, OperatorKind::Poisson, 10.0, vec![vec![0.0; dim]]).unwrap()
    }

    /// `u* ≡ 0`, hence `s ≡ 0` and `g ≡ 0`.
    pub fn zero_solution(dim: usize, operator: OperatorKind) -> Self {
        Self::new(dim, operator, 1.0, Vec::new()).unwrap()
    }

    pub fn domain(&self) -> BoxDomain {
        BoxDomain::new(self.dim)
    }

    fn bumps(&self, x: &[f64]) -> impl Iterator<Item = (&Vec<f64>, f64)> + '_ {
        let x = x.to_vec();
        self.centers.iter().map(move |p| {
            let r2: f64 = x.iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum();
            (p, (-self.sharpness * r2).exp())
        })
    }

    pub fn exact_solution(&self, x: &[f64]) -> f64 {
        self.bumps(x).map(|(_, e)| e).sum()
    }

    pub fn exact_gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim];
        for (p, e) in self.bumps(x) {
            for k in 0..self.dim {
                g[k] += -2.0 * self.sharpness * (x[k] - p[k]) * e;
            }
        }
        g
    }

    /// `Δu* = Σ_j (4c²‖x - p_j‖² - 2cd) e_j`.
    pub fn exact_laplacian(&self, x: &[f64]) -> f64 {
        let c = self.sharpness;
        let d = self.dim as f64;
        self.centers
            .iter()
            .map(|p| {
                let r2: f64 = x.iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum();
                (4.0 * c * c * r2 - 2.0 * c * d) * (-c * r2).exp()
            })
            .sum()
    }

    /// `s = L u*`, closed form.
    pub fn manufactured_source(&self, x: &[f64]) -> f64 {
        let lap = self.exact_laplacian(x);
        match self.operator {
            OperatorKind::Poisson => -lap,
            OperatorKind::DriftDiffusion => {
                let g = self.exact_gradient(x);
                let xg: f64 = x.iter().zip(&g).map(|(a, b)| a * b).sum();
                -(2.0 * xg + 2.0 * self.dim as f64 * self.exact_solution(x)) + lap
            }
        }
    }

    /// `r(x) = L u(x; Θ) - s(x)` through exact input jets of the network.
    pub fn residual(&self, params: &MlpParams, x: &[f64]) -> Result<f64> {
        let mut u = 0.0;
        let mut grad = vec![0.0; self.dim];
        let mut lap = 0.0;
        for k in 0..self.dim {
            let j = forward_jet(params, x, k)?;
            u = j.value;
            grad[k] = j.d1;
            lap += j.d2;
        }
        Ok(self.residual_from_jets(x, u, &grad, lap))
    }

    /// `u(x; Θ) - u*(x)` for a point on the boundary.
    pub fn boundary_residual(&self, params: &MlpParams, x: &[f64]) -> Result<f64> {
        if !self.domain().on_boundary(x) {
            return Err(GasError::NotOnBoundary { point: x.to_vec() });
        }
        Ok(forward(params, x)? - self.exact_solution(x))
    }
}

impl ResidualOperator for PdeProblem {
    fn dim(&self) -> usize {
        self.dim
    }

    fn coefficients(&self, x: &[f64], grad_coef: &mut [f64]) -> (f64, f64) {
        match self.operator {
            OperatorKind::Poisson => {
                grad_coef.iter_mut().for_each(|b| *b = 0.0);
                (0.0, -1.0)
            }
            OperatorKind::DriftDiffusion => {
                for (b, xk) in grad_coef.iter_mut().zip(x) {
                    *b = -2.0 * xk;
                }
                (-2.0 * self.dim as f64, 1.0)
            }
        }
    }

    fn source(&self, x: &[f64]) -> f64 {
        self.manufactured_source(x)
    }

    fn boundary_data(&self, x: &[f64]) -> f64 {
        self.exact_solution(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_solution_values() {
        assert_eq!(PdeProblem::one_peak().exact_solution(&[0.5, 0.5]), 1.0);
        assert_eq!(PdeProblem::two_peak().exact_solution(&[0.5, 0.5]), 1.0);
    }

    #[test]
    fn nine_centers_on_lattice() {
        let c = nine_peak_centers();
        assert_eq!(c.len(), 9);
        assert_eq!(c[0], vec![-0.5, -0.5]);
        assert_eq!(c[1], vec![0.0, -0.5]);
        assert_eq!(c[5], vec![0.5, 0.0]);
        assert_eq!(c[8], vec![0.5, 0.5]);
        for p in &c {
            for v in p {
                assert!([-0.5, 0.0, 0.5].contains(v));
            }
        }
    }

    #[test]
    fn sources_at_peaks() {
        assert_eq!(PdeProblem::one_peak().manufactured_source(&[0.5, 0.5]), 4000.0);
        assert_eq!(PdeProblem::high_dim(10).manufactured_source(&[0.0; 10]), 200.0);
        assert!(PdeProblem::two_peak().manufactured_source(&[0.9, -0.9]).abs() < 1e-10);
    }

    #[test]
    fn boundary_residual_of_zero_net() {
        let zero = MlpParams::zeros(&[2, 4, 1]).unwrap();
        let one = PdeProblem::one_peak();
        // exp(-500) ≈ 7.1e-218 is still a normal f64.
        let r = one.boundary_residual(&zero, &[1.0, 1.0]).unwrap();
        assert_eq!(r, -(-500.0f64).exp());
        assert!(r < 0.0 && r > -1e-217);
        let two = PdeProblem::two_peak();
        let r = two.boundary_residual(&zero, &[0.5, 1.0]).unwrap();
        assert_eq!(r, -(-250.0f64).exp());
        assert!(matches!(
            one.boundary_residual(&zero, &[0.2, 0.3]),
            Err(GasError::NotOnBoundary { .. })
        ));
    }

    #[test]
    fn poisson_residual_of_linear_and_square() {
        // x1^2 is not representable by a tanh net, so test the residual
        // assembly directly from jets.
        let p = PdeProblem::one_peak();
        let x = [0.1, -0.3];
        let r = p.residual_from_jets(&x, 0.01, &[0.2, 0.0], 2.0);
        assert_eq!(r, -2.0 - p.manufactured_source(&x));
        let z = PdeProblem::zero_solution(2, OperatorKind::Poisson);
        let mut affine = MlpParams::zeros(&[2, 1]).unwrap();
        affine.weight_mut(0)[[0, 0]] = 0.3;
        affine.weight_mut(0)[[0, 1]] = -1.1;
        affine.bias_mut(0)[0] = 0.2;
        assert_eq!(z.residual(&affine, &[0.4, 0.9]).unwrap(), 0.0);
    }

    #[test]
    fn rejects_center_outside() {
        assert!(PdeProblem::new(2, OperatorKind::Poisson, 1.0, vec![vec![1.5, 0.0]]).is_err());
    }
}
