//! Self-checks of the derivative code and the sampler formulas against
//! finite differences and brute-force quadrature.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::autodiff::{forward, laplacian, loss_param_gradient, loss_value};
use crate::error::Result;
use crate::network::{init_mlp, layer_sizes, MlpParams};
use crate::pde::{OperatorKind, PdeProblem};
use crate::points::BoxDomain;
use crate::rng::{derive_indexed, StageRng};
use crate::sampler::{laplace_sigma_1d, risk_maximization_oracle, RiskGrid};
use rand::SeedableRng;

#[derive(Clone, Debug, Serialize)]
pub struct CheckReport {
    pub name: &'static str,
    pub cases: usize,
    pub max_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl CheckReport {
    fn new(name: &'static str, cases: usize, max_error: f64, tolerance: f64) -> Self {
        Self {
            name,
            cases,
            max_error,
            tolerance,
            passed: max_error < tolerance,
        }
    }
}

/// A small test problem of the given dimension with moderate sharpness, so
/// finite differences are well conditioned.
pub fn check_problem(dim: usize) -> PdeProblem {
    let op = if dim == 2 {
        OperatorKind::DriftDiffusion
    } else {
        OperatorKind::Poisson
    };
    let center: Vec<f64> = (0..dim).map(|k| if k % 2 == 0 { 0.3 } else { -0.2 }).collect();
    PdeProblem::new(dim, op, 4.0, vec![center]).expect("valid check problem")
}

fn random_net(dim: usize, rng: &mut StageRng) -> Result<MlpParams> {
    let width = rng.random_range(4..=10);
    let hidden = rng.random_range(1..=3);
    let mut p = init_mlp(&layer_sizes(dim, width, hidden), rng)?;
    // nonzero biases exercise every term
    for v in p.as_mut_slice() {
        *v += 0.1 * rng.sample::<f64, _>(StandardNormal);
    }
    Ok(p)
}

fn unit_direction(n: usize, rng: &mut StageRng) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    v
}

fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Directional derivatives of `J_N` against central differences with step
/// `h`, over `n_nets` random networks for each dimension in `dims`.
pub fn gradient_check(seed: u64, dims: &[usize], n_nets: usize, n_dirs: usize, h: f64) -> Result<CheckReport> {
    let mut max_err: f64 = 0.0;
    let mut cases = 0;
    for (di, &dim) in dims.iter().enumerate() {
        let problem = check_problem(dim);
        let domain = BoxDomain::new(dim);
        for net in 0..n_nets {
            let mut rng = StageRng::seed_from_u64(derive_indexed(seed, "gradient_check", (di * 1000 + net) as u64));
            let params = random_net(dim, &mut rng)?;
            let interior = domain.sample_interior(8, &mut rng);
            let boundary = domain.sample_boundary(4, &mut rng);
            let eval = loss_param_gradient(&params, &problem, &interior, &boundary, 1.0)?;
            for _ in 0..n_dirs {
                let v = MlpParams::from_flat(params.layer_sizes(), unit_direction(params.len(), &mut rng))?;
                let analytic = eval.gradient.dot(&v);
                let mut plus = params.clone();
                plus.axpy(h, &v);
                let mut minus = params.clone();
                minus.axpy(-h, &v);
                let jp = loss_value(&plus, &problem, &interior, &boundary, 1.0)?;
                let jm = loss_value(&minus, &problem, &interior, &boundary, 1.0)?;
                let fd = (jp - jm) / (2.0 * h);
                max_err = max_err.max(rel_err(analytic, fd, 1e-8));
                cases += 1;
            }
        }
    }
    Ok(CheckReport::new("gradient", cases, max_err, 1e-6))
}

/// Network Laplacian against fourth-order central second differences of
/// the forward pass, on `n_cases` random (network, point) pairs.
pub fn laplacian_check(seed: u64, dims: &[usize], n_cases: usize, h: f64) -> Result<CheckReport> {
    let mut max_err: f64 = 0.0;
    let mut cases = 0;
    for i in 0..n_cases {
        let dim = dims[i % dims.len()];
        let mut rng = StageRng::seed_from_u64(derive_indexed(seed, "laplacian_check", i as u64));
        let params = random_net(dim, &mut rng)?;
        let x = BoxDomain::new(dim).sample_interior(1, &mut rng).get(0).to_vec();
        let exact = laplacian(&params, &x)?;
        let u0 = forward(&params, &x)?;
        let mut fd = 0.0;
        let mut y = x.clone();
        for k in 0..dim {
            let mut at = |s: f64| -> Result<f64> {
                y[k] = x[k] + s * h;
                let v = forward(&params, &y);
                y[k] = x[k];
                v
            };
            let (m2, m1, p1, p2) = (at(-2.0)?, at(-1.0)?, at(1.0)?, at(2.0)?);
            fd += (-p2 + 16.0 * p1 - 30.0 * u0 + 16.0 * m1 - m2) / (12.0 * h * h);
        }
        max_err = max_err.max(rel_err(exact, fd, 1e-2));
        cases += 1;
    }
    Ok(CheckReport::new("laplacian", cases, max_err, 1e-5))
}

/// For `r(x) = exp(-(x - x0)² / (2a²))`: the Laplace scale equals `a/√2`,
/// and the brute-force risk maximizer with floor `σ ≥ a` sits at `(x0, a)`.
/// The reported error is the larger of the σ error relative to `a` and the
/// oracle's distance from `(x0, a)` in grid cells, scaled so that one cell
/// counts as `1e-3`.
pub fn risk_max_check() -> Result<CheckReport> {
    let mut max_err: f64 = 0.0;
    let mut cases = 0;
    for &a in &[0.1, 1.0, 3.0] {
        let x0 = 0.25 * a;
        let r = move |x: f64| (-(x - x0).powi(2) / (2.0 * a * a)).exp();
        let sigma = laplace_sigma_1d(r, x0, 1e-3 * a)?;
        max_err = max_err.max((sigma - a / 2f64.sqrt()).abs() / a);
        cases += 1;

        let grid = RiskGrid {
            mu_range: (x0 - 2.0 * a, x0 + 2.0 * a),
            n_mu: 41,
            sigma_range: (0.05 * a, 2.0 * a),
            n_sigma: 40,
            x_range: (x0 - 12.0 * a, x0 + 12.0 * a),
            n_quad: 2001,
        };
        let (mu, s) = risk_maximization_oracle(r, a, &grid)?;
        let cells = ((mu - x0).abs() / grid.mu_step()).max((s - a).abs() / grid.sigma_step());
        max_err = max_err.max(cells * 1e-3);
        cases += 1;
    }
    let mut report = CheckReport::new("risk_max", cases, max_err, 1e-3);
    report.passed = max_err <= 1e-3;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checks_pass_small() {
        let g = gradient_check(1, &[1, 2], 2, 3, 1e-5).unwrap();
        let l = laplacian_check(1, &[1, 2, 10], 6, 1e-3).unwrap();
        let r = risk_max_check().unwrap();
        assert!(g.passed && l.passed && r.passed, "{g:?} {l:?} {r:?}");
    }
}
