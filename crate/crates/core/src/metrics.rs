//! Error and cost measurements.

use crate::autodiff::predict;
use crate::error::{GasError, Result};
use crate::network::MlpParams;
use crate::pde::PdeProblem;
use crate::points::BoxDomain;

/// One row of `metrics.csv`.
#[derive(Clone, Debug, PartialEq)]
pub struct RoundMetrics {
    pub round: usize,
    pub interior: usize,
    pub boundary: usize,
    /// Distinct interior samples so far.
    pub fns: usize,
    /// Running sum of per-round interior set sizes.
    pub ans: usize,
    /// `J_N` on the last minibatch of the round.
    pub loss: f64,
    /// Lattice MSE, 2-D problems only.
    pub mse: Option<f64>,
    /// Relative L2 error on the small tensor grid, problems with `d ≠ 2`.
    pub rel_l2: Option<f64>,
}

/// Mean of `(u_Θ - u*)²` over a `grid_n × grid_n` lattice on `[-1, 1]²`.
pub fn mse_on_grid(params: &MlpParams, problem: &PdeProblem, grid_n: usize) -> Result<f64> {
    if problem.dim != 2 {
        return Err(GasError::InvalidArgument(format!(
            "lattice MSE needs a 2-D problem, got d = {}",
            problem.dim
        )));
    }
    let lattice = BoxDomain::lattice(2, grid_n, 1.0);
    let u = predict(params, &lattice)?;
    mse_of(&u, lattice.iter().map(|x| problem.exact_solution(x)))
}

/// MSE for precomputed predictions against the exact solution.
pub fn mse_of(pred: &[f64], exact: impl Iterator<Item = f64>) -> Result<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for (p, e) in pred.iter().zip(exact) {
        sum += (p - e) * (p - e);
        n += 1;
    }
    if n == 0 {
        return Err(GasError::EmptyBatch("evaluation"));
    }
    Ok(sum / n as f64)
}

/// `‖u_Θ - u*‖₂ / ‖u*‖₂` over the tensor lattice with `n_t` nodes per axis
/// on `[-half_width, half_width]^d`.
pub fn relative_l2(params: &MlpParams, problem: &PdeProblem, n_t: usize, half_width: f64) -> Result<f64> {
    let lattice = BoxDomain::lattice(problem.dim, n_t, half_width);
    let u = predict(params, &lattice)?;
    relative_l2_of(&u, lattice.iter().map(|x| problem.exact_solution(x)))
}

/// Relative L2 error for precomputed predictions.
pub fn relative_l2_of(pred: &[f64], exact: impl Iterator<Item = f64>) -> Result<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for (p, e) in pred.iter().zip(exact) {
        num += (p - e) * (p - e);
        den += e * e;
    }
    if den == 0.0 {
        return Err(GasError::InvalidArgument("exact solution vanishes on the lattice".into()));
    }
    Ok((num / den).sqrt())
}

/// `(FNS, ANS)` from the interior set size of every round.
pub fn fns_ans(per_round_sizes: &[usize]) -> Result<(usize, usize)> {
    for w in per_round_sizes.windows(2) {
        if w[1] < w[0] {
            return Err(GasError::DecreasingSizes { prev: w[0], next: w[1] });
        }
    }
    let fns = per_round_sizes.last().copied().unwrap_or(0);
    Ok((fns, per_round_sizes.iter().sum()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_increment_cost_pairs() {
        let five: Vec<usize> = (1..=5).map(|i| i * 10_000).collect();
        assert_eq!(fns_ans(&five).unwrap(), (50_000, 150_000));
        let ten: Vec<usize> = (1..=10).map(|i| i * 10_000).collect();
        assert_eq!(fns_ans(&ten).unwrap(), (100_000, 550_000));
        assert_eq!(fns_ans(&[1234]).unwrap(), (1234, 1234));
        assert!(fns_ans(&[10, 5]).is_err());
    }

    #[test]
    fn mse_rejects_non_2d() {
        let p = MlpParams::zeros(&[3, 1]).unwrap();
        assert!(mse_on_grid(&p, &PdeProblem::high_dim(3), 11).is_err());
    }
}
