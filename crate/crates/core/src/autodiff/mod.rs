//! Exact derivatives of the network: input jets for the PDE operator and
//! parameter gradients of the discretized loss.
//!
//! Two routes compute the loss gradient. [`batch`] runs the jet propagation
//! as stacked matrix products over chunks of points and sweeps the recorded
//! layers in reverse; it is the training path. [`recorded`] records the same
//! propagation node by node on a scalar [`Tape`] and serves as a cross-check.

pub mod batch;
pub mod jet;
pub mod recorded;
pub mod tape;

pub use batch::{loss_param_gradient, loss_value, predict, residuals, BatchJets, LossEvaluation};
pub use jet::{forward, forward_jet, input_gradient, laplacian, Jet2};
pub use tape::{Tape, TapeJet, Var};

/// A linear second-order operator applied to the network, together with the
/// data it is matched against:
///
/// `r(x) = a(x)·u + Σ_k b_k(x)·∂_k u + c(x)·Δu − s(x)` inside the domain and
/// `b(x) = u − g(x)` on the boundary.
pub trait ResidualOperator: Sync {
    fn dim(&self) -> usize;

    /// Fills `grad_coef` with `b_k(x)` and returns `(a(x), c(x))`.
    fn coefficients(&self, x: &[f64], grad_coef: &mut [f64]) -> (f64, f64);

    fn source(&self, x: &[f64]) -> f64;

    fn boundary_data(&self, x: &[f64]) -> f64;

    /// Residual from precomputed network derivatives.
    fn residual_from_jets(&self, x: &[f64], u: f64, grad: &[f64], lap: f64) -> f64 {
        let mut b = vec![0.0; x.len()];
        let (a, c) = self.coefficients(x, &mut b);
        let drift: f64 = b.iter().zip(grad).map(|(bk, gk)| bk * gk).sum();
        a * u + drift + c * lap - self.source(x)
    }
}
