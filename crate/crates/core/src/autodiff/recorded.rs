//! The discretized loss recorded node by node on a scalar [`Tape`].
//!
//! Much slower than [`super::batch`]; used to cross-check it and to take
//! derivatives of the residual with respect to the input coordinates.

use super::tape::{Tape, TapeJet, Var};
use super::ResidualOperator;
use crate::error::{GasError, Result};
use crate::network::MlpParams;
use crate::points::PointSet;

/// Parameter leaves in the flat order of [`MlpParams`].
pub fn param_vars(tape: &mut Tape, params: &MlpParams) -> Vec<Var> {
    params.as_slice().iter().map(|&v| tape.var(v)).collect()
}

struct LayerVars<'a> {
    params: &'a MlpParams,
    vars: &'a [Var],
}

impl LayerVars<'_> {
    // Flat offsets follow the documented storage order.
    fn offsets(&self) -> Vec<usize> {
        let mut off = Vec::new();
        let mut total = 0;
        for w in self.params.layer_sizes().windows(2) {
            off.push(total);
            total += w[0] * w[1] + w[1];
        }
        off
    }
}

/// Network jet along `axis` with inputs given as tape variables.
pub fn record_jet(tape: &mut Tape, params: &MlpParams, pvars: &[Var], x: &[Var], axis: usize) -> TapeJet {
    let lv = LayerVars { params, vars: pvars };
    let offsets = lv.offsets();
    let zero = tape.var(0.0);
    let one = tape.var(1.0);
    let mut a: Vec<TapeJet> = x
        .iter()
        .enumerate()
        .map(|(k, &v)| TapeJet {
            value: v,
            d1: if k == axis { one } else { zero },
            d2: zero,
        })
        .collect();
    let sizes = params.layer_sizes();
    let n_layers = params.num_layers();
    for l in 0..n_layers {
        let (n_in, n_out) = (sizes[l], sizes[l + 1]);
        let mut z = Vec::with_capacity(n_out);
        for i in 0..n_out {
            let mut val = lv.vars[offsets[l] + n_in * n_out + i];
            let mut d1 = zero;
            let mut d2 = zero;
            for (j, aj) in a.iter().enumerate() {
                let w = lv.vars[offsets[l] + i * n_in + j];
                let t = tape.mul(w, aj.value);
                val = tape.add(val, t);
                let t = tape.mul(w, aj.d1);
                d1 = tape.add(d1, t);
                let t = tape.mul(w, aj.d2);
                d2 = tape.add(d2, t);
            }
            z.push(TapeJet { value: val, d1, d2 });
        }
        a = if l + 1 < n_layers {
            z.into_iter().map(|j| j.tanh(tape)).collect()
        } else {
            z
        };
    }
    a[0]
}

/// Interior residual at `x`. The operator coefficients and source enter as
/// constants, so input derivatives of the result are exact only when those
/// do not depend on `x`.
pub fn record_residual<O: ResidualOperator + ?Sized>(
    tape: &mut Tape,
    params: &MlpParams,
    pvars: &[Var],
    op: &O,
    x: &[f64],
    xvars: &[Var],
) -> Var {
    let d = x.len();
    let mut coef = vec![0.0; d];
    let (a, c) = op.coefficients(x, &mut coef);
    let mut terms = Vec::new();
    let mut value = None;
    for k in 0..d {
        let j = record_jet(tape, params, pvars, xvars, k);
        value.get_or_insert(j.value);
        if coef[k] != 0.0 {
            terms.push(tape.scale(j.d1, coef[k]));
        }
        terms.push(tape.scale(j.d2, c));
    }
    if a != 0.0 {
        let u = value.expect("dimension is positive");
        terms.push(tape.scale(u, a));
    }
    let sum = tape.sum(&terms);
    tape.offset(sum, -op.source(x))
}

/// Same quantity as [`super::batch::loss_param_gradient`], computed by one
/// reverse sweep over the recorded scalar graph. Returns `(J_N, gradient)`.
pub fn loss_param_gradient_recorded<O: ResidualOperator + ?Sized>(
    params: &MlpParams,
    op: &O,
    interior: &PointSet,
    boundary: &PointSet,
    gamma: f64,
) -> Result<(f64, MlpParams)> {
    if interior.is_empty() {
        return Err(GasError::EmptyBatch("interior"));
    }
    if boundary.is_empty() {
        return Err(GasError::EmptyBatch("boundary"));
    }
    let mut tape = Tape::new();
    let pvars = param_vars(&mut tape, params);
    let mut sq = Vec::with_capacity(interior.len());
    for x in interior.iter() {
        let xv: Vec<Var> = x.iter().map(|&v| tape.var(v)).collect();
        let r = record_residual(&mut tape, params, &pvars, op, x, &xv);
        sq.push(tape.square(r));
    }
    let sum_r = tape.sum(&sq);
    let jr = tape.scale(sum_r, 1.0 / interior.len() as f64);
    let mut bsq = Vec::with_capacity(boundary.len());
    for x in boundary.iter() {
        let xv: Vec<Var> = x.iter().map(|&v| tape.var(v)).collect();
        let j = record_jet(&mut tape, params, &pvars, &xv, 0);
        let b = tape.offset(j.value, -op.boundary_data(x));
        bsq.push(tape.square(b));
    }
    let sum_b = tape.sum(&bsq);
    let jb = tape.scale(sum_b, gamma / boundary.len() as f64);
    let total = tape.add(jr, jb);
    let adj = tape.gradient(total)?;
    let mut grad = params.zeros_like();
    for (g, v) in grad.as_mut_slice().iter_mut().zip(&pvars) {
        *g = adj[v.index()];
    }
    Ok((tape.value(total), grad))
}

/// Exact `∇_x r(x)` by reverse sweep over the recorded residual (third
/// derivatives of the network included). See [`record_residual`] for the
/// constant-coefficient caveat.
pub fn residual_input_gradient_recorded<O: ResidualOperator + ?Sized>(
    params: &MlpParams,
    op: &O,
    x: &[f64],
) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let pvars = param_vars(&mut tape, params);
    let xv: Vec<Var> = x.iter().map(|&v| tape.var(v)).collect();
    let r = record_residual(&mut tape, params, &pvars, op, x, &xv);
    let adj = tape.gradient(r)?;
    Ok(xv.iter().map(|v| adj[v.index()]).collect())
}
