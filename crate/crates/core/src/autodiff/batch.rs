//! Chunked jet propagation and its reverse sweep.
//!
//! For a chunk of `n` points and `m` seeded axes, every layer works on a
//! stacked matrix of `n·(1 + 2m)` rows: the values, then the first
//! derivative rows for each axis, then the second derivative rows for each
//! axis. Affine layers are one matrix product on the whole stack (the bias
//! only touches value rows). The forward pass keeps every layer's input and
//! pre-activation, which is the record the reverse sweep walks backwards.
//!
//! Chunks have a fixed size and their partial sums are reduced in chunk
//! order, so results do not depend on the number of worker threads.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, ArrayView2, Axis};
use rayon::prelude::*;

use super::ResidualOperator;
use crate::error::{GasError, Result};
use crate::network::MlpParams;
use crate::points::PointSet;

pub const CHUNK: usize = 64;

struct Record {
    n: usize,
    n_dir: usize,
    /// Input of each affine layer.
    inputs: Vec<Array2<f64>>,
    /// Output of each affine layer before activation.
    pre: Vec<Array2<f64>>,
}

impl Record {
    fn output(&self) -> &Array2<f64> {
        self.pre.last().unwrap()
    }

    fn value(&self, i: usize) -> f64 {
        self.output()[[i, 0]]
    }

    fn d1(&self, i: usize, k: usize) -> f64 {
        self.output()[[self.n * (1 + k) + i, 0]]
    }

    fn d2(&self, i: usize, k: usize) -> f64 {
        self.output()[[self.n * (1 + self.n_dir + k) + i, 0]]
    }
}

/// Row-major `a · b`. `dot` may pick column-major output for single-column
/// operands, which the elementwise kernels cannot index.
fn matmul(a: &ArrayView2<f64>, b: &ArrayView2<f64>) -> Array2<f64> {
    let mut out = Array2::<f64>::zeros((a.nrows(), b.ncols()));
    general_mat_mul(1.0, a, b, 0.0, &mut out);
    out
}

fn tanh_jet_forward(z: &Array2<f64>, n: usize, n_dir: usize) -> Array2<f64> {
    let width = z.ncols();
    let zs = z.as_slice().expect("standard layout");
    let mut out = Array2::<f64>::zeros(z.raw_dim());
    let os = out.as_slice_mut().unwrap();
    for i in 0..n {
        for j in 0..width {
            let t = zs[i * width + j].tanh();
            let t1 = 1.0 - t * t;
            let t2 = -2.0 * t * t1;
            os[i * width + j] = t;
            for k in 0..n_dir {
                let r1 = (n * (1 + k) + i) * width + j;
                let r2 = (n * (1 + n_dir + k) + i) * width + j;
                let z1 = zs[r1];
                os[r1] = t1 * z1;
                os[r2] = t2 * z1 * z1 + t1 * zs[r2];
            }
        }
    }
    out
}

/// Adjoint of the tanh jet map. `act` is the activation output (its value
/// rows hold `tanh(z)`), `pre` the pre-activation stack.
fn tanh_jet_backward(abar: &Array2<f64>, act: &Array2<f64>, pre: &Array2<f64>, n: usize, n_dir: usize) -> Array2<f64> {
    let width = abar.ncols();
    let ab = abar.as_slice().expect("standard layout");
    let av = act.as_slice().expect("standard layout");
    let zs = pre.as_slice().expect("standard layout");
    let mut zbar = Array2::<f64>::zeros(abar.raw_dim());
    let zb = zbar.as_slice_mut().unwrap();
    for i in 0..n {
        for j in 0..width {
            let t = av[i * width + j];
            let t1 = 1.0 - t * t;
            let t2 = -2.0 * t * t1;
            let t3 = -2.0 * t1 * t1 + 4.0 * t * t * t1;
            let mut acc = ab[i * width + j] * t1;
            for k in 0..n_dir {
                let r1 = (n * (1 + k) + i) * width + j;
                let r2 = (n * (1 + n_dir + k) + i) * width + j;
                let (z1, z2) = (zs[r1], zs[r2]);
                let (a1, a2) = (ab[r1], ab[r2]);
                zb[r2] = a2 * t1;
                zb[r1] = a1 * t1 + 2.0 * a2 * t2 * z1;
                acc += a1 * t2 * z1 + a2 * (t3 * z1 * z1 + t2 * z2);
            }
            zb[i * width + j] = acc;
        }
    }
    zbar
}

fn forward_chunk(params: &MlpParams, points: &PointSet, n_dir: usize) -> Record {
    let n = points.len();
    let dim = points.dim();
    let rows = n * (1 + 2 * n_dir);
    let mut a = Array2::<f64>::zeros((rows, dim));
    for (i, p) in points.iter().enumerate() {
        a.row_mut(i).assign(&ndarray::ArrayView1::from(p));
    }
    for k in 0..n_dir {
        for i in 0..n {
            a[[n * (1 + k) + i, k]] = 1.0;
        }
    }
    let n_layers = params.num_layers();
    let mut inputs = Vec::with_capacity(n_layers);
    let mut pre = Vec::with_capacity(n_layers);
    for l in 0..n_layers {
        let mut z = matmul(&a.view(), &params.weight(l).t());
        let bias = params.bias(l);
        z.slice_mut(s![0..n, ..]).rows_mut().into_iter().for_each(|mut r| r += &bias);
        if l + 1 < n_layers {
            let next = tanh_jet_forward(&z, n, n_dir);
            inputs.push(std::mem::replace(&mut a, next));
        } else {
            inputs.push(std::mem::take(&mut a));
        }
        pre.push(z);
    }
    Record { n, n_dir, inputs, pre }
}

/// Accumulates the parameter gradient for the adjoint `out_bar` of the
/// network output stack.
fn backward_chunk(params: &MlpParams, rec: &Record, out_bar: Array2<f64>, grad: &mut MlpParams) {
    let n = rec.n;
    let mut zbar = out_bar;
    for l in (0..params.num_layers()).rev() {
        {
            let (mut gw, mut gb) = grad.layer_mut(l);
            general_mat_mul(1.0, &zbar.t(), &rec.inputs[l], 1.0, &mut gw);
            gb += &zbar.slice(s![0..n, ..]).sum_axis(Axis(0));
        }
        if l > 0 {
            let abar = matmul(&zbar.view(), &params.weight(l));
            zbar = tanh_jet_backward(&abar, &rec.inputs[l], &rec.pre[l - 1], n, rec.n_dir);
        }
    }
}

fn chunks(points: &PointSet) -> Vec<PointSet> {
    (0..points.len())
        .step_by(CHUNK)
        .map(|s| points.slice(s, (s + CHUNK).min(points.len())))
        .collect()
}

fn check_dim(params: &MlpParams, points: &PointSet) -> Result<()> {
    if points.dim() != params.input_dim() {
        return Err(GasError::DimensionMismatch {
            layer: 0,
            expected: params.input_dim(),
            got: points.dim(),
        });
    }
    Ok(())
}

/// Network values and input derivatives for a set of points.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchJets {
    pub values: Vec<f64>,
    /// Row-major `n × d` gradients.
    pub gradients: Vec<f64>,
    pub laplacians: Vec<f64>,
}

pub fn jets(params: &MlpParams, points: &PointSet) -> Result<BatchJets> {
    check_dim(params, points)?;
    let d = points.dim();
    let parts: Vec<BatchJets> = chunks(points)
        .par_iter()
        .map(|c| {
            let rec = forward_chunk(params, c, d);
            let mut out = BatchJets {
                values: Vec::with_capacity(c.len()),
                gradients: Vec::with_capacity(c.len() * d),
                laplacians: Vec::with_capacity(c.len()),
            };
            for i in 0..c.len() {
                out.values.push(rec.value(i));
                let mut lap = 0.0;
                for k in 0..d {
                    out.gradients.push(rec.d1(i, k));
                    lap += rec.d2(i, k);
                }
                out.laplacians.push(lap);
            }
            out
        })
        .collect();
    let mut all = BatchJets {
        values: Vec::with_capacity(points.len()),
        gradients: Vec::with_capacity(points.len() * d),
        laplacians: Vec::with_capacity(points.len()),
    };
    for p in parts {
        all.values.extend(p.values);
        all.gradients.extend(p.gradients);
        all.laplacians.extend(p.laplacians);
    }
    if let Some(i) = all.laplacians.iter().zip(&all.values).position(|(l, v)| !(l.is_finite() && v.is_finite())) {
        return Err(GasError::NonFinite { stage: "jet", index: i });
    }
    Ok(all)
}

/// Network values only.
pub fn predict(params: &MlpParams, points: &PointSet) -> Result<Vec<f64>> {
    check_dim(params, points)?;
    let parts: Vec<Vec<f64>> = chunks(points)
        .par_iter()
        .map(|c| {
            let rec = forward_chunk(params, c, 0);
            (0..c.len()).map(|i| rec.value(i)).collect()
        })
        .collect();
    let out: Vec<f64> = parts.into_iter().flatten().collect();
    if let Some(i) = out.iter().position(|v| !v.is_finite()) {
        return Err(GasError::NonFinite { stage: "forward", index: i });
    }
    Ok(out)
}

/// Interior residuals `r(x)` for every point, order preserved.
pub fn residuals<O: ResidualOperator + ?Sized>(params: &MlpParams, op: &O, points: &PointSet) -> Result<Vec<f64>> {
    let j = jets(params, points)?;
    let d = points.dim();
    let r: Vec<f64> = points
        .iter()
        .enumerate()
        .map(|(i, x)| op.residual_from_jets(x, j.values[i], &j.gradients[i * d..(i + 1) * d], j.laplacians[i]))
        .collect();
    if let Some(i) = r.iter().position(|v| !v.is_finite()) {
        return Err(GasError::NonFinite { stage: "residual", index: i });
    }
    Ok(r)
}

#[derive(Clone, Debug)]
pub struct LossEvaluation {
    /// `J_r + γ J_b`.
    pub loss: f64,
    pub residual_loss: f64,
    pub boundary_loss: f64,
    pub gradient: MlpParams,
}

struct Partial {
    sum_sq: f64,
    grad: MlpParams,
}

fn interior_partial<O: ResidualOperator + ?Sized>(
    params: &MlpParams,
    op: &O,
    chunk: &PointSet,
    offset: usize,
    scale: f64,
) -> Result<Partial> {
    let n = chunk.len();
    let d = chunk.dim();
    let rec = forward_chunk(params, chunk, d);
    let mut bar = Array2::<f64>::zeros((n * (1 + 2 * d), 1));
    let mut coef = vec![0.0; d];
    let mut sum_sq = 0.0;
    let mut grad_u = vec![0.0; d];
    for (i, x) in chunk.iter().enumerate() {
        let (a, c) = op.coefficients(x, &mut coef);
        let mut lap = 0.0;
        for k in 0..d {
            grad_u[k] = rec.d1(i, k);
            lap += rec.d2(i, k);
        }
        let drift: f64 = coef.iter().zip(&grad_u).map(|(b, g)| b * g).sum();
        let r = a * rec.value(i) + drift + c * lap - op.source(x);
        if !r.is_finite() {
            return Err(GasError::NonFinite { stage: "residual", index: offset + i });
        }
        sum_sq += r * r;
        let g = 2.0 * r * scale;
        bar[[i, 0]] = g * a;
        for k in 0..d {
            bar[[n * (1 + k) + i, 0]] = g * coef[k];
            bar[[n * (1 + d + k) + i, 0]] = g * c;
        }
    }
    let mut grad = params.zeros_like();
    backward_chunk(params, &rec, bar, &mut grad);
    Ok(Partial { sum_sq, grad })
}

fn boundary_partial<O: ResidualOperator + ?Sized>(
    params: &MlpParams,
    op: &O,
    chunk: &PointSet,
    offset: usize,
    scale: f64,
) -> Result<Partial> {
    let n = chunk.len();
    let rec = forward_chunk(params, chunk, 0);
    let mut bar = Array2::<f64>::zeros((n, 1));
    let mut sum_sq = 0.0;
    for (i, x) in chunk.iter().enumerate() {
        let b = rec.value(i) - op.boundary_data(x);
        if !b.is_finite() {
            return Err(GasError::NonFinite { stage: "boundary residual", index: offset + i });
        }
        sum_sq += b * b;
        bar[[i, 0]] = 2.0 * b * scale;
    }
    let mut grad = params.zeros_like();
    backward_chunk(params, &rec, bar, &mut grad);
    Ok(Partial { sum_sq, grad })
}

fn reduce(parts: Vec<Result<Partial>>, template: &MlpParams) -> Result<(f64, MlpParams)> {
    let mut sum = 0.0;
    let mut grad = template.zeros_like();
    for p in parts {
        let p = p?;
        sum += p.sum_sq;
        grad.axpy(1.0, &p.grad);
    }
    Ok((sum, grad))
}

/// Gradient of `J_N = mean(r²) + γ·mean(b²)` over the two batches with
/// respect to every network parameter.
pub fn loss_param_gradient<O: ResidualOperator + ?Sized>(
    params: &MlpParams,
    op: &O,
    interior: &PointSet,
    boundary: &PointSet,
    gamma: f64,
) -> Result<LossEvaluation> {
    if interior.is_empty() {
        return Err(GasError::EmptyBatch("interior"));
    }
    if boundary.is_empty() {
        return Err(GasError::EmptyBatch("boundary"));
    }
    check_dim(params, interior)?;
    check_dim(params, boundary)?;
    let m = interior.len() as f64;
    let mb = boundary.len() as f64;

    let interior_parts: Vec<Result<Partial>> = chunks(interior)
        .par_iter()
        .enumerate()
        .map(|(ci, c)| interior_partial(params, op, c, ci * CHUNK, 1.0 / m))
        .collect();
    let (r_sum, mut grad) = reduce(interior_parts, params)?;

    let residual_loss = r_sum / m;
    let mut boundary_loss = 0.0;
    if gamma != 0.0 {
        let boundary_parts: Vec<Result<Partial>> = chunks(boundary)
            .par_iter()
            .enumerate()
            .map(|(ci, c)| boundary_partial(params, op, c, ci * CHUNK, gamma / mb))
            .collect();
        let (b_sum, b_grad) = reduce(boundary_parts, params)?;
        boundary_loss = b_sum / mb;
        grad.axpy(1.0, &b_grad);
    }
    if let Some(i) = grad.as_slice().iter().position(|g| !g.is_finite()) {
        return Err(GasError::NonFinite { stage: "gradient", index: i });
    }
    Ok(LossEvaluation {
        loss: residual_loss + gamma * boundary_loss,
        residual_loss,
        boundary_loss,
        gradient: grad,
    })
}

/// `J_N` without the gradient.
pub fn loss_value<O: ResidualOperator + ?Sized>(
    params: &MlpParams,
    op: &O,
    interior: &PointSet,
    boundary: &PointSet,
    gamma: f64,
) -> Result<f64> {
    if interior.is_empty() {
        return Err(GasError::EmptyBatch("interior"));
    }
    if boundary.is_empty() {
        return Err(GasError::EmptyBatch("boundary"));
    }
    let r = residuals(params, op, interior)?;
    let jr = r.iter().map(|v| v * v).sum::<f64>() / r.len() as f64;
    if gamma == 0.0 {
        return Ok(jr);
    }
    let u = predict(params, boundary)?;
    let jb = boundary
        .iter()
        .zip(&u)
        .map(|(x, v)| {
            let b = v - op.boundary_data(x);
            b * b
        })
        .sum::<f64>()
        / u.len() as f64;
    Ok(jr + gamma * jb)
}
