//! Residual-driven Gaussian-mixture proposals.
//!
//! Means come from the validation cloud (top residual magnitudes, or local
//! maximizers of the magnitude over k nearest neighbours). Each component
//! gets a diagonal variance `λ / |∂r/∂x_k|` clamped into
//! `[var_min, var_max]`. The one-dimensional Laplace approximation and the
//! brute-force risk maximization live here too; they validate the variance
//! rule and are not used by the training loop.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::autodiff::batch::residuals;
use crate::error::{GasError, Result};
use crate::network::MlpParams;
use crate::pde::PdeProblem;
use crate::points::{BoxDomain, PointSet};

pub const MAX_REDRAWS: usize = 100;

#[derive(Clone, Debug, PartialEq)]
pub struct ResidualSample {
    pub point: Vec<f64>,
    pub residual: f64,
    pub magnitude: f64,
}

impl ResidualSample {
    pub fn new(point: Vec<f64>, residual: f64) -> Self {
        Self {
            point,
            residual,
            magnitude: residual.abs(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianComponent {
    pub mean: Vec<f64>,
    pub variances: Vec<f64>,
    pub weight: f64,
}

impl GaussianComponent {
    pub fn pdf(&self, x: &[f64]) -> f64 {
        let mut log = 0.0;
        for ((xi, mi), vi) in x.iter().zip(&self.mean).zip(&self.variances) {
            log += -0.5 * (xi - mi) * (xi - mi) / vi - 0.5 * (2.0 * std::f64::consts::PI * vi).ln();
        }
        log.exp()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianMixture {
    pub components: Vec<GaussianComponent>,
}

impl GaussianMixture {
    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn pdf(&self, x: &[f64]) -> f64 {
        self.components.iter().map(|c| c.weight * c.pdf(x)).sum()
    }
}

pub fn evaluate_validation_residuals(
    params: &MlpParams,
    problem: &PdeProblem,
    validation: &PointSet,
) -> Result<Vec<ResidualSample>> {
    if validation.is_empty() {
        return Err(GasError::EmptyBatch("validation"));
    }
    let domain = problem.domain();
    if let Some(p) = validation.iter().find(|p| !domain.contains(p)) {
        return Err(GasError::OutsideDomain { point: p.to_vec() });
    }
    let r = residuals(params, problem, validation)?;
    Ok(validation
        .iter()
        .zip(r)
        .map(|(p, r)| ResidualSample::new(p.to_vec(), r))
        .collect())
}

/// Indices ordered by magnitude descending, ties by ascending index.
fn ranked(samples: &[ResidualSample]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..samples.len()).collect();
    idx.sort_by(|&a, &b| samples[b].magnitude.total_cmp(&samples[a].magnitude).then(a.cmp(&b)));
    idx
}

pub fn select_means_top(samples: &[ResidualSample], n_gaussians: usize) -> Result<Vec<Vec<f64>>> {
    if samples.len() < n_gaussians {
        return Err(GasError::TooFewSamples {
            needed: n_gaussians,
            got: samples.len(),
        });
    }
    Ok(ranked(samples)
        .into_iter()
        .take(n_gaussians)
        .map(|i| samples[i].point.clone())
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct LocalSelection {
    pub means: Vec<Vec<f64>>,
    /// Number of genuine local maximizers among `means`.
    pub local_maxima: usize,
    /// All magnitudes were equal and top selection was used instead.
    pub degenerate: bool,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// True when `samples[i]` strictly beats its `k` nearest neighbours.
fn is_local_max(samples: &[ResidualSample], i: usize, k: usize, scratch: &mut Vec<(f64, usize)>) -> bool {
    let p = &samples[i].point;
    scratch.clear();
    scratch.extend(
        samples
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(j, s)| (sq_dist(p, &s.point), j)),
    );
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < scratch.len() {
        scratch.select_nth_unstable_by(k - 1, cmp);
        scratch.truncate(k);
    }
    let m = samples[i].magnitude;
    scratch.iter().all(|&(_, j)| m > samples[j].magnitude)
}

pub fn select_means_local(samples: &[ResidualSample], n_gaussians: usize, k_neighbors: usize) -> Result<LocalSelection> {
    if samples.len() <= k_neighbors || k_neighbors == 0 {
        return Err(GasError::TooFewSamples {
            needed: k_neighbors + 1,
            got: samples.len(),
        });
    }
    if samples.len() < n_gaussians {
        return Err(GasError::TooFewSamples {
            needed: n_gaussians,
            got: samples.len(),
        });
    }
    let order = ranked(samples);
    let first = samples[order[0]].magnitude;
    if samples.iter().all(|s| s.magnitude == first) {
        return Ok(LocalSelection {
            means: select_means_top(samples, n_gaussians)?,
            local_maxima: 0,
            degenerate: true,
        });
    }
    let mut scratch = Vec::with_capacity(samples.len());
    let mut chosen = Vec::with_capacity(n_gaussians);
    for &i in &order {
        if chosen.len() == n_gaussians {
            break;
        }
        if is_local_max(samples, i, k_neighbors, &mut scratch) {
            chosen.push(i);
        }
    }
    let local_maxima = chosen.len();
    for &i in &order {
        if chosen.len() == n_gaussians {
            break;
        }
        if !chosen.contains(&i) {
            chosen.push(i);
        }
    }
    Ok(LocalSelection {
        means: chosen.into_iter().map(|i| samples[i].point.clone()).collect(),
        local_maxima,
        degenerate: false,
    })
}

/// Finite-difference stencil for `∂r/∂x_k` at `x`: central where both
/// neighbours stay in the box, one-sided otherwise.
fn stencil(x: &[f64], h: f64, domain: &BoxDomain) -> Vec<(Vec<f64>, Vec<f64>, f64)> {
    (0..x.len())
        .map(|k| {
            let mut plus = x.to_vec();
            let mut minus = x.to_vec();
            plus[k] += h;
            minus[k] -= h;
            let (p_in, m_in) = (domain.contains(&plus), domain.contains(&minus));
            match (p_in, m_in) {
                (true, true) | (false, false) => (plus, minus, 2.0 * h),
                (true, false) => (plus, x.to_vec(), h),
                (false, true) => (x.to_vec(), minus, h),
            }
        })
        .collect()
}

/// `∇_x r` at several points by finite differences of the exact residual.
pub fn residual_input_gradients(
    params: &MlpParams,
    problem: &PdeProblem,
    points: &[Vec<f64>],
    h: f64,
) -> Result<Vec<Vec<f64>>> {
    let domain = problem.domain();
    let d = problem.dim;
    let mut probe = PointSet::with_capacity(d, points.len() * 2 * d);
    let mut spans = Vec::with_capacity(points.len() * d);
    for x in points {
        for (plus, minus, span) in stencil(x, h, &domain) {
            probe.push(&plus)?;
            probe.push(&minus)?;
            spans.push(span);
        }
    }
    let r = residuals(params, problem, &probe)?;
    Ok(spans
        .chunks(d)
        .enumerate()
        .map(|(i, s)| {
            s.iter()
                .enumerate()
                .map(|(k, span)| {
                    let j = 2 * (i * d + k);
                    (r[j] - r[j + 1]) / span
                })
                .collect()
        })
        .collect())
}

pub fn residual_input_gradient(params: &MlpParams, problem: &PdeProblem, x: &[f64], h: f64) -> Result<Vec<f64>> {
    Ok(residual_input_gradients(params, problem, &[x.to_vec()], h)?.remove(0))
}

/// Diagonal variances `clamp(λ / |g_k|, var_min, var_max)`.
pub fn build_covariance(grad_r: &[f64], lambda: f64, var_min: f64, var_max: f64) -> Vec<f64> {
    grad_r
        .iter()
        .map(|g| {
            let v = lambda / g.abs();
            if v.is_nan() {
                var_max
            } else {
                v.clamp(var_min, var_max)
            }
        })
        .collect()
}

/// Uniform weights `1 / N_G`.
pub fn build_mixture(means: Vec<Vec<f64>>, variances: Vec<Vec<f64>>) -> Result<GaussianMixture> {
    if means.is_empty() {
        return Err(GasError::InvalidArgument("mixture needs at least one component".into()));
    }
    if means.len() != variances.len() {
        return Err(GasError::InvalidArgument(format!(
            "{} means but {} variance vectors",
            means.len(),
            variances.len()
        )));
    }
    let w = 1.0 / means.len() as f64;
    Ok(GaussianMixture {
        components: means
            .into_iter()
            .zip(variances)
            .map(|(mean, variances)| GaussianComponent {
                mean,
                variances,
                weight: w,
            })
            .collect(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct MixtureDraw {
    pub points: PointSet,
    pub component_ids: Vec<usize>,
}

/// `n_per_component` draws from every component in order. A draw outside
/// the box is redrawn up to [`MAX_REDRAWS`] times, then clamped.
pub fn sample_mixture<R: Rng + ?Sized>(
    mixture: &GaussianMixture,
    n_per_component: usize,
    domain: &BoxDomain,
    rng: &mut R,
) -> MixtureDraw {
    let d = domain.dim;
    let mut points = PointSet::with_capacity(d, mixture.len() * n_per_component);
    let mut ids = Vec::with_capacity(mixture.len() * n_per_component);
    let mut x = vec![0.0; d];
    for (c, comp) in mixture.components.iter().enumerate() {
        let std: Vec<f64> = comp.variances.iter().map(|v| v.sqrt()).collect();
        for _ in 0..n_per_component {
            for _ in 0..=MAX_REDRAWS {
                for k in 0..d {
                    let z: f64 = rng.sample(StandardNormal);
                    x[k] = comp.mean[k] + std[k] * z;
                }
                if domain.contains(&x) {
                    break;
                }
            }
            domain.clamp(&mut x);
            points.push(&x).expect("dimension matches domain");
            ids.push(c);
        }
    }
    MixtureDraw {
        points,
        component_ids: ids,
    }
}

/// `σ = [2 V″(x₀)]^{-1/2}` with `V = -ln r` and the curvature estimated from
/// the slope one offset away: `V″ ≈ -r′(x₀ + ε) / (ε r(x₀))`. The slope is a
/// central difference with step `ε / 100`.
pub fn laplace_sigma_1d<F: Fn(f64) -> f64>(r: F, x0: f64, eps: f64) -> Result<f64> {
    let delta = eps * 1e-2;
    let y = x0 + eps;
    let slope = (r(y + delta) - r(y - delta)) / (2.0 * delta);
    laplace_sigma_from_slope(r(x0), slope, eps)
}

/// Same as [`laplace_sigma_1d`] with the slope `r′(x₀ + ε)` supplied.
pub fn laplace_sigma_from_slope(r0: f64, slope_at_offset: f64, eps: f64) -> Result<f64> {
    if r0 == 0.0 || eps == 0.0 {
        return Err(GasError::InvalidArgument("r(x0) and eps must be nonzero".into()));
    }
    let v2 = -slope_at_offset / (eps * r0);
    if !(v2 > 0.0) || !v2.is_finite() {
        return Err(GasError::NotLocalMax(v2));
    }
    Ok((2.0 * v2).powf(-0.5))
}

/// Search grid for [`risk_maximization_oracle`].
#[derive(Clone, Debug, PartialEq)]
pub struct RiskGrid {
    pub mu_range: (f64, f64),
    pub n_mu: usize,
    pub sigma_range: (f64, f64),
    pub n_sigma: usize,
    pub x_range: (f64, f64),
    pub n_quad: usize,
}

impl RiskGrid {
    pub fn mu(&self, i: usize) -> f64 {
        lin(self.mu_range, self.n_mu, i)
    }

    pub fn sigma(&self, j: usize) -> f64 {
        lin(self.sigma_range, self.n_sigma, j)
    }

    pub fn mu_step(&self) -> f64 {
        (self.mu_range.1 - self.mu_range.0) / (self.n_mu - 1) as f64
    }

    pub fn sigma_step(&self) -> f64 {
        (self.sigma_range.1 - self.sigma_range.0) / (self.n_sigma - 1) as f64
    }
}

fn lin(range: (f64, f64), n: usize, i: usize) -> f64 {
    range.0 + (range.1 - range.0) * i as f64 / (n - 1) as f64
}

/// `∫ r²(x) N(x | μ, σ) dx` by composite Simpson on the grid's x range.
pub fn expected_risk<F: Fn(f64) -> f64>(r: &F, mu: f64, sigma: f64, grid: &RiskGrid) -> f64 {
    let n = grid.n_quad + (grid.n_quad + 1) % 2; // odd node count
    let (a, b) = grid.x_range;
    let h = (b - a) / (n - 1) as f64;
    let norm = 1.0 / (sigma * (2.0 * std::f64::consts::PI).sqrt());
    let mut sum = 0.0;
    for i in 0..n {
        let x = a + h * i as f64;
        let w = if i == 0 || i == n - 1 {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let rv = r(x);
        let z = (x - mu) / sigma;
        sum += w * rv * rv * norm * (-0.5 * z * z).exp();
    }
    sum * h / 3.0
}

/// Brute-force argmax of the expected squared residual over the `(μ, σ)`
/// grid restricted to `σ ≥ sigma_floor`. Ties keep the first grid point.
pub fn risk_maximization_oracle<F: Fn(f64) -> f64>(r: F, sigma_floor: f64, grid: &RiskGrid) -> Result<(f64, f64)> {
    if grid.n_mu < 2 || grid.n_sigma < 2 || grid.n_quad < 3 || grid.sigma_range.0 <= 0.0 {
        return Err(GasError::InvalidArgument("degenerate risk grid".into()));
    }
    let tol = 1e-12 * grid.sigma_range.1.abs().max(1.0);
    let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
    for j in 0..grid.n_sigma {
        let sigma = grid.sigma(j);
        if sigma + tol < sigma_floor {
            continue;
        }
        for i in 0..grid.n_mu {
            let mu = grid.mu(i);
            let v = expected_risk(&r, mu, sigma, grid);
            if v > best.0 {
                best = (v, mu, sigma);
            }
        }
    }
    if best.0 == f64::NEG_INFINITY {
        return Err(GasError::InvalidArgument("sigma floor above the grid".into()));
    }
    Ok((best.1, best.2))
}
