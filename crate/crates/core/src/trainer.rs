//! The incremental training loop: rounds of minibatch training, each
//! followed by residual-driven sampling that grows the interior set.

use rand::seq::index;
use rand::Rng;

use crate::autodiff::{loss_param_gradient, residuals};
use crate::config::{GasConfig, Mode, OptimizerKind};
use crate::error::{GasError, Result};
use crate::metrics::{fns_ans, mse_on_grid, relative_l2, RoundMetrics};
use crate::network::{init_mlp, AdamState, MlpParams, OptimizerState};
use crate::pde::PdeProblem;
use crate::points::{BoxDomain, PointSet};
use crate::rng::{round_rng, stage_rng};
use crate::sampler::{
    build_covariance, build_mixture, residual_input_gradients, sample_mixture, select_means_local,
    select_means_top, GaussianMixture, ResidualSample,
};

/// Interior and boundary training points, each tagged with the round that
/// added it. Points are only ever appended.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub interior: PointSet,
    pub interior_round: Vec<usize>,
    pub boundary: PointSet,
    pub boundary_round: Vec<usize>,
    /// Initial `(N_r, N_b)`, the ratio kept when growing.
    pub initial_counts: (usize, usize),
}

impl Dataset {
    pub fn new(interior: PointSet, boundary: PointSet) -> Self {
        let counts = (interior.len(), boundary.len());
        Self {
            interior_round: vec![0; interior.len()],
            boundary_round: vec![0; boundary.len()],
            interior,
            boundary,
            initial_counts: counts,
        }
    }

    pub fn uniform<R: Rng + ?Sized>(domain: &BoxDomain, n_interior: usize, n_boundary: usize, rng: &mut R) -> Self {
        let interior = domain.sample_interior(n_interior, rng);
        let boundary = domain.sample_boundary(n_boundary, rng);
        Self::new(interior, boundary)
    }

    /// Boundary count that restores the initial ratio, rounded up.
    pub fn boundary_target(&self) -> usize {
        let (nr, nb) = self.initial_counts;
        if nr == 0 {
            return self.boundary.len();
        }
        (self.interior.len() * nb).div_ceil(nr)
    }
}

/// `m` points drawn uniformly without replacement.
pub fn minibatch<R: Rng + ?Sized>(part: &PointSet, m: usize, rng: &mut R) -> Result<PointSet> {
    if m > part.len() {
        return Err(GasError::BatchTooLarge {
            requested: m,
            available: part.len(),
        });
    }
    let idx = index::sample(rng, part.len(), m).into_vec();
    Ok(part.select(&idx))
}

/// Appends `new_interior` tagged `round`, then uniform boundary points
/// until the initial boundary-to-interior ratio is restored.
pub fn augment_dataset<R: Rng + ?Sized>(
    dataset: &mut Dataset,
    new_interior: &PointSet,
    round: usize,
    rng: &mut R,
) -> Result<()> {
    let domain = BoxDomain::new(dataset.interior.dim());
    if let Some(p) = new_interior.iter().find(|p| !domain.contains(p)) {
        return Err(GasError::OutsideDomain { point: p.to_vec() });
    }
    if new_interior.is_empty() {
        return Ok(());
    }
    dataset.interior.extend(new_interior);
    dataset.interior_round.extend(std::iter::repeat_n(round, new_interior.len()));
    let target = dataset.boundary_target();
    if target > dataset.boundary.len() {
        let extra = domain.sample_boundary(target - dataset.boundary.len(), rng);
        dataset.boundary_round.extend(std::iter::repeat_n(round, extra.len()));
        dataset.boundary.extend(&extra);
    }
    Ok(())
}

pub fn new_optimizer(config: &GasConfig, params: &MlpParams) -> OptimizerState {
    match config.optimizer {
        OptimizerKind::Adam => OptimizerState::Adam(AdamState::new(params, config.adam())),
        OptimizerKind::Sgd => OptimizerState::Sgd {
            learning_rate: config.learning_rate,
            step: 0,
        },
    }
}

/// Runs `epochs_per_round` epochs of `steps_per_epoch` optimizer steps, each
/// on fresh minibatches. Returns `J_N` of the last step of every epoch.
#[allow(clippy::too_many_arguments)]
pub fn train_round<R: Rng + ?Sized>(
    params: &mut MlpParams,
    state: &mut OptimizerState,
    dataset: &Dataset,
    problem: &PdeProblem,
    config: &GasConfig,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let m = config.batch_interior.min(dataset.interior.len());
    let mb = config.batch_boundary.min(dataset.boundary.len());
    let mut trace = Vec::with_capacity(config.epochs_per_round);
    for epoch in 0..config.epochs_per_round {
        let mut last = 0.0;
        for _ in 0..config.steps_per_epoch {
            let mut step = || -> Result<f64> {
                let interior = minibatch(&dataset.interior, m, rng)?;
                let boundary = minibatch(&dataset.boundary, mb, rng)?;
                let eval = loss_param_gradient(params, problem, &interior, &boundary, config.gamma)?;
                if !eval.loss.is_finite() {
                    return Err(GasError::NonFinite { stage: "loss", index: 0 });
                }
                state.apply(params, &eval.gradient)?;
                Ok(eval.loss)
            };
            last = step().map_err(|e| GasError::Epoch {
                epoch,
                source: Box::new(e),
            })?;
        }
        trace.push(last);
    }
    Ok(trace)
}

/// One row of `sampler_log.csv`.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplerLogRow {
    pub round: usize,
    pub component_id: usize,
    pub mean: Vec<f64>,
    pub variances: Vec<f64>,
    pub n_drawn: usize,
}

/// Outcome of the sampling stage after a training round.
#[derive(Clone, Debug)]
pub struct Adaptation {
    /// Round tag carried by the new points.
    pub round: usize,
    /// Mean squared validation residual that drove the stopping test.
    pub validation_risk: f64,
    pub mixture: Option<GaussianMixture>,
    pub added: PointSet,
    /// Mixture component per added point; `None` for uniform draws.
    pub component_ids: Option<Vec<usize>>,
    pub sampler_log: Vec<SamplerLogRow>,
    /// GAS-L only: the residual field had no local structure and top
    /// selection was used.
    pub degenerate_local: bool,
}

/// Everything a run produced.
#[derive(Clone, Debug)]
pub struct GasRun {
    pub params: MlpParams,
    pub metrics: Vec<RoundMetrics>,
    pub dataset: Dataset,
    pub adaptations: Vec<Adaptation>,
    pub traces: Vec<Vec<f64>>,
}

/// Receives results as soon as each stage finishes.
pub trait RoundObserver {
    fn on_round(&mut self, _metrics: &RoundMetrics, _params: &MlpParams, _trace: &[f64]) -> Result<()> {
        Ok(())
    }
    fn on_adaptation(&mut self, _adaptation: &Adaptation) -> Result<()> {
        Ok(())
    }
}

impl RoundObserver for () {}

/// State of an adaptive run between stages.
pub struct GasSession {
    pub config: GasConfig,
    pub problem: PdeProblem,
    pub params: MlpParams,
    pub optimizer: OptimizerState,
    pub dataset: Dataset,
    pub validation: PointSet,
    /// Index of the next round to train.
    pub round: usize,
    sizes: Vec<usize>,
}

impl GasSession {
    pub fn new(config: GasConfig) -> Result<Self> {
        config.validate()?;
        let problem = config.problem()?;
        let domain = problem.domain();
        let params = init_mlp(&config.layer_sizes(), &mut stage_rng(config.seed, "init"))?;
        let optimizer = new_optimizer(&config, &params);
        let dataset = Dataset::uniform(
            &domain,
            config.n_interior,
            config.n_boundary,
            &mut stage_rng(config.seed, "dataset"),
        );
        let validation = domain.sample_interior(config.n_validation, &mut stage_rng(config.seed, "validation"));
        Ok(Self {
            config,
            problem,
            params,
            optimizer,
            dataset,
            validation,
            round: 0,
            sizes: Vec::new(),
        })
    }

    /// Trains the current round and returns its loss trace.
    pub fn train(&mut self) -> Result<Vec<f64>> {
        let mut rng = round_rng(self.config.seed, "minibatch", self.round);
        train_round(
            &mut self.params,
            &mut self.optimizer,
            &self.dataset,
            &self.problem,
            &self.config,
            &mut rng,
        )
    }

    /// Metrics for the round just trained; advances the round counter.
    pub fn finish_round(&mut self, trace: &[f64]) -> Result<RoundMetrics> {
        self.sizes.push(self.dataset.interior.len());
        let (fns, ans) = fns_ans(&self.sizes)?;
        let (mse, rel_l2) = if self.problem.dim == 2 {
            (Some(mse_on_grid(&self.params, &self.problem, self.config.mse_grid)?), None)
        } else {
            (
                None,
                Some(relative_l2(
                    &self.params,
                    &self.problem,
                    self.config.rel_l2_nodes,
                    self.config.rel_l2_half_width,
                )?),
            )
        };
        let m = RoundMetrics {
            round: self.round,
            interior: self.dataset.interior.len(),
            boundary: self.dataset.boundary.len(),
            fns,
            ans,
            loss: trace.last().copied().unwrap_or(f64::NAN),
            mse,
            rel_l2,
        };
        self.round += 1;
        Ok(m)
    }

    pub fn validation_residuals(&self) -> Result<Vec<ResidualSample>> {
        crate::sampler::evaluate_validation_residuals(&self.params, &self.problem, &self.validation)
    }

    /// Proposes new interior points from the current network. Does not
    /// modify the dataset.
    pub fn propose(&mut self) -> Result<Adaptation> {
        let cfg = &self.config;
        let tag = self.round;
        if cfg.resample_validation && tag > 0 {
            self.validation = self
                .problem
                .domain()
                .sample_interior(cfg.n_validation, &mut round_rng(cfg.seed, "validation", tag));
        }
        let samples = self.validation_residuals()?;
        let risk = samples.iter().map(|s| s.residual * s.residual).sum::<f64>() / samples.len() as f64;
        let domain = self.problem.domain();
        let n_add = cfg.added_per_round();
        let mut rng = round_rng(cfg.seed, "proposal", tag);

        if cfg.mode == Mode::UniformBaseline {
            return Ok(Adaptation {
                round: tag,
                validation_risk: risk,
                mixture: None,
                added: domain.sample_interior(n_add, &mut rng),
                component_ids: None,
                sampler_log: Vec::new(),
                degenerate_local: false,
            });
        }

        let (means, degenerate) = match cfg.mode {
            Mode::GasT => (select_means_top(&samples, cfg.n_gaussians)?, false),
            _ => {
                let sel = select_means_local(&samples, cfg.n_gaussians, cfg.k_neighbors)?;
                (sel.means, sel.degenerate)
            }
        };
        let grads = residual_input_gradients(&self.params, &self.problem, &means, cfg.fd_step)?;
        let variances: Vec<Vec<f64>> = grads
            .iter()
            .map(|g| build_covariance(g, cfg.lambda, cfg.var_min, cfg.var_max))
            .collect();
        let mixture = build_mixture(means, variances)?;
        let draw = sample_mixture(&mixture, cfg.samples_per_gaussian, &domain, &mut rng);
        let sampler_log = mixture
            .components
            .iter()
            .enumerate()
            .map(|(i, c)| SamplerLogRow {
                round: tag,
                component_id: i,
                mean: c.mean.clone(),
                variances: c.variances.clone(),
                n_drawn: cfg.samples_per_gaussian,
            })
            .collect();
        Ok(Adaptation {
            round: tag,
            validation_risk: risk,
            mixture: Some(mixture),
            added: draw.points,
            component_ids: Some(draw.component_ids),
            sampler_log,
            degenerate_local: degenerate,
        })
    }

    /// Appends the proposal to the training set.
    pub fn accept(&mut self, adaptation: &Adaptation) -> Result<()> {
        let mut rng = round_rng(self.config.seed, "boundary", adaptation.round);
        augment_dataset(&mut self.dataset, &adaptation.added, adaptation.round, &mut rng)
    }
}

/// Mean squared residual over a point set.
pub fn mean_square_residual(params: &MlpParams, problem: &PdeProblem, points: &PointSet) -> Result<f64> {
    let r = residuals(params, problem, points)?;
    Ok(r.iter().map(|v| v * v).sum::<f64>() / r.len() as f64)
}

/// Runs the full adaptive loop for `config.rounds` rounds, or until the
/// mean squared validation residual drops to `eps_stop`.
pub fn gas_loop(config: &GasConfig, observer: &mut dyn RoundObserver) -> Result<GasRun> {
    let mut session = GasSession::new(config.clone())?;
    let mut metrics = Vec::new();
    let mut adaptations = Vec::new();
    let mut traces = Vec::new();
    while session.round < config.rounds {
        let k = session.round;
        let wrap = |e| GasError::Round {
            round: k,
            source: Box::new(e),
        };
        let trace = session.train().map_err(wrap)?;
        let m = session.finish_round(&trace).map_err(wrap)?;
        observer.on_round(&m, &session.params, &trace).map_err(wrap)?;
        metrics.push(m);
        traces.push(trace);
        if session.round >= config.rounds {
            break;
        }
        let a = session.propose().map_err(wrap)?;
        if a.validation_risk <= config.eps_stop {
            break;
        }
        session.accept(&a).map_err(wrap)?;
        observer.on_adaptation(&a).map_err(wrap)?;
        adaptations.push(a);
    }
    Ok(GasRun {
        params: session.params,
        metrics,
        dataset: session.dataset,
        adaptations,
        traces,
    })
}
