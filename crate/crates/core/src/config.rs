//! Run configuration, presets and the key-value file format.
//!
//! A config file is a flat TOML document. Keys are applied on top of a base:
//! the preset named by `preset` if present, otherwise `one_peak_gas_t`.
//! Setting `problem` resets `dim`, `sharpness` and `centers` to that
//! problem's defaults before the remaining keys are applied.

use serde::{Deserialize, Serialize};

use crate::error::{GasError, Result};
use crate::network::AdamConfig;
use crate::pde::{nine_peak_centers, PdeProblem};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemId {
    OnePeak,
    TwoPeak,
    NinePeak,
    Dim10,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    GasT,
    GasL,
    UniformBaseline,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::GasT => "gas_t",
            Mode::GasL => "gas_l",
            Mode::UniformBaseline => "uniform_baseline",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GasConfig {
    pub problem: ProblemId,
    pub dim: usize,
    pub sharpness: f64,
    pub centers: Vec<Vec<f64>>,

    pub width: usize,
    pub hidden_layers: usize,

    /// `N_p`
    pub epochs_per_round: usize,
    /// `N_a`
    pub rounds: usize,
    pub steps_per_epoch: usize,
    /// `N_r`
    pub n_interior: usize,
    /// `N_b`
    pub n_boundary: usize,
    /// `m`
    pub batch_interior: usize,
    pub batch_boundary: usize,
    pub gamma: f64,

    pub mode: Mode,
    /// `N_G`
    pub n_gaussians: usize,
    pub samples_per_gaussian: usize,
    pub lambda: f64,
    pub var_min: f64,
    pub var_max: f64,
    pub fd_step: f64,
    pub k_neighbors: usize,
    /// `N_t`
    pub n_validation: usize,
    pub resample_validation: bool,

    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,

    pub seed: u64,
    pub eps_stop: f64,

    pub mse_grid: usize,
    pub rel_l2_nodes: usize,
    pub rel_l2_half_width: f64,
}

pub const PRESETS: &[&str] = &[
    "one_peak_gas_t",
    "one_peak_uniform",
    "two_peak_gas_l",
    "two_peak_gas_t",
    "two_peak_uniform",
    "nine_peak_gas_l",
    "dim10",
    "dim10_uniform",
];

fn problem_defaults(id: ProblemId) -> (usize, f64, Vec<Vec<f64>>) {
    match id {
        ProblemId::OnePeak => (2, 1000.0, vec![vec![0.5, 0.5]]),
        ProblemId::TwoPeak => (2, 1000.0, vec![vec![0.5, 0.5], vec![-0.5, -0.5]]),
        ProblemId::NinePeak => (2, 1000.0, nine_peak_centers()),
        ProblemId::Dim10 => (10, 10.0, vec![vec![0.0; 10]]),
    }
}

impl Default for GasConfig {
    fn default() -> Self {
        Self::preset("one_peak_gas_t").unwrap()
    }
}

impl GasConfig {
    fn two_d(problem: ProblemId, mode: Mode) -> Self {
        let (dim, sharpness, centers) = problem_defaults(problem);
        let adam = AdamConfig::default();
        Self {
            problem,
            dim,
            sharpness,
            centers,
            width: 32,
            hidden_layers: 6,
            epochs_per_round: 3000,
            rounds: 10,
            steps_per_epoch: 1,
            n_interior: 500,
            n_boundary: 200,
            batch_interior: 500,
            batch_boundary: 200,
            gamma: 1.0,
            mode,
            n_gaussians: 20,
            samples_per_gaussian: 25,
            lambda: 1.0,
            var_min: 1e-6,
            var_max: 0.25,
            fd_step: 1e-4,
            k_neighbors: 10,
            n_validation: 20_000,
            resample_validation: false,
            optimizer: OptimizerKind::Adam,
            learning_rate: adam.learning_rate,
            beta1: adam.beta1,
            beta2: adam.beta2,
            adam_epsilon: adam.epsilon,
            seed: 0,
            eps_stop: 1e-9,
            mse_grid: 201,
            rel_l2_nodes: 3,
            rel_l2_half_width: 0.1,
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        let c = match name {
            "one_peak_gas_t" => Self::two_d(ProblemId::OnePeak, Mode::GasT),
            "one_peak_uniform" => Self::two_d(ProblemId::OnePeak, Mode::UniformBaseline),
            "two_peak_gas_l" | "two_peak_gas_t" | "two_peak_uniform" => {
                let mode = match name {
                    "two_peak_gas_l" => Mode::GasL,
                    "two_peak_gas_t" => Mode::GasT,
                    _ => Mode::UniformBaseline,
                };
                Self {
                    epochs_per_round: 5000,
                    rounds: 20,
                    ..Self::two_d(ProblemId::TwoPeak, mode)
                }
            }
            "nine_peak_gas_l" => Self {
                epochs_per_round: 5000,
                rounds: 20,
                n_interior: 1000,
                n_boundary: 400,
                n_gaussians: 40,
                ..Self::two_d(ProblemId::NinePeak, Mode::GasL)
            },
            "dim10" | "dim10_uniform" => Self {
                width: 64,
                epochs_per_round: 3000,
                rounds: 20,
                n_interior: 10_000,
                n_boundary: 10_000,
                batch_interior: 5000,
                batch_boundary: 5000,
                n_gaussians: 40,
                samples_per_gaussian: 250,
                mode: if name == "dim10" { Mode::GasT } else { Mode::UniformBaseline },
                ..Self::two_d(ProblemId::Dim10, Mode::GasT)
            },
            _ => return None,
        };
        Some(c)
    }

    pub fn problem(&self) -> Result<PdeProblem> {
        let base = match self.problem {
            ProblemId::OnePeak => PdeProblem::one_peak(),
            ProblemId::TwoPeak => PdeProblem::two_peak(),
            ProblemId::NinePeak => PdeProblem::nine_peak(),
            ProblemId::Dim10 => PdeProblem::high_dim(self.dim),
        };
        PdeProblem::new(self.dim, base.operator, self.sharpness, self.centers.clone())
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        crate::network::layer_sizes(self.dim, self.width, self.hidden_layers)
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.adam_epsilon,
        }
    }

    /// Interior points added per adaptive round.
    pub fn added_per_round(&self) -> usize {
        self.n_gaussians * self.samples_per_gaussian
    }

    /// Every violated constraint, one message each.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        let positive = [
            ("dim", self.dim),
            ("width", self.width),
            ("hidden_layers", self.hidden_layers),
            ("rounds", self.rounds),
            ("steps_per_epoch", self.steps_per_epoch),
            ("n_interior", self.n_interior),
            ("n_boundary", self.n_boundary),
            ("batch_interior", self.batch_interior),
            ("batch_boundary", self.batch_boundary),
            ("n_gaussians", self.n_gaussians),
            ("samples_per_gaussian", self.samples_per_gaussian),
            ("k_neighbors", self.k_neighbors),
            ("n_validation", self.n_validation),
            ("mse_grid", self.mse_grid),
            ("rel_l2_nodes", self.rel_l2_nodes),
        ];
        for (k, v) in positive {
            if v == 0 {
                errs.push(format!("{k}: must be positive"));
            }
        }
        let positive_f = [
            ("sharpness", self.sharpness),
            ("lambda", self.lambda),
            ("var_min", self.var_min),
            ("var_max", self.var_max),
            ("fd_step", self.fd_step),
            ("learning_rate", self.learning_rate),
            ("adam_epsilon", self.adam_epsilon),
            ("rel_l2_half_width", self.rel_l2_half_width),
        ];
        for (k, v) in positive_f {
            if !(v > 0.0 && v.is_finite()) {
                errs.push(format!("{k}: must be a positive finite number, got {v}"));
            }
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            errs.push(format!("gamma: must be nonnegative, got {}", self.gamma));
        }
        if !(self.eps_stop >= 0.0) {
            errs.push(format!("eps_stop: must be nonnegative, got {}", self.eps_stop));
        }
        for (k, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                errs.push(format!("{k}: must lie in [0, 1), got {v}"));
            }
        }
        if self.var_min > self.var_max {
            errs.push(format!("var_min: {} exceeds var_max {}", self.var_min, self.var_max));
        }
        if self.n_gaussians > self.n_validation {
            errs.push("n_gaussians: exceeds n_validation".to_string());
        }
        if self.k_neighbors >= self.n_validation {
            errs.push("k_neighbors: must be below n_validation".to_string());
        }
        if self.mode == Mode::GasL && self.dim > 0 && self.k_neighbors == 0 {
            errs.push("k_neighbors: must be positive for gas_l".to_string());
        }
        for (i, c) in self.centers.iter().enumerate() {
            if c.len() != self.dim {
                errs.push(format!("centers: center {i} has {} coordinates, expected {}", c.len(), self.dim));
            } else if c.iter().any(|v| !(-1.0..=1.0).contains(v)) {
                errs.push(format!("centers: center {i} lies outside [-1, 1]^{}", self.dim));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(GasError::Config(errs))
        }
    }

    fn to_table(&self) -> toml::Table {
        toml::Table::try_from(self).expect("config serializes to a table")
    }

    /// Parses a config file. Every unknown key, mistyped value and violated
    /// constraint is reported, not only the first.
    pub fn from_kv_str(text: &str) -> Result<Self> {
        let user: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| GasError::Config(vec![format!("parse error: {}", e.message())]))?;
        let mut errs = Vec::new();

        let base = match user.get("preset") {
            None => Self::default(),
            Some(toml::Value::String(name)) => match Self::preset(name) {
                Some(c) => c,
                None => {
                    errs.push(format!("preset: unknown preset {name:?}; known: {}", PRESETS.join(", ")));
                    Self::default()
                }
            },
            Some(v) => {
                errs.push(format!("preset: expected a string, got {v}"));
                Self::default()
            }
        };
        let mut table = base.to_table();

        if let Some(v) = user.get("problem") {
            match v.clone().try_into::<ProblemId>() {
                Ok(id) => {
                    let (dim, sharpness, centers) = problem_defaults(id);
                    let mut c = base.clone();
                    c.problem = id;
                    c.dim = dim;
                    c.sharpness = sharpness;
                    c.centers = centers;
                    table = c.to_table();
                }
                Err(_) => errs.push(format!("problem: invalid value {v}")),
            }
        }

        for (key, value) in &user {
            if key == "preset" || key == "problem" {
                continue;
            }
            if !table.contains_key(key) {
                errs.push(format!("{key}: unknown key"));
                continue;
            }
            let mut probe = table.clone();
            probe.insert(key.clone(), value.clone());
            match probe.try_into::<GasConfig>() {
                Ok(_) => {
                    table.insert(key.clone(), value.clone());
                }
                Err(e) => errs.push(format!("{key}: invalid value {value} ({})", e.message().trim())),
            }
        }
        // `dim` set without `centers`: keep a single center at the origin
        // for the high-dimensional problem.
        if user.contains_key("dim") && !user.contains_key("centers") {
            if let Ok(c) = table.clone().try_into::<GasConfig>() {
                if c.problem == ProblemId::Dim10 {
                    table.insert("centers".into(), toml::Value::try_from(vec![vec![0.0; c.dim]]).unwrap());
                }
            }
        }
        if !errs.is_empty() {
            return Err(GasError::Config(errs));
        }
        let cfg: GasConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| GasError::Config(vec![e.message().to_string()]))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Full snapshot in the same format; parses back to an identical config.
    pub fn to_kv_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
