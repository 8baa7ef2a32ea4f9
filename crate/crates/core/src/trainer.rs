//! Adam training over parameter-shift gradients, and seeded ensembles.

use std::f64::consts::TAU;
use std::time::{Duration, Instant};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ansatz::CircuitSpec;
use crate::error::{Error, Result};
use crate::objective::{KernelSpec, QcbmObjective};
use crate::rng::{self, SimRng};
use crate::simulator::Shots;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    /// All angles zero.
    Zero,
    /// i.i.d. uniform on `[0, 2 pi)`.
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u32,
    pub config: AdamConfig,
}

impl AdamState {
    pub fn new(dim: usize, config: AdamConfig) -> Self {
        Self {
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
            config,
        }
    }

    /// One bias-corrected Adam update. Returns the advanced state and new parameters.
    pub fn step(&self, params: &[f64], gradient: &[f64]) -> Result<(AdamState, Vec<f64>)> {
        let dim = self.m.len();
        for len in [params.len(), gradient.len()] {
            if len != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: len,
                });
            }
        }
        let AdamConfig {
            lr,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.t + 1;
        let bias1 = 1.0 - beta1.powi(t as i32);
        let bias2 = 1.0 - beta2.powi(t as i32);
        let mut next = AdamState {
            m: Vec::with_capacity(dim),
            v: Vec::with_capacity(dim),
            t,
            config: self.config,
        };
        let mut updated = Vec::with_capacity(dim);
        for i in 0..dim {
            let g = gradient[i];
            let m = beta1 * self.m[i] + (1.0 - beta1) * g;
            let v = beta2 * self.v[i] + (1.0 - beta2) * g * g;
            let m_hat = m / bias1;
            let v_hat = v / bias2;
            updated.push(params[i] - lr * m_hat / (v_hat.sqrt() + epsilon));
            next.m.push(m);
            next.v.push(v);
        }
        Ok((next, updated))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub circuit: CircuitSpec,
    pub steps: usize,
    pub shots: Shots,
    pub init_mode: InitMode,
    pub adam: AdamConfig,
    pub kernel: KernelSpec,
    pub seed: u64,
}

impl TrainConfig {
    /// Default training protocol: 50 Adam steps at 2048 shots.
    pub fn new(circuit: CircuitSpec) -> Self {
        Self {
            circuit,
            steps: 50,
            shots: Shots::Finite(2048),
            init_mode: InitMode::Zero,
            adam: AdamConfig::default(),
            kernel: KernelSpec::default(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.circuit.validate()?;
        self.kernel.validate()?;
        if self.steps == 0 {
            return Err(Error::InvalidArgument("steps must be at least 1".into()));
        }
        if self.shots == Shots::Finite(0) {
            return Err(Error::InvalidShots);
        }
        Ok(())
    }
}

/// One seeded training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRun {
    pub run_id: usize,
    pub config: TrainConfig,
    /// `steps + 1` losses at the training shot count, initial loss first.
    pub loss_trace: Vec<f64>,
    pub initial_params: Vec<f64>,
    pub final_params: Vec<f64>,
    pub final_loss: f64,
    /// Infinite-shot loss at `final_params`.
    pub final_exact_loss: f64,
    #[serde(skip)]
    pub wall_time: Duration,
}

pub fn init_params(spec: &CircuitSpec, mode: InitMode, rng: &mut SimRng) -> Vec<f64> {
    let count = spec.param_count();
    match mode {
        InitMode::Zero => vec![0.0; count],
        InitMode::Uniform => (0..count).map(|_| rng.random_range(0.0..TAU)).collect(),
    }
}

pub fn train(config: &TrainConfig) -> Result<TrainRun> {
    train_with_id(config, 0)
}

fn train_with_id(config: &TrainConfig, run_id: usize) -> Result<TrainRun> {
    config.validate()?;
    let start = Instant::now();
    let objective = QcbmObjective::new(config.circuit, &config.kernel, config.shots)?;
    let mut rng = rng::from_seed(config.seed);
    let initial_params = init_params(&config.circuit, config.init_mode, &mut rng);
    train_from(config, &objective, initial_params, &mut rng, run_id, start)
}

/// Trains from explicit starting parameters, ignoring `config.init_mode`.
pub fn train_from_params(config: &TrainConfig, initial_params: Vec<f64>) -> Result<TrainRun> {
    config.validate()?;
    let start = Instant::now();
    let objective = QcbmObjective::new(config.circuit, &config.kernel, config.shots)?;
    let expected = config.circuit.param_count();
    if initial_params.len() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            found: initial_params.len(),
        });
    }
    let mut rng = rng::from_seed(config.seed);
    train_from(config, &objective, initial_params, &mut rng, 0, start)
}

fn train_from(
    config: &TrainConfig,
    objective: &QcbmObjective,
    initial_params: Vec<f64>,
    rng: &mut SimRng,
    run_id: usize,
    start: Instant,
) -> Result<TrainRun> {
    let mut params = initial_params.clone();
    let mut adam = AdamState::new(params.len(), config.adam);
    let mut loss_trace = Vec::with_capacity(config.steps + 1);
    loss_trace.push(objective.loss_at(&params, rng)?.value);
    for _ in 0..config.steps {
        let gradient = objective.parameter_shift_gradient(&params, rng)?;
        let (next, updated) = adam.step(&params, &gradient)?;
        adam = next;
        params = updated;
        loss_trace.push(objective.loss_at(&params, rng)?.value);
    }
    let final_loss = *loss_trace.last().expect("trace is never empty");
    Ok(TrainRun {
        run_id,
        config: config.clone(),
        loss_trace,
        initial_params,
        final_exact_loss: objective.exact_loss(&params)?,
        final_params: params,
        final_loss,
        wall_time: start.elapsed(),
    })
}

/// How many ensemble runs start from each initialization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnsembleSplit {
    pub zero: usize,
    pub uniform: usize,
}

impl Default for EnsembleSplit {
    fn default() -> Self {
        Self {
            zero: 25,
            uniform: 25,
        }
    }
}

impl EnsembleSplit {
    pub fn total(&self) -> usize {
        self.zero + self.uniform
    }
}

/// Per-run seed derived from the master seed and run index.
pub fn run_seed(master_seed: u64, run_index: usize) -> u64 {
    rng::derive_seed(master_seed, run_index as u64)
}

/// Trains `split.total()` independent runs; ZERO-init runs come first.
///
/// `base.seed` is the master seed; each run's own seed is derived from it, so
/// results are ordered by run index and independent of the worker count.
pub fn run_ensemble(base: &TrainConfig, split: EnsembleSplit) -> Result<Vec<TrainRun>> {
    base.validate()?;
    (0..split.total())
        .into_par_iter()
        .map(|i| {
            let mut config = base.clone();
            config.seed = run_seed(base.seed, i);
            config.init_mode = if i < split.zero {
                InitMode::Zero
            } else {
                InitMode::Uniform
            };
            train_with_id(&config, i)
        })
        .collect()
}
