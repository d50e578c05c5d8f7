//! Outer optimization of `L = L_A + γ L_F`.
//!
//! Each epoch evaluates the cross-entropy `L_A`, recomputes the constraint
//! targets from the current model, solves the projection to convergence
//! (warm-started from the previous multipliers), and takes one optimizer step
//! on the combined per-pair logit gradient.

use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fairness::{ConstraintSystem, Criterion};
use crate::graph::{Graph, PairUniverse, SensitivePartition};
use crate::iprojection::{density_grad_logits, fairness_grad_logits, project, ProjectionOptions};
use crate::models::{
    accumulate_gradient, clamp_logit, fit_maxent, is_clamped, raw_logits, CneModel,
    DotProductModel, DyadicModel, MaxEntOptions, Model, ModelKind,
};
use crate::numeric::{log_sigmoid, par_sum, sigmoid};
use crate::optim::{Optimizer, OptimizerKind};

/// Fully resolved training configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model: ModelKind,
    pub criterion: Criterion,
    pub gamma: f64,
    pub epochs: usize,
    pub lr: f64,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    /// Embedding dimension (dot, cne).
    pub dim: usize,
    pub s1: f64,
    pub s2: f64,
    pub maxent_iters: usize,
    pub inner_tol: f64,
    pub inner_max_iters: usize,
    /// Fraction of constrained pairs used when solving for λ.
    pub inner_subsample: Option<f64>,
    /// Keep each non-edge in `L_A` with this probability per epoch (reweighted).
    pub negative_rate: Option<f64>,
    /// Differentiate the targets through the model's mean density.
    pub differentiate_targets: bool,
}

impl TrainConfig {
    /// Defaults for `model`: dot (128-d, Adam 0.01, 100 epochs), cne (8-d,
    /// Adam 0.1, 200 epochs, s2 = 16), maxent (100 quasi-Newton iterations;
    /// Adam 0.01 for 100 epochs when regularized).
    pub fn for_model(model: ModelKind) -> Self {
        let (dim, lr, epochs) = match model {
            ModelKind::Dot => (128, 0.01, 100),
            ModelKind::Cne => (8, 0.1, 200),
            ModelKind::MaxEnt => (0, 0.01, 100),
        };
        TrainConfig {
            model,
            criterion: Criterion::None,
            gamma: 100.0,
            epochs,
            lr,
            optimizer: OptimizerKind::Adam,
            seed: 0,
            dim,
            s1: 1.0,
            s2: 16.0,
            maxent_iters: 100,
            inner_tol: 1e-8,
            inner_max_iters: 500,
            inner_subsample: None,
            negative_rate: None,
            differentiate_targets: false,
        }
    }

    pub fn with_criterion(mut self, criterion: Criterion, gamma: f64) -> Self {
        self.criterion = criterion;
        self.gamma = gamma;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return Err(Error::Config(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if !(self.lr > 0.0) {
            return Err(Error::Config(format!("learning rate must be > 0, got {}", self.lr)));
        }
        if matches!(self.model, ModelKind::Dot | ModelKind::Cne) && self.dim == 0 {
            return Err(Error::Config("embedding dimension must be >= 1".into()));
        }
        if !(self.inner_tol > 0.0) {
            return Err(Error::Config("inner tolerance must be > 0".into()));
        }
        if let Some(r) = self.negative_rate {
            if !(r > 0.0 && r <= 1.0) {
                return Err(Error::Config(format!("negative rate {r} not in (0, 1]")));
            }
        }
        if self.criterion == Criterion::Custom {
            return Err(Error::Config("custom criteria are library-only; pass a ConstraintSystem".into()));
        }
        Ok(())
    }

    /// Builds a config from a JSON object that may set any subset of fields;
    /// the rest take the defaults of its `model` (cne when absent).
    pub fn from_partial_json(value: serde_json::Value) -> Result<Self> {
        let serde_json::Value::Object(mut given) = value else {
            return Err(Error::Config("training config must be a JSON object".into()));
        };
        let model: ModelKind = match given.get("model") {
            Some(v) => serde_json::from_value(v.clone())
                .map_err(|e| Error::Config(format!("invalid model kind: {e}")))?,
            None => ModelKind::Cne,
        };
        let serde_json::Value::Object(mut merged) = serde_json::to_value(Self::for_model(model))? else {
            unreachable!("config serializes to an object")
        };
        merged.append(&mut given);
        let config: Self = serde_json::from_value(serde_json::Value::Object(merged))
            .map_err(|e| Error::Config(format!("invalid training config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    fn regularized(&self) -> bool {
        self.gamma > 0.0 && self.criterion != Criterion::None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss_a: f64,
    pub loss_f: f64,
    pub loss: f64,
    pub dual_residual: f64,
    pub inner_iterations: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub records: Vec<EpochRecord>,
}

impl TrainTrace {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.records {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub trace: TrainTrace,
}

/// Builds the constraint system for `criterion`, or `None` for no criterion.
pub fn build_constraints(
    criterion: Criterion,
    universe: &PairUniverse,
    train_graph: &Graph,
) -> Result<Option<ConstraintSystem>> {
    match criterion {
        Criterion::None => Ok(None),
        Criterion::Dp => Ok(Some(ConstraintSystem::build_dp(universe))),
        Criterion::Eo => {
            let sys = ConstraintSystem::build_eo(universe, train_graph);
            if sys.is_empty() {
                return Err(Error::Config("EO needs at least one train edge".into()));
            }
            Ok(Some(sys))
        }
        Criterion::Custom => Err(Error::Config("custom criterion needs an explicit system".into())),
    }
}

/// Initial model for `config` on `graph`.
pub fn initial_model(graph: &Graph, universe: &PairUniverse, config: &TrainConfig) -> Model {
    let maxent = || {
        fit_maxent(
            graph,
            universe,
            MaxEntOptions {
                max_iters: config.maxent_iters,
                ..MaxEntOptions::default()
            },
        )
        .model
    };
    match config.model {
        ModelKind::MaxEnt => Model::MaxEnt(maxent()),
        ModelKind::Dot => Model::Dot(DotProductModel::random(
            graph.node_count(),
            config.dim,
            config.seed,
        )),
        ModelKind::Cne => Model::Cne(CneModel::random(
            maxent(),
            config.dim,
            config.s1,
            config.s2,
            config.seed,
        )),
    }
}

/// Trains a fresh model on `graph`.
pub fn train(graph: &Graph, partition: &SensitivePartition, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let universe = PairUniverse::new(graph, partition);
    let mut model = initial_model(graph, &universe, config);
    if config.model == ModelKind::MaxEnt && config.criterion == Criterion::None {
        let loss_a = crate::models::model_cross_entropy(&model, graph, &universe);
        return Ok(TrainOutcome {
            model,
            trace: TrainTrace {
                records: vec![EpochRecord {
                    epoch: 0,
                    loss_a,
                    loss_f: 0.0,
                    loss: loss_a,
                    dual_residual: 0.0,
                    inner_iterations: 0,
                    seconds: 0.0,
                }],
            },
        });
    }
    let system = build_constraints(config.criterion, &universe, graph)?;
    let trace = train_model(&mut model, graph, &universe, system.as_ref(), config, |_, _| {})?;
    Ok(TrainOutcome { model, trace })
}

/// Runs the outer loop on an existing model. `on_epoch` sees the model after
/// each update.
pub fn train_model<M, F>(
    model: &mut M,
    graph: &Graph,
    universe: &PairUniverse,
    system: Option<&ConstraintSystem>,
    config: &TrainConfig,
    mut on_epoch: F,
) -> Result<TrainTrace>
where
    M: DyadicModel,
    F: FnMut(usize, &M),
{
    config.validate()?;
    let labels = universe.edge_mask(graph);
    let mut optimizer = Optimizer::new(config.optimizer, config.lr, model.params().len());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_1ab5);
    let mut lambda: Option<Vec<f64>> = None;
    let mut trace = TrainTrace::default();
    let regularize = config.regularized() && system.is_some_and(|s| !s.is_empty());

    for epoch in 1..=config.epochs {
        let started = Instant::now();
        let raw = raw_logits(&*model, universe);
        let z: Vec<f64> = raw.iter().map(|&v| clamp_logit(v)).collect();

        // Per-pair L_A weight for non-edges (0 = not sampled this epoch).
        let neg_weight: Vec<f64> = match config.negative_rate {
            None => Vec::new(),
            Some(rate) => labels
                .iter()
                .map(|&a| {
                    if a {
                        1.0
                    } else if rng.gen::<f64>() < rate {
                        1.0 / rate
                    } else {
                        0.0
                    }
                })
                .collect(),
        };
        let pair_weight = |k: usize| if neg_weight.is_empty() { 1.0 } else { neg_weight[k] };

        let loss_a = par_sum(z.len(), |k| {
            let w = pair_weight(k);
            if w == 0.0 {
                0.0
            } else if labels[k] {
                -w * log_sigmoid(z[k])
            } else {
                -w * log_sigmoid(-z[k])
            }
        });
        if !loss_a.is_finite() {
            return Err(Error::Training {
                epoch,
                message: format!("cross-entropy is {loss_a}"),
            });
        }

        let mut weights: Vec<f64> = (0..z.len())
            .map(|k| pair_weight(k) * (sigmoid(z[k]) - if labels[k] { 1.0 } else { 0.0 }))
            .collect();

        let (mut loss_f, mut residual, mut inner_iterations) = (0.0, 0.0, 0);
        if regularize {
            let system = system.expect("checked above");
            let marg: Vec<f64> = z.iter().map(|&v| sigmoid(v)).collect();
            let targets = system.targets_from_marginals(&marg);
            let options = ProjectionOptions {
                tol: config.inner_tol,
                max_iters: config.inner_max_iters,
                subsample: config.inner_subsample,
                seed: config.seed.wrapping_add(epoch as u64),
                trace: false,
            };
            let projection = project(&z, system, &targets.values, lambda.as_deref(), &options)
                .map_err(|e| Error::Training {
                    epoch,
                    message: format!("inner projection failed: {e}"),
                })?;
            let fair = fairness_grad_logits(&projection, system, &z)?;
            for (w, f) in weights.iter_mut().zip(&fair) {
                *w += config.gamma * f;
            }
            if config.differentiate_targets {
                let extra = density_grad_logits(&projection, system, &z);
                for (w, f) in weights.iter_mut().zip(&extra) {
                    *w += config.gamma * f;
                }
            }
            loss_f = projection.kl;
            residual = projection.dual_residual;
            inner_iterations = projection.iterations;
            lambda = Some(projection.lambda);
        }
        let loss = loss_a + config.gamma * loss_f;
        if !loss.is_finite() {
            return Err(Error::Training {
                epoch,
                message: format!("loss is {loss}"),
            });
        }

        for (k, w) in weights.iter_mut().enumerate() {
            if is_clamped(raw[k]) {
                *w = 0.0;
            }
        }
        let grad = accumulate_gradient(&*model, universe, &weights).map_err(|e| Error::Training {
            epoch,
            message: e.to_string(),
        })?;
        optimizer.step(model.params_mut(), &grad);

        trace.records.push(EpochRecord {
            epoch,
            loss_a,
            loss_f,
            loss,
            dual_residual: residual,
            inner_iterations,
            seconds: started.elapsed().as_secs_f64(),
        });
        log::debug!(
            "epoch {epoch}: L_A={loss_a:.6} L_F={loss_f:.3e} residual={residual:.1e} inner={inner_iterations}"
        );
        on_epoch(epoch, model);
    }
    Ok(trace)
}
