//! Training loop (Adam, early stopping on validation macro-F1), multi-seed
//! evaluation, and the label-scarcity experiment.

use std::collections::BTreeMap;
use std::thread;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::graph::{build_graph, InteractionGraph, DEFAULT_DEADBAND};
use crate::metrics::{Confusion, EvalReport, RunMetrics};
use crate::model::{forward, predict_vehicles, Model, ModelConfig};
use crate::rng::stream_rng;
use crate::rules;
use crate::scene::{BehaviorClass, EntityKind, Scene, NUM_CLASSES};
use crate::synth::subsample_labels;
use crate::{ParamStore, Scalar, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: Scalar,
    pub beta1: Scalar,
    pub beta2: Scalar,
    pub eps: Scalar,
    /// Epochs without validation macro-F1 improvement before stopping.
    pub patience: usize,
    pub seeds: Vec<u64>,
    pub deadband: Scalar,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            patience: 30,
            seeds: vec![1, 2, 3, 4, 5],
            deadband: DEFAULT_DEADBAND,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be positive".to_string()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config("lr must be positive and finite".to_string()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must be non-empty".to_string()));
        }
        Ok(())
    }
}

/// One training/evaluation example: a graph plus per-node class labels
/// (None for lane markings and unlabeled vehicles).
#[derive(Clone, Debug)]
pub struct GraphExample {
    pub graph: InteractionGraph,
    pub labels: Vec<Option<usize>>,
}

impl GraphExample {
    pub fn has_labels(&self) -> bool {
        self.labels.iter().any(|l| l.is_some())
    }
}

/// Builds graphs and node label vectors for a set of scenes.
pub fn prepare(scenes: &[Scene], deadband: Scalar) -> Result<Vec<GraphExample>, Error> {
    scenes
        .iter()
        .map(|scene| {
            let graph = build_graph(scene, deadband)?;
            let labels = graph
                .nodes
                .iter()
                .map(|node| {
                    if node.kind != EntityKind::Vehicle {
                        return None;
                    }
                    scene
                        .tracks
                        .iter()
                        .find(|t| t.id == node.track_id)
                        .and_then(|t| t.label)
                        .map(|c| c.index())
                })
                .collect();
            Ok(GraphExample { graph, labels })
        })
        .collect()
}

/// Adam with bias correction; state keyed by parameter name.
pub struct Adam {
    lr: Scalar,
    beta1: Scalar,
    beta2: Scalar,
    eps: Scalar,
    t: u64,
    m: BTreeMap<String, Tensor>,
    v: BTreeMap<String, Tensor>,
}

impl Adam {
    pub fn new(cfg: &TrainConfig) -> Adam {
        Adam {
            lr: cfg.lr,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.eps,
            t: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    pub fn step(&mut self, params: &mut ParamStore, grads: &BTreeMap<String, Tensor>) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (name, g) in grads {
            let value = params.get(name);
            let m = self
                .m
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(g.rows(), g.cols()));
            let v = self
                .v
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(g.rows(), g.cols()));
            let mut updated = value.clone();
            for i in 0..g.data().len() {
                let gi = g.data()[i];
                m.data_mut()[i] = self.beta1 * m.data()[i] + (1.0 - self.beta1) * gi;
                v.data_mut()[i] = self.beta2 * v.data()[i] + (1.0 - self.beta2) * gi * gi;
                let m_hat = m.data()[i] / bc1;
                let v_hat = v.data()[i] / bc2;
                updated.data_mut()[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
            params.set(name, updated);
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: Model,
    pub best_val_macro_f1: Scalar,
    pub epochs_run: usize,
    pub train_losses: Vec<Scalar>,
}

/// Confusion matrix of model predictions over labeled vehicle nodes.
pub fn evaluate_model(model: &Model, data: &[GraphExample]) -> Confusion {
    let mut cm = Confusion::new();
    for ex in data {
        if !ex.has_labels() {
            continue;
        }
        let pass = forward(&ex.graph, &model.params, &model.cfg);
        for (node, pred) in predict_vehicles(&ex.graph, pass.logit_values()) {
            if let Some(truth) = ex.labels[node] {
                cm.add(truth, pred);
            }
        }
    }
    cm
}

/// Confusion matrix of the rule baseline over labeled vehicle nodes.
pub fn evaluate_rules(data: &[GraphExample]) -> Confusion {
    let mut cm = Confusion::new();
    for ex in data {
        for verdict in rules::classify(&ex.graph) {
            if let Some(truth) = ex.labels[verdict.node] {
                cm.add(truth, verdict.class.index());
            }
        }
    }
    cm
}

/// Trains one model with early stopping; the returned model carries the
/// parameters of the best validation epoch.
pub fn train(
    cfg: &TrainConfig,
    model_cfg: ModelConfig,
    train_data: &[GraphExample],
    val_data: &[GraphExample],
) -> Result<TrainOutcome, Error> {
    cfg.validate()?;
    let seed = model_cfg.seed;
    let mut model = Model::new(model_cfg)?;
    let mut adam = Adam::new(cfg);

    let labeled: Vec<&GraphExample> = train_data.iter().filter(|ex| ex.has_labels()).collect();
    if labeled.is_empty() {
        return Err(Error::NoSupervisedNodes);
    }

    let mut best_params = model.params.clone();
    let mut best_f1 = Scalar::NEG_INFINITY;
    let mut since_best = 0usize;
    let mut epochs_run = 0usize;
    let mut train_losses = Vec::new();

    for epoch in 0..cfg.epochs {
        epochs_run = epoch + 1;
        let mut order: Vec<usize> = (0..labeled.len()).collect();
        order.shuffle(&mut stream_rng(seed, "epoch", epoch as u64));

        let mut epoch_loss = 0.0;
        for &i in &order {
            let ex = labeled[i];
            let pass = forward(&ex.graph, &model.params, &model.cfg);
            let (loss, grads) = pass.loss_and_grads(&ex.labels)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, seed });
            }
            epoch_loss += loss;
            adam.step(&mut model.params, &grads);
        }
        train_losses.push(epoch_loss / order.len() as Scalar);

        let val_f1 = evaluate_model(&model, val_data).macro_f1();
        if val_f1 > best_f1 {
            best_f1 = val_f1;
            best_params = model.params.clone();
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }

    model.params = best_params;
    Ok(TrainOutcome {
        model,
        best_val_macro_f1: best_f1,
        epochs_run,
        train_losses,
    })
}

/// Trains one model per seed (in parallel) and evaluates each on the test
/// set. Returns per-seed metrics plus the trained models in seed order.
pub fn run_seeds(
    cfg: &TrainConfig,
    attention: bool,
    train_data: &[GraphExample],
    val_data: &[GraphExample],
    test_data: &[GraphExample],
) -> Result<(EvalReport, Vec<Model>), Error> {
    cfg.validate()?;
    let results: Vec<Result<(RunMetrics, Model), Error>> = thread::scope(|scope| {
        let handles: Vec<_> = cfg
            .seeds
            .iter()
            .map(|&seed| {
                scope.spawn(move || {
                    let model_cfg = if attention {
                        ModelConfig::rel_att(seed)
                    } else {
                        ModelConfig::mrgcn(seed)
                    };
                    let outcome = train(cfg, model_cfg, train_data, val_data)?;
                    let cm = evaluate_model(&outcome.model, test_data);
                    Ok((RunMetrics::from_confusion(seed, &cm), outcome.model))
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("training thread panicked"))
            .collect()
    });

    let mut runs = Vec::new();
    let mut models = Vec::new();
    for r in results {
        let (run, model) = r?;
        runs.push(run);
        models.push(model);
    }
    let method = if attention { "rel_att_mrgcn" } else { "mrgcn" };
    Ok((EvalReport::from_runs(method, runs), models))
}

pub const SCARCITY_FRACTIONS: [Scalar; 3] = [0.05, 0.10, 0.20];

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScarcityResult {
    pub fraction: Scalar,
    pub mrgcn: EvalReport,
    pub rel_att: EvalReport,
}

/// For each label fraction, subsamples the training labels (stratified by
/// class), trains both model variants across all seeds, and evaluates on
/// the full test set.
pub fn scarcity_experiment(
    cfg: &TrainConfig,
    train_scenes: &[Scene],
    val_data: &[GraphExample],
    test_data: &[GraphExample],
    fractions: &[Scalar],
) -> Result<Vec<ScarcityResult>, Error> {
    let mut results = Vec::new();
    for &fraction in fractions {
        let scarce = subsample_labels(train_scenes.to_vec(), fraction, 17)?;
        let scarce_data = prepare(&scarce, cfg.deadband)?;
        let (mrgcn, _) = run_seeds(cfg, false, &scarce_data, val_data, test_data)?;
        let (rel_att, _) = run_seeds(cfg, true, &scarce_data, val_data, test_data)?;
        results.push(ScarcityResult {
            fraction,
            mrgcn,
            rel_att,
        });
    }
    Ok(results)
}

/// CSV: exactly one row per (fraction, model, class) with seed-mean
/// percentages.
pub fn scarcity_csv(results: &[ScarcityResult]) -> String {
    let mut out = String::from("fraction,model,class,support,precision,recall,f1\n");
    for res in results {
        for (name, report) in [("mrgcn", &res.mrgcn), ("rel_att_mrgcn", &res.rel_att)] {
            let n = report.runs.len() as Scalar;
            for c in 0..NUM_CLASSES {
                let class = BehaviorClass::ALL[c].name();
                let support = report.runs[0].per_class[c].support;
                let mean = |f: &dyn Fn(&RunMetrics) -> Scalar| {
                    report.runs.iter().map(|r| f(r)).sum::<Scalar>() / n
                };
                let precision = mean(&|r| r.per_class[c].precision);
                let recall = mean(&|r| r.per_class[c].recall.unwrap_or(0.0));
                let f1 = mean(&|r| r.per_class[c].f1.unwrap_or(0.0));
                out.push_str(&format!(
                    "{},{},{},{},{:.2},{:.2},{:.2}\n",
                    res.fraction,
                    name,
                    class,
                    support,
                    100.0 * precision,
                    100.0 * recall,
                    100.0 * f1
                ));
            }
        }
    }
    out
}
