//! `roadgraph`: synthetic corpus generation, interaction-graph extraction,
//! rule and GCN classification, and the evaluation harnesses, as
//! subcommands over JSON/CSV files.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or config error.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use roadgraph::error::Error;
use roadgraph::graph::{build_graph, save_graphs_jsonl, DEFAULT_DEADBAND};
use roadgraph::metrics::{EvalReport, RunMetrics};
use roadgraph::model::{attention_summary, forward, Model, ModelConfig};
use roadgraph::numerics::grad_check;
use roadgraph::scene::{load_scenes_with, save_scenes_jsonl, Scene};
use roadgraph::synth::{split_corpus, synth_corpus, SynthConfig};
use roadgraph::train::{
    evaluate_model, evaluate_rules, prepare, run_seeds, scarcity_csv, scarcity_experiment,
    GraphExample, TrainConfig, SCARCITY_FRACTIONS,
};
use roadgraph::{Scalar, Tensor};

/// Full run configuration; any JSON file section can be overridden by
/// command-line flags. Unknown keys are rejected.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RunConfig {
    synth: SynthConfig,
    model: ModelConfig,
    train: TrainConfig,
    /// Train/val/test split ratios; must sum to 1.
    split: (Scalar, Scalar, Scalar),
    deadband: Scalar,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            synth: SynthConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            split: (0.7, 0.15, 0.15),
            deadband: DEFAULT_DEADBAND,
        }
    }
}

impl RunConfig {
    fn load(path: Option<&Path>) -> Result<RunConfig, Error> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => {
                let text =
                    fs::read_to_string(p).map_err(|e| Error::io(p.display().to_string(), e))?;
                serde_json::from_str(&text).map_err(|e| {
                    Error::Config(format!("bad config {}: {}", p.display(), e))
                })
            }
        }
    }

    /// Writes the effective config next to the command's outputs so every
    /// run is reproducible from its artifacts alone.
    fn echo(&self, dir: &Path) -> Result<(), Error> {
        let path = dir.join("config.json");
        let text = serde_json::to_string_pretty(self).expect("config serialization cannot fail");
        fs::write(&path, text).map_err(|e| Error::io(path.display().to_string(), e))
    }
}

#[derive(Parser)]
#[command(name = "roadgraph", version, about = "Vehicle behavior classification from temporal interaction graphs")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct CommonConfig {
    /// JSON run config; flags override individual fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a labeled synthetic corpus and split it train/val/test.
    Synth {
        #[command(flatten)]
        common: CommonConfig,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        scenes_per_class: Option<usize>,
        #[arg(long)]
        noise_sigma: Option<Scalar>,
        /// Comma-separated train,val,test ratios (sum 1).
        #[arg(long)]
        split: Option<String>,
    },
    /// Build interaction graphs from a scene file or directory.
    Graph {
        /// Scene JSON/JSONL file or directory.
        #[arg(long)]
        scenes: PathBuf,
        /// Output JSONL path.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        deadband: Option<Scalar>,
    },
    /// Train both-variant GCN models over all configured seeds.
    Train {
        #[command(flatten)]
        common: CommonConfig,
        /// Directory holding train.jsonl / val.jsonl / test.jsonl.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Train only the attention variant.
        #[arg(long)]
        attention_only: bool,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<Scalar>,
    },
    /// Evaluate a checkpoint on a scene file.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        scenes: PathBuf,
        /// Report path (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        deadband: Option<Scalar>,
        /// Expected comma-separated layer dims; errors if the checkpoint
        /// disagrees.
        #[arg(long)]
        layer_dims: Option<String>,
    },
    /// Evaluate the deterministic rule baseline on a scene file.
    Rules {
        #[arg(long)]
        scenes: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        deadband: Option<Scalar>,
    },
    /// Label-scarcity experiment (both models, all seeds, per fraction).
    Scarcity {
        #[command(flatten)]
        common: CommonConfig,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated label fractions in (0,1].
        #[arg(long)]
        fractions: Option<String>,
    },
    /// Train on the source corpus and evaluate on each target corpus.
    Transfer {
        #[command(flatten)]
        common: CommonConfig,
        /// Source directory (train.jsonl / val.jsonl / test.jsonl).
        #[arg(long)]
        data: PathBuf,
        /// Target scene files; classes absent from a target are dropped
        /// from its report.
        #[arg(long, required = true)]
        target: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export the class-by-relation attention summary CSV.
    Attn {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        scenes: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        deadband: Option<Scalar>,
    },
    /// Check model gradients against finite differences (both variants).
    Gradcheck {
        #[arg(long, default_value_t = 1e-5)]
        h: Scalar,
        #[arg(long, default_value_t = 1e-4)]
        tol: Scalar,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::Format(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn parse_triple(text: &str) -> Result<(Scalar, Scalar, Scalar), Error> {
    let parts: Vec<Scalar> = text
        .split(',')
        .map(|p| p.trim().parse::<Scalar>())
        .collect::<Result<_, _>>()
        .map_err(|e| Error::Config(format!("bad ratio list {text:?}: {e}")))?;
    if parts.len() != 3 {
        return Err(Error::Config(format!(
            "expected 3 comma-separated ratios, got {}",
            parts.len()
        )));
    }
    Ok((parts[0], parts[1], parts[2]))
}

fn parse_fractions(text: &str) -> Result<Vec<Scalar>, Error> {
    let out: Vec<Scalar> = text
        .split(',')
        .map(|p| p.trim().parse::<Scalar>())
        .collect::<Result<_, _>>()
        .map_err(|e| Error::Config(format!("bad fraction list {text:?}: {e}")))?;
    for &f in &out {
        if !(f > 0.0 && f <= 1.0) {
            return Err(Error::Config(format!("fraction {f} outside (0,1]")));
        }
    }
    Ok(out)
}

fn mkdir(dir: &Path) -> Result<(), Error> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))
}

fn write_text(path: &Path, text: &str) -> Result<(), Error> {
    fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

fn load_examples(path: &Path, cfg: &RunConfig) -> Result<Vec<GraphExample>, Error> {
    let scenes = load_scenes_with(path, cfg.synth.max_vehicles)?;
    prepare(&scenes, cfg.deadband)
}

fn load_split(
    dir: &Path,
    cfg: &RunConfig,
) -> Result<(Vec<Scene>, Vec<GraphExample>, Vec<GraphExample>, Vec<GraphExample>), Error> {
    let train_scenes = load_scenes_with(&dir.join("train.jsonl"), cfg.synth.max_vehicles)?;
    let train = prepare(&train_scenes, cfg.deadband)?;
    let val = load_examples(&dir.join("val.jsonl"), cfg)?;
    let test = load_examples(&dir.join("test.jsonl"), cfg)?;
    Ok((train_scenes, train, val, test))
}

fn run(cmd: Cmd) -> Result<(), Error> {
    match cmd {
        Cmd::Synth {
            common,
            out,
            scenes_per_class,
            noise_sigma,
            split,
        } => {
            let mut cfg = RunConfig::load(common.config.as_deref())?;
            if let Some(seed) = common.seed {
                cfg.synth.seed = seed;
            }
            if let Some(n) = scenes_per_class {
                cfg.synth.scenes_per_class = n;
            }
            if let Some(s) = noise_sigma {
                cfg.synth.noise_sigma = s;
            }
            if let Some(s) = split {
                cfg.split = parse_triple(&s)?;
            }
            mkdir(&out)?;
            let scenes = synth_corpus(&cfg.synth)?;
            let total = scenes.len();
            let (train, val, test, warnings) =
                split_corpus(scenes, cfg.split, cfg.synth.seed)?;
            save_scenes_jsonl(&train, &out.join("train.jsonl"))?;
            save_scenes_jsonl(&val, &out.join("val.jsonl"))?;
            save_scenes_jsonl(&test, &out.join("test.jsonl"))?;
            let manifest = serde_json::json!({
                "total_scenes": total,
                "train": train.len(),
                "val": val.len(),
                "test": test.len(),
                "warnings": warnings,
            });
            write_text(
                &out.join("manifest.json"),
                &serde_json::to_string_pretty(&manifest).unwrap(),
            )?;
            cfg.echo(&out)?;
            println!(
                "synth: {} scenes -> {} train / {} val / {} test",
                total,
                train.len(),
                val.len(),
                test.len()
            );
            Ok(())
        }
        Cmd::Graph {
            scenes,
            out,
            deadband,
        } => {
            let deadband = deadband.unwrap_or(DEFAULT_DEADBAND);
            let loaded = load_scenes_with(&scenes, roadgraph::scene::DEFAULT_MAX_VEHICLES)?;
            let mut graphs = Vec::new();
            let mut errors = Vec::new();
            for scene in &loaded {
                match build_graph(scene, deadband) {
                    Ok(g) => graphs.push(g),
                    Err(e) => errors.push(format!("{}: {}", scene.id, e)),
                }
            }
            save_graphs_jsonl(&graphs, &out)?;
            println!("graph: {} built, {} failed", graphs.len(), errors.len());
            for e in &errors {
                eprintln!("  {e}");
            }
            if errors.is_empty() {
                Ok(())
            } else {
                Err(Error::Scene {
                    scene: errors[0].clone(),
                    message: format!("{} scene(s) failed graph construction", errors.len()),
                })
            }
        }
        Cmd::Train {
            common,
            data,
            out,
            attention_only,
            epochs,
            lr,
        } => {
            let mut cfg = RunConfig::load(common.config.as_deref())?;
            if let Some(seed) = common.seed {
                cfg.train.seeds = vec![seed];
            }
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            if let Some(l) = lr {
                cfg.train.lr = l;
            }
            mkdir(&out)?;
            let (_, train, val, test) = load_split(&data, &cfg)?;
            let variants: &[bool] = if attention_only { &[true] } else { &[false, true] };
            for &attention in variants {
                let (report, models) = run_seeds(&cfg.train, attention, &train, &val, &test)?;
                let tag = &report.method;
                for (model, run) in models.iter().zip(&report.runs) {
                    model.save(&out.join(format!("checkpoint_{}_seed{}.json", tag, run.seed)))?;
                }
                write_text(&out.join(format!("report_{}.json", tag)), &report.to_json())?;
                println!(
                    "train[{}]: mean test macro-F1 {:.4} over {} seeds",
                    tag,
                    report.mean_macro_f1,
                    report.runs.len()
                );
            }
            cfg.echo(&out)?;
            Ok(())
        }
        Cmd::Eval {
            checkpoint,
            scenes,
            out,
            deadband,
            layer_dims,
        } => {
            let model = Model::load(&checkpoint)?;
            if let Some(dims) = layer_dims {
                let expected: Vec<usize> = dims
                    .split(',')
                    .map(|p| p.trim().parse::<usize>())
                    .collect::<Result<_, _>>()
                    .map_err(|e| Error::Config(format!("bad layer dims {dims:?}: {e}")))?;
                if expected != model.cfg.layer_dims {
                    return Err(Error::Config(format!(
                        "checkpoint layer dims {:?} conflict with requested {:?}",
                        model.cfg.layer_dims, expected
                    )));
                }
            }
            let mut cfg = RunConfig::default();
            cfg.deadband = deadband.unwrap_or(DEFAULT_DEADBAND);
            let data = load_examples(&scenes, &cfg)?;
            let cm = evaluate_model(&model, &data);
            let method = if model.cfg.use_attention {
                "rel_att_mrgcn"
            } else {
                "mrgcn"
            };
            let report =
                EvalReport::from_runs(method, vec![RunMetrics::from_confusion(model.cfg.seed, &cm)]);
            emit_report(&report, out.as_deref())
        }
        Cmd::Rules {
            scenes,
            out,
            deadband,
        } => {
            let mut cfg = RunConfig::default();
            cfg.deadband = deadband.unwrap_or(DEFAULT_DEADBAND);
            let data = load_examples(&scenes, &cfg)?;
            let cm = evaluate_rules(&data);
            let report = EvalReport::from_runs("rules", vec![RunMetrics::from_confusion(0, &cm)]);
            emit_report(&report, out.as_deref())
        }
        Cmd::Scarcity {
            common,
            data,
            out,
            fractions,
        } => {
            let mut cfg = RunConfig::load(common.config.as_deref())?;
            if let Some(seed) = common.seed {
                cfg.train.seeds = vec![seed];
            }
            let fractions = match fractions {
                Some(f) => parse_fractions(&f)?,
                None => SCARCITY_FRACTIONS.to_vec(),
            };
            mkdir(&out)?;
            let (train_scenes, _, val, test) = load_split(&data, &cfg)?;
            let results =
                scarcity_experiment(&cfg.train, &train_scenes, &val, &test, &fractions)?;
            write_text(&out.join("scarcity.csv"), &scarcity_csv(&results))?;
            write_text(
                &out.join("scarcity.json"),
                &serde_json::to_string_pretty(&results).unwrap(),
            )?;
            cfg.echo(&out)?;
            for r in &results {
                println!(
                    "scarcity {:.2}: mrgcn macro-recall {:.4}, rel-att {:.4}",
                    r.fraction, r.mrgcn.mean_macro_recall, r.rel_att.mean_macro_recall
                );
            }
            Ok(())
        }
        Cmd::Transfer {
            common,
            data,
            target,
            out,
        } => {
            let mut cfg = RunConfig::load(common.config.as_deref())?;
            if let Some(seed) = common.seed {
                cfg.train.seeds = vec![seed];
            }
            mkdir(&out)?;
            let (_, train, val, test) = load_split(&data, &cfg)?;
            for attention in [false, true] {
                let (source_report, models) =
                    run_seeds(&cfg.train, attention, &train, &val, &test)?;
                let tag = source_report.method.clone();
                write_text(
                    &out.join(format!("source_{}.json", tag)),
                    &source_report.to_json(),
                )?;
                for path in &target {
                    let target_data = load_examples(path, &cfg)?;
                    let runs: Vec<RunMetrics> = models
                        .iter()
                        .zip(&source_report.runs)
                        .map(|(m, r)| {
                            RunMetrics::from_confusion(r.seed, &evaluate_model(m, &target_data))
                        })
                        .collect();
                    let mut report = EvalReport::from_runs(&tag, runs);
                    report.retain_present_classes();
                    let stem = path
                        .file_stem()
                        .map(|s| s.to_string_lossy().into_owned())
                        .unwrap_or_else(|| "target".to_string());
                    write_text(
                        &out.join(format!("target_{}_{}.json", stem, tag)),
                        &report.to_json(),
                    )?;
                    println!(
                        "transfer[{}] {}: macro-F1 {:.4}",
                        tag, stem, report.mean_macro_f1
                    );
                }
            }
            cfg.echo(&out)?;
            Ok(())
        }
        Cmd::Attn {
            checkpoint,
            scenes,
            out,
            deadband,
        } => {
            let model = Model::load(&checkpoint)?;
            let mut cfg = RunConfig::default();
            cfg.deadband = deadband.unwrap_or(DEFAULT_DEADBAND);
            let data = load_examples(&scenes, &cfg)?;
            let graphs: Vec<_> = data.into_iter().map(|ex| ex.graph).collect();
            let summary = attention_summary(&model, &graphs)?;
            write_text(&out, &summary.to_csv())?;
            println!("attn: wrote {}", out.display());
            Ok(())
        }
        Cmd::Gradcheck { h, tol } => {
            for attention in [false, true] {
                let report = gradcheck_variant(attention, h, tol)?;
                let tag = if attention { "rel_att_mrgcn" } else { "mrgcn" };
                println!(
                    "gradcheck[{}]: max rel err {:.3e} over {} entries ({})",
                    tag,
                    report.max_rel_err,
                    report.entries_checked,
                    if report.passed() { "pass" } else { "FAIL" }
                );
                if !report.passed() {
                    return Err(Error::Format(format!(
                        "gradient check failed for {} (max rel err {:.3e} >= {:.1e})",
                        tag, report.max_rel_err, tol
                    )));
                }
            }
            Ok(())
        }
    }
}

fn emit_report(report: &EvalReport, out: Option<&Path>) -> Result<(), Error> {
    let text = report.to_json();
    match out {
        Some(path) => write_text(path, &text),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

/// Gradient check on a fixed dense 6-node graph carrying every relation,
/// with small layer dims to keep the finite-difference sweep fast.
fn gradcheck_variant(
    attention: bool,
    h: Scalar,
    tol: Scalar,
) -> Result<roadgraph::numerics::GradCheckReport<Scalar>, Error> {
    let g = roadgraph::dense_demo_graph();
    let labels: Vec<Option<usize>> = (0..g.nodes.len())
        .map(|i| if i % 2 == 0 { Some(i % 6) } else { None })
        .collect();
    let cfg = ModelConfig {
        layer_dims: vec![6, 5, 6],
        embedding_dim: 6,
        heads: 2,
        use_attention: attention,
        use_skip: true,
        seed: 42,
    };
    let model = Model::new(cfg.clone())?;
    let loss_of = |params: &roadgraph::ParamStore| -> Scalar {
        let mut pass = forward(&g, params, &cfg);
        let loss = pass
            .tape
            .masked_cross_entropy(pass.logits, &labels)
            .expect("labels are non-empty");
        pass.tape.value(loss).as_scalar()
    };
    let grads_of = |params: &roadgraph::ParamStore| -> BTreeMap<String, Tensor> {
        let pass = forward(&g, params, &cfg);
        pass.loss_and_grads(&labels).expect("labels are non-empty").1
    };
    Ok(grad_check(loss_of, grads_of, &model.params, h, tol))
}
