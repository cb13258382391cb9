//! MRGCN and Relation-Attention MRGCN over interaction graphs.
//!
//! Per layer, each relation contributes the mean over r-neighbors of a
//! linear transform of the previous features; the self-loop term and the
//! per-relation aggregates are combined by summation (plain MRGCN) or by a
//! per-node softmax attention over the six information sources
//! (relation-attention variant, multi-head with a linear head projection).

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::graph::{InteractionGraph, TemporalRelation, NUM_RELATIONS};
use crate::numerics::NodeId;
use crate::rng::stream_rng;
use crate::scene::{EntityKind, NUM_CLASSES};
use crate::{ParamStore, Scalar, Tape, Tensor};

/// Number of entity kinds (rows of the embedding table).
const NUM_ENTITY_KINDS: usize = 2;

/// Attention slots: the self-loop ("node") plus one per relation.
pub const NUM_ATT_SLOTS: usize = NUM_RELATIONS + 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Output dimension of each layer; the last must equal the class count.
    pub layer_dims: Vec<usize>,
    pub embedding_dim: usize,
    pub heads: usize,
    pub use_attention: bool,
    /// Skip connection from every layer l to layer l+2.
    pub use_skip: bool,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            layer_dims: vec![64, 32, NUM_CLASSES],
            embedding_dim: 64,
            heads: 2,
            use_attention: true,
            use_skip: true,
            seed: 1,
        }
    }
}

impl ModelConfig {
    pub fn mrgcn(seed: u64) -> Self {
        ModelConfig {
            use_attention: false,
            seed,
            ..ModelConfig::default()
        }
    }

    pub fn rel_att(seed: u64) -> Self {
        ModelConfig {
            use_attention: true,
            seed,
            ..ModelConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.layer_dims.is_empty() {
            return Err(Error::Config("layer_dims must be non-empty".to_string()));
        }
        if *self.layer_dims.last().unwrap() != NUM_CLASSES {
            return Err(Error::Config(format!(
                "last layer dim must be {} (number of classes), got {}",
                NUM_CLASSES,
                self.layer_dims.last().unwrap()
            )));
        }
        if self.heads < 1 {
            return Err(Error::Config("heads must be >= 1".to_string()));
        }
        if self.embedding_dim == 0 {
            return Err(Error::Config("embedding_dim must be positive".to_string()));
        }
        Ok(())
    }

    /// Input dimension of layer `l` (0-based).
    fn in_dim(&self, l: usize) -> usize {
        if l == 0 {
            self.embedding_dim
        } else {
            self.layer_dims[l - 1]
        }
    }
}

fn glorot(rng: &mut impl Rng, rows: usize, cols: usize) -> Tensor {
    let limit = (6.0 / (rows + cols) as Scalar).sqrt();
    Tensor::from_vec(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.gen_range(-limit..limit)).collect(),
    )
}

/// A model variant plus its parameters.
#[derive(Clone, Debug)]
pub struct Model {
    pub cfg: ModelConfig,
    pub params: ParamStore,
}

impl Model {
    /// Fresh parameters: Glorot-uniform weights, +-0.1 uniform embeddings,
    /// zero attention weights (attention starts uniform).
    pub fn new(cfg: ModelConfig) -> Result<Model, Error> {
        cfg.validate()?;
        let mut rng = stream_rng(cfg.seed, "init", 0);
        let mut params = ParamStore::new();
        params.insert(
            "embedding",
            Tensor::from_vec(
                NUM_ENTITY_KINDS,
                cfg.embedding_dim,
                (0..NUM_ENTITY_KINDS * cfg.embedding_dim)
                    .map(|_| rng.gen_range(-0.1..0.1))
                    .collect(),
            ),
        );
        for (l, &d_out) in cfg.layer_dims.iter().enumerate() {
            let d_in = cfg.in_dim(l);
            params.insert(&format!("layer{}.w_self", l), glorot(&mut rng, d_in, d_out));
            for rel in TemporalRelation::ALL {
                params.insert(
                    &format!("layer{}.w_rel.{}", l, rel.name()),
                    glorot(&mut rng, d_in, d_out),
                );
            }
            if cfg.use_attention {
                for h in 0..cfg.heads {
                    params.insert(
                        &format!("layer{}.head{}.w_u", l, h),
                        Tensor::zeros(NUM_ATT_SLOTS * d_out, NUM_ATT_SLOTS),
                    );
                }
                params.insert(
                    &format!("layer{}.w_out", l),
                    glorot(&mut rng, cfg.heads * d_out, d_out),
                );
            }
            if cfg.use_skip && l >= 2 {
                // Source is the output of layer l-2 (layer "0" source is the
                // embedding itself); a projection is only needed when the
                // dimensions differ.
                let d_src = self_skip_src_dim(&cfg, l);
                if d_src != d_out {
                    params.insert(&format!("skip{}.proj", l), glorot(&mut rng, d_src, d_out));
                }
            }
        }
        // The embedding-to-layer-1 "skip" would coincide with the self-loop;
        // the first skip lands on layer index 1 (0-based) from the embedding.
        if cfg.use_skip && cfg.layer_dims.len() >= 2 {
            let d_src = cfg.embedding_dim;
            let d_out = cfg.layer_dims[1];
            if d_src != d_out {
                params.insert("skip1.proj", glorot(&mut rng, d_src, d_out));
            }
        }
        Ok(Model { cfg, params })
    }

    pub fn forward(&self, g: &InteractionGraph) -> ForwardPass {
        forward(g, &self.params, &self.cfg)
    }

    pub fn to_checkpoint_json(&self) -> String {
        let file = CheckpointFile {
            version: 1,
            config: self.cfg.clone(),
            params: self
                .params
                .iter()
                .map(|(k, v)| (k.to_string(), v.clone()))
                .collect(),
        };
        serde_json::to_string(&file).expect("checkpoint serialization cannot fail")
    }

    pub fn from_checkpoint_json(text: &str) -> Result<Model, Error> {
        let file: CheckpointFile =
            serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        if file.version != 1 {
            return Err(Error::Format(format!(
                "unsupported checkpoint version {}",
                file.version
            )));
        }
        file.config.validate()?;
        let mut params = ParamStore::new();
        for (name, value) in file.params {
            params.insert(&name, value);
        }
        Ok(Model {
            cfg: file.config,
            params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), Error> {
        fs::write(path, self.to_checkpoint_json())
            .map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<Model, Error> {
        let text =
            fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Model::from_checkpoint_json(&text)
    }
}

fn self_skip_src_dim(cfg: &ModelConfig, l: usize) -> usize {
    cfg.in_dim(l - 1)
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    version: u32,
    config: ModelConfig,
    params: BTreeMap<String, Tensor>,
}

/// Result of one forward pass; holds the tape so a loss can be appended
/// and differentiated.
pub struct ForwardPass {
    pub tape: Tape,
    pub logits: NodeId,
    /// Tape node of every parameter, for gradient readout.
    pub param_nodes: BTreeMap<String, NodeId>,
    /// Final-layer attention scores, head-averaged, one row per node over
    /// [node, move_forward, move_backward, left_to_right, right_to_left,
    /// no_change]. None for the plain MRGCN.
    pub final_alpha: Option<Tensor>,
}

impl ForwardPass {
    pub fn logit_values(&self) -> &Tensor {
        self.tape.value(self.logits)
    }

    /// Appends the masked cross-entropy loss and runs the backward pass.
    /// Returns the loss value and per-parameter gradients.
    pub fn loss_and_grads(
        mut self,
        labels: &[Option<usize>],
    ) -> Result<(Scalar, BTreeMap<String, Tensor>), Error> {
        let loss = self.tape.masked_cross_entropy(self.logits, labels)?;
        let value = self.tape.value(loss).as_scalar();
        let grads = self.tape.backward(loss);
        let mut out = BTreeMap::new();
        for (name, node) in &self.param_nodes {
            if let Some(g) = grads.get(*node) {
                out.insert(name.clone(), g.clone());
            }
        }
        Ok((value, out))
    }
}

/// Row-normalized neighbor adjacency for one relation:
/// A[i][j] = 1/|N_r[i]| with N_r[i] = {j : edge (i, j, r)}.
///
/// Edges carry the source's motion relative to the target, so a node's
/// relation-r messages are gathered from the targets of its own r-edges;
/// under inverse closure this is the in-neighbor sum with relations
/// relabeled by their inverses, and it is the orientation that gives the
/// attention scores their per-class meaning (a lane-change node's lateral
/// relation names its own motion).
fn relation_adjacency(g: &InteractionGraph, rel: TemporalRelation) -> Tensor {
    let n = g.nodes.len();
    let mut counts = vec![0usize; n];
    for e in &g.edges {
        if e.rel == rel {
            counts[e.src] += 1;
        }
    }
    let mut a = Tensor::zeros(n, n);
    for e in &g.edges {
        if e.rel == rel {
            a.set(e.src, e.dst, 1.0 / counts[e.src] as Scalar);
        }
    }
    a
}

/// Full forward pass: entity embeddings, stacked MRGCN / attention layers
/// with optional skip connections, raw logits out (no activation on the
/// final layer).
pub fn forward(g: &InteractionGraph, params: &ParamStore, cfg: &ModelConfig) -> ForwardPass {
    let mut tape = Tape::new();
    let mut param_nodes = BTreeMap::new();
    let mut node_of = |tape: &mut Tape, params: &ParamStore, name: &str| -> NodeId {
        let id = tape.param(params.get(name).clone());
        param_nodes.insert(name.to_string(), id);
        id
    };

    let adjacency: Vec<NodeId> = TemporalRelation::ALL
        .iter()
        .map(|&rel| tape.constant(relation_adjacency(g, rel)))
        .collect();

    // h^0: embedding lookup by entity kind.
    let embedding = node_of(&mut tape, params, "embedding");
    let kind_rows: Vec<usize> = g.nodes.iter().map(|n| n.kind.embedding_index()).collect();
    let h0 = tape.gather_rows(embedding, &kind_rows);

    let mut outputs: Vec<NodeId> = vec![h0];
    let mut final_alpha = None;
    let n_layers = cfg.layer_dims.len();
    for l in 0..n_layers {
        let h_prev = *outputs.last().unwrap();
        let w_self = node_of(&mut tape, params, &format!("layer{}.w_self", l));
        let t_self = tape.matmul(h_prev, w_self);
        let mut terms = vec![t_self];
        for rel in TemporalRelation::ALL {
            let w_rel = node_of(&mut tape, params, &format!("layer{}.w_rel.{}", l, rel.name()));
            let projected = tape.matmul(h_prev, w_rel);
            terms.push(tape.matmul(adjacency[rel.index()], projected));
        }

        let mut pre = if cfg.use_attention {
            let concat = tape.concat_cols(&terms);
            let mut head_outputs = Vec::with_capacity(cfg.heads);
            let mut alpha_values: Option<Tensor> = None;
            for h in 0..cfg.heads {
                let w_u = node_of(&mut tape, params, &format!("layer{}.head{}.w_u", l, h));
                let scores = tape.matmul(concat, w_u);
                let alpha = tape.softmax_rows(scores);
                if l == n_layers - 1 {
                    match &mut alpha_values {
                        Some(acc) => acc.add_assign(tape.value(alpha)),
                        acc => *acc = Some(tape.value(alpha).clone()),
                    }
                }
                let mut z: Option<NodeId> = None;
                for (slot, term) in terms.iter().enumerate() {
                    let col = tape.slice_cols(alpha, slot, slot + 1);
                    let scaled = tape.col_scale(*term, col);
                    z = Some(match z {
                        Some(acc) => tape.add(acc, scaled),
                        None => scaled,
                    });
                }
                head_outputs.push(z.unwrap());
            }
            if l == n_layers - 1 {
                final_alpha = alpha_values.map(|a| a.scale(1.0 / cfg.heads as Scalar));
            }
            let heads_cat = tape.concat_cols(&head_outputs);
            let w_out = node_of(&mut tape, params, &format!("layer{}.w_out", l));
            tape.matmul(heads_cat, w_out)
        } else {
            let mut acc = terms[0];
            for term in &terms[1..] {
                acc = tape.add(acc, *term);
            }
            acc
        };

        if cfg.use_skip && l >= 1 {
            // outputs[l-1] is the output of layer l-2 (or h^0 for l == 1).
            let src = outputs[l - 1];
            let proj_name = format!("skip{}.proj", l);
            let skip = if params.contains(&proj_name) {
                let p = node_of(&mut tape, params, &proj_name);
                tape.matmul(src, p)
            } else {
                src
            };
            pre = tape.add(pre, skip);
        }

        let out = if l == n_layers - 1 { pre } else { tape.relu(pre) };
        outputs.push(out);
    }

    ForwardPass {
        logits: *outputs.last().unwrap(),
        tape,
        param_nodes,
        final_alpha,
    }
}

/// Argmax class per vehicle node: (node idx, class index).
pub fn predict_vehicles(g: &InteractionGraph, logits: &Tensor) -> Vec<(usize, usize)> {
    g.nodes
        .iter()
        .filter(|n| n.kind == EntityKind::Vehicle)
        .map(|n| {
            let row = logits.row(n.idx);
            let best = (0..row.len())
                .max_by(|&a, &b| row[a].partial_cmp(&row[b]).unwrap())
                .unwrap();
            (n.idx, best)
        })
        .collect()
}

/// Class x (node + relations) attention matrix: mean head-averaged
/// final-layer attention over vehicle nodes grouped by predicted class,
/// rows renormalized to sum 1. Rows for classes absent from the
/// predictions are NaN.
#[derive(Clone, Debug)]
pub struct AttentionSummary {
    /// NUM_CLASSES x NUM_ATT_SLOTS.
    pub matrix: Tensor,
    pub support: [usize; NUM_CLASSES],
}

pub const ATT_COLUMNS: [&str; NUM_ATT_SLOTS] = [
    "node",
    "move_forward",
    "move_backward",
    "left_to_right",
    "right_to_left",
    "no_change",
];

pub fn attention_summary(model: &Model, graphs: &[InteractionGraph]) -> Result<AttentionSummary, Error> {
    if !model.cfg.use_attention {
        return Err(Error::Config(
            "attention summary requires an attention model".to_string(),
        ));
    }
    let mut sums = Tensor::zeros(NUM_CLASSES, NUM_ATT_SLOTS);
    let mut support = [0usize; NUM_CLASSES];
    for g in graphs {
        let pass = model.forward(g);
        let alpha = pass.final_alpha.as_ref().expect("attention model yields alpha");
        for (node, class) in predict_vehicles(g, pass.logit_values()) {
            support[class] += 1;
            for c in 0..NUM_ATT_SLOTS {
                sums.set(class, c, sums.get(class, c) + alpha.get(node, c));
            }
        }
    }
    let mut matrix = Tensor::zeros(NUM_CLASSES, NUM_ATT_SLOTS);
    for cls in 0..NUM_CLASSES {
        if support[cls] == 0 {
            for c in 0..NUM_ATT_SLOTS {
                matrix.set(cls, c, Scalar::NAN);
            }
            continue;
        }
        let total: Scalar = (0..NUM_ATT_SLOTS).map(|c| sums.get(cls, c)).sum();
        for c in 0..NUM_ATT_SLOTS {
            matrix.set(cls, c, sums.get(cls, c) / total);
        }
    }
    Ok(AttentionSummary { matrix, support })
}

impl AttentionSummary {
    /// CSV with header "class,node,move_forward,...": one row per class.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("class");
        for col in ATT_COLUMNS {
            out.push(',');
            out.push_str(col);
        }
        out.push('\n');
        for (cls, class) in crate::scene::BehaviorClass::ALL.iter().enumerate() {
            out.push_str(class.name());
            for c in 0..NUM_ATT_SLOTS {
                out.push(',');
                let v = self.matrix.get(cls, c);
                if v.is_nan() {
                    out.push_str("nan");
                } else {
                    out.push_str(&format!("{:.6}", v));
                }
            }
            out.push('\n');
        }
        out
    }
}
