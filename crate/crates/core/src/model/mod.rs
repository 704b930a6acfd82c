//! A stack of type-aware attention layers with one softmax classifier per
//! classification task, and the terms of the training objective.

mod loss;

use rand::{Rng, SeedableRng};

use crate::autodiff::{AutodiffError, Tape, Tensor, Var};
use crate::config::{ConfigError, ModelConfig, ScoreMode};
use crate::hetgraph::HetGraph;
use crate::params::{BoundParams, ParamId, ParamStore};
use crate::tal::{tal_forward, EdgeBlocks, TalError, TalLayer, TalLayerSpec, TalOutput};
use crate::trainer::glorot_uniform;

pub use loss::{
    classification_loss, cycle_loss, cycle_match_residual, inverse_residual, inverse_residual_mean, l2_penalty,
    multi_task_loss, total_loss, LossBreakdown, LossVars, TaskMask,
};

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Tal(#[from] TalError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("graph has no self-loops; add them before building the model")]
    MissingSelfLoops,
    #[error("graph has no labeled node type")]
    NoLabeledTypes,
    #[error("task `{0}` is not a labeled node type")]
    UnknownTask(String),
    #[error("cycle loss needs pseudo-inverses and self-transforms; build the model with the cycle flag on")]
    MissingInverse,
    #[error("no labeled nodes for task `{0}` in this split")]
    EmptyMask(String),
    #[error("model was built for a graph with {expected} nodes and {expected_edges} edges, got {found} and {found_edges}")]
    GraphMismatch { expected: usize, expected_edges: usize, found: usize, found_edges: usize },
}

/// One node-classification head.
#[derive(Clone, Debug, PartialEq)]
pub struct Task {
    pub node_type: usize,
    pub name: String,
    pub classes: usize,
    /// `final_dim × classes`
    pub weight: ParamId,
    /// `1 × classes`
    pub bias: ParamId,
}

#[derive(Clone, Debug)]
pub struct HetSannModel {
    pub config: ModelConfig,
    pub layers: Vec<TalLayer>,
    /// The main task first, then auxiliary tasks.
    pub tasks: Vec<Task>,
    pub params: ParamStore,
    blocks: EdgeBlocks,
}

/// Tape variables of one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardPass {
    pub layers: Vec<TalOutput>,
    /// Per type, the last layer's states.
    pub final_states: Vec<Var>,
    /// Per task, `count × classes`.
    pub logits: Vec<Var>,
}

impl HetSannModel {
    /// Builds and initializes the model for `g`, which must already carry
    /// self-loops.
    pub fn new<R: Rng + ?Sized>(g: &HetGraph, config: &ModelConfig, rng: &mut R) -> Result<Self, ModelError> {
        config.validate()?;
        if !g.has_self_loops() {
            return Err(ModelError::MissingSelfLoops);
        }
        let task_types = resolve_tasks(g, config)?;

        let mut params = ParamStore::new();
        let t = g.num_types();
        let head_dims = vec![config.head_dim; t];
        let mut in_dims: Vec<usize> = g.node_types().iter().map(|nt| nt.feature_dim).collect();
        let mut layers = Vec::with_capacity(config.layers);
        for index in 0..config.layers {
            let use_residual = config.residual && in_dims.iter().all(|&d| d == config.heads * config.head_dim);
            let spec = TalLayerSpec {
                index,
                in_dims: in_dims.clone(),
                head_dims: head_dims.clone(),
                heads: config.heads,
                score_mode: config.score_mode,
                use_residual,
                with_inverses: config.cycle,
                leaky_slope: config.leaky_slope,
                dropout: config.dropout,
            };
            let layer = TalLayer::new(g, &spec, &mut params, rng)?;
            in_dims = layer.out_dims();
            layers.push(layer);
        }

        let tasks = task_types
            .into_iter()
            .map(|p| {
                let name = g.node_types()[p].name.clone();
                let classes = g.labels(p).map_or(0, |l| l.classes);
                let weight = params.add(format!("clf.{name}.W"), glorot_uniform(in_dims[p], classes, rng), true);
                let bias = params.add(format!("clf.{name}.b"), Tensor::zeros(1, classes), true);
                Task { node_type: p, name, classes, weight, bias }
            })
            .collect();

        Ok(Self { config: config.clone(), layers, tasks, params, blocks: EdgeBlocks::new(g) })
    }

    pub fn blocks(&self) -> &EdgeBlocks {
        &self.blocks
    }

    pub fn main_task(&self) -> &Task {
        &self.tasks[0]
    }

    /// Chains every layer and applies each task's classifier.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        bound: &BoundParams,
        g: &HetGraph,
        rng: &mut R,
        training: bool,
    ) -> Result<ForwardPass, ModelError> {
        if g.num_nodes() != self.blocks.num_nodes || g.num_edges() != self.blocks.edge_order.len() {
            return Err(ModelError::GraphMismatch {
                expected: self.blocks.num_nodes,
                expected_edges: self.blocks.edge_order.len(),
                found: g.num_nodes(),
                found_edges: g.num_edges(),
            });
        }
        let mut h: Vec<Var> = (0..g.num_types()).map(|p| tape.constant(g.features(p).clone())).collect();
        let mut outputs = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let out = tal_forward(tape, g, &self.blocks, layer, bound, &h, rng, training)?;
            h = out.states.clone();
            outputs.push(out);
        }
        let mut logits = Vec::with_capacity(self.tasks.len());
        for task in &self.tasks {
            let z = tape.matmul(h[task.node_type], bound.var(task.weight))?;
            logits.push(tape.add_row(z, bound.var(task.bias))?);
        }
        Ok(ForwardPass { layers: outputs, final_states: h, logits })
    }

    /// Inference-mode logits per task.
    pub fn predict_logits(&self, g: &HetGraph) -> Result<Vec<Tensor>, ModelError> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape);
        // Dropout is off at inference; the generator is never drawn from.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let pass = self.forward(&mut tape, &bound, g, &mut rng, false)?;
        Ok(pass.logits.iter().map(|&v| tape.value(v).clone()).collect())
    }

    /// Number of distinct attention parameter vectors across all layers
    /// and heads.
    pub fn independent_attention_count(&self) -> usize {
        self.layers.iter().flat_map(|l| &l.heads).map(|h| h.independent_attention().len()).sum()
    }

    pub fn score_mode(&self) -> ScoreMode {
        self.config.score_mode
    }
}

/// Row-wise argmax; ties go to the lowest class index.
pub fn predict(logits: &Tensor) -> Vec<usize> {
    (0..logits.rows())
        .map(|r| {
            let row = logits.row_slice(r);
            let mut best = 0;
            for (c, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect()
}

/// Node types carrying a classifier: the main task first, then auxiliary
/// tasks when multi-task learning is on.
fn resolve_tasks(g: &HetGraph, config: &ModelConfig) -> Result<Vec<usize>, ModelError> {
    let labeled = g.labeled_types();
    let lookup = |name: &str| {
        g.node_type_by_name(name)
            .filter(|p| labeled.contains(p))
            .ok_or_else(|| ModelError::UnknownTask(name.to_string()))
    };
    let main = match &config.main_task {
        Some(name) => lookup(name)?,
        None => *labeled.first().ok_or(ModelError::NoLabeledTypes)?,
    };
    let mut tasks = vec![main];
    if config.multi_task {
        match &config.aux_tasks {
            Some(names) => {
                for name in names {
                    let p = lookup(name)?;
                    if !tasks.contains(&p) {
                        tasks.push(p);
                    }
                }
            }
            None => tasks.extend(labeled.iter().copied().filter(|&p| p != main)),
        }
    }
    Ok(tasks)
}

#[cfg(test)]
mod tests;
