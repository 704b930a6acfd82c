//! Synthetic two-type graphs with planted classes.
//!
//! Authors write papers, papers cite papers and authors co-author with
//! authors. Every relation is a stochastic block model over the classes
//! of its endpoints: an edge appears with probability `p_in` between
//! same-class endpoints and `p_out` otherwise. Features are Gaussian
//! around a per-class mean `μ · e_class`.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};

use crate::hetgraph::{ColdStart, EdgeSpec, GraphError, GraphSpec, HetGraph, NodeSpec, RelationSpec};

pub const AUTHOR: &str = "author";
pub const PAPER: &str = "paper";

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("invalid synthetic spec: {0}")]
    Invalid(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub seed: u64,
    pub authors: usize,
    pub papers: usize,
    pub author_classes: usize,
    pub paper_classes: usize,
    pub p_in: f64,
    pub p_out: f64,
    /// Per-relation `p_in`, keyed by `writes`, `cites` or `coauthor`.
    pub p_in_overrides: BTreeMap<String, f64>,
    pub feature_dim: usize,
    /// Distance of each class mean from the origin.
    pub mu: f64,
    pub noise: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            authors: 40,
            papers: 60,
            author_classes: 3,
            paper_classes: 3,
            p_in: 0.3,
            p_out: 0.03,
            p_in_overrides: BTreeMap::new(),
            feature_dim: 8,
            mu: 1.0,
            noise: 1.0,
        }
    }
}

pub const RELATIONS: [&str; 3] = ["writes", "cites", "coauthor"];

impl SynthSpec {
    pub fn p_in_for(&self, relation: &str) -> f64 {
        self.p_in_overrides.get(relation).copied().unwrap_or(self.p_in)
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::Invalid(m));
        if self.author_classes == 0 || self.paper_classes == 0 {
            return bad("class counts must be positive".into());
        }
        if self.authors < self.author_classes || self.papers < self.paper_classes {
            return bad("every class needs at least one node".into());
        }
        if self.feature_dim == 0 {
            return bad("feature_dim must be positive".into());
        }
        if let Some(k) = self.p_in_overrides.keys().find(|k| !RELATIONS.contains(&k.as_str())) {
            return bad(format!("unknown relation `{k}` in p_in overrides"));
        }
        let probs = std::iter::once(("p_out", self.p_out))
            .chain(RELATIONS.iter().map(|r| (*r, self.p_in_for(r))));
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("probability for {name} is {p}, outside [0, 1]"));
            }
            if name != "p_out" && p < self.p_out {
                return bad(format!("p_in for {name} ({p}) is below p_out ({})", self.p_out));
            }
        }
        if !(self.noise >= 0.0 && self.mu.is_finite()) {
            return bad("noise must be non-negative and mu finite".into());
        }
        Ok(())
    }

    /// The generated graph in name form, before building.
    pub fn graph_spec(&self) -> Result<GraphSpec, SynthError> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let noise = Normal::new(0.0, self.noise).map_err(|e| SynthError::Invalid(e.to_string()))?;

        let author_class: Vec<usize> = (0..self.authors).map(|i| i % self.author_classes).collect();
        let paper_class: Vec<usize> = (0..self.papers).map(|i| i % self.paper_classes).collect();
        let mut nodes = Vec::with_capacity(self.authors + self.papers);
        for (ty, classes) in [(AUTHOR, &author_class), (PAPER, &paper_class)] {
            for (i, &c) in classes.iter().enumerate() {
                let features = (0..self.feature_dim)
                    .map(|d| if d == c % self.feature_dim { self.mu } else { 0.0 } + noise.sample(&mut rng))
                    .collect();
                nodes.push(NodeSpec { name: format!("{ty}{i}"), node_type: ty.into(), label: Some(c), features: Some(features) });
            }
        }

        let mut edges = Vec::new();
        let mut sample = |rng: &mut ChaCha8Rng, rel: &str, src: String, dst: String, same: bool| {
            let p = if same { self.p_in_for(rel) } else { self.p_out };
            if rng.random::<f64>() < p {
                edges.push(EdgeSpec { src, dst, relation: rel.into() });
            }
        };
        for a in 0..self.authors {
            for b in 0..self.papers {
                let same = author_class[a] == paper_class[b];
                sample(&mut rng, "writes", format!("{AUTHOR}{a}"), format!("{PAPER}{b}"), same);
            }
        }
        for b1 in 0..self.papers {
            for b2 in (0..self.papers).filter(|&b2| b2 != b1) {
                let same = paper_class[b1] == paper_class[b2];
                sample(&mut rng, "cites", format!("{PAPER}{b1}"), format!("{PAPER}{b2}"), same);
            }
        }
        for a1 in 0..self.authors {
            for a2 in a1 + 1..self.authors {
                let same = author_class[a1] == author_class[a2];
                sample(&mut rng, "coauthor", format!("{AUTHOR}{a1}"), format!("{AUTHOR}{a2}"), same);
            }
        }

        let rel = |name: &str, src: &str, dst: &str, reverse: &str| RelationSpec {
            name: name.into(),
            src_type: src.into(),
            dst_type: dst.into(),
            reverse: reverse.into(),
        };
        Ok(GraphSpec {
            node_types: vec![AUTHOR.into(), PAPER.into()],
            nodes,
            relations: vec![
                rel("writes", AUTHOR, PAPER, "written"),
                rel("cites", PAPER, PAPER, "cited"),
                rel("coauthor", AUTHOR, AUTHOR, "coauthor"),
            ],
            edges,
        })
    }
}

/// The labeled graph for `spec`, without self-loops. Deterministic in the
/// spec's seed.
pub fn generate(spec: &SynthSpec) -> Result<HetGraph, SynthError> {
    Ok(spec.graph_spec()?.build(ColdStart::OneHot)?)
}
