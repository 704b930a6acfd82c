//! Flat `key=value` run configuration.
//!
//! A run file may set any model or training key (`layers`, `lr`, ...), plus
//!
//! ```text
//! data=synth | <dir>        graph source; <dir> holds nodes/edges/relations.tsv
//! repeats=<n>               independent runs with seeds seed, seed+1, ...
//! synth_<field>=<v>         synthetic spec: seed, authors, papers,
//!                           author_classes, paper_classes, p_in, p_out,
//!                           feature_dim, mu, noise
//! synth_p_in.<relation>=<v> per-relation p_in override
//! ```
//!
//! Command-line flags are applied after the file, so they win.

use std::fmt::Write as _;
use std::path::PathBuf;

use hetsann::config::{parse, parse_key_values, ConfigError};
use hetsann::hetgraph::{load_tsv, TsvPaths};
use hetsann::synth::{generate, SynthSpec};
use hetsann::{HetGraph, ModelConfig, TrainConfig};

use crate::CliError;

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    /// TSV directory; `None` means the synthetic graph.
    pub data: Option<PathBuf>,
    pub synth: SynthSpec,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub repeats: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: None,
            synth: SynthSpec::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            repeats: 1,
        }
    }
}

impl RunConfig {
    pub fn apply(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "data" => self.data = (value.trim() != "synth").then(|| PathBuf::from(value.trim())),
            "repeats" => {
                self.repeats = parse(key, value)?;
                if self.repeats == 0 {
                    return Err(ConfigError::new(key, "must be at least 1"));
                }
            }
            _ if key.starts_with("synth_") => apply_synth(&mut self.synth, key, value)?,
            _ => {
                if !self.model.apply(key, value)? && !self.train.apply(key, value)? {
                    return Err(ConfigError::new(key, "unknown setting"));
                }
            }
        }
        Ok(())
    }

    /// Applies every pair of a run file, in order.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (_, k, v) in parse_key_values(text)? {
            self.apply(&k, &v)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.model.validate()?;
        self.train.validate()?;
        if self.data.is_none() {
            self.synth.validate().map_err(|e| ConfigError::new("synth", e.to_string()))?;
        }
        Ok(())
    }

    /// Every setting, in a form `apply_text` reads back to an equal config.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# hetsann run configuration\n");
        let data = self.data.as_ref().map_or_else(|| "synth".to_string(), |p| p.display().to_string());
        writeln!(out, "data={data}").unwrap();
        writeln!(out, "repeats={}", self.repeats).unwrap();
        for (k, v) in self.model.to_pairs().into_iter().chain(self.train.to_pairs()) {
            writeln!(out, "{k}={v}").unwrap();
        }
        if self.data.is_none() {
            let s = &self.synth;
            for (k, v) in [
                ("seed", s.seed.to_string()),
                ("authors", s.authors.to_string()),
                ("papers", s.papers.to_string()),
                ("author_classes", s.author_classes.to_string()),
                ("paper_classes", s.paper_classes.to_string()),
                ("p_in", s.p_in.to_string()),
                ("p_out", s.p_out.to_string()),
                ("feature_dim", s.feature_dim.to_string()),
                ("mu", s.mu.to_string()),
                ("noise", s.noise.to_string()),
            ] {
                writeln!(out, "synth_{k}={v}").unwrap();
            }
            for (rel, p) in &s.p_in_overrides {
                writeln!(out, "synth_p_in.{rel}={p}").unwrap();
            }
        }
        out
    }

    /// The configured graph, with self-loops.
    pub fn load_graph(&self) -> Result<HetGraph, CliError> {
        let g = match &self.data {
            None => generate(&self.synth).map_err(|e| CliError::Data(e.to_string()))?,
            Some(dir) => load_tsv(&TsvPaths::in_dir(dir), self.model.cold_start).map_err(|e| CliError::Data(e.to_string()))?,
        };
        if g.has_self_loops() {
            Ok(g)
        } else {
            g.add_self_loops().map_err(|e| CliError::Data(e.to_string()))
        }
    }

    /// Rejects multi-task training on graphs with a single labeled type.
    pub fn check_tasks(&self, g: &HetGraph) -> Result<(), ConfigError> {
        let labeled = g.labeled_types().len();
        if labeled == 0 {
            return Err(ConfigError::new("data", "graph has no labeled node type"));
        }
        if self.model.multi_task && labeled < 2 {
            return Err(ConfigError::new("variant", "multi-task requires ≥2 labeled types"));
        }
        Ok(())
    }
}

fn apply_synth(s: &mut SynthSpec, key: &str, value: &str) -> Result<(), ConfigError> {
    let field = &key["synth_".len()..];
    if let Some(rel) = field.strip_prefix("p_in.") {
        s.p_in_overrides.insert(rel.to_string(), parse(key, value)?);
        return Ok(());
    }
    match field {
        "seed" => s.seed = parse(key, value)?,
        "authors" => s.authors = parse(key, value)?,
        "papers" => s.papers = parse(key, value)?,
        "author_classes" => s.author_classes = parse(key, value)?,
        "paper_classes" => s.paper_classes = parse(key, value)?,
        "p_in" => s.p_in = parse(key, value)?,
        "p_out" => s.p_out = parse(key, value)?,
        "feature_dim" => s.feature_dim = parse(key, value)?,
        "mu" => s.mu = parse(key, value)?,
        "noise" => s.noise = parse(key, value)?,
        _ => return Err(ConfigError::new(key, "unknown synthetic-graph setting")),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use hetsann::Variant;

    #[test]
    fn text_round_trip() {
        let mut c = RunConfig::default();
        c.apply_text("variant=mrv\nrepeats = 4\n# note\nsynth_p_in.cites=0.5\nlr=0.001\n").unwrap();
        assert_eq!(c.model.variant(), Variant::MRV);
        assert_eq!(c.repeats, 4);
        let mut back = RunConfig::default();
        back.apply_text(&c.to_text()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn errors_name_the_key() {
        let mut c = RunConfig::default();
        let e = c.apply("heads", "many").unwrap_err();
        assert_eq!(e.key, "heads");
        assert_eq!(c.apply("bogus", "1").unwrap_err().key, "bogus");
        assert_eq!(c.apply("synth_bogus", "1").unwrap_err().key, "synth_bogus");
        assert_eq!(c.apply("repeats", "0").unwrap_err().key, "repeats");
    }

    #[test]
    fn data_source() {
        let mut c = RunConfig::default();
        c.apply("data", "/tmp/graph").unwrap();
        assert_eq!(c.data, Some(PathBuf::from("/tmp/graph")));
        c.apply("data", "synth").unwrap();
        assert_eq!(c.data, None);
    }
}
