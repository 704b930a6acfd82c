//! Text checkpoints.
//!
//! ```text
//! hetsann-checkpoint v1
//! [config]
//! key=value              one line per model and training setting
//! [params]
//! tensor <name> <rows> <cols>
//! v v v ...              one line per row, space separated
//! ```
//!
//! Values are written in Rust's shortest round-trip float format, so a
//! reload reproduces every parameter bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::autodiff::Tensor;
use crate::config::{ConfigError, ModelConfig, TrainConfig};
use crate::model::HetSannModel;

pub const MAGIC: &str = "hetsann-checkpoint v1";

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("checkpoint line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("checkpoint lacks parameter `{0}`")]
    Missing(String),
    #[error("parameter `{name}` is {found:?} in the checkpoint but {expected:?} in the model")]
    Shape { name: String, expected: [usize; 2], found: [usize; 2] },
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub config: Vec<(String, String)>,
    pub params: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn from_model(model: &HetSannModel, train: Option<&TrainConfig>) -> Self {
        let mut config: Vec<(String, String)> =
            model.config.to_pairs().into_iter().map(|(k, v)| (k.to_string(), v)).collect();
        if let Some(t) = train {
            config.extend(t.to_pairs().into_iter().map(|(k, v)| (k.to_string(), v)));
        }
        let params = model.params.iter().map(|(_, p)| (p.name.clone(), p.value.clone())).collect();
        Self { config, params }
    }

    /// The recorded model and training settings, applied over defaults.
    pub fn configs(&self) -> Result<(ModelConfig, TrainConfig), CheckpointError> {
        let mut m = ModelConfig::default();
        let mut t = TrainConfig::default();
        for (k, v) in &self.config {
            if !m.apply(k, v)? && !t.apply(k, v)? {
                return Err(ConfigError::new(k.clone(), "unknown setting").into());
            }
        }
        Ok((m, t))
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{MAGIC}\n[config]\n");
        for (k, v) in &self.config {
            writeln!(out, "{k}={v}").unwrap();
        }
        out.push_str("[params]\n");
        for (name, t) in &self.params {
            writeln!(out, "tensor {name} {} {}", t.rows(), t.cols()).unwrap();
            for r in 0..t.rows() {
                let row: Vec<String> = t.row_slice(r).iter().map(f64::to_string).collect();
                writeln!(out, "{}", row.join(" ")).unwrap();
            }
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, CheckpointError> {
        let err = |line: usize, message: String| CheckpointError::Parse { line, message };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        match lines.next() {
            Some((_, MAGIC)) => {}
            other => {
                let found = other.map_or("", |(_, l)| l);
                return Err(err(1, format!("expected `{MAGIC}`, found `{found}`")));
            }
        }
        if !matches!(lines.next(), Some((_, "[config]"))) {
            return Err(err(2, "expected `[config]`".into()));
        }
        let mut ck = Checkpoint::default();
        loop {
            let Some((n, line)) = lines.next() else {
                return Err(err(0, "missing `[params]` section".into()));
            };
            if line == "[params]" {
                break;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| err(n, format!("expected key=value, got `{line}`")))?;
            ck.config.push((k.to_string(), v.to_string()));
        }
        while let Some((n, header)) = lines.next() {
            if header.is_empty() {
                continue;
            }
            let fields: Vec<&str> = header.split(' ').collect();
            let [tag, name, rows, cols] = fields[..] else {
                return Err(err(n, format!("expected `tensor <name> <rows> <cols>`, got `{header}`")));
            };
            if tag != "tensor" {
                return Err(err(n, format!("expected `tensor`, got `{tag}`")));
            }
            let parse_dim = |s: &str| s.parse::<usize>().map_err(|e| err(n, format!("bad dimension `{s}`: {e}")));
            let (rows, cols) = (parse_dim(rows)?, parse_dim(cols)?);
            let mut data = Vec::with_capacity(rows * cols);
            for _ in 0..rows {
                let (rn, row) = lines.next().ok_or_else(|| err(n, format!("tensor `{name}` is truncated")))?;
                let values: Vec<f64> = if row.is_empty() {
                    Vec::new()
                } else {
                    row.split(' ')
                        .map(|v| v.parse::<f64>().map_err(|e| err(rn, format!("bad value `{v}`: {e}"))))
                        .collect::<Result<_, _>>()?
                };
                if values.len() != cols {
                    return Err(err(rn, format!("expected {cols} values, found {}", values.len())));
                }
                data.extend(values);
            }
            let t = Tensor::new(rows, cols, data).map_err(|e| err(n, e.to_string()))?;
            ck.params.push((name.to_string(), t));
        }
        Ok(ck)
    }

    /// Copies the stored tensors into `model`, matching by name.
    pub fn restore_into(&self, model: &mut HetSannModel) -> Result<(), CheckpointError> {
        let ids: Vec<_> = model.params.ids().collect();
        for id in ids {
            let name = model.params.param(id).name.clone();
            let (_, t) = self.params.iter().find(|(n, _)| *n == name).ok_or(CheckpointError::Missing(name.clone()))?;
            let expected = model.params.get(id).shape();
            if t.shape() != expected {
                return Err(CheckpointError::Shape { name, expected, found: t.shape() });
            }
            *model.params.get_mut(id) = t.clone();
        }
        Ok(())
    }
}

pub fn save_checkpoint(
    path: &Path,
    model: &HetSannModel,
    train: Option<&TrainConfig>,
) -> Result<(), CheckpointError> {
    fs::write(path, Checkpoint::from_model(model, train).to_text())
        .map_err(|source| CheckpointError::Io { path: path.to_path_buf(), source })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CheckpointError> {
    let text = fs::read_to_string(path).map_err(|source| CheckpointError::Io { path: path.to_path_buf(), source })?;
    Checkpoint::parse(&text)
}
