//! Model and training hyperparameters.
//!
//! Both configs round-trip through flat `key=value` pairs, which is how run
//! files and checkpoints record them.

use std::fmt;
use std::str::FromStr;

use crate::hetgraph::ColdStart;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("invalid value for `{key}`: {message}")]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(key: impl Into<String>, message: impl Into<String>) -> Self {
        Self { key: key.into(), message: message.into() }
    }
}

/// How an edge's attention logit is computed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ScoreMode {
    /// `[ĥ_j ‖ ĥ_i] · a_r`
    #[default]
    Concat,
    /// `ĥ_j · (ĥ_i ± a_r)`, with a relation and its reverse sharing `a_r`
    /// up to sign.
    Voices,
}

impl FromStr for ScoreMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "concat" => Ok(Self::Concat),
            "voices" => Ok(Self::Voices),
            other => Err(format!("unknown score mode `{other}` (expected concat|voices)")),
        }
    }
}

impl fmt::Display for ScoreMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Concat => "concat",
            Self::Voices => "voices",
        })
    }
}

/// Which layers contribute to the cycle-consistency loss.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum CycleLayers {
    #[default]
    All,
    /// A single layer, 1-based.
    Only(usize),
}

impl CycleLayers {
    pub fn includes(self, layer: usize) -> bool {
        match self {
            Self::All => true,
            Self::Only(l) => l == layer + 1,
        }
    }
}

impl FromStr for CycleLayers {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "all" {
            return Ok(Self::All);
        }
        match s.parse::<usize>() {
            Ok(l) if l >= 1 => Ok(Self::Only(l)),
            _ => Err(format!("expected `all` or a 1-based layer index, got `{s}`")),
        }
    }
}

impl fmt::Display for CycleLayers {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::All => f.write_str("all"),
            Self::Only(l) => write!(f, "{l}"),
        }
    }
}

/// The extension switches: multi-task (M), voices-sharing scores (R) and
/// cycle-consistency loss (V).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Variant {
    pub multi_task: bool,
    pub voices: bool,
    pub cycle: bool,
}

impl Variant {
    pub const BASE: Variant = Variant { multi_task: false, voices: false, cycle: false };
    pub const M: Variant = Variant { multi_task: true, voices: false, cycle: false };
    pub const MR: Variant = Variant { multi_task: true, voices: true, cycle: false };
    pub const MRV: Variant = Variant { multi_task: true, voices: true, cycle: true };

    /// Short code: `base`, or the letters of the enabled extensions.
    pub fn code(self) -> String {
        let mut s = String::new();
        if self.multi_task {
            s.push('m');
        }
        if self.voices {
            s.push('r');
        }
        if self.cycle {
            s.push('v');
        }
        if s.is_empty() {
            s.push_str("base");
        }
        s
    }
}

impl FromStr for Variant {
    type Err = String;

    /// Accepts `base`, `mrv`, `m.r`, `HetSANN.M.R.V` and similar.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.to_ascii_lowercase();
        let body = lower.strip_prefix("hetsann").unwrap_or(&lower).replace('.', "");
        let mut v = Variant::BASE;
        if body == "base" || body.is_empty() {
            return Ok(v);
        }
        for c in body.chars() {
            let flag = match c {
                'm' => &mut v.multi_task,
                'r' => &mut v.voices,
                'v' => &mut v.cycle,
                _ => return Err(format!("unknown variant `{s}` (expected base or letters from m, r, v)")),
            };
            if *flag {
                return Err(format!("variant `{s}` repeats `{c}`"));
            }
            *flag = true;
        }
        Ok(v)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("HetSANN")?;
        if self.multi_task {
            f.write_str(".M")?;
        }
        if self.voices {
            f.write_str(".R")?;
        }
        if self.cycle {
            f.write_str(".V")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub layers: usize,
    pub heads: usize,
    /// Output width of every attention head, for every node type.
    pub head_dim: usize,
    pub score_mode: ScoreMode,
    /// Add the layer input to its output wherever the widths agree.
    pub residual: bool,
    pub leaky_slope: f64,
    pub dropout: f64,
    pub multi_task: bool,
    pub cycle: bool,
    pub beta1: f64,
    pub beta2: f64,
    pub cycle_layers: CycleLayers,
    pub cold_start: ColdStart,
    /// Node type of the main classification task; defaults to the first
    /// labeled type.
    pub main_task: Option<String>,
    /// Auxiliary tasks under multi-task training; defaults to every other
    /// labeled type.
    pub aux_tasks: Option<Vec<String>>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            layers: 3,
            heads: 8,
            head_dim: 8,
            score_mode: ScoreMode::Concat,
            residual: true,
            leaky_slope: 0.2,
            dropout: 0.6,
            multi_task: false,
            cycle: false,
            beta1: 1e-3,
            beta2: 1e-5,
            cycle_layers: CycleLayers::All,
            cold_start: ColdStart::OneHot,
            main_task: None,
            aux_tasks: None,
        }
    }
}

impl ModelConfig {
    pub fn variant(&self) -> Variant {
        Variant {
            multi_task: self.multi_task,
            voices: self.score_mode == ScoreMode::Voices,
            cycle: self.cycle,
        }
    }

    pub fn set_variant(&mut self, v: Variant) {
        self.multi_task = v.multi_task;
        self.score_mode = if v.voices { ScoreMode::Voices } else { ScoreMode::Concat };
        self.cycle = v.cycle;
    }

    pub fn with_variant(mut self, v: Variant) -> Self {
        self.set_variant(v);
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for (key, v) in [("layers", self.layers), ("heads", self.heads), ("head_dim", self.head_dim)] {
            if v == 0 {
                return Err(ConfigError::new(key, "must be at least 1"));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ConfigError::new("dropout", "must be in [0, 1)"));
        }
        if !(self.leaky_slope > 0.0 && self.leaky_slope < 1.0) {
            return Err(ConfigError::new("leaky_slope", "must be in (0, 1)"));
        }
        for (key, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(ConfigError::new(key, "must be a finite non-negative number"));
            }
        }
        if let CycleLayers::Only(l) = self.cycle_layers {
            if l > self.layers {
                return Err(ConfigError::new("cycle_layers", format!("layer {l} exceeds {} layers", self.layers)));
            }
        }
        Ok(())
    }

    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("variant", self.variant().code()),
            ("layers", self.layers.to_string()),
            ("heads", self.heads.to_string()),
            ("head_dim", self.head_dim.to_string()),
            ("score_mode", self.score_mode.to_string()),
            ("residual", self.residual.to_string()),
            ("leaky_slope", self.leaky_slope.to_string()),
            ("dropout", self.dropout.to_string()),
            ("multi_task", self.multi_task.to_string()),
            ("cycle", self.cycle.to_string()),
            ("beta1", self.beta1.to_string()),
            ("beta2", self.beta2.to_string()),
            ("cycle_layers", self.cycle_layers.to_string()),
            ("cold_start", self.cold_start.to_string()),
            ("main_task", self.main_task.clone().unwrap_or_default()),
            ("aux_tasks", self.aux_tasks.as_ref().map(|v| v.join(",")).unwrap_or_default()),
        ]
    }

    /// Applies one `key=value` setting. Returns `Ok(false)` for keys this
    /// config does not own.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<bool, ConfigError> {
        match key {
            "variant" => self.set_variant(parse(key, value)?),
            "layers" => self.layers = parse(key, value)?,
            "heads" => self.heads = parse(key, value)?,
            "head_dim" => self.head_dim = parse(key, value)?,
            "score_mode" => self.score_mode = parse(key, value)?,
            "residual" => self.residual = parse(key, value)?,
            "leaky_slope" => self.leaky_slope = parse(key, value)?,
            "dropout" => self.dropout = parse(key, value)?,
            "multi_task" => self.multi_task = parse(key, value)?,
            "cycle" => self.cycle = parse(key, value)?,
            "beta1" => self.beta1 = parse(key, value)?,
            "beta2" => self.beta2 = parse(key, value)?,
            "cycle_layers" => self.cycle_layers = parse(key, value)?,
            "cold_start" => self.cold_start = parse(key, value)?,
            "main_task" => self.main_task = non_empty(value).map(str::to_string),
            "aux_tasks" => {
                self.aux_tasks = non_empty(value).map(|v| v.split(',').map(|s| s.trim().to_string()).collect())
            }
            _ => return Ok(false),
        }
        Ok(true)
    }
}

/// The customary learning rate for single-task runs.
pub const SINGLE_TASK_LR: f64 = 0.001;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub reg_weight: f64,
    pub seed: u64,
    pub train_ratio: f64,
    pub val_ratio: f64,
    pub test_ratio: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.005,
            max_epochs: 1000,
            patience: 100,
            reg_weight: 5e-4,
            seed: 0,
            train_ratio: 0.8,
            val_ratio: 0.1,
            test_ratio: 0.1,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn ratios(&self) -> [f64; 3] {
        [self.train_ratio, self.val_ratio, self.test_ratio]
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(ConfigError::new("lr", "must be a finite non-negative number"));
        }
        if self.max_epochs == 0 {
            return Err(ConfigError::new("max_epochs", "must be at least 1"));
        }
        if self.patience == 0 || self.patience > self.max_epochs {
            return Err(ConfigError::new("patience", "must be in 1..=max_epochs"));
        }
        if !(self.reg_weight >= 0.0) {
            return Err(ConfigError::new("reg_weight", "must be non-negative"));
        }
        let r = self.ratios();
        if r.iter().any(|&x| !(0.0..=1.0).contains(&x)) || (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(ConfigError::new("train_ratio", "split ratios must be in [0, 1] and sum to 1"));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(ConfigError::new("adam_beta1", "Adam betas must be in [0, 1)"));
        }
        Ok(())
    }

    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("lr", self.lr.to_string()),
            ("max_epochs", self.max_epochs.to_string()),
            ("patience", self.patience.to_string()),
            ("reg_weight", self.reg_weight.to_string()),
            ("seed", self.seed.to_string()),
            ("train_ratio", self.train_ratio.to_string()),
            ("val_ratio", self.val_ratio.to_string()),
            ("test_ratio", self.test_ratio.to_string()),
            ("adam_beta1", self.adam_beta1.to_string()),
            ("adam_beta2", self.adam_beta2.to_string()),
            ("adam_eps", self.adam_eps.to_string()),
        ]
    }

    pub fn apply(&mut self, key: &str, value: &str) -> Result<bool, ConfigError> {
        match key {
            "lr" => self.lr = parse(key, value)?,
            "max_epochs" => self.max_epochs = parse(key, value)?,
            "patience" => self.patience = parse(key, value)?,
            "reg_weight" => self.reg_weight = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "train_ratio" => self.train_ratio = parse(key, value)?,
            "val_ratio" => self.val_ratio = parse(key, value)?,
            "test_ratio" => self.test_ratio = parse(key, value)?,
            "adam_beta1" => self.adam_beta1 = parse(key, value)?,
            "adam_beta2" => self.adam_beta2 = parse(key, value)?,
            "adam_eps" => self.adam_eps = parse(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}

pub fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value.trim().parse().map_err(|e: T::Err| ConfigError::new(key, format!("`{value}`: {e}")))
}

fn non_empty(s: &str) -> Option<&str> {
    let s = s.trim();
    (!s.is_empty()).then_some(s)
}

/// Parses `key = value` lines; `#` starts a comment line. Returns pairs in
/// file order with 1-based line numbers.
pub fn parse_key_values(text: &str) -> Result<Vec<(usize, String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(ConfigError::new(format!("line {}", i + 1), format!("expected key=value, got `{line}`")));
        };
        out.push((i + 1, k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}
