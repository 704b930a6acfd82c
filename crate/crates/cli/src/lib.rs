//! The `hetsann` command line: training, checkpoint evaluation, gradient
//! verification, hyperparameter sweeps and synthetic data generation.
//!
//! Exit codes are 0 on success, 1 for configuration errors, 2 for data
//! errors and 3 when a verification fails.

mod run_config;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use hetsann::checkpoint::{load_checkpoint, save_checkpoint, CheckpointError};
use hetsann::config::{parse, ConfigError};
use hetsann::eval::{aggregate_runs, EvalReport, SplitKind};
use hetsann::hetgraph::{save_tsv, TsvPaths};
use hetsann::model::ModelError;
use hetsann::synth::generate;
use hetsann::trainer::{self, split_dataset, TrainError, TrainOutcome};
use hetsann::verify::{gradcheck, gradcheck_config, gradcheck_fixture, gradcheck_model};
use hetsann::{HetGraph, Variant};

pub use run_config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Verification(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) => 1,
            Self::Data(_) => 2,
            Self::Verification(_) => 3,
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(c) | TrainError::Model(ModelError::Config(c)) => Self::Config(c),
            TrainError::Model(ModelError::UnknownTask(t)) => Self::Config(ConfigError::new("main_task", format!("`{t}` is not a labeled node type"))),
            // Divergence is a property of the chosen hyperparameters.
            e @ TrainError::NonFinite { .. } => Self::Config(ConfigError::new("lr", e.to_string())),
            e => Self::Data(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        TrainError::Model(e).into()
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        match e {
            CheckpointError::Config(c) => Self::Config(c),
            e => Self::Data(e.to_string()),
        }
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, body: &str) -> Result<(), CliError> {
    fs::write(path, body).map_err(|e| io_error(path, e))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| io_error(path, e))
}

#[derive(Debug, Parser)]
#[command(name = "hetsann", version, about = "Heterogeneous graph attention networks for node classification")]
pub struct Cli {
    /// More log output; repeat for debug level.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one or more seeds and write checkpoints, histories and scores.
    Train(TrainArgs),
    /// Score a saved checkpoint on its own data split.
    Eval(EvalArgs),
    /// Compare analytic gradients with finite differences on a small fixture.
    Gradcheck(GradcheckArgs),
    /// Train over a list of values of one hyperparameter.
    Sweep(SweepArgs),
    /// Write a synthetic graph as TSV files.
    Synth(SynthArgs),
}

/// Settings shared by every command that trains.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// Run configuration file of `key=value` lines.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Use the synthetic graph.
    #[arg(long, conflicts_with = "data")]
    pub synth: bool,
    /// Directory holding nodes.tsv, edges.tsv and relations.tsv.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Model variant such as `base`, `m`, `mr`, `mrv` or `HetSANN.M.R.V`.
    #[arg(long)]
    pub variant: Option<Variant>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override any configuration key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

impl RunArgs {
    /// The file settings overlaid by flags, plus the file's raw text.
    pub fn resolve(&self) -> Result<(RunConfig, Option<String>), CliError> {
        let mut cfg = RunConfig::default();
        let mut raw = None;
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path).map_err(|e| CliError::Config(ConfigError::new("config", format!("{}: {e}", path.display()))))?;
            cfg.apply_text(&text)?;
            raw = Some(text);
        }
        if self.synth {
            cfg.data = None;
        }
        if let Some(d) = &self.data {
            cfg.data = Some(d.clone());
        }
        if let Some(v) = self.variant {
            cfg.model.set_variant(v);
        }
        if let Some(s) = self.seed {
            cfg.train.seed = s;
        }
        for o in &self.overrides {
            let (k, v) = split_override(o)?;
            cfg.apply(k, v)?;
        }
        Ok((cfg, raw))
    }
}

fn split_override(s: &str) -> Result<(&str, &str), ConfigError> {
    s.split_once('=').map(|(k, v)| (k.trim(), v.trim())).ok_or_else(|| ConfigError::new(s, "expected KEY=VALUE"))
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Independent runs with consecutive seeds.
    #[arg(long)]
    pub repeats: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = "hetsann-run")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Graph source; model and training settings come from the checkpoint.
    #[command(flatten)]
    pub run: RunArgs,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value = "mrv")]
    pub variant: Variant,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 5e-4)]
    pub reg_weight: f64,
    /// Perturb one analytic gradient entry; the check must then fail.
    #[arg(long)]
    pub corrupt: bool,
    /// Override a model key such as `beta1=0`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Layers,
    Beta1,
    Beta2,
}

impl FromStr for SweepParam {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "L" | "layers" => Ok(Self::Layers),
            "beta1" => Ok(Self::Beta1),
            "beta2" => Ok(Self::Beta2),
            other => Err(format!("unknown sweep parameter `{other}` (expected L, beta1 or beta2)")),
        }
    }
}

impl SweepParam {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Layers => "L",
            Self::Beta1 => "beta1",
            Self::Beta2 => "beta2",
        }
    }

    fn set(self, cfg: &mut RunConfig, value: &str) -> Result<(), ConfigError> {
        match self {
            Self::Layers => cfg.model.layers = parse("L", value)?,
            Self::Beta1 => cfg.model.beta1 = parse("beta1", value)?,
            Self::Beta2 => cfg.model.beta2 = parse("beta2", value)?,
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub param: SweepParam,
    /// Comma-separated values.
    #[arg(long)]
    pub values: String,
    #[command(flatten)]
    pub run: RunArgs,
    /// Seeds per value.
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Override a `synth_*` key such as `synth_authors=80`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train(a) => cmd_train(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Gradcheck(a) => cmd_gradcheck(&a),
        Command::Sweep(a) => cmd_sweep(&a),
        Command::Synth(a) => cmd_synth(&a),
    }
}

fn prepare(cfg: &RunConfig) -> Result<HetGraph, CliError> {
    cfg.validate()?;
    let g = cfg.load_graph()?;
    cfg.check_tasks(&g)?;
    Ok(g)
}

/// Per-seed main-task test rows followed by a `mean` row.
pub fn eval_summary(outcomes: &[TrainOutcome]) -> String {
    let mut out = format!("{}\n", EvalReport::HEADER);
    let (mut micro, mut macro_) = (Vec::new(), Vec::new());
    let mut task = String::new();
    for o in outcomes {
        task = o.model.main_task().name.clone();
        for r in o.report.select(&task, SplitKind::Test) {
            writeln!(out, "{},test,{},{},{}", r.task, r.micro_f1, r.macro_f1, r.seed).unwrap();
            micro.push(r.micro_f1);
            macro_.push(r.macro_f1);
        }
    }
    if let (Some(mi), Some(ma)) = (aggregate_runs(&micro), aggregate_runs(&macro_)) {
        writeln!(out, "{task},test,{},{},mean", mi.mean, ma.mean).unwrap();
    }
    out
}

fn cmd_train(a: &TrainArgs) -> Result<(), CliError> {
    let (mut cfg, raw) = a.run.resolve()?;
    if let Some(r) = a.repeats {
        cfg.apply("repeats", &r.to_string())?;
    }
    let g = prepare(&cfg)?;
    info!("training {} on {} nodes, {} edges, {} run(s)", cfg.model.variant(), g.num_nodes(), g.num_edges(), cfg.repeats);
    let outcomes = trainer::train_repeats(&g, &cfg.model, &cfg.train, cfg.repeats)?;

    create_dir(&a.out)?;
    write_file(&a.out.join("config.txt"), &cfg.to_text())?;
    if let Some(text) = raw {
        write_file(&a.out.join("config.input.txt"), &text)?;
    }
    let mut all = EvalReport::default();
    for o in &outcomes {
        let train = hetsann::TrainConfig { seed: o.seed, ..cfg.train.clone() };
        save_checkpoint(&a.out.join(format!("seed{}.ckpt", o.seed)), &o.model, Some(&train))?;
        write_file(&a.out.join(format!("history_seed{}.csv", o.seed)), &o.history.to_csv())?;
        all.extend(o.report.clone());
        println!(
            "seed {}: best epoch {}, test micro-F1 {:.4}",
            o.seed,
            o.history.best_epoch,
            o.main_test_micro_f1()
        );
    }
    write_file(&a.out.join("eval.csv"), &eval_summary(&outcomes))?;
    write_file(&a.out.join("eval_all.csv"), &all.to_csv())?;
    let scores: Vec<f64> = outcomes.iter().map(TrainOutcome::main_test_micro_f1).collect();
    if let Some(s) = aggregate_runs(&scores) {
        println!("{} test micro-F1 over {} run(s): {s}", outcomes[0].model.main_task().name, s.n);
    }
    Ok(())
}

fn cmd_eval(a: &EvalArgs) -> Result<(), CliError> {
    let (mut cfg, _) = a.run.resolve()?;
    let ck = load_checkpoint(&a.checkpoint)?;
    (cfg.model, cfg.train) = ck.configs()?;
    let g = prepare(&cfg)?;
    let mut model = trainer::init_model(&g, &cfg.model, cfg.train.seed)?;
    ck.restore_into(&mut model)?;
    let types: Vec<usize> = model.tasks.iter().map(|t| t.node_type).collect();
    let splits = split_dataset(&g, &types, cfg.train.ratios(), cfg.train.seed);
    let report = trainer::evaluate(&g, &model, &splits, cfg.train.seed)?;
    emit(a.out.as_deref(), &report.to_csv())
}

fn emit(path: Option<&Path>, csv: &str) -> Result<(), CliError> {
    match path {
        Some(p) => write_file(p, csv),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn cmd_gradcheck(a: &GradcheckArgs) -> Result<(), CliError> {
    let mut config = gradcheck_config(a.variant);
    for o in &a.overrides {
        let (k, v) = split_override(o)?;
        if !config.apply(k, v)? {
            return Err(ConfigError::new(k, "not a model setting").into());
        }
    }
    config.validate()?;
    let g = gradcheck_fixture(a.seed);
    let model = gradcheck_model(&g, &config, a.seed)?;
    let report = gradcheck(&g, &model, a.reg_weight, a.corrupt)?;
    for (name, err) in &report.per_param {
        println!("{name}\t{err:.3e}");
    }
    let verdict = if report.passed() { "PASS" } else { "FAIL" };
    println!("{verdict}: max relative error {:.3e} (tolerance {:.0e})", report.max_relative_error, report.tolerance);
    if report.passed() {
        Ok(())
    } else {
        let worst = report.worst().map_or(String::new(), |w| format!(" at `{}`", w.0));
        Err(CliError::Verification(format!("gradient check failed{worst}")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub param: SweepParam,
    pub value: String,
    pub micro_f1_mean: f64,
    pub micro_f1_std: f64,
}

pub const SWEEP_HEADER: &str = "param,value,micro_f1_mean,micro_f1_std";

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = format!("{SWEEP_HEADER}\n");
    for r in rows {
        writeln!(out, "{},{},{},{}", r.param.as_str(), r.value, r.micro_f1_mean, r.micro_f1_std).unwrap();
    }
    out
}

/// Main-task test micro-F1 for each value, over `repeats` seeds starting
/// at the configured seed.
pub fn sweep(cfg: &RunConfig, param: SweepParam, values: &[String], repeats: usize) -> Result<Vec<SweepRow>, CliError> {
    if values.is_empty() {
        return Err(ConfigError::new("values", "empty value list").into());
    }
    if param != SweepParam::Layers && !cfg.model.cycle {
        warn!("sweeping {} without the cycle loss has no effect", param.as_str());
    }
    let g = prepare(cfg)?;
    let mut rows = Vec::with_capacity(values.len());
    for v in values {
        let mut c = cfg.clone();
        param.set(&mut c, v)?;
        c.validate()?;
        let outcomes = trainer::train_repeats(&g, &c.model, &c.train, repeats)?;
        let scores: Vec<f64> = outcomes.iter().map(TrainOutcome::main_test_micro_f1).collect();
        let s = aggregate_runs(&scores).expect("at least one repeat");
        info!("{}={v}: {s}", param.as_str());
        rows.push(SweepRow { param, value: v.clone(), micro_f1_mean: s.mean, micro_f1_std: s.std });
    }
    Ok(rows)
}

fn cmd_sweep(a: &SweepArgs) -> Result<(), CliError> {
    let (cfg, _) = a.run.resolve()?;
    if a.repeats == 0 {
        return Err(ConfigError::new("repeats", "must be at least 1").into());
    }
    let values: Vec<String> = a.values.split(',').map(str::trim).filter(|v| !v.is_empty()).map(String::from).collect();
    let rows = sweep(&cfg, a.param, &values, a.repeats)?;
    emit(a.out.as_deref(), &sweep_csv(&rows))
}

fn cmd_synth(a: &SynthArgs) -> Result<(), CliError> {
    let mut cfg = RunConfig::default();
    cfg.synth.seed = a.seed;
    for o in &a.overrides {
        let (k, v) = split_override(o)?;
        if !k.starts_with("synth_") {
            return Err(ConfigError::new(k, "only synth_* keys apply here").into());
        }
        cfg.apply(k, v)?;
    }
    let g = generate(&cfg.synth).map_err(|e| ConfigError::new("synth", e.to_string()))?;
    create_dir(&a.out)?;
    save_tsv(&g, &TsvPaths::in_dir(&a.out)).map_err(|e| CliError::Data(e.to_string()))?;
    println!("wrote {} nodes and {} edges to {}", g.num_nodes(), g.num_edges(), a.out.display());
    Ok(())
}
