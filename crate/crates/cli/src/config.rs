//! Experiment configuration files (TOML).
//!
//! A user file is overlaid on the defaults of its profile, checked for
//! unknown keys, and then validated as a whole so every problem is reported
//! at once. The resolved config serialises back to a file that validates to
//! the same value.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use descentlab::datagen::Scenario;
use descentlab::neuralnet::Activation;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    #[default]
    Desk,
    Paper,
}

impl std::str::FromStr for Profile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "desk" => Ok(Profile::Desk),
            "paper" => Ok(Profile::Paper),
            other => Err(format!("unknown profile '{other}' (expected desk or paper)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisKind {
    HiddenDim,
    BottleneckDim,
    Grid,
    Epochs,
    NTrain,
}

impl AxisKind {
    pub fn family(self) -> SweepFamily {
        match self {
            AxisKind::HiddenDim | AxisKind::BottleneckDim | AxisKind::Grid => SweepFamily::ModelWise,
            AxisKind::Epochs => SweepFamily::EpochWise,
            AxisKind::NTrain => SweepFamily::SampleWise,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepFamily {
    ModelWise,
    EpochWise,
    SampleWise,
}

impl SweepFamily {
    fn default_axis(self) -> AxisKind {
        match self {
            SweepFamily::ModelWise => AxisKind::HiddenDim,
            SweepFamily::EpochWise => AxisKind::Epochs,
            SweepFamily::SampleWise => AxisKind::NTrain,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SweepFamily::ModelWise => "model-wise",
            SweepFamily::EpochWise => "epoch-wise",
            SweepFamily::SampleWise => "sample-wise",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RealNoise {
    #[default]
    None,
    Sample,
    Feature,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RealDataConfig {
    pub path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_columns: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_column: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_column: Option<String>,
    pub delimiter: String,
    pub strict: bool,
    /// Keep this many highest-variance features; 0 keeps all.
    pub top_features: usize,
    pub n_train: usize,
    /// Train on this batch and test on all others instead of a random split.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_batch: Option<String>,
    pub noise: RealNoise,
    pub probability: f64,
    pub snr_db: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub latent_dim: usize,
    pub ambient_dim: usize,
    pub n_train: usize,
    pub n_test: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden_dim: usize,
    pub bottleneck_dim: usize,
    pub activation: Activation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainBlock {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub eval_period: usize,
    pub shuffle: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepBlock {
    pub axis: AxisKind,
    /// Axis values; empty for the epochs axis.
    pub values: Vec<usize>,
    /// Second axis of a grid sweep.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bottleneck_values: Vec<usize>,
    pub seeds: Vec<u64>,
    pub parallelism: usize,
    pub record_embeddings: bool,
}

/// Fully defaulted experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub profile: Profile,
    pub out: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<Scenario>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub real_data: Option<RealDataConfig>,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub train: TrainBlock,
    pub sweep: SweepBlock,
}

/// Every problem found in a config file.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub problems: Vec<String>,
}

impl ConfigError {
    fn one(msg: impl Into<String>) -> Self {
        ConfigError {
            problems: vec![msg.into()],
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "invalid configuration:")?;
        for p in &self.problems {
            writeln!(f, "  - {p}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub profile: Option<Profile>,
    pub out: Option<PathBuf>,
    pub parallelism: Option<usize>,
    pub seeds: Option<Vec<u64>>,
    /// Subcommand family; picks the default axis and must agree with an
    /// explicit one.
    pub family: Option<SweepFamily>,
}

const TOP_KEYS: &[&str] = &["profile", "out", "scenario", "real_data", "data", "model", "train", "sweep"];
const SCENARIO_KEYS: &[&str] = &["kind", "probability", "snr_db", "shift", "noise_probability", "sar_db"];
const REAL_KEYS: &[&str] = &[
    "path",
    "feature_columns",
    "batch_column",
    "label_column",
    "delimiter",
    "strict",
    "top_features",
    "n_train",
    "source_batch",
    "noise",
    "probability",
    "snr_db",
];
const DATA_KEYS: &[&str] = &["latent_dim", "ambient_dim", "n_train", "n_test"];
const MODEL_KEYS: &[&str] = &["hidden_dim", "bottleneck_dim", "activation"];
const TRAIN_KEYS: &[&str] = &["learning_rate", "epochs", "batch_size", "eval_period", "shuffle"];
const SWEEP_KEYS: &[&str] = &[
    "axis",
    "values",
    "range",
    "bottleneck_values",
    "seeds",
    "parallelism",
    "record_embeddings",
];

fn block_keys(block: &str) -> Option<&'static [&'static str]> {
    Some(match block {
        "scenario" => SCENARIO_KEYS,
        "real_data" => REAL_KEYS,
        "data" => DATA_KEYS,
        "model" => MODEL_KEYS,
        "train" => TRAIN_KEYS,
        "sweep" => SWEEP_KEYS,
        _ => return None,
    })
}

fn scenario_kind_keys(kind: &str) -> Option<&'static [&'static str]> {
    Some(match kind {
        "sample-noise" | "feature-noise" => &["kind", "probability", "snr_db"],
        "domain-shift" => &["kind", "shift", "noise_probability", "snr_db"],
        "anomaly" => &["kind", "probability", "sar_db"],
        _ => return None,
    })
}

fn nearest<'a>(key: &str, valid: &[&'a str]) -> Option<&'a str> {
    valid
        .iter()
        .map(|v| (strsim::levenshtein(key, v), *v))
        .min()
        .filter(|(d, v)| *d <= v.len().max(key.len()) / 2 + 1)
        .map(|(_, v)| v)
}

fn unknown(path: &str, key: &str, valid: &[&str]) -> String {
    match nearest(key, valid) {
        Some(n) => format!("unknown key '{path}{key}' (did you mean '{path}{n}'?)"),
        None => format!("unknown key '{path}{key}' (valid keys: {})", valid.join(", ")),
    }
}

fn check_keys(table: &Table, problems: &mut Vec<String>) {
    for (k, v) in table {
        if !TOP_KEYS.contains(&k.as_str()) {
            problems.push(unknown("", k, TOP_KEYS));
            continue;
        }
        let Some(valid) = block_keys(k) else { continue };
        let Some(block) = v.as_table() else {
            problems.push(format!("'{k}' must be a table"));
            continue;
        };
        for key in block.keys() {
            if !valid.contains(&key.as_str()) {
                problems.push(unknown(&format!("{k}."), key, valid));
            }
        }
        if k == "scenario" {
            if let Some(kind) = block.get("kind").and_then(Value::as_str) {
                match scenario_kind_keys(kind) {
                    Some(used) => {
                        for key in block.keys().filter(|k| valid.contains(&k.as_str())) {
                            if !used.contains(&key.as_str()) {
                                problems.push(format!("key 'scenario.{key}' is not used by kind '{kind}'"));
                            }
                        }
                    }
                    None => problems.push(match nearest(kind, &["sample-noise", "feature-noise", "domain-shift", "anomaly"]) {
                        Some(n) => format!("unknown scenario kind '{kind}' (did you mean '{n}'?)"),
                        None => format!("unknown scenario kind '{kind}'"),
                    }),
                }
            }
        }
    }
}

fn is_real(table: &Table) -> bool {
    table.contains_key("real_data")
}

/// Defaults for a profile. Full-size synthetic runs use lr 0.001, batch 10,
/// 200 epochs, d 20, n 50, 5000 training rows and hidden 4-500; full-size
/// real-data runs use batch 128, 1000 epochs and 1000 features. The desk
/// profile shrinks sizes and epochs only.
pub fn profile_defaults(profile: Profile, real: bool, family: SweepFamily) -> ExperimentConfig {
    let desk = profile == Profile::Desk;
    let axis = family.default_axis();
    let data = if desk {
        DataConfig {
            latent_dim: 20,
            ambient_dim: 50,
            n_train: 2000,
            n_test: 2000,
        }
    } else {
        DataConfig {
            latent_dim: 20,
            ambient_dim: 50,
            n_train: 5000,
            n_test: 10000,
        }
    };
    let (model, train, hidden_values) = if real {
        (
            ModelConfig {
                hidden_dim: 1000,
                bottleneck_dim: 100,
                activation: Activation::Relu,
            },
            TrainBlock {
                learning_rate: 0.001,
                epochs: if desk { 100 } else { 1000 },
                batch_size: 128,
                eval_period: 1,
                shuffle: true,
            },
            if desk {
                (10..=1000).step_by(110).collect()
            } else {
                (10..=3000).step_by(10).collect::<Vec<usize>>()
            },
        )
    } else {
        (
            ModelConfig {
                hidden_dim: 100,
                bottleneck_dim: 25,
                activation: Activation::Relu,
            },
            TrainBlock {
                learning_rate: 0.001,
                epochs: if desk { 100 } else { 200 },
                batch_size: 10,
                eval_period: 1,
                shuffle: true,
            },
            if desk {
                (4..=200).step_by(8).collect()
            } else {
                (4..=500).step_by(4).collect()
            },
        )
    };
    // Only epoch curves need intermediate evaluations.
    let mut train = train;
    if axis != AxisKind::Epochs {
        train.eval_period = train.epochs;
    }
    let values = match axis {
        AxisKind::Epochs => Vec::new(),
        AxisKind::NTrain => (250..=data.n_train).step_by(250).collect(),
        _ => hidden_values,
    };
    ExperimentConfig {
        profile,
        out: PathBuf::from("results"),
        scenario: None,
        real_data: None,
        data,
        model,
        train,
        sweep: SweepBlock {
            axis,
            values,
            bottleneck_values: Vec::new(),
            seeds: if desk { vec![0, 1, 2] } else { (0..5).collect() },
            parallelism: 1,
            record_embeddings: false,
        },
    }
}

fn real_defaults(profile: Profile) -> Table {
    let mut t = Table::new();
    t.insert("delimiter".into(), Value::String(",".into()));
    t.insert("strict".into(), Value::Boolean(true));
    t.insert("top_features".into(), Value::Integer(if profile == Profile::Paper { 1000 } else { 0 }));
    t.insert("n_train".into(), Value::Integer(5000));
    t.insert("noise".into(), Value::String("none".into()));
    t.insert("probability".into(), Value::Float(0.0));
    t.insert("snr_db".into(), Value::Float(0.0));
    t
}

/// Overlays `over` onto `base`, recursing into tables.
fn merge(base: &mut Table, over: Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn expand_range(v: &Value) -> Result<Vec<usize>, String> {
    let parts: Option<Vec<i64>> = v.as_array().map(|a| a.iter().filter_map(Value::as_integer).collect());
    match parts.as_deref() {
        Some(&[start, stop, step]) if start > 0 && step > 0 && stop >= start => {
            Ok((start as usize..=stop as usize).step_by(step as usize).collect())
        }
        _ => Err("sweep.range must be [start, stop, step] with positive integers and stop >= start".into()),
    }
}

pub fn load_config(path: &Path, overrides: &Overrides) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::one(format!("cannot read {}: {e}", path.display())))?;
    let cfg = parse_config(&text, overrides)?;
    let base = path.parent().unwrap_or(Path::new("."));
    Ok(resolve_paths(cfg, base))
}

/// Relative data paths are taken relative to the config file.
fn resolve_paths(mut cfg: ExperimentConfig, base: &Path) -> ExperimentConfig {
    if let Some(real) = &mut cfg.real_data {
        if real.path.is_relative() && !real.path.exists() {
            let joined = base.join(&real.path);
            if joined.exists() {
                real.path = joined;
            }
        }
    }
    cfg
}

pub fn parse_config(text: &str, overrides: &Overrides) -> Result<ExperimentConfig, ConfigError> {
    let user: Table = text
        .parse()
        .map_err(|e: toml::de::Error| ConfigError::one(format!("not a valid TOML document: {}", e.message())))?;
    let mut problems = Vec::new();
    check_keys(&user, &mut problems);

    let profile = match overrides.profile {
        Some(p) => p,
        None => match user.get("profile") {
            None => Profile::Desk,
            Some(v) => match v.as_str().map(str::parse::<Profile>) {
                Some(Ok(p)) => p,
                Some(Err(e)) => return Err(ConfigError::one(e)),
                None => return Err(ConfigError::one("profile must be a string")),
            },
        },
    };

    let user_axis = user
        .get("sweep")
        .and_then(|s| s.get("axis"))
        .and_then(Value::as_str)
        .map(|s| AxisKind::deserialize(Value::String(s.to_string())));
    let user_axis = match user_axis {
        Some(Ok(a)) => Some(a),
        Some(Err(_)) => {
            problems.push("sweep.axis must be one of hidden_dim, bottleneck_dim, grid, epochs, n_train".into());
            None
        }
        None => None,
    };
    let family = user_axis
        .map(AxisKind::family)
        .or(overrides.family)
        .unwrap_or(SweepFamily::ModelWise);
    if let (Some(axis), Some(fam)) = (user_axis, overrides.family) {
        if axis.family() != fam {
            problems.push(format!(
                "sweep.axis '{}' does not belong to a {} sweep",
                serde_axis(axis),
                fam.name()
            ));
        }
    }

    let real = is_real(&user);
    let mut defaults = profile_defaults(profile, real, family);
    // Default n_train axis follows the configured training-set size.
    if let Some(n) = user
        .get("data")
        .and_then(|d| d.get("n_train"))
        .and_then(Value::as_integer)
    {
        if defaults.sweep.axis == AxisKind::NTrain && n > 0 {
            defaults.sweep.values = (250..=n as usize).step_by(250).collect();
        }
    }
    let Value::Table(mut merged) = Value::try_from(&defaults).map_err(|e| ConfigError::one(e.to_string()))? else {
        unreachable!("config serialises to a table");
    };
    if real {
        merged.insert("real_data".into(), Value::Table(real_defaults(profile)));
    }

    let mut user = user;
    user.remove("profile");
    if let Some(Value::Table(sweep)) = user.get_mut("sweep") {
        if let Some(range) = sweep.remove("range") {
            if sweep.contains_key("values") {
                problems.push("sweep.values and sweep.range are mutually exclusive".into());
            }
            match expand_range(&range) {
                Ok(v) => {
                    sweep.insert(
                        "values".into(),
                        Value::Array(v.into_iter().map(|x| Value::Integer(x as i64)).collect()),
                    );
                }
                Err(e) => problems.push(e),
            }
        } else if user_axis.is_some_and(|a| a != defaults.sweep.axis) && !sweep.contains_key("values") {
            let axis = user_axis.unwrap_or(defaults.sweep.axis);
            if axis != AxisKind::Epochs {
                problems.push(format!("sweep.axis '{}' needs sweep.values or sweep.range", serde_axis(axis)));
            } else {
                sweep.insert("values".into(), Value::Array(Vec::new()));
            }
        }
    }
    if !problems.is_empty() {
        return Err(ConfigError { problems });
    }
    merge(&mut merged, user);
    merged.insert("profile".into(), Value::String(serde_axis_profile(profile).into()));

    let mut cfg: ExperimentConfig = ExperimentConfig::deserialize(merged)
        .map_err(|e| ConfigError::one(format!("bad value: {}", e.message())))?;

    if let Some(out) = &overrides.out {
        cfg.out = out.clone();
    }
    if let Some(seeds) = &overrides.seeds {
        cfg.sweep.seeds = seeds.clone();
    }
    if let Some(p) = overrides.parallelism {
        cfg.sweep.parallelism = p;
    }
    validate(&cfg)?;
    Ok(cfg)
}

fn serde_axis(a: AxisKind) -> String {
    match Value::try_from(a) {
        Ok(Value::String(s)) => s,
        _ => format!("{a:?}"),
    }
}

fn serde_axis_profile(p: Profile) -> &'static str {
    match p {
        Profile::Desk => "desk",
        Profile::Paper => "paper",
    }
}

fn check_probability(name: &str, p: f64, problems: &mut Vec<String>) {
    if !(0.0..=1.0).contains(&p) {
        problems.push(format!("{name} = {p} is outside [0, 1]"));
    }
}

fn check_db(name: &str, v: f64, problems: &mut Vec<String>) {
    if !v.is_finite() {
        problems.push(format!("{name} must be finite"));
    }
}

/// Number of input features the model will see.
pub fn input_dim(cfg: &ExperimentConfig) -> Result<usize, String> {
    match &cfg.real_data {
        None => Ok(cfg.data.ambient_dim),
        Some(r) => {
            if r.top_features > 0 {
                return Ok(r.top_features);
            }
            if let Some(cols) = &r.feature_columns {
                return Ok(cols.len());
            }
            let delim = r.delimiter.as_bytes().first().copied().unwrap_or(b',');
            let mut rdr = csv::ReaderBuilder::new()
                .delimiter(delim)
                .from_path(&r.path)
                .map_err(|e| format!("cannot read {}: {e}", r.path.display()))?;
            let header = rdr.headers().map_err(|e| e.to_string())?;
            let skip = [r.batch_column.as_deref(), r.label_column.as_deref()];
            Ok(header.iter().filter(|h| !skip.contains(&Some(h.trim()))).count())
        }
    }
}

pub fn validate(cfg: &ExperimentConfig) -> Result<(), ConfigError> {
    let mut problems = Vec::new();
    match (&cfg.scenario, &cfg.real_data) {
        (None, None) => problems.push("exactly one of [scenario] or [real_data] is required (found neither)".into()),
        (Some(_), Some(_)) => problems.push("exactly one of [scenario] or [real_data] is required (found both)".into()),
        _ => {}
    }
    if let Some(s) = &cfg.scenario {
        match *s {
            Scenario::SampleNoise { probability, snr_db } | Scenario::FeatureNoise { probability, snr_db } => {
                check_probability("scenario.probability", probability, &mut problems);
                check_db("scenario.snr_db", snr_db, &mut problems);
            }
            Scenario::DomainShift {
                shift,
                noise_probability,
                snr_db,
            } => {
                if !(shift >= 0.0 && shift.is_finite()) {
                    problems.push(format!("scenario.shift = {shift} must be finite and non-negative"));
                }
                check_probability("scenario.noise_probability", noise_probability, &mut problems);
                if noise_probability > 0.0 && snr_db.is_none() {
                    problems.push("scenario.noise_probability > 0 needs scenario.snr_db".into());
                }
                if let Some(db) = snr_db {
                    check_db("scenario.snr_db", db, &mut problems);
                }
            }
            Scenario::Anomaly { probability, sar_db } => {
                check_probability("scenario.probability", probability, &mut problems);
                check_db("scenario.sar_db", sar_db, &mut problems);
            }
        }
    }
    if let Some(r) = &cfg.real_data {
        if !r.path.is_file() {
            problems.push(format!("real_data.path '{}' does not exist", r.path.display()));
        }
        if r.delimiter.len() != 1 || !r.delimiter.is_ascii() {
            problems.push(format!("real_data.delimiter '{}' must be one ASCII character", r.delimiter));
        }
        check_probability("real_data.probability", r.probability, &mut problems);
        check_db("real_data.snr_db", r.snr_db, &mut problems);
        if r.source_batch.is_some() && r.batch_column.is_none() {
            problems.push("real_data.source_batch needs real_data.batch_column".into());
        }
        if r.n_train == 0 {
            problems.push("real_data.n_train must be positive".into());
        }
    }

    let d = &cfg.data;
    if d.latent_dim == 0 || d.ambient_dim == 0 || d.n_train == 0 || d.n_test == 0 {
        problems.push("data sizes must be positive".into());
    }
    if cfg.real_data.is_none() && d.latent_dim >= d.ambient_dim {
        problems.push(format!(
            "data.latent_dim ({}) must be smaller than data.ambient_dim ({})",
            d.latent_dim, d.ambient_dim
        ));
    }

    let n = if problems.iter().any(|p| p.starts_with("real_data.path")) {
        None
    } else {
        match input_dim(cfg) {
            Ok(n) => Some(n),
            Err(e) => {
                problems.push(e);
                None
            }
        }
    };
    let s = &cfg.sweep;
    let bottlenecks: Vec<usize> = match s.axis {
        AxisKind::BottleneckDim => s.values.clone(),
        AxisKind::Grid => s.bottleneck_values.clone(),
        _ => vec![cfg.model.bottleneck_dim],
    };
    let hiddens: Vec<usize> = match s.axis {
        AxisKind::HiddenDim | AxisKind::Grid => s.values.clone(),
        _ => vec![cfg.model.hidden_dim],
    };
    if let Some(n) = n {
        if let Some(&b) = bottlenecks.iter().find(|&&b| b >= n) {
            problems.push(format!(
                "bottleneck size {b} must be smaller than the input dimension {n} (under-complete autoencoder)"
            ));
        }
    }
    if bottlenecks.contains(&0) || hiddens.contains(&0) {
        problems.push("layer sizes must be positive".into());
    }

    let t = &cfg.train;
    if !(t.learning_rate >= 0.0 && t.learning_rate.is_finite()) {
        problems.push(format!("train.learning_rate = {} must be finite and non-negative", t.learning_rate));
    }
    if t.epochs == 0 {
        problems.push("train.epochs must be positive".into());
    }
    if t.batch_size == 0 {
        problems.push("train.batch_size must be positive".into());
    }
    if t.eval_period == 0 {
        problems.push("train.eval_period must be positive".into());
    }

    match s.axis {
        AxisKind::Epochs => {
            if !s.values.is_empty() {
                problems.push("sweep.values is not used by the epochs axis; set train.epochs instead".into());
            }
        }
        _ => {
            if s.values.is_empty() {
                problems.push("sweep.values must not be empty".into());
            } else if s.values.windows(2).any(|w| w[0] >= w[1]) {
                problems.push("sweep.values must be strictly increasing".into());
            }
        }
    }
    if s.axis == AxisKind::Grid {
        if s.bottleneck_values.is_empty() {
            problems.push("grid sweeps need sweep.bottleneck_values".into());
        } else if s.bottleneck_values.windows(2).any(|w| w[0] >= w[1]) {
            problems.push("sweep.bottleneck_values must be strictly increasing".into());
        }
    } else if !s.bottleneck_values.is_empty() {
        problems.push("sweep.bottleneck_values is only used by the grid axis".into());
    }
    if s.axis == AxisKind::NTrain {
        let max = cfg.real_data.as_ref().map_or(d.n_train, |r| r.n_train);
        if s.values.last().is_some_and(|&v| v > max) {
            problems.push(format!("sweep.values exceed the {max} available training rows"));
        }
    }
    if s.seeds.is_empty() {
        problems.push("sweep.seeds must list at least one seed".into());
    }
    let unique: BTreeSet<_> = s.seeds.iter().collect();
    if unique.len() != s.seeds.len() {
        problems.push("sweep.seeds contains duplicates".into());
    }
    if s.parallelism == 0 {
        problems.push("sweep.parallelism must be at least 1".into());
    }

    if problems.is_empty() {
        Ok(())
    } else {
        Err(ConfigError { problems })
    }
}

impl ExperimentConfig {
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serialises")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[scenario]
kind = "sample-noise"
probability = 0.9
snr_db = -15
"#;

    #[test]
    fn minimal_config_gets_table_defaults() {
        let cfg = parse_config(MINIMAL, &Overrides::default()).unwrap();
        assert_eq!(cfg.train.learning_rate, 0.001);
        assert_eq!(cfg.train.batch_size, 10);
        assert_eq!(cfg.profile, Profile::Desk);
        assert_eq!(cfg.sweep.axis, AxisKind::HiddenDim);
        assert_eq!(cfg.sweep.values.first(), Some(&4));
        assert_eq!(cfg.sweep.values.last(), Some(&196));
        let paper = parse_config(&format!("profile = \"paper\"\n{MINIMAL}"), &Overrides::default()).unwrap();
        assert_eq!(paper.train.epochs, 200);
        assert_eq!(paper.sweep.values.len(), 125);
        assert_eq!((paper.data.n_train, paper.data.n_test), (5000, 10000));
    }

    #[test]
    fn unknown_keys_suggest_nearest() {
        let text = format!("{MINIMAL}\n[train]\nlearning_rat = 0.1\nepoch = 3\n");
        let err = parse_config(&text, &Overrides::default()).unwrap_err();
        assert_eq!(err.problems.len(), 2);
        assert!(err.problems.iter().any(|p| p.contains("did you mean 'train.learning_rate'")), "{err}");
        assert!(err.problems.iter().any(|p| p.contains("did you mean 'train.epochs'")), "{err}");
    }

    #[test]
    fn keys_of_other_scenario_kinds_rejected() {
        let text = "[scenario]\nkind = \"anomaly\"\nprobability = 0.3\nsar_db = -15\nsnr_db = 2\n";
        let err = parse_config(text, &Overrides::default()).unwrap_err();
        assert!(err.problems[0].contains("not used by kind 'anomaly'"));
    }

    #[test]
    fn over_complete_rejected() {
        let text = format!("{MINIMAL}\n[model]\nbottleneck_dim = 50\n[sweep]\naxis = \"epochs\"\n");
        let err = parse_config(&text, &Overrides::default()).unwrap_err();
        assert!(err.problems.iter().any(|p| p.contains("under-complete")), "{err}");
    }

    #[test]
    fn problems_reported_in_batch() {
        let text = "[scenario]\nkind = \"sample-noise\"\nprobability = 1.5\nsnr_db = 0\n[train]\nbatch_size = 0\n[sweep]\nseeds = []\n";
        let err = parse_config(text, &Overrides::default()).unwrap_err();
        assert_eq!(err.problems.len(), 3, "{err}");
    }

    #[test]
    fn emitted_defaults_round_trip() {
        for text in [
            MINIMAL.to_string(),
            format!("{MINIMAL}\n[sweep]\naxis = \"grid\"\nrange = [4, 20, 8]\nbottleneck_values = [5, 10]\n"),
            "[scenario]\nkind = \"domain-shift\"\nshift = 2\n[sweep]\naxis = \"epochs\"\n".to_string(),
        ] {
            let cfg = parse_config(&text, &Overrides::default()).unwrap();
            let again = parse_config(&cfg.to_toml(), &Overrides::default()).unwrap();
            assert_eq!(cfg, again);
        }
    }

    #[test]
    fn family_picks_axis_and_must_agree() {
        let ov = Overrides {
            family: Some(SweepFamily::SampleWise),
            ..Overrides::default()
        };
        let cfg = parse_config(MINIMAL, &ov).unwrap();
        assert_eq!(cfg.sweep.axis, AxisKind::NTrain);
        assert_eq!(cfg.sweep.values.last(), Some(&2000));
        let clash = format!("{MINIMAL}\n[sweep]\naxis = \"epochs\"\n");
        assert!(parse_config(&clash, &ov).is_err());
    }

    #[test]
    fn scenario_block_is_required() {
        let err = parse_config("[train]\nepochs = 3\n", &Overrides::default()).unwrap_err();
        assert!(err.problems[0].contains("exactly one"));
    }
}
