//! Command implementations behind the `descentlab` binary.

pub mod config;
pub mod plot;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use descentlab::datagen::{anomaly_test_set, build_scenario, Dataset, Scenario, SubspaceSpec};
use descentlab::metrics::{knn_dat, knn_dat_report, roc_auc, KnnDatConfig, Label, ScoredSample};
use descentlab::neuralnet::TrainConfig;
use descentlab::realdata::{
    apply_real_feature_noise, apply_real_sample_noise, load_csv, select_top_features, split_source_target,
    train_test_split, CsvSchema, FeatureColumns, TabularDataset,
};
use descentlab::sweep::{run_sweep, CurveTable, DataSource, RunKey, RunStatus, SweepAxis, SweepSpec};
use ndarray::Array2;
use serde::Serialize;

use config::{AxisKind, ConfigError, ExperimentConfig, RealNoise};

/// Failure of a command, mapped to the process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Exit code 2: bad configuration, arguments or missing inputs.
    Config(String),
    /// Exit code 3: the command started but could not finish.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) | CliError::Runtime(m) => f.write_str(m.trim_end()),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| runtime(format!("cannot create {}: {e}", dir.display())))?;
    }
    fs::write(path, bytes).map_err(|e| runtime(format!("cannot write {}: {e}", path.display())))
}

/// Parallelism: explicit flag, then `DESCENTLAB_THREADS`, then the config.
pub fn resolve_parallelism(flag: Option<usize>, env: Option<&str>, config: usize) -> Result<usize, CliError> {
    if let Some(p) = flag {
        return if p == 0 {
            Err(CliError::Config("--parallelism must be at least 1".into()))
        } else {
            Ok(p)
        };
    }
    if let Some(raw) = env {
        return match raw.trim().parse::<usize>() {
            Ok(p) if p > 0 => Ok(p),
            _ => Err(CliError::Config(format!("DESCENTLAB_THREADS='{raw}' is not a positive integer"))),
        };
    }
    Ok(config)
}

pub fn parse_seed_list(s: &str) -> Result<Vec<u64>, String> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once("..") {
            Some((a, b)) => {
                let a: u64 = a.parse().map_err(|_| format!("bad seed range '{part}'"))?;
                let b: u64 = b.parse().map_err(|_| format!("bad seed range '{part}'"))?;
                if b <= a {
                    return Err(format!("empty seed range '{part}'"));
                }
                out.extend(a..b);
            }
            None => out.push(part.parse().map_err(|_| format!("bad seed '{part}'"))?),
        }
    }
    if out.is_empty() {
        return Err("empty seed list".into());
    }
    Ok(out)
}

/// Training and test matrices for a real-data config.
pub struct PreparedReal {
    pub train: Dataset,
    pub test: Dataset,
    pub skipped_rows: usize,
    pub zero_norm_rows: usize,
    pub batch_names: Vec<String>,
}

pub fn prepare_real(cfg: &ExperimentConfig) -> Result<PreparedReal, CliError> {
    let r = cfg
        .real_data
        .as_ref()
        .ok_or_else(|| CliError::Config("no [real_data] block".into()))?;
    let schema = CsvSchema {
        features: r
            .feature_columns
            .clone()
            .map_or(FeatureColumns::All, FeatureColumns::Named),
        batch_column: r.batch_column.clone(),
        label_column: r.label_column.clone(),
        delimiter: r.delimiter.chars().next().unwrap_or(','),
        strict: r.strict,
    };
    let report = load_csv(&r.path, &schema).map_err(|e| CliError::Config(e.to_string()))?;
    let skipped_rows = report.skipped();
    let mut ds: TabularDataset = report.dataset;
    if r.top_features > 0 && r.top_features < ds.n_features() {
        ds = select_top_features(&ds, r.top_features).map_err(runtime)?;
    } else if r.top_features > ds.n_features() {
        return Err(CliError::Config(format!(
            "real_data.top_features = {} exceeds the {} available features",
            r.top_features,
            ds.n_features()
        )));
    }

    let (train, test) = match &r.source_batch {
        Some(name) => {
            let id = ds
                .batch_id(name)
                .ok_or_else(|| CliError::Config(format!("source batch '{name}' not found")))?;
            let (source, targets) = split_source_target(&ds, id).map_err(runtime)?;
            if targets.is_empty() {
                return Err(CliError::Config("the dataset has no target batches".into()));
            }
            let rows: Vec<usize> = (0..ds.len()).filter(|&i| ds.batch_label[i] != id).collect();
            (source, ds.select_rows(&rows))
        }
        None => {
            let split_seed = cfg.sweep.seeds.first().copied().unwrap_or(0);
            train_test_split(&ds, r.n_train, split_seed).map_err(|e| CliError::Config(e.to_string()))?
        }
    };

    let noise_seed = cfg.sweep.seeds.first().copied().unwrap_or(0);
    let (train_ds, zero_norm_rows) = match r.noise {
        RealNoise::None => (train.to_dataset(), 0),
        RealNoise::Sample => {
            let out = apply_real_sample_noise(&train, r.probability, r.snr_db, noise_seed).map_err(runtime)?;
            (out.dataset, out.skipped_zero_rows.len())
        }
        RealNoise::Feature => {
            let out = apply_real_feature_noise(&train, r.probability, r.snr_db, noise_seed).map_err(runtime)?;
            (out.dataset, out.skipped_zero_rows.len())
        }
    };
    Ok(PreparedReal {
        train: train_ds,
        test: test.to_dataset(),
        skipped_rows,
        zero_norm_rows,
        batch_names: ds.batch_names.clone(),
    })
}

/// Sweep description for a validated config.
pub fn sweep_spec(cfg: &ExperimentConfig) -> Result<(SweepSpec, Option<PreparedReal>), CliError> {
    let (source, prepared) = match (&cfg.scenario, &cfg.real_data) {
        (Some(scenario), None) => (
            DataSource::Synthetic {
                spec: SubspaceSpec {
                    latent_dim: cfg.data.latent_dim,
                    ambient_dim: cfg.data.ambient_dim,
                    n_train: cfg.data.n_train,
                    n_test: cfg.data.n_test,
                    seed: 0,
                },
                scenario: *scenario,
            },
            None,
        ),
        (None, Some(r)) => {
            let prepared = prepare_real(cfg)?;
            let name = r
                .path
                .file_stem()
                .map_or("real".to_string(), |s| s.to_string_lossy().into_owned());
            (
                DataSource::Prepared {
                    name,
                    train: Arc::new(prepared.train.clone()),
                    test: Arc::new(prepared.test.clone()),
                },
                Some(prepared),
            )
        }
        _ => return Err(CliError::Config("exactly one of [scenario] or [real_data] is required".into())),
    };
    let s = &cfg.sweep;
    let axis = match s.axis {
        AxisKind::HiddenDim => SweepAxis::HiddenDim(s.values.clone()),
        AxisKind::BottleneckDim => SweepAxis::BottleneckDim(s.values.clone()),
        AxisKind::Grid => SweepAxis::Grid {
            hidden: s.values.clone(),
            bottleneck: s.bottleneck_values.clone(),
        },
        AxisKind::Epochs => SweepAxis::Epochs,
        AxisKind::NTrain => SweepAxis::NTrain(s.values.clone()),
    };
    let spec = SweepSpec {
        source,
        axis,
        hidden_dim: cfg.model.hidden_dim,
        bottleneck_dim: cfg.model.bottleneck_dim,
        activation: cfg.model.activation,
        train: TrainConfig {
            learning_rate: cfg.train.learning_rate,
            epochs: cfg.train.epochs,
            batch_size: cfg.train.batch_size,
            seed: 0,
            shuffle_each_epoch: cfg.train.shuffle,
            eval_period: cfg.train.eval_period,
            record_embeddings: s.record_embeddings,
        },
        seeds: s.seeds.clone(),
        record_embeddings: s.record_embeddings,
    };
    spec.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok((spec, prepared))
}

/// Writes the train/test (and anomaly scoring) CSVs for every seed, or the
/// prepared matrices for real data. Returns the written paths.
pub fn cmd_generate(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>, CliError> {
    let mut written = Vec::new();
    let mut save = |path: PathBuf, ds: &Dataset| -> Result<(), CliError> {
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).map_err(runtime)?;
        write_file(&path, &buf)?;
        written.push(path);
        Ok(())
    };
    match (&cfg.scenario, &cfg.real_data) {
        (Some(scenario), None) => {
            for &seed in &cfg.sweep.seeds {
                let spec = SubspaceSpec::new(
                    cfg.data.latent_dim,
                    cfg.data.ambient_dim,
                    cfg.data.n_train,
                    cfg.data.n_test,
                    seed,
                )
                .map_err(|e| CliError::Config(e.to_string()))?;
                let data = build_scenario(&spec, scenario).map_err(runtime)?;
                let dir = cfg.out.join("data").join(format!("seed-{seed}"));
                save(dir.join("train.csv"), &data.train)?;
                save(dir.join("test.csv"), &data.test)?;
                if let Scenario::Anomaly { .. } = scenario {
                    let scoring = anomaly_test_set(&spec, scenario, &data.test).map_err(runtime)?;
                    save(dir.join("scoring.csv"), &scoring)?;
                }
            }
        }
        _ => {
            let prepared = prepare_real(cfg)?;
            if prepared.skipped_rows > 0 {
                eprintln!("warning: skipped {} malformed rows", prepared.skipped_rows);
            }
            if prepared.zero_norm_rows > 0 {
                eprintln!("warning: {} all-zero rows received no noise", prepared.zero_norm_rows);
            }
            let dir = cfg.out.join("data");
            save(dir.join("train.csv"), &prepared.train)?;
            save(dir.join("test.csv"), &prepared.test)?;
        }
    }
    let cfg_path = cfg.out.join("config.resolved.toml");
    write_file(&cfg_path, cfg.to_toml().as_bytes())?;
    written.push(cfg_path);
    Ok(written)
}

#[derive(Debug, Serialize)]
struct FailedRun {
    key: String,
    error: String,
}

#[derive(Debug, Serialize)]
struct Status {
    state: &'static str,
    family: String,
    scenario_hash: String,
    total_runs: usize,
    succeeded: usize,
    failed: Vec<FailedRun>,
    outputs: Vec<String>,
    wall_seconds: f64,
}

/// Runs the sweep described by `cfg` and writes `runs.csv`, `curve.csv`,
/// `curve.svg`, `status.json` (and `embeddings.csv` on request) into
/// `cfg.out`. Returns the status state (`complete` or `partial`).
pub fn cmd_sweep(cfg: &ExperimentConfig, parallelism: usize, quiet: bool) -> Result<&'static str, CliError> {
    let (spec, prepared) = sweep_spec(cfg)?;
    if let Some(p) = &prepared {
        if p.skipped_rows > 0 {
            eprintln!("warning: skipped {} malformed rows", p.skipped_rows);
        }
        if p.zero_norm_rows > 0 {
            eprintln!("warning: {} all-zero rows received no noise", p.zero_norm_rows);
        }
    }
    let family = cfg.sweep.axis.family().name().to_string();
    let hash = spec.scenario_hash();
    let out = &cfg.out;
    fs::create_dir_all(out).map_err(|e| runtime(format!("cannot create {}: {e}", out.display())))?;
    write_file(&out.join("config.resolved.toml"), cfg.to_toml().as_bytes())?;

    let total = spec.run_keys().map_err(|e| CliError::Config(e.to_string()))?.len();
    let status_path = out.join("status.json");
    let write_status = |status: &Status| -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(status).map_err(runtime)?;
        write_file(&status_path, text.as_bytes())
    };
    let started = Instant::now();
    write_status(&Status {
        state: "running",
        family: family.clone(),
        scenario_hash: hash.clone(),
        total_runs: total,
        succeeded: 0,
        failed: Vec::new(),
        outputs: Vec::new(),
        wall_seconds: 0.0,
    })?;

    let progress = |done: usize, total: usize, key: &RunKey, status: &RunStatus| {
        if quiet {
            return;
        }
        match status {
            Ok(r) => eprintln!(
                "[{done}/{total}] h={} b={} n={} seed={} test={:.4} ({:.1}s)",
                key.hidden_dim,
                key.bottleneck_dim,
                key.n_train,
                key.seed,
                r.record.final_test_loss(),
                r.record.wall_seconds
            ),
            Err(e) => eprintln!(
                "[{done}/{total}] h={} b={} n={} seed={} FAILED: {e}",
                key.hidden_dim, key.bottleneck_dim, key.n_train, key.seed
            ),
        }
    };
    let outcome = run_sweep(&spec, parallelism, progress).map_err(runtime)?;

    let mut outputs = Vec::new();
    let mut buf = Vec::new();
    outcome.write_runs_csv(&mut buf).map_err(runtime)?;
    write_file(&out.join("runs.csv"), &buf)?;
    outputs.push("runs.csv".to_string());

    buf.clear();
    outcome.curve.write_csv(&mut buf).map_err(runtime)?;
    write_file(&out.join("curve.csv"), &buf)?;
    outputs.push("curve.csv".to_string());

    if !outcome.curve.rows.is_empty() && outcome.curve.x2_name.is_none() {
        let series = curve_series(&outcome.curve, &["train", "test"]);
        let opts = plot::PlotOptions {
            title: format!("{} sweep ({})", family, outcome.scenario),
            x_label: outcome.curve.x_name.clone(),
            ..plot::PlotOptions::default()
        };
        if let Ok(svg) = plot::render_svg(&series, &opts) {
            write_file(&out.join("curve.svg"), svg.as_bytes())?;
            outputs.push("curve.svg".to_string());
        }
    }

    if spec.record_embeddings {
        let (train_batches, test_batches) = match (&spec.source, &prepared) {
            (_, Some(p)) => (p.train.batch_label.clone(), p.test.batch_label.clone()),
            (DataSource::Synthetic { spec: s, scenario }, None) => {
                let test_batch = u32::from(matches!(scenario, Scenario::DomainShift { .. }));
                (vec![0; s.n_train], vec![test_batch; s.n_test])
            }
            _ => (Vec::new(), Vec::new()),
        };
        buf.clear();
        outcome
            .write_embeddings_csv(&mut buf, (&train_batches, &test_batches))
            .map_err(runtime)?;
        write_file(&out.join("embeddings.csv"), &buf)?;
        outputs.push("embeddings.csv".to_string());
    }

    let failed: Vec<FailedRun> = outcome
        .failures()
        .into_iter()
        .map(|(k, e)| FailedRun {
            key: k.to_string(),
            error: e.to_string(),
        })
        .collect();
    let succeeded = total - failed.len();
    let state = if failed.is_empty() {
        "complete"
    } else if succeeded == 0 {
        "failed"
    } else {
        "partial"
    };
    write_status(&Status {
        state,
        family,
        scenario_hash: hash,
        total_runs: total,
        succeeded,
        failed,
        outputs,
        wall_seconds: started.elapsed().as_secs_f64(),
    })?;
    if state == "failed" {
        return Err(CliError::Runtime(format!(
            "all {total} runs failed; see {}",
            status_path.display()
        )));
    }
    Ok(state)
}

/// Mean/stderr series of a curve table; `which` picks `train` and/or `test`.
pub fn curve_series(curve: &CurveTable, which: &[&str]) -> Vec<plot::Series> {
    let x = curve.xs();
    which
        .iter()
        .filter_map(|w| match *w {
            "train" => Some(plot::Series {
                label: "train".into(),
                x: x.clone(),
                mean: curve.mean_train(),
                stderr: curve.rows.iter().map(|r| r.stderr_train).collect(),
            }),
            "test" => Some(plot::Series {
                label: "test".into(),
                x: x.clone(),
                mean: curve.mean_test(),
                stderr: curve.rows.iter().map(|r| r.stderr_test).collect(),
            }),
            "roc_auc" => curve.mean_roc_auc().map(|mean| plot::Series {
                label: "ROC-AUC".into(),
                x: x.clone(),
                mean,
                stderr: curve.rows.iter().map(|r| r.stderr_roc_auc.unwrap_or(0.0)).collect(),
            }),
            _ => None,
        })
        .collect()
}

pub struct PlotRequest<'a> {
    pub inputs: &'a [PathBuf],
    pub series: &'a [String],
    pub log_y: bool,
    pub title: Option<String>,
}

/// Reads one or more curve files and renders them into a single SVG. With
/// several inputs the series are prefixed by the file stem.
pub fn cmd_plot(req: &PlotRequest<'_>) -> Result<String, CliError> {
    let mut all = Vec::new();
    let mut x_label = String::new();
    for path in req.inputs {
        let file = fs::File::open(path).map_err(|e| CliError::Config(format!("cannot open {}: {e}", path.display())))?;
        let curve = CurveTable::read_csv(file).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if curve.x2_name.is_some() {
            return Err(CliError::Config(format!(
                "{}: grid curves have two x columns and cannot be drawn as lines",
                path.display()
            )));
        }
        x_label = curve.x_name.clone();
        let names: Vec<&str> = req.series.iter().map(String::as_str).collect();
        let mut series = curve_series(&curve, &names);
        if series.is_empty() {
            return Err(CliError::Config(format!("{}: none of the requested series exist", path.display())));
        }
        if req.inputs.len() > 1 {
            let stem = path.file_stem().map_or(String::new(), |s| s.to_string_lossy().into_owned());
            let parent = path
                .parent()
                .and_then(|p| p.file_name())
                .map_or(String::new(), |s| s.to_string_lossy().into_owned());
            let tag = if stem == "curve" && !parent.is_empty() { parent } else { stem };
            for s in &mut series {
                s.label = format!("{tag} {}", s.label);
            }
        }
        all.extend(series);
    }
    let opts = plot::PlotOptions {
        title: req.title.clone().unwrap_or_default(),
        x_label,
        log_y: req.log_y,
        ..plot::PlotOptions::default()
    };
    plot::render_svg(&all, &opts).map_err(CliError::Runtime)
}

/// Group columns recognised in score and embedding files.
const GROUP_COLUMNS: [&str; 3] = ["seed", "hidden_dim", "bottleneck_dim"];

struct Table {
    header: Vec<String>,
    rows: Vec<csv::StringRecord>,
}

fn read_table(path: &Path) -> Result<Table, CliError> {
    let mut rdr =
        csv::Reader::from_path(path).map_err(|e| CliError::Config(format!("cannot open {}: {e}", path.display())))?;
    let header = rdr
        .headers()
        .map_err(|e| CliError::Config(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let rows = rdr
        .records()
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    Ok(Table { header, rows })
}

impl Table {
    fn col(&self, name: &str) -> Result<usize, CliError> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Config(format!("missing column '{name}'")))
    }

    /// Row indices per group, groups in order of first appearance.
    fn groups(&self) -> Vec<(String, Vec<usize>)> {
        let cols: Vec<(usize, &str)> = GROUP_COLUMNS
            .iter()
            .filter_map(|g| self.header.iter().position(|h| h == g).map(|i| (i, *g)))
            .collect();
        let mut index: BTreeMap<String, usize> = BTreeMap::new();
        let mut out: Vec<(String, Vec<usize>)> = Vec::new();
        for (i, row) in self.rows.iter().enumerate() {
            let key = if cols.is_empty() {
                "all".to_string()
            } else {
                cols.iter()
                    .map(|(c, name)| format!("{name}={}", &row[*c]))
                    .collect::<Vec<_>>()
                    .join(";")
            };
            let slot = *index.entry(key.clone()).or_insert_with(|| {
                out.push((key, Vec::new()));
                out.len() - 1
            });
            out[slot].1.push(i);
        }
        out
    }
}

fn parse_num(row: &csv::StringRecord, col: usize, line: usize) -> Result<f64, CliError> {
    row[col]
        .trim()
        .parse()
        .map_err(|_| CliError::Config(format!("line {}: cannot parse '{}'", line + 2, &row[col])))
}

/// One metric value; `target` is `pooled` or a batch name.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub metric: &'static str,
    pub group: String,
    pub target: String,
    pub value: f64,
}

pub fn metric_rows_csv(rows: &[MetricRow]) -> String {
    let mut out = String::from("metric,group,target,value\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{}\n", r.metric, r.group, r.target, r.value));
    }
    out
}

/// ROC-AUC of a scores file (`score` and `label` columns; labels `1`,
/// `true` or `anomaly` are positive), per group.
pub fn cmd_eval_roc_auc(path: &Path, score_col: &str, label_col: &str) -> Result<Vec<MetricRow>, CliError> {
    let t = read_table(path)?;
    let (sc, lc) = (t.col(score_col)?, t.col(label_col)?);
    let mut out = Vec::new();
    for (group, rows) in t.groups() {
        let scored = rows
            .iter()
            .map(|&i| {
                let row = &t.rows[i];
                let label = match row[lc].trim().to_ascii_lowercase().as_str() {
                    "1" | "true" | "anomaly" => Label::Anomaly,
                    "0" | "false" | "clean" | "noisy" | "-1" => Label::Clean,
                    other => return Err(CliError::Config(format!("line {}: unknown label '{other}'", i + 2))),
                };
                Ok(ScoredSample {
                    score: parse_num(row, sc, i)?,
                    label,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let value = roc_auc(&scored).map_err(runtime)?;
        out.push(MetricRow {
            metric: "roc_auc",
            group,
            target: "pooled".into(),
            value,
        });
    }
    Ok(out)
}

/// KNN-DAT of an embeddings file (`z*` columns plus a batch column), per
/// group. With `source` set, also one row per target batch scored against
/// the source alone.
pub fn cmd_eval_knn_dat(
    path: &Path,
    batch_col: &str,
    k: usize,
    source: Option<&str>,
) -> Result<Vec<MetricRow>, CliError> {
    let t = read_table(path)?;
    let bc = t.col(batch_col)?;
    let zcols: Vec<usize> = t
        .header
        .iter()
        .enumerate()
        .filter(|(_, h)| h.starts_with('z') && h[1..].parse::<usize>().is_ok())
        .map(|(i, _)| i)
        .collect();
    if zcols.is_empty() {
        return Err(CliError::Config("no embedding columns (z0, z1, ...)".into()));
    }
    let cfg = KnnDatConfig { k };
    let mut out = Vec::new();
    for (group, rows) in t.groups() {
        let mut names: Vec<String> = Vec::new();
        let mut labels = Vec::with_capacity(rows.len());
        let mut values = Vec::with_capacity(rows.len() * zcols.len());
        for &i in &rows {
            let row = &t.rows[i];
            for &c in &zcols {
                values.push(parse_num(row, c, i)?);
            }
            let name = row[bc].trim().to_string();
            let id = match names.iter().position(|n| *n == name) {
                Some(p) => p,
                None => {
                    names.push(name);
                    names.len() - 1
                }
            };
            labels.push(id as u32);
        }
        let emb = Array2::from_shape_vec((rows.len(), zcols.len()), values).map_err(runtime)?;
        match source {
            None => out.push(MetricRow {
                metric: "knn_dat",
                group,
                target: "pooled".into(),
                value: knn_dat(emb.view(), &labels, &cfg).map_err(runtime)?,
            }),
            Some(src) => {
                let sid = names
                    .iter()
                    .position(|n| n == src)
                    .ok_or_else(|| CliError::Config(format!("source batch '{src}' not in group {group}")))?;
                let rep = knn_dat_report(emb.view(), &labels, sid as u32, &cfg).map_err(runtime)?;
                out.push(MetricRow {
                    metric: "knn_dat",
                    group: group.clone(),
                    target: "pooled".into(),
                    value: rep.pooled,
                });
                for (b, v) in rep.per_target {
                    out.push(MetricRow {
                        metric: "knn_dat",
                        group: group.clone(),
                        target: names[b as usize].clone(),
                        value: v,
                    });
                }
            }
        }
    }
    Ok(out)
}
