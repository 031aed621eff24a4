//! Model-wise, epoch-wise and sample-wise sweeps over seeds, a small worker
//! pool, and the `runs.csv` / `curve.csv` writers.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{mpsc, Arc};

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::datagen::{anomaly_test_set, build_scenario, Dataset, Scenario, SubspaceSpec};
use crate::error::{Error, Result};
use crate::metrics::{knn_dat, reconstruction_scores, roc_auc, Label};
use crate::neuralnet::{init_model, train, Activation, Architecture, TrainConfig, TrainRecord};

/// What a sweep varies.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "values", rename_all = "snake_case")]
pub enum SweepAxis {
    HiddenDim(Vec<usize>),
    BottleneckDim(Vec<usize>),
    /// Every `(hidden, bottleneck)` pair.
    Grid {
        hidden: Vec<usize>,
        bottleneck: Vec<usize>,
    },
    /// One run per seed, evaluated on the training config's eval schedule.
    Epochs,
    NTrain(Vec<usize>),
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::HiddenDim(_) => "hidden_dim",
            SweepAxis::BottleneckDim(_) => "bottleneck_dim",
            SweepAxis::Grid { .. } => "grid",
            SweepAxis::Epochs => "epochs",
            SweepAxis::NTrain(_) => "n_train",
        }
    }

    fn validate(&self) -> Result<()> {
        let increasing = |name: &str, v: &[usize]| {
            if v.is_empty() {
                return Err(Error::invalid(format!("{name} axis has no values")));
            }
            if v.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::invalid(format!("{name} axis values must be strictly increasing")));
            }
            if v[0] == 0 {
                return Err(Error::invalid(format!("{name} axis values must be positive")));
            }
            Ok(())
        };
        match self {
            SweepAxis::HiddenDim(v) => increasing("hidden_dim", v),
            SweepAxis::BottleneckDim(v) => increasing("bottleneck_dim", v),
            SweepAxis::Grid { hidden, bottleneck } => {
                increasing("hidden_dim", hidden)?;
                increasing("bottleneck_dim", bottleneck)
            }
            SweepAxis::Epochs => Ok(()),
            SweepAxis::NTrain(v) => increasing("n_train", v),
        }
    }
}

/// Where training data comes from.
#[derive(Debug, Clone)]
pub enum DataSource {
    /// Regenerated per seed from the linear subspace model.
    Synthetic { spec: SubspaceSpec, scenario: Scenario },
    /// Fixed matrices shared by every seed (only initialisation and batch
    /// order vary).
    Prepared {
        name: String,
        train: Arc<Dataset>,
        test: Arc<Dataset>,
    },
}

impl DataSource {
    fn input_dim(&self) -> usize {
        match self {
            DataSource::Synthetic { spec, .. } => spec.ambient_dim,
            DataSource::Prepared { train, .. } => train.n_features(),
        }
    }

    fn max_train_rows(&self) -> usize {
        match self {
            DataSource::Synthetic { spec, .. } => spec.n_train,
            DataSource::Prepared { train, .. } => train.len(),
        }
    }

    /// Stable identity: the synthetic parameters minus the seed, or a digest
    /// of the prepared matrices.
    fn fingerprint(&self) -> serde_json::Value {
        match self {
            DataSource::Synthetic { spec, scenario } => serde_json::json!({
                "latent_dim": spec.latent_dim,
                "ambient_dim": spec.ambient_dim,
                "n_train": spec.n_train,
                "n_test": spec.n_test,
                "scenario": scenario,
            }),
            DataSource::Prepared { name, train, test } => {
                let mut h = Sha256::new();
                for ds in [train, test] {
                    h.update((ds.len() as u64).to_le_bytes());
                    h.update((ds.n_features() as u64).to_le_bytes());
                    for v in ds.samples.iter() {
                        h.update(v.to_le_bytes());
                    }
                    for f in &ds.flags {
                        h.update(f.as_str().as_bytes());
                    }
                    for b in &ds.batch_label {
                        h.update(b.to_le_bytes());
                    }
                }
                serde_json::json!({ "name": name, "digest": hex::encode(h.finalize()) })
            }
        }
    }

    fn scenario_name(&self) -> String {
        match self {
            DataSource::Synthetic { scenario, .. } => scenario.name().to_string(),
            DataSource::Prepared { name, .. } => name.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub source: DataSource,
    pub axis: SweepAxis,
    /// Used whenever the axis does not set it.
    pub hidden_dim: usize,
    pub bottleneck_dim: usize,
    pub activation: Activation,
    /// `seed` is replaced per run.
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
    /// Keep bottleneck embeddings of both splits (and score KNN-DAT between
    /// them).
    pub record_embeddings: bool,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        self.axis.validate()?;
        if self.seeds.is_empty() {
            return Err(Error::invalid("at least one seed is required"));
        }
        let unique: BTreeSet<u64> = self.seeds.iter().copied().collect();
        if unique.len() != self.seeds.len() {
            return Err(Error::DuplicateRun("seed list contains duplicates".into()));
        }
        self.train.validate()?;
        if let DataSource::Synthetic { spec, .. } = &self.source {
            spec.validate()?;
        }
        if let SweepAxis::NTrain(v) = &self.axis {
            let max = self.source.max_train_rows();
            if v.last().is_some_and(|&m| m > max) {
                return Err(Error::invalid(format!("n_train axis exceeds the {max} available rows")));
            }
        }
        for (h, b) in self.cells() {
            Architecture::new(self.source.input_dim(), h, b)?;
        }
        Ok(())
    }

    /// `(hidden, bottleneck)` for every model the sweep trains per seed
    /// (ignoring the sample axis).
    fn cells(&self) -> Vec<(usize, usize)> {
        match &self.axis {
            SweepAxis::HiddenDim(v) => v.iter().map(|&h| (h, self.bottleneck_dim)).collect(),
            SweepAxis::BottleneckDim(v) => v.iter().map(|&b| (self.hidden_dim, b)).collect(),
            SweepAxis::Grid { hidden, bottleneck } => hidden
                .iter()
                .flat_map(|&h| bottleneck.iter().map(move |&b| (h, b)))
                .collect(),
            SweepAxis::Epochs | SweepAxis::NTrain(_) => vec![(self.hidden_dim, self.bottleneck_dim)],
        }
    }

    /// Hex SHA-256 prefix of everything except the seeds and axis values.
    pub fn scenario_hash(&self) -> String {
        let mut train = self.train;
        train.seed = 0;
        let axis_kind = self.axis.name();
        let (hidden, bottleneck) = match &self.axis {
            SweepAxis::HiddenDim(_) => (None, Some(self.bottleneck_dim)),
            SweepAxis::BottleneckDim(_) => (Some(self.hidden_dim), None),
            SweepAxis::Grid { .. } => (None, None),
            _ => (Some(self.hidden_dim), Some(self.bottleneck_dim)),
        };
        let doc = serde_json::json!({
            "source": self.source.fingerprint(),
            "axis": axis_kind,
            "hidden_dim": hidden,
            "bottleneck_dim": bottleneck,
            "activation": self.activation,
            "train": train,
            "record_embeddings": self.record_embeddings,
        });
        let digest = Sha256::digest(doc.to_string().as_bytes());
        hex::encode(digest)[..16].to_string()
    }

    /// All run keys, in key order.
    pub fn run_keys(&self) -> Result<Vec<RunKey>> {
        let hash = self.scenario_hash();
        let n_values: Vec<usize> = match &self.axis {
            SweepAxis::NTrain(v) => v.clone(),
            _ => vec![self.source.max_train_rows()],
        };
        let mut keys = BTreeSet::new();
        for &seed in &self.seeds {
            for (h, b) in self.cells() {
                for &n in &n_values {
                    let key = RunKey {
                        scenario_hash: hash.clone(),
                        hidden_dim: h,
                        bottleneck_dim: b,
                        epochs: self.train.epochs,
                        n_train: n,
                        seed,
                    };
                    if !keys.insert(key.clone()) {
                        return Err(Error::DuplicateRun(key.to_string()));
                    }
                }
            }
        }
        Ok(keys.into_iter().collect())
    }
}

/// Identity of one training run.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RunKey {
    pub scenario_hash: String,
    pub hidden_dim: usize,
    pub bottleneck_dim: usize,
    pub epochs: usize,
    pub n_train: usize,
    pub seed: u64,
}

impl fmt::Display for RunKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/h{}/b{}/e{}/n{}/s{}",
            self.scenario_hash, self.hidden_dim, self.bottleneck_dim, self.epochs, self.n_train, self.seed
        )
    }
}

/// A completed run.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub parameter_count: usize,
    pub record: TrainRecord,
    /// Anomaly scenarios only.
    pub roc_auc: Option<f64>,
    /// Only when embeddings are recorded.
    pub knn_dat: Option<f64>,
}

pub type RunStatus = std::result::Result<RunResult, String>;

/// Runs `jobs` on at most `parallelism` threads and hands every completion
/// to `on_done` on the calling thread. Panics inside a job become failures
/// of that job only. The returned map is keyed, so its contents do not
/// depend on completion order.
pub fn schedule<K, T, F>(
    jobs: Vec<K>,
    parallelism: usize,
    work: F,
    mut on_done: impl FnMut(&K, &std::result::Result<T, String>),
) -> Result<BTreeMap<K, std::result::Result<T, String>>>
where
    K: Ord + Clone + Send + Sync,
    T: Send,
    F: Fn(&K) -> std::result::Result<T, String> + Sync,
{
    if parallelism == 0 {
        return Err(Error::invalid("parallelism must be at least 1"));
    }
    let workers = parallelism.min(jobs.len().max(1));
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<(usize, std::result::Result<T, String>)>();
    let mut out = BTreeMap::new();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            let tx = tx.clone();
            let (jobs, next, work) = (&jobs, &next, &work);
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(job) = jobs.get(i) else { break };
                let result = catch_unwind(AssertUnwindSafe(|| work(job))).unwrap_or_else(|panic| {
                    let msg = panic
                        .downcast_ref::<&str>()
                        .map(|s| s.to_string())
                        .or_else(|| panic.downcast_ref::<String>().cloned())
                        .unwrap_or_else(|| "worker panicked".into());
                    Err(format!("panic: {msg}"))
                });
                if tx.send((i, result)).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for (i, result) in rx {
            on_done(&jobs[i], &result);
            out.insert(jobs[i].clone(), result);
        }
    });
    Ok(out)
}

/// One aggregated point of a curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveRow {
    pub x: f64,
    /// Bottleneck size on grid sweeps.
    pub x2: Option<f64>,
    pub mean_train: f64,
    pub mean_test: f64,
    pub stderr_train: f64,
    pub stderr_test: f64,
    pub n_seeds: usize,
    pub mean_roc_auc: Option<f64>,
    pub stderr_roc_auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveTable {
    pub x_name: String,
    pub x2_name: Option<String>,
    pub rows: Vec<CurveRow>,
}

impl CurveTable {
    pub fn xs(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.x).collect()
    }

    pub fn mean_test(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.mean_test).collect()
    }

    pub fn mean_train(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.mean_train).collect()
    }

    pub fn mean_roc_auc(&self) -> Option<Vec<f64>> {
        self.rows.iter().map(|r| r.mean_roc_auc).collect()
    }

    /// Columns: `x_name, [x2_name,] mean_train, mean_test, stderr_train,
    /// stderr_test, n_seeds[, mean_roc_auc, stderr_roc_auc]`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let with_auc = self.rows.iter().any(|r| r.mean_roc_auc.is_some());
        let mut header = vec![self.x_name.clone()];
        header.extend(self.x2_name.clone());
        header.extend(
            ["mean_train", "mean_test", "stderr_train", "stderr_test", "n_seeds"]
                .iter()
                .map(|s| s.to_string()),
        );
        if with_auc {
            header.extend(["mean_roc_auc".to_string(), "stderr_roc_auc".to_string()]);
        }
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![r.x.to_string()];
            if self.x2_name.is_some() {
                rec.push(r.x2.map(|v| v.to_string()).unwrap_or_default());
            }
            rec.extend([
                r.mean_train.to_string(),
                r.mean_test.to_string(),
                r.stderr_train.to_string(),
                r.stderr_test.to_string(),
                r.n_seeds.to_string(),
            ]);
            if with_auc {
                rec.push(r.mean_roc_auc.map(|v| v.to_string()).unwrap_or_default());
                rec.push(r.stderr_roc_auc.map(|v| v.to_string()).unwrap_or_default());
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the layout written by [`CurveTable::write_csv`].
    pub fn read_csv<R: std::io::Read>(reader: R) -> Result<CurveTable> {
        let mut r = csv::Reader::from_reader(reader);
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        let pos = |name: &str| header.iter().position(|h| h == name);
        let need = |name: &str| pos(name).ok_or_else(|| Error::Schema(format!("curve file lacks column '{name}'")));
        let (mt, me, st, se, ns) = (
            need("mean_train")?,
            need("mean_test")?,
            need("stderr_train")?,
            need("stderr_test")?,
            need("n_seeds")?,
        );
        if mt == 0 {
            return Err(Error::Schema("curve file lacks an x column".into()));
        }
        let x2 = (mt == 2).then_some(1);
        let (ma, sa) = (pos("mean_roc_auc"), pos("stderr_roc_auc"));
        let mut rows = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let line = i as u64 + 2;
            let num = |j: usize| -> Result<f64> {
                rec.get(j).unwrap_or("").parse().map_err(|_| Error::Row {
                    path: "curve.csv".into(),
                    line,
                    msg: format!("bad number in column '{}'", header[j]),
                })
            };
            let opt = |j: Option<usize>| -> Result<Option<f64>> {
                match j {
                    Some(j) if !rec.get(j).unwrap_or("").is_empty() => num(j).map(Some),
                    _ => Ok(None),
                }
            };
            rows.push(CurveRow {
                x: num(0)?,
                x2: opt(x2)?,
                mean_train: num(mt)?,
                mean_test: num(me)?,
                stderr_train: num(st)?,
                stderr_test: num(se)?,
                n_seeds: num(ns)? as usize,
                mean_roc_auc: opt(ma)?,
                stderr_roc_auc: opt(sa)?,
            });
        }
        Ok(CurveTable {
            x_name: header[0].clone(),
            x2_name: x2.map(|j| header[j].clone()),
            rows,
        })
    }
}

/// Mean and standard error (sample standard deviation over `sqrt(n)`; zero
/// for a single value).
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Everything a finished sweep produced.
#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub scenario: String,
    pub axis: String,
    pub runs: BTreeMap<RunKey, RunStatus>,
    pub curve: CurveTable,
}

impl SweepOutcome {
    pub fn failures(&self) -> Vec<(&RunKey, &str)> {
        self.runs
            .iter()
            .filter_map(|(k, r)| r.as_ref().err().map(|e| (k, e.as_str())))
            .collect()
    }

    pub fn is_complete(&self) -> bool {
        self.runs.values().all(|r| r.is_ok())
    }

    /// One row per run, sorted by key. Columns: scenario_hash, scenario,
    /// hidden_dim, bottleneck_dim, epochs, n_train, seed, status,
    /// parameter_count, train_mse, test_mse, train_loss, test_loss, roc_auc,
    /// knn_dat, error, wall_seconds.
    pub fn write_runs_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(RUNS_HEADER)?;
        for (k, status) in &self.runs {
            let mut rec = vec![
                k.scenario_hash.clone(),
                self.scenario.clone(),
                k.hidden_dim.to_string(),
                k.bottleneck_dim.to_string(),
                k.epochs.to_string(),
                k.n_train.to_string(),
                k.seed.to_string(),
            ];
            match status {
                Ok(r) => rec.extend([
                    "ok".to_string(),
                    r.parameter_count.to_string(),
                    r.record.final_train_mse.to_string(),
                    r.record.final_test_mse.to_string(),
                    r.record.final_train_loss().to_string(),
                    r.record.final_test_loss().to_string(),
                    r.roc_auc.map(|v| v.to_string()).unwrap_or_default(),
                    r.knn_dat.map(|v| v.to_string()).unwrap_or_default(),
                    String::new(),
                    format!("{:.3}", r.record.wall_seconds),
                ]),
                Err(e) => {
                    rec.push("failed".into());
                    rec.extend(std::iter::repeat_n(String::new(), 7));
                    rec.push(e.clone());
                    rec.push(String::new());
                }
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Bottleneck embeddings of every successful run that recorded them:
    /// `seed, hidden_dim, bottleneck_dim, split, batch, z0..`.
    pub fn write_embeddings_csv<W: Write>(&self, writer: W, batches: (&[u32], &[u32])) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header_written = false;
        for (k, status) in &self.runs {
            let Ok(RunResult { record, .. }) = status else { continue };
            let Some((tr, te)) = &record.embeddings else { continue };
            if !header_written {
                let mut header: Vec<String> = ["seed", "hidden_dim", "bottleneck_dim", "split", "batch"]
                    .iter()
                    .map(|s| s.to_string())
                    .collect();
                header.extend((0..tr.ncols()).map(|j| format!("z{j}")));
                w.write_record(&header)?;
                header_written = true;
            }
            for (split, emb, labels) in [("train", tr, batches.0), ("test", te, batches.1)] {
                for (i, row) in emb.outer_iter().enumerate() {
                    let mut rec = vec![
                        k.seed.to_string(),
                        k.hidden_dim.to_string(),
                        k.bottleneck_dim.to_string(),
                        split.to_string(),
                        labels.get(i).copied().unwrap_or(0).to_string(),
                    ];
                    rec.extend(row.iter().map(|v| v.to_string()));
                    w.write_record(&rec)?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

pub const RUNS_HEADER: [&str; 17] = [
    "scenario_hash",
    "scenario",
    "hidden_dim",
    "bottleneck_dim",
    "epochs",
    "n_train",
    "seed",
    "status",
    "parameter_count",
    "train_mse",
    "test_mse",
    "train_loss",
    "test_loss",
    "roc_auc",
    "knn_dat",
    "error",
    "wall_seconds",
];

/// Per-seed data, built once and shared by every run of that seed.
struct SeedData {
    train: Dataset,
    test: Dataset,
    /// Clean test rows plus fresh anomalies, for anomaly scenarios.
    scoring: Option<Dataset>,
}

fn seed_data(source: &DataSource, seed: u64) -> Result<SeedData> {
    match source {
        DataSource::Synthetic { spec, scenario } => {
            let spec = SubspaceSpec { seed, ..*spec };
            let data = build_scenario(&spec, scenario)?;
            let scoring = match scenario {
                Scenario::Anomaly { .. } => Some(anomaly_test_set(&spec, scenario, &data.test)?),
                _ => None,
            };
            Ok(SeedData {
                train: data.train,
                test: data.test,
                scoring,
            })
        }
        DataSource::Prepared { train, test, .. } => {
            let has_anomaly = test.flags.iter().any(|f| *f == crate::datagen::SampleFlag::Anomaly);
            Ok(SeedData {
                train: (**train).clone(),
                test: (**test).clone(),
                scoring: has_anomaly.then(|| (**test).clone()),
            })
        }
    }
}

fn execute(spec: &SweepSpec, data: &SeedData, key: &RunKey) -> Result<RunResult> {
    let arch = Architecture::new(data.train.n_features(), key.hidden_dim, key.bottleneck_dim)?
        .with_activation(spec.activation);
    let train_set = if key.n_train < data.train.len() {
        data.train.prefix(key.n_train)?
    } else {
        data.train.clone()
    };
    let cfg = TrainConfig {
        seed: key.seed,
        record_embeddings: spec.record_embeddings,
        ..spec.train
    };
    let mut model = init_model(&arch, key.seed)?;
    let record = train(&mut model, &train_set, &data.test, &cfg)?;

    let roc_auc = match &data.scoring {
        Some(scoring) => {
            let labels: Vec<Label> = scoring.flags.iter().map(|&f| Label::from(f)).collect();
            Some(roc_auc(&reconstruction_scores(&model, scoring.samples.view(), &labels)?)?)
        }
        None => None,
    };
    let knn = match &record.embeddings {
        Some((tr, te)) => {
            let mut labels = train_set.batch_label.clone();
            labels.extend(&data.test.batch_label);
            let distinct: BTreeSet<u32> = labels.iter().copied().collect();
            if distinct.len() > 1 {
                let all = ndarray::concatenate(Axis(0), &[tr.view(), te.view()])
                    .map_err(|e| Error::invalid(e.to_string()))?;
                Some(knn_dat(all.view(), &labels, &Default::default())?)
            } else {
                None
            }
        }
        None => None,
    };
    Ok(RunResult {
        parameter_count: arch.parameter_count(),
        record,
        roc_auc,
        knn_dat: knn,
    })
}

/// Runs every `(axis value, seed)` of `spec` and folds the records into a
/// curve. `on_done(done, total, key, status)` observes completions.
pub fn run_sweep(
    spec: &SweepSpec,
    parallelism: usize,
    mut on_done: impl FnMut(usize, usize, &RunKey, &RunStatus),
) -> Result<SweepOutcome> {
    spec.validate()?;
    let keys = spec.run_keys()?;
    let total = keys.len();

    // Dataset realisations are built lazily per seed and shared; a failure
    // to build one fails all of that seed's runs.
    let cache: BTreeMap<u64, std::sync::OnceLock<std::result::Result<Arc<SeedData>, String>>> =
        spec.seeds.iter().map(|&s| (s, std::sync::OnceLock::new())).collect();
    let work = |key: &RunKey| -> RunStatus {
        let data = cache[&key.seed]
            .get_or_init(|| seed_data(&spec.source, key.seed).map(Arc::new).map_err(|e| e.to_string()))
            .clone()?;
        execute(spec, &data, key).map_err(|e| e.to_string())
    };
    let mut done = 0;
    let runs = schedule(keys, parallelism, work, |k, r| {
        done += 1;
        on_done(done, total, k, r);
    })?;
    let curve = aggregate(spec, &runs)?;
    Ok(SweepOutcome {
        scenario: spec.source.scenario_name(),
        axis: spec.axis.name().to_string(),
        runs,
        curve,
    })
}

pub fn run_model_wise(spec: &SweepSpec, parallelism: usize) -> Result<SweepOutcome> {
    match spec.axis {
        SweepAxis::HiddenDim(_) | SweepAxis::BottleneckDim(_) | SweepAxis::Grid { .. } => {
            run_sweep(spec, parallelism, |_, _, _, _| {})
        }
        _ => Err(Error::invalid("model-wise sweeps need a hidden, bottleneck or grid axis")),
    }
}

pub fn run_epoch_wise(spec: &SweepSpec, parallelism: usize) -> Result<SweepOutcome> {
    match spec.axis {
        SweepAxis::Epochs => run_sweep(spec, parallelism, |_, _, _, _| {}),
        _ => Err(Error::invalid("epoch-wise sweeps need the epochs axis")),
    }
}

pub fn run_sample_wise(spec: &SweepSpec, parallelism: usize) -> Result<SweepOutcome> {
    match spec.axis {
        SweepAxis::NTrain(_) => run_sweep(spec, parallelism, |_, _, _, _| {}),
        _ => Err(Error::invalid("sample-wise sweeps need the n_train axis")),
    }
}

/// Folds keyed records into a curve. Failed runs are left out of their
/// cell; a cell with no successful run is dropped.
pub fn aggregate(spec: &SweepSpec, runs: &BTreeMap<RunKey, RunStatus>) -> Result<CurveTable> {
    // (x, x2) -> per-seed (train, test, auc), seeds in key order.
    type Cell = Vec<(f64, f64, Option<f64>)>;
    let mut cells: BTreeMap<(u64, u64), Cell> = BTreeMap::new();
    let ord = |v: f64| v.to_bits();
    let mut push = |x: f64, x2: f64, point: (f64, f64, Option<f64>)| {
        cells.entry((ord(x), ord(x2))).or_default().push(point);
    };

    for (k, status) in runs {
        let Ok(r) = status else { continue };
        let rec = &r.record;
        match &spec.axis {
            SweepAxis::Epochs => {
                let tr = rec.normalized_train_curve();
                let te = rec.normalized_test_curve();
                for (i, &e) in rec.eval_epochs.iter().enumerate() {
                    push(e as f64, f64::NAN, (tr[i], te[i], None));
                }
            }
            axis => {
                let (x, x2) = match axis {
                    SweepAxis::HiddenDim(_) => (k.hidden_dim as f64, f64::NAN),
                    SweepAxis::BottleneckDim(_) => (k.bottleneck_dim as f64, f64::NAN),
                    SweepAxis::Grid { .. } => (k.hidden_dim as f64, k.bottleneck_dim as f64),
                    _ => (k.n_train as f64, f64::NAN),
                };
                push(x, x2, (rec.final_train_loss(), rec.final_test_loss(), r.roc_auc));
            }
        }
    }

    let grid = matches!(spec.axis, SweepAxis::Grid { .. });
    let mut rows: Vec<CurveRow> = cells
        .into_iter()
        .map(|((x, x2), pts)| {
            let tr: Vec<f64> = pts.iter().map(|p| p.0).collect();
            let te: Vec<f64> = pts.iter().map(|p| p.1).collect();
            let auc: Option<Vec<f64>> = pts.iter().map(|p| p.2).collect();
            let (mean_train, stderr_train) = mean_stderr(&tr);
            let (mean_test, stderr_test) = mean_stderr(&te);
            let auc = auc.map(|a| mean_stderr(&a));
            CurveRow {
                x: f64::from_bits(x),
                x2: grid.then(|| f64::from_bits(x2)),
                mean_train,
                mean_test,
                stderr_train,
                stderr_test,
                n_seeds: pts.len(),
                mean_roc_auc: auc.map(|a| a.0),
                stderr_roc_auc: auc.map(|a| a.1),
            }
        })
        .collect();
    // Bit-pattern order equals numeric order for the non-negative axes used
    // here, but sort explicitly to not depend on that.
    rows.sort_by(|a, b| {
        a.x.total_cmp(&b.x)
            .then(a.x2.unwrap_or(0.0).total_cmp(&b.x2.unwrap_or(0.0)))
    });
    let (x_name, x2_name) = match &spec.axis {
        SweepAxis::Grid { .. } => ("hidden_dim".to_string(), Some("bottleneck_dim".to_string())),
        axis => (axis.name().to_string(), None),
    };
    Ok(CurveTable { x_name, x2_name, rows })
}

/// Grid curve as a `hidden x bottleneck` matrix of mean test loss; missing
/// cells are NaN.
pub fn grid_matrix(spec: &SweepSpec, curve: &CurveTable) -> Option<Array2<f64>> {
    let SweepAxis::Grid { hidden, bottleneck } = &spec.axis else {
        return None;
    };
    let mut m = Array2::from_elem((hidden.len(), bottleneck.len()), f64::NAN);
    for r in &curve.rows {
        let i = hidden.iter().position(|&h| h as f64 == r.x)?;
        let j = bottleneck.iter().position(|&b| Some(b as f64) == r.x2)?;
        m[[i, j]] = r.mean_test;
    }
    Some(m)
}

/// Reduced-size defaults: 2000/2000 rows, 100 epochs, hidden 4..200 step 8,
/// three seeds.
pub fn desk_profile(scenario: Scenario) -> SweepSpec {
    SweepSpec {
        source: DataSource::Synthetic {
            spec: SubspaceSpec {
                latent_dim: 20,
                ambient_dim: 50,
                n_train: 2000,
                n_test: 2000,
                seed: 0,
            },
            scenario,
        },
        axis: SweepAxis::HiddenDim((4..=200).step_by(8).collect()),
        hidden_dim: 100,
        bottleneck_dim: 25,
        activation: Activation::Relu,
        train: TrainConfig {
            epochs: 100,
            ..TrainConfig::synthetic(0)
        },
        seeds: vec![0, 1, 2],
        record_embeddings: false,
    }
}

/// Full-size defaults: 5000/10000 rows, 200 epochs, hidden 4..500 step 4,
/// five seeds.
pub fn paper_profile(scenario: Scenario) -> SweepSpec {
    SweepSpec {
        source: DataSource::Synthetic {
            spec: SubspaceSpec::paper(0),
            scenario,
        },
        axis: SweepAxis::HiddenDim((4..=500).step_by(4).collect()),
        hidden_dim: 100,
        bottleneck_dim: 25,
        activation: Activation::Relu,
        train: TrainConfig::synthetic(0),
        seeds: (0..5).collect(),
        record_embeddings: false,
    }
}
