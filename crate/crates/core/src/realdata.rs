//! Ingestion of external tabular data (expression matrices, attribute
//! tables) and per-sample noising for real rows.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::seq::index;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::datagen::{db_to_linear, fraction_count, Dataset, SampleFlag};
use crate::error::{Error, Result};
use crate::rng::{substream, Stream};

/// Which columns of the file are features.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FeatureColumns {
    /// Every column that is not the batch or label column.
    #[default]
    All,
    Named(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvSchema {
    #[serde(default)]
    pub features: FeatureColumns,
    #[serde(default)]
    pub batch_column: Option<String>,
    #[serde(default)]
    pub label_column: Option<String>,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
    /// Abort on the first bad row instead of skipping it.
    #[serde(default = "default_strict")]
    pub strict: bool,
}

fn default_delimiter() -> char {
    ','
}

fn default_strict() -> bool {
    true
}

impl Default for CsvSchema {
    fn default() -> Self {
        CsvSchema {
            features: FeatureColumns::All,
            batch_column: None,
            label_column: None,
            delimiter: ',',
            strict: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TabularDataset {
    pub matrix: Array2<f64>,
    /// Dense ids `0..batch_names.len()` in order of first appearance.
    pub batch_label: Vec<u32>,
    pub batch_names: Vec<String>,
    pub anomaly_flag: Option<Vec<bool>>,
    pub feature_names: Vec<String>,
}

/// Result of [`load_csv`]: the dataset plus the rows that were dropped in
/// non-strict mode.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadReport {
    pub dataset: TabularDataset,
    /// 1-based file line numbers of skipped rows.
    pub skipped_lines: Vec<u64>,
}

impl LoadReport {
    pub fn skipped(&self) -> usize {
        self.skipped_lines.len()
    }
}

impl TabularDataset {
    pub fn new(
        matrix: Array2<f64>,
        feature_names: Vec<String>,
        batch_names: Vec<String>,
        batch_label: Vec<u32>,
        anomaly_flag: Option<Vec<bool>>,
    ) -> Result<Self> {
        let ds = TabularDataset {
            matrix,
            batch_label,
            batch_names,
            anomaly_flag,
            feature_names,
        };
        ds.validate()?;
        Ok(ds)
    }

    /// Single batch named `"0"`, no labels.
    pub fn from_matrix(matrix: Array2<f64>) -> Self {
        let rows = matrix.nrows();
        let feature_names = (0..matrix.ncols()).map(|j| format!("f{j}")).collect();
        TabularDataset {
            matrix,
            batch_label: vec![0; rows],
            batch_names: vec!["0".into()],
            anomaly_flag: None,
            feature_names,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (rows, cols) = self.matrix.dim();
        if self.feature_names.len() != cols {
            return Err(Error::shape(cols, self.feature_names.len()));
        }
        if self.batch_label.len() != rows {
            return Err(Error::shape(rows, self.batch_label.len()));
        }
        if let Some(flags) = &self.anomaly_flag {
            if flags.len() != rows {
                return Err(Error::shape(rows, flags.len()));
            }
        }
        if self.batch_label.iter().any(|&b| b as usize >= self.batch_names.len()) {
            return Err(Error::Schema("batch id outside the batch name table".into()));
        }
        if self.matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::Schema("matrix contains non-finite values".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.nrows() == 0
    }

    pub fn n_features(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn batch_id(&self, name: &str) -> Option<u32> {
        self.batch_names.iter().position(|b| b == name).map(|i| i as u32)
    }

    /// Rows in the given order. Batch ids are kept as-is (the name table is
    /// shared), so the result may use a sparse subset of ids.
    pub fn select_rows(&self, rows: &[usize]) -> TabularDataset {
        TabularDataset {
            matrix: self.matrix.select(Axis(0), rows),
            batch_label: rows.iter().map(|&i| self.batch_label[i]).collect(),
            batch_names: self.batch_names.clone(),
            anomaly_flag: self
                .anomaly_flag
                .as_ref()
                .map(|f| rows.iter().map(|&i| f[i]).collect()),
            feature_names: self.feature_names.clone(),
        }
    }

    pub fn select_columns(&self, cols: &[usize]) -> TabularDataset {
        TabularDataset {
            matrix: self.matrix.select(Axis(1), cols),
            batch_label: self.batch_label.clone(),
            batch_names: self.batch_names.clone(),
            anomaly_flag: self.anomaly_flag.clone(),
            feature_names: cols.iter().map(|&j| self.feature_names[j].clone()).collect(),
        }
    }

    /// Training view: anomaly rows flagged, batch ids carried over.
    pub fn to_dataset(&self) -> Dataset {
        let flags = match &self.anomaly_flag {
            Some(f) => f
                .iter()
                .map(|&a| if a { SampleFlag::Anomaly } else { SampleFlag::Clean })
                .collect(),
            None => vec![SampleFlag::Clean; self.len()],
        };
        Dataset {
            samples: self.matrix.clone(),
            flags,
            noisy_feature_mask: None,
            batch_label: self.batch_label.clone(),
        }
    }

    /// Writes the same layout that [`load_csv`] reads: feature columns, then
    /// `batch`, then `anomaly` when present.
    pub fn write_csv<W: Write>(&self, writer: W, delimiter: char) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .delimiter(delimiter_byte(delimiter)?)
            .from_writer(writer);
        let mut header: Vec<String> = self.feature_names.clone();
        header.push("batch".into());
        if self.anomaly_flag.is_some() {
            header.push("anomaly".into());
        }
        w.write_record(&header)?;
        let mut record = Vec::with_capacity(header.len());
        for (i, row) in self.matrix.outer_iter().enumerate() {
            record.clear();
            record.extend(row.iter().map(|v| v.to_string()));
            record.push(self.batch_names[self.batch_label[i] as usize].clone());
            if let Some(flags) = &self.anomaly_flag {
                record.push(if flags[i] { "1".into() } else { "0".into() });
            }
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path, delimiter: char) -> Result<()> {
        self.write_csv(File::create(path)?, delimiter)
    }

    /// Schema that reads back what [`TabularDataset::write_csv`] writes.
    pub fn export_schema(&self, delimiter: char) -> CsvSchema {
        CsvSchema {
            features: FeatureColumns::Named(self.feature_names.clone()),
            batch_column: Some("batch".into()),
            label_column: self.anomaly_flag.as_ref().map(|_| "anomaly".into()),
            delimiter,
            strict: true,
        }
    }
}

fn delimiter_byte(c: char) -> Result<u8> {
    if c.is_ascii() {
        Ok(c as u8)
    } else {
        Err(Error::invalid(format!("delimiter '{c}' is not a single ASCII character")))
    }
}

fn parse_flag(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "anomaly" => Some(true),
        "0" | "-1" | "false" | "no" | "clean" | "normal" => Some(false),
        _ => None,
    }
}

pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<LoadReport> {
    let file = File::open(path).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
    read_csv(file, schema, path)
}

/// Reader-based variant of [`load_csv`]; `origin` only labels errors.
pub fn read_csv<R: Read>(reader: R, schema: &CsvSchema, origin: &Path) -> Result<LoadReport> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(delimiter_byte(schema.delimiter)?)
        .flexible(true)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("{}: missing column '{name}'", origin.display())))
    };

    let batch_col = schema.batch_column.as_deref().map(find).transpose()?;
    let label_col = schema.label_column.as_deref().map(find).transpose()?;
    let feature_cols: Vec<usize> = match &schema.features {
        FeatureColumns::All => (0..header.len())
            .filter(|&j| Some(j) != batch_col && Some(j) != label_col)
            .collect(),
        FeatureColumns::Named(names) => names.iter().map(|n| find(n)).collect::<Result<_>>()?,
    };
    if feature_cols.is_empty() {
        return Err(Error::Schema(format!("{}: no feature columns", origin.display())));
    }

    let mut values = Vec::new();
    let mut batch_names: Vec<String> = Vec::new();
    let mut batch_label = Vec::new();
    let mut flags = Vec::new();
    let mut skipped_lines = Vec::new();
    let mut rows = 0usize;

    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let parsed = (|| -> std::result::Result<(Vec<f64>, Option<String>, Option<bool>), String> {
            if record.len() != header.len() {
                return Err(format!("expected {} fields, found {}", header.len(), record.len()));
            }
            let mut row = Vec::with_capacity(feature_cols.len());
            for &j in &feature_cols {
                let raw = record[j].trim();
                if raw.is_empty() {
                    return Err(format!("missing value in column '{}'", header[j]));
                }
                let v: f64 = raw
                    .parse()
                    .map_err(|_| format!("cannot parse '{raw}' in column '{}'", header[j]))?;
                if !v.is_finite() {
                    return Err(format!("non-finite value in column '{}'", header[j]));
                }
                row.push(v);
            }
            let batch = batch_col.map(|j| record[j].trim().to_string());
            let flag = match label_col {
                Some(j) => Some(
                    parse_flag(&record[j]).ok_or_else(|| format!("unrecognised label '{}'", &record[j]))?,
                ),
                None => None,
            };
            Ok((row, batch, flag))
        })();

        match parsed {
            Ok((row, batch, flag)) => {
                values.extend(row);
                let name = batch.unwrap_or_else(|| "0".to_string());
                let id = match batch_names.iter().position(|b| *b == name) {
                    Some(i) => i,
                    None => {
                        batch_names.push(name);
                        batch_names.len() - 1
                    }
                };
                batch_label.push(id as u32);
                if let Some(f) = flag {
                    flags.push(f);
                }
                rows += 1;
            }
            Err(msg) if schema.strict => {
                return Err(Error::Row {
                    path: PathBuf::from(origin),
                    line,
                    msg,
                })
            }
            Err(_) => skipped_lines.push(line),
        }
    }

    if batch_names.is_empty() {
        batch_names.push("0".into());
    }
    let matrix = Array2::from_shape_vec((rows, feature_cols.len()), values).map_err(|e| Error::Schema(e.to_string()))?;
    let dataset = TabularDataset {
        matrix,
        batch_label,
        batch_names,
        anomaly_flag: label_col.map(|_| flags),
        feature_names: feature_cols.iter().map(|&j| header[j].clone()).collect(),
    };
    Ok(LoadReport {
        dataset,
        skipped_lines,
    })
}

/// Keeps the `k` highest-variance columns, in their original order. Ties
/// rank the lower column index first.
pub fn select_top_features(ds: &TabularDataset, k: usize) -> Result<TabularDataset> {
    let n = ds.n_features();
    if k == 0 || k > n {
        return Err(Error::invalid(format!("cannot keep {k} of {n} features")));
    }
    let var = column_variances(ds);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| var[b].total_cmp(&var[a]).then(a.cmp(&b)));
    let mut keep = order[..k].to_vec();
    keep.sort_unstable();
    Ok(ds.select_columns(&keep))
}

/// Sample variance (n - 1 denominator) of every column; zero for fewer than
/// two rows.
pub fn column_variances(ds: &TabularDataset) -> Vec<f64> {
    let rows = ds.len();
    if rows < 2 {
        return vec![0.0; ds.n_features()];
    }
    ds.matrix
        .axis_iter(Axis(1))
        .map(|col| {
            let mean = col.sum() / rows as f64;
            col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (rows - 1) as f64
        })
        .collect()
}

/// `x + (|x| / |v|) v / theta` for a standard-normal direction `v`, so the
/// added noise has norm exactly `|x| / theta`. `None` for a zero row.
pub fn real_noise_vector<R: rand::Rng + ?Sized>(x: ArrayView1<'_, f64>, snr_db: f64, rng: &mut R) -> Result<Option<Array1<f64>>> {
    let support: Vec<usize> = (0..x.len()).collect();
    noise_on_support(x, &support, snr_db, rng)
}

fn noise_on_support<R: rand::Rng + ?Sized>(
    x: ArrayView1<'_, f64>,
    support: &[usize],
    snr_db: f64,
    rng: &mut R,
) -> Result<Option<Array1<f64>>> {
    let theta = db_to_linear(snr_db)?;
    let x_norm = x.dot(&x).sqrt();
    if x_norm == 0.0 || support.is_empty() {
        return Ok(None);
    }
    let mut v: Vec<f64> = support.iter().map(|_| rng.sample(StandardNormal)).collect();
    let mut v_norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    // A zero draw has probability zero but would divide by zero.
    while v_norm == 0.0 {
        v = support.iter().map(|_| rng.sample(StandardNormal)).collect();
        v_norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    }
    let scale = x_norm / (v_norm * theta);
    let mut out = x.to_owned();
    for (&j, vj) in support.iter().zip(&v) {
        out[j] += scale * vj;
    }
    Ok(Some(out))
}

/// Outcome of noising a real matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct RealNoiseOutcome {
    pub dataset: Dataset,
    /// Rows that were selected for noise but have zero norm.
    pub skipped_zero_rows: Vec<usize>,
}

/// Each row is noised independently with probability `p` at per-sample SNR
/// `snr_db`.
pub fn apply_real_sample_noise(ds: &TabularDataset, p: f64, snr_db: f64, seed: u64) -> Result<RealNoiseOutcome> {
    check_p(p)?;
    let mut out = ds.to_dataset();
    let mut rng = substream(seed, Stream::RealNoise);
    let support: Vec<usize> = (0..ds.n_features()).collect();
    let mut skipped = Vec::new();
    for i in 0..out.len() {
        let u: f64 = rng.random();
        if u >= p {
            continue;
        }
        match noise_on_support(ds.matrix.row(i), &support, snr_db, &mut rng)? {
            Some(row) => {
                out.samples.row_mut(i).assign(&row);
                out.flags[i] = SampleFlag::Noisy;
            }
            None => skipped.push(i),
        }
    }
    Ok(RealNoiseOutcome {
        dataset: out,
        skipped_zero_rows: skipped,
    })
}

/// A fixed `floor(n p)` subset of columns receives noise in every row; the
/// noise norm is `|x| / theta` over the whole row.
pub fn apply_real_feature_noise(ds: &TabularDataset, p: f64, snr_db: f64, seed: u64) -> Result<RealNoiseOutcome> {
    check_p(p)?;
    let n = ds.n_features();
    let k = fraction_count(n, p);
    let mut mask_rng = substream(seed, Stream::FeatureMask);
    let mut support = index::sample(&mut mask_rng, n, k).into_vec();
    support.sort_unstable();
    let mut mask = vec![false; n];
    support.iter().for_each(|&j| mask[j] = true);

    let mut out = ds.to_dataset();
    let mut rng = substream(seed, Stream::RealNoise);
    let mut skipped = Vec::new();
    if k > 0 {
        for i in 0..out.len() {
            match noise_on_support(ds.matrix.row(i), &support, snr_db, &mut rng)? {
                Some(row) => {
                    out.samples.row_mut(i).assign(&row);
                    out.flags[i] = SampleFlag::Noisy;
                }
                None => skipped.push(i),
            }
        }
    }
    out.noisy_feature_mask = Some(mask);
    Ok(RealNoiseOutcome {
        dataset: out,
        skipped_zero_rows: skipped,
    })
}

fn check_p(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::invalid(format!("probability {p} outside [0, 1]")))
    }
}

/// Source rows and the remaining rows grouped by batch id, order preserved.
pub fn split_source_target(
    ds: &TabularDataset,
    source_batch: u32,
) -> Result<(TabularDataset, BTreeMap<u32, TabularDataset>)> {
    if !ds.batch_label.contains(&source_batch) {
        return Err(Error::invalid(format!("batch {source_batch} has no rows")));
    }
    let mut groups: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, &b) in ds.batch_label.iter().enumerate() {
        groups.entry(b).or_default().push(i);
    }
    let source_rows = groups.remove(&source_batch).unwrap_or_default();
    let targets = groups
        .into_iter()
        .map(|(b, rows)| (b, ds.select_rows(&rows)))
        .collect();
    Ok((ds.select_rows(&source_rows), targets))
}

/// Seeded shuffle, then the first `n_train` rows train and the rest test.
pub fn train_test_split(ds: &TabularDataset, n_train: usize, seed: u64) -> Result<(TabularDataset, TabularDataset)> {
    if n_train == 0 || n_train >= ds.len() {
        return Err(Error::invalid(format!(
            "n_train {n_train} must leave at least one row of {} for testing",
            ds.len()
        )));
    }
    let mut rng = substream(seed, Stream::Shuffle);
    let order = index::sample(&mut rng, ds.len(), ds.len()).into_vec();
    Ok((ds.select_rows(&order[..n_train]), ds.select_rows(&order[n_train..])))
}
