//! Linear-subspace data and its four contamination models.
//!
//! Clean samples are `theta * D z` with `z ~ N(0, I_d)` and `D` an `n x d`
//! matrix of standard normals. The scale `theta` sets the amplitude ratio
//! (in dB) between signal and the unit-variance contamination.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array2, Axis};
use rand::seq::index;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{substream, Rng, Stream};

/// `10^(db/20)`: amplitude ratio for a value in decibels.
pub fn db_to_linear(db: f64) -> Result<f64> {
    if !db.is_finite() {
        return Err(Error::invalid(format!("decibel value must be finite, got {db}")));
    }
    Ok(10f64.powf(db / 20.0))
}

/// Signal scale for whole-sample noise: `SNR / sqrt(d)`.
pub fn theta_sample_noise(snr_db: f64, d: usize) -> Result<f64> {
    if d == 0 {
        return Err(Error::invalid("latent dimension must be positive"));
    }
    Ok(db_to_linear(snr_db)? / (d as f64).sqrt())
}

/// Signal scale when only a fraction `p` of the features carries noise:
/// `sqrt(p / d) * SNR`.
pub fn theta_feature_noise(snr_db: f64, d: usize, p: f64) -> Result<f64> {
    if d == 0 {
        return Err(Error::invalid("latent dimension must be positive"));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::invalid(format!(
            "feature-noise probability must be in (0, 1], got {p}"
        )));
    }
    Ok((p / d as f64).sqrt() * db_to_linear(snr_db)?)
}

/// Signal scale for data projected through an unnormalised shifted matrix
/// `D + s D'`: `SNR / sqrt((s^2 + 1) d)`.
pub fn theta_shifted(snr_db: f64, d: usize, s: f64) -> Result<f64> {
    if d == 0 {
        return Err(Error::invalid("latent dimension must be positive"));
    }
    if !(s >= 0.0) || !s.is_finite() {
        return Err(Error::invalid(format!("shift scale must be a finite non-negative number, got {s}")));
    }
    Ok(db_to_linear(snr_db)? / ((s * s + 1.0) * d as f64).sqrt())
}

/// `floor(count * p)`, robust to `p` values such as 0.7 that are not exactly
/// representable.
pub fn fraction_count(count: usize, p: f64) -> usize {
    ((count as f64) * p + 1e-9).floor() as usize
}

fn check_probability(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::invalid(format!("probability must be in [0, 1], got {p}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubspaceSpec {
    pub latent_dim: usize,
    pub ambient_dim: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
}

impl SubspaceSpec {
    pub fn new(
        latent_dim: usize,
        ambient_dim: usize,
        n_train: usize,
        n_test: usize,
        seed: u64,
    ) -> Result<Self> {
        let spec = SubspaceSpec {
            latent_dim,
            ambient_dim,
            n_train,
            n_test,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// d=20, n=50, 5000 training and 10000 test samples.
    pub fn paper(seed: u64) -> Self {
        SubspaceSpec {
            latent_dim: 20,
            ambient_dim: 50,
            n_train: 5000,
            n_test: 10000,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 {
            return Err(Error::invalid("latent_dim must be positive"));
        }
        if self.ambient_dim <= self.latent_dim {
            return Err(Error::invalid(format!(
                "ambient_dim ({}) must exceed latent_dim ({})",
                self.ambient_dim, self.latent_dim
            )));
        }
        if self.n_train == 0 || self.n_test == 0 {
            return Err(Error::invalid("n_train and n_test must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionKind {
    Base,
    Perturbation,
    Shifted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionMatrix {
    entries: Array2<f64>,
    kind: ProjectionKind,
    shift_scale: f64,
}

impl ProjectionMatrix {
    pub fn entries(&self) -> &Array2<f64> {
        &self.entries
    }

    pub fn kind(&self) -> ProjectionKind {
        self.kind
    }

    pub fn shift_scale(&self) -> f64 {
        self.shift_scale
    }

    pub fn ambient_dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn latent_dim(&self) -> usize {
        self.entries.ncols()
    }

    /// Rows `z_i^T D^T`, i.e. every latent row projected to ambient space.
    pub fn project(&self, latents: &Array2<f64>) -> Result<Array2<f64>> {
        if latents.ncols() != self.latent_dim() {
            return Err(Error::shape(
                format!("{} latent columns", self.latent_dim()),
                format!("{} columns", latents.ncols()),
            ));
        }
        Ok(latents.dot(&self.entries.t()))
    }
}

fn standard_normal_matrix(rows: usize, cols: usize, rng: &mut Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.sample(StandardNormal))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

/// i.i.d. standard-normal latent rows for one split. Train and test use
/// independent streams so their latents are disjoint draws.
pub fn sample_latents(spec: &SubspaceSpec, split: Split) -> Result<Array2<f64>> {
    spec.validate()?;
    let (rows, stream) = match split {
        Split::Train => (spec.n_train, Stream::TrainLatents),
        Split::Test => (spec.n_test, Stream::TestLatents),
    };
    let mut rng = substream(spec.seed, stream);
    Ok(standard_normal_matrix(rows, spec.latent_dim, &mut rng))
}

/// Base projection `D` with `D_ij ~ N(0, 1)`.
pub fn sample_projection(spec: &SubspaceSpec, seed_offset: u64) -> Result<ProjectionMatrix> {
    spec.validate()?;
    let mut rng = substream(spec.seed.wrapping_add(seed_offset), Stream::Projection);
    Ok(ProjectionMatrix {
        entries: standard_normal_matrix(spec.ambient_dim, spec.latent_dim, &mut rng),
        kind: ProjectionKind::Base,
        shift_scale: 0.0,
    })
}

/// `(D + s D') / sqrt(1 + s^2)` with a fresh standard-normal `D'`.
pub fn make_shifted_projection(base: &ProjectionMatrix, s: f64, seed: u64) -> Result<ProjectionMatrix> {
    if base.kind != ProjectionKind::Base {
        return Err(Error::invalid("shifted projection must start from a base matrix"));
    }
    if !(s >= 0.0) || !s.is_finite() {
        return Err(Error::invalid(format!("shift scale must be a finite non-negative number, got {s}")));
    }
    let mut rng = substream(seed, Stream::Perturbation);
    let perturbation = standard_normal_matrix(base.ambient_dim(), base.latent_dim(), &mut rng);
    let norm = (1.0 + s * s).sqrt();
    let mut entries = &base.entries + &(perturbation * s);
    entries /= norm;
    Ok(ProjectionMatrix {
        entries,
        kind: ProjectionKind::Shifted,
        shift_scale: s,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    Sample,
    Feature,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub mode: NoiseMode,
    pub probability: f64,
    pub snr_db: f64,
    pub theta: f64,
    pub linear_snr: f64,
}

impl NoiseSpec {
    /// Derives `theta` for latent dimension `d`. Feature noise with `p = 0`
    /// adds nothing, so `theta` falls back to the whole-sample formula.
    pub fn new(mode: NoiseMode, probability: f64, snr_db: f64, d: usize) -> Result<Self> {
        check_probability(probability)?;
        let linear_snr = db_to_linear(snr_db)?;
        let theta = match mode {
            NoiseMode::Feature if probability > 0.0 => theta_feature_noise(snr_db, d, probability)?,
            _ => theta_sample_noise(snr_db, d)?,
        };
        Ok(NoiseSpec {
            mode,
            probability,
            snr_db,
            theta,
            linear_snr,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnomalySpec {
    pub probability: f64,
    pub sar_db: f64,
    pub theta: f64,
}

impl AnomalySpec {
    pub fn new(probability: f64, sar_db: f64, d: usize) -> Result<Self> {
        check_probability(probability)?;
        Ok(AnomalySpec {
            probability,
            sar_db,
            theta: theta_sample_noise(sar_db, d)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleFlag {
    Clean,
    Noisy,
    Anomaly,
}

impl SampleFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            SampleFlag::Clean => "clean",
            SampleFlag::Noisy => "noisy",
            SampleFlag::Anomaly => "anomaly",
        }
    }
}

impl std::str::FromStr for SampleFlag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "clean" => Ok(SampleFlag::Clean),
            "noisy" => Ok(SampleFlag::Noisy),
            "anomaly" => Ok(SampleFlag::Anomaly),
            other => Err(Error::invalid(format!("unknown sample flag '{other}'"))),
        }
    }
}

/// Samples plus per-row bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Array2<f64>,
    pub flags: Vec<SampleFlag>,
    /// Features that received noise (feature-noise mode only); shared by
    /// every row.
    pub noisy_feature_mask: Option<Vec<bool>>,
    pub batch_label: Vec<u32>,
}

impl Dataset {
    /// All rows clean, batch 0.
    pub fn clean(samples: Array2<f64>) -> Self {
        let rows = samples.nrows();
        Dataset {
            samples,
            flags: vec![SampleFlag::Clean; rows],
            noisy_feature_mask: None,
            batch_label: vec![0; rows],
        }
    }

    pub fn with_batch(mut self, batch: u32) -> Self {
        self.batch_label.iter_mut().for_each(|b| *b = batch);
        self
    }

    pub fn len(&self) -> usize {
        self.samples.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.nrows() == 0
    }

    pub fn n_features(&self) -> usize {
        self.samples.ncols()
    }

    pub fn count(&self, flag: SampleFlag) -> usize {
        self.flags.iter().filter(|&&f| f == flag).count()
    }

    /// First `rows` samples with their metadata.
    pub fn prefix(&self, rows: usize) -> Result<Dataset> {
        if rows > self.len() {
            return Err(Error::invalid(format!(
                "prefix of {rows} rows requested from a dataset of {}",
                self.len()
            )));
        }
        Ok(Dataset {
            samples: self.samples.slice(ndarray::s![..rows, ..]).to_owned(),
            flags: self.flags[..rows].to_vec(),
            noisy_feature_mask: self.noisy_feature_mask.clone(),
            batch_label: self.batch_label[..rows].to_vec(),
        })
    }

    /// Rows in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            samples: self.samples.select(Axis(0), rows),
            flags: rows.iter().map(|&r| self.flags[r]).collect(),
            noisy_feature_mask: self.noisy_feature_mask.clone(),
            batch_label: rows.iter().map(|&r| self.batch_label[r]).collect(),
        }
    }

    /// CSV with header `f0..f{n-1},flag,batch`. Values are written in
    /// shortest round-trip form.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = (0..self.n_features()).map(|j| format!("f{j}")).collect();
        header.push("flag".into());
        header.push("batch".into());
        w.write_record(&header)?;
        for (i, row) in self.samples.outer_iter().enumerate() {
            let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            rec.push(self.flags[i].as_str().into());
            rec.push(self.batch_label[i].to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    /// Inverse of [`Dataset::write_csv`]. The feature mask is not stored in
    /// the CSV and comes back as `None`.
    pub fn read_csv<R: Read>(reader: R) -> Result<Dataset> {
        let mut r = csv::Reader::from_reader(reader);
        let header = r.headers()?.clone();
        let n = header.len().checked_sub(2).ok_or_else(|| {
            Error::Schema("dataset CSV needs feature columns plus flag and batch".into())
        })?;
        if header.get(n) != Some("flag") || header.get(n + 1) != Some("batch") {
            return Err(Error::Schema("last two columns must be 'flag' and 'batch'".into()));
        }
        let mut values = Vec::new();
        let mut flags = Vec::new();
        let mut batch = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            for j in 0..n {
                let v: f64 = rec[j].trim().parse().map_err(|_| {
                    Error::Schema(format!("line {line}: bad number '{}'", &rec[j]))
                })?;
                values.push(v);
            }
            flags.push(rec[n].parse()?);
            batch.push(rec[n + 1].trim().parse().map_err(|_| {
                Error::Schema(format!("line {line}: bad batch '{}'", &rec[n + 1]))
            })?);
        }
        let rows = flags.len();
        let samples = Array2::from_shape_vec((rows, n), values)
            .map_err(|e| Error::Schema(e.to_string()))?;
        Ok(Dataset {
            samples,
            flags,
            noisy_feature_mask: None,
            batch_label: batch,
        })
    }
}

/// Adds a standard-normal vector to each row independently with probability
/// `p` and marks it noisy. The input is expected to be already theta-scaled.
pub fn apply_sample_noise(clean: &Dataset, noise: &NoiseSpec, seed: u64) -> Result<Dataset> {
    if noise.mode != NoiseMode::Sample {
        return Err(Error::invalid("apply_sample_noise needs a sample-mode NoiseSpec"));
    }
    check_probability(noise.probability)?;
    let mut out = clean.clone();
    let mut rng = substream(seed, Stream::SampleNoise);
    for (mut row, flag) in out.samples.outer_iter_mut().zip(out.flags.iter_mut()) {
        // One uniform per row keeps row i's decision independent of N, so
        // prefixes of a realisation are realisations of smaller N.
        let u: f64 = rng.random();
        if u < noise.probability {
            row.iter_mut().for_each(|v| *v += rng.sample::<f64, _>(StandardNormal));
            *flag = SampleFlag::Noisy;
        }
    }
    Ok(out)
}

/// Picks `floor(n p)` features once and adds standard-normal noise to those
/// coordinates of every row.
pub fn apply_feature_noise(clean: &Dataset, noise: &NoiseSpec, seed: u64) -> Result<Dataset> {
    if noise.mode != NoiseMode::Feature {
        return Err(Error::invalid("apply_feature_noise needs a feature-mode NoiseSpec"));
    }
    check_probability(noise.probability)?;
    let n = clean.n_features();
    let k = fraction_count(n, noise.probability);
    let mut mask_rng = substream(seed, Stream::FeatureMask);
    let mut mask = vec![false; n];
    let mut chosen: Vec<usize> = index::sample(&mut mask_rng, n, k).into_vec();
    chosen.sort_unstable();
    for &j in &chosen {
        mask[j] = true;
    }

    let mut out = clean.clone();
    let mut rng = substream(seed, Stream::FeatureNoise);
    for (mut row, flag) in out.samples.outer_iter_mut().zip(out.flags.iter_mut()) {
        for &j in &chosen {
            row[j] += rng.sample::<f64, _>(StandardNormal);
        }
        if k > 0 {
            *flag = SampleFlag::Noisy;
        }
    }
    out.noisy_feature_mask = Some(mask);
    Ok(out)
}

/// Replaces a uniformly chosen `floor(N p)` subset of rows by standard-normal
/// draws and marks them as anomalies.
pub fn inject_anomalies(clean: &Dataset, spec: &AnomalySpec, seed: u64) -> Result<Dataset> {
    check_probability(spec.probability)?;
    let rows = clean.len();
    let k = fraction_count(rows, spec.probability);
    let mut rng = substream(seed, Stream::Anomalies);
    let mut chosen = index::sample(&mut rng, rows, k).into_vec();
    chosen.sort_unstable();
    let mut out = clean.clone();
    for &i in &chosen {
        out.samples
            .row_mut(i)
            .iter_mut()
            .for_each(|v| *v = rng.sample(StandardNormal));
        out.flags[i] = SampleFlag::Anomaly;
    }
    Ok(out)
}

/// One of the four contamination settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Scenario {
    SampleNoise {
        probability: f64,
        snr_db: f64,
    },
    FeatureNoise {
        probability: f64,
        snr_db: f64,
    },
    /// Train through `D`, test through the normalised `D''`. Optional
    /// whole-sample noise on the training split only.
    DomainShift {
        shift: f64,
        #[serde(default)]
        noise_probability: f64,
        #[serde(default)]
        snr_db: Option<f64>,
    },
    Anomaly {
        probability: f64,
        sar_db: f64,
    },
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::SampleNoise { .. } => "sample-noise",
            Scenario::FeatureNoise { .. } => "feature-noise",
            Scenario::DomainShift { .. } => "domain-shift",
            Scenario::Anomaly { .. } => "anomaly",
        }
    }

    /// Signal scale applied to clean projections for latent dimension `d`.
    pub fn theta(&self, d: usize) -> Result<f64> {
        match *self {
            Scenario::SampleNoise { probability, snr_db } => {
                Ok(NoiseSpec::new(NoiseMode::Sample, probability, snr_db, d)?.theta)
            }
            Scenario::FeatureNoise { probability, snr_db } => {
                Ok(NoiseSpec::new(NoiseMode::Feature, probability, snr_db, d)?.theta)
            }
            Scenario::DomainShift {
                noise_probability,
                snr_db,
                ..
            } => match snr_db {
                Some(db) if noise_probability > 0.0 => theta_sample_noise(db, d),
                _ => Ok(1.0),
            },
            Scenario::Anomaly { probability, sar_db } => Ok(AnomalySpec::new(probability, sar_db, d)?.theta),
        }
    }
}

/// Contaminated training split and clean (or shifted) test split.
#[derive(Debug, Clone)]
pub struct ScenarioData {
    pub train: Dataset,
    pub test: Dataset,
    pub theta: f64,
}

/// Generates `(train, test)` for a scenario. Every random component is a
/// separate sub-stream of `spec.seed`, so the result is a pure function of
/// `(spec, scenario)`.
pub fn build_scenario(spec: &SubspaceSpec, scenario: &Scenario) -> Result<ScenarioData> {
    spec.validate()?;
    let d = spec.latent_dim;
    let theta = scenario.theta(d)?;
    let base = sample_projection(spec, 0)?;
    let z_train = sample_latents(spec, Split::Train)?;
    let z_test = sample_latents(spec, Split::Test)?;

    let clean_train = Dataset::clean(base.project(&z_train)? * theta);

    let (train, test) = match *scenario {
        Scenario::SampleNoise { probability, snr_db } => {
            let noise = NoiseSpec::new(NoiseMode::Sample, probability, snr_db, d)?;
            let train = apply_sample_noise(&clean_train, &noise, spec.seed)?;
            (train, Dataset::clean(base.project(&z_test)? * theta))
        }
        Scenario::FeatureNoise { probability, snr_db } => {
            let noise = NoiseSpec::new(NoiseMode::Feature, probability, snr_db, d)?;
            let train = apply_feature_noise(&clean_train, &noise, spec.seed)?;
            (train, Dataset::clean(base.project(&z_test)? * theta))
        }
        Scenario::DomainShift {
            shift,
            noise_probability,
            snr_db,
        } => {
            let shifted = make_shifted_projection(&base, shift, spec.seed)?;
            let train = match snr_db {
                Some(db) if noise_probability > 0.0 => {
                    let noise = NoiseSpec::new(NoiseMode::Sample, noise_probability, db, d)?;
                    apply_sample_noise(&clean_train, &noise, spec.seed)?
                }
                _ => {
                    check_probability(noise_probability)?;
                    clean_train
                }
            };
            (train, Dataset::clean(shifted.project(&z_test)? * theta).with_batch(1))
        }
        Scenario::Anomaly { probability, sar_db } => {
            let anomaly = AnomalySpec::new(probability, sar_db, d)?;
            let train = inject_anomalies(&clean_train, &anomaly, spec.seed)?;
            (train, Dataset::clean(base.project(&z_test)? * theta))
        }
    };
    Ok(ScenarioData { train, test, theta })
}

/// Clean test rows plus a same-sized block of fresh anomalies, for scoring
/// anomaly detection. Anomalies come from a stream disjoint from the
/// training anomalies.
pub fn anomaly_test_set(spec: &SubspaceSpec, scenario: &Scenario, clean_test: &Dataset) -> Result<Dataset> {
    let Scenario::Anomaly { .. } = scenario else {
        return Err(Error::invalid("anomaly_test_set needs an anomaly scenario"));
    };
    let rows = clean_test.len();
    let n = clean_test.n_features();
    let mut rng = substream(spec.seed ^ 0x5eed_a11a, Stream::Anomalies);
    let anomalies = standard_normal_matrix(rows, n, &mut rng);
    let samples = ndarray::concatenate(Axis(0), &[clean_test.samples.view(), anomalies.view()])
        .map_err(|e| Error::invalid(e.to_string()))?;
    let mut flags = clean_test.flags.clone();
    flags.extend(std::iter::repeat_n(SampleFlag::Anomaly, rows));
    Ok(Dataset {
        samples,
        flags,
        noisy_feature_mask: None,
        batch_label: vec![0; 2 * rows],
    })
}
