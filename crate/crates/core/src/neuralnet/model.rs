use std::io::{Read, Write};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::Architecture;
use crate::error::{Error, Result};
use crate::rng::{substream, Stream};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

static NEXT_MODEL_ID: AtomicU64 = AtomicU64::new(1);

/// One affine map `x -> W x + b` with `W` stored as `fan_out x fan_in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Layer {
    fn zeros(fan_out: usize, fan_in: usize) -> Self {
        Layer {
            weight: Array2::zeros((fan_out, fan_in)),
            bias: Array1::zeros(fan_out),
        }
    }

    fn len(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    fn affine(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut z = x.dot(&self.weight.t());
        z += &self.bias;
        z
    }

    fn get(&self, i: usize) -> f64 {
        let w = self.weight.len();
        if i < w {
            let cols = self.weight.ncols();
            self.weight[[i / cols, i % cols]]
        } else {
            self.bias[i - w]
        }
    }

    fn get_mut(&mut self, i: usize) -> &mut f64 {
        let w = self.weight.len();
        if i < w {
            let cols = self.weight.ncols();
            &mut self.weight[[i / cols, i % cols]]
        } else {
            &mut self.bias[i - w]
        }
    }

    fn is_finite(&self) -> bool {
        self.weight.iter().chain(self.bias.iter()).all(|v| v.is_finite())
    }
}

/// Encoder `n -> h -> b`, decoder `b -> h -> n`.
#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderModel {
    arch: Architecture,
    layers: [Layer; 4],
    seed: u64,
    id: u64,
    version: u64,
}

impl AutoencoderModel {
    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn layers(&self) -> &[Layer; 4] {
        &self.layers
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Replaces all parameters, e.g. to build hand-crafted test models.
    pub fn from_layers(arch: Architecture, layers: [Layer; 4]) -> Result<Self> {
        arch.validate_shapes(&layers)?;
        Ok(AutoencoderModel {
            arch,
            layers,
            seed: 0,
            id: NEXT_MODEL_ID.fetch_add(1, Ordering::Relaxed),
            version: 0,
        })
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(Layer::len).sum()
    }

    /// Parameter `i` in the flat order layer by layer, weights (row-major)
    /// then biases.
    pub fn param(&self, i: usize) -> f64 {
        let (l, j) = locate(&self.layers, i);
        self.layers[l].get(j)
    }

    pub fn set_param(&mut self, i: usize, value: f64) {
        let (l, j) = locate(&self.layers, i);
        *self.layers[l].get_mut(j) = value;
        self.version += 1;
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(Layer::is_finite)
    }

    pub(super) fn layers_mut(&mut self) -> &mut [Layer; 4] {
        self.version += 1;
        &mut self.layers
    }

    /// Writes a JSON checkpoint with architecture, seed and parameters.
    pub fn write_checkpoint<W: Write>(&self, writer: W) -> Result<()> {
        let ckpt = Checkpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            architecture: self.arch,
            seed: self.seed,
            layers: self.layers.to_vec(),
        };
        serde_json::to_writer(writer, &ckpt)?;
        Ok(())
    }

    pub fn read_checkpoint<R: Read>(reader: R) -> Result<Self> {
        let ckpt: Checkpoint = serde_json::from_reader(reader)?;
        if ckpt.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {} (expected {CHECKPOINT_FORMAT_VERSION})",
                ckpt.format_version
            )));
        }
        ckpt.architecture.validate()?;
        let layers: [Layer; 4] = ckpt
            .layers
            .try_into()
            .map_err(|v: Vec<Layer>| Error::Checkpoint(format!("expected 4 layers, found {}", v.len())))?;
        let mut model = AutoencoderModel::from_layers(ckpt.architecture, layers)?;
        model.seed = ckpt.seed;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_checkpoint(std::io::BufWriter::new(f))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_checkpoint(std::io::BufReader::new(f))
    }
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format_version: u32,
    architecture: Architecture,
    seed: u64,
    layers: Vec<Layer>,
}

impl Architecture {
    fn validate_shapes(&self, layers: &[Layer; 4]) -> Result<()> {
        self.validate()?;
        for (k, ((out, inp), layer)) in self.layer_shapes().iter().zip(layers).enumerate() {
            if layer.weight.dim() != (*out, *inp) || layer.bias.len() != *out {
                return Err(Error::shape(
                    format!("layer {k}: weight {out}x{inp}, bias {out}"),
                    format!(
                        "weight {}x{}, bias {}",
                        layer.weight.nrows(),
                        layer.weight.ncols(),
                        layer.bias.len()
                    ),
                ));
            }
        }
        Ok(())
    }
}

fn locate(layers: &[Layer; 4], mut i: usize) -> (usize, usize) {
    for (l, layer) in layers.iter().enumerate() {
        if i < layer.len() {
            return (l, i);
        }
        i -= layer.len();
    }
    panic!("parameter index out of range");
}

/// Weights uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, biases zero.
pub fn init_model(arch: &Architecture, seed: u64) -> Result<AutoencoderModel> {
    arch.validate()?;
    let mut rng = substream(seed, Stream::WeightInit);
    let layers = arch.layer_shapes().map(|(out, inp)| {
        let bound = 1.0 / (inp as f64).sqrt();
        let mut layer = Layer::zeros(out, inp);
        layer
            .weight
            .iter_mut()
            .for_each(|w| *w = rng.random_range(-bound..=bound));
        layer
    });
    let mut model = AutoencoderModel::from_layers(*arch, layers)?;
    model.seed = seed;
    Ok(model)
}

/// Activations of one forward pass, kept for backprop.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    model_id: u64,
    model_version: u64,
    input: Array2<f64>,
    /// Pre-activations of the four layers.
    pre: [Array2<f64>; 4],
    /// Activated outputs of the three internal layers.
    post: [Array2<f64>; 3],
}

impl ForwardCache {
    pub fn bottleneck(&self) -> &Array2<f64> {
        &self.post[1]
    }

    pub fn output(&self) -> &Array2<f64> {
        &self.pre[3]
    }
}

fn check_width(arch: &Architecture, cols: usize) -> Result<()> {
    if cols != arch.input_dim {
        return Err(Error::shape(format!("{} columns", arch.input_dim), format!("{cols} columns")));
    }
    Ok(())
}

fn activate(z: &Array2<f64>, act: super::Activation) -> Array2<f64> {
    z.mapv(|v| act.apply(v))
}

/// Reconstruction of every row of `batch` plus the cache for [`backward`].
pub fn forward(model: &AutoencoderModel, batch: ArrayView2<'_, f64>) -> Result<(Array2<f64>, ForwardCache)> {
    check_width(&model.arch, batch.ncols())?;
    let act = model.arch.activation;
    let [l1, l2, l3, l4] = &model.layers;
    let z1 = l1.affine(batch);
    let a1 = activate(&z1, act);
    let z2 = l2.affine(a1.view());
    let a2 = activate(&z2, act);
    let z3 = l3.affine(a2.view());
    let a3 = activate(&z3, act);
    let z4 = l4.affine(a3.view());
    let out = z4.clone();
    Ok((
        out,
        ForwardCache {
            model_id: model.id,
            model_version: model.version,
            input: batch.to_owned(),
            pre: [z1, z2, z3, z4],
            post: [a1, a2, a3],
        },
    ))
}

/// Reconstruction only; no cache.
pub fn reconstruct(model: &AutoencoderModel, data: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    check_width(&model.arch, data.ncols())?;
    let act = model.arch.activation;
    let [l1, l2, l3, l4] = &model.layers;
    let mut h = l1.affine(data);
    h.mapv_inplace(|v| act.apply(v));
    let mut h = l2.affine(h.view());
    h.mapv_inplace(|v| act.apply(v));
    let mut h = l3.affine(h.view());
    h.mapv_inplace(|v| act.apply(v));
    Ok(l4.affine(h.view()))
}

/// Bottleneck activations, `rows x b`.
pub fn embed(model: &AutoencoderModel, data: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    check_width(&model.arch, data.ncols())?;
    let act = model.arch.activation;
    let mut h = model.layers[0].affine(data);
    h.mapv_inplace(|v| act.apply(v));
    let mut z = model.layers[1].affine(h.view());
    z.mapv_inplace(|v| act.apply(v));
    Ok(z)
}

/// Mean of squared differences over every entry.
pub fn mse(pred: ArrayView2<'_, f64>, target: ArrayView2<'_, f64>) -> Result<f64> {
    if pred.dim() != target.dim() {
        return Err(Error::shape(format!("{:?}", target.dim()), format!("{:?}", pred.dim())));
    }
    if pred.is_empty() {
        return Err(Error::invalid("mse of an empty matrix"));
    }
    let sum = Zip::from(&pred).and(&target).fold(0.0, |acc, p, t| {
        let d = p - t;
        acc + d * d
    });
    Ok(sum / pred.len() as f64)
}

/// Gradients with the same layout as the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: [Layer; 4],
}

impl Gradients {
    pub fn get(&self, i: usize) -> f64 {
        let (l, j) = locate(&self.layers, i);
        self.layers[l].get(j)
    }

    pub fn norm(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(l.bias.iter()))
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(Layer::is_finite)
    }
}

/// Gradient of the batch-mean MSE against `target` for every weight and
/// bias.
pub fn backward(model: &AutoencoderModel, cache: &ForwardCache, target: ArrayView2<'_, f64>) -> Result<Gradients> {
    if cache.model_id != model.id || cache.model_version != model.version {
        return Err(Error::StaleCache(
            "cache was produced by a different model or before the last parameter update".into(),
        ));
    }
    let out = &cache.pre[3];
    if out.dim() != target.dim() {
        return Err(Error::shape(format!("{:?}", out.dim()), format!("{:?}", target.dim())));
    }
    let act = model.arch.activation;
    let scale = 2.0 / out.len() as f64;

    let mut delta = out - &target;
    delta *= scale;

    let inputs = [cache.input.view(), cache.post[0].view(), cache.post[1].view(), cache.post[2].view()];
    let mut grads: Vec<Layer> = Vec::with_capacity(4);
    for k in (0..4).rev() {
        let weight = delta.t().dot(&inputs[k]);
        let bias = delta.sum_axis(Axis(0));
        grads.push(Layer { weight, bias });
        if k > 0 {
            let mut upstream = delta.dot(&model.layers[k].weight);
            Zip::from(&mut upstream)
                .and(&cache.pre[k - 1])
                .for_each(|g, &z| *g *= act.derivative(z));
            delta = upstream;
        }
    }
    grads.reverse();
    let layers: [Layer; 4] = grads.try_into().expect("four layers");
    Ok(Gradients { layers })
}
