use ndarray::{Array1, Array2, Zip};

use super::model::{AutoencoderModel, Gradients, Layer};
use crate::error::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

/// First and second moment estimates for every parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    first: [Layer; 4],
    second: [Layer; 4],
    step: u64,
}

impl AdamState {
    pub fn new(model: &AutoencoderModel) -> Self {
        let zeros = || {
            model.layers().clone().map(|l| Layer {
                weight: Array2::zeros(l.weight.raw_dim()),
                bias: Array1::zeros(l.bias.raw_dim()),
            })
        };
        AdamState {
            first: zeros(),
            second: zeros(),
            step: 0,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    /// Shapes of the accumulators, `(weight, bias)` per layer.
    pub fn shapes(&self) -> Vec<((usize, usize), usize)> {
        self.first
            .iter()
            .chain(self.second.iter())
            .map(|l| (l.weight.dim(), l.bias.len()))
            .collect()
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(model: &mut AutoencoderModel, grads: &Gradients, state: &mut AdamState, lr: f64) -> Result<()> {
    if !grads.is_finite() {
        return Err(Error::NonFinite {
            epoch: 0,
            what: format!("gradient at optimizer step {}", state.step + 1),
        });
    }
    for ((layer, grad), m) in model.layers().iter().zip(&grads.layers).zip(&state.first) {
        if layer.weight.dim() != grad.weight.dim()
            || layer.bias.len() != grad.bias.len()
            || m.weight.dim() != layer.weight.dim()
        {
            return Err(Error::shape(
                format!("{:?}", layer.weight.dim()),
                format!("{:?}", grad.weight.dim()),
            ));
        }
    }

    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - ADAM_BETA1.powi(t);
    let c2 = 1.0 - ADAM_BETA2.powi(t);
    let update = |p: &mut f64, g: &f64, m: &mut f64, v: &mut f64| {
        *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
        *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + ADAM_EPSILON);
    };

    let layers = model.layers_mut();
    for k in 0..4 {
        Zip::from(&mut layers[k].weight)
            .and(&grads.layers[k].weight)
            .and(&mut state.first[k].weight)
            .and(&mut state.second[k].weight)
            .for_each(update);
        Zip::from(&mut layers[k].bias)
            .and(&grads.layers[k].bias)
            .and(&mut state.first[k].bias)
            .and(&mut state.second[k].bias)
            .for_each(update);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::super::{init_model, Architecture};
    use super::*;

    fn unit_gradients(model: &AutoencoderModel, value: f64) -> Gradients {
        Gradients {
            layers: model.layers().clone().map(|l| Layer {
                weight: Array2::from_elem(l.weight.raw_dim(), value),
                bias: Array1::from_elem(l.bias.raw_dim(), value),
            }),
        }
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
        let arch = Architecture::new(3, 2, 1).unwrap();
        let mut model = init_model(&arch, 0).unwrap();
        let before = model.param(0);
        let grads = unit_gradients(&model, 1.0);
        let mut state = AdamState::new(&model);
        adam_step(&mut model, &grads, &mut state, 0.001).unwrap();
        let expected = 0.001 * 1.0 / (1.0 + ADAM_EPSILON);
        assert!((before - model.param(0) - expected).abs() < 1e-15);
        assert_eq!(state.step(), 1);
    }

    #[test]
    fn zero_gradient_keeps_parameters() {
        let arch = Architecture::new(4, 3, 2).unwrap();
        let mut model = init_model(&arch, 1).unwrap();
        let original = model.layers().clone();
        let grads = unit_gradients(&model, 0.0);
        let mut state = AdamState::new(&model);
        let shapes = state.shapes();
        for _ in 0..50 {
            adam_step(&mut model, &grads, &mut state, 0.01).unwrap();
        }
        assert_eq!(model.layers(), &original);
        assert_eq!(state.shapes(), shapes);
        assert_eq!(state.step(), 50);
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let arch = Architecture::new(4, 3, 2).unwrap();
        let mut model = init_model(&arch, 1).unwrap();
        let mut grads = unit_gradients(&model, 0.5);
        grads.layers[2].bias[0] = f64::NAN;
        let mut state = AdamState::new(&model);
        assert!(matches!(
            adam_step(&mut model, &grads, &mut state, 0.01),
            Err(Error::NonFinite { .. })
        ));
        assert_eq!(state.step(), 0);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut small = init_model(&Architecture::new(4, 3, 2).unwrap(), 1).unwrap();
        let big = init_model(&Architecture::new(5, 3, 2).unwrap(), 1).unwrap();
        let grads = unit_gradients(&big, 0.1);
        let mut state = AdamState::new(&small);
        assert!(adam_step(&mut small, &grads, &mut state, 0.01).is_err());
    }
}
