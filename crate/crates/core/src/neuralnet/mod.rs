//! Dense autoencoder engine: `n -> h -> b -> h -> n` with exact gradients
//! and Adam.

mod adam;
mod model;
mod train;

pub use adam::{adam_step, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON};
pub use model::{
    backward, embed, forward, init_model, mse, reconstruct, AutoencoderModel, ForwardCache, Gradients, Layer,
    CHECKPOINT_FORMAT_VERSION,
};
pub use train::{train, TrainConfig, TrainRecord};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Nonlinearity on the three internal layers. The output layer is linear.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the pre-activation `x`.
    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Activation::Identity => 1.0,
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "identity" | "linear" => Ok(Activation::Identity),
            other => Err(Error::invalid(format!("unknown activation '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub bottleneck_dim: usize,
    #[serde(default)]
    pub activation: Activation,
}

impl Architecture {
    pub fn new(input_dim: usize, hidden_dim: usize, bottleneck_dim: usize) -> Result<Self> {
        let arch = Architecture {
            input_dim,
            hidden_dim,
            bottleneck_dim,
            activation: Activation::Relu,
        };
        arch.validate()?;
        Ok(arch)
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden_dim == 0 || self.bottleneck_dim == 0 {
            return Err(Error::invalid("layer sizes must be positive"));
        }
        if self.bottleneck_dim >= self.input_dim {
            return Err(Error::invalid(format!(
                "bottleneck ({}) must be smaller than the input ({}) for an under-complete autoencoder",
                self.bottleneck_dim, self.input_dim
            )));
        }
        Ok(())
    }

    /// `(fan_out, fan_in)` for the four affine layers.
    pub fn layer_shapes(&self) -> [(usize, usize); 4] {
        let (n, h, b) = (self.input_dim, self.hidden_dim, self.bottleneck_dim);
        [(h, n), (b, h), (h, b), (n, h)]
    }

    /// `2 (n h + h b) + 2 h + b + n`.
    pub fn parameter_count(&self) -> usize {
        let (n, h, b) = (self.input_dim, self.hidden_dim, self.bottleneck_dim);
        2 * (n * h + h * b) + 2 * h + b + n
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_count_matches_hand_count() {
        let arch = Architecture::new(1000, 2000, 300).unwrap();
        assert_eq!(arch.parameter_count(), 5_205_300);
        let small = Architecture::new(6, 3, 2).unwrap();
        // 6*3+3 + 3*2+2 + 2*3+3 + 3*6+6
        assert_eq!(small.parameter_count(), 21 + 8 + 9 + 24);
    }

    #[test]
    fn under_complete_is_enforced() {
        assert!(Architecture::new(50, 10, 50).is_err());
        assert!(Architecture::new(50, 10, 60).is_err());
        assert!(Architecture::new(50, 0, 25).is_err());
        assert!(Architecture::new(50, 4, 25).is_ok());
    }

    #[test]
    fn activation_derivatives() {
        for act in [Activation::Relu, Activation::Tanh, Activation::Identity] {
            for x in [-1.3, -0.2, 0.4, 2.0] {
                let h = 1e-6;
                let fd = (act.apply(x + h) - act.apply(x - h)) / (2.0 * h);
                assert!((fd - act.derivative(x)).abs() < 1e-8, "{act:?} at {x}");
            }
        }
        assert_eq!("tanh".parse::<Activation>().unwrap(), Activation::Tanh);
        assert!("gelu".parse::<Activation>().is_err());
    }
}
