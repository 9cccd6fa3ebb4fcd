//! Down/up-sampling 1D CNN denoiser with hand-written reverse-mode gradients.
//!
//! Layout: downsample the width-`W` spectrum into `N_d` interleaved
//! sub-signals, run `Conv+ReLU`, `(N_l - 2) x (Conv+BN+ReLU)`, `Conv`, and
//! upsample back to `W`.

pub mod adam;
pub mod batchnorm;
pub mod conv;
pub mod du;
pub mod loss;
pub mod net;
pub mod schedule;
pub mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use adam::{AdamConfig, AdamState};
pub use loss::composite_loss;
pub use net::{empirical_receptive_field, DenoiserNet, ForwardCache, ParamArray, ParamKind};
pub use schedule::ScheduleConfig;
pub use train::{train, ConditionSpectra, EpochLog, TrainConfig, TrainOutcome};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DnnError {
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("no training pairs")]
    EmptyDataset,
    #[error("non-finite loss at epoch {0}")]
    Diverged(usize),
    #[error(transparent)]
    Pod(#[from] crate::pod::PodError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub n_layers: usize,
    pub n_channels: usize,
    pub kernel_size: usize,
    pub downsample: usize,
    pub input_width: usize,
}

impl NetworkConfig {
    /// Full-instrument DU+CNN baseline.
    pub fn baseline() -> Self {
        Self {
            n_layers: 7,
            n_channels: 32,
            kernel_size: 15,
            downsample: 16,
            input_width: 1696,
        }
    }

    /// Same stack without down/up-sampling.
    pub fn plain(self) -> Self {
        Self { downsample: 1, ..self }
    }

    pub fn validate(&self) -> Result<(), DnnError> {
        let bad = |m: &str| Err(DnnError::ConfigInvalid(m.to_string()));
        if self.n_layers < 2 {
            return bad("n_layers must be at least 2");
        }
        if self.kernel_size == 0 || self.kernel_size.is_multiple_of(2) {
            return bad("kernel_size must be odd");
        }
        if self.n_channels == 0 || self.downsample == 0 || self.input_width == 0 {
            return bad("n_channels, downsample and input_width must be positive");
        }
        Ok(())
    }

    /// Sub-signal length after downsampling.
    pub fn sub_len(&self) -> usize {
        du::sub_len(self.input_width, self.downsample)
    }

    pub fn padded_width(&self) -> usize {
        self.sub_len() * self.downsample
    }
}

/// Input pixels that influence one output pixel: `N_d (N_l (N_k - 1) + 1)`.
pub fn receptive_field(cfg: &NetworkConfig) -> usize {
    cfg.downsample * (cfg.n_layers * (cfg.kernel_size - 1) + 1)
}

/// Convolution weights and biases:
/// `(N_l - 2)(N_c^2 N_k + N_c) + 2 N_d N_c N_k + N_c + N_d`.
pub fn param_count(cfg: &NetworkConfig) -> usize {
    let (l, c, k, d) = (cfg.n_layers, cfg.n_channels, cfg.kernel_size, cfg.downsample);
    (l - 2) * (c * c * k + c) + 2 * d * c * k + c + d
}

/// Batch-norm scale and shift parameters (not counted by [`param_count`]).
pub fn bn_param_count(cfg: &NetworkConfig) -> usize {
    2 * (cfg.n_layers - 2) * cfg.n_channels
}
