//! Error classes and their process exit codes.

use fes_core::dnn::DnnError;
use fes_core::eval::EvalError;
use fes_core::io::IoError;
use fes_core::kriging::KrigingError;
use fes_core::pod::PodError;
use fes_core::spectral::SpectralError;
use fes_core::synthgen::SynthError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad invocation, configuration or model/data mismatch.
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        match e {
            IoError::Io(e) => CliError::Io(e.to_string()),
            IoError::Format(m) => CliError::Io(format!("malformed file: {m}")),
            IoError::Config(m) => CliError::Usage(format!("configuration error: {m}")),
            IoError::Spectral(e) => e.into(),
        }
    }
}

impl From<SpectralError> for CliError {
    fn from(e: SpectralError) -> Self {
        match e {
            SpectralError::NonPositiveBand(_) => CliError::Numerical(e.to_string()),
            SpectralError::GridMismatch | SpectralError::LengthMismatch { .. } => {
                CliError::Usage(format!("GridMismatch: {e}"))
            }
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::Spectral(e) => e.into(),
            SynthError::ZeroDenominator => CliError::Numerical(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<PodError> for CliError {
    fn from(e: PodError) -> Self {
        match e {
            PodError::RankDeficient { .. } => CliError::Numerical(format!(
                "RankDeficient: {e}; lower pod.rank or add calibration conditions"
            )),
            PodError::DegenerateBound { .. } => CliError::Numerical(format!(
                "{e}; the calibration conditions do not vary this basis, lower pod.rank"
            )),
            PodError::LengthMismatch { .. } => CliError::Usage(format!("GridMismatch: {e}")),
            PodError::InvalidInput(_) => CliError::Usage(e.to_string()),
        }
    }
}

impl From<KrigingError> for CliError {
    fn from(e: KrigingError) -> Self {
        match e {
            KrigingError::TooFewSites(_) | KrigingError::Shape(_) => CliError::Usage(e.to_string()),
            KrigingError::SingularCorrelation | KrigingError::NonFinite => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<DnnError> for CliError {
    fn from(e: DnnError) -> Self {
        match e {
            DnnError::ConfigInvalid(_) | DnnError::ShapeMismatch(_) => CliError::Usage(e.to_string()),
            DnnError::EmptyDataset => CliError::Usage(format!("EmptyDataset: {e}")),
            DnnError::Diverged(_) => CliError::Numerical(e.to_string()),
            DnnError::Pod(e) => e.into(),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::EmptyInput => CliError::Usage(format!("EmptyDataset: {e}")),
            EvalError::MissingData(_) => CliError::Usage(format!("EmptyDataset: {e}")),
            EvalError::NotStochastic => CliError::Numerical(e.to_string()),
            EvalError::Spectral(e) => e.into(),
            EvalError::Pod(e) => e.into(),
            EvalError::Kriging(e) => e.into(),
            EvalError::Dnn(e) => e.into(),
            EvalError::Io(e) => e.into(),
            EvalError::Synth(e) => e.into(),
        }
    }
}
