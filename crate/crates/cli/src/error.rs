use lsp_core::baselines::BaselineError;
use lsp_core::data::DataError;
use lsp_core::eval::EvalError;
use lsp_core::model::ModelError;
use lsp_core::training::TrainError;
use thiserror::Error;

/// Failure of a subcommand, mapped onto the process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    /// Reports that cannot share a table (different dataset or seed).
    #[error("comparability error: {0}")]
    Comparability(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) | CliError::Comparability(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }

    pub(crate) fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        CliError::Data(format!("{}: {e}", path.display()))
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Config(m) => CliError::Config(m),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(m) => CliError::Config(m),
            TrainError::Label { .. } => CliError::Data(e.to_string()),
            TrainError::NonFinite { .. } => CliError::Numerical(e.to_string()),
            TrainError::Model(m) => m.into(),
            TrainError::Data(d) => d.into(),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Config(m) => CliError::Config(m),
            EvalError::Degenerate(_) | EvalError::Empty(_) | EvalError::Shape(_) => CliError::Data(e.to_string()),
            EvalError::Undefined(_) | EvalError::NonFinite(_) => CliError::Numerical(e.to_string()),
            EvalError::Model(m) => m.into(),
            EvalError::Data(d) => d.into(),
        }
    }
}

impl From<BaselineError> for CliError {
    fn from(e: BaselineError) -> Self {
        match e {
            BaselineError::Config(m) => CliError::Config(m),
            BaselineError::Shape(m) => CliError::Data(m),
        }
    }
}
