use epcnet_core::Error as CoreError;

pub type HarnessResult<T> = Result<T, HarnessError>;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] CoreError),

    #[error("report output failed for {path}: {reason}")]
    Report { path: String, reason: String },
}

impl HarnessError {
    /// Process exit status: 2 configuration, 3 divergence, 4 capacity, 1 other.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Core(CoreError::InvalidArgument(_) | CoreError::Format { .. }) => 2,
            HarnessError::Core(CoreError::Divergence { .. }) => 3,
            HarnessError::Core(CoreError::Capacity(_)) => 4,
            HarnessError::Core(_) | HarnessError::Report { .. } => 1,
        }
    }

    pub(crate) fn report(path: &std::path::Path, reason: impl ToString) -> Self {
        HarnessError::Report { path: path.display().to_string(), reason: reason.to_string() }
    }
}
