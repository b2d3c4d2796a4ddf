use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),

    #[error("{0} (pass --allow-large to override)")]
    ResourceBound(String),

    #[error("records: {0}")]
    Records(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Core(#[from] dualrail::Error),

    #[error("internal: {0}")]
    Internal(String),
}

impl CliError {
    /// 1 for problems the user can fix in their inputs, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        use dualrail::Error as E;
        match self {
            CliError::Config(_) | CliError::ResourceBound(_) | CliError::Records(_) => 1,
            CliError::Core(
                E::InvalidArgument(_)
                | E::Domain(_)
                | E::DimensionMismatch(_)
                | E::EmptyInput(_)
                | E::Degenerate(_)
                | E::BoundaryOptimum(_)
                | E::Resonance { .. }
                | E::Unsupported(_)
                | E::Uncalibrated(_),
            ) => 1,
            CliError::Core(_) | CliError::Io(_) | CliError::Internal(_) => 2,
        }
    }
}
