use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] covertseq::Error),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 0 ok, 1 other, 2 config, 3 calibration, 4 conditioning starvation,
    /// 5 infeasible.
    pub fn exit_code(&self) -> i32 {
        use covertseq::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Infeasible(_) => 5,
            CliError::Io(_) => 1,
            CliError::Core(e) => match e {
                E::InvalidParameter { .. } => 2,
                E::Calibration(_) | E::SrThresholdTooLow { .. } => 3,
                E::ConditioningStarvation { .. } => 4,
                E::Infeasible(_) => 5,
                _ => 1,
            },
        }
    }
}
