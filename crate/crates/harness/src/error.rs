use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration: {0}")]
    Config(String),

    #[error("unknown scenario id '{0}'")]
    UnknownScenario(String),

    /// Failure inside one pipeline stage of a trial.
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Core(#[from] mvtwin_core::Error),

    #[error(transparent)]
    Sim(#[from] mvtwin_circuitsim::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by bad input rather than a failed computation.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Config(_) | Error::UnknownScenario(_) => true,
            Error::Core(e) => matches!(
                e,
                mvtwin_core::Error::Config(_) | mvtwin_core::Error::Alignment(_) | mvtwin_core::Error::Parse { .. }
            ),
            Error::Sim(mvtwin_circuitsim::Error::Config(_)) => true,
            Error::Stage { source, .. } => source.is_validation(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

/// Tags an error with the pipeline stage it came from.
pub trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T, E: Into<Error>> StageExt<T> for std::result::Result<T, E> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| Error::Stage {
            stage,
            source: Box::new(e.into()),
        })
    }
}
