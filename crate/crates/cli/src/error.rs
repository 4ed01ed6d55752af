use nerstress::context_attack::{ContextAttackError, ProviderError};
use nerstress::corpus::CorpusError;
use nerstress::entity_attack::EntityAttackError;
use nerstress::eval::EvalError;
use nerstress::wikidict::{KbError, WikidictError};

/// Failures grouped by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Service(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Input(_) => 2,
            CliError::Service(_) => 3,
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        CliError::Usage(message.into())
    }

    pub fn input(message: impl Into<String>) -> Self {
        CliError::Input(message.into())
    }
}

pub type CliResult<T> = Result<T, CliError>;

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<EntityAttackError> for CliError {
    fn from(e: EntityAttackError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<ContextAttackError> for CliError {
    fn from(e: ContextAttackError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<ProviderError> for CliError {
    fn from(e: ProviderError) -> Self {
        CliError::Service(format!("masked-LM provider: {e}"))
    }
}

impl From<KbError> for CliError {
    fn from(e: KbError) -> Self {
        match e {
            KbError::FixtureMissing { .. } | KbError::Cache(_) | KbError::InvalidQid(_) => CliError::Input(e.to_string()),
            _ => CliError::Service(format!("knowledge base: {e}")),
        }
    }
}

impl From<WikidictError> for CliError {
    fn from(e: WikidictError) -> Self {
        match e {
            WikidictError::Kb(kb) => kb.into(),
            WikidictError::InvalidArgument(m) => CliError::Usage(m),
            other => CliError::Input(other.to_string()),
        }
    }
}
