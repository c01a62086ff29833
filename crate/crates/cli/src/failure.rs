use std::fmt;

use point_policy::control::ControlError;
use point_policy::dataio::DataError;
use point_policy::pipeline::PipelineError;
use point_policy::policy::PolicyError;
use point_policy::retarget::RetargetError;
use point_policy::simenv::SimError;

/// A failed command together with its exit-code class.
#[derive(Debug)]
pub enum Failure {
    /// Exit code 1: bad flags or arguments.
    Usage(String),
    /// Exit code 2: unreadable, malformed or inconsistent inputs.
    Data(anyhow::Error),
    /// Exit code 3: anything that went wrong while running.
    Runtime(anyhow::Error),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Runtime(_) => 3,
        }
    }

    pub fn data(msg: impl fmt::Display) -> Self {
        Failure::Data(anyhow::anyhow!("{msg}"))
    }

    pub fn runtime(msg: impl fmt::Display) -> Self {
        Failure::Runtime(anyhow::anyhow!("{msg}"))
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(msg) => write!(f, "usage error: {msg}"),
            Failure::Data(e) => write!(f, "data error: {}", chain_message(e)),
            Failure::Runtime(e) => write!(f, "runtime error: {}", chain_message(e)),
        }
    }
}

/// Joins the error chain, skipping causes whose text is already shown.
fn chain_message(e: &anyhow::Error) -> String {
    let mut msg = e.to_string();
    for cause in e.chain().skip(1) {
        let text = cause.to_string();
        if !msg.contains(&text) {
            msg.push_str(": ");
            msg.push_str(&text);
        }
    }
    msg
}

impl From<DataError> for Failure {
    fn from(e: DataError) -> Self {
        Failure::Data(e.into())
    }
}

impl From<PolicyError> for Failure {
    fn from(e: PolicyError) -> Self {
        match e {
            PolicyError::CorruptFile(_)
            | PolicyError::FormatVersionMismatch { .. }
            | PolicyError::Io { .. }
            | PolicyError::SchemaMismatch(_)
            | PolicyError::EmptyDataset
            | PolicyError::Data(_) => Failure::Data(e.into()),
            _ => Failure::Runtime(e.into()),
        }
    }
}

impl From<RetargetError> for Failure {
    fn from(e: RetargetError) -> Self {
        Failure::Data(e.into())
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::InvalidSpec(_) | SimError::Data(_) => Failure::Data(e.into()),
            SimError::Control(ControlError::Policy(p)) => p.into(),
            _ => Failure::Runtime(e.into()),
        }
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Sim(e) => e.into(),
            PipelineError::Retarget(e) => e.into(),
            PipelineError::Data(e) => e.into(),
            PipelineError::Policy(e) => e.into(),
        }
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Data(e.into())
    }
}
