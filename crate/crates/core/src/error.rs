use thiserror::Error;

/// Errors raised by model construction, path generation and integration.
#[derive(Debug, Error)]
pub enum Error {
    /// Rejected input: inconsistent dimensions, out-of-window parameters, bad config.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A requested allocation exceeds the configured memory budget.
    #[error("resource limit: {requested} bytes requested, budget is {budget} bytes")]
    Resource { requested: usize, budget: usize },

    /// The step size lies outside the admissible window and the policy is strict.
    #[error("step size h = {h} exceeds the admissible bound {bound}")]
    Admissibility { h: f64, bound: f64 },

    /// A non-finite state was produced.
    #[error("numerical blow-up at node {node}{}{}", fmt_stream(*.stream), fmt_step(*.h))]
    BlowUp {
        node: usize,
        stream: Option<u64>,
        h: Option<f64>,
    },

    #[error("index {index} out of range (len {len})")]
    OutOfRange { index: i64, len: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

fn fmt_stream(stream: Option<u64>) -> String {
    stream.map(|s| format!(" (stream {s})")).unwrap_or_default()
}

fn fmt_step(h: Option<f64>) -> String {
    h.map(|h| format!(" (h = {h})")).unwrap_or_default()
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// Attach Monte Carlo provenance to a blow-up error; other variants pass through.
    pub fn with_provenance(self, stream: Option<u64>, h: Option<f64>) -> Self {
        match self {
            Error::BlowUp { node, stream: s, h: hh } => Error::BlowUp {
                node,
                stream: stream.or(s),
                h: h.or(hh),
            },
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
