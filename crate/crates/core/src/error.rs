use thiserror::Error;

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("invalid catalog: {}", .0.join("; "))]
    InvalidCatalog(Vec<String>),
    #[error("invalid scene: {}", .0.join("; "))]
    InvalidScene(Vec<String>),
    #[error("unknown id {0}")]
    UnknownId(String),
    #[error("{0} is not a container, furniture or room")]
    NotContainer(String),
    #[error("{entity} does not contain {content}")]
    MissingContent { entity: String, content: String },
    #[error("{0}")]
    Rejected(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("no action template matches \"{0}\"")]
    NoMatch(String),
    #[error("verb \"{0}\" is not in the whitelist")]
    VerbNotWhitelisted(String),
    #[error("malformed ask quoting in \"{0}\"")]
    MalformedAsk(String),
}

#[derive(Debug, Error)]
pub enum GrammarError {
    #[error("grammar text line {line}: {msg}")]
    Syntax { line: usize, msg: String },
}

#[derive(Debug, Error)]
pub enum PrefsError {
    #[error("invalid preference pack: {0}")]
    InvalidPack(String),
    #[error("out-of-order step {got} after {last}")]
    OutOfOrder { got: usize, last: usize },
    #[error("unknown task \"{0}\"")]
    UnknownTask(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("http status {status}: {body}")]
    Http { status: u16, body: String },
    #[error("backend does not support {0}")]
    Capability(String),
    #[error("malformed response: {0}")]
    Malformed(String),
}

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("no valid action after {} attempts", .raw.len())]
    InvalidAction { raw: Vec<String> },
    #[error(transparent)]
    Llm(#[from] LlmError),
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("unknown task \"{task}\"; valid tasks: {}", .valid.join(", "))]
    UnknownTask { task: String, valid: Vec<String> },
    #[error("unknown persona {0}")]
    UnknownPersona(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("fold error: {0}")]
    Folds(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Prefs(#[from] PrefsError),
    #[error(transparent)]
    Llm(#[from] LlmError),
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("refusing to export an empty triple set")]
    Empty,
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Harness(#[from] HarnessError),
}
