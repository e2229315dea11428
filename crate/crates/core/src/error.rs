use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EncodeError {
    #[error("identifier `{id}` is {len} bytes, limit is 64")]
    IdTooLong { id: String, len: usize },
    #[error("identifier must not be empty")]
    EmptyId,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChainError {
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error("difficulty {requested} exceeds the cap of {cap} leading zero bits")]
    DifficultyTooHigh { requested: u32, cap: u32 },
    #[error("nonce space exhausted without meeting difficulty {0}")]
    NonceExhausted(u32),
    #[error("proposer `{0}` has no signing identity")]
    ProposerMismatch(String),
    #[error("neither chain is valid (a: {a}; b: {b})")]
    NoValidChain { a: String, b: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AclError {
    #[error("identity `{identity}` cannot sign for robot `{claimed}`")]
    IdMismatch { identity: String, claimed: String },
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error("ACL must contain at least one entry")]
    Empty,
    #[error("invalid public key for `{0}`")]
    BadPublicKey(String),
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("bad override `{0}`: expected dotted.key=value")]
    BadOverride(String),
}
