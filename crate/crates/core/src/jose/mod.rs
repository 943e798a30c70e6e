//! JWK / JWS primitives. Only Ed25519 keys and the `EdDSA` algorithm exist here.

mod jwk;
mod jws;
mod keyfile;
pub mod ops;
mod time;

pub use jwk::{KeyPair, PrivateKeyJwk, PublicKeyJwk, CRV_ED25519, KTY_OKP};
pub use jws::{jws_sign, jws_verify, sign_with_header, JoseHeader, JsonObject, Jws, ALG_EDDSA};
pub use keyfile::{load_keypair, save_keypair, KeyFileError};
pub use time::{check_time_window, JwtTimeWindow, TimeReject, DEFAULT_SKEW_SECS};

#[derive(Debug, thiserror::Error)]
pub enum JoseError {
    #[error("malformed token: {0}")]
    Malformed(String),
    #[error("unsupported algorithm {0:?}")]
    UnsupportedAlgorithm(String),
    #[error("bad signature")]
    BadSignature,
    #[error("invalid key: {0}")]
    InvalidKey(String),
    #[error("entropy source failure: {0}")]
    Entropy(String),
    #[error("exp ({exp}) must be after iat ({iat})")]
    InvalidTimeWindow { iat: u64, exp: u64 },
    #[error("serialization: {0}")]
    Serialization(#[from] serde_json::Error),
}
