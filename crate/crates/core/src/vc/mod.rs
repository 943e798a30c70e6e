//! Verifiable Credentials carried as JWT access tokens, and presentations
//! combining several of them.

mod capability;
mod credential;
mod presentation;

pub use capability::{validate_relative_path, Capability, Right};
pub use credential::{
    build_capability_vc, decode_vc_jwt, encode_vc_jwt, validate_credential_definition,
    AccessTokenVc, Confirmation, CredentialDefinition, CredentialIds, DefinitionReject, Issuance,
    RevocationStatusRef, VcObject, ACCESS_TOKEN_TYP, REVOCATION_LIST_STATUS, VERIFIABLE_CREDENTIAL,
    W3C_CREDENTIALS_CONTEXT,
};
pub use presentation::{
    build_vp, holder_digest, parse_presentation, peek_access_token, Presentation,
    VerifiablePresentation,
};

use crate::jose::JoseError;

#[derive(Debug, thiserror::Error)]
pub enum VcError {
    #[error("no capabilities to grant")]
    EmptyCapabilities,
    #[error("invalid capability: {0}")]
    InvalidCapability(String),
    #[error("validity of {0}s does not give exp > iat")]
    InvalidValidity(u64),
    #[error("malformed token: {0}")]
    MalformedToken(String),
    #[error("token is bound to a different key")]
    CnfMismatch,
    #[error("presentation has no tokens")]
    EmptyTokenList,
    #[error("presentations cannot be nested")]
    NestedPresentation,
    #[error("invalid credential status: {0}")]
    InvalidStatus(String),
    #[error("invalid credential definition: {0}")]
    InvalidDefinition(String),
    #[error(transparent)]
    Jose(JoseError),
}

impl From<JoseError> for VcError {
    fn from(e: JoseError) -> Self {
        match e {
            JoseError::Malformed(m) => VcError::MalformedToken(m),
            other => VcError::Jose(other),
        }
    }
}
