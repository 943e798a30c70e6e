//! Capability-based access control for multi-tenant resource servers.
//!
//! Access tokens are Verifiable Credentials encoded as EdDSA-signed JWTs.
//! Each token lists capabilities (a relative path plus `r`/`w`/`d` rights)
//! and is bound through its `cnf` claim to the client's Ed25519 key; the
//! client proves possession of that key with a DPoP proof on every request.
//!
//! - [`jose`]: JWK, JWS compact serialization, time windows.
//! - [`dpop`]: proof construction, verification and replay protection.
//! - [`vc`]: credential claims, credential definitions, presentations.
//! - [`revocation`]: bitstring revocation lists and their signed form.
//! - [`authority`]: the per-organization authorization server.
//! - [`resource`]: the multi-tenant resource server.

pub mod authority;
pub mod dpop;
pub mod jose;
pub mod resource;
pub mod revocation;
pub mod vc;

use std::time::{SystemTime, UNIX_EPOCH};

/// Current time in unix seconds.
pub fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}
