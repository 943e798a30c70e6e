//! Per-organization authorization server.
//!
//! Clients authenticate purely by proving possession of their key with a DPoP
//! proof; the key is then looked up in the access table and every capability
//! mapped to it goes into a freshly signed VC access token.

mod local;
mod store;
mod table;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

pub use local::LocalAuthorities;
pub use table::{load_access_table, AccessTable, SchemaError};

use crate::dpop::{DpopError, DpopVerifier, DEFAULT_WINDOW_SECS};
use crate::jose::{Jws, KeyPair, PublicKeyJwk, DEFAULT_SKEW_SECS};
use crate::revocation::{encode_list_credential, RevocationList, DEFAULT_LIST_BITS};
use crate::vc::{
    build_capability_vc, encode_vc_jwt, AccessTokenVc, CredentialDefinition, CredentialIds,
    Issuance, RevocationStatusRef,
};

pub const GRANT_CLIENT_CREDENTIALS: &str = "client_credentials";
pub const DEFAULT_TOKEN_LIFETIME: u64 = 864_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthorityConfig {
    /// `URL_AS`; becomes the `iss` of every token.
    pub issuer: String,
    pub token_endpoint: String,
    pub introspection_endpoint: String,
    pub revocation_list_url: String,
    /// Issued `jti`s are `<credential_id_base>/<n>`.
    pub credential_id_base: String,
    pub token_lifetime: u64,
    pub list_length: usize,
    pub definition: CredentialDefinition,
    pub dpop_window: u64,
    pub clock_skew: u64,
}

impl AuthorityConfig {
    /// Endpoints default to `<issuer>/token`, `<issuer>/introspect` and
    /// `<issuer>/revocation-list`.
    pub fn new(issuer: impl Into<String>, definition: CredentialDefinition) -> Self {
        let issuer = issuer.into().trim_end_matches('/').to_owned();
        AuthorityConfig {
            token_endpoint: format!("{issuer}/token"),
            introspection_endpoint: format!("{issuer}/introspect"),
            revocation_list_url: format!("{issuer}/revocation-list"),
            credential_id_base: format!("{issuer}/credentials"),
            issuer,
            token_lifetime: DEFAULT_TOKEN_LIFETIME,
            list_length: DEFAULT_LIST_BITS,
            definition,
            dpop_window: DEFAULT_WINDOW_SECS,
            clock_skew: DEFAULT_SKEW_SECS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OAuthErrorCode {
    InvalidRequest,
    InvalidDpopProof,
    InvalidClient,
    UnsupportedGrantType,
    ServerError,
}

impl OAuthErrorCode {
    pub fn as_str(self) -> &'static str {
        match self {
            OAuthErrorCode::InvalidRequest => "invalid_request",
            OAuthErrorCode::InvalidDpopProof => "invalid_dpop_proof",
            OAuthErrorCode::InvalidClient => "invalid_client",
            OAuthErrorCode::UnsupportedGrantType => "unsupported_grant_type",
            OAuthErrorCode::ServerError => "server_error",
        }
    }

    pub fn status(self) -> u16 {
        match self {
            OAuthErrorCode::InvalidClient => 401,
            OAuthErrorCode::ServerError => 500,
            _ => 400,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OAuthError {
    pub code: OAuthErrorCode,
    pub description: String,
    /// DPoP failure reason, for `invalid_dpop_proof`.
    pub dpop_reason: Option<&'static str>,
}

impl OAuthError {
    fn new(code: OAuthErrorCode, description: impl Into<String>) -> Self {
        OAuthError {
            code,
            description: description.into(),
            dpop_reason: None,
        }
    }

    fn dpop(err: DpopError) -> Self {
        OAuthError {
            code: OAuthErrorCode::InvalidDpopProof,
            description: err.to_string(),
            dpop_reason: Some(err.reason()),
        }
    }

    pub fn status(&self) -> u16 {
        self.code.status()
    }

    pub fn to_json(&self) -> Value {
        json!({"error": self.code.as_str(), "error_description": self.description})
    }
}

impl fmt::Display for OAuthError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code.as_str(), self.description)
    }
}

impl std::error::Error for OAuthError {}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenResponse {
    pub access_token: String,
    pub token_type: String,
    pub expires_in: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IssuedTokenRecord {
    pub jti: String,
    pub revocation_index: u64,
    pub subject: PublicKeyJwk,
    pub exp: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum AuthorityError {
    #[error("no token with jti {0:?}")]
    NotFound(String),
    #[error("state store: {0}")]
    Store(String),
    #[error(transparent)]
    Revocation(#[from] crate::revocation::RevocationError),
}

#[derive(Debug)]
struct IssuerState {
    list: RevocationList,
    records: HashMap<String, IssuedTokenRecord>,
    next_index: u64,
}

pub struct AuthorizationServer {
    config: AuthorityConfig,
    key: KeyPair,
    tables: RwLock<Arc<BTreeMap<String, AccessTable>>>,
    dpop: DpopVerifier,
    ids: CredentialIds,
    state: Mutex<IssuerState>,
    list_cache: Mutex<Option<(u64, String)>>,
    store: Option<PathBuf>,
}

impl fmt::Debug for AuthorizationServer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AuthorizationServer")
            .field("issuer", &self.config.issuer)
            .field("key", self.key.public())
            .finish_non_exhaustive()
    }
}

impl AuthorizationServer {
    /// `tables` maps resource-server identifiers to their access tables.
    pub fn new(
        config: AuthorityConfig,
        key: KeyPair,
        tables: BTreeMap<String, AccessTable>,
    ) -> Result<Self, AuthorityError> {
        let list = RevocationList::new(config.list_length)?;
        Ok(AuthorizationServer {
            ids: CredentialIds::new(config.credential_id_base.clone()),
            dpop: DpopVerifier::new(config.dpop_window, config.clock_skew),
            config,
            key,
            tables: RwLock::new(Arc::new(tables)),
            state: Mutex::new(IssuerState {
                list,
                records: HashMap::new(),
                next_index: 0,
            }),
            list_cache: Mutex::new(None),
            store: None,
        })
    }

    /// Like [`AuthorizationServer::new`], but issued-token state is persisted
    /// to `path` (and restored from it if it exists).
    pub fn with_store(
        config: AuthorityConfig,
        key: KeyPair,
        tables: BTreeMap<String, AccessTable>,
        path: impl Into<PathBuf>,
    ) -> Result<Self, AuthorityError> {
        let path = path.into();
        let mut server = Self::new(config, key, tables)?;
        if let Some(saved) = store::load(&path)? {
            let list = saved.list()?;
            if list.len_bits() != server.config.list_length {
                return Err(AuthorityError::Store(format!(
                    "stored list has {} bits, configured {}",
                    list.len_bits(),
                    server.config.list_length
                )));
            }
            server.ids = CredentialIds::starting_at(
                server.config.credential_id_base.clone(),
                saved.next_credential,
            );
            server.state = Mutex::new(IssuerState {
                list,
                records: saved
                    .records
                    .into_iter()
                    .map(|r| (r.jti.clone(), r))
                    .collect(),
                next_index: saved.next_index,
            });
        }
        server.store = Some(path);
        Ok(server)
    }

    pub fn config(&self) -> &AuthorityConfig {
        &self.config
    }

    pub fn public_key(&self) -> &PublicKeyJwk {
        self.key.public()
    }

    /// Atomically swaps in a new set of access tables.
    pub fn replace_tables(&self, tables: BTreeMap<String, AccessTable>) {
        *self.tables.write().unwrap_or_else(|e| e.into_inner()) = Arc::new(tables);
    }

    fn tables(&self) -> Arc<BTreeMap<String, AccessTable>> {
        self.tables
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .clone()
    }

    /// Client-credentials grant. Verifies the DPoP proof in the `dpop` form
    /// field against `method`/`uri`, looks up the proven key and issues a
    /// token carrying all of its capabilities. The optional `resource` field
    /// selects the access table when the server holds more than one.
    pub fn handle_token_request(
        &self,
        method: &str,
        uri: &str,
        form: &HashMap<String, String>,
        now: u64,
    ) -> Result<TokenResponse, OAuthError> {
        let grant = form
            .get("grant_type")
            .ok_or_else(|| OAuthError::new(OAuthErrorCode::InvalidRequest, "missing grant_type"))?;
        let proof = form
            .get("dpop")
            .ok_or_else(|| OAuthError::new(OAuthErrorCode::InvalidRequest, "missing dpop"))?;
        if grant != GRANT_CLIENT_CREDENTIALS {
            return Err(OAuthError::new(
                OAuthErrorCode::UnsupportedGrantType,
                format!("{grant:?} is not supported"),
            ));
        }
        if method != "POST" {
            return Err(OAuthError::new(
                OAuthErrorCode::InvalidRequest,
                "token requests must be POST",
            ));
        }

        let client = self
            .dpop
            .verify(proof, method, uri, now)
            .map_err(OAuthError::dpop)?;

        let tables = self.tables();
        let table = match form.get("resource") {
            Some(rs) => tables.get(rs).ok_or_else(|| {
                OAuthError::new(
                    OAuthErrorCode::InvalidRequest,
                    format!("unknown resource {rs:?}"),
                )
            })?,
            None if tables.len() == 1 => tables.values().next().expect("one table"),
            None => {
                return Err(OAuthError::new(
                    OAuthErrorCode::InvalidRequest,
                    "resource is required",
                ));
            }
        };
        let capabilities = table
            .lookup(&client)
            .ok_or_else(|| {
                OAuthError::new(
                    OAuthErrorCode::InvalidClient,
                    "client key is not registered",
                )
            })?
            .to_vec();

        let mut state = self.state.lock().unwrap_or_else(|e| e.into_inner());
        let index = state.next_index;
        if index >= state.list.len_bits() as u64 {
            return Err(OAuthError::new(
                OAuthErrorCode::ServerError,
                "revocation list exhausted",
            ));
        }
        let issuance = Issuance {
            issuer: self.config.issuer.clone(),
            jti: self.ids.next_id(),
            subject: client.clone(),
            capabilities,
            validity: self.config.token_lifetime,
            status: Some(RevocationStatusRef::new(
                index,
                self.config.revocation_list_url.clone(),
            )),
        };
        let claims = build_capability_vc(&self.config.definition, issuance, now)
            .map_err(|e| OAuthError::new(OAuthErrorCode::ServerError, e.to_string()))?;
        let access_token = encode_vc_jwt(&claims, &self.key)
            .map_err(|e| OAuthError::new(OAuthErrorCode::ServerError, e.to_string()))?;
        state.next_index += 1;
        state.records.insert(
            claims.jti.clone(),
            IssuedTokenRecord {
                jti: claims.jti.clone(),
                revocation_index: index,
                subject: client,
                exp: claims.exp,
            },
        );
        self.persist(&state)
            .map_err(|e| OAuthError::new(OAuthErrorCode::ServerError, e.to_string()))?;
        Ok(TokenResponse {
            access_token,
            token_type: "DPoP".into(),
            expires_in: claims.exp - now,
        })
    }

    /// Token introspection. Anything not issued by this server, expired or
    /// revoked is reported as `{"active": false}` with no further detail.
    pub fn handle_introspection(
        &self,
        form: &HashMap<String, String>,
        now: u64,
    ) -> Result<Value, OAuthError> {
        let token = form
            .get("token")
            .ok_or_else(|| OAuthError::new(OAuthErrorCode::InvalidRequest, "missing token"))?;
        Ok(match self.active_claims(token, now) {
            Some(claims) => json!({
                "active": true,
                "iss": claims.iss,
                "jti": claims.jti,
                "iat": claims.iat,
                "exp": claims.exp,
                "cnf": claims.cnf,
                "token_type": "DPoP",
            }),
            None => json!({"active": false}),
        })
    }

    fn active_claims(&self, token: &str, now: u64) -> Option<AccessTokenVc> {
        let jws = Jws::decode(token).ok()?;
        jws.verify(self.key.public()).ok()?;
        let claims = AccessTokenVc::from_payload(jws.payload).ok()?;
        if claims.iss != self.config.issuer || now > claims.exp {
            return None;
        }
        let state = self.state.lock().unwrap_or_else(|e| e.into_inner());
        let record = state.records.get(&claims.jti)?;
        if state
            .list
            .is_revoked(record.revocation_index)
            .unwrap_or(true)
        {
            return None;
        }
        Some(claims)
    }

    /// Sets the revocation bit of the token with id `jti`. Idempotent.
    pub fn revoke_token(&self, jti: &str) -> Result<(), AuthorityError> {
        self.set_revoked(jti, true)
    }

    /// Clears the revocation bit again.
    pub fn reinstate_token(&self, jti: &str) -> Result<(), AuthorityError> {
        self.set_revoked(jti, false)
    }

    fn set_revoked(&self, jti: &str, revoked: bool) -> Result<(), AuthorityError> {
        let mut state = self.state.lock().unwrap_or_else(|e| e.into_inner());
        let index = state
            .records
            .get(jti)
            .ok_or_else(|| AuthorityError::NotFound(jti.to_owned()))?
            .revocation_index;
        if revoked {
            state.list.revoke(index)?;
        } else {
            state.list.unrevoke(index)?;
        }
        self.persist(&state)
    }

    pub fn issued(&self, jti: &str) -> Option<IssuedTokenRecord> {
        self.state
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .records
            .get(jti)
            .cloned()
    }

    pub fn is_revoked(&self, index: u64) -> Result<bool, AuthorityError> {
        Ok(self
            .state
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .list
            .is_revoked(index)?)
    }

    /// The signed revocation list. Re-signed only when the list changed.
    pub fn revocation_list_credential(&self, now: u64) -> String {
        let (version, list) = {
            let state = self.state.lock().unwrap_or_else(|e| e.into_inner());
            (state.list.version(), state.list.clone())
        };
        let mut cache = self.list_cache.lock().unwrap_or_else(|e| e.into_inner());
        match cache.as_ref() {
            Some((v, compact)) if *v == version => compact.clone(),
            _ => {
                let compact = encode_list_credential(&list, &self.config.issuer, &self.key, now)
                    .expect("list credential payload always serializes");
                *cache = Some((version, compact.clone()));
                compact
            }
        }
    }

    fn persist(&self, state: &IssuerState) -> Result<(), AuthorityError> {
        let Some(path) = &self.store else {
            return Ok(());
        };
        let mut records: Vec<_> = state.records.values().cloned().collect();
        records.sort_by_key(|r| r.revocation_index);
        store::save(
            path,
            &store::SavedState {
                next_index: state.next_index,
                next_credential: self.ids.peek(),
                list_version: state.list.version(),
                list: state.list.encoded(),
                records,
            },
        )
    }
}
