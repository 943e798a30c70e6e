//! Multi-tenant file store guarded by VC access tokens.
//!
//! Each path prefix in the [`ResourceTable`] belongs to one organization
//! whose AS signs the tokens for it. Capability paths inside a token are
//! relative to that prefix.

mod status;
mod table;
mod verify;

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use serde_json::json;

pub use status::{NoTransport, RevocationCache, StatusTransport};
pub use table::{
    is_under, join_prefix, load_resource_table, normalize_path, PathError, ResourceTable,
    TenantEntry,
};
pub use verify::{evaluate_capabilities, Grant, ProofContext, VerifyError};

use crate::dpop::{DpopVerifier, DEFAULT_WINDOW_SECS};
use crate::jose::DEFAULT_SKEW_SECS;
use crate::vc::{parse_presentation, CredentialDefinition, Presentation, Right};

pub const DEFAULT_REVOCATION_MAX_AGE: u64 = 300;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResourceConfig {
    /// Externally visible origin; DPoP `htu` is this plus the request path.
    pub base_url: String,
    pub storage_root: PathBuf,
    pub definition: CredentialDefinition,
    pub dpop_window: u64,
    pub clock_skew: u64,
    pub revocation_max_age: u64,
    /// Accept tokens whose status cannot be determined (logged).
    pub fail_open: bool,
}

impl ResourceConfig {
    pub fn new(
        base_url: impl Into<String>,
        storage_root: impl Into<PathBuf>,
        definition: CredentialDefinition,
    ) -> Self {
        ResourceConfig {
            base_url: base_url.into().trim_end_matches('/').to_owned(),
            storage_root: storage_root.into(),
            definition,
            dpop_window: DEFAULT_WINDOW_SECS,
            clock_skew: DEFAULT_SKEW_SECS,
            revocation_max_age: DEFAULT_REVOCATION_MAX_AGE,
            fail_open: false,
        }
    }
}

/// HTTP method to required right: GET r, PUT/POST w, DELETE d.
pub fn operation_for(method: &str) -> Option<Right> {
    match method {
        "GET" => Some(Right::Read),
        "PUT" | "POST" => Some(Right::Write),
        "DELETE" => Some(Right::Delete),
        _ => None,
    }
}

#[derive(Debug, Clone, Default)]
pub struct ResourceRequest {
    pub method: String,
    /// Path as it appeared on the request line (may be percent-encoded).
    pub path: String,
    /// Raw `Authorization` header.
    pub authorization: Option<String>,
    /// Raw `DPoP` header.
    pub dpop: Option<String>,
    pub body: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResourceResponse {
    pub status: u16,
    pub body: Vec<u8>,
    pub content_type: &'static str,
    pub www_authenticate: Option<String>,
}

impl ResourceResponse {
    fn ok(body: Vec<u8>) -> Self {
        ResourceResponse {
            status: 200,
            body,
            content_type: "application/octet-stream",
            www_authenticate: None,
        }
    }

    fn empty(status: u16) -> Self {
        ResourceResponse {
            status,
            body: Vec::new(),
            content_type: "application/octet-stream",
            www_authenticate: None,
        }
    }

    fn error(status: u16, error: &str, description: impl fmt::Display) -> Self {
        ResourceResponse {
            status,
            body: json!({"error": error, "error_description": description.to_string()})
                .to_string()
                .into_bytes(),
            content_type: "application/json",
            www_authenticate: None,
        }
    }

    fn unauthorized(reason: &str, description: impl fmt::Display) -> Self {
        let mut resp = Self::error(401, reason, description);
        resp.www_authenticate = Some(format!("DPoP error=\"{reason}\""));
        resp
    }
}

pub struct ResourceServer {
    config: ResourceConfig,
    table: ResourceTable,
    dpop: DpopVerifier,
    revocation: RevocationCache,
    transport: Arc<dyn StatusTransport>,
    write_locks: Mutex<HashMap<PathBuf, Arc<Mutex<()>>>>,
}

impl fmt::Debug for ResourceServer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ResourceServer")
            .field("base_url", &self.config.base_url)
            .field("table", &self.table)
            .finish_non_exhaustive()
    }
}

impl ResourceServer {
    pub fn new(
        config: ResourceConfig,
        table: ResourceTable,
        transport: Arc<dyn StatusTransport>,
    ) -> Self {
        ResourceServer {
            dpop: DpopVerifier::new(config.dpop_window, config.clock_skew),
            revocation: RevocationCache::new(config.revocation_max_age),
            config,
            table,
            transport,
            write_locks: Mutex::new(HashMap::new()),
        }
    }

    pub fn config(&self) -> &ResourceConfig {
        &self.config
    }

    pub fn table(&self) -> &ResourceTable {
        &self.table
    }

    pub fn revocation_cache(&self) -> &RevocationCache {
        &self.revocation
    }

    /// The URI a client's DPoP proof must carry for `raw_path`.
    pub fn request_uri(&self, raw_path: &str) -> String {
        format!("{}{}", self.config.base_url, raw_path)
    }

    /// Verifies whatever was presented (single token or presentation) and
    /// returns the grants that apply to the tenant at `prefix`.
    pub fn authorize(
        &self,
        token: &str,
        proof: ProofContext<'_>,
        prefix: &str,
        entry: &TenantEntry,
        now: u64,
    ) -> Result<Vec<Grant>, VerifyError> {
        match parse_presentation(token) {
            Ok(Presentation::Multi(_)) => {
                self.verify_vp_token(token, proof, &self.table, Some(prefix), now)
            }
            // Single tokens and anything unparseable go down the single-token
            // path, which reports the precise failure.
            _ => Ok(vec![Grant {
                issuer: entry.as_url.clone(),
                prefix: prefix.to_owned(),
                capabilities: self.verify_access_token(token, proof, entry, now)?,
            }]),
        }
    }

    /// Full request pipeline: resolve tenant, verify token and proof, check
    /// capabilities, then read, write or delete the file.
    pub fn handle_resource_request(&self, request: &ResourceRequest, now: u64) -> ResourceResponse {
        let Some(operation) = operation_for(&request.method) else {
            return ResourceResponse::error(405, "method_not_allowed", &request.method);
        };
        let path = match normalize_path(request.path.split('?').next().unwrap_or_default()) {
            Ok(p) => p,
            Err(e) => return ResourceResponse::error(400, "invalid_path", e),
        };
        let Some((prefix, entry)) = self.table.resolve(&path) else {
            return ResourceResponse::error(
                404,
                VerifyError::UnknownResource.reason(),
                VerifyError::UnknownResource,
            );
        };
        let Some(token) = request
            .authorization
            .as_deref()
            .and_then(|h| h.strip_prefix("DPoP "))
            .map(str::trim)
        else {
            return ResourceResponse::unauthorized(
                "invalid_token",
                "expected Authorization: DPoP <token>",
            );
        };
        let Some(proof) = request.dpop.as_deref().map(str::trim) else {
            return ResourceResponse::unauthorized("invalid_dpop_proof", "missing DPoP header");
        };
        let uri = self.request_uri(&request.path);
        let context = ProofContext {
            proof,
            method: &request.method,
            uri: &uri,
        };
        let grants = match self.authorize(token, context, prefix, entry, now) {
            Ok(g) => g,
            Err(e) => return ResourceResponse::unauthorized(e.reason(), e),
        };
        let allowed = grants
            .iter()
            .filter(|g| g.prefix == prefix && g.issuer == entry.as_url)
            .any(|g| evaluate_capabilities(&g.capabilities, operation, &path, prefix));
        if !allowed {
            return ResourceResponse::error(
                403,
                "insufficient_capabilities",
                format!("no capability grants {operation} on {path}"),
            );
        }
        if path == prefix {
            return ResourceResponse::error(
                403,
                "insufficient_capabilities",
                "the tenant root is not a file",
            );
        }
        self.perform(operation, &path, &request.body)
    }

    fn disk_path(&self, path: &str) -> PathBuf {
        self.config.storage_root.join(path.trim_start_matches('/'))
    }

    fn perform(&self, operation: Right, path: &str, body: &[u8]) -> ResourceResponse {
        let file = self.disk_path(path);
        let result = match operation {
            Right::Read => match fs::metadata(&file) {
                Ok(m) if m.is_file() => fs::read(&file).map(ResourceResponse::ok),
                Ok(_) => Err(io::ErrorKind::NotFound.into()),
                Err(e) => Err(e),
            },
            Right::Write => self
                .write_file(&file, body)
                .map(|()| ResourceResponse::empty(200)),
            Right::Delete => {
                let handle = self.lock_path(&file);
                let _held = handle.lock.lock().unwrap_or_else(|e| e.into_inner());
                fs::remove_file(&file).map(|()| ResourceResponse::empty(204))
            }
        };
        match result {
            Ok(resp) => resp,
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                ResourceResponse::error(404, "not_found", path)
            }
            Err(e) => {
                tracing::error!(path, error = %e, "storage failure");
                ResourceResponse::error(500, "storage_error", "storage failure")
            }
        }
    }

    fn lock_path(&self, file: &Path) -> PathLock<'_> {
        let lock = self
            .write_locks
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .entry(file.to_path_buf())
            .or_default()
            .clone();
        PathLock {
            server: self,
            path: file.to_path_buf(),
            lock,
        }
    }

    /// Writes via a temporary sibling and a rename, one writer per path.
    fn write_file(&self, file: &Path, body: &[u8]) -> io::Result<()> {
        let handle = self.lock_path(file);
        let _held = handle.lock.lock().unwrap_or_else(|e| e.into_inner());
        if file.is_dir() {
            return Err(io::Error::new(
                io::ErrorKind::IsADirectory,
                "target is a directory",
            ));
        }
        let parent = file
            .parent()
            .ok_or_else(|| io::Error::from(io::ErrorKind::InvalidInput))?;
        fs::create_dir_all(parent)?;
        let mut tmp = tempfile_in(parent)?;
        tmp.1.write_all(body)?;
        tmp.1.sync_all()?;
        fs::rename(&tmp.0, file).inspect_err(|_| {
            let _ = fs::remove_file(&tmp.0);
        })
    }
}

struct PathLock<'a> {
    server: &'a ResourceServer,
    path: PathBuf,
    lock: Arc<Mutex<()>>,
}

impl Drop for PathLock<'_> {
    fn drop(&mut self) {
        let mut locks = self
            .server
            .write_locks
            .lock()
            .unwrap_or_else(|e| e.into_inner());
        // Ours plus the map's: nobody else is waiting on this path.
        if Arc::strong_count(&self.lock) == 2 {
            locks.remove(&self.path);
        }
    }
}

fn tempfile_in(dir: &Path) -> io::Result<(PathBuf, fs::File)> {
    let mut suffix = [0u8; 8];
    getrandom::getrandom(&mut suffix).map_err(|e| io::Error::other(e.to_string()))?;
    let path = dir.join(format!(".upload-{}", hex::encode(suffix)));
    let file = fs::OpenOptions::new()
        .write(true)
        .create_new(true)
        .open(&path)?;
    Ok((path, file))
}
