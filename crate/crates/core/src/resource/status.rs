use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use serde_json::Value;

use super::TenantEntry;
use crate::revocation::{decode_list_credential, RevocationList};

/// How the resource server reaches authorization servers for token status.
pub trait StatusTransport: Send + Sync {
    /// GET the signed revocation list credential at `url`.
    fn fetch_revocation_list(&self, url: &str) -> Result<String, String>;
    /// POST `token` to an introspection endpoint and return the JSON body.
    fn introspect(&self, url: &str, token: &str) -> Result<Value, String>;
}

#[derive(Debug, Clone)]
struct CachedList {
    list: Arc<RevocationList>,
    fetched_at: u64,
}

/// Downloaded revocation lists keyed by URL, refetched after `max_age`.
#[derive(Debug)]
pub struct RevocationCache {
    max_age: u64,
    lists: Mutex<HashMap<String, CachedList>>,
}

impl RevocationCache {
    pub fn new(max_age: u64) -> Self {
        RevocationCache {
            max_age,
            lists: Mutex::new(HashMap::new()),
        }
    }

    /// Returns a list no older than `max_age`, fetching it if needed. The
    /// credential must be signed by the tenant's AS key and name its URL as
    /// issuer.
    pub fn get(
        &self,
        url: &str,
        entry: &TenantEntry,
        transport: &dyn StatusTransport,
        now: u64,
    ) -> Result<Arc<RevocationList>, String> {
        if let Some(cached) = self
            .lists
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .get(url)
        {
            if now.saturating_sub(cached.fetched_at) <= self.max_age {
                return Ok(cached.list.clone());
            }
        }
        let compact = transport.fetch_revocation_list(url)?;
        let credential =
            decode_list_credential(&compact, &entry.as_key).map_err(|e| e.to_string())?;
        if credential.iss != entry.as_url {
            return Err(format!(
                "list issued by {:?}, expected {:?}",
                credential.iss, entry.as_url
            ));
        }
        let list = Arc::new(credential.list().map_err(|e| e.to_string())?);
        self.lists.lock().unwrap_or_else(|e| e.into_inner()).insert(
            url.to_owned(),
            CachedList {
                list: list.clone(),
                fetched_at: now,
            },
        );
        Ok(list)
    }

    pub fn invalidate(&self) {
        self.lists.lock().unwrap_or_else(|e| e.into_inner()).clear();
    }
}

/// Transport for deployments without any status checking.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoTransport;

impl StatusTransport for NoTransport {
    fn fetch_revocation_list(&self, url: &str) -> Result<String, String> {
        Err(format!("no transport configured to fetch {url}"))
    }

    fn introspect(&self, url: &str, _token: &str) -> Result<Value, String> {
        Err(format!("no transport configured to reach {url}"))
    }
}
