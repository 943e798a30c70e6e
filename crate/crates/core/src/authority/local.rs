use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use serde_json::Value;

use super::AuthorizationServer;
use crate::resource::StatusTransport;

type Clock = Arc<dyn Fn() -> u64 + Send + Sync>;

/// Status transport that answers from authorization servers in the same
/// process, matched by their configured revocation-list and introspection
/// URLs.
#[derive(Clone)]
pub struct LocalAuthorities {
    servers: Vec<Arc<AuthorizationServer>>,
    clock: Clock,
}

impl fmt::Debug for LocalAuthorities {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LocalAuthorities")
            .field("servers", &self.servers)
            .finish_non_exhaustive()
    }
}

impl LocalAuthorities {
    pub fn new(servers: impl IntoIterator<Item = Arc<AuthorizationServer>>) -> Self {
        Self::with_clock(servers, crate::unix_now)
    }

    pub fn with_clock(
        servers: impl IntoIterator<Item = Arc<AuthorizationServer>>,
        clock: impl Fn() -> u64 + Send + Sync + 'static,
    ) -> Self {
        LocalAuthorities {
            servers: servers.into_iter().collect(),
            clock: Arc::new(clock),
        }
    }
}

impl StatusTransport for LocalAuthorities {
    fn fetch_revocation_list(&self, url: &str) -> Result<String, String> {
        self.servers
            .iter()
            .find(|s| s.config().revocation_list_url == url)
            .map(|s| s.revocation_list_credential((self.clock)()))
            .ok_or_else(|| format!("no local authority serves {url}"))
    }

    fn introspect(&self, url: &str, token: &str) -> Result<Value, String> {
        let server = self
            .servers
            .iter()
            .find(|s| s.config().introspection_endpoint == url)
            .ok_or_else(|| format!("no local authority serves {url}"))?;
        let form = HashMap::from([("token".to_owned(), token.to_owned())]);
        server
            .handle_introspection(&form, (self.clock)())
            .map_err(|e| e.to_string())
    }
}
