use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::ClientError;

pub const CONFIG_ENV: &str = "CAPVC_CONFIG";
pub const DEFAULT_CONFIG_FILE: &str = "capvc.json";

/// One authorization server the client can obtain tokens from.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AsEndpoint {
    pub token_endpoint: String,
    /// Base URL of the resource server the tokens are meant for.
    pub resource_server: String,
    /// Access-table identifier sent as the `resource` form field.
    #[serde(default)]
    pub resource: Option<String>,
}

/// ```json
/// {
///   "key": "client-key.json",
///   "cache_dir": "cache",
///   "authorization_servers": {
///     "org1": { "token_endpoint": "https://org1.example/as/token",
///               "resource_server": "https://cloud.example", "resource": "cloud" }
///   }
/// }
/// ```
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClientConfig {
    pub key: PathBuf,
    pub cache_dir: PathBuf,
    #[serde(default)]
    pub authorization_servers: BTreeMap<String, AsEndpoint>,
}

impl ClientConfig {
    /// Relative paths are resolved against the config file's directory.
    pub fn load(path: &Path) -> Result<Self, ClientError> {
        let text = fs::read_to_string(path)
            .map_err(|e| ClientError::Config(format!("{}: {e}", path.display())))?;
        let mut config: ClientConfig = serde_json::from_str(&text)
            .map_err(|e| ClientError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        if config.key.is_relative() {
            config.key = base.join(&config.key);
        }
        if config.cache_dir.is_relative() {
            config.cache_dir = base.join(&config.cache_dir);
        }
        Ok(config)
    }

    /// Explicit path, else `$CAPVC_CONFIG`, else `./capvc.json`.
    pub fn locate(explicit: Option<&Path>) -> PathBuf {
        explicit
            .map(Path::to_path_buf)
            .or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_CONFIG_FILE))
    }

    pub fn endpoint(&self, name: &str) -> Result<&AsEndpoint, ClientError> {
        self.authorization_servers.get(name).ok_or_else(|| {
            ClientError::Config(format!(
                "no authorization server named {name:?} in the config"
            ))
        })
    }
}
