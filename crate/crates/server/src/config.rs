//! JSON configuration files for the two services. Relative paths inside a
//! config file are resolved against the file's directory.

use std::collections::BTreeMap;
use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use capvc_core::authority::{load_access_table, AccessTable, AuthorityConfig, SchemaError};
use capvc_core::resource::{load_resource_table, ResourceConfig, ResourceTable};
use capvc_core::vc::CredentialDefinition;
use serde::Deserialize;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: String,
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Schema { path: String, source: SchemaError },
    #[error("{0}")]
    Invalid(String),
}

fn read(path: &Path) -> Result<String, ConfigError> {
    fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn parse<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, ConfigError> {
    serde_json::from_str(&read(path)?).map_err(|source| ConfigError::Parse {
        path: path.display().to_string(),
        source,
    })
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn base_dir(config_path: &Path) -> PathBuf {
    config_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default()
}

/// ```json
/// {
///   "base_url": "https://org1.example/as",
///   "listen": "127.0.0.1:8081",
///   "signing_key": "as-key.json",
///   "access_tables": { "cloud": "org1-cloud.json" },
///   "definition": { "type": "capabilities", "context": "https://org1.example/contexts/capabilities/v1" }
/// }
/// ```
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AsFileConfig {
    /// `URL_AS`: token issuer and prefix of every endpoint.
    pub base_url: String,
    pub listen: SocketAddr,
    pub signing_key: PathBuf,
    /// Access-table files keyed by resource-server identifier.
    pub access_tables: BTreeMap<String, PathBuf>,
    pub definition: CredentialDefinition,
    #[serde(default)]
    pub token_lifetime: Option<u64>,
    #[serde(default)]
    pub list_length: Option<usize>,
    /// Issued-token state survives restarts when set.
    #[serde(default)]
    pub state_file: Option<PathBuf>,
    /// Enables `POST {base}/revoke` for callers presenting this bearer token.
    #[serde(default)]
    pub admin_token: Option<String>,
}

impl AsFileConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let mut config: AsFileConfig = parse(path)?;
        let base = base_dir(path);
        config.signing_key = resolve(&base, &config.signing_key);
        for table in config.access_tables.values_mut() {
            *table = resolve(&base, table);
        }
        config.state_file = config.state_file.map(|p| resolve(&base, &p));
        Ok(config)
    }

    pub fn authority_config(&self) -> AuthorityConfig {
        let mut config = AuthorityConfig::new(&self.base_url, self.definition.clone());
        if let Some(lifetime) = self.token_lifetime {
            config.token_lifetime = lifetime;
        }
        if let Some(bits) = self.list_length {
            config.list_length = bits;
        }
        config
    }

    /// Loads every access table; any bad file fails the whole load.
    pub fn access_tables(&self) -> Result<BTreeMap<String, AccessTable>, ConfigError> {
        self.access_tables
            .iter()
            .map(|(rs, path)| {
                let table =
                    load_access_table(&read(path)?).map_err(|source| ConfigError::Schema {
                        path: path.display().to_string(),
                        source,
                    })?;
                Ok((rs.clone(), table))
            })
            .collect()
    }
}

/// ```json
/// {
///   "base_url": "https://cloud.example",
///   "listen": "127.0.0.1:8080",
///   "storage_root": "data",
///   "resource_table": "resources.json",
///   "definition": { "type": "capabilities", "context": "https://org1.example/contexts/capabilities/v1" }
/// }
/// ```
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RsFileConfig {
    /// Externally visible origin; DPoP proofs must name `base_url` + path.
    pub base_url: String,
    pub listen: SocketAddr,
    pub storage_root: PathBuf,
    pub resource_table: PathBuf,
    pub definition: CredentialDefinition,
    #[serde(default)]
    pub revocation_max_age: Option<u64>,
    #[serde(default)]
    pub fail_open: bool,
    #[serde(default)]
    pub max_body_bytes: Option<usize>,
}

pub const DEFAULT_MAX_BODY_BYTES: usize = 64 * 1024 * 1024;

impl RsFileConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let mut config: RsFileConfig = parse(path)?;
        let base = base_dir(path);
        config.storage_root = resolve(&base, &config.storage_root);
        config.resource_table = resolve(&base, &config.resource_table);
        Ok(config)
    }

    pub fn resource_config(&self) -> ResourceConfig {
        let mut config =
            ResourceConfig::new(&self.base_url, &self.storage_root, self.definition.clone());
        if let Some(age) = self.revocation_max_age {
            config.revocation_max_age = age;
        }
        config.fail_open = self.fail_open;
        config
    }

    pub fn resource_table(&self) -> Result<ResourceTable, ConfigError> {
        load_resource_table(&read(&self.resource_table)?).map_err(|source| ConfigError::Schema {
            path: self.resource_table.display().to_string(),
            source,
        })
    }
}
