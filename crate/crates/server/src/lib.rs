//! HTTP services around `capvc-core`: the per-organization authorization
//! server (`capvc-as`) and the multi-tenant resource server (`capvc-rs`).

pub mod authority_http;
pub mod config;
pub mod resource_http;
pub mod transport;

use std::sync::Arc;

use capvc_core::authority::{AuthorityError, AuthorizationServer};
use capvc_core::jose::{load_keypair, KeyFileError};
use capvc_core::resource::{ResourceServer, StatusTransport};

use crate::config::{AsFileConfig, ConfigError, RsFileConfig};

#[derive(Debug, thiserror::Error)]
pub enum StartupError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("signing key: {0}")]
    Key(#[from] KeyFileError),
    #[error(transparent)]
    Authority(#[from] AuthorityError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

pub fn build_authority(config: &AsFileConfig) -> Result<Arc<AuthorizationServer>, StartupError> {
    let key = load_keypair(&config.signing_key)?;
    let tables = config.access_tables()?;
    let server = match &config.state_file {
        Some(path) => {
            AuthorizationServer::with_store(config.authority_config(), key, tables, path)?
        }
        None => AuthorizationServer::new(config.authority_config(), key, tables)?,
    };
    Ok(Arc::new(server))
}

pub fn build_resource_server(
    config: &RsFileConfig,
    transport: Arc<dyn StatusTransport>,
) -> Result<Arc<ResourceServer>, StartupError> {
    let table = config.resource_table()?;
    std::fs::create_dir_all(&config.storage_root)?;
    Ok(Arc::new(ResourceServer::new(
        config.resource_config(),
        table,
        transport,
    )))
}

/// Resolves on Ctrl-C.
pub async fn shutdown_signal() {
    if let Err(e) = tokio::signal::ctrl_c().await {
        tracing::error!(error = %e, "cannot listen for shutdown signal");
        std::future::pending::<()>().await;
    }
}

pub fn init_logging() {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
}
