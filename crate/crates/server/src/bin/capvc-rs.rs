use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use capvc_server::config::{RsFileConfig, DEFAULT_MAX_BODY_BYTES};
use capvc_server::transport::HttpStatusTransport;
use capvc_server::{build_resource_server, init_logging, resource_http, shutdown_signal};
use clap::Parser;

/// Multi-tenant file server guarded by capability VC access tokens.
#[derive(Debug, Parser)]
#[command(version)]
struct Args {
    /// JSON configuration file.
    #[arg(long, env = "CAPVC_RS_CONFIG")]
    config: PathBuf,
}

fn main() -> ExitCode {
    init_logging();
    let args = Args::parse();
    let config = match RsFileConfig::load(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("capvc-rs: {e}");
            return ExitCode::from(2);
        }
    };
    let runtime = tokio::runtime::Runtime::new().expect("tokio runtime");
    let transport =
        match HttpStatusTransport::new(runtime.handle().clone(), Duration::from_secs(10)) {
            Ok(t) => t,
            Err(e) => {
                eprintln!("capvc-rs: {e}");
                return ExitCode::from(2);
            }
        };
    let server = match build_resource_server(&config, Arc::new(transport)) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("capvc-rs: {e}");
            return ExitCode::from(2);
        }
    };
    let result = runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(config.listen).await?;
        tracing::info!(base = %config.base_url, addr = %listener.local_addr()?, tenants = server.table().len(), "resource server listening");
        let app = resource_http::router(server, config.max_body_bytes.unwrap_or(DEFAULT_MAX_BODY_BYTES));
        axum::serve(listener, app).with_graceful_shutdown(shutdown_signal()).await
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("capvc-rs: {e}");
            ExitCode::from(3)
        }
    }
}
