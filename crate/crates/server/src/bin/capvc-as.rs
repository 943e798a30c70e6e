use std::path::PathBuf;
use std::process::ExitCode;

use capvc_core::jose::{save_keypair, KeyPair};
use capvc_server::config::AsFileConfig;
use capvc_server::{authority_http, build_authority, init_logging, shutdown_signal};
use clap::Parser;

/// Authorization server issuing capability VC access tokens.
#[derive(Debug, Parser)]
#[command(version)]
struct Args {
    /// JSON configuration file.
    #[arg(long, env = "CAPVC_AS_CONFIG")]
    config: PathBuf,
    /// Create the signing key named in the config if it does not exist.
    #[arg(long)]
    init_key: bool,
    /// Print the AS public JWK (for resource tables) and exit.
    #[arg(long)]
    print_public_key: bool,
}

fn main() -> ExitCode {
    init_logging();
    let args = Args::parse();
    let config = match AsFileConfig::load(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("capvc-as: {e}");
            return ExitCode::from(2);
        }
    };
    if args.init_key && !config.signing_key.exists() {
        let created = KeyPair::generate()
            .map_err(|e| e.to_string())
            .and_then(|k| save_keypair(&config.signing_key, &k, false).map_err(|e| e.to_string()));
        if let Err(e) = created {
            eprintln!("capvc-as: {e}");
            return ExitCode::from(2);
        }
    }
    let server = match build_authority(&config) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("capvc-as: {e}");
            return ExitCode::from(2);
        }
    };
    if args.print_public_key {
        println!("{}", server.public_key().canonical_json());
        return ExitCode::SUCCESS;
    }
    let runtime = tokio::runtime::Runtime::new().expect("tokio runtime");
    let result = runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(config.listen).await?;
        tracing::info!(issuer = %config.base_url, addr = %listener.local_addr()?, key = %server.public_key().canonical_json(), "authorization server listening");
        axum::serve(listener, authority_http::router(server, config.admin_token.clone()))
            .with_graceful_shutdown(shutdown_signal())
            .await
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("capvc-as: {e}");
            ExitCode::from(3)
        }
    }
}
