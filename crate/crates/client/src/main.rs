use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use capvc_client::{Client, ClientConfig, ClientError, TokenCache};
use capvc_core::jose::{load_keypair, save_keypair, KeyPair};
use capvc_core::unix_now;
use clap::{Args, Parser, Subcommand};
use tokio::io::AsyncReadExt;

/// Client for capability VC access tokens.
///
/// Exit codes: 0 success, 1 refused by a server, 2 usage or configuration
/// error, 3 network error.
#[derive(Debug, Parser)]
#[command(name = "capvc", version)]
struct Cli {
    /// Configuration file [default: $CAPVC_CONFIG, then ./capvc.json].
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Create a keypair file and print its public JWK.
    Keygen {
        /// Output file [default: the config's key path].
        out: Option<PathBuf>,
        /// Replace an existing file.
        #[arg(long)]
        force: bool,
    },
    /// Obtain (or reuse a cached) access token and print it.
    Token {
        /// Authorization server name from the config.
        name: String,
        /// Re-request a token whose cached copy has expired.
        #[arg(long)]
        auto_renew: bool,
        /// Ignore the cache and always ask the AS.
        #[arg(long)]
        fresh: bool,
        /// Also write the token to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Combine token files into one presentation and print it.
    Combine {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Read a resource.
    Get(Access),
    /// Write a resource (body from --body or stdin).
    Put(Access),
    /// Delete a resource.
    Delete(Access),
}

#[derive(Debug, Args)]
struct Access {
    url: String,
    /// File holding a token or presentation.
    #[arg(long, conflicts_with = "name")]
    token: Option<PathBuf>,
    /// Use the cached token of this AS; repeat to send a presentation.
    #[arg(long = "as", value_name = "NAME")]
    name: Vec<String>,
    /// Request body file (put).
    #[arg(long)]
    body: Option<PathBuf>,
    /// Write the response body here instead of stdout (get).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    auto_renew: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let runtime = match tokio::runtime::Builder::new_current_thread()
        .enable_all()
        .build()
    {
        Ok(r) => r,
        Err(e) => {
            eprintln!("capvc: {e}");
            return ExitCode::from(2);
        }
    };
    match runtime.block_on(run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("capvc: {e}");
            if let ClientError::Refused { body, .. } = &e {
                if let Ok(text) = std::str::from_utf8(body) {
                    if !text.is_empty() {
                        eprintln!("{text}");
                    }
                }
            }
            ExitCode::from(e.exit_code())
        }
    }
}

fn load_config(explicit: Option<&Path>) -> Result<ClientConfig, ClientError> {
    ClientConfig::load(&ClientConfig::locate(explicit))
}

fn read_token_file(path: &Path) -> Result<String, ClientError> {
    let text = fs::read_to_string(path)
        .map_err(|e| ClientError::Config(format!("{}: {e}", path.display())))?;
    Ok(text.trim().to_owned())
}

fn emit(text: &str, out: Option<&Path>) -> Result<(), ClientError> {
    if let Some(path) = out {
        fs::write(path, format!("{text}\n"))?;
    }
    println!("{text}");
    Ok(())
}

async fn run(cli: Cli) -> Result<(), ClientError> {
    let config_path = cli.config.as_deref();
    match cli.command {
        Command::Keygen { out, force } => {
            let out = match out {
                Some(p) => p,
                None => load_config(config_path)?.key,
            };
            let pair = KeyPair::generate().map_err(|e| ClientError::Config(e.to_string()))?;
            save_keypair(&out, &pair, force).map_err(|e| {
                if e.is_already_exists() {
                    ClientError::Config(format!(
                        "{} exists; pass --force to replace it",
                        out.display()
                    ))
                } else {
                    e.into()
                }
            })?;
            println!("{}", pair.public().canonical_json());
            Ok(())
        }
        Command::Token {
            name,
            auto_renew,
            fresh,
            out,
        } => {
            let config = load_config(config_path)?;
            let client = Client::new(load_keypair(&config.key)?)?;
            let cache = TokenCache::new(&config.cache_dir);
            let endpoint = config.endpoint(&name)?;
            let token = if fresh {
                client
                    .fetch_and_cache(&cache, &name, endpoint, unix_now())
                    .await?
            } else {
                client
                    .token(&cache, &name, endpoint, auto_renew, unix_now())
                    .await?
            };
            emit(&token, out.as_deref())
        }
        Command::Combine { files, out } => {
            let config = load_config(config_path)?;
            let client = Client::new(load_keypair(&config.key)?)?;
            let tokens = files
                .iter()
                .map(|f| read_token_file(f))
                .collect::<Result<Vec<_>, _>>()?;
            emit(&client.combine(&tokens, unix_now())?, out.as_deref())
        }
        Command::Get(a) => access("GET", a, config_path).await,
        Command::Put(a) => access("PUT", a, config_path).await,
        Command::Delete(a) => access("DELETE", a, config_path).await,
    }
}

async fn access(method: &str, args: Access, config_path: Option<&Path>) -> Result<(), ClientError> {
    let config = load_config(config_path)?;
    let client = Client::new(load_keypair(&config.key)?)?;
    let now = unix_now();
    let token = match (&args.token, args.name.as_slice()) {
        (Some(file), _) => read_token_file(file)?,
        (None, []) => return Err(ClientError::Config("pass --token FILE or --as NAME".into())),
        (None, names) => {
            let cache = TokenCache::new(&config.cache_dir);
            let mut tokens = Vec::with_capacity(names.len());
            for name in names {
                tokens.push(
                    client
                        .token(&cache, name, config.endpoint(name)?, args.auto_renew, now)
                        .await?,
                );
            }
            if tokens.len() == 1 {
                tokens.pop().expect("one token")
            } else {
                client.combine(&tokens, now)?
            }
        }
    };
    let body = match (method, &args.body) {
        ("PUT", Some(path)) => Some(fs::read(path)?),
        ("PUT", None) => {
            let mut buf = Vec::new();
            tokio::io::stdin().read_to_end(&mut buf).await?;
            Some(buf)
        }
        _ => None,
    };
    let resp = client.access(method, &args.url, &token, body, now).await?;
    match &args.out {
        Some(path) => fs::write(path, &resp.body)?,
        None => std::io::stdout().write_all(&resp.body)?,
    }
    eprintln!("{} {}", resp.status, args.url);
    Ok(())
}
