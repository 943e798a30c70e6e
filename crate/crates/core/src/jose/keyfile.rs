use std::fs;
use std::io::{self, Write};
use std::path::Path;

use super::{JoseError, KeyPair, PrivateKeyJwk};

#[derive(Debug, thiserror::Error)]
pub enum KeyFileError {
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("{path}: not a private Ed25519 JWK: {reason}")]
    Format { path: String, reason: String },
}

impl KeyFileError {
    pub fn is_already_exists(&self) -> bool {
        matches!(self, KeyFileError::Io { source, .. } if source.kind() == io::ErrorKind::AlreadyExists)
    }
}

/// Writes `pair` as a private JWK readable only by the owner. An existing
/// file is left untouched unless `overwrite` is set.
pub fn save_keypair(path: &Path, pair: &KeyPair, overwrite: bool) -> Result<(), KeyFileError> {
    let io_err = |source| KeyFileError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut options = fs::OpenOptions::new();
    options.write(true);
    if overwrite {
        options.create(true).truncate(true);
    } else {
        options.create_new(true);
    }
    #[cfg(unix)]
    {
        use std::os::unix::fs::OpenOptionsExt;
        options.mode(0o600);
    }
    let mut file = options.open(path).map_err(io_err)?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        // mode() only applies on creation
        file.set_permissions(fs::Permissions::from_mode(0o600))
            .map_err(io_err)?;
    }
    let json = serde_json::to_string_pretty(&pair.to_private_jwk())
        .map_err(|e| io_err(io::Error::other(e)))?;
    file.write_all(json.as_bytes()).map_err(io_err)?;
    file.write_all(b"\n").map_err(io_err)?;
    file.sync_all().map_err(io_err)
}

pub fn load_keypair(path: &Path) -> Result<KeyPair, KeyFileError> {
    let text = fs::read_to_string(path).map_err(|source| KeyFileError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let format = |reason: String| KeyFileError::Format {
        path: path.display().to_string(),
        reason,
    };
    let jwk: PrivateKeyJwk = serde_json::from_str(&text).map_err(|e| format(e.to_string()))?;
    KeyPair::from_private_jwk(&jwk).map_err(|e: JoseError| format(e.to_string()))
}
