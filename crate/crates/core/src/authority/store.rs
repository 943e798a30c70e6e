//! JSON-file persistence of issued-token state.

use std::fs;
use std::io::Write;
use std::path::Path;

use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{AuthorityError, IssuedTokenRecord};
use crate::revocation::RevocationList;

#[derive(Debug, Serialize, Deserialize)]
pub(super) struct SavedState {
    pub next_index: u64,
    pub next_credential: u64,
    pub list_version: u64,
    pub list: String,
    pub records: Vec<IssuedTokenRecord>,
}

impl SavedState {
    pub fn list(&self) -> Result<RevocationList, AuthorityError> {
        let bits = URL_SAFE_NO_PAD
            .decode(&self.list)
            .map_err(|e| AuthorityError::Store(format!("list: {e}")))?;
        Ok(RevocationList::from_bytes(bits, self.list_version)?)
    }
}

pub(super) fn load(path: &Path) -> Result<Option<SavedState>, AuthorityError> {
    match fs::read(path) {
        Ok(bytes) => serde_json::from_slice(&bytes)
            .map(Some)
            .map_err(|e| AuthorityError::Store(format!("{}: {e}", path.display()))),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(AuthorityError::Store(format!("{}: {e}", path.display()))),
    }
}

/// Write-then-rename so a crash never leaves a truncated file.
pub(super) fn save(path: &Path, state: &SavedState) -> Result<(), AuthorityError> {
    let err = |e: std::io::Error| AuthorityError::Store(format!("{}: {e}", path.display()));
    let tmp = path.with_extension("tmp");
    let mut file = fs::File::create(&tmp).map_err(err)?;
    serde_json::to_writer(&mut file, state).map_err(|e| AuthorityError::Store(e.to_string()))?;
    file.flush().map_err(err)?;
    file.sync_all().map_err(err)?;
    fs::rename(&tmp, path).map_err(err)
}
