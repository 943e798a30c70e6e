use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

/// A token as cached on disk. Only tokens are stored, never keys.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CachedToken {
    pub access_token: String,
    pub exp: u64,
}

impl CachedToken {
    pub fn is_valid(&self, now: u64) -> bool {
        now < self.exp
    }
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct CacheFile {
    /// `(AS name, RS URL)` flattened to `"<as> <rs>"`.
    tokens: BTreeMap<String, CachedToken>,
}

/// Token cache keyed by authorization server name and resource server URL.
/// Concurrent invocations serialize on an advisory lock file.
#[derive(Debug, Clone)]
pub struct TokenCache {
    dir: PathBuf,
}

fn key(as_name: &str, rs_url: &str) -> String {
    format!("{as_name} {}", rs_url.trim_end_matches('/'))
}

impl TokenCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        TokenCache { dir: dir.into() }
    }

    fn file(&self) -> PathBuf {
        self.dir.join("tokens.json")
    }

    fn lock(&self, exclusive: bool) -> io::Result<File> {
        fs::create_dir_all(&self.dir)?;
        let lock = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(self.dir.join("tokens.lock"))?;
        if exclusive {
            lock.lock()?;
        } else {
            lock.lock_shared()?;
        }
        Ok(lock)
    }

    fn read(path: &Path) -> io::Result<CacheFile> {
        match fs::read(path) {
            Ok(bytes) => serde_json::from_slice(&bytes).map_err(io::Error::other),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(CacheFile::default()),
            Err(e) => Err(e),
        }
    }

    pub fn get(&self, as_name: &str, rs_url: &str) -> io::Result<Option<CachedToken>> {
        let _lock = self.lock(false)?;
        Ok(Self::read(&self.file())?
            .tokens
            .remove(&key(as_name, rs_url)))
    }

    pub fn put(&self, as_name: &str, rs_url: &str, token: CachedToken) -> io::Result<()> {
        let _lock = self.lock(true)?;
        let path = self.file();
        let mut cache = Self::read(&path)?;
        cache.tokens.insert(key(as_name, rs_url), token);
        let tmp = self.dir.join("tokens.json.tmp");
        fs::write(
            &tmp,
            serde_json::to_vec_pretty(&cache).map_err(io::Error::other)?,
        )?;
        fs::rename(tmp, path)
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;
    use std::thread;

    use super::*;

    #[test]
    fn keyed_by_as_and_rs() {
        let dir = tempfile::tempdir().unwrap();
        let cache = TokenCache::new(dir.path().join("c"));
        assert_eq!(cache.get("org1", "http://rs").unwrap(), None);
        let t = CachedToken {
            access_token: "a.b.c".into(),
            exp: 10,
        };
        cache.put("org1", "http://rs/", t.clone()).unwrap();
        assert_eq!(cache.get("org1", "http://rs").unwrap(), Some(t.clone()));
        assert_eq!(cache.get("org2", "http://rs").unwrap(), None);
        assert_eq!(cache.get("org1", "http://other").unwrap(), None);
        assert!(t.is_valid(9));
        assert!(!t.is_valid(10));
    }

    #[test]
    fn concurrent_writers_do_not_lose_entries() {
        let dir = tempfile::tempdir().unwrap();
        let cache = Arc::new(TokenCache::new(dir.path()));
        let handles: Vec<_> = (0..8)
            .map(|i| {
                let cache = cache.clone();
                thread::spawn(move || {
                    cache
                        .put(
                            &format!("as{i}"),
                            "http://rs",
                            CachedToken {
                                access_token: i.to_string(),
                                exp: 1,
                            },
                        )
                        .unwrap()
                })
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        for i in 0..8 {
            assert_eq!(
                cache
                    .get(&format!("as{i}"), "http://rs")
                    .unwrap()
                    .unwrap()
                    .access_token,
                i.to_string()
            );
        }
    }
}
