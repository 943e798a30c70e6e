use std::collections::BTreeMap;

use percent_encoding::percent_decode_str;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::authority::SchemaError;
use crate::jose::PublicKeyJwk;

/// The authorization server responsible for one path prefix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TenantEntry {
    pub as_url: String,
    pub as_key: PublicKeyJwk,
    /// When set, token status is checked by introspection instead of the
    /// revocation list.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub introspection_url: Option<String>,
    /// Revocation list URLs this tenant's tokens may point at. Empty means
    /// "same origin as `as_url` only".
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub revocation_allowlist: Vec<String>,
}

impl TenantEntry {
    pub fn new(as_url: impl Into<String>, as_key: PublicKeyJwk) -> Self {
        TenantEntry {
            as_url: as_url.into(),
            as_key,
            introspection_url: None,
            revocation_allowlist: Vec::new(),
        }
    }

    pub fn allows_list_url(&self, url: &str) -> bool {
        if !self.revocation_allowlist.is_empty() {
            return self.revocation_allowlist.iter().any(|u| u == url);
        }
        match (url::Url::parse(url), url::Url::parse(&self.as_url)) {
            (Ok(list), Ok(issuer)) => list.origin() == issuer.origin(),
            _ => false,
        }
    }
}

/// Path prefix to responsible AS. Lookups use the longest segment-wise match.
///
/// ```json
/// { "resources": { "/home/org1": { "as_url": "https://org1.example/as", "as_key": { ... } } } }
/// ```
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResourceTable {
    entries: BTreeMap<String, TenantEntry>,
}

impl ResourceTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, prefix: &str, entry: TenantEntry) -> Result<(), SchemaError> {
        let normalized =
            normalize_path(prefix).map_err(|e| SchemaError::new(prefix, e.to_string()))?;
        if normalized != prefix {
            return Err(SchemaError::new(
                prefix,
                format!("prefix must be written as {normalized:?}"),
            ));
        }
        self.entries.insert(normalized, entry);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, prefix: &str) -> Option<&TenantEntry> {
        self.entries.get(prefix)
    }

    /// Longest prefix of the normalized `path`.
    pub fn resolve(&self, path: &str) -> Option<(&str, &TenantEntry)> {
        self.entries
            .iter()
            .filter(|(prefix, _)| is_under(path, prefix))
            .max_by_key(|(prefix, _)| prefix.len())
            .map(|(p, e)| (p.as_str(), e))
    }

    /// Entries whose AS is `issuer`, in prefix order.
    pub fn by_issuer<'a>(
        &'a self,
        issuer: &'a str,
    ) -> impl Iterator<Item = (&'a str, &'a TenantEntry)> + 'a {
        self.entries
            .iter()
            .filter(move |(_, e)| e.as_url == issuer)
            .map(|(p, e)| (p.as_str(), e))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &TenantEntry)> {
        self.entries.iter().map(|(p, e)| (p.as_str(), e))
    }
}

pub fn load_resource_table(document: &str) -> Result<ResourceTable, SchemaError> {
    let root: Value =
        serde_json::from_str(document).map_err(|e| SchemaError::new("$", e.to_string()))?;
    let resources = root
        .get("resources")
        .and_then(Value::as_object)
        .ok_or_else(|| SchemaError::new("$.resources", "expected an object"))?;
    let mut table = ResourceTable::new();
    for (prefix, entry) in resources {
        let at = format!("$.resources[{prefix:?}]");
        let entry: TenantEntry = serde_json::from_value(entry.clone())
            .map_err(|e| SchemaError::new(&at, e.to_string()))?;
        table
            .insert(prefix, entry)
            .map_err(|e| SchemaError::new(&at, e.message))?;
    }
    Ok(table)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PathError {
    #[error("path must be absolute")]
    NotAbsolute,
    #[error("path contains a \"..\" segment")]
    DotDot,
    #[error("path is not valid UTF-8 after percent-decoding")]
    NotUtf8,
    #[error("path contains a forbidden character")]
    ForbiddenCharacter,
}

/// Percent-decodes once, drops empty and `.` segments, refuses `..`.
/// The result is `/` or `/seg/seg...` with no trailing slash.
pub fn normalize_path(raw: &str) -> Result<String, PathError> {
    let decoded = percent_decode_str(raw)
        .decode_utf8()
        .map_err(|_| PathError::NotUtf8)?;
    if !decoded.starts_with('/') {
        return Err(PathError::NotAbsolute);
    }
    let mut out = String::with_capacity(decoded.len());
    for segment in decoded.split('/') {
        match segment {
            "" | "." => continue,
            ".." => return Err(PathError::DotDot),
            s if s.contains(['\0', '\\']) => return Err(PathError::ForbiddenCharacter),
            s => {
                out.push('/');
                out.push_str(s);
            }
        }
    }
    if out.is_empty() {
        out.push('/');
    }
    Ok(out)
}

/// Segment-wise prefix test on normalized paths.
pub fn is_under(path: &str, prefix: &str) -> bool {
    prefix == "/"
        || path == prefix
        || (path.starts_with(prefix) && path.as_bytes().get(prefix.len()) == Some(&b'/'))
}

/// `prefix` joined with a relative capability path.
pub fn join_prefix(prefix: &str, relative: &str) -> String {
    if prefix == "/" {
        format!("/{relative}")
    } else {
        format!("{prefix}/{relative}")
    }
}

#[cfg(test)]
mod tests {
    use serde_json::json;

    use super::*;
    use crate::jose::KeyPair;

    fn key(n: u8) -> PublicKeyJwk {
        KeyPair::from_seed(&[n; 32]).public().clone()
    }

    #[test]
    fn normalization() {
        assert_eq!(
            normalize_path("/home//org1/./folder2/").unwrap(),
            "/home/org1/folder2"
        );
        assert_eq!(
            normalize_path("/home/org%31/a%20b").unwrap(),
            "/home/org1/a b"
        );
        assert_eq!(normalize_path("/").unwrap(), "/");
        assert_eq!(normalize_path("//").unwrap(), "/");
        // decoded exactly once
        assert_eq!(normalize_path("/a/%252e%252e").unwrap(), "/a/%2e%2e");
        assert_eq!(normalize_path("/a/../b"), Err(PathError::DotDot));
        assert_eq!(normalize_path("/a/%2e%2e/b"), Err(PathError::DotDot));
        assert_eq!(normalize_path("/a/%2E%2E"), Err(PathError::DotDot));
        assert_eq!(normalize_path("a/b"), Err(PathError::NotAbsolute));
        assert_eq!(normalize_path("/a/%00"), Err(PathError::ForbiddenCharacter));
        assert_eq!(normalize_path("/a/%ff"), Err(PathError::NotUtf8));
    }

    #[test]
    fn segment_prefix() {
        assert!(is_under("/home/org1/folder1/x", "/home/org1/folder1"));
        assert!(is_under("/home/org1/folder1", "/home/org1/folder1"));
        assert!(!is_under("/home/org1/folder10/x", "/home/org1/folder1"));
        assert!(is_under("/anything", "/"));
        assert_eq!(join_prefix("/", "a"), "/a");
        assert_eq!(join_prefix("/home/org1", "a"), "/home/org1/a");
    }

    #[test]
    fn two_tenant_table() {
        let doc = json!({"resources": {
            "/home/org1": {"as_url": "https://org1.example/as", "as_key": key(1)},
            "/home/org2": {"as_url": "https://org2.example/as", "as_key": key(2),
                           "introspection_url": "https://org2.example/as/introspect"}
        }});
        let table = load_resource_table(&doc.to_string()).unwrap();
        assert_eq!(table.len(), 2);
        let (prefix, entry) = table.resolve("/home/org2/f/x").unwrap();
        assert_eq!(prefix, "/home/org2");
        assert_eq!(entry.as_key, key(2));
        assert!(table.resolve("/home/org3/x").is_none());
        assert!(table.resolve("/home/org10").is_none());
        assert_eq!(table.by_issuer("https://org1.example/as").count(), 1);
    }

    #[test]
    fn relative_prefix_is_schema_error() {
        let doc = json!({"resources": {"org1": {"as_url": "https://a", "as_key": key(1)}}});
        assert!(load_resource_table(&doc.to_string()).is_err());
        let doc = json!({"resources": {"/org1/": {"as_url": "https://a", "as_key": key(1)}}});
        assert!(load_resource_table(&doc.to_string()).is_err());
        let doc =
            json!({"resources": {"/org1": {"as_url": "https://a", "as_key": key(1), "extra": 1}}});
        assert!(load_resource_table(&doc.to_string()).is_err());
        assert!(load_resource_table("{}").is_err());
    }

    #[test]
    fn longest_prefix_wins() {
        let mut table = ResourceTable::new();
        table
            .insert("/a", TenantEntry::new("https://x", key(1)))
            .unwrap();
        table
            .insert("/a/b", TenantEntry::new("https://y", key(2)))
            .unwrap();
        assert_eq!(table.resolve("/a/b/c").unwrap().0, "/a/b");
        assert_eq!(table.resolve("/a/bc").unwrap().0, "/a");
        assert_eq!(table.resolve("/a").unwrap().0, "/a");
    }

    #[test]
    fn list_url_allowlist() {
        let mut entry = TenantEntry::new("https://org1.example/as", key(1));
        assert!(entry.allows_list_url("https://org1.example/as/revocation-list"));
        assert!(entry.allows_list_url("https://org1.example:443/rl"));
        assert!(!entry.allows_list_url("https://evil.example/rl"));
        entry.revocation_allowlist = vec!["https://aueb.gr/rl".into()];
        assert!(entry.allows_list_url("https://aueb.gr/rl"));
        assert!(!entry.allows_list_url("https://org1.example/as/revocation-list"));
    }
}
