use std::collections::HashMap;

use serde_json::Value;

use crate::jose::PublicKeyJwk;
use crate::vc::Capability;

/// Load failure, with a JSON path to the offending entry.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{path}: {message}")]
pub struct SchemaError {
    pub path: String,
    pub message: String,
}

impl SchemaError {
    pub(crate) fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        SchemaError {
            path: path.into(),
            message: message.into(),
        }
    }
}

/// Client key to capabilities, for one resource server.
///
/// Document form:
///
/// ```json
/// { "clients": [ { "name": "c1", "jwk": {"crv": "Ed25519", "kty": "OKP", "x": "..."},
///                  "capabilities": [ {"folder1": ["r", "w"]} ] } ] }
/// ```
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AccessTable {
    entries: HashMap<PublicKeyJwk, Vec<Capability>>,
}

impl AccessTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, client: PublicKeyJwk, capabilities: Vec<Capability>) {
        self.entries.insert(client, capabilities);
    }

    pub fn lookup(&self, client: &PublicKeyJwk) -> Option<&[Capability]> {
        self.entries.get(client).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_document(&self) -> Value {
        let mut clients: Vec<_> = self.entries.iter().collect();
        clients.sort_by_key(|(k, _)| k.canonical_json());
        let clients: Vec<Value> = clients
            .into_iter()
            .map(|(jwk, caps)| serde_json::json!({"jwk": jwk, "capabilities": caps}))
            .collect();
        serde_json::json!({ "clients": clients })
    }
}

/// Parses an access table. Any bad entry fails the whole load.
pub fn load_access_table(document: &str) -> Result<AccessTable, SchemaError> {
    let root: Value =
        serde_json::from_str(document).map_err(|e| SchemaError::new("$", e.to_string()))?;
    let clients = root
        .get("clients")
        .and_then(Value::as_array)
        .ok_or_else(|| SchemaError::new("$.clients", "expected an array"))?;
    let mut table = AccessTable::new();
    for (i, client) in clients.iter().enumerate() {
        let at = format!("$.clients[{i}]");
        let obj = client
            .as_object()
            .ok_or_else(|| SchemaError::new(&at, "expected an object"))?;
        if let Some(unknown) = obj
            .keys()
            .find(|k| !matches!(k.as_str(), "name" | "jwk" | "capabilities"))
        {
            return Err(SchemaError::new(&at, format!("unknown field {unknown:?}")));
        }
        let jwk = obj
            .get("jwk")
            .ok_or_else(|| SchemaError::new(&at, "missing jwk"))?;
        let jwk = PublicKeyJwk::from_value(jwk)
            .map_err(|e| SchemaError::new(format!("{at}.jwk"), e.to_string()))?;
        let caps = obj
            .get("capabilities")
            .and_then(Value::as_array)
            .ok_or_else(|| SchemaError::new(format!("{at}.capabilities"), "expected an array"))?;
        if caps.is_empty() {
            return Err(SchemaError::new(
                format!("{at}.capabilities"),
                "no capabilities",
            ));
        }
        let caps = caps
            .iter()
            .enumerate()
            .map(|(j, c)| {
                Capability::from_value(c)
                    .map_err(|e| SchemaError::new(format!("{at}.capabilities[{j}]"), e.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        if table.entries.insert(jwk, caps).is_some() {
            return Err(SchemaError::new(&at, "duplicate client key"));
        }
    }
    Ok(table)
}
