use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::de::Error as _;
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{Map, Value};

use super::VcError;

/// One access right. Declaration order gives the serialized order r, w, d.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Right {
    #[serde(rename = "r")]
    Read,
    #[serde(rename = "w")]
    Write,
    #[serde(rename = "d")]
    Delete,
}

impl Right {
    pub const ALL: [Right; 3] = [Right::Read, Right::Write, Right::Delete];

    pub fn as_str(self) -> &'static str {
        match self {
            Right::Read => "r",
            Right::Write => "w",
            Right::Delete => "d",
        }
    }
}

impl FromStr for Right {
    type Err = VcError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "r" => Ok(Right::Read),
            "w" => Ok(Right::Write),
            "d" => Ok(Right::Delete),
            other => Err(VcError::InvalidCapability(format!(
                "unknown right {other:?}"
            ))),
        }
    }
}

impl fmt::Display for Right {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A relative resource path and the rights granted on it.
///
/// Serialized as a single-entry object, `{"folder1": ["r", "w", "d"]}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Capability {
    path: String,
    rights: BTreeSet<Right>,
}

impl Capability {
    pub fn new(
        path: impl Into<String>,
        rights: impl IntoIterator<Item = Right>,
    ) -> Result<Self, VcError> {
        let path = path.into();
        let rights: BTreeSet<Right> = rights.into_iter().collect();
        validate_relative_path(&path)?;
        if rights.is_empty() {
            return Err(VcError::InvalidCapability(format!("{path}: no rights")));
        }
        Ok(Capability { path, rights })
    }

    /// Parses `"folder1"` + `"rwd"` style shorthand.
    pub fn parse(path: &str, rights: &str) -> Result<Self, VcError> {
        let rights = rights
            .chars()
            .map(|c| c.to_string().parse())
            .collect::<Result<Vec<Right>, _>>()?;
        Capability::new(path, rights)
    }

    pub fn path(&self) -> &str {
        &self.path
    }

    pub fn rights(&self) -> &BTreeSet<Right> {
        &self.rights
    }

    pub fn allows(&self, right: Right) -> bool {
        self.rights.contains(&right)
    }

    pub fn to_value(&self) -> Value {
        let rights = self
            .rights
            .iter()
            .map(|r| Value::from(r.as_str()))
            .collect();
        let mut map = Map::new();
        map.insert(self.path.clone(), Value::Array(rights));
        Value::Object(map)
    }

    /// Strict parse of the `{path: [rights]}` form.
    pub fn from_value(value: &Value) -> Result<Self, VcError> {
        let obj = value
            .as_object()
            .ok_or_else(|| VcError::InvalidCapability("capability must be an object".into()))?;
        let mut entries = obj.iter();
        let (Some((path, rights)), None) = (entries.next(), entries.next()) else {
            return Err(VcError::InvalidCapability(
                "capability must have exactly one path".into(),
            ));
        };
        let rights = rights.as_array().ok_or_else(|| {
            VcError::InvalidCapability(format!("{path}: rights must be an array"))
        })?;
        let mut parsed = BTreeSet::new();
        for r in rights {
            let r = r.as_str().ok_or_else(|| {
                VcError::InvalidCapability(format!("{path}: rights must be strings"))
            })?;
            if !parsed.insert(r.parse::<Right>()?) {
                return Err(VcError::InvalidCapability(format!(
                    "{path}: duplicate right {r:?}"
                )));
            }
        }
        Capability::new(path.clone(), parsed)
    }
}

impl fmt::Display for Capability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:", self.path)?;
        self.rights.iter().try_for_each(|r| f.write_str(r.as_str()))
    }
}

impl Serialize for Capability {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(1))?;
        map.serialize_entry(&self.path, &self.rights)?;
        map.end()
    }
}

impl<'de> Deserialize<'de> for Capability {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let value = Value::deserialize(deserializer)?;
        Capability::from_value(&value).map_err(D::Error::custom)
    }
}

/// Capability paths are relative: no leading `/`, no empty, `.` or `..` segments.
pub fn validate_relative_path(path: &str) -> Result<(), VcError> {
    if path.is_empty() {
        return Err(VcError::InvalidCapability("empty path".into()));
    }
    if path.starts_with('/') {
        return Err(VcError::InvalidCapability(format!(
            "{path}: must be relative"
        )));
    }
    if path
        .split('/')
        .any(|seg| seg.is_empty() || seg == "." || seg == "..")
    {
        return Err(VcError::InvalidCapability(format!(
            "{path}: invalid segment"
        )));
    }
    Ok(())
}
