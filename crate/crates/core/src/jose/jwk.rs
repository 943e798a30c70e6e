use std::fmt;
use std::hash::{Hash, Hasher};

use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine;
use ed25519_dalek::{SigningKey, VerifyingKey};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::JoseError;

pub const KTY_OKP: &str = "OKP";
pub const CRV_ED25519: &str = "Ed25519";

/// An Ed25519 public key in JWK form (`kty` OKP, `crv` Ed25519).
///
/// Fields are declared in lexicographic order so the serde output is already
/// the canonical form: sorted keys, no whitespace. Two keys are equal iff
/// their canonical serializations are byte-identical.
#[derive(Clone, Serialize, Deserialize)]
#[serde(try_from = "RawJwk")]
pub struct PublicKeyJwk {
    crv: String,
    kty: String,
    x: String,
    #[serde(skip)]
    key: VerifyingKey,
}

#[derive(Deserialize)]
struct RawJwk {
    crv: String,
    kty: String,
    x: String,
}

impl TryFrom<RawJwk> for PublicKeyJwk {
    type Error = JoseError;

    fn try_from(raw: RawJwk) -> Result<Self, Self::Error> {
        if raw.kty != KTY_OKP {
            return Err(JoseError::InvalidKey(format!(
                "unsupported kty {:?}",
                raw.kty
            )));
        }
        if raw.crv != CRV_ED25519 {
            return Err(JoseError::InvalidKey(format!(
                "unsupported crv {:?}",
                raw.crv
            )));
        }
        let bytes = URL_SAFE_NO_PAD
            .decode(&raw.x)
            .map_err(|e| JoseError::InvalidKey(format!("x is not base64url: {e}")))?;
        let bytes: [u8; 32] = bytes.try_into().map_err(|b: Vec<u8>| {
            JoseError::InvalidKey(format!("x decodes to {} bytes, expected 32", b.len()))
        })?;
        // Reject non-canonical encodings (stray trailing bits) so that
        // canonical comparison is exact.
        if URL_SAFE_NO_PAD.encode(bytes) != raw.x {
            return Err(JoseError::InvalidKey("x is not canonically encoded".into()));
        }
        let key = VerifyingKey::from_bytes(&bytes)
            .map_err(|_| JoseError::InvalidKey("x is not a valid Ed25519 point".into()))?;
        Ok(PublicKeyJwk {
            crv: raw.crv,
            kty: raw.kty,
            x: raw.x,
            key,
        })
    }
}

impl PublicKeyJwk {
    pub fn from_bytes(bytes: &[u8; 32]) -> Result<Self, JoseError> {
        let key = VerifyingKey::from_bytes(bytes)
            .map_err(|_| JoseError::InvalidKey("not a valid Ed25519 point".into()))?;
        Ok(Self::from_verifying_key(key))
    }

    pub(crate) fn from_verifying_key(key: VerifyingKey) -> Self {
        PublicKeyJwk {
            crv: CRV_ED25519.to_owned(),
            kty: KTY_OKP.to_owned(),
            x: URL_SAFE_NO_PAD.encode(key.as_bytes()),
            key,
        }
    }

    /// Parses a JWK from a JSON value (e.g. a `cnf.jwk` or a DPoP header `jwk`).
    pub fn from_value(value: &serde_json::Value) -> Result<Self, JoseError> {
        serde_json::from_value(value.clone()).map_err(|e| JoseError::InvalidKey(e.to_string()))
    }

    pub fn from_json(json: &str) -> Result<Self, JoseError> {
        serde_json::from_str(json).map_err(|e| JoseError::InvalidKey(e.to_string()))
    }

    /// Minified, key-sorted JSON: `{"crv":"Ed25519","kty":"OKP","x":"..."}`.
    pub fn canonical_json(&self) -> String {
        format!(
            r#"{{"crv":"{}","kty":"{}","x":"{}"}}"#,
            self.crv, self.kty, self.x
        )
    }

    /// Lowercase hex SHA-256 of the canonical serialization.
    pub fn sha256_hex(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }

    pub fn x(&self) -> &str {
        &self.x
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        self.key.as_bytes()
    }

    pub(crate) fn verifying_key(&self) -> &VerifyingKey {
        &self.key
    }
}

impl PartialEq for PublicKeyJwk {
    fn eq(&self, other: &Self) -> bool {
        self.canonical_json() == other.canonical_json()
    }
}

impl Eq for PublicKeyJwk {}

impl Hash for PublicKeyJwk {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.canonical_json().hash(state);
    }
}

impl fmt::Debug for PublicKeyJwk {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical_json())
    }
}

impl fmt::Display for PublicKeyJwk {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical_json())
    }
}

/// An Ed25519 signing key together with its public JWK.
#[derive(Clone)]
pub struct KeyPair {
    public: PublicKeyJwk,
    secret: SigningKey,
}

impl KeyPair {
    /// Generates a fresh keypair from the operating system's entropy source.
    pub fn generate() -> Result<Self, JoseError> {
        let mut seed = [0u8; 32];
        getrandom::getrandom(&mut seed).map_err(|e| JoseError::Entropy(e.to_string()))?;
        Ok(Self::from_seed(&seed))
    }

    /// Deterministic construction from a 32-byte seed.
    pub fn from_seed(seed: &[u8; 32]) -> Self {
        let secret = SigningKey::from_bytes(seed);
        let public = PublicKeyJwk::from_verifying_key(secret.verifying_key());
        KeyPair { public, secret }
    }

    pub fn public(&self) -> &PublicKeyJwk {
        &self.public
    }

    pub fn seed(&self) -> &[u8; 32] {
        self.secret.as_bytes()
    }

    pub(crate) fn signing_key(&self) -> &SigningKey {
        &self.secret
    }

    /// Private JWK form (RFC 8037 `d` parameter), used for key files only.
    pub fn to_private_jwk(&self) -> PrivateKeyJwk {
        PrivateKeyJwk {
            crv: self.public.crv.clone(),
            d: URL_SAFE_NO_PAD.encode(self.secret.as_bytes()),
            kty: self.public.kty.clone(),
            x: self.public.x.clone(),
        }
    }

    pub fn from_private_jwk(jwk: &PrivateKeyJwk) -> Result<Self, JoseError> {
        let seed = URL_SAFE_NO_PAD
            .decode(&jwk.d)
            .map_err(|e| JoseError::InvalidKey(format!("d is not base64url: {e}")))?;
        let seed: [u8; 32] = seed
            .try_into()
            .map_err(|_| JoseError::InvalidKey("d must decode to 32 bytes".into()))?;
        let pair = Self::from_seed(&seed);
        if pair.public.x != jwk.x || jwk.kty != KTY_OKP || jwk.crv != CRV_ED25519 {
            return Err(JoseError::InvalidKey("public part does not match d".into()));
        }
        Ok(pair)
    }
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyPair")
            .field("public", &self.public)
            .finish_non_exhaustive()
    }
}

/// On-disk representation of a keypair.
#[derive(Clone, Serialize, Deserialize)]
pub struct PrivateKeyJwk {
    pub crv: String,
    pub d: String,
    pub kty: String,
    pub x: String,
}

impl fmt::Debug for PrivateKeyJwk {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PrivateKeyJwk")
            .field("x", &self.x)
            .finish_non_exhaustive()
    }
}
