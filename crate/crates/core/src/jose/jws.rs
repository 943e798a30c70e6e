use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine;
use ed25519_dalek::{Signature, Signer, Verifier};
use serde::Serialize;
use serde_json::{Map, Value};

use super::{ops, JoseError, KeyPair, PublicKeyJwk};

pub const ALG_EDDSA: &str = "EdDSA";

/// JOSE header. `jwk` is only present on self-signed proofs.
#[derive(Debug, Clone, Serialize)]
pub struct JoseHeader {
    pub typ: String,
    pub alg: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jwk: Option<PublicKeyJwk>,
}

impl JoseHeader {
    pub fn new(typ: &str) -> Self {
        JoseHeader {
            typ: typ.to_owned(),
            alg: ALG_EDDSA.to_owned(),
            jwk: None,
        }
    }

    pub fn with_jwk(mut self, jwk: PublicKeyJwk) -> Self {
        self.jwk = Some(jwk);
        self
    }
}

/// Signs `payload` under a `{"typ": typ, "alg": "EdDSA"}` header and returns
/// the compact serialization.
pub fn jws_sign<T: Serialize + ?Sized>(
    payload: &T,
    typ: &str,
    signer: &KeyPair,
) -> Result<String, JoseError> {
    sign_with_header(&JoseHeader::new(typ), payload, signer)
}

pub fn sign_with_header<T: Serialize + ?Sized>(
    header: &JoseHeader,
    payload: &T,
    signer: &KeyPair,
) -> Result<String, JoseError> {
    let payload = serde_json::to_value(payload)?;
    if !payload.is_object() {
        return Err(JoseError::Malformed("payload must be a JSON object".into()));
    }
    let header = serde_json::to_vec(header)?;
    let payload = serde_json::to_vec(&payload)?;
    let mut out = String::with_capacity((header.len() + payload.len()) * 4 / 3 + 90);
    URL_SAFE_NO_PAD.encode_string(header, &mut out);
    out.push('.');
    URL_SAFE_NO_PAD.encode_string(payload, &mut out);
    ops::record_sign();
    let signature = signer.signing_key().sign(out.as_bytes());
    out.push('.');
    URL_SAFE_NO_PAD.encode_string(signature.to_bytes(), &mut out);
    Ok(out)
}

/// Decodes a compact JWS and verifies it under `key`.
/// A decoded JSON object (header or payload).
pub type JsonObject = Map<String, Value>;

pub fn jws_verify(
    compact: &str,
    key: &PublicKeyJwk,
) -> Result<(JsonObject, JsonObject), JoseError> {
    let jws = Jws::decode(compact)?;
    jws.verify(key)?;
    Ok((jws.header, jws.payload))
}

/// A decoded but not yet verified compact JWS.
#[derive(Debug, Clone)]
pub struct Jws {
    pub header: Map<String, Value>,
    pub payload: Map<String, Value>,
    signing_input: String,
    signature: Signature,
}

impl Jws {
    pub fn decode(compact: &str) -> Result<Self, JoseError> {
        let mut parts = compact.split('.');
        let (Some(h), Some(p), Some(s), None) =
            (parts.next(), parts.next(), parts.next(), parts.next())
        else {
            return Err(JoseError::Malformed(
                "expected three dot-separated segments".into(),
            ));
        };
        let header = decode_object(h, "header")?;
        let payload = decode_object(p, "payload")?;
        let sig = URL_SAFE_NO_PAD
            .decode(s)
            .map_err(|e| JoseError::Malformed(format!("signature: {e}")))?;
        let sig: [u8; 64] = sig
            .try_into()
            .map_err(|_| JoseError::Malformed("signature must be 64 bytes".into()))?;
        if URL_SAFE_NO_PAD.encode(sig) != s {
            return Err(JoseError::Malformed(
                "signature is not canonically encoded".into(),
            ));
        }
        Ok(Jws {
            header,
            payload,
            signing_input: compact[..h.len() + 1 + p.len()].to_owned(),
            signature: Signature::from_bytes(&sig),
        })
    }

    pub fn typ(&self) -> Option<&str> {
        self.header.get("typ").and_then(Value::as_str)
    }

    pub fn alg(&self) -> Option<&str> {
        self.header.get("alg").and_then(Value::as_str)
    }

    /// Checks `alg` and the signature. Every call counts as one verification.
    pub fn verify(&self, key: &PublicKeyJwk) -> Result<(), JoseError> {
        match self.alg() {
            Some(ALG_EDDSA) => {}
            other => {
                return Err(JoseError::UnsupportedAlgorithm(
                    other.unwrap_or("<missing>").to_owned(),
                ))
            }
        }
        ops::record_verify();
        key.verifying_key()
            .verify(self.signing_input.as_bytes(), &self.signature)
            .map_err(|_| JoseError::BadSignature)
    }
}

fn decode_object(segment: &str, what: &str) -> Result<Map<String, Value>, JoseError> {
    let bytes = URL_SAFE_NO_PAD
        .decode(segment)
        .map_err(|e| JoseError::Malformed(format!("{what}: {e}")))?;
    // Non-canonical base64 (stray low bits) would let two strings carry the
    // same signed bytes.
    if URL_SAFE_NO_PAD.encode(&bytes) != segment {
        return Err(JoseError::Malformed(format!(
            "{what}: non-canonical base64url"
        )));
    }
    match serde_json::from_slice(&bytes) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(_) => Err(JoseError::Malformed(format!("{what} is not a JSON object"))),
        Err(e) => Err(JoseError::Malformed(format!("{what}: {e}"))),
    }
}
