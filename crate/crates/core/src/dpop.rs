//! DPoP proofs: self-signed JWTs that pin an HTTP request (method and URI)
//! to a key held by the client.

use std::collections::HashMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use url::Url;

use crate::jose::{
    sign_with_header, JoseError, JoseHeader, Jws, KeyPair, PublicKeyJwk, DEFAULT_SKEW_SECS,
};

pub const DPOP_TYP: &str = "dpop+jwt";
pub const DEFAULT_WINDOW_SECS: u64 = 60;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DpopClaims {
    pub htm: String,
    pub htu: String,
    pub iat: u64,
    pub jti: String,
}

#[derive(Debug, thiserror::Error)]
pub enum DpopError {
    #[error("malformed proof: {0}")]
    MalformedProof(String),
    #[error("proof typ must be \"dpop+jwt\"")]
    WrongType,
    #[error("proof signature does not verify")]
    BadSignature,
    #[error("proof htm does not match the request method")]
    MethodMismatch,
    #[error("proof htu does not match the request URI")]
    UriMismatch,
    #[error("proof jti was already used")]
    Replayed,
    #[error("proof is not fresh")]
    Stale,
    #[error("not an absolute URI: {0}")]
    InvalidUri(String),
    #[error(transparent)]
    Jose(JoseError),
}

impl DpopError {
    /// Short machine-readable reason.
    pub fn reason(&self) -> &'static str {
        match self {
            DpopError::MalformedProof(_) => "malformed_proof",
            DpopError::WrongType => "wrong_type",
            DpopError::BadSignature => "bad_signature",
            DpopError::MethodMismatch => "method_mismatch",
            DpopError::UriMismatch => "uri_mismatch",
            DpopError::Replayed => "replayed",
            DpopError::Stale => "stale",
            DpopError::InvalidUri(_) => "invalid_uri",
            DpopError::Jose(_) => "jose_error",
        }
    }
}

/// 16 random bytes, hex-encoded with a `0x` prefix.
pub fn fresh_jti() -> Result<String, JoseError> {
    let mut bytes = [0u8; 16];
    getrandom::getrandom(&mut bytes).map_err(|e| JoseError::Entropy(e.to_string()))?;
    Ok(format!("0x{}", hex::encode(bytes)))
}

/// Builds a compact DPoP proof for one request.
pub fn build_proof(
    method: &str,
    uri: &str,
    signer: &KeyPair,
    now: u64,
) -> Result<String, DpopError> {
    let parsed = Url::parse(uri).map_err(|e| DpopError::InvalidUri(format!("{uri}: {e}")))?;
    if !parsed.has_host() {
        return Err(DpopError::InvalidUri(uri.to_owned()));
    }
    let claims = DpopClaims {
        htm: method.to_owned(),
        htu: uri.to_owned(),
        iat: now,
        jti: fresh_jti().map_err(DpopError::Jose)?,
    };
    let header = JoseHeader::new(DPOP_TYP).with_jwk(signer.public().clone());
    sign_with_header(&header, &claims, signer).map_err(DpopError::Jose)
}

/// Compares URIs after lowercasing scheme and host and dropping default ports.
pub fn htu_matches(presented: &str, expected: &str) -> bool {
    match (Url::parse(presented), Url::parse(expected)) {
        (Ok(a), Ok(b)) => a.as_str() == b.as_str(),
        _ => false,
    }
}

/// Decoded-but-unverified proof, for reading the header key before the full check.
#[derive(Debug, Clone)]
pub struct UnverifiedProof {
    jws: Jws,
    jwk: PublicKeyJwk,
}

impl UnverifiedProof {
    pub fn decode(compact: &str) -> Result<Self, DpopError> {
        let jws = Jws::decode(compact).map_err(|e| DpopError::MalformedProof(e.to_string()))?;
        if jws.typ() != Some(DPOP_TYP) {
            return Err(DpopError::WrongType);
        }
        let jwk = jws
            .header
            .get("jwk")
            .ok_or_else(|| DpopError::MalformedProof("header has no jwk".into()))?;
        let jwk =
            PublicKeyJwk::from_value(jwk).map_err(|e| DpopError::MalformedProof(e.to_string()))?;
        Ok(UnverifiedProof { jws, jwk })
    }

    pub fn jwk(&self) -> &PublicKeyJwk {
        &self.jwk
    }
}

/// Set of recently seen `jti` values.
///
/// Entries are kept until `window + skew` seconds after insertion; by then
/// the proof they came from fails the freshness check anyway.
#[derive(Debug)]
pub struct ReplayCache {
    ttl: u64,
    inner: Mutex<ReplayState>,
}

#[derive(Debug, Default)]
struct ReplayState {
    seen: HashMap<String, u64>,
    last_sweep: u64,
}

impl ReplayCache {
    pub fn new(window: u64, skew: u64) -> Self {
        ReplayCache {
            ttl: window.saturating_add(skew),
            inner: Mutex::new(ReplayState::default()),
        }
    }

    /// Records `jti`; returns false if it was already present and unexpired.
    pub fn check_and_insert(&self, jti: &str, now: u64) -> bool {
        let mut state = self.inner.lock().unwrap_or_else(|e| e.into_inner());
        if now >= state.last_sweep.saturating_add(self.ttl) {
            state.seen.retain(|_, expires| *expires >= now);
            state.last_sweep = now;
        }
        match state.seen.get(jti) {
            Some(&expires) if expires >= now => false,
            _ => {
                state
                    .seen
                    .insert(jti.to_owned(), now.saturating_add(self.ttl));
                true
            }
        }
    }

    pub fn len(&self) -> usize {
        self.inner
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .seen
            .len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Default for ReplayCache {
    fn default() -> Self {
        ReplayCache::new(DEFAULT_WINDOW_SECS, DEFAULT_SKEW_SECS)
    }
}

/// Verifier settings plus its replay state.
#[derive(Debug)]
pub struct DpopVerifier {
    pub window: u64,
    pub skew: u64,
    cache: ReplayCache,
}

impl Default for DpopVerifier {
    fn default() -> Self {
        DpopVerifier::new(DEFAULT_WINDOW_SECS, DEFAULT_SKEW_SECS)
    }
}

impl DpopVerifier {
    pub fn new(window: u64, skew: u64) -> Self {
        DpopVerifier {
            window,
            skew,
            cache: ReplayCache::new(window, skew),
        }
    }

    pub fn cache(&self) -> &ReplayCache {
        &self.cache
    }

    pub fn verify(
        &self,
        compact: &str,
        method: &str,
        uri: &str,
        now: u64,
    ) -> Result<PublicKeyJwk, DpopError> {
        verify_proof(
            compact,
            method,
            uri,
            &self.cache,
            now,
            self.window,
            self.skew,
        )
    }

    pub fn verify_decoded(
        &self,
        proof: &UnverifiedProof,
        method: &str,
        uri: &str,
        now: u64,
    ) -> Result<PublicKeyJwk, DpopError> {
        verify_decoded(proof, method, uri, &self.cache, now, self.window, self.skew)
    }
}

/// Full proof check. In order: extract the header key, verify the signature
/// with it, compare `htm`/`htu`, reject a reused `jti`, check freshness.
/// Returns the proof's public key.
pub fn verify_proof(
    compact: &str,
    method: &str,
    uri: &str,
    cache: &ReplayCache,
    now: u64,
    window: u64,
    skew: u64,
) -> Result<PublicKeyJwk, DpopError> {
    let proof = UnverifiedProof::decode(compact)?;
    verify_decoded(&proof, method, uri, cache, now, window, skew)
}

fn verify_decoded(
    proof: &UnverifiedProof,
    method: &str,
    uri: &str,
    cache: &ReplayCache,
    now: u64,
    window: u64,
    skew: u64,
) -> Result<PublicKeyJwk, DpopError> {
    proof.jws.verify(&proof.jwk).map_err(|e| match e {
        JoseError::BadSignature => DpopError::BadSignature,
        other => DpopError::MalformedProof(other.to_string()),
    })?;
    let claims: DpopClaims = serde_json::from_value(Value::Object(proof.jws.payload.clone()))
        .map_err(|e| DpopError::MalformedProof(e.to_string()))?;
    if claims.htm != method {
        return Err(DpopError::MethodMismatch);
    }
    if !htu_matches(&claims.htu, uri) {
        return Err(DpopError::UriMismatch);
    }
    if claims.jti.len() < 16 {
        return Err(DpopError::MalformedProof("jti too short".into()));
    }
    if !cache.check_and_insert(&claims.jti, now) {
        return Err(DpopError::Replayed);
    }
    if now.saturating_sub(claims.iat) > window || claims.iat > now.saturating_add(skew) {
        return Err(DpopError::Stale);
    }
    Ok(proof.jwk.clone())
}

#[cfg(test)]
mod tests {
    use base64::engine::general_purpose::URL_SAFE_NO_PAD;
    use base64::Engine;
    use serde_json::json;

    use super::*;
    use crate::jose::jws_sign;

    const TOKEN_URL: &str = "https://mm.aueb.gr/token";
    const NOW: u64 = 1617548847;

    fn key() -> KeyPair {
        KeyPair::from_seed(&[3u8; 32])
    }

    #[test]
    fn payload_carries_method_and_uri() {
        let proof = build_proof("POST", TOKEN_URL, &key(), NOW).unwrap();
        let jws = Jws::decode(&proof).unwrap();
        assert_eq!(jws.payload["htm"], "POST");
        assert_eq!(jws.payload["htu"], TOKEN_URL);
        assert_eq!(jws.payload["iat"], NOW);
        assert_eq!(jws.header["typ"], "dpop+jwt");
        assert_eq!(jws.header["alg"], "EdDSA");
        assert_eq!(
            PublicKeyJwk::from_value(&jws.header["jwk"]).unwrap(),
            *key().public()
        );
        let jti = jws.payload["jti"].as_str().unwrap();
        assert!(jti.starts_with("0x") && jti.len() == 34);
    }

    #[test]
    fn jti_is_fresh_every_time() {
        let a = Jws::decode(&build_proof("POST", TOKEN_URL, &key(), NOW).unwrap()).unwrap();
        let b = Jws::decode(&build_proof("POST", TOKEN_URL, &key(), NOW).unwrap()).unwrap();
        assert_ne!(a.payload["jti"], b.payload["jti"]);
    }

    #[test]
    fn size_is_in_expected_range() {
        let proof = build_proof("POST", TOKEN_URL, &key(), NOW).unwrap();
        assert!((350..=520).contains(&proof.len()), "{}", proof.len());
    }

    #[test]
    fn relative_uri_refused() {
        assert!(matches!(
            build_proof("GET", "/token", &key(), NOW),
            Err(DpopError::InvalidUri(_))
        ));
    }

    #[test]
    fn round_trip_returns_signer_key() {
        let v = DpopVerifier::default();
        let proof = build_proof("POST", TOKEN_URL, &key(), NOW).unwrap();
        assert_eq!(
            v.verify(&proof, "POST", TOKEN_URL, NOW).unwrap(),
            *key().public()
        );
    }

    #[test]
    fn second_presentation_is_replayed() {
        let v = DpopVerifier::default();
        let proof = build_proof("POST", TOKEN_URL, &key(), NOW).unwrap();
        v.verify(&proof, "POST", TOKEN_URL, NOW).unwrap();
        let other = build_proof("POST", TOKEN_URL, &key(), NOW).unwrap();
        v.verify(&other, "POST", TOKEN_URL, NOW + 1).unwrap();
        assert!(matches!(
            v.verify(&proof, "POST", TOKEN_URL, NOW + 2),
            Err(DpopError::Replayed)
        ));
    }

    #[test]
    fn uri_and_method_mismatch() {
        let v = DpopVerifier::default();
        let proof = build_proof("POST", TOKEN_URL, &key(), NOW).unwrap();
        assert!(matches!(
            v.verify(&proof, "POST", "https://mm.aueb.gr/other", NOW),
            Err(DpopError::UriMismatch)
        ));
        assert!(matches!(
            v.verify(&proof, "GET", TOKEN_URL, NOW),
            Err(DpopError::MethodMismatch)
        ));
    }

    #[test]
    fn htu_normalization() {
        assert!(htu_matches("HTTPS://MM.aueb.GR:443/token", TOKEN_URL));
        assert!(htu_matches(
            "http://example.com:80/a",
            "http://example.com/a"
        ));
        assert!(!htu_matches("https://mm.aueb.gr:8443/token", TOKEN_URL));
        assert!(!htu_matches("https://mm.aueb.gr/Token", TOKEN_URL));
        assert!(!htu_matches("not a uri", "not a uri"));
    }

    #[test]
    fn freshness_boundary() {
        let v = DpopVerifier::new(60, 5);
        let at_edge = build_proof("GET", TOKEN_URL, &key(), NOW - 60).unwrap();
        assert!(v.verify(&at_edge, "GET", TOKEN_URL, NOW).is_ok());
        let past_edge = build_proof("GET", TOKEN_URL, &key(), NOW - 61).unwrap();
        assert!(matches!(
            v.verify(&past_edge, "GET", TOKEN_URL, NOW),
            Err(DpopError::Stale)
        ));
        let future = build_proof("GET", TOKEN_URL, &key(), NOW + 6).unwrap();
        assert!(matches!(
            v.verify(&future, "GET", TOKEN_URL, NOW),
            Err(DpopError::Stale)
        ));
        let slight_future = build_proof("GET", TOKEN_URL, &key(), NOW + 5).unwrap();
        assert!(v.verify(&slight_future, "GET", TOKEN_URL, NOW).is_ok());
    }

    #[test]
    fn swapped_header_key_is_bad_signature() {
        let proof = build_proof("POST", TOKEN_URL, &key(), NOW).unwrap();
        let segs: Vec<&str> = proof.split('.').collect();
        let other = KeyPair::from_seed(&[4u8; 32]);
        let header = json!({"typ": "dpop+jwt", "alg": "EdDSA", "jwk": other.public()});
        let forged = format!(
            "{}.{}.{}",
            URL_SAFE_NO_PAD.encode(serde_json::to_vec(&header).unwrap()),
            segs[1],
            segs[2]
        );
        let v = DpopVerifier::default();
        assert!(matches!(
            v.verify(&forged, "POST", TOKEN_URL, NOW),
            Err(DpopError::BadSignature)
        ));
    }

    #[test]
    fn wrong_typ_rejected() {
        let token = jws_sign(
            &json!({"htm": "POST", "htu": TOKEN_URL, "iat": NOW, "jti": "0x00112233445566778899"}),
            "jwt",
            &key(),
        )
        .unwrap();
        let v = DpopVerifier::default();
        assert!(matches!(
            v.verify(&token, "POST", TOKEN_URL, NOW),
            Err(DpopError::WrongType)
        ));
    }

    #[test]
    fn missing_claims_are_malformed() {
        let header = JoseHeader::new(DPOP_TYP).with_jwk(key().public().clone());
        let proof = sign_with_header(&header, &json!({"htm": "POST", "iat": NOW}), &key()).unwrap();
        let v = DpopVerifier::default();
        assert!(matches!(
            v.verify(&proof, "POST", TOKEN_URL, NOW),
            Err(DpopError::MalformedProof(_))
        ));
        assert!(matches!(
            v.verify("x.y", "POST", TOKEN_URL, NOW),
            Err(DpopError::MalformedProof(_))
        ));
    }

    #[test]
    fn cache_evicts_expired_entries() {
        let cache = ReplayCache::new(60, 5);
        assert!(cache.check_and_insert("a", 100));
        assert!(!cache.check_and_insert("a", 165));
        assert!(cache.check_and_insert("b", 166));
        assert!(cache.check_and_insert("a", 166));
        // sweeps run at most once per ttl
        assert_eq!(cache.len(), 2);
        assert!(cache.check_and_insert("c", 300));
        assert_eq!(cache.len(), 1);
    }

    #[test]
    fn concurrent_presentations_succeed_once() {
        let v = std::sync::Arc::new(DpopVerifier::default());
        let proof = build_proof("POST", TOKEN_URL, &key(), NOW).unwrap();
        let handles: Vec<_> = (0..8)
            .map(|_| {
                let v = v.clone();
                let proof = proof.clone();
                std::thread::spawn(move || v.verify(&proof, "POST", TOKEN_URL, NOW).is_ok())
            })
            .collect();
        let ok = handles
            .into_iter()
            .map(|h| h.join().unwrap())
            .filter(|&b| b)
            .count();
        assert_eq!(ok, 1);
    }
}
