use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{AccessTokenVc, VcError, ACCESS_TOKEN_TYP};
use crate::jose::{jws_sign, Jws, KeyPair, PublicKeyJwk};

/// Claims of a presentation wrapping several access tokens bound to one key.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifiablePresentation {
    /// Hex SHA-256 of the holder's canonical JWK.
    pub iss: String,
    pub iat: u64,
    pub vp: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Presentation {
    Single(Box<AccessTokenVc>),
    Multi(VerifiablePresentation),
}

/// Decodes the claims of a single token without verifying anything.
pub fn peek_access_token(compact: &str) -> Result<AccessTokenVc, VcError> {
    let jws = Jws::decode(compact)?;
    if jws.payload.contains_key("vp") {
        return Err(VcError::NestedPresentation);
    }
    AccessTokenVc::from_payload(jws.payload)
}

/// Wraps `tokens` in a presentation signed by `holder`. Every token must be
/// bound (`cnf.jwk`) to the holder's key.
pub fn build_vp(tokens: &[String], holder: &KeyPair, now: u64) -> Result<String, VcError> {
    if tokens.is_empty() {
        return Err(VcError::EmptyTokenList);
    }
    for token in tokens {
        let claims = peek_access_token(token)?;
        if claims.holder() != holder.public() {
            return Err(VcError::CnfMismatch);
        }
    }
    let vp = VerifiablePresentation {
        iss: holder.public().sha256_hex(),
        iat: now,
        vp: tokens.to_vec(),
    };
    Ok(jws_sign(&vp, ACCESS_TOKEN_TYP, holder)?)
}

/// Tells a single access token from a presentation by the `vp` claim. A
/// payload carrying both `vp` and `vc` is a presentation. No signature is
/// checked here.
pub fn parse_presentation(compact: &str) -> Result<Presentation, VcError> {
    let jws = Jws::decode(compact)?;
    if jws.payload.contains_key("vp") {
        let vp: VerifiablePresentation = serde_json::from_value(Value::Object(jws.payload))
            .map_err(|e| VcError::MalformedToken(e.to_string()))?;
        if vp.vp.is_empty() {
            return Err(VcError::EmptyTokenList);
        }
        Ok(Presentation::Multi(vp))
    } else {
        Ok(Presentation::Single(Box::new(AccessTokenVc::from_payload(
            jws.payload,
        )?)))
    }
}

pub fn holder_digest(key: &PublicKeyJwk) -> String {
    key.sha256_hex()
}

#[cfg(test)]
mod tests {
    use serde_json::json;
    use sha2::{Digest, Sha256};

    use super::*;
    use crate::jose::jws_verify;
    use crate::vc::{
        build_capability_vc, encode_vc_jwt, Capability, CredentialDefinition, Issuance, Right,
    };

    fn token_for(holder: &KeyPair, issuer: &KeyPair, path: &str) -> String {
        let def = CredentialDefinition::new("capabilities", "https://example.org/ctx");
        let claims = build_capability_vc(
            &def,
            Issuance {
                issuer: "https://as.example".into(),
                jti: format!("https://as.example/credentials/{path}"),
                subject: holder.public().clone(),
                capabilities: vec![Capability::new(path, [Right::Read]).unwrap()],
                validity: 100,
                status: None,
            },
            1000,
        )
        .unwrap();
        encode_vc_jwt(&claims, issuer).unwrap()
    }

    #[test]
    fn two_member_presentation() {
        let holder = KeyPair::from_seed(&[1u8; 32]);
        let issuer = KeyPair::from_seed(&[2u8; 32]);
        let tokens = vec![
            token_for(&holder, &issuer, "a"),
            token_for(&holder, &issuer, "b"),
        ];
        let vp = build_vp(&tokens, &holder, 1001).unwrap();
        let (_, payload) = jws_verify(&vp, holder.public()).unwrap();
        assert_eq!(payload["vp"], json!(tokens));
        match parse_presentation(&vp).unwrap() {
            Presentation::Multi(p) => assert_eq!(p.vp.len(), 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn issuer_is_independent_sha256_of_canonical_jwk() {
        let holder = KeyPair::from_seed(&[1u8; 32]);
        let issuer = KeyPair::from_seed(&[2u8; 32]);
        let vp = build_vp(&[token_for(&holder, &issuer, "a")], &holder, 1001).unwrap();
        let (_, payload) = jws_verify(&vp, holder.public()).unwrap();
        let canonical = format!(
            r#"{{"crv":"Ed25519","kty":"OKP","x":"{}"}}"#,
            holder.public().x()
        );
        let expected = hex::encode(Sha256::digest(canonical.as_bytes()));
        assert_eq!(payload["iss"], expected);
    }

    #[test]
    fn foreign_token_is_cnf_mismatch() {
        let holder = KeyPair::from_seed(&[1u8; 32]);
        let other = KeyPair::from_seed(&[3u8; 32]);
        let issuer = KeyPair::from_seed(&[2u8; 32]);
        let tokens = vec![
            token_for(&holder, &issuer, "a"),
            token_for(&other, &issuer, "b"),
        ];
        assert!(matches!(
            build_vp(&tokens, &holder, 1001),
            Err(VcError::CnfMismatch)
        ));
    }

    #[test]
    fn empty_and_nested_refused() {
        let holder = KeyPair::from_seed(&[1u8; 32]);
        let issuer = KeyPair::from_seed(&[2u8; 32]);
        assert!(matches!(
            build_vp(&[], &holder, 1),
            Err(VcError::EmptyTokenList)
        ));
        let inner = build_vp(&[token_for(&holder, &issuer, "a")], &holder, 1).unwrap();
        assert!(matches!(
            build_vp(&[inner], &holder, 1),
            Err(VcError::NestedPresentation)
        ));
    }

    #[test]
    fn single_token_branch() {
        let holder = KeyPair::from_seed(&[1u8; 32]);
        let issuer = KeyPair::from_seed(&[2u8; 32]);
        match parse_presentation(&token_for(&holder, &issuer, "a")).unwrap() {
            Presentation::Single(t) => assert_eq!(t.holder(), holder.public()),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn vp_claim_wins_over_vc_claim() {
        let holder = KeyPair::from_seed(&[1u8; 32]);
        let issuer = KeyPair::from_seed(&[2u8; 32]);
        let member = token_for(&holder, &issuer, "a");
        let single = Jws::decode(&member).unwrap();
        let mut payload = single.payload.clone();
        payload.insert("vp".into(), json!([member]));
        let pathological = jws_sign(&payload, "jwt", &holder).unwrap();
        assert!(matches!(
            parse_presentation(&pathological).unwrap(),
            Presentation::Multi(_)
        ));
    }

    #[test]
    fn garbage_is_malformed() {
        assert!(matches!(
            parse_presentation("abc"),
            Err(VcError::MalformedToken(_))
        ));
    }
}
