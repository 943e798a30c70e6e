use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{Capability, VcError};
use crate::jose::{jws_sign, jws_verify, JoseError, JwtTimeWindow, KeyPair, PublicKeyJwk};

pub const W3C_CREDENTIALS_CONTEXT: &str = "https://www.w3.org/2018/credentials/v1";
pub const VERIFIABLE_CREDENTIAL: &str = "VerifiableCredential";
pub const REVOCATION_LIST_STATUS: &str = "RevocationList2020Status";
pub const ACCESS_TOKEN_TYP: &str = "jwt";

/// Pointer from a credential into its issuer's revocation list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RevocationStatusRef {
    #[serde(rename = "type")]
    pub status_type: String,
    #[serde(rename = "revocationListIndex")]
    pub revocation_list_index: String,
    #[serde(rename = "revocationListCredential")]
    pub revocation_list_credential: String,
}

impl RevocationStatusRef {
    pub fn new(index: u64, list_url: impl Into<String>) -> Self {
        RevocationStatusRef {
            status_type: REVOCATION_LIST_STATUS.to_owned(),
            revocation_list_index: index.to_string(),
            revocation_list_credential: list_url.into(),
        }
    }

    /// Parses the decimal index. Leading `+`, signs and whitespace are refused.
    pub fn index(&self) -> Result<u64, VcError> {
        let s = &self.revocation_list_index;
        if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
            return Err(VcError::InvalidStatus(format!(
                "revocationListIndex {s:?} is not a decimal index"
            )));
        }
        s.parse()
            .map_err(|_| VcError::InvalidStatus(format!("revocationListIndex {s:?} out of range")))
    }
}

/// The `vc` claim of an access token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VcObject {
    #[serde(rename = "@context")]
    pub context: Vec<String>,
    #[serde(rename = "type")]
    pub types: Vec<String>,
    #[serde(
        rename = "credentialStatus",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    pub credential_status: Option<RevocationStatusRef>,
    #[serde(rename = "credentialSubject")]
    pub credential_subject: Map<String, Value>,
}

impl VcObject {
    fn check_shape(&self) -> Result<(), VcError> {
        if self.context.is_empty() {
            return Err(VcError::MalformedToken("vc @context is empty".into()));
        }
        if self.types.len() < 2 || !self.types.iter().any(|t| t == VERIFIABLE_CREDENTIAL) {
            return Err(VcError::MalformedToken(
                "vc type must contain VerifiableCredential and a credential type".into(),
            ));
        }
        Ok(())
    }
}

/// A credential type an RS accepts: the type string, its context URI and
/// the name of the subject claim holding the capability list.
///
/// Contexts are compared as opaque strings and never dereferenced.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CredentialDefinition {
    #[serde(rename = "type")]
    pub credential_type: String,
    pub context: String,
    #[serde(default = "default_subject_claim")]
    pub subject_claim: String,
}

fn default_subject_claim() -> String {
    "capabilities".to_owned()
}

impl CredentialDefinition {
    pub fn new(credential_type: impl Into<String>, context: impl Into<String>) -> Self {
        CredentialDefinition {
            credential_type: credential_type.into(),
            context: context.into(),
            subject_claim: default_subject_claim(),
        }
    }

    pub fn from_json(json: &str) -> Result<Self, VcError> {
        serde_json::from_str(json).map_err(|e| VcError::InvalidDefinition(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DefinitionReject {
    #[error("credential type {0:?} missing")]
    MissingType(String),
    #[error("context {0:?} missing")]
    MissingContext(String),
    #[error("credential subject does not match schema: {0}")]
    BadSubject(String),
}

/// Checks a `vc` object against a credential definition and returns its
/// capabilities on success.
pub fn validate_credential_definition(
    vc: &VcObject,
    definition: &CredentialDefinition,
) -> Result<Vec<Capability>, DefinitionReject> {
    if !vc.types.iter().any(|t| t == &definition.credential_type) {
        return Err(DefinitionReject::MissingType(
            definition.credential_type.clone(),
        ));
    }
    if !vc.context.iter().any(|c| c == &definition.context) {
        return Err(DefinitionReject::MissingContext(definition.context.clone()));
    }
    let subject = &vc.credential_subject;
    if let Some(extra) = subject.keys().find(|k| **k != definition.subject_claim) {
        return Err(DefinitionReject::BadSubject(format!(
            "unexpected claim {extra:?}"
        )));
    }
    let list = subject
        .get(&definition.subject_claim)
        .and_then(Value::as_array)
        .ok_or_else(|| {
            DefinitionReject::BadSubject(format!("{} must be an array", definition.subject_claim))
        })?;
    if list.is_empty() {
        return Err(DefinitionReject::BadSubject("no capabilities".into()));
    }
    list.iter()
        .map(|v| Capability::from_value(v).map_err(|e| DefinitionReject::BadSubject(e.to_string())))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Confirmation {
    pub jwk: PublicKeyJwk,
}

/// Claims set of a VC access token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccessTokenVc {
    pub jti: String,
    pub iss: String,
    pub iat: u64,
    pub exp: u64,
    pub cnf: Confirmation,
    pub vc: VcObject,
}

impl AccessTokenVc {
    pub fn from_payload(payload: Map<String, Value>) -> Result<Self, VcError> {
        let token: AccessTokenVc = serde_json::from_value(Value::Object(payload))
            .map_err(|e| VcError::MalformedToken(e.to_string()))?;
        token.vc.check_shape()?;
        if token.exp <= token.iat {
            return Err(VcError::MalformedToken("exp must be after iat".into()));
        }
        Ok(token)
    }

    pub fn time_window(&self) -> JwtTimeWindow {
        JwtTimeWindow::new(self.iat, Some(self.exp)).expect("exp > iat checked at construction")
    }

    pub fn holder(&self) -> &PublicKeyJwk {
        &self.cnf.jwk
    }
}

/// What an issuer puts into one access token.
#[derive(Debug, Clone)]
pub struct Issuance {
    pub issuer: String,
    pub jti: String,
    pub subject: PublicKeyJwk,
    pub capabilities: Vec<Capability>,
    pub validity: u64,
    pub status: Option<RevocationStatusRef>,
}

pub fn build_capability_vc(
    definition: &CredentialDefinition,
    issuance: Issuance,
    now: u64,
) -> Result<AccessTokenVc, VcError> {
    if issuance.capabilities.is_empty() {
        return Err(VcError::EmptyCapabilities);
    }
    let exp = now
        .checked_add(issuance.validity)
        .filter(|&exp| exp > now)
        .ok_or(VcError::InvalidValidity(issuance.validity))?;
    let mut subject = Map::new();
    subject.insert(
        definition.subject_claim.clone(),
        Value::Array(
            issuance
                .capabilities
                .iter()
                .map(Capability::to_value)
                .collect(),
        ),
    );
    Ok(AccessTokenVc {
        jti: issuance.jti,
        iss: issuance.issuer,
        iat: now,
        exp,
        cnf: Confirmation {
            jwk: issuance.subject,
        },
        vc: VcObject {
            context: vec![
                W3C_CREDENTIALS_CONTEXT.to_owned(),
                definition.context.clone(),
            ],
            types: vec![
                VERIFIABLE_CREDENTIAL.to_owned(),
                definition.credential_type.clone(),
            ],
            credential_status: issuance.status,
            credential_subject: subject,
        },
    })
}

pub fn encode_vc_jwt(token: &AccessTokenVc, signer: &KeyPair) -> Result<String, JoseError> {
    jws_sign(token, ACCESS_TOKEN_TYP, signer)
}

/// Verifies an access token under `issuer_key` and parses its claims.
pub fn decode_vc_jwt(compact: &str, issuer_key: &PublicKeyJwk) -> Result<AccessTokenVc, VcError> {
    let (_, payload) = jws_verify(compact, issuer_key)?;
    AccessTokenVc::from_payload(payload)
}

/// Issues credential ids of the form `<base>/<n>`, n counting from 1.
#[derive(Debug)]
pub struct CredentialIds {
    base: String,
    next: AtomicU64,
}

impl CredentialIds {
    pub fn new(base: impl Into<String>) -> Self {
        Self::starting_at(base, 1)
    }

    pub fn starting_at(base: impl Into<String>, next: u64) -> Self {
        let base = base.into().trim_end_matches('/').to_owned();
        CredentialIds {
            base,
            next: AtomicU64::new(next),
        }
    }

    /// `<issuer>/credentials/<n>`.
    pub fn for_issuer(issuer: &str) -> Self {
        Self::new(format!("{}/credentials", issuer.trim_end_matches('/')))
    }

    pub fn next_id(&self) -> String {
        format!(
            "{}/{}",
            self.base,
            self.next.fetch_add(1, Ordering::Relaxed)
        )
    }

    pub fn peek(&self) -> u64 {
        self.next.load(Ordering::Relaxed)
    }
}

#[cfg(test)]
mod tests {
    use serde_json::json;

    use super::*;
    use crate::vc::Right;

    fn definition() -> CredentialDefinition {
        CredentialDefinition::new(
            "capabilities",
            "https://mm.aueb.gr/contexts/capabilities/v1",
        )
    }

    fn issuance(caps: Vec<Capability>, validity: u64) -> Issuance {
        Issuance {
            issuer: "https://mm.aueb.gr/as".into(),
            jti: "https://mm.aueb.gr/credentials/1".into(),
            subject: KeyPair::from_seed(&[1u8; 32]).public().clone(),
            capabilities: caps,
            validity,
            status: Some(RevocationStatusRef::new(94567, "https://aueb.gr/rl")),
        }
    }

    fn reference_caps() -> Vec<Capability> {
        vec![
            Capability::new("folder1", [Right::Read, Right::Write, Right::Delete]).unwrap(),
            Capability::new("folder2", [Right::Read]).unwrap(),
        ]
    }

    #[test]
    fn matches_reference_shape() {
        let token = build_capability_vc(
            &definition(),
            issuance(reference_caps(), 864000),
            1617559370,
        )
        .unwrap();
        let subject = KeyPair::from_seed(&[1u8; 32]).public().clone();
        let expected = json!({
            "jti": "https://mm.aueb.gr/credentials/1",
            "iss": "https://mm.aueb.gr/as",
            "iat": 1617559370,
            "exp": 1618423370,
            "cnf": {"jwk": {"kty": "OKP", "crv": "Ed25519", "x": subject.x()}},
            "vc": {
                "@context": [
                    "https://www.w3.org/2018/credentials/v1",
                    "https://mm.aueb.gr/contexts/capabilities/v1"
                ],
                "type": ["VerifiableCredential", "capabilities"],
                "credentialStatus": {
                    "type": "RevocationList2020Status",
                    "revocationListIndex": "94567",
                    "revocationListCredential": "https://aueb.gr/rl"
                },
                "credentialSubject": {
                    "capabilities": [
                        {"folder1": ["r", "w", "d"]},
                        {"folder2": ["r"]}
                    ]
                }
            }
        });
        assert_eq!(serde_json::to_value(&token).unwrap(), expected);
        let text = serde_json::to_string(&token).unwrap();
        let order: Vec<usize> = [
            "\"jti\"", "\"iss\"", "\"iat\"", "\"exp\"", "\"cnf\"", "\"vc\"",
        ]
        .iter()
        .map(|k| text.find(k).unwrap())
        .collect();
        assert!(order.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn zero_validity_rejected() {
        assert!(matches!(
            build_capability_vc(&definition(), issuance(reference_caps(), 0), 100),
            Err(VcError::InvalidValidity(0))
        ));
        assert!(
            build_capability_vc(&definition(), issuance(reference_caps(), u64::MAX), 100).is_err()
        );
    }

    #[test]
    fn empty_capabilities_rejected() {
        assert!(matches!(
            build_capability_vc(&definition(), issuance(vec![], 10), 100),
            Err(VcError::EmptyCapabilities)
        ));
    }

    #[test]
    fn single_capability() {
        let caps = vec![Capability::new("docs", [Right::Read]).unwrap()];
        let token = build_capability_vc(&definition(), issuance(caps, 10), 100).unwrap();
        assert_eq!(
            token.vc.credential_subject["capabilities"]
                .as_array()
                .unwrap()
                .len(),
            1
        );
    }

    #[test]
    fn encode_decode_round_trip() {
        let issuer = KeyPair::from_seed(&[9u8; 32]);
        let token = build_capability_vc(
            &definition(),
            issuance(reference_caps(), 864000),
            1617559370,
        )
        .unwrap();
        let compact = encode_vc_jwt(&token, &issuer).unwrap();
        let (header, payload) = jws_verify(&compact, issuer.public()).unwrap();
        assert_eq!(header["typ"], "jwt");
        assert_eq!(
            Value::Object(payload),
            serde_json::to_value(&token).unwrap()
        );
        assert_eq!(decode_vc_jwt(&compact, issuer.public()).unwrap(), token);
    }

    #[test]
    fn serialized_sizes() {
        // Lengths computed independently with Python's json/base64 on the
        // same claims (minified): 570-byte payload -> 884-byte JWS, and 707
        // bytes when the credentialStatus block is left out.
        let issuer = KeyPair::from_seed(&[9u8; 32]);
        let token = build_capability_vc(
            &definition(),
            issuance(reference_caps(), 864000),
            1617559370,
        )
        .unwrap();
        assert_eq!(serde_json::to_string(&token).unwrap().len(), 570);
        assert_eq!(encode_vc_jwt(&token, &issuer).unwrap().len(), 884);
        let mut bare = issuance(reference_caps(), 864000);
        bare.status = None;
        let token = build_capability_vc(&definition(), bare, 1617559370).unwrap();
        assert_eq!(encode_vc_jwt(&token, &issuer).unwrap().len(), 707);
    }

    #[test]
    fn built_tokens_satisfy_their_definition() {
        let token =
            build_capability_vc(&definition(), issuance(reference_caps(), 10), 100).unwrap();
        assert_eq!(
            validate_credential_definition(&token.vc, &definition()).unwrap(),
            reference_caps()
        );
    }

    #[test]
    fn definition_rejections() {
        let token =
            build_capability_vc(&definition(), issuance(reference_caps(), 10), 100).unwrap();

        let mut user_id = token.vc.clone();
        user_id.types = vec!["VerifiableCredential".into(), "UserId".into()];
        assert!(matches!(
            validate_credential_definition(&user_id, &definition()),
            Err(DefinitionReject::MissingType(_))
        ));

        let mut no_ctx = token.vc.clone();
        no_ctx.context.truncate(1);
        assert!(matches!(
            validate_credential_definition(&no_ctx, &definition()),
            Err(DefinitionReject::MissingContext(_))
        ));

        for subject in [
            json!({"capabilities": [{"folder1": ["x"]}]}),
            json!({"capabilities": []}),
            json!({"capabilities": {"folder1": ["r"]}}),
            json!({"capabilities": [{"/etc": ["r"]}]}),
            json!({"capabilities": [{"f": ["r"]}], "admin": true}),
            json!({}),
        ] {
            let mut vc = token.vc.clone();
            vc.credential_subject = subject.as_object().unwrap().clone();
            assert!(
                matches!(
                    validate_credential_definition(&vc, &definition()),
                    Err(DefinitionReject::BadSubject(_))
                ),
                "{subject}"
            );
        }
    }

    #[test]
    fn payload_shape_enforced() {
        let token =
            build_capability_vc(&definition(), issuance(reference_caps(), 10), 100).unwrap();
        let good = serde_json::to_value(&token).unwrap();
        assert!(AccessTokenVc::from_payload(good.as_object().unwrap().clone()).is_ok());

        let mut one_type = good.clone();
        one_type["vc"]["type"] = json!(["VerifiableCredential"]);
        let mut no_vc_type = good.clone();
        no_vc_type["vc"]["type"] = json!(["a", "capabilities"]);
        let mut backwards = good.clone();
        backwards["exp"] = json!(50);
        let mut no_cnf = good.clone();
        no_cnf.as_object_mut().unwrap().remove("cnf");
        for bad in [one_type, no_vc_type, backwards, no_cnf] {
            assert!(AccessTokenVc::from_payload(bad.as_object().unwrap().clone()).is_err());
        }
    }

    #[test]
    fn status_index_parsing() {
        assert_eq!(RevocationStatusRef::new(94567, "u").index().unwrap(), 94567);
        for bad in ["", "-1", "+3", " 3", "0x10", "99999999999999999999999"] {
            let mut r = RevocationStatusRef::new(0, "u");
            r.revocation_list_index = bad.into();
            assert!(r.index().is_err(), "{bad}");
        }
    }

    #[test]
    fn credential_ids_are_sequential() {
        let ids = CredentialIds::for_issuer("https://mm.aueb.gr/as/");
        assert_eq!(ids.next_id(), "https://mm.aueb.gr/as/credentials/1");
        assert_eq!(ids.next_id(), "https://mm.aueb.gr/as/credentials/2");
        let ids = CredentialIds::new("https://mm.aueb.gr/credentials");
        assert_eq!(ids.next_id(), "https://mm.aueb.gr/credentials/1");
    }
}
