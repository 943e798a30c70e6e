use serde_json::Value;

use super::{is_under, join_prefix, ResourceServer, ResourceTable, TenantEntry};
use crate::dpop::{DpopError, UnverifiedProof};
use crate::jose::{JoseError, Jws, PublicKeyJwk, TimeReject};
use crate::vc::{
    validate_credential_definition, AccessTokenVc, Capability, Right, VerifiablePresentation,
};

#[derive(Debug, thiserror::Error)]
pub enum VerifyError {
    #[error("no authorization server is responsible for this resource")]
    UnknownResource,
    #[error("malformed access token: {0}")]
    MalformedToken(String),
    #[error("token issuer is not the AS responsible for this resource")]
    IssuerMismatch,
    #[error("token signature does not verify under the AS key")]
    BadTokenSignature,
    #[error("token is bound to a different key than the DPoP proof")]
    CnfMismatch,
    #[error("invalid DPoP proof: {0}")]
    BadProof(#[source] DpopError),
    #[error("token expired")]
    Expired,
    #[error("token not yet valid")]
    NotYetValid,
    #[error("token revoked")]
    Revoked,
    #[error("token status unavailable: {0}")]
    StatusUnavailable(String),
    #[error("credential does not match the accepted definition: {0}")]
    InvalidCredential(String),
    #[error("presentation members are bound to different keys")]
    MixedCnf,
    #[error("presentation signature does not verify under the holder key")]
    BadVpSignature,
    #[error("presentation issuer is not the holder key digest")]
    VpIssuerMismatch,
    #[error("presentations cannot be nested")]
    NestedPresentation,
}

impl VerifyError {
    pub fn reason(&self) -> &'static str {
        match self {
            VerifyError::UnknownResource => "unknown_resource",
            VerifyError::MalformedToken(_) => "invalid_token",
            VerifyError::IssuerMismatch => "issuer_mismatch",
            VerifyError::BadTokenSignature => "bad_token_signature",
            VerifyError::CnfMismatch => "cnf_mismatch",
            VerifyError::BadProof(_) => "invalid_dpop_proof",
            VerifyError::Expired => "token_expired",
            VerifyError::NotYetValid => "token_not_yet_valid",
            VerifyError::Revoked => "token_revoked",
            VerifyError::StatusUnavailable(_) => "status_unavailable",
            VerifyError::InvalidCredential(_) => "invalid_credential",
            VerifyError::MixedCnf => "mixed_cnf",
            VerifyError::BadVpSignature => "bad_vp_signature",
            VerifyError::VpIssuerMismatch => "vp_issuer_mismatch",
            VerifyError::NestedPresentation => "nested_presentation",
        }
    }
}

/// The DPoP proof presented with a request and what it must match.
#[derive(Debug, Clone, Copy)]
pub struct ProofContext<'a> {
    pub proof: &'a str,
    pub method: &'a str,
    pub uri: &'a str,
}

/// Capabilities granted by one verified token, scoped to a tenant prefix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grant {
    pub issuer: String,
    pub prefix: String,
    pub capabilities: Vec<Capability>,
}

/// Allows iff some capability's `tenant_prefix/path` is a segment-wise
/// prefix of `path` and grants `operation`.
pub fn evaluate_capabilities(
    caps: &[Capability],
    operation: Right,
    path: &str,
    tenant_prefix: &str,
) -> bool {
    is_under(path, tenant_prefix)
        && caps
            .iter()
            .any(|c| c.allows(operation) && is_under(path, &join_prefix(tenant_prefix, c.path())))
}

struct DecodedToken {
    jws: Jws,
    claims: AccessTokenVc,
}

fn decode_token(compact: &str) -> Result<DecodedToken, VerifyError> {
    let jws = Jws::decode(compact).map_err(|e| VerifyError::MalformedToken(e.to_string()))?;
    if jws.payload.contains_key("vp") {
        return Err(VerifyError::NestedPresentation);
    }
    let claims = AccessTokenVc::from_payload(jws.payload.clone())
        .map_err(|e| VerifyError::MalformedToken(e.to_string()))?;
    Ok(DecodedToken { jws, claims })
}

fn signature_error(e: JoseError, bad: VerifyError) -> VerifyError {
    match e {
        JoseError::BadSignature => bad,
        other => VerifyError::MalformedToken(other.to_string()),
    }
}

impl ResourceServer {
    /// `iss` must name the tenant's AS and the signature must verify under its key.
    fn check_issuer(&self, token: &DecodedToken, entry: &TenantEntry) -> Result<(), VerifyError> {
        if token.claims.iss != entry.as_url {
            return Err(VerifyError::IssuerMismatch);
        }
        token
            .jws
            .verify(&entry.as_key)
            .map_err(|e| signature_error(e, VerifyError::BadTokenSignature))
    }

    /// Expiry, revocation status and credential definition.
    fn check_validity(
        &self,
        compact: &str,
        claims: &AccessTokenVc,
        entry: &TenantEntry,
        now: u64,
    ) -> Result<Vec<Capability>, VerifyError> {
        claims
            .time_window()
            .check(now, self.config.clock_skew)
            .map_err(|e| match e {
                TimeReject::Expired => VerifyError::Expired,
                TimeReject::NotFresh => VerifyError::NotYetValid,
            })?;
        self.check_status(compact, claims, entry, now)?;
        validate_credential_definition(&claims.vc, &self.config.definition)
            .map_err(|e| VerifyError::InvalidCredential(e.to_string()))
    }

    fn check_status(
        &self,
        compact: &str,
        claims: &AccessTokenVc,
        entry: &TenantEntry,
        now: u64,
    ) -> Result<(), VerifyError> {
        let outcome = if let Some(url) = &entry.introspection_url {
            self.transport
                .introspect(url, compact)
                .map(|body| body.get("active").and_then(Value::as_bool) == Some(true))
        } else if let Some(status) = &claims.vc.credential_status {
            let index = status
                .index()
                .map_err(|e| VerifyError::InvalidCredential(e.to_string()))?;
            let url = &status.revocation_list_credential;
            if !entry.allows_list_url(url) {
                return Err(VerifyError::InvalidCredential(format!(
                    "revocation list {url} is not allowed"
                )));
            }
            self.revocation
                .get(url, entry, self.transport.as_ref(), now)
                .and_then(|list| {
                    list.is_revoked(index).map(|revoked| !revoked).map_err(|_| {
                        format!("index {index} outside list of {} bits", list.len_bits())
                    })
                })
        } else {
            Ok(true)
        };
        match outcome {
            Ok(true) => Ok(()),
            Ok(false) => Err(VerifyError::Revoked),
            Err(reason) if self.config.fail_open => {
                tracing::warn!(%reason, jti = %claims.jti, "token status unavailable, failing open");
                Ok(())
            }
            Err(reason) => Err(VerifyError::StatusUnavailable(reason)),
        }
    }

    /// Single-token verification against the tenant resolved for the
    /// request: issuer and signature, `cnf` against the proof key, the DPoP
    /// proof itself, then expiry, status and credential definition.
    pub fn verify_access_token(
        &self,
        token: &str,
        proof: ProofContext<'_>,
        entry: &TenantEntry,
        now: u64,
    ) -> Result<Vec<Capability>, VerifyError> {
        let decoded = decode_token(token)?;
        self.check_issuer(&decoded, entry)?;
        let dpop = UnverifiedProof::decode(proof.proof).map_err(VerifyError::BadProof)?;
        if decoded.claims.holder() != dpop.jwk() {
            return Err(VerifyError::CnfMismatch);
        }
        self.dpop
            .verify_decoded(&dpop, proof.method, proof.uri, now)
            .map_err(VerifyError::BadProof)?;
        self.check_validity(token, &decoded.claims, entry, now)
    }

    /// Presentation verification. Every member is checked against its own
    /// issuer's table entry, all members must share one `cnf` key, the outer
    /// signature and `iss` digest must match that key, and the single DPoP
    /// proof must come from it. Any failing member fails the whole request.
    ///
    /// `preferred` is the tenant prefix resolved for the request; members from
    /// its AS are scoped to it.
    pub fn verify_vp_token(
        &self,
        presentation: &str,
        proof: ProofContext<'_>,
        table: &ResourceTable,
        preferred: Option<&str>,
        now: u64,
    ) -> Result<Vec<Grant>, VerifyError> {
        let outer =
            Jws::decode(presentation).map_err(|e| VerifyError::MalformedToken(e.to_string()))?;
        let vp: VerifiablePresentation =
            serde_json::from_value(Value::Object(outer.payload.clone()))
                .map_err(|e| VerifyError::MalformedToken(e.to_string()))?;
        if vp.vp.is_empty() {
            return Err(VerifyError::MalformedToken("empty presentation".into()));
        }
        let members = vp
            .vp
            .iter()
            .map(|t| decode_token(t))
            .collect::<Result<Vec<_>, _>>()?;
        let holder: PublicKeyJwk = members[0].claims.holder().clone();
        if members.iter().any(|m| *m.claims.holder() != holder) {
            return Err(VerifyError::MixedCnf);
        }

        let mut scoped = Vec::with_capacity(members.len());
        for member in &members {
            let issuer = member.claims.iss.as_str();
            let (prefix, entry) = preferred
                .and_then(|p| table.get(p).filter(|e| e.as_url == issuer).map(|e| (p, e)))
                .or_else(|| table.by_issuer(issuer).next())
                .ok_or(VerifyError::IssuerMismatch)?;
            self.check_issuer(member, entry)?;
            scoped.push((prefix.to_owned(), entry));
        }

        outer
            .verify(&holder)
            .map_err(|e| signature_error(e, VerifyError::BadVpSignature))?;
        if vp.iss != holder.sha256_hex() {
            return Err(VerifyError::VpIssuerMismatch);
        }

        let dpop = UnverifiedProof::decode(proof.proof).map_err(VerifyError::BadProof)?;
        if *dpop.jwk() != holder {
            return Err(VerifyError::CnfMismatch);
        }
        self.dpop
            .verify_decoded(&dpop, proof.method, proof.uri, now)
            .map_err(VerifyError::BadProof)?;

        members
            .iter()
            .zip(vp.vp.iter())
            .zip(scoped)
            .map(|((member, compact), (prefix, entry))| {
                Ok(Grant {
                    issuer: member.claims.iss.clone(),
                    prefix,
                    capabilities: self.check_validity(compact, &member.claims, entry, now)?,
                })
            })
            .collect()
    }
}
