//! Client side of the protocol: obtains VC access tokens from authorization
//! servers, combines them into presentations and calls the resource server
//! with a fresh DPoP proof per request.

mod cache;
mod config;

use std::time::Duration;

use capvc_core::authority::TokenResponse;
use capvc_core::dpop::{build_proof, DpopError};
use capvc_core::jose::{KeyFileError, KeyPair};
use capvc_core::vc::{build_vp, peek_access_token, VcError};
use serde_json::Value;

pub use cache::{CachedToken, TokenCache};
pub use config::{AsEndpoint, ClientConfig, CONFIG_ENV, DEFAULT_CONFIG_FILE};

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Key(#[from] KeyFileError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("network: {0}")]
    Network(#[from] reqwest::Error),
    #[error("authorization server refused ({status}): {error}{}", description.as_deref().map(|d| format!(": {d}")).unwrap_or_default())]
    OAuth {
        status: u16,
        error: String,
        description: Option<String>,
    },
    #[error("resource server answered {status}{}", reason.as_deref().map(|r| format!(" ({r})")).unwrap_or_default())]
    Refused {
        status: u16,
        reason: Option<String>,
        body: Vec<u8>,
    },
    #[error("no valid cached token for {0:?}; run `capvc token {0}` or pass --auto-renew")]
    NoToken(String),
    #[error(transparent)]
    Vc(#[from] VcError),
    #[error(transparent)]
    Dpop(#[from] DpopError),
    #[error("invalid URL {0:?}")]
    Url(String),
}

impl ClientError {
    /// 1 refused by a server, 2 usage or configuration, 3 network.
    pub fn exit_code(&self) -> u8 {
        match self {
            ClientError::OAuth { .. } | ClientError::Refused { .. } | ClientError::NoToken(_) => 1,
            ClientError::Vc(VcError::CnfMismatch) => 1,
            ClientError::Network(_) => 3,
            _ => 2,
        }
    }
}

/// The two headers of a resource request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccessHeaders {
    pub authorization: String,
    pub dpop: String,
}

/// Strips the fragment, which never reaches the server.
pub fn request_uri(url: &str) -> Result<String, ClientError> {
    let mut parsed = url::Url::parse(url).map_err(|_| ClientError::Url(url.to_owned()))?;
    if !matches!(parsed.scheme(), "http" | "https") || !parsed.has_host() {
        return Err(ClientError::Url(url.to_owned()));
    }
    parsed.set_fragment(None);
    Ok(parsed.into())
}

/// Builds `Authorization: DPoP <token>` and a fresh proof for exactly this
/// method and URL. One signature.
pub fn access_headers(
    key: &KeyPair,
    method: &str,
    url: &str,
    token: &str,
    now: u64,
) -> Result<AccessHeaders, ClientError> {
    let uri = request_uri(url)?;
    Ok(AccessHeaders {
        authorization: format!("DPoP {token}"),
        dpop: build_proof(method, &uri, key, now)?,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccessResponse {
    pub status: u16,
    pub body: Vec<u8>,
}

pub struct Client {
    key: KeyPair,
    http: reqwest::Client,
}

impl std::fmt::Debug for Client {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Client")
            .field("key", self.key.public())
            .finish_non_exhaustive()
    }
}

impl Client {
    pub fn new(key: KeyPair) -> Result<Self, ClientError> {
        let http = reqwest::Client::builder()
            .timeout(Duration::from_secs(30))
            .build()?;
        Ok(Client { key, http })
    }

    pub fn key(&self) -> &KeyPair {
        &self.key
    }

    /// Client-credentials grant authenticated by a DPoP proof over the token
    /// endpoint. One signature.
    pub async fn request_token(
        &self,
        endpoint: &AsEndpoint,
        now: u64,
    ) -> Result<TokenResponse, ClientError> {
        let uri = request_uri(&endpoint.token_endpoint)?;
        let proof = build_proof("POST", &uri, &self.key, now)?;
        let mut form = vec![
            ("grant_type", "client_credentials"),
            ("dpop", proof.as_str()),
        ];
        if let Some(rs) = &endpoint.resource {
            form.push(("resource", rs));
        }
        let resp = self.http.post(&uri).form(&form).send().await?;
        let status = resp.status().as_u16();
        let body = resp.bytes().await?;
        if status == 200 {
            if let Ok(token) = serde_json::from_slice::<TokenResponse>(&body) {
                return Ok(token);
            }
        }
        let json: Value = serde_json::from_slice(&body).unwrap_or(Value::Null);
        Err(ClientError::OAuth {
            status,
            error: json["error"]
                .as_str()
                .unwrap_or("invalid_response")
                .to_owned(),
            description: json["error_description"].as_str().map(str::to_owned),
        })
    }

    /// Returns the cached token for `name` while it is valid. A missing token
    /// is requested; an expired one only when `auto_renew` is set.
    pub async fn token(
        &self,
        cache: &TokenCache,
        name: &str,
        endpoint: &AsEndpoint,
        auto_renew: bool,
        now: u64,
    ) -> Result<String, ClientError> {
        let cached = cache.get(name, &endpoint.resource_server)?;
        match cached {
            Some(t) if t.is_valid(now) => return Ok(t.access_token),
            Some(_) if !auto_renew => return Err(ClientError::NoToken(name.to_owned())),
            _ => {}
        }
        self.fetch_and_cache(cache, name, endpoint, now).await
    }

    /// Always asks the AS and replaces the cached entry.
    pub async fn fetch_and_cache(
        &self,
        cache: &TokenCache,
        name: &str,
        endpoint: &AsEndpoint,
        now: u64,
    ) -> Result<String, ClientError> {
        let token = self.request_token(endpoint, now).await?;
        let exp = peek_access_token(&token.access_token)
            .map(|c| c.exp)
            .unwrap_or(now + token.expires_in);
        cache.put(
            name,
            &endpoint.resource_server,
            CachedToken {
                access_token: token.access_token.clone(),
                exp,
            },
        )?;
        Ok(token.access_token)
    }

    pub fn combine(&self, tokens: &[String], now: u64) -> Result<String, ClientError> {
        Ok(build_vp(tokens, &self.key, now)?)
    }

    /// Sends one request with a freshly minted proof. Non-2xx answers are
    /// errors carrying the server's `WWW-Authenticate` reason.
    pub async fn access(
        &self,
        method: &str,
        url: &str,
        token: &str,
        body: Option<Vec<u8>>,
        now: u64,
    ) -> Result<AccessResponse, ClientError> {
        let headers = access_headers(&self.key, method, url, token, now)?;
        let method = reqwest::Method::from_bytes(method.as_bytes())
            .map_err(|_| ClientError::Config(format!("bad method {method}")))?;
        let mut req = self
            .http
            .request(method, request_uri(url)?)
            .header("Authorization", headers.authorization)
            .header("DPoP", headers.dpop);
        if let Some(body) = body {
            req = req.body(body);
        }
        let resp = req.send().await?;
        let status = resp.status().as_u16();
        let reason = resp
            .headers()
            .get("www-authenticate")
            .and_then(|v| v.to_str().ok())
            .map(str::to_owned);
        let body = resp.bytes().await?.to_vec();
        if (200..300).contains(&status) {
            Ok(AccessResponse { status, body })
        } else {
            let reason = reason.or_else(|| {
                serde_json::from_slice::<Value>(&body)
                    .ok()
                    .and_then(|v| v["error"].as_str().map(str::to_owned))
            });
            Err(ClientError::Refused {
                status,
                reason,
                body,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use capvc_core::dpop::DpopVerifier;
    use capvc_core::jose::ops;

    use super::*;

    #[test]
    fn one_signature_per_request_and_fresh_jti() {
        let key = KeyPair::from_seed(&[5; 32]);
        let url = "http://rs.example/home/org1/a.txt#frag";
        let (first, counts) =
            ops::measure(|| access_headers(&key, "GET", url, "tok", 100).unwrap());
        assert_eq!((counts.signs, counts.verifies), (1, 0));
        let second = access_headers(&key, "GET", url, "tok", 100).unwrap();
        assert_ne!(first.dpop, second.dpop);
        assert_eq!(first.authorization, "DPoP tok");
        let verifier = DpopVerifier::new(60, 5);
        for h in [&first, &second] {
            verifier
                .verify(&h.dpop, "GET", "http://rs.example/home/org1/a.txt", 100)
                .unwrap();
        }
    }

    #[test]
    fn request_uri_rules() {
        assert_eq!(request_uri("http://a/b?c#d").unwrap(), "http://a/b?c");
        assert!(request_uri("ftp://a/b").is_err());
        assert!(request_uri("/relative").is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(ClientError::NoToken("x".into()).exit_code(), 1);
        assert_eq!(ClientError::Config("x".into()).exit_code(), 2);
        assert_eq!(
            ClientError::Refused {
                status: 403,
                reason: None,
                body: vec![]
            }
            .exit_code(),
            1
        );
    }
}
