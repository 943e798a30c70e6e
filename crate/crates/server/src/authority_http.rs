//! HTTP front end of the authorization server.
//!
//! | route                          | body                       |
//! |--------------------------------|----------------------------|
//! | `POST {base}/token`            | `grant_type`, `dpop`, `resource`? |
//! | `POST {base}/introspect`       | `token`                    |
//! | `GET  {base}/revocation-list`  | (none) → `application/jwt` |
//! | `POST {base}/revoke`           | `jti`, admin bearer token  |

use std::collections::HashMap;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use capvc_core::authority::{AuthorityError, AuthorizationServer};
use capvc_core::unix_now;
use serde_json::json;

#[derive(Debug)]
struct AsState {
    server: Arc<AuthorizationServer>,
    admin_token: Option<String>,
}

fn endpoint_path(url: &str) -> String {
    url::Url::parse(url)
        .map(|u| u.path().to_owned())
        .unwrap_or_else(|_| url.to_owned())
}

/// Routes are mounted at the paths of the configured endpoint URLs.
pub fn router(server: Arc<AuthorizationServer>, admin_token: Option<String>) -> Router {
    let config = server.config();
    let token = endpoint_path(&config.token_endpoint);
    let introspect = endpoint_path(&config.introspection_endpoint);
    let list = endpoint_path(&config.revocation_list_url);
    let revoke = format!(
        "{}/revoke",
        endpoint_path(&config.issuer).trim_end_matches('/')
    );
    Router::new()
        .route(&token, post(token_endpoint))
        .route(&introspect, post(introspection_endpoint))
        .route(&list, get(revocation_list))
        .route(&revoke, post(revoke_endpoint))
        .with_state(Arc::new(AsState {
            server,
            admin_token,
        }))
}

fn oauth_error(status: StatusCode, error: &str, description: &str) -> Response {
    (
        status,
        Json(json!({"error": error, "error_description": description})),
    )
        .into_response()
}

/// Parses an `application/x-www-form-urlencoded` body; repeated fields are
/// an error.
fn parse_form(body: &[u8]) -> Result<HashMap<String, String>, Box<Response>> {
    let mut form = HashMap::new();
    for (k, v) in url::form_urlencoded::parse(body) {
        if form
            .insert(k.clone().into_owned(), v.into_owned())
            .is_some()
        {
            let resp = oauth_error(
                StatusCode::BAD_REQUEST,
                "invalid_request",
                &format!("repeated field {k:?}"),
            );
            return Err(Box::new(resp));
        }
    }
    Ok(form)
}

fn no_store(mut resp: Response) -> Response {
    resp.headers_mut()
        .insert(header::CACHE_CONTROL, HeaderValue::from_static("no-store"));
    resp
}

async fn token_endpoint(State(state): State<Arc<AsState>>, body: Bytes) -> Response {
    let form = match parse_form(&body) {
        Ok(f) => f,
        Err(resp) => return *resp,
    };
    let server = &state.server;
    let uri = server.config().token_endpoint.clone();
    no_store(
        match server.handle_token_request("POST", &uri, &form, unix_now()) {
            Ok(token) => Json(token).into_response(),
            Err(err) => {
                tracing::info!(error = %err, "token request refused");
                let status = StatusCode::from_u16(err.status()).unwrap_or(StatusCode::BAD_REQUEST);
                let mut resp = (status, Json(err.to_json())).into_response();
                if let Some(reason) = err.dpop_reason {
                    if let Ok(v) = HeaderValue::from_str(&format!(
                        "DPoP error=\"invalid_dpop_proof\", reason=\"{reason}\""
                    )) {
                        resp.headers_mut().insert(header::WWW_AUTHENTICATE, v);
                    }
                }
                resp
            }
        },
    )
}

async fn introspection_endpoint(State(state): State<Arc<AsState>>, body: Bytes) -> Response {
    let form = match parse_form(&body) {
        Ok(f) => f,
        Err(resp) => return *resp,
    };
    no_store(match state.server.handle_introspection(&form, unix_now()) {
        Ok(body) => Json(body).into_response(),
        Err(err) => oauth_error(StatusCode::BAD_REQUEST, err.code.as_str(), &err.description),
    })
}

async fn revocation_list(State(state): State<Arc<AsState>>) -> Response {
    let compact = state.server.revocation_list_credential(unix_now());
    ([(header::CONTENT_TYPE, "application/jwt")], compact).into_response()
}

fn constant_time_eq(a: &[u8], b: &[u8]) -> bool {
    a.len() == b.len() && a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

async fn revoke_endpoint(
    State(state): State<Arc<AsState>>,
    headers: HeaderMap,
    body: Bytes,
) -> Response {
    let Some(expected) = &state.admin_token else {
        return StatusCode::NOT_FOUND.into_response();
    };
    let presented = headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .unwrap_or_default();
    if !constant_time_eq(presented.as_bytes(), expected.as_bytes()) {
        return oauth_error(
            StatusCode::UNAUTHORIZED,
            "invalid_token",
            "admin token required",
        );
    }
    let form = match parse_form(&body) {
        Ok(f) => f,
        Err(resp) => return *resp,
    };
    let Some(jti) = form.get("jti") else {
        return oauth_error(StatusCode::BAD_REQUEST, "invalid_request", "missing jti");
    };
    match state.server.revoke_token(jti) {
        Ok(()) => {
            tracing::info!(jti, "token revoked");
            Json(json!({"revoked": jti})).into_response()
        }
        Err(AuthorityError::NotFound(_)) => {
            oauth_error(StatusCode::NOT_FOUND, "not_found", "unknown jti")
        }
        Err(e) => {
            tracing::error!(error = %e, "revocation failed");
            oauth_error(
                StatusCode::INTERNAL_SERVER_ERROR,
                "server_error",
                "revocation failed",
            )
        }
    }
}
