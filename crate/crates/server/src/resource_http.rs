//! HTTP front end of the resource server: every path is a potential file.

use std::sync::Arc;

use axum::body::{Body, Bytes};
use axum::extract::{DefaultBodyLimit, State};
use axum::http::{header, HeaderMap, HeaderValue, Method, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::Router;
use capvc_core::resource::{ResourceRequest, ResourceResponse, ResourceServer};
use capvc_core::unix_now;

pub fn router(server: Arc<ResourceServer>, max_body_bytes: usize) -> Router {
    Router::new()
        .fallback(handle)
        .with_state(server)
        .layer(DefaultBodyLimit::max(max_body_bytes))
}

fn header_str(headers: &HeaderMap, name: &str) -> Option<String> {
    headers
        .get(name)
        .and_then(|v| v.to_str().ok())
        .map(str::to_owned)
}

async fn handle(
    State(server): State<Arc<ResourceServer>>,
    method: Method,
    uri: Uri,
    headers: HeaderMap,
    body: Bytes,
) -> Response {
    let request = ResourceRequest {
        method: method.as_str().to_owned(),
        path: uri
            .path_and_query()
            .map(|p| p.as_str())
            .unwrap_or("/")
            .to_owned(),
        authorization: header_str(&headers, "authorization"),
        dpop: header_str(&headers, "dpop"),
        body: body.to_vec(),
    };
    // Status checks may block on the network.
    let result =
        tokio::task::spawn_blocking(move || server.handle_resource_request(&request, unix_now()))
            .await;
    match result {
        Ok(resp) => into_http(resp),
        Err(e) => {
            tracing::error!(error = %e, "request handler failed");
            StatusCode::INTERNAL_SERVER_ERROR.into_response()
        }
    }
}

fn into_http(resp: ResourceResponse) -> Response {
    let status = StatusCode::from_u16(resp.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    let mut out = Response::new(Body::from(resp.body));
    *out.status_mut() = status;
    out.headers_mut().insert(
        header::CONTENT_TYPE,
        HeaderValue::from_static(resp.content_type),
    );
    if let Some(v) = resp
        .www_authenticate
        .and_then(|v| HeaderValue::from_str(&v).ok())
    {
        out.headers_mut().insert(header::WWW_AUTHENTICATE, v);
    }
    out
}
