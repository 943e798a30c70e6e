use std::time::Duration;

use capvc_core::resource::StatusTransport;
use serde_json::Value;
use tokio::runtime::Handle;

/// Reaches authorization servers over HTTP(S).
///
/// Calls block on `handle`; they must come from a blocking thread such as
/// one started by `spawn_blocking`, never from an async task.
#[derive(Debug, Clone)]
pub struct HttpStatusTransport {
    client: reqwest::Client,
    handle: Handle,
}

impl HttpStatusTransport {
    pub fn new(handle: Handle, timeout: Duration) -> Result<Self, reqwest::Error> {
        let client = reqwest::Client::builder().timeout(timeout).build()?;
        Ok(HttpStatusTransport { client, handle })
    }
}

impl StatusTransport for HttpStatusTransport {
    fn fetch_revocation_list(&self, url: &str) -> Result<String, String> {
        self.handle.block_on(async {
            let resp = self
                .client
                .get(url)
                .send()
                .await
                .map_err(|e| e.to_string())?;
            let resp = resp.error_for_status().map_err(|e| e.to_string())?;
            resp.text()
                .await
                .map(|t| t.trim().to_owned())
                .map_err(|e| e.to_string())
        })
    }

    fn introspect(&self, url: &str, token: &str) -> Result<Value, String> {
        self.handle.block_on(async {
            let resp = self
                .client
                .post(url)
                .form(&[("token", token)])
                .send()
                .await
                .map_err(|e| e.to_string())?;
            let resp = resp.error_for_status().map_err(|e| e.to_string())?;
            resp.json().await.map_err(|e| e.to_string())
        })
    }
}
