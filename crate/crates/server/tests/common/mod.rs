//! Two authorization servers and one resource server on loopback ports,
//! arranged as in the two-organization cloud storage scenario.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use axum::Router;
use capvc_client::AsEndpoint;
use capvc_core::authority::{AccessTable, AuthorityConfig, AuthorizationServer};
use capvc_core::jose::KeyPair;
use capvc_core::resource::{ResourceConfig, ResourceServer, ResourceTable, TenantEntry};
use capvc_core::vc::{Capability, CredentialDefinition};
use capvc_server::transport::HttpStatusTransport;
use capvc_server::{authority_http, resource_http};
use tempfile::TempDir;
use tokio::net::TcpListener;

pub const ADMIN_TOKEN: &str = "admin-secret";
pub const RS_ID: &str = "cloud";

pub fn definition() -> CredentialDefinition {
    CredentialDefinition::new(
        "capabilities",
        "https://mm.aueb.gr/contexts/capabilities/v1",
    )
}

pub fn caps(spec: &[(&str, &str)]) -> Vec<Capability> {
    spec.iter()
        .map(|(p, r)| Capability::parse(p, r).unwrap())
        .collect()
}

/// C1: folder1 rw, folder2 r. C2: folder3 rw, folder4 rw.
pub fn org1_table(c1: &KeyPair, c2: &KeyPair) -> AccessTable {
    let mut t = AccessTable::new();
    t.insert(
        c1.public().clone(),
        caps(&[("folder1", "rw"), ("folder2", "r")]),
    );
    t.insert(
        c2.public().clone(),
        caps(&[("folder3", "rw"), ("folder4", "rw")]),
    );
    t
}

/// org2 knows only C3.
pub fn org2_table(c3: &KeyPair) -> AccessTable {
    let mut t = AccessTable::new();
    t.insert(c3.public().clone(), caps(&[("folder1", "rwd")]));
    t
}

pub struct Options {
    pub token_lifetime: u64,
    pub revocation_max_age: u64,
    pub org2_introspection: bool,
}

impl Default for Options {
    fn default() -> Self {
        Options {
            token_lifetime: 864_000,
            revocation_max_age: 300,
            org2_introspection: false,
        }
    }
}

pub struct Deployment {
    pub org1: Arc<AuthorizationServer>,
    pub org2: Arc<AuthorizationServer>,
    pub rs: Arc<ResourceServer>,
    pub rs_url: String,
    pub c1: KeyPair,
    pub c2: KeyPair,
    pub c3: KeyPair,
    pub storage: TempDir,
}

async fn serve(listener: TcpListener, app: Router) {
    tokio::spawn(async move { axum::serve(listener, app).await.expect("serve") });
}

async fn bind() -> (TcpListener, SocketAddr) {
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    (listener, addr)
}

async fn start_as(
    name: &str,
    seed: u8,
    table: AccessTable,
    lifetime: u64,
) -> Arc<AuthorizationServer> {
    let (listener, addr) = bind().await;
    let mut config = AuthorityConfig::new(format!("http://{addr}/{name}/as"), definition());
    config.token_lifetime = lifetime;
    config.list_length = 4096;
    let tables = BTreeMap::from([(RS_ID.to_owned(), table)]);
    let server = Arc::new(
        AuthorizationServer::new(config, KeyPair::from_seed(&[seed; 32]), tables).unwrap(),
    );
    serve(
        listener,
        authority_http::router(server.clone(), Some(ADMIN_TOKEN.into())),
    )
    .await;
    server
}

impl Deployment {
    /// Must run inside a multi-threaded runtime: the RS blocks on status
    /// fetches from `spawn_blocking` threads.
    pub async fn start(opts: Options) -> Deployment {
        let c1 = KeyPair::from_seed(&[101; 32]);
        let c2 = KeyPair::from_seed(&[102; 32]);
        let c3 = KeyPair::from_seed(&[103; 32]);
        let org1 = start_as("org1", 1, org1_table(&c1, &c2), opts.token_lifetime).await;
        let org2 = start_as("org2", 2, org2_table(&c3), opts.token_lifetime).await;

        let mut table = ResourceTable::new();
        table
            .insert(
                "/home/org1",
                TenantEntry::new(org1.config().issuer.clone(), org1.public_key().clone()),
            )
            .unwrap();
        let mut e2 = TenantEntry::new(org2.config().issuer.clone(), org2.public_key().clone());
        if opts.org2_introspection {
            e2.introspection_url = Some(org2.config().introspection_endpoint.clone());
        }
        table.insert("/home/org2", e2).unwrap();

        let (listener, addr) = bind().await;
        let rs_url = format!("http://{addr}");
        let storage = TempDir::new().unwrap();
        let mut config = ResourceConfig::new(&rs_url, storage.path(), definition());
        config.revocation_max_age = opts.revocation_max_age;
        let transport =
            HttpStatusTransport::new(tokio::runtime::Handle::current(), Duration::from_secs(5))
                .unwrap();
        let rs = Arc::new(ResourceServer::new(config, table, Arc::new(transport)));
        serve(listener, resource_http::router(rs.clone(), 1 << 20)).await;
        Deployment {
            org1,
            org2,
            rs,
            rs_url,
            c1,
            c2,
            c3,
            storage,
        }
    }

    pub fn endpoint(&self, org: &AuthorizationServer) -> AsEndpoint {
        AsEndpoint {
            token_endpoint: org.config().token_endpoint.clone(),
            resource_server: self.rs_url.clone(),
            resource: Some(RS_ID.into()),
        }
    }

    pub fn url(&self, path: &str) -> String {
        format!("{}{path}", self.rs_url)
    }
}
