//! In-process stand-in for the pool website, for offline tests and demos.

use std::collections::BTreeMap;
use std::net::{IpAddr, SocketAddr};
use std::sync::{Arc, Mutex};

use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{Html, IntoResponse, Json, Response};
use axum::routing::get;
use axum::Router;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::task::JoinHandle;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MockServer {
    pub id: u64,
    pub address: IpAddr,
    #[serde(default)]
    pub score: f64,
    #[serde(default)]
    pub netspeed_kbps: u64,
    #[serde(default)]
    pub zones: Vec<String>,
    #[serde(default)]
    pub account: Option<String>,
    #[serde(default)]
    pub deleted: bool,
    /// Cumulative DNS answers per zone.
    #[serde(default)]
    pub answers: BTreeMap<String, u64>,
}

impl MockServer {
    pub fn new(id: u64, address: IpAddr) -> Self {
        Self {
            id,
            address,
            score: 20.0,
            netspeed_kbps: 1000,
            zones: Vec::new(),
            account: None,
            deleted: false,
            answers: BTreeMap::new(),
        }
    }
}

/// Zone counts served verbatim instead of being derived from the roster.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockZone {
    pub zone: String,
    pub servers_v4: u64,
    pub servers_v6: u64,
    pub aggregate_netspeed: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MockPoolData {
    #[serde(default)]
    pub servers: Vec<MockServer>,
    #[serde(default)]
    pub zones: Vec<MockZone>,
}

impl MockPoolData {
    fn by_id(&self, id: u64) -> Option<&MockServer> {
        self.servers.iter().find(|s| s.id == id)
    }

    fn by_ip(&self, ip: &IpAddr) -> Option<&MockServer> {
        self.servers.iter().find(|s| s.address == *ip)
    }

    fn zone_counts(&self, zone: &str) -> Option<MockZone> {
        if let Some(z) = self.zones.iter().find(|z| z.zone == zone) {
            return Some(z.clone());
        }
        let members: Vec<&MockServer> =
            self.servers.iter().filter(|s| !s.deleted && s.zones.iter().any(|z| z == zone)).collect();
        if members.is_empty() {
            return None;
        }
        let active = members.iter().filter(|s| s.score >= 10.0);
        Some(MockZone {
            zone: zone.to_string(),
            servers_v4: members.iter().filter(|s| s.address.is_ipv4()).count() as u64,
            servers_v6: members.iter().filter(|s| s.address.is_ipv6()).count() as u64,
            aggregate_netspeed: active.map(|s| s.netspeed_kbps).sum(),
        })
    }
}

#[derive(Debug, Default)]
struct Inner {
    data: MockPoolData,
    log: Vec<String>,
    fail_after: Option<usize>,
}

type Shared = Arc<Mutex<Inner>>;

/// Logs the request and applies any injected fault.
fn gate(state: &Shared, path: String) -> Result<(), StatusCode> {
    let mut inner = state.lock().unwrap();
    inner.log.push(path);
    match inner.fail_after {
        Some(n) if inner.log.len() > n => Err(StatusCode::SERVICE_UNAVAILABLE),
        _ => Ok(()),
    }
}

async fn scores(State(state): State<Shared>, Path(key): Path<String>) -> Response {
    if let Err(r) = gate(&state, format!("/scores/{key}")) {
        return r.into_response();
    }
    let inner = state.lock().unwrap();
    if let Ok(id) = key.parse::<u64>() {
        return match inner.data.by_id(id) {
            Some(s) => (StatusCode::MOVED_PERMANENTLY, [(header::LOCATION, format!("/scores/{}", s.address))], "")
                .into_response(),
            None => StatusCode::NOT_FOUND.into_response(),
        };
    }
    match key.parse::<IpAddr>().ok().and_then(|ip| inner.data.by_ip(&ip)) {
        Some(s) => Html(format!(
            "<html><body><h1>{}</h1><p>Current score: {:.1}</p><p>Zones: {}</p></body></html>",
            s.address,
            s.score,
            s.zones.join(" ")
        ))
        .into_response(),
        None => StatusCode::NOT_FOUND.into_response(),
    }
}

async fn scores_json(State(state): State<Shared>, Path(key): Path<String>) -> Response {
    if let Err(r) = gate(&state, format!("/scores/{key}/json")) {
        return r.into_response();
    }
    let inner = state.lock().unwrap();
    match key.parse::<IpAddr>().ok().and_then(|ip| inner.data.by_ip(&ip)) {
        Some(s) => Json(json!({
            "server": {
                "ip": s.address,
                "score": s.score,
                "netspeed": s.netspeed_kbps,
                "zones": s.zones,
                "account": s.account,
                "deleted": s.deleted,
            },
            "history": [],
        }))
        .into_response(),
        None => StatusCode::NOT_FOUND.into_response(),
    }
}

async fn answers(State(state): State<Shared>, Path(key): Path<String>) -> Response {
    if let Err(r) = gate(&state, format!("/api/data/server/dns/answers/{key}")) {
        return r.into_response();
    }
    let inner = state.lock().unwrap();
    match key.parse::<IpAddr>().ok().and_then(|ip| inner.data.by_ip(&ip)) {
        Some(s) => Json(&s.answers).into_response(),
        None => StatusCode::NOT_FOUND.into_response(),
    }
}

async fn zone_counts(State(state): State<Shared>, Path(zone): Path<String>) -> Response {
    if let Err(r) = gate(&state, format!("/api/data/zone/counts/{zone}")) {
        return r.into_response();
    }
    let inner = state.lock().unwrap();
    match inner.data.zone_counts(&zone) {
        Some(z) => Json(z).into_response(),
        None => StatusCode::NOT_FOUND.into_response(),
    }
}

/// Mock pool website bound to a loopback port. Shuts down on drop.
pub struct MockPool {
    addr: SocketAddr,
    inner: Shared,
    task: JoinHandle<()>,
}

impl MockPool {
    pub async fn start(data: MockPoolData) -> std::io::Result<Self> {
        Self::bind("127.0.0.1:0".parse().unwrap(), data).await
    }

    pub async fn bind(addr: SocketAddr, data: MockPoolData) -> std::io::Result<Self> {
        let inner: Shared = Arc::new(Mutex::new(Inner { data, ..Inner::default() }));
        let app = Router::new()
            .route("/scores/{key}", get(scores))
            .route("/scores/{key}/json", get(scores_json))
            .route("/api/data/server/dns/answers/{key}", get(answers))
            .route("/api/data/zone/counts/{zone}", get(zone_counts))
            .with_state(inner.clone());
        let listener = tokio::net::TcpListener::bind(addr).await?;
        let addr = listener.local_addr()?;
        let task = tokio::spawn(async move {
            if let Err(e) = axum::serve(listener, app).await {
                log::error!("mock pool server stopped: {e}");
            }
        });
        Ok(Self { addr, inner, task })
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Paths requested so far, in arrival order.
    pub fn request_log(&self) -> Vec<String> {
        self.inner.lock().unwrap().log.clone()
    }

    /// Answers 503 to every request after the first `n` (counted over the
    /// whole log).
    pub fn fail_after(&self, n: usize) {
        self.inner.lock().unwrap().fail_after = Some(n);
    }

    pub fn heal(&self) {
        self.inner.lock().unwrap().fail_after = None;
    }

    pub fn update(&self, f: impl FnOnce(&mut MockPoolData)) {
        f(&mut self.inner.lock().unwrap().data);
    }
}

impl Drop for MockPool {
    fn drop(&mut self) {
        self.task.abort();
    }
}
