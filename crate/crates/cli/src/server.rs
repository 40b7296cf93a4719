//! Read-only autosuggest HTTP service.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use anyhow::Context;
use axum::extract::{Query, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use pubsuggest_core::normalize::ClusterTable;
use pubsuggest_core::rules::{RuleDatabase, ITEM_SEPARATOR};
use pubsuggest_core::suggest::{IndexStats, QueryNormalizer, RuleIndex, SuggestResponse};
use serde::Deserialize;
use serde_json::json;
use tower_http::cors::{AllowOrigin, CorsLayer};

pub const DEFAULT_PORT: u16 = 8750;
pub const DEFAULT_LIMIT: usize = 10;
pub const MAX_LIMIT: usize = 100;
pub const STATS_TOP: usize = 10;

/// Loads a rule database, as line-delimited JSON when the file name ends in
/// `.jsonl`/`.json` and as CSV otherwise.
pub fn load_rules(path: &Path) -> anyhow::Result<RuleDatabase> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let jsonl = matches!(path.extension().and_then(|e| e.to_str()), Some("jsonl" | "json"));
    let db = if jsonl { RuleDatabase::read_jsonl(BufReader::new(file)) } else { RuleDatabase::read_csv(BufReader::new(file)) };
    db.with_context(|| format!("loading rules from {}", path.display()))
}

pub fn load_clusters(path: &Path) -> anyhow::Result<ClusterTable> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    ClusterTable::read_csv(BufReader::new(file)).with_context(|| format!("loading clusters from {}", path.display()))
}

/// Rule index plus the query normalizer in front of it.
pub struct Suggester {
    index: RuleIndex,
    normalizer: QueryNormalizer,
}

impl Suggester {
    pub fn new(db: RuleDatabase, clusters: Vec<ClusterTable>) -> Self {
        Suggester { index: RuleIndex::new(db), normalizer: QueryNormalizer::new(clusters) }
    }

    pub fn load(rules: &Path, clusters: &[PathBuf]) -> anyhow::Result<Self> {
        let db = load_rules(rules)?;
        let tables = clusters.iter().map(|p| load_clusters(p)).collect::<anyhow::Result<Vec<_>>>()?;
        let s = Suggester::new(db, tables);
        log::info!(
            "loaded {} rules with {} distinct consequents from {}",
            s.index.rule_count(),
            s.index.consequent_count(),
            rules.display()
        );
        Ok(s)
    }

    pub fn index(&self) -> &RuleIndex {
        &self.index
    }

    /// Normalizes the raw query values, dropping those cleaning rejects, and
    /// returns up to `limit` ranked suggestions.
    pub fn query<S: AsRef<str>>(&self, raw: &[S], limit: usize) -> SuggestResponse {
        let start = Instant::now();
        let items: Vec<String> = raw.iter().filter_map(|r| self.normalizer.normalize(r.as_ref())).collect();
        let suggestions = self.index.suggest(&items, limit).into_iter().map(Into::into).collect();
        SuggestResponse { items, suggestions, elapsed_ms: start.elapsed().as_secs_f64() * 1000.0 }
    }

    pub fn stats(&self) -> IndexStats {
        self.index.stats(STATS_TOP)
    }
}

#[derive(Debug, Deserialize)]
struct SuggestParams {
    items: Option<String>,
    limit: Option<String>,
}

fn bad_request(message: impl Into<String>) -> Response {
    (StatusCode::BAD_REQUEST, Json(json!({ "error": message.into() }))).into_response()
}

/// Splits the `items` parameter on the unit separator, dropping blank
/// entries.
pub fn split_items(raw: &str) -> Vec<&str> {
    raw.split(ITEM_SEPARATOR).map(str::trim).filter(|s| !s.is_empty()).collect()
}

pub fn parse_limit(raw: Option<&str>) -> Result<usize, String> {
    let Some(raw) = raw else { return Ok(DEFAULT_LIMIT) };
    match raw.trim().parse::<usize>() {
        Ok(n) if (1..=MAX_LIMIT).contains(&n) => Ok(n),
        _ => Err(format!("limit must be an integer between 1 and {MAX_LIMIT}")),
    }
}

async fn suggest(State(s): State<Arc<Suggester>>, Query(params): Query<SuggestParams>) -> Response {
    let Some(raw) = params.items.as_deref() else {
        return bad_request("missing items parameter");
    };
    let items = split_items(raw);
    if items.is_empty() {
        return bad_request("items parameter names no values");
    }
    let limit = match parse_limit(params.limit.as_deref()) {
        Ok(n) => n,
        Err(e) => return bad_request(e),
    };
    Json(s.query(&items, limit)).into_response()
}

async fn stats(State(s): State<Arc<Suggester>>) -> Json<IndexStats> {
    Json(s.stats())
}

async fn healthz() -> &'static str {
    "ok"
}

/// Routes `/suggest`, `/stats` and `/healthz`. With `cors_origin` set,
/// cross-origin GETs from that origin (or any origin for `*`) are allowed.
pub fn router(suggester: Arc<Suggester>, cors_origin: Option<&str>) -> anyhow::Result<Router> {
    let mut app =
        Router::new().route("/suggest", get(suggest)).route("/stats", get(stats)).route("/healthz", get(healthz)).with_state(suggester);
    if let Some(origin) = cors_origin {
        let allow = if origin == "*" {
            AllowOrigin::any()
        } else {
            AllowOrigin::exact(HeaderValue::from_str(origin).with_context(|| format!("bad CORS origin {origin:?}"))?)
        };
        let cors = CorsLayer::new().allow_origin(allow).allow_methods([Method::GET]).allow_headers([header::CONTENT_TYPE]);
        app = app.layer(cors);
    }
    Ok(app)
}

/// Serves until ctrl-c.
pub async fn serve(listener: tokio::net::TcpListener, app: Router) -> anyhow::Result<()> {
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
