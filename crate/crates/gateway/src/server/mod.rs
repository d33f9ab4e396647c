//! HTTP/JSON service for the survey front end and the what-if dashboard.
//!
//! All mutation of shared state (sessions, the answer log) happens under one
//! lock, so the store sees a single writer.

mod image;
pub mod store;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use costsight_core::anova::{
    bootstrap_p, BootstrapConfig, FTestResult, GroupedAnswers, ShuffleMode, Split,
};
use costsight_core::consequence::{
    birdseye_export, ConsequenceConfig, PlotLayout, PlotPoint, RulePrecision, ZoneConfig,
    ZoneSummary, DEFAULT_THRESHOLD,
};
use costsight_core::costmatrix::{
    aggregate_answers, published, robot_matrix, AnswerFilter, AnswerRecord, Gender, Perspective,
    RawAnswer, SURVEY_CLASSES,
};
use costsight_core::decision::LabelMap;
use costsight_core::ingest::manifest::survey_class_names;
use costsight_core::ingest::{generate_fixture, Dataset, FixtureSpec, MatrixFile};
use costsight_core::metrics::MetricsReport;
use costsight_core::pipeline::{dataset_consequences, dataset_metrics, decide_dataset};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

pub use store::{AnswerStore, JsonlStore, MemoryStore};

/// Upper bound on `/api/ftest` shuffles per request.
pub const MAX_SHUFFLES: u64 = 100_000;
pub const DEFAULT_DATASET: &str = "default";

/// Display labels of the seven severity levels (cost `10^level`).
pub const SEVERITY_LABELS: [&str; 7] = ["1", "10", "100", "1k", "10k", "100k", "1M"];

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub bind: String,
    pub port: u16,
    pub store: PathBuf,
    pub fixtures: Option<PathBuf>,
    pub seed: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum ServerError {
    #[error("answer store {path}: {source}")]
    Store {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Data(#[from] costsight_core::Error),
    #[error("cannot listen on {addr}: {source}")]
    Bind {
        addr: String,
        source: std::io::Error,
    },
}

impl ServerError {
    pub fn exit_code(&self) -> u8 {
        match self {
            ServerError::Data(costsight_core::Error::Io { .. }) => crate::cli::EXIT_IO,
            ServerError::Data(_) => crate::cli::EXIT_DATA,
            _ => crate::cli::EXIT_IO,
        }
    }
}

/// A what-if dataset with its robot-rule baseline precomputed.
pub struct WhatIfSet {
    pub dataset: Dataset,
    baseline_preds: Vec<LabelMap>,
    baseline_metrics: MetricsReport,
}

impl WhatIfSet {
    pub fn new(dataset: Dataset) -> costsight_core::Result<Self> {
        let baseline_preds = decide_dataset(&dataset, &robot_matrix(dataset.n_classes())?)?;
        let baseline_metrics = dataset_metrics(&dataset, &baseline_preds)?;
        Ok(Self {
            dataset,
            baseline_preds,
            baseline_metrics,
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Scenario {
    pub scenario_id: String,
    pub image_id: String,
    pub image_url: String,
    /// 1-based class index of the highlighted object.
    pub target_class: u8,
    pub target_name: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Demographics {
    #[serde(default)]
    pub gender: Option<Gender>,
    #[serde(default)]
    pub age_band: Option<String>,
    #[serde(default)]
    pub graduation: Option<String>,
    #[serde(default)]
    pub field: Option<String>,
    #[serde(default)]
    pub license: Option<String>,
    #[serde(default)]
    pub transport: Option<String>,
}

struct Session {
    perspective: Perspective,
    demographics: Demographics,
    served: HashSet<String>,
}

struct Inner {
    answers: Vec<AnswerRecord>,
    answered: HashSet<(String, String)>,
    sessions: HashMap<String, Session>,
    rng: ChaCha8Rng,
}

pub struct AppState {
    store: Box<dyn AnswerStore>,
    inner: Mutex<Inner>,
    scenarios: Vec<Scenario>,
    datasets: BTreeMap<String, Arc<WhatIfSet>>,
}

impl AppState {
    /// Replays the store and derives one scenario per image of the default
    /// dataset.
    pub fn new(
        store: Box<dyn AnswerStore>,
        datasets: BTreeMap<String, Arc<WhatIfSet>>,
        seed: u64,
    ) -> std::io::Result<Self> {
        let answers = store.load()?;
        let answered = answers
            .iter()
            .map(|a| (a.participant_id.clone(), a.image_id.clone()))
            .collect();
        let scenarios = datasets
            .get(DEFAULT_DATASET)
            .map(|s| scenarios_for(&s.dataset))
            .unwrap_or_default();
        Ok(Self {
            store,
            inner: Mutex::new(Inner {
                answers,
                answered,
                sessions: HashMap::new(),
                rng: ChaCha8Rng::seed_from_u64(seed),
            }),
            scenarios,
            datasets,
        })
    }

    pub fn scenarios(&self) -> &[Scenario] {
        &self.scenarios
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }
}

/// Highlights a class present in each image, rotating the starting class
/// with the image index so every class gets asked about.
fn scenarios_for(ds: &Dataset) -> Vec<Scenario> {
    let n = SURVEY_CLASSES.len();
    ds.images
        .iter()
        .enumerate()
        .filter_map(|(i, img)| {
            let present: HashSet<u8> = img.gt.labels().iter().copied().collect();
            let class = (0..n)
                .map(|k| (i + k) % n)
                .find(|&k| present.contains(&(k as u8)))?;
            Some(Scenario {
                scenario_id: format!("{}:{}", img.image_id, class + 1),
                image_id: img.image_id.clone(),
                image_url: format!("/api/images/{}?highlight={}", img.image_id, class + 1),
                target_class: (class + 1) as u8,
                target_name: SURVEY_CLASSES[class].to_string(),
            })
        })
        .collect()
}

pub struct ApiError(StatusCode, String);

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self(status, message.into())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

fn bad_request(e: impl ToString) -> ApiError {
    ApiError::new(StatusCode::BAD_REQUEST, e.to_string())
}

fn data_error(e: costsight_core::Error) -> ApiError {
    use costsight_core::Error::*;
    let status = match e {
        EmptyGroup => StatusCode::NOT_FOUND,
        InsufficientData { .. } | ZeroWithinVariance | InvalidGrouping(_) => {
            StatusCode::UNPROCESSABLE_ENTITY
        }
        Io { .. } => StatusCode::INTERNAL_SERVER_ERROR,
        _ => StatusCode::BAD_REQUEST,
    };
    ApiError::new(status, e.to_string())
}

type ApiResult<T> = Result<T, ApiError>;

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/health", get(health))
        .route("/api/session", post(create_session))
        .route("/api/scenarios/next", get(next_scenario))
        .route("/api/images/{image_id}", get(scenario_image))
        .route("/api/answers", post(submit_answer))
        .route("/api/matrices", get(matrices))
        .route("/api/presets", get(presets))
        .route("/api/ftest", get(ftest))
        .route("/api/datasets", get(datasets))
        .route("/api/whatif", post(whatif))
        .with_state(state)
}

async fn health(State(s): State<Arc<AppState>>) -> Json<serde_json::Value> {
    let answers = s.lock().answers.len();
    Json(json!({ "status": "ok", "answers": answers }))
}

#[derive(Serialize)]
struct SessionResponse {
    session_id: String,
    perspective: Perspective,
    classes: Vec<String>,
    severity_labels: [&'static str; 7],
}

async fn create_session(
    State(s): State<Arc<AppState>>,
    body: String,
) -> ApiResult<Json<SessionResponse>> {
    let demographics: Demographics = if body.trim().is_empty() {
        Demographics::default()
    } else {
        serde_json::from_str(&body).map_err(bad_request)?
    };
    let session_id = uuid::Uuid::new_v4().to_string();
    let mut inner = s.lock();
    let perspective = if inner.rng.random_bool(0.5) {
        Perspective::Passenger
    } else {
        Perspective::External
    };
    inner.sessions.insert(
        session_id.clone(),
        Session {
            perspective,
            demographics,
            served: HashSet::new(),
        },
    );
    Ok(Json(SessionResponse {
        session_id,
        perspective,
        classes: survey_class_names(),
        severity_labels: SEVERITY_LABELS,
    }))
}

#[derive(Deserialize)]
struct SessionQuery {
    session_id: String,
}

async fn next_scenario(
    State(s): State<Arc<AppState>>,
    Query(q): Query<SessionQuery>,
) -> ApiResult<Response> {
    let mut inner = s.lock();
    let Inner { sessions, rng, .. } = &mut *inner;
    let session = sessions
        .get_mut(&q.session_id)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "unknown session"))?;
    let open: Vec<&Scenario> = s
        .scenarios
        .iter()
        .filter(|sc| !session.served.contains(&sc.image_id))
        .collect();
    let Some(&chosen) = open.choose(rng) else {
        return Ok(StatusCode::NO_CONTENT.into_response());
    };
    session.served.insert(chosen.image_id.clone());
    Ok(Json(chosen.clone()).into_response())
}

#[derive(Deserialize)]
struct ImageQuery {
    highlight: Option<u8>,
}

async fn scenario_image(
    State(s): State<Arc<AppState>>,
    Path(image_id): Path<String>,
    Query(q): Query<ImageQuery>,
) -> ApiResult<Response> {
    let set = s
        .datasets
        .get(DEFAULT_DATASET)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "no scenario dataset"))?;
    let img = set.dataset.image(&image_id).ok_or_else(|| {
        ApiError::new(StatusCode::NOT_FOUND, format!("unknown image {image_id:?}"))
    })?;
    let bmp = image::render_bmp(&img.gt, q.highlight.and_then(|h| h.checked_sub(1)));
    Ok(([(header::CONTENT_TYPE, "image/bmp")], bmp).into_response())
}

/// Answer payload; participant and perspective come from the session.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AnswerSubmission {
    session_id: String,
    image_id: String,
    target_class: u8,
    severities: BTreeMap<String, u8>,
    #[serde(default)]
    timestamp: Option<String>,
}

#[derive(Serialize)]
struct AnswerResponse {
    id: u64,
    answer: AnswerRecord,
}

async fn submit_answer(
    State(s): State<Arc<AppState>>,
    body: String,
) -> ApiResult<(StatusCode, Json<AnswerResponse>)> {
    let sub: AnswerSubmission = serde_json::from_str(&body).map_err(bad_request)?;
    let mut inner = s.lock();
    let session = inner
        .sessions
        .get(&sub.session_id)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "unknown session"))?;
    let d = session.demographics.clone();
    let raw = RawAnswer {
        participant_id: sub.session_id.clone(),
        perspective: session.perspective,
        gender: d.gender,
        age_band: d.age_band,
        graduation: d.graduation,
        field: d.field,
        license: d.license,
        transport: d.transport,
        image_id: sub.image_id.clone(),
        target_class: sub.target_class,
        severities: sub.severities,
        timestamp: sub.timestamp.unwrap_or_default(),
    };
    let answer = AnswerRecord::from_raw(raw, "answer").map_err(bad_request)?;
    let key = (sub.session_id, sub.image_id);
    if inner.answered.contains(&key) {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            format!("session already answered image {:?}", key.1),
        ));
    }
    let id = s.store.append(&answer).map_err(|e| {
        log::error!("answer store append failed: {e}");
        ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "answer store unavailable")
    })?;
    inner.answered.insert(key);
    inner.answers.push(answer.clone());
    Ok((StatusCode::CREATED, Json(AnswerResponse { id, answer })))
}

#[derive(Deserialize)]
struct MatrixQuery {
    perspective: Option<Perspective>,
    gender: Option<Gender>,
}

async fn matrices(
    State(s): State<Arc<AppState>>,
    Query(q): Query<MatrixQuery>,
) -> ApiResult<Json<MatrixFile>> {
    let filter = AnswerFilter {
        perspective: q.perspective,
        gender: q.gender,
    };
    let inner = s.lock();
    let m = aggregate_answers(&inner.answers, |a| filter.matches(a)).map_err(data_error)?;
    Ok(Json(MatrixFile::from_log(&m, Some(survey_class_names()))))
}

async fn presets() -> Json<BTreeMap<String, MatrixFile>> {
    let mut out = BTreeMap::new();
    for name in published::PRESET_NAMES {
        let m = published::by_name(name).expect("listed preset");
        out.insert(
            name.to_string(),
            MatrixFile::from_log(&m, Some(survey_class_names())),
        );
    }
    let robot = robot_matrix(SURVEY_CLASSES.len()).expect("valid size");
    out.insert(
        "robot".into(),
        MatrixFile::from_linear(&robot, Some(survey_class_names())),
    );
    Json(out)
}

#[derive(Deserialize)]
struct FtestQuery {
    split: Split,
    #[serde(default = "default_shuffles")]
    shuffles: u64,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    mode: ShuffleMode,
}

fn default_shuffles() -> u64 {
    10_000
}

async fn ftest(
    State(s): State<Arc<AppState>>,
    Query(q): Query<FtestQuery>,
) -> ApiResult<Json<FTestResult>> {
    if q.shuffles > MAX_SHUFFLES {
        return Err(bad_request(format!("shuffles above {MAX_SHUFFLES}")));
    }
    let answers = s.lock().answers.clone();
    let result = tokio::task::spawn_blocking(move || {
        let g = GroupedAnswers::by_split(&answers, q.split)?;
        bootstrap_p(&g, BootstrapConfig::new(q.shuffles, q.seed).mode(q.mode))
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
    .map_err(data_error)?;
    Ok(Json(result))
}

async fn datasets(State(s): State<Arc<AppState>>) -> Json<Vec<serde_json::Value>> {
    Json(
        s.datasets
            .iter()
            .map(|(id, set)| {
                json!({
                    "id": id,
                    "images": set.dataset.images.len(),
                    "class_names": set.dataset.class_names(),
                })
            })
            .collect(),
    )
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WhatIfRequest {
    matrix: MatrixFile,
    #[serde(default)]
    dataset: Option<String>,
    #[serde(default)]
    threshold: Option<f64>,
    #[serde(default)]
    zones: Option<Vec<f64>>,
}

#[derive(Serialize)]
struct ConsequenceSummary {
    threshold: f64,
    zones: Vec<ZoneSummary>,
    precision: RulePrecision,
    baseline_precision: RulePrecision,
}

#[derive(Serialize)]
struct WhatIfResponse {
    dataset: String,
    metrics: MetricsReport,
    baseline: MetricsReport,
    consequences: ConsequenceSummary,
    layout: PlotLayout,
    points: Vec<PlotPoint>,
}

/// Evaluates a candidate matrix (rule A) against the robot rule (rule B).
async fn whatif(State(s): State<Arc<AppState>>, body: String) -> ApiResult<Json<WhatIfResponse>> {
    let req: WhatIfRequest = serde_json::from_str(&body).map_err(bad_request)?;
    let id = req
        .dataset
        .clone()
        .unwrap_or_else(|| DEFAULT_DATASET.to_string());
    let set =
        s.datasets.get(&id).cloned().ok_or_else(|| {
            ApiError::new(StatusCode::NOT_FOUND, format!("unknown dataset {id:?}"))
        })?;
    let costs = req.matrix.to_cost_matrix("matrix").map_err(bad_request)?;
    if costs.n_classes() != set.dataset.n_classes() {
        return Err(bad_request(format!(
            "matrix has {} classes, dataset {}",
            costs.n_classes(),
            set.dataset.n_classes()
        )));
    }
    let zones = match &req.zones {
        Some(z) => ZoneConfig::from_distances(z).map_err(bad_request)?,
        None => ZoneConfig::default(),
    };
    let config = ConsequenceConfig {
        zones,
        threshold: req.threshold.unwrap_or(DEFAULT_THRESHOLD),
        ..ConsequenceConfig::default()
    };
    let response =
        tokio::task::spawn_blocking(move || -> costsight_core::Result<WhatIfResponse> {
            let preds = decide_dataset(&set.dataset, &costs)?;
            let metrics = dataset_metrics(&set.dataset, &preds)?;
            let report = dataset_consequences(&set.dataset, &preds, &set.baseline_preds, &config)?;
            let plot = birdseye_export(&report, ["custom", "robot"]);
            Ok(WhatIfResponse {
                dataset: id,
                metrics,
                baseline: set.baseline_metrics.clone(),
                consequences: ConsequenceSummary {
                    threshold: report.threshold,
                    zones: report.zones,
                    precision: report.precision_a,
                    baseline_precision: report.precision_b,
                },
                layout: plot.layout,
                points: plot.points,
            })
        })
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
        .map_err(data_error)?;
    Ok(Json(response))
}

/// Loads the what-if dataset (or generates the default fixture).
pub fn load_datasets(
    fixtures: Option<&std::path::Path>,
) -> costsight_core::Result<BTreeMap<String, Arc<WhatIfSet>>> {
    let dataset = match fixtures {
        Some(p) => Dataset::load(p)?,
        None => generate_fixture(&FixtureSpec::default())?,
    };
    let mut out = BTreeMap::new();
    out.insert(
        DEFAULT_DATASET.to_string(),
        Arc::new(WhatIfSet::new(dataset)?),
    );
    Ok(out)
}

pub async fn serve(config: ServerConfig) -> Result<(), ServerError> {
    let store = JsonlStore::open(&config.store).map_err(|e| ServerError::Store {
        path: config.store.display().to_string(),
        source: e,
    })?;
    let datasets = load_datasets(config.fixtures.as_deref())?;
    let state =
        AppState::new(Box::new(store), datasets, config.seed).map_err(|e| ServerError::Store {
            path: config.store.display().to_string(),
            source: e,
        })?;
    log::info!(
        "{} stored answers, {} scenarios",
        state.lock().answers.len(),
        state.scenarios.len()
    );
    let addr = format!("{}:{}", config.bind, config.port);
    let listener = tokio::net::TcpListener::bind(&addr)
        .await
        .map_err(|e| ServerError::Bind {
            addr: addr.clone(),
            source: e,
        })?;
    log::info!("listening on http://{addr}");
    axum::serve(listener, router(Arc::new(state)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| ServerError::Bind { addr, source: e })
}
