//! Local HTTP API over fitted models: dataset upload, asynchronous fits,
//! grid summaries of the differential process, and wombling along curves.
//!
//! All routes live under `/v1`. Request bodies are JSON except dataset
//! uploads, which are the dataset CSV itself. Grid summaries come back as the
//! grid-summary CSV and wombling results as the same JSON document the CLI
//! writes.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::sync::Semaphore;

use curvwomb::config::{GridConfig, RunConfig};
use curvwomb::curves::{CurveDoc, Partition};
use curvwomb::data::SpatialDataset;
use curvwomb::differential::{GridField, GridSummary};
use curvwomb::io;
use curvwomb::mcmc::PosteriorChains;
use curvwomb::pipeline::{self, LevelSurface};
use curvwomb::wombling::{sample_wombling, WombMode, WomblingResult};

/// Partitions up to this many segments are wombled within the request.
pub const SYNC_SEGMENT_LIMIT: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobKind {
    Fit,
    Differentials,
    Womble,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Queued,
    Running,
    Done,
    Failed,
}

impl JobStatus {
    fn is_final(self) -> bool {
        matches!(self, JobStatus::Done | JobStatus::Failed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub id: String,
    pub kind: JobKind,
    pub status: JobStatus,
    /// Dataset id for fits, fit job id otherwise.
    pub source: String,
    /// Where the finished result can be fetched.
    pub result: Option<String>,
    pub error: Option<String>,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    kind: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, kind: &'static str, message: impl Into<String>) -> Self {
        ApiError { status, kind, message: message.into() }
    }

    fn not_found(what: &str, id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", format!("unknown {what} `{id}`"))
    }

    fn conflict(message: impl Into<String>) -> Self {
        Self::new(StatusCode::CONFLICT, "conflict", message)
    }

    fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl From<curvwomb::Error> for ApiError {
    fn from(e: curvwomb::Error) -> Self {
        let status = match e {
            curvwomb::Error::Io(_) | curvwomb::Error::SingularCovariance { .. } => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::BAD_REQUEST,
        };
        ApiError::new(status, e.kind(), e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = serde_json::json!({ "error": self.kind, "message": self.message });
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;

struct FitArtifact {
    chains: Arc<PosteriorChains>,
    config: RunConfig,
}

#[derive(Default)]
struct Store {
    datasets: HashMap<String, Arc<SpatialDataset>>,
    jobs: HashMap<String, JobRecord>,
    fits: HashMap<String, Arc<FitArtifact>>,
    grids: HashMap<String, Arc<GridSummary>>,
    wombles: HashMap<String, Arc<WomblingResult>>,
}

struct Inner {
    config: RunConfig,
    dir: PathBuf,
    store: RwLock<Store>,
    fit_slots: Arc<Semaphore>,
}

/// Shared service state. Cloning is cheap.
#[derive(Clone)]
pub struct AppState(Arc<Inner>);

fn new_id() -> String {
    uuid::Uuid::new_v4().simple().to_string()
}

impl AppState {
    /// Opens (or creates) the data directory and recovers finished work from
    /// it. Jobs that were still queued or running are marked failed.
    pub fn open(config: RunConfig, dir: &Path) -> curvwomb::Result<Self> {
        for sub in ["datasets", "jobs", "chains", "results"] {
            std::fs::create_dir_all(dir.join(sub))?;
        }
        let mut store = Store::default();
        for entry in std::fs::read_dir(dir.join("datasets"))? {
            let path = entry?.path();
            if let (Some(id), Some("csv")) = (path.file_stem().and_then(|s| s.to_str()), path.extension().and_then(|s| s.to_str())) {
                if let Ok(ds) = io::load_dataset(&path) {
                    store.datasets.insert(id.to_string(), Arc::new(ds));
                }
            }
        }
        for entry in std::fs::read_dir(dir.join("jobs"))? {
            let path = entry?.path();
            if path.extension().and_then(|s| s.to_str()) != Some("json") {
                continue;
            }
            let Ok(text) = std::fs::read_to_string(&path) else { continue };
            let Ok(mut job) = serde_json::from_str::<JobRecord>(&text) else { continue };
            if !job.status.is_final() {
                job.status = JobStatus::Failed;
                job.error = Some("interrupted by a service restart".into());
                std::fs::write(&path, serde_json::to_vec_pretty(&job).expect("job records serialise"))?;
            }
            if job.status == JobStatus::Done && !recover_artifact(dir, &job, &mut store) {
                job.status = JobStatus::Failed;
                job.error = Some("result files missing after restart".into());
            }
            store.jobs.insert(job.id.clone(), job);
        }
        let slots = config.service.max_concurrent_fits.max(1);
        Ok(AppState(Arc::new(Inner {
            config,
            dir: dir.to_path_buf(),
            store: RwLock::new(store),
            fit_slots: Arc::new(Semaphore::new(slots)),
        })))
    }

    fn read(&self) -> std::sync::RwLockReadGuard<'_, Store> {
        self.0.store.read().expect("store lock poisoned")
    }

    fn write(&self) -> std::sync::RwLockWriteGuard<'_, Store> {
        self.0.store.write().expect("store lock poisoned")
    }

    fn job_path(&self, id: &str) -> PathBuf {
        self.0.dir.join("jobs").join(format!("{id}.json"))
    }

    fn persist_job(&self, job: &JobRecord) {
        // Best effort: the in-memory record stays authoritative while running.
        let _ = std::fs::write(self.job_path(&job.id), serde_json::to_vec_pretty(job).expect("job records serialise"));
    }

    fn insert_job(&self, kind: JobKind, source: &str) -> JobRecord {
        let job = JobRecord {
            id: new_id(),
            kind,
            status: JobStatus::Queued,
            source: source.to_string(),
            result: None,
            error: None,
        };
        self.write().jobs.insert(job.id.clone(), job.clone());
        self.persist_job(&job);
        job
    }

    /// Moves a job forward; backwards transitions are ignored.
    fn advance(&self, id: &str, status: JobStatus, error: Option<String>) {
        let snapshot = {
            let mut store = self.write();
            let Some(job) = store.jobs.get_mut(id) else { return };
            if status <= job.status || job.status.is_final() {
                return;
            }
            job.status = status;
            if status == JobStatus::Done {
                job.result = Some(format!("/v1/jobs/{id}/result"));
            }
            job.error = error;
            job.clone()
        };
        self.persist_job(&snapshot);
    }

    fn job(&self, id: &str) -> ApiResult<JobRecord> {
        self.read().jobs.get(id).cloned().ok_or_else(|| ApiError::not_found("job", id))
    }

    /// The artifact of a finished fit; 409 while it is still in progress.
    fn finished_fit(&self, id: &str) -> ApiResult<Arc<FitArtifact>> {
        let store = self.read();
        let job = store.jobs.get(id).ok_or_else(|| ApiError::not_found("fit job", id))?;
        if job.kind != JobKind::Fit {
            return Err(ApiError::new(StatusCode::BAD_REQUEST, "wrong_job_kind", format!("job `{id}` is not a fit")));
        }
        match job.status {
            JobStatus::Done => store
                .fits
                .get(id)
                .cloned()
                .ok_or_else(|| ApiError::internal(format!("fit `{id}` has no artifact"))),
            JobStatus::Failed => Err(ApiError::conflict(format!("fit `{id}` failed"))),
            _ => Err(ApiError::conflict(format!("fit `{id}` has not finished"))),
        }
    }
}

fn recover_artifact(dir: &Path, job: &JobRecord, store: &mut Store) -> bool {
    match job.kind {
        JobKind::Fit => {
            let chains = io::read_chains(&dir.join("chains").join(format!("{}.csv", job.id)));
            let config = std::fs::read_to_string(dir.join("chains").join(format!("{}.config.json", job.id)))
                .ok()
                .and_then(|t| serde_json::from_str::<RunConfig>(&t).ok());
            match (chains, config) {
                (Ok(chains), Some(config)) => {
                    store.fits.insert(job.id.clone(), Arc::new(FitArtifact { chains: Arc::new(chains), config }));
                    true
                }
                _ => false,
            }
        }
        JobKind::Differentials => match io::read_grid_summary(&dir.join("results").join(format!("{}.csv", job.id))) {
            Ok(g) => {
                store.grids.insert(job.id.clone(), Arc::new(g));
                true
            }
            Err(_) => false,
        },
        JobKind::Womble => std::fs::read_to_string(dir.join("results").join(format!("{}.json", job.id)))
            .ok()
            .and_then(|t| io::wombling_from_json(&t).ok())
            .map(|r| store.wombles.insert(job.id.clone(), Arc::new(r)))
            .is_some(),
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/datasets", post(upload_dataset))
        .route("/v1/fit", post(start_fit))
        .route("/v1/jobs/{id}", get(get_job))
        .route("/v1/jobs/{id}/result", get(get_result))
        .route("/v1/differentials", post(start_differentials))
        .route("/v1/grid-summary", get(grid_summary))
        .route("/v1/womble", post(womble))
        .with_state(state)
}

/// Binds `bind` and serves until the process is stopped.
pub async fn serve(config: RunConfig, bind: &str) -> curvwomb::Result<()> {
    let dir = config.service_data_dir();
    let state = AppState::open(config, &dir)?;
    let listener = tokio::net::TcpListener::bind(bind).await?;
    eprintln!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await?;
    Ok(())
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> curvwomb::Result<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker panicked: {e}")))?
        .map_err(ApiError::from)
}

fn csv_response(body: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], body).into_response()
}

fn accepted(job: &JobRecord) -> Response {
    (StatusCode::ACCEPTED, Json(serde_json::json!({ "job_id": job.id }))).into_response()
}

async fn upload_dataset(State(state): State<AppState>, body: String) -> ApiResult<Response> {
    let data = io::parse_dataset(body.as_bytes())?;
    let id = new_id();
    let path = state.0.dir.join("datasets").join(format!("{id}.csv"));
    let (rows, columns) = (data.len(), data.n_covariates());
    let (d, p) = (data.clone(), path.clone());
    blocking(move || io::write_dataset(&p, &d)).await?;
    state.write().datasets.insert(id.clone(), Arc::new(data));
    let body = serde_json::json!({ "dataset_id": id, "rows": rows, "design_columns": columns });
    Ok((StatusCode::CREATED, Json(body)).into_response())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitRequest {
    pub dataset_id: String,
    /// Run configuration; fields left out take the service defaults.
    #[serde(default)]
    pub config: Option<RunConfig>,
}

async fn start_fit(State(state): State<AppState>, Json(req): Json<FitRequest>) -> ApiResult<Response> {
    let data = state
        .read()
        .datasets
        .get(&req.dataset_id)
        .cloned()
        .ok_or_else(|| ApiError::not_found("dataset", &req.dataset_id))?;
    let mut config = req.config.unwrap_or_else(|| state.0.config.clone());
    // curve paths refer to the client's machine and play no part in a fit
    config.wombling.curves.clear();
    config.validate()?;
    config.priors.resolve(&data)?;
    let job = state.insert_job(JobKind::Fit, &req.dataset_id);
    let (st, id) = (state.clone(), job.id.clone());
    tokio::spawn(async move {
        let slots = st.0.fit_slots.clone();
        let _permit = slots.acquire_owned().await.expect("semaphore never closes");
        st.advance(&id, JobStatus::Running, None);
        let dir = st.0.dir.clone();
        let job_id = id.clone();
        let outcome = blocking(move || {
            let chains = pipeline::run_fit(&data, &config)?;
            io::write_chains(&dir.join("chains").join(format!("{job_id}.csv")), &chains)?;
            let cfg_json = serde_json::to_vec_pretty(&config).expect("configs serialise");
            std::fs::write(dir.join("chains").join(format!("{job_id}.config.json")), cfg_json)?;
            Ok(FitArtifact { chains: Arc::new(chains), config })
        })
        .await;
        match outcome {
            Ok(artifact) => {
                st.write().fits.insert(id.clone(), Arc::new(artifact));
                st.advance(&id, JobStatus::Done, None);
            }
            Err(e) => st.advance(&id, JobStatus::Failed, Some(e.message)),
        }
    });
    Ok(accepted(&job))
}

async fn get_job(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<JobRecord>> {
    state.job(&id).map(Json)
}

async fn get_result(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Response> {
    let job = state.job(&id)?;
    if job.status != JobStatus::Done {
        return Err(ApiError::conflict(format!("job `{id}` is {:?}", job.status).to_lowercase()));
    }
    match job.kind {
        JobKind::Fit => {
            let fit = state.finished_fit(&id)?;
            let mut buf = Vec::new();
            io::write_chains_to(&mut buf, &fit.chains)?;
            Ok(csv_response(buf))
        }
        JobKind::Differentials => {
            let grid = state.read().grids.get(&id).cloned().ok_or_else(|| ApiError::internal("missing grid"))?;
            let mut buf = Vec::new();
            io::write_grid_summary_to(&mut buf, &grid)?;
            Ok(csv_response(buf))
        }
        JobKind::Womble => {
            let r = state.read().wombles.get(&id).cloned().ok_or_else(|| ApiError::internal("missing result"))?;
            Ok(Json(&*r).into_response())
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DifferentialsRequest {
    pub fit_job_id: String,
    #[serde(default)]
    pub grid: Option<GridConfig>,
    #[serde(default)]
    pub max_draws: Option<usize>,
    #[serde(default)]
    pub alpha: Option<f64>,
}

async fn start_differentials(State(state): State<AppState>, Json(req): Json<DifferentialsRequest>) -> ApiResult<Response> {
    let fit = state.finished_fit(&req.fit_job_id)?;
    let mut config = fit.config.clone();
    if let Some(g) = req.grid {
        config.grid = g;
    }
    if let Some(m) = req.max_draws {
        config.differentials.max_draws = Some(m);
    }
    if let Some(a) = req.alpha {
        config.alpha = a;
    }
    config.validate()?;
    config.grid.points(&fit.chains.locations)?;
    let job = state.insert_job(JobKind::Differentials, &req.fit_job_id);
    let (st, id) = (state.clone(), job.id.clone());
    tokio::spawn(async move {
        st.advance(&id, JobStatus::Running, None);
        let path = st.0.dir.join("results").join(format!("{id}.csv"));
        let chains = fit.chains.clone();
        let outcome = blocking(move || {
            let g = pipeline::run_differentials(&chains, &config)?;
            io::write_grid_summary(&path, &g)?;
            Ok(g)
        })
        .await;
        match outcome {
            Ok(g) => {
                st.write().grids.insert(id.clone(), Arc::new(g));
                st.advance(&id, JobStatus::Done, None);
            }
            Err(e) => st.advance(&id, JobStatus::Failed, Some(e.message)),
        }
    });
    Ok(accepted(&job))
}

#[derive(Debug, Deserialize)]
pub struct GridQuery {
    pub job: String,
    #[serde(default)]
    pub field: Option<String>,
}

/// Rows of a grid summary. `job` may name a differentials job, or a finished
/// fit, in which case the summary is computed with the fit's configuration
/// and kept for later requests.
async fn grid_summary(State(state): State<AppState>, Query(q): Query<GridQuery>) -> ApiResult<Response> {
    let fields = match &q.field {
        None => GridField::ALL.to_vec(),
        Some(f) => vec![f.parse::<GridField>()?],
    };
    let job = state.job(&q.job)?;
    let grid = match job.kind {
        JobKind::Differentials => {
            if job.status != JobStatus::Done {
                return Err(ApiError::conflict(format!("differentials job `{}` has not finished", q.job)));
            }
            state.read().grids.get(&q.job).cloned().ok_or_else(|| ApiError::internal("missing grid"))?
        }
        JobKind::Fit => {
            let fit = state.finished_fit(&q.job)?;
            let cached = state.read().grids.get(&q.job).cloned();
            match cached {
                Some(g) => g,
                None => {
                    let chains = fit.chains.clone();
                    let config = fit.config.clone();
                    let g = Arc::new(blocking(move || pipeline::run_differentials(&chains, &config)).await?);
                    state.write().grids.entry(q.job.clone()).or_insert(g).clone()
                }
            }
        }
        JobKind::Womble => {
            return Err(ApiError::new(StatusCode::BAD_REQUEST, "wrong_job_kind", "wombling jobs have no grid"));
        }
    };
    let rows = io::grid_rows(&grid, &fields);
    let mut buf = Vec::new();
    io::write_grid_rows_to(&mut buf, grid.alpha, &rows)?;
    Ok(csv_response(buf))
}

/// Per-request changes to the wombling settings of the fit's configuration.
#[derive(Debug, Default, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WombleOverrides {
    pub n_quad_1d: Option<usize>,
    pub n_quad_2d: Option<usize>,
    pub mode: Option<WombMode>,
    pub max_draws: Option<usize>,
    pub max_norm: Option<f64>,
    pub analytic: Option<bool>,
    pub alpha: Option<f64>,
    pub level_resolution: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WombleRequest {
    pub fit_job_id: String,
    pub curve: CurveDoc,
    #[serde(default)]
    pub settings: WombleOverrides,
}

fn womble_config(base: &RunConfig, o: &WombleOverrides) -> curvwomb::Result<RunConfig> {
    let mut c = base.clone();
    let w = &mut c.wombling;
    w.n_quad_1d = o.n_quad_1d.unwrap_or(w.n_quad_1d);
    w.n_quad_2d = o.n_quad_2d.unwrap_or(w.n_quad_2d);
    w.mode = o.mode.unwrap_or(w.mode);
    if o.max_draws.is_some() {
        w.max_draws = o.max_draws;
    }
    w.max_norm = o.max_norm.unwrap_or(w.max_norm);
    w.analytic = o.analytic.unwrap_or(w.analytic);
    w.level_resolution = o.level_resolution.unwrap_or(w.level_resolution);
    c.alpha = o.alpha.unwrap_or(c.alpha);
    c.wombling.curves.clear();
    c.validate()?;
    Ok(c)
}

/// Wombling along a curve document. Small partitions are answered directly
/// with the result; larger ones start a job.
async fn womble(State(state): State<AppState>, Json(req): Json<WombleRequest>) -> ApiResult<Response> {
    let fit = state.finished_fit(&req.fit_job_id)?;
    let config = womble_config(&fit.config, &req.settings)?;
    let chains = fit.chains.clone();
    let (doc, cfg) = (req.curve, config.clone());
    let partition: Partition =
        blocking(move || pipeline::partition_for(&doc, &chains, &cfg, LevelSurface::Posterior)).await?;
    let settings = config.womble_settings();
    if partition.segments.len() <= SYNC_SEGMENT_LIMIT {
        let chains = fit.chains.clone();
        let r = blocking(move || sample_wombling(&chains, &partition, &settings)).await?;
        return Ok(Json(r).into_response());
    }
    let job = state.insert_job(JobKind::Womble, &req.fit_job_id);
    let (st, id) = (state.clone(), job.id.clone());
    tokio::spawn(async move {
        st.advance(&id, JobStatus::Running, None);
        let path = st.0.dir.join("results").join(format!("{id}.json"));
        let chains = fit.chains.clone();
        let outcome = blocking(move || {
            let r = sample_wombling(&chains, &partition, &settings)?;
            std::fs::write(&path, io::wombling_to_json(&r))?;
            Ok(r)
        })
        .await;
        match outcome {
            Ok(r) => {
                st.write().wombles.insert(id.clone(), Arc::new(r));
                st.advance(&id, JobStatus::Done, None);
            }
            Err(e) => st.advance(&id, JobStatus::Failed, Some(e.message)),
        }
    });
    Ok(accepted(&job))
}
