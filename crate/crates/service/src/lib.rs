//! HTTP grading service.
//!
//! Each problem pairs a hidden reference query with a hidden database.
//! Students submit queries; a wrong submission gets back a small
//! subinstance of the hidden database on which it disagrees with the
//! reference, plus both results on that subinstance. Nothing else from the
//! hidden database, and never the reference query, leaves the server.

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use uuid::Uuid;

use cexplain_core::catalog::{load_dir, Database, RelationSchema};
use cexplain_core::finder::{find, FindOptions, SolverChoice, TableView, Verdict};
use cexplain_core::ra::{validate_pair, QueryError, TypedQuery};
use cexplain_core::solver::ExternalSolver;
use cexplain_core::Value;

#[derive(Debug, Clone)]
pub struct Config {
    pub port: u16,
    pub problems_dir: PathBuf,
    pub log_path: PathBuf,
    /// `None` for the built-in solver.
    pub solver_command: Option<String>,
    pub timeout: Duration,
}

impl Config {
    /// Reads `CEXPLAIN_PORT`, `CEXPLAIN_PROBLEMS`, `CEXPLAIN_LOG`,
    /// `CEXPLAIN_SOLVER` and `CEXPLAIN_TIMEOUT` (seconds).
    pub fn from_env() -> Result<Config, String> {
        let var = |k: &str| std::env::var(k).ok().filter(|v| !v.is_empty());
        let port = match var("CEXPLAIN_PORT") {
            Some(p) => p.parse().map_err(|_| format!("CEXPLAIN_PORT: bad port `{p}`"))?,
            None => 8080,
        };
        let timeout = match var("CEXPLAIN_TIMEOUT") {
            Some(t) => Duration::from_secs(t.parse().map_err(|_| format!("CEXPLAIN_TIMEOUT: bad value `{t}`"))?),
            None => Duration::from_secs(30),
        };
        Ok(Config {
            port,
            problems_dir: var("CEXPLAIN_PROBLEMS").unwrap_or_else(|| "problems".into()).into(),
            log_path: var("CEXPLAIN_LOG").unwrap_or_else(|| "submissions.jsonl".into()).into(),
            solver_command: var("CEXPLAIN_SOLVER").filter(|s| s != "native"),
            timeout,
        })
    }
}

#[derive(Debug, Deserialize)]
struct ProblemFile {
    title: String,
    prompt: String,
    #[serde(default)]
    params: serde_json::Map<String, serde_json::Value>,
    #[serde(default = "yes")]
    show_schema: bool,
}

fn yes() -> bool {
    true
}

pub struct Problem {
    pub id: String,
    pub title: String,
    pub prompt: String,
    pub show_schema: bool,
    reference: TypedQuery,
    params: BTreeMap<String, Value>,
    db: Database,
}

impl Problem {
    /// Loads `problem.json`, `schema.json`, `reference.ra` and one CSV per
    /// relation from `dir`.
    pub fn load(id: &str, dir: &Path) -> Result<Problem, String> {
        let ctx = |e: &dyn std::fmt::Display| format!("problem {id}: {e}");
        let meta: ProblemFile = serde_json::from_str(
            &std::fs::read_to_string(dir.join("problem.json")).map_err(|e| ctx(&e))?,
        )
        .map_err(|e| ctx(&e))?;
        let db = load_dir(&dir.join("schema.json"), dir).map_err(|e| ctx(&e))?;
        let text = std::fs::read_to_string(dir.join("reference.ra")).map_err(|e| ctx(&e))?;
        let reference = TypedQuery::parse(&text, &db).map_err(|e| ctx(&e))?;
        let mut params = BTreeMap::new();
        for (k, v) in meta.params {
            let v = Value::from_json(&v).ok_or_else(|| ctx(&format!("unsupported value for parameter {k}")))?;
            params.insert(k, v);
        }
        if let Some(p) = reference.params.iter().find(|p| !params.contains_key(*p)) {
            return Err(ctx(&format!("no value for parameter @{p}")));
        }
        Ok(Problem {
            id: id.to_string(),
            title: meta.title,
            prompt: meta.prompt,
            show_schema: meta.show_schema,
            reference,
            params,
            db,
        })
    }

    fn schema(&self) -> &[RelationSchema] {
        self.db.schemas()
    }
}

/// Problems by id, fixed after startup.
#[derive(Default)]
pub struct Registry {
    problems: BTreeMap<String, Problem>,
}

impl Registry {
    /// Every subdirectory of `dir` is one problem, named after it.
    pub fn load_dir(dir: &Path) -> Result<Registry, String> {
        let mut problems = BTreeMap::new();
        let entries = std::fs::read_dir(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
        for entry in entries {
            let entry = entry.map_err(|e| e.to_string())?;
            if !entry.path().is_dir() {
                continue;
            }
            let id = entry.file_name().to_string_lossy().into_owned();
            problems.insert(id.clone(), Problem::load(&id, &entry.path())?);
        }
        Ok(Registry { problems })
    }

    pub fn len(&self) -> usize {
        self.problems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.problems.is_empty()
    }
}

/// One line of the submission log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub timestamp_ms: u128,
    pub session_id: String,
    pub problem_id: String,
    pub query: String,
    pub verdict: String,
    pub counterexample_size: Option<usize>,
}

/// Serializes every log write through one buffered file handle.
pub struct LogAppender {
    file: Mutex<BufWriter<File>>,
}

impl LogAppender {
    pub fn open(path: &Path) -> std::io::Result<LogAppender> {
        let f = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(LogAppender {
            file: Mutex::new(BufWriter::new(f)),
        })
    }

    pub fn append(&self, e: &LogEntry) -> std::io::Result<()> {
        let mut f = self.file.lock().unwrap_or_else(|p| p.into_inner());
        serde_json::to_writer(&mut *f, e)?;
        f.write_all(b"\n")?;
        f.flush()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct HistoryItem {
    pub attempt: usize,
    pub problem_id: String,
    pub query: String,
    pub verdict: String,
    pub counterexample_size: Option<usize>,
    pub timestamp_ms: u128,
}

pub struct AppState {
    registry: Registry,
    sessions: Mutex<HashMap<Uuid, Vec<HistoryItem>>>,
    log: LogAppender,
    solver: SolverChoice,
    timeout: Duration,
}

impl AppState {
    pub fn new(registry: Registry, log: LogAppender, solver_command: Option<String>, timeout: Duration) -> AppState {
        AppState {
            registry,
            sessions: Mutex::new(HashMap::new()),
            log,
            solver: solver_command.map_or(SolverChoice::Native, |c| SolverChoice::External(ExternalSolver::new(&c))),
            timeout,
        }
    }
}

type Shared = Arc<AppState>;

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/history", get(history))
        .route("/problems", get(list_problems))
        .route("/problems/{id}/check", post(check))
        .with_state(state)
}

pub async fn serve(config: Config) -> Result<(), String> {
    let registry = Registry::load_dir(&config.problems_dir)?;
    let log = LogAppender::open(&config.log_path).map_err(|e| format!("{}: {e}", config.log_path.display()))?;
    let state = Arc::new(AppState::new(registry, log, config.solver_command, config.timeout));
    let listener = tokio::net::TcpListener::bind(("0.0.0.0", config.port))
        .await
        .map_err(|e| format!("port {}: {e}", config.port))?;
    axum::serve(listener, router(state)).await.map_err(|e| e.to_string())
}

#[derive(Debug)]
pub enum ApiError {
    BadRequest(String),
    NotFound(String),
    Invalid {
        message: String,
        line: Option<usize>,
        column: Option<usize>,
    },
    Timeout,
    Internal(String),
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, body) = match self {
            ApiError::BadRequest(m) => (StatusCode::BAD_REQUEST, json!({"error": "bad_request", "message": m})),
            ApiError::NotFound(m) => (StatusCode::NOT_FOUND, json!({"error": "not_found", "message": m})),
            ApiError::Invalid { message, line, column } => (
                StatusCode::UNPROCESSABLE_ENTITY,
                json!({"error": "invalid_query", "message": message, "line": line, "column": column}),
            ),
            ApiError::Timeout => (
                StatusCode::SERVICE_UNAVAILABLE,
                json!({"error": "timeout", "message": "the check ran out of time"}),
            ),
            ApiError::Internal(m) => (StatusCode::INTERNAL_SERVER_ERROR, json!({"error": "internal", "message": m})),
        };
        (status, Json(body)).into_response()
    }
}

fn now_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SessionRequest {
    #[serde(default)]
    #[allow(dead_code)]
    label: Option<String>,
}

async fn create_session(State(st): State<Shared>, body: Bytes) -> Result<impl IntoResponse, ApiError> {
    if !body.iter().all(u8::is_ascii_whitespace) {
        serde_json::from_slice::<SessionRequest>(&body).map_err(|e| ApiError::BadRequest(e.to_string()))?;
    }
    let id = Uuid::new_v4();
    st.sessions.lock().unwrap().insert(id, Vec::new());
    Ok((StatusCode::CREATED, Json(json!({"session_id": id}))))
}

fn session_id(s: &str) -> Result<Uuid, ApiError> {
    Uuid::parse_str(s).map_err(|_| ApiError::NotFound(format!("unknown session {s}")))
}

async fn history(State(st): State<Shared>, UrlPath(id): UrlPath<String>) -> Result<impl IntoResponse, ApiError> {
    let sid = session_id(&id)?;
    let sessions = st.sessions.lock().unwrap();
    let items = sessions.get(&sid).ok_or_else(|| ApiError::NotFound(format!("unknown session {id}")))?;
    Ok(Json(items.clone()))
}

#[derive(Serialize)]
struct ProblemSummary<'a> {
    id: &'a str,
    title: &'a str,
    prompt: &'a str,
    schema: Option<Vec<SchemaSummary<'a>>>,
}

#[derive(Serialize)]
struct SchemaSummary<'a> {
    name: &'a str,
    attributes: Vec<serde_json::Value>,
    key: &'a [String],
}

async fn list_problems(State(st): State<Shared>) -> impl IntoResponse {
    let out: Vec<ProblemSummary<'_>> = st
        .registry
        .problems
        .values()
        .map(|p| ProblemSummary {
            id: &p.id,
            title: &p.title,
            prompt: &p.prompt,
            schema: p.show_schema.then(|| {
                p.schema()
                    .iter()
                    .map(|r| SchemaSummary {
                        name: &r.name,
                        attributes: r.attributes.iter().map(|a| json!({"name": a.name, "type": a.ty})).collect(),
                        key: &r.key,
                    })
                    .collect()
            }),
        })
        .collect();
    Json(serde_json::to_value(out).expect("summaries serialize"))
}

#[derive(Deserialize)]
struct CheckRequest {
    session_id: String,
    query: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CheckResponse {
    pub verdict: String,
    pub attempt: usize,
    /// Counterexample tuples by relation.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counterexample: Option<BTreeMap<String, TableView>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counterexample_size: Option<usize>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty", default)]
    pub params: BTreeMap<String, serde_json::Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub submission_result: Option<TableView>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference_result: Option<TableView>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

fn invalid(e: QueryError) -> ApiError {
    match e {
        QueryError::Syntax(s) => ApiError::Invalid {
            message: s.message,
            line: Some(s.line),
            column: Some(s.column),
        },
        other => ApiError::Invalid {
            message: other.to_string(),
            line: None,
            column: None,
        },
    }
}

enum Outcome {
    Correct,
    Incorrect(Box<cexplain_core::finder::Report>),
}

fn run_check(st: &AppState, problem: &Problem, text: &str) -> Result<Outcome, ApiError> {
    let submitted = cexplain_core::ra::parse(text).map_err(|e| invalid(e.into()))?;
    let (reference, submitted) = validate_pair(problem.reference.ast.clone(), submitted, &problem.db).map_err(invalid)?;
    let opts = FindOptions {
        timeout: Some(st.timeout),
        solver: st.solver.clone(),
        ..FindOptions::default()
    };
    let report = find(&problem.db, &reference, &submitted, &problem.params, &opts).map_err(|e| {
        if e.is_timeout() {
            ApiError::Timeout
        } else if let cexplain_core::finder::FindError::Query(q) = e {
            invalid(q)
        } else {
            ApiError::Internal(e.to_string())
        }
    })?;
    Ok(match report.verdict {
        Verdict::QueriesAgree => Outcome::Correct,
        Verdict::Counterexample => Outcome::Incorrect(Box::new(report)),
    })
}

fn record(st: &AppState, sid: Uuid, problem: &str, query: &str, verdict: &str, size: Option<usize>) -> usize {
    let ts = now_ms();
    let attempt = {
        let mut sessions = st.sessions.lock().unwrap();
        let items = sessions.entry(sid).or_default();
        items.push(HistoryItem {
            attempt: items.len() + 1,
            problem_id: problem.to_string(),
            query: query.to_string(),
            verdict: verdict.to_string(),
            counterexample_size: size,
            timestamp_ms: ts,
        });
        items.len()
    };
    let entry = LogEntry {
        timestamp_ms: ts,
        session_id: sid.to_string(),
        problem_id: problem.to_string(),
        query: query.to_string(),
        verdict: verdict.to_string(),
        counterexample_size: size,
    };
    if let Err(e) = st.log.append(&entry) {
        eprintln!("submission log: {e}");
    }
    attempt
}

async fn check(
    State(st): State<Shared>,
    UrlPath(pid): UrlPath<String>,
    body: Bytes,
) -> Result<impl IntoResponse, ApiError> {
    let req: CheckRequest = serde_json::from_slice(&body).map_err(|e| ApiError::BadRequest(e.to_string()))?;
    if !st.registry.problems.contains_key(&pid) {
        return Err(ApiError::NotFound(format!("unknown problem {pid}")));
    }
    let sid = session_id(&req.session_id)?;
    if !st.sessions.lock().unwrap().contains_key(&sid) {
        return Err(ApiError::NotFound(format!("unknown session {}", req.session_id)));
    }
    let st2 = st.clone();
    let (pid2, text) = (pid.clone(), req.query.clone());
    let outcome = tokio::task::spawn_blocking(move || run_check(&st2, &st2.registry.problems[&pid2], &text))
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))?;
    match outcome {
        Ok(Outcome::Correct) => {
            let attempt = record(&st, sid, &pid, &req.query, "correct", None);
            Ok(Json(CheckResponse {
                verdict: "correct".into(),
                attempt,
                counterexample: None,
                counterexample_size: None,
                params: BTreeMap::new(),
                submission_result: None,
                reference_result: None,
                warnings: Vec::new(),
            }))
        }
        Ok(Outcome::Incorrect(report)) => {
            let mut cex = report.counterexample.expect("counterexample verdict");
            // aliases number tuples across the hidden database
            for t in cex.tuples.values_mut() {
                t.ids.clear();
            }
            let attempt = record(&st, sid, &pid, &req.query, "incorrect", Some(cex.size));
            Ok(Json(CheckResponse {
                verdict: "incorrect".into(),
                attempt,
                counterexample_size: Some(cex.size),
                counterexample: Some(cex.tuples),
                params: cex.params,
                submission_result: report.q2_result,
                reference_result: report.q1_result,
                warnings: report.warnings,
            }))
        }
        Err(e) => {
            let verdict = match &e {
                ApiError::Invalid { .. } => "invalid",
                ApiError::Timeout => "timeout",
                _ => "error",
            };
            record(&st, sid, &pid, &req.query, verdict, None);
            Err(e)
        }
    }
}
