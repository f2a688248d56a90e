//! Experiment runner: manifest, resumable response log, re-scoring.
//!
//! A run walks the matrix models × domains × conditions × personas ×
//! iterations × questions in that order. Cells execute concurrently but are
//! appended to `responses.jsonl` strictly in matrix order by a single writer,
//! so an interrupted and resumed run produces the same file as an
//! uninterrupted one. Cells that fail after retries go to `errors.jsonl` and
//! are attempted again on the next run.

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufReader, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{
    self, generate_synthetic_dataset, load_dataset, DatasetError, QuestionRecord, SliceStats, SyntheticSpec,
};
use crate::gateway::http::{HttpBackend, HttpConfig, RateLimit, RetryPolicy};
use crate::gateway::scripted::ScriptedBackend;
use crate::gateway::synthetic::{PreferenceMatrix, SyntheticPolicy, SyntheticResponder};
use crate::gateway::{Backend, ChatRequest, Gateway, GatewayError, QueryContext, ResponseCache, Sampling};
use crate::interpret::{interpret_with, ChoiceExtractor, MarkerExtractor};
use crate::metrics::{self, build_report, BiasScoreConfig, MetricsError, MetricsReport, Outcome, ScenarioKey};
use crate::persona::{
    compose_prompts, render_system_prompt, render_user_prompt, PersonaCatalog, PersonaError, PersonaMode, PersonaSpec,
    PromptStyle, PromptTemplateSet, DEFAULT_PERSONA_ID,
};
use crate::scoring::{score_response, ScoringConfig, ScoringError};
use crate::types::{ContextCondition, Domain};

pub const RESPONSE_LOG: &str = "responses.jsonl";
pub const ERROR_LOG: &str = "errors.jsonl";

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("invalid manifest: {0}")]
    Manifest(String),
    #[error("dataset {path}: {source}")]
    Dataset { path: String, source: DatasetError },
    #[error(transparent)]
    Persona(#[from] PersonaError),
    #[error("{cell}: {source}")]
    Gateway { cell: String, source: GatewayError },
    #[error("response log line {line}: {message}")]
    Log { line: usize, message: String },
    #[error("response log entry for {cell} was produced from different prompts; use a fresh output directory")]
    StaleLog { cell: String },
    #[error("log entry {cell} has no matching dataset record")]
    Orphan { cell: String },
    #[error("log entry {cell} appears more than once")]
    Duplicate { cell: String },
    #[error(transparent)]
    Scoring(#[from] ScoringError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("i/o on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.display().to_string(),
        source,
    }
}

// ---------------------------------------------------------------------------
// Manifest

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PersonaScope {
    DefaultOnly,
    #[default]
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticDataset {
    pub n_questions: usize,
    #[serde(default = "half")]
    pub polarity_mix: f64,
    /// Defaults to the domain's catalog targets.
    #[serde(default)]
    pub targets: Option<Vec<String>>,
    #[serde(default)]
    pub seed: u64,
}

fn half() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSource {
    pub domain: Domain,
    /// Line-delimited records; relative paths resolve against the manifest.
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub synthetic: Option<SyntheticDataset>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum SyntheticPolicyConfig {
    /// `own` toward a persona's own identity (same id, or the persona's
    /// group), `other` toward every other target, `default_value` on the
    /// default persona's row.
    InGroup {
        own: f64,
        other: f64,
        #[serde(default)]
        default_value: f64,
        compliance: f64,
    },
    Matrix {
        bias: BTreeMap<String, BTreeMap<String, f64>>,
        compliance: f64,
    },
    UniformIncorrect {
        compliance: f64,
    },
    AlwaysCorrect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendConfig {
    Http {
        base_url: String,
        /// Environment variable holding the API key.
        #[serde(default)]
        api_key_env: Option<String>,
        #[serde(default)]
        timeout_ms: Option<u64>,
        #[serde(default)]
        retry: Option<RetryPolicy>,
        #[serde(default)]
        max_in_flight: Option<usize>,
        #[serde(default)]
        rate_limit: Option<RateLimit>,
        /// Append-only response cache under the output directory.
        #[serde(default = "yes")]
        cache: bool,
    },
    Scripted {
        /// Lines of `{"request_digest": ..., "text": ...}`.
        #[serde(default)]
        fixtures: Option<PathBuf>,
        /// Answer for requests without a fixture.
        #[serde(default)]
        fallback: Option<String>,
    },
    Synthetic {
        #[serde(flatten)]
        policy: SyntheticPolicyConfig,
        #[serde(default)]
        seed: Option<u64>,
    },
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub id: String,
    /// Whether the backend accepts a `system` message.
    #[serde(default = "yes")]
    pub system_role: bool,
    #[serde(default)]
    pub sampling: Sampling,
    pub backend: BackendConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "five")]
    pub iterations: u32,
    #[serde(default)]
    pub persona_scope: PersonaScope,
    /// Restricts the personas of the full scope (default persona always kept).
    #[serde(default)]
    pub personas: Option<Vec<String>>,
    #[serde(default = "four")]
    pub concurrency: usize,
    #[serde(default)]
    pub fail_fast: bool,
    /// Use the prompt variant asking for an explanation.
    #[serde(default)]
    pub reasoning: bool,
    /// Extra catalog entries merged over the built-in catalog.
    #[serde(default)]
    pub catalog: Option<PathBuf>,
    /// Replacement prompt templates.
    #[serde(default)]
    pub templates: Option<PathBuf>,
    #[serde(default)]
    pub prompt_style: PromptStyle,
    #[serde(default)]
    pub scoring: ScoringConfig,
    #[serde(default)]
    pub bias_score: BiasScoreConfig,
    /// Defaults to the domains of `datasets`, in order.
    #[serde(default)]
    pub domains: Option<Vec<Domain>>,
    #[serde(default = "all_conditions")]
    pub conditions: Vec<ContextCondition>,
    pub datasets: Vec<DatasetSource>,
    pub models: Vec<ModelConfig>,
}

fn five() -> u32 {
    5
}

fn four() -> usize {
    4
}

fn all_conditions() -> Vec<ContextCondition> {
    ContextCondition::ALL.to_vec()
}

impl RunManifest {
    pub fn from_toml(text: &str) -> Result<RunManifest, RunError> {
        toml::from_str(text).map_err(|e| RunError::Manifest(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<RunManifest, RunError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        RunManifest::from_toml(&text)
    }

    /// Hex SHA-256 of the manifest's JSON form.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("manifest serializes")))
    }

    pub fn domain_list(&self) -> Vec<Domain> {
        match &self.domains {
            Some(d) => d.clone(),
            None => {
                let mut out: Vec<Domain> = Vec::new();
                for d in &self.datasets {
                    if !out.contains(&d.domain) {
                        out.push(d.domain.clone());
                    }
                }
                out
            }
        }
    }

    pub fn validate(&self, templates: &PromptTemplateSet) -> Result<(), RunError> {
        let bad = |m: String| Err(RunError::Manifest(m));
        if self.iterations == 0 {
            return bad("iterations must be at least 1".into());
        }
        if self.persona_scope == PersonaScope::Full && self.iterations as usize > templates.persona_templates.len() {
            return bad(format!(
                "{} iterations requested but only {} persona templates exist",
                self.iterations,
                templates.persona_templates.len()
            ));
        }
        if self.concurrency == 0 {
            return bad("concurrency must be at least 1".into());
        }
        if self.models.is_empty() {
            return bad("no models listed".into());
        }
        let mut ids: Vec<&str> = self.models.iter().map(|m| m.id.as_str()).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return bad("model ids must be unique".into());
        }
        for model in &self.models {
            model
                .sampling
                .validate()
                .map_err(|e| RunError::Manifest(format!("model {}: {e}", model.id)))?;
        }
        for d in &self.datasets {
            if d.path.is_some() == d.synthetic.is_some() {
                return bad(format!(
                    "dataset for {} needs exactly one of `path` or `synthetic`",
                    d.domain
                ));
            }
        }
        for domain in self.domain_list() {
            if !self.datasets.iter().any(|d| d.domain == domain) {
                return bad(format!("no dataset listed for domain {domain}"));
            }
        }
        self.scoring.validate().map_err(|e| RunError::Manifest(e.to_string()))?;
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Loaded inputs

/// Question slices keyed by (domain, condition), each ordered by id.
pub type DatasetIndex = BTreeMap<(Domain, ContextCondition), Vec<QuestionRecord>>;

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

pub fn load_catalog(manifest: &RunManifest, base_dir: &Path) -> Result<PersonaCatalog, RunError> {
    let mut catalog = PersonaCatalog::builtin();
    if let Some(path) = &manifest.catalog {
        let path = resolve(base_dir, path);
        let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
        catalog.extend_from_json(&text)?;
    }
    Ok(catalog)
}

pub fn load_templates(manifest: &RunManifest, base_dir: &Path) -> Result<PromptTemplateSet, RunError> {
    match &manifest.templates {
        None => Ok(PromptTemplateSet::default()),
        Some(path) => {
            let path = resolve(base_dir, path);
            let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
            Ok(PromptTemplateSet::from_json(&text)?)
        }
    }
}

pub fn load_datasets(
    manifest: &RunManifest,
    base_dir: &Path,
    catalog: &PersonaCatalog,
) -> Result<DatasetIndex, RunError> {
    let mut index = DatasetIndex::new();
    for domain in manifest.domain_list() {
        for &condition in &manifest.conditions {
            let mut records = Vec::new();
            for (i, source) in manifest.datasets.iter().enumerate().filter(|(_, d)| d.domain == domain) {
                if let Some(path) = &source.path {
                    let path = resolve(base_dir, path);
                    let file = File::open(&path).map_err(io_err(&path))?;
                    let loaded = load_dataset(BufReader::new(file), &domain, condition, catalog).map_err(|source| {
                        RunError::Dataset {
                            path: path.display().to_string(),
                            source,
                        }
                    })?;
                    records.extend(loaded);
                }
                if let Some(spec) = &source.synthetic {
                    let targets = match &spec.targets {
                        Some(t) => t.clone(),
                        None => catalog.target_ids(&domain),
                    };
                    let generated = generate_synthetic_dataset(&SyntheticSpec {
                        domain: domain.clone(),
                        n_questions: spec.n_questions,
                        targets,
                        polarity_mix: spec.polarity_mix,
                        condition,
                        seed: spec.seed ^ manifest.seed ^ ((i as u64) << 32) ^ condition_salt(condition),
                    })
                    .map_err(|source| RunError::Dataset {
                        path: format!("synthetic[{i}]"),
                        source,
                    })?;
                    records.extend(generated);
                }
            }
            index.insert((domain.clone(), condition), records);
        }
    }
    Ok(index)
}

fn condition_salt(condition: ContextCondition) -> u64 {
    match condition {
        ContextCondition::Ambiguous => 0,
        ContextCondition::Disambiguated => 0x9e37_79b9_7f4a_7c15,
    }
}

/// Personas run for a domain, default first.
pub fn scoped_personas(
    manifest: &RunManifest,
    catalog: &PersonaCatalog,
    domain: &Domain,
) -> Result<Vec<PersonaSpec>, RunError> {
    Ok(match manifest.persona_scope {
        PersonaScope::DefaultOnly => vec![PersonaSpec::default_for(domain)],
        PersonaScope::Full => {
            let all = catalog.persona_catalog(domain)?;
            match &manifest.personas {
                None => all,
                Some(keep) => {
                    for id in keep {
                        if !all.iter().any(|p| &p.id == id) {
                            return Err(RunError::Manifest(format!(
                                "persona {id} is not in the {domain} catalog"
                            )));
                        }
                    }
                    all.into_iter()
                        .filter(|p| p.is_default || keep.contains(&p.id))
                        .collect()
                }
            }
        }
    })
}

// ---------------------------------------------------------------------------
// Response log

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellKey {
    pub model_id: String,
    pub domain: Domain,
    pub condition: ContextCondition,
    pub persona_id: String,
    pub iteration: u32,
    pub question_id: String,
}

impl std::fmt::Display for CellKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}/{}/{}/{}/#{}/{}",
            self.model_id, self.domain, self.condition, self.persona_id, self.iteration, self.question_id
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseLogEntry {
    pub manifest_digest: String,
    pub model_id: String,
    pub domain: Domain,
    pub condition: ContextCondition,
    pub persona_id: String,
    pub iteration: u32,
    pub question_id: String,
    /// Digest of the full request (prompts, sampling, iteration).
    pub prompts_digest: String,
    pub persona_mode: PersonaMode,
    pub raw_text: String,
    pub timestamp_ms: u64,
}

impl ResponseLogEntry {
    pub fn key(&self) -> CellKey {
        CellKey {
            model_id: self.model_id.clone(),
            domain: self.domain.clone(),
            condition: self.condition,
            persona_id: self.persona_id.clone(),
            iteration: self.iteration,
            question_id: self.question_id.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorLogEntry {
    pub cell: CellKey,
    pub prompts_digest: String,
    pub error: String,
    pub timestamp_ms: u64,
}

/// Reads a response log. A final line without its newline is an interrupted
/// write and is ignored; any other unreadable line is an error.
pub fn read_log<R: Read>(mut source: R) -> Result<Vec<ResponseLogEntry>, RunError> {
    let mut text = String::new();
    source.read_to_string(&mut text).map_err(|e| RunError::Log {
        line: 0,
        message: e.to_string(),
    })?;
    let complete = match text.rfind('\n') {
        Some(i) => &text[..=i],
        None => "",
    };
    if complete.len() < text.len() {
        tracing::warn!("ignoring partial trailing line in response log");
    }
    complete
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| RunError::Log {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn load_log(path: &Path) -> Result<Vec<ResponseLogEntry>, RunError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    read_log(File::open(path).map_err(io_err(path))?)
}

/// Loads the log and cuts off a partial trailing line so appends start clean.
fn repair_log(path: &Path) -> Result<Vec<ResponseLogEntry>, RunError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut file = OpenOptions::new()
        .read(true)
        .write(true)
        .open(path)
        .map_err(io_err(path))?;
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes).map_err(io_err(path))?;
    let keep = bytes.iter().rposition(|b| *b == b'\n').map_or(0, |i| i + 1);
    if keep < bytes.len() {
        tracing::warn!(path = %path.display(), dropped = bytes.len() - keep, "truncating partial trailing line in response log");
        file.set_len(keep as u64).map_err(io_err(path))?;
        file.seek(SeekFrom::End(0)).map_err(io_err(path))?;
    }
    read_log(&bytes[..keep])
}

pub fn write_log(entries: &[ResponseLogEntry], path: &Path) -> Result<(), RunError> {
    let mut out = String::new();
    for e in entries {
        out.push_str(&serde_json::to_string(e).expect("entry serializes"));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(io_err(path))
}

struct LineWriter {
    path: PathBuf,
    file: File,
}

impl LineWriter {
    fn append(path: PathBuf) -> Result<LineWriter, RunError> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(io_err(&path))?;
        Ok(LineWriter { path, file })
    }

    fn write<T: Serialize>(&mut self, value: &T) -> Result<(), RunError> {
        let mut line = serde_json::to_string(value).expect("log entry serializes");
        line.push('\n');
        self.file
            .write_all(line.as_bytes())
            .and_then(|_| self.file.flush())
            .map_err(io_err(&self.path))
    }
}

// ---------------------------------------------------------------------------
// Running

pub type Clock = Arc<dyn Fn() -> u64 + Send + Sync>;

pub fn system_clock() -> Clock {
    Arc::new(|| {
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0)
    })
}

#[derive(Clone)]
pub struct RunOptions {
    /// Stop after appending this many new entries (simulates an interrupt).
    pub stop_after: Option<usize>,
    pub clock: Clock,
    /// Replaces the manifest-configured backend of the named models.
    pub backend_overrides: HashMap<String, Arc<Gateway>>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            stop_after: None,
            clock: system_clock(),
            backend_overrides: HashMap::new(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSummary {
    pub total_cells: usize,
    pub already_logged: usize,
    pub written: usize,
    pub failed: usize,
    /// Requests that reached a backend (cache hits excluded).
    pub backend_calls: usize,
    pub interrupted: bool,
}

struct Cell<'a> {
    key: CellKey,
    question: &'a QuestionRecord,
    request: ChatRequest,
    mode: PersonaMode,
    gateway: Arc<Gateway>,
}

fn build_gateway(
    model: &ModelConfig,
    domain: &Domain,
    personas: &[PersonaSpec],
    catalog: &PersonaCatalog,
    manifest: &RunManifest,
    base_dir: &Path,
    output_dir: &Path,
) -> Result<Gateway, RunError> {
    let seed = |s: Option<u64>| s.unwrap_or(manifest.seed);
    Ok(match &model.backend {
        BackendConfig::Http {
            base_url,
            api_key_env,
            timeout_ms,
            retry,
            max_in_flight,
            rate_limit,
            cache,
        } => {
            let mut config = HttpConfig::new(base_url.clone());
            if let Some(var) = api_key_env {
                let key = std::env::var(var).map_err(|_| {
                    RunError::Manifest(format!("model {}: environment variable {var} is not set", model.id))
                })?;
                config.api_key = Some(key);
            }
            if let Some(t) = timeout_ms {
                config.timeout_ms = *t;
            }
            if let Some(r) = retry {
                config.retry = r.clone();
            }
            if let Some(m) = max_in_flight {
                config.max_in_flight = *m;
            }
            config.rate_limit = rate_limit.clone();
            let backend = HttpBackend::new(config).map_err(|source| RunError::Gateway {
                cell: model.id.clone(),
                source,
            })?;
            let gateway = Gateway::new(Backend::Http(backend));
            if *cache {
                let dir = output_dir.join("cache");
                std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
                let slug: String = model
                    .id
                    .chars()
                    .map(|c| {
                        if c.is_ascii_alphanumeric() || c == '-' || c == '.' {
                            c
                        } else {
                            '_'
                        }
                    })
                    .collect();
                let cache =
                    ResponseCache::open(dir.join(format!("{slug}.jsonl"))).map_err(|source| RunError::Gateway {
                        cell: model.id.clone(),
                        source,
                    })?;
                gateway.with_cache(Arc::new(cache))
            } else {
                gateway
            }
        }
        BackendConfig::Scripted { fixtures, fallback } => {
            let mut backend = ScriptedBackend::new();
            if let Some(path) = fixtures {
                let path = resolve(base_dir, path);
                let file = File::open(&path).map_err(io_err(&path))?;
                backend = backend
                    .load_fixtures(BufReader::new(file))
                    .map_err(|source| RunError::Gateway {
                        cell: model.id.clone(),
                        source,
                    })?;
            }
            if let Some(text) = fallback {
                backend = backend.with_fixed_fallback(text.clone());
            }
            Gateway::new(Backend::Scripted(backend))
        }
        BackendConfig::Synthetic { policy, seed: s } => {
            let policy = match policy {
                SyntheticPolicyConfig::InGroup {
                    own,
                    other,
                    default_value,
                    compliance,
                } => {
                    let targets = catalog.target_ids(domain);
                    let mut bias = BTreeMap::new();
                    for p in personas {
                        let row = targets
                            .iter()
                            .map(|t| {
                                let v = if p.is_default {
                                    *default_value
                                } else if &p.id == t || p.group.as_deref() == Some(t.as_str()) {
                                    *own
                                } else {
                                    *other
                                };
                                (t.clone(), v)
                            })
                            .collect();
                        bias.insert(p.id.clone(), row);
                    }
                    SyntheticPolicy::Preference(synthetic_matrix(model, bias, *compliance)?)
                }
                SyntheticPolicyConfig::Matrix { bias, compliance } => {
                    SyntheticPolicy::Preference(synthetic_matrix(model, bias.clone(), *compliance)?)
                }
                SyntheticPolicyConfig::UniformIncorrect { compliance } => SyntheticPolicy::UniformIncorrect {
                    compliance: *compliance,
                },
                SyntheticPolicyConfig::AlwaysCorrect => SyntheticPolicy::UniformIncorrect { compliance: 1.0 },
            };
            Gateway::new(Backend::Synthetic(SyntheticResponder::new(
                model.id.clone(),
                policy,
                seed(*s),
            )))
        }
    })
}

fn synthetic_matrix(
    model: &ModelConfig,
    bias: BTreeMap<String, BTreeMap<String, f64>>,
    compliance: f64,
) -> Result<PreferenceMatrix, RunError> {
    PreferenceMatrix::new(bias, compliance).map_err(|e| RunError::Manifest(format!("model {}: {e}", model.id)))
}

/// Runs every cell of the manifest not yet present in
/// `<output_dir>/responses.jsonl`. `base_dir` anchors relative paths.
pub async fn run(manifest: &RunManifest, base_dir: &Path, options: RunOptions) -> Result<RunSummary, RunError> {
    let catalog = load_catalog(manifest, base_dir)?;
    let templates = load_templates(manifest, base_dir)?;
    templates.validate()?;
    manifest.validate(&templates)?;
    let datasets = load_datasets(manifest, base_dir, &catalog)?;
    let output_dir = resolve(base_dir, &manifest.output_dir);
    std::fs::create_dir_all(&output_dir).map_err(io_err(&output_dir))?;
    let manifest_digest = manifest.digest();

    // Matrix in canonical order.
    let mut cells = Vec::new();
    for model in &manifest.models {
        for domain in manifest.domain_list() {
            let personas = scoped_personas(manifest, &catalog, &domain)?;
            let gateway = match options.backend_overrides.get(&model.id) {
                Some(g) => g.clone(),
                None => Arc::new(build_gateway(
                    model,
                    &domain,
                    &personas,
                    &catalog,
                    manifest,
                    base_dir,
                    &output_dir,
                )?),
            };
            for &condition in &manifest.conditions {
                let questions = &datasets[&(domain.clone(), condition)];
                for persona in &personas {
                    for iteration in 0..manifest.iterations {
                        let template_index = iteration as usize % templates.persona_templates.len();
                        let system = render_system_prompt(persona, template_index, &templates, manifest.prompt_style)?;
                        for question in questions {
                            let user = render_user_prompt(question, manifest.reasoning, &templates);
                            let (system_prompt, user_prompt, mode) =
                                compose_prompts(system.clone(), user, model.system_role);
                            cells.push(Cell {
                                key: CellKey {
                                    model_id: model.id.clone(),
                                    domain: domain.clone(),
                                    condition,
                                    persona_id: persona.id.clone(),
                                    iteration,
                                    question_id: question.id.clone(),
                                },
                                question,
                                request: ChatRequest {
                                    model_id: model.id.clone(),
                                    system_prompt,
                                    user_prompt,
                                    sampling: model.sampling.clone(),
                                    iteration,
                                },
                                mode,
                                gateway: gateway.clone(),
                            });
                        }
                    }
                }
            }
        }
    }

    let log_path = output_dir.join(RESPONSE_LOG);
    let existing = repair_log(&log_path)?;
    let mut logged: HashMap<CellKey, String> = HashMap::with_capacity(existing.len());
    for entry in existing {
        let key = entry.key();
        if logged.insert(key.clone(), entry.prompts_digest).is_some() {
            return Err(RunError::Duplicate { cell: key.to_string() });
        }
    }
    let mut summary = RunSummary {
        total_cells: cells.len(),
        ..RunSummary::default()
    };
    let mut pending = Vec::new();
    for cell in cells {
        match logged.get(&cell.key) {
            Some(digest) if *digest == cell.request.digest() => summary.already_logged += 1,
            Some(_) => {
                return Err(RunError::StaleLog {
                    cell: cell.key.to_string(),
                })
            }
            None => pending.push(cell),
        }
    }
    tracing::info!(total = summary.total_cells, pending = pending.len(), "starting run");

    let mut log = LineWriter::append(log_path)?;
    let mut errors: Option<LineWriter> = None;
    let mut results = stream::iter(pending.iter())
        .map(|cell| async move {
            let context = QueryContext {
                persona_id: &cell.key.persona_id,
                question: cell.question,
            };
            (cell, cell.gateway.complete(&cell.request, context).await)
        })
        .buffered(manifest.concurrency);

    while let Some((cell, result)) = results.next().await {
        let digest = cell.request.digest();
        match result {
            Ok(response) => {
                if !response.cached {
                    summary.backend_calls += 1;
                }
                log.write(&ResponseLogEntry {
                    manifest_digest: manifest_digest.clone(),
                    model_id: cell.key.model_id.clone(),
                    domain: cell.key.domain.clone(),
                    condition: cell.key.condition,
                    persona_id: cell.key.persona_id.clone(),
                    iteration: cell.key.iteration,
                    question_id: cell.key.question_id.clone(),
                    prompts_digest: digest,
                    persona_mode: cell.mode,
                    raw_text: response.text,
                    timestamp_ms: (options.clock)(),
                })?;
                summary.written += 1;
                if options.stop_after.is_some_and(|n| summary.written >= n) {
                    summary.interrupted = true;
                    break;
                }
            }
            Err(source) => {
                summary.backend_calls += 1;
                summary.failed += 1;
                tracing::warn!(cell = %cell.key, "cell failed: {source}");
                if errors.is_none() {
                    errors = Some(LineWriter::append(output_dir.join(ERROR_LOG))?);
                }
                errors.as_mut().expect("opened above").write(&ErrorLogEntry {
                    cell: cell.key.clone(),
                    prompts_digest: digest,
                    error: source.to_string(),
                    timestamp_ms: (options.clock)(),
                })?;
                if manifest.fail_fast {
                    return Err(RunError::Gateway {
                        cell: cell.key.to_string(),
                        source,
                    });
                }
            }
        }
    }
    Ok(summary)
}

// ---------------------------------------------------------------------------
// Scoring

#[derive(Debug, Clone, Default)]
pub struct ScoreSettings {
    pub scoring: ScoringConfig,
    pub bias_score: BiasScoreConfig,
}

/// Scores a log against its datasets with the default extractor.
pub fn score_log(
    entries: &[ResponseLogEntry],
    datasets: &DatasetIndex,
    catalog: &PersonaCatalog,
    settings: &ScoreSettings,
) -> Result<Vec<MetricsReport>, RunError> {
    score_log_with(entries, datasets, catalog, settings, &MarkerExtractor)
}

/// One report per (model, domain, condition, iteration), ordered by that key.
/// Entry order does not matter.
pub fn score_log_with<E: ChoiceExtractor + ?Sized>(
    entries: &[ResponseLogEntry],
    datasets: &DatasetIndex,
    catalog: &PersonaCatalog,
    settings: &ScoreSettings,
    extractor: &E,
) -> Result<Vec<MetricsReport>, RunError> {
    let mut questions: HashMap<(&Domain, ContextCondition, &str), &QuestionRecord> = HashMap::new();
    for ((domain, condition), records) in datasets {
        for r in records {
            questions.insert((domain, *condition, r.id.as_str()), r);
        }
    }
    let mut seen = std::collections::HashSet::new();
    let mut groups: BTreeMap<(ScenarioKey, u32), Vec<(&ResponseLogEntry, &QuestionRecord)>> = BTreeMap::new();
    for entry in entries {
        let key = entry.key();
        let question = *questions
            .get(&(&entry.domain, entry.condition, entry.question_id.as_str()))
            .ok_or_else(|| RunError::Orphan { cell: key.to_string() })?;
        if !seen.insert(key.clone()) {
            return Err(RunError::Duplicate { cell: key.to_string() });
        }
        let scenario = ScenarioKey {
            model_id: entry.model_id.clone(),
            domain: entry.domain.clone(),
            condition: entry.condition,
        };
        groups
            .entry((scenario, entry.iteration))
            .or_default()
            .push((entry, question));
    }

    let mut reports = Vec::with_capacity(groups.len());
    for ((scenario, iteration), group) in groups {
        let slice: &[QuestionRecord] = &datasets[&(scenario.domain.clone(), scenario.condition)];
        let stats: SliceStats = dataset::slice_statistics(slice);
        let answers: Vec<_> = group
            .iter()
            .map(|(e, q)| interpret_with(extractor, &e.raw_text, q))
            .collect();
        let mut events = Vec::new();
        let mut outcomes = Vec::with_capacity(group.len());
        for ((entry, question), answer) in group.iter().zip(&answers) {
            events.extend(score_response(question, answer, &entry.persona_id, &settings.scoring)?);
            outcomes.push(Outcome {
                persona_id: &entry.persona_id,
                question,
                answer,
            });
        }
        let acc = metrics::accumulate(&events, &outcomes, &stats)?;
        let personas = persona_order(catalog, &scenario.domain, acc.personas.keys());
        reports.push(build_report(
            &acc,
            &scenario,
            iteration,
            &personas,
            DEFAULT_PERSONA_ID,
            &settings.bias_score,
        )?);
    }
    Ok(reports)
}

/// Default first, then catalog order, then anything else sorted.
fn persona_order<'a>(
    catalog: &PersonaCatalog,
    domain: &Domain,
    present: impl Iterator<Item = &'a String>,
) -> Vec<String> {
    let present: Vec<&String> = present.collect();
    let mut order: Vec<String> = Vec::with_capacity(present.len());
    if present.iter().any(|p| *p == DEFAULT_PERSONA_ID) {
        order.push(DEFAULT_PERSONA_ID.to_string());
    }
    if let Ok(listed) = catalog.persona_catalog(domain) {
        for p in listed {
            if !p.is_default && present.contains(&&p.id) {
                order.push(p.id);
            }
        }
    }
    for p in present {
        if !order.contains(p) {
            order.push(p.clone());
        }
    }
    order
}

pub fn save_reports(reports: &[MetricsReport], path: &Path) -> Result<(), RunError> {
    let text = serde_json::to_string_pretty(reports).expect("reports serialize") + "\n";
    std::fs::write(path, text).map_err(io_err(path))
}

pub fn load_reports(path: &Path) -> Result<Vec<MetricsReport>, RunError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| RunError::Log {
        line: e.line(),
        message: e.to_string(),
    })
}
