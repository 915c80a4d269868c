//! `attribute`, `baseline` and `replay`: batch execution into a run
//! directory.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use chartattrib_core::agent::{AgentError, Llm};
use chartattrib_core::chart2table::ExtractionOptions;
use chartattrib_core::gateway::{
    sha256_hex, Backend, Gateway, GatewayError, MockScript, OfflineBackend, OpenAiBackend, ScriptedMock,
    TranscriptCache,
};
use chartattrib_core::localization::{highlight_boxes, Detector, ExternalDetector, OracleDetector};
use chartattrib_core::model::AttributionSample;
use chartattrib_core::pipeline::{attribute_sample, baseline_sample, AttributionOptions, SampleInput};
use chartattrib_core::retrieval::RetrievalConfig;
use image::RgbImage;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{BackendSpec, PipelineConfig};
use crate::fsio::{read_json, write_atomic, write_json, write_overlay};
use crate::samples::load_samples;
use crate::{CliError, EXIT_OK, EXIT_PARTIAL};

pub const LATEST: &str = "LATEST";
pub const MANIFEST: &str = "manifest.json";
pub const FAILURES: &str = "failures.json";
pub const SAMPLES_DIR: &str = "samples";
pub const CITATIONS: &str = "citations.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Attribute,
    Baseline,
}

impl Command {
    /// Row label used when the run is evaluated.
    pub fn method_label(self) -> &'static str {
        match self {
            Command::Attribute => "chartattrib",
            Command::Baseline => "direct-bbox",
        }
    }
}

/// Stored next to a transcript cache so replays can rebuild cache keys and
/// refuse a changed configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CacheSidecar {
    pub command: Command,
    pub config_hash: String,
    pub config: PipelineConfig,
    pub backend_identity: String,
    pub vision: bool,
}

pub fn sidecar_path(cache: &Path) -> PathBuf {
    let mut name = cache.file_name().unwrap_or_default().to_os_string();
    name.push(".config.json");
    cache.with_file_name(name)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub sample_id: String,
    pub error: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub command: Command,
    pub replay: bool,
    pub started_at: String,
    pub finished_at: String,
    pub config: PipelineConfig,
    pub config_hash: String,
    pub backend_identity: String,
    pub cache: Option<CacheInfo>,
    pub versions: serde_json::Value,
    pub samples: Vec<String>,
    pub succeeded: Vec<String>,
    pub failed: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CacheInfo {
    pub path: PathBuf,
    pub sha256: String,
    pub entries: usize,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub run_dir: PathBuf,
    pub succeeded: Vec<String>,
    pub failures: Vec<Failure>,
}

impl RunSummary {
    pub fn exit_code(&self) -> i32 {
        if self.failures.is_empty() {
            EXIT_OK
        } else {
            EXIT_PARTIAL
        }
    }
}

pub fn make_backend(spec: &BackendSpec) -> Result<Arc<dyn Backend>, CliError> {
    match spec {
        BackendSpec::Mock(path) => {
            let script = MockScript::load(path).map_err(|e| CliError::bad_file(path, e))?;
            Ok(Arc::new(ScriptedMock::from_script(script)))
        }
        BackendSpec::Live => {
            let b = OpenAiBackend::from_env().map_err(|e| CliError::Config(e.to_string()))?;
            Ok(Arc::new(b))
        }
    }
}

fn open_cache(path: &Path) -> Result<TranscriptCache, CliError> {
    TranscriptCache::open(path).map_err(|e| CliError::io(path, e))
}

/// Gateway for a live or mock run; records the cache sidecar when caching.
pub fn build_gateway(cfg: &PipelineConfig, command: Command) -> Result<Gateway, CliError> {
    let spec = cfg.backend.as_ref().ok_or_else(|| CliError::Config("no backend configured (use --backend)".into()))?;
    let backend = make_backend(spec)?;
    let sidecar = CacheSidecar {
        command,
        config_hash: cfg.hash(),
        config: cfg.clone(),
        backend_identity: backend.identity().to_string(),
        vision: backend.capabilities().vision,
    };
    let mut gateway = Gateway::new(backend).with_parallelism(cfg.parallelism);
    if let Some(path) = &cfg.cache {
        gateway = gateway.with_cache(open_cache(path)?);
        write_json(&sidecar_path(path), &sidecar)?;
    }
    Ok(gateway)
}

fn timestamp() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

fn create_run_dir(out: &Path) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let stem = format!("run-{}", chrono::Utc::now().format("%Y%m%dT%H%M%S%.3fZ"));
    for n in 0.. {
        let name = if n == 0 { stem.clone() } else { format!("{stem}-{n}") };
        let dir = out.join(name);
        match std::fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(CliError::io(&dir, e)),
        }
    }
    unreachable!()
}

/// Resolves `dir` to a run directory: itself if it has a manifest, else the
/// run named in its `LATEST` file.
pub fn resolve_run_dir(dir: &Path) -> Result<PathBuf, CliError> {
    if dir.join(MANIFEST).is_file() {
        return Ok(dir.to_path_buf());
    }
    let latest = dir.join(LATEST);
    let name = std::fs::read_to_string(&latest).map_err(|e| CliError::io(&latest, e))?;
    Ok(dir.join(name.trim()))
}

enum SampleError {
    Failed(String),
    Fatal(CliError),
}

impl From<CliError> for SampleError {
    fn from(e: CliError) -> Self {
        SampleError::Fatal(e)
    }
}

impl From<AgentError> for SampleError {
    fn from(e: AgentError) -> Self {
        match e {
            AgentError::Gateway(GatewayError::CacheMiss { key }) => SampleError::Fatal(CliError::CacheMiss { key }),
            other => SampleError::Failed(other.to_string()),
        }
    }
}

fn detector_for(sample: &AttributionSample) -> Result<Box<dyn Detector>, SampleError> {
    if let Some(path) = &sample.detections {
        return Ok(Box::new(ExternalDetector::load(path)?));
    }
    match &sample.ground_truth {
        Some(gt) => Ok(Box::new(OracleDetector::new(gt.clone()))),
        None => Err(SampleError::Failed("no detector: sample has neither detections nor ground truth".into())),
    }
}

fn load_image(sample: &AttributionSample) -> Result<RgbImage, SampleError> {
    let bytes = std::fs::read(&sample.chart_image).map_err(|e| CliError::io(&sample.chart_image, e))?;
    image::load_from_memory(&bytes)
        .map(|i| i.to_rgb8())
        .map_err(|e| SampleError::Failed(format!("{}: {e}", sample.chart_image.display())))
}

fn process_sample(
    command: Command,
    sample: &AttributionSample,
    gateway: &Gateway,
    cfg: &PipelineConfig,
    samples_dir: &Path,
) -> Result<(), SampleError> {
    let image = load_image(sample)?;
    let llm = Llm::new(gateway).with_models(&cfg.models).with_max_repairs(cfg.max_repairs);
    let input = SampleInput {
        sample_id: &sample.sample_id,
        image: &image,
        chart_type: sample.chart_type,
        question: &sample.question,
        answer: &sample.answer,
    };
    let dir = samples_dir.join(&sample.sample_id);
    match command {
        Command::Attribute => {
            let detector = detector_for(sample)?;
            let opts = AttributionOptions {
                extraction: ExtractionOptions { max_iterations: cfg.max_iterations, ..ExtractionOptions::default() },
                retrieval: RetrievalConfig { threshold: cfg.threshold, top_k: cfg.top_k },
                mapping: cfg.mapping,
            };
            let out = attribute_sample(&llm, &input, detector.as_ref(), &opts)?;
            write_json(
                &dir.join("retrieval_trace.json"),
                &json!({
                    "claims": out.claims,
                    "extraction": out.extraction,
                    "captions": out.captions,
                    "retrieval": out.retrieval,
                }),
            )?;
            write_json(
                &dir.join("localization.json"),
                &json!({
                    "detector": detector.identity(),
                    "marks": out.marks,
                    "localization": out.localization,
                }),
            )?;
            if let Some(annotated) = &out.annotated {
                write_atomic(&dir.join("annotated.png"), &chartattrib_core::chartgen::encode_png(annotated))?;
            }
            let boxes = out.citations.boxes();
            write_overlay(&dir.join("overlay.png"), &highlight_boxes(&image, &boxes), &boxes)?;
            write_json(&dir.join(CITATIONS), &out.citations)?;
        }
        Command::Baseline => {
            let out = baseline_sample(&llm, &input)?;
            write_json(&dir.join("baseline_trace.json"), &json!({"claims": out.claims, "transcripts": out.transcripts}))?;
            let boxes = out.citations.boxes();
            write_overlay(&dir.join("overlay.png"), &highlight_boxes(&image, &boxes), &boxes)?;
            write_json(&dir.join(CITATIONS), &out.citations)?;
        }
    }
    Ok(())
}

/// Runs every sample into a fresh run directory under `cfg.out`. A failing
/// sample is recorded and the batch continues; cache misses and write
/// errors abort.
pub fn run_batch(
    command: Command,
    samples: &[AttributionSample],
    gateway: &Gateway,
    cfg: &PipelineConfig,
    replay: bool,
) -> Result<RunSummary, CliError> {
    let started_at = timestamp();
    let run_dir = create_run_dir(&cfg.out)?;
    let samples_dir = run_dir.join(SAMPLES_DIR);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.parallelism)
        .build()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let results: Vec<Result<(), SampleError>> = pool.install(|| {
        use rayon::prelude::*;
        samples.par_iter().map(|s| process_sample(command, s, gateway, cfg, &samples_dir)).collect()
    });

    let mut succeeded = Vec::new();
    let mut failures = Vec::new();
    for (sample, result) in samples.iter().zip(results) {
        match result {
            Ok(()) => succeeded.push(sample.sample_id.clone()),
            Err(SampleError::Failed(error)) => {
                log::warn!("sample {} failed: {error}", sample.sample_id);
                failures.push(Failure { sample_id: sample.sample_id.clone(), error });
            }
            Err(SampleError::Fatal(e)) => return Err(e),
        }
    }
    write_json(&run_dir.join(FAILURES), &failures)?;

    let cache = match gateway.cache() {
        Some(c) => {
            let bytes = std::fs::read(c.path()).map_err(|e| CliError::io(c.path(), e))?;
            Some(CacheInfo { path: c.path().to_path_buf(), sha256: sha256_hex(&bytes), entries: c.len() })
        }
        None => None,
    };
    let manifest = Manifest {
        command,
        replay,
        started_at,
        finished_at: timestamp(),
        config: cfg.clone(),
        config_hash: cfg.hash(),
        backend_identity: gateway.backend_identity().to_string(),
        cache,
        versions: json!({"chartattrib": env!("CARGO_PKG_VERSION")}),
        samples: samples.iter().map(|s| s.sample_id.clone()).collect(),
        succeeded: succeeded.clone(),
        failed: failures.iter().map(|f| f.sample_id.clone()).collect(),
    };
    write_json(&run_dir.join(MANIFEST), &manifest)?;
    let name = run_dir.file_name().expect("run dir has a name").to_string_lossy().into_owned();
    write_atomic(&cfg.out.join(LATEST), format!("{name}\n").as_bytes())?;
    Ok(RunSummary { run_dir, succeeded, failures })
}

pub fn cmd_run(command: Command, paths: &[PathBuf], cfg: &PipelineConfig) -> Result<RunSummary, CliError> {
    let samples = load_samples(paths)?;
    let gateway = build_gateway(cfg, command)?;
    run_batch(command, &samples, &gateway, cfg, false)
}

/// Re-runs the command recorded with the cache, serving every model call
/// from it. Any miss aborts with the missing key.
pub fn cmd_replay(paths: &[PathBuf], cfg: &PipelineConfig, allow_config_change: bool) -> Result<RunSummary, CliError> {
    let cache_path = cfg.cache.as_ref().ok_or_else(|| CliError::Config("replay needs --cache".into()))?;
    if !cache_path.is_file() {
        return Err(CliError::io(cache_path, std::io::Error::new(std::io::ErrorKind::NotFound, "no transcript cache")));
    }
    let sidecar: CacheSidecar = read_json(&sidecar_path(cache_path))?;
    if sidecar.config_hash != cfg.hash() && !allow_config_change {
        return Err(CliError::Config(format!(
            "configuration differs from the recorded run (hash {} vs {}); pass --allow-config-change to replay anyway",
            cfg.hash(),
            sidecar.config_hash
        )));
    }
    let samples = load_samples(paths)?;
    let backend = OfflineBackend::new(sidecar.backend_identity.clone(), sidecar.vision);
    let gateway = Gateway::new(Arc::new(backend))
        .with_parallelism(cfg.parallelism)
        .with_cache(open_cache(cache_path)?)
        .offline();
    run_batch(sidecar.command, &samples, &gateway, cfg, true)
}
