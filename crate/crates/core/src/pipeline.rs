//! Config-driven experiment runs: ingest, split, embed, train, evaluate, and
//! write every artifact plus a manifest that pins the run down.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::embedding::{
    embed_all, read_store, EmbeddingError, EmbeddingStore, Provider, ProviderConfig,
};
use crate::event_store::{
    chronological_split, dataset_stats, parse_dataset, split_at_boundaries, Dataset, DatasetSplit,
    EventStoreError, Format, StatsReport,
};
use crate::mef::{eval_mef, save_mef, train_mef, write_mef_log_csv, write_predictions_csv, MefConfig, MefError};
use crate::metrics::{Report, DEFAULT_KS};
use crate::op_generative::{
    build_tasks, evaluate_generation, run_generation, Baseline, BridgeAddr, BridgeClient,
    GenerationError, GenerationResult, Generator,
};
use crate::op_ranking::{evaluate_op1, save_op1, train_op1, write_metrics_csv, History, Op1Config, Op1Error};
use crate::prompting::{PromptConfig, PromptError};

pub const DEFAULT_RATIOS: [f64; 3] = [0.8, 0.1, 0.1];
pub const MANIFEST_FILE: &str = "manifest.json";
pub const METRICS_FILE: &str = "metrics.csv";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TABLE: &str = "report.txt";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
    #[error(transparent)]
    Events(#[from] EventStoreError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Op1(#[from] Op1Error),
    #[error(transparent)]
    Generation(#[from] GenerationError),
    #[error(transparent)]
    Mef(#[from] MefError),
    #[error("report has no results")]
    EmptyReport,
    #[error("thread pool: {0}")]
    Pool(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("{}: {source}", path.display())]
    File {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: &'static str,
        source: Box<PipelineError>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Op1,
    Op2,
    Mef,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Self::Op1 => "op1",
            Self::Op2 => "op2",
            Self::Mef => "mef",
        }
    }
}

impl std::str::FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "op1" => Ok(Self::Op1),
            "op2" => Ok(Self::Op2),
            "mef" => Ok(Self::Mef),
            other => Err(format!("unknown task {other:?} (expected op1, op2 or mef)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub path: PathBuf,
    #[serde(default = "default_format")]
    pub format: Format,
    /// Day fractions for train, valid and test.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratios: Option<[f64; 3]>,
    /// First validation day and first test day; excludes `ratios`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundaries: Option<[u32; 2]>,
}

fn default_format() -> Format {
    Format::Tsv
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum GeneratorKind {
    #[default]
    Baseline,
    Bridge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationConfig {
    pub generator: GeneratorKind,
    /// Falls back to the LEAP_BRIDGE_ADDR environment variable.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bridge_addr: Option<String>,
    pub timeout_secs: u64,
    pub parallelism: usize,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            generator: GeneratorKind::Baseline,
            bridge_addr: None,
            timeout_secs: 120,
            parallelism: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub task: Task,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_threads")]
    pub threads: usize,
    pub output_dir: PathBuf,
    pub data: DataConfig,
    #[serde(default)]
    pub prompt: PromptConfig,
    #[serde(default)]
    pub embedding: ProviderConfig,
    #[serde(default)]
    pub op1: Op1Config,
    #[serde(default)]
    pub mef: MefConfig,
    #[serde(default)]
    pub generation: GenerationConfig,
}

fn default_threads() -> usize {
    1
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        Ok(toml::from_str(text)?)
    }

    /// Parse a config file; relative paths inside it are taken relative to
    /// the file's directory.
    pub fn from_file(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path).map_err(|source| PipelineError::File {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.rebase(base);
        Ok(cfg)
    }

    /// Like [`RunConfig::from_file`] with the task chosen by the caller. A
    /// `task` key in the file must agree with it.
    pub fn from_file_for_task(path: &Path, task: Task) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path).map_err(|source| PipelineError::File {
            path: path.to_path_buf(),
            source,
        })?;
        let mut table: toml::Table = text.parse()?;
        let name = task.name();
        match table.get("task").map(|v| v.as_str()) {
            Some(Some(t)) if t != name => {
                return Err(PipelineError::Config(format!(
                    "config task {t:?} conflicts with requested task {name:?}"
                )))
            }
            Some(None) => return Err(PipelineError::Config("task must be a string".into())),
            _ => {}
        }
        table.insert("task".into(), name.into());
        let mut cfg: Self = table.try_into()?;
        cfg.rebase(path.parent().unwrap_or(Path::new("")));
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.data.path);
        fix(&mut self.output_dir);
        if let ProviderConfig::Store { path } = &mut self.embedding {
            let mut p = PathBuf::from(&*path);
            fix(&mut p);
            *path = p.to_string_lossy().into_owned();
        }
    }

    /// Copy the run seed into every module and check cross-field rules.
    pub fn finalize(mut self) -> Result<Self, PipelineError> {
        self.op1.seed = self.seed;
        self.mef.seed = self.seed;
        if self.threads == 0 {
            return Err(PipelineError::Config("threads must be at least 1".into()));
        }
        if self.data.ratios.is_some() && self.data.boundaries.is_some() {
            return Err(PipelineError::Config(
                "data.ratios and data.boundaries are mutually exclusive".into(),
            ));
        }
        if let Some(r) = self.data.ratios {
            if r.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
                return Err(PipelineError::Config(format!("ratios must be positive, got {r:?}")));
            }
        }
        if self.generation.parallelism == 0 {
            return Err(PipelineError::Config("generation.parallelism must be at least 1".into()));
        }
        self.op1.validate()?;
        self.mef.validate()?;
        self.prompt.validate()?;
        Ok(self)
    }

    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }
}

pub fn sha256_file(path: &Path) -> Result<String, PipelineError> {
    let bytes = fs::read(path).map_err(|source| PipelineError::File {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

pub fn load_dataset(path: &Path, format: Format) -> Result<Dataset, PipelineError> {
    let file = File::open(path).map_err(|source| PipelineError::File {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(parse_dataset(BufReader::new(file), format)?)
}

pub fn split_dataset(data: &Dataset, cfg: &DataConfig) -> Result<DatasetSplit, PipelineError> {
    match (cfg.ratios, cfg.boundaries) {
        (Some(_), Some(_)) => Err(PipelineError::Config(
            "data.ratios and data.boundaries are mutually exclusive".into(),
        )),
        (_, Some([v, t])) => Ok(split_at_boundaries(&data.quintuples, v, t)),
        (r, None) => Ok(chronological_split(&data.quintuples, r.unwrap_or(DEFAULT_RATIOS))?),
    }
}

/// Embeddings for every quintuple of `split`.
pub fn build_store(
    split: &DatasetSplit,
    data: &Dataset,
    provider: &ProviderConfig,
    prompt: &PromptConfig,
) -> Result<EmbeddingStore, PipelineError> {
    let all = split.all_sorted();
    match provider {
        ProviderConfig::Store { path } => {
            let file = File::open(path).map_err(|source| PipelineError::File {
                path: path.into(),
                source,
            })?;
            let src = read_store(BufReader::new(file))?;
            Ok(embed_all(&all, &data.vocab, &Provider::Store(&src), prompt)?)
        }
        &ProviderConfig::TestEncoder { dim, seed } => Ok(embed_all(
            &all,
            &data.vocab,
            &Provider::TestEncoder { dim, seed },
            prompt,
        )?),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportLayout {
    Json,
    Table,
}

/// Write `report` to `path`. Nothing is written for an empty report.
pub fn write_report(report: &Report, layout: ReportLayout, path: &Path) -> Result<(), PipelineError> {
    if report.rows.is_empty() || report.is_empty() {
        return Err(PipelineError::EmptyReport);
    }
    let body = match layout {
        ReportLayout::Json => {
            let mut s = serde_json::to_string_pretty(&report.to_json())?;
            s.push('\n');
            s
        }
        ReportLayout::Table => report.to_table(),
    };
    write_file(path, body.as_bytes())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    fs::write(path, bytes).map_err(|source| PipelineError::File {
        path: path.to_path_buf(),
        source,
    })
}

fn create(path: &Path) -> Result<BufWriter<File>, PipelineError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| PipelineError::File {
            path: path.to_path_buf(),
            source,
        })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub name: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputFile {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub task: Task,
    pub seed: u64,
    pub config_sha256: String,
    pub config: RunConfig,
    pub inputs: Vec<InputFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stats: Option<StatsReport>,
    /// Target days without any event in their history window.
    #[serde(default)]
    pub skipped_days: usize,
    pub artifacts: Vec<Artifact>,
    /// `complete`, or `failed` with the stage and error filled in.
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failed_stage: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub manifest: Manifest,
    pub report: Report,
    pub output_dir: PathBuf,
}

struct Run<'a> {
    cfg: &'a RunConfig,
    out: &'a Path,
    manifest: Manifest,
}

impl Run<'_> {
    fn stage<T>(
        &mut self,
        name: &'static str,
        f: impl FnOnce(&mut Self) -> Result<T, PipelineError>,
    ) -> Result<T, PipelineError> {
        f(self).map_err(|e| {
            self.manifest.status = "failed".into();
            self.manifest.failed_stage = Some(name.into());
            self.manifest.error = Some(e.to_string());
            PipelineError::Stage {
                stage: name,
                source: Box::new(e),
            }
        })
    }

    fn record(&mut self, name: &str) -> Result<(), PipelineError> {
        let sha256 = sha256_file(&self.out.join(name))?;
        self.manifest.artifacts.push(Artifact {
            name: name.into(),
            sha256,
        });
        Ok(())
    }

    fn write_manifest(&self) -> Result<(), PipelineError> {
        let mut s = serde_json::to_string_pretty(&self.manifest)?;
        s.push('\n');
        write_file(&self.out.join(MANIFEST_FILE), s.as_bytes())
    }
}

/// Execute one run; artifacts land in `cfg.output_dir`. The manifest is
/// written even when a stage fails.
pub fn run_pipeline(cfg: RunConfig) -> Result<RunSummary, PipelineError> {
    let cfg = cfg.finalize()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| PipelineError::Pool(e.to_string()))?;
    fs::create_dir_all(&cfg.output_dir).map_err(|source| PipelineError::File {
        path: cfg.output_dir.clone(),
        source,
    })?;
    let out = cfg.output_dir.clone();
    let mut run = Run {
        cfg: &cfg,
        out: &out,
        manifest: Manifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            task: cfg.task,
            seed: cfg.seed,
            config_sha256: cfg.hash(),
            config: cfg.clone(),
            inputs: Vec::new(),
            stats: None,
            skipped_days: 0,
            artifacts: Vec::new(),
            status: "running".into(),
            failed_stage: None,
            error: None,
        },
    };
    let result = pool.install(|| execute(&mut run));
    if result.is_ok() {
        run.manifest.status = "complete".into();
    }
    run.write_manifest()?;
    let report = result?;
    Ok(RunSummary {
        manifest: run.manifest,
        report,
        output_dir: out,
    })
}

fn execute(run: &mut Run<'_>) -> Result<Report, PipelineError> {
    let cfg = run.cfg;
    let data = run.stage("ingest", |r| {
        let sha256 = sha256_file(&cfg.data.path)?;
        r.manifest.inputs.push(InputFile {
            path: cfg.data.path.to_string_lossy().into_owned(),
            sha256,
        });
        if let ProviderConfig::Store { path } = &cfg.embedding {
            if cfg.task != Task::Op2 {
                let sha256 = sha256_file(Path::new(path))?;
                r.manifest.inputs.push(InputFile {
                    path: path.clone(),
                    sha256,
                });
            }
        }
        load_dataset(&cfg.data.path, cfg.data.format)
    })?;
    let split = run.stage("split", |r| {
        let split = split_dataset(&data, &cfg.data)?;
        r.manifest.stats = Some(dataset_stats(&split, &data.vocab));
        Ok(split)
    })?;
    let report = match cfg.task {
        Task::Op1 => run_op1(run, &data, &split)?,
        Task::Op2 => run_op2(run, &data, &split)?,
        Task::Mef => run_mef(run, &data, &split)?,
    };
    run.stage("report", |r| {
        write_report(&report, ReportLayout::Json, &r.out.join(REPORT_JSON))?;
        write_report(&report, ReportLayout::Table, &r.out.join(REPORT_TABLE))?;
        r.record(REPORT_JSON)?;
        r.record(REPORT_TABLE)
    })?;
    Ok(report)
}

fn evaluation_part(split: &DatasetSplit) -> Result<(&'static str, &[crate::event_store::Quintuple]), PipelineError> {
    if !split.test.is_empty() {
        Ok(("test", &split.test))
    } else if !split.valid.is_empty() {
        Ok(("valid", &split.valid))
    } else {
        Err(PipelineError::Config("split leaves no validation or test days to evaluate".into()))
    }
}

fn run_op1(run: &mut Run<'_>, data: &Dataset, split: &DatasetSplit) -> Result<Report, PipelineError> {
    let cfg = run.cfg;
    let store = if cfg.op1.use_text {
        Some(run.stage("embed", |_| build_store(split, data, &cfg.embedding, &cfg.prompt))?)
    } else {
        None
    };
    let outcome = run.stage("train", |r| {
        let outcome = train_op1(split, &data.vocab, store.as_ref(), &cfg.op1)?;
        write_metrics_csv(&outcome.log, create(&r.out.join(METRICS_FILE))?)?;
        save_op1(&outcome.state, create(&r.out.join("op1.ckpt"))?)?;
        r.record(METRICS_FILE)?;
        r.record("op1.ckpt")?;
        Ok(outcome)
    })?;
    run.stage("evaluate", |_| {
        let (part_name, part) = evaluation_part(split)?;
        let history = History::new(&split.all_sorted());
        let res = evaluate_op1(&outcome.state, &history, part, store.as_ref(), &cfg.op1)?;
        Ok(Report::new(format!("Object prediction, ranking ({part_name} part)"))
            .note(format!("best epoch {}", outcome.best_epoch))
            .row(
                "op1",
                DEFAULT_KS
                    .iter()
                    .map(|k| (format!("Hits@{k}"), res.hits[k])),
            ))
    })
}

fn generator_for<'a>(
    cfg: &GenerationConfig,
    vocab: &'a crate::event_store::Vocabulary,
) -> Result<Box<dyn Generator + 'a>, PipelineError> {
    Ok(match cfg.generator {
        GeneratorKind::Baseline => Box::new(Baseline { vocab }),
        GeneratorKind::Bridge => {
            let addr = match &cfg.bridge_addr {
                Some(a) => a.parse()?,
                None => BridgeAddr::from_env()?,
            };
            let client = BridgeClient::new(addr, Duration::from_secs(cfg.timeout_secs));
            client.ping()?;
            Box::new(client)
        }
    })
}

fn run_op2(run: &mut Run<'_>, data: &Dataset, split: &DatasetSplit) -> Result<Report, PipelineError> {
    let cfg = run.cfg;
    let (part_name, part) = evaluation_part(split)?;
    let tasks = run.stage("prompts", |r| {
        let tasks = build_tasks(part, &split.all_sorted(), &cfg.prompt, &data.vocab)?;
        let mut w = create(&r.out.join("prompts.jsonl"))?;
        for t in &tasks {
            serde_json::to_writer(&mut w, &serde_json::json!({"uid": t.uid, "prompt": t.prompt, "answer": t.reference}))?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        r.record("prompts.jsonl")?;
        Ok(tasks)
    })?;
    let results = run.stage("generate", |r| {
        let generator = generator_for(&cfg.generation, &data.vocab)?;
        let results = run_generation(&tasks, generator.as_ref(), cfg.generation.parallelism)?;
        write_generations(&results, &r.out.join("generations.jsonl"))?;
        Ok(results)
    })?;
    run.stage("evaluate", |r| {
        let scores = evaluate_generation(&results, &tasks)?;
        let mut w = csv::Writer::from_writer(create(&r.out.join(METRICS_FILE))?);
        w.write_record(["uid", "rouge1", "rouge2", "rouge_l"])?;
        for (uid, s) in &scores.per_task {
            w.write_record([
                uid.to_string(),
                format!("{:.6}", s.r1),
                format!("{:.6}", s.r2),
                format!("{:.6}", s.rl),
            ])?;
        }
        w.flush()?;
        drop(w);
        r.record(METRICS_FILE)?;
        let method = format!(
            "op2 {} ({})",
            cfg.prompt.variant,
            match cfg.generation.generator {
                GeneratorKind::Baseline => "baseline",
                GeneratorKind::Bridge => "bridge",
            }
        );
        Ok(Report::new(format!("Object prediction, generative ({part_name} part)"))
            .note(format!("{} tasks, {} failed generations scored 0", scores.tasks, scores.failed))
            .row(
                method,
                [
                    ("ROUGE-1", scores.rouge1),
                    ("ROUGE-2", scores.rouge2),
                    ("ROUGE-L", scores.rouge_l),
                ],
            ))
    })
}

fn write_generations(results: &[GenerationResult], path: &Path) -> Result<(), PipelineError> {
    let mut w = create(path)?;
    for r in results {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn run_mef(run: &mut Run<'_>, data: &Dataset, split: &DatasetSplit) -> Result<Report, PipelineError> {
    let cfg = run.cfg;
    let store = run.stage("embed", |_| build_store(split, data, &cfg.embedding, &cfg.prompt))?;
    let nr = data.vocab.num_relations();
    let outcome = run.stage("train", |r| {
        let outcome = train_mef(split, &store, nr, &cfg.mef)?;
        write_mef_log_csv(&outcome.log, create(&r.out.join(METRICS_FILE))?)?;
        save_mef(&outcome.model, create(&r.out.join("mef.ckpt"))?)?;
        r.record(METRICS_FILE)?;
        r.record("mef.ckpt")?;
        Ok(outcome)
    })?;
    run.stage("evaluate", |r| {
        let (part_name, part) = evaluation_part(split)?;
        let (eval, skipped) = eval_mef(&outcome.model, part, &split.all_sorted(), &store, &cfg.mef)?;
        r.manifest.skipped_days = outcome.skipped_days + skipped;
        write_predictions_csv(&eval.days, create(&r.out.join("predictions.csv"))?)?;
        r.record("predictions.csv")?;
        Ok(Report::new(format!("Multi-event forecasting ({part_name} part)"))
            .note("micro-averaged over days x relations")
            .note(format!(
                "{} target days skipped for empty windows",
                r.manifest.skipped_days
            ))
            .row(
                cfg.mef.tag(),
                [
                    ("F1", eval.prf.f1),
                    ("Recall", eval.prf.recall),
                    ("Precision", eval.prf.precision),
                ],
            ))
    })
}
