use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use leap_core::embedding::{embed_all, read_store, write_store, Provider};
use leap_core::event_store::{dataset_stats, Dataset, DatasetSplit, Format, Quintuple};
use leap_core::mef::{eval_mef, load_mef, write_predictions_csv};
use leap_core::metrics::{Report, DEFAULT_KS};
use leap_core::op_generative::{evaluate_generation, GenerationResult, GenerationTask};
use leap_core::op_ranking::{evaluate_op1, load_op1, History};
use leap_core::pipeline::{
    build_store, load_dataset, run_pipeline, split_dataset, write_report, DataConfig,
    GeneratorKind, ReportLayout, RunConfig, Task,
};
use leap_core::prompting::{build_prompt_records, write_prompts_jsonl, PromptConfig, PromptVariant};

#[derive(Parser, Debug)]
#[command(name = "leap", version, about = "Event forecasting with language-model prompts and embeddings")]
struct Cli {
    /// Worker threads for parallel stages.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse a dataset and print its vocabulary and day span.
    Ingest(DataArgs),
    /// Split a dataset chronologically and write the parts as TSV.
    Split {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Per-part statistics.
    Stats {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        json: bool,
    },
    /// Render prompts for one part as JSONL.
    Prompts {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value = "test")]
        part: Part,
        #[arg(long, default_value = "few_shot")]
        variant: PromptVariant,
        #[arg(long)]
        shots: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write test-encoder embeddings, or validate a store against a dataset.
    Embed {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 64)]
        dim: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, required_unless_present = "validate", conflicts_with = "validate")]
        out: Option<PathBuf>,
        /// Store file to check for full coverage of the dataset.
        #[arg(long)]
        validate: Option<PathBuf>,
    },
    /// Train and evaluate the ranking model.
    #[command(name = "train-op1", visible_alias = "op1")]
    TrainOp1(Op1Args),
    /// Evaluate a saved ranking checkpoint.
    #[command(name = "eval-op1")]
    EvalOp1 {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Generate answers for prompts and score them.
    #[command(name = "gen-op2", visible_alias = "op2")]
    GenOp2(Op2Args),
    /// Score saved generations against saved prompts.
    #[command(name = "eval-op2")]
    EvalOp2 {
        #[arg(long)]
        prompts: PathBuf,
        #[arg(long)]
        generations: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train and evaluate the multi-event forecaster.
    #[command(name = "train-mef", visible_alias = "mef")]
    TrainMef(MefArgs),
    /// Evaluate a saved forecaster checkpoint.
    #[command(name = "eval-mef")]
    EvalMef {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        no_attention: bool,
        #[arg(long)]
        predictions: Option<PathBuf>,
    },
    /// Print a report JSON file as a table.
    Report {
        input: PathBuf,
        #[arg(long, default_value = "table")]
        layout: Layout,
    },
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum Part {
    Train,
    Valid,
    Test,
    All,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum Layout {
    Json,
    Table,
}

#[derive(Args, Debug)]
struct DataArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "tsv")]
    format: Format,
    /// Train, valid and test day fractions, e.g. 0.8,0.1,0.1.
    #[arg(long, value_parser = parse_ratios, conflicts_with = "boundaries")]
    ratios: Option<[f64; 3]>,
    /// First validation day and first test day, e.g. 1545,1738.
    #[arg(long, value_parser = parse_boundaries)]
    boundaries: Option<[u32; 2]>,
}

impl DataArgs {
    fn config(&self) -> DataConfig {
        DataConfig {
            path: self.input.clone(),
            format: self.format,
            ratios: self.ratios,
            boundaries: self.boundaries,
        }
    }

    fn load(&self) -> Result<(Dataset, DatasetSplit)> {
        let data = load_dataset(&self.input, self.format)?;
        let split = split_dataset(&data, &self.config())?;
        Ok((data, split))
    }
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    format: Option<Format>,
    #[arg(long, value_parser = parse_ratios, conflicts_with = "boundaries")]
    ratios: Option<[f64; 3]>,
    #[arg(long, value_parser = parse_boundaries)]
    boundaries: Option<[u32; 2]>,
}

#[derive(Args, Debug)]
struct Op1Args {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    history_len: Option<usize>,
    #[arg(long)]
    entity_dim: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Drop the text channel from the decoder.
    #[arg(long)]
    no_text: bool,
}

#[derive(Args, Debug)]
struct Op2Args {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long)]
    variant: Option<PromptVariant>,
    #[arg(long)]
    shots: Option<usize>,
    #[arg(long)]
    generator: Option<GeneratorChoice>,
    /// Bridge endpoint; defaults to LEAP_BRIDGE_ADDR.
    #[arg(long)]
    bridge: Option<String>,
    #[arg(long)]
    parallelism: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, clap::ValueEnum)]
enum GeneratorChoice {
    Baseline,
    Bridge,
}

#[derive(Args, Debug)]
struct MefArgs {
    #[command(flatten)]
    run: RunArgs,
    /// History window in days.
    #[arg(long)]
    l3: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    model_dim: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    threshold: Option<f64>,
    /// Ablation without the self-attention layer.
    #[arg(long)]
    no_attention: bool,
}

fn parse_ratios(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    let r: [f64; 3] = parts
        .try_into()
        .map_err(|_| "expected three comma-separated numbers".to_string())?;
    if r.iter().any(|x| !(*x > 0.0)) {
        return Err("ratios must be positive".into());
    }
    Ok(r)
}

fn parse_boundaries(s: &str) -> Result<[u32; 2], String> {
    let parts: Vec<u32> = s
        .split(',')
        .map(|p| p.trim().parse::<u32>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    parts
        .try_into()
        .map_err(|_| "expected two comma-separated day numbers".to_string())
}

/// Read the config file and apply the shared flag overrides.
fn load_run(args: &RunArgs, task: Task, threads: usize) -> Result<RunConfig> {
    let mut cfg = RunConfig::from_file_for_task(&args.config, task)
        .with_context(|| format!("loading {}", args.config.display()))?;
    cfg.threads = threads;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(o) = &args.output_dir {
        cfg.output_dir = o.clone();
    }
    if let Some(i) = &args.input {
        cfg.data.path = i.clone();
    }
    if let Some(f) = args.format {
        cfg.data.format = f;
    }
    if let Some(r) = args.ratios {
        cfg.data.ratios = Some(r);
        cfg.data.boundaries = None;
    }
    if let Some(b) = args.boundaries {
        cfg.data.boundaries = Some(b);
        cfg.data.ratios = None;
    }
    Ok(cfg)
}

fn finish_run(cfg: RunConfig) -> Result<()> {
    let summary = run_pipeline(cfg)?;
    print!("{}", summary.report.to_table());
    println!("artifacts in {}", summary.output_dir.display());
    Ok(())
}

fn part(split: &DatasetSplit, which: Part) -> Vec<Quintuple> {
    match which {
        Part::Train => split.train.clone(),
        Part::Valid => split.valid.clone(),
        Part::Test => split.test.clone(),
        Part::All => split.all_sorted(),
    }
}

fn write_tsv(path: &Path, rows: &[Quintuple], data: &Dataset) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    for q in rows {
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}",
            data.vocab.entity(q.subject)?,
            data.vocab.relation(q.relation)?,
            data.vocab.entity(q.object)?,
            data.vocab.date_of(q.day),
            q.text
        )?;
    }
    w.flush()?;
    Ok(())
}

fn emit_report(report: &Report, out: Option<&Path>) -> Result<()> {
    print!("{}", report.to_table());
    if let Some(p) = out {
        write_report(report, ReportLayout::Json, p)?;
    }
    Ok(())
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    BufReader::new(f)
        .lines()
        .enumerate()
        .filter(|(_, l)| l.as_ref().map_or(true, |l| !l.trim().is_empty()))
        .map(|(i, l)| {
            let l = l?;
            serde_json::from_str(&l).with_context(|| format!("{}:{}", path.display(), i + 1))
        })
        .collect()
}

#[derive(serde::Deserialize)]
struct PromptLine {
    uid: u64,
    prompt: String,
    answer: String,
}

fn run(cli: Cli) -> Result<()> {
    let threads = cli.threads;
    if threads == 0 {
        bail!("--threads must be at least 1");
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .context("configuring the thread pool")?;
    match cli.command {
        Command::Ingest(args) => {
            let data = load_dataset(&args.input, args.format)?;
            let first = data.quintuples.iter().map(|q| q.day).min().unwrap_or(0);
            let last = data.quintuples.iter().map(|q| q.day).max().unwrap_or(0);
            println!(
                "{}",
                serde_json::json!({
                    "entities": data.vocab.num_entities(),
                    "relations": data.vocab.num_relations(),
                    "quintuples": data.quintuples.len(),
                    "first_date": data.vocab.date_of(first).to_string(),
                    "last_date": data.vocab.date_of(last).to_string(),
                })
            );
        }
        Command::Split { data, out_dir } => {
            let (ds, split) = data.load()?;
            fs::create_dir_all(&out_dir)?;
            for (name, rows) in [("train", &split.train), ("valid", &split.valid), ("test", &split.test)] {
                write_tsv(&out_dir.join(format!("{name}.tsv")), rows, &ds)?;
            }
            println!(
                "valid starts on day {}, test on day {}",
                split.boundary_days[0], split.boundary_days[1]
            );
        }
        Command::Stats { data, json } => {
            let (ds, split) = data.load()?;
            let stats = dataset_stats(&split, &ds.vocab);
            if json {
                println!("{}", serde_json::to_string_pretty(&stats)?);
            } else {
                println!("entities  {}", stats.entities);
                println!("relations {}", stats.relations);
                for (name, p) in [("train", &stats.train), ("valid", &stats.valid), ("test", &stats.test), ("total", &stats.total)] {
                    println!("{name:<6} quintuples {:>8} days {:>6}", p.quintuples, p.days);
                }
            }
        }
        Command::Prompts { data, part: which, variant, shots, out } => {
            let (ds, split) = data.load()?;
            let mut cfg = PromptConfig::with_variant(variant);
            if let Some(s) = shots {
                cfg.shots = s;
            }
            let records = build_prompt_records(&part(&split, which), &split.all_sorted(), &cfg, &ds.vocab)?;
            write_prompts_jsonl(&records, BufWriter::new(File::create(&out)?))?;
            println!("{} prompts written to {}", records.len(), out.display());
        }
        Command::Embed { data, dim, seed, out, validate } => {
            let (ds, split) = data.load()?;
            let all = split.all_sorted();
            if let Some(path) = validate {
                let store = read_store(BufReader::new(File::open(&path)?))
                    .with_context(|| format!("reading {}", path.display()))?;
                embed_all(&all, &ds.vocab, &Provider::Store(&store), &PromptConfig::default())?;
                println!("{}: {} vectors of dim {}, covers all {} quintuples", path.display(), store.len(), store.dim(), all.len());
            } else {
                let out = out.expect("clap requires --out without --validate");
                let store = embed_all(
                    &all,
                    &ds.vocab,
                    &Provider::TestEncoder { dim, seed },
                    &PromptConfig::with_variant(PromptVariant::Simple),
                )?;
                write_store(&store, BufWriter::new(File::create(&out)?))?;
                println!("{} vectors of dim {dim} written to {}", store.len(), out.display());
            }
        }
        Command::TrainOp1(a) => {
            let mut cfg = load_run(&a.run, Task::Op1, threads)?;
            if let Some(e) = a.epochs {
                cfg.op1.epochs = e;
            }
            if let Some(h) = a.history_len {
                cfg.op1.history_len = h;
            }
            if let Some(d) = a.entity_dim {
                cfg.op1.entity_dim = d;
            }
            if let Some(lr) = a.lr {
                cfg.op1.lr = lr;
            }
            if a.no_text {
                cfg.op1.use_text = false;
            }
            finish_run(cfg)?;
        }
        Command::EvalOp1 { run, checkpoint } => {
            let cfg = load_run(&run, Task::Op1, threads)?.finalize()?;
            let data = load_dataset(&cfg.data.path, cfg.data.format)?;
            let split = split_dataset(&data, &cfg.data)?;
            let state = load_op1(BufReader::new(File::open(&checkpoint)?))
                .with_context(|| format!("loading {}", checkpoint.display()))?;
            let store = if state.text_dim() > 0 {
                Some(build_store(&split, &data, &cfg.embedding, &cfg.prompt)?)
            } else {
                None
            };
            let history = History::new(&split.all_sorted());
            let res = evaluate_op1(&state, &history, &split.test, store.as_ref(), &cfg.op1)?;
            let report = Report::new("Object prediction, ranking (test part)").row(
                "op1",
                DEFAULT_KS.iter().map(|k| (format!("Hits@{k}"), res.hits[k])),
            );
            fs::create_dir_all(&cfg.output_dir)?;
            emit_report(&report, Some(&cfg.output_dir.join("eval_op1.json")))?;
        }
        Command::GenOp2(a) => {
            let mut cfg = load_run(&a.run, Task::Op2, threads)?;
            if let Some(v) = a.variant {
                cfg.prompt.variant = v;
            }
            if let Some(s) = a.shots {
                cfg.prompt.shots = s;
            }
            if a.generator == Some(GeneratorChoice::Baseline) && a.bridge.is_some() {
                bail!("--bridge conflicts with --generator baseline");
            }
            if let Some(g) = a.generator {
                cfg.generation.generator = match g {
                    GeneratorChoice::Baseline => GeneratorKind::Baseline,
                    GeneratorChoice::Bridge => GeneratorKind::Bridge,
                };
            }
            if let Some(b) = a.bridge {
                cfg.generation.generator = GeneratorKind::Bridge;
                cfg.generation.bridge_addr = Some(b);
            }
            if let Some(p) = a.parallelism {
                cfg.generation.parallelism = p;
            }
            finish_run(cfg)?;
        }
        Command::EvalOp2 { prompts, generations, out } => {
            let prompts: Vec<PromptLine> = read_jsonl(&prompts)?;
            let results: Vec<GenerationResult> = read_jsonl(&generations)?;
            let tasks: Vec<GenerationTask> = prompts
                .into_iter()
                .map(|p| GenerationTask {
                    uid: p.uid,
                    prompt: p.prompt,
                    reference: p.answer,
                    variant: PromptVariant::FewShot,
                    query_text: String::new(),
                    examples: Vec::new(),
                })
                .collect();
            let s = evaluate_generation(&results, &tasks)?;
            let report = Report::new("Object prediction, generative")
                .note(format!("{} tasks, {} failed generations scored 0", s.tasks, s.failed))
                .row("op2", [("ROUGE-1", s.rouge1), ("ROUGE-2", s.rouge2), ("ROUGE-L", s.rouge_l)]);
            emit_report(&report, out.as_deref())?;
        }
        Command::TrainMef(a) => {
            let mut cfg = load_run(&a.run, Task::Mef, threads)?;
            if let Some(l3) = a.l3 {
                cfg.mef.window = l3;
            }
            if let Some(e) = a.epochs {
                cfg.mef.epochs = e;
            }
            if let Some(d) = a.model_dim {
                cfg.mef.model_dim = d;
            }
            if let Some(lr) = a.lr {
                cfg.mef.lr = lr;
            }
            if let Some(t) = a.threshold {
                cfg.mef.threshold = t;
            }
            if a.no_attention {
                cfg.mef.use_attention = false;
            }
            finish_run(cfg)?;
        }
        Command::EvalMef { run, checkpoint, no_attention, predictions } => {
            let mut cfg = load_run(&run, Task::Mef, threads)?.finalize()?;
            let model = load_mef(BufReader::new(File::open(&checkpoint)?))
                .with_context(|| format!("loading {}", checkpoint.display()))?;
            if no_attention {
                cfg.mef.use_attention = false;
            }
            if model.attention.is_some() != cfg.mef.use_attention {
                bail!("checkpoint and --no-attention/config disagree about the attention layer");
            }
            let data = load_dataset(&cfg.data.path, cfg.data.format)?;
            let split = split_dataset(&data, &cfg.data)?;
            let store = build_store(&split, &data, &cfg.embedding, &cfg.prompt)?;
            let (eval, skipped) = eval_mef(&model, &split.test, &split.all_sorted(), &store, &cfg.mef)?;
            if let Some(p) = predictions {
                write_predictions_csv(&eval.days, BufWriter::new(File::create(&p)?))?;
            }
            let report = Report::new("Multi-event forecasting (test part)")
                .note("micro-averaged over days x relations")
                .note(format!("{skipped} target days skipped for empty windows"))
                .row(cfg.mef.tag(), [("F1", eval.prf.f1), ("Recall", eval.prf.recall), ("Precision", eval.prf.precision)]);
            fs::create_dir_all(&cfg.output_dir)?;
            emit_report(&report, Some(&cfg.output_dir.join("eval_mef.json")))?;
        }
        Command::Report { input, layout } => {
            let text = fs::read_to_string(&input).with_context(|| format!("reading {}", input.display()))?;
            let v: serde_json::Value = serde_json::from_str(&text)?;
            let report = Report::from_json(&v).context("not a report file")?;
            match layout {
                Layout::Table => print!("{}", report.to_table()),
                Layout::Json => println!("{}", serde_json::to_string_pretty(&report.to_json())?),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
