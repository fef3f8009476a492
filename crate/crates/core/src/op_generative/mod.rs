//! Generative object prediction: render prompts, run a generator over them,
//! clean up the answers and score them with ROUGE.

mod bridge;

pub use bridge::{
    BridgeAddr, BridgeClient, GenerateRequest, GenerateResponse, PingRequest, PingResponse,
    ADDR_ENV,
};

use std::collections::{BTreeSet, HashMap};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event_store::{EventStoreError, Quintuple, Vocabulary};
use crate::metrics::{rouge, tokenize, RougeTriple};
use crate::prompting::{
    render_op_prompt, HistoryIndex, OpQuery, PromptConfig, PromptError, PromptVariant,
};

pub const ANSWER_ECHO: &str = "The correct object entity is:";

#[derive(Debug, Error)]
pub enum GenerationError {
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Vocabulary(#[from] EventStoreError),
    #[error("no examples to choose from")]
    NoExamples,
    #[error("transport: {0}")]
    Transport(String),
    #[error("protocol: {0}")]
    Protocol(String),
    #[error("bridge reported: {0}")]
    Remote(String),
    #[error("bad bridge address {0:?}")]
    BadAddress(String),
    #[error("results do not line up with tasks: {0}")]
    Misaligned(String),
    #[error("thread pool: {0}")]
    Pool(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationTask {
    pub uid: u64,
    pub prompt: String,
    /// The true object string.
    pub reference: String,
    pub variant: PromptVariant,
    pub query_text: String,
    /// In-context examples shown in the prompt, oldest first.
    pub examples: Vec<Quintuple>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Bridge,
    Baseline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResult {
    pub uid: u64,
    pub hypothesis: String,
    pub latency: Duration,
    pub source: Source,
    /// Set when the generator failed; the task then scores zero.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// One task per quintuple of `part`, with history drawn from `history`
/// (sorted by `(day, uid)`).
pub fn build_tasks(
    part: &[Quintuple],
    history: &[Quintuple],
    cfg: &PromptConfig,
    vocab: &Vocabulary,
) -> Result<Vec<GenerationTask>, GenerationError> {
    if cfg.variant == PromptVariant::Simple {
        return Err(PromptError::UnsupportedVariant(cfg.variant).into());
    }
    cfg.validate()?;
    let index = HistoryIndex::new(history);
    part.iter()
        .map(|q| {
            let query = OpQuery::from(q);
            let examples = index.select(&query, cfg);
            Ok(GenerationTask {
                uid: q.uid,
                prompt: render_op_prompt(&query, &examples, cfg, vocab)?,
                reference: vocab.entity(q.object)?.to_string(),
                variant: cfg.variant,
                query_text: q.text.clone(),
                examples,
            })
        })
        .collect()
}

fn unigram_f1(a: &[String], b: &[String]) -> f64 {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in a {
        *counts.entry(t.as_str()).or_default() += 1;
    }
    let mut overlap = 0usize;
    for t in b {
        if let Some(c) = counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    if overlap == 0 {
        return 0.0;
    }
    let p = overlap as f64 / b.len() as f64;
    let r = overlap as f64 / a.len() as f64;
    2.0 * p * r / (p + r)
}

/// Object of the example whose text best overlaps the query text (unigram
/// F1); ties go to the most recent example.
pub fn baseline_nearest_example(
    task: &GenerationTask,
    examples: &[Quintuple],
    vocab: &Vocabulary,
) -> Result<GenerationResult, GenerationError> {
    let start = Instant::now();
    let query = tokenize(&task.query_text);
    let mut best: Option<(f64, &Quintuple)> = None;
    for ex in examples {
        let score = unigram_f1(&query, &tokenize(&ex.text));
        // later examples are more recent; >= lets them win ties
        if best.is_none_or(|(s, _)| score >= s) {
            best = Some((score, ex));
        }
    }
    let (_, ex) = best.ok_or(GenerationError::NoExamples)?;
    Ok(GenerationResult {
        uid: task.uid,
        hypothesis: vocab.entity(ex.object)?.to_string(),
        latency: start.elapsed(),
        source: Source::Baseline,
        error: None,
    })
}

pub trait Generator: Sync {
    fn source(&self) -> Source;
    /// Raw text produced for one task.
    fn generate(&self, task: &GenerationTask) -> Result<String, GenerationError>;
}

/// Retrieval baseline over each task's own in-context examples.
pub struct Baseline<'a> {
    pub vocab: &'a Vocabulary,
}

impl Generator for Baseline<'_> {
    fn source(&self) -> Source {
        Source::Baseline
    }

    fn generate(&self, task: &GenerationTask) -> Result<String, GenerationError> {
        baseline_nearest_example(task, &task.examples, self.vocab).map(|r| r.hypothesis)
    }
}

/// Trim, keep the first line, and drop a leading echo of the answer cue.
pub fn postprocess(raw: &str) -> String {
    let first = raw.trim().lines().next().unwrap_or("").trim();
    first
        .strip_prefix(ANSWER_ECHO)
        .map_or(first, str::trim)
        .to_string()
}

/// Run `generator` over all tasks with up to `parallelism` requests in
/// flight. Failures are recorded per task and do not stop the run.
pub fn run_generation(
    tasks: &[GenerationTask],
    generator: &dyn Generator,
    parallelism: usize,
) -> Result<Vec<GenerationResult>, GenerationError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| GenerationError::Pool(e.to_string()))?;
    let source = generator.source();
    Ok(pool.install(|| {
        tasks
            .par_iter()
            .map(|t| {
                let start = Instant::now();
                let outcome = generator.generate(t);
                let latency = start.elapsed();
                match outcome {
                    Ok(raw) => GenerationResult {
                        uid: t.uid,
                        hypothesis: postprocess(&raw),
                        latency,
                        source,
                        error: None,
                    },
                    Err(e) => GenerationResult {
                        uid: t.uid,
                        hypothesis: String::new(),
                        latency,
                        source,
                        error: Some(e.to_string()),
                    },
                }
            })
            .collect()
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationScores {
    pub rouge1: f64,
    pub rouge2: f64,
    pub rouge_l: f64,
    pub tasks: usize,
    pub failed: usize,
    /// Per-task scores in task order.
    pub per_task: Vec<(u64, RougeTriple)>,
}

/// Macro-averaged ROUGE F1 over tasks; failed generations score zero.
pub fn evaluate_generation(
    results: &[GenerationResult],
    tasks: &[GenerationTask],
) -> Result<GenerationScores, GenerationError> {
    if results.len() != tasks.len() {
        return Err(GenerationError::Misaligned(format!(
            "{} results for {} tasks",
            results.len(),
            tasks.len()
        )));
    }
    let mut by_uid: HashMap<u64, &GenerationResult> = HashMap::new();
    for r in results {
        if by_uid.insert(r.uid, r).is_some() {
            return Err(GenerationError::Misaligned(format!("duplicate result uid {}", r.uid)));
        }
    }
    let mut seen = BTreeSet::new();
    let mut per_task = Vec::with_capacity(tasks.len());
    let mut failed = 0;
    for t in tasks {
        if !seen.insert(t.uid) {
            return Err(GenerationError::Misaligned(format!("duplicate task uid {}", t.uid)));
        }
        let r = by_uid
            .get(&t.uid)
            .ok_or_else(|| GenerationError::Misaligned(format!("no result for uid {}", t.uid)))?;
        let score = if r.error.is_some() {
            failed += 1;
            RougeTriple::default()
        } else {
            rouge(&t.reference, &r.hypothesis)
        };
        per_task.push((t.uid, score));
    }
    let n = tasks.len().max(1) as f64;
    let mean = |f: fn(&RougeTriple) -> f64| per_task.iter().map(|(_, s)| f(s)).sum::<f64>() / n;
    Ok(GenerationScores {
        rouge1: mean(|s| s.r1),
        rouge2: mean(|s| s.r2),
        rouge_l: mean(|s| s.rl),
        tasks: tasks.len(),
        failed,
        per_task,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn vocab() -> Vocabulary {
        Vocabulary::new(
            vec![
                "Police (India)".into(),
                "Citizen (India)".into(),
                "Militant (India)".into(),
                "Court (India)".into(),
            ],
            vec!["Arrest".into(), "Accuse".into()],
            NaiveDate::from_ymd_opt(2012, 1, 1).unwrap(),
        )
    }

    fn ex(uid: u64, object: usize, text: &str) -> Quintuple {
        Quintuple {
            subject: 0,
            relation: 0,
            object,
            day: uid as u32,
            text: text.into(),
            uid,
        }
    }

    fn task(query_text: &str, examples: Vec<Quintuple>) -> GenerationTask {
        GenerationTask {
            uid: 99,
            prompt: String::new(),
            reference: "Citizen (India)".into(),
            variant: PromptVariant::FewShot,
            query_text: query_text.into(),
            examples,
        }
    }

    #[test]
    fn identical_text_wins() {
        let exs = vec![
            ex(0, 1, "alpha beta"),
            ex(1, 2, "gamma delta"),
            ex(2, 3, "police raided a camp"),
            ex(3, 1, "epsilon"),
        ];
        let r = baseline_nearest_example(&task("police raided a camp", exs.clone()), &exs, &vocab())
            .unwrap();
        assert_eq!(r.hypothesis, "Court (India)");
    }

    #[test]
    fn zero_overlap_picks_most_recent() {
        let exs = vec![ex(0, 1, "a"), ex(1, 2, "b"), ex(2, 3, "c")];
        let r = baseline_nearest_example(&task("zzz", exs.clone()), &exs, &vocab()).unwrap();
        assert_eq!(r.hypothesis, "Court (India)");
        assert!(matches!(
            baseline_nearest_example(&task("x", vec![]), &[], &vocab()),
            Err(GenerationError::NoExamples)
        ));
    }

    #[test]
    fn overlap_arithmetic() {
        // query has 5 tokens; each example has 5 tokens sharing 1, 3 and 2
        let q = "a b c d e";
        let exs = vec![
            ex(0, 0, "a x y z w"),
            ex(1, 1, "a b c x y"),
            ex(2, 2, "a b x y z"),
        ];
        let toks = tokenize(q);
        let f: Vec<f64> = exs.iter().map(|e| unigram_f1(&toks, &tokenize(&e.text))).collect();
        for (got, want) in f.iter().zip([0.2, 0.6, 0.4]) {
            assert!((got - want).abs() < 1e-12);
        }
        let r = baseline_nearest_example(&task(q, exs.clone()), &exs, &vocab()).unwrap();
        assert_eq!(r.hypothesis, "Citizen (India)");
    }

    #[test]
    fn postprocess_contract() {
        assert_eq!(postprocess(" Police (India)\nextra"), "Police (India)");
        assert_eq!(postprocess("The correct object entity is: Court (India)"), "Court (India)");
        assert_eq!(postprocess("   \n"), "");
        assert_eq!(postprocess("\n\nCitizen (India)\n"), "Citizen (India)");
    }

    fn result(uid: u64, hyp: &str) -> GenerationResult {
        GenerationResult {
            uid,
            hypothesis: hyp.into(),
            latency: Duration::ZERO,
            source: Source::Baseline,
            error: None,
        }
    }

    fn tasks(refs: &[&str]) -> Vec<GenerationTask> {
        refs.iter()
            .enumerate()
            .map(|(i, r)| GenerationTask {
                uid: i as u64,
                reference: r.to_string(),
                ..task("", vec![])
            })
            .collect()
    }

    #[test]
    fn evaluation_averages() {
        let ts = tasks(&["police india", "court of india", "a b", "x y"]);
        let exact: Vec<_> = ts.iter().map(|t| result(t.uid, &t.reference)).collect();
        let s = evaluate_generation(&exact, &ts).unwrap();
        assert_eq!((s.rouge1, s.rouge2, s.rouge_l), (1.0, 1.0, 1.0));

        let half = vec![
            result(0, "police india"),
            result(1, "court of india"),
            result(2, "q r"),
            result(3, "s t"),
        ];
        let s = evaluate_generation(&half, &ts).unwrap();
        assert_eq!((s.rouge1, s.rouge2, s.rouge_l), (0.5, 0.5, 0.5));
        let mean_r1: f64 = s.per_task.iter().map(|(_, r)| r.r1).sum::<f64>() / 4.0;
        assert!((mean_r1 - s.rouge1).abs() <= 1e-12);
    }

    #[test]
    fn failures_score_zero_and_misalignment_errors() {
        let ts = tasks(&["a", "b"]);
        let mut rs = vec![result(0, "a"), result(1, "b")];
        rs[1].error = Some("timeout".into());
        let s = evaluate_generation(&rs, &ts).unwrap();
        assert_eq!(s.rouge1, 0.5);
        assert_eq!(s.failed, 1);
        assert!(evaluate_generation(&rs[..1], &ts).is_err());
        let swapped = vec![result(0, "a"), result(7, "b")];
        assert!(matches!(
            evaluate_generation(&swapped, &ts),
            Err(GenerationError::Misaligned(_))
        ));
    }

    #[test]
    fn baseline_runs_are_deterministic_and_ordered() {
        let v = vocab();
        let history: Vec<Quintuple> = (0..8)
            .map(|i| ex(i, (i % 4) as usize, &format!("report {} on police", i % 3)))
            .collect();
        let cfg = PromptConfig::default();
        let ts = build_tasks(&history[5..], &history, &cfg, &v).unwrap();
        assert_eq!(ts.len(), 3);
        assert_eq!(ts[0].reference, "Citizen (India)");
        let g = Baseline { vocab: &v };
        let a = run_generation(&ts, &g, 4).unwrap();
        let b = run_generation(&ts, &g, 1).unwrap();
        let strip = |rs: &[GenerationResult]| {
            rs.iter()
                .map(|r| (r.uid, r.hypothesis.clone()))
                .collect::<Vec<_>>()
        };
        assert_eq!(strip(&a), strip(&b));
        assert_eq!(a.iter().map(|r| r.uid).collect::<Vec<_>>(), vec![5, 6, 7]);

        let zs = build_tasks(
            &history[5..],
            &history,
            &PromptConfig::with_variant(PromptVariant::ZeroShot),
            &v,
        )
        .unwrap();
        assert!(zs.iter().all(|t| !t.prompt.contains("## Example")));
        let failed = run_generation(&zs, &g, 2).unwrap();
        assert!(failed.iter().all(|r| r.error.is_some()));
    }
}
