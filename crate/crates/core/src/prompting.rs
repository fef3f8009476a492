//! Prompt rendering for generative object prediction and for the quintuple
//! encoder, plus selection of in-context history.

use std::collections::HashMap;
use std::io::Write;

use chrono::format::{Item, StrftimeItems};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event_store::{EventStoreError, Quintuple, Vocabulary, DATE_FORMAT};

pub const MISSING_OBJECT: &str = "⟨MISSING OBJECT ENTITY⟩";
pub const DEFAULT_SHOTS: usize = 5;

const PREAMBLE_REST: &str = "Each example is a knowledge quintuple containing two entities, a relation, a timestamp, and a brief text summary. Each knowledge quintuple is strictly formatted as (subject entity, relation, object entity, timestamp, text summary). For the object prediction task, you should predict the missing object entity based on the other four available elements.";
const QUERY_HEADER: &str = "Now I give you a query:";
const CLOSING: &str = "Please predict the missing object entity. You are allowed to predict new object entity which you have never seen in examples. The correct object entity is:";

#[derive(Debug, Error)]
pub enum PromptError {
    #[error(transparent)]
    UnknownId(#[from] EventStoreError),
    #[error("variant {0:?} cannot render an object prediction prompt")]
    UnsupportedVariant(PromptVariant),
    #[error("{got} examples supplied but the config allows {allowed}")]
    TooManyExamples { got: usize, allowed: usize },
    #[error("invalid date pattern {0:?}")]
    BadDatePattern(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptVariant {
    FewShot,
    ZeroShot,
    NoText,
    Simple,
}

impl std::fmt::Display for PromptVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::FewShot => "few_shot",
            Self::ZeroShot => "zero_shot",
            Self::NoText => "no_text",
            Self::Simple => "simple",
        })
    }
}

impl std::str::FromStr for PromptVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "few_shot" => Ok(Self::FewShot),
            "zero_shot" => Ok(Self::ZeroShot),
            "no_text" => Ok(Self::NoText),
            "simple" => Ok(Self::Simple),
            other => Err(format!("unknown prompt variant {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HistoryScope {
    SameSubjectFirst,
    GlobalRecent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptConfig {
    pub variant: PromptVariant,
    pub shots: usize,
    pub history_scope: HistoryScope,
    /// strftime pattern used for timestamps.
    pub date_format: String,
}

impl Default for PromptConfig {
    fn default() -> Self {
        Self {
            variant: PromptVariant::FewShot,
            shots: DEFAULT_SHOTS,
            history_scope: HistoryScope::SameSubjectFirst,
            date_format: DATE_FORMAT.to_string(),
        }
    }
}

impl PromptConfig {
    pub fn with_variant(variant: PromptVariant) -> Self {
        Self {
            variant,
            ..Self::default()
        }
    }

    /// Number of in-context examples actually used.
    pub fn effective_shots(&self) -> usize {
        match self.variant {
            PromptVariant::ZeroShot | PromptVariant::Simple => 0,
            _ => self.shots,
        }
    }

    pub fn validate(&self) -> Result<(), PromptError> {
        if StrftimeItems::new(&self.date_format).any(|i| matches!(i, Item::Error)) {
            return Err(PromptError::BadDatePattern(self.date_format.clone()));
        }
        Ok(())
    }
}

/// A query with the object hidden.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpQuery {
    pub subject: usize,
    pub relation: usize,
    pub day: u32,
    pub text: String,
    /// Record id; history must be strictly earlier in `(day, uid)` order.
    pub uid: u64,
    pub true_object: Option<usize>,
}

impl From<&Quintuple> for OpQuery {
    fn from(q: &Quintuple) -> Self {
        Self {
            subject: q.subject,
            relation: q.relation,
            day: q.day,
            text: q.text.clone(),
            uid: q.uid,
            true_object: Some(q.object),
        }
    }
}

/// Per-subject position lists over a `(day, uid)`-sorted slice, so history
/// lookups do not rescan the whole dataset.
pub struct HistoryIndex<'a> {
    data: &'a [Quintuple],
    by_subject: HashMap<usize, Vec<usize>>,
}

impl<'a> HistoryIndex<'a> {
    /// `data` must be sorted by `(day, uid)`.
    pub fn new(data: &'a [Quintuple]) -> Self {
        debug_assert!(data.windows(2).all(|w| w[0].key() < w[1].key()));
        let mut by_subject: HashMap<usize, Vec<usize>> = HashMap::new();
        for (i, q) in data.iter().enumerate() {
            by_subject.entry(q.subject).or_default().push(i);
        }
        Self { data, by_subject }
    }

    pub fn select(&self, query: &OpQuery, cfg: &PromptConfig) -> Vec<Quintuple> {
        let shots = cfg.effective_shots();
        if shots == 0 {
            return Vec::new();
        }
        let key = (query.day, query.uid);
        let end = self.data.partition_point(|q| q.key() < key);

        let mut picked: Vec<usize> = Vec::with_capacity(shots);
        if cfg.history_scope == HistoryScope::SameSubjectFirst {
            if let Some(pos) = self.by_subject.get(&query.subject) {
                let cut = pos.partition_point(|&p| p < end);
                picked.extend(pos[..cut].iter().rev().take(shots));
            }
        }
        if picked.len() < shots {
            let mut same = picked.clone();
            same.sort_unstable();
            let mut i = end;
            while i > 0 && picked.len() < shots {
                i -= 1;
                if same.binary_search(&i).is_err() {
                    picked.push(i);
                }
            }
        }
        picked.sort_unstable();
        picked.into_iter().map(|i| self.data[i].clone()).collect()
    }
}

/// Up to `cfg.shots` quintuples strictly earlier than the query, oldest first.
/// Under `SameSubjectFirst`, quintuples with the query subject are taken first
/// and the remainder is filled with the most recent other events.
pub fn select_history_examples(
    query: &OpQuery,
    data: &[Quintuple],
    cfg: &PromptConfig,
) -> Vec<Quintuple> {
    HistoryIndex::new(data).select(query, cfg)
}

fn count_word(n: usize) -> String {
    const WORDS: [&str; 21] = [
        "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
        "eleven", "twelve", "thirteen", "fourteen", "fifteen", "sixteen", "seventeen", "eighteen",
        "nineteen", "twenty",
    ];
    WORDS.get(n).map_or_else(|| n.to_string(), |w| w.to_string())
}

fn examples_phrase(n: usize) -> String {
    if n == 1 {
        "one example".to_string()
    } else {
        format!("{} examples", count_word(n))
    }
}

fn preamble(n: usize) -> String {
    if n == 0 {
        format!("I ask you to perform an object prediction task. {PREAMBLE_REST}")
    } else {
        format!(
            "I ask you to perform an object prediction task after I provide you with {}. {PREAMBLE_REST}",
            examples_phrase(n)
        )
    }
}

fn render_date(vocab: &Vocabulary, day: u32, cfg: &PromptConfig) -> Result<String, PromptError> {
    cfg.validate()?;
    Ok(vocab.date_of(day).format(&cfg.date_format).to_string())
}

fn tuple_line(
    vocab: &Vocabulary,
    subject: usize,
    relation: usize,
    day: u32,
    text: &str,
    cfg: &PromptConfig,
) -> Result<String, PromptError> {
    let mut line = format!(
        "({}, {}, {MISSING_OBJECT}, {}",
        vocab.entity(subject)?,
        vocab.relation(relation)?,
        render_date(vocab, day, cfg)?
    );
    if cfg.variant != PromptVariant::NoText {
        line.push_str(", ");
        line.push_str(text);
    }
    line.push(')');
    Ok(line)
}

/// Render the object prediction prompt for the few-shot, zero-shot or
/// no-text variant.
pub fn render_op_prompt(
    query: &OpQuery,
    examples: &[Quintuple],
    cfg: &PromptConfig,
    vocab: &Vocabulary,
) -> Result<String, PromptError> {
    if cfg.variant == PromptVariant::Simple {
        return Err(PromptError::UnsupportedVariant(cfg.variant));
    }
    let allowed = cfg.effective_shots();
    if examples.len() > allowed {
        return Err(PromptError::TooManyExamples {
            got: examples.len(),
            allowed,
        });
    }

    let n = examples.len();
    let mut out = preamble(n);
    out.push('\n');
    if cfg.variant != PromptVariant::ZeroShot {
        out.push_str(&format!("Now I give you {}.\n", examples_phrase(n)));
    }
    for (k, ex) in examples.iter().enumerate() {
        out.push_str(&format!("## Example {}\n", k + 1));
        out.push_str(&tuple_line(vocab, ex.subject, ex.relation, ex.day, &ex.text, cfg)?);
        out.push('\n');
        out.push_str(&format!(
            "The {MISSING_OBJECT} is: {}\n\n",
            vocab.entity(ex.object)?
        ));
    }
    out.push_str(QUERY_HEADER);
    out.push('\n');
    out.push_str(&tuple_line(
        vocab,
        query.subject,
        query.relation,
        query.day,
        &query.text,
        cfg,
    )?);
    out.push('\n');
    out.push_str(CLOSING);
    Ok(out)
}

/// Five-line template used to feed single quintuples to the encoder.
pub fn render_simple_prompt(
    q: &Quintuple,
    vocab: &Vocabulary,
    cfg: &PromptConfig,
) -> Result<String, PromptError> {
    Ok(format!(
        "Subject: {};\nRelation: {};\nObject: {};\nTimestamp: {};\nText Summary: {}",
        vocab.entity(q.subject)?,
        vocab.relation(q.relation)?,
        vocab.entity(q.object)?,
        render_date(vocab, q.day, cfg)?,
        q.text
    ))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub uid: u64,
    pub prompt: String,
    pub answer: String,
}

/// Render one prompt per query. `history` is the `(day, uid)`-sorted pool that
/// examples are drawn from.
pub fn build_prompt_records(
    queries: &[Quintuple],
    history: &[Quintuple],
    cfg: &PromptConfig,
    vocab: &Vocabulary,
) -> Result<Vec<PromptRecord>, PromptError> {
    cfg.validate()?;
    let index = HistoryIndex::new(history);
    queries
        .iter()
        .map(|q| {
            let prompt = if cfg.variant == PromptVariant::Simple {
                render_simple_prompt(q, vocab, cfg)?
            } else {
                let query = OpQuery::from(q);
                let examples = index.select(&query, cfg);
                render_op_prompt(&query, &examples, cfg, vocab)?
            };
            Ok(PromptRecord {
                uid: q.uid,
                prompt,
                answer: vocab.entity(q.object)?.to_string(),
            })
        })
        .collect()
}

pub fn write_prompts_jsonl<W: Write>(records: &[PromptRecord], mut out: W) -> Result<(), PromptError> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}
