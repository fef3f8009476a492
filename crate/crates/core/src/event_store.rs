//! Quintuple event datasets: parsing, vocabularies, chronological splits,
//! per-day graphs and summary statistics.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, Write};

use chrono::{Days, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DATE_FORMAT: &str = "%Y-%m-%d";

#[derive(Debug, Error)]
pub enum EventStoreError {
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("line {line}: unparseable date {value:?}")]
    BadDate { line: usize, value: String },
    #[error("line {line}: empty {field} field")]
    EmptyField { line: usize, field: &'static str },
    #[error("need at least 3 distinct days to split, found {0}")]
    TooFewDays(usize),
    #[error("split ratios must be positive and finite, got {0:?}")]
    BadRatios([f64; 3]),
    #[error("record {uid}: text contains a tab or newline and cannot be written as TSV")]
    UnwritableText { uid: u64 },
    #[error("unknown {kind} id {id}")]
    UnknownId { kind: &'static str, id: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One event: `(subject, relation, object, day, text)` plus a record id.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Quintuple {
    pub subject: usize,
    pub relation: usize,
    pub object: usize,
    /// Days since the dataset epoch.
    pub day: u32,
    pub text: String,
    pub uid: u64,
}

impl Quintuple {
    /// Chronological sort key.
    pub fn key(&self) -> (u32, u64) {
        (self.day, self.uid)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct Interner {
    items: Vec<String>,
    index: HashMap<String, usize>,
}

impl Interner {
    fn from_items(items: Vec<String>) -> Self {
        let index = items
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
        Self { items, index }
    }

    fn intern(&mut self, s: &str) -> usize {
        if let Some(&i) = self.index.get(s) {
            return i;
        }
        let i = self.items.len();
        self.items.push(s.to_string());
        self.index.insert(s.to_string(), i);
        i
    }
}

/// Bidirectional id ↔ string maps for entities and relations, plus the
/// calendar date that day index 0 refers to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "VocabularyRepr", into = "VocabularyRepr")]
pub struct Vocabulary {
    entities: Interner,
    relations: Interner,
    epoch: NaiveDate,
}

#[derive(Serialize, Deserialize)]
struct VocabularyRepr {
    epoch: NaiveDate,
    entities: Vec<String>,
    relations: Vec<String>,
}

impl From<VocabularyRepr> for Vocabulary {
    fn from(r: VocabularyRepr) -> Self {
        Self {
            entities: Interner::from_items(r.entities),
            relations: Interner::from_items(r.relations),
            epoch: r.epoch,
        }
    }
}

impl From<Vocabulary> for VocabularyRepr {
    fn from(v: Vocabulary) -> Self {
        Self {
            epoch: v.epoch,
            entities: v.entities.items,
            relations: v.relations.items,
        }
    }
}

impl Vocabulary {
    pub fn new(entities: Vec<String>, relations: Vec<String>, epoch: NaiveDate) -> Self {
        Self {
            entities: Interner::from_items(entities),
            relations: Interner::from_items(relations),
            epoch,
        }
    }

    pub fn num_entities(&self) -> usize {
        self.entities.items.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.items.len()
    }

    pub fn entities(&self) -> &[String] {
        &self.entities.items
    }

    pub fn relations(&self) -> &[String] {
        &self.relations.items
    }

    pub fn entity(&self, id: usize) -> Result<&str, EventStoreError> {
        self.entities
            .items
            .get(id)
            .map(String::as_str)
            .ok_or(EventStoreError::UnknownId { kind: "entity", id })
    }

    pub fn relation(&self, id: usize) -> Result<&str, EventStoreError> {
        self.relations
            .items
            .get(id)
            .map(String::as_str)
            .ok_or(EventStoreError::UnknownId { kind: "relation", id })
    }

    pub fn entity_index(&self, name: &str) -> Option<usize> {
        self.entities.index.get(name).copied()
    }

    pub fn relation_index(&self, name: &str) -> Option<usize> {
        self.relations.index.get(name).copied()
    }

    pub fn epoch(&self) -> NaiveDate {
        self.epoch
    }

    pub fn date_of(&self, day: u32) -> NaiveDate {
        self.epoch + Days::new(day as u64)
    }
}

/// A parsed dataset: vocabulary plus quintuples in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub vocab: Vocabulary,
    pub quintuples: Vec<Quintuple>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Tsv,
    Jsonl,
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tsv" => Ok(Self::Tsv),
            "jsonl" => Ok(Self::Jsonl),
            other => Err(format!("unknown dataset format {other:?} (expected tsv or jsonl)")),
        }
    }
}

struct RawRecord {
    line: usize,
    subject: String,
    relation: String,
    object: String,
    date: NaiveDate,
    text: String,
}

#[derive(Deserialize)]
struct JsonRecord {
    subject: String,
    relation: String,
    object: String,
    date: String,
    #[serde(default)]
    text: Option<String>,
}

fn parse_date(line: usize, s: &str) -> Result<NaiveDate, EventStoreError> {
    NaiveDate::parse_from_str(s.trim(), DATE_FORMAT).map_err(|_| EventStoreError::BadDate {
        line,
        value: s.to_string(),
    })
}

fn check_nonempty(line: usize, field: &'static str, s: &str) -> Result<(), EventStoreError> {
    if s.is_empty() {
        Err(EventStoreError::EmptyField { line, field })
    } else {
        Ok(())
    }
}

fn parse_line(line_no: usize, line: &str, format: Format) -> Result<RawRecord, EventStoreError> {
    let (subject, relation, object, date, text) = match format {
        Format::Tsv => {
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 4 && cols.len() != 5 {
                return Err(EventStoreError::Malformed {
                    line: line_no,
                    reason: format!("expected 5 tab-separated fields, found {}", cols.len()),
                });
            }
            (
                cols[0].to_string(),
                cols[1].to_string(),
                cols[2].to_string(),
                cols[3].to_string(),
                cols.get(4).map_or(String::new(), |s| s.to_string()),
            )
        }
        Format::Jsonl => {
            let r: JsonRecord =
                serde_json::from_str(line).map_err(|e| EventStoreError::Malformed {
                    line: line_no,
                    reason: e.to_string(),
                })?;
            (r.subject, r.relation, r.object, r.date, r.text.unwrap_or_default())
        }
    };
    check_nonempty(line_no, "subject", &subject)?;
    check_nonempty(line_no, "relation", &relation)?;
    check_nonempty(line_no, "object", &object)?;
    let date = parse_date(line_no, &date)?;
    Ok(RawRecord {
        line: line_no,
        subject,
        relation,
        object,
        date,
        text,
    })
}

/// Parse a TSV or JSONL event file.
///
/// Vocabularies are built in first-appearance order (subject before object
/// within a record), day indices are relative to the earliest date, and uids
/// are assigned `0..N` in file order. Blank lines are skipped.
pub fn parse_dataset<R: BufRead>(source: R, format: Format) -> Result<Dataset, EventStoreError> {
    let mut raw = Vec::new();
    for (i, line) in source.lines().enumerate() {
        let line = line?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.trim().is_empty() {
            continue;
        }
        raw.push(parse_line(i + 1, line, format)?);
    }
    let epoch = raw
        .iter()
        .map(|r| r.date)
        .min()
        .unwrap_or(NaiveDate::from_ymd_opt(1970, 1, 1).expect("valid date"));

    let mut entities = Interner::default();
    let mut relations = Interner::default();
    let mut quintuples = Vec::with_capacity(raw.len());
    for (uid, r) in raw.into_iter().enumerate() {
        let subject = entities.intern(&r.subject);
        let relation = relations.intern(&r.relation);
        let object = entities.intern(&r.object);
        let day = u32::try_from((r.date - epoch).num_days()).map_err(|_| {
            EventStoreError::Malformed {
                line: r.line,
                reason: "date too far from the dataset epoch".into(),
            }
        })?;
        quintuples.push(Quintuple {
            subject,
            relation,
            object,
            day,
            text: r.text,
            uid: uid as u64,
        });
    }
    Ok(Dataset {
        vocab: Vocabulary {
            entities,
            relations,
            epoch,
        },
        quintuples,
    })
}

/// Write quintuples back as 5-column TSV.
pub fn write_tsv<W: Write>(
    vocab: &Vocabulary,
    data: &[Quintuple],
    mut out: W,
) -> Result<(), EventStoreError> {
    for q in data {
        if q.text.contains(['\t', '\n', '\r']) {
            return Err(EventStoreError::UnwritableText { uid: q.uid });
        }
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            vocab.entity(q.subject)?,
            vocab.relation(q.relation)?,
            vocab.entity(q.object)?,
            vocab.date_of(q.day).format(DATE_FORMAT),
            q.text
        )?;
    }
    Ok(())
}

/// Train/valid/test partition by day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<Quintuple>,
    pub valid: Vec<Quintuple>,
    pub test: Vec<Quintuple>,
    /// First day of the validation part and first day of the test part.
    pub boundary_days: [u32; 2],
}

impl DatasetSplit {
    pub fn parts(&self) -> [(&'static str, &[Quintuple]); 3] {
        [
            ("train", &self.train),
            ("valid", &self.valid),
            ("test", &self.test),
        ]
    }

    pub fn part(&self, name: &str) -> Option<&[Quintuple]> {
        match name {
            "train" => Some(&self.train),
            "valid" => Some(&self.valid),
            "test" => Some(&self.test),
            _ => None,
        }
    }

    /// All quintuples in chronological `(day, uid)` order.
    pub fn all_sorted(&self) -> Vec<Quintuple> {
        let mut all: Vec<Quintuple> = self
            .train
            .iter()
            .chain(&self.valid)
            .chain(&self.test)
            .cloned()
            .collect();
        all.sort_by_key(Quintuple::key);
        all
    }
}

/// Split by explicit boundaries: days `< valid_start` train, days in
/// `[valid_start, test_start)` valid, the rest test. Input order is kept
/// within each part.
pub fn split_at_boundaries(data: &[Quintuple], valid_start: u32, test_start: u32) -> DatasetSplit {
    let mut split = DatasetSplit {
        train: Vec::new(),
        valid: Vec::new(),
        test: Vec::new(),
        boundary_days: [valid_start, test_start.max(valid_start)],
    };
    for q in data {
        let part = if q.day < valid_start {
            &mut split.train
        } else if q.day < test_start {
            &mut split.valid
        } else {
            &mut split.test
        };
        part.push(q.clone());
    }
    split
}

/// Number of distinct days given to (train, valid, test).
///
/// Train and valid receive `round(n · ratio / Σratios)` days and test the
/// remainder; every part keeps at least one day.
pub fn split_day_counts(n_days: usize, ratios: [f64; 3]) -> Result<[usize; 3], EventStoreError> {
    if ratios.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
        return Err(EventStoreError::BadRatios(ratios));
    }
    if n_days < 3 {
        return Err(EventStoreError::TooFewDays(n_days));
    }
    let total: f64 = ratios.iter().sum();
    let n = n_days as f64;
    let train = ((n * ratios[0] / total).round() as usize).clamp(1, n_days - 2);
    let valid = ((n * ratios[1] / total).round() as usize).clamp(1, n_days - train - 1);
    Ok([train, valid, n_days - train - valid])
}

/// Chronological split over the distinct observed days.
pub fn chronological_split(
    data: &[Quintuple],
    ratios: [f64; 3],
) -> Result<DatasetSplit, EventStoreError> {
    let days: Vec<u32> = data
        .iter()
        .map(|q| q.day)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let [train, valid, _] = split_day_counts(days.len(), ratios)?;
    Ok(split_at_boundaries(data, days[train], days[train + valid]))
}

/// Edges observed on one day.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DailyGraph {
    pub day: u32,
    /// `(subject, relation, object, uid)` in input order.
    pub edges: Vec<(usize, usize, usize, u64)>,
}

/// One graph per distinct day, ascending.
pub fn group_by_day(data: &[Quintuple]) -> Vec<DailyGraph> {
    let mut by_day: BTreeMap<u32, Vec<(usize, usize, usize, u64)>> = BTreeMap::new();
    for q in data {
        by_day
            .entry(q.day)
            .or_default()
            .push((q.subject, q.relation, q.object, q.uid));
    }
    by_day
        .into_iter()
        .map(|(day, edges)| DailyGraph { day, edges })
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartStats {
    pub quintuples: usize,
    pub days: usize,
    pub first_day: Option<u32>,
    pub last_day: Option<u32>,
}

impl PartStats {
    pub fn of(data: &[Quintuple]) -> Self {
        let days: BTreeSet<u32> = data.iter().map(|q| q.day).collect();
        Self {
            quintuples: data.len(),
            days: days.len(),
            first_day: days.first().copied(),
            last_day: days.last().copied(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatsReport {
    pub entities: usize,
    pub relations: usize,
    pub train: PartStats,
    pub valid: PartStats,
    pub test: PartStats,
    pub total: PartStats,
    pub boundary_days: [u32; 2],
}

pub fn dataset_stats(split: &DatasetSplit, vocab: &Vocabulary) -> StatsReport {
    let all: Vec<Quintuple> = split
        .train
        .iter()
        .chain(&split.valid)
        .chain(&split.test)
        .cloned()
        .collect();
    StatsReport {
        entities: vocab.num_entities(),
        relations: vocab.num_relations(),
        train: PartStats::of(&split.train),
        valid: PartStats::of(&split.valid),
        test: PartStats::of(&split.test),
        total: PartStats::of(&all),
        boundary_days: split.boundary_days,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn parse_tsv(s: &str) -> Result<Dataset, EventStoreError> {
        parse_dataset(s.as_bytes(), Format::Tsv)
    }

    #[test]
    fn single_tsv_line() {
        let ds = parse_tsv("A\trel\tB\t2010-01-01\thello").unwrap();
        assert_eq!(ds.quintuples.len(), 1);
        assert_eq!(ds.quintuples[0].day, 0);
        assert_eq!(ds.quintuples[0].text, "hello");
        assert_eq!(ds.vocab.num_entities(), 2);
        assert_eq!(ds.vocab.num_relations(), 1);
    }

    #[test]
    fn days_follow_calendar_differences() {
        let ds = parse_tsv("A\tr\tB\t2010-01-03\tx\nB\tr\tC\t2010-01-01\ty\n").unwrap();
        let days: Vec<u32> = ds.quintuples.iter().map(|q| q.day).collect();
        assert_eq!(days, vec![2, 0]);
        assert_eq!(ds.vocab.epoch(), NaiveDate::from_ymd_opt(2010, 1, 1).unwrap());
        // across a leap day and a year boundary
        let ds = parse_tsv("A\tr\tB\t2011-12-31\t\nA\tr\tB\t2012-03-01\t\n").unwrap();
        assert_eq!(ds.quintuples[1].day, 31 + 29 + 1);
    }

    #[test]
    fn first_appearance_vocabulary() {
        let ds = parse_tsv("B\tr2\tA\t2010-01-01\t\nC\tr1\tB\t2010-01-01\t\n").unwrap();
        assert_eq!(ds.vocab.entities(), &["B", "A", "C"]);
        assert_eq!(ds.vocab.relations(), &["r2", "r1"]);
        assert_eq!(ds.quintuples[1].uid, 1);
    }

    #[test]
    fn jsonl_with_optional_text() {
        let src = r#"{"subject":"A","relation":"r","object":"B","date":"2010-01-01","text":"t"}
{"subject":"A","relation":"r","object":"C","date":"2010-01-02"}"#;
        let ds = parse_dataset(src.as_bytes(), Format::Jsonl).unwrap();
        assert_eq!(ds.quintuples[1].text, "");
        assert_eq!(ds.quintuples[1].day, 1);
    }

    #[test]
    fn errors_carry_line_numbers() {
        match parse_tsv("A\tr\tB\t2010-01-01\tx\nA\tr\tB\n") {
            Err(EventStoreError::Malformed { line: 2, .. }) => {}
            other => panic!("{other:?}"),
        }
        match parse_tsv("A\tr\tB\t2010-13-01\tx") {
            Err(EventStoreError::BadDate { line: 1, .. }) => {}
            other => panic!("{other:?}"),
        }
        match parse_tsv("A\t\tB\t2010-01-01\tx") {
            Err(EventStoreError::EmptyField { line: 1, field: "relation" }) => {}
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse_dataset("{not json".as_bytes(), Format::Jsonl),
            Err(EventStoreError::Malformed { line: 1, .. })
        ));
    }

    #[test]
    fn split_day_arithmetic() {
        assert_eq!(split_day_counts(10, [0.8, 0.1, 0.1]).unwrap(), [8, 1, 1]);
        assert_eq!(split_day_counts(1931, [0.8, 0.1, 0.1]).unwrap(), [1545, 193, 193]);
        assert_eq!(split_day_counts(3, [0.8, 0.1, 0.1]).unwrap(), [1, 1, 1]);
        assert!(matches!(
            split_day_counts(2, [0.8, 0.1, 0.1]),
            Err(EventStoreError::TooFewDays(2))
        ));
        assert!(split_day_counts(10, [0.8, 0.0, 0.1]).is_err());
    }

    fn synthetic(n: usize, days: u32, seed: u64) -> Vec<Quintuple> {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| Quintuple {
                subject: rng.random_range(0..5),
                relation: rng.random_range(0..3),
                object: rng.random_range(0..5),
                day: rng.random_range(0..days),
                text: format!("t{i}"),
                uid: i as u64,
            })
            .collect()
    }

    #[test]
    fn split_on_two_days_fails() {
        let mut data = synthetic(10, 1, 0);
        data[3].day = 1;
        assert!(chronological_split(&data, [0.8, 0.1, 0.1]).is_err());
    }

    #[test]
    fn grouping_examples() {
        assert!(group_by_day(&[]).is_empty());
        let mut data = synthetic(5, 1, 0);
        for (i, q) in data.iter_mut().enumerate() {
            q.day = if i < 3 { 5 } else { 7 };
        }
        let g = group_by_day(&data);
        assert_eq!(g.len(), 2);
        assert_eq!((g[0].day, g[0].edges.len()), (5, 3));
        assert_eq!((g[1].day, g[1].edges.len()), (7, 2));
    }

    #[test]
    fn grouping_ignores_input_permutation() {
        let data = synthetic(200, 15, 1);
        let mut shuffled = data.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(2));
        let normalize = |gs: Vec<DailyGraph>| -> Vec<(u32, Vec<(usize, usize, usize, u64)>)> {
            gs.into_iter()
                .map(|mut g| {
                    g.edges.sort_by_key(|e| e.3);
                    (g.day, g.edges)
                })
                .collect()
        };
        assert_eq!(normalize(group_by_day(&data)), normalize(group_by_day(&shuffled)));
    }

    #[test]
    fn stats_partition_identity() {
        let data = synthetic(300, 40, 3);
        let split = chronological_split(&data, [0.8, 0.1, 0.1]).unwrap();
        let vocab = Vocabulary::new(
            (0..5).map(|i| format!("e{i}")).collect(),
            (0..3).map(|i| format!("r{i}")).collect(),
            NaiveDate::from_ymd_opt(2010, 1, 1).unwrap(),
        );
        let s = dataset_stats(&split, &vocab);
        assert_eq!(s.train.quintuples + s.valid.quintuples + s.test.quintuples, s.total.quintuples);
        assert_eq!(s.train.days + s.valid.days + s.test.days, s.total.days);
        let json = serde_json::to_string(&s).unwrap();
        let back: StatsReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn single_quintuple_all_train() {
        let data = synthetic(1, 1, 4);
        let split = split_at_boundaries(&data, u32::MAX, u32::MAX);
        let vocab = Vocabulary::new(vec![], vec![], NaiveDate::from_ymd_opt(2010, 1, 1).unwrap());
        let s = dataset_stats(&split, &vocab);
        assert_eq!((s.train.quintuples, s.valid.quintuples, s.test.quintuples), (1, 0, 0));
    }

    #[test]
    fn vocabulary_json_round_trip() {
        let ds = parse_tsv("A\tr\tB\t2010-01-05\tx").unwrap();
        let json = serde_json::to_string(&ds.vocab).unwrap();
        let back: Vocabulary = serde_json::from_str(&json).unwrap();
        assert_eq!(back, ds.vocab);
        assert_eq!(back.entity_index("B"), Some(1));
    }

    fn field() -> impl Strategy<Value = String> {
        "[A-Za-z][A-Za-z ()]{0,12}"
    }

    proptest! {
        #[test]
        fn tsv_round_trip(
            rows in prop::collection::vec(
                (field(), field(), field(), 0u32..3000, "[^\t\n\r]{0,20}"),
                1..30,
            )
        ) {
            let base = NaiveDate::from_ymd_opt(2010, 1, 1).unwrap();
            let mut src = String::new();
            for (s, r, o, d, t) in &rows {
                let date = base + Days::new(*d as u64);
                src.push_str(&format!("{s}\t{r}\t{o}\t{}\t{t}\n", date.format(DATE_FORMAT)));
            }
            let ds = parse_tsv(&src).unwrap();
            let mut out = Vec::new();
            write_tsv(&ds.vocab, &ds.quintuples, &mut out).unwrap();
            let again = parse_dataset(out.as_slice(), Format::Tsv).unwrap();
            prop_assert_eq!(&again.quintuples, &ds.quintuples);
            prop_assert_eq!(&again.vocab, &ds.vocab);
            for (i, e) in ds.vocab.entities().iter().enumerate() {
                prop_assert_eq!(ds.vocab.entity_index(e), Some(i));
            }
        }

        #[test]
        fn split_is_a_chronological_partition(seed in 0u64..500, n in 3usize..200, days in 3u32..60) {
            let data = synthetic(n, days, seed);
            let distinct: BTreeSet<u32> = data.iter().map(|q| q.day).collect();
            prop_assume!(distinct.len() >= 3);
            let split = chronological_split(&data, [0.8, 0.1, 0.1]).unwrap();
            let mut uids: Vec<u64> = split.all_sorted().iter().map(|q| q.uid).collect();
            uids.sort();
            prop_assert_eq!(uids, (0..n as u64).collect::<Vec<_>>());
            prop_assert!(!split.train.is_empty() && !split.valid.is_empty() && !split.test.is_empty());
            let max = |v: &[Quintuple]| v.iter().map(|q| q.day).max().unwrap();
            let min = |v: &[Quintuple]| v.iter().map(|q| q.day).min().unwrap();
            prop_assert!(max(&split.train) < min(&split.valid));
            prop_assert!(max(&split.valid) < min(&split.test));
            prop_assert_eq!(split.boundary_days, [min(&split.valid), min(&split.test)]);
        }
    }
}
