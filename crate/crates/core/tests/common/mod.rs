#![allow(dead_code)]

use chrono::NaiveDate;
use leap_core::embedding::{test_encoder, EmbeddingStore};
use leap_core::event_store::{DatasetSplit, Quintuple, Vocabulary};
use leap_core::mef::MefConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn vocab(entities: usize, relations: usize) -> Vocabulary {
    Vocabulary::new(
        (0..entities).map(|i| format!("entity {i}")).collect(),
        (0..relations).map(|i| format!("relation {i}")).collect(),
        NaiveDate::from_ymd_opt(2012, 1, 1).unwrap(),
    )
}

/// Object is a fixed function of (subject, relation).
pub fn functional_object(s: usize, r: usize, entities: usize) -> usize {
    (3 * s + 7 * r + 1) % entities
}

pub fn functional_split(entities: usize, relations: usize, days: u32, per_day: usize, seed: u64) -> DatasetSplit {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut uid = 0;
    for day in 0..days {
        for _ in 0..per_day {
            let s = rng.random_range(0..entities);
            let r = rng.random_range(0..relations);
            train.push(Quintuple {
                subject: s,
                relation: r,
                object: functional_object(s, r, entities),
                day,
                text: format!("event {uid}"),
                uid,
            });
            uid += 1;
        }
    }
    DatasetSplit {
        train,
        valid: Vec::new(),
        test: Vec::new(),
        boundary_days: [days, days],
    }
}

/// Relation `k` happens on day `d` iff `d % 3 == k % 3`; one event per
/// active relation and day.
pub fn periodic_split(days: u32, relations: usize) -> DatasetSplit {
    let mut train = Vec::new();
    let mut uid = 0;
    for day in 0..days {
        for r in (0..relations).filter(|r| r % 3 == day as usize % 3) {
            train.push(Quintuple {
                subject: r,
                relation: r,
                object: (r + 1) % relations,
                day,
                text: format!("event of kind {r}"),
                uid,
            });
            uid += 1;
        }
    }
    DatasetSplit {
        train,
        valid: Vec::new(),
        test: Vec::new(),
        boundary_days: [days, days],
    }
}

/// Fixed vector per relation, shared by all its events.
pub fn relation_keyed_store(split: &DatasetSplit, dim: usize) -> EmbeddingStore {
    let mut store = EmbeddingStore::new(dim, "relation-keyed test encoder").unwrap();
    for q in split.all_sorted() {
        store
            .insert(q.uid, test_encoder(&format!("relation {}", q.relation), dim, 0))
            .unwrap();
    }
    store
}

pub fn small_mef_config(use_attention: bool) -> MefConfig {
    MefConfig {
        window: 7,
        model_dim: 16,
        lr: 1e-2,
        weight_decay: 0.0,
        batch: 2,
        epochs: 200,
        patience: 200,
        use_attention,
        seed: 11,
        ..MefConfig::default()
    }
}

/// TSV lines (`subject relation object date text`) for `data`, named through
/// `vocab(entities, relations)`.
pub fn to_tsv(data: &[Quintuple], entities: usize, relations: usize) -> String {
    let v = vocab(entities, relations);
    let mut out = String::new();
    for q in data {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            v.entity(q.subject).unwrap(),
            v.relation(q.relation).unwrap(),
            v.entity(q.object).unwrap(),
            v.date_of(q.day),
            q.text
        ));
    }
    out
}
