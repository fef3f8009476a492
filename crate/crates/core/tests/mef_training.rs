mod common;

use std::time::Instant;

use leap_core::event_store::split_at_boundaries;
use leap_core::mef::{eval_mef, train_mef, write_mef_log_csv, MefError};

use common::{periodic_split, relation_keyed_store, small_mef_config};

#[test]
fn periodic_rule_is_learned_with_and_without_attention() {
    let split = periodic_split(60, 6);
    let store = relation_keyed_store(&split, 16);
    for attn in [true, false] {
        let cfg = small_mef_config(attn);
        let start = Instant::now();
        let out = train_mef(&split, &store, 6, &cfg).unwrap();
        let best = out
            .log
            .iter()
            .filter(|r| r.epoch == out.best_epoch)
            .map(|r| r.f1)
            .next()
            .unwrap();
        eprintln!(
            "{}: best epoch {} f1 {best:.4} in {:?}",
            cfg.tag(),
            out.best_epoch,
            start.elapsed()
        );
        assert!(out.log.iter().all(|r| r.variant == cfg.tag()));
        assert_eq!(out.skipped_days, 1);
        let (eval, skipped) = eval_mef(&out.model, &split.train, &split.all_sorted(), &store, &cfg).unwrap();
        assert_eq!(skipped, 1);
        assert_eq!(eval.days.len(), 59);
        assert!(eval.prf.f1 >= if attn { 0.95 } else { 0.80 }, "{} f1 {}", cfg.tag(), eval.prf.f1);
    }
}

#[test]
fn same_seed_gives_identical_logs() {
    let split = periodic_split(30, 6);
    let store = relation_keyed_store(&split, 8);
    let cfg = leap_core::mef::MefConfig {
        epochs: 5,
        ..small_mef_config(true)
    };
    let csv = |_| {
        let out = train_mef(&split, &store, 6, &cfg).unwrap();
        let mut buf = Vec::new();
        write_mef_log_csv(&out.log, &mut buf).unwrap();
        buf
    };
    let a = csv(0);
    assert_eq!(a, csv(1));
    assert!(String::from_utf8(a)
        .unwrap()
        .starts_with("epoch,split,variant,loss,f1,recall,precision\n"));
}

#[test]
fn validation_part_drives_selection() {
    let split = periodic_split(40, 6);
    let split = split_at_boundaries(&split.all_sorted(), 30, 35);
    let store = relation_keyed_store(&split, 8);
    let cfg = leap_core::mef::MefConfig {
        epochs: 30,
        patience: 3,
        ..small_mef_config(true)
    };
    let out = train_mef(&split, &store, 6, &cfg).unwrap();
    assert!(out.log.iter().any(|r| r.split == "valid"));
    assert!(out.log.len() <= 2 * 30);
    let (test_eval, _) = eval_mef(&out.model, &split.test, &split.all_sorted(), &store, &cfg).unwrap();
    assert_eq!(test_eval.days.len(), 5);
}

#[test]
fn nothing_to_train_on_is_an_error() {
    let split = periodic_split(1, 6);
    let store = relation_keyed_store(&split, 8);
    assert!(matches!(
        train_mef(&split, &store, 6, &small_mef_config(true)),
        Err(MefError::NoTargets)
    ));
    let mut cfg = small_mef_config(true);
    cfg.input_dim = Some(9);
    assert!(matches!(train_mef(&split, &store, 6, &cfg), Err(MefError::Config(_))));
}
