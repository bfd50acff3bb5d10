// SPDX-License-Identifier: MIT OR Apache-2.0

//! File formats shared with external producers, checked against bytes written
//! by an independent Python writer, plus frozen toy-backend output.

mod common;

use std::fs;

use proptest::prelude::*;
use sha2::{Digest, Sha256};

use steerlab::backend::{
    read_activations, write_activations, ActivationRecord, ActivationSet, Backend, BackendConfig,
    FINAL_POSITION,
};
use steerlab::classify::{parse_predictions, predictions_csv};
use steerlab::corpus::{plant_synthetic_pairs, Split, SynthParams};
use steerlab::direction::{fingerprint, readout_eval, train_direction, Direction, Variant};
use steerlab::tables::{parse_table, read_table};

use common::fixture;

#[test]
fn python_actv_round_trips_byte_for_byte() {
    let bytes = fs::read(fixture("readout.actv")).unwrap();
    let set = read_activations(&bytes).unwrap();
    assert_eq!(set.d_model, 4);
    assert_eq!(set.producer, "fixture;hook=block_output;layer=18");
    assert_eq!(set.len(), 2 * (756 + 756 + 324 + 28 + 12));
    assert!(set.records().iter().all(|r| r.layer == 18 && r.position == FINAL_POSITION));
    assert_eq!(write_activations(&set).unwrap(), bytes);
}

/// Hand-assembled little-endian layout, independent of the library writer.
fn manual_actv(d: u32, tag: &str, records: &[(&str, u16, i32, Vec<f32>)]) -> Vec<u8> {
    let mut b = b"ACTV".to_vec();
    b.push(1);
    b.extend(d.to_le_bytes());
    b.extend((tag.len() as u16).to_le_bytes());
    b.extend(tag.as_bytes());
    for (id, layer, pos, v) in records {
        b.extend((id.len() as u16).to_le_bytes());
        b.extend(id.as_bytes());
        b.extend(layer.to_le_bytes());
        b.extend(pos.to_le_bytes());
        v.iter().for_each(|x| b.extend(x.to_le_bytes()));
    }
    b
}

#[test]
fn writer_matches_manual_layout() {
    let recs = vec![
        ("a", 0u16, -1i32, vec![1.5f32, -0.0, f32::MIN_POSITIVE]),
        ("ünï", 3, 7, vec![f32::MAX, 2.0, -3.25]),
    ];
    let mut set = ActivationSet::new(3, "tag");
    for (id, layer, pos, v) in &recs {
        set.insert(ActivationRecord {
            prompt_id: id.to_string(),
            layer: *layer as usize,
            position: *pos,
            vector: v.clone(),
        })
        .unwrap();
    }
    assert_eq!(write_activations(&set).unwrap(), manual_actv(3, "tag", &recs));
}

#[test]
fn truncated_and_foreign_files_are_rejected() {
    let bytes = fs::read(fixture("readout.actv")).unwrap();
    assert!(read_activations(&bytes[..bytes.len() - 1]).is_err());
    let mut wrong = bytes.clone();
    wrong[0] = b'X';
    assert!(read_activations(&wrong).is_err());
    let mut future = bytes;
    future[4] = 2;
    assert!(read_activations(&future).is_err());
}

proptest! {
    #[test]
    fn actv_round_trip(
        d in 1usize..6,
        rows in prop::collection::vec(("[a-z0-9_-]{1,8}", 0usize..40, -1i32..50), 0..12),
        seed in any::<u32>(),
    ) {
        let mut set = ActivationSet::new(d, "prop");
        for (k, (id, layer, pos)) in rows.iter().enumerate() {
            let vector = (0..d).map(|j| f32::from_bits(seed.wrapping_mul(2654435761).wrapping_add((k * d + j) as u32) & 0x7f7f_ffff)).collect();
            let _ = set.insert(ActivationRecord { prompt_id: id.clone(), layer: *layer, position: *pos, vector });
        }
        let bytes = write_activations(&set).unwrap();
        let back = read_activations(&bytes).unwrap();
        prop_assert_eq!(write_activations(&back).unwrap(), bytes);
        prop_assert_eq!(back.records(), set.records());
    }
}

#[test]
fn python_direction_json_and_fingerprint() {
    let dir = Direction::load(&fixture("readout_direction.json")).unwrap();
    assert_eq!((dir.layer, dir.variant, dir.raw_norm), (18, Variant::TrainOnly, 417.36));
    assert_eq!(dir.vector, vec![1.0, 0.0, 0.0, 0.0]);

    let mut ids: Vec<String> = (0..756)
        .flat_map(|i| ["paper", "realized"].map(|r| format!("direction_train-{i:04}-{r}")))
        .collect();
    ids.sort();
    let mut h = Sha256::new();
    ids.iter().for_each(|id| h.update(format!("{id}\n")));
    let oracle = hex::encode(h.finalize());
    assert_eq!(fingerprint(ids.iter().rev().map(|s| s.as_str())), oracle);
    assert_eq!(dir.train_fingerprint, oracle);

    let again = Direction::from_json(&dir.to_json()).unwrap();
    assert_eq!(again, dir);
}

#[test]
fn prediction_table_round_trip() {
    let table = read_table(&fixture("predictions.csv")).unwrap();
    let preds = parse_predictions(&table, None).unwrap();
    assert_eq!(preds.len(), 3 * 648);
    let bytes = predictions_csv(&preds, None).unwrap();
    let back = parse_predictions(&parse_table(&bytes).unwrap(), None).unwrap();
    assert_eq!(back, preds);
    assert_eq!(predictions_csv(&back, None).unwrap(), bytes);
}

#[test]
fn blank_roles_need_a_corpus() {
    let mut table = read_table(&fixture("predictions.csv")).unwrap();
    let role = table.column("true_role").unwrap();
    table.rows.iter_mut().for_each(|r| r[role].clear());
    assert!(parse_predictions(&table, None).is_err());
}

#[test]
fn planted_cosine_within_simulated_band() {
    // Monte-Carlo mean 0.9796, sd 0.0018 for this configuration
    let s = plant_synthetic_pairs(&SynthParams::new(256, 756, 4.0, 1.0, 20_240_611)).unwrap();
    let train = s.corpus.pair_index(Split::DirectionTrain);
    let dir = train_direction(&s.activations, &train, 0, Variant::TrainOnly).unwrap();
    let cos: f64 = dir.vector.iter().zip(&s.planted).map(|(a, b)| a * b).sum();
    assert!(cos >= 0.9725, "cosine {cos}");
}

#[test]
fn noiseless_plant_is_recovered_exactly() {
    let s = plant_synthetic_pairs(&SynthParams::new(32, 40, 2.0, 0.0, 3)).unwrap();
    let train = s.corpus.pair_index(Split::DirectionTrain);
    let dir = train_direction(&s.activations, &train, 0, Variant::TrainOnly).unwrap();
    let cos: f64 = dir.vector.iter().zip(&s.planted).map(|(a, b)| a * b).sum();
    assert!((cos - 1.0).abs() < 1e-6);
    let report = readout_eval(&dir, &s.activations, &s.corpus.pair_index(Split::DirectionVal)).unwrap();
    assert_eq!(report.correct_direction_rate, 1.0);
}

const GOLDEN_PROMPT: &str = "The casino session shows a loss of 200 CHF. Return two integers: a wager from 1 to 1000 CHF and a risk level from 1 to 5.";
const GOLDEN_TOKENS: &[u32] = &[402, 51, 227, 217, 435, 402, 51, 227, 217, 435, 499, 364];

#[test]
fn default_backend_generation_is_frozen() {
    let config = BackendConfig::default();
    assert_eq!((config.n_layers, config.d_model, config.n_heads, config.vocab_size, config.max_context, config.seed), (4, 64, 4, 512, 256, 7));
    let backend = Backend::new(config).unwrap();
    let out = backend.run_text("g", GOLDEN_PROMPT, None, None, 12).unwrap();
    assert_eq!(out.tokens, GOLDEN_TOKENS, "{:?} {:?}", out.tokens, out.text);
    let again = Backend::new(BackendConfig::default()).unwrap().run_text("g", GOLDEN_PROMPT, None, None, 12).unwrap();
    assert_eq!(again, out);
}
