mod common;

use std::collections::BTreeSet;

use oraldx_core::fusion::embed_case;
use oraldx_core::numeric::masked_softmax;
use oraldx_core::reasoning::{
    check_gate, confirmation_distribution, level_distribution, level_mask, render_standard, run_standard,
    ClarificationRequest, Context, Finding, Gate, GatingConfig, HierarchyModel, ScriptedResponder,
    SessionState, SessionStatus, StepOutcome, LEVEL_ARITY,
};
use oraldx_core::taxonomy::{DiseaseId, Taxonomy};
use rand::seq::IteratorRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Exponentiate, zero masked entries, divide by the sum.
fn oracle(logits: &[f64], mask: &[bool]) -> Vec<f64> {
    let m = logits
        .iter()
        .zip(mask)
        .filter(|(_, &a)| a)
        .map(|(l, _)| *l)
        .fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits
        .iter()
        .zip(mask)
        .map(|(l, &a)| if a { (l - m).exp() } else { 0.0 })
        .collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

#[test]
fn masked_softmax_matches_oracle_on_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..1000 {
        let n = rng.random_range(1..=118);
        let logits: Vec<f64> = (0..n).map(|_| rng.random_range(-30.0..30.0)).collect();
        let mut mask: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
        let keep = rng.random_range(0..n);
        mask[keep] = true;
        let got = masked_softmax(&logits, &mask).unwrap();
        let want = oracle(&logits, &mask);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() <= 1e-12, "{g} vs {w}");
        }
        assert!((got.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
    }
}

fn random_candidates(rng: &mut ChaCha8Rng) -> BTreeSet<DiseaseId> {
    let k = rng.random_range(1..=118);
    (1..=118u16)
        .map(DiseaseId)
        .choose_multiple(rng, k)
        .into_iter()
        .collect()
}

#[test]
fn level_distribution_matches_oracle_for_models_and_candidates() {
    let taxonomy = Taxonomy::bundled();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for trial in 0..60 {
        let model = HierarchyModel::seeded(trial, 4.0);
        let emb: Vec<f64> = (0..1024).map(|_| rng.random_range(-1.0..1.0)).collect();
        let candidates = random_candidates(&mut rng);
        for level in 1..=5u8 {
            let got = level_distribution(&model, &emb, level, &candidates, &taxonomy).unwrap();
            let logits = model.logits(level, &emb).unwrap();
            let mask = if level == 1 {
                vec![true; 2]
            } else {
                level_mask(level, &candidates, &taxonomy)
            };
            for (g, w) in got.iter().zip(oracle(&logits, &mask)) {
                assert!((g - w).abs() <= 1e-12);
            }
            assert!((got.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            assert_eq!(got.len(), LEVEL_ARITY[level as usize - 1]);
        }
        // Product of the two masked distributions, renormalised.
        let p5 = level_distribution(&model, &emb, 5, &candidates, &taxonomy).unwrap();
        let p6 = level_distribution(&model, &emb, 6, &candidates, &taxonomy).unwrap();
        let prod: Vec<f64> = p5.iter().zip(&p6).map(|(a, b)| a * b).collect();
        let z: f64 = prod.iter().sum();
        let got = confirmation_distribution(&model, &emb, &candidates, &taxonomy).unwrap();
        for (g, w) in got.iter().zip(&prod) {
            assert!((g - w / z).abs() <= 1e-12);
        }
    }
}

#[test]
fn gate_fires_iff_log_gap_below_threshold() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let config = GatingConfig::default();
    let off = GatingConfig::with_threshold(0.0);
    for _ in 0..10_000 {
        let n = rng.random_range(2..=118);
        let raw: Vec<f64> = (0..n)
            .map(|_| rng.random_range(0.0..1.0f64).powi(3) + 1e-12)
            .collect();
        let s: f64 = raw.iter().sum();
        let p: Vec<f64> = raw.iter().map(|v| v / s).collect();
        let mut sorted = p.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        let gap = sorted[0].ln() - sorted[1].ln();
        let gate = check_gate(&p, &config).unwrap();
        assert_eq!(matches!(gate, Gate::Uncertain { .. }), gap < 0.3, "gap {gap}");
        assert!(check_gate(&p, &off).unwrap().passed());
    }
}

fn random_case(rng: &mut ChaCha8Rng) -> (String, Vec<f64>) {
    let words = [
        "white", "red", "lesion", "adult", "smoker", "ulcer", "plaque", "buccal", "tongue",
    ];
    let text: Vec<&str> = (0..rng.random_range(1..8))
        .map(|_| words[rng.random_range(0..words.len())])
        .collect();
    let features = (0..1280).map(|_| rng.random_range(-1.0..1.0)).collect();
    (text.join(" "), features)
}

#[test]
fn standard_runs_stay_hierarchically_consistent() {
    let (engine, _) = common::trained();
    let taxonomy = &engine.taxonomy;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut diagnosed = 0;
    for run in 0..500u64 {
        let model = HierarchyModel::seeded(run, 8.0);
        let gating = GatingConfig::with_threshold(rng.random_range(0.0..1.0));
        let ctx = Context {
            model: &model,
            gating: &gating,
            ..engine.context()
        };
        let (text, features) = random_case(&mut rng);
        let mut s = SessionState::start(&ctx, &text, &features).unwrap();
        let mut sizes = vec![s.candidates.len()];
        while s.status == SessionStatus::Active {
            if let StepOutcome::Clarify(_) = s.step(&ctx).unwrap() {
                if rng.random_bool(0.5) {
                    s.answer(&ctx, "white plaque adult").unwrap();
                } else {
                    s.waive(&ctx).unwrap();
                }
            }
            sizes.push(s.candidates.len());
        }
        let finding = s.finalize(&ctx, 3).unwrap();
        assert!(sizes.windows(2).all(|w| w[1] <= w[0]), "{sizes:?}");
        if let Finding::Disease(d) = finding {
            diagnosed += 1;
            let path = d.path.expect("standard findings carry a path");
            assert_eq!(path.0.len(), 5);
            let prefix: Vec<&str> = path.0[..4].iter().map(|p| p.key.as_str()).collect();
            assert!(taxonomy.candidates_for(&prefix).unwrap().contains(&d.primary.id));
        }
    }
    assert!(diagnosed > 100);
}

#[test]
fn gate_disabled_finishes_in_six_steps() {
    let (engine, _) = common::trained();
    let gating = GatingConfig::with_threshold(0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for run in 0..200u64 {
        let model = HierarchyModel::seeded(run + 1000, 8.0);
        let ctx = Context {
            model: &model,
            gating: &gating,
            ..engine.context()
        };
        let (text, features) = random_case(&mut rng);
        let mut s = SessionState::start(&ctx, &text, &features).unwrap();
        let mut steps = 0;
        while s.status == SessionStatus::Active {
            let out = s.step(&ctx).unwrap();
            assert!(!matches!(out, StepOutcome::Clarify(_)));
            steps += 1;
        }
        if s.status == SessionStatus::Confirmed {
            assert_eq!(steps, 6);
            assert_eq!(s.path.0.len(), 5);
            assert!(s.confirmation.is_some());
        }
    }
}

#[test]
fn signature_answers_raise_the_disease_probability() {
    let (engine, corpus) = common::trained();
    let taxonomy = &engine.taxonomy;
    let all = taxonomy.all_ids();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut raised = 0;
    let trials = 50;
    for _ in 0..trials {
        let id = DiseaseId(rng.random_range(1..=118));
        let features: Vec<f64> = corpus.prototype(id).to_vec();
        let text = "lesion noted during examination";
        let before = embed_case(engine.backend(), engine.fuser(), text, &features).unwrap();
        let answer = corpus.signature(id).join(" ");
        let after = embed_case(
            engine.backend(),
            engine.fuser(),
            &format!("{text}\n{answer}"),
            &features,
        )
        .unwrap();
        let p0 = level_distribution(&engine.model, before.as_slice(), 5, &all, taxonomy).unwrap();
        let p1 = level_distribution(&engine.model, after.as_slice(), 5, &all, taxonomy).unwrap();
        if p1[id.index()] > p0[id.index()] {
            raised += 1;
        }
    }
    assert!(raised * 10 >= trials * 9, "{raised}/{trials}");
}

#[test]
fn scripted_olp_dialogue_finalises_with_a_five_label_path() {
    let (engine, corpus) = common::trained();
    let ctx = engine.context();
    let (text, features) = corpus.olp_like_case(&engine.taxonomy).unwrap();
    let mut s = SessionState::start(&ctx, &text, &features).unwrap();
    let mut responder = ScriptedResponder::new(corpus.olp_script(&engine.taxonomy));
    let run = run_standard(&ctx, &mut s, &mut responder, 3).unwrap();
    let Finding::Disease(d) = &run.finding else {
        panic!("expected a disease finding");
    };
    let path = d.path.as_ref().unwrap();
    assert_eq!(path.0.len(), 5);
    let report = render_standard(&run.finding, &s.transcript);
    let lines: Vec<&str> = report.lines().collect();
    assert!(lines[0].starts_with("Diagnostic Path: Abnormal → "));
    assert_eq!(lines[0].matches(" → ").count(), 4);
    assert!(lines[1].starts_with("Final Diagnosis: "));
    assert!(lines[1].contains("% confidence, ") && lines[1].ends_with(" certainty)"));
    assert!(lines[2].starts_with("Differential Diagnosis: 1. "));
    let percents: Vec<f64> = std::iter::once(d.primary.percent)
        .chain(d.differential.iter().map(|r| r.percent))
        .collect();
    assert!(percents.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn clarification_requests_carry_the_top_two() {
    let (engine, _) = common::trained();
    let gating = GatingConfig::with_threshold(50.0);
    let ctx = Context {
        gating: &gating,
        ..engine.context()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (text, features) = random_case(&mut rng);
    let mut s = SessionState::start(&ctx, &text, &features).unwrap();
    let StepOutcome::Clarify(ClarificationRequest {
        level, top_two, gap, ..
    }) = s.step(&ctx).unwrap()
    else {
        panic!("huge threshold always asks");
    };
    assert_eq!(level, 1);
    assert!(top_two[0].log_prob >= top_two[1].log_prob);
    assert!((top_two[0].log_prob - top_two[1].log_prob - gap).abs() < 1e-12);
    assert!(s.step(&ctx).is_err());
    s.answer(&ctx, "white plaque").unwrap();
    assert_eq!(s.transcript.len(), 1);
    assert!(s.answer(&ctx, "again").is_err());
}
