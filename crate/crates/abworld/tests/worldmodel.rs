mod common;

use std::collections::HashMap;

use abworld::domain::{apply_delta, AbstractState, AbstractTransition, Behaviour, Item};
use abworld::worldmodel::persist::{decode_weights, read_transitions, write_transitions};
use abworld::worldmodel::{
    slot_targets, AdamConfig, FitConfig, GenerativeModel, OptimizerState, ParametricModel,
    SuccessModel, TransitionCounts, TransitionModel, DEFAULT_EPSILON,
};
use common::{grad_check, random_examples, randomise};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const IDS: u16 = 6;
const ATTRS: u8 = 3;

fn model(seed: u64) -> ParametricModel {
    ParametricModel::new(IDS as usize, ATTRS as usize, 32, seed)
}

fn state(items: &[(u16, u8)]) -> AbstractState {
    AbstractState::new(items.iter().map(|&(i, a)| Item::new(i, a)).collect()).unwrap()
}

fn transition(s: &AbstractState, b: &Behaviour, success: bool) -> AbstractTransition {
    let next = if success {
        apply_delta(s, b).unwrap()
    } else {
        s.clone()
    };
    AbstractTransition::observed(s.clone(), b.clone(), next, 1)
}

fn quick_fit() -> FitConfig {
    FitConfig {
        min_steps: 1500,
        max_steps: 6000,
        batch_size: 64,
        ..FitConfig::default()
    }
}

#[test]
fn counts_match_a_recount() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let keys = random_examples(300, IDS, ATTRS, 4, 2);
    let mut counts = TransitionCounts::default();
    let mut oracle: HashMap<(AbstractState, Behaviour), (u64, u64)> = HashMap::new();
    for _ in 0..10_000 {
        let (s, b) = &keys[rng.gen_range(0..keys.len())];
        let t = transition(s, b, rng.gen_bool(0.4));
        let tally = oracle.entry((s.clone(), b.clone())).or_default();
        tally.0 += u64::from(t.success);
        tally.1 += 1;
        counts.record(t);
    }
    assert_eq!(counts.num_keys(), oracle.len());
    for ((s, b), (succ, total)) in &oracle {
        let e = counts.get(s, b).unwrap();
        assert_eq!((e.success, e.total), (*succ, *total));
        let want = (*succ as f64 + DEFAULT_EPSILON) / (*total as f64 + 2.0 * DEFAULT_EPSILON);
        assert_eq!(counts.empirical_success_prob(s, b), want);
    }
    // random_examples never builds a six-slot state
    let unseen = state(&[(0, 0), (1, 0), (2, 0), (3, 0), (4, 0), (5, 0)]);
    let b = Behaviour::single(
        abworld::domain::ItemIdentity(5),
        abworld::domain::AttributeId(2),
    );
    assert_eq!(counts.empirical_success_prob(&unseen, &b), 0.5);
}

#[test]
fn fresh_model_predicts_one_half() {
    let m = model(3);
    for (s, b) in random_examples(50, IDS, ATTRS, 5, 4) {
        assert_eq!(m.predict(&s, &b).unwrap(), 0.5);
    }
}

#[test]
fn reset_is_seeded() {
    let (a, b, c) = (model(7), model(7), model(8));
    assert_eq!(a.params(), b.params());
    assert_ne!(a.params(), c.params());
}

#[test]
fn gradients_match_finite_differences() {
    let mut m = model(5);
    randomise(m.params_mut(), 0.3, 6);
    let examples = random_examples(24, IDS, ATTRS, 5, 7);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let targets: Vec<f64> = examples.iter().map(|_| rng.gen()).collect();
    let batch: Vec<_> = examples
        .iter()
        .zip(&targets)
        .map(|((s, b), &r)| (s, b, r))
        .collect();
    let mut grad = vec![0.0; m.params().len()];
    m.loss_and_grad(&batch, &mut grad).unwrap();
    let mut probe = m.clone();
    let mut params = m.params().to_vec();
    let report = grad_check(
        &mut params,
        m.tensors(),
        &grad,
        |p| {
            probe.params_mut().copy_from_slice(p);
            probe.loss(&batch).unwrap()
        },
        1e-5,
        100,
        9,
    );
    for r in report {
        assert!(r.max_rel_err <= 1e-4, "{}: {}", r.tensor, r.max_rel_err);
    }
}

#[test]
fn generative_gradients_match_finite_differences() {
    let mut m = GenerativeModel::new(IDS as usize, ATTRS as usize, 16, 5);
    randomise(m.params_mut(), 0.3, 6);
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let data: Vec<AbstractTransition> = random_examples(20, IDS, ATTRS, 4, 11)
        .iter()
        .map(|(s, b)| transition(s, b, rng.gen_bool(0.5)))
        .collect();
    let targets = slot_targets(&data, ATTRS as usize).unwrap();
    let batch: Vec<_> = targets.iter().collect();
    let mut grad = vec![0.0; m.params().len()];
    m.loss_and_grad(&batch, &mut grad).unwrap();
    let mut probe = m.clone();
    let mut params = m.params().to_vec();
    let mut scratch = vec![0.0; params.len()];
    let report = grad_check(
        &mut params,
        m.tensors(),
        &grad,
        |p| {
            probe.params_mut().copy_from_slice(p);
            probe.loss_and_grad(&batch, &mut scratch).unwrap().0
        },
        1e-5,
        100,
        12,
    );
    for r in report {
        assert!(r.max_rel_err <= 1e-4, "{}: {}", r.tensor, r.max_rel_err);
    }
}

#[test]
fn empty_slots_are_ignored() {
    let mut m = model(5);
    randomise(m.params_mut(), 0.3, 13);
    for (s, b) in random_examples(40, IDS, ATTRS, 4, 14) {
        let mut padded = s.items().to_vec();
        padded.insert(0, Item::EMPTY);
        padded.push(Item {
            attribute: abworld::domain::AttributeId(1),
            ..Item::EMPTY
        });
        let padded = AbstractState::new(padded).unwrap();
        assert_eq!(m.predict(&s, &b).unwrap(), m.predict(&padded, &b).unwrap());
    }
}

#[test]
fn slot_order_does_not_change_predictions() {
    let mut m = model(5);
    randomise(m.params_mut(), 0.3, 15);
    for (s, b) in random_examples(40, IDS, ATTRS, 5, 16) {
        let mut items = s.items().to_vec();
        items.reverse();
        let reversed = AbstractState::new(items).unwrap();
        let (p, q) = (
            m.predict(&s, &b).unwrap(),
            m.predict(&reversed, &b).unwrap(),
        );
        assert!((p - q).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn two_point_distribution(seed in 0u64..1000, pick in 0usize..20) {
        let mut m = model(seed);
        randomise(m.params_mut(), 1.0, seed);
        let (s, b) = random_examples(20, IDS, ATTRS, 5, seed)[pick].clone();
        let dist = m.next_state_distribution(&s, &b).unwrap();
        let total: f64 = dist.iter().map(|(_, p)| p).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        let delta = apply_delta(&s, &b).unwrap();
        for (x, p) in &dist {
            prop_assert!(*x == s || *x == delta);
            prop_assert!(*p > 0.0 && *p <= 1.0);
        }
        prop_assert_eq!(dist.len(), if delta == s { 1 } else { 2 });
        let q = m.predict(&s, &b).unwrap();
        prop_assert!(q > 0.0 && q < 1.0);
    }

    #[test]
    fn generative_slots_are_distributions(seed in 0u64..1000) {
        let mut m = GenerativeModel::new(IDS as usize, ATTRS as usize, 16, seed);
        randomise(m.params_mut(), 1.0, seed);
        let examples = random_examples(8, IDS, ATTRS, 5, seed);
        let pairs: Vec<_> = examples.iter().map(|(s, b)| (s, b)).collect();
        for (dists, (s, _)) in m.slot_distributions(&pairs).unwrap().iter().zip(&examples) {
            prop_assert_eq!(dists.len(), s.non_empty().count());
            for d in dists {
                prop_assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            }
        }
    }
}

#[test]
fn fits_five_labelled_keys() {
    let keys = random_examples(5, IDS, ATTRS, 4, 17);
    let labels = [false, true, true, false, true];
    let mut counts = TransitionCounts::default();
    for ((s, b), &ok) in keys.iter().zip(&labels) {
        for _ in 0..10 {
            counts.record(transition(s, b, ok));
        }
    }
    let mut m = model(18);
    let mut opt = OptimizerState::new(
        AdamConfig {
            lr: 1e-3,
            ..AdamConfig::default()
        },
        m.params().len(),
    );
    let report = m.fit(&counts, &mut opt, &quick_fit()).unwrap();
    assert_eq!(report.accuracy, 1.0);
    for ((s, b), &ok) in keys.iter().zip(&labels) {
        let q = m.predict(s, b).unwrap();
        assert_eq!(q > 0.5, ok, "q = {q}");
    }
}

#[test]
fn fit_recovers_soft_targets() {
    let keys = random_examples(12, IDS, ATTRS, 4, 19);
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let mut counts = TransitionCounts::default();
    let rates: Vec<f64> = keys.iter().map(|_| rng.gen_range(0.1..0.9)).collect();
    for ((s, b), &r) in keys.iter().zip(&rates) {
        let n = 40;
        let wins = (r * n as f64).round() as usize;
        for i in 0..n {
            counts.record(transition(s, b, i < wins));
        }
    }
    let mut m = model(21);
    let mut opt = OptimizerState::new(
        AdamConfig {
            lr: 1e-3,
            ..AdamConfig::default()
        },
        m.params().len(),
    );
    let fit = FitConfig {
        min_steps: 4000,
        max_steps: 4000,
        ..quick_fit()
    };
    m.fit(&counts, &mut opt, &fit).unwrap();
    for e in counts.entries() {
        let q = m.predict(&e.state, &e.behaviour).unwrap();
        assert!((q - counts.rho(e)).abs() < 0.05, "{q} vs {}", counts.rho(e));
    }
}

#[test]
fn fitting_is_reproducible() {
    let mut counts = TransitionCounts::default();
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for (s, b) in random_examples(30, IDS, ATTRS, 4, 23) {
        counts.record(transition(&s, &b, rng.gen_bool(0.5)));
    }
    let fit = FitConfig {
        min_steps: 200,
        max_steps: 300,
        seed: 4,
        ..quick_fit()
    };
    let run = || {
        let mut m = model(24);
        let mut opt = OptimizerState::new(AdamConfig::default(), m.params().len());
        let report = m.fit(&counts, &mut opt, &fit).unwrap();
        (m, report)
    };
    let (a, ra) = run();
    let (b, rb) = run();
    assert_eq!(a.params(), b.params());
    assert_eq!(ra.losses, rb.losses);
}

#[test]
fn empty_data_is_rejected() {
    let mut m = model(1);
    let mut opt = OptimizerState::new(AdamConfig::default(), m.params().len());
    assert!(m
        .fit(&TransitionCounts::default(), &mut opt, &quick_fit())
        .is_err());
    let mut g = GenerativeModel::new(IDS as usize, ATTRS as usize, 16, 1);
    let mut opt = OptimizerState::new(AdamConfig::default(), g.params().len());
    assert!(g.fit_generative(&[], &mut opt, &quick_fit()).is_err());
}

#[test]
fn generative_modal_state_matches_deterministic_data() {
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    let mut keys = random_examples(12, IDS, ATTRS, 4, 26);
    keys.sort_by_key(|(s, b)| (s.canonical_hash(), b.clone()));
    keys.dedup();
    let data: Vec<AbstractTransition> = keys
        .iter()
        .map(|(s, b)| transition(s, b, rng.gen_bool(0.5)))
        .collect();
    let mut g = GenerativeModel::new(IDS as usize, ATTRS as usize, 32, 27);
    let mut opt = OptimizerState::new(
        AdamConfig {
            lr: 1e-3,
            ..AdamConfig::default()
        },
        g.params().len(),
    );
    let fit = FitConfig {
        min_steps: 3000,
        max_steps: 3000,
        ..quick_fit()
    };
    g.fit_generative(&data, &mut opt, &fit).unwrap();
    for t in &data {
        let (modal, p) = g.modal_next_state(&t.state, &t.behaviour).unwrap();
        assert_eq!(modal, t.next_state);
        assert!(p > 0.0 && p <= 1.0);
        let imagined = g
            .imagine(&t.state, std::slice::from_ref(&t.behaviour))
            .unwrap();
        assert_eq!(imagined[0].0, t.next_state);
    }
}

#[test]
fn generative_learns_a_coin_flip() {
    let s = state(&[(0, 0), (1, 0)]);
    let b = Behaviour::single(
        abworld::domain::ItemIdentity(0),
        abworld::domain::AttributeId(1),
    );
    let data: Vec<_> = (0..40).map(|i| transition(&s, &b, i % 2 == 0)).collect();
    let mut g = GenerativeModel::new(IDS as usize, ATTRS as usize, 16, 28);
    let mut opt = OptimizerState::new(
        AdamConfig {
            lr: 1e-3,
            ..AdamConfig::default()
        },
        g.params().len(),
    );
    let fit = FitConfig {
        min_steps: 3000,
        max_steps: 3000,
        ..quick_fit()
    };
    g.fit_generative(&data, &mut opt, &fit).unwrap();
    let dists = g.slot_distributions(&[(&s, &b)]).unwrap().remove(0);
    assert!(
        (dists[0][0] - 0.5).abs() < 0.05 && (dists[0][1] - 0.5).abs() < 0.05,
        "{:?}",
        dists[0]
    );
    assert!(dists[1][0] > 0.95);
}

#[test]
fn weights_round_trip() {
    let mut m = model(29);
    randomise(m.params_mut(), 0.5, 30);
    let bytes = m.to_bytes(None);
    let (back, header) = ParametricModel::from_bytes(&bytes).unwrap();
    assert_eq!(back.params(), m.params());
    assert_eq!(header.shape, m.shape());
    let (s, b) = random_examples(1, IDS, ATTRS, 4, 31).remove(0);
    assert_eq!(
        back.success_prob(&s, &b).unwrap(),
        m.success_prob(&s, &b).unwrap()
    );

    let g = GenerativeModel::new(IDS as usize, ATTRS as usize, 16, 32);
    let (gback, _) = GenerativeModel::from_bytes(&g.to_bytes(None)).unwrap();
    assert_eq!(gback.params(), g.params());
    assert!(ParametricModel::from_bytes(&g.to_bytes(None)).is_err());
}

#[test]
fn corrupt_weights_are_rejected() {
    let bytes = model(33).to_bytes(None);
    assert!(decode_weights(&bytes[..bytes.len() - 1]).is_err());
    assert!(decode_weights(&bytes[..6]).is_err());
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(decode_weights(&bad).is_err());
    let mut long = bytes.clone();
    long.extend_from_slice(&[0; 8]);
    assert!(decode_weights(&long).is_err());
    let mut rng = ChaCha8Rng::seed_from_u64(34);
    for _ in 0..200 {
        let mut mutated = bytes.clone();
        let i = rng.gen_range(0..mutated.len().min(400));
        mutated[i] = rng.gen();
        let _ = decode_weights(&mutated);
    }
}

#[test]
fn transition_log_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(35);
    let data: Vec<_> = random_examples(50, IDS, ATTRS, 4, 36)
        .iter()
        .map(|(s, b)| transition(s, b, rng.gen_bool(0.5)))
        .collect();
    let mut buf = Vec::new();
    write_transitions(&mut buf, &data).unwrap();
    assert_eq!(read_transitions(&buf[..]).unwrap(), data);
    let mut lie = serde_json::to_value(&data[0]).unwrap();
    let flipped = !data[0].success;
    lie["success"] = serde_json::Value::Bool(flipped);
    assert!(read_transitions(lie.to_string().as_bytes()).is_err());
    assert!(read_transitions(&b"{\"state\": 3}\n"[..]).is_err());
}
