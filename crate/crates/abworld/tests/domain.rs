use std::collections::HashMap;

use abworld::domain::{
    apply_delta, count_behaviours, is_success, AbstractState, AbstractTransition, AttributeId,
    Behaviour, DomainError, Item, ItemIdentity, Vocabulary,
};
use proptest::prelude::*;

const IDS: u16 = 6;
const ATTRS: u8 = 4;

fn state_strategy() -> impl Strategy<Value = AbstractState> {
    (1usize..=IDS as usize)
        .prop_flat_map(|n| {
            (
                Just(n),
                proptest::sample::subsequence((0..IDS).collect::<Vec<_>>(), n),
                proptest::collection::vec(0..ATTRS, n),
            )
        })
        .prop_map(|(_, ids, attrs)| {
            AbstractState::new(
                ids.into_iter()
                    .zip(attrs)
                    .map(|(i, a)| Item::new(i, a))
                    .collect(),
            )
            .unwrap()
        })
}

fn state_and_behaviour() -> impl Strategy<Value = (AbstractState, Behaviour)> {
    state_strategy().prop_flat_map(|s| {
        let ids: Vec<u16> = s.non_empty().map(|i| i.identity.0).collect();
        let n = ids.len();
        (
            Just(s),
            proptest::sample::subsequence(ids, 1..=n.min(3)),
            proptest::collection::vec(0..ATTRS, 3),
        )
            .prop_map(|(s, chosen, attrs)| {
                let b = Behaviour::new(chosen.into_iter().zip(attrs).map(|(i, a)| Item::new(i, a)))
                    .unwrap();
                (s, b)
            })
    })
}

proptest! {
    #[test]
    fn delta_is_idempotent((s, b) in state_and_behaviour()) {
        let once = apply_delta(&s, &b).unwrap();
        prop_assert_eq!(apply_delta(&once, &b).unwrap(), once);
    }

    #[test]
    fn delta_only_touches_named_items((s, b) in state_and_behaviour()) {
        let next = apply_delta(&s, &b).unwrap();
        prop_assert_eq!(next.len(), s.len());
        for (before, after) in s.items().iter().zip(next.items()) {
            prop_assert_eq!(before.identity, after.identity);
            match b.changes().iter().find(|c| c.identity == before.identity) {
                Some(c) => prop_assert_eq!(after.attribute, c.attribute),
                None => prop_assert_eq!(after.attribute, before.attribute),
            }
        }
    }

    #[test]
    fn delta_result_counts_as_success((s, b) in state_and_behaviour()) {
        let next = apply_delta(&s, &b).unwrap();
        let t = AbstractTransition::observed(s.clone(), b.clone(), next, 1);
        prop_assert!(t.success);
        prop_assert!(is_success(&t));
    }

    #[test]
    fn unchanged_state_fails_unless_already_true((s, b) in state_and_behaviour()) {
        let t = AbstractTransition::observed(s.clone(), b.clone(), s.clone(), 1);
        prop_assert_eq!(is_success(&t), b.changes().iter().all(|c| s.contains(c)));
    }

    #[test]
    fn equal_states_hash_equal(s in state_strategy()) {
        let copy = AbstractState::new(s.items().to_vec()).unwrap();
        prop_assert_eq!(copy.canonical_hash(), s.canonical_hash());
        prop_assert_eq!(&copy, &s);
    }

    #[test]
    fn serde_round_trip((s, b) in state_and_behaviour()) {
        let next = apply_delta(&s, &b).unwrap();
        let t = AbstractTransition::observed(s, b, next, 3);
        let text = serde_json::to_string(&t).unwrap();
        let back: AbstractTransition = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back, t);
    }
}

#[test]
fn two_item_delta_matches_slot_by_slot_rewrite() {
    // every state over 3 identities and 3 attributes, every 2-item behaviour
    let ids = [0u16, 1, 2];
    for code in 0..27u32 {
        let attrs = [code % 3, code / 3 % 3, code / 9];
        let s = AbstractState::new(
            ids.iter()
                .zip(attrs)
                .map(|(&i, a)| Item::new(i, a as u8))
                .collect(),
        )
        .unwrap();
        for (x, y) in [(0u16, 1u16), (0, 2), (1, 2)] {
            for (ax, ay) in (0..3u8).flat_map(|a| (0..3u8).map(move |b| (a, b))) {
                let b = Behaviour::new([Item::new(x, ax), Item::new(y, ay)]).unwrap();
                let next = apply_delta(&s, &b).unwrap();
                for item in next.items() {
                    let want = if item.identity.0 == x {
                        ax
                    } else if item.identity.0 == y {
                        ay
                    } else {
                        attrs[item.identity.0 as usize] as u8
                    };
                    assert_eq!(item.attribute.0, want);
                }
            }
        }
    }
}

#[test]
fn multi_item_success_needs_every_change() {
    let s = AbstractState::new(vec![Item::new(0, 0), Item::new(1, 0), Item::new(2, 0)]).unwrap();
    let b = Behaviour::new([Item::new(0, 1), Item::new(1, 2)]).unwrap();
    let cases = [
        (
            vec![Item::new(0, 1), Item::new(1, 2), Item::new(2, 0)],
            true,
        ),
        (
            vec![Item::new(0, 1), Item::new(1, 2), Item::new(2, 1)],
            true,
        ),
        (
            vec![Item::new(0, 1), Item::new(1, 0), Item::new(2, 0)],
            false,
        ),
        (
            vec![Item::new(0, 0), Item::new(1, 2), Item::new(2, 0)],
            false,
        ),
        (
            vec![Item::new(0, 2), Item::new(1, 1), Item::new(2, 0)],
            false,
        ),
    ];
    for (items, want) in cases {
        let t = AbstractTransition::observed(
            s.clone(),
            b.clone(),
            AbstractState::new(items).unwrap(),
            2,
        );
        assert_eq!(is_success(&t), want);
    }
}

#[test]
fn canonical_hash_has_no_collisions_on_distinct_states() {
    let mut seen: HashMap<u64, AbstractState> = HashMap::new();
    let mut rng = 0x1234_5678_u64;
    let mut next = || {
        rng ^= rng << 13;
        rng ^= rng >> 7;
        rng ^= rng << 17;
        rng
    };
    let mut distinct = 0;
    while distinct < 10_000 {
        let n = 1 + (next() % 8) as usize;
        let mut ids: Vec<u16> = (0..20).collect();
        let mut items = Vec::new();
        for _ in 0..n {
            let pick = (next() % ids.len() as u64) as usize;
            items.push(Item::new(ids.swap_remove(pick), (next() % 5) as u8));
        }
        let s = AbstractState::new(items).unwrap();
        match seen.get(&s.canonical_hash()) {
            Some(prev) => assert_eq!(prev, &s, "hash collision"),
            None => {
                seen.insert(s.canonical_hash(), s);
                distinct += 1;
            }
        }
    }
}

#[test]
fn slot_order_is_part_of_the_state() {
    let a = AbstractState::new(vec![Item::new(0, 0), Item::new(1, 1)]).unwrap();
    let b = AbstractState::new(vec![Item::new(1, 1), Item::new(0, 0)]).unwrap();
    assert_ne!(a, b);
}

#[test]
fn behaviour_counts() {
    assert_eq!(count_behaviours(5, 3, 1), Ok(15));
    assert_eq!(count_behaviours(5, 3, 2), Ok(90));
    assert_eq!(count_behaviours(10, 4, 3), Ok(120 * 64));
    assert_eq!(count_behaviours(3, 3, 3), Ok(27));
    assert_eq!(
        count_behaviours(2, 3, 3),
        Err(DomainError::TooManyItems { items: 3, slots: 2 })
    );
    assert_eq!(count_behaviours(2, 0, 1), Err(DomainError::NoAttributes));
    assert_eq!(count_behaviours(2, 3, 0), Err(DomainError::EmptyBehaviour));
    assert_eq!(count_behaviours(200, 255, 10), Err(DomainError::Overflow));
}

#[test]
fn constructor_errors() {
    assert_eq!(
        AbstractState::new(vec![Item::new(1, 0), Item::new(1, 2)]),
        Err(DomainError::DuplicateIdentity(1))
    );
    assert_eq!(Behaviour::new([]), Err(DomainError::EmptyBehaviour));
    assert_eq!(
        Behaviour::new([Item::new(3, 0), Item::new(3, 1)]),
        Err(DomainError::DuplicateIdentity(3))
    );
    let s = AbstractState::new(vec![Item::new(0, 0)]).unwrap();
    assert_eq!(
        apply_delta(&s, &Behaviour::single(ItemIdentity(4), AttributeId(1))),
        Err(DomainError::IdentityNotPresent(4))
    );
}

#[test]
fn behaviour_changes_are_order_independent() {
    let a = Behaviour::new([Item::new(2, 1), Item::new(0, 1)]).unwrap();
    let b = Behaviour::new([Item::new(0, 1), Item::new(2, 1)]).unwrap();
    assert_eq!(a, b);
}

#[test]
fn vocabulary_lookup_and_encoding() {
    let vocab = Vocabulary::new(
        vec!["tree".into(), "wood".into(), "plank".into()],
        vec!["IN_WORLD".into(), "IN_INVENTORY".into()],
    )
    .unwrap();
    assert_eq!(vocab.identity("plank"), Some(ItemIdentity(2)));
    assert_eq!(vocab.attribute("IN_INVENTORY"), Some(AttributeId(1)));
    assert_eq!(vocab.identity("stone"), None);
    assert!(Vocabulary::new(vec!["a".into(), "a".into()], vec!["x".into()]).is_err());
    let s = AbstractState::new(vec![Item::new(1, 1), Item::new(0, 0)]).unwrap();
    let enc = vocab.encode_state(&s);
    let d = vocab.item_dim();
    assert_eq!(enc.len(), 2 * d);
    for (slot, item) in s.items().iter().enumerate() {
        let row = &enc[slot * d..(slot + 1) * d];
        assert_eq!(row.iter().sum::<f64>(), 2.0);
        assert_eq!(row[item.identity.0 as usize], 1.0);
        assert_eq!(row[vocab.width() + item.attribute.0 as usize], 1.0);
    }
}
