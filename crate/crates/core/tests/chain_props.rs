mod common;

use bcvh::acl::{sign_tx, Acl, RobotIdentity, Role};
use bcvh::chain::{fork_choice, mine_block, verify_chain, ChainRules, ForkChoice};
use bcvh::ledger::{blocks_from_jsonl, blocks_to_jsonl, LedgerState};
use bcvh::types::{Block, FovTransaction, LandmarkId, PanoramicView};
use common::{fixture, mutate};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn fixtures_verify_and_round_trip(seed in any::<u64>()) {
        let f = fixture(&mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert!(verify_chain(&f.chain, &f.rules).is_ok());
        let back = blocks_from_jsonl(&blocks_to_jsonl(&f.chain)).unwrap();
        prop_assert_eq!(&back, &f.chain);
        let ledger = LedgerState::from_chain(&f.chain, &f.rules).unwrap();
        prop_assert_eq!(ledger.tip_hash(), f.chain.last().unwrap().hash());
    }

    #[test]
    fn any_single_mutation_is_rejected(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = fixture(&mut rng);
        let mut chain = f.chain.clone();
        if let Some(desc) = mutate(&mut chain, &mut rng) {
            prop_assert!(verify_chain(&chain, &f.rules).is_err(), "accepted: {}", desc);
        }
    }

    #[test]
    fn fork_choice_is_antisymmetric(s1 in any::<u64>(), s2 in any::<u64>()) {
        let a = fixture(&mut ChaCha8Rng::seed_from_u64(s1));
        let mut rng = ChaCha8Rng::seed_from_u64(s2);
        // a second branch on the same genesis and ACL
        let mut b = a.chain[..1].to_vec();
        for i in 1..=rand::Rng::gen_range(&mut rng, 1..=5u64) {
            let p = &a.ids[i as usize % a.ids.len()];
            let blk = mine_block(&b.last().unwrap().header, vec![], p, i * 999, a.rules.difficulty).unwrap();
            b.push(blk);
        }
        let ab = fork_choice(&a.chain, &b, &a.rules).unwrap();
        let ba = fork_choice(&b, &a.chain, &a.rules).unwrap();
        prop_assert_eq!(ab == ForkChoice::A, ba == ForkChoice::B);
        let longer_a = a.chain.len() > b.len()
            || (a.chain.len() == b.len() && a.chain.last().unwrap().hash() <= b.last().unwrap().hash());
        prop_assert_eq!(ab == ForkChoice::A, longer_a);
    }
}

#[test]
fn mining_is_deterministic() {
    let f1 = fixture(&mut ChaCha8Rng::seed_from_u64(99));
    let f2 = fixture(&mut ChaCha8Rng::seed_from_u64(99));
    assert_eq!(f1.chain, f2.chain);
}

#[test]
fn mean_trials_at_difficulty_8_near_256() {
    let id = RobotIdentity::keygen("R1", Role::Member, [5; 32]);
    let rules = ChainRules::new(Acl::from_identities([&id]).unwrap(), 8);
    let mut parent = Block::genesis(rules.acl.digest(), 0).header;
    let mut trials = 0u64;
    for i in 1..=100u64 {
        let mut view = PanoramicView::empty();
        view.insert(0, LandmarkId::new_unchecked(format!("L{i}")));
        let tx = sign_tx(&id, FovTransaction::unsigned("R1", i, i, view)).unwrap();
        let b = mine_block(&parent, vec![tx], &id, i * 1000, 8).unwrap();
        trials += b.header.nonce + 1;
        parent = b.header;
    }
    let mean = trials as f64 / 100.0;
    assert!((128.0..=384.0).contains(&mean), "mean trials {mean}");
}
