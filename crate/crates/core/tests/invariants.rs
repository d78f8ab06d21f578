use impsim::codec::{crc16_attach, crc16_check, fec_decode, fec_encode, qpsk_llr, qpsk_modulate};
use impsim::pilots::{
    imp_all_pilot_collision_exact, imp_pairwise_collision_probability, random_pilot_selection,
    tsp_collision_probability, PilotLayout,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn bits(max: usize) -> impl Strategy<Value = Vec<u8>> {
    proptest::collection::vec(0u8..=1, 1..max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn coded_chain_round_trips_without_noise(payload in bits(200), scale in 2usize..10) {
        let block = crc16_attach(&payload);
        let n = block.len() * scale;
        let coded = fec_encode(&block, n).unwrap();
        prop_assert_eq!(coded.len(), n);
        let llrs: Vec<f64> = coded.iter().map(|&b| if b == 0 { 4.0 } else { -4.0 }).collect();
        let out = fec_decode(&llrs, block.len()).unwrap();
        prop_assert!(out.crc_ok);
        prop_assert_eq!(out.bits, block);
    }

    #[test]
    fn crc_catches_any_single_flip(payload in bits(300), pos in any::<prop::sample::Index>()) {
        let mut block = crc16_attach(&payload);
        prop_assert!(crc16_check(&block).unwrap());
        let i = pos.index(block.len());
        block[i] ^= 1;
        prop_assert!(!crc16_check(&block).unwrap());
    }

    #[test]
    fn qpsk_llr_signs_recover_bits(pairs in proptest::collection::vec((0u8..=1, 0u8..=1), 1..64)) {
        let flat: Vec<u8> = pairs.iter().flat_map(|&(a, b)| [a, b]).collect();
        let symbols = qpsk_modulate(&flat).unwrap();
        for (s, &(a, b)) in symbols.iter().zip(&pairs) {
            prop_assert!((s.norm_sqr() - 1.0).abs() < 1e-12);
            let (l0, l1) = qpsk_llr(*s, 1.0, 0.1).unwrap();
            prop_assert_eq!(l0 < 0.0, a == 1);
            prop_assert_eq!(l1 < 0.0, b == 1);
        }
    }

    #[test]
    fn collision_probabilities_are_monotone_in_load(n in 2usize..40, w in 2usize..4, k in 1usize..30) {
        let tsp = |k| tsp_collision_probability(n, k);
        prop_assert!(tsp(k) <= tsp(k + 1));
        prop_assert!((0.0..=1.0).contains(&tsp(k)));
        let exact = imp_all_pilot_collision_exact(n, w, k);
        // The union bound never undershoots the exact value.
        prop_assert!(exact <= imp_pairwise_collision_probability(n, w, k) + 1e-15);
        prop_assert!(exact <= imp_all_pilot_collision_exact(n, w, k + 1));
    }

    #[test]
    fn selections_stay_in_their_pool(w in 1usize..5, seed in any::<u64>()) {
        let total = 24;
        let layout = if w == 1 { PilotLayout::tsp(total) } else { PilotLayout::imp(total, w) };
        let Ok(layout) = layout else { return Ok(()) };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_pilot_selection(&layout, &mut rng);
        prop_assert_eq!(s.w(), w);
        prop_assert!(s.indices.iter().all(|&i| i < layout.pool_size()));
    }
}
