use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use intcoh_core::cartier::{cartier_map, inverse_cartier};
use intcoh_core::flows::{adaptedness_check, random_witness};
use intcoh_core::modcx::{de_rham_complex, higgs_complex, intersection_complex, random_higgs};
use intcoh_core::{FieldSpec, LiftingDatum, RingPair};

fn pair(p: u64, n: usize, r: usize) -> RingPair {
    RingPair::new(FieldSpec::new(p).unwrap(), n, r, 1).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn cartier_transfer_below_the_level_bound(
        seed in any::<u64>(), p in prop::sample::select(vec![3u64, 5, 7]), n in 1usize..=2, rank in 1usize..=2,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rp = pair(p, n, n);
        let e = random_higgs(rp.down(), rank, 1, &mut rng).unwrap();
        let h = inverse_cartier(&e, &LiftingDatum::standard(&rp)).unwrap();
        let higgs = higgs_complex(&e).unwrap().cohomology_dims();
        let dr = de_rham_complex(&h).unwrap().cohomology_dims();
        let hi = intersection_complex(&e).unwrap().cohomology_dims();
        let di = intersection_complex(&h).unwrap().cohomology_dims();
        for m in 0..(p as usize - e.level()).min(n + 1) {
            prop_assert_eq!(higgs[m], dr[m]);
            prop_assert_eq!(hi[m], di[m]);
        }
        let split = cartier_map(&e).unwrap();
        prop_assert!(split.en_complex.is_acyclic());
        prop_assert!(split.en_int_complex.is_acyclic());
    }

    #[test]
    fn witnesses_are_adapted(seed in any::<u64>(), a in 1usize..=2, b in 1usize..=2) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = random_witness(&pair(5, 1, 1), &[a, b], &mut rng).unwrap();
        prop_assert!(adaptedness_check(w.flat(), w.filtration()).unwrap().equal());
    }
}
