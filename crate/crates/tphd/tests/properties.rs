use proptest::prelude::*;
use tphd::approx::approx_hamming;
use tphd::convolution::{convolve_exact, convolve_mod_p, PrimeWitness};
use tphd::exact::{dominance_counts, exact_hamming, exact_hamming_det};
use tphd::reductions::hamming_to_3sum_instance;
use tphd::rng::stream;
use tphd::strings::{dominance_oracle, hamming_oracle};
use tphd::sumset::{sumset_counts, sumset_counts_det, sumset_counts_naive, IntegerMultiSet};
use tphd::IntString;

/// Text, pattern and alphabet size with `1 <= m <= n`.
fn instance(max_n: usize) -> impl Strategy<Value = (IntString, IntString)> {
    (1usize..=max_n, 1u32..=20).prop_flat_map(|(n, sigma)| {
        (1usize..=n).prop_flat_map(move |m| {
            (prop::collection::vec(0..sigma, n), prop::collection::vec(0..sigma, m))
                .prop_map(move |(t, p)| (IntString::new(t, sigma).unwrap(), IntString::new(p, sigma).unwrap()))
        })
    })
}

fn sets() -> impl Strategy<Value = (IntegerMultiSet, IntegerMultiSet)> {
    (1u32..=14).prop_flat_map(|log_u| {
        let half = 1u64 << (log_u - 1);
        (prop::collection::vec(0..half, 0..200), prop::collection::vec(0..half, 0..200)).prop_map(move |(x, y)| {
            (
                IntegerMultiSet::new(x, 1 << log_u).unwrap(),
                IntegerMultiSet::new(y, 1 << log_u).unwrap(),
            )
        })
    })
}

fn trimmed(mut v: Vec<u64>) -> Vec<u64> {
    while v.last() == Some(&0) {
        v.pop();
    }
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn sumset_matches_double_loop((x, y) in sets(), seed in any::<u64>()) {
        let want = trimmed(sumset_counts_naive(&x, &y).counts);
        prop_assert_eq!(trimmed(sumset_counts(&x, &y, &mut stream(seed, 0)).unwrap().counts), want.clone());
        prop_assert_eq!(trimmed(sumset_counts_det(&x, &y).unwrap().counts), want);
    }

    #[test]
    fn exact_matchers_agree_with_oracle((t, p) in instance(300), seed in any::<u64>()) {
        let want = hamming_oracle(&t, &p).unwrap();
        prop_assert!(want.values.iter().all(|&v| v <= p.len() as u64));
        prop_assert_eq!(&exact_hamming(&t, &p, &mut stream(seed, 0)).unwrap(), &want);
        prop_assert_eq!(&exact_hamming_det(&t, &p).unwrap(), &want);
    }

    #[test]
    fn dominance_pair_sums_to_hamming((t, p) in instance(200), seed in any::<u64>()) {
        let mut rng = stream(seed, 0);
        let up = dominance_counts(&t, &p, &mut rng).unwrap();
        let down = dominance_counts(&t.reversed_alphabet(), &p.reversed_alphabet(), &mut rng).unwrap();
        prop_assert_eq!(&up, &dominance_oracle(&t, &p).unwrap());
        let ham = hamming_oracle(&t, &p).unwrap();
        for i in 0..ham.len() {
            prop_assert_eq!(up.values[i] + down.values[i], ham.values[i]);
        }
    }

    #[test]
    fn approx_stays_in_range((t, p) in instance(200), seed in any::<u64>(), eps in 0.1f64..=1.0) {
        let got = approx_hamming(&t, &p, eps, &mut stream(seed, 0)).unwrap();
        prop_assert_eq!(got.len(), t.len() - p.len() + 1);
        prop_assert!(got.values.iter().all(|&v| v <= p.len() as u64));
    }

    #[test]
    fn forward_reduction_round_trips((t, p) in instance(60)) {
        prop_assume!(t.len() <= 4 * p.len());
        let red = hamming_to_3sum_instance(&t, &p).unwrap();
        prop_assert_eq!(red.decode(&red.instance.count_naive()).unwrap(), hamming_oracle(&t, &p).unwrap());
    }

    #[test]
    fn mod_p_convolution_reduces_exact(
        p in prop::sample::select(vec![2u64, 3, 5, 97, 257, 65537, 1_000_000_007]),
        a in prop::collection::vec(any::<u64>(), 1..300),
        b in prop::collection::vec(any::<u64>(), 1..300),
    ) {
        let a: Vec<u64> = a.into_iter().map(|v| v % p).collect();
        let b: Vec<u64> = b.into_iter().map(|v| v % p).collect();
        let got = convolve_mod_p(&a, &b, PrimeWitness::new(p).unwrap()).unwrap();
        let mut want = vec![0u128; a.len() + b.len() - 1];
        for (i, &x) in a.iter().enumerate() {
            for (j, &y) in b.iter().enumerate() {
                want[i + j] = (want[i + j] + x as u128 * y as u128) % p as u128;
            }
        }
        let want: Vec<u64> = want.into_iter().map(|v| v as u64).collect();
        if p <= 257 {
            let exact: Vec<u64> = convolve_exact(&a, &b).unwrap().into_iter().map(|v| v % p).collect();
            prop_assert_eq!(&exact, &want);
        }
        prop_assert_eq!(got, want);
    }
}
