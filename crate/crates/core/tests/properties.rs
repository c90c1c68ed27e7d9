//! Property tests of invariants that hold for every input.

use ccn_core::metrics::{decision_auc, pehe};
use ccn_core::nn::io::{read_net, write_net};
use ccn_core::nn::{Activation, DenseNet, MonotoneNet};
use ccn_core::rng::{derive_seed, seeded};
use ccn_core::scenarios::Law;
use ccn_core::{Dataset, Dataset32, Dataset64};
use proptest::prelude::*;

fn law() -> impl Strategy<Value = Law> {
    prop_oneof![
        (-3.0..3.0f64, 0.1..3.0f64).prop_map(|(mean, sd)| Law::Normal { mean, sd }),
        (-3.0..3.0f64, 0.1..3.0f64).prop_map(|(location, scale)| Law::Logistic { location, scale }),
        (-3.0..3.0f64, 0.1..3.0f64).prop_map(|(location, scale)| Law::Gumbel { location, scale }),
        (0.3..6.0f64, 0.1..3.0f64).prop_map(|(shape, scale)| Law::Gamma { shape, scale }),
        (0.2..5.0f64, 0.3..4.0f64).prop_map(|(scale, shape)| Law::Weibull { scale, shape }),
        (0.1..4.0f64, 0.1..4.0f64, -2.0..2.0f64).prop_map(|(a, b, shift)| Law::ShiftedBeta { a, b, shift }),
        (0.2..4.0f64, -2.0..2.0f64).prop_map(|(rate, shift)| Law::ShiftedExp { rate, shift }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn monotone_net_is_non_decreasing_in_z(
        seed in any::<u64>(),
        x in proptest::collection::vec(-4.0..4.0f64, 2),
        z1 in -6.0..6.0f64,
        dz in 0.0..6.0f64,
    ) {
        let net = MonotoneNet::<f64>::new(2, &[7], 4, Activation::Relu, &mut seeded(seed)).unwrap();
        let lo = net.forward(&[x[0], x[1], z1]).unwrap();
        let hi = net.forward(&[x[0], x[1], z1 + dz]).unwrap();
        prop_assert!(hi >= lo);
        prop_assert!((0.0..=1.0).contains(&lo) && (0.0..=1.0).contains(&hi));
    }

    #[test]
    fn law_quantile_inverts_cdf(law in law(), q in 0.01..0.99f64) {
        let y = law.quantile(q);
        prop_assert!((law.cdf(y) - q).abs() < 1e-8, "{law:?} q={q} y={y}");
    }

    #[test]
    fn auc_is_invariant_to_monotone_rescoring(
        pairs in proptest::collection::vec((-5.0..5.0f64, prop_oneof![Just(-1.0), Just(1.0)]), 2..40),
    ) {
        let (h, t): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let Ok(auc) = decision_auc(&h, &t) else { return Ok(()) };
        let squashed: Vec<f64> = h.iter().map(|v| (3.0 * v).tanh() * 2.0 + 7.0).collect();
        prop_assert_eq!(decision_auc(&squashed, &t).unwrap(), auc);
        let flipped: Vec<f64> = h.iter().map(|v| -v).collect();
        let has_ties = h.iter().enumerate().any(|(i, a)| h[i + 1..].contains(a));
        if !has_ties {
            prop_assert!((decision_auc(&flipped, &t).unwrap() + auc - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn pehe_is_a_scaled_euclidean_distance(
        a in proptest::collection::vec(-10.0..10.0f64, 1..30),
        shift in -3.0..3.0f64,
    ) {
        prop_assert_eq!(pehe(&a, &a).unwrap(), 0.0);
        let b: Vec<f64> = a.iter().map(|v| v + shift).collect();
        prop_assert!((pehe(&a, &b).unwrap() - shift.abs()).abs() < 1e-9);
        prop_assert_eq!(pehe(&a, &b).unwrap(), pehe(&b, &a).unwrap());
    }

    #[test]
    fn net_files_round_trip_bitwise(seed in any::<u64>(), widths in proptest::collection::vec(1usize..6, 2..4)) {
        let net = DenseNet::<f64>::new(&widths, Activation::Tanh, Activation::Sigmoid, &mut seeded(seed)).unwrap();
        let mut buf = Vec::new();
        write_net(&net, &mut buf).unwrap();
        let back: DenseNet<f64> = read_net(buf.as_slice()).unwrap();
        prop_assert_eq!(back.widths(), net.widths());
        prop_assert!(back.params().iter().zip(net.params()).all(|(a, b)| a.to_bits() == b.to_bits()));
        let narrow: DenseNet<f32> = read_net(buf.as_slice()).unwrap();
        prop_assert!(narrow.params().iter().zip(net.params()).all(|(a, b)| *a == *b as f32));
    }

    #[test]
    fn dataset_csv_round_trips(seed in any::<u64>(), n in 2usize..30, p in 1usize..5) {
        use rand::Rng;
        let mut rng = seeded(seed);
        let x: Vec<f64> = (0..n * p).map(|_| rng.random_range(-1e3..1e3)).collect();
        let t: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 1e-5).collect();
        let data = Dataset64::new(x, p, t, y).unwrap();
        let mut buf = Vec::new();
        data.write_csv(&mut buf).unwrap();
        let back = Dataset::<f64>::read_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(back.checksum(), data.checksum());
        let narrow = Dataset32::read_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(narrow.n(), n);
    }

    #[test]
    fn child_seeds_ignore_sibling_count(master in any::<u64>(), k in 0u64..50) {
        let early: Vec<u64> = (0..=k).map(|i| derive_seed(master, i)).collect();
        let late: Vec<u64> = (0..=k + 10).map(|i| derive_seed(master, i)).collect();
        prop_assert_eq!(&early[..], &late[..=k as usize]);
    }
}
