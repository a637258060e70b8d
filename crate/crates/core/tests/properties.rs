use proptest::prelude::*;
use specdrift::metrics::{classification_metrics, fbd, macro_f1, FbdConfig};
use specdrift::numcore::{irfft, rfft, Tensor};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn rfft_round_trip(values in prop::collection::vec(-100.0f64..100.0, 2..64)) {
        let n = values.len();
        let x = Tensor::from_vec(values);
        let back = irfft(&rfft(&x).unwrap(), n).unwrap();
        prop_assert!(back.max_abs_diff(&x) < 1e-9);
    }

    #[test]
    fn fft_is_linear(a in prop::collection::vec(-1.0f64..1.0, 16), b in prop::collection::vec(-1.0f64..1.0, 16), c in -3.0f64..3.0) {
        let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| c * x + y).collect();
        let (za, zb, zs) = (rfft(&Tensor::from_vec(a)).unwrap(), rfft(&Tensor::from_vec(b)).unwrap(), rfft(&Tensor::from_vec(sum)).unwrap());
        for k in 0..9 {
            prop_assert!((za.get(k) * c + zb.get(k) - zs.get(k)).norm() < 1e-10);
        }
    }

    #[test]
    fn macro_f1_ignores_class_names(pairs in prop::collection::vec((0usize..3, 0usize..3), 1..30)) {
        let (y, p): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
        let perm = [2, 0, 1];
        let (py, pp): (Vec<usize>, Vec<usize>) = (y.iter().map(|&v| perm[v]).collect(), p.iter().map(|&v| perm[v]).collect());
        prop_assert!((macro_f1(&y, &p, 3) - macro_f1(&py, &pp, 3)).abs() < 1e-9);
    }

    #[test]
    fn reports_stay_in_percent_range(rows in prop::collection::vec((0usize..3, prop::collection::vec(-5.0f64..5.0, 3)), 1..25)) {
        let (y, s): (Vec<usize>, Vec<Vec<f64>>) = rows.into_iter().unzip();
        let m = classification_metrics(&y, &s).unwrap();
        for v in [m.accuracy, m.precision, m.recall, m.f1, m.auroc, m.auprc] {
            prop_assert!((0.0..=100.0).contains(&v));
        }
    }

    #[test]
    fn fbd_is_scale_invariant(seed in any::<u64>(), c in 0.1f64..10.0) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let x = Tensor::from_fn(&[12, 16, 2], |_| rng.random_range(-1.0..1.0));
        let labels: Vec<usize> = (0..12).map(|i| i % 2).collect();
        let subjects: Vec<usize> = (0..12).map(|i| i / 4).collect();
        let cfg = FbdConfig { fs: 16.0, bin_hz: 2.0, band: None };
        let base = fbd(&x, &labels, &subjects, &cfg).unwrap();
        let scaled = Tensor::from_fn(&[12, 16, 2], |i| c * x.data()[i]);
        let other = fbd(&scaled, &labels, &subjects, &cfg).unwrap();
        for b in 0..base.fbd.len() {
            prop_assert!((other.intra[b] - c * c * base.intra[b]).abs() <= 1e-9 * (1.0 + other.intra[b]));
            prop_assert!((other.inter[b] - c * c * base.inter[b]).abs() <= 1e-9 * (1.0 + other.inter[b]));
            if base.intra[b] > 1e-6 {
                prop_assert!((other.fbd[b] - base.fbd[b]).abs() <= 1e-6 * (1.0 + base.fbd[b]));
            }
            prop_assert!(base.fbd[b] >= 0.0);
        }
    }
}
