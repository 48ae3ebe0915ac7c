use lesionseg::eval::{confusion, metrics};
use lesionseg::mask::BinaryMask;
use lesionseg::pipeline::{compose_channels, percentile_contrast_normalize, RgbImage};
use lesionseg::train::{jaccard_loss, kfold_split, JaccardLossConfig};
use lesionseg::Tensor;
use proptest::prelude::*;

fn mask(h: usize, w: usize, bits: &[bool]) -> BinaryMask {
    BinaryMask::new(h, w, bits[..h * w].to_vec()).unwrap()
}

proptest! {
    #[test]
    fn kfold_partitions_every_index(n in 2usize..200, k in 2usize..10, seed in any::<u64>()) {
        prop_assume!(n >= k);
        let folds = kfold_split(n, k, seed).unwrap();
        prop_assert_eq!(folds.len(), k);
        let mut seen = vec![0usize; n];
        let sizes: Vec<usize> = folds.iter().map(|f| f.val.len()).collect();
        for f in &folds {
            prop_assert_eq!(f.train.len() + f.val.len(), n);
            prop_assert!(f.val.iter().all(|v| f.train.binary_search(v).is_err()));
            for &v in &f.val {
                seen[v] += 1;
            }
        }
        prop_assert!(seen.iter().all(|&c| c == 1));
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn metrics_are_bounded_and_dice_matches_jaccard(
        h in 1usize..12,
        w in 1usize..12,
        a in proptest::collection::vec(any::<bool>(), 144),
        b in proptest::collection::vec(any::<bool>(), 144),
    ) {
        let m = metrics(&confusion(&mask(h, w, &a), &mask(h, w, &b)).unwrap());
        for v in m.as_array() {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert!((m.di - 2.0 * m.ja / (1.0 + m.ja)).abs() <= 1e-12);
        prop_assert!(m.ja <= m.di);
    }

    #[test]
    fn loss_stays_in_unit_interval(
        t in proptest::collection::vec(any::<bool>(), 1..64),
        p in proptest::collection::vec(0.0f64..=1.0, 64),
        smooth in 0.0f64..2.0,
    ) {
        let n = t.len();
        let target = Tensor::from_vec(&[n], t.iter().map(|&b| f64::from(u8::from(b))).collect()).unwrap();
        let pred = Tensor::from_vec(&[n], p[..n].to_vec()).unwrap();
        let cfg = JaccardLossConfig { smooth };
        let l = jaccard_loss(&target, &pred, &cfg).unwrap();
        prop_assert!((0.0..=1.0).contains(&l));
        let perfect = jaccard_loss(&target, &target, &cfg).unwrap();
        prop_assert!(perfect <= 1e-12);
    }

    #[test]
    fn contrast_normalization_is_bounded_and_monotone(
        values in proptest::collection::vec(-5.0f64..5.0, 2..300),
        lo in 0.0f64..40.0,
        width in 10.0f64..60.0,
    ) {
        let mut out = values.clone();
        percentile_contrast_normalize(&mut out, lo, lo + width);
        prop_assert!(out.iter().all(|v| (0.0..=1.0).contains(v)));
        for i in 0..values.len() {
            for j in 0..values.len() {
                if values[i] < values[j] {
                    prop_assert!(out[i] <= out[j]);
                }
            }
        }
    }

    #[test]
    fn composed_channels_lie_in_unit_range(
        h in 1usize..10,
        w in 1usize..10,
        rgb in proptest::collection::vec(0.0f64..=1.0, 300),
    ) {
        let img = RgbImage::from_tensor(Tensor::from_vec(&[3, h, w], rgb[..3 * h * w].to_vec()).unwrap()).unwrap();
        let x = compose_channels(&img, 6, 8);
        prop_assert_eq!(x.shape(), &[7, 6, 8]);
        prop_assert!(x.data().iter().all(|v| (-1e-9..=1.0 + 1e-9).contains(v)));
    }
}
