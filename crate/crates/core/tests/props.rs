//! Property tests for the crate's structural invariants.

use proptest::prelude::*;

use smelter_core::data;
use smelter_core::imageproc::{hflip, Image};
use smelter_core::tensor::{self, kernels, ConvParams, Tensor};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn conv_preserves_spatial_dims(
        h in 1usize..8,
        w in 1usize..8,
        in_ch in 1usize..3,
        out_ch in 1usize..4,
        seed in any::<u64>(),
    ) {
        let mut state = seed;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 33) as f32 / (1u64 << 31) as f32) - 0.5
        };
        let input = Tensor::from_fn(vec![in_ch, h, w], |_| next());
        let params = ConvParams::new(
            Tensor::from_fn(vec![out_ch, in_ch, 3, 3], |_| next()),
            Tensor::from_fn(vec![out_ch], |_| next()),
        ).unwrap();
        let out = tensor::conv2d_forward(&input, &params).unwrap();
        prop_assert_eq!(out.shape(), &[out_ch, h, w]);
        prop_assert!(out.data().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn maxpool_matches_bruteforce_window_max(
        ch in 1usize..3,
        oh in 1usize..4,
        ow in 1usize..4,
        seed in any::<u64>(),
    ) {
        let (h, w) = (oh * 2, ow * 2);
        let mut state = seed | 1;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 33) as f32 / (1u64 << 31) as f32) - 0.5
        };
        let input = Tensor::from_fn(vec![ch, h, w], |_| next());
        let out = tensor::maxpool2x2_forward(&input).unwrap();
        for c in 0..ch {
            for y in 0..oh {
                for x in 0..ow {
                    let mut expect = f32::NEG_INFINITY;
                    for dy in 0..2 {
                        for dx in 0..2 {
                            let v = input.data()[c * h * w + (2 * y + dy) * w + (2 * x + dx)];
                            expect = expect.max(v);
                        }
                    }
                    prop_assert_eq!(out.data()[c * oh * ow + y * ow + x], expect);
                }
            }
        }
    }

    #[test]
    fn softmax_sums_to_one_and_shift_invariant(
        logits in prop::collection::vec(-30.0f32..30.0, 2..8),
        shift in -50.0f32..50.0,
    ) {
        let probs = kernels::softmax(&logits);
        let sum: f32 = probs.iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-6, "sum {}", sum);
        let shifted: Vec<f32> = logits.iter().map(|l| l + shift).collect();
        let probs2 = kernels::softmax(&shifted);
        for (a, b) in probs.iter().zip(&probs2) {
            prop_assert!((a - b).abs() < 1e-6, "{} vs {}", a, b);
        }
    }

    #[test]
    fn stratified_folds_partition_and_balance(
        smiles in 8usize..60,
        nonsmiles in 8usize..60,
        k in 2usize..6,
        seed in any::<u64>(),
    ) {
        prop_assume!(smiles >= k && nonsmiles >= k);
        let labels: Vec<u8> = std::iter::repeat_n(1u8, smiles)
            .chain(std::iter::repeat_n(0u8, nonsmiles))
            .collect();
        let part = data::stratified_folds(&labels, k, seed).unwrap();

        // Disjoint cover of all indices.
        let mut seen = vec![false; labels.len()];
        for fold in part.folds() {
            for &i in fold {
                prop_assert!(!seen[i], "index {} appears twice", i);
                seen[i] = true;
            }
        }
        prop_assert!(seen.iter().all(|&s| s));

        // Per-fold class counts within 1 of perfect stratification.
        for fold in part.folds() {
            for (class, total) in [(0u8, nonsmiles), (1u8, smiles)] {
                let count = fold.iter().filter(|&&i| labels[i] == class).count() as f64;
                let ideal = total as f64 / k as f64;
                prop_assert!((count - ideal).abs() <= 1.0,
                    "class {} count {} vs ideal {}", class, count, ideal);
            }
        }
    }

    #[test]
    fn hflip_is_involution_on_random_images(
        w in 1usize..12,
        h in 1usize..12,
        seed in any::<u64>(),
    ) {
        let mut state = seed;
        let img = Image::new(w, h, 3, (0..w * h * 3).map(|_| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            (state >> 56) as u8
        }).collect()).unwrap();
        prop_assert_eq!(hflip(&hflip(&img)), img);
    }
}
