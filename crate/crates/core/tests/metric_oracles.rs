use leapfactual::metrics::{abs_rel_error, macro_ovr_auc, morph_measure, psnr, roc_auc, ssim};
use leapfactual::oracle::softmax;
use leapfactual::tensor::Matrix;
use proptest::prelude::*;

/// P(score_pos > score_neg) + ½·P(tie) over all positive/negative pairs.
fn brute_force_auc(scores: &[f64], positive: &[bool]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &pi) in positive.iter().enumerate() {
        if !pi {
            continue;
        }
        for (j, &pj) in positive.iter().enumerate() {
            if pj {
                continue;
            }
            pairs += 1.0;
            if scores[i] > scores[j] {
                wins += 1.0;
            } else if scores[i] == scores[j] {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

fn scored_items() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    (2usize..=200).prop_flat_map(|n| {
        // coarse scores so ties are common
        let scores = prop::collection::vec((0u8..20).prop_map(|v| v as f64 / 19.0), n);
        let labels = prop::collection::vec(any::<bool>(), n);
        (scores, labels)
    })
}

fn nonzero() -> impl Strategy<Value = f64> {
    prop_oneof![-1e3f64..-1e-3, 1e-3f64..1e3]
}

proptest! {
    #[test]
    fn auc_equals_pair_counting((scores, mut positive) in scored_items()) {
        positive[0] = true;
        positive[1] = false;
        let auc = roc_auc(&scores, &positive).unwrap();
        prop_assert!((auc - brute_force_auc(&scores, &positive)).abs() <= 1e-9);
    }

    #[test]
    fn abs_rel_error_is_scale_free(m in -1e3f64..1e3, r in nonzero(), k in nonzero()) {
        let a = abs_rel_error(m, r).unwrap();
        let b = abs_rel_error(m * k, r * k).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
    }

    #[test]
    fn softmax_rows_are_distributions(logits in prop::collection::vec(-30.0f64..30.0, 12)) {
        let p = softmax(&Matrix::from_vec(3, 4, logits).unwrap());
        for r in 0..3 {
            let row = p.row(r);
            prop_assert!(row.iter().all(|&v| (0.0..=1.0).contains(&v)));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn morphometrics_are_translation_invariant(dr in 0usize..8, dc in 0usize..8, bend in 0usize..4) {
        let glyph = |r0: usize, c0: usize| {
            let mut img = vec![0.0; 28 * 28];
            for i in 0..12 {
                // slanted stroke two pixels wide plus a foot
                let (r, c) = (r0 + i, c0 + 6 - i / 3 + bend * (i / 6));
                img[r * 28 + c] = 1.0;
                img[r * 28 + c + 1] = 0.8;
            }
            for c in 0..5 {
                img[(r0 + 11) * 28 + c0 + c] = 1.0;
            }
            img
        };
        let base = morph_measure(&glyph(2, 2), 28, 28).unwrap();
        let moved = morph_measure(&glyph(2 + dr, 2 + dc), 28, 28).unwrap();
        prop_assert_eq!(base.length, moved.length);
        prop_assert_eq!(base.thickness, moved.thickness);
        prop_assert_eq!(base.width, moved.width);
        prop_assert_eq!(base.height, moved.height);
        prop_assert!((base.slant - moved.slant).abs() < 1e-6);
    }
}

#[test]
fn auc_examples() {
    assert_eq!(roc_auc(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]).unwrap(), 0.75);
    assert_eq!(roc_auc(&[0.5; 4], &[true, false, true, false]).unwrap(), 0.5);
    assert!(roc_auc(&[0.1, 0.2], &[true, true]).is_err());
    let proba = vec![vec![0.9, 0.1], vec![0.2, 0.8], vec![0.6, 0.4]];
    assert_eq!(macro_ovr_auc(&proba, &[0, 1, 0], 2).unwrap(), 1.0);
}

#[test]
fn psnr_matches_hand_evaluation() {
    // x peak 0.8; squared errors 0.01, 0, 0.04, 0.09 -> MSE 0.035
    let x = [0.8, 0.2, 0.5, 0.0];
    let y = [0.7, 0.2, 0.7, 0.3];
    let expected = 10.0 * (0.64f64 / 0.035).log10();
    assert!((psnr(&x, &y).unwrap() - expected).abs() <= 1e-9);
}

#[test]
fn ssim_matches_hand_evaluation() {
    // x = (0, 1, 0, 1): μ 0.5, σ² 0.25. y = (0.2, 0.6, 0.2, 0.6): μ 0.4, σ² 0.04, σ_xy 0.1.
    let x = [0.0, 1.0, 0.0, 1.0];
    let y = [0.2, 0.6, 0.2, 0.6];
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let expected = (2.0 * 0.5 * 0.4 + c1) * (2.0 * 0.1 + c2) / ((0.25 + 0.16 + c1) * (0.25 + 0.04 + c2));
    assert!((ssim(&x, &y, 1.0).unwrap() - expected).abs() <= 1e-9);
    // anti-correlated structure is penalised
    let flipped = [1.0, 0.0, 1.0, 0.0];
    assert!(ssim(&x, &flipped, 1.0).unwrap() < 0.0);
}
