mod common;

use std::collections::BTreeMap;

use common::*;
use hybridtrack::association::{greedy_assign_with, mutual_check, AssignOrder};
use hybridtrack::correlation::{CorrelationMatrix, MatrixKind};
use hybridtrack::flow::{decode_flo, encode_flo, warp_mask, FlowField};
use hybridtrack::instance::{loss_gradients, match_softmax, EmbeddingHeadParams, LossKind, MatchOptions};
use hybridtrack::mask::{decode_segmap, encode_segmap, extract_instances, InstanceMask};
use hybridtrack::pixel::{dice, pixel_correlation};
use hybridtrack::vpq::{vpq_report, vpq_window, DEFAULT_WINDOWS};
use proptest::prelude::*;
use rand::Rng;

fn matrix_strategy() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1usize..6, 1usize..6).prop_flat_map(|(m, n)| {
        prop::collection::vec(prop::collection::vec(0.0f64..1.0, n), m)
    })
}

/// Flow components in eighths, skipping exact halves.
fn flow_component() -> impl Strategy<Value = f32> {
    (-40i32..40).prop_map(|k| if k.rem_euclid(8) == 4 { k + 1 } else { k } as f32 / 8.0)
}

fn mirror_mask(m: &InstanceMask) -> InstanceMask {
    let w = m.width();
    InstanceMask::from_pixels(w, m.height(), m.class_id(), m.instance_id(), m.pixels().map(|(x, y)| (w - 1 - x, y)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn instances_partition_non_void_pixels(seed in any::<u64>()) {
        let mut r = rng(seed);
        let map = random_map(&mut r, 12, 9, 6, 3);
        let masks = extract_instances(&map);
        let mut cover = vec![0usize; 12 * 9];
        for m in &masks {
            prop_assert!(!m.is_empty());
            for (x, y) in m.pixels() {
                cover[y * 12 + x] += 1;
                prop_assert_eq!(map.label(x, y).class_id, m.class_id());
                prop_assert_eq!(map.label(x, y).instance_id, m.instance_id());
            }
        }
        for (k, &l) in map.labels().iter().enumerate() {
            prop_assert_eq!(cover[k], usize::from(!map.is_void(l)));
        }
    }

    #[test]
    fn dice_is_symmetric_and_bounded(seed in any::<u64>(), d1 in 0.0f64..1.0, d2 in 0.0f64..1.0) {
        let mut r = rng(seed);
        let a = random_mask(&mut r, 10, 8, d1, 10, 1);
        let b = random_mask(&mut r, 10, 8, d2, 10, 2);
        let ab = dice(&a, &b).unwrap();
        prop_assert_eq!(ab, dice(&b, &a).unwrap());
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(ab, set_dice(&pixel_set(&a), &pixel_set(&b)));
        if !a.is_empty() {
            prop_assert_eq!(dice(&a, &a).unwrap(), 1.0);
        }
    }

    #[test]
    fn warping_never_grows_a_mask(seed in any::<u64>(), sigma in 0.0f64..4.0) {
        let mut r = rng(seed);
        let m = random_mask(&mut r, 11, 7, 0.4, 10, 1);
        let flow = FlowField::zeros(11, 7).with_gaussian_noise(sigma, seed).unwrap();
        let warped = warp_mask(&m, &flow).unwrap();
        prop_assert!(warped.area() <= m.area());
        prop_assert_eq!(pixel_set(&warped), set_warp(&pixel_set(&m), flow.vectors(), 11, 7));
    }

    #[test]
    fn warping_commutes_with_mirroring(
        seed in any::<u64>(),
        comps in prop::collection::vec((flow_component(), flow_component()), 9 * 6),
    ) {
        let mut r = rng(seed);
        let m = random_mask(&mut r, 9, 6, 0.5, 10, 1);
        let flow = FlowField::new(9, 6, comps.iter().map(|&(u, v)| [u, v]).collect()).unwrap();
        let lhs = mirror_mask(&warp_mask(&m, &flow).unwrap());
        let rhs = warp_mask(&mirror_mask(&m), &flow.mirrored()).unwrap();
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn greedy_is_injective_and_respects_tau(rows in matrix_strategy(), tau in 0.0f64..1.0, by_row in any::<bool>()) {
        let m = CorrelationMatrix::from_rows(MatrixKind::Fused, &rows).unwrap();
        let order = if by_row { AssignOrder::RowIndex } else { AssignOrder::BestScore };
        let a = greedy_assign_with(&m, tau, order);
        let mut rows_seen = vec![false; m.rows()];
        let mut cols_seen = vec![false; m.cols()];
        for mm in &a.matches {
            prop_assert!(!rows_seen[mm.row] && !cols_seen[mm.col]);
            rows_seen[mm.row] = true;
            cols_seen[mm.col] = true;
            prop_assert!(mm.score >= tau);
            prop_assert_eq!(mm.score, m.get(mm.row, mm.col));
        }
        prop_assert_eq!(a.matches.len() + a.unmatched_rows.len(), m.rows());
        prop_assert_eq!(a.matches.len() + a.unmatched_cols.len(), m.cols());
    }

    #[test]
    fn mutual_check_is_a_monotone_filter(rows in matrix_strategy(), tau in 0.0f64..0.5) {
        let m = CorrelationMatrix::from_rows(MatrixKind::Fused, &rows).unwrap();
        let a = greedy_assign_with(&m, tau, AssignOrder::BestScore);
        let checked = mutual_check(&m, &a);
        for mm in &checked.matches {
            prop_assert!(a.matches.contains(mm));
        }
        prop_assert_eq!(mutual_check(&m, &checked), checked.clone());
        let fewer = hybridtrack::association::Assignment {
            matches: a.matches.iter().copied().skip(1).collect(),
            ..a.clone()
        };
        for mm in &mutual_check(&m, &fewer).matches {
            prop_assert!(checked.matches.contains(mm));
        }
    }

    #[test]
    fn softmax_rows_are_distributions(rows in matrix_strategy(), shift in -50.0f64..50.0) {
        let scaled: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|v| v * 20.0).collect()).collect();
        let d = match_softmax(&scaled);
        for row in &d.probs {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(row.iter().all(|&p| p > 0.0 && p <= 1.0));
        }
        let shifted: Vec<Vec<f64>> = scaled.iter().map(|r| r.iter().map(|v| v + shift).collect()).collect();
        let e = match_softmax(&shifted);
        for (a, b) in d.probs.iter().flatten().zip(e.probs.iter().flatten()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn segmap_and_flo_round_trip(seed in any::<u64>(), w in 1usize..14, h in 1usize..10) {
        let mut r = rng(seed);
        let map = random_map(&mut r, w.max(1), h.max(1), 4, 65535);
        let bytes = encode_segmap(&map);
        let back = decode_segmap(&bytes).unwrap();
        prop_assert_eq!(encode_segmap(&back), bytes);
        prop_assert_eq!(back, map);
        let flow = FlowField::zeros(w, h).with_gaussian_noise(3.0, seed).unwrap();
        let fb = encode_flo(&flow);
        prop_assert_eq!(encode_flo(&decode_flo(&fb).unwrap()), fb);
    }

    #[test]
    fn vpq_ignores_predicted_id_values(seed in any::<u64>()) {
        let mut r = rng(seed);
        let gt: Vec<_> = (0..4).map(|_| random_map(&mut r, 10, 8, 6, 3)).collect();
        let pred: Vec<_> = (0..4).map(|_| random_map(&mut r, 10, 8, 6, 3)).collect();
        let mut perm: Vec<u16> = (1..=3).collect();
        use rand::seq::SliceRandom;
        perm.shuffle(&mut r);
        let offset: u16 = r.random_range(0..1000);
        let relabeled: Vec<_> = pred
            .iter()
            .map(|m| m.map_instances(|l| perm[l.instance_id as usize - 1] + offset).unwrap())
            .collect();
        prop_assert_eq!(
            vpq_report(&pred, &gt, &DEFAULT_WINDOWS).unwrap(),
            vpq_report(&relabeled, &gt, &DEFAULT_WINDOWS).unwrap()
        );
    }

    #[test]
    fn single_frame_window_is_image_pq(seed in any::<u64>()) {
        let mut r = rng(seed);
        let gt = random_map(&mut r, 10, 8, 5, 3);
        let pred = random_map(&mut r, 10, 8, 5, 3);
        let got: BTreeMap<u16, _> = vpq_window(std::slice::from_ref(&pred), std::slice::from_ref(&gt), 1)
            .unwrap()
            .into_iter()
            .map(|c| (c.class_id, (c.tp, c.fp, c.fn_, c.iou_sum)))
            .collect();
        prop_assert_eq!(got, image_pq_oracle(&pred, &gt));
    }

    #[test]
    fn pixel_correlation_matches_set_oracle(seed in any::<u64>(), gated in any::<bool>()) {
        let mut r = rng(seed);
        let prev: Vec<_> = (0..3).map(|k| random_blob(&mut r, 12, 10, 10 + (k % 2) as u16, k as u16 + 1)).collect();
        let cur: Vec<_> = (0..4).map(|k| random_blob(&mut r, 12, 10, 10 + (k % 2) as u16, k as u16 + 1)).collect();
        let flow = FlowField::zeros(12, 10).with_gaussian_noise(1.5, seed).unwrap();
        let m = pixel_correlation(&prev, &flow, &cur, gated).unwrap();
        prop_assert_eq!(m.to_rows(), pixel_correlation_oracle(&prev, flow.vectors(), &cur, gated));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn gradients_match_finite_differences(seed in any::<u64>(), cosine in any::<bool>(), binary in any::<bool>()) {
        let (prev, cur, sup) = gradient_toy(seed, 6);
        let params = EmbeddingHeadParams::init(6, 5, 4, seed ^ 0x5eed).unwrap();
        let opts = MatchOptions {
            loss: if binary { LossKind::Binary } else { LossKind::Categorical },
            cosine,
        };
        let (_, grad) = loss_gradients(&prev, &cur, &params, &sup, opts).unwrap();
        let err = max_fd_error(&prev, &cur, &params, &sup, opts, &grad, 1e-5);
        prop_assert!(err <= 1e-4, "relative error {}", err);
    }
}
