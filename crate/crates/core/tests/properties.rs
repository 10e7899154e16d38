// SPDX-License-Identifier: MIT OR Apache-2.0

//! Property tests over the public API.

use proptest::collection::vec;
use proptest::prelude::*;

use tokseg_core::dataio::{result_from_json, result_to_json};
use tokseg_core::eval::{change_point_prf, dtw_distance, knn1_accuracy, LabeledTokens};
use tokseg_core::gaussian::{cholesky_log_det, delta_bic, free_parameters};
use tokseg_core::summarizer::{summarize_mean, summarize_uniform};
use tokseg_core::tokenizer::{detect, non_maximum_suppression};
use tokseg_core::{
    detect_splits, stats_summarize, ChangeCandidate, Segmentation, SummaryMethod, SummaryOptions,
    TimeSeries, TokenizerConfig,
};

/// A series of `len` rows and `dim` channels with values in `[-5, 5]`.
fn series(
    len: std::ops::Range<usize>,
    dim: std::ops::RangeInclusive<usize>,
) -> impl Strategy<Value = TimeSeries> {
    (len, dim).prop_flat_map(|(n, d)| {
        vec(-5.0f64..5.0, n * d).prop_map(move |v| TimeSeries::new("p", v, d).unwrap())
    })
}

/// A series with a random valid segmentation.
fn segmented() -> impl Strategy<Value = (TimeSeries, Segmentation)> {
    series(1..120, 1..=3).prop_flat_map(|s| {
        let len = s.len();
        let splits = if len > 1 {
            vec(1..len, 0..8).boxed()
        } else {
            Just(Vec::new()).boxed()
        };
        (Just(s), splits).prop_map(|(s, mut splits)| {
            splits.sort_unstable();
            splits.dedup();
            let seg = Segmentation::new(s.len(), splits).unwrap();
            (s, seg)
        })
    })
}

fn small_config() -> TokenizerConfig {
    TokenizerConfig {
        delta_max: 30,
        stride: 3,
        s_min: 8,
        ..TokenizerConfig::default()
    }
}

fn shifted(s: &TimeSeries, c: &[f64]) -> TimeSeries {
    let values = s
        .values()
        .chunks_exact(s.dim())
        .flat_map(|row| row.iter().zip(c).map(|(x, c)| x + c).collect::<Vec<_>>())
        .collect();
    TimeSeries::new(s.id(), values, s.dim()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn delta_bic_identity(d in 1usize..=4, extra in 2usize..20, seed in vec(-3.0f64..3.0, 100)) {
        let delta = d + extra;
        let w: Vec<f64> = (0..delta * d).map(|i| seed[i % seed.len()] * (1.0 + (i / 7) as f64)).collect();
        let got = delta_bic(&w, &w, d, 0.0).unwrap();
        let want = free_parameters(d) as f64 * (2.0 * delta as f64).ln();
        prop_assert!((got - want).abs() <= 1e-12, "{got} vs {want}");
    }

    #[test]
    fn delta_bic_is_translation_invariant(
        d in 1usize..=3,
        delta in 5usize..25,
        a in vec(-2.0f64..2.0, 75),
        b in vec(-2.0f64..2.0, 75),
        c in vec(-50.0f64..50.0, 3),
    ) {
        let x1: Vec<f64> = a[..delta * d].to_vec();
        let x2: Vec<f64> = b[..delta * d].to_vec();
        let shift = |x: &[f64]| -> Vec<f64> { x.iter().enumerate().map(|(i, v)| v + c[i % d]).collect() };
        let base = delta_bic(&x1, &x2, d, 1e-6).unwrap();
        let moved = delta_bic(&shift(&x1), &shift(&x2), d, 1e-6).unwrap();
        prop_assert!((base - moved).abs() <= 1e-9, "{base} vs {moved}");
    }

    #[test]
    fn cholesky_matches_naive_determinant(entries in vec(-2.0f64..2.0, 9), d in 1usize..=3) {
        // A Aᵀ + I is symmetric positive definite.
        let mut spd = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                spd[i * d + j] = (0..d).map(|k| entries[i * 3 + k] * entries[j * 3 + k]).sum::<f64>()
                    + if i == j { 1.0 } else { 0.0 };
            }
        }
        let m = |i: usize, j: usize| spd[i * d + j];
        let det = match d {
            1 => m(0, 0),
            2 => m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0),
            _ => m(0, 0) * (m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1))
                - m(0, 1) * (m(1, 0) * m(2, 2) - m(1, 2) * m(2, 0))
                + m(0, 2) * (m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0)),
        };
        let got = cholesky_log_det(&mut spd.clone(), d).unwrap();
        prop_assert!((got - det.ln()).abs() <= 1e-9 * det.ln().abs().max(1.0));
    }

    #[test]
    fn detected_splits_are_translation_invariant(s in series(40..160, 1..=2), c in vec(-100.0f64..100.0, 2)) {
        let cfg = small_config();
        let base = detect_splits(&s, &cfg).unwrap();
        let moved = detect_splits(&shifted(&s, &c), &cfg).unwrap();
        prop_assert_eq!(base, moved);
    }

    #[test]
    fn detection_respects_separation_and_window_bounds(s in series(20..200, 1..=2)) {
        let cfg = small_config();
        let d = detect(&s, &cfg).unwrap();
        prop_assert!(d.segmentation.splits().windows(2).all(|w| w[1] - w[0] >= cfg.s_min));
        for c in d.scored.iter().chain(&d.candidates) {
            prop_assert!(c.position >= c.scale && c.position + c.scale <= s.len());
        }
    }

    #[test]
    fn segments_tile_the_series((s, seg) in segmented()) {
        let segments = seg.segments();
        prop_assert_eq!(segments.first().unwrap().start, 0);
        prop_assert_eq!(segments.last().unwrap().end, s.len());
        prop_assert!(segments.windows(2).all(|w| w[0].end == w[1].start && w[0].start < w[0].end));
        prop_assert_eq!(segments.iter().map(|r| r.len()).sum::<usize>(), s.len());
    }

    #[test]
    fn mean_tokens_lie_in_the_segment_hull((s, seg) in segmented()) {
        let summary = summarize_mean(&s, &seg).unwrap();
        let dim = s.dim();
        for (i, r) in seg.segments().into_iter().enumerate() {
            for c in 0..dim {
                let col = r.clone().map(|t| s.row(t)[c]);
                let lo = col.clone().fold(f64::INFINITY, f64::min);
                let hi = col.fold(f64::NEG_INFINITY, f64::max);
                let v = summary.token(i)[c];
                prop_assert!(lo <= v && v <= hi, "{v} outside [{lo}, {hi}]");
            }
        }
    }

    #[test]
    fn step_function_resummarizes_to_itself((s, seg) in segmented()) {
        let summary = summarize_mean(&s, &seg).unwrap();
        let dim = s.dim();
        let mut values = vec![0.0; s.len() * dim];
        for (i, r) in summary.provenance.iter().enumerate() {
            for t in r.clone() {
                values[t * dim..(t + 1) * dim].copy_from_slice(summary.token(i));
            }
        }
        let step = TimeSeries::new("step", values, dim).unwrap();
        let again = summarize_mean(&step, &seg).unwrap();
        for (a, b) in summary.tokens.iter().zip(&again.tokens) {
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn uniform_token_count(s in series(1..300, 1..=2), n in 1usize..30) {
        prop_assert_eq!(summarize_uniform(&s, n).unwrap().token_count(), n.min(s.len()));
    }

    #[test]
    fn nms_output_is_separated_and_maximal(
        raw in vec((1usize..500, 0.0f64..10.0), 0..60),
        s_min in 1usize..30,
    ) {
        let mut cands: Vec<ChangeCandidate> = raw
            .into_iter()
            .map(|(position, score)| ChangeCandidate { position, score, scale: 5 })
            .collect();
        cands.sort_by_key(|c| c.position);
        cands.dedup_by_key(|c| c.position);
        let kept = non_maximum_suppression(&cands, s_min);
        prop_assert!(kept.windows(2).all(|w| w[1] - w[0] >= s_min));
        for c in cands.iter().filter(|c| !kept.contains(&c.position)) {
            prop_assert!(kept.iter().any(|&k| k.abs_diff(c.position) < s_min));
        }
    }

    #[test]
    fn results_round_trip_through_json(
        s in series(10..120, 1..=2),
        method in prop_oneof![Just(SummaryMethod::Mean), Just(SummaryMethod::Gmm), Just(SummaryMethod::Uniform)],
        seed in any::<u64>(),
    ) {
        let options = SummaryOptions { method, components: 2, chunks: 7, seed };
        let result = stats_summarize(&s, &small_config(), &options).unwrap();
        let text = result_to_json(&result).unwrap();
        let back = result_from_json(&text).unwrap();
        prop_assert_eq!(result_to_json(&back).unwrap(), text);
        prop_assert_eq!(back.summary.tokens, result.summary.tokens);
    }

    #[test]
    fn prf_is_symmetric(
        mut pred in vec(0usize..300, 0..12),
        mut truth in vec(0usize..300, 0..12),
        tol in 0usize..30,
    ) {
        pred.sort_unstable();
        pred.dedup();
        truth.sort_unstable();
        truth.dedup();
        let a = change_point_prf(&pred, &truth, tol).unwrap();
        let b = change_point_prf(&truth, &pred, tol).unwrap();
        prop_assert_eq!(a.precision, b.recall);
        prop_assert_eq!(a.recall, b.precision);
        prop_assert_eq!(a.f1, b.f1);
    }

    #[test]
    fn dtw_is_a_symmetric_nonnegative_discrepancy(
        a in vec(-3.0f64..3.0, 1..20),
        b in vec(-3.0f64..3.0, 1..20),
    ) {
        let ab = dtw_distance(&a, &b, 1).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(ab, dtw_distance(&b, &a, 1).unwrap());
        prop_assert_eq!(dtw_distance(&a, &a, 1).unwrap(), 0.0);
        if ab == 0.0 && a.len() == b.len() {
            prop_assert_eq!(&a, &b);
        }
    }

    #[test]
    fn knn_accuracy_ignores_test_order(
        items in vec((vec(-2.0f64..2.0, 1..8), any::<bool>()), 2..16),
        rotation in 0usize..16,
    ) {
        let labeled: Vec<LabeledTokens> = items
            .into_iter()
            .map(|(tokens, up)| LabeledTokens { dim: 1, tokens, label: if up { "up" } else { "down" }.into() })
            .collect();
        let (train, test) = labeled.split_at(labeled.len() / 2);
        let mut permuted = test.to_vec();
        permuted.rotate_left(rotation % test.len());
        permuted.reverse();
        prop_assert_eq!(knn1_accuracy(train, test).unwrap(), knn1_accuracy(train, &permuted).unwrap());
    }
}
