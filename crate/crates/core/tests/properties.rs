use proptest::collection::vec;
use proptest::prelude::*;

use ugmcs::dataio::{normalize_hu, resize_bilinear, resize_nearest, split_folds};
use ugmcs::evalharness::{complex_validation, in_bucket, FoldRecord, RunReport};
use ugmcs::losses::{bce, fusion_loss, FusionReduction};
use ugmcs::maskops::{compose_mcm, intersection, lc_mask, union, Grid, Mask};
use ugmcs::metrics::{dsc, iou, nsd, MetricsRecord};
use ugmcs::model::{cosine_similarity, otsu_threshold};
use ugmcs::trainer::{sgdr_lr, TrainConfig};

fn mask(h: usize, w: usize) -> impl Strategy<Value = Mask> {
    vec(0u8..=1, h * w).prop_map(move |d| Mask::new(h, w, d).unwrap())
}

fn annotation_set() -> impl Strategy<Value = Vec<Mask>> {
    (1usize..8, 1usize..8).prop_flat_map(|(h, w)| vec(mask(h, w), 2..=4))
}

fn mask_pair() -> impl Strategy<Value = (Mask, Mask)> {
    (1usize..10, 1usize..10).prop_flat_map(|(h, w)| (mask(h, w), mask(h, w)))
}

fn report(rows: &[(usize, f64)]) -> RunReport {
    let rows = rows
        .iter()
        .map(|&(i, d)| FoldRecord {
            fold: 0,
            metrics: MetricsRecord {
                sample_id: format!("s{i:03}"),
                dsc: d,
                iou: d / (2.0 - d),
                nsd: d,
            },
        })
        .collect();
    RunReport::from_rows(0, serde_json::Value::Null, rows).unwrap()
}

proptest! {
    #[test]
    fn intersection_and_union_bracket_every_annotation(masks in annotation_set()) {
        let u = union(&masks).unwrap();
        let i = intersection(&masks).unwrap();
        for m in &masks {
            prop_assert!(i.is_subset_of(m));
            prop_assert!(m.is_subset_of(&u));
        }
        let lc = lc_mask(&masks).unwrap();
        prop_assert_eq!(lc.count() + i.count(), u.count());
        prop_assert_eq!(lc.and(&i).count(), 0);
    }

    #[test]
    fn mask_algebra_ignores_annotator_order(masks in annotation_set()) {
        let mut rev = masks.clone();
        rev.reverse();
        prop_assert_eq!(union(&masks).unwrap(), union(&rev).unwrap());
        prop_assert_eq!(intersection(&masks).unwrap(), intersection(&rev).unwrap());
    }

    #[test]
    fn composed_mcm_takes_three_levels(masks in annotation_set()) {
        let u = union(&masks).unwrap();
        let i = intersection(&masks).unwrap();
        let mcm = compose_mcm(&u.to_grid(), &i.to_grid()).unwrap();
        for (px, &v) in mcm.grid.data.iter().enumerate() {
            let expect = match (u.data()[px], i.data()[px]) {
                (0, _) => 0.0,
                (1, 0) => 0.5,
                _ => 1.0,
            };
            prop_assert_eq!(v, expect);
        }
    }

    #[test]
    fn overlap_metrics_are_symmetric_and_bounded((a, b) in mask_pair()) {
        let d = dsc(&a, &b).unwrap();
        let j = iou(&a, &b).unwrap();
        prop_assert_eq!(d, dsc(&b, &a).unwrap());
        prop_assert_eq!(j, iou(&b, &a).unwrap());
        prop_assert!((0.0..=1.0).contains(&d) && (0.0..=1.0).contains(&j));
        prop_assert!(j <= d);
        prop_assert!((j - d / (2.0 - d)).abs() < 1e-12);
    }

    #[test]
    fn nsd_is_symmetric_bounded_and_monotone((a, b) in mask_pair(), tol in 0.0f64..4.0) {
        let v = nsd(&a, &b, tol).unwrap();
        prop_assert!((0.0..=1.0).contains(&v));
        prop_assert_eq!(v, nsd(&b, &a, tol).unwrap());
        prop_assert!(nsd(&a, &b, tol + 1.0).unwrap() >= v);
        prop_assert_eq!(nsd(&a, &a, tol).unwrap(), 1.0);
    }

    #[test]
    fn otsu_threshold_lies_within_range(values in vec(-1e3f64..1e3, 1..80), bins in 2usize..300) {
        let t = otsu_threshold(&values, bins).unwrap();
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(t >= lo && t <= hi);
        if lo < hi {
            prop_assert!(t > lo);
        }
    }

    #[test]
    fn otsu_commutes_with_exact_affine_maps(values in vec(0u8..50, 2..60), exp in -1i32..=3, shift in -10i32..10) {
        // Power-of-two scales and integer shifts keep every bin computation exact.
        let (scale, shift) = (2f64.powi(exp), f64::from(shift));
        let v: Vec<f64> = values.iter().map(|&x| f64::from(x)).collect();
        let w: Vec<f64> = v.iter().map(|x| x * scale + shift).collect();
        let (t, s) = (otsu_threshold(&v, 16).unwrap(), otsu_threshold(&w, 16).unwrap());
        prop_assert!((t * scale + shift - s).abs() < 1e-9 * (1.0 + s.abs()));
    }

    #[test]
    fn cosine_similarity_is_scale_invariant(a in vec(-5.0f64..5.0, 8), b in vec(-5.0f64..5.0, 8), c in 0.01f64..100.0) {
        prop_assume!(a.iter().any(|v| v.abs() > 1e-3) && b.iter().any(|v| v.abs() > 1e-3));
        let s = cosine_similarity(&a, &b);
        let scaled: Vec<f64> = a.iter().map(|v| v * c).collect();
        prop_assert!((cosine_similarity(&scaled, &b) - s).abs() < 1e-12);
        prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&s));
        prop_assert!((cosine_similarity(&a, &a) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fusion_of_identical_annotations_is_plain_bce(m in mask(4, 5), p in vec(0.0f64..=1.0, 20), k in 2usize..=4) {
        let pred = Grid::new(4, 5, p).unwrap();
        let fused = fusion_loss(&pred, &vec![m.clone(); k], FusionReduction::Mean).unwrap();
        let summed = fusion_loss(&pred, &vec![m.clone(); k], FusionReduction::Sum).unwrap();
        let plain = bce(&pred, &m).unwrap();
        prop_assert!((fused - plain).abs() < 1e-12);
        prop_assert!((summed - k as f64 * plain).abs() < 1e-9);
        prop_assert!(plain.is_finite() && plain >= 0.0);
    }

    #[test]
    fn sgdr_stays_in_range_and_repeats(epoch in 0usize..1000, period in 1usize..100, lr_max in 1e-6f64..1.0) {
        let cfg = TrainConfig { lr_max, lr_min: 0.0, restart_period: period, ..TrainConfig::default() };
        let lr = sgdr_lr(epoch, &cfg);
        prop_assert!(lr >= 0.0 && lr <= lr_max);
        prop_assert_eq!(lr, sgdr_lr(epoch + period, &cfg));
        if epoch % period == 0 {
            prop_assert_eq!(lr, lr_max);
        }
    }

    #[test]
    fn complex_buckets_nest(rows in vec(0.0f64..=1.0, 1..60)) {
        let rows: Vec<(usize, f64)> = rows.into_iter().enumerate().collect();
        let base = report(&rows);
        let buckets = complex_validation(&base, &base, &[60, 70, 80]).unwrap();
        for w in buckets.windows(2) {
            prop_assert!(w[0].selected_ids.iter().all(|id| w[1].selected_ids.contains(id)));
        }
        for b in &buckets {
            let want = rows.iter().filter(|(_, d)| in_bucket(*d, b.threshold)).count();
            prop_assert_eq!(b.count(), want);
            if b.count() > 0 {
                prop_assert_eq!(b.delta_dsc, Some(0.0));
            }
        }
    }

    #[test]
    fn fold_split_partitions_ids(n in 2usize..60, k in 2usize..6, seed in any::<u64>()) {
        prop_assume!(n >= k);
        let ids: Vec<String> = (0..n).map(|i| format!("id{i}")).collect();
        let split = split_folds(&ids, k, seed).unwrap();
        prop_assert_eq!(split.assignments.len(), n);
        let sizes = split.fold_sizes();
        prop_assert_eq!(sizes.iter().sum::<usize>(), n);
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        let mut shuffled = ids.clone();
        shuffled.reverse();
        prop_assert_eq!(split, split_folds(&shuffled, k, seed).unwrap());
    }

    #[test]
    fn resizing_keeps_ranges(m in mask(6, 7), h in 1usize..20, w in 1usize..20) {
        let r = resize_nearest(&m, h, w);
        prop_assert_eq!(r.shape(), (h, w));
        prop_assert!(r.is_binary());
        let g = resize_bilinear(&m.to_grid(), h, w);
        prop_assert!(g.data.iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert_eq!(resize_nearest(&m, 6, 7), m);
    }

    #[test]
    fn hu_normalization_clips_to_unit_interval(v in vec(-3000.0f64..3000.0, 12)) {
        let g = normalize_hu(&Grid::new(3, 4, v.clone()).unwrap()).unwrap();
        for (&raw, &n) in v.iter().zip(&g.data) {
            prop_assert!((0.0..=1.0).contains(&n));
            prop_assert!((n - (raw.clamp(-1000.0, 1000.0) + 1000.0) / 2000.0).abs() < 1e-15);
        }
    }
}
