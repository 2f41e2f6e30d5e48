use std::f64::consts::PI;

use clvq::arrangement::{lines_2d, max_regions};
use clvq::arrgraph::{build_region_graph, canonical_form};
use clvq::baselines::{lbg_design, PointCodebook};
use clvq::estimation::{estimate_codebook, estimate_entropy, evaluate, EstimationParams, Objective, PoolEvaluator};
use clvq::initsearch::{genetic_init, random_init, GeneticParams};
use clvq::optimizer::{design, design_multi, InitStrategy, OptimizerParams};
use clvq::{Arrangement, RegionLabel, SampleStream, SourceModel};
use proptest::prelude::*;

fn small_params() -> EstimationParams {
    EstimationParams::new(50, 20_000, 5_000).unwrap()
}

#[test]
fn axis_line_codebook_matches_half_normal_centroids() {
    let src = SourceModel::gaussian(2);
    let arr = lines_2d(&[(1.0, 0.0, 0.0)]).unwrap();
    let ev = evaluate(&arr, &src, &EstimationParams::reporting(), 3).unwrap();
    let c = (2.0 / PI).sqrt();
    for e in ev.codebook.entries() {
        assert!((e.centroid[0].abs() - c).abs() < 0.01, "{:?}", e.centroid);
        assert!(e.centroid[1].abs() < 0.01);
    }
    assert!((ev.mse.mse - (2.0 - 2.0 / PI)).abs() < 0.02);
    assert!((ev.entropy - 1.0).abs() < 1e-3);
}

#[test]
fn pool_evaluator_is_deterministic() {
    let src = SourceModel::uniform(2);
    let arr = random_init(&src, 3, &mut SampleStream::new(src, 1)).unwrap();
    let mut a = PoolEvaluator::new(&src, &small_params(), 9).unwrap();
    let mut b = PoolEvaluator::new(&src, &small_params(), 9).unwrap();
    assert_eq!(a.value(&arr, Objective::MseMin), b.value(&arr, Objective::MseMin));
    assert_eq!(a.value(&arr, Objective::EntropyMax), b.value(&arr, Objective::EntropyMax));
}

#[test]
fn design_improves_on_its_start() {
    let src = SourceModel::gaussian(2);
    let init = random_init(&src, 3, &mut SampleStream::new(src, 4)).unwrap();
    let params = OptimizerParams {
        t_max: 30,
        estimation: small_params(),
        ..OptimizerParams::default()
    };
    let before = evaluate(&init, &src, &params.reporting, 77).unwrap().mse.mse;
    let report = design(&src, 3, &params, &init, &mut SampleStream::new(src, 5)).unwrap();
    assert!(report.final_mse <= before + 0.02, "{} vs {before}", report.final_mse);
    assert_eq!(report.trace.len(), 30);
    assert!(report.trace.windows(2).all(|w| w[1].best <= w[0].best));
    assert!(report.region_count <= max_regions(2, 3) as usize);
}

#[test]
fn design_multi_independent_of_jobs() {
    let src = SourceModel::uniform(2);
    let params = OptimizerParams {
        t_max: 10,
        estimation: small_params(),
        reporting: small_params(),
        ..OptimizerParams::default()
    };
    let a = design_multi(&src, 2, &params, &InitStrategy::Random, 3, 8, 1).unwrap();
    let b = design_multi(&src, 2, &params, &InitStrategy::Random, 3, 8, 3).unwrap();
    assert_eq!(serde_json::to_string(&a.reports).unwrap(), serde_json::to_string(&b.reports).unwrap());
    assert!(a.best().final_mse <= a.mean_mse + 1e-12);
}

#[test]
fn genetic_init_returns_trace_per_generation() {
    let src = SourceModel::gaussian(3);
    let params = GeneticParams {
        generations: 8,
        ..GeneticParams::default()
    };
    let mut eval = PoolEvaluator::new(&src, &EstimationParams::genetic(), 2).unwrap();
    let (arr, trace) = genetic_init(
        &src,
        3,
        &params,
        |a| eval.value(a, Objective::MseMin),
        &mut SampleStream::new(src, 3),
    )
    .unwrap();
    assert_eq!(arr.k(), 3);
    assert_eq!(trace.len(), 8);
    let best: Vec<f64> = trace.best().collect();
    assert!(best.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn lbg_two_level_scalar() {
    let r = lbg_design(&SourceModel::gaussian(1), 2, 100, &mut SampleStream::new(SourceModel::gaussian(1), 1), 20_000)
        .unwrap();
    let mut pts: Vec<f64> = (0..2).map(|i| r.codebook.point(i)[0]).collect();
    pts.sort_by(f64::total_cmp);
    let c = (2.0 / PI).sqrt();
    assert!((pts[0] + c).abs() < 0.03 && (pts[1] - c).abs() < 0.03, "{pts:?}");
    assert_eq!(r.facet_count, 1);
}

#[test]
fn point_codebook_rejects_duplicates() {
    assert!(PointCodebook::new(vec![vec![0.0, 1.0], vec![0.0, 1.0]]).is_err());
}

#[test]
fn codebook_entropy_is_bounded_by_region_count() {
    let src = SourceModel::gaussian(2);
    let arr = random_init(&src, 4, &mut SampleStream::new(src, 6)).unwrap();
    let cb = estimate_codebook(&arr, &small_params(), &mut SampleStream::new(src, 7)).unwrap();
    let h = estimate_entropy(&arr, 20_000, &mut SampleStream::new(src, 8)).unwrap();
    assert!(h <= (cb.len() as f64).log2() + 1e-12);
}

fn arrangement_2d() -> impl Strategy<Value = Arrangement> {
    (1usize..=5).prop_flat_map(|k| {
        (
            prop::collection::vec(-1.0f64..1.0, 2 * k),
            prop::collection::vec(-1.0f64..1.0, k),
        )
            .prop_filter_map("degenerate normal", move |(w, b)| {
                Arrangement::from_flat(2, w, b).ok().filter(|a| a.is_general_position(1e-6))
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn exact_region_count_meets_bound(arr in arrangement_2d()) {
        let n = arr.enumerate_regions_exact_2d().unwrap().len() as u128;
        prop_assert_eq!(n, max_regions(2, arr.k() as u64));
    }

    #[test]
    fn labels_agree_with_covectors(arr in arrangement_2d(), x in -3.0f64..3.0, y in -3.0f64..3.0) {
        let p = [x, y];
        let cov = arr.covector(&p, 0.0).unwrap();
        prop_assert_eq!(cov.to_label(), arr.label(&p).unwrap());
    }

    #[test]
    fn label_bits_round_trip(bits in any::<u64>(), k in 1usize..=64) {
        let mask = if k == 64 { u64::MAX } else { (1u64 << k) - 1 };
        let l = RegionLabel::from_bits(bits & mask, k);
        prop_assert_eq!(RegionLabel::from_signs(&l.signs()).unwrap(), l);
    }

    #[test]
    fn positive_rescaling_keeps_labels(arr in arrangement_2d(), x in -3.0f64..3.0, y in -3.0f64..3.0) {
        let p = [x, y];
        prop_assert_eq!(arr.normalized().label(&p).unwrap(), arr.label(&p).unwrap());
    }

    #[test]
    fn canonical_form_ignores_reindexing(arr in arrangement_2d(), seed in any::<u64>()) {
        let k = arr.k();
        let mut perm: Vec<usize> = (0..k).collect();
        perm.rotate_left((seed % k as u64) as usize);
        if k > 2 && seed & 1 == 1 {
            perm.swap(0, 1);
        }
        let a = canonical_form(&build_region_graph(&arr).unwrap());
        let b = canonical_form(&build_region_graph(&arr.permuted(&perm).unwrap()).unwrap());
        prop_assert_eq!(a, b);
    }
}
