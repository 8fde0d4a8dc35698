mod common;

use cfx_core::distance::{changed_segments, dtw, frechet, l0_changed, minkowski, DistanceConfig, Metric, Norm};
use common::{dtw_by_enumeration, frechet_recursive, univariate};
use proptest::prelude::*;

fn series(max: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0f64..3.0, 1..=max)
}

fn pair(max: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1..=max).prop_flat_map(|n| (prop::collection::vec(-3.0f64..3.0, n), prop::collection::vec(-3.0f64..3.0, n)))
}

fn dtw_cfg() -> DistanceConfig {
    DistanceConfig::with_metric(Metric::Dtw)
}

proptest! {
    #[test]
    fn dtw_equals_path_enumeration(a in series(7), b in series(7)) {
        let d = dtw(&univariate(a.clone()), &univariate(b.clone()), &dtw_cfg()).unwrap();
        prop_assert_eq!(d, dtw_by_enumeration(&a, &b));
    }

    #[test]
    fn frechet_equals_recursion(a in series(8), b in series(8)) {
        prop_assert_eq!(frechet(&univariate(a.clone()), &univariate(b.clone())).unwrap(), frechet_recursive(&a, &b));
    }

    #[test]
    fn dtw_never_exceeds_l1((a, b) in pair(16)) {
        let (a, b) = (univariate(a), univariate(b));
        prop_assert!(dtw(&a, &b, &dtw_cfg()).unwrap() <= minkowski(&a, &b, Norm::L1).unwrap() + 1e-12);
    }

    #[test]
    fn metrics_are_symmetric_and_non_negative((a, b) in pair(12)) {
        let (a, b) = (univariate(a), univariate(b));
        for metric in [Metric::L1, Metric::L2, Metric::Linf, Metric::Dtw, Metric::Frechet] {
            let cfg = DistanceConfig::with_metric(metric);
            let ab = cfg.distance(&a, &b).unwrap();
            prop_assert!(ab >= 0.0);
            prop_assert!((ab - cfg.distance(&b, &a).unwrap()).abs() <= 1e-12);
            prop_assert_eq!(cfg.distance(&a, &a).unwrap(), 0.0);
        }
    }

    #[test]
    fn minkowski_matches_naive_sums((a, b) in pair(20)) {
        let diffs: Vec<f64> = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).collect();
        let mut l1 = 0.0;
        let mut l2 = 0.0;
        let mut linf: f64 = 0.0;
        for d in &diffs {
            l1 += d;
            l2 += d * d;
            linf = linf.max(*d);
        }
        let (a, b) = (univariate(a), univariate(b));
        prop_assert!((minkowski(&a, &b, Norm::L1).unwrap() - l1).abs() <= 1e-12);
        prop_assert!((minkowski(&a, &b, Norm::L2).unwrap() - l2.sqrt()).abs() <= 1e-12);
        prop_assert_eq!(minkowski(&a, &b, Norm::Linf).unwrap(), linf);
    }

    #[test]
    fn segments_partition_the_changed_points((a, b) in pair(30), tau in 0.0f64..1.0) {
        let (a, b) = (univariate(a), univariate(b));
        let mask = changed_segments(&a, &b, tau).unwrap();
        let count = l0_changed(&a, &b, tau).unwrap().count;
        prop_assert!(mask.segment_count() <= count);
        prop_assert_eq!(mask.total_segment_length(), count);
        for w in mask.segments.windows(2) {
            prop_assert!(w[0].end + 1 < w[1].start);
        }
    }
}

#[test]
fn spec_examples() {
    let dtw_of = |a: Vec<f64>, b: Vec<f64>| dtw(&univariate(a), &univariate(b), &dtw_cfg()).unwrap();
    assert_eq!(dtw_of(vec![0.0, 0.0, 1.0], vec![0.0, 1.0, 1.0]), 0.0);
    assert_eq!(dtw_of(vec![0.0, 1.0], vec![1.0, 0.0]), 2.0);
    assert_eq!(frechet(&univariate(vec![0.0, 0.0]), &univariate(vec![0.0, 1.0])).unwrap(), 1.0);

    let mask = changed_segments(&univariate(vec![0.0; 4]), &univariate(vec![1.0, 0.0, 0.0, 1.0]), 0.0).unwrap();
    let spans: Vec<_> = mask.segments.iter().map(|s| (s.channel, s.start, s.end)).collect();
    assert_eq!(spans, [(0, 0, 0), (0, 3, 3)]);
}
