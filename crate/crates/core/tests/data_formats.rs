mod common;

use cfx_core::data::{
    parse_dataset, parse_ts, parse_ucr_tsv, serialize_dataset, serialize_ts, serialize_ucr_tsv, znormalize, Dataset,
    DatasetFormat, LabeledInstance, TimeSeries,
};
use cfx_core::CfxError;
use proptest::prelude::*;

fn dataset_strategy(max_channels: usize) -> impl Strategy<Value = Dataset> {
    (2usize..=4, 1usize..=max_channels, 1usize..=12)
        .prop_flat_map(|(classes, channels, length)| {
            let instance = (prop::collection::vec(-1e6f64..1e6, channels * length), 0..classes);
            (Just(classes), Just(channels), Just(length), prop::collection::vec(instance, classes..=10))
        })
        .prop_map(|(classes, channels, length, rows)| {
            // The first `classes` rows carry labels 0..classes in order so
            // first-appearance label mapping reproduces the indices.
            let instances = rows
                .into_iter()
                .enumerate()
                .map(|(i, (values, label))| LabeledInstance {
                    series: TimeSeries::new(channels, length, values).unwrap(),
                    label: if i < classes { i } else { label },
                })
                .collect();
            Dataset::new(instances, (0..classes).map(|c| format!("k{c}")).collect()).unwrap()
        })
}

proptest! {
    #[test]
    fn ucr_round_trip(d in dataset_strategy(1)) {
        prop_assert_eq!(parse_ucr_tsv(&serialize_ucr_tsv(&d).unwrap()).unwrap(), d);
    }

    #[test]
    fn ts_round_trip(d in dataset_strategy(4)) {
        prop_assert_eq!(parse_ts(&serialize_ts(&d).unwrap()).unwrap(), d);
    }

    #[test]
    fn parsed_datasets_satisfy_invariants(d in dataset_strategy(3)) {
        let parsed = parse_dataset(&serialize_dataset(&d, DatasetFormat::Ts).unwrap(), DatasetFormat::Ts).unwrap();
        let (c, t) = parsed.shape();
        prop_assert!(c >= 1 && t >= 1);
        prop_assert!(parsed.distinct_labels() >= 2);
        for inst in parsed.instances() {
            prop_assert_eq!(inst.series.shape(), (c, t));
            prop_assert!(inst.series.values().iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn znormalize_is_idempotent(d in dataset_strategy(3)) {
        let once = znormalize(&d).unwrap();
        let twice = znormalize(&once).unwrap();
        for (a, b) in once.instances().iter().zip(twice.instances()) {
            for (x, y) in a.series.values().iter().zip(b.series.values()) {
                prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0));
            }
        }
    }
}

#[test]
fn two_line_fixtures() {
    let d = parse_ucr_tsv("1\t0.1\t0.2\t0.3\n2\t0.0\t0.0\t0.0").unwrap();
    assert_eq!((d.len(), d.channels(), d.length()), (2, 1, 3));
    assert_eq!(d.class_names(), ["1", "2"]);
    assert_eq!(d.labels().collect::<Vec<_>>(), [0, 1]);

    let d = parse_ts("@classLabel true a b\n@data\n1,2,3:a\n4,5,6:b").unwrap();
    assert_eq!((d.len(), d.channels(), d.length()), (2, 1, 3));

    let d = parse_ts("@classLabel true a\n@data\n1,2:3,4:a").unwrap();
    assert_eq!((d.len(), d.channels(), d.length()), (1, 2, 2));
}

#[test]
fn ragged_row_reports_second_line() {
    assert!(matches!(parse_ucr_tsv("1\t0.1\n1\t0.1\t0.2"), Err(CfxError::Parse { line: 2, .. })));
}

#[test]
fn multivariate_cannot_be_written_as_ucr() {
    let d = parse_ts("@classLabel true a\n@data\n1,2:3,4:a").unwrap();
    assert!(matches!(serialize_ucr_tsv(&d), Err(CfxError::Format(_))));
}

#[test]
fn files_load_by_extension() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("toy.ts");
    std::fs::write(&path, "@classLabel true a b\n@data\n1,2,3:a\n4,5,6:b\n").unwrap();
    let format = DatasetFormat::from_path(&path);
    let d = cfx_core::data::load_dataset(&path, format).unwrap();
    assert_eq!(d.shape(), (1, 3));
}
