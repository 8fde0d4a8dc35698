//! UCR archive text format: one instance per line, label first.

use super::{Dataset, LabelMap, LabeledInstance, TimeSeries};
use crate::error::{CfxError, Result};

fn is_separator(c: char) -> bool {
    c == '\t' || c == ',' || c == ' '
}

pub fn parse_ucr_tsv(text: &str) -> Result<Dataset> {
    let mut labels = LabelMap::default();
    let mut instances = Vec::new();
    let mut length = None;

    for (lineno, raw) in text.lines().enumerate().map(|(i, l)| (i + 1, l)) {
        let line = raw.trim_end_matches('\r');
        let mut tokens = line.split(is_separator).filter(|t| !t.is_empty());
        let Some(label) = tokens.next() else {
            continue;
        };
        let values = tokens
            .map(|tok| {
                tok.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| CfxError::parse(lineno, format!("non-numeric value {tok:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if values.is_empty() {
            return Err(CfxError::parse(lineno, "row has a label but no values"));
        }
        match length {
            None => length = Some(values.len()),
            Some(t) if t != values.len() => {
                return Err(CfxError::parse(
                    lineno,
                    format!("ragged row: expected {t} values, found {}", values.len()),
                ))
            }
            Some(_) => {}
        }
        let label = labels.index_of(label);
        let series = TimeSeries::univariate(values).map_err(|e| CfxError::parse(lineno, e.to_string()))?;
        instances.push(LabeledInstance { series, label });
    }

    if instances.is_empty() {
        return Err(CfxError::parse(0, "empty input"));
    }
    Dataset::new(instances, labels.into_names())
}

pub fn serialize_ucr_tsv(dataset: &Dataset) -> Result<String> {
    if dataset.channels() != 1 {
        return Err(CfxError::Format(format!(
            "UCR text format holds univariate series only, dataset has {} channels",
            dataset.channels()
        )));
    }
    for name in dataset.class_names() {
        if name.is_empty() || name.contains(is_separator) || name.contains(['\n', '\r']) {
            return Err(CfxError::Format(format!("class name {name:?} cannot be written as a UCR label")));
        }
    }
    let mut out = String::new();
    for inst in dataset.instances() {
        out.push_str(&dataset.class_names()[inst.label]);
        for v in inst.series.values() {
            out.push('\t');
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_line_fixture() {
        let d = parse_ucr_tsv("1\t0.1\t0.2\t0.3\n2\t0.0\t0.0\t0.0").unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.shape(), (1, 3));
        assert_eq!(d.class_names(), &["1".to_string(), "2".to_string()]);
        assert_eq!(d.labels().collect::<Vec<_>>(), vec![0, 1]);
        assert_eq!(d.instance(0).series.values(), &[0.1, 0.2, 0.3]);
    }

    #[test]
    fn ragged_rows_report_line() {
        match parse_ucr_tsv("1\t0.1\n1\t0.1\t0.2") {
            Err(CfxError::Parse { line, message }) => {
                assert_eq!(line, 2);
                assert!(message.contains("ragged"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn mixed_separators_and_crlf() {
        let d = parse_ucr_tsv("-1, 1.5  2.5\r\n\r\n1\t3,4\r\n").unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.class_names(), &["-1".to_string(), "1".to_string()]);
        assert_eq!(d.instance(1).series.values(), &[3.0, 4.0]);
    }

    #[test]
    fn errors() {
        assert!(matches!(parse_ucr_tsv(""), Err(CfxError::Parse { .. })));
        assert!(matches!(parse_ucr_tsv("  \n\n"), Err(CfxError::Parse { .. })));
        assert!(matches!(parse_ucr_tsv("1\t0.1\tabc"), Err(CfxError::Parse { line: 1, .. })));
        assert!(matches!(parse_ucr_tsv("1\t0.1\tNaN"), Err(CfxError::Parse { line: 1, .. })));
    }

    #[test]
    fn round_trip_fixture() {
        let d = parse_ucr_tsv("1\t0.1\t0.2\t0.3\n2\t0.0\t0.0\t0.0").unwrap();
        let again = parse_ucr_tsv(&serialize_ucr_tsv(&d).unwrap()).unwrap();
        assert_eq!(d, again);
    }
}
