//! Restricted `.ts` grammar: header directives, then one instance per line
//! with `:`-separated channels and the class label as the last field.

use super::{Dataset, LabelMap, LabeledInstance, TimeSeries};
use crate::error::{CfxError, Result};

fn flag(line: usize, directive: &str, value: Option<&str>) -> Result<bool> {
    match value.map(str::to_ascii_lowercase).as_deref() {
        Some("true") => Ok(true),
        Some("false") => Ok(false),
        _ => Err(CfxError::parse(line, format!("{directive} expects true or false"))),
    }
}

pub fn parse_ts(text: &str) -> Result<Dataset> {
    let mut declared: Option<Vec<String>> = None;
    let mut name = None;
    let mut in_data = false;
    let mut first_seen = LabelMap::default();
    let mut rows: Vec<(usize, Vec<Vec<f64>>, String)> = Vec::new();
    let mut shape: Option<(usize, usize)> = None;

    for (lineno, raw) in text.lines().enumerate().map(|(i, l)| (i + 1, l)) {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !in_data {
            if !line.starts_with('@') {
                return Err(CfxError::parse(lineno, "expected a directive before @data"));
            }
            let mut parts = line.split_whitespace();
            let directive = parts.next().unwrap_or_default().to_ascii_lowercase();
            match directive.as_str() {
                "@problemname" => name = parts.next().map(str::to_string),
                "@univariate" | "@targetlabel" | "@dimensions" | "@serieslength" => {}
                "@timestamps" | "@missing" => {
                    if flag(lineno, &directive, parts.next())? {
                        return Err(CfxError::parse(lineno, format!("{directive} true is not supported")));
                    }
                }
                "@equallength" => {
                    if !flag(lineno, &directive, parts.next())? {
                        return Err(CfxError::parse(lineno, "variable-length series are not supported"));
                    }
                }
                "@classlabel" => {
                    if flag(lineno, &directive, parts.next())? {
                        let labels: Vec<String> = parts.map(str::to_string).collect();
                        if labels.is_empty() {
                            return Err(CfxError::parse(lineno, "@classLabel true lists no labels"));
                        }
                        declared = Some(labels);
                    }
                }
                "@data" => in_data = true,
                other => return Err(CfxError::parse(lineno, format!("unknown directive {other}"))),
            }
            continue;
        }

        let mut fields: Vec<&str> = line.split(':').collect();
        let label = fields.pop().unwrap_or_default().trim().to_string();
        if fields.is_empty() || label.is_empty() {
            return Err(CfxError::parse(lineno, "row needs at least one channel and a class label"));
        }
        let channels = fields
            .iter()
            .map(|field| {
                field
                    .split(',')
                    .map(|tok| {
                        let tok = tok.trim();
                        tok.parse::<f64>()
                            .ok()
                            .filter(|v| v.is_finite())
                            .ok_or_else(|| CfxError::parse(lineno, format!("non-numeric value {tok:?}")))
                    })
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<Vec<Vec<f64>>>>()?;
        let t = channels[0].len();
        if channels.iter().any(|c| c.len() != t) {
            return Err(CfxError::parse(lineno, "variable-length series are not supported"));
        }
        match shape {
            None => shape = Some((channels.len(), t)),
            Some((c0, t0)) => {
                if c0 != channels.len() {
                    return Err(CfxError::parse(
                        lineno,
                        format!("channel count mismatch: expected {c0}, found {}", channels.len()),
                    ));
                }
                if t0 != t {
                    return Err(CfxError::parse(lineno, "variable-length series are not supported"));
                }
            }
        }
        if declared.is_none() {
            first_seen.index_of(&label);
        }
        rows.push((lineno, channels, label));
    }

    if !in_data {
        return Err(CfxError::parse(0, "missing @data section"));
    }
    if rows.is_empty() {
        return Err(CfxError::parse(0, "no data rows after @data"));
    }
    let class_names = declared.unwrap_or_else(|| first_seen.into_names());
    let instances = rows
        .into_iter()
        .map(|(lineno, channels, label)| {
            let label = class_names
                .iter()
                .position(|n| *n == label)
                .ok_or_else(|| CfxError::parse(lineno, format!("unknown class label {label:?}")))?;
            let series = TimeSeries::from_channels(channels).map_err(|e| CfxError::parse(lineno, e.to_string()))?;
            Ok(LabeledInstance { series, label })
        })
        .collect::<Result<Vec<_>>>()?;
    let dataset = Dataset::new(instances, class_names)?;
    Ok(match name {
        Some(n) => dataset.with_name(n),
        None => dataset,
    })
}

pub fn serialize_ts(dataset: &Dataset) -> Result<String> {
    for name in dataset.class_names() {
        if name.is_empty() || name.contains(|c: char| c.is_whitespace() || c == ':' || c == ',' || c == '#') {
            return Err(CfxError::Format(format!("class name {name:?} cannot be written to a .ts file")));
        }
    }
    let mut out = String::new();
    if let Some(problem) = dataset.name() {
        if problem.is_empty() || problem.contains(char::is_whitespace) {
            return Err(CfxError::Format(format!("problem name {problem:?} cannot be written to a .ts file")));
        }
        out.push_str(&format!("@problemName {problem}\n"));
    }
    out.push_str(&format!(
        "@timeStamps false\n@missing false\n@univariate {}\n@equalLength true\n@seriesLength {}\n@classLabel true {}\n@data\n",
        dataset.channels() == 1,
        dataset.length(),
        dataset.class_names().join(" ")
    ));
    for inst in dataset.instances() {
        for c in 0..dataset.channels() {
            let channel: Vec<String> = inst.series.channel(c).iter().map(f64::to_string).collect();
            out.push_str(&channel.join(","));
            out.push(':');
        }
        out.push_str(&dataset.class_names()[inst.label]);
        out.push('\n');
    }
    Ok(out)
}
