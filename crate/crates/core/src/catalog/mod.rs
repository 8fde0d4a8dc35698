//! Catalog of published counterfactual methods for time series
//! classification, with a flag for the ones this crate implements.
//!
//! The table is embedded data; see `methods.tsv`.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::Serialize;

use crate::error::{CfxError, Result};

const TABLE: &str = include_str!("methods.tsv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DataKind {
    #[serde(rename = "U")]
    Univariate,
    #[serde(rename = "M")]
    Multivariate,
    #[serde(rename = "U/M")]
    Both,
}

impl FromStr for DataKind {
    type Err = CfxError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "U" => Ok(DataKind::Univariate),
            "M" => Ok(DataKind::Multivariate),
            "U/M" | "UM" => Ok(DataKind::Both),
            other => Err(CfxError::Format(format!("unknown data kind {other:?}"))),
        }
    }
}

impl fmt::Display for DataKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DataKind::Univariate => "U",
            DataKind::Multivariate => "M",
            DataKind::Both => "U/M",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Category {
    #[serde(rename = "Optimization-based")]
    Optimization,
    #[serde(rename = "Evolutionary")]
    Evolutionary,
    #[serde(rename = "Instance-based")]
    Instance,
    #[serde(rename = "Latent space")]
    Latent,
    #[serde(rename = "Segment-based")]
    Segment,
    #[serde(rename = "Hybrid")]
    Hybrid,
}

impl Category {
    pub const ALL: [Category; 6] = [
        Category::Optimization,
        Category::Evolutionary,
        Category::Instance,
        Category::Latent,
        Category::Segment,
        Category::Hybrid,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Category::Optimization => "Optimization-based",
            Category::Evolutionary => "Evolutionary",
            Category::Instance => "Instance-based",
            Category::Latent => "Latent space",
            Category::Segment => "Segment-based",
            Category::Hybrid => "Hybrid",
        }
    }
}

/// Accepts the display label or a short form, case-insensitively
/// (`optimization`, `instance`, `latent`, `latent_space`, ...).
impl FromStr for Category {
    type Err = CfxError;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace(['_', ' '], "-");
        let key = key.strip_suffix("-based").unwrap_or(&key);
        match key {
            "optimization" => Ok(Category::Optimization),
            "evolutionary" => Ok(Category::Evolutionary),
            "instance" => Ok(Category::Instance),
            "latent" | "latent-space" => Ok(Category::Latent),
            "segment" => Ok(Category::Segment),
            "hybrid" => Ok(Category::Hybrid),
            _ => Err(CfxError::Config(format!(
                "unknown category {s:?}; expected one of: {}",
                Category::ALL.map(Category::label).join(", ")
            ))),
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MethodEntry {
    pub id: String,
    pub name: String,
    pub year: u16,
    pub data: DataKind,
    pub category: Category,
    pub core_idea: String,
    pub implemented: bool,
    /// Generator id that realizes this method, when implemented.
    pub generator: Option<String>,
}

fn parse_table(text: &str) -> Result<Vec<MethodEntry>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        let [id, name, year, data, category, implemented, generator, core_idea] = f[..] else {
            return Err(CfxError::parse(n + 1, format!("expected 8 fields, found {}", f.len())));
        };
        out.push(MethodEntry {
            id: id.to_string(),
            name: name.to_string(),
            year: year.parse().map_err(|_| CfxError::parse(n + 1, "bad year"))?,
            data: data.parse()?,
            category: category.parse()?,
            core_idea: core_idea.to_string(),
            implemented: implemented == "yes",
            generator: (generator != "-").then(|| generator.to_string()),
        });
    }
    Ok(out)
}

/// All catalog entries in table order.
pub fn catalog() -> &'static [MethodEntry] {
    static ENTRIES: OnceLock<Vec<MethodEntry>> = OnceLock::new();
    ENTRIES.get_or_init(|| parse_table(TABLE).expect("embedded method table is well-formed"))
}

/// Entries in table order, optionally restricted to one category.
pub fn list_methods(filter: Option<Category>) -> Vec<&'static MethodEntry> {
    catalog()
        .iter()
        .filter(|m| filter.is_none_or(|c| m.category == c))
        .collect()
}

/// Fixed-width text rendering used by the command-line listing.
pub fn render_table(entries: &[&MethodEntry]) -> String {
    let mut out = format!("{:<16} {:<5} {:<4} {:<19} {:<13} {}\n", "method", "year", "data", "category", "generator", "core idea");
    for m in entries {
        out.push_str(&format!(
            "{:<16} {:<5} {:<4} {:<19} {:<13} {}\n",
            m.name,
            m.year,
            m.data.to_string(),
            m.category.label(),
            m.generator.as_deref().unwrap_or("-"),
            m.core_idea
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::GENERATOR_IDS;

    #[test]
    fn ids_unique_and_generators_known() {
        let all = catalog();
        let mut ids: Vec<&str> = all.iter().map(|m| m.id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), all.len());
        for m in all {
            assert_eq!(m.implemented, m.generator.is_some(), "{}", m.id);
            if let Some(g) = &m.generator {
                assert!(GENERATOR_IDS.contains(&g.as_str()), "{g}");
            }
        }
    }

    #[test]
    fn category_parsing() {
        assert_eq!("evolutionary".parse::<Category>().unwrap(), Category::Evolutionary);
        assert_eq!("Latent space".parse::<Category>().unwrap(), Category::Latent);
        assert_eq!("segment_based".parse::<Category>().unwrap(), Category::Segment);
        assert!("quantum".parse::<Category>().is_err());
    }
}
