//! Per-dataset stage counts and the table row rendered from them.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub domain: String,
    pub description: String,
    /// Shortest and longest Original-stage series; 0 when there are none.
    pub length_min: usize,
    pub length_max: usize,
    pub count_original: usize,
    pub count_pruned: usize,
    pub count_augmented: usize,
    /// Augmentation factor the augmented count was produced with.
    #[serde(default)]
    pub augment_factor: Option<usize>,
    pub seed: u64,
    pub created_at: String,
    /// "external" or "generated".
    #[serde(default)]
    pub queries: String,
    #[serde(default)]
    pub count_train: Option<usize>,
    #[serde(default)]
    pub count_test: Option<usize>,
    #[serde(default)]
    pub diagnostics: BTreeMap<String, usize>,
}

impl DatasetManifest {
    pub fn empty(name: &str, seed: u64, created_at: &str) -> Self {
        Self {
            name: name.into(),
            domain: String::new(),
            description: String::new(),
            length_min: 0,
            length_max: 0,
            count_original: 0,
            count_pruned: 0,
            count_augmented: 0,
            augment_factor: None,
            seed,
            created_at: created_at.into(),
            queries: String::new(),
            count_train: None,
            count_test: None,
            diagnostics: BTreeMap::new(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.count_pruned > self.count_original {
            return Err(format!(
                "count_pruned {} exceeds count_original {}",
                self.count_pruned, self.count_original
            ));
        }
        if self.length_min > self.length_max {
            return Err("length_min exceeds length_max".into());
        }
        if let Some(f) = self.augment_factor {
            if self.count_augmented != self.count_pruned * f {
                return Err(format!(
                    "count_augmented {} != count_pruned {} x {f}",
                    self.count_augmented, self.count_pruned
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Text,
    Csv,
}

const COLUMNS: [&str; 8] = [
    "Name",
    "Domain",
    "Description",
    "Length Min",
    "Length Max",
    "Original",
    "After Pruning",
    "After Augmentation",
];

/// A header line and one row with name, domain, description, length range
/// and the three stage counts.
pub fn report(manifest: &DatasetManifest, format: ReportFormat) -> String {
    let row = [
        manifest.name.clone(),
        manifest.domain.clone(),
        manifest.description.clone(),
        manifest.length_min.to_string(),
        manifest.length_max.to_string(),
        manifest.count_original.to_string(),
        manifest.count_pruned.to_string(),
        manifest.count_augmented.to_string(),
    ];
    match format {
        ReportFormat::Csv => {
            let mut w = csv::WriterBuilder::new()
                .terminator(csv::Terminator::Any(b'\n'))
                .from_writer(Vec::new());
            w.write_record(COLUMNS).expect("in-memory write");
            w.write_record(&row).expect("in-memory write");
            String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
        }
        ReportFormat::Text => {
            let widths: Vec<usize> = COLUMNS
                .iter()
                .zip(&row)
                .map(|(h, v)| h.chars().count().max(v.chars().count()))
                .collect();
            let line = |cells: Vec<&str>| {
                cells
                    .iter()
                    .zip(&widths)
                    .map(|(c, &w)| format!("{c:<w$}"))
                    .collect::<Vec<_>>()
                    .join(" | ")
                    .trim_end()
                    .to_string()
            };
            format!(
                "{}\n{}\n",
                line(COLUMNS.to_vec()),
                line(row.iter().map(String::as_str).collect())
            )
        }
    }
}
