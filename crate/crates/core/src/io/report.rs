use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ScenarioConfig;
use crate::design::{DesignTrace, Ranking};
use crate::deviation::{DeviationResult, TracePoint};
use crate::error::Result;
use crate::estimation::{Dataset, FitResult};
use crate::validation::{CoverageStudy, Lemma1Report, OrderingReport, PropositionReport};

/// Which curve a plot row belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesKind {
    Data,
    BestFit,
    Dev1,
    Dev2,
    Impact1,
    Impact2,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub condition_id: String,
    pub observable: String,
    pub time: f64,
    pub series: SeriesKind,
    pub value: f64,
}

pub(crate) fn pair_rows(trace: &[TracePoint], first: SeriesKind, second: SeriesKind) -> Vec<PlotRow> {
    let mut rows = Vec::with_capacity(2 * trace.len());
    for (kind, pick) in [(first, 0), (second, 1)] {
        rows.extend(trace.iter().map(|p| PlotRow {
            condition_id: p.condition_id.clone(),
            observable: p.observable.clone(),
            time: p.time,
            series: kind,
            value: if pick == 0 { p.model_1 } else { p.model_2 },
        }));
    }
    rows
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub lemma1: Vec<(String, Lemma1Report)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coverage: Option<CoverageStudy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proposition: Option<PropositionReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ordering: Option<OrderingReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageFailure {
    pub stage: String,
    pub message: String,
    pub exit_code: i32,
}

/// Results of a pipeline run with the resolved config that produced them.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Report {
    pub version: String,
    pub seed: u64,
    pub config: ScenarioConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<Dataset>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deviation: Option<DeviationResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ranking: Option<Ranking>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub design: Option<DesignTrace>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation: Option<ValidationReport>,
    /// Plot tables keyed by panel name.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub tables: BTreeMap<String, Vec<PlotRow>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<StageFailure>,
}

impl Report {
    pub fn new(config: &ScenarioConfig) -> Self {
        Self {
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: config.seed,
            config: config.clone(),
            dataset: None,
            fit: None,
            deviation: None,
            ranking: None,
            design: None,
            validation: None,
            tables: BTreeMap::new(),
            failure: None,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

fn file_name(table: &str) -> String {
    let clean: String = table
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '-' || c == '.' { c } else { '_' })
        .collect();
    format!("{clean}.csv")
}

/// Write one CSV per plot table, plus ranking and sequence summaries when
/// present. Returns the files written.
pub fn emit_plot_data(report: &Report, out_dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let out_dir = out_dir.as_ref();
    let mut written = Vec::new();
    if report.tables.is_empty() && report.ranking.is_none() && report.design.is_none() {
        return Ok(written);
    }
    std::fs::create_dir_all(out_dir)?;
    for (name, rows) in &report.tables {
        let path = out_dir.join(file_name(name));
        let mut w = csv::Writer::from_path(&path)?;
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
        written.push(path);
    }
    if let Some(ranking) = &report.ranking {
        let path = out_dir.join("ranking.csv");
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["rank", "candidate", "value", "predicted_reduction", "flagged", "error"])?;
        for (i, e) in ranking.entries.iter().enumerate() {
            w.write_record([
                (i + 1).to_string(),
                e.name.clone(),
                e.estimate.as_ref().map_or(String::new(), |x| x.value.to_string()),
                e.predicted_reduction.map_or(String::new(), |x| x.to_string()),
                e.flagged.to_string(),
                e.error.clone().unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        written.push(path);
    }
    if let Some(design) = &report.design {
        let path = out_dir.join("sequence.csv");
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["round", "chosen", "predicted", "before", "after", "change"])?;
        for r in &design.rounds {
            w.write_record([
                r.round.to_string(),
                r.chosen.clone(),
                r.predicted_value.to_string(),
                r.deviation_before.to_string(),
                r.deviation_after.to_string(),
                r.change.to_string(),
            ])?;
        }
        w.flush()?;
        written.push(path);
    }
    Ok(written)
}
