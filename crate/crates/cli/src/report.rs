use std::path::Path;

use anyhow::{Context, Result};
use jigsaw_core::assembly::Mode;
use jigsaw_core::ingest::TypeTag;
use jigsaw_core::metrics::ScoreReport;
use serde::{Deserialize, Serialize};

/// Marks a row holding the mean over runs.
pub const AVERAGE_RUN: &str = "avg";

/// One CSV/JSON report row. `perfect` and `iterations` are means on average
/// rows, hence floats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub image: String,
    #[serde(rename = "type")]
    pub type_tag: TypeTag,
    pub variant: Mode,
    pub sigma: f64,
    pub run: String,
    pub direct: f64,
    pub neighbor: f64,
    pub largest: f64,
    pub perfect: f64,
    pub iterations: f64,
    pub seconds: f64,
}

impl ReportRow {
    pub fn single(
        image: &str,
        type_tag: TypeTag,
        variant: Mode,
        sigma: f64,
        r: &ScoreReport,
        iterations: usize,
        seconds: f64,
    ) -> Self {
        Self {
            image: image.to_string(),
            type_tag,
            variant,
            sigma,
            run: "0".into(),
            direct: r.direct,
            neighbor: r.neighbor,
            largest: r.largest_component,
            perfect: if r.perfect { 1.0 } else { 0.0 },
            iterations: iterations as f64,
            seconds,
        }
    }

    /// Mean of `rows`, which must share image, type, variant and sigma.
    pub fn average(rows: &[ReportRow]) -> Self {
        let n = rows.len() as f64;
        let mean = |f: fn(&ReportRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
        Self {
            run: AVERAGE_RUN.into(),
            direct: mean(|r| r.direct),
            neighbor: mean(|r| r.neighbor),
            largest: mean(|r| r.largest),
            perfect: mean(|r| r.perfect),
            iterations: mean(|r| r.iterations),
            seconds: mean(|r| r.seconds),
            ..rows[0].clone()
        }
    }
}

pub fn write_rows(path: &Path, rows: &[ReportRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
pub fn read_rows(path: &Path) -> Result<Vec<ReportRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}
