//! Reading and writing profiler metric exports in CSV form.
//!
//! Accepts the "raw" layout with `Metric Name`, `Metric Unit` and
//! `Metric Value` columns (or their snake_case spellings) and an optional
//! launch `ID` column. Tool chatter before the header, such as `==PROF==`
//! lines, is skipped. When several launches were captured, the launch with the
//! largest `gpu__time_duration.sum` is kept.

use std::collections::BTreeSet;

use kernopt_core::{ProfilerExport, ProfilerRow};

pub const DURATION_METRIC: &str = "gpu__time_duration.sum";

#[derive(Debug, thiserror::Error)]
pub enum CsvError {
    #[error("no header with metric name and value columns")]
    NoHeader,
    #[error("metric `{metric}` has non-finite value `{text}`")]
    NonFinite { metric: String, text: String },
    #[error("malformed csv: {0}")]
    Csv(#[from] csv::Error),
}

struct Columns {
    id: Option<usize>,
    name: usize,
    unit: Option<usize>,
    value: usize,
}

fn normalize(h: &str) -> String {
    h.trim().to_ascii_lowercase().replace([' ', '-'], "_")
}

fn columns(header: &csv::StringRecord) -> Option<Columns> {
    let find = |names: &[&str]| header.iter().position(|h| names.contains(&normalize(h).as_str()));
    Some(Columns {
        id: find(&["id"]),
        name: find(&["metric_name"])?,
        unit: find(&["metric_unit", "unit"]),
        value: find(&["metric_value", "value"])?,
    })
}

fn reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(text.as_bytes())
}

/// Parses a numeric cell. `Ok(None)` for text cells such as device names.
fn parse_value(text: &str) -> Option<f64> {
    let cleaned: String = text.trim().chars().filter(|c| *c != ',').collect();
    cleaned.parse().ok()
}

struct Launch {
    id: String,
    rows: Vec<ProfilerRow>,
}

impl Launch {
    fn duration(&self) -> Option<f64> {
        self.rows.iter().find(|r| r.metric_name == DURATION_METRIC).map(|r| r.value)
    }
}

pub fn parse_profiler_csv(text: &str) -> Result<ProfilerExport, CsvError> {
    let body_start = text
        .lines()
        .scan(0usize, |offset, line| {
            let at = *offset;
            *offset += line.len() + 1;
            Some((at, line))
        })
        .find(|(_, line)| {
            !line.starts_with("==")
                && reader(line).records().next().and_then(|r| r.ok()).is_some_and(|r| columns(&r).is_some())
        })
        .map(|(at, _)| at)
        .ok_or(CsvError::NoHeader)?;
    let mut records = reader(&text[body_start..]).into_records();
    let header = records.next().ok_or(CsvError::NoHeader)??;
    let cols = columns(&header).ok_or(CsvError::NoHeader)?;

    let mut launches: Vec<Launch> = Vec::new();
    for rec in records {
        let rec = rec?;
        let (Some(name), Some(raw)) = (rec.get(cols.name), rec.get(cols.value)) else {
            continue;
        };
        if name.starts_with("==") || name.trim().is_empty() {
            continue;
        }
        let Some(value) = parse_value(raw) else {
            continue;
        };
        if !value.is_finite() {
            return Err(CsvError::NonFinite { metric: name.to_string(), text: raw.to_string() });
        }
        let id = cols.id.and_then(|i| rec.get(i)).unwrap_or("").to_string();
        let idx = match launches.iter().position(|l| l.id == id) {
            Some(i) => i,
            None => {
                launches.push(Launch { id, rows: Vec::new() });
                launches.len() - 1
            }
        };
        let launch = &mut launches[idx];
        if launch.rows.iter().any(|r| r.metric_name == name) {
            continue;
        }
        launch.rows.push(ProfilerRow {
            metric_name: name.trim().to_string(),
            unit: cols.unit.and_then(|i| rec.get(i)).unwrap_or("").trim().to_string(),
            value,
        });
    }

    let mut best: Option<Launch> = None;
    for l in launches {
        let better = match &best {
            None => true,
            Some(b) => l.duration().unwrap_or(f64::NEG_INFINITY) > b.duration().unwrap_or(f64::NEG_INFINITY),
        };
        if better {
            best = Some(l);
        }
    }
    Ok(ProfilerExport { kernel_id: String::new(), rows: best.map(|l| l.rows).unwrap_or_default() })
}

/// Writes the export in the raw layout that [`parse_profiler_csv`] reads.
pub fn write_profiler_csv(export: &ProfilerExport) -> String {
    let mut w = csv::WriterBuilder::new().quote_style(csv::QuoteStyle::Always).from_writer(Vec::new());
    let _ = w.write_record(["Metric Name", "Metric Unit", "Metric Value"]);
    for r in &export.rows {
        let _ = w.write_record([r.metric_name.as_str(), r.unit.as_str(), &r.value.to_string()]);
    }
    String::from_utf8(w.into_inner().unwrap_or_default()).unwrap_or_default()
}

/// Drops rows whose names are not in `names`.
pub fn restrict(export: ProfilerExport, names: &[String]) -> ProfilerExport {
    let keep: BTreeSet<&str> = names.iter().map(String::as_str).collect();
    ProfilerExport {
        kernel_id: export.kernel_id,
        rows: export.rows.into_iter().filter(|r| keep.contains(r.metric_name.as_str())).collect(),
    }
}
