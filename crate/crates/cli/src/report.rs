//! Report writers. Every file starts with, or contains, the config hash.

use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

use sodbench_core::models::gp::GenerationStats;

use crate::commands::{ContinuityRecord, ModelReport};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErrorRecord {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub column: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
    pub message: String,
}

impl ErrorRecord {
    pub fn model(model: &str, message: &str) -> Self {
        Self {
            model: Some(model.into()),
            column: None,
            image: None,
            message: message.into(),
        }
    }

    pub fn column(model: Option<&str>, column: &str, message: &str) -> Self {
        Self {
            model: model.map(Into::into),
            column: Some(column.into()),
            image: None,
            message: message.into(),
        }
    }

    pub fn image(model: Option<&str>, column: Option<&str>, image: &str, message: &str) -> Self {
        Self {
            model: model.map(Into::into),
            column: column.map(Into::into),
            image: Some(image.into()),
            message: message.into(),
        }
    }
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(p) = path.parent() {
        std::fs::create_dir_all(p).with_context(|| format!("creating {}", p.display()))?;
    }
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    ensure_parent(path)?;
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_csv(path: &Path, hash: &str, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    ensure_parent(path)?;
    let mut buf = format!("# config_hash={hash}\n").into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush()?;
    }
    std::fs::write(path, buf).with_context(|| format!("writing {}", path.display()))
}

/// Two decimals, as in the published tables.
pub fn cell(v: f64) -> String {
    format!("{v:.2}")
}

pub const ERROR_CELL: &str = "ERR";

/// `model, stat, <one column per label>, cross_attack_std`; an `Avg.` and a
/// `σ` row per model.
pub fn table_rows(models: &[ModelReport]) -> (Vec<String>, Vec<Vec<String>>) {
    let mut header = vec!["model".to_string(), "stat".to_string()];
    if let Some(m) = models.first() {
        header.extend(m.columns.iter().map(|c| c.label.clone()));
    }
    header.push("cross_attack_std".into());
    let mut rows = Vec::new();
    for m in models {
        let mut avg = vec![m.model.clone(), "Avg.".into()];
        let mut sd = vec![m.model.clone(), "σ".into()];
        for c in &m.columns {
            match &c.score {
                Some(s) => {
                    avg.push(cell(s.mean));
                    sd.push(cell(s.std));
                }
                None => {
                    avg.push(ERROR_CELL.into());
                    sd.push(ERROR_CELL.into());
                }
            }
        }
        avg.push(m.cross_attack_std.map_or(ERROR_CELL.into(), cell));
        sd.push(String::new());
        rows.push(avg);
        rows.push(sd);
    }
    (header, rows)
}

pub fn write_table(path: &Path, models: &[ModelReport], hash: &str) -> Result<()> {
    let (header, rows) = table_rows(models);
    write_csv(path, hash, &header, &rows)
}

pub fn write_trace(path: &Path, trace: &[GenerationStats], hash: &str) -> Result<()> {
    let header = ["generation", "best_fitness", "mean_fitness", "best_size"].map(String::from);
    let rows: Vec<Vec<String>> = trace
        .iter()
        .map(|g| {
            vec![
                g.generation.to_string(),
                g.best_fitness.to_string(),
                g.mean_fitness.to_string(),
                g.best_size.to_string(),
            ]
        })
        .collect();
    write_csv(path, hash, &header, &rows)
}

#[derive(Serialize)]
struct Errors<'a> {
    config_hash: &'a str,
    count: usize,
    errors: &'a [ErrorRecord],
}

pub fn write_errors(path: &Path, errors: &[ErrorRecord], hash: &str) -> Result<()> {
    write_json(
        path,
        &Errors {
            config_hash: hash,
            count: errors.len(),
            errors,
        },
    )
}

#[derive(Serialize)]
struct Continuity<'a> {
    config_hash: &'a str,
    records: &'a [ContinuityRecord],
    errors: &'a [ErrorRecord],
}

/// `continuity.csv` (one row per model and radius) and `continuity.json`.
pub fn write_continuity(dir: &Path, records: &[ContinuityRecord], errors: &[ErrorRecord], hash: &str) -> Result<()> {
    let header = ["model", "delta", "norm", "images", "mean_epsilon_hat", "max_epsilon_hat", "bound"].map(String::from);
    let rows: Vec<Vec<String>> = records
        .iter()
        .map(|r| {
            vec![
                r.model.clone(),
                r.delta.to_string(),
                serde_json::to_value(r.norm).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
                r.images.len().to_string(),
                format!("{:.6}", r.mean_epsilon_hat),
                format!("{:.6}", r.max_epsilon_hat),
                r.bound.map_or(String::new(), |b| format!("{b:.6}")),
            ]
        })
        .collect();
    write_csv(&dir.join("continuity.csv"), hash, &header, &rows)?;
    write_json(
        &dir.join("continuity.json"),
        &Continuity {
            config_hash: hash,
            records,
            errors,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::commands::ColumnReport;
    use sodbench_core::eval::{DatasetScore, ImageScore, StdMode};

    fn score(values: &[f64]) -> DatasetScore {
        let images = values
            .iter()
            .enumerate()
            .map(|(i, &v)| ImageScore {
                id: i.to_string(),
                score: Some(v),
                error: None,
            })
            .collect();
        DatasetScore::from_images(images, StdMode::Population).unwrap()
    }

    #[test]
    fn one_model_one_column() {
        let m = ModelReport {
            model: "m".into(),
            cross_attack_std: Some(0.0),
            columns: vec![ColumnReport {
                id: "original".into(),
                label: "Original".into(),
                score: Some(score(&[0.5, 1.0])),
                error: None,
            }],
        };
        let (header, rows) = table_rows(&[m]);
        assert_eq!(header, ["model", "stat", "Original", "cross_attack_std"]);
        assert_eq!(rows[0], ["m", "Avg.", "75.00", "0.00"]);
        assert_eq!(rows[1], ["m", "σ", "25.00", ""]);
    }

    #[test]
    fn failed_column_is_marked() {
        let m = ModelReport {
            model: "m".into(),
            cross_attack_std: None,
            columns: vec![ColumnReport {
                id: "gaussian".into(),
                label: "Gaussian".into(),
                score: None,
                error: Some("missing".into()),
            }],
        };
        let (_, rows) = table_rows(&[m]);
        assert_eq!(rows[0][2], ERROR_CELL);
        assert_eq!(rows[0][3], ERROR_CELL);
    }

    #[test]
    fn csv_starts_with_hash() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        write_csv(&p, "abc", &["a".into(), "S&P".into()], &[vec!["1".into(), "2".into()]]).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "# config_hash=abc\na,S&P\n1,2\n");
    }
}
