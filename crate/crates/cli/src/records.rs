//! Result table schema.
//!
//! Columns, in order: `agent`, `p`, `speed_kmh` (robustness tables only),
//! `mean_rate_bps`, `ci_half_width`, one `util_<GHz>` column per band,
//! `num_trials`, `num_slots`, `seed`, `config_hash`. Floats are written in
//! shortest round-trip form, so parsing a table reproduces it exactly.

use std::path::Path;

use anyhow::{Context, Result};

use crate::failure::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub agent: String,
    pub p: f64,
    pub speed_kmh: Option<f64>,
    pub mean_rate_bps: f64,
    pub ci_half_width: f64,
    /// `(band label in GHz, share of slots)`.
    pub utilization: Vec<(u64, f64)>,
    pub num_trials: usize,
    /// Slots per trial.
    pub num_slots: usize,
    pub seed: u64,
    pub config_hash: String,
}

pub fn header(bands_ghz: &[u64], with_speed: bool) -> Vec<String> {
    let mut h = vec!["agent".to_string(), "p".to_string()];
    if with_speed {
        h.push("speed_kmh".into());
    }
    h.push("mean_rate_bps".into());
    h.push("ci_half_width".into());
    h.extend(bands_ghz.iter().map(|g| format!("util_{g}")));
    for c in ["num_trials", "num_slots", "seed", "config_hash"] {
        h.push(c.into());
    }
    h
}

pub fn write_rows(path: &Path, bands_ghz: &[u64], with_speed: bool, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(header(bands_ghz, with_speed))?;
    for r in rows {
        let mut rec = vec![r.agent.clone(), r.p.to_string()];
        if with_speed {
            rec.push(r.speed_kmh.map(|v| v.to_string()).unwrap_or_default());
        }
        rec.push(r.mean_rate_bps.to_string());
        rec.push(r.ci_half_width.to_string());
        for g in bands_ghz {
            let u = r.utilization.iter().find(|(b, _)| b == g).map_or(0.0, |x| x.1);
            rec.push(u.to_string());
        }
        rec.push(r.num_trials.to_string());
        rec.push(r.num_slots.to_string());
        rec.push(r.seed.to_string());
        rec.push(r.config_hash.clone());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// A parsed table: band labels from the header, speed presence, and rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub bands_ghz: Vec<u64>,
    pub with_speed: bool,
    pub rows: Vec<ResultRow>,
}

fn schema(path: &Path, row: usize, column: &str, reason: impl Into<String>) -> anyhow::Error {
    CliError::Schema {
        path: path.to_path_buf(),
        row,
        column: column.to_string(),
        reason: reason.into(),
    }
    .into()
}

pub fn read_rows(path: &Path) -> Result<Table> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let head: Vec<String> = r.headers().map_err(|e| schema(path, 0, "header", e.to_string()))?.iter().map(str::to_string).collect();
    let with_speed = head.get(2).is_some_and(|c| c == "speed_kmh");
    let bands_ghz: Vec<u64> = head
        .iter()
        .filter_map(|c| c.strip_prefix("util_"))
        .map(|g| g.parse::<u64>().map_err(|_| schema(path, 0, &format!("util_{g}"), "band label is not an integer")))
        .collect::<Result<_>>()?;
    let expected = header(&bands_ghz, with_speed);
    if head != expected {
        let col = head
            .iter()
            .zip(&expected)
            .find(|(a, b)| a != b)
            .map(|(a, _)| a.clone())
            .unwrap_or_else(|| "header".into());
        return Err(schema(path, 0, &col, format!("expected header {}", expected.join(","))));
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let line = i + 1;
        let rec = rec.map_err(|e| schema(path, line, "record", e.to_string()))?;
        if rec.len() != expected.len() {
            return Err(schema(path, line, "record", format!("{} fields, expected {}", rec.len(), expected.len())));
        }
        let get = |k: usize| rec.get(k).unwrap_or_default();
        let float = |k: usize| -> Result<f64> {
            get(k).parse::<f64>().map_err(|_| schema(path, line, &expected[k], format!("`{}` is not a number", get(k))))
        };
        let int = |k: usize| -> Result<u64> {
            get(k).parse::<u64>().map_err(|_| schema(path, line, &expected[k], format!("`{}` is not an integer", get(k))))
        };
        let mut k = 2;
        let speed_kmh = if with_speed {
            k += 1;
            Some(float(2)?)
        } else {
            None
        };
        let mean_rate_bps = float(k)?;
        let ci_half_width = float(k + 1)?;
        k += 2;
        let mut utilization = Vec::with_capacity(bands_ghz.len());
        for g in &bands_ghz {
            utilization.push((*g, float(k)?));
            k += 1;
        }
        rows.push(ResultRow {
            agent: get(0).to_string(),
            p: float(1)?,
            speed_kmh,
            mean_rate_bps,
            ci_half_width,
            utilization,
            num_trials: int(k)? as usize,
            num_slots: int(k + 1)? as usize,
            seed: int(k + 2)?,
            config_hash: get(k + 3).to_string(),
        });
    }
    Ok(Table { bands_ghz, with_speed, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(speed: Option<f64>) -> ResultRow {
        ResultRow {
            agent: "sm".into(),
            p: 0.35,
            speed_kmh: speed,
            mean_rate_bps: 1.4203e9 + 0.1,
            ci_half_width: 1.0 / 3.0,
            utilization: vec![(15, 0.1), (39, 0.7), (60, 0.2)],
            num_trials: 500,
            num_slots: 200,
            seed: 7,
            config_hash: "ab".into(),
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        for speed in [None, Some(72.5)] {
            let path = dir.path().join("t.csv");
            let rows = vec![row(speed), row(speed)];
            write_rows(&path, &[15, 39, 60], speed.is_some(), &rows).unwrap();
            let t = read_rows(&path).unwrap();
            assert_eq!(t.rows, rows);
            assert_eq!(t.bands_ghz, vec![15, 39, 60]);
        }
    }

    #[test]
    fn bad_cell_names_row_and_column() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        write_rows(&path, &[15], false, &[row(None)]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap().replace("0.35", "abc");
        std::fs::write(&path, text).unwrap();
        let err = read_rows(&path).unwrap_err();
        match err.downcast_ref::<CliError>() {
            Some(CliError::Schema { row, column, .. }) => {
                assert_eq!(*row, 1);
                assert_eq!(column, "p");
            }
            other => panic!("{other:?}"),
        }
    }
}
