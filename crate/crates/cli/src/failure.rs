//! Errors specific to the frontend and their machine-readable record.

use std::path::PathBuf;

use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("missing policies for {}", format_missing(.missing))]
    MissingPolicies { missing: Vec<(String, f64)> },
    #[error("{}: row {row}, column `{column}`: {reason}", .path.display())]
    Schema {
        path: PathBuf,
        row: usize,
        column: String,
        reason: String,
    },
    #[error("{}: artifact was produced from config {found}, expected {expected}", .path.display())]
    ConfigMismatch { path: PathBuf, expected: String, found: String },
}

fn format_missing(missing: &[(String, f64)]) -> String {
    missing.iter().map(|(a, p)| format!("(agent {a}, p {p})")).collect::<Vec<_>>().join(", ")
}

/// One-line JSON record written to stderr when a command fails.
#[derive(Debug, Serialize)]
pub struct ErrorRecord {
    pub status: &'static str,
    pub kind: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub missing: Vec<MissingEntry>,
}

#[derive(Debug, Serialize)]
pub struct MissingEntry {
    pub agent: String,
    pub p: f64,
}

impl ErrorRecord {
    pub fn from_error(err: &anyhow::Error) -> Self {
        let mut rec = ErrorRecord {
            status: "error",
            kind: "runtime".into(),
            message: format!("{err:#}"),
            field: None,
            missing: Vec::new(),
        };
        if let Some(e) = err.downcast_ref::<cruise_core::Error>() {
            use cruise_core::Error as E;
            rec.kind = match e {
                E::InvalidParameter { field, .. } => {
                    rec.field = Some(field.clone());
                    "validation"
                }
                E::CellOutOfRange { .. } | E::NonMonotoneThresholds { .. } | E::DimensionMismatch { .. } => "validation",
                E::QuadratureDivergence { .. } | E::ImpossibleObservation { .. } => "numerical",
                E::Artifact(_) => "artifact",
            }
            .into();
        } else if let Some(e) = err.downcast_ref::<CliError>() {
            rec.kind = match e {
                CliError::MissingPolicies { missing } => {
                    rec.missing = missing.iter().map(|(a, p)| MissingEntry { agent: a.clone(), p: *p }).collect();
                    "missing-policy"
                }
                CliError::Schema { column, .. } => {
                    rec.field = Some(column.clone());
                    "schema"
                }
                CliError::ConfigMismatch { .. } => "config-mismatch",
            }
            .into();
        } else if err.downcast_ref::<std::io::Error>().is_some() {
            rec.kind = "io".into();
        }
        rec
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind.as_str() {
            "validation" | "schema" => 2,
            _ => 1,
        }
    }
}
