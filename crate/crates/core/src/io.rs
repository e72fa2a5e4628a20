//! Trajectory, sweep and manifest files.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::metrics::MetricsFrame;
use crate::model::NodeId;
use crate::sweeps::SweepRow;

pub const TRAJECTORY_COLUMNS: [&str; 12] = [
    "step",
    "e_d_ai_total",
    "e_c_top_human",
    "e_c_top_ai_restricted",
    "sovereign_id",
    "sovereign_is_ai",
    "traceability_bound",
    "empirical_traceability",
    "n_actions",
    "p_irr",
    "concentration",
    "review_level",
];

pub const SWEEP_COLUMNS: [&str; 5] = [
    "param_value",
    "transfer_rate",
    "mean_first_transfer_step",
    "final_concentration_mean",
    "final_p_irr_mean",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File { path: String, source: io::Error },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn file_error(path: &Path) -> impl FnOnce(io::Error) -> IoError + '_ {
    move |source| IoError::File {
        path: path.display().to_string(),
        source,
    }
}

/// Renders `x` with 9 significant digits, `%.9g` style.
pub fn format_float(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() {
            "-0".into()
        } else {
            "0".into()
        };
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent in scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    } else {
        format!("{}e{exp}", trim_zeros(mantissa))
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// One CSV line of a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub step: u64,
    pub e_d_ai_total: f64,
    pub e_c_top_human: f64,
    pub e_c_top_ai_restricted: f64,
    pub sovereign_id: NodeId,
    pub sovereign_is_ai: bool,
    pub traceability_bound: f64,
    pub empirical_traceability: f64,
    pub n_actions: u64,
    pub p_irr: f64,
    pub concentration: f64,
    pub review_level: f64,
    /// `(id, lambda, share, friction)` per node.
    pub nodes: Vec<(NodeId, f64, f64, f64)>,
}

impl From<&MetricsFrame> for TrajectoryRow {
    fn from(f: &MetricsFrame) -> Self {
        TrajectoryRow {
            step: f.step,
            e_d_ai_total: f.e_d_ai_total,
            e_c_top_human: f.e_c_top_human,
            e_c_top_ai_restricted: f.e_c_top_ai_restricted,
            sovereign_id: f.sovereign_id,
            sovereign_is_ai: f.sovereign_is_ai,
            traceability_bound: f.traceability_bound,
            empirical_traceability: f.empirical_traceability,
            n_actions: f.n_actions,
            p_irr: f.p_irr,
            concentration: f.concentration,
            review_level: f.review_level,
            nodes: f
                .nodes
                .iter()
                .map(|n| (n.id, n.lambda, n.share, n.friction))
                .collect(),
        }
    }
}

pub fn trajectory_csv(frames: &[MetricsFrame]) -> String {
    let rows: Vec<TrajectoryRow> = frames.iter().map(TrajectoryRow::from).collect();
    rows_to_csv(&rows)
}

pub fn rows_to_csv(rows: &[TrajectoryRow]) -> String {
    let mut header: Vec<String> = TRAJECTORY_COLUMNS.iter().map(|c| c.to_string()).collect();
    if let Some(first) = rows.first() {
        for (id, ..) in &first.nodes {
            header.extend([
                format!("lambda_{id}"),
                format!("share_{id}"),
                format!("friction_{id}"),
            ]);
        }
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header).expect("in-memory write");
    for r in rows {
        let f = format_float;
        let mut record = vec![
            r.step.to_string(),
            f(r.e_d_ai_total),
            f(r.e_c_top_human),
            f(r.e_c_top_ai_restricted),
            r.sovereign_id.to_string(),
            r.sovereign_is_ai.to_string(),
            f(r.traceability_bound),
            f(r.empirical_traceability),
            r.n_actions.to_string(),
            f(r.p_irr),
            f(r.concentration),
            f(r.review_level),
        ];
        for (_, lambda, share, friction) in &r.nodes {
            record.extend([f(*lambda), f(*share), f(*friction)]);
        }
        w.write_record(&record).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii output")
}

pub fn parse_trajectory_csv(text: &str) -> Result<Vec<TrajectoryRow>, IoError> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header_error = |message: String| IoError::Parse { line: 1, message };
    let columns: Vec<String> = reader
        .headers()
        .map_err(|e| header_error(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let fixed = TRAJECTORY_COLUMNS.len();
    if columns.len() < fixed
        || columns[..fixed] != TRAJECTORY_COLUMNS
        || !(columns.len() - fixed).is_multiple_of(3)
    {
        return Err(header_error("unexpected header".into()));
    }
    let ids = columns[fixed..]
        .chunks(3)
        .map(|c| {
            c[0].strip_prefix("lambda_")
                .and_then(|id| id.parse().ok())
                .map(NodeId)
                .ok_or_else(|| header_error(format!("bad node column {:?}", c[0])))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let bad = |message: String| IoError::Parse { line, message };
        let cells = record.map_err(|e| bad(e.to_string()))?;
        let cell = |k: usize| cells.get(k).unwrap_or_default();
        let num = |k: usize| -> Result<f64, IoError> {
            cell(k)
                .parse()
                .map_err(|_| bad(format!("{}: not a number", columns[k])))
        };
        let int = |k: usize| -> Result<u64, IoError> {
            cell(k)
                .parse()
                .map_err(|_| bad(format!("{}: not an integer", columns[k])))
        };
        let nodes = ids
            .iter()
            .enumerate()
            .map(|(j, id)| {
                let k = fixed + 3 * j;
                Ok((*id, num(k)?, num(k + 1)?, num(k + 2)?))
            })
            .collect::<Result<Vec<_>, IoError>>()?;
        rows.push(TrajectoryRow {
            step: int(0)?,
            e_d_ai_total: num(1)?,
            e_c_top_human: num(2)?,
            e_c_top_ai_restricted: num(3)?,
            sovereign_id: NodeId(int(4)? as u32),
            sovereign_is_ai: cell(5)
                .parse()
                .map_err(|_| bad("sovereign_is_ai: not a boolean".into()))?,
            traceability_bound: num(6)?,
            empirical_traceability: num(7)?,
            n_actions: int(8)?,
            p_irr: num(9)?,
            concentration: num(10)?,
            review_level: num(11)?,
            nodes,
        });
    }
    Ok(rows)
}

/// JSON array of frames. Non-finite floats become `null`.
pub fn trajectory_json(frames: &[MetricsFrame]) -> Result<String, IoError> {
    let mut s = serde_json::to_string_pretty(frames)?;
    s.push('\n');
    Ok(s)
}

/// Writes the trajectory and returns the number of bytes written.
pub fn write_trajectory(
    frames: &[MetricsFrame],
    format: Format,
    destination: &Path,
) -> Result<u64, IoError> {
    let text = match format {
        Format::Csv => trajectory_csv(frames),
        Format::Json => trajectory_json(frames)?,
    };
    write_file(destination, text.as_bytes())
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SWEEP_COLUMNS).expect("in-memory write");
    for r in rows {
        w.write_record(
            [
                r.param_value,
                r.transfer_rate,
                r.mean_first_transfer_step,
                r.final_concentration_mean,
                r.final_p_irr_mean,
            ]
            .map(format_float),
        )
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii output")
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<u64, IoError> {
    let mut f = fs::File::create(path).map_err(file_error(path))?;
    f.write_all(bytes).map_err(file_error(path))?;
    Ok(bytes.len() as u64)
}

pub fn read_file(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(file_error(path))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Provenance written next to every output set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    /// SHA-256 of the config file bytes; absent for commands without one.
    pub config_digest: Option<String>,
    pub base_seed: u64,
    pub command_line: Vec<String>,
    pub started_at: String,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(config_bytes: Option<&[u8]>, base_seed: u64, command_line: Vec<String>) -> Self {
        RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_digest: config_bytes.map(sha256_hex),
            base_seed,
            command_line,
            started_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            outputs: Vec::new(),
        }
    }

    pub fn write(&self, dir: &Path) -> Result<u64, IoError> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        write_file(&dir.join("manifest.json"), text.as_bytes())
    }
}
