use std::fs;
use std::path::{Path, PathBuf};

use hybrid_orbit::hybrid::{ExecutionTrace, HybridSystem};
use serde::Serialize;

use crate::error::{CliError, CliResult};

/// Version stamped into every JSON document and accepted in configs.
pub const SCHEMA_VERSION: u32 = 1;

pub struct OutDir {
    root: PathBuf,
    pub written: Vec<String>,
}

impl OutDir {
    /// Create the directory if needed and make sure it accepts files.
    pub fn prepare(root: &Path) -> CliResult<OutDir> {
        let err = |e: std::io::Error| CliError::OutputIo {
            path: root.display().to_string(),
            message: e.to_string(),
        };
        fs::create_dir_all(root).map_err(err)?;
        let probe = root.join(".hybrid-orbit-write-test");
        fs::write(&probe, b"").map_err(err)?;
        fs::remove_file(&probe).map_err(err)?;
        Ok(OutDir {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> CliResult<()> {
        let path = self.root.join(name);
        fs::write(&path, bytes).map_err(|e| CliError::OutputIo {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        self.written.push(path.display().to_string());
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, doc: &T) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(doc).map_err(|e| CliError::OutputIo {
            path: name.into(),
            message: e.to_string(),
        })?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }
}

/// Trace as CSV: `t, domain_id, x_1..x_N, event_flag`, one row per integrator knot.
/// `N` is the largest domain dimension; shorter states leave trailing cells empty.
/// The last knot before each reset carries `event_flag = 1`. A zero-length run has no rows.
pub fn trace_csv(sys: &HybridSystem, tr: &ExecutionTrace) -> CliResult<Vec<u8>> {
    let n = sys.domains.iter().map(|d| d.dim).max().unwrap_or(0);
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["t".to_string(), "domain_id".to_string()];
    header.extend((1..=n).map(|i| format!("x_{i}")));
    header.push("event_flag".into());
    let csv_err = |e: csv::Error| CliError::OutputIo {
        path: "trace.csv".into(),
        message: e.to_string(),
    };
    w.write_record(&header).map_err(csv_err)?;
    let mut next_event = 0;
    for seg in &tr.segments {
        let ends_in_event = tr.events.get(next_event).is_some_and(|e| {
            e.from == seg.domain && e.time == seg.t_end() && e.pre.as_slice() == seg.last()
        });
        if ends_in_event {
            next_event += 1;
        } else if seg.t_end() == seg.t_start() {
            continue;
        }
        for i in 0..seg.len() {
            let mut row = vec![fmt(seg.t[i]), seg.domain.to_string()];
            let x = seg.knot(i);
            row.extend((0..n).map(|j| x.get(j).map(|v| fmt(*v)).unwrap_or_default()));
            row.push(
                if ends_in_event && i + 1 == seg.len() {
                    "1"
                } else {
                    "0"
                }
                .into(),
            );
            w.write_record(&row).map_err(csv_err)?;
        }
    }
    w.into_inner().map_err(|e| CliError::OutputIo {
        path: "trace.csv".into(),
        message: e.to_string(),
    })
}

/// Integral values print plainly, everything else in round-trip scientific notation.
fn fmt(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v:e}")
    }
}

/// Numeric table with a header row.
pub fn table_csv(name: &str, header: &[String], rows: &[Vec<f64>]) -> CliResult<Vec<u8>> {
    let csv_err = |e: csv::Error| CliError::OutputIo {
        path: name.into(),
        message: e.to_string(),
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(r.iter().map(|v| fmt(*v))).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| CliError::OutputIo {
        path: name.into(),
        message: e.to_string(),
    })
}
