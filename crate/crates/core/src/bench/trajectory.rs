//! Trajectory files and the 0.1% convergence-time rule.

use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{ModlError, Result};
use crate::learner::TrajectoryRecord;

pub const TRAJECTORY_HEADER: &str = "t,epochs,cpu_time_s,surrogate,test_objective,rmse,l1_l2_ratio";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One CSV line per record, without header.
pub fn format_record(r: &TrajectoryRecord) -> String {
    format!(
        "{},{},{},{},{},{},{}",
        r.t,
        r.epochs,
        r.cpu_time_s,
        r.surrogate,
        opt(r.test_objective),
        opt(r.rmse),
        r.l1_l2_ratio
    )
}

pub fn write_trajectory<W: Write>(mut w: W, records: &[TrajectoryRecord], header: bool) -> std::io::Result<()> {
    if header {
        writeln!(w, "{TRAJECTORY_HEADER}")?;
    }
    for r in records {
        writeln!(w, "{}", format_record(r))?;
    }
    w.flush()
}

pub fn save_trajectory(path: &Path, records: &[TrajectoryRecord]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| ModlError::io(format!("creating {}", path.display()), e))?;
    write_trajectory(std::io::BufWriter::new(file), records, true)
        .map_err(|e| ModlError::io(format!("writing {}", path.display()), e))
}

/// Appends records, writing the header only if the file is new or empty.
pub fn append_trajectory(path: &Path, records: &[TrajectoryRecord]) -> Result<()> {
    let fresh = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| ModlError::io(format!("opening {}", path.display()), e))?;
    write_trajectory(std::io::BufWriter::new(file), records, fresh)
        .map_err(|e| ModlError::io(format!("writing {}", path.display()), e))
}

pub fn parse_trajectory<R: BufRead>(reader: R, path: &Path) -> Result<Vec<TrajectoryRecord>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| ModlError::io(format!("reading {}", path.display()), e))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| ModlError::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            message,
        };
        if idx == 0 {
            if line != TRAJECTORY_HEADER {
                return Err(err(format!("expected header `{TRAJECTORY_HEADER}`")));
            }
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(err(format!("expected 7 fields, found {}", f.len())));
        }
        let num = |s: &str| -> Result<f64> { s.parse().map_err(|_| err(format!("invalid number `{s}`"))) };
        let opt_num = |s: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                num(s).map(Some)
            }
        };
        out.push(TrajectoryRecord {
            t: f[0].parse().map_err(|_| err(format!("invalid iteration `{}`", f[0])))?,
            epochs: num(f[1])?,
            cpu_time_s: num(f[2])?,
            surrogate: num(f[3])?,
            test_objective: opt_num(f[4])?,
            rmse: opt_num(f[5])?,
            l1_l2_ratio: num(f[6])?,
        });
    }
    Ok(out)
}

pub fn load_trajectory(path: &Path) -> Result<Vec<TrajectoryRecord>> {
    let file = std::fs::File::open(path).map_err(|e| ModlError::io(format!("opening {}", path.display()), e))?;
    parse_trajectory(std::io::BufReader::new(file), path)
}

/// Score used to judge convergence of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Score {
    Rmse,
    TestObjective,
    Surrogate,
}

impl Score {
    pub fn of(self, r: &TrajectoryRecord) -> Option<f64> {
        match self {
            Score::Rmse => r.rmse,
            Score::TestObjective => r.test_objective,
            Score::Surrogate => Some(r.surrogate),
        }
    }

    /// RMSE if every record has it, else the test objective, else the
    /// surrogate.
    pub fn preferred(records: &[TrajectoryRecord]) -> Score {
        if !records.is_empty() && records.iter().all(|r| r.rmse.is_some()) {
            Score::Rmse
        } else if !records.is_empty() && records.iter().all(|r| r.test_objective.is_some()) {
            Score::TestObjective
        } else {
            Score::Surrogate
        }
    }
}

/// CPU time at which the score enters, for the last time, the band of
/// relative half-width `tolerance` around its final value. `None` for an
/// empty trajectory or when a record lacks the score.
pub fn convergence_time(records: &[TrajectoryRecord], score: Score, tolerance: f64) -> Option<f64> {
    let values: Vec<f64> = records.iter().map(|r| score.of(r)).collect::<Option<_>>()?;
    let last = *values.last()?;
    let band = tolerance * last.abs();
    let mut entry = values.len() - 1;
    while entry > 0 && (values[entry - 1] - last).abs() <= band {
        entry -= 1;
    }
    Some(records[entry].cpu_time_s)
}
