//! File output. Every file is written to a temporary sibling and renamed
//! into place, so readers never observe a partial file.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use eulertop::Trajectory;
use serde::Serialize;

use crate::CliError;

pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    let io = |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    };
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir).map_err(io)?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(io)?;
    tmp.write_all(contents).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("report types serialize");
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// 17 significant digits, enough to round-trip any f64.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn csv_header(n: usize) -> String {
    let mut h = String::from("t,s");
    for i in 1..=n {
        write!(h, ",x{i}").unwrap();
    }
    for k in 1..n {
        write!(h, ",I{k}").unwrap();
    }
    h
}

/// `t,s,x1..xn,I1..I{n-1}`, one row per sample.
pub fn trajectory_csv(traj: &Trajectory, n: usize) -> String {
    let mut out = csv_header(n);
    out.push('\n');
    for s in &traj.samples {
        out.push_str(&num(s.t));
        out.push(',');
        out.push_str(&num(s.s));
        for v in s.x.iter().chain(&s.invariants) {
            out.push(',');
            out.push_str(&num(*v));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use eulertop::{Sample, Termination};

    #[test]
    fn header_layout() {
        assert_eq!(csv_header(3), "t,s,x1,x2,x3,I1,I2");
        assert_eq!(csv_header(4), "t,s,x1,x2,x3,x4,I1,I2,I3");
    }

    #[test]
    fn numbers_round_trip() {
        for v in [0.1, -1.0 / 3.0, 6.02214076e23, 5e-324, 0.0] {
            let s = num(v);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits(), "{s}");
            let digits = s
                .split('e')
                .next()
                .unwrap()
                .chars()
                .filter(char::is_ascii_digit)
                .count();
            assert_eq!(digits, 17);
        }
    }

    #[test]
    fn rows_follow_header() {
        let traj = Trajectory {
            samples: vec![Sample {
                t: 0.0,
                s: 0.0,
                x: vec![1.0, 2.0, 3.0],
                invariants: vec![-3.0, -8.0],
            }],
            termination: Termination::Completed,
            detail: None,
        };
        let text = trajectory_csv(&traj, 3);
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[1].split(',').count(), 7);
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("nested/out.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "two");
        assert_eq!(std::fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    }
}
