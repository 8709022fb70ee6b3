use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use super::run::Outcome;
use crate::cps::{TimeGrid, Trajectory};
use crate::error::{Result, StaError};

pub const SUMMARY_FILE: &str = "summary.json";
pub const TRAJECTORY_FILE: &str = "trajectory.csv";

fn push_num(out: &mut String, v: f64) {
    write!(out, "{v:.16e}").expect("writing to a String");
}

/// Header `t,x1..xn,u1..uk,u_plus_delta1..k,delta1..k,residual`, one row per grid
/// point, every number with 17 significant digits. `u` is the controller command
/// `−K z`; `u_plus_delta` is what the plant receives.
pub fn trajectory_csv(traj: &Trajectory, grid: &TimeGrid, residual: &[f64]) -> String {
    let (n, k) = (traj.x().dim(), traj.u().dim());
    let mut out = String::from("t");
    for i in 1..=n {
        write!(out, ",x{i}").unwrap();
    }
    for name in ["u", "u_plus_delta", "delta"] {
        for i in 1..=k {
            write!(out, ",{name}{i}").unwrap();
        }
    }
    out.push_str(",residual\n");
    for i in 0..traj.len() {
        push_num(&mut out, grid.time(i));
        for &v in traj.x().row(i) {
            out.push(',');
            push_num(&mut out, v);
        }
        let applied = traj.u().row(i);
        let delta = traj.delta().row(i);
        for (a, d) in applied.iter().zip(delta) {
            out.push(',');
            push_num(&mut out, a - d);
        }
        for &v in applied.iter().chain(delta) {
            out.push(',');
            push_num(&mut out, v);
        }
        out.push(',');
        push_num(&mut out, residual[i]);
        out.push('\n');
    }
    out
}

/// Writes `contents` to a temporary file next to `path` and renames it into place.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| StaError::Io(e.error.to_string()))?;
    Ok(())
}

impl Outcome {
    /// Writes the summary and, if present, the trajectory into `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let mut written = vec![dir.join(SUMMARY_FILE)];
        write_atomic(&written[0], &self.summary.to_json())?;
        if let Some(csv) = &self.trajectory_csv {
            let path = dir.join(TRAJECTORY_FILE);
            write_atomic(&path, csv)?;
            written.push(path);
        }
        Ok(written)
    }
}
