//! Files written by the `qsd` binary: CSV series, JSON documents, a run
//! manifest and gnuplot script stubs.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::ensemble::EnsembleStats;
use crate::error::Result;
use crate::observables::{ObservableBundle, FIELD_NAMES};

/// Writes into one output directory, remembering every file produced.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    written: Vec<PathBuf>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root)?;
        Ok(Self {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn files(&self) -> &[PathBuf] {
        &self.written
    }

    pub fn write_text(&mut self, name: &str, contents: &str) -> Result<PathBuf> {
        let path = self.root.join(name);
        fs::write(&path, contents)?;
        self.written.push(path.clone());
        Ok(path)
    }

    pub fn write_json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let s = serde_json::to_string_pretty(value)?;
        self.write_text(name, &s)
    }
}

/// CSV with the given header and one row per record.
pub fn csv<I, R>(header: &[&str], rows: I) -> String
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = f64>,
{
    let mut s = header.join(",");
    s.push('\n');
    for row in rows {
        let cells: Vec<String> = row.into_iter().map(|v| format!("{v:.12e}")).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

/// Observable time series in the standard column order.
pub fn bundles_csv(bundles: &[ObservableBundle]) -> String {
    let mut s = ObservableBundle::csv_header();
    s.push('\n');
    for b in bundles {
        s.push_str(&b.csv_row());
        s.push('\n');
    }
    s
}

/// Long format: `time,statistic,mean,stderr`.
pub fn ensemble_long_csv(stats: &EnsembleStats) -> String {
    let mut s = String::from("time,statistic,mean,stderr\n");
    for (m, e) in stats.mean.iter().zip(&stats.stderr) {
        for ((name, mv), ev) in FIELD_NAMES.iter().zip(m.values()).zip(e.values()) {
            let _ = writeln!(s, "{:.12e},{name},{mv:.12e},{ev:.12e}", m.t);
        }
    }
    s
}

pub fn ensemble_json(stats: &EnsembleStats) -> serde_json::Value {
    serde_json::json!({
        "trajectories": stats.trajectories,
        "times": stats.times,
        "mean": stats.mean,
        "stderr": stats.stderr,
        "occupation": stats.occupation,
        "snapshots": stats.snapshots.iter().map(|(t, rho)| {
            serde_json::json!({ "time": t, "rho": rho.to_json() })
        }).collect::<Vec<_>>(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: String,
    pub config_sha256: String,
    pub package: String,
    pub version: String,
    pub wall_time_seconds: f64,
    pub workers: usize,
    pub passed: bool,
    pub files: Vec<String>,
}

pub fn config_hash(config_json: &str) -> String {
    hex::encode(Sha256::digest(config_json.as_bytes()))
}

impl Manifest {
    pub fn new(command: &str, config_json: &str, wall_time_seconds: f64, workers: usize, passed: bool, out: &OutputDir) -> Self {
        Self {
            command: command.to_string(),
            config_sha256: config_hash(config_json),
            package: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            wall_time_seconds,
            workers,
            passed,
            files: out
                .files()
                .iter()
                .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
                .collect(),
        }
    }
}

/// gnuplot script plotting columns `ys` of `data` against column 1.
pub fn gnuplot_stub(data: &str, title: &str, ys: &[(usize, &str)]) -> String {
    let mut s = format!(
        "set datafile separator ','\nset key autotitle columnhead\nset title '{title}'\nset xlabel 't'\nplot "
    );
    let parts: Vec<String> = ys
        .iter()
        .map(|(col, name)| format!("'{data}' using 1:{col} with lines title '{name}'"))
        .collect();
    s.push_str(&parts.join(", \\\n     "));
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let s = csv(&["t", "x"], vec![vec![0.0, 1.0], vec![0.5, 2.0]]);
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], "t,x");
        assert_eq!(lines.len(), 3);
        assert!(lines[2].starts_with("5.000000000000e-1,"));
    }

    #[test]
    fn hash_is_stable() {
        assert_eq!(
            config_hash("{}"),
            "44136fa355b3678a1146ad16f7e8649e94fb4fc21fe77e8310c060f61caaff8a"
        );
    }

    #[test]
    fn writes_into_directory() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = OutputDir::create(&dir.path().join("nested")).unwrap();
        out.write_text("a.csv", "t\n").unwrap();
        out.write_json("b.json", &[1, 2]).unwrap();
        assert_eq!(out.files().len(), 2);
        let m = Manifest::new("stationary", "{}", 0.1, 1, true, &out);
        assert_eq!(m.files, vec!["a.csv", "b.json"]);
    }

    #[test]
    fn gnuplot_mentions_columns() {
        let s = gnuplot_stub("x.csv", "demo", &[(2, "a"), (3, "b")]);
        assert!(s.contains("using 1:2"));
        assert!(s.contains("using 1:3"));
    }
}
