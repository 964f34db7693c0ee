//! Artifact tree: every file gets a `<file>.meta.json` sidecar.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use saddlepath::dynamics::GridTrajectory;

pub struct ArtifactWriter {
    pub dir: PathBuf,
    config_name: String,
    config_hash: String,
    seed: u64,
}

impl ArtifactWriter {
    pub fn new(dir: &Path, config_name: &str, config_hash: &str, seed: u64) -> std::io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), config_name: config_name.into(), config_hash: config_hash.into(), seed })
    }

    pub fn path(&self, file: &str) -> PathBuf {
        self.dir.join(file)
    }

    /// Writes `contents` and its sidecar. `details` lands under `"details"` in the sidecar.
    pub fn write(&self, task: &str, file: &str, contents: &str, details: Value) -> std::io::Result<()> {
        fs::write(self.path(file), contents)?;
        let meta = json!({
            "file": file,
            "task": task,
            "config": self.config_name,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "versions": {
                "saddlepath": saddlepath::VERSION,
                "saddlepath-cli": env!("CARGO_PKG_VERSION"),
            },
            "details": details,
        });
        let mut text = serde_json::to_string_pretty(&meta).expect("sidecar serialises");
        text.push('\n');
        fs::write(self.path(&format!("{file}.meta.json")), text)
    }

    pub fn write_json<T: Serialize>(&self, task: &str, file: &str, value: &T, details: Value) -> std::io::Result<()> {
        let mut text = serde_json::to_string_pretty(value).expect("artifact serialises");
        text.push('\n');
        self.write(task, file, &text, details)
    }
}

/// CSV `t,x1..xd`.
pub fn trajectory_csv(traj: &GridTrajectory) -> String {
    let mut s = String::from("t");
    for c in 1..=traj.dim {
        let _ = write!(s, ",x{c}");
    }
    s.push('\n');
    for i in 0..traj.len() {
        let _ = write!(s, "{:.16e}", traj.grid.time(i));
        for v in traj.state(i) {
            let _ = write!(s, ",{v:.16e}");
        }
        s.push('\n');
    }
    s
}

/// Inverse of [`trajectory_csv`] on a known grid.
pub fn read_trajectory_csv(text: &str, grid: saddlepath::dynamics::TimeGrid) -> Result<GridTrajectory, String> {
    let mut lines = text.lines();
    let header = lines.next().ok_or("empty trajectory file")?;
    let dim = header.split(',').count() - 1;
    let mut states = Vec::with_capacity(grid.n * dim);
    let mut rows = 0;
    for (i, line) in lines.enumerate() {
        let vals: Vec<f64> = line
            .split(',')
            .map(|v| v.parse::<f64>().map_err(|e| format!("row {}: {e}", i + 1)))
            .collect::<Result<_, _>>()?;
        if vals.len() != dim + 1 {
            return Err(format!("row {}: expected {} columns", i + 1, dim + 1));
        }
        if i < grid.n && (vals[0] - grid.time(i)).abs() > 1e-9 * (1.0 + vals[0].abs()) {
            return Err(format!("row {}: time {} is not on the configured grid", i + 1, vals[0]));
        }
        states.extend_from_slice(&vals[1..]);
        rows += 1;
    }
    if rows != grid.n {
        return Err(format!("{rows} rows, the configured grid has {}", grid.n));
    }
    Ok(GridTrajectory::new(grid, dim, states))
}

/// Rows of `(y, v_y)` pairs as CSV with the given header.
pub fn pairs_csv(header: &str, pts: &[[f64; 2]]) -> String {
    let mut s = format!("{header}\n");
    for p in pts {
        let _ = writeln!(s, "{:.16e},{:.16e}", p[0], p[1]);
    }
    s
}
