//! File formats and atomic writes.

use std::fs;
use std::io::Write;
use std::path::Path;

use qswitch_core::linalg::CMatrix;
use qswitch_core::num_complex::Complex64;
use qswitch_core::problems::TARGET_UNITARY_TOL;
use qswitch_core::rounding::ControllerSequence;
use qswitch_core::sto::SwitchingSchedule;
use qswitch_core::ControlGrid;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{AppError, AppResult};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> AppError + '_ {
    move |source| AppError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes through a temporary file in the destination directory and renames
/// it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> AppResult<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(dir))?;
    tmp.write_all(bytes).map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| AppError::Io {
        path: path.to_path_buf(),
        source: e.error,
    })?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> AppResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| AppError::format(path, e))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> AppResult<T> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| AppError::format(path, e))
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> AppResult<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| AppError::format(path, e))?;
    }
    let bytes = w.into_inner().map_err(|e| AppError::format(path, e))?;
    write_atomic(path, &bytes)
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> AppResult<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| AppError::format(path, e))?;
    r.deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(|e| AppError::format(path, e))
}

/// Square complex matrix as separate real and imaginary row-major arrays.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixFile {
    pub dim: usize,
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl MatrixFile {
    pub fn from_matrix(m: &CMatrix) -> Self {
        let rows = |f: fn(&Complex64) -> f64| {
            (0..m.rows())
                .map(|i| m.row(i).iter().map(f).collect())
                .collect()
        };
        MatrixFile {
            dim: m.rows(),
            re: rows(|z| z.re),
            im: rows(|z| z.im),
        }
    }

    pub fn to_matrix(&self) -> Result<CMatrix, String> {
        let n = self.dim;
        let shaped = |a: &Vec<Vec<f64>>| a.len() == n && a.iter().all(|r| r.len() == n);
        if !shaped(&self.re) || !shaped(&self.im) {
            return Err(format!("re and im must both be {n} x {n}"));
        }
        let data = self
            .re
            .iter()
            .flatten()
            .zip(self.im.iter().flatten())
            .map(|(&re, &im)| Complex64::new(re, im))
            .collect();
        CMatrix::from_vec(n, n, data).map_err(|e| e.to_string())
    }
}

/// Reads a target operator and checks that it is unitary.
pub fn read_target(path: &Path) -> AppResult<CMatrix> {
    let file: MatrixFile = read_json(path)?;
    let m = file.to_matrix().map_err(|e| AppError::format(path, e))?;
    let defect = m.unitarity_defect();
    if !(defect <= TARGET_UNITARY_TOL) {
        return Err(AppError::format(
            path,
            format!("target is not unitary (defect {defect:.3e})"),
        ));
    }
    Ok(m)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingFile {
    pub q: usize,
    pub j: Vec<Vec<f64>>,
}

pub fn read_coupling(path: &Path) -> AppResult<Vec<Vec<f64>>> {
    let file: CouplingFile = read_json(path)?;
    if file.j.len() != file.q || file.j.iter().any(|r| r.len() != file.q) {
        return Err(AppError::format(path, format!("j must be {0} x {0}", file.q)));
    }
    Ok(file.j)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinaryFile {
    pub dt: f64,
    pub labels: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl BinaryFile {
    pub fn new(grid: &ControlGrid, labels: &[String]) -> Self {
        BinaryFile {
            dt: grid.dt(),
            labels: labels.to_vec(),
            values: grid.rows().map(<[f64]>::to_vec).collect(),
        }
    }

    pub fn to_grid(&self) -> Result<ControlGrid, String> {
        let t_f = self.dt * self.values.len() as f64;
        ControlGrid::from_rows(&self.values, t_f).map_err(|e| e.to_string())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceFile {
    pub durations: Vec<f64>,
    pub control_vectors: Vec<Vec<f64>>,
}

impl SequenceFile {
    pub fn new(seq: &ControllerSequence) -> Self {
        SequenceFile {
            durations: seq.durations.clone(),
            control_vectors: seq.controls.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleFile {
    pub t_f: f64,
    pub durations: Vec<f64>,
    pub control_vectors: Vec<Vec<f64>>,
    pub objective: f64,
    pub kkt: f64,
    pub iters: usize,
}

impl ScheduleFile {
    pub fn to_schedule(&self) -> Result<SwitchingSchedule, String> {
        SwitchingSchedule::new(self.durations.clone(), self.t_f).map_err(|e| e.to_string())
    }
}

/// One point of a plotted step function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub stage: String,
    pub time: f64,
    pub controller: String,
    pub value: f64,
}

/// Step functions as `(time, value)` pairs at both ends of every segment.
pub fn step_rows(
    stage: &str,
    labels: &[String],
    segments: impl IntoIterator<Item = (f64, f64, Vec<f64>)>,
) -> Vec<PlotRow> {
    let mut rows = Vec::new();
    for (start, end, u) in segments {
        for (label, &v) in labels.iter().zip(&u) {
            for time in [start, end] {
                rows.push(PlotRow {
                    stage: stage.to_string(),
                    time,
                    controller: label.clone(),
                    value: v,
                });
            }
        }
    }
    rows
}

/// Segments of a uniform grid.
pub fn grid_segments(grid: &ControlGrid) -> Vec<(f64, f64, Vec<f64>)> {
    let dt = grid.dt();
    grid.rows()
        .enumerate()
        .map(|(k, u)| (k as f64 * dt, (k + 1) as f64 * dt, u.to_vec()))
        .collect()
}

/// Segments of a switching schedule.
pub fn schedule_segments(controls: &[Vec<f64>], durations: &[f64]) -> Vec<(f64, f64, Vec<f64>)> {
    let mut t = 0.0;
    controls
        .iter()
        .zip(durations)
        .map(|(u, &d)| {
            let seg = (t, t + d, u.clone());
            t += d;
            seg
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelaxTraceRecord {
    pub iter: usize,
    pub objective: f64,
    pub penalty: f64,
    pub step: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoTraceRecord {
    pub iter: usize,
    pub objective: f64,
    pub kkt: f64,
    pub step: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use qswitch_core::random::{random_unitary, seeded};

    #[test]
    fn target_round_trip_and_rejection() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u.json");
        let u = random_unitary(&mut seeded(2), 4);
        write_json(&path, &MatrixFile::from_matrix(&u)).unwrap();
        assert_eq!(read_target(&path).unwrap(), u);

        let mut bad = MatrixFile::from_matrix(&u);
        bad.re[0][0] += 0.1;
        write_json(&path, &bad).unwrap();
        assert_eq!(read_target(&path).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        let labels = vec!["a".to_string(), "b".to_string()];
        let rows = step_rows("binary", &labels, schedule_segments(&[vec![1.0, 0.0], vec![0.0, 1.0]], &[0.1, 1.0 / 3.0]));
        write_csv(&path, &rows).unwrap();
        assert_eq!(read_csv::<PlotRow>(&path).unwrap(), rows);
    }
}
