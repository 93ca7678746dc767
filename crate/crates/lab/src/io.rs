//! Result files: CSV tables, dataset dumps, checkpoints and run metadata.

use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use molrg_core::dae::{DaeParams, TrainLog, TrainOptions};
use molrg_core::metrics::{SnrCurve, TradeoffCurve};
use molrg_core::molrg::{BasisSet, MolrgConfig, Sample};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, LabResult};

pub const CURVE_HEADER: [&str; 8] = ["sigma", "value", "estimator", "n", "d", "K", "delta", "seed"];
pub const TRADEOFF_HEADER: [&str; 4] = ["sigma", "denoise_rate", "h_plus", "h_minus"];
pub const PROBE_HEADER: [&str; 5] = ["sigma", "acc_train", "acc_test", "probe_kind", "seed"];
pub const ENSEMBLE_HEADER: [&str; 4] = ["center_sigma", "acc_single_best", "acc_ensemble", "label_noise"];
pub const TRAIN_LOG_HEADER: [&str; 3] = ["epoch", "loss", "subspace_distance"];

const CHECKPOINT_MAGIC: &[u8; 8] = b"MOLRGCK1";

/// Shortest representation that parses back to the same float.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

/// Write a CSV with one header row. Every row must match the header width.
pub fn write_table<S: AsRef<str>>(path: &Path, header: &[S], rows: &[Vec<String>]) -> LabResult<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header.iter().map(|h| h.as_ref()))?;
    for row in rows {
        if row.len() != header.len() {
            return Err(LabError::SchemaMismatch(format!(
                "{}: row has {} fields, header has {}",
                path.display(),
                row.len(),
                header.len()
            )));
        }
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Header and rows of a CSV file, all as strings.
pub fn read_table(path: &Path) -> LabResult<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(rec?.iter().map(str::to_string).collect());
    }
    Ok((header, rows))
}

fn dims_field(dims: &[usize]) -> String {
    match dims.first() {
        Some(&d) if dims.iter().all(|&x| x == d) => d.to_string(),
        _ => dims.iter().map(usize::to_string).collect::<Vec<_>>().join(";"),
    }
}

pub fn curve_rows(curve: &SnrCurve) -> Vec<Vec<String>> {
    let m = &curve.meta;
    curve
        .points
        .iter()
        .map(|p| {
            vec![
                fmt_f64(p.sigma),
                fmt_f64(p.value),
                curve.estimator.tag().to_string(),
                m.n.to_string(),
                dims_field(&m.dims),
                m.dims.len().to_string(),
                fmt_f64(m.delta),
                m.seed.to_string(),
            ]
        })
        .collect()
}

/// Several curves stacked in one CSV.
pub fn write_curves(path: &Path, curves: &[&SnrCurve]) -> LabResult<()> {
    let rows: Vec<Vec<String>> = curves.iter().flat_map(|c| curve_rows(c)).collect();
    write_table(path, &CURVE_HEADER, &rows)
}

pub fn write_tradeoff(path: &Path, curve: &TradeoffCurve) -> LabResult<()> {
    let rows: Vec<Vec<String>> = curve
        .points
        .iter()
        .map(|p| vec![fmt_f64(p.sigma), fmt_f64(p.denoise_rate), fmt_f64(p.h_plus), fmt_f64(p.h_minus)])
        .collect();
    write_table(path, &TRADEOFF_HEADER, &rows)
}

/// One probe evaluation at one level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbePoint {
    pub sigma: f64,
    pub acc_train: f64,
    pub acc_test: f64,
    pub probe_kind: String,
    pub seed: u64,
}

pub fn write_probe_curve(path: &Path, points: &[ProbePoint]) -> LabResult<()> {
    let rows: Vec<Vec<String>> = points
        .iter()
        .map(|p| {
            vec![fmt_f64(p.sigma), fmt_f64(p.acc_train), fmt_f64(p.acc_test), p.probe_kind.clone(), p.seed.to_string()]
        })
        .collect();
    write_table(path, &PROBE_HEADER, &rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleRow {
    pub center_sigma: f64,
    pub acc_single_best: f64,
    pub acc_ensemble: f64,
    pub label_noise: f64,
}

pub fn write_ensemble(path: &Path, rows: &[EnsembleRow]) -> LabResult<()> {
    let rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![fmt_f64(r.center_sigma), fmt_f64(r.acc_single_best), fmt_f64(r.acc_ensemble), fmt_f64(r.label_noise)]
        })
        .collect();
    write_table(path, &ENSEMBLE_HEADER, &rows)
}

pub fn write_train_log(path: &Path, log: &TrainLog) -> LabResult<()> {
    let rows: Vec<Vec<String>> = log
        .epochs
        .iter()
        .map(|e| {
            vec![
                e.epoch.to_string(),
                fmt_f64(e.loss),
                e.subspace_distance.map(fmt_f64).unwrap_or_default(),
            ]
        })
        .collect();
    write_table(path, &TRAIN_LOG_HEADER, &rows)
}

/// Row-major matrix for JSON sidecars and checkpoint headers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowMajor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl From<&DMatrix<f64>> for RowMajor {
    fn from(m: &DMatrix<f64>) -> Self {
        Self { rows: m.nrows(), cols: m.ncols(), data: m.transpose().as_slice().to_vec() }
    }
}

impl RowMajor {
    pub fn to_matrix(&self) -> LabResult<DMatrix<f64>> {
        if self.data.len() != self.rows * self.cols {
            return Err(LabError::SchemaMismatch("matrix payload has the wrong length".into()));
        }
        Ok(DMatrix::from_row_slice(self.rows, self.cols, &self.data))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSidecar {
    pub config: MolrgConfig,
    pub seed: u64,
    pub count: usize,
    /// Class bases, `u` then `u_tilde`, when stored.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u: Option<Vec<RowMajor>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_tilde: Option<Vec<RowMajor>>,
}

/// Write `path` ("label,x_0,...") and `path` with a `.json` extension.
pub fn write_dataset(path: &Path, samples: &[Sample], config: &MolrgConfig, seed: u64, bases: Option<&BasisSet>) -> LabResult<()> {
    let n = samples.first().map_or(config.n, |s| s.x0.len());
    let mut header = vec!["label".to_string()];
    header.extend((0..n).map(|i| format!("x_{i}")));
    let rows: Vec<Vec<String>> = samples
        .iter()
        .map(|s| std::iter::once(s.label.to_string()).chain(s.x0.iter().map(|v| fmt_f64(*v))).collect())
        .collect();
    write_table(path, &header, &rows)?;
    let sidecar = DatasetSidecar {
        config: config.clone(),
        seed,
        count: samples.len(),
        u: bases.map(|b| b.u.iter().map(RowMajor::from).collect()),
        u_tilde: bases.map(|b| b.u_tilde.iter().map(RowMajor::from).collect()),
    };
    write_json(&path.with_extension("json"), &sidecar)
}

/// Labels and rows of a dataset CSV.
pub fn read_dataset(path: &Path) -> LabResult<(Vec<usize>, DMatrix<f64>)> {
    let (header, rows) = read_table(path)?;
    if header.first().map(String::as_str) != Some("label") || header.len() < 2 {
        return Err(LabError::SchemaMismatch(format!("{}: not a dataset file", path.display())));
    }
    let n = header.len() - 1;
    let mut labels = Vec::with_capacity(rows.len());
    let mut data = Vec::with_capacity(rows.len() * n);
    for row in &rows {
        labels.push(parse(&row[0])?);
        for v in &row[1..] {
            data.push(parse(v)?);
        }
    }
    Ok((labels, DMatrix::from_row_slice(rows.len(), n, &data)))
}

pub fn parse<T: std::str::FromStr>(s: &str) -> LabResult<T> {
    s.trim().parse().map_err(|_| LabError::SchemaMismatch(format!("cannot parse field {s:?}")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub rows: usize,
    pub cols: usize,
    pub block_dims: Vec<usize>,
    pub delta: f64,
    pub config: MolrgConfig,
    pub epoch: usize,
    pub seed: u64,
    pub train: TrainOptions,
}

/// Magic, little-endian u64 header length, JSON header, then U row-major as
/// little-endian f64.
pub fn write_checkpoint(path: &Path, params: &DaeParams, header: &CheckpointHeader) -> LabResult<()> {
    if header.rows != params.u.nrows() || header.cols != params.u.ncols() {
        return Err(LabError::SchemaMismatch("checkpoint header does not match U".into()));
    }
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let json = serde_json::to_vec(header)?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    for v in RowMajor::from(&params.u).data {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> LabResult<(DaeParams, CheckpointHeader)> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    let bad = || LabError::SchemaMismatch(format!("{}: not a checkpoint", path.display()));
    if bytes.len() < 16 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(bad());
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = bytes.get(16..16 + len).ok_or_else(bad)?;
    let header: CheckpointHeader = serde_json::from_slice(body)?;
    let payload = &bytes[16 + len..];
    if payload.len() != header.rows * header.cols * 8 {
        return Err(bad());
    }
    let data: Vec<f64> = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    let u = DMatrix::from_row_slice(header.rows, header.cols, &data);
    if header.block_dims.iter().sum::<usize>() != header.cols {
        return Err(bad());
    }
    let params = DaeParams { u, block_dims: header.block_dims.clone(), delta: header.delta };
    Ok((params, header))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> LabResult<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Ok,
    Failed,
}

/// Contents of `meta.json`; feeding it back through `--config` reruns the experiment.
#[derive(Debug, Clone, Serialize)]
pub struct Meta<'a> {
    pub spec: &'a crate::spec::ExperimentSpec,
    pub version: &'static str,
    pub seeds: &'a [u64],
    pub wall_time_s: f64,
    pub status: RunStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub files: Vec<PathBuf>,
    pub notes: Vec<String>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use molrg_core::metrics::{CurveMeta, Estimator};
    use molrg_core::molrg::{gen_bases, sample_dataset};

    #[test]
    fn curve_csv_has_fixed_header_and_one_row_per_level() {
        let dir = tempfile::tempdir().unwrap();
        let meta = CurveMeta { n: 50, dims: vec![10, 2], delta: 0.2, seed: 3, samples: 10 };
        let c = SnrCurve::from_values(&[0.1, 0.2, 0.4], &[1.0, 2.5, 0.5], Estimator::Pca, meta).unwrap();
        let p = dir.path().join("c.csv");
        write_curves(&p, &[&c]).unwrap();
        let (h, rows) = read_table(&p).unwrap();
        assert_eq!(h, CURVE_HEADER);
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[1], ["0.2", "2.5", "pca", "50", "10;2", "2", "0.2", "3"]);
    }

    #[test]
    fn checkpoint_round_trips_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let params = molrg_core::dae::init_params(8, 2, 2, 0.3, 5).unwrap();
        let header = CheckpointHeader {
            rows: 8,
            cols: 4,
            block_dims: vec![2, 2],
            delta: 0.3,
            config: MolrgConfig::uniform(8, 2, 2, 0.3),
            epoch: 7,
            seed: 5,
            train: TrainOptions::default(),
        };
        let p = dir.path().join("m.ckpt");
        write_checkpoint(&p, &params, &header).unwrap();
        let (back, h) = read_checkpoint(&p).unwrap();
        assert_eq!(back, params);
        assert_eq!(h, header);
        fs::write(&p, b"garbage").unwrap();
        assert!(matches!(read_checkpoint(&p), Err(LabError::SchemaMismatch(_))));
    }

    #[test]
    fn dataset_round_trips_with_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = MolrgConfig::uniform(6, 2, 2, 0.2);
        let bases = gen_bases(&cfg, 1).unwrap();
        let data = sample_dataset(&cfg, &bases, 20, 2).unwrap();
        let p = dir.path().join("d.csv");
        write_dataset(&p, &data, &cfg, 2, Some(&bases)).unwrap();
        let (labels, x) = read_dataset(&p).unwrap();
        assert_eq!(labels, molrg_core::molrg::labels(&data));
        for (i, s) in data.iter().enumerate() {
            assert_eq!(x.row(i).transpose(), s.x0);
        }
        let side: DatasetSidecar = serde_json::from_str(&fs::read_to_string(p.with_extension("json")).unwrap()).unwrap();
        assert_eq!(side.config, cfg);
        assert_eq!(side.u.unwrap()[1].to_matrix().unwrap(), bases.u[1]);
    }

    #[test]
    fn ragged_rows_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let r = write_table(&dir.path().join("x.csv"), &["a", "b"], &[vec!["1".into()]]);
        assert!(matches!(r, Err(LabError::SchemaMismatch(_))));
    }
}
