//! Dataset representation, CSV ingestion, validation, and covariate
//! standardization.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Right-censored survival data: observed time `X = min(T, C)`, event
/// indicator `status = I(T <= C)`, and an n x p covariate matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SurvivalDataset {
    pub time: Vec<f64>,
    pub status: Vec<u8>,
    /// Row-major n x p.
    pub covariates: Vec<f64>,
    pub names: Vec<String>,
}

impl SurvivalDataset {
    pub fn new(
        time: Vec<f64>,
        status: Vec<u8>,
        covariates: Vec<f64>,
        names: Vec<String>,
    ) -> Result<Self> {
        let data = SurvivalDataset {
            time,
            status,
            covariates,
            names,
        };
        data.validate()?;
        Ok(data)
    }

    pub fn n(&self) -> usize {
        self.time.len()
    }

    pub fn p(&self) -> usize {
        self.names.len()
    }

    /// Covariate row Z_i.
    pub fn z(&self, i: usize) -> &[f64] {
        let p = self.p();
        &self.covariates[i * p..(i + 1) * p]
    }

    /// Copy with every covariate column shifted to mean zero. The fitted
    /// coefficients, residual ranks, and observed test surfaces are
    /// invariant to this shift; the resampled correction terms are not,
    /// and are only valid in the centered parametrization, so the test
    /// pipeline works on this copy.
    pub fn centered(&self) -> SurvivalDataset {
        let n = self.n();
        let p = self.p();
        let mut mean = vec![0.0; p];
        for i in 0..n {
            for (q, m) in mean.iter_mut().enumerate() {
                *m += self.covariates[i * p + q];
            }
        }
        for m in mean.iter_mut() {
            *m /= n as f64;
        }
        let mut covariates = self.covariates.clone();
        for i in 0..n {
            for (q, m) in mean.iter().enumerate() {
                covariates[i * p + q] -= m;
            }
        }
        SurvivalDataset {
            time: self.time.clone(),
            status: self.status.clone(),
            covariates,
            names: self.names.clone(),
        }
    }

    pub fn n_events(&self) -> usize {
        self.status.iter().filter(|&&d| d == 1).count()
    }

    pub fn censoring_fraction(&self) -> f64 {
        1.0 - self.n_events() as f64 / self.n() as f64
    }

    /// Residual e_i(beta) = log X_i + Z_i' beta.
    pub fn log_residual(&self, i: usize, beta: &[f64]) -> f64 {
        self.time[i].ln() + crate::linalg::dot(self.z(i), beta)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        let p = self.p();
        if self.status.len() != n {
            return Err(Error::Validation(format!(
                "time has {n} rows but status has {}",
                self.status.len()
            )));
        }
        if self.covariates.len() != n * p {
            return Err(Error::Validation(format!(
                "covariate matrix has {} cells, expected {n} x {p}",
                self.covariates.len()
            )));
        }
        for (i, &t) in self.time.iter().enumerate() {
            if !t.is_finite() || t <= 0.0 {
                return Err(Error::Row {
                    row: i + 1,
                    message: format!("time must be positive and finite, got {t}"),
                });
            }
        }
        for (i, &d) in self.status.iter().enumerate() {
            if d > 1 {
                return Err(Error::Row {
                    row: i + 1,
                    message: format!("status must be 0 or 1, got {d}"),
                });
            }
        }
        if !self.status.iter().any(|&d| d == 1) {
            return Err(Error::Validation("no events: all status values are 0".into()));
        }
        for (k, &v) in self.covariates.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::Row {
                    row: k / p + 1,
                    message: format!("covariate {:?} is not finite", self.names[k % p]),
                });
            }
        }
        if n < p + 2 {
            return Err(Error::Validation(format!(
                "need at least p + 2 = {} subjects, got {n}",
                p + 2
            )));
        }
        Ok(())
    }

    /// Column labels of covariates taking exactly two distinct values.
    pub fn binary_columns(&self) -> Vec<String> {
        let mut out = Vec::new();
        for q in 0..self.p() {
            let mut seen: Vec<f64> = Vec::new();
            for i in 0..self.n() {
                let v = self.z(i)[q];
                if !seen.contains(&v) {
                    seen.push(v);
                    if seen.len() > 2 {
                        break;
                    }
                }
            }
            if seen.len() == 2 {
                out.push(self.names[q].clone());
            }
        }
        out
    }

    pub fn summary(&self) -> DatasetSummary {
        DatasetSummary {
            n: self.n(),
            p: self.p(),
            events: self.n_events(),
            censoring_fraction: self.censoring_fraction(),
            covariates: self.names.clone(),
            binary_covariates: self.binary_columns(),
        }
    }

    pub fn save_csv(&self, path: &Path, time_col: &str, status_col: &str) -> Result<()> {
        let mut wtr = csv::Writer::from_path(path).map_err(|e| Error::Csv {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let mut header = vec![time_col.to_string(), status_col.to_string()];
        header.extend(self.names.iter().cloned());
        let io_err = |e: csv::Error| Error::Csv {
            path: path.display().to_string(),
            message: e.to_string(),
        };
        wtr.write_record(&header).map_err(io_err)?;
        for i in 0..self.n() {
            let mut rec = vec![format!("{}", self.time[i]), format!("{}", self.status[i])];
            rec.extend(self.z(i).iter().map(|v| format!("{v}")));
            wtr.write_record(&rec).map_err(io_err)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub n: usize,
    pub p: usize,
    pub events: usize,
    pub censoring_fraction: f64,
    pub covariates: Vec<String>,
    pub binary_covariates: Vec<String>,
}

/// Per-covariate centering and scaling applied by [`standardize`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StandardizationRecord {
    pub names: Vec<String>,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    /// Columns left untouched (binary exemption).
    pub exempted: Vec<bool>,
}

impl StandardizationRecord {
    /// Undo the transform, recovering the original covariate matrix.
    pub fn invert(&self, data: &SurvivalDataset) -> SurvivalDataset {
        let p = data.p();
        let mut cov = data.covariates.clone();
        for (k, v) in cov.iter_mut().enumerate() {
            let q = k % p;
            if !self.exempted[q] {
                *v = *v * self.sd[q] + self.mean[q];
            }
        }
        SurvivalDataset {
            time: data.time.clone(),
            status: data.status.clone(),
            covariates: cov,
            names: data.names.clone(),
        }
    }

    /// Map a coefficient vector on the standardized scale back to the
    /// original covariate scale.
    pub fn back_transform_beta(&self, beta: &[f64]) -> Vec<f64> {
        beta.iter()
            .zip(&self.exempted)
            .zip(&self.sd)
            .map(|((b, &ex), sd)| if ex { *b } else { b / sd })
            .collect()
    }
}

/// Center and scale each covariate column to sample mean 0 and sd 1.
/// Columns named in `exempt_binary` with exactly two distinct values keep
/// their original coding.
pub fn standardize(
    data: &SurvivalDataset,
    exempt_binary: bool,
) -> Result<(SurvivalDataset, StandardizationRecord)> {
    let n = data.n();
    let p = data.p();
    let binary = data.binary_columns();
    let mut mean = vec![0.0; p];
    let mut sd = vec![1.0; p];
    let mut exempted = vec![false; p];
    let mut cov = data.covariates.clone();
    for q in 0..p {
        if exempt_binary && binary.contains(&data.names[q]) {
            exempted[q] = true;
            continue;
        }
        let m = (0..n).map(|i| data.z(i)[q]).sum::<f64>() / n as f64;
        let ss = (0..n).map(|i| (data.z(i)[q] - m).powi(2)).sum::<f64>();
        let s = (ss / (n as f64 - 1.0)).sqrt();
        if s <= 0.0 {
            return Err(Error::Validation(format!(
                "covariate {:?} has zero variance",
                data.names[q]
            )));
        }
        mean[q] = m;
        sd[q] = s;
        for i in 0..n {
            cov[i * p + q] = (cov[i * p + q] - m) / s;
        }
    }
    let out = SurvivalDataset {
        time: data.time.clone(),
        status: data.status.clone(),
        covariates: cov,
        names: data.names.clone(),
    };
    Ok((
        out,
        StandardizationRecord {
            names: data.names.clone(),
            mean,
            sd,
            exempted,
        },
    ))
}

/// Read a dataset from a headered CSV file (UTF-8, comma separated,
/// decimal point). Row numbers in errors are 1-based data rows.
pub fn load_csv(
    path: &Path,
    time_col: &str,
    status_col: &str,
    covariate_cols: &[String],
) -> Result<SurvivalDataset> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Csv {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let headers = rdr
        .headers()
        .map_err(|e| Error::Csv {
            path: path.display().to_string(),
            message: e.to_string(),
        })?
        .clone();
    let col_index = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Validation(format!("column {name:?} not found in header")))
    };
    let ti = col_index(time_col)?;
    let si = col_index(status_col)?;
    let ci: Vec<usize> = covariate_cols
        .iter()
        .map(|c| col_index(c))
        .collect::<Result<_>>()?;

    let mut time = Vec::new();
    let mut status = Vec::new();
    let mut covariates = Vec::new();
    for (row0, rec) in rdr.records().enumerate() {
        let row = row0 + 1;
        let rec = rec.map_err(|e| Error::Row {
            row,
            message: e.to_string(),
        })?;
        let cell = |idx: usize| -> Result<f64> {
            let raw = rec.get(idx).ok_or_else(|| Error::Row {
                row,
                message: format!("missing cell in column {idx}"),
            })?;
            raw.trim().parse::<f64>().map_err(|_| Error::Row {
                row,
                message: format!("non-numeric cell {raw:?}"),
            })
        };
        let t = cell(ti)?;
        if !t.is_finite() || t <= 0.0 {
            return Err(Error::Row {
                row,
                message: format!("time must be positive and finite, got {t}"),
            });
        }
        let s = cell(si)?;
        if s != 0.0 && s != 1.0 {
            return Err(Error::Row {
                row,
                message: format!("status must be 0 or 1, got {s}"),
            });
        }
        time.push(t);
        status.push(s as u8);
        for &idx in &ci {
            covariates.push(cell(idx)?);
        }
    }
    SurvivalDataset::new(time, status, covariates, covariate_cols.to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_csv(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    fn cols(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn loads_small_file() {
        let f = write_csv("time,status,z\n1,1,0.5\n2,0,1.5\n3,1,2.5\n");
        let d = load_csv(f.path(), "time", "status", &cols(&["z"])).unwrap();
        assert_eq!(d.n(), 3);
        assert_eq!(d.p(), 1);
        assert_eq!(d.time, vec![1.0, 2.0, 3.0]);
        assert_eq!(d.status, vec![1, 0, 1]);
    }

    #[test]
    fn rejects_zero_time_with_row_number() {
        let f = write_csv("time,status,z\n1,1,0.5\n0,0,1.5\n3,1,2.5\n");
        let err = load_csv(f.path(), "time", "status", &cols(&["z"])).unwrap_err();
        assert!(err.to_string().contains("row 2"), "{err}");
    }

    #[test]
    fn rejects_all_censored() {
        let f = write_csv("time,status,z\n1,0,0.5\n2,0,1.5\n3,0,2.5\n");
        let err = load_csv(f.path(), "time", "status", &cols(&["z"])).unwrap_err();
        assert!(err.to_string().contains("no events"), "{err}");
    }

    #[test]
    fn rejects_missing_column() {
        let f = write_csv("time,status,z\n1,1,0.5\n");
        assert!(load_csv(f.path(), "time", "status", &cols(&["w"])).is_err());
    }

    #[test]
    fn standardizes_simple_column() {
        let d = SurvivalDataset::new(
            vec![1.0, 2.0, 3.0],
            vec![1, 1, 1],
            vec![1.0, 2.0, 3.0],
            cols(&["z"]),
        )
        .unwrap();
        let (s, rec) = standardize(&d, false).unwrap();
        assert!((s.covariates[0] + 1.0).abs() < 1e-12);
        assert!(s.covariates[1].abs() < 1e-12);
        assert!((s.covariates[2] - 1.0).abs() < 1e-12);
        assert!((rec.mean[0] - 2.0).abs() < 1e-12);
        assert!((rec.sd[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn standardize_is_idempotent_and_invertible() {
        let d = SurvivalDataset::new(
            vec![1.0, 2.0, 3.0, 4.0],
            vec![1, 0, 1, 1],
            vec![0.3, -1.2, 4.0, 2.5],
            cols(&["z"]),
        )
        .unwrap();
        let (s1, rec) = standardize(&d, false).unwrap();
        let (s2, _) = standardize(&s1, false).unwrap();
        for (a, b) in s1.covariates.iter().zip(&s2.covariates) {
            assert!((a - b).abs() < 1e-12);
        }
        let back = rec.invert(&s1);
        for (a, b) in back.covariates.iter().zip(&d.covariates) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn rejects_constant_column() {
        let d = SurvivalDataset::new(
            vec![1.0, 2.0, 3.0],
            vec![1, 1, 1],
            vec![5.0, 5.0, 5.0],
            cols(&["z"]),
        )
        .unwrap();
        assert!(standardize(&d, false).is_err());
    }

    #[test]
    fn binary_columns_detected_and_exempted() {
        let d = SurvivalDataset::new(
            vec![1.0, 2.0, 3.0, 4.0],
            vec![1, 1, 1, 1],
            vec![0.0, 1.0, 1.0, 2.0, 0.0, 3.0, 1.0, 4.0],
            cols(&["trt", "z"]),
        )
        .unwrap();
        assert_eq!(d.binary_columns(), vec!["trt".to_string()]);
        let (s, rec) = standardize(&d, true).unwrap();
        assert!(rec.exempted[0]);
        assert_eq!(s.z(0)[0], 0.0);
        assert_eq!(s.z(1)[0], 1.0);
    }

    #[test]
    fn csv_round_trip() {
        let d = SurvivalDataset::new(
            vec![1.25, 2.5, 3.75],
            vec![1, 0, 1],
            vec![0.125, -1.5, 4.0625],
            cols(&["z"]),
        )
        .unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        d.save_csv(f.path(), "time", "status").unwrap();
        let d2 = load_csv(f.path(), "time", "status", &cols(&["z"])).unwrap();
        assert_eq!(d.time, d2.time);
        assert_eq!(d.status, d2.status);
        assert_eq!(d.covariates, d2.covariates);
    }
}
