//! Synthetic data generation and CSV dataset IO.

use crate::config::{DirichletTruth, RegressionTruth};
use anyhow::{bail, Context, Result};
use ndp::models::{DirichletModel, Model, RegressionHyper, RegressionModel, RegressionParams};
use ndp::rng::seeded_rng;
use std::path::Path;

/// Generates `(X, Y)` under the Gaussian regression model with the given
/// true parameters. Deterministic given the seed.
pub fn generate_regression_data(
    truth: &RegressionTruth,
    n: u64,
    seed: u64,
) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let p = truth.mu.len();
    if truth.beta.len() != p + 1 || truth.phi.len() != p {
        bail!("truth dimensions disagree");
    }
    // hyperparameters are irrelevant for data generation; any valid set works
    let model = RegressionModel::new(p, RegressionHyper::unit(p, -5.0, 5.0), 1.0)?;
    let params = RegressionParams::new(
        nalgebra_vec(&truth.beta),
        truth.tau,
        nalgebra_vec(&truth.mu),
        nalgebra_mat(&truth.phi)?,
    )?;
    let mut rng = seeded_rng(seed);
    let mut xs = Vec::with_capacity(n as usize);
    let mut ys = Vec::with_capacity(n as usize);
    for _ in 0..n {
        let rec = model.sample_datum(&params, &mut rng);
        xs.push(rec.x);
        ys.push(rec.y);
    }
    Ok((xs, ys))
}

/// Generates compositional rows from a Dirichlet with the true
/// concentrations.
pub fn generate_dirichlet_data(truth: &DirichletTruth, n: u64, seed: u64) -> Result<Vec<[f64; 3]>> {
    if truth.alpha.len() != 3 {
        bail!("need exactly three concentrations");
    }
    let model = DirichletModel::new(1.0, 0.1, 0.0006, 1.0, 0.15)?;
    let params = ndp::models::DirichletParams {
        alpha: [truth.alpha[0], truth.alpha[1], truth.alpha[2]],
    };
    let mut rng = seeded_rng(seed);
    Ok((0..n).map(|_| model.sample_datum(&params, &mut rng)).collect())
}

fn nalgebra_vec(v: &[f64]) -> nalgebra::DVector<f64> {
    nalgebra::DVector::from_vec(v.to_vec())
}

fn nalgebra_mat(rows: &[Vec<f64>]) -> Result<nalgebra::DMatrix<f64>> {
    let r = rows.len();
    if r == 0 || rows.iter().any(|row| row.len() != rows[0].len()) {
        bail!("matrix rows must be rectangular");
    }
    Ok(nalgebra::DMatrix::from_fn(r, rows[0].len(), |i, j| rows[i][j]))
}

/// Reads a numeric CSV with a header row into column-major form.
pub fn read_numeric_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut reader = csv::Reader::from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let header: Vec<String> =
        reader.headers().context("reading header")?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.with_context(|| format!("reading row {}", i + 1))?;
        let row: Vec<f64> = record
            .iter()
            .map(|field| {
                field
                    .trim()
                    .parse::<f64>()
                    .with_context(|| format!("row {}: non-numeric field {field:?}", i + 1))
            })
            .collect::<Result<_>>()?;
        if row.len() != header.len() {
            bail!("row {} has {} fields, header has {}", i + 1, row.len(), header.len());
        }
        rows.push(row);
    }
    if rows.is_empty() {
        bail!("dataset {} has no rows", path.display());
    }
    Ok((header, rows))
}

/// Writes a numeric CSV with a header row; `.` decimal separators and no
/// thousands separators.
pub fn write_numeric_csv(path: &Path, header: &[String], rows: &[Vec<f64>]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)
        .with_context(|| format!("creating {}", path.display()))?;
    writer.write_record(header)?;
    for row in rows {
        writer.write_record(row.iter().map(|v| format!("{v}")))?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regression_data_is_deterministic_and_shaped() {
        let truth = RegressionTruth {
            beta: vec![0.0, -1.0, 1.0],
            tau: 1.0,
            mu: vec![-1.0, 1.0],
            phi: crate::config::identity(2),
        };
        let (x1, y1) = generate_regression_data(&truth, 1, 5).unwrap();
        assert_eq!(x1.len(), 1);
        assert_eq!(x1[0].len(), 2);
        assert_eq!(y1.len(), 1);
        let (x2, y2) = generate_regression_data(&truth, 1, 5).unwrap();
        assert_eq!(x1, x2);
        assert_eq!(y1, y2);
    }

    #[test]
    fn regression_data_moments_match_truth_at_large_n() {
        let truth = RegressionTruth {
            beta: vec![0.0, -1.0, 1.0],
            tau: 1.0,
            mu: vec![-1.0, 1.0],
            phi: crate::config::identity(2),
        };
        let n = 60_000u64;
        let (xs, ys) = generate_regression_data(&truth, n, 11).unwrap();
        let mean_x0 = xs.iter().map(|r| r[0]).sum::<f64>() / n as f64;
        let mean_x1 = xs.iter().map(|r| r[1]).sum::<f64>() / n as f64;
        assert!((mean_x0 + 1.0).abs() < 0.02, "mean x0 = {mean_x0}");
        assert!((mean_x1 - 1.0).abs() < 0.02, "mean x1 = {mean_x1}");
        // E[y] = beta0 + beta1 mu1 + beta2 mu2 = 0 + 1 + 1 = 2
        let mean_y = ys.iter().sum::<f64>() / n as f64;
        assert!((mean_y - 2.0).abs() < 0.03, "mean y = {mean_y}");
    }

    #[test]
    fn dirichlet_rows_live_on_the_simplex() {
        let truth = DirichletTruth { alpha: vec![15.0, 2.0, 18.0] };
        let rows = generate_dirichlet_data(&truth, 500, 3).unwrap();
        for row in rows {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(row.iter().all(|v| *v > 0.0));
        }
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        let header = vec!["x1".to_string(), "x2".to_string(), "y".to_string()];
        let rows = vec![vec![1.0, 2.5, -0.25], vec![0.125, -3.0, 4.0]];
        write_numeric_csv(&path, &header, &rows).unwrap();
        let (h2, r2) = read_numeric_csv(&path).unwrap();
        assert_eq!(header, h2);
        assert_eq!(rows, r2);
    }

    #[test]
    fn csv_rejects_non_numeric_fields() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "a,b\n1.0,oops\n").unwrap();
        assert!(read_numeric_csv(&path).is_err());
    }
}
