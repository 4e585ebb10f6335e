// SPDX-License-Identifier: MIT OR Apache-2.0

//! Pairwise angles between feature directions, a disentanglement summary.
//! Angles near 90 degrees mean the directions are independent.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::latent::{dot, DirectionSet};

/// Symmetric K x K matrix of angles in degrees.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AngleMatrix {
    pub feature_ids: Vec<String>,
    pub degrees: Vec<Vec<f64>>,
}

/// Angle in degrees between two unit vectors.
pub fn angle_deg(a: &[f64], b: &[f64]) -> f64 {
    dot(a, b).clamp(-1.0, 1.0).acos().to_degrees()
}

/// Computes all pairwise angles. Every row must be valid; use
/// [`DirectionSet::valid_subset`] first for partially fitted sets.
pub fn angle_matrix(dirs: &DirectionSet) -> Result<AngleMatrix> {
    if let Some(i) = (0..dirs.len()).find(|&i| !dirs.is_valid(i)) {
        return Err(Error::MissingDirection(dirs.feature_ids()[i].clone()));
    }
    let k = dirs.len();
    let mut degrees = vec![vec![0.0; k]; k];
    for (i, j) in (0..k).flat_map(|i| (i + 1..k).map(move |j| (i, j))) {
        let a = angle_deg(dirs.row(i), dirs.row(j));
        degrees[i][j] = a;
        degrees[j][i] = a;
    }
    Ok(AngleMatrix {
        feature_ids: dirs.feature_ids().to_vec(),
        degrees,
    })
}

impl AngleMatrix {
    pub fn len(&self) -> usize {
        self.feature_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.feature_ids.is_empty()
    }

    /// Smallest off-diagonal angle and the pair that attains it.
    pub fn min_off_diagonal(&self) -> Option<(f64, usize, usize)> {
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..self.len() {
            for j in i + 1..self.len() {
                let a = self.degrees[i][j];
                if best.is_none_or(|(b, _, _)| a < b) {
                    best = Some((a, i, j));
                }
            }
        }
        best
    }

    /// CSV with a header row of feature ids and K rows of degrees at one decimal.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.feature_ids).expect("in-memory write");
        for row in &self.degrees {
            w.write_record(row.iter().map(|a| format!("{a:.1}")))
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
    }

    pub fn from_csv(s: &str) -> Result<AngleMatrix> {
        let fmt_err = |location: String, message: String| Error::Format {
            what: "angle report".into(),
            location,
            message,
        };
        let mut r = csv::Reader::from_reader(s.as_bytes());
        let feature_ids: Vec<String> = r
            .headers()
            .map_err(|e| fmt_err("header".into(), e.to_string()))?
            .iter()
            .map(String::from)
            .collect();
        let mut degrees = Vec::with_capacity(feature_ids.len());
        for (line, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| fmt_err(format!("row {}", line + 1), e.to_string()))?;
            let row = rec
                .iter()
                .map(|c| c.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| fmt_err(format!("row {}", line + 1), e.to_string()))?;
            degrees.push(row);
        }
        if degrees.len() != feature_ids.len() {
            return Err(Error::dim(
                "angle report rows",
                feature_ids.len(),
                degrees.len(),
            ));
        }
        Ok(AngleMatrix {
            feature_ids,
            degrees,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(rows: Vec<Vec<f64>>) -> DirectionSet {
        let ids = (0..rows.len()).map(|i| format!("f{i}")).collect();
        DirectionSet::new(ids, rows).unwrap()
    }

    #[test]
    fn examples() {
        let s = 0.5f64.sqrt();
        let m = angle_matrix(&set(vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![s, s]])).unwrap();
        assert_eq!(m.degrees[0][1], 90.0);
        assert!((m.degrees[0][2] - 45.0).abs() < 1e-12);
        for i in 0..3 {
            assert_eq!(m.degrees[i][i], 0.0);
        }
        assert_eq!(m.min_off_diagonal().unwrap().1, 0);
    }

    #[test]
    fn parallel_rows_do_not_produce_nan() {
        let v = vec![0.6, 0.8];
        let m = angle_matrix(&set(vec![v.clone(), v])).unwrap();
        assert_eq!(m.degrees[0][1], 0.0);
    }

    #[test]
    fn invalid_rows_rejected() {
        let d = set(vec![vec![1.0, 0.0], vec![0.0, 0.0]]);
        assert!(angle_matrix(&d).is_err());
        assert_eq!(angle_matrix(&d.valid_subset()).unwrap().len(), 1);
    }

    #[test]
    fn csv_layout() {
        let m = angle_matrix(&set(vec![vec![1.0, 0.0], vec![0.0, 1.0]])).unwrap();
        assert_eq!(m.to_csv(), "f0,f1\n0.0,90.0\n90.0,0.0\n");
        assert_eq!(AngleMatrix::from_csv(&m.to_csv()).unwrap(), m);
        assert!(AngleMatrix::from_csv("a,b\n0.0,1.0\n").is_err());
        assert!(AngleMatrix::from_csv("a\nx\n").is_err());
    }
}
