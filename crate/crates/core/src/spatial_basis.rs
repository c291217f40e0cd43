//! Area-level basis built from the eigenvectors of the adjacency matrix.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::data_model::check_adjacency;
use crate::error::{Error, Result};

/// Default threshold for treating an eigenvalue as positive.
pub const DEFAULT_EIGEN_TOL: f64 = 1e-8;

const SIGN_EPS: f64 = 1e-12;

/// An `r × q` basis; row `k` is the design vector of area `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisMatrix {
    pub b: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
}

impl BasisMatrix {
    pub fn r(&self) -> usize {
        self.b.nrows()
    }

    pub fn q(&self) -> usize {
        self.b.ncols()
    }

    /// Area-indicator basis (`B = I_r`).
    pub fn indicator(r: usize) -> Self {
        Self {
            b: DMatrix::identity(r, r),
            eigenvalues: vec![1.0; r],
        }
    }

    /// A basis with no columns; models fitted with it have no area effect.
    pub fn empty(r: usize) -> Self {
        Self {
            b: DMatrix::zeros(r, 0),
            eigenvalues: Vec::new(),
        }
    }

    pub fn row(&self, area: usize) -> Result<Vec<f64>> {
        if area >= self.r() {
            return Err(Error::UnknownArea(area.to_string()));
        }
        Ok(self.b.row(area).iter().copied().collect())
    }

    /// Stacks the basis row of each listed area.
    pub fn area_design_rows(&self, area_ids: &[usize]) -> Result<DMatrix<f64>> {
        let q = self.q();
        let mut phi = DMatrix::zeros(area_ids.len(), q);
        for (i, &a) in area_ids.iter().enumerate() {
            if a >= self.r() {
                return Err(Error::UnknownArea(a.to_string()));
            }
            phi.row_mut(i).copy_from(&self.b.row(a));
        }
        Ok(phi)
    }
}

/// Eigenvectors of `A` whose eigenvalues exceed `tol`, by descending
/// eigenvalue. Each column is flipped so that its first entry with
/// `|x| > 1e-12` is positive; columns sharing an eigenvalue are ordered
/// lexicographically on entries rounded to 1e-12.
pub fn adjacency_eigenbasis(adjacency: &DMatrix<f64>, tol: f64) -> Result<BasisMatrix> {
    check_adjacency(adjacency)?;
    let r = adjacency.nrows();
    let eig = SymmetricEigen::new(adjacency.clone());

    let mut cols: Vec<(f64, DVector<f64>)> = (0..r)
        .filter(|&j| eig.eigenvalues[j] > tol)
        .map(|j| {
            let mut v: DVector<f64> = eig.eigenvectors.column(j).into_owned();
            let norm = v.norm();
            v /= norm;
            if let Some(first) = v.iter().find(|x| x.abs() > SIGN_EPS) {
                if *first < 0.0 {
                    v.neg_mut();
                }
            }
            (eig.eigenvalues[j], v)
        })
        .collect();
    if cols.is_empty() {
        return Err(Error::EmptyBasis { tol });
    }

    cols.sort_by(|(la, _), (lb, _)| lb.partial_cmp(la).unwrap_or(Ordering::Equal));
    // repeated eigenvalues: share one value and order the eigenspace columns
    let same = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0);
    let mut start = 0;
    while start < cols.len() {
        let mut end = start + 1;
        while end < cols.len() && same(cols[end - 1].0, cols[end].0) {
            end += 1;
        }
        if end - start > 1 {
            let group = &mut cols[start..end];
            let mean = group.iter().map(|(l, _)| l).sum::<f64>() / group.len() as f64;
            group.sort_by(|(_, va), (_, vb)| lexicographic(va, vb));
            group.iter_mut().for_each(|(l, _)| *l = mean);
        }
        start = end;
    }

    let q = cols.len();
    let mut b = DMatrix::zeros(r, q);
    for (j, (_, v)) in cols.iter().enumerate() {
        b.set_column(j, v);
    }
    Ok(BasisMatrix {
        b,
        eigenvalues: cols.into_iter().map(|(l, _)| l).collect(),
    })
}

fn lexicographic(a: &DVector<f64>, b: &DVector<f64>) -> Ordering {
    let round = |x: f64| (x / SIGN_EPS).round();
    for (x, y) in a.iter().zip(b.iter()) {
        match round(*x).partial_cmp(&round(*y)).unwrap_or(Ordering::Equal) {
            Ordering::Equal => continue,
            o => return o.reverse(),
        }
    }
    Ordering::Equal
}
