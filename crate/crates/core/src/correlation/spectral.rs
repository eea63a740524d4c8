use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};

use super::{center, correlation, covariance, CenteredPanel, CorrelationMatrix, MatrixSource};
use crate::error::{Error, Result};
use crate::panel::SignalPanel;

const SYMMETRY_RTOL: f64 = 1e-10;
/// Eigenvalues below this fraction of the largest count as zero for rank.
const RANK_RTOL: f64 = 1e-10;

/// Eigenpairs in descending order; each eigenvector's largest-magnitude
/// component is positive.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenDecomposition {
    pub eigenvalues: DVector<f64>,
    /// Column `k` belongs to `eigenvalues[k]`.
    pub eigenvectors: DMatrix<f64>,
}

impl EigenDecomposition {
    /// Number of eigenvalues above `RANK_RTOL · λ_max`.
    pub fn numerical_rank(&self) -> usize {
        let top = self.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        if top == 0.0 {
            return 0;
        }
        self.eigenvalues
            .iter()
            .filter(|&&l| l > RANK_RTOL * top)
            .count()
    }
}

/// Thin singular value decomposition `M = U S Vᵀ` of an N×T matrix with
/// `k = min(N, T)`: `u` is N×k, `v` is T×k, both with orthonormal columns.
/// Singular values are non-increasing; the largest-magnitude component of
/// every column of `u` is positive.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdFactors {
    pub u: DMatrix<f64>,
    pub singular_values: DVector<f64>,
    pub v: DMatrix<f64>,
}

impl SvdFactors {
    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.u * DMatrix::from_diagonal(&self.singular_values) * self.v.transpose()
    }
}

/// Flips column `k` of each matrix so that the largest-magnitude entry of
/// `lead`'s column is positive.
fn fix_signs(lead: &mut DMatrix<f64>, follow: Option<&mut DMatrix<f64>>) {
    let mut flips = Vec::new();
    for (k, mut col) in lead.column_iter_mut().enumerate() {
        let pivot = col.iter().copied().fold(
            0.0f64,
            |best, x| if x.abs() > best.abs() { x } else { best },
        );
        if pivot < 0.0 {
            col.neg_mut();
            flips.push(k);
        }
    }
    if let Some(f) = follow {
        for k in flips {
            f.column_mut(k).neg_mut();
        }
    }
}

/// Reorders columns by descending `values`.
fn sort_desc(values: &DVector<f64>, cols: &[&DMatrix<f64>]) -> (DVector<f64>, Vec<DMatrix<f64>>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let sorted = DVector::from_iterator(values.len(), order.iter().map(|&k| values[k]));
    let mats = cols
        .iter()
        .map(|m| DMatrix::from_fn(m.nrows(), order.len(), |i, k| m[(i, order[k])]))
        .collect();
    (sorted, mats)
}

/// Symmetric eigendecomposition.
pub fn eigen(m: &DMatrix<f64>) -> Result<EigenDecomposition> {
    if !m.is_square() {
        return Err(Error::ShapeMismatch {
            expected: (m.nrows(), m.nrows()),
            found: m.shape(),
        });
    }
    let asym = (m - m.transpose()).amax();
    if asym > SYMMETRY_RTOL * m.amax().max(1.0) {
        return Err(Error::NotSymmetric(asym));
    }
    let sym = (m + m.transpose()) * 0.5;
    let SymmetricEigen {
        eigenvalues,
        eigenvectors,
    } = SymmetricEigen::new(sym);
    let (eigenvalues, mut mats) = sort_desc(&eigenvalues, &[&eigenvectors]);
    let mut eigenvectors = mats.remove(0);
    fix_signs(&mut eigenvectors, None);
    Ok(EigenDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

/// Thin SVD of the centered data matrix.
pub fn svd(m: &CenteredPanel) -> SvdFactors {
    svd_matrix(&m.values)
}

pub(crate) fn svd_matrix(x: &DMatrix<f64>) -> SvdFactors {
    let k = x.nrows().min(x.ncols());
    if k == 0 {
        return SvdFactors {
            u: DMatrix::zeros(x.nrows(), 0),
            singular_values: DVector::zeros(0),
            v: DMatrix::zeros(x.ncols(), 0),
        };
    }
    let SVD {
        u,
        v_t,
        singular_values,
    } = SVD::new(x.clone(), true, true);
    let u = u.expect("left vectors requested");
    let v = v_t.expect("right vectors requested").transpose();
    let (singular_values, mut mats) = sort_desc(&singular_values, &[&u, &v]);
    let mut v = mats.pop().expect("two matrices");
    let mut u = mats.pop().expect("two matrices");
    fix_signs(&mut u, Some(&mut v));
    SvdFactors {
        u,
        singular_values,
        v,
    }
}

/// Zeroes the singular values listed in `drop` (1-based, 1 = largest) and
/// returns the re-centered reduced series.
pub fn reduce(m: &CenteredPanel, factors: &SvdFactors, drop: &[usize]) -> Result<CenteredPanel> {
    let k = factors.singular_values.len();
    if factors.u.nrows() != m.values.nrows() || factors.v.nrows() != m.values.ncols() {
        return Err(Error::ShapeMismatch {
            expected: m.values.shape(),
            found: (factors.u.nrows(), factors.v.nrows()),
        });
    }
    if let Some(&bad) = drop.iter().find(|&&d| d == 0 || d > k) {
        return Err(Error::InvalidArgument(format!(
            "cannot drop singular value {bad}: valid indices are 1..={k}"
        )));
    }
    let mut idx = drop.to_vec();
    idx.sort_unstable();
    idx.dedup();
    let mut reduced = m.values.clone();
    for d in idx {
        let c = d - 1;
        let s = factors.singular_values[c];
        reduced -= factors.u.column(c) * factors.v.column(c).transpose() * s;
    }
    let mut out = super::center_matrix(
        m.ids.clone(),
        &reduced,
        m.window_start,
        m.window_len,
        MatrixSource::Reduced,
    );
    out.magnitude = m.magnitude;
    out.means = m.means.clone();
    Ok(out)
}

/// Correlation matrix of the series left after removing the listed
/// singular components.
pub fn reduced_correlation(panel: &SignalPanel, drop: &[usize]) -> Result<CorrelationMatrix> {
    let m = center(panel)?;
    let factors = svd(&m);
    let r = reduce(&m, &factors, drop)?;
    correlation(&covariance(&r))
}
