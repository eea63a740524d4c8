//! Centering, covariance and Pearson correlation of turbine panels, plus
//! spectral tools for removing collective modes.
//!
//! Covariances normalise by `1/T`. Correlations are
//! `C_ij = Σ_ij / (σ_i σ_j)` with `σ_i = sqrt(Σ_ii)`.

mod spectral;
mod window;

use chrono::{DateTime, Utc};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{Observable, SignalPanel};

pub use spectral::{eigen, reduce, reduced_correlation, svd, EigenDecomposition, SvdFactors};
pub use window::{
    deviation_series, sliding_correlations, WindowFailure, WindowMode, WindowOutcome, WindowSpec,
};

/// A row whose standard deviation is at most this fraction of the
/// window's largest absolute value counts as constant.
pub const ZERO_VARIANCE_RTOL: f64 = 1e-10;

/// Which series a correlation matrix was computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixSource {
    Raw,
    Reduced,
    Deviation,
}

impl MatrixSource {
    pub fn as_str(self) -> &'static str {
        match self {
            MatrixSource::Raw => "raw",
            MatrixSource::Reduced => "reduced",
            MatrixSource::Deviation => "deviation",
        }
    }
}

/// Rows of a window with their time means removed.
#[derive(Debug, Clone, PartialEq)]
pub struct CenteredPanel {
    pub ids: Vec<String>,
    /// N×T, zero mean along each row.
    pub values: DMatrix<f64>,
    pub means: Vec<f64>,
    pub window_start: DateTime<Utc>,
    /// Window length in seconds.
    pub window_len: i64,
    /// Largest absolute value of the uncentered input; reference scale for
    /// the zero-variance test.
    pub magnitude: f64,
    pub source: MatrixSource,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix {
    pub ids: Vec<String>,
    pub entries: DMatrix<f64>,
    pub stddevs: Vec<f64>,
    pub window_start: DateTime<Utc>,
    pub window_len: i64,
    pub magnitude: f64,
    pub source: MatrixSource,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    pub ids: Vec<String>,
    pub entries: DMatrix<f64>,
    pub window_start: DateTime<Utc>,
    pub window_len: i64,
    pub source: MatrixSource,
    /// Numerical rank, when it has been determined.
    pub rank: Option<usize>,
}

impl CorrelationMatrix {
    pub fn n(&self) -> usize {
        self.ids.len()
    }

    pub fn off_diagonal(&self) -> impl Iterator<Item = f64> + '_ {
        let n = self.n();
        (0..n).flat_map(move |i| {
            (0..n)
                .filter(move |&j| j != i)
                .map(move |j| self.entries[(i, j)])
        })
    }

    /// Mean of the off-diagonal entries (0 for a 1×1 matrix).
    pub fn mean_off_diagonal(&self) -> f64 {
        let n = self.n();
        if n < 2 {
            return 0.0;
        }
        self.off_diagonal().sum::<f64>() / (n * (n - 1)) as f64
    }

    pub fn mean_abs_off_diagonal(&self) -> f64 {
        let n = self.n();
        if n < 2 {
            return 0.0;
        }
        self.off_diagonal().map(f64::abs).sum::<f64>() / (n * (n - 1)) as f64
    }

    /// Mean of `C_ij` over `i ∈ a`, `j ∈ b`, `i ≠ j` (indices into `ids`).
    pub fn mean_between(&self, a: &[usize], b: &[usize]) -> Option<f64> {
        let mut sum = 0.0;
        let mut count = 0usize;
        for &i in a {
            for &j in b {
                if i != j {
                    sum += self.entries[(i, j)];
                    count += 1;
                }
            }
        }
        (count > 0).then(|| sum / count as f64)
    }
}

/// Removes the time mean of every row. The panel must be gap-free.
pub fn center(panel: &SignalPanel) -> Result<CenteredPanel> {
    let missing = panel.missing_count();
    if missing > 0 {
        return Err(Error::MissingCells { count: missing });
    }
    let source = match panel.observable {
        Observable::Deviation => MatrixSource::Deviation,
        _ => MatrixSource::Raw,
    };
    Ok(center_matrix(
        panel.turbine_ids.clone(),
        &panel.values,
        panel.t0,
        panel.step * panel.n_steps() as i64,
        source,
    ))
}

pub(crate) fn center_matrix(
    ids: Vec<String>,
    x: &DMatrix<f64>,
    window_start: DateTime<Utc>,
    window_len: i64,
    source: MatrixSource,
) -> CenteredPanel {
    let t = x.ncols() as f64;
    let means: Vec<f64> = x.row_iter().map(|r| r.sum() / t).collect();
    let values = DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)] - means[i]);
    CenteredPanel {
        ids,
        values,
        means,
        window_start,
        window_len,
        magnitude: x.amax(),
        source,
    }
}

/// `Σ = M Mᵀ / T`.
pub fn covariance(m: &CenteredPanel) -> CovarianceMatrix {
    let t = m.values.ncols() as f64;
    let mut entries = &m.values * m.values.transpose() / t;
    let n = entries.nrows();
    for i in 0..n {
        for j in 0..i {
            entries[(i, j)] = entries[(j, i)];
        }
    }
    let stddevs = (0..n).map(|i| entries[(i, i)].max(0.0).sqrt()).collect();
    CovarianceMatrix {
        ids: m.ids.clone(),
        entries,
        stddevs,
        window_start: m.window_start,
        window_len: m.window_len,
        magnitude: m.magnitude,
        source: m.source,
    }
}

/// `C = σ⁻¹ Σ σ⁻¹`. Fails naming every turbine with (numerically) zero
/// variance.
pub fn correlation(cov: &CovarianceMatrix) -> Result<CorrelationMatrix> {
    let floor = ZERO_VARIANCE_RTOL * cov.magnitude;
    let flat: Vec<String> = cov
        .stddevs
        .iter()
        .zip(&cov.ids)
        .filter(|(s, _)| **s <= floor || **s == 0.0)
        .map(|(_, id)| id.clone())
        .collect();
    if !flat.is_empty() {
        return Err(Error::ZeroVarianceTurbine(flat));
    }
    let n = cov.ids.len();
    let s = &cov.stddevs;
    let mut entries = DMatrix::identity(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let c = (cov.entries[(i, j)] / (s[i] * s[j])).clamp(-1.0, 1.0);
            entries[(i, j)] = c;
            entries[(j, i)] = c;
        }
    }
    Ok(CorrelationMatrix {
        ids: cov.ids.clone(),
        entries,
        window_start: cov.window_start,
        window_len: cov.window_len,
        source: cov.source,
        rank: None,
    })
}

/// Plain correlation matrix of a gap-free panel.
pub fn panel_correlation(panel: &SignalPanel) -> Result<CorrelationMatrix> {
    correlation(&covariance(&center(panel)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;
    use proptest::prelude::*;

    fn panel(rows: &[&[f64]]) -> SignalPanel {
        let n = rows.len();
        let t = rows[0].len();
        SignalPanel::complete(
            (0..n).map(|i| format!("T{i}")).collect(),
            Utc.with_ymd_and_hms(2014, 3, 1, 0, 0, 0).unwrap(),
            600,
            DMatrix::from_fn(n, t, |i, j| rows[i][j]),
            Observable::ActivePower,
        )
        .unwrap()
    }

    fn centered(rows: &[&[f64]]) -> CenteredPanel {
        let n = rows.len();
        let t = rows[0].len();
        let x = DMatrix::from_fn(n, t, |i, j| rows[i][j]);
        CenteredPanel {
            ids: (0..n).map(|i| format!("T{i}")).collect(),
            values: x.clone(),
            means: vec![0.0; n],
            window_start: Utc.with_ymd_and_hms(2014, 3, 1, 0, 0, 0).unwrap(),
            window_len: 600 * t as i64,
            magnitude: x.amax(),
            source: MatrixSource::Raw,
        }
    }

    #[test]
    fn center_examples() {
        let c = center(&panel(&[&[2.0, 0.0], &[5.0, 5.0]])).unwrap();
        assert_eq!(
            c.values.row(0).iter().copied().collect::<Vec<_>>(),
            vec![1.0, -1.0]
        );
        assert_eq!(
            c.values.row(1).iter().copied().collect::<Vec<_>>(),
            vec![0.0, 0.0]
        );
        assert_eq!(c.means, vec![1.0, 5.0]);
    }

    #[test]
    fn center_rejects_gaps() {
        let p = SignalPanel::from_rows(
            vec!["A".into()],
            Utc.with_ymd_and_hms(2014, 3, 1, 0, 0, 0).unwrap(),
            600,
            &[vec![Some(1.0), None]],
            Observable::ActivePower,
        )
        .unwrap();
        assert!(matches!(center(&p), Err(Error::MissingCells { count: 1 })));
    }

    #[test]
    fn covariance_examples() {
        let s = covariance(&centered(&[&[1.0, -1.0], &[1.0, -1.0]]));
        assert_eq!(s.entries, DMatrix::from_element(2, 2, 1.0));
        let single = covariance(&centered(&[&[1.0, -1.0]]));
        assert_eq!(single.entries, DMatrix::from_element(1, 1, 1.0));
        let z = covariance(&centered(&[&[1.0, -1.0], &[0.0, 0.0]]));
        assert_eq!(z.stddevs[1], 0.0);
        assert_eq!(
            z.entries.row(1).iter().copied().collect::<Vec<_>>(),
            vec![0.0, 0.0]
        );
        assert_eq!(z.entries[(0, 1)], 0.0);
    }

    #[test]
    fn correlation_examples() {
        let anti = panel_correlation(&panel(&[&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]])).unwrap();
        assert!((anti.entries[(0, 1)] + 1.0).abs() < 1e-15);
        let same = panel_correlation(&panel(&[&[1.0, 4.0, 2.0], &[1.0, 4.0, 2.0]])).unwrap();
        assert!((same.entries[(0, 1)] - 1.0).abs() < 1e-15);
        assert_eq!(same.entries[(0, 0)], 1.0);
    }

    #[test]
    fn constant_rows_are_named() {
        let err = panel_correlation(&panel(&[&[1.0, 2.0, 3.0], &[0.1, 0.1, 0.1], &[7.0; 3]]))
            .unwrap_err();
        match err {
            Error::ZeroVarianceTurbine(ids) => {
                assert_eq!(ids, vec!["T1".to_string(), "T2".to_string()])
            }
            e => panic!("unexpected {e}"),
        }
        assert!(matches!(
            panel_correlation(&panel(&[&[0.0; 4]])),
            Err(Error::ZeroVarianceTurbine(_))
        ));
    }

    #[test]
    fn random_rows_center_to_zero_mean() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let x = DMatrix::from_fn(3, 50, |_, _| rng.random_range(-1000.0..1000.0));
        let c = center_matrix(
            vec!["a".into(), "b".into(), "c".into()],
            &x,
            Utc::now(),
            1,
            MatrixSource::Raw,
        );
        for r in c.values.row_iter() {
            assert!(r.sum().abs() / 50.0 < 1e-12);
        }
    }

    fn arb_rows() -> impl Strategy<Value = (usize, usize, Vec<f64>)> {
        (2usize..6, 3usize..20).prop_flat_map(|(n, t)| {
            (
                Just(n),
                Just(t),
                proptest::collection::vec(-100.0..100.0f64, n * t),
            )
        })
    }

    proptest! {
        #[test]
        fn scale_and_offset_invariance((n, t, data) in arb_rows(), scale in 0.01..100.0f64, offset in -1e3..1e3f64, row in 0usize..6) {
            let row = row % n;
            let x = DMatrix::from_row_slice(n, t, &data);
            let mut y = x.clone();
            for j in 0..t {
                y[(row, j)] = x[(row, j)] * scale + offset;
            }
            let ids: Vec<String> = (0..n).map(|i| i.to_string()).collect();
            let start = Utc.with_ymd_and_hms(2014, 3, 1, 0, 0, 0).unwrap();
            let a = correlation(&covariance(&center_matrix(ids.clone(), &x, start, 1, MatrixSource::Raw))).unwrap();
            let b = correlation(&covariance(&center_matrix(ids, &y, start, 1, MatrixSource::Raw))).unwrap();
            prop_assert!((a.entries - b.entries).amax() < 1e-10);
        }

        #[test]
        fn permutation_equivariance((n, t, data) in arb_rows(), seed in 0u64..1000) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let x = DMatrix::from_row_slice(n, t, &data);
            let p = SignalPanel::complete((0..n).map(|i| i.to_string()).collect(), Utc::now(), 1, x, Observable::ActivePower).unwrap();
            let c = panel_correlation(&p).unwrap();
            let cp = panel_correlation(&p.permute_rows(&order)).unwrap();
            for a in 0..n {
                for b in 0..n {
                    prop_assert!((cp.entries[(a, b)] - c.entries[(order[a], order[b])]).abs() < 1e-12);
                }
            }
        }
    }
}
