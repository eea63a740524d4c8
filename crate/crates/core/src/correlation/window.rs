use chrono::{DateTime, Utc};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use super::{
    center_matrix, correlation, covariance, eigen, reduce, svd, CorrelationMatrix, MatrixSource,
};
use crate::error::{Error, Result};
use crate::panel::{Observable, SignalPanel};

/// Window length and stride in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct WindowSpec {
    pub length: i64,
    pub stride: i64,
}

impl WindowSpec {
    pub fn new(length: i64, stride: i64) -> Self {
        WindowSpec { length, stride }
    }

    /// `(length, stride)` in panel steps.
    pub fn steps(&self, step: i64) -> Result<(usize, usize)> {
        for (what, v) in [("length", self.length), ("stride", self.stride)] {
            if v <= 0 || v % step != 0 {
                return Err(Error::InvalidArgument(format!(
                    "window {what} {v} s is not a positive multiple of the {step} s step"
                )));
            }
        }
        let len = (self.length / step) as usize;
        if len < 2 {
            return Err(Error::InvalidArgument(format!(
                "window of {len} step(s) is too short"
            )));
        }
        Ok((len, (self.stride / step) as usize))
    }

    /// Start indices of all windows that fit in `t` steps.
    pub fn starts(&self, step: i64, t: usize) -> Result<Vec<usize>> {
        let (len, stride) = self.steps(step)?;
        if len > t {
            return Err(Error::InvalidArgument(format!(
                "window of {len} steps is longer than the {t}-step panel"
            )));
        }
        Ok((0..=t - len).step_by(stride).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum WindowMode {
    Raw,
    /// Drop the listed singular values (1-based).
    Reduced {
        drop: Vec<usize>,
    },
    Deviation,
}

impl WindowMode {
    pub fn source(&self) -> MatrixSource {
        match self {
            WindowMode::Raw => MatrixSource::Raw,
            WindowMode::Reduced { .. } => MatrixSource::Reduced,
            WindowMode::Deviation => MatrixSource::Deviation,
        }
    }
}

/// Why a window produced no matrix.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowFailure {
    pub zero_variance: Vec<String>,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct WindowOutcome {
    pub index: usize,
    pub start_step: usize,
    pub len_steps: usize,
    pub window_start: DateTime<Utc>,
    pub result: std::result::Result<CorrelationMatrix, WindowFailure>,
}

/// `Ψ_i(t) = x_i(t) − (1/N) Σ_j x_j(t)`.
pub fn deviation_series(panel: &SignalPanel) -> Result<SignalPanel> {
    let missing = panel.missing_count();
    if missing > 0 {
        return Err(Error::MissingCells { count: missing });
    }
    let n = panel.n_turbines() as f64;
    let mut values = panel.values.clone();
    for mut col in values.column_iter_mut() {
        let mean = col.sum() / n;
        col.add_scalar_mut(-mean);
    }
    Ok(SignalPanel {
        values,
        observable: Observable::Deviation,
        ..panel.clone()
    })
}

fn window_matrix(
    x: &DMatrix<f64>,
    ids: &[String],
    start: DateTime<Utc>,
    len_s: i64,
    mode: &WindowMode,
) -> Result<CorrelationMatrix> {
    let mut c = match mode {
        WindowMode::Raw => correlation(&covariance(&center_matrix(
            ids.to_vec(),
            x,
            start,
            len_s,
            MatrixSource::Raw,
        )))?,
        WindowMode::Deviation => {
            let n = x.nrows() as f64;
            let mut psi = x.clone();
            for mut col in psi.column_iter_mut() {
                let mean = col.sum() / n;
                col.add_scalar_mut(-mean);
            }
            let mut m = center_matrix(ids.to_vec(), &psi, start, len_s, MatrixSource::Deviation);
            m.magnitude = x.amax();
            correlation(&covariance(&m))?
        }
        WindowMode::Reduced { drop } => {
            let m = center_matrix(ids.to_vec(), x, start, len_s, MatrixSource::Raw);
            let f = svd(&m);
            correlation(&covariance(&reduce(&m, &f, drop)?))?
        }
    };
    c.rank = Some(eigen(&c.entries)?.numerical_rank());
    Ok(c)
}

/// One correlation matrix per window position, in start order. Windows
/// containing a constant series become [`WindowFailure`] placeholders.
pub fn sliding_correlations(
    panel: &SignalPanel,
    spec: WindowSpec,
    mode: &WindowMode,
) -> Result<Vec<WindowOutcome>> {
    let missing = panel.missing_count();
    if missing > 0 {
        return Err(Error::MissingCells { count: missing });
    }
    let starts = spec.starts(panel.step, panel.n_steps())?;
    let (len, _) = spec.steps(panel.step)?;
    if let WindowMode::Reduced { drop } = mode {
        let k = panel.n_turbines().min(len);
        if let Some(bad) = drop.iter().find(|&&d| d == 0 || d > k) {
            return Err(Error::InvalidArgument(format!(
                "cannot drop singular value {bad}: valid indices are 1..={k}"
            )));
        }
    }
    let outcomes = starts
        .par_iter()
        .enumerate()
        .map(|(index, &s)| {
            let x = panel.values.columns(s, len).into_owned();
            let window_start = panel.time_at(s);
            let result = window_matrix(&x, &panel.turbine_ids, window_start, spec.length, mode)
                .map_err(|e| WindowFailure {
                    zero_variance: match &e {
                        Error::ZeroVarianceTurbine(ids) => ids.clone(),
                        _ => Vec::new(),
                    },
                    message: e.to_string(),
                });
            WindowOutcome {
                index,
                start_step: s,
                len_steps: len,
                window_start,
                result,
            }
        })
        .collect();
    Ok(outcomes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correlation::{panel_correlation, reduced_correlation};
    use chrono::TimeZone;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn panel(x: DMatrix<f64>, step: i64) -> SignalPanel {
        SignalPanel::complete(
            (0..x.nrows()).map(|i| format!("T{i}")).collect(),
            Utc.with_ymd_and_hms(2014, 3, 1, 0, 0, 0).unwrap(),
            step,
            x,
            Observable::ActivePower,
        )
        .unwrap()
    }

    fn random(n: usize, t: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(n, t, |_, _| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn deviation_examples() {
        let d = deviation_series(&panel(
            DMatrix::from_column_slice(3, 1, &[1000.0, 2000.0, 3000.0]),
            10,
        ))
        .unwrap();
        assert_eq!(
            d.values.column(0).iter().copied().collect::<Vec<_>>(),
            vec![-1000.0, 0.0, 1000.0]
        );
        assert_eq!(d.observable, Observable::Deviation);
        let same = deviation_series(&panel(DMatrix::from_element(4, 3, 1234.5), 10)).unwrap();
        assert!(same.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn deviation_columns_sum_to_zero() {
        let x = random(7, 30, 1) * 1000.0;
        let scale = x.amax();
        let d = deviation_series(&panel(x, 10)).unwrap();
        for col in d.values.column_iter() {
            assert!(col.sum().abs() <= 1e-9 * scale);
        }
    }

    #[test]
    fn window_counts() {
        let s = WindowSpec::new(12 * 3600, 12 * 3600);
        assert_eq!(s.starts(600, 144).unwrap().len(), 2);
        assert_eq!(
            WindowSpec::new(144 * 600, 7 * 600)
                .starts(600, 144)
                .unwrap()
                .len(),
            1
        );
        assert_eq!(
            WindowSpec::new(2, 1).starts(1, 5).unwrap(),
            vec![0, 1, 2, 3]
        );
        assert!(WindowSpec::new(1, 1).starts(1, 5).is_err());
        assert!(WindowSpec::new(6, 1).starts(1, 5).is_err());
        assert!(WindowSpec::new(15, 10).starts(10, 5).is_err());
    }

    #[test]
    fn sliding_matches_direct_computation() {
        let p = panel(random(4, 20, 2), 60);
        let out = sliding_correlations(&p, WindowSpec::new(600, 300), &WindowMode::Raw).unwrap();
        assert_eq!(out.len(), 3);
        for o in &out {
            let direct = panel_correlation(&p.window(o.start_step, 10).unwrap()).unwrap();
            let c = o.result.as_ref().unwrap();
            assert!((&c.entries - direct.entries).amax() < 1e-14);
            assert_eq!(c.window_start, p.time_at(o.start_step));
            assert_eq!(c.rank, Some(4));
        }
        let red = sliding_correlations(
            &p,
            WindowSpec::new(1200, 1200),
            &WindowMode::Reduced { drop: vec![1] },
        )
        .unwrap();
        let direct = reduced_correlation(&p, &[1]).unwrap();
        assert!((&red[0].result.as_ref().unwrap().entries - direct.entries).amax() < 1e-10);
    }

    #[test]
    fn deviation_mode_matches_deviation_series() {
        let p = panel(random(5, 12, 3), 10);
        let out =
            sliding_correlations(&p, WindowSpec::new(120, 120), &WindowMode::Deviation).unwrap();
        let direct = panel_correlation(&deviation_series(&p).unwrap()).unwrap();
        let c = out[0].result.as_ref().unwrap();
        assert_eq!(c.source, MatrixSource::Deviation);
        assert!((&c.entries - direct.entries).amax() < 1e-12);
        // Ψ rows sum to zero, so one direction is always lost
        assert_eq!(c.rank, Some(4));
    }

    #[test]
    fn constant_window_becomes_placeholder() {
        let mut x = random(3, 10, 4);
        for j in 0..5 {
            x[(1, j)] = 0.0;
        }
        let out =
            sliding_correlations(&panel(x, 1), WindowSpec::new(5, 5), &WindowMode::Raw).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(
            out[0].result.as_ref().unwrap_err().zero_variance,
            vec!["T1".to_string()]
        );
        assert!(out[1].result.is_ok());
    }

    #[test]
    fn rejects_out_of_range_drop() {
        let p = panel(random(3, 10, 5), 1);
        assert!(sliding_correlations(
            &p,
            WindowSpec::new(5, 5),
            &WindowMode::Reduced { drop: vec![4] }
        )
        .is_err());
    }
}
