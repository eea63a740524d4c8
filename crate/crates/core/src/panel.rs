//! The N×T signal panel: one observable for N turbines over T uniformly
//! spaced time steps, with an explicit availability mask.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Duration, Utc};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which physical quantity a panel holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    /// Active power in kW.
    ActivePower,
    /// Wind speed in m/s.
    WindSpeed,
    /// Wind (or nacelle) direction in compass degrees.
    WindDirection,
    /// Per-turbine deviation of active power from the farm mean, in kW.
    Deviation,
}

impl Observable {
    pub fn as_str(self) -> &'static str {
        match self {
            Observable::ActivePower => "active_power",
            Observable::WindSpeed => "wind_speed",
            Observable::WindDirection => "wind_direction",
            Observable::Deviation => "deviation",
        }
    }
}

impl fmt::Display for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Observable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "active_power" | "power" => Ok(Observable::ActivePower),
            "wind_speed" | "speed" => Ok(Observable::WindSpeed),
            "wind_direction" | "direction" | "nacelle_direction" => Ok(Observable::WindDirection),
            "deviation" => Ok(Observable::Deviation),
            other => Err(Error::InvalidArgument(format!(
                "unknown observable tag `{other}`"
            ))),
        }
    }
}

/// N×T panel of one observable.
///
/// Missing cells are flagged in `mask` (`true` = present). The value stored
/// under a missing cell is NaN, but numeric code must go through the mask.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalPanel {
    pub turbine_ids: Vec<String>,
    pub t0: DateTime<Utc>,
    /// Time step in seconds.
    pub step: i64,
    pub values: DMatrix<f64>,
    pub mask: DMatrix<bool>,
    pub observable: Observable,
}

/// One broken panel invariant, as reported by [`validate_panel`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Empty {
        turbines: usize,
        steps: usize,
    },
    IdCountMismatch {
        ids: usize,
        rows: usize,
    },
    DuplicateId {
        turbine: usize,
        id: String,
    },
    ShapeMismatch {
        values: (usize, usize),
        mask: (usize, usize),
    },
    NonPositiveStep(i64),
    NonFinite {
        turbine: usize,
        time: usize,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Empty { turbines, steps } => write!(f, "empty panel ({turbines}×{steps})"),
            Violation::IdCountMismatch { ids, rows } => {
                write!(f, "{ids} turbine ids for {rows} value rows")
            }
            Violation::DuplicateId { turbine, id } => {
                write!(f, "duplicate turbine id `{id}` at row {turbine}")
            }
            Violation::ShapeMismatch { values, mask } => write!(
                f,
                "shape mismatch: values {}×{}, mask {}×{}",
                values.0, values.1, mask.0, mask.1
            ),
            Violation::NonPositiveStep(s) => write!(f, "nonpositive step {s} s"),
            Violation::NonFinite { turbine, time } => {
                write!(
                    f,
                    "non-finite present value at turbine {turbine}, time {time}"
                )
            }
        }
    }
}

/// Checks every panel invariant and lists the ones that fail.
pub fn validate_panel(panel: &SignalPanel) -> Vec<Violation> {
    let mut out = Vec::new();
    let (n, t) = panel.values.shape();
    if n == 0 || t == 0 {
        out.push(Violation::Empty {
            turbines: n,
            steps: t,
        });
    }
    if panel.turbine_ids.len() != n {
        out.push(Violation::IdCountMismatch {
            ids: panel.turbine_ids.len(),
            rows: n,
        });
    }
    let mut seen = HashSet::new();
    for (i, id) in panel.turbine_ids.iter().enumerate() {
        if !seen.insert(id.as_str()) {
            out.push(Violation::DuplicateId {
                turbine: i,
                id: id.clone(),
            });
        }
    }
    if panel.mask.shape() != (n, t) {
        out.push(Violation::ShapeMismatch {
            values: (n, t),
            mask: panel.mask.shape(),
        });
    }
    if panel.step <= 0 {
        out.push(Violation::NonPositiveStep(panel.step));
    }
    if panel.mask.shape() == (n, t) {
        for j in 0..t {
            for i in 0..n {
                if panel.mask[(i, j)] && !panel.values[(i, j)].is_finite() {
                    out.push(Violation::NonFinite {
                        turbine: i,
                        time: j,
                    });
                }
            }
        }
    }
    out
}

impl SignalPanel {
    /// Builds a panel and rejects it if any invariant fails.
    pub fn new(
        turbine_ids: Vec<String>,
        t0: DateTime<Utc>,
        step: i64,
        values: DMatrix<f64>,
        mask: DMatrix<bool>,
        observable: Observable,
    ) -> Result<Self> {
        let mut panel = SignalPanel {
            turbine_ids,
            t0,
            step,
            values,
            mask,
            observable,
        };
        panel.check()?;
        panel.scrub();
        Ok(panel)
    }

    /// A panel with every cell present.
    pub fn complete(
        turbine_ids: Vec<String>,
        t0: DateTime<Utc>,
        step: i64,
        values: DMatrix<f64>,
        observable: Observable,
    ) -> Result<Self> {
        let mask = DMatrix::from_element(values.nrows(), values.ncols(), true);
        Self::new(turbine_ids, t0, step, values, mask, observable)
    }

    /// Convenience constructor from per-turbine rows, `None` marking a gap.
    pub fn from_rows(
        turbine_ids: Vec<String>,
        t0: DateTime<Utc>,
        step: i64,
        rows: &[Vec<Option<f64>>],
        observable: Observable,
    ) -> Result<Self> {
        let n = rows.len();
        let t = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != t) {
            return Err(Error::InvalidArgument("rows have different lengths".into()));
        }
        let values = DMatrix::from_fn(n, t, |i, j| rows[i][j].unwrap_or(f64::NAN));
        let mask = DMatrix::from_fn(n, t, |i, j| rows[i][j].is_some());
        Self::new(turbine_ids, t0, step, values, mask, observable)
    }

    pub(crate) fn check(&self) -> Result<()> {
        let violations = validate_panel(self);
        if violations.is_empty() {
            Ok(())
        } else {
            let msg: Vec<String> = violations.iter().map(ToString::to_string).collect();
            Err(Error::InvalidArgument(msg.join("; ")))
        }
    }

    /// Writes the NaN sentinel under every masked cell.
    pub(crate) fn scrub(&mut self) {
        for (v, &m) in self.values.iter_mut().zip(self.mask.iter()) {
            if !m {
                *v = f64::NAN;
            }
        }
    }

    pub fn n_turbines(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_steps(&self) -> usize {
        self.values.ncols()
    }

    pub fn get(&self, turbine: usize, time: usize) -> Option<f64> {
        self.mask[(turbine, time)].then(|| self.values[(turbine, time)])
    }

    pub fn is_present(&self, turbine: usize, time: usize) -> bool {
        self.mask[(turbine, time)]
    }

    pub fn time_at(&self, index: usize) -> DateTime<Utc> {
        self.t0 + Duration::seconds(self.step * index as i64)
    }

    pub fn missing_count(&self) -> usize {
        self.mask.iter().filter(|&&m| !m).count()
    }

    pub fn is_complete(&self) -> bool {
        self.mask.iter().all(|&m| m)
    }

    pub fn row_of(&self, id: &str) -> Option<usize> {
        self.turbine_ids.iter().position(|x| x == id)
    }

    /// Columns `[start, start + len)` as a new panel.
    pub fn window(&self, start: usize, len: usize) -> Result<SignalPanel> {
        if len == 0 || start + len > self.n_steps() {
            return Err(Error::InvalidArgument(format!(
                "window [{start}, {}) outside panel of {} steps",
                start + len,
                self.n_steps()
            )));
        }
        Ok(SignalPanel {
            turbine_ids: self.turbine_ids.clone(),
            t0: self.time_at(start),
            step: self.step,
            values: self.values.columns(start, len).into_owned(),
            mask: self.mask.columns(start, len).into_owned(),
            observable: self.observable,
        })
    }

    /// Same ids, start time and step.
    pub fn is_aligned_with(&self, other: &SignalPanel) -> bool {
        self.turbine_ids == other.turbine_ids
            && self.t0 == other.t0
            && self.step == other.step
            && self.values.shape() == other.values.shape()
    }

    pub(crate) fn ensure_aligned(&self, other: &SignalPanel) -> Result<()> {
        if self.is_aligned_with(other) {
            Ok(())
        } else {
            Err(Error::Misaligned(format!(
                "{} panel ({}×{}, t0 {}, step {} s) vs {} panel ({}×{}, t0 {}, step {} s)",
                self.observable,
                self.n_turbines(),
                self.n_steps(),
                self.t0,
                self.step,
                other.observable,
                other.n_turbines(),
                other.n_steps(),
                other.t0,
                other.step
            )))
        }
    }

    /// Rows permuted so that row `k` of the result is row `order[k]` here.
    pub fn permute_rows(&self, order: &[usize]) -> SignalPanel {
        let t = self.n_steps();
        SignalPanel {
            turbine_ids: order.iter().map(|&i| self.turbine_ids[i].clone()).collect(),
            t0: self.t0,
            step: self.step,
            values: DMatrix::from_fn(order.len(), t, |k, j| self.values[(order[k], j)]),
            mask: DMatrix::from_fn(order.len(), t, |k, j| self.mask[(order[k], j)]),
            observable: self.observable,
        }
    }
}
