//! Classification of gaps in high-resolution power data into turbine
//! failures and farm-wide shutdowns, and the corresponding fill strategies.
//!
//! Per cell `(i, t)`:
//!
//! * `na_dens`: fraction of missing power cells of turbine `i` in a
//!   centred window (12 h by default);
//! * `na_dens_dev`: the window average of `na_dens` minus its
//!   cross-turbine mean at each instant;
//! * `na_farm`: number of turbines missing at `t`;
//! * `psi10`: window average (10 min by default) of the turbine's power
//!   minus the mean power of the other turbines present at the same time.
//!
//! A missing cell is a failure if `na_dens > 0.6 ∧ na_dens_dev > 0.1` or
//! `psi10 < −1000 kW`; otherwise a shutdown if the wind speed is below
//! 4 m/s (or missing) and more than 20 turbines are missing; otherwise
//! unassigned. Present cells with `psi10 < −1000 kW` are failures too.
//! Sliding windows are centred and truncated at the panel edges.

use chrono::{DateTime, Duration, Utc};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::SignalPanel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    pub dens_min: f64,
    pub dens_dev_min: f64,
    /// kW
    pub psi10_max: f64,
    /// m/s
    pub shutdown_wind_max: f64,
    pub shutdown_farm_min: usize,
    /// seconds
    pub dens_window: i64,
    /// seconds
    pub psi_window: i64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            dens_min: 0.6,
            dens_dev_min: 0.1,
            psi10_max: -1000.0,
            shutdown_wind_max: 4.0,
            shutdown_farm_min: 20,
            dens_window: 12 * 3600,
            psi_window: 600,
        }
    }
}

impl Thresholds {
    fn window_steps(&self, step: i64) -> Result<(usize, usize)> {
        let mut out = [0usize; 2];
        for (k, (what, w)) in [
            ("dens_window", self.dens_window),
            ("psi_window", self.psi_window),
        ]
        .into_iter()
        .enumerate()
        {
            if w <= 0 || w % step != 0 {
                return Err(Error::Config(format!(
                    "{what} = {w} s is not a positive multiple of the {step} s panel step"
                )));
            }
            out[k] = (w / step) as usize;
        }
        Ok((out[0], out[1]))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NaStatistics {
    pub na_dens: DMatrix<f64>,
    pub na_dens_dev: DMatrix<f64>,
    pub na_farm: Vec<usize>,
    /// kW; only meaningful where `psi10_mask` is set.
    pub psi10: DMatrix<f64>,
    pub psi10_mask: DMatrix<bool>,
}

impl NaStatistics {
    pub fn psi10_at(&self, i: usize, t: usize) -> Option<f64> {
        self.psi10_mask[(i, t)].then(|| self.psi10[(i, t)])
    }
}

/// `[lo, hi)` of a centred window of `w` cells around `t`, clipped to `[0, len)`.
fn centred(t: usize, w: usize, len: usize) -> (usize, usize) {
    let lo = t.saturating_sub(w / 2);
    let hi = (t + w - w / 2).min(len);
    (lo, hi)
}

/// Centred moving average of `x` over cells where `valid` holds; `None`
/// where the window holds no valid cell.
fn moving_average(x: &[f64], valid: &[bool], w: usize) -> Vec<Option<f64>> {
    let len = x.len();
    let mut sum = vec![0.0; len + 1];
    let mut cnt = vec![0usize; len + 1];
    for k in 0..len {
        sum[k + 1] = sum[k] + if valid[k] { x[k] } else { 0.0 };
        cnt[k + 1] = cnt[k] + usize::from(valid[k]);
    }
    (0..len)
        .map(|t| {
            let (lo, hi) = centred(t, w, len);
            let c = cnt[hi] - cnt[lo];
            (c > 0).then(|| (sum[hi] - sum[lo]) / c as f64)
        })
        .collect()
}

pub fn na_statistics(
    power: &SignalPanel,
    wind: &SignalPanel,
    thresholds: &Thresholds,
) -> Result<NaStatistics> {
    power.ensure_aligned(wind)?;
    let (dens_w, psi_w) = thresholds.window_steps(power.step)?;
    let n = power.n_turbines();
    let t = power.n_steps();

    // pass 1: per-time cross sections. Sums run over sorted values so the
    // result does not depend on turbine order.
    let na_farm: Vec<usize> = (0..t)
        .map(|j| (0..n).filter(|&i| !power.mask[(i, j)]).count())
        .collect();
    let mut psi = DMatrix::from_element(n, t, 0.0);
    let mut psi_ok = DMatrix::from_element(n, t, false);
    let mut present = Vec::with_capacity(n);
    for j in 0..t {
        present.clear();
        present.extend((0..n).filter_map(|i| power.get(i, j)));
        present.sort_by(f64::total_cmp);
        let total: f64 = present.iter().sum();
        let count = present.len();
        for i in 0..n {
            if let Some(v) = power.get(i, j) {
                if count > 1 {
                    psi[(i, j)] = v - (total - v) / (count - 1) as f64;
                    psi_ok[(i, j)] = true;
                }
            }
        }
    }

    // pass 2: missing counts per centred window, kept as integers so the
    // farm deviation is exact
    let mut counts = DMatrix::from_element(n, t, 0i64);
    let widths: Vec<i64> = (0..t)
        .map(|j| {
            let (lo, hi) = centred(j, dens_w, t);
            (hi - lo) as i64
        })
        .collect();
    for i in 0..n {
        let mut prefix = vec![0i64; t + 1];
        for j in 0..t {
            prefix[j + 1] = prefix[j] + i64::from(!power.mask[(i, j)]);
        }
        for j in 0..t {
            let (lo, hi) = centred(j, dens_w, t);
            counts[(i, j)] = prefix[hi] - prefix[lo];
        }
    }
    let farm_counts: Vec<i64> = (0..t).map(|j| counts.column(j).sum()).collect();
    let na_dens = DMatrix::from_fn(n, t, |i, j| counts[(i, j)] as f64 / widths[j] as f64);

    let mut psi10 = DMatrix::from_element(n, t, 0.0);
    let mut psi10_mask = DMatrix::from_element(n, t, false);
    let mut na_dens_dev = DMatrix::from_element(n, t, 0.0);
    let all = vec![true; t];
    let nn = n as i64;
    for i in 0..n {
        let row: Vec<f64> = psi.row(i).iter().copied().collect();
        let ok: Vec<bool> = psi_ok.row(i).iter().copied().collect();
        for (j, p) in moving_average(&row, &ok, psi_w).into_iter().enumerate() {
            if let Some(p) = p {
                psi10[(i, j)] = p;
                psi10_mask[(i, j)] = true;
            }
        }
        let dev: Vec<f64> = (0..t)
            .map(|j| (nn * counts[(i, j)] - farm_counts[j]) as f64 / (nn * widths[j]) as f64)
            .collect();
        for (j, d) in moving_average(&dev, &all, dens_w).into_iter().enumerate() {
            na_dens_dev[(i, j)] = d.expect("window never empty");
        }
    }
    Ok(NaStatistics {
        na_dens,
        na_dens_dev,
        na_farm,
        psi10,
        psi10_mask,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NaLabel {
    Present,
    Failure,
    Shutdown,
    Unassigned,
}

impl NaLabel {
    pub fn code(self) -> char {
        match self {
            NaLabel::Present => 'P',
            NaLabel::Failure => 'F',
            NaLabel::Shutdown => 'S',
            NaLabel::Unassigned => 'U',
        }
    }

    pub fn from_code(s: &str) -> Option<Self> {
        match s {
            "P" => Some(NaLabel::Present),
            "F" => Some(NaLabel::Failure),
            "S" => Some(NaLabel::Shutdown),
            "U" => Some(NaLabel::Unassigned),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NaLabels {
    pub turbine_ids: Vec<String>,
    pub t0: DateTime<Utc>,
    pub step: i64,
    pub labels: DMatrix<NaLabel>,
}

impl NaLabels {
    pub fn time_at(&self, index: usize) -> DateTime<Utc> {
        self.t0 + Duration::seconds(self.step * index as i64)
    }

    pub fn count(&self, label: NaLabel) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    fn ensure_matches(&self, panel: &SignalPanel) -> Result<()> {
        if self.turbine_ids != panel.turbine_ids || self.t0 != panel.t0 || self.step != panel.step {
            return Err(Error::Misaligned(
                "labels do not belong to this panel".into(),
            ));
        }
        if self.labels.shape() != panel.values.shape() {
            return Err(Error::ShapeMismatch {
                expected: panel.values.shape(),
                found: self.labels.shape(),
            });
        }
        Ok(())
    }
}

pub fn classify(
    power: &SignalPanel,
    wind: &SignalPanel,
    stats: &NaStatistics,
    thresholds: &Thresholds,
) -> Result<NaLabels> {
    power.ensure_aligned(wind)?;
    if stats.na_dens.shape() != power.values.shape() {
        return Err(Error::ShapeMismatch {
            expected: power.values.shape(),
            found: stats.na_dens.shape(),
        });
    }
    let (n, t) = power.values.shape();
    let labels = DMatrix::from_fn(n, t, |i, j| {
        let psi_clause = stats
            .psi10_at(i, j)
            .is_some_and(|p| p < thresholds.psi10_max);
        if power.mask[(i, j)] {
            return if psi_clause {
                NaLabel::Failure
            } else {
                NaLabel::Present
            };
        }
        let dens_clause = stats.na_dens[(i, j)] > thresholds.dens_min
            && stats.na_dens_dev[(i, j)] > thresholds.dens_dev_min;
        if dens_clause || psi_clause {
            return NaLabel::Failure;
        }
        let calm = wind
            .get(i, j)
            .is_none_or(|u| u < thresholds.shutdown_wind_max);
        if calm && stats.na_farm[j] > thresholds.shutdown_farm_min {
            NaLabel::Shutdown
        } else {
            NaLabel::Unassigned
        }
    });
    Ok(NaLabels {
        turbine_ids: power.turbine_ids.clone(),
        t0: power.t0,
        step: power.step,
        labels,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShutdownFill {
    Zero,
    LastValue,
}

/// Fills shutdown cells, and the short unassigned gaps, by `strategy`.
///
/// `LastValue` carries the latest present (or already filled) value of the
/// turbine forward; with no predecessor it falls back to 0 kW. Cells whose
/// label is `Failure` are never used as a source.
pub fn fill_shutdowns(
    power: &SignalPanel,
    labels: &NaLabels,
    strategy: ShutdownFill,
) -> Result<SignalPanel> {
    labels.ensure_matches(power)?;
    let mut out = power.clone();
    for i in 0..out.n_turbines() {
        let mut last = 0.0;
        for j in 0..out.n_steps() {
            match labels.labels[(i, j)] {
                NaLabel::Present => {
                    if let Some(v) = power.get(i, j) {
                        last = v;
                    }
                }
                NaLabel::Shutdown | NaLabel::Unassigned => {
                    let v = match strategy {
                        ShutdownFill::Zero => 0.0,
                        ShutdownFill::LastValue => last,
                    };
                    out.values[(i, j)] = v;
                    out.mask[(i, j)] = true;
                }
                NaLabel::Failure => {}
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct FailureFill {
    pub filled: usize,
    /// Failure cells at instants where no other turbine could serve as a
    /// donor; these were set to 0 kW.
    pub no_donor: usize,
}

/// Replaces every failure cell by the mean of the turbines that are not
/// failing (and have a value) at the same instant.
pub fn fill_failures(power: &SignalPanel, labels: &NaLabels) -> Result<(SignalPanel, FailureFill)> {
    labels.ensure_matches(power)?;
    let mut out = power.clone();
    let mut report = FailureFill::default();
    let n = power.n_turbines();
    for j in 0..power.n_steps() {
        let failing: Vec<usize> = (0..n)
            .filter(|&i| labels.labels[(i, j)] == NaLabel::Failure)
            .collect();
        if failing.is_empty() {
            continue;
        }
        let (sum, count) = (0..n)
            .filter(|&i| labels.labels[(i, j)] != NaLabel::Failure)
            .filter_map(|i| power.get(i, j))
            .fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
        let fill = if count > 0 { sum / count as f64 } else { 0.0 };
        for i in failing {
            out.values[(i, j)] = fill;
            out.mask[(i, j)] = true;
            report.filled += 1;
            if count == 0 {
                report.no_donor += 1;
            }
        }
    }
    Ok((out, report))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct LabelCounts {
    pub missing_raw: usize,
    pub failure: usize,
    pub failure_override: usize,
    pub shutdown: usize,
    pub unassigned: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Percentages {
    pub missing: f64,
    pub failure: f64,
    pub shutdown: f64,
    pub unassigned: f64,
    pub failure_override: f64,
}

/// Accounting of missing and replaced power cells.
///
/// `classified_failure` counts missing cells labelled failure; present
/// cells replaced through the ψ₁₀ clause are counted separately in
/// `failure_overrides`. Percentages are relative to `total_points`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CleaningReport {
    pub total_points: usize,
    pub missing_raw: usize,
    pub classified_failure: usize,
    pub classified_shutdown: usize,
    pub unassigned: usize,
    pub failure_overrides: usize,
    pub no_donor_cells: usize,
    pub percentages: Percentages,
    pub per_turbine: Vec<(String, LabelCounts)>,
}

impl CleaningReport {
    pub fn new(power: &SignalPanel, labels: &NaLabels, fill: Option<&FailureFill>) -> Result<Self> {
        labels.ensure_matches(power)?;
        let mut per_turbine = Vec::with_capacity(power.n_turbines());
        let mut total = LabelCounts::default();
        for i in 0..power.n_turbines() {
            let mut c = LabelCounts::default();
            for j in 0..power.n_steps() {
                let present = power.mask[(i, j)];
                if !present {
                    c.missing_raw += 1;
                }
                match (labels.labels[(i, j)], present) {
                    (NaLabel::Failure, true) => c.failure_override += 1,
                    (NaLabel::Failure, false) => c.failure += 1,
                    (NaLabel::Shutdown, _) => c.shutdown += 1,
                    (NaLabel::Unassigned, _) => c.unassigned += 1,
                    (NaLabel::Present, _) => {}
                }
            }
            total.missing_raw += c.missing_raw;
            total.failure += c.failure;
            total.failure_override += c.failure_override;
            total.shutdown += c.shutdown;
            total.unassigned += c.unassigned;
            per_turbine.push((power.turbine_ids[i].clone(), c));
        }
        let points = power.n_turbines() * power.n_steps();
        let pct = |x: usize| 100.0 * x as f64 / points as f64;
        Ok(CleaningReport {
            total_points: points,
            missing_raw: total.missing_raw,
            classified_failure: total.failure,
            classified_shutdown: total.shutdown,
            unassigned: total.unassigned,
            failure_overrides: total.failure_override,
            no_donor_cells: fill.map_or(0, |f| f.no_donor),
            percentages: Percentages {
                missing: pct(total.missing_raw),
                failure: pct(total.failure),
                shutdown: pct(total.shutdown),
                unassigned: pct(total.unassigned),
                failure_override: pct(total.failure_override),
            },
            per_turbine,
        })
    }

    /// `missing_raw = failure + shutdown + unassigned`.
    pub fn is_consistent(&self) -> bool {
        self.missing_raw == self.classified_failure + self.classified_shutdown + self.unassigned
    }
}

/// Output of the complete classify-and-fill sequence.
#[derive(Debug, Clone)]
pub struct Cleaned {
    pub stats: NaStatistics,
    pub labels: NaLabels,
    pub filled: SignalPanel,
    pub report: CleaningReport,
}

/// Statistics, classification, shutdown fill, then failure fill.
pub fn clean_power(
    power: &SignalPanel,
    wind: &SignalPanel,
    thresholds: &Thresholds,
    strategy: ShutdownFill,
) -> Result<Cleaned> {
    let stats = na_statistics(power, wind, thresholds)?;
    let labels = classify(power, wind, &stats, thresholds)?;
    let partial = fill_shutdowns(power, &labels, strategy)?;
    let (filled, fill) = fill_failures(&partial, &labels)?;
    let report = CleaningReport::new(power, &labels, Some(&fill))?;
    Ok(Cleaned {
        stats,
        labels,
        filled,
        report,
    })
}
