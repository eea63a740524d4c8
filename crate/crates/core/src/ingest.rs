//! Raw SCADA import, resampling and the interval-record sanity filters.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use chrono::{DateTime, Utc};
use nalgebra::DMatrix;
use serde::Serialize;

use crate::direction::circular_mean;
use crate::error::{Error, Result};
use crate::io::parse_timestamp;
use crate::panel::{Observable, SignalPanel};

/// Wind speeds above this are treated as sensor errors (m/s).
pub const MAX_WIND_SPEED: f64 = 30.0;

/// One observable extracted from a raw record stream, plus the
/// interval standard deviations when the export carries them.
#[derive(Debug, Clone)]
pub struct ScadaImport {
    pub panel: SignalPanel,
    pub stddev: Option<SignalPanel>,
}

struct RawCell {
    value: Option<f64>,
    stddev: Option<f64>,
}

/// Parses a long-format SCADA export.
///
/// Columns: `timestamp,turbine,observable,value[,stddev]`. Records of other
/// observables are validated and skipped. `value`/`stddev` may be `NA` or
/// empty. Turbines are ordered by first appearance; the time step is the
/// greatest common divisor of all offsets from the earliest timestamp.
pub fn parse_scada_from<R: Read>(
    reader: R,
    origin: &Path,
    observable: Observable,
) -> Result<ScadaImport> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let cols: Vec<&str> = headers.iter().collect();
    let has_stddev = match cols.as_slice() {
        ["timestamp", "turbine", "observable", "value"] => false,
        ["timestamp", "turbine", "observable", "value", "stddev"] => true,
        _ => {
            return Err(Error::parse(
                origin,
                1,
                1,
                "header must be `timestamp,turbine,observable,value[,stddev]`",
            ))
        }
    };
    let width = if has_stddev { 5 } else { 4 };

    let mut ids: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut cells: HashMap<(usize, DateTime<Utc>), RawCell> = HashMap::new();
    let mut seen: HashMap<(String, DateTime<Utc>, Observable), u64> = HashMap::new();

    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != width {
            return Err(Error::parse(
                origin,
                line,
                1,
                format!("expected {width} fields, found {}", record.len()),
            ));
        }
        let t = parse_timestamp(&record[0]).map_err(|m| Error::parse(origin, line, 1, m))?;
        let id = record[1].to_string();
        if id.is_empty() {
            return Err(Error::parse(origin, line, 2, "empty turbine id"));
        }
        let obs: Observable = record[2].parse().map_err(|_| {
            Error::parse(
                origin,
                line,
                3,
                format!("unknown observable tag `{}`", &record[2]),
            )
        })?;
        if let Some(first) = seen.insert((id.clone(), t, obs), line) {
            return Err(Error::parse(
                origin,
                line,
                1,
                format!(
                    "duplicate record for turbine `{id}`, {obs} at {} (first on line {first})",
                    &record[0]
                ),
            ));
        }
        let value = parse_optional(&record[3]).map_err(|m| Error::parse(origin, line, 4, m))?;
        let stddev = if has_stddev {
            parse_optional(&record[4]).map_err(|m| Error::parse(origin, line, 5, m))?
        } else {
            None
        };
        if obs != observable {
            continue;
        }
        let i = *index.entry(id.clone()).or_insert_with(|| {
            ids.push(id);
            ids.len() - 1
        });
        cells.insert((i, t), RawCell { value, stddev });
    }

    if cells.is_empty() {
        return Err(Error::parse(
            origin,
            1,
            3,
            format!("no `{observable}` records"),
        ));
    }
    let t0 = cells.keys().map(|k| k.1).min().expect("non-empty");
    let t_last = cells.keys().map(|k| k.1).max().expect("non-empty");
    let step = cells.keys().map(|k| (k.1 - t0).num_seconds()).fold(0, gcd);
    if step == 0 {
        return Err(Error::parse(
            origin,
            2,
            1,
            "cannot infer the time step from a single timestamp",
        ));
    }
    let n = ids.len();
    let t = ((t_last - t0).num_seconds() / step) as usize + 1;

    let mut values = DMatrix::from_element(n, t, f64::NAN);
    let mut mask = DMatrix::from_element(n, t, false);
    let mut sd_values = DMatrix::from_element(n, t, f64::NAN);
    let mut sd_mask = DMatrix::from_element(n, t, false);
    let mut any_sd = false;
    for ((i, time), cell) in &cells {
        let j = ((*time - t0).num_seconds() / step) as usize;
        if let Some(v) = cell.value {
            values[(*i, j)] = v;
            mask[(*i, j)] = true;
        }
        if let Some(s) = cell.stddev {
            sd_values[(*i, j)] = s;
            sd_mask[(*i, j)] = true;
            any_sd = true;
        }
    }
    let panel = SignalPanel::new(ids.clone(), t0, step, values, mask, observable)?;
    let stddev = if any_sd {
        Some(SignalPanel::new(
            ids, t0, step, sd_values, sd_mask, observable,
        )?)
    } else {
        None
    };
    Ok(ScadaImport { panel, stddev })
}

pub fn parse_scada(path: &Path, observable: Observable) -> Result<ScadaImport> {
    parse_scada_from(BufReader::new(File::open(path)?), path, observable)
}

fn parse_optional(s: &str) -> std::result::Result<Option<f64>, String> {
    if s.is_empty() || s == "NA" {
        return Ok(None);
    }
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if v.is_finite() {
        Ok(Some(v))
    } else {
        Err(format!("non-finite value `{s}`"))
    }
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

fn bucket_factor(panel: &SignalPanel, target_step: i64) -> Result<usize> {
    if target_step <= 0 || target_step % panel.step != 0 {
        return Err(Error::InvalidArgument(format!(
            "target step {target_step} s is not a positive integer multiple of {} s",
            panel.step
        )));
    }
    Ok((target_step / panel.step) as usize)
}

/// Left-aligned bucketing; `reduce` sees the present values of one bucket.
fn resample_with<F>(panel: &SignalPanel, target_step: i64, reduce: F) -> Result<SignalPanel>
where
    F: Fn(&[f64]) -> Option<f64>,
{
    let k = bucket_factor(panel, target_step)?;
    let n = panel.n_turbines();
    let t = panel.n_steps();
    let out_t = t.div_ceil(k);
    let mut values = DMatrix::from_element(n, out_t, f64::NAN);
    let mut mask = DMatrix::from_element(n, out_t, false);
    let mut bucket = Vec::with_capacity(k);
    for i in 0..n {
        for b in 0..out_t {
            bucket.clear();
            bucket.extend((b * k..((b + 1) * k).min(t)).filter_map(|j| panel.get(i, j)));
            if let Some(v) = reduce(&bucket) {
                values[(i, b)] = v;
                mask[(i, b)] = true;
            }
        }
    }
    SignalPanel::new(
        panel.turbine_ids.clone(),
        panel.t0,
        target_step,
        values,
        mask,
        panel.observable,
    )
}

/// Arithmetic mean of the present values in each bucket.
pub fn resample_mean(panel: &SignalPanel, target_step: i64) -> Result<SignalPanel> {
    resample_with(panel, target_step, |xs| {
        (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
    })
}

/// Circular mean of the present directions in each bucket; buckets whose
/// resultant vanishes are masked.
pub fn resample_circular_mean(panel: &SignalPanel, target_step: i64) -> Result<SignalPanel> {
    resample_with(panel, target_step, |xs| {
        circular_mean(xs, None).ok().map(|m| m.mean_deg)
    })
}

/// Last observation carried forward, for change-triggered telemetry.
/// Leading gaps stay missing.
pub fn carry_forward(panel: &SignalPanel) -> SignalPanel {
    let mut out = panel.clone();
    for i in 0..out.n_turbines() {
        let mut last = None;
        for j in 0..out.n_steps() {
            if out.mask[(i, j)] {
                last = Some(out.values[(i, j)]);
            } else if let Some(v) = last {
                out.values[(i, j)] = v;
                out.mask[(i, j)] = true;
            }
        }
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct RuleCounts {
    pub consecutive_equal: usize,
    pub zero_stddev: usize,
    pub over_speed: usize,
}

impl RuleCounts {
    pub fn total(&self) -> usize {
        self.consecutive_equal + self.zero_stddev + self.over_speed
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiffgatReport {
    pub observable: Observable,
    pub total_points: usize,
    pub missing_before: usize,
    pub missing_after: usize,
    pub removed: RuleCounts,
    pub per_turbine: Vec<(String, RuleCounts)>,
    pub missing_after_pct: f64,
}

/// Interval-record sanity filters, evaluated against the input panel:
///
/// 1. a present value bitwise equal to the present value one step earlier
///    is masked (the first of a run is kept);
/// 2. a cell whose interval standard deviation is exactly zero is masked;
/// 3. for wind-speed panels, values above [`MAX_WIND_SPEED`] are masked.
///
/// Each removal is attributed to the first rule that fires.
pub fn riffgat_clean(
    panel: &SignalPanel,
    stddev: Option<&SignalPanel>,
) -> Result<(SignalPanel, RiffgatReport)> {
    if let Some(sd) = stddev {
        if sd.values.shape() != panel.values.shape() {
            return Err(Error::ShapeMismatch {
                expected: panel.values.shape(),
                found: sd.values.shape(),
            });
        }
    }
    let mut out = panel.clone();
    let mut removed = RuleCounts::default();
    let mut per_turbine = Vec::with_capacity(panel.n_turbines());
    for i in 0..panel.n_turbines() {
        let mut counts = RuleCounts::default();
        for j in 0..panel.n_steps() {
            let Some(v) = panel.get(i, j) else { continue };
            let repeated = j > 0
                && panel
                    .get(i, j - 1)
                    .is_some_and(|p| p.to_bits() == v.to_bits());
            let flat = stddev.and_then(|sd| sd.get(i, j)).is_some_and(|s| s == 0.0);
            let fast = panel.observable == Observable::WindSpeed && v > MAX_WIND_SPEED;
            let hit = if repeated {
                &mut counts.consecutive_equal
            } else if flat {
                &mut counts.zero_stddev
            } else if fast {
                &mut counts.over_speed
            } else {
                continue;
            };
            *hit += 1;
            out.mask[(i, j)] = false;
            out.values[(i, j)] = f64::NAN;
        }
        removed.consecutive_equal += counts.consecutive_equal;
        removed.zero_stddev += counts.zero_stddev;
        removed.over_speed += counts.over_speed;
        per_turbine.push((panel.turbine_ids[i].clone(), counts));
    }
    let total = panel.n_turbines() * panel.n_steps();
    let missing_after = out.missing_count();
    let report = RiffgatReport {
        observable: panel.observable,
        total_points: total,
        missing_before: panel.missing_count(),
        missing_after,
        removed,
        per_turbine,
        missing_after_pct: 100.0 * missing_after as f64 / total as f64,
    };
    Ok((out, report))
}

/// Replaces every missing cell by `value`.
pub fn fill_constant(panel: &SignalPanel, value: f64) -> SignalPanel {
    let mut out = panel.clone();
    for (v, m) in out.values.iter_mut().zip(out.mask.iter_mut()) {
        if !*m {
            *v = value;
            *m = true;
        }
    }
    out
}
