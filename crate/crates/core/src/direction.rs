//! Circular statistics and grouping of correlation matrices by wind direction.

use serde::Serialize;

use crate::correlation::CorrelationMatrix;
use crate::error::{Error, Result};
use crate::layout::FarmLayout;
use crate::panel::SignalPanel;

/// Below this mean resultant length the mean direction is undefined.
pub const MIN_RESULTANT: f64 = 1e-9;

pub const COMPASS: [&str; 8] = ["N", "NE", "E", "SE", "S", "SW", "W", "NW"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircularMean {
    /// Mean direction in [0, 360).
    pub mean_deg: f64,
    /// Mean resultant length in [0, 1].
    pub resultant: f64,
}

/// Maps any angle into [0, 360).
pub fn normalize_deg(a: f64) -> f64 {
    let r = a.rem_euclid(360.0);
    if r >= 360.0 {
        0.0
    } else {
        r
    }
}

/// Signed smallest difference `a − b` in (−180, 180].
pub fn angular_difference(a: f64, b: f64) -> f64 {
    let d = normalize_deg(a - b);
    if d > 180.0 {
        d - 360.0
    } else {
        d
    }
}

/// Direction of the (weighted) vector sum of unit vectors.
pub fn circular_mean(angles_deg: &[f64], weights: Option<&[f64]>) -> Result<CircularMean> {
    if angles_deg.is_empty() {
        return Err(Error::NoData);
    }
    if let Some(w) = weights {
        if w.len() != angles_deg.len() {
            return Err(Error::InvalidArgument(format!(
                "{} weights for {} angles",
                w.len(),
                angles_deg.len()
            )));
        }
    }
    let (mut s, mut c, mut total) = (0.0, 0.0, 0.0);
    for (k, a) in angles_deg.iter().enumerate() {
        let w = weights.map_or(1.0, |w| w[k]);
        let r = a.to_radians();
        s += w * r.sin();
        c += w * r.cos();
        total += w;
    }
    if total <= 0.0 {
        return Err(Error::InvalidArgument(
            "weights must sum to a positive value".into(),
        ));
    }
    let resultant = s.hypot(c) / total;
    if resultant < MIN_RESULTANT {
        return Err(Error::DegenerateMean(resultant));
    }
    Ok(CircularMean {
        mean_deg: normalize_deg(s.atan2(c).to_degrees()),
        resultant,
    })
}

/// Circular mean over every present cell of steps `[start, start + len)`.
pub fn window_direction(wind_dir: &SignalPanel, start: usize, len: usize) -> Result<CircularMean> {
    if len == 0 || start + len > wind_dir.n_steps() {
        return Err(Error::InvalidArgument(format!(
            "window [{start}, {}) outside panel of {} steps",
            start + len,
            wind_dir.n_steps()
        )));
    }
    let angles: Vec<f64> = (start..start + len)
        .flat_map(|j| (0..wind_dir.n_turbines()).filter_map(move |i| wind_dir.get(i, j)))
        .collect();
    if angles.is_empty() {
        return Err(Error::NoData);
    }
    circular_mean(&angles, None)
}

/// Eight 45° sectors; sector `k` is centred on `center0 + 45k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectionBins {
    pub center0: f64,
}

impl DirectionBins {
    pub const COUNT: usize = 8;
    pub const WIDTH: f64 = 45.0;

    pub fn new(center0: f64) -> Self {
        DirectionBins {
            center0: normalize_deg(center0),
        }
    }

    /// Sectors centred on the directions orthogonal to the farm's rows.
    pub fn for_layout(layout: &FarmLayout) -> Self {
        Self::new(layout.row_orthogonal_bearing)
    }

    pub fn center(&self, k: usize) -> f64 {
        normalize_deg(self.center0 + Self::WIDTH * k as f64)
    }

    /// Compass point nearest to the sector centre. With `center0` a
    /// multiple of 45° the labels are exactly the compass points.
    pub fn label(&self, k: usize) -> &'static str {
        let idx = (self.center(k) / Self::WIDTH).round() as usize % 8;
        COMPASS[idx]
    }

    /// Sector containing `angle`; lower edges inclusive.
    pub fn bin_of(&self, angle_deg: f64) -> usize {
        let shifted = normalize_deg(angle_deg - self.center0 + Self::WIDTH / 2.0);
        ((shifted / Self::WIDTH).floor() as usize).min(Self::COUNT - 1)
    }
}

/// One correlation matrix with the wind conditions of its window.
#[derive(Debug, Clone)]
pub struct BinInput {
    pub matrix: CorrelationMatrix,
    /// `None` when the window has no meaningful mean direction.
    pub direction: Option<f64>,
    pub mean_speed: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct BinSummary {
    pub label: &'static str,
    pub center_deg: f64,
    /// `None` for empty sectors.
    pub mean: Option<CorrelationMatrix>,
    pub windows: usize,
    pub mean_speed: Option<f64>,
    pub mean_direction: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct BinnedMatrices {
    pub bins: DirectionBins,
    pub per_bin: Vec<BinSummary>,
    /// Windows left out because their mean direction was undefined.
    pub excluded: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct BinRow {
    pub bin: String,
    pub center_deg: f64,
    pub windows: usize,
    pub mean_wind_speed: Option<f64>,
    pub mean_direction: Option<f64>,
}

impl BinnedMatrices {
    pub fn summary_rows(&self) -> Vec<BinRow> {
        self.per_bin
            .iter()
            .map(|b| BinRow {
                bin: b.label.to_string(),
                center_deg: b.center_deg,
                windows: b.windows,
                mean_wind_speed: b.mean_speed,
                mean_direction: b.mean_direction,
            })
            .collect()
    }

    pub fn assigned(&self) -> usize {
        self.per_bin.iter().map(|b| b.windows).sum()
    }
}

/// Elementwise mean of the correlation matrices falling into each sector.
pub fn bin_average(inputs: &[BinInput], bins: DirectionBins) -> Result<BinnedMatrices> {
    if let Some(first) = inputs.first() {
        for x in inputs {
            if x.matrix.ids != first.matrix.ids {
                return Err(Error::Misaligned(
                    "matrices cover different turbine sets".into(),
                ));
            }
            if x.matrix.source != first.matrix.source {
                return Err(Error::Misaligned(
                    "matrices come from different modes".into(),
                ));
            }
        }
    }
    let mut members: Vec<Vec<&BinInput>> = vec![Vec::new(); DirectionBins::COUNT];
    let mut excluded = 0;
    for x in inputs {
        match x.direction {
            Some(d) => members[bins.bin_of(d)].push(x),
            None => excluded += 1,
        }
    }
    let per_bin = members
        .iter()
        .enumerate()
        .map(|(k, group)| {
            let mean = group.first().map(|first| {
                let mut acc = first.matrix.entries.clone();
                for x in &group[1..] {
                    acc += &x.matrix.entries;
                }
                acc /= group.len() as f64;
                CorrelationMatrix {
                    entries: acc,
                    window_start: first.matrix.window_start,
                    window_len: first.matrix.window_len,
                    rank: None,
                    ..first.matrix.clone()
                }
            });
            let speeds: Vec<f64> = group.iter().filter_map(|x| x.mean_speed).collect();
            let dirs: Vec<f64> = group.iter().filter_map(|x| x.direction).collect();
            BinSummary {
                label: bins.label(k),
                center_deg: bins.center(k),
                mean,
                windows: group.len(),
                mean_speed: (!speeds.is_empty())
                    .then(|| speeds.iter().sum::<f64>() / speeds.len() as f64),
                mean_direction: circular_mean(&dirs, None).ok().map(|m| m.mean_deg),
            }
        })
        .collect();
    Ok(BinnedMatrices {
        bins,
        per_bin,
        excluded,
    })
}

/// Turbines facing the free stream for wind from `bearing_deg`: no other
/// turbine lies upwind within a corridor one rotor diameter wide centred
/// on the turbine's upwind ray. Returned in layout order.
pub fn front_line(layout: &FarmLayout, bearing_deg: f64) -> Vec<String> {
    let half = layout.rotor_diameter / 2.0;
    (0..layout.len())
        .filter(|&i| {
            !(0..layout.len()).any(|j| {
                let (up, lat) = layout.wind_offset(i, j, bearing_deg);
                j != i && up > 0.0 && lat.abs() < half
            })
        })
        .map(|i| layout.turbine_ids[i].clone())
        .collect()
}
