//! Synthetic SCADA generator with known ground truth.
//!
//! A farm-wide ambient wind (mean-reverting speed, random-walk direction)
//! is converted into per-turbine effective speeds with a top-hat Jensen
//! wake model, then into power through a cubic power curve plus noise.
//! A fast gust component is advected through the farm: each turbine sees
//! the ambient speed delayed by its downwind distance from the most upwind
//! turbine divided by the mean speed. Failure and lull episodes blank parts of the power panel and are
//! recorded as ground-truth labels.
//!
//! Random draws come from a single ChaCha8 stream in this order:
//!
//! 1. random failure episodes (turbine, start, duration), then random lull
//!    episodes (start, duration), then the lull membership of every turbine;
//! 2. for every time step: the speed innovation, the direction innovation,
//!    the gust innovation, then for every turbine in layout order: power noise, drift
//!    innovation, anemometer noise, vane noise, a uniform for sporadic
//!    gaps, a uniform for failure outliers, the outlier value and the
//!    wake turbulence innovation.
//!
//! Every draw is made whether or not it is used, so the stream does not
//! depend on the injections.

use std::path::Path;

use chrono::{DateTime, TimeZone, Utc};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::cleaning::{NaLabel, NaLabels};
use crate::direction::normalize_deg;
use crate::error::{Error, Result};
use crate::io::read_layout;
use crate::layout::{bearing_vector, FarmLayout, GridSpec, LayoutConfig};
use crate::panel::{Observable, SignalPanel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerCurve {
    pub cut_in: f64,
    pub rated_speed: f64,
    pub rated_power_kw: f64,
    pub cut_out: f64,
}

impl Default for PowerCurve {
    fn default() -> Self {
        PowerCurve {
            cut_in: 4.0,
            rated_speed: 12.5,
            rated_power_kw: 3600.0,
            cut_out: 25.0,
        }
    }
}

impl PowerCurve {
    /// Electrical power in kW at hub-height speed `u` (m/s).
    pub fn power(&self, u: f64) -> f64 {
        if u < self.cut_in || u > self.cut_out {
            0.0
        } else if u >= self.rated_speed {
            self.rated_power_kw
        } else {
            let (a, b) = (self.cut_in.powi(3), self.rated_speed.powi(3));
            self.rated_power_kw * (u.powi(3) - a) / (b - a)
        }
    }
}

pub fn power_curve(u: f64, curve: &PowerCurve) -> f64 {
    curve.power(u)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WakeParams {
    pub enabled: bool,
    /// Thrust coefficient.
    pub ct: f64,
    /// Wake decay constant.
    pub decay: f64,
    /// Std of the wake-added speed fluctuation as a multiple of the speed
    /// deficit. Each waked turbine gets its own fluctuation, correlated
    /// over `gust_time_s`.
    pub added_turbulence: f64,
}

impl Default for WakeParams {
    fn default() -> Self {
        WakeParams {
            enabled: true,
            ct: 0.8,
            decay: 0.05,
            added_turbulence: 0.0,
        }
    }
}

/// Fractional speed deficit `x` metres behind a rotor of diameter `d`.
pub fn jensen_deficit(ct: f64, decay: f64, d: f64, x: f64) -> f64 {
    (1.0 - (1.0 - ct).sqrt()) * (d / (d + 2.0 * decay * x)).powi(2)
}

/// Ratio of effective to ambient speed for every turbine with wind from
/// `bearing_deg`. Deficits of overlapping wakes add in quadrature.
pub fn wake_factors(layout: &FarmLayout, bearing_deg: f64, wake: &WakeParams) -> Vec<f64> {
    let n = layout.len();
    if !wake.enabled {
        return vec![1.0; n];
    }
    let d = layout.rotor_diameter;
    (0..n)
        .map(|i| {
            let sq: f64 = (0..n)
                .filter(|&j| j != i)
                .filter_map(|j| {
                    let (x, lateral) = layout.wind_offset(i, j, bearing_deg);
                    (x > 0.0 && lateral.abs() < (d + 2.0 * wake.decay * x) / 2.0)
                        .then(|| jensen_deficit(wake.ct, wake.decay, d, x).powi(2))
                })
                .sum();
            (1.0 - sq.sqrt()).max(0.0)
        })
        .collect()
}

/// Whole-step delay of every turbine behind the most upwind one, for wind
/// from `bearing_deg` advected `metres_per_step` per step.
pub fn advection_lags(layout: &FarmLayout, bearing_deg: f64, metres_per_step: f64) -> Vec<usize> {
    let (ue, un) = bearing_vector(bearing_deg);
    let up: Vec<f64> = layout
        .positions
        .iter()
        .map(|p| p.easting * ue + p.northing * un)
        .collect();
    let front = up.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    up.iter()
        .map(|u| ((front - u) / metres_per_step).round() as usize)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DirectionEpisode {
    /// Offset from the start of the run, seconds.
    pub start_s: i64,
    pub bearing_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindProcess {
    /// Long-run mean of the ambient speed, m/s.
    pub mean_speed: f64,
    /// m/s per √hour.
    pub speed_volatility: f64,
    /// Mean-reversion time of the speed, seconds.
    pub reversion_time_s: f64,
    pub initial_speed: Option<f64>,
    pub initial_direction_deg: f64,
    pub direction_drift_deg_per_h: f64,
    /// Degrees per √hour.
    pub direction_volatility: f64,
    /// The ambient direction is reset to `bearing_deg` at every episode start.
    pub episodes: Vec<DirectionEpisode>,
    /// Stationary std of the advected gust component, m/s.
    pub gust_std: f64,
    /// Correlation time of the gust component, seconds.
    pub gust_time_s: f64,
}

impl Default for WindProcess {
    fn default() -> Self {
        WindProcess {
            mean_speed: 9.0,
            speed_volatility: 1.5,
            reversion_time_s: 6.0 * 3600.0,
            initial_speed: None,
            initial_direction_deg: 240.0,
            direction_drift_deg_per_h: 0.0,
            direction_volatility: 5.0,
            episodes: Vec::new(),
            gust_std: 0.0,
            gust_time_s: 40.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseParams {
    /// White power noise, kW.
    pub power_std_kw: f64,
    /// Stationary std of slow per-turbine power drifts, kW (0 disables).
    pub drift_std_kw: f64,
    pub drift_time_s: f64,
    /// Anemometer noise, m/s.
    pub speed_std: f64,
    /// Wind-vane noise, degrees.
    pub direction_std_deg: f64,
}

impl Default for NoiseParams {
    fn default() -> Self {
        NoiseParams {
            power_std_kw: 40.0,
            drift_std_kw: 0.0,
            drift_time_s: 3600.0,
            speed_std: 0.2,
            direction_std_deg: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FailureEpisode {
    pub turbine: String,
    pub start_s: i64,
    pub duration_s: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LullEpisode {
    pub start_s: i64,
    pub duration_s: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Injections {
    pub failures: Vec<FailureEpisode>,
    pub lulls: Vec<LullEpisode>,
    pub random_failures: usize,
    /// `[min, max]` seconds.
    pub failure_duration_s: [i64; 2],
    pub random_lulls: usize,
    pub lull_duration_s: [i64; 2],
    /// Probability that a failed turbine still reports a near-zero value.
    pub outlier_prob: f64,
    /// Per-cell probability of a sporadic gap in the power panel.
    pub random_na_prob: f64,
    /// Fraction of turbines whose power goes missing during a lull.
    pub lull_blank_fraction: f64,
    /// Ambient speed during a lull as a fraction of the cut-in speed.
    pub lull_speed_fraction: f64,
}

impl Default for Injections {
    fn default() -> Self {
        Injections {
            failures: Vec::new(),
            lulls: Vec::new(),
            random_failures: 0,
            failure_duration_s: [86_400, 3 * 86_400],
            random_lulls: 0,
            lull_duration_s: [2 * 3600, 6 * 3600],
            outlier_prob: 0.02,
            random_na_prob: 0.0,
            lull_blank_fraction: 1.0,
            lull_speed_fraction: 0.6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub layout: FarmLayout,
    pub start: DateTime<Utc>,
    pub duration_s: i64,
    pub step_s: i64,
    pub wind: WindProcess,
    pub wake: WakeParams,
    pub turbine: PowerCurve,
    pub noise: NoiseParams,
    pub injections: Injections,
    pub seed: u64,
}

impl SimulationConfig {
    /// One day at 10 s on a 3×10 grid.
    pub fn new(layout: FarmLayout, seed: u64) -> Self {
        SimulationConfig {
            layout,
            start: Utc.with_ymd_and_hms(2017, 2, 1, 0, 0, 0).unwrap(),
            duration_s: 86_400,
            step_s: 10,
            wind: WindProcess::default(),
            wake: WakeParams::default(),
            turbine: PowerCurve::default(),
            noise: NoiseParams::default(),
            injections: Injections::default(),
            seed,
        }
    }

    pub fn n_steps(&self) -> usize {
        (self.duration_s / self.step_s) as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.wake.ct > 0.0 && self.wake.ct < 1.0) {
            return bad(format!("wake.ct must lie in (0, 1), got {}", self.wake.ct));
        }
        if !(self.wake.decay > 0.0) {
            return bad(format!(
                "wake.decay must be positive, got {}",
                self.wake.decay
            ));
        }
        if !(self.wake.added_turbulence >= 0.0) {
            return bad("wake.added_turbulence must be non-negative".into());
        }
        let c = &self.turbine;
        if !(c.cut_in < c.rated_speed && c.rated_speed < c.cut_out)
            || c.cut_in < 0.0
            || !(c.rated_power_kw > 0.0)
        {
            return bad(
                "power curve needs 0 <= cut_in < rated_speed < cut_out and rated_power_kw > 0"
                    .into(),
            );
        }
        if self.step_s <= 0 || self.duration_s < self.step_s || self.duration_s % self.step_s != 0 {
            return bad("duration_s must be a positive multiple of step_s".into());
        }
        if !(self.wind.reversion_time_s > 0.0)
            || !(self.wind.gust_time_s > 0.0)
            || self.wind.speed_volatility < 0.0
            || self.wind.direction_volatility < 0.0
            || !(self.wind.gust_std >= 0.0)
        {
            return bad(
                "wind process parameters must be non-negative (time constants positive)".into(),
            );
        }
        let n = &self.noise;
        if n.power_std_kw < 0.0
            || n.drift_std_kw < 0.0
            || n.speed_std < 0.0
            || n.direction_std_deg < 0.0
            || !(n.drift_time_s > 0.0)
        {
            return bad("noise parameters must be non-negative (drift time positive)".into());
        }
        let inj = &self.injections;
        for p in [
            inj.outlier_prob,
            inj.random_na_prob,
            inj.lull_blank_fraction,
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("probability {p} outside [0, 1]"));
            }
        }
        for [lo, hi] in [inj.failure_duration_s, inj.lull_duration_s] {
            if lo <= 0 || hi < lo {
                return bad(format!("duration range [{lo}, {hi}] is empty"));
            }
        }
        for f in &inj.failures {
            if self.layout.index_of(&f.turbine).is_none() {
                return bad(format!(
                    "failure episode names unknown turbine `{}`",
                    f.turbine
                ));
            }
            if f.duration_s <= 0 {
                return bad("failure episodes need a positive duration".into());
            }
        }
        if inj.lulls.iter().any(|l| l.duration_s <= 0) {
            return bad("lull episodes need a positive duration".into());
        }
        Ok(())
    }
}

/// On-disk form of a simulation configuration (TOML).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSpec {
    pub start: Option<String>,
    pub duration_s: i64,
    pub step_s: i64,
    #[serde(default)]
    pub seed: u64,
    pub layout: LayoutSource,
    #[serde(default)]
    pub wind: WindProcess,
    #[serde(default)]
    pub wake: WakeParams,
    #[serde(default)]
    pub turbine: PowerCurve,
    #[serde(default)]
    pub noise: NoiseParams,
    #[serde(default)]
    pub injections: Injections,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum LayoutSource {
    Grid(GridSpec),
    File {
        /// Path of the layout CSV, relative to the configuration file.
        csv: String,
        rotor_diameter_m: f64,
        row_orthogonal_bearing_deg: f64,
    },
}

impl SimulationSpec {
    /// Resolves relative paths against `base_dir`.
    pub fn into_config(self, base_dir: &Path) -> Result<SimulationConfig> {
        let layout = match &self.layout {
            LayoutSource::Grid(g) => FarmLayout::grid(g)?,
            LayoutSource::File {
                csv,
                rotor_diameter_m,
                row_orthogonal_bearing_deg,
            } => read_layout(
                &base_dir.join(csv),
                &LayoutConfig {
                    rotor_diameter_m: *rotor_diameter_m,
                    row_orthogonal_bearing_deg: *row_orthogonal_bearing_deg,
                },
            )?,
        };
        let mut cfg = SimulationConfig::new(layout, self.seed);
        if let Some(s) = &self.start {
            cfg.start = crate::io::parse_timestamp(s).map_err(Error::Config)?;
        }
        cfg.duration_s = self.duration_s;
        cfg.step_s = self.step_s;
        cfg.wind = self.wind;
        cfg.wake = self.wake;
        cfg.turbine = self.turbine;
        cfg.noise = self.noise;
        cfg.injections = self.injections;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone)]
pub struct SimulationOutput {
    pub power: SignalPanel,
    pub wind_speed: SignalPanel,
    pub wind_direction: SignalPanel,
    pub truth: NaLabels,
    pub ambient_speed: Vec<f64>,
    pub ambient_direction: Vec<f64>,
    /// Effective (waked) hub-height speed, N×T.
    pub effective_speed: DMatrix<f64>,
}

struct Episode {
    turbine: Option<usize>,
    start: usize,
    end: usize,
}

fn to_steps(cfg: &SimulationConfig, start_s: i64, duration_s: i64) -> (usize, usize) {
    let t = cfg.n_steps();
    let start = (start_s.max(0) / cfg.step_s) as usize;
    let end = ((start_s + duration_s).max(0) / cfg.step_s) as usize;
    (start.min(t), end.min(t))
}

pub fn simulate(cfg: &SimulationConfig) -> Result<SimulationOutput> {
    cfg.validate()?;
    let n = cfg.layout.len();
    let t = cfg.n_steps();
    let dt = cfg.step_s as f64;
    let dt_h = dt / 3600.0;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let inj = &cfg.injections;

    let mut failures: Vec<Episode> = inj
        .failures
        .iter()
        .map(|f| {
            let (start, end) = to_steps(cfg, f.start_s, f.duration_s);
            Episode {
                turbine: cfg.layout.index_of(&f.turbine),
                start,
                end,
            }
        })
        .collect();
    for _ in 0..inj.random_failures {
        let turbine = rng.random_range(0..n);
        let dur = rng.random_range(inj.failure_duration_s[0]..=inj.failure_duration_s[1]);
        let start = rng.random_range(0..cfg.duration_s);
        let (s, e) = to_steps(cfg, start, dur);
        failures.push(Episode {
            turbine: Some(turbine),
            start: s,
            end: e,
        });
    }
    let mut lulls: Vec<Episode> = inj
        .lulls
        .iter()
        .map(|l| {
            let (start, end) = to_steps(cfg, l.start_s, l.duration_s);
            Episode {
                turbine: None,
                start,
                end,
            }
        })
        .collect();
    for _ in 0..inj.random_lulls {
        let dur = rng.random_range(inj.lull_duration_s[0]..=inj.lull_duration_s[1]);
        let start = rng.random_range(0..cfg.duration_s);
        let (s, e) = to_steps(cfg, start, dur);
        lulls.push(Episode {
            turbine: None,
            start: s,
            end: e,
        });
    }
    let lull_members: Vec<Vec<bool>> = lulls
        .iter()
        .map(|_| {
            (0..n)
                .map(|_| rng.random::<f64>() < inj.lull_blank_fraction)
                .collect()
        })
        .collect();

    let mut failing = DMatrix::from_element(n, t, false);
    for f in &failures {
        if let Some(i) = f.turbine {
            for j in f.start..f.end {
                failing[(i, j)] = true;
            }
        }
    }
    let mut in_lull = vec![false; t];
    let mut lull_blank = DMatrix::from_element(n, t, false);
    for (l, members) in lulls.iter().zip(&lull_members) {
        for j in l.start..l.end {
            in_lull[j] = true;
            for (i, &m) in members.iter().enumerate() {
                if m {
                    lull_blank[(i, j)] = true;
                }
            }
        }
    }
    let mut episode_at = vec![None; t];
    for e in &cfg.wind.episodes {
        let (s, _) = to_steps(cfg, e.start_s, 0);
        if s < t {
            episode_at[s] = Some(e.bearing_deg);
        }
    }

    let curve = &cfg.turbine;
    let noise = &cfg.noise;
    let mut speed = cfg.wind.initial_speed.unwrap_or(cfg.wind.mean_speed);
    let mut direction = cfg.wind.initial_direction_deg;
    let mut drift = vec![0.0; n];
    let drift_decay = (-dt / noise.drift_time_s).exp();
    let drift_kick = noise.drift_std_kw * (1.0 - drift_decay * drift_decay).sqrt();
    let mut cached: Option<(f64, Vec<f64>, Vec<usize>)> = None;
    let mut gust = 0.0;
    let gust_decay = (-dt / cfg.wind.gust_time_s).exp();
    let gust_kick = cfg.wind.gust_std * (1.0 - gust_decay * gust_decay).sqrt();
    let advection = cfg.wind.mean_speed.max(1.0) * dt;
    let mut history: Vec<f64> = Vec::with_capacity(t);
    let mut wake_noise = vec![0.0; n];

    let mut power = DMatrix::from_element(n, t, f64::NAN);
    let mut power_mask = DMatrix::from_element(n, t, true);
    let mut ws = DMatrix::from_element(n, t, 0.0);
    let mut wd = DMatrix::from_element(n, t, 0.0);
    let mut eff = DMatrix::from_element(n, t, 0.0);
    let mut truth = DMatrix::from_element(n, t, NaLabel::Present);
    let mut ambient_speed = Vec::with_capacity(t);
    let mut ambient_direction = Vec::with_capacity(t);

    for j in 0..t {
        let xi_u: f64 = StandardNormal.sample(&mut rng);
        let xi_d: f64 = StandardNormal.sample(&mut rng);
        let xi_g: f64 = StandardNormal.sample(&mut rng);
        if j == 0 {
            gust = cfg.wind.gust_std * xi_g;
        } else {
            gust = gust * gust_decay + gust_kick * xi_g;
        }
        if j > 0 {
            speed += (cfg.wind.mean_speed - speed) * dt / cfg.wind.reversion_time_s
                + cfg.wind.speed_volatility * dt_h.sqrt() * xi_u;
            speed = speed.max(0.0);
            direction += cfg.wind.direction_drift_deg_per_h * dt_h
                + cfg.wind.direction_volatility * dt_h.sqrt() * xi_d;
        }
        if let Some(b) = episode_at[j] {
            direction = b;
        }
        direction = normalize_deg(direction);
        history.push((speed + gust).max(0.0));
        let lull_cap = |u: f64| {
            if in_lull[j] {
                u.min(inj.lull_speed_fraction * curve.cut_in)
            } else {
                u
            }
        };
        ambient_speed.push(lull_cap(history[j]));
        ambient_direction.push(direction);

        if !matches!(&cached, Some((d, _, _)) if *d == direction) {
            let f = wake_factors(&cfg.layout, direction, &cfg.wake);
            let lags = advection_lags(&cfg.layout, direction, advection);
            cached = Some((direction, f, lags));
        }
        let (_, factors, lags) = cached.as_ref().expect("cached above");

        for i in 0..n {
            let e_p: f64 = StandardNormal.sample(&mut rng);
            let e_drift: f64 = StandardNormal.sample(&mut rng);
            let e_ws: f64 = StandardNormal.sample(&mut rng);
            let e_wd: f64 = StandardNormal.sample(&mut rng);
            let u_gap: f64 = rng.random();
            let u_out: f64 = rng.random();
            let outlier_kw: f64 = rng.random_range(0.0..20.0);
            let e_wake: f64 = StandardNormal.sample(&mut rng);

            drift[i] = drift[i] * drift_decay + drift_kick * e_drift;
            wake_noise[i] = if j == 0 {
                e_wake
            } else {
                wake_noise[i] * gust_decay + (1.0 - gust_decay * gust_decay).sqrt() * e_wake
            };
            let free = lull_cap(history[j.saturating_sub(lags[i])]);
            let added = cfg.wake.added_turbulence * (1.0 - factors[i]) * free * wake_noise[i];
            let u_eff = (free * factors[i] + added).max(0.0);
            eff[(i, j)] = u_eff;
            ws[(i, j)] = (u_eff + noise.speed_std * e_ws).max(0.0);
            wd[(i, j)] = normalize_deg(direction + noise.direction_std_deg * e_wd);
            let p = (curve.power(u_eff) + noise.power_std_kw * e_p + drift[i])
                .clamp(0.0, curve.rated_power_kw);

            if failing[(i, j)] {
                truth[(i, j)] = NaLabel::Failure;
                if u_out < inj.outlier_prob {
                    power[(i, j)] = outlier_kw;
                } else {
                    power_mask[(i, j)] = false;
                }
            } else if lull_blank[(i, j)] {
                truth[(i, j)] = NaLabel::Shutdown;
                power_mask[(i, j)] = false;
            } else if u_gap < inj.random_na_prob {
                truth[(i, j)] = NaLabel::Unassigned;
                power_mask[(i, j)] = false;
            } else {
                power[(i, j)] = p;
            }
        }
    }

    let ids = cfg.layout.turbine_ids.clone();
    Ok(SimulationOutput {
        power: SignalPanel::new(
            ids.clone(),
            cfg.start,
            cfg.step_s,
            power,
            power_mask,
            Observable::ActivePower,
        )?,
        wind_speed: SignalPanel::complete(
            ids.clone(),
            cfg.start,
            cfg.step_s,
            ws,
            Observable::WindSpeed,
        )?,
        wind_direction: SignalPanel::complete(
            ids.clone(),
            cfg.start,
            cfg.step_s,
            wd,
            Observable::WindDirection,
        )?,
        truth: NaLabels {
            turbine_ids: ids,
            t0: cfg.start,
            step: cfg.step_s,
            labels: truth,
        },
        ambient_speed,
        ambient_direction,
        effective_speed: eff,
    })
}
