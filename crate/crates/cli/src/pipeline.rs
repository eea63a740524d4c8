//! End-to-end batch runs driven by a TOML file.
//!
//! ```toml
//! output_dir = "out"
//!
//! [inputs]
//! simulate = "sim.toml"          # or power / wind_speed / wind_direction panels
//! # layout = "farm.csv"          # farm_config defaults to farm.toml
//!
//! [window]
//! length = "12h"
//! stride = "12h"
//! mode = "reduced"
//! drop = [1]
//!
//! [bins]                         # omit to skip direction binning
//! center0 = 0.0                  # omit for the layout's row-orthogonal bearing
//! ```
//!
//! Relative paths are resolved against the directory of the config file.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use log::info;
use serde::{Deserialize, Serialize};
use windcorr_core::cleaning::clean_power;
use windcorr_core::io::{
    read_layout, read_panel, read_toml, write_labels, write_layout, write_panel,
};
use windcorr_core::simulator::simulate;
use windcorr_core::{
    DirectionBins, FarmLayout, LayoutConfig, Observable, ShutdownFill, SignalPanel, SimulationSpec,
    Thresholds, WindowSpec,
};

use crate::manifest::Manifest;
use crate::output::StagedDir;
use crate::stages::{
    bin_matrices, compute_windows, ingest_raw, parse_duration, reorder, resolve, window_mode,
    write_bins, write_eigenvalue_table, write_json, write_matrices, CleanRule, ModeName,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub output_dir: PathBuf,
    pub inputs: Inputs,
    /// Present when the power/wind inputs are raw long-format exports.
    #[serde(default)]
    pub ingest: Option<IngestConfig>,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default = "default_fill")]
    pub shutdown_fill: ShutdownFill,
    pub window: WindowConfig,
    /// Also write the eigenvalues of every window.
    #[serde(default)]
    pub eigen: bool,
    #[serde(default)]
    pub bins: Option<BinConfig>,
    /// Overrides the seed of a simulated input.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub verbosity: u8,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Inputs {
    pub simulate: Option<PathBuf>,
    pub power: Option<PathBuf>,
    pub wind_speed: Option<PathBuf>,
    pub wind_direction: Option<PathBuf>,
    pub layout: Option<PathBuf>,
    pub farm_config: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestConfig {
    #[serde(default = "default_step")]
    pub step: String,
    #[serde(default = "default_clean")]
    pub clean: CleanRule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowConfig {
    #[serde(default = "default_window")]
    pub length: String,
    pub stride: String,
    #[serde(default = "default_mode")]
    pub mode: ModeName,
    #[serde(default = "default_drop")]
    pub drop: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BinConfig {
    pub center0: Option<f64>,
}

fn default_fill() -> ShutdownFill {
    ShutdownFill::LastValue
}
fn default_step() -> String {
    "10m".into()
}
fn default_clean() -> CleanRule {
    CleanRule::Riffgat
}
fn default_window() -> String {
    "12h".into()
}
fn default_mode() -> ModeName {
    ModeName::Raw
}
fn default_drop() -> Vec<usize> {
    vec![1]
}

impl RunConfig {
    /// Reads the config and returns it with the directory its relative
    /// paths refer to.
    pub fn load(path: &Path) -> Result<(RunConfig, PathBuf)> {
        let cfg: RunConfig =
            read_toml(path).with_context(|| format!("reading run config {}", path.display()))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((cfg, base))
    }

    fn input_paths(&self) -> Vec<(&'static str, &Path)> {
        let i = &self.inputs;
        [
            ("simulate", &i.simulate),
            ("power", &i.power),
            ("wind_speed", &i.wind_speed),
            ("wind_direction", &i.wind_direction),
            ("layout", &i.layout),
            ("farm_config", &i.farm_config),
        ]
        .into_iter()
        .filter_map(|(k, p)| p.as_deref().map(|p| (k, p)))
        .collect()
    }

    pub fn validate(&self, base: &Path) -> Result<()> {
        let i = &self.inputs;
        if i.simulate.is_some() {
            if i.power.is_some()
                || i.wind_speed.is_some()
                || i.wind_direction.is_some()
                || i.layout.is_some()
            {
                bail!("inputs.simulate cannot be combined with panel or layout inputs");
            }
            if self.ingest.is_some() {
                bail!("[ingest] applies to raw exports, not to simulated input");
            }
        } else {
            if i.power.is_none() || i.wind_speed.is_none() {
                bail!("inputs need either `simulate` or both `power` and `wind_speed`");
            }
            if i.farm_config.is_some() && i.layout.is_none() {
                bail!("inputs.farm_config needs inputs.layout");
            }
        }
        if let Some(b) = &self.bins {
            if i.simulate.is_none() && i.wind_direction.is_none() {
                bail!("[bins] needs inputs.wind_direction");
            }
            if b.center0.is_none() && i.simulate.is_none() && i.layout.is_none() {
                bail!("[bins] without center0 needs a layout to derive it from");
            }
        }
        let mut paths: Vec<(&str, PathBuf)> = self
            .input_paths()
            .into_iter()
            .map(|(k, p)| (k, resolve(base, p)))
            .collect();
        if let (Some(l), None) = (&i.layout, &i.farm_config) {
            paths.push(("farm_config", resolve(base, &l.with_extension("toml"))));
        }
        for (what, p) in paths {
            if !p.is_file() {
                bail!("input {what} `{}` does not exist", p.display());
            }
        }
        parse_duration(&self.window.length)?;
        parse_duration(&self.window.stride)?;
        if let Some(ing) = &self.ingest {
            parse_duration(&ing.step)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub force: bool,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub output_dir: PathBuf,
    pub windows: usize,
    pub placeholders: usize,
    /// Non-empty direction bins.
    pub bins_filled: Option<usize>,
}

fn stage<T>(name: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    info!("stage {name}");
    f().with_context(|| format!("stage `{name}` failed"))
}

fn load_panel(path: &Path, obs: Observable) -> Result<SignalPanel> {
    read_panel(path, obs).with_context(|| format!("reading {}", path.display()))
}

struct Loaded {
    power: SignalPanel,
    wind_speed: SignalPanel,
    wind_direction: Option<SignalPanel>,
    layout: Option<FarmLayout>,
}

/// ingest → classify/fill → corr → (eigen, binavg); outputs appear under
/// `output_dir` only if every stage succeeds.
pub fn run_pipeline(cfg: &RunConfig, base: &Path, opts: &RunOptions) -> Result<RunSummary> {
    let mut cfg = cfg.clone();
    if opts.seed.is_some() {
        cfg.seed = opts.seed;
    }
    stage("config", || cfg.validate(base))?;
    let out_dir = resolve(base, &cfg.output_dir);
    let staged = StagedDir::new(&out_dir, opts.force).context("stage `output` failed")?;
    let out = staged.path().to_path_buf();
    let mut manifest = Manifest::new("run", serde_json::to_value(&cfg)?);
    for (_, p) in cfg.input_paths() {
        manifest.add_input_as(p, &resolve(base, p))?;
    }
    if let (Some(l), None) = (&cfg.inputs.layout, &cfg.inputs.farm_config) {
        let t = l.with_extension("toml");
        manifest.add_input_as(&t, &resolve(base, &t))?;
    }

    let loaded = if let Some(sim) = &cfg.inputs.simulate {
        stage("simulate", || {
            let path = resolve(base, sim);
            let spec: SimulationSpec =
                read_toml(&path).with_context(|| format!("reading {}", path.display()))?;
            let mut sc = spec.into_config(path.parent().unwrap_or(Path::new("")))?;
            if let Some(seed) = cfg.seed {
                sc.seed = seed;
            }
            let s = simulate(&sc)?;
            write_labels(&s.truth, &out.join("truth_labels.csv"))?;
            write_layout(
                &sc.layout,
                &out.join("layout.csv"),
                &out.join("layout.toml"),
            )?;
            Ok(Loaded {
                power: s.power,
                wind_speed: s.wind_speed,
                wind_direction: Some(s.wind_direction),
                layout: Some(sc.layout),
            })
        })?
    } else {
        stage("ingest", || {
            let i = &cfg.inputs;
            let load = |p: &PathBuf, obs: Observable| -> Result<SignalPanel> {
                let path = resolve(base, p);
                match &cfg.ingest {
                    Some(ing) => {
                        let (panel, report) =
                            ingest_raw(&path, obs, parse_duration(&ing.step)?, ing.clean)
                                .with_context(|| format!("ingesting {}", path.display()))?;
                        write_json(&out.join(format!("ingest_{}.json", obs.as_str())), &report)?;
                        Ok(panel)
                    }
                    None => load_panel(&path, obs),
                }
            };
            let layout = match &i.layout {
                Some(l) => {
                    let csv = resolve(base, l);
                    let conf = resolve(
                        base,
                        i.farm_config.as_ref().unwrap_or(&l.with_extension("toml")),
                    );
                    let lc: LayoutConfig =
                        read_toml(&conf).with_context(|| format!("reading {}", conf.display()))?;
                    Some(
                        read_layout(&csv, &lc)
                            .with_context(|| format!("reading {}", csv.display()))?,
                    )
                }
                None => None,
            };
            let power = load(
                i.power.as_ref().expect("validated"),
                Observable::ActivePower,
            )?;
            let wind_speed = load(
                i.wind_speed.as_ref().expect("validated"),
                Observable::WindSpeed,
            )?;
            let wind_direction = i
                .wind_direction
                .as_ref()
                .map(|p| load(p, Observable::WindDirection))
                .transpose()?;
            let order = layout
                .as_ref()
                .map(|l| l.turbine_ids.clone())
                .unwrap_or_else(|| power.turbine_ids.clone());
            Ok(Loaded {
                power: reorder(&power, &order).context("power panel")?,
                wind_speed: reorder(&wind_speed, &order).context("wind speed panel")?,
                wind_direction: wind_direction
                    .map(|p| reorder(&p, &order).context("wind direction panel"))
                    .transpose()?,
                layout,
            })
        })?
    };
    stage("ingest", || {
        let dir = out.join("panels");
        std::fs::create_dir_all(&dir)?;
        write_panel(&loaded.power, &dir.join("power.csv"))?;
        write_panel(&loaded.wind_speed, &dir.join("wind_speed.csv"))?;
        if let Some(wd) = &loaded.wind_direction {
            write_panel(wd, &dir.join("wind_direction.csv"))?;
        }
        Ok(())
    })?;

    let cleaned = stage("classify", || {
        let c = clean_power(
            &loaded.power,
            &loaded.wind_speed,
            &cfg.thresholds,
            cfg.shutdown_fill,
        )?;
        write_labels(&c.labels, &out.join("labels.csv"))?;
        write_panel(&c.filled, &out.join("panels").join("power_filled.csv"))?;
        write_json(&out.join("cleaning_report.json"), &c.report)?;
        Ok(c)
    })?;

    let mode = window_mode(cfg.window.mode, &cfg.window.drop);
    let spec = WindowSpec::new(
        parse_duration(&cfg.window.length)?,
        parse_duration(&cfg.window.stride)?,
    );
    let outcomes = stage("corr", || {
        let o = compute_windows(&cleaned.filled, spec, &mode)?;
        write_matrices(
            &out.join("mats"),
            &o,
            spec,
            cleaned.filled.step,
            &mode,
            &cleaned.filled.turbine_ids,
        )?;
        Ok(o)
    })?;
    let placeholders = outcomes.iter().filter(|o| o.result.is_err()).count();

    if cfg.eigen {
        stage("eigen", || {
            let mut f =
                std::io::BufWriter::new(std::fs::File::create(out.join("eigenvalues.csv"))?);
            write_eigenvalue_table(&outcomes, cleaned.filled.n_turbines(), &mut f)?;
            Ok(())
        })?;
    }

    let bins_filled = match &cfg.bins {
        Some(b) => Some(stage("binavg", || {
            let wd = loaded
                .wind_direction
                .as_ref()
                .ok_or_else(|| anyhow!("no wind direction panel"))?;
            let bins = match (b.center0, &loaded.layout) {
                (Some(c), _) => DirectionBins::new(c),
                (None, Some(l)) => DirectionBins::for_layout(l),
                (None, None) => bail!("no center0 and no layout"),
            };
            let matrices = outcomes
                .iter()
                .filter_map(|o| o.result.as_ref().ok().cloned())
                .collect();
            let binned = bin_matrices(matrices, wd, Some(&loaded.wind_speed), bins)?;
            write_bins(&out.join("bins"), &binned)?;
            Ok(binned.per_bin.iter().filter(|b| b.mean.is_some()).count())
        })?),
        None => None,
    };

    stage("manifest", || manifest.finish(&out))?;
    let output_dir = staged.commit()?;
    Ok(RunSummary {
        output_dir,
        windows: outcomes.len(),
        placeholders,
        bins_filled,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_takes_defaults() {
        let cfg: RunConfig = toml::from_str(
            r#"
            output_dir = "out"
            [inputs]
            simulate = "sim.toml"
            [window]
            stride = "12h"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.window.length, "12h");
        assert_eq!(cfg.window.mode, ModeName::Raw);
        assert_eq!(cfg.shutdown_fill, ShutdownFill::LastValue);
        assert_eq!(cfg.thresholds, Thresholds::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let r: Result<RunConfig, _> = toml::from_str(
            r#"
            output_dir = "out"
            colour = "red"
            [inputs]
            [window]
            stride = "1h"
            "#,
        );
        assert!(r.is_err());
    }

    #[test]
    fn validation_catches_missing_files_and_bad_combinations() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg: RunConfig = toml::from_str(
            r#"
            output_dir = "out"
            [inputs]
            power = "p.csv"
            wind_speed = "w.csv"
            [window]
            stride = "1h"
            "#,
        )
        .unwrap();
        let err = cfg.validate(dir.path()).unwrap_err().to_string();
        assert!(err.contains("p.csv"), "{err}");
        std::fs::write(dir.path().join("p.csv"), "").unwrap();
        std::fs::write(dir.path().join("w.csv"), "").unwrap();
        cfg.validate(dir.path()).unwrap();
        cfg.bins = Some(BinConfig { center0: Some(0.0) });
        assert!(cfg.validate(dir.path()).is_err());
        cfg.bins = None;
        cfg.window.stride = "fortnightly".into();
        assert!(cfg.validate(dir.path()).is_err());
    }
}
