//! Building blocks shared by the subcommands and the pipeline runner.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use windcorr_core::correlation::{sliding_correlations, WindowOutcome};
use windcorr_core::direction::{bin_average, window_direction, BinInput};
use windcorr_core::ingest::{
    parse_scada, resample_circular_mean, resample_mean, riffgat_clean, RiffgatReport,
};
use windcorr_core::io::{
    format_sig15, format_timestamp, parse_timestamp, read_matrix, write_matrix_to,
};
use windcorr_core::{
    BinnedMatrices, CorrelationMatrix, DirectionBins, EigenDecomposition, Error, MatrixSource,
    Observable, SignalPanel, WindowMode, WindowSpec,
};

/// Parses `10m`, `12h`, `30s`, `1d`, `1h 30m`, ... into whole seconds.
pub fn parse_duration(s: &str) -> Result<i64> {
    let d =
        humantime::parse_duration(s.trim()).map_err(|e| anyhow!("invalid duration `{s}`: {e}"))?;
    if d.subsec_nanos() != 0 || d.as_secs() == 0 {
        bail!("duration `{s}` must be a positive whole number of seconds");
    }
    Ok(d.as_secs() as i64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum CleanRule {
    None,
    Riffgat,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IngestReport {
    pub source: String,
    pub observable: Observable,
    pub native_step_s: i64,
    pub step_s: i64,
    pub turbines: usize,
    pub steps: usize,
    pub missing: usize,
    pub cleaning: Option<RiffgatReport>,
}

/// Raw long-format export → panel at `step` seconds, cleaned at the native
/// resolution before resampling.
pub fn ingest_raw(
    path: &Path,
    observable: Observable,
    step: i64,
    clean: CleanRule,
) -> Result<(SignalPanel, IngestReport)> {
    let import = parse_scada(path, observable)?;
    let native = import.panel.step;
    let (panel, cleaning) = match clean {
        CleanRule::None => (import.panel, None),
        CleanRule::Riffgat => {
            let (p, r) = riffgat_clean(&import.panel, import.stddev.as_ref())?;
            (p, Some(r))
        }
    };
    let panel = if step == native {
        panel
    } else if observable == Observable::WindDirection {
        resample_circular_mean(&panel, step)?
    } else {
        resample_mean(&panel, step)?
    };
    let report = IngestReport {
        source: path.to_string_lossy().into_owned(),
        observable,
        native_step_s: native,
        step_s: step,
        turbines: panel.n_turbines(),
        steps: panel.n_steps(),
        missing: panel.missing_count(),
        cleaning,
    };
    Ok((panel, report))
}

/// Puts the panel rows in `order`; the id sets must match exactly.
pub fn reorder(panel: &SignalPanel, order: &[String]) -> Result<SignalPanel> {
    if panel.turbine_ids == order {
        return Ok(panel.clone());
    }
    let idx = order
        .iter()
        .map(|id| {
            panel
                .row_of(id)
                .ok_or_else(|| anyhow!("turbine `{id}` of the layout is missing from the panel"))
        })
        .collect::<Result<Vec<_>>>()?;
    if order.len() != panel.n_turbines() {
        bail!(
            "panel has {} turbines but the layout lists {}",
            panel.n_turbines(),
            order.len()
        );
    }
    Ok(panel.permute_rows(&idx))
}

pub fn window_mode(mode: ModeName, drop: &[usize]) -> WindowMode {
    match mode {
        ModeName::Raw => WindowMode::Raw,
        ModeName::Reduced => WindowMode::Reduced {
            drop: drop.to_vec(),
        },
        ModeName::Deviation => WindowMode::Deviation,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ModeName {
    Raw,
    Reduced,
    Deviation,
}

/// Sidecar of one window in a matrix directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixMeta {
    pub index: usize,
    pub window_start: String,
    pub window_length_s: i64,
    pub step_s: i64,
    pub mode: MatrixSource,
    pub dropped: Vec<usize>,
    pub turbines: usize,
    /// `None` for placeholder windows.
    pub matrix: Option<String>,
    pub rank: Option<usize>,
    pub zero_variance: Vec<String>,
    pub error: Option<String>,
}

pub const INDEX_NAME: &str = "index.json";

pub fn compute_windows(
    panel: &SignalPanel,
    spec: WindowSpec,
    mode: &WindowMode,
) -> Result<Vec<WindowOutcome>> {
    Ok(sliding_correlations(panel, spec, mode)?)
}

/// Writes `wNNNNN.csv` + `wNNNNN.meta.json` per window and an index.
pub fn write_matrices(
    dir: &Path,
    outcomes: &[WindowOutcome],
    spec: WindowSpec,
    step: i64,
    mode: &WindowMode,
    ids: &[String],
) -> Result<Vec<MatrixMeta>> {
    fs::create_dir_all(dir)?;
    let dropped = match mode {
        WindowMode::Reduced { drop } => drop.clone(),
        _ => Vec::new(),
    };
    let mut metas = Vec::with_capacity(outcomes.len());
    for o in outcomes {
        let stem = format!("w{:05}", o.index);
        let (matrix, rank, zero_variance, error) = match &o.result {
            Ok(c) => {
                let name = format!("{stem}.csv");
                let mut f = fs::File::create(dir.join(&name))?;
                write_matrix_to(&c.ids, &c.entries, &mut f)?;
                (Some(name), c.rank, Vec::new(), None)
            }
            Err(fail) => (
                None,
                None,
                fail.zero_variance.clone(),
                Some(fail.message.clone()),
            ),
        };
        let meta = MatrixMeta {
            index: o.index,
            window_start: format_timestamp(o.window_start),
            window_length_s: spec.length,
            step_s: step,
            mode: mode.source(),
            dropped: dropped.clone(),
            turbines: ids.len(),
            matrix,
            rank,
            zero_variance,
            error,
        };
        write_json(&dir.join(format!("{stem}.meta.json")), &meta)?;
        metas.push(meta);
    }
    write_json(&dir.join(INDEX_NAME), &metas)?;
    Ok(metas)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Matrices of a directory written by [`write_matrices`]; placeholders are
/// skipped.
pub fn read_matrices(dir: &Path) -> Result<Vec<CorrelationMatrix>> {
    let index_path = dir.join(INDEX_NAME);
    let text = fs::read_to_string(&index_path)
        .with_context(|| format!("reading {}", index_path.display()))?;
    let metas: Vec<MatrixMeta> =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", index_path.display()))?;
    let mut out = Vec::new();
    for meta in metas {
        let Some(name) = &meta.matrix else { continue };
        let (ids, entries) = read_matrix(&dir.join(name))?;
        let window_start = parse_timestamp(&meta.window_start)
            .map_err(|e| anyhow!("{}: {e}", index_path.display()))?;
        out.push(CorrelationMatrix {
            ids,
            entries,
            window_start,
            window_len: meta.window_length_s,
            source: meta.mode,
            rank: meta.rank,
        });
    }
    Ok(out)
}

fn window_steps(panel: &SignalPanel, start: DateTime<Utc>, len_s: i64) -> Result<(usize, usize)> {
    let offset = (start - panel.t0).num_seconds();
    if offset < 0 || offset % panel.step != 0 || len_s % panel.step != 0 {
        bail!(
            "window starting {} does not align with the {} s grid of the {} panel",
            format_timestamp(start),
            panel.step,
            panel.observable
        );
    }
    let (s, len) = (
        (offset / panel.step) as usize,
        (len_s / panel.step) as usize,
    );
    if s + len > panel.n_steps() {
        bail!(
            "window starting {} runs past the end of the {} panel",
            format_timestamp(start),
            panel.observable
        );
    }
    Ok((s, len))
}

/// Attaches each window's mean direction (and speed) and averages by bin.
/// Windows whose direction is undefined are counted as excluded.
pub fn bin_matrices(
    matrices: Vec<CorrelationMatrix>,
    wind_dir: &SignalPanel,
    wind_speed: Option<&SignalPanel>,
    bins: DirectionBins,
) -> Result<BinnedMatrices> {
    let inputs = matrices
        .into_iter()
        .map(|m| {
            let (s, len) = window_steps(wind_dir, m.window_start, m.window_len)?;
            let direction = match window_direction(wind_dir, s, len) {
                Ok(c) => Some(c.mean_deg),
                Err(Error::DegenerateMean(_) | Error::NoData) => None,
                Err(e) => return Err(e.into()),
            };
            let mean_speed = match wind_speed {
                Some(ws) => {
                    let (s, len) = window_steps(ws, m.window_start, m.window_len)?;
                    let v: Vec<f64> = (s..s + len)
                        .flat_map(|j| (0..ws.n_turbines()).filter_map(move |i| ws.get(i, j)))
                        .collect();
                    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
                }
                None => None,
            };
            Ok(BinInput {
                matrix: m,
                direction,
                mean_speed,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(bin_average(&inputs, bins)?)
}

fn opt(v: Option<f64>) -> String {
    v.map(format_sig15).unwrap_or_else(|| "NA".into())
}

/// `bin_<label>.csv` for every non-empty bin plus `summary.csv`.
pub fn write_bins(dir: &Path, binned: &BinnedMatrices) -> Result<()> {
    fs::create_dir_all(dir)?;
    for b in &binned.per_bin {
        if let Some(m) = &b.mean {
            let mut f = fs::File::create(dir.join(format!("bin_{}.csv", b.label)))?;
            write_matrix_to(&m.ids, &m.entries, &mut f)?;
        }
    }
    let mut s = String::from("bin,center_deg,windows,mean_wind_speed,mean_direction_deg\n");
    for r in binned.summary_rows() {
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            r.bin,
            r.center_deg,
            r.windows,
            opt(r.mean_wind_speed),
            opt(r.mean_direction)
        ));
    }
    s.push_str(&format!("excluded,NA,{},NA,NA\n", binned.excluded));
    fs::write(dir.join("summary.csv"), s)?;
    Ok(())
}

/// Rows `k,eigenvalue,<component per turbine>`, eigenvalues descending.
pub fn write_eigen(ids: &[String], e: &EigenDecomposition, w: &mut dyn Write) -> Result<()> {
    write!(w, "k,eigenvalue")?;
    for id in ids {
        write!(w, ",{id}")?;
    }
    writeln!(w)?;
    for k in 0..e.eigenvalues.len() {
        write!(w, "{},{}", k + 1, format_sig15(e.eigenvalues[k]))?;
        for i in 0..ids.len() {
            write!(w, ",{}", format_sig15(e.eigenvectors[(i, k)]))?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// One row of eigenvalues per window (placeholders as `NA`).
pub fn write_eigenvalue_table(
    outcomes: &[WindowOutcome],
    n: usize,
    w: &mut dyn Write,
) -> Result<()> {
    write!(w, "index,window_start")?;
    for k in 1..=n {
        write!(w, ",lambda{k}")?;
    }
    writeln!(w)?;
    for o in outcomes {
        write!(w, "{},{}", o.index, format_timestamp(o.window_start))?;
        match &o.result {
            Ok(c) => {
                let e = windcorr_core::correlation::eigen(&c.entries)?;
                for v in e.eigenvalues.iter() {
                    write!(w, ",{}", format_sig15(*v))?;
                }
            }
            Err(_) => {
                for _ in 0..n {
                    write!(w, ",NA")?;
                }
            }
        }
        writeln!(w)?;
    }
    Ok(())
}

/// `path` if absolute, else relative to `base`.
pub fn resolve(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn durations() {
        assert_eq!(parse_duration("10m").unwrap(), 600);
        assert_eq!(parse_duration("12h").unwrap(), 43_200);
        assert_eq!(parse_duration("10s").unwrap(), 10);
        assert_eq!(parse_duration("1d").unwrap(), 86_400);
        assert!(parse_duration("0s").is_err());
        assert!(parse_duration("soon").is_err());
        assert!(parse_duration("1500ms").is_err());
    }
}
