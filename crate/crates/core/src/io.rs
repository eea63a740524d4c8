//! File formats.
//!
//! Panel CSV: header `timestamp,<id1>,<id2>,...`, one row per time step,
//! ISO-8601 UTC timestamps at uniform spacing, missing cells written as
//! `NA`. Values use the shortest decimal representation that parses back
//! to the same `f64`, so a write/read cycle is bit-exact.
//!
//! Labels CSV: same layout as a panel, cells `P`/`F`/`S`/`U`.
//!
//! Matrix CSV: header `id,<id1>,...`, then one row per turbine starting
//! with its id; entries carry 15 significant digits.
//!
//! Layout: CSV `id,easting_m,northing_m,row` plus a TOML file with
//! `rotor_diameter_m` and `row_orthogonal_bearing_deg`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use chrono::{DateTime, SecondsFormat, Utc};
use nalgebra::DMatrix;
use serde::de::DeserializeOwned;

use crate::cleaning::{NaLabel, NaLabels};
use crate::error::{Error, Result};
use crate::layout::{FarmLayout, LayoutConfig, Position};
use crate::panel::{Observable, SignalPanel};

pub const MISSING: &str = "NA";

pub fn format_timestamp(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::AutoSi, true)
}

pub fn parse_timestamp(s: &str) -> std::result::Result<DateTime<Utc>, String> {
    DateTime::parse_from_rfc3339(s.trim())
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| format!("malformed timestamp `{s}`: {e}"))
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w)
}

fn csv_reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(r)
}

fn line_of(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, |p| p.line())
}

/// Grid of cells read from a timestamp-indexed CSV, before typing.
struct TimeGrid {
    ids: Vec<String>,
    t0: DateTime<Utc>,
    step: i64,
    cells: Vec<Vec<String>>,
}

fn read_time_grid<R: Read>(reader: R, origin: &Path, step_hint: Option<i64>) -> Result<TimeGrid> {
    let mut rdr = csv_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.get(0) != Some("timestamp") {
        return Err(Error::parse(
            origin,
            1,
            1,
            "header must start with `timestamp`",
        ));
    }
    let ids: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    if ids.is_empty() {
        return Err(Error::parse(origin, 1, 2, "no turbine columns"));
    }
    let mut times: Vec<DateTime<Utc>> = Vec::new();
    let mut cells = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = line_of(&record);
        if record.len() != ids.len() + 1 {
            return Err(Error::parse(
                origin,
                line,
                record.len().min(ids.len() + 1),
                format!("expected {} fields, found {}", ids.len() + 1, record.len()),
            ));
        }
        let t = parse_timestamp(&record[0]).map_err(|m| Error::parse(origin, line, 1, m))?;
        if let Some(&prev) = times.last() {
            let step = match times.len() {
                1 => (t - prev).num_seconds(),
                _ => (times[1] - times[0]).num_seconds(),
            };
            if step <= 0 || t - prev != chrono::Duration::seconds(step) {
                return Err(Error::parse(
                    origin,
                    line,
                    1,
                    format!("timestamp `{}` breaks uniform spacing", &record[0]),
                ));
            }
        }
        times.push(t);
        cells.push(record.iter().skip(1).map(str::to_string).collect());
    }
    if times.is_empty() {
        return Err(Error::parse(origin, 1, 1, "no data rows"));
    }
    let step = if times.len() >= 2 {
        (times[1] - times[0]).num_seconds()
    } else {
        step_hint
            .ok_or_else(|| Error::parse(origin, 2, 1, "single-row file: step cannot be inferred"))?
    };
    Ok(TimeGrid {
        ids,
        t0: times[0],
        step,
        cells,
    })
}

/// Reads a panel CSV. `step_hint` is only consulted for single-row files.
pub fn read_panel_from<R: Read>(
    reader: R,
    origin: &Path,
    observable: Observable,
    step_hint: Option<i64>,
) -> Result<SignalPanel> {
    let grid = read_time_grid(reader, origin, step_hint)?;
    let n = grid.ids.len();
    let t = grid.cells.len();
    let mut values = DMatrix::from_element(n, t, f64::NAN);
    let mut mask = DMatrix::from_element(n, t, false);
    for (j, row) in grid.cells.iter().enumerate() {
        for (i, cell) in row.iter().enumerate() {
            if cell == MISSING {
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| {
                Error::parse(
                    origin,
                    j as u64 + 2,
                    i + 2,
                    format!("`{cell}` is neither a number nor NA"),
                )
            })?;
            if !v.is_finite() {
                return Err(Error::parse(
                    origin,
                    j as u64 + 2,
                    i + 2,
                    "non-finite value",
                ));
            }
            values[(i, j)] = v;
            mask[(i, j)] = true;
        }
    }
    SignalPanel::new(grid.ids, grid.t0, grid.step, values, mask, observable)
}

pub fn read_panel(path: &Path, observable: Observable) -> Result<SignalPanel> {
    let f = File::open(path)?;
    read_panel_from(BufReader::new(f), path, observable, None)
}

pub fn write_panel_to<W: Write>(panel: &SignalPanel, w: W) -> Result<()> {
    let mut wtr = csv_writer(w);
    let mut header = vec!["timestamp".to_string()];
    header.extend(panel.turbine_ids.iter().cloned());
    wtr.write_record(&header)?;
    let mut row = Vec::with_capacity(panel.n_turbines() + 1);
    for j in 0..panel.n_steps() {
        row.clear();
        row.push(format_timestamp(panel.time_at(j)));
        for i in 0..panel.n_turbines() {
            row.push(match panel.get(i, j) {
                Some(v) => v.to_string(),
                None => MISSING.to_string(),
            });
        }
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_panel(panel: &SignalPanel, path: &Path) -> Result<()> {
    let f = File::create(path)?;
    write_panel_to(panel, BufWriter::new(f))
}

pub fn write_labels_to<W: Write>(labels: &NaLabels, w: W) -> Result<()> {
    let mut wtr = csv_writer(w);
    let mut header = vec!["timestamp".to_string()];
    header.extend(labels.turbine_ids.iter().cloned());
    wtr.write_record(&header)?;
    let (n, t) = labels.labels.shape();
    for j in 0..t {
        let mut row = vec![format_timestamp(labels.time_at(j))];
        for i in 0..n {
            row.push(labels.labels[(i, j)].code().to_string());
        }
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_labels(labels: &NaLabels, path: &Path) -> Result<()> {
    write_labels_to(labels, BufWriter::new(File::create(path)?))
}

pub fn read_labels(path: &Path) -> Result<NaLabels> {
    let grid = read_time_grid(BufReader::new(File::open(path)?), path, None)?;
    let n = grid.ids.len();
    let t = grid.cells.len();
    let mut labels = DMatrix::from_element(n, t, NaLabel::Present);
    for (j, row) in grid.cells.iter().enumerate() {
        for (i, cell) in row.iter().enumerate() {
            labels[(i, j)] = NaLabel::from_code(cell).ok_or_else(|| {
                Error::parse(path, j as u64 + 2, i + 2, format!("unknown label `{cell}`"))
            })?;
        }
    }
    Ok(NaLabels {
        turbine_ids: grid.ids,
        t0: grid.t0,
        step: grid.step,
        labels,
    })
}

/// Square matrix with turbine ids on both axes.
pub fn write_matrix_to<W: Write>(ids: &[String], m: &DMatrix<f64>, w: W) -> Result<()> {
    let mut wtr = csv_writer(w);
    let mut header = vec!["id".to_string()];
    header.extend(ids.iter().cloned());
    wtr.write_record(&header)?;
    for (i, id) in ids.iter().enumerate() {
        let mut row = vec![id.clone()];
        row.extend((0..m.ncols()).map(|j| format_sig15(m[(i, j)])));
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_matrix(ids: &[String], m: &DMatrix<f64>, path: &Path) -> Result<()> {
    write_matrix_to(ids, m, BufWriter::new(File::create(path)?))
}

pub fn read_matrix(path: &Path) -> Result<(Vec<String>, DMatrix<f64>)> {
    let mut rdr = csv_reader(BufReader::new(File::open(path)?));
    let headers = rdr.headers()?.clone();
    if headers.get(0) != Some("id") {
        return Err(Error::parse(path, 1, 1, "header must start with `id`"));
    }
    let ids: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let n = ids.len();
    let mut m = DMatrix::zeros(n, n);
    let mut rows = 0;
    for record in rdr.records() {
        let record = record?;
        let line = line_of(&record);
        if rows >= n {
            return Err(Error::parse(path, line, 1, "more rows than columns"));
        }
        if record.len() != n + 1 {
            return Err(Error::parse(
                path,
                line,
                1,
                format!("expected {} fields, found {}", n + 1, record.len()),
            ));
        }
        if record[0] != ids[rows] {
            return Err(Error::parse(
                path,
                line,
                1,
                format!(
                    "row id `{}` does not match column `{}`",
                    &record[0], ids[rows]
                ),
            ));
        }
        for j in 0..n {
            m[(rows, j)] = record[j + 1].parse().map_err(|_| {
                Error::parse(
                    path,
                    line,
                    j + 2,
                    format!("`{}` is not a number", &record[j + 1]),
                )
            })?;
        }
        rows += 1;
    }
    if rows != n {
        return Err(Error::parse(
            path,
            rows as u64 + 1,
            1,
            format!("expected {n} rows, found {rows}"),
        ));
    }
    Ok((ids, m))
}

/// Scientific notation with 15 significant digits.
pub fn format_sig15(v: f64) -> String {
    format!("{v:.14e}")
}

pub fn read_layout(csv_path: &Path, config: &LayoutConfig) -> Result<FarmLayout> {
    let mut rdr = csv_reader(BufReader::new(File::open(csv_path)?));
    let headers = rdr.headers()?.clone();
    let expected = ["id", "easting_m", "northing_m", "row"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::parse(
            csv_path,
            1,
            1,
            format!("header must be `{}`", expected.join(",")),
        ));
    }
    let mut ids = Vec::new();
    let mut positions = Vec::new();
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = line_of(&record);
        let num = |k: usize| -> Result<f64> {
            record[k].parse().map_err(|_| {
                Error::parse(
                    csv_path,
                    line,
                    k + 1,
                    format!("`{}` is not a number", &record[k]),
                )
            })
        };
        ids.push(record[0].to_string());
        positions.push(Position {
            easting: num(1)?,
            northing: num(2)?,
        });
        rows.push(record[3].parse().map_err(|_| {
            Error::parse(
                csv_path,
                line,
                4,
                format!("`{}` is not a row index", &record[3]),
            )
        })?);
    }
    FarmLayout::new(
        ids,
        positions,
        config.rotor_diameter_m,
        rows,
        config.row_orthogonal_bearing_deg,
    )
}

pub fn write_layout(layout: &FarmLayout, csv_path: &Path, config_path: &Path) -> Result<()> {
    let mut wtr = csv_writer(BufWriter::new(File::create(csv_path)?));
    wtr.write_record(["id", "easting_m", "northing_m", "row"])?;
    for i in 0..layout.len() {
        wtr.write_record([
            layout.turbine_ids[i].clone(),
            layout.positions[i].easting.to_string(),
            layout.positions[i].northing.to_string(),
            layout.row_of[i].to_string(),
        ])?;
    }
    wtr.flush()?;
    let text = toml::to_string(&layout.config()).map_err(|e| Error::Config(e.to_string()))?;
    std::fs::write(config_path, text)?;
    Ok(())
}

/// Loads any serde-deserializable TOML configuration file.
pub fn read_toml<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}
