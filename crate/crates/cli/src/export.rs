//! Plot-ready exports of correlation matrices.

use std::io::Write;

use anyhow::Result;
use nalgebra::DMatrix;
use windcorr_core::io::format_sig15;

#[derive(Debug, Clone, PartialEq)]
pub struct HeatCell {
    pub row: String,
    pub col: String,
    pub value: f64,
}

/// Long format, row-major: one cell per `(row, col)` pair.
pub fn export_heatmap_data(ids: &[String], m: &DMatrix<f64>) -> Vec<HeatCell> {
    let mut out = Vec::with_capacity(m.len());
    for (i, r) in ids.iter().enumerate() {
        for (j, c) in ids.iter().enumerate() {
            out.push(HeatCell {
                row: r.clone(),
                col: c.clone(),
                value: m[(i, j)],
            });
        }
    }
    out
}

pub fn write_heatmap_csv(cells: &[HeatCell], w: &mut dyn Write) -> Result<()> {
    writeln!(w, "row,col,value")?;
    for c in cells {
        writeln!(w, "{},{},{}", c.row, c.col, format_sig15(c.value))?;
    }
    Ok(())
}

/// Diverging map: −1 blue (0,0,255), 0 white, +1 red (255,0,0), linear in
/// between; values outside [−1, 1] are clamped and NaN renders black.
pub fn diverging_rgb(v: f64) -> [u8; 3] {
    if v.is_nan() {
        return [0, 0, 0];
    }
    let v = v.clamp(-1.0, 1.0);
    let fade = |x: f64| (255.0 * (1.0 - x.abs())).round() as u8;
    if v < 0.0 {
        [fade(v), fade(v), 255]
    } else {
        [255, fade(v), fade(v)]
    }
}

/// Binary PPM (P6), `scale`×`scale` pixels per matrix cell, row 0 at the top.
pub fn write_ppm(m: &DMatrix<f64>, scale: usize, w: &mut dyn Write) -> Result<()> {
    let scale = scale.max(1);
    let (h, wd) = (m.nrows() * scale, m.ncols() * scale);
    write!(w, "P6\n{wd} {h}\n255\n")?;
    let mut line = Vec::with_capacity(wd * 3);
    for i in 0..m.nrows() {
        line.clear();
        for j in 0..m.ncols() {
            let px = diverging_rgb(m[(i, j)]);
            for _ in 0..scale {
                line.extend_from_slice(&px);
            }
        }
        for _ in 0..scale {
            w.write_all(&line)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (1..=n).map(|i| format!("T{i:02}")).collect()
    }

    #[test]
    fn identity_gives_four_rows() {
        let cells = export_heatmap_data(&ids(2), &DMatrix::identity(2, 2));
        assert_eq!(
            cells.iter().map(|c| c.value).collect::<Vec<_>>(),
            vec![1.0, 0.0, 0.0, 1.0]
        );
        assert_eq!(
            (cells[1].row.as_str(), cells[1].col.as_str()),
            ("T01", "T02")
        );
    }

    #[test]
    fn thirty_turbines_give_900_rows() {
        let mut buf = Vec::new();
        write_heatmap_csv(
            &export_heatmap_data(&ids(30), &DMatrix::identity(30, 30)),
            &mut buf,
        )
        .unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 901);
    }

    #[test]
    fn colour_map_endpoints() {
        assert_eq!(diverging_rgb(-1.0), [0, 0, 255]);
        assert_eq!(diverging_rgb(0.0), [255, 255, 255]);
        assert_eq!(diverging_rgb(1.0), [255, 0, 0]);
        assert_eq!(diverging_rgb(-5.0), [0, 0, 255]);
        assert_eq!(diverging_rgb(0.5), [255, 128, 128]);
    }

    #[test]
    fn ppm_layout() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]);
        let mut buf = Vec::new();
        write_ppm(&m, 2, &mut buf).unwrap();
        let header = b"P6\n4 4\n255\n";
        assert!(buf.starts_with(header));
        let px = &buf[header.len()..];
        assert_eq!(px.len(), 4 * 4 * 3);
        assert_eq!(&px[6..9], &[0, 0, 255]);
        assert_eq!(&px[0..3], &[255, 0, 0]);
    }
}
