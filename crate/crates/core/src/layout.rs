//! Turbine positions and row structure of a farm.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub easting: f64,
    pub northing: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FarmLayout {
    pub turbine_ids: Vec<String>,
    pub positions: Vec<Position>,
    pub rotor_diameter: f64,
    pub row_of: Vec<usize>,
    /// Compass bearing perpendicular to the rows, degrees.
    pub row_orthogonal_bearing: f64,
}

/// Key-value part of a layout description (the CSV carries positions).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayoutConfig {
    pub rotor_diameter_m: f64,
    pub row_orthogonal_bearing_deg: f64,
}

/// Regular rectangular farm, rows of equally spaced turbines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub rows: usize,
    pub per_row: usize,
    pub row_spacing_m: f64,
    pub turbine_spacing_m: f64,
    pub rotor_diameter_m: f64,
    /// Bearing along which turbine numbers increase within a row.
    /// 90 gives rows running west to east, numbered from the west,
    /// with row 0 the northernmost.
    #[serde(default = "default_row_axis")]
    pub row_axis_bearing_deg: f64,
}

fn default_row_axis() -> f64 {
    90.0
}

impl GridSpec {
    /// 3 rows × 10 turbines, 550 m within rows, 600 m between rows, 120 m rotors.
    pub fn riffgat_like() -> Self {
        GridSpec {
            rows: 3,
            per_row: 10,
            row_spacing_m: 600.0,
            turbine_spacing_m: 550.0,
            rotor_diameter_m: 120.0,
            row_axis_bearing_deg: 90.0,
        }
    }
}

/// Unit vector (east, north) pointing towards a compass bearing.
pub fn bearing_vector(bearing_deg: f64) -> (f64, f64) {
    let r = bearing_deg.to_radians();
    (r.sin(), r.cos())
}

impl FarmLayout {
    pub fn new(
        turbine_ids: Vec<String>,
        positions: Vec<Position>,
        rotor_diameter: f64,
        row_of: Vec<usize>,
        row_orthogonal_bearing: f64,
    ) -> Result<Self> {
        let layout = FarmLayout {
            turbine_ids,
            positions,
            rotor_diameter,
            row_of,
            row_orthogonal_bearing: row_orthogonal_bearing.rem_euclid(360.0),
        };
        layout.validate()?;
        Ok(layout)
    }

    pub fn grid(spec: &GridSpec) -> Result<Self> {
        if spec.rows == 0 || spec.per_row == 0 {
            return Err(Error::Config(
                "grid needs at least one row and one turbine per row".into(),
            ));
        }
        let along = bearing_vector(spec.row_axis_bearing_deg);
        // rows advance 90° clockwise of the row axis
        let across = bearing_vector(spec.row_axis_bearing_deg + 90.0);
        let mut ids = Vec::new();
        let mut positions = Vec::new();
        let mut row_of = Vec::new();
        for r in 0..spec.rows {
            for c in 0..spec.per_row {
                let a = c as f64 * spec.turbine_spacing_m;
                let b = r as f64 * spec.row_spacing_m;
                ids.push(format!("T{:02}", ids.len() + 1));
                positions.push(Position {
                    easting: a * along.0 + b * across.0,
                    northing: a * along.1 + b * across.1,
                });
                row_of.push(r);
            }
        }
        FarmLayout::new(
            ids,
            positions,
            spec.rotor_diameter_m,
            row_of,
            spec.row_axis_bearing_deg - 90.0,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.turbine_ids.len();
        if n == 0 {
            return Err(Error::Config("layout has no turbines".into()));
        }
        if self.positions.len() != n || self.row_of.len() != n {
            return Err(Error::Config(
                "layout columns have different lengths".into(),
            ));
        }
        if !(self.rotor_diameter > 0.0) {
            return Err(Error::Config(format!(
                "rotor diameter must be positive, got {}",
                self.rotor_diameter
            )));
        }
        for i in 0..n {
            for j in i + 1..n {
                if self.turbine_ids[i] == self.turbine_ids[j] {
                    return Err(Error::Config(format!(
                        "duplicate turbine id `{}`",
                        self.turbine_ids[i]
                    )));
                }
                if self.positions[i] == self.positions[j] {
                    return Err(Error::Config(format!(
                        "turbines `{}` and `{}` share a position",
                        self.turbine_ids[i], self.turbine_ids[j]
                    )));
                }
            }
        }
        let rows = self.row_of.iter().max().map_or(0, |m| m + 1);
        for r in 0..rows {
            if !self.row_of.contains(&r) {
                return Err(Error::Config(format!(
                    "row indices are not contiguous (row {r} empty)"
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.turbine_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.turbine_ids.is_empty()
    }

    pub fn n_rows(&self) -> usize {
        self.row_of.iter().max().map_or(0, |m| m + 1)
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.turbine_ids.iter().position(|x| x == id)
    }

    /// Offset of turbine `j` relative to turbine `i` in wind-aligned
    /// coordinates for wind coming from `bearing_deg`: the first component
    /// is the distance upwind (positive when `j` is upwind of `i`), the
    /// second the signed lateral offset.
    pub fn wind_offset(&self, i: usize, j: usize, bearing_deg: f64) -> (f64, f64) {
        let (ue, un) = bearing_vector(bearing_deg);
        let de = self.positions[j].easting - self.positions[i].easting;
        let dn = self.positions[j].northing - self.positions[i].northing;
        let upwind = de * ue + dn * un;
        let lateral = de * un - dn * ue;
        (upwind, lateral)
    }

    pub fn config(&self) -> LayoutConfig {
        LayoutConfig {
            rotor_diameter_m: self.rotor_diameter,
            row_orthogonal_bearing_deg: self.row_orthogonal_bearing,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn riffgat_grid_is_numbered_row_major_from_north_west() {
        let l = FarmLayout::grid(&GridSpec::riffgat_like()).unwrap();
        assert_eq!(l.len(), 30);
        assert_eq!(l.n_rows(), 3);
        assert_eq!(l.turbine_ids[0], "T01");
        let p1 = l.positions[0];
        let p10 = l.positions[9];
        let p11 = l.positions[10];
        assert!((p10.easting - p1.easting - 9.0 * 550.0).abs() < 1e-9);
        assert!((p11.northing - p1.northing + 600.0).abs() < 1e-9);
        assert!(l.row_orthogonal_bearing.abs() < 1e-9);
    }

    #[test]
    fn wind_offset_from_north() {
        let l = FarmLayout::grid(&GridSpec::riffgat_like()).unwrap();
        // T01 sits 600 m north of T11: upwind for a northerly
        let (up, lat) = l.wind_offset(10, 0, 0.0);
        assert!((up - 600.0).abs() < 1e-9);
        assert!(lat.abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_layouts() {
        let p = Position {
            easting: 0.0,
            northing: 0.0,
        };
        assert!(FarmLayout::new(
            vec!["a".into(), "b".into()],
            vec![p, p],
            100.0,
            vec![0, 0],
            0.0
        )
        .is_err());
        let q = Position {
            easting: 1.0,
            northing: 0.0,
        };
        assert!(FarmLayout::new(
            vec!["a".into(), "b".into()],
            vec![p, q],
            0.0,
            vec![0, 0],
            0.0
        )
        .is_err());
        assert!(FarmLayout::new(
            vec!["a".into(), "b".into()],
            vec![p, q],
            90.0,
            vec![0, 2],
            0.0
        )
        .is_err());
        assert!(FarmLayout::new(
            vec!["a".into(), "b".into()],
            vec![p, q],
            90.0,
            vec![0, 1],
            0.0
        )
        .is_ok());
    }
}
