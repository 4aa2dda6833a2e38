//! Comparison metrics between two reflected-field patterns and map export.
//!
//! Scalar field magnitude is always |E| = sqrt(|E_x|^2 + |E_y|^2).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::scenario::{DomainKind, ObservationDomain};
use crate::{Error, FieldVector, Result};

/// Where a sample lies: angles in degrees or floor coordinates in metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SampleLocation {
    Angular { theta_deg: f64, phi_deg: f64 },
    Floor { x_m: f64, y_m: f64 },
}

pub fn sample_location(obs: &ObservationDomain, index: usize) -> SampleLocation {
    match obs.angles(index) {
        Some((t, p)) => SampleLocation::Angular {
            theta_deg: t.to_degrees(),
            phi_deg: p.to_degrees(),
        },
        None => {
            let (x, y) = obs.floor_point(index).expect("floor plane");
            SampleLocation::Floor { x_m: x, y_m: y }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerMap {
    /// Fraction per sample, not percent.
    pub values: Vec<f64>,
    pub p_max: f64,
    pub peak_index: usize,
    pub peak: SampleLocation,
}

fn check_lengths(a: &FieldVector, b: &FieldVector, obs: &ObservationDomain) -> Result<()> {
    for len in [a.len(), b.len()] {
        if len != obs.len() {
            return Err(Error::Dimension {
                expected: obs.len(),
                found: len,
            });
        }
    }
    Ok(())
}

/// P = (|E'|^2 - |E''|^2) / max |E''|^2 per sample. The first maximum wins.
pub fn power_improvement_map(e_prime: &FieldVector, e_doubleprime: &FieldVector, obs: &ObservationDomain) -> Result<PowerMap> {
    check_lengths(e_prime, e_doubleprime, obs)?;
    let reference = (0..obs.len()).map(|i| e_doubleprime.magnitude_sq(i)).fold(0.0, f64::max);
    if !(reference > 0.0) {
        return Err(Error::Analysis("reference field is identically zero".into()));
    }
    let values: Vec<f64> = (0..obs.len())
        .map(|i| (e_prime.magnitude_sq(i) - e_doubleprime.magnitude_sq(i)) / reference)
        .collect();
    let (peak_index, p_max) = values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best });
    Ok(PowerMap {
        peak: sample_location(obs, peak_index),
        values,
        p_max,
        peak_index,
    })
}

/// 20 log10(|E'| / |E''|) at one sample.
pub fn delta_e_db(e_prime: &FieldVector, e_doubleprime: &FieldVector, sample: usize) -> Result<f64> {
    if sample >= e_prime.len() || sample >= e_doubleprime.len() {
        return Err(Error::Analysis(format!("sample {sample} out of range")));
    }
    let den = e_doubleprime.magnitude(sample);
    if !(den > 0.0) {
        return Err(Error::Analysis(format!("reference field vanishes at sample {sample}")));
    }
    Ok(20.0 * (e_prime.magnitude(sample) / den).log10())
}

fn nearest_column(phis: &[f64], phi: f64) -> Option<usize> {
    let mut best = (f64::INFINITY, 0);
    for (j, &p) in phis.iter().enumerate() {
        let d = (p - phi).abs();
        if d < best.0 {
            best = (d, j);
        }
    }
    let half_step = if phis.len() > 1 { (phis[1] - phis[0]).abs() / 2.0 } else { 0.0 };
    (best.0 <= half_step + 1e-9).then_some(best.1)
}

/// (theta, |E|) along the grid column nearest `phi_cut`, theta ascending.
///
/// When the grid also holds the column at phi_cut + pi, its samples appear with
/// negative theta.
pub fn field_cut(e: &FieldVector, obs: &ObservationDomain, phi_cut: f64) -> Result<Vec<(f64, f64)>> {
    let DomainKind::AngularGrid { thetas, phis } = &obs.kind else {
        return Err(Error::Analysis("field cuts need an angular observation grid".into()));
    };
    if e.len() != obs.len() {
        return Err(Error::Dimension {
            expected: obs.len(),
            found: e.len(),
        });
    }
    let col = nearest_column(phis, phi_cut)
        .ok_or_else(|| Error::Analysis(format!("cut at phi = {:.3} deg lies outside the grid", phi_cut.to_degrees())))?;
    let cols = phis.len();
    let mut cut: Vec<(f64, f64)> = thetas.iter().enumerate().map(|(r, &t)| (t, e.magnitude(r * cols + col))).collect();

    let phi = phis[col];
    let opposite = phis.iter().position(|&p| {
        let d = (p - phi).rem_euclid(2.0 * std::f64::consts::PI);
        (d - std::f64::consts::PI).abs() < 1e-9
    });
    if let Some(oc) = opposite {
        for (r, &t) in thetas.iter().enumerate() {
            if t > 0.0 {
                cut.push((-t, e.magnitude(r * cols + oc)));
            }
        }
    }
    cut.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(cut)
}

/// Mean |E|^2 over the samples where `mask` is true.
pub fn mean_power(e: &FieldVector, mask: &[bool]) -> Result<f64> {
    if mask.len() != e.len() {
        return Err(Error::Dimension {
            expected: e.len(),
            found: mask.len(),
        });
    }
    let (sum, n) = mask
        .iter()
        .enumerate()
        .filter(|(_, &m)| m)
        .fold((0.0, 0usize), |(s, n), (i, _)| (s + e.magnitude_sq(i), n + 1));
    if n == 0 {
        return Err(Error::Analysis("mask selects no samples".into()));
    }
    Ok(sum / n as f64)
}

/// A gridded real map: `values[r * cols.len() + c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MapGrid {
    pub row_label: String,
    pub col_label: String,
    pub rows: Vec<f64>,
    pub cols: Vec<f64>,
    pub values: Vec<f64>,
}

impl MapGrid {
    /// Angular axes in degrees, floor axes in metres.
    pub fn from_domain(obs: &ObservationDomain, values: Vec<f64>) -> Result<Self> {
        if values.len() != obs.len() {
            return Err(Error::Dimension {
                expected: obs.len(),
                found: values.len(),
            });
        }
        let (row_label, col_label, rows, cols) = match &obs.kind {
            DomainKind::AngularGrid { thetas, phis } => (
                "theta_deg",
                "phi_deg",
                thetas.iter().map(|t| t.to_degrees()).collect(),
                phis.iter().map(|p| p.to_degrees()).collect(),
            ),
            DomainKind::FloorPlane { xs, ys, .. } => ("y_m", "x_m", ys.clone(), xs.clone()),
        };
        Ok(Self {
            row_label: row_label.into(),
            col_label: col_label.into(),
            rows,
            cols,
            values,
        })
    }

    /// Header row `<row>\<col>,c1,c2,...`, then `r,v1,v2,...`; 15 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\\{}", self.row_label, self.col_label);
        for c in &self.cols {
            let _ = write!(out, ",{c:.14e}");
        }
        out.push('\n');
        for (r, row) in self.rows.iter().enumerate() {
            let _ = write!(out, "{row:.14e}");
            for v in &self.values[r * self.cols.len()..(r + 1) * self.cols.len()] {
                let _ = write!(out, ",{v:.14e}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |line: usize, m: &str| Error::Analysis(format!("map line {line}: {m}"));
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| bad(1, "empty map"))?;
        let mut fields = header.split(',');
        let corner = fields.next().unwrap_or_default();
        let (row_label, col_label) = corner.split_once('\\').ok_or_else(|| bad(1, "missing axis labels"))?;
        let parse = |s: &str, line: usize| s.trim().parse::<f64>().map_err(|_| bad(line, &format!("not a number: {s:?}")));
        let cols = fields.map(|f| parse(f, 1)).collect::<Result<Vec<_>>>()?;
        let mut rows = Vec::new();
        let mut values = Vec::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let mut f = line.split(',');
            rows.push(parse(f.next().unwrap_or_default(), i + 1)?);
            let row: Vec<f64> = f.map(|v| parse(v, i + 1)).collect::<Result<_>>()?;
            if row.len() != cols.len() {
                return Err(bad(i + 1, &format!("expected {} values, found {}", cols.len(), row.len())));
            }
            values.extend(row);
        }
        Ok(Self {
            row_label: row_label.into(),
            col_label: col_label.into(),
            rows,
            cols,
            values,
        })
    }
}

/// Sidecar written next to every exported map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapMeta {
    pub quantity: String,
    pub units: String,
    pub row_axis: String,
    pub col_axis: String,
    pub shape: [usize; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub peak: Option<SampleLocation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

/// `<dir>/<name>.meta.json` for a map at `<dir>/<name>.csv`.
pub fn meta_path(csv_path: &Path) -> PathBuf {
    let stem = csv_path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    csv_path.with_file_name(format!("{stem}.meta.json"))
}

pub fn write_map(map: &MapGrid, meta: &MapMeta, csv_path: impl AsRef<Path>) -> Result<()> {
    let csv_path = csv_path.as_ref();
    std::fs::write(csv_path, map.to_csv()).map_err(|e| Error::io(csv_path, e))?;
    let mpath = meta_path(csv_path);
    let text = serde_json::to_string_pretty(meta)?;
    std::fs::write(&mpath, text).map_err(|e| Error::io(&mpath, e))
}

pub fn read_map(csv_path: impl AsRef<Path>) -> Result<(MapGrid, MapMeta)> {
    let csv_path = csv_path.as_ref();
    let text = std::fs::read_to_string(csv_path).map_err(|e| Error::io(csv_path, e))?;
    let map = MapGrid::from_csv(&text)?;
    let mpath = meta_path(csv_path);
    let meta_text = std::fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    Ok((map, serde_json::from_str(&meta_text)?))
}

impl PowerMap {
    pub fn meta(&self, obs: &ObservationDomain, config_hash: Option<String>) -> MapMeta {
        let (rows, cols) = obs.shape();
        let grid = MapGrid::from_domain(obs, vec![0.0; obs.len()]).expect("matching length");
        MapMeta {
            quantity: "power_improvement".into(),
            units: "fraction".into(),
            row_axis: grid.row_label,
            col_axis: grid.col_label,
            shape: [rows, cols],
            p_max: Some(self.p_max),
            peak: Some(self.peak),
            config_hash,
        }
    }
}

/// |E| map with its sidecar.
pub fn magnitude_map(e: &FieldVector, obs: &ObservationDomain, config_hash: Option<String>) -> Result<(MapGrid, MapMeta)> {
    let grid = MapGrid::from_domain(obs, e.magnitudes())?;
    let (rows, cols) = obs.shape();
    let meta = MapMeta {
        quantity: "field_magnitude".into(),
        units: "relative".into(),
        row_axis: grid.row_label.clone(),
        col_axis: grid.col_label.clone(),
        shape: [rows, cols],
        p_max: None,
        peak: None,
        config_hash,
    };
    Ok((grid, meta))
}
