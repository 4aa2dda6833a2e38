//! Meta-atom reflection database and the equivalent current an atom carries.
//!
//! A database is a table of (descriptor, reflection matrix) entries for a single
//! substrate and incidence. Entries come either from a CSV file produced by an
//! external unit-cell solver or from the parametric [`SubstrateModel`].

use std::cmp::Ordering;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::scenario::{incident_field_at, IncidentWave, PolarizationBasis};
use crate::{Complex64, Error, Result};

/// Free-space intrinsic impedance in ohm.
pub const ZETA0: f64 = 376.730_313_668;

/// Inkjet printing resolution used to quantize patch sides.
pub const DEFAULT_PRINT_STEP_M: f64 = 1e-4;

pub const CSV_HEADER: &str = "d_m,gamma_te_re,gamma_te_im,gamma_tm_re,gamma_tm_im";

const PASSIVITY_SLACK: f64 = 1e-12;

/// Geometric descriptors of one meta-atom. Only the patch side is used here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomDescriptor {
    pub values: Vec<f64>,
}

impl AtomDescriptor {
    pub fn side(side_m: f64) -> Self {
        Self { values: vec![side_m] }
    }

    pub fn patch_side(&self) -> f64 {
        self.values[0]
    }

    fn cmp(&self, other: &Self) -> Ordering {
        for (a, b) in self.values.iter().zip(&other.values) {
            match a.total_cmp(b) {
                Ordering::Equal => continue,
                ord => return ord,
            }
        }
        self.values.len().cmp(&other.values.len())
    }
}

/// Diagonal local reflection matrix in the (TE, TM) basis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReflectionMatrix {
    pub gamma_te: Complex64,
    pub gamma_tm: Complex64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AtomEntry {
    pub descriptor: AtomDescriptor,
    pub reflection: ReflectionMatrix,
}

/// Incidence a database was characterized for.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IncidenceKey {
    pub theta_inc_rad: f64,
    pub phi_inc_rad: f64,
    pub frequency_hz: f64,
}

impl From<&IncidentWave> for IncidenceKey {
    fn from(w: &IncidentWave) -> Self {
        Self {
            theta_inc_rad: w.theta_inc_rad,
            phi_inc_rad: w.phi_inc_rad,
            frequency_hz: w.frequency_hz,
        }
    }
}

/// Sorted, immutable reflection table.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomDatabase {
    pub incidence: IncidenceKey,
    pub cell_size_m: f64,
    entries: Vec<AtomEntry>,
}

impl AtomDatabase {
    pub fn new(incidence: IncidenceKey, cell_size_m: f64, entries: Vec<AtomEntry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Database("empty database".into()));
        }
        if entries.len() < 2 {
            return Err(Error::Database("a database needs at least two entries".into()));
        }
        for (i, e) in entries.iter().enumerate() {
            check_entry(e, cell_size_m).map_err(|m| Error::Database(format!("entry {i}: {m}")))?;
            if i > 0 && entries[i - 1].descriptor.cmp(&e.descriptor) != Ordering::Less {
                return Err(Error::Database(format!("entry {i}: descriptors must be strictly increasing")));
            }
        }
        Ok(Self {
            incidence,
            cell_size_m,
            entries,
        })
    }

    pub fn entries(&self) -> &[AtomEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Exact-match lookup of a descriptor.
    pub fn index_of(&self, d: &AtomDescriptor) -> Result<usize> {
        self.entries
            .binary_search_by(|e| e.descriptor.cmp(d))
            .map_err(|_| Error::Lookup(d.values.clone()))
    }

    pub fn lookup(&self, d: &AtomDescriptor) -> Result<&ReflectionMatrix> {
        self.index_of(d).map(|i| &self.entries[i].reflection)
    }

    /// Snaps a patch side to the nearest tabulated descriptor (ties go low).
    pub fn quantize(&self, side_m: f64) -> AtomDescriptor {
        let idx = self.entries.partition_point(|e| e.descriptor.patch_side() < side_m);
        let pick = if idx == 0 {
            0
        } else if idx == self.entries.len() {
            idx - 1
        } else {
            let lo = self.entries[idx - 1].descriptor.patch_side();
            let hi = self.entries[idx].descriptor.patch_side();
            if side_m - lo <= hi - side_m {
                idx - 1
            } else {
                idx
            }
        };
        self.entries[pick].descriptor.clone()
    }

    /// Minimum |Gamma_TE| over all entries in dB.
    pub fn min_te_magnitude_db(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| 20.0 * e.reflection.gamma_te.norm().log10())
            .fold(f64::INFINITY, f64::min)
    }
}

fn check_entry(e: &AtomEntry, cell_size_m: f64) -> std::result::Result<(), String> {
    if e.descriptor.values.is_empty() {
        return Err("descriptor has no values".into());
    }
    for &v in &e.descriptor.values {
        if !v.is_finite() || v < 0.0 || v > cell_size_m {
            return Err(format!("descriptor {v} outside [0, {cell_size_m}]"));
        }
    }
    let r = &e.reflection;
    for g in [r.gamma_te, r.gamma_tm] {
        if !(g.re.is_finite() && g.im.is_finite()) {
            return Err("reflection coefficient is not finite".into());
        }
        if g.norm() > 1.0 + PASSIVITY_SLACK {
            return Err(format!("|gamma| = {} violates passivity", g.norm()));
        }
    }
    Ok(())
}

/// Parametric single-layer patch response.
///
/// |Gamma| in dB follows a Lorentzian dip around `resonance_d_m`; the phase is an
/// arctangent sigmoid centred on the same point, rescaled so that it descends by
/// exactly `phase_span_rad` over the tabulated range. The phase origin is the
/// reflection phase of the bare grounded slab.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubstrateModel {
    pub name: String,
    pub eps_r: f64,
    pub tan_delta: f64,
    pub thickness_m: f64,
    pub resonance_d_m: f64,
    pub dip_db: f64,
    pub dip_width_m: f64,
    /// Sigmoid width of the phase response; `None` reuses `dip_width_m`.
    #[serde(default)]
    pub phase_width_m: Option<f64>,
    pub phase_span_rad: f64,
    pub floor_loss_db: f64,
}

impl SubstrateModel {
    /// Conductive ink on a paper substrate.
    pub fn paper() -> Self {
        Self {
            name: "paper".into(),
            eps_r: 3.2,
            tan_delta: 7.7e-2,
            thickness_m: 2.08e-3,
            resonance_d_m: 1.4e-3,
            dip_db: -23.5,
            dip_width_m: 2.5e-3,
            phase_width_m: Some(8e-3),
            phase_span_rad: 300f64.to_radians(),
            floor_loss_db: -1.2,
        }
    }

    /// ISOLA 370HR laminate.
    pub fn isola() -> Self {
        Self {
            name: "isola".into(),
            eps_r: 3.92,
            tan_delta: 2.5e-2,
            thickness_m: 7.11e-4,
            resonance_d_m: 1.4e-3,
            dip_db: -11.6,
            dip_width_m: 2.5e-3,
            phase_width_m: Some(8e-3),
            phase_span_rad: 330f64.to_radians(),
            floor_loss_db: -0.3,
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "paper" => Some(Self::paper()),
            "isola" => Some(Self::isola()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Substrate(format!("{}: {m}", self.name)));
        if !(self.eps_r.is_finite() && self.eps_r >= 1.0) {
            return bad(format!("eps_r = {} must be >= 1", self.eps_r));
        }
        if !(self.tan_delta.is_finite() && self.tan_delta >= 0.0) {
            return bad(format!("tan_delta = {} must be >= 0", self.tan_delta));
        }
        if !(self.thickness_m.is_finite() && self.thickness_m > 0.0) {
            return bad(format!("thickness = {} must be positive", self.thickness_m));
        }
        if !self.resonance_d_m.is_finite() {
            return bad("resonance must be finite".into());
        }
        if !(self.dip_db <= self.floor_loss_db && self.floor_loss_db <= 0.0) {
            return bad(format!(
                "need dip_db <= floor_loss_db <= 0, got {} and {}",
                self.dip_db, self.floor_loss_db
            ));
        }
        if !(self.dip_width_m.is_finite() && self.dip_width_m > 0.0) {
            return bad(format!("dip width = {} must be positive", self.dip_width_m));
        }
        if let Some(w) = self.phase_width_m {
            if !(w.is_finite() && w > 0.0) {
                return bad(format!("phase width = {w} must be positive"));
            }
        }
        if !(self.phase_span_rad > 0.0 && self.phase_span_rad < 2.0 * PI) {
            return bad(format!(
                "phase span {} rad must lie in (0, 2 pi) for a monotone, non-wrapping response",
                self.phase_span_rad
            ));
        }
        Ok(())
    }

    /// Reflection of the bare grounded slab at normal incidence.
    pub fn grounded_slab_reflection(&self, frequency_hz: f64) -> Complex64 {
        let k0 = 2.0 * PI * frequency_hz / crate::scenario::SPEED_OF_LIGHT;
        let eps = Complex64::new(self.eps_r, -self.eps_r * self.tan_delta);
        let n = eps.sqrt();
        let z_in = Complex64::i() * (ZETA0 / n) * (n * k0 * self.thickness_m).tan();
        (z_in - ZETA0) / (z_in + ZETA0)
    }

    pub fn magnitude_db(&self, d: f64) -> f64 {
        let x = (d - self.resonance_d_m) / self.dip_width_m;
        self.floor_loss_db + (self.dip_db - self.floor_loss_db) / (1.0 + x * x)
    }

    fn sigmoid(&self, d: f64) -> f64 {
        ((d - self.resonance_d_m) / self.phase_width_m.unwrap_or(self.dip_width_m)).atan()
    }
}

/// Tabulates a substrate model on {0, step, 2 step, ...} up to the cell size.
pub fn generate_synthetic_db(model: &SubstrateModel, cell_size_m: f64, step_m: f64, incidence: IncidenceKey) -> Result<AtomDatabase> {
    model.validate()?;
    if !(step_m > 0.0 && step_m < cell_size_m) {
        return Err(Error::Database(format!(
            "step {step_m} must satisfy 0 < step < cell size {cell_size_m}"
        )));
    }
    let count = (cell_size_m / step_m + 1e-9).floor() as usize + 1;
    let sides: Vec<f64> = (0..count).map(|i| i as f64 * step_m).collect();
    let d_last = sides[count - 1];
    let origin = model.grounded_slab_reflection(incidence.frequency_hz).arg();
    let s0 = model.sigmoid(0.0);
    let s1 = model.sigmoid(d_last);
    let entries = sides
        .into_iter()
        .map(|d| {
            let magnitude = 10f64.powf(model.magnitude_db(d) / 20.0);
            let phase = origin - model.phase_span_rad * (model.sigmoid(d) - s0) / (s1 - s0);
            let gamma = Complex64::from_polar(magnitude, phase);
            AtomEntry {
                descriptor: AtomDescriptor::side(d),
                reflection: ReflectionMatrix {
                    gamma_te: gamma,
                    gamma_tm: gamma,
                },
            }
        })
        .collect();
    AtomDatabase::new(incidence, cell_size_m, entries)
}

/// Writes the database CSV (shortest round-trip float formatting).
pub fn save_db(db: &AtomDatabase, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, db_to_csv(db)).map_err(|e| Error::io(path, e))
}

pub fn db_to_csv(db: &AtomDatabase) -> String {
    let mut out = String::with_capacity(64 * (db.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for e in db.entries() {
        let r = &e.reflection;
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            e.descriptor.patch_side(),
            r.gamma_te.re,
            r.gamma_te.im,
            r.gamma_tm.re,
            r.gamma_tm.im
        );
    }
    out
}

/// Reads a database CSV written by [`save_db`] or an external solver.
pub fn load_db(path: impl AsRef<Path>, cell_size_m: f64, incidence: IncidenceKey) -> Result<AtomDatabase> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_db(&text, path, cell_size_m, incidence)
}

pub fn parse_db(text: &str, path: &Path, cell_size_m: f64, incidence: IncidenceKey) -> Result<AtomDatabase> {
    let parse_err = |line: usize, message: String| Error::DatabaseParse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let Some((hline, header)) = lines.next() else {
        return Err(Error::Database("empty database".into()));
    };
    if header.trim() != CSV_HEADER {
        return Err(parse_err(hline + 1, format!("expected header `{CSV_HEADER}`")));
    }
    let mut entries: Vec<AtomEntry> = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 5 {
            return Err(parse_err(lineno, format!("expected 5 fields, found {}", fields.len())));
        }
        let mut vals = [0.0; 5];
        for (slot, f) in vals.iter_mut().zip(&fields) {
            *slot = f.parse::<f64>().map_err(|_| parse_err(lineno, format!("`{f}` is not a number")))?;
        }
        let entry = AtomEntry {
            descriptor: AtomDescriptor::side(vals[0]),
            reflection: ReflectionMatrix {
                gamma_te: Complex64::new(vals[1], vals[2]),
                gamma_tm: Complex64::new(vals[3], vals[4]),
            },
        };
        check_entry(&entry, cell_size_m).map_err(|m| parse_err(lineno, m))?;
        if let Some(prev) = entries.last() {
            match prev.descriptor.cmp(&entry.descriptor) {
                Ordering::Less => {}
                Ordering::Equal => return Err(parse_err(lineno, format!("duplicate descriptor {}", vals[0]))),
                Ordering::Greater => return Err(parse_err(lineno, format!("descriptor {} is not ascending", vals[0]))),
            }
        }
        entries.push(entry);
    }
    if entries.is_empty() {
        return Err(Error::Database("empty database".into()));
    }
    AtomDatabase::new(incidence, cell_size_m, entries)
}

/// Transverse equivalent current of an atom with reflection `gamma` at `r`.
///
/// The reflected tangential field is E_r = Gamma . E_inc and its magnetic field
/// travels along the specular direction k_r:
///
/// J^e = (1/zeta0) z x (k_r x E_r),  J^m = -z x E_r,  J = z x [zeta0 z x J^e + J^m].
pub fn current_for_reflection(
    gamma: &ReflectionMatrix,
    wave: &IncidentWave,
    basis: &PolarizationBasis,
    r: &Vector3<f64>,
) -> [Complex64; 2] {
    let einc = incident_field_at(wave, basis, r);
    // Gamma acts diagonally on the TE / TM projections of the incident field.
    let project = |e: &Vector3<f64>| einc.iter().enumerate().map(|(i, c)| c * e[i]).sum::<Complex64>();
    let te = gamma.gamma_te * project(&basis.e_te);
    let tm = gamma.gamma_tm * project(&basis.e_tm);
    let er: [Complex64; 3] = std::array::from_fn(|i| te * basis.e_te[i] + tm * basis.e_tm[i]);

    let mut k_r = -wave.wave_vector().normalize();
    k_r.x = -k_r.x;
    k_r.y = -k_r.y;
    let z = Vector3::z();

    let kxe = cross_rc(&k_r, &er);
    let je: [Complex64; 3] = cross_rc(&z, &kxe).map(|c| c / ZETA0);
    let jm: [Complex64; 3] = cross_rc(&z, &er).map(|c| -c);
    let zj = cross_rc(&z, &je);
    let inner: [Complex64; 3] = std::array::from_fn(|i| zj[i] * ZETA0 + jm[i]);
    let j = cross_rc(&z, &inner);
    [j[0], j[1]]
}

fn cross_rc(a: &Vector3<f64>, b: &[Complex64; 3]) -> [Complex64; 3] {
    [b[2] * a.y - b[1] * a.z, b[0] * a.z - b[2] * a.x, b[1] * a.x - b[0] * a.y]
}

/// Current induced at `r_pq` by the atom with descriptor `d`.
pub fn induced_current(
    d: &AtomDescriptor,
    db: &AtomDatabase,
    wave: &IncidentWave,
    basis: &PolarizationBasis,
    r_pq: &Vector3<f64>,
) -> Result<[Complex64; 2]> {
    let gamma = db.lookup(d)?;
    Ok(current_for_reflection(gamma, wave, basis, r_pq))
}
