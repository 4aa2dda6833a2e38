//! Problem geometry: incident plane wave, skin lattice and observation domain.
//!
//! Coordinates are centred on the skin: the lattice lies in the plane z = h with
//! its centre above the origin and outward normal +z. Local atom offsets (used by
//! the radiation kernel) drop the common height.

use std::f64::consts::PI;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::{Complex64, Error, Result};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Relative tolerance under which k x z is treated as vanishing.
const NORMAL_INCIDENCE_EPS: f64 = 1e-12;

/// Incident plane wave.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncidentWave {
    pub frequency_hz: f64,
    pub theta_inc_rad: f64,
    pub phi_inc_rad: f64,
    pub e_te: Complex64,
    pub e_tm: Complex64,
}

impl IncidentWave {
    pub fn new(frequency_hz: f64, theta_inc_rad: f64, phi_inc_rad: f64, e_te: Complex64, e_tm: Complex64) -> Result<Self> {
        if !(frequency_hz.is_finite() && frequency_hz > 0.0) {
            return Err(Error::Scenario(format!("frequency must be positive, got {frequency_hz}")));
        }
        if !(theta_inc_rad.is_finite() && phi_inc_rad.is_finite()) {
            return Err(Error::Scenario("incidence angles must be finite".into()));
        }
        Ok(Self {
            frequency_hz,
            theta_inc_rad,
            phi_inc_rad,
            e_te,
            e_tm,
        })
    }

    /// Broadside TE illumination with unit amplitude.
    pub fn broadside_te(frequency_hz: f64) -> Self {
        Self {
            frequency_hz,
            theta_inc_rad: 0.0,
            phi_inc_rad: 0.0,
            e_te: Complex64::new(1.0, 0.0),
            e_tm: Complex64::new(0.0, 0.0),
        }
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.frequency_hz
    }

    pub fn k0(&self) -> f64 {
        2.0 * PI * self.frequency_hz / SPEED_OF_LIGHT
    }

    pub fn wave_vector(&self) -> Vector3<f64> {
        wave_vector(self.theta_inc_rad, self.phi_inc_rad, self.k0())
    }

    pub fn basis(&self) -> PolarizationBasis {
        polarization_basis(&self.wave_vector())
    }
}

/// Incident wave vector k_inc = -k0 (sin t cos p, sin t sin p, cos t).
pub fn wave_vector(theta_inc: f64, phi_inc: f64, k0: f64) -> Vector3<f64> {
    let (st, ct) = theta_inc.sin_cos();
    let (sp, cp) = phi_inc.sin_cos();
    -k0 * Vector3::new(st * cp, st * sp, ct)
}

/// TE / TM unit vectors of an incident wave.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarizationBasis {
    pub e_te: Vector3<f64>,
    pub e_tm: Vector3<f64>,
}

impl PolarizationBasis {
    /// In-plane (x, y) direction of the TE unit vector, normalized.
    ///
    /// This is the polarization carried by TE-driven currents and targets.
    pub fn te_transverse(&self) -> [Complex64; 2] {
        transverse_unit(&self.e_te).unwrap_or([Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)])
    }
}

fn transverse_unit(v: &Vector3<f64>) -> Option<[Complex64; 2]> {
    let n = (v.x * v.x + v.y * v.y).sqrt();
    (n > 1e-12).then(|| [Complex64::new(v.x / n, 0.0), Complex64::new(v.y / n, 0.0)])
}

/// e_te = (k x z)/|k x z|, e_tm = (e_te x k)/|e_te x k|.
///
/// At normal incidence k x z vanishes; the phi_inc = 0 limit is returned, i.e.
/// e_te = +y and e_tm = -x, which keeps the basis continuous along phi_inc = 0.
pub fn polarization_basis(k_inc: &Vector3<f64>) -> PolarizationBasis {
    let k_norm = k_inc.norm();
    let cross = k_inc.cross(&Vector3::z());
    let e_te = if cross.norm() <= NORMAL_INCIDENCE_EPS * k_norm {
        Vector3::y()
    } else {
        cross.normalize()
    };
    let e_tm = e_te.cross(k_inc).normalize();
    PolarizationBasis { e_te, e_tm }
}

/// E_inc(r) = (E_TE e_te + E_TM e_tm) exp(-j k_inc . r).
pub fn incident_field_at(wave: &IncidentWave, basis: &PolarizationBasis, r: &Vector3<f64>) -> [Complex64; 3] {
    let phase = Complex64::from_polar(1.0, -wave.wave_vector().dot(r));
    let mut out = [Complex64::new(0.0, 0.0); 3];
    for (i, slot) in out.iter_mut().enumerate() {
        *slot = (wave.e_te * basis.e_te[i] + wave.e_tm * basis.e_tm[i]) * phase;
    }
    out
}

/// Regular P x Q lattice of meta-atoms with spacing `cell_size_m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmsGrid {
    pub p_count: usize,
    pub q_count: usize,
    pub cell_size_m: f64,
    pub center_height_m: f64,
}

impl EmsGrid {
    pub fn new(p_count: usize, q_count: usize, cell_size_m: f64, center_height_m: f64) -> Result<Self> {
        if p_count == 0 || q_count == 0 {
            return Err(Error::Scenario("grid counts must be positive".into()));
        }
        if !(cell_size_m.is_finite() && cell_size_m > 0.0) {
            return Err(Error::Scenario(format!("cell size must be positive, got {cell_size_m}")));
        }
        if !center_height_m.is_finite() {
            return Err(Error::Scenario("center height must be finite".into()));
        }
        Ok(Self {
            p_count,
            q_count,
            cell_size_m,
            center_height_m,
        })
    }

    pub fn atom_count(&self) -> usize {
        self.p_count * self.q_count
    }

    pub fn aperture_area(&self) -> f64 {
        self.p_count as f64 * self.cell_size_m * self.q_count as f64 * self.cell_size_m
    }

    /// Row-major flat index of atom (p, q).
    pub fn index(&self, p: usize, q: usize) -> usize {
        p * self.q_count + q
    }

    /// Atom centre relative to the skin centre (z = 0).
    pub fn atom_offset(&self, index: usize) -> Vector3<f64> {
        let p = index / self.q_count;
        let q = index % self.q_count;
        let x = (p as f64 - (self.p_count as f64 - 1.0) / 2.0) * self.cell_size_m;
        let y = (q as f64 - (self.q_count as f64 - 1.0) / 2.0) * self.cell_size_m;
        Vector3::new(x, y, 0.0)
    }

    /// Absolute atom centre r_pq in the z = h plane.
    pub fn atom_center(&self, index: usize) -> Vector3<f64> {
        let mut r = self.atom_offset(index);
        r.z = self.center_height_m;
        r
    }
}

/// Sampling description of the observation domain.
///
/// Angular grids use inclusive endpoints; a count of one collapses the range to its
/// lower bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObservationSpec {
    AngularGrid {
        theta_min_deg: f64,
        theta_max_deg: f64,
        theta_count: usize,
        phi_min_deg: f64,
        phi_max_deg: f64,
        phi_count: usize,
    },
    FloorPlane {
        x_min_m: f64,
        x_max_m: f64,
        y_min_m: f64,
        y_max_m: f64,
        x_count: usize,
        y_count: usize,
        #[serde(default)]
        floor_height_m: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservationSample {
    /// Position relative to the skin centre (unit radius for angular grids).
    pub position: Vector3<f64>,
    /// Distance used in the spherical spreading factor.
    pub distance: f64,
    pub direction: Vector3<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DomainKind {
    /// Rows are theta values, columns are phi values (radians).
    AngularGrid { thetas: Vec<f64>, phis: Vec<f64> },
    /// Rows are y values, columns are x values (metres).
    FloorPlane { xs: Vec<f64>, ys: Vec<f64>, floor_height_m: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationDomain {
    pub kind: DomainKind,
    pub samples: Vec<ObservationSample>,
}

fn linspace(min: f64, max: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![min];
    }
    let step = (max - min) / (count - 1) as f64;
    (0..count).map(|i| min + step * i as f64).collect()
}

fn check_range(name: &str, min: f64, max: f64, count: usize) -> Result<()> {
    if count == 0 {
        return Err(Error::Scenario(format!("{name} count must be at least 1")));
    }
    if !(min.is_finite() && max.is_finite()) || max < min {
        return Err(Error::Scenario(format!("{name} range [{min}, {max}] is empty or not finite")));
    }
    if count > 1 && max == min {
        return Err(Error::Scenario(format!("{name} range is degenerate for {count} samples")));
    }
    Ok(())
}

/// Builds the sample list of an observation domain, row-major.
pub fn build_observation(spec: &ObservationSpec, grid: &EmsGrid) -> Result<ObservationDomain> {
    match *spec {
        ObservationSpec::AngularGrid {
            theta_min_deg,
            theta_max_deg,
            theta_count,
            phi_min_deg,
            phi_max_deg,
            phi_count,
        } => {
            check_range("theta", theta_min_deg, theta_max_deg, theta_count)?;
            check_range("phi", phi_min_deg, phi_max_deg, phi_count)?;
            if theta_min_deg < 0.0 || theta_max_deg > 90.0 {
                return Err(Error::Scenario(format!(
                    "theta range [{theta_min_deg}, {theta_max_deg}] deg leaves the reflection half-space [0, 90]"
                )));
            }
            let thetas: Vec<f64> = linspace(theta_min_deg, theta_max_deg, theta_count)
                .into_iter()
                .map(f64::to_radians)
                .collect();
            let phis: Vec<f64> = linspace(phi_min_deg, phi_max_deg, phi_count)
                .into_iter()
                .map(f64::to_radians)
                .collect();
            let mut samples = Vec::with_capacity(thetas.len() * phis.len());
            for &theta in &thetas {
                for &phi in &phis {
                    let direction = direction_from_angles(theta, phi);
                    samples.push(ObservationSample {
                        position: direction,
                        distance: 1.0,
                        direction,
                    });
                }
            }
            Ok(ObservationDomain {
                kind: DomainKind::AngularGrid { thetas, phis },
                samples,
            })
        }
        ObservationSpec::FloorPlane {
            x_min_m,
            x_max_m,
            y_min_m,
            y_max_m,
            x_count,
            y_count,
            floor_height_m,
        } => {
            check_range("x", x_min_m, x_max_m, x_count)?;
            check_range("y", y_min_m, y_max_m, y_count)?;
            let drop = grid.center_height_m - floor_height_m;
            if !(drop > 0.0) {
                return Err(Error::Scenario(format!(
                    "skin centre height {} must be above the floor at {floor_height_m}",
                    grid.center_height_m
                )));
            }
            let xs = linspace(x_min_m, x_max_m, x_count);
            let ys = linspace(y_min_m, y_max_m, y_count);
            let mut samples = Vec::with_capacity(xs.len() * ys.len());
            for &y in &ys {
                for &x in &xs {
                    // The skin faces the floor; only transverse direction cosines
                    // enter the kernel, so the sign of the z component is immaterial.
                    let position = Vector3::new(x, y, -drop);
                    let distance = position.norm();
                    samples.push(ObservationSample {
                        position,
                        distance,
                        direction: position / distance,
                    });
                }
            }
            Ok(ObservationDomain {
                kind: DomainKind::FloorPlane { xs, ys, floor_height_m },
                samples,
            })
        }
    }
}

pub fn direction_from_angles(theta: f64, phi: f64) -> Vector3<f64> {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    Vector3::new(st * cp, st * sp, ct)
}

impl ObservationDomain {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// (rows, columns) of the sample grid.
    pub fn shape(&self) -> (usize, usize) {
        match &self.kind {
            DomainKind::AngularGrid { thetas, phis } => (thetas.len(), phis.len()),
            DomainKind::FloorPlane { xs, ys, .. } => (ys.len(), xs.len()),
        }
    }

    /// (theta, phi) of sample `index` for angular grids.
    pub fn angles(&self, index: usize) -> Option<(f64, f64)> {
        match &self.kind {
            DomainKind::AngularGrid { thetas, phis } => Some((thetas[index / phis.len()], phis[index % phis.len()])),
            DomainKind::FloorPlane { .. } => None,
        }
    }

    /// (x, y) floor coordinates of sample `index` for floor planes.
    pub fn floor_point(&self, index: usize) -> Option<(f64, f64)> {
        match &self.kind {
            DomainKind::FloorPlane { xs, ys, .. } => Some((xs[index % xs.len()], ys[index / xs.len()])),
            DomainKind::AngularGrid { .. } => None,
        }
    }
}

/// Full problem statement.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub wave: IncidentWave,
    pub grid: EmsGrid,
    pub observation: ObservationDomain,
}

impl Scenario {
    pub fn new(wave: IncidentWave, grid: EmsGrid, observation: &ObservationSpec) -> Result<Self> {
        let observation = build_observation(observation, &grid)?;
        Ok(Self { wave, grid, observation })
    }
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    use super::*;

    const F: f64 = 5.5e9;

    fn k0() -> f64 {
        2.0 * PI * F / SPEED_OF_LIGHT
    }

    #[test]
    fn broadside_wave_vector_points_down() {
        let k = wave_vector(0.0, 0.0, k0());
        assert_abs_diff_eq!(k, Vector3::new(0.0, 0.0, -k0()), epsilon = 1e-12);
    }

    #[test]
    fn grazing_wave_vector_along_minus_x() {
        let k = wave_vector(PI / 2.0, 0.0, k0());
        assert_abs_diff_eq!(k / k0(), Vector3::new(-1.0, 0.0, 0.0), epsilon = 1e-15);
    }

    #[test]
    fn oblique_wave_vector_matches_hand_values() {
        let k = wave_vector(30f64.to_radians(), (-45f64).to_radians(), k0()) / k0();
        assert_abs_diff_eq!(
            k,
            Vector3::new(-0.353_553_390_593_273_8, 0.353_553_390_593_273_8, -0.866_025_403_784_438_6),
            epsilon = 1e-12
        );
    }

    #[test]
    fn normal_incidence_basis_is_the_phi_zero_limit() {
        let b = polarization_basis(&wave_vector(0.0, 0.0, k0()));
        assert_eq!(b.e_te, Vector3::y());
        assert_abs_diff_eq!(b.e_tm, -Vector3::x(), epsilon = 1e-15);
        let near = polarization_basis(&wave_vector(1e-7, 0.0, k0()));
        assert_abs_diff_eq!(near.e_te, b.e_te, epsilon = 1e-6);
        assert_abs_diff_eq!(near.e_tm, b.e_tm, epsilon = 1e-6);
    }

    #[test]
    fn grazing_basis_along_minus_x() {
        let b = polarization_basis(&Vector3::new(-k0(), 0.0, 0.0));
        assert_abs_diff_eq!(b.e_te, Vector3::y(), epsilon = 1e-15);
        assert_abs_diff_eq!(b.e_tm, Vector3::z(), epsilon = 1e-15);
    }

    #[test]
    fn broadside_incident_field_has_unit_magnitude_and_equal_phase() {
        let wave = IncidentWave::broadside_te(F);
        let basis = wave.basis();
        let grid = EmsGrid::new(5, 5, 0.027, 5.0).unwrap();
        let reference = incident_field_at(&wave, &basis, &grid.atom_center(0));
        for i in 0..grid.atom_count() {
            let e = incident_field_at(&wave, &basis, &grid.atom_center(i));
            let mag = e.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            assert_abs_diff_eq!(mag, 1.0, epsilon = 1e-12);
            for c in 0..3 {
                assert_abs_diff_eq!((e[c] - reference[c]).norm(), 0.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn zero_amplitudes_give_zero_field() {
        let mut wave = IncidentWave::broadside_te(F);
        wave.e_te = Complex64::new(0.0, 0.0);
        let e = incident_field_at(&wave, &wave.basis(), &Vector3::new(0.3, -0.2, 5.0));
        assert!(e.iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn single_angular_sample() {
        let grid = EmsGrid::new(3, 3, 0.027, 5.0).unwrap();
        let spec = ObservationSpec::AngularGrid {
            theta_min_deg: 30.0,
            theta_max_deg: 30.0,
            theta_count: 1,
            phi_min_deg: -45.0,
            phi_max_deg: -45.0,
            phi_count: 1,
        };
        let obs = build_observation(&spec, &grid).unwrap();
        assert_eq!(obs.len(), 1);
        let s = obs.samples[0];
        assert_abs_diff_eq!(
            s.direction,
            Vector3::new(0.353_553_390_593_273_8, -0.353_553_390_593_273_8, 0.866_025_403_784_438_6),
            epsilon = 1e-12
        );
        assert_eq!(s.distance, 1.0);
    }

    #[test]
    fn angular_grid_rejects_lower_half_space() {
        let grid = EmsGrid::new(3, 3, 0.027, 5.0).unwrap();
        let spec = ObservationSpec::AngularGrid {
            theta_min_deg: 0.0,
            theta_max_deg: 100.0,
            theta_count: 5,
            phi_min_deg: 0.0,
            phi_max_deg: 90.0,
            phi_count: 3,
        };
        assert!(matches!(build_observation(&spec, &grid), Err(Error::Scenario(_))));
    }

    #[test]
    fn floor_plane_distances_bounded_by_height() {
        let grid = EmsGrid::new(3, 3, 0.027, 5.0).unwrap();
        let spec = ObservationSpec::FloorPlane {
            x_min_m: -0.5,
            x_max_m: 0.5,
            y_min_m: -0.5,
            y_max_m: 0.5,
            x_count: 2,
            y_count: 2,
            floor_height_m: 0.0,
        };
        let obs = build_observation(&spec, &grid).unwrap();
        assert_eq!(obs.len(), 4);
        assert_eq!(obs.shape(), (2, 2));
        for s in &obs.samples {
            assert!(s.distance >= 5.0);
            assert_abs_diff_eq!(s.direction.norm(), 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn sample_count_is_product_of_counts() {
        let grid = EmsGrid::new(3, 3, 0.027, 5.0).unwrap();
        let spec = ObservationSpec::AngularGrid {
            theta_min_deg: 0.0,
            theta_max_deg: 90.0,
            theta_count: 7,
            phi_min_deg: -90.0,
            phi_max_deg: 0.0,
            phi_count: 4,
        };
        let a = build_observation(&spec, &grid).unwrap();
        let b = build_observation(&spec, &grid).unwrap();
        assert_eq!(a.len(), 28);
        assert_eq!(a, b);
        assert_eq!(a.angles(7), Some((15f64.to_radians(), 0.0)));
    }

    #[test]
    fn lattice_is_centred() {
        let grid = EmsGrid::new(4, 3, 0.01, 2.0).unwrap();
        let centroid: Vector3<f64> = (0..grid.atom_count()).map(|i| grid.atom_offset(i)).sum::<Vector3<f64>>() / 12.0;
        assert_abs_diff_eq!(centroid.norm(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(grid.aperture_area(), 0.04 * 0.03, epsilon = 1e-15);
        assert_eq!(grid.atom_center(grid.index(3, 2)), Vector3::new(0.015, 0.01, 2.0));
    }

    proptest! {
        #[test]
        fn wave_vector_has_magnitude_k0(theta in -10.0f64..10.0, phi in -10.0f64..10.0, k in 1e-3f64..1e4) {
            let v = wave_vector(theta, phi, k);
            prop_assert!((v.norm() - k).abs() <= 1e-12 * k);
        }

        #[test]
        fn basis_is_orthonormal(theta in 0.0f64..PI, phi in -PI..PI) {
            let k = wave_vector(theta, phi, k0());
            let b = polarization_basis(&k);
            let kh = k.normalize();
            prop_assert!((b.e_te.norm() - 1.0).abs() < 1e-12);
            prop_assert!((b.e_tm.norm() - 1.0).abs() < 1e-12);
            prop_assert!(b.e_te.dot(&b.e_tm).abs() < 1e-12);
            prop_assert!(b.e_te.dot(&kh).abs() < 1e-12);
            prop_assert!(b.e_tm.dot(&kh).abs() < 1e-12);
        }

        #[test]
        fn incident_magnitude_is_spatially_constant(
            theta in 0.0f64..1.5, phi in -PI..PI,
            te_re in -2.0f64..2.0, te_im in -2.0f64..2.0, tm_re in -2.0f64..2.0,
            pts in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0), 2..8),
        ) {
            let wave = IncidentWave::new(F, theta, phi, Complex64::new(te_re, te_im), Complex64::new(tm_re, 0.0)).unwrap();
            let basis = wave.basis();
            let mags: Vec<f64> = pts.iter().map(|&(x, y, z)| {
                incident_field_at(&wave, &basis, &Vector3::new(x, y, z)).iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
            }).collect();
            let max = mags.iter().cloned().fold(f64::MIN, f64::max);
            let min = mags.iter().cloned().fold(f64::MAX, f64::min);
            prop_assume!(min > 1e-6);
            prop_assert!(max / min - 1.0 <= 1e-12);
        }
    }
}
