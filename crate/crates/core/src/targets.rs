//! Desired reflected-field distributions on the observation domain.
//!
//! Targets carry a real, non-negative amplitude with zero phase, placed along the
//! TE transverse polarization; the other component is zero.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::scenario::{DomainKind, ObservationDomain};
use crate::{Complex64, Error, FieldVector, Result, TwoComponent};

/// A closed polygon on the floor plane, vertices in metres.
pub type Polygon = Vec<[f64; 2]>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetSpec {
    PencilBeam {
        theta_refl_deg: f64,
        phi_refl_deg: f64,
        /// Gaussian width in direction-cosine units; `None` selects lambda / (P Delta).
        #[serde(default)]
        beamwidth: Option<f64>,
    },
    Contour {
        /// Inline polygons; ignored when `polygons_file` is set.
        #[serde(default)]
        polygons: Vec<Polygon>,
        #[serde(default)]
        polygons_file: Option<String>,
        #[serde(default = "one")]
        inside_amplitude: f64,
        #[serde(default)]
        outside_amplitude: f64,
        #[serde(default)]
        edge_smoothing_m: f64,
    },
}

fn one() -> f64 {
    1.0
}

/// Direction cosines (u, v) = (sin t cos p, sin t sin p).
pub fn direction_cosines(theta: f64, phi: f64) -> (f64, f64) {
    (theta.sin() * phi.cos(), theta.sin() * phi.sin())
}

/// Index of the grid sample closest to (theta, phi) in direction-cosine space.
///
/// Ties resolve to the lowest index.
pub fn nearest_sample(obs: &ObservationDomain, theta: f64, phi: f64) -> Result<usize> {
    let DomainKind::AngularGrid { thetas, phis } = &obs.kind else {
        return Err(Error::Target("pencil beam requires an angular observation grid".into()));
    };
    let tol = 1e-9;
    let inside = |v: f64, axis: &[f64]| {
        let lo = axis.first().copied().unwrap_or(0.0);
        let hi = axis.last().copied().unwrap_or(0.0);
        v >= lo.min(hi) - tol && v <= lo.max(hi) + tol
    };
    if !inside(theta, thetas) || !inside(phi, phis) {
        return Err(Error::Target(format!(
            "target direction ({:.3} deg, {:.3} deg) lies outside the observation grid",
            theta.to_degrees(),
            phi.to_degrees()
        )));
    }
    let (u0, v0) = direction_cosines(theta, phi);
    let mut best = (f64::INFINITY, 0);
    for i in 0..obs.len() {
        let (t, p) = obs.angles(i).expect("angular grid");
        let (u, v) = direction_cosines(t, p);
        let d = (u - u0).powi(2) + (v - v0).powi(2);
        if d < best.0 {
            best = (d, i);
        }
    }
    Ok(best.1)
}

/// Gaussian spot exp(-rho^2 / w^2) centred on the grid sample nearest the
/// requested direction, rho measured in direction-cosine space.
pub fn pencil_beam_amplitudes(obs: &ObservationDomain, theta_refl: f64, phi_refl: f64, beamwidth: f64) -> Result<Vec<f64>> {
    if !(beamwidth > 0.0) || !beamwidth.is_finite() {
        return Err(Error::Target(format!("beamwidth {beamwidth} must be positive")));
    }
    let centre = nearest_sample(obs, theta_refl, phi_refl)?;
    let (t0, p0) = obs.angles(centre).expect("angular grid");
    let (u0, v0) = direction_cosines(t0, p0);
    Ok((0..obs.len())
        .map(|i| {
            let (t, p) = obs.angles(i).expect("angular grid");
            let (u, v) = direction_cosines(t, p);
            let rho2 = (u - u0).powi(2) + (v - v0).powi(2);
            (-rho2 / (beamwidth * beamwidth)).exp()
        })
        .collect())
}

pub fn pencil_beam_target(
    obs: &ObservationDomain,
    theta_refl: f64,
    phi_refl: f64,
    beamwidth: f64,
    direction: [Complex64; 2],
) -> Result<FieldVector> {
    let amp = pencil_beam_amplitudes(obs, theta_refl, phi_refl, beamwidth)?;
    Ok(real_along(&amp, direction))
}

fn real_along(amplitudes: &[f64], direction: [Complex64; 2]) -> FieldVector {
    let values: Vec<Complex64> = amplitudes.iter().map(|&a| Complex64::new(a, 0.0)).collect();
    TwoComponent::along(&values, direction)
}

/// Rejects polygons with fewer than three vertices, non-finite coordinates,
/// zero area or crossing edges.
pub fn validate_polygon(poly: &[[f64; 2]]) -> Result<()> {
    let n = poly.len();
    if n < 3 {
        return Err(Error::Target(format!("degenerate polygon with {n} vertices")));
    }
    if poly.iter().flatten().any(|c| !c.is_finite()) {
        return Err(Error::Target("polygon vertex is not finite".into()));
    }
    let area2: f64 = (0..n).map(|i| cross(poly[i], poly[(i + 1) % n])).sum();
    if area2.abs() <= 1e-15 {
        return Err(Error::Target("polygon has zero area".into()));
    }
    for i in 0..n {
        for j in i + 1..n {
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                continue;
            }
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            let (c, d) = (poly[j], poly[(j + 1) % n]);
            if segments_intersect(a, b, c, d) {
                return Err(Error::Target(format!("polygon edges {i} and {j} intersect")));
            }
        }
    }
    Ok(())
}

fn cross(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

fn orient(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn on_segment(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> bool {
    p[0] >= a[0].min(b[0]) && p[0] <= a[0].max(b[0]) && p[1] >= a[1].min(b[1]) && p[1] <= a[1].max(b[1])
}

fn segments_intersect(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> bool {
    let (o1, o2, o3, o4) = (orient(a, b, c), orient(a, b, d), orient(c, d, a), orient(c, d, b));
    if o1 * o2 < 0.0 && o3 * o4 < 0.0 {
        return true;
    }
    (o1 == 0.0 && on_segment(a, b, c))
        || (o2 == 0.0 && on_segment(a, b, d))
        || (o3 == 0.0 && on_segment(c, d, a))
        || (o4 == 0.0 && on_segment(c, d, b))
}

/// Even-odd point-in-polygon test.
pub fn point_in_polygon(poly: &[[f64; 2]], p: [f64; 2]) -> bool {
    let n = poly.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
            if p[0] < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

fn distance_to_boundary(poly: &[[f64; 2]], p: [f64; 2]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            let ab = [b[0] - a[0], b[1] - a[1]];
            let len2 = ab[0] * ab[0] + ab[1] * ab[1];
            let t = (((p[0] - a[0]) * ab[0] + (p[1] - a[1]) * ab[1]) / len2).clamp(0.0, 1.0);
            let q = [a[0] + t * ab[0], a[1] + t * ab[1]];
            ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()
        })
        .fold(f64::INFINITY, f64::min)
}

/// Coverage in [0, 1]: a step at the boundary, or a linear ramp of width
/// `smoothing` centred on it.
pub fn polygon_coverage(poly: &[[f64; 2]], p: [f64; 2], smoothing: f64) -> f64 {
    let inside = point_in_polygon(poly, p);
    if smoothing <= 0.0 {
        return if inside { 1.0 } else { 0.0 };
    }
    let d = distance_to_boundary(poly, p);
    let signed = if inside { d } else { -d };
    (0.5 + signed / smoothing).clamp(0.0, 1.0)
}

/// Union coverage: pointwise maximum over polygons.
pub fn contour_mask(polygons: &[Polygon], points: &[[f64; 2]], smoothing: f64) -> Result<Vec<f64>> {
    if polygons.is_empty() {
        return Err(Error::Target("contour target needs at least one polygon".into()));
    }
    if !(smoothing >= 0.0) {
        return Err(Error::Target(format!("edge smoothing {smoothing} must be non-negative")));
    }
    for poly in polygons {
        validate_polygon(poly)?;
    }
    Ok(points.iter().map(|&p| polygon_coverage_union(polygons, p, smoothing)).collect())
}

fn polygon_coverage_union(polygons: &[Polygon], p: [f64; 2], smoothing: f64) -> f64 {
    polygons.iter().map(|poly| polygon_coverage(poly, p, smoothing)).fold(0.0, f64::max)
}

pub fn contour_amplitudes(
    obs: &ObservationDomain,
    polygons: &[Polygon],
    inside_amplitude: f64,
    outside_amplitude: f64,
    edge_smoothing_m: f64,
) -> Result<Vec<f64>> {
    if !matches!(obs.kind, DomainKind::FloorPlane { .. }) {
        return Err(Error::Target("contour target requires a floor-plane observation domain".into()));
    }
    if !(inside_amplitude >= 0.0 && outside_amplitude >= 0.0) {
        return Err(Error::Target("target amplitudes must be non-negative".into()));
    }
    let points: Vec<[f64; 2]> = (0..obs.len())
        .map(|i| {
            let (x, y) = obs.floor_point(i).expect("floor plane");
            [x, y]
        })
        .collect();
    let mask = contour_mask(polygons, &points, edge_smoothing_m)?;
    Ok(mask
        .into_iter()
        .map(|c| outside_amplitude + (inside_amplitude - outside_amplitude) * c)
        .collect())
}

pub fn contour_target(
    obs: &ObservationDomain,
    polygons: &[Polygon],
    inside_amplitude: f64,
    outside_amplitude: f64,
    edge_smoothing_m: f64,
    direction: [Complex64; 2],
) -> Result<FieldVector> {
    let amp = contour_amplitudes(obs, polygons, inside_amplitude, outside_amplitude, edge_smoothing_m)?;
    Ok(real_along(&amp, direction))
}

/// Reads `[[[x, y], ...], ...]`.
pub fn load_polygons(path: impl AsRef<Path>) -> Result<Vec<Polygon>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let polygons: Vec<Polygon> = serde_json::from_str(&text)?;
    for poly in &polygons {
        validate_polygon(poly)?;
    }
    Ok(polygons)
}

/// Evaluates a target spec. `default_beamwidth` is used when the pencil spec
/// leaves it unset; relative polygon files are resolved against `base_dir`.
pub fn build_target(
    spec: &TargetSpec,
    obs: &ObservationDomain,
    direction: [Complex64; 2],
    default_beamwidth: f64,
    base_dir: Option<&Path>,
) -> Result<FieldVector> {
    match spec {
        TargetSpec::PencilBeam {
            theta_refl_deg,
            phi_refl_deg,
            beamwidth,
        } => pencil_beam_target(
            obs,
            theta_refl_deg.to_radians(),
            phi_refl_deg.to_radians(),
            beamwidth.unwrap_or(default_beamwidth),
            direction,
        ),
        TargetSpec::Contour {
            polygons,
            polygons_file,
            inside_amplitude,
            outside_amplitude,
            edge_smoothing_m,
        } => {
            let loaded;
            let polys = match polygons_file {
                Some(file) => {
                    let p = Path::new(file);
                    let full = match base_dir {
                        Some(base) if p.is_relative() => base.join(p),
                        _ => p.to_path_buf(),
                    };
                    loaded = load_polygons(full)?;
                    &loaded
                }
                None => polygons,
            };
            contour_target(obs, polys, *inside_amplitude, *outside_amplitude, *edge_smoothing_m, direction)
        }
    }
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    use super::*;
    use crate::scenario::{build_observation, EmsGrid, ObservationSpec};

    const Y: [Complex64; 2] = [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)];

    fn angular() -> ObservationDomain {
        let grid = EmsGrid::new(15, 15, 0.02725, 5.0).unwrap();
        let spec = ObservationSpec::AngularGrid {
            theta_min_deg: 0.0,
            theta_max_deg: 90.0,
            theta_count: 46,
            phi_min_deg: -90.0,
            phi_max_deg: 0.0,
            phi_count: 37,
        };
        build_observation(&spec, &grid).unwrap()
    }

    fn floor() -> ObservationDomain {
        let grid = EmsGrid::new(5, 5, 0.02725, 10.0).unwrap();
        let spec = ObservationSpec::FloorPlane {
            x_min_m: -5.0,
            x_max_m: 5.0,
            y_min_m: -5.0,
            y_max_m: 5.0,
            x_count: 21,
            y_count: 21,
            floor_height_m: 0.0,
        };
        build_observation(&spec, &grid).unwrap()
    }

    fn square(x0: f64, y0: f64, side: f64) -> Polygon {
        vec![[x0, y0], [x0 + side, y0], [x0 + side, y0 + side], [x0, y0 + side]]
    }

    #[test]
    fn pencil_peak_is_one_at_target_sample() {
        let obs = angular();
        let (t, p) = (30f64.to_radians(), (-45f64).to_radians());
        let amp = pencil_beam_amplitudes(&obs, t, p, 0.1).unwrap();
        let centre = nearest_sample(&obs, t, p).unwrap();
        let (ct, cp) = obs.angles(centre).unwrap();
        assert_abs_diff_eq!(ct, t, epsilon = 1e-12);
        assert_abs_diff_eq!(cp, p, epsilon = 1e-12);
        assert_eq!(amp[centre], 1.0);

        // Exhaustive argmax scan.
        let argmax = amp
            .iter()
            .enumerate()
            .fold((0, f64::MIN), |b, (i, &a)| if a > b.1 { (i, a) } else { b })
            .0;
        assert_eq!(argmax, centre);
        assert!(amp.iter().all(|&a| (0.0..=1.0).contains(&a)));
    }

    #[test]
    fn pencil_amplitude_at_one_beamwidth_is_inverse_e() {
        let obs = angular();
        let (t, p) = (0.0, 0.0);
        let centre = nearest_sample(&obs, t, p).unwrap();
        // Pick a sample and set w to its cosine distance from the centre.
        let i = obs.len() / 3;
        let (ti, pi) = obs.angles(i).unwrap();
        let (u, v) = direction_cosines(ti, pi);
        let (ct, cp) = obs.angles(centre).unwrap();
        let (u0, v0) = direction_cosines(ct, cp);
        let w = ((u - u0).powi(2) + (v - v0).powi(2)).sqrt();
        let amp = pencil_beam_amplitudes(&obs, t, p, w).unwrap();
        assert_abs_diff_eq!(amp[i], (-1f64).exp(), epsilon = 1e-14);
    }

    #[test]
    fn nearest_sample_snaps_off_grid_direction() {
        let obs = angular();
        let i = nearest_sample(&obs, 30.3f64.to_radians(), (-45.4f64).to_radians()).unwrap();
        let (t, p) = obs.angles(i).unwrap();
        assert_abs_diff_eq!(t.to_degrees(), 30.0, epsilon = 1e-9);
        assert_abs_diff_eq!(p.to_degrees(), -45.0, epsilon = 1e-9);
    }

    #[test]
    fn pencil_errors() {
        let obs = angular();
        assert!(pencil_beam_amplitudes(&obs, 0.5, 0.5, 0.1).is_err());
        assert!(pencil_beam_amplitudes(&obs, 0.5, -0.5, 0.0).is_err());
        assert!(pencil_beam_amplitudes(&floor(), 0.5, -0.5, 0.1).is_err());
    }

    #[test]
    fn pencil_target_is_polarized_along_direction() {
        let obs = angular();
        let t = pencil_beam_target(&obs, 0.5, -0.5, 0.1, Y).unwrap();
        assert!(t.x.iter().all(|v| *v == Complex64::new(0.0, 0.0)));
        assert!(t.y.iter().all(|v| v.im == 0.0 && v.re >= 0.0));
    }

    #[test]
    fn contour_inside_and_outside() {
        let obs = floor();
        let polys = vec![square(-1.0, -1.0, 2.0)];
        let amp = contour_amplitudes(&obs, &polys, 1.0, 0.1, 0.0).unwrap();
        let (rows, cols) = obs.shape();
        let centre = (rows / 2) * cols + cols / 2;
        assert_eq!(obs.floor_point(centre), Some((0.0, 0.0)));
        assert_eq!(amp[centre], 1.0);
        assert_eq!(amp[0], 0.1);
    }

    #[test]
    fn contour_union_is_pointwise_max() {
        let obs = floor();
        let a1 = vec![[-4.0, -4.0], [-1.0, -3.5], [-1.5, -0.5], [-3.0, -1.5], [-4.2, -1.0]];
        let a2 = vec![[1.0, 1.0], [4.0, 0.5], [3.5, 4.0], [2.0, 2.5], [0.8, 3.8]];
        let both = contour_amplitudes(&obs, &[a1.clone(), a2.clone()], 1.0, 0.0, 0.6).unwrap();
        let m1 = contour_amplitudes(&obs, &[a1], 1.0, 0.0, 0.6).unwrap();
        let m2 = contour_amplitudes(&obs, &[a2], 1.0, 0.0, 0.6).unwrap();
        for i in 0..obs.len() {
            assert_eq!(both[i], m1[i].max(m2[i]));
        }
        assert!(both.iter().any(|&a| a > 0.0 && a < 1.0));
    }

    #[test]
    fn smoothing_ramps_linearly_across_the_edge() {
        let poly = square(0.0, 0.0, 10.0);
        assert_eq!(polygon_coverage(&poly, [5.0, 0.0], 1.0), 0.5);
        assert_abs_diff_eq!(polygon_coverage(&poly, [5.0, 0.25], 1.0), 0.75, epsilon = 1e-12);
        assert_abs_diff_eq!(polygon_coverage(&poly, [5.0, -0.25], 1.0), 0.25, epsilon = 1e-12);
        assert_eq!(polygon_coverage(&poly, [5.0, 0.6], 1.0), 1.0);
        assert_eq!(polygon_coverage(&poly, [5.0, -0.6], 1.0), 0.0);
    }

    #[test]
    fn invalid_polygons() {
        assert!(validate_polygon(&[[0.0, 0.0], [1.0, 0.0]]).is_err());
        let bowtie = [[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]];
        assert!(validate_polygon(&bowtie).is_err());
        assert!(validate_polygon(&[[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]).is_err());
        assert!(validate_polygon(&square(0.0, 0.0, 1.0)).is_ok());
        let obs = floor();
        assert!(contour_amplitudes(&obs, &[square(0.0, 0.0, 1.0)], -1.0, 0.0, 0.0).is_err());
        assert!(contour_amplitudes(&obs, &[], 1.0, 0.0, 0.0).is_err());
        assert!(contour_amplitudes(&angular(), &[square(0.0, 0.0, 1.0)], 1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn polygon_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("polys.json");
        std::fs::write(&path, "[[[0,0],[1,0],[1,1]],[[2,2],[3,2],[3,3],[2,3]]]").unwrap();
        let polys = load_polygons(&path).unwrap();
        assert_eq!(polys.len(), 2);
        assert_eq!(polys[1][2], [3.0, 3.0]);

        let spec = TargetSpec::Contour {
            polygons: vec![],
            polygons_file: Some("polys.json".into()),
            inside_amplitude: 1.0,
            outside_amplitude: 0.0,
            edge_smoothing_m: 0.0,
        };
        let t = build_target(&spec, &floor(), Y, 0.1, Some(dir.path())).unwrap();
        assert_eq!(t.len(), 441);

        std::fs::write(&path, "[[[0,0],[1,0]]]").unwrap();
        assert!(load_polygons(&path).is_err());
    }

    #[test]
    fn spec_json_shape() {
        let spec: TargetSpec = serde_json::from_str(r#"{"kind":"pencil_beam","theta_refl_deg":30,"phi_refl_deg":-45}"#).unwrap();
        assert_eq!(
            spec,
            TargetSpec::PencilBeam {
                theta_refl_deg: 30.0,
                phi_refl_deg: -45.0,
                beamwidth: None
            }
        );
        assert!(serde_json::from_str::<TargetSpec>(r#"{"kind":"pencil_beam","theta_refl_deg":30,"phi_refl_deg":-45,"extra":1}"#).is_err());
    }

    proptest! {
        #[test]
        fn pencil_amplitudes_bounded_with_argmax_at_nearest(t in 0.0f64..90.0, p in -90.0f64..0.0, w in 0.01f64..0.5) {
            let obs = angular();
            let (tr, pr) = (t.to_radians(), p.to_radians());
            let amp = pencil_beam_amplitudes(&obs, tr, pr, w).unwrap();
            let centre = nearest_sample(&obs, tr, pr).unwrap();
            prop_assert_eq!(amp[centre], 1.0);
            prop_assert!(amp.iter().all(|&a| (0.0..=1.0).contains(&a)));
        }

        #[test]
        fn contour_amplitudes_between_outside_and_inside(inside in 0.0f64..3.0, outside in 0.0f64..3.0, smooth in 0.0f64..2.0) {
            let obs = floor();
            let amp = contour_amplitudes(&obs, &[square(-2.0, -1.0, 3.0)], inside, outside, smooth).unwrap();
            let (lo, hi) = (inside.min(outside), inside.max(outside));
            prop_assert!(amp.iter().all(|&a| a >= lo - 1e-12 && a <= hi + 1e-12));
        }
    }
}
