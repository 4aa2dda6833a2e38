//! End-to-end library checks that cut across modules.

use emskin::analysis::power_improvement_map;
use emskin::atomdb::{generate_synthetic_db, IncidenceKey, SubstrateModel, DEFAULT_PRINT_STEP_M};
use emskin::scenario::{EmsGrid, IncidentWave, ObservationSpec, Scenario};
use emskin::spectral::NullSpaceCoefficients;
use emskin::synthesis::{SynthesisConfig, SynthesisProblem};
use emskin::targets::{nearest_sample, pencil_beam_target};
use emskin::Complex64;
use proptest::prelude::*;

const F: f64 = 5.5e9;

fn pencil_scenario(p: usize) -> Scenario {
    let wave = IncidentWave::broadside_te(F);
    let grid = EmsGrid::new(p, p, wave.wavelength() / 2.0, 0.0).unwrap();
    let obs = ObservationSpec::AngularGrid {
        theta_min_deg: 0.0,
        theta_max_deg: 90.0,
        theta_count: 31,
        phi_min_deg: -90.0,
        phi_max_deg: 0.0,
        phi_count: 19,
    };
    Scenario::new(wave, grid, &obs).unwrap()
}

fn paper_db(sc: &Scenario) -> emskin::atomdb::AtomDatabase {
    generate_synthetic_db(
        &SubstrateModel::paper(),
        sc.grid.cell_size_m,
        DEFAULT_PRINT_STEP_M,
        IncidenceKey::from(&sc.wave),
    )
    .unwrap()
}

#[test]
fn paper_substrate_pencil_beam_improves_toward_the_target() {
    let sc = pencil_scenario(10);
    let db = paper_db(&sc);
    let (theta, phi) = (30f64.to_radians(), (-45f64).to_radians());
    // Diffraction beamwidth lambda / (P Delta) of a half-wavelength lattice.
    let beamwidth = 2.0 / 10.0;
    let target = pencil_beam_target(&sc.observation, theta, phi, beamwidth, sc.wave.basis().te_transverse()).unwrap();
    let config = SynthesisConfig {
        max_outer: 40,
        seed: 2,
        ..Default::default()
    };
    let problem = SynthesisProblem::new(&sc, &db, &target, &config).unwrap();
    let result = problem.run(&config).unwrap();

    assert!(result.trace_is_monotone());
    assert!(result.cost_opt < result.cost_pi);
    assert_eq!(result.outer_iterations, 40);
    let map = power_improvement_map(&result.field_opt, &result.field_pi, &sc.observation).unwrap();
    assert!(map.p_max > 0.0);
    let aim = sc.observation.samples[nearest_sample(&sc.observation, theta, phi).unwrap()].direction;
    let peak = sc.observation.samples[map.peak_index].direction;
    assert!(
        aim.dot(&peak).clamp(-1.0, 1.0).acos() <= beamwidth,
        "peak at sample {}",
        map.peak_index
    );
}

#[test]
fn pre_image_layout_matches_a_single_alternation() {
    let sc = pencil_scenario(6);
    let db = paper_db(&sc);
    let target = pencil_beam_target(&sc.observation, 0.4, -0.6, 0.2, sc.wave.basis().te_transverse()).unwrap();
    let config = SynthesisConfig {
        max_outer: 1,
        ..Default::default()
    };
    let problem = SynthesisProblem::new(&sc, &db, &target, &config).unwrap();
    let direct = problem.ems_update(&problem.zero_beta()).unwrap();
    let result = problem.run(&config).unwrap();
    assert_eq!(result.layout_pi, direct);
    assert_eq!(result.cost_pi, problem.cost(&direct, &problem.zero_beta()).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    /// Any beta inside the swarm ball radiates at most eta_svd of the pre-image field.
    #[test]
    fn ball_bounds_null_space_radiation(seed in 0u64..10_000, frac in 0.0f64..1.0) {
        use rand::{Rng, SeedableRng};
        let sc = pencil_scenario(5);
        let db = paper_db(&sc);
        let target = pencil_beam_target(&sc.observation, 0.5, -0.8, 0.3, sc.wave.basis().te_transverse()).unwrap();
        let config = SynthesisConfig::default();
        let problem = SynthesisProblem::new(&sc, &db, &target, &config).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let raw: Vec<Complex64> = (0..problem.mode_count)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let norm = raw.iter().map(|b| b.norm_sqr()).sum::<f64>().sqrt();
        let beta = NullSpaceCoefficients {
            values: raw.iter().map(|b| b * (frac * problem.radius / norm)).collect(),
            direction: problem.direction,
        };
        let j_ns = problem.decomposition.null_space_current(&beta).unwrap();
        let e_ns = problem.operator.radiate(&j_ns).unwrap().norm();
        let e_pi = problem.operator.radiate(&problem.j_pi).unwrap().norm();
        prop_assert!(e_ns <= config.eta_svd * e_pi * (1.0 + 1e-9));
    }
}
