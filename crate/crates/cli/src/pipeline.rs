//! Config-driven synthesis run and its exported artefacts.

use std::path::Path;

use emskin::analysis::{
    delta_e_db, field_cut, magnitude_map, mean_power, power_improvement_map, sample_location, write_map, MapGrid, MapMeta, SampleLocation,
};
use emskin::atomdb::{AtomDatabase, AtomDescriptor};
use emskin::forward::RadiationOperator;
use emskin::scenario::Scenario;
use emskin::synthesis::{AtomCurrents, Layout, SynthesisProblem, SynthesisResult, TerminationReason};
use emskin::targets::{self, contour_amplitudes, load_polygons, nearest_sample, TargetSpec};
use emskin::FieldVector;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::RunConfig;
use crate::CliError;

/// Headline numbers of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    /// Peak power improvement of D_opt over D_PI, as a fraction.
    pub p_max: f64,
    pub peak_index: usize,
    pub peak: SampleLocation,
    pub phi_final: f64,
    pub phi_pi: f64,
    /// Pencil beams: 20 log10 |E_opt / E_PI| at the target sample. Contours:
    /// 10 log10 of the ratio of mean |E|^2 inside the polygons.
    pub delta_e_db: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_index: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_power_inside_opt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_power_inside_pi: Option<f64>,
    pub s_th: usize,
    pub mode_count: usize,
    pub outer_iterations: usize,
    pub termination: TerminationReason,
}

/// Default pencil beamwidth: the diffraction width lambda / (P Delta).
pub fn default_beamwidth(cfg: &RunConfig) -> f64 {
    let lambda = emskin::scenario::SPEED_OF_LIGHT / cfg.scenario.frequency_hz;
    lambda / (cfg.scenario.grid.p.max(cfg.scenario.grid.q) as f64 * cfg.cell_size())
}

pub fn build_target(cfg: &RunConfig, scenario: &Scenario, base: Option<&Path>) -> Result<FieldVector, CliError> {
    let direction = scenario.wave.basis().te_transverse();
    targets::build_target(&cfg.target, &scenario.observation, direction, default_beamwidth(cfg), base)
        .map_err(|e| CliError::input(format!("targets: {e}")))
}

/// Samples strictly inside the contour polygons (no smoothing).
pub fn contour_mask(cfg: &RunConfig, scenario: &Scenario, base: Option<&Path>) -> Result<Option<Vec<bool>>, CliError> {
    let TargetSpec::Contour {
        polygons, polygons_file, ..
    } = &cfg.target
    else {
        return Ok(None);
    };
    let polys = match polygons_file {
        Some(f) => load_polygons(cfg.resolve(base, f)).map_err(|e| CliError::input(format!("targets: {e}")))?,
        None => polygons.clone(),
    };
    let amp = contour_amplitudes(&scenario.observation, &polys, 1.0, 0.0, 0.0).map_err(|e| CliError::input(format!("targets: {e}")))?;
    Ok(Some(amp.into_iter().map(|a| a > 0.5).collect()))
}

/// Index of the pencil target direction on the grid.
pub fn target_index(cfg: &RunConfig, scenario: &Scenario) -> Result<Option<usize>, CliError> {
    match cfg.target {
        TargetSpec::PencilBeam {
            theta_refl_deg,
            phi_refl_deg,
            ..
        } => nearest_sample(&scenario.observation, theta_refl_deg.to_radians(), phi_refl_deg.to_radians())
            .map(Some)
            .map_err(|e| CliError::input(format!("targets: {e}"))),
        TargetSpec::Contour { .. } => Ok(None),
    }
}

pub fn summarize(
    cfg: &RunConfig,
    scenario: &Scenario,
    result: &SynthesisResult,
    field_opt: &FieldVector,
    field_pi: &FieldVector,
    base: Option<&Path>,
) -> Result<Summary, CliError> {
    let map = power_improvement_map(field_opt, field_pi, &scenario.observation).map_err(|e| CliError::in_module("analysis", e))?;
    let target_index = target_index(cfg, scenario)?;
    let mask = contour_mask(cfg, scenario, base)?;
    let (delta, inside_opt, inside_pi) = match (&target_index, &mask) {
        (Some(t), _) => (
            delta_e_db(field_opt, field_pi, *t).map_err(|e| CliError::in_module("analysis", e))?,
            None,
            None,
        ),
        (None, Some(m)) => {
            let o = mean_power(field_opt, m).map_err(|e| CliError::in_module("analysis", e))?;
            let p = mean_power(field_pi, m).map_err(|e| CliError::in_module("analysis", e))?;
            (10.0 * (o / p).log10(), Some(o), Some(p))
        }
        (None, None) => unreachable!("every target kind has a reference sample or mask"),
    };
    Ok(Summary {
        p_max: map.p_max,
        peak_index: map.peak_index,
        peak: map.peak,
        phi_final: result.cost_opt,
        phi_pi: result.cost_pi,
        delta_e_db: delta,
        target_index,
        mean_power_inside_opt: inside_opt,
        mean_power_inside_pi: inside_pi,
        s_th: result.s_th,
        mode_count: result.mode_count,
        outer_iterations: result.outer_iterations,
        termination: result.termination,
    })
}

/// Full run: builds the problem, synthesizes and, when `out` is given, writes
/// every artefact there.
pub fn run(cfg: &RunConfig, base: Option<&Path>, out: Option<&Path>) -> Result<Summary, CliError> {
    let scenario = cfg.scenario()?;
    let db = cfg.database(base)?;
    let target = build_target(cfg, &scenario, base)?;
    let problem = SynthesisProblem::new(&scenario, &db, &target, &cfg.synthesis).map_err(|e| CliError::in_module("spectral", e))?;
    let result = problem.run(&cfg.synthesis).map_err(|e| CliError::in_module("synthesis", e))?;
    let summary = summarize(cfg, &scenario, &result, &result.field_opt, &result.field_pi, base)?;
    if let Some(dir) = out {
        write_outputs(dir, cfg, &scenario, &db, &problem, &result, &summary)?;
    }
    Ok(summary)
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::runtime(format!("cannot write {}: {e}", path.display())))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), CliError> {
    write_text(path, &(serde_json::to_string_pretty(value).expect("json value serializes") + "\n"))
}

fn write_map_file(path: &Path, map: &MapGrid, meta: &MapMeta) -> Result<(), CliError> {
    write_map(map, meta, path).map_err(|e| CliError::runtime(format!("analysis: {e}")))
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::runtime(format!("cannot create {}: {e}", dir.display())))
}

/// Field and power maps, plus phi cuts for pencil targets.
pub fn write_field_artifacts(
    dir: &Path,
    cfg: &RunConfig,
    scenario: &Scenario,
    field_opt: &FieldVector,
    field_pi: &FieldVector,
    hash: &str,
) -> Result<(), CliError> {
    let obs = &scenario.observation;
    for (name, field) in [("field_opt", field_opt), ("field_pi", field_pi)] {
        let (map, meta) = magnitude_map(field, obs, Some(hash.to_string())).map_err(|e| CliError::in_module("analysis", e))?;
        write_map_file(&dir.join(format!("{name}.csv")), &map, &meta)?;
    }
    let power = power_improvement_map(field_opt, field_pi, obs).map_err(|e| CliError::in_module("analysis", e))?;
    let grid = MapGrid::from_domain(obs, power.values.clone()).map_err(|e| CliError::in_module("analysis", e))?;
    write_map_file(&dir.join("power_improvement.csv"), &grid, &power.meta(obs, Some(hash.to_string())))?;

    if let TargetSpec::PencilBeam { phi_refl_deg, .. } = cfg.target {
        for (name, field) in [("cut_opt", field_opt), ("cut_pi", field_pi)] {
            let cut = field_cut(field, obs, phi_refl_deg.to_radians()).map_err(|e| CliError::in_module("analysis", e))?;
            let mut text = String::from("theta_deg,magnitude\n");
            for (t, m) in cut {
                text.push_str(&format!("{:.14e},{:.14e}\n", t.to_degrees(), m));
            }
            write_text(&dir.join(format!("{name}.csv")), &text)?;
        }
    }
    Ok(())
}

pub fn write_outputs(
    dir: &Path,
    cfg: &RunConfig,
    scenario: &Scenario,
    db: &AtomDatabase,
    problem: &SynthesisProblem<'_>,
    result: &SynthesisResult,
    summary: &Summary,
) -> Result<(), CliError> {
    ensure_dir(dir)?;
    let hash = cfg.hash();

    let mut record = result.to_json(db).map_err(|e| CliError::in_module("synthesis", e))?;
    record["config_hash"] = json!(hash);
    record["summary"] = serde_json::to_value(summary).expect("summary serializes");
    write_json(&dir.join("result.json"), &record)?;

    let pi = json!({
        "config_hash": hash,
        "layout": result.layout_pi.descriptor_matrix(db),
        "cost": result.cost_pi,
    });
    write_json(&dir.join("pi_result.json"), &pi)?;

    write_text(&dir.join("layout_opt.csv"), &result.layout_opt.to_csv(db))?;
    write_text(&dir.join("layout_pi.csv"), &result.layout_pi.to_csv(db))?;

    let dec = &problem.decomposition;
    write_text(&dir.join("spectrum.csv"), &dec.spectrum_csv())?;
    write_json(
        &dir.join("spectrum.meta.json"),
        &json!({
            "config_hash": hash,
            "eta_svd": dec.eta_svd,
            "s_th": dec.s_th,
            "rank_bound": dec.rank_bound(),
        }),
    )?;

    write_field_artifacts(dir, cfg, scenario, &result.field_opt, &result.field_pi, &hash)
}

/// Rebuilds a layout from a descriptor matrix stored in a result file.
pub fn layout_from_matrix(db: &AtomDatabase, matrix: &[Vec<f64>], p: usize, q: usize) -> Result<Layout, CliError> {
    if matrix.len() != p || matrix.iter().any(|r| r.len() != q) {
        return Err(CliError::input(format!("layout matrix is not {p} x {q}")));
    }
    let indices = matrix
        .iter()
        .flatten()
        .map(|&d| {
            db.index_of(&AtomDescriptor::side(d))
                .map_err(|e| CliError::input(format!("atomdb: {e}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Layout {
        p_count: p,
        q_count: q,
        indices,
    })
}

/// Radiated field of a stored layout.
pub fn layout_field(
    scenario: &Scenario,
    db: &AtomDatabase,
    operator: &RadiationOperator,
    layout: &Layout,
) -> Result<FieldVector, CliError> {
    let currents = AtomCurrents::new(db, &scenario.wave, &scenario.grid);
    operator
        .radiate(&currents.induced(layout))
        .map_err(|e| CliError::in_module("forward", e))
}

/// Location of a sample, for console output.
pub fn describe(scenario: &Scenario, index: usize) -> String {
    match sample_location(&scenario.observation, index) {
        SampleLocation::Angular { theta_deg, phi_deg } => format!("(theta {theta_deg:.2} deg, phi {phi_deg:.2} deg)"),
        SampleLocation::Floor { x_m, y_m } => format!("(x {x_m:.3} m, y {y_m:.3} m)"),
    }
}
