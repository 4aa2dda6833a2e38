//! Command implementations. Each returns the process exit status on success
//! paths that still need one (sweeps with failed runs) and a [`CliError`] otherwise.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use emskin::atomdb::{generate_synthetic_db, parse_db, save_db, IncidenceKey, SubstrateModel, DEFAULT_PRINT_STEP_M};
use emskin::forward::assemble_operator;
use emskin::scenario::SPEED_OF_LIGHT;
use emskin::synthesis::derive_seed;
use emskin::targets::TargetSpec;
use serde::Deserialize;
use serde_json::json;

use crate::config::RunConfig;
use crate::pipeline::{self, describe, ensure_dir, layout_field, layout_from_matrix, Summary};
use crate::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "emskin",
    version,
    about = "Inverse-source synthesis of static passive electromagnetic skins"
)]
pub struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate or validate a meta-atom database.
    Atomdb {
        #[command(subcommand)]
        action: AtomdbAction,
    },
    /// Run one synthesis.
    Synthesize(RunArgs),
    /// Run one synthesis per value of a swept parameter.
    Sweep {
        #[command(subcommand)]
        kind: SweepKind,
    },
    /// Recompute field and power maps from a stored result.
    Analyze(AnalyzeArgs),
}

#[derive(Debug, Subcommand)]
pub enum AtomdbAction {
    Generate(GenerateArgs),
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Substrate preset: paper or isola.
    #[arg(long, conflicts_with = "model")]
    pub substrate: Option<String>,
    /// JSON file with a full substrate model.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Cell side in metres (default: half a wavelength).
    #[arg(long)]
    pub cell: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_PRINT_STEP_M)]
    pub step: f64,
    #[arg(long, default_value_t = 5.5e9)]
    pub frequency: f64,
    /// Output CSV file, or a directory receiving `atomdb.csv`.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    pub path: PathBuf,
    #[arg(long)]
    pub cell: Option<f64>,
    #[arg(long, default_value_t = 5.5e9)]
    pub frequency: f64,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (default: config `output_dir`, else `out`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum SweepKind {
    /// Square apertures P x P.
    Aperture(SweepArgs),
    /// Pencil-beam elevation theta_refl in degrees.
    Angle(SweepArgs),
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Comma-separated values.
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    pub values: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// `result.json` written by `synthesize`.
    #[arg(long)]
    pub result: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn dispatch(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Atomdb {
            action: AtomdbAction::Generate(a),
        } => atomdb_generate(&a),
        Command::Atomdb {
            action: AtomdbAction::Validate(a),
        } => atomdb_validate(&a),
        Command::Synthesize(a) => synthesize(&a),
        Command::Sweep { kind } => sweep(kind),
        Command::Analyze(a) => analyze(&a),
    }
}

fn half_wavelength(frequency: f64) -> f64 {
    SPEED_OF_LIGHT / frequency / 2.0
}

fn broadside_key(frequency: f64) -> IncidenceKey {
    IncidenceKey {
        theta_inc_rad: 0.0,
        phi_inc_rad: 0.0,
        frequency_hz: frequency,
    }
}

pub fn atomdb_generate(a: &GenerateArgs) -> Result<i32, CliError> {
    let model = match (&a.substrate, &a.model) {
        (_, Some(path)) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))?;
            serde_json::from_str::<SubstrateModel>(&text).map_err(|e| CliError::input(format!("substrate model: {e}")))?
        }
        (Some(name), None) => SubstrateModel::preset(name).ok_or_else(|| CliError::input(format!("unknown substrate preset {name:?}")))?,
        (None, None) => return Err(CliError::input("give --substrate or --model")),
    };
    let cell = a.cell.unwrap_or_else(|| half_wavelength(a.frequency));
    let db =
        generate_synthetic_db(&model, cell, a.step, broadside_key(a.frequency)).map_err(|e| CliError::input(format!("atomdb: {e}")))?;
    let path = if a.out.extension().is_some_and(|e| e == "csv") {
        if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
            ensure_dir(parent)?;
        }
        a.out.clone()
    } else {
        ensure_dir(&a.out)?;
        a.out.join("atomdb.csv")
    };
    save_db(&db, &path).map_err(|e| CliError::runtime(format!("atomdb: {e}")))?;
    let meta = json!({ "model": model, "cell_size_m": cell, "step_m": a.step, "frequency_hz": a.frequency, "entries": db.len() });
    let meta_path = path.with_extension("meta.json");
    std::fs::write(&meta_path, serde_json::to_string_pretty(&meta).expect("json") + "\n")
        .map_err(|e| CliError::runtime(format!("cannot write {}: {e}", meta_path.display())))?;
    println!("wrote {} ({} entries)", path.display(), db.len());
    println!("min |Gamma_TE| = {:.3} dB", db.min_te_magnitude_db());
    Ok(0)
}

pub fn atomdb_validate(a: &ValidateArgs) -> Result<i32, CliError> {
    let text = std::fs::read_to_string(&a.path).map_err(|e| CliError::input(format!("cannot read {}: {e}", a.path.display())))?;
    let cell = a.cell.unwrap_or_else(|| half_wavelength(a.frequency));
    let db = parse_db(&text, &a.path, cell, broadside_key(a.frequency)).map_err(|e| CliError::input(e.to_string()))?;
    println!(
        "{}: valid, {} entries, min |Gamma_TE| = {:.3} dB",
        a.path.display(),
        db.len(),
        db.min_te_magnitude_db()
    );
    Ok(0)
}

/// Loads the config, applies the seed override and picks the output directory.
fn prepare(run: &RunArgs) -> Result<(RunConfig, Option<PathBuf>, PathBuf), CliError> {
    let mut cfg = RunConfig::load(&run.config)?;
    if let Some(seed) = run.seed {
        cfg.synthesis.seed = seed;
    }
    let base = run.config.parent().map(Path::to_path_buf);
    let out = run
        .out
        .clone()
        .or_else(|| cfg.output_dir.as_ref().map(|d| cfg.resolve(base.as_deref(), d)))
        .unwrap_or_else(|| PathBuf::from("out"));
    Ok((cfg, base, out))
}

fn report(summary: &Summary, scenario_desc: &str) {
    println!("P_max = {:.6} at {scenario_desc}", summary.p_max);
    println!("Phi_final = {:.6e} (PI baseline {:.6e})", summary.phi_final, summary.phi_pi);
    println!(
        "Delta_E = {:.4} dB; s_th = {}; outer iterations = {}",
        summary.delta_e_db, summary.s_th, summary.outer_iterations
    );
}

pub fn synthesize(a: &RunArgs) -> Result<i32, CliError> {
    let (cfg, base, out) = prepare(a)?;
    let summary = pipeline::run(&cfg, base.as_deref(), Some(&out))?;
    let scenario = cfg.scenario()?;
    report(&summary, &describe(&scenario, summary.peak_index));
    println!("outputs in {}", out.display());
    Ok(0)
}

fn sweep_config(cfg: &RunConfig, kind: &SweepKind, value: f64) -> Result<RunConfig, CliError> {
    let mut c = cfg.clone();
    match kind {
        SweepKind::Aperture(_) => {
            if !(value >= 1.0 && value.fract() == 0.0) {
                return Err(CliError::input(format!("aperture value {value} is not a positive integer")));
            }
            c.scenario.grid.p = value as usize;
            c.scenario.grid.q = value as usize;
        }
        SweepKind::Angle(_) => match &mut c.target {
            TargetSpec::PencilBeam { theta_refl_deg, .. } => *theta_refl_deg = value,
            TargetSpec::Contour { .. } => return Err(CliError::input("angle sweeps need a pencil-beam target")),
        },
    }
    Ok(c)
}

pub fn sweep(kind: SweepKind) -> Result<i32, CliError> {
    let (args, label) = match &kind {
        SweepKind::Aperture(a) => (a, "aperture"),
        SweepKind::Angle(a) => (a, "angle"),
    };
    if args.values.is_empty() {
        return Err(CliError::input("sweep needs a non-empty --values list"));
    }
    let (cfg, base, out) = prepare(&args.run)?;
    // Validate every variant before running any.
    let variants = args
        .values
        .iter()
        .map(|&v| sweep_config(&cfg, &kind, v))
        .collect::<Result<Vec<_>, _>>()?;
    ensure_dir(&out)?;
    let mut csv = String::from("value,P_max,phi_final,delta_e_db,status\n");
    let mut failed = 0;
    for (i, (value, mut run_cfg)) in args.values.iter().copied().zip(variants).enumerate() {
        run_cfg.synthesis.seed = derive_seed(cfg.synthesis.seed, i);
        let dir = out.join(format!("run_{i:03}_{value}"));
        match pipeline::run(&run_cfg, base.as_deref(), Some(&dir)) {
            Ok(s) => {
                println!(
                    "{label} {value}: P_max = {:.6}, Phi_final = {:.6e}, Delta_E = {:.4} dB",
                    s.p_max, s.phi_final, s.delta_e_db
                );
                csv.push_str(&format!("{value},{:e},{:e},{:e},ok\n", s.p_max, s.phi_final, s.delta_e_db));
            }
            Err(e) => {
                failed += 1;
                eprintln!("{label} {value}: failed: {e}");
                csv.push_str(&format!("{value},NaN,NaN,NaN,\"failed: {}\"\n", e.message.replace('"', "'")));
            }
        }
    }
    let summary_path = out.join("summary.csv");
    std::fs::write(&summary_path, csv).map_err(|e| CliError::runtime(format!("cannot write {}: {e}", summary_path.display())))?;
    let meta = json!({ "config_hash": cfg.hash(), "sweep": label, "values": args.values, "master_seed": cfg.synthesis.seed });
    let meta_path = out.join("summary.meta.json");
    std::fs::write(&meta_path, serde_json::to_string_pretty(&meta).expect("json") + "\n")
        .map_err(|e| CliError::runtime(format!("cannot write {}: {e}", meta_path.display())))?;
    println!("summary in {}", summary_path.display());
    Ok(if failed > 0 { 1 } else { 0 })
}

#[derive(Deserialize)]
struct StoredResult {
    layout_opt: Vec<Vec<f64>>,
    layout_pi: Vec<Vec<f64>>,
}

pub fn analyze(a: &AnalyzeArgs) -> Result<i32, CliError> {
    let cfg = RunConfig::load(&a.config)?;
    let base = a.config.parent().map(Path::to_path_buf);
    let text = std::fs::read_to_string(&a.result).map_err(|e| CliError::input(format!("cannot read {}: {e}", a.result.display())))?;
    let stored: StoredResult = serde_json::from_str(&text).map_err(|e| CliError::input(format!("result file: {e}")))?;
    let scenario = cfg.scenario()?;
    let db = cfg.database(base.as_deref())?;
    let (p, q) = (scenario.grid.p_count, scenario.grid.q_count);
    let opt = layout_from_matrix(&db, &stored.layout_opt, p, q)?;
    let pi = layout_from_matrix(&db, &stored.layout_pi, p, q)?;
    let operator = assemble_operator(&scenario.grid, &scenario.observation, scenario.wave.k0());
    let field_opt = layout_field(&scenario, &db, &operator, &opt)?;
    let field_pi = layout_field(&scenario, &db, &operator, &pi)?;
    let out = a
        .out
        .clone()
        .unwrap_or_else(|| a.result.parent().map(Path::to_path_buf).unwrap_or_default());
    ensure_dir(&out)?;
    pipeline::write_field_artifacts(&out, &cfg, &scenario, &field_opt, &field_pi, &cfg.hash())?;
    let map = emskin::analysis::power_improvement_map(&field_opt, &field_pi, &scenario.observation)
        .map_err(|e| CliError::in_module("analysis", e))?;
    println!("P_max = {:.6} at {}", map.p_max, describe(&scenario, map.peak_index));
    println!("maps in {}", out.display());
    Ok(0)
}
