//! Alternating layout / null-space minimization of the current-matching cost
//!
//! Phi(D, beta) = sum |J(D) - J~(beta)|^2 / sum |J~(beta)|^2,   J~ = J_PI + J_NS(beta).
//!
//! Each outer iteration runs an exact per-atom database search with beta fixed,
//! then a particle swarm over beta with the layout fixed. Both phases are
//! non-increasing in Phi, and the recorded trace is checked to stay so.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::atomdb::{current_for_reflection, AtomDatabase};
use crate::forward::{assemble_operator, RadiationOperator};
use crate::pso::{self, PsoConfig};
use crate::scenario::{EmsGrid, IncidentWave, Scenario};
use crate::spectral::{decompose, NullSpaceCoefficients, SpectralDecomposition};
use crate::{Complex64, CurrentVector, Error, FieldVector, Result, TwoComponent};

pub const DEFAULT_NS_MODE_CAP: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthesisConfig {
    pub eta_svd: f64,
    pub eta_phi: f64,
    /// Cap N on outer iterations.
    pub max_outer: usize,
    /// Number K of leading null modes optimized; `None` is min(S - s_th, 200).
    pub ns_mode_cap: Option<usize>,
    pub pso: PsoConfig,
    pub seed: u64,
    /// Stop after this many consecutive outer iterations without any decrease.
    pub stall_phases: Option<usize>,
    /// Independent alternations from D_PI with distinct swarm seeds; the one with
    /// the lowest final cost is kept. Restart 0 uses `seed` itself.
    pub restarts: usize,
    /// Fixed factor applied to the target; `None` rescales it so that max |J_PI|
    /// equals the largest current any database entry can carry.
    pub target_scale: Option<f64>,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            eta_svd: 0.1,
            eta_phi: 1e-4,
            max_outer: 10_000,
            ns_mode_cap: None,
            pso: PsoConfig::default(),
            seed: 0,
            stall_phases: None,
            restarts: 1,
            target_scale: None,
        }
    }
}

impl SynthesisConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| v > 0.0 && v < 1.0;
        if !unit(self.eta_svd) {
            return Err(Error::Config(format!("eta_svd = {} must lie in (0, 1)", self.eta_svd)));
        }
        if !unit(self.eta_phi) {
            return Err(Error::Config(format!("eta_phi = {} must lie in (0, 1)", self.eta_phi)));
        }
        if self.max_outer == 0 {
            return Err(Error::Config("max_outer must be at least 1".into()));
        }
        if self.ns_mode_cap == Some(0) {
            return Err(Error::Config("ns_mode_cap must be positive".into()));
        }
        if self.restarts == 0 {
            return Err(Error::Config("restarts must be at least 1".into()));
        }
        if self.stall_phases == Some(0) {
            return Err(Error::Config("stall_phases must be positive".into()));
        }
        if let Some(s) = self.target_scale {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::Config(format!("target_scale = {s} must be positive")));
            }
        }
        self.pso.validate()
    }
}

/// Database index per atom, row-major over the lattice.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub p_count: usize,
    pub q_count: usize,
    pub indices: Vec<usize>,
}

impl Layout {
    pub fn uniform(grid: &EmsGrid, index: usize) -> Self {
        Self {
            p_count: grid.p_count,
            q_count: grid.q_count,
            indices: vec![index; grid.atom_count()],
        }
    }

    /// Patch side of every atom, P rows of Q values.
    pub fn descriptor_matrix(&self, db: &AtomDatabase) -> Vec<Vec<f64>> {
        self.indices
            .chunks(self.q_count)
            .map(|row| row.iter().map(|&i| db.entries()[i].descriptor.patch_side()).collect())
            .collect()
    }

    /// Fabrication CSV: one row per lattice row p, patch sides in metres.
    pub fn to_csv(&self, db: &AtomDatabase) -> String {
        let mut out = String::new();
        for row in self.descriptor_matrix(db) {
            let cells: Vec<String> = row.iter().map(|d| format!("{d:e}")).collect();
            let _ = writeln!(out, "{}", cells.join(","));
        }
        out
    }
}

/// Phi = sum |J - J~|^2 / sum |J~|^2.
pub fn cost_phi(j_induced: &CurrentVector, j_tilde: &CurrentVector) -> Result<f64> {
    if j_induced.len() != j_tilde.len() {
        return Err(Error::Dimension {
            expected: j_tilde.len(),
            found: j_induced.len(),
        });
    }
    let den = j_tilde.norm_sq();
    if !(den > 0.0) {
        return Err(Error::Config("reference current has zero norm".into()));
    }
    Ok(residual_sq(j_induced, j_tilde) / den)
}

fn residual_sq(a: &CurrentVector, b: &CurrentVector) -> f64 {
    (0..a.len())
        .map(|i| (a.x[i] - b.x[i]).norm_sqr() + (a.y[i] - b.y[i]).norm_sqr())
        .sum()
}

/// Per-entry currents at the lattice origin and per-atom incident phases.
///
/// The current of entry e at atom a is `base[e] * phase[a]`.
#[derive(Debug, Clone)]
pub struct AtomCurrents {
    pub base: Vec<[Complex64; 2]>,
    pub phase: Vec<Complex64>,
}

impl AtomCurrents {
    pub fn new(db: &AtomDatabase, wave: &IncidentWave, grid: &EmsGrid) -> Self {
        let basis = wave.basis();
        let origin = nalgebra::Vector3::zeros();
        let base = db
            .entries()
            .iter()
            .map(|e| current_for_reflection(&e.reflection, wave, &basis, &origin))
            .collect();
        let k = wave.wave_vector();
        let phase = (0..grid.atom_count())
            .map(|a| Complex64::from_polar(1.0, -k.dot(&grid.atom_center(a))))
            .collect();
        Self { base, phase }
    }

    pub fn at(&self, entry: usize, atom: usize) -> [Complex64; 2] {
        let b = &self.base[entry];
        let ph = self.phase[atom];
        [b[0] * ph, b[1] * ph]
    }

    pub fn induced(&self, layout: &Layout) -> CurrentVector {
        let (x, y) = layout
            .indices
            .iter()
            .enumerate()
            .map(|(a, &e)| {
                let c = self.at(e, a);
                (c[0], c[1])
            })
            .unzip();
        TwoComponent { x, y }
    }

    /// Largest |J| any entry produces.
    pub fn max_magnitude(&self) -> f64 {
        self.base
            .iter()
            .map(|b| (b[0].norm_sqr() + b[1].norm_sqr()).sqrt())
            .fold(0.0, f64::max)
    }

    /// Per-atom exhaustive search; ties go to the lower database index.
    pub fn best_layout(&self, grid: &EmsGrid, j_tilde: &CurrentVector) -> Layout {
        let indices = (0..grid.atom_count())
            .into_par_iter()
            .map(|a| {
                let (tx, ty) = (j_tilde.x[a], j_tilde.y[a]);
                let mut best = (f64::INFINITY, 0);
                for e in 0..self.base.len() {
                    let c = self.at(e, a);
                    let err = (c[0] - tx).norm_sqr() + (c[1] - ty).norm_sqr();
                    if err < best.0 {
                        best = (err, e);
                    }
                }
                best.1
            })
            .collect();
        Layout {
            p_count: grid.p_count,
            q_count: grid.q_count,
            indices,
        }
    }
}

/// Layout whose induced currents best match `j_tilde` atom by atom.
pub fn ems_update(db: &AtomDatabase, j_tilde: &CurrentVector, wave: &IncidentWave, grid: &EmsGrid) -> Result<Layout> {
    if j_tilde.len() != grid.atom_count() {
        return Err(Error::Dimension {
            expected: grid.atom_count(),
            found: j_tilde.len(),
        });
    }
    Ok(AtomCurrents::new(db, wave, grid).best_layout(grid, j_tilde))
}

/// Closed form of Phi(D, beta) for fixed D, exploiting orthonormality of the null
/// modes and their orthogonality to J_PI.
#[derive(Debug, Clone)]
pub struct NullSpaceCost {
    /// |J(D) - J_PI|^2
    pub residual_sq: f64,
    /// |J_PI|^2
    pub reference_sq: f64,
    /// <V_k, conj(d) . (J(D) - J_PI)>
    pub projections: Vec<Complex64>,
}

impl NullSpaceCost {
    pub fn eval(&self, beta: &[Complex64]) -> f64 {
        let mut b2 = 0.0;
        let mut cross = 0.0;
        for (b, g) in beta.iter().zip(&self.projections) {
            b2 += b.norm_sqr();
            cross += (b.conj() * g).re;
        }
        (self.residual_sq - 2.0 * cross + b2).max(0.0) / (self.reference_sq + b2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Layout,
    NullSpace,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseCost {
    pub outer: usize,
    pub phase: Phase,
    pub cost: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationReason {
    LayoutCostThreshold,
    NullSpaceCostThreshold,
    MaxOuter,
    Stalled,
}

/// Everything fixed across the alternating loop.
pub struct SynthesisProblem<'a> {
    pub db: &'a AtomDatabase,
    pub grid: EmsGrid,
    pub operator: RadiationOperator,
    pub decomposition: SpectralDecomposition,
    pub currents: AtomCurrents,
    /// Target after scaling.
    pub target: FieldVector,
    pub target_scale: f64,
    pub j_pi: CurrentVector,
    /// In-plane polarization of the null-space currents.
    pub direction: [Complex64; 2],
    /// Number K of optimized null modes.
    pub mode_count: usize,
    /// Feasible set |beta| <= radius.
    pub radius: f64,
}

/// Independent seed number `index` under `master` (splitmix64 finalizer).
pub fn derive_seed(master: u64, index: usize) -> u64 {
    let mut z = master ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of alternation `r`; restart 0 keeps the master seed so a single run is
/// unaffected by the restart machinery.
pub fn restart_seed(master: u64, r: usize) -> u64 {
    if r == 0 {
        master
    } else {
        derive_seed(!master, r)
    }
}

impl<'a> SynthesisProblem<'a> {
    pub fn new(scenario: &Scenario, db: &'a AtomDatabase, target: &FieldVector, config: &SynthesisConfig) -> Result<Self> {
        let operator = assemble_operator(&scenario.grid, &scenario.observation, scenario.wave.k0());
        let decomposition = decompose(&operator, config.eta_svd)?;
        Self::from_parts(scenario, db, operator, decomposition, target, config)
    }

    /// Reuses an already computed operator and decomposition.
    pub fn from_parts(
        scenario: &Scenario,
        db: &'a AtomDatabase,
        operator: RadiationOperator,
        decomposition: SpectralDecomposition,
        target: &FieldVector,
        config: &SynthesisConfig,
    ) -> Result<Self> {
        config.validate()?;
        if target.len() != operator.sample_count() {
            return Err(Error::Dimension {
                expected: operator.sample_count(),
                found: target.len(),
            });
        }
        if decomposition.eta_svd != config.eta_svd {
            return Err(Error::Config("decomposition was computed for a different eta_svd".into()));
        }
        let grid = scenario.grid.clone();
        let currents = AtomCurrents::new(db, &scenario.wave, &grid);
        let raw_pi = decomposition.pre_image_current(target)?;
        let peak = raw_pi.max_magnitude();
        if !(peak > 0.0) {
            return Err(Error::Target("target has no component in the radiating subspace".into()));
        }
        let target_scale = config.target_scale.unwrap_or(currents.max_magnitude() / peak);
        let scale = Complex64::new(target_scale, 0.0);
        let target = target.scale(scale);
        let j_pi = raw_pi.scale(scale);

        let mode_count = config
            .ns_mode_cap
            .unwrap_or(DEFAULT_NS_MODE_CAP)
            .min(decomposition.null_dimension());
        // |L J_NS| <= sigma_{s_th+1} |beta|, so this radius keeps the null-space
        // radiation below eta_svd |L J_PI|.
        let mut radius = config.pso.gamma * j_pi.norm();
        if mode_count > 0 {
            let sigma_next = decomposition.singular_values[decomposition.s_th];
            if sigma_next > 0.0 {
                let radiated = operator.radiate(&j_pi)?.norm();
                radius = radius.min(config.eta_svd * radiated / sigma_next);
            }
        }
        Ok(Self {
            db,
            grid,
            direction: scenario.wave.basis().te_transverse(),
            operator,
            decomposition,
            currents,
            target,
            target_scale,
            j_pi,
            mode_count,
            radius,
        })
    }

    pub fn zero_beta(&self) -> NullSpaceCoefficients {
        NullSpaceCoefficients::zeros(self.mode_count, self.direction)
    }

    /// J~(beta) = J_PI + J_NS(beta).
    pub fn reference_current(&self, beta: &NullSpaceCoefficients) -> Result<CurrentVector> {
        Ok(self.j_pi.add(&self.decomposition.null_space_current(beta)?))
    }

    pub fn induced(&self, layout: &Layout) -> CurrentVector {
        self.currents.induced(layout)
    }

    pub fn cost(&self, layout: &Layout, beta: &NullSpaceCoefficients) -> Result<f64> {
        cost_phi(&self.induced(layout), &self.reference_current(beta)?)
    }

    pub fn ems_update(&self, beta: &NullSpaceCoefficients) -> Result<Layout> {
        Ok(self.currents.best_layout(&self.grid, &self.reference_current(beta)?))
    }

    pub fn null_space_cost(&self, layout: &Layout) -> NullSpaceCost {
        let r0 = self.induced(layout).sub(&self.j_pi);
        let p = r0.project_onto(self.direction);
        NullSpaceCost {
            residual_sq: r0.norm_sq(),
            reference_sq: self.j_pi.norm_sq(),
            projections: self.decomposition.null_space_projections(&p, self.mode_count),
        }
    }

    /// Swarm search over beta with the layout fixed. Never returns a beta whose
    /// directly evaluated cost exceeds that of `beta_prev`.
    pub fn ns_update(
        &self,
        layout: &Layout,
        beta_prev: &NullSpaceCoefficients,
        pso_cfg: &PsoConfig,
        seed: u64,
    ) -> Result<NullSpaceCoefficients> {
        if beta_prev.values.len() != self.mode_count {
            return Err(Error::Dimension {
                expected: self.mode_count,
                found: beta_prev.values.len(),
            });
        }
        if self.mode_count == 0 {
            return Ok(beta_prev.clone());
        }
        let model = self.null_space_cost(layout);
        let out = pso::minimize(|b| model.eval(b), &beta_prev.values, self.radius, pso_cfg, seed);
        let candidate = NullSpaceCoefficients {
            values: out.best,
            direction: self.direction,
        };
        if candidate == *beta_prev || self.cost(layout, &candidate)? > self.cost(layout, beta_prev)? {
            return Ok(beta_prev.clone());
        }
        Ok(candidate)
    }

    /// Runs `config.restarts` alternations and keeps the lowest final cost
    /// (ties go to the earlier restart).
    pub fn run(&self, config: &SynthesisConfig) -> Result<SynthesisResult> {
        config.validate()?;
        let mut best: Option<SynthesisResult> = None;
        let mut costs = Vec::with_capacity(config.restarts);
        for r in 0..config.restarts {
            let attempt = self.run_once(config, restart_seed(config.seed, r))?;
            costs.push(attempt.cost_opt);
            if best.as_ref().is_none_or(|b| attempt.cost_opt < b.cost_opt) {
                best = Some(SynthesisResult { restart: r, ..attempt });
            }
        }
        let mut best = best.expect("at least one restart");
        best.restart_costs = costs;
        Ok(best)
    }

    fn run_once(&self, config: &SynthesisConfig, seed: u64) -> Result<SynthesisResult> {
        let mut beta = self.zero_beta();
        let mut trace = Vec::new();
        let mut layout_pi = None;
        let mut best_outer_cost = f64::INFINITY;
        let mut stalled_for = 0;
        let mut termination = TerminationReason::MaxOuter;
        let mut layout;
        let mut outer = 0;
        loop {
            outer += 1;
            layout = self.ems_update(&beta)?;
            let c = self.cost(&layout, &beta)?;
            trace.push(PhaseCost {
                outer,
                phase: Phase::Layout,
                cost: c,
            });
            if layout_pi.is_none() {
                layout_pi = Some(layout.clone());
            }
            if c <= config.eta_phi {
                termination = TerminationReason::LayoutCostThreshold;
                break;
            }
            beta = self.ns_update(&layout, &beta, &config.pso, derive_seed(seed, outer))?;
            let c = self.cost(&layout, &beta)?;
            trace.push(PhaseCost {
                outer,
                phase: Phase::NullSpace,
                cost: c,
            });
            if c <= config.eta_phi {
                termination = TerminationReason::NullSpaceCostThreshold;
                break;
            }
            if outer >= config.max_outer {
                break;
            }
            if c < best_outer_cost {
                best_outer_cost = c;
                stalled_for = 0;
            } else {
                stalled_for += 1;
                if config.stall_phases.is_some_and(|k| stalled_for >= k) {
                    termination = TerminationReason::Stalled;
                    break;
                }
            }
        }
        let layout_pi = layout_pi.expect("at least one phase ran");
        let cost_pi = self.cost(&layout_pi, &self.zero_beta())?;
        let cost_opt = trace.last().expect("non-empty trace").cost;
        let field_opt = self.operator.radiate(&self.induced(&layout))?;
        let field_pi = self.operator.radiate(&self.induced(&layout_pi))?;
        Ok(SynthesisResult {
            layout_opt: layout,
            layout_pi,
            beta_opt: beta,
            cost_trace: trace,
            cost_pi,
            cost_opt,
            termination,
            outer_iterations: outer,
            seed,
            restart: 0,
            restart_costs: Vec::new(),
            s_th: self.decomposition.s_th,
            mode_count: self.mode_count,
            target_scale: self.target_scale,
            beta_radius: self.radius,
            field_opt,
            field_pi,
        })
    }
}

/// Builds the problem and runs the alternating loop.
pub fn run_alternating(scenario: &Scenario, db: &AtomDatabase, target: &FieldVector, config: &SynthesisConfig) -> Result<SynthesisResult> {
    SynthesisProblem::new(scenario, db, target, config)?.run(config)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisResult {
    pub layout_opt: Layout,
    /// D_PI = D_1, the layout matching J_PI alone.
    pub layout_pi: Layout,
    pub beta_opt: NullSpaceCoefficients,
    pub cost_trace: Vec<PhaseCost>,
    /// Phi(D_PI, 0)
    pub cost_pi: f64,
    /// Phi(D_opt, beta_opt)
    pub cost_opt: f64,
    pub termination: TerminationReason,
    pub outer_iterations: usize,
    /// Swarm seed of the kept alternation.
    pub seed: u64,
    /// Index of the kept alternation and the final cost of every alternation.
    pub restart: usize,
    pub restart_costs: Vec<f64>,
    pub s_th: usize,
    pub mode_count: usize,
    pub target_scale: f64,
    pub beta_radius: f64,
    pub field_opt: FieldVector,
    pub field_pi: FieldVector,
}

#[derive(Serialize)]
struct ResultRecord<'r> {
    layout_opt: Vec<Vec<f64>>,
    layout_pi: Vec<Vec<f64>>,
    beta_opt: Vec<[f64; 2]>,
    beta_direction: [[f64; 2]; 2],
    cost_trace: &'r [PhaseCost],
    cost_pi: f64,
    cost_opt: f64,
    termination: TerminationReason,
    outer_iterations: usize,
    seed: u64,
    restart: usize,
    restart_costs: &'r [f64],
    s_th: usize,
    mode_count: usize,
    target_scale: f64,
    beta_radius: f64,
}

impl SynthesisResult {
    /// Result record with descriptors in metres and beta as (re, im) pairs.
    pub fn to_json(&self, db: &AtomDatabase) -> Result<serde_json::Value> {
        let pair = |c: &Complex64| [c.re, c.im];
        let record = ResultRecord {
            layout_opt: self.layout_opt.descriptor_matrix(db),
            layout_pi: self.layout_pi.descriptor_matrix(db),
            beta_opt: self.beta_opt.values.iter().map(pair).collect(),
            beta_direction: [pair(&self.beta_opt.direction[0]), pair(&self.beta_opt.direction[1])],
            cost_trace: &self.cost_trace,
            cost_pi: self.cost_pi,
            cost_opt: self.cost_opt,
            termination: self.termination,
            outer_iterations: self.outer_iterations,
            seed: self.seed,
            restart: self.restart,
            restart_costs: &self.restart_costs,
            s_th: self.s_th,
            mode_count: self.mode_count,
            target_scale: self.target_scale,
            beta_radius: self.beta_radius,
        };
        Ok(serde_json::to_value(record)?)
    }

    pub fn write_json(&self, db: &AtomDatabase, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(&self.to_json(db)?)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// True when no recorded phase raised the cost.
    pub fn trace_is_monotone(&self) -> bool {
        self.cost_trace.windows(2).all(|w| w[1].cost <= w[0].cost)
    }
}
