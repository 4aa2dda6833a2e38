//! Seeded, synchronous particle swarm over complex vectors confined to a ball.
//!
//! Particle `i` draws from its own ChaCha8 stream `i` under the caller's seed,
//! and the swarm best is reduced in particle order after every iteration, so the
//! result does not depend on how many worker threads evaluate the costs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{Complex64, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PsoConfig {
    pub swarm_size: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    pub iterations: usize,
    /// Velocity norm cap as a fraction of the ball radius.
    pub velocity_clamp_fraction: f64,
    /// Spread of the initial swarm around the start point, as a fraction of the radius.
    pub init_spread_fraction: f64,
    /// Ball radius relative to the pre-image current norm.
    pub gamma: f64,
}

impl Default for PsoConfig {
    fn default() -> Self {
        Self {
            swarm_size: 40,
            inertia: 0.7298,
            cognitive: 1.49618,
            social: 1.49618,
            iterations: 50,
            velocity_clamp_fraction: 0.2,
            init_spread_fraction: 0.1,
            gamma: 1.0,
        }
    }
}

impl PsoConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("pso: {m}")));
        if self.swarm_size < 2 {
            return bad("swarm_size must be at least 2");
        }
        if !(self.inertia > 0.0 && self.inertia < 1.0) {
            return bad("inertia must lie in (0, 1)");
        }
        if !(self.cognitive >= 0.0 && self.social >= 0.0) {
            return bad("acceleration coefficients must be non-negative");
        }
        if !(self.velocity_clamp_fraction > 0.0 && self.init_spread_fraction > 0.0 && self.gamma > 0.0) {
            return bad("velocity clamp, initial spread and gamma must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsoOutcome {
    pub best: Vec<Complex64>,
    pub best_cost: f64,
    pub evaluations: usize,
}

struct Particle {
    rng: ChaCha8Rng,
    x: Vec<f64>,
    v: Vec<f64>,
    best_x: Vec<f64>,
    best_cost: f64,
    cost: f64,
}

fn to_real(z: &[Complex64]) -> Vec<f64> {
    z.iter().flat_map(|c| [c.re, c.im]).collect()
}

fn to_complex(x: &[f64]) -> Vec<Complex64> {
    x.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect()
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn clamp_norm(x: &mut [f64], cap: f64) {
    let n = norm(x);
    if n > cap {
        let s = cap / n;
        x.iter_mut().for_each(|v| *v *= s);
    }
}

fn sanitize(c: f64) -> f64 {
    if c.is_nan() {
        f64::INFINITY
    } else {
        c
    }
}

/// Minimizes `cost` over { z : |z| <= radius }.
///
/// Particle 0 starts at `start` (unprojected), so the returned cost never
/// exceeds `cost(start)`. An empty `start` is returned unchanged.
pub fn minimize<F>(cost: F, start: &[Complex64], radius: f64, cfg: &PsoConfig, seed: u64) -> PsoOutcome
where
    F: Fn(&[Complex64]) -> f64 + Sync,
{
    let start_cost = sanitize(cost(start));
    if start.is_empty() || !(radius > 0.0) || cfg.iterations == 0 {
        return PsoOutcome {
            best: start.to_vec(),
            best_cost: start_cost,
            evaluations: 1,
        };
    }
    let dim = 2 * start.len();
    let x0 = to_real(start);
    let vmax = cfg.velocity_clamp_fraction * radius;
    let spread = cfg.init_spread_fraction * radius;
    // Per-dimension half-width giving an RMS offset norm of `spread`.
    let half = spread * (3.0 / dim as f64).sqrt();

    let mut swarm: Vec<Particle> = (0..cfg.swarm_size)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let mut x = x0.clone();
            let mut v = vec![0.0; dim];
            if i > 0 {
                for xi in x.iter_mut() {
                    *xi += rng.random_range(-half..=half);
                }
                clamp_norm(&mut x, radius);
                for vi in v.iter_mut() {
                    *vi = rng.random_range(-half..=half);
                }
            }
            Particle {
                rng,
                best_x: x.clone(),
                x,
                v,
                best_cost: f64::INFINITY,
                cost: f64::INFINITY,
            }
        })
        .collect();

    swarm[0].cost = start_cost;
    swarm[1..].par_iter_mut().for_each(|p| p.cost = sanitize(cost(&to_complex(&p.x))));
    let mut evaluations = cfg.swarm_size;
    let (mut g_x, mut g_cost) = (x0.clone(), start_cost);
    for p in swarm.iter_mut() {
        p.best_cost = p.cost;
        p.best_x.clone_from(&p.x);
        if p.cost < g_cost {
            g_cost = p.cost;
            g_x.clone_from(&p.x);
        }
    }

    for _ in 0..cfg.iterations {
        let gbest = &g_x;
        swarm.par_iter_mut().for_each(|p| {
            for (d, &g) in gbest.iter().enumerate() {
                let r1: f64 = p.rng.random();
                let r2: f64 = p.rng.random();
                p.v[d] = cfg.inertia * p.v[d] + cfg.cognitive * r1 * (p.best_x[d] - p.x[d]) + cfg.social * r2 * (g - p.x[d]);
            }
            clamp_norm(&mut p.v, vmax);
            for d in 0..dim {
                p.x[d] += p.v[d];
            }
            clamp_norm(&mut p.x, radius);
            p.cost = sanitize(cost(&to_complex(&p.x)));
        });
        evaluations += cfg.swarm_size;
        for p in swarm.iter_mut() {
            if p.cost < p.best_cost {
                p.best_cost = p.cost;
                p.best_x.clone_from(&p.x);
            }
            if p.cost < g_cost {
                g_cost = p.cost;
                g_x.clone_from(&p.x);
            }
        }
    }

    PsoOutcome {
        best: to_complex(&g_x),
        best_cost: g_cost,
        evaluations,
    }
}
