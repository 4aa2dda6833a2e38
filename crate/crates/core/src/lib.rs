//! Synthesis of static passive electromagnetic skins (SP-EMS) by an inverse-source
//! method.
//!
//! The ideal surface current that radiates a requested footprint is split into a
//! pre-image part (truncated pseudo-inverse of the radiation operator) and a
//! null-space part spanned by the weakly radiating singular modes. The layout of
//! printed meta-atoms and the null-space coefficients are then optimized in
//! alternation: an exhaustive per-atom database search followed by a particle
//! swarm over the coefficients.
//!
//! Module map:
//!
//! - [`scenario`]: incident wave, skin lattice and observation domain.
//! - [`atomdb`]: meta-atom reflection database and induced currents.
//! - [`forward`]: discretized far-field radiation operator.
//! - [`spectral`]: SVD, truncation index, pre-image and null-space currents.
//! - [`targets`]: pencil-beam and contoured footprint targets.
//! - [`synthesis`]: the alternating layout / null-space optimization.
//! - [`analysis`]: power improvement maps, field ratios and cuts.

// Guards of the form `!(x > 0.0)` are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod atomdb;
pub mod error;
pub mod forward;
pub mod pso;
pub mod scenario;
pub mod spectral;
pub mod synthesis;
pub mod targets;

pub use error::{Error, Result};
pub use num_complex::Complex64;

/// Two complex samples per point, stored component-major.
///
/// Used both for per-atom currents on the skin and for reflected field samples in
/// the observation domain; the component order is always (x, y).
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TwoComponent {
    pub x: Vec<Complex64>,
    pub y: Vec<Complex64>,
}

/// Per-atom equivalent surface current, row-major over the skin lattice.
pub type CurrentVector = TwoComponent;
/// Reflected field samples, in observation-domain order.
pub type FieldVector = TwoComponent;

impl TwoComponent {
    pub fn zeros(len: usize) -> Self {
        Self {
            x: vec![Complex64::new(0.0, 0.0); len],
            y: vec![Complex64::new(0.0, 0.0); len],
        }
    }

    pub fn from_components(x: Vec<Complex64>, y: Vec<Complex64>) -> Self {
        assert_eq!(x.len(), y.len(), "component lengths differ");
        Self { x, y }
    }

    /// Places a scalar distribution along a fixed complex direction.
    pub fn along(values: &[Complex64], direction: [Complex64; 2]) -> Self {
        Self {
            x: values.iter().map(|v| v * direction[0]).collect(),
            y: values.iter().map(|v| v * direction[1]).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Squared magnitude |v_x|^2 + |v_y|^2 of sample `i`.
    pub fn magnitude_sq(&self, i: usize) -> f64 {
        self.x[i].norm_sqr() + self.y[i].norm_sqr()
    }

    pub fn magnitude(&self, i: usize) -> f64 {
        self.magnitude_sq(i).sqrt()
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.magnitude(i)).collect()
    }

    pub fn norm_sq(&self) -> f64 {
        (0..self.len()).map(|i| self.magnitude_sq(i)).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn max_magnitude(&self) -> f64 {
        (0..self.len()).map(|i| self.magnitude(i)).fold(0.0, f64::max)
    }

    pub fn scale(&self, factor: Complex64) -> Self {
        Self {
            x: self.x.iter().map(|v| v * factor).collect(),
            y: self.y.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.len(), other.len());
        Self {
            x: self.x.iter().zip(&other.x).map(|(a, b)| a + b).collect(),
            y: self.y.iter().zip(&other.y).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.len(), other.len());
        Self {
            x: self.x.iter().zip(&other.x).map(|(a, b)| a - b).collect(),
            y: self.y.iter().zip(&other.y).map(|(a, b)| a - b).collect(),
        }
    }

    /// Inner product <self, other> = sum conj(self) * other over both components.
    pub fn inner(&self, other: &Self) -> Complex64 {
        assert_eq!(self.len(), other.len());
        let dot = |a: &[Complex64], b: &[Complex64]| a.iter().zip(b).fold(Complex64::new(0.0, 0.0), |acc, (p, q)| acc + p.conj() * q);
        dot(&self.x, &other.x) + dot(&self.y, &other.y)
    }

    /// Projects every sample onto `direction`: returns conj(d) . v per point.
    pub fn project_onto(&self, direction: [Complex64; 2]) -> Vec<Complex64> {
        let (dx, dy) = (direction[0].conj(), direction[1].conj());
        self.x.iter().zip(&self.y).map(|(a, b)| dx * a + dy * b).collect()
    }
}
