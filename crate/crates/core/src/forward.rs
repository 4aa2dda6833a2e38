//! Discretized far-field radiation operator.
//!
//! Entry (m, pq) of the scalar kernel is
//!
//! ```text
//! (j k0 / 4 pi) * exp(-j k0 r_m) / r_m * exp(j k0 r_hat_m . r_pq) * cell_area
//! ```
//!
//! and the same kernel acts on the x and y current components independently.

use std::f64::consts::PI;

use faer::linalg::matmul::matmul;
use faer::{Accum, Mat, MatRef, Par};
use rayon::prelude::*;

use crate::scenario::{EmsGrid, ObservationDomain};
use crate::{Complex64, CurrentVector, Error, FieldVector, Result};

#[derive(Debug, Clone)]
pub struct RadiationOperator {
    matrix: Mat<Complex64>,
    pub k0: f64,
    pub grid: EmsGrid,
}

/// Computes one kernel entry.
pub fn kernel_entry(k0: f64, distance: f64, direction_dot_source: f64, cell_area: f64) -> Complex64 {
    let prefactor = Complex64::new(0.0, k0 / (4.0 * PI));
    let spreading = Complex64::from_polar(1.0 / distance, -k0 * distance);
    prefactor * spreading * Complex64::from_polar(1.0, k0 * direction_dot_source) * cell_area
}

/// Assembles the M x (P Q) kernel, rows in observation order.
pub fn assemble_operator(grid: &EmsGrid, obs: &ObservationDomain, k0: f64) -> RadiationOperator {
    let n = grid.atom_count();
    let m = obs.len();
    let area = grid.cell_size_m * grid.cell_size_m;
    let offsets: Vec<_> = (0..n).map(|i| grid.atom_offset(i)).collect();
    // Rows are independent; each is filled by exactly one worker.
    let rows: Vec<Vec<Complex64>> = obs
        .samples
        .par_iter()
        .map(|s| {
            offsets
                .iter()
                .map(|r| kernel_entry(k0, s.distance, s.direction.dot(r), area))
                .collect()
        })
        .collect();
    let matrix = Mat::from_fn(m, n, |i, j| rows[i][j]);
    RadiationOperator {
        matrix,
        k0,
        grid: grid.clone(),
    }
}

impl RadiationOperator {
    pub fn matrix(&self) -> MatRef<'_, Complex64> {
        self.matrix.as_ref()
    }

    pub fn sample_count(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn atom_count(&self) -> usize {
        self.matrix.ncols()
    }

    /// E = L J applied per component.
    pub fn radiate(&self, j: &CurrentVector) -> Result<FieldVector> {
        check_len(self.atom_count(), j.len())?;
        let rhs = two_column(j);
        let mut out = Mat::<Complex64>::zeros(self.sample_count(), 2);
        matmul(
            out.as_mut(),
            Accum::Replace,
            self.matrix.as_ref(),
            rhs.as_ref(),
            Complex64::new(1.0, 0.0),
            Par::Seq,
        );
        Ok(split_columns(&out))
    }

    /// J = L^H E applied per component.
    pub fn adjoint_radiate(&self, e: &FieldVector) -> Result<CurrentVector> {
        check_len(self.sample_count(), e.len())?;
        let rhs = two_column(e);
        let mut out = Mat::<Complex64>::zeros(self.atom_count(), 2);
        matmul(
            out.as_mut(),
            Accum::Replace,
            self.matrix.adjoint(),
            rhs.as_ref(),
            Complex64::new(1.0, 0.0),
            Par::Seq,
        );
        Ok(split_columns(&out))
    }
}

fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::Dimension { expected, found })
    }
}

fn two_column(v: &crate::TwoComponent) -> Mat<Complex64> {
    Mat::from_fn(v.len(), 2, |i, c| if c == 0 { v.x[i] } else { v.y[i] })
}

fn split_columns(m: &Mat<Complex64>) -> crate::TwoComponent {
    let x = (0..m.nrows()).map(|i| m[(i, 0)]).collect();
    let y = (0..m.nrows()).map(|i| m[(i, 1)]).collect();
    crate::TwoComponent { x, y }
}
