//! Singular value decomposition of the radiation kernel, and the currents built
//! from it.
//!
//! Modes s <= s_th (sigma_s / sigma_1 >= eta_svd) form the pre-image subspace;
//! the remaining modes s > s_th are treated as the null space. Pre-image currents
//! are per component; null-space currents are excited along a fixed in-plane
//! polarization carried by [`NullSpaceCoefficients`].

use std::fmt::Write as _;
use std::path::Path;

use faer::diag::Diag;
use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::matmul::matmul;
use faer::linalg::svd::{svd, svd_scratch, ComputeSvdVectors};
use faer::{Accum, Mat, MatRef, Par};

use crate::forward::RadiationOperator;
use crate::{Complex64, CurrentVector, Error, FieldVector, Result, TwoComponent};

#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub singular_values: Vec<f64>,
    u: Mat<Complex64>,
    v: Mat<Complex64>,
    pub s_th: usize,
    pub eta_svd: f64,
}

/// Number of leading singular values with sigma_s / sigma_1 >= eta.
pub fn truncation_index(singular_values: &[f64], eta_svd: f64) -> usize {
    let Some(&first) = singular_values.first() else {
        return 0;
    };
    singular_values.iter().take_while(|&&s| s / first >= eta_svd).count()
}

/// Thin SVD of an arbitrary complex matrix, computed sequentially so the result
/// does not depend on the worker count.
pub fn thin_svd(a: MatRef<'_, Complex64>) -> Result<(Vec<f64>, Mat<Complex64>, Mat<Complex64>)> {
    let (m, n) = a.shape();
    let size = m.min(n);
    let mut u = Mat::<Complex64>::zeros(m, size);
    let mut v = Mat::<Complex64>::zeros(n, size);
    let mut s = Diag::<Complex64>::zeros(size);
    let par = Par::Seq;
    let mut buf = MemBuffer::new(svd_scratch::<Complex64>(
        m,
        n,
        ComputeSvdVectors::Thin,
        ComputeSvdVectors::Thin,
        par,
        Default::default(),
    ));
    svd(
        a,
        s.as_mut(),
        Some(u.as_mut()),
        Some(v.as_mut()),
        par,
        MemStack::new(&mut buf),
        Default::default(),
    )
    .map_err(|e| Error::Svd(format!("{e:?} on a {m}x{n} kernel")))?;
    let sv = s.column_vector();
    let values = (0..size).map(|i| sv[i].re).collect();
    Ok((values, u, v))
}

/// Full (thin) SVD of the scalar radiation kernel with truncation at `eta_svd`.
pub fn decompose(op: &RadiationOperator, eta_svd: f64) -> Result<SpectralDecomposition> {
    if !(eta_svd > 0.0 && eta_svd < 1.0) {
        return Err(Error::Config(format!("eta_svd = {eta_svd} must lie in (0, 1)")));
    }
    let (singular_values, u, v) = thin_svd(op.matrix()).map_err(|e| Error::Svd(format!("spectral: {e}")))?;
    if singular_values.first().is_none_or(|&s| !(s > 0.0)) {
        return Err(Error::Svd("radiation kernel is identically zero".into()));
    }
    let s_th = truncation_index(&singular_values, eta_svd);
    Ok(SpectralDecomposition {
        singular_values,
        u,
        v,
        s_th,
        eta_svd,
    })
}

/// Null-space expansion coefficients beta_s for s = s_th + 1, ..., S.
///
/// `direction` is the unit complex (x, y) polarization the scalar modes are
/// excited along.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NullSpaceCoefficients {
    pub values: Vec<Complex64>,
    pub direction: [Complex64; 2],
}

impl NullSpaceCoefficients {
    pub fn zeros(len: usize, direction: [Complex64; 2]) -> Self {
        Self {
            values: vec![Complex64::new(0.0, 0.0); len],
            direction,
        }
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|b| b.norm_sqr()).sum::<f64>().sqrt()
    }
}

impl SpectralDecomposition {
    /// Builds a decomposition from explicit factors (used for hand-made kernels).
    pub fn from_parts(singular_values: Vec<f64>, u: Mat<Complex64>, v: Mat<Complex64>, eta_svd: f64) -> Self {
        let s_th = truncation_index(&singular_values, eta_svd);
        Self {
            singular_values,
            u,
            v,
            s_th,
            eta_svd,
        }
    }

    /// S = min(P Q, M).
    pub fn rank_bound(&self) -> usize {
        self.singular_values.len()
    }

    pub fn null_dimension(&self) -> usize {
        self.rank_bound() - self.s_th
    }

    pub fn left_basis(&self) -> MatRef<'_, Complex64> {
        self.u.as_ref()
    }

    pub fn right_basis(&self) -> MatRef<'_, Complex64> {
        self.v.as_ref()
    }

    /// Normalized spectrum sigma_s / sigma_1.
    pub fn normalized_spectrum(&self) -> Vec<f64> {
        let first = self.singular_values[0];
        self.singular_values.iter().map(|s| s / first).collect()
    }

    /// Right singular vector V_s (zero-based `s`).
    pub fn right_vector(&self, s: usize) -> Vec<Complex64> {
        let col = self.v.col(s);
        (0..col.nrows()).map(|i| col[i]).collect()
    }

    /// Truncated pseudo-inverse applied to each target component.
    pub fn pre_image_current(&self, target: &FieldVector) -> Result<CurrentVector> {
        let m = self.u.nrows();
        if target.len() != m {
            return Err(Error::Dimension {
                expected: m,
                found: target.len(),
            });
        }
        let r = self.s_th;
        let t = Mat::from_fn(m, 2, |i, c| if c == 0 { target.x[i] } else { target.y[i] });
        // coefficients <target, U_s> = U_s^H t
        let mut coef = Mat::<Complex64>::zeros(r, 2);
        matmul(
            coef.as_mut(),
            Accum::Replace,
            self.u.get(.., ..r).adjoint(),
            t.as_ref(),
            Complex64::new(1.0, 0.0),
            Par::Seq,
        );
        for s in 0..r {
            let inv = 1.0 / self.singular_values[s];
            coef[(s, 0)] *= inv;
            coef[(s, 1)] *= inv;
        }
        let n = self.v.nrows();
        let mut j = Mat::<Complex64>::zeros(n, 2);
        matmul(
            j.as_mut(),
            Accum::Replace,
            self.v.get(.., ..r),
            coef.as_ref(),
            Complex64::new(1.0, 0.0),
            Par::Seq,
        );
        Ok(TwoComponent {
            x: (0..n).map(|i| j[(i, 0)]).collect(),
            y: (0..n).map(|i| j[(i, 1)]).collect(),
        })
    }

    /// sum_{s > s_th} beta_s V_s, placed along `beta.direction`.
    ///
    /// `beta` may cover only the leading null modes; the rest are taken as zero.
    pub fn null_space_current(&self, beta: &NullSpaceCoefficients) -> Result<CurrentVector> {
        let k = self.null_dimension();
        if beta.values.len() > k {
            return Err(Error::Dimension {
                expected: k,
                found: beta.values.len(),
            });
        }
        let scalar = self.null_space_scalar(&beta.values);
        Ok(TwoComponent::along(&scalar, beta.direction))
    }

    /// Scalar combination sum_i c_i V_{s_th + i} over the leading len(c) null modes.
    pub fn null_space_scalar(&self, coefficients: &[Complex64]) -> Vec<Complex64> {
        let n = self.v.nrows();
        assert!(coefficients.len() <= self.null_dimension());
        let mut out = vec![Complex64::new(0.0, 0.0); n];
        for (i, c) in coefficients.iter().enumerate() {
            if *c == Complex64::new(0.0, 0.0) {
                continue;
            }
            let col = self.v.col(self.s_th + i);
            for (o, r) in out.iter_mut().enumerate() {
                *r += col[o] * c;
            }
        }
        out
    }

    /// Projections <V_{s_th + i}, w> for the first `k` null modes.
    pub fn null_space_projections(&self, w: &[Complex64], k: usize) -> Vec<Complex64> {
        assert!(k <= self.null_dimension());
        (0..k)
            .map(|i| {
                let col = self.v.col(self.s_th + i);
                (0..col.nrows()).fold(Complex64::new(0.0, 0.0), |acc, r| acc + col[r].conj() * w[r])
            })
            .collect()
    }

    /// J_PI + J_NS.
    pub fn total_current(&self, target: &FieldVector, beta: &NullSpaceCoefficients) -> Result<CurrentVector> {
        Ok(self.pre_image_current(target)?.add(&self.null_space_current(beta)?))
    }

    /// Writes `s,sigma_normalized` rows (1-based s).
    pub fn write_spectrum_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.spectrum_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn spectrum_csv(&self) -> String {
        let mut out = String::from("s,sigma_normalized\n");
        for (s, v) in self.normalized_spectrum().iter().enumerate() {
            let _ = writeln!(out, "{},{:.15e}", s + 1, v);
        }
        out
    }
}
