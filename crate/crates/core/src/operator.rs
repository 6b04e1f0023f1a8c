//! Nyström matrices of integral kernels.
//!
//! Every matrix is stored in the symmetrized form `M_ij = √w_i k(x_i, y_j) √w_j`,
//! whose singular values approximate those of the integral operator on
//! `L²(ℝ₊)`. Changing variables `x ↦ x^α` on the grid side turns the distorted
//! kernel `φ(x^α + y^β)` into a weighted Hankel kernel with no approximation.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::{invalid, Error, Result};
use crate::grid::Grid;
use crate::symbol::Symbol;

/// A kernel `k(x, y)` on `ℝ₊ × ℝ₊`.
pub type Kernel = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Wraps a closure as a [`Kernel`].
pub fn kernel(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Kernel {
    Arc::new(f)
}

/// Symmetrized Nyström matrix of a kernel on a pair of grids.
#[derive(Clone)]
pub struct KernelMatrix {
    row_grid: Grid,
    col_grid: Grid,
    entries: DMatrix<f64>,
    label: String,
    kernel: Option<Kernel>,
}

impl std::fmt::Debug for KernelMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KernelMatrix")
            .field("label", &self.label)
            .field("rows", &self.entries.nrows())
            .field("cols", &self.entries.ncols())
            .finish()
    }
}

impl KernelMatrix {
    /// Wraps precomputed scaled entries; the matrix carries no evaluable kernel.
    pub fn from_entries(
        row_grid: Grid,
        col_grid: Grid,
        entries: DMatrix<f64>,
        label: impl Into<String>,
    ) -> Result<Self> {
        if entries.nrows() != row_grid.len() || entries.ncols() != col_grid.len() {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} entries for {}x{} grids",
                entries.nrows(),
                entries.ncols(),
                row_grid.len(),
                col_grid.len()
            )));
        }
        if let Some(pos) = entries.iter().position(|v| !v.is_finite()) {
            let (i, j) = (pos % entries.nrows(), pos / entries.nrows());
            return Err(Error::NonFiniteKernel {
                i,
                j,
                argument: f64::NAN,
                value: entries[(i, j)],
            });
        }
        Ok(Self {
            row_grid,
            col_grid,
            entries,
            label: label.into(),
            kernel: None,
        })
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_entries(self) -> DMatrix<f64> {
        self.entries
    }

    pub fn row_grid(&self) -> &Grid {
        &self.row_grid
    }

    pub fn col_grid(&self) -> &Grid {
        &self.col_grid
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn kernel(&self) -> Option<&Kernel> {
        self.kernel.as_ref()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.entries.shape()
    }

    /// Frobenius norm, which is the discrete Hilbert–Schmidt norm.
    pub fn frobenius(&self) -> f64 {
        compensated_sum(self.entries.iter().map(|v| v * v)).sqrt()
    }

    pub(crate) fn attach_kernel(&mut self, k: Kernel) {
        self.kernel = Some(k);
    }

    /// Unscaled kernel samples `k(x_i, y_j) = M_ij / √(w_i w_j)`.
    pub fn kernel_values(&self) -> DMatrix<f64> {
        let sr = self.row_grid.sqrt_weights();
        let sc = self.col_grid.sqrt_weights();
        DMatrix::from_fn(self.entries.nrows(), self.entries.ncols(), |i, j| {
            self.entries[(i, j)] / (sr[i] * sc[j])
        })
    }
}

/// Neumaier-compensated sum.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut carry = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            carry += (sum - t) + v;
        } else {
            carry += (v - t) + sum;
        }
        sum = t;
    }
    sum + carry
}

/// Assembles `√w_i k(x_i, y_j) √w_j`; `argument` names the offending input on failure.
pub fn assemble_with(
    k: Kernel,
    gx: &Grid,
    gy: &Grid,
    label: impl Into<String>,
    argument: impl Fn(f64, f64) -> f64 + Sync,
) -> Result<KernelMatrix> {
    let xs = gx.points();
    let ys = gy.points();
    let sx = gx.sqrt_weights();
    let sy = gy.sqrt_weights();
    let (n, m) = (xs.len(), ys.len());
    let mut data = vec![0.0; n * m];
    // column-major storage: column j is contiguous
    data.par_chunks_mut(n).enumerate().try_for_each(|(j, col)| {
        for (i, slot) in col.iter_mut().enumerate() {
            let value = k(xs[i], ys[j]);
            if !value.is_finite() {
                return Err(Error::NonFiniteKernel {
                    i,
                    j,
                    argument: argument(xs[i], ys[j]),
                    value,
                });
            }
            *slot = sx[i] * value * sy[j];
        }
        Ok(())
    })?;
    Ok(KernelMatrix {
        row_grid: gx.clone(),
        col_grid: gy.clone(),
        entries: DMatrix::from_vec(n, m, data),
        label: label.into(),
        kernel: Some(k),
    })
}

/// Nyström matrix of an arbitrary kernel.
pub fn assemble_kernel(k: Kernel, gx: &Grid, gy: &Grid, label: impl Into<String>) -> Result<KernelMatrix> {
    assemble_with(k, gx, gy, label, |x, y| x + y)
}

/// Kernel `φ(x^α + y^β)`.
pub fn distorted_kernel(phi: &Symbol, alpha: f64, beta: f64) -> Kernel {
    let phi = phi.clone();
    if alpha == 1.0 && beta == 1.0 {
        return kernel(move |x, y| phi.eval(x + y));
    }
    kernel(move |x, y| phi.eval(x.powf(alpha) + y.powf(beta)))
}

/// Kernel `x^a y^b φ(x + y)`.
pub fn weighted_hankel_kernel(phi: &Symbol, a: f64, b: f64) -> Kernel {
    let phi = phi.clone();
    kernel(move |x, y| {
        let v = phi.eval(x + y);
        if v == 0.0 {
            return 0.0;
        }
        let wx = if a == 0.0 { 1.0 } else { x.powf(a) };
        let wy = if b == 0.0 { 1.0 } else { y.powf(b) };
        wx * wy * v
    })
}

/// Nyström matrix of the distorted Hankel operator `G^{α,β}_φ`.
pub fn assemble_distorted(phi: &Symbol, alpha: f64, beta: f64, gx: &Grid, gy: &Grid) -> Result<KernelMatrix> {
    for (name, v) in [("alpha", alpha), ("beta", beta)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(invalid(name, format!("must be finite and > 0, got {v}")));
        }
    }
    assemble_with(
        distorted_kernel(phi, alpha, beta),
        gx,
        gy,
        format!("G[{};alpha={alpha},beta={beta}]", phi.label()),
        move |x, y| x.powf(alpha) + y.powf(beta),
    )
}

/// Nyström matrix of the weighted Hankel operator `Γ^{a,b}_φ`.
pub fn assemble_weighted_hankel(phi: &Symbol, a: f64, b: f64, gx: &Grid, gy: &Grid) -> Result<KernelMatrix> {
    for (name, v) in [("a", a), ("b", b)] {
        if !v.is_finite() {
            return Err(invalid(name, format!("must be finite, got {v}")));
        }
    }
    assemble_with(
        weighted_hankel_kernel(phi, a, b),
        gx,
        gy,
        format!("Gamma[{};a={a},b={b}]", phi.label()),
        |x, y| x + y,
    )
}

/// `k_{α,β}(x, y) = x^{1/(2α)-1/2} y^{1/(2β)-1/2} k(x^{1/α}, y^{1/β})`.
pub fn distort_kernel(k: Kernel, alpha: f64, beta: f64) -> Result<Kernel> {
    for (name, v) in [("alpha", alpha), ("beta", beta)] {
        if v == 0.0 || !v.is_finite() {
            return Err(invalid(name, format!("must be finite and nonzero, got {v}")));
        }
    }
    if alpha == 1.0 && beta == 1.0 {
        return Ok(k);
    }
    let (ea, eb) = (0.5 / alpha - 0.5, 0.5 / beta - 0.5);
    let (ia, ib) = (1.0 / alpha, 1.0 / beta);
    Ok(kernel(move |x, y| {
        let v = k(x.powf(ia), y.powf(ib));
        if v == 0.0 {
            return 0.0;
        }
        x.powf(ea) * y.powf(eb) * v
    }))
}

/// Assembles `k_{α,β}` on the power images of the grids of `m`.
///
/// The result equals `√(αβ) m` entrywise up to rounding.
pub fn unitary_image(m: &KernelMatrix, alpha: f64, beta: f64) -> Result<KernelMatrix> {
    let k = m
        .kernel
        .clone()
        .ok_or_else(|| invalid("m", "matrix carries no evaluable kernel"))?;
    for (name, v) in [("alpha", alpha), ("beta", beta)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(invalid(name, format!("must be finite and > 0, got {v}")));
        }
    }
    let gx = m.row_grid.power_transform(alpha)?;
    let gy = m.col_grid.power_transform(beta)?;
    assemble_kernel(
        distort_kernel(k, alpha, beta)?,
        &gx,
        &gy,
        format!("U[{};alpha={alpha},beta={beta}]", m.label),
    )
}

/// Hankel matrix `H_ij = c_{i+j} h` applied in `O(N log N)` through a circulant of size `2N`.
pub struct FastHankel {
    n: usize,
    spectrum: Vec<Complex<f64>>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl FastHankel {
    /// `samples[m] = φ(m h + 2·offset)` for `m = 0..2N-1`; `h` scales every entry.
    pub fn new(samples: &[f64], h: f64) -> Result<Self> {
        if samples.is_empty() || samples.len().is_multiple_of(2) {
            return Err(Error::DimensionMismatch(format!(
                "need 2N-1 symbol samples, got {}",
                samples.len()
            )));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteKernel {
                i,
                j: 0,
                argument: i as f64,
                value: samples[i],
            });
        }
        let n = samples.len().div_ceil(2);
        let len = 2 * n;
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(len);
        let inverse = planner.plan_fft_inverse(len);
        let mut spectrum: Vec<Complex<f64>> = samples
            .iter()
            .map(|&c| Complex::new(c * h, 0.0))
            .chain(std::iter::once(Complex::new(0.0, 0.0)))
            .collect();
        forward.process(&mut spectrum);
        Ok(Self {
            n,
            spectrum,
            forward,
            inverse,
        })
    }

    /// Samples `φ` on the uniform grid `x_i = offset + i h` and builds the operator.
    pub fn from_symbol(phi: &Symbol, n: usize, h: f64, offset: f64) -> Result<Self> {
        if n == 0 {
            return Err(invalid("n", "need N >= 1"));
        }
        let samples: Vec<f64> = (0..2 * n - 1).map(|m| phi.eval(m as f64 * h + 2.0 * offset)).collect();
        Self::new(&samples, h)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.n {
            return Err(Error::DimensionMismatch(format!(
                "vector of length {} for a Hankel matrix of order {}",
                v.len(),
                self.n
            )));
        }
        let len = 2 * self.n;
        let mut buf = vec![Complex::new(0.0, 0.0); len];
        for (j, &x) in v.iter().enumerate() {
            buf[self.n - 1 - j].re = x;
        }
        self.forward.process(&mut buf);
        for (b, s) in buf.iter_mut().zip(&self.spectrum) {
            *b *= s;
        }
        self.inverse.process(&mut buf);
        let scale = 1.0 / len as f64;
        Ok((0..self.n).map(|i| buf[i + self.n - 1].re * scale).collect())
    }
}

/// `H v` for `H_ij = samples[i+j]·h` through FFT convolution.
pub fn hankel_matvec_fast(samples: &[f64], h: f64, v: &[f64]) -> Result<Vec<f64>> {
    let op = FastHankel::new(samples, h)?;
    op.apply(v)
}

/// Reference `O(N²)` product for the same Hankel matrix, entries formed on the fly.
pub fn hankel_matvec_dense(samples: &[f64], h: f64, v: &[f64]) -> Result<Vec<f64>> {
    let n = samples.len().div_ceil(2);
    if samples.len() != 2 * n - 1 || v.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} samples, vector of length {}",
            samples.len(),
            v.len()
        )));
    }
    Ok((0..n)
        .into_par_iter()
        .map(|i| {
            let row = &samples[i..i + n];
            row.iter().zip(v).map(|(c, x)| c * x).sum::<f64>() * h
        })
        .collect())
}
