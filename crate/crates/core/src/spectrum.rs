//! Singular spectra, Schatten norms and the trace pairing.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::grid::Grid;
use crate::operator::{compensated_sum, FastHankel, Kernel, KernelMatrix};
use crate::Exponent;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SpectrumSource {
    Dense,
    Iterative { k: usize, tol: f64 },
}

/// Nonincreasing singular values with the threshold used by norm sums.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SingularSpectrum {
    pub values: Vec<f64>,
    pub source: SpectrumSource,
    pub noise_floor: f64,
}

impl SingularSpectrum {
    /// Sorts `values` and sets the default floor `ε s_0 max(rows, cols)`.
    pub fn from_values(mut values: Vec<f64>, source: SpectrumSource, max_dim: usize) -> Self {
        for v in values.iter_mut() {
            *v = v.abs();
        }
        values.sort_by(|a, b| b.total_cmp(a));
        let top = values.first().copied().unwrap_or(0.0);
        Self {
            values,
            source,
            noise_floor: f64::EPSILON * top * max_dim as f64,
        }
    }

    pub fn top(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }

    /// Values strictly above the noise floor.
    pub fn significant(&self) -> &[f64] {
        let end = self.values.partition_point(|v| *v > self.noise_floor);
        &self.values[..end]
    }

    pub fn schatten(&self, p: Exponent) -> f64 {
        schatten(self, p)
    }
}

/// Full SVD of the entries, values only.
pub fn dense_singular_values(m: &DMatrix<f64>) -> Result<SingularSpectrum> {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return Ok(SingularSpectrum::from_values(vec![], SpectrumSource::Dense, 0));
    }
    if m.iter().all(|v| *v == 0.0) {
        return Ok(SingularSpectrum::from_values(
            vec![0.0; rows.min(cols)],
            SpectrumSource::Dense,
            rows.max(cols),
        ));
    }
    let svd = m
        .clone()
        .try_svd(false, false, f64::EPSILON, 0)
        .ok_or(Error::SvdNonConvergence { rows, cols })?;
    Ok(SingularSpectrum::from_values(
        svd.singular_values.as_slice().to_vec(),
        SpectrumSource::Dense,
        rows.max(cols),
    ))
}

/// Singular values of a [`KernelMatrix`].
pub fn kernel_spectrum(m: &KernelMatrix) -> Result<SingularSpectrum> {
    dense_singular_values(m.entries())
}

/// `(Σ_{s_j > floor} s_j^p)^{1/p}`, or `s_0` when `p = ∞`.
pub fn schatten(sp: &SingularSpectrum, p: Exponent) -> f64 {
    if p.is_infinite() {
        return sp.top();
    }
    let vals = sp.significant();
    let top = sp.top();
    if vals.is_empty() || top == 0.0 {
        return 0.0;
    }
    let pv = p.value();
    let sum: f64 = vals.iter().map(|s| (s / top).powf(pv)).sum();
    top * sum.powf(1.0 / pv)
}

/// `(Σ_ij |k(x_i, y_j)|² w_i w_j)^{1/2}`.
pub fn hs_norm_quadrature(k: &Kernel, gx: &Grid, gy: &Grid) -> Result<f64> {
    let mut terms = Vec::with_capacity(gx.len() * gy.len());
    for (j, (&y, &wy)) in gy.points().iter().zip(gy.weights()).enumerate() {
        for (i, (&x, &wx)) in gx.points().iter().zip(gx.weights()).enumerate() {
            let v = k(x, y);
            if !v.is_finite() {
                return Err(Error::NonFiniteKernel {
                    i,
                    j,
                    argument: x + y,
                    value: v,
                });
            }
            terms.push(v * v * wx * wy);
        }
    }
    Ok(compensated_sum(terms).sqrt())
}

/// `trace(A B^*)`, the Frobenius inner product of two matrices on the same grids.
pub fn trace_pair(a: &KernelMatrix, b: &KernelMatrix) -> Result<Complex<f64>> {
    if !a.row_grid().matches(b.row_grid(), 1e-14) || !a.col_grid().matches(b.col_grid(), 1e-14) {
        return Err(Error::DimensionMismatch("trace pairing needs identical grids".into()));
    }
    Ok(Complex::new(a.entries().dot(b.entries()), 0.0))
}

/// A linear map known only through products with `A` and `Aᵀ`.
pub trait LinearOperator: Sync {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    fn apply(&self, v: &[f64]) -> Vec<f64>;
    fn apply_transpose(&self, u: &[f64]) -> Vec<f64>;
}

impl LinearOperator for DMatrix<f64> {
    fn rows(&self) -> usize {
        self.nrows()
    }

    fn cols(&self) -> usize {
        self.ncols()
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        (self * DVector::from_column_slice(v)).as_slice().to_vec()
    }

    fn apply_transpose(&self, u: &[f64]) -> Vec<f64> {
        (self.tr_mul(&DVector::from_column_slice(u))).as_slice().to_vec()
    }
}

impl LinearOperator for FastHankel {
    fn rows(&self) -> usize {
        self.dim()
    }

    fn cols(&self) -> usize {
        self.dim()
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        FastHankel::apply(self, v).expect("vector length checked by caller")
    }

    fn apply_transpose(&self, u: &[f64]) -> Vec<f64> {
        FastHankel::apply(self, u).expect("vector length checked by caller")
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Two passes of classical Gram–Schmidt against `basis`.
fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        for q in basis {
            let c = dot(v, q);
            for (x, y) in v.iter_mut().zip(q) {
                *x -= c * y;
            }
        }
    }
}

fn random_unit_orthogonal(dim: usize, basis: &[Vec<f64>], rng: &mut ChaCha8Rng) -> Option<Vec<f64>> {
    for _ in 0..8 {
        let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        orthogonalize(&mut v, basis);
        let nv = norm(&v);
        if nv > 1e-8 {
            v.iter_mut().for_each(|x| *x /= nv);
            return Some(v);
        }
    }
    None
}

/// Top `k` singular values by Golub–Kahan–Lanczos bidiagonalization with full
/// reorthogonalization. Converged when every Ritz residual is below `tol` times
/// its Ritz value, or below the noise floor.
pub fn topk_singular_values(op: &dyn LinearOperator, k: usize, tol: f64, seed: u64) -> Result<SingularSpectrum> {
    if k == 0 {
        return Err(invalid("k", "need k >= 1"));
    }
    if !(tol > 0.0) {
        return Err(invalid("tol", format!("must be > 0, got {tol}")));
    }
    let (rows, cols) = (op.rows(), op.cols());
    let rank_cap = rows.min(cols);
    let k_eff = k.min(rank_cap);
    let cap = (4 * k + 32).min(rank_cap);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vs: Vec<Vec<f64>> = Vec::with_capacity(cap + 1);
    let mut us: Vec<Vec<f64>> = Vec::with_capacity(cap);
    let mut alphas = Vec::with_capacity(cap);
    let mut betas: Vec<f64> = Vec::with_capacity(cap);
    vs.push(random_unit_orthogonal(cols, &[], &mut rng).ok_or_else(|| invalid("operator", "zero columns"))?);
    let mut residuals = vec![f64::INFINITY; k_eff];
    let mut scale = 0.0f64;

    for step in 0..cap {
        let mut u = op.apply(&vs[step]);
        if u.len() != rows {
            return Err(Error::DimensionMismatch(format!(
                "operator returned {} entries, expected {rows}",
                u.len()
            )));
        }
        orthogonalize(&mut u, &us);
        let mut a = norm(&u);
        scale = scale.max(a);
        if a <= f64::EPSILON * scale.max(f64::MIN_POSITIVE) * rows as f64 {
            a = 0.0;
            u = match random_unit_orthogonal(rows, &us, &mut rng) {
                Some(r) => r,
                None => break,
            };
        } else {
            u.iter_mut().for_each(|x| *x /= a);
        }
        alphas.push(a);
        us.push(u);

        let mut v = op.apply_transpose(&us[step]);
        orthogonalize(&mut v, &vs);
        let mut b = norm(&v);
        scale = scale.max(b);
        let exhausted = step + 1 >= rank_cap;
        if !exhausted && b <= f64::EPSILON * scale.max(f64::MIN_POSITIVE) * cols as f64 {
            b = 0.0;
            v = match random_unit_orthogonal(cols, &vs, &mut rng) {
                Some(r) => r,
                None => break,
            };
        } else if b > 0.0 {
            v.iter_mut().for_each(|x| *x /= b);
        }
        betas.push(b);
        vs.push(v);

        let m = step + 1;
        if m < k_eff && !exhausted {
            continue;
        }
        let bd = DMatrix::from_fn(m, m, |i, j| {
            if i == j {
                alphas[i]
            } else if j == i + 1 {
                betas[i]
            } else {
                0.0
            }
        });
        let svd = bd
            .try_svd(true, false, f64::EPSILON, 0)
            .ok_or(Error::SvdNonConvergence { rows: m, cols: m })?;
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
        let left = svd.u.as_ref().expect("left vectors requested");
        let theta0 = svd.singular_values[order[0]];
        let floor = f64::EPSILON * theta0 * rows.max(cols) as f64;
        let beta_m = betas[m - 1];
        let mut done = true;
        for (slot, &idx) in order.iter().take(k_eff).enumerate() {
            let theta = svd.singular_values[idx];
            let r = (beta_m * left[(m - 1, idx)]).abs();
            residuals[slot] = r;
            if !(exhausted || r <= tol * theta || theta <= floor) {
                done = false;
            }
        }
        if done {
            let mut values: Vec<f64> = order.iter().take(k).map(|&i| svd.singular_values[i]).collect();
            values.resize(k, 0.0);
            return Ok(SingularSpectrum::from_values(
                values,
                SpectrumSource::Iterative { k, tol },
                rows.max(cols),
            ));
        }
    }
    Err(Error::LanczosNonConvergence {
        iterations: alphas.len(),
        residuals,
    })
}

/// Verifies `‖·‖_{S_p}` is nonincreasing in `p` over `ps`; returns the violations.
pub fn monotonicity_violations(sp: &SingularSpectrum, ps: &[Exponent]) -> Vec<(Exponent, Exponent)> {
    let mut sorted = ps.to_vec();
    sorted.sort_by(|a, b| a.value().total_cmp(&b.value()));
    sorted
        .windows(2)
        .filter_map(|w| {
            let (lo, hi) = (schatten(sp, w[0]), schatten(sp, w[1]));
            (lo < hi * (1.0 - 1e-12)).then_some((w[0], w[1]))
        })
        .collect()
}

/// Block-diagonal direct sum.
pub fn direct_sum(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), b.shape()).copy_from(*b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Largest relative gap between `‖whole‖_p^p` and `Σ ‖part‖_p^p` over `ps`
/// (`max` in place of the sum at `p = ∞`).
pub fn block_additivity_defect(whole: &SingularSpectrum, parts: &[SingularSpectrum], ps: &[Exponent]) -> f64 {
    ps.iter()
        .map(|&p| {
            let (lhs, rhs) = if p.is_infinite() {
                (whole.top(), parts.iter().map(|s| s.top()).fold(0.0, f64::max))
            } else {
                let pv = p.value();
                (
                    schatten(whole, p).powf(pv),
                    parts.iter().map(|s| schatten(s, p).powf(pv)).sum::<f64>(),
                )
            };
            if lhs == rhs {
                0.0
            } else {
                (lhs - rhs).abs() / lhs.abs().max(rhs.abs())
            }
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::operator::{assemble_distorted, assemble_kernel, kernel, unitary_image};
    use crate::symbol::{bump, exp_symbol, indicator_phi_n};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;

    fn ex(p: f64) -> Exponent {
        Exponent::new(p).unwrap()
    }

    fn spec(values: &[f64]) -> SingularSpectrum {
        SingularSpectrum::from_values(values.to_vec(), SpectrumSource::Dense, values.len())
    }

    #[test]
    fn schatten_examples() {
        let s = spec(&[3.0, 4.0]);
        assert_relative_eq!(schatten(&s, ex(2.0)), 5.0, max_relative = 1e-15);
        assert_eq!(schatten(&s, Exponent::INFINITY), 4.0);
        assert_relative_eq!(schatten(&s, ex(1.0)), 7.0, max_relative = 1e-15);
        assert_relative_eq!(schatten(&spec(&[1.0; 4]), ex(0.5)), 16.0, max_relative = 1e-14);
        assert_eq!(schatten(&spec(&[0.0, 0.0]), ex(1.0)), 0.0);
    }

    #[test]
    fn zero_matrix_spectrum() {
        let sp = dense_singular_values(&DMatrix::zeros(5, 3)).unwrap();
        assert_eq!(sp.values, vec![0.0; 3]);
    }

    #[test]
    fn rank_one_spectrum() {
        let g = Grid::log(-4, 4, 8).unwrap();
        let u = |x: f64| (-x).exp();
        let v = |y: f64| 1.0 / (1.0 + y * y);
        let m = assemble_kernel(kernel(move |x, y| u(x) * v(y)), &g, &g, "rank1").unwrap();
        let sp = kernel_spectrum(&m).unwrap();
        let nu: f64 = g.points().iter().zip(g.weights()).map(|(x, w)| w * u(*x).powi(2)).sum();
        let nv: f64 = g.points().iter().zip(g.weights()).map(|(x, w)| w * v(*x).powi(2)).sum();
        assert_relative_eq!(sp.values[0], (nu * nv).sqrt(), max_relative = 1e-13);
        assert!(sp.values[1] <= sp.noise_floor);
        assert_eq!(sp.significant().len(), 1);
    }

    #[test]
    fn gaussian_rank_one_ground_truth() {
        let g = Grid::log(-10, 4, 16).unwrap();
        let m = assemble_distorted(&exp_symbol(), 2.0, 2.0, &g, &g).unwrap();
        let s0 = kernel_spectrum(&m).unwrap().top();
        assert!((s0 - 0.5 * (std::f64::consts::PI / 2.0).sqrt()).abs() < 1e-3, "{s0}");
        let m = assemble_distorted(&exp_symbol(), 1.0, 1.0, &g, &g).unwrap();
        let s0 = kernel_spectrum(&m).unwrap().top();
        assert!((s0 - 0.5).abs() < 1e-3, "{s0}");
    }

    #[test]
    fn hs_quadrature_examples() {
        let g = Grid::log(-20, 5, 32).unwrap();
        let zero = kernel(|_, _| 0.0);
        assert_eq!(hs_norm_quadrature(&zero, &g, &g).unwrap(), 0.0);
        let e = kernel(|x, y| (-x - y).exp());
        let hs = hs_norm_quadrature(&e, &g, &g).unwrap();
        assert!((hs - 0.5).abs() < 1e-4);
        let m = assemble_kernel(e, &g, &g, "e").unwrap();
        assert_relative_eq!(m.frobenius(), hs, max_relative = 1e-14);
        assert_relative_eq!(
            schatten(&kernel_spectrum(&m).unwrap(), ex(2.0)),
            hs,
            max_relative = 1e-12
        );
    }

    #[test]
    fn trace_pair_examples() {
        let g = Grid::log(-20, 5, 32).unwrap();
        let a = assemble_distorted(&exp_symbol(), 1.0, 1.0, &g, &g).unwrap();
        let b = assemble_kernel(kernel(|x, y| (-x).exp() * (-y).exp()), &g, &g, "r1").unwrap();
        let self_pair = trace_pair(&a, &a).unwrap();
        assert_relative_eq!(self_pair.re, a.frobenius().powi(2), max_relative = 1e-14);
        let z = assemble_kernel(kernel(|_, _| 0.0), &g, &g, "0").unwrap();
        assert_eq!(trace_pair(&a, &z).unwrap().norm(), 0.0);
        assert!((trace_pair(&a, &b).unwrap().re - 0.25).abs() < 1e-4);
        let h = Grid::log(-3, 2, 8).unwrap();
        let c = assemble_kernel(kernel(|_, _| 1.0), &h, &h, "1").unwrap();
        assert!(trace_pair(&a, &c).is_err());
    }

    fn uniform_hankel(n: usize) -> (FastHankel, DMatrix<f64>) {
        let h = 4.0 / n as f64;
        let phi = indicator_phi_n(2).unwrap();
        let op = FastHankel::from_symbol(&phi, n, h, 0.5 * h).unwrap();
        let dense = DMatrix::from_fn(n, n, |i, j| phi.eval((i + j) as f64 * h + h) * h);
        (op, dense)
    }

    #[test]
    fn lanczos_matches_dense_512() {
        let (op, dense) = uniform_hankel(512);
        let exact = dense_singular_values(&dense).unwrap();
        let fast = topk_singular_values(&op, 10, 1e-10, 1).unwrap();
        for (a, b) in fast.values.iter().zip(&exact.values) {
            assert!((a - b).abs() <= 1e-8 * b, "{a} vs {b}");
        }
    }

    #[test]
    fn lanczos_rank_one_and_excess_k() {
        let n = 60;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let m = DMatrix::from_fn(n, n, |i, j| u[i] * v[j]);
        let s0 = norm(&u) * norm(&v);
        let sp = topk_singular_values(&m, 3, 1e-12, 9).unwrap();
        assert_relative_eq!(sp.values[0], s0, max_relative = 1e-12);
        assert!(sp.values[1] <= sp.noise_floor.max(1e-12 * s0));
        assert!(sp.values[2] <= sp.noise_floor.max(1e-12 * s0));
    }

    #[test]
    fn lanczos_rectangular() {
        let m = DMatrix::from_fn(80, 30, |i, j| 1.0 / (1.0 + i as f64 + 2.0 * j as f64));
        let exact = dense_singular_values(&m).unwrap();
        let fast = topk_singular_values(&m, 4, 1e-10, 2).unwrap();
        for (a, b) in fast.values.iter().zip(&exact.values) {
            assert!((a - b).abs() <= 1e-8 * b);
        }
    }

    #[test]
    fn unitary_invariance_of_spectra() {
        let g = Grid::log(-6, 3, 8).unwrap();
        let m = assemble_distorted(&bump(1.0).unwrap(), 0.5, 2.0, &g, &g).unwrap();
        let a = kernel_spectrum(&m).unwrap();
        let img = unitary_image(&m, 3.0, 0.5).unwrap();
        let b = kernel_spectrum(&img).unwrap();
        let c = 1.5f64.sqrt();
        for (x, y) in a.significant().iter().zip(&b.values) {
            assert!((x * c - y).abs() <= 1e-12 * a.top() * c);
        }
    }

    #[test]
    fn direct_sum_is_additive() {
        let a = DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 1.0]);
        let b = DMatrix::from_row_slice(1, 3, &[0.0, 2.0, 0.0]);
        let whole = dense_singular_values(&direct_sum(&[&a, &b])).unwrap();
        assert_eq!(whole.values.len(), 3);
        assert_relative_eq!(whole.values[1], 2.0, epsilon = 1e-14);
        let parts = [dense_singular_values(&a).unwrap(), dense_singular_values(&b).unwrap()];
        let ps = [ex(1.0), ex(2.0), Exponent::INFINITY];
        assert!(block_additivity_defect(&whole, &parts, &ps) < 1e-14);
        assert!(block_additivity_defect(&whole, &parts[..1], &ps) > 0.1);
    }

    #[test]
    fn block_additivity() {
        let g = Grid::log(-3, 3, 6).unwrap();
        let n = g.len();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut whole = DMatrix::zeros(n, n);
        let blocks = [(0..5, 20..26), (6..12, 0..4), (13..n, 8..16)];
        let mut parts = Vec::new();
        for (r, c) in blocks {
            let mut b = DMatrix::zeros(n, n);
            for i in r.clone() {
                for j in c.clone() {
                    let v: f64 = rng.random_range(-1.0..1.0);
                    whole[(i, j)] = v;
                    b[(i, j)] = v;
                }
            }
            parts.push(dense_singular_values(&b).unwrap());
        }
        let all = dense_singular_values(&whole).unwrap();
        for p in [0.5, 1.0, 2.0, 3.0] {
            let lhs = schatten(&all, ex(p)).powf(p);
            let rhs: f64 = parts.iter().map(|s| schatten(s, ex(p)).powf(p)).sum();
            assert!((lhs / rhs - 1.0).abs() < 1e-10, "p={p}");
        }
    }

    proptest! {
        #[test]
        fn schatten_is_monotone(vals in proptest::collection::vec(0.0f64..10.0, 1..40)) {
            let s = spec(&vals);
            let ps: Vec<Exponent> = [0.3, 0.5, 1.0, 1.5, 2.0, 4.0, 10.0].iter().map(|p| ex(*p))
                .chain(std::iter::once(Exponent::INFINITY)).collect();
            prop_assert!(monotonicity_violations(&s, &ps).is_empty());
        }

        #[test]
        fn spectra_sorted_nonnegative(seed in 0u64..500, r in 1usize..12, c in 1usize..12) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0));
            let s = dense_singular_values(&m).unwrap();
            prop_assert!(s.values.windows(2).all(|w| w[0] >= w[1]));
            prop_assert!(s.values.iter().all(|v| *v >= 0.0));
            prop_assert!((schatten(&s, ex(2.0)) - m.norm()).abs() <= 1e-12 * m.norm());
        }
    }
}
