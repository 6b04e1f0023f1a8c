//! Averaging projections onto distorted Hankel and Hankel kernels.
//!
//! On the level curve `x^α + y^β = r` the parametrization
//! `x = r^{1/α}(1-u)^{1/α}`, `y = r^{1/β}u^{1/β}` carries the angular measure
//! `½ u^{1/β-1}(1-u)^{1/α-1} du`, so averages along level curves are
//! Gauss–Jacobi sums with total mass `B(1/α, 1/β) = 2A(α, β)`.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{invalid, Error, Result};
use crate::grid::Grid;
use crate::operator::{Kernel, KernelMatrix};
use crate::symbol::Symbol;

/// Gauss–Jacobi rule on `[0, 1]` for the weight `u^p (1-u)^q`.
#[derive(Clone, Debug, PartialEq)]
pub struct JacobiRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    p: f64,
    q: f64,
}

fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

impl JacobiRule {
    /// Rule for the angular measure of the pair `(α, β)`:
    /// weight `u^{1/β-1} (1-u)^{1/α-1}`.
    pub fn new(alpha: f64, beta: f64, n: usize) -> Result<Self> {
        for (name, v) in [("alpha", alpha), ("beta", beta)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(name, format!("must be finite and > 0, got {v}")));
            }
        }
        Self::unit(1.0 / beta - 1.0, 1.0 / alpha - 1.0, n)
    }

    /// Golub–Welsch on the Jacobi recurrence, mapped from `[-1, 1]` to `[0, 1]`.
    pub fn unit(p: f64, q: f64, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(invalid("n", "need at least one node"));
        }
        if !(p > -1.0 && q > -1.0 && p.is_finite() && q.is_finite()) {
            return Err(invalid("exponents", format!("need p, q > -1, got ({p}, {q})")));
        }
        // on [-1, 1] the weight is (1-x)^a (1+x)^b with a = q, b = p
        let (a, b) = (q, p);
        let ab = a + b;
        let mut jac = DMatrix::<f64>::zeros(n, n);
        for k in 0..n {
            let kf = k as f64;
            jac[(k, k)] = if k == 0 {
                (b - a) / (ab + 2.0)
            } else {
                (b * b - a * a) / ((2.0 * kf + ab) * (2.0 * kf + ab + 2.0))
            };
            if k + 1 < n {
                let m = kf + 1.0;
                let off2 = if k == 0 {
                    4.0 * (1.0 + a) * (1.0 + b) / ((2.0 + ab).powi(2) * (3.0 + ab))
                } else {
                    4.0 * m * (m + a) * (m + b) * (m + ab)
                        / ((2.0 * m + ab).powi(2) * (2.0 * m + ab + 1.0) * (2.0 * m + ab - 1.0))
                };
                let off = off2.sqrt();
                jac[(k, k + 1)] = off;
                jac[(k + 1, k)] = off;
            }
        }
        let mass = ln_beta(p + 1.0, q + 1.0).exp();
        let eig = SymmetricEigen::new(jac);
        let mut pairs: Vec<(f64, f64)> = (0..n)
            .map(|k| {
                let v0 = eig.eigenvectors[(0, k)];
                (0.5 * (1.0 + eig.eigenvalues[k]), mass * v0 * v0)
            })
            .collect();
        pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
        let (nodes, weights): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        Ok(Self { nodes, weights, p, q })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `(p, q)` of the weight `u^p (1-u)^q`.
    pub fn exponents(&self) -> (f64, f64) {
        (self.p, self.q)
    }

    /// `∫₀¹ u^p (1-u)^q g(u) du`.
    pub fn integrate(&self, g: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(u, w)| w * g(*u)).sum()
    }
}

/// `A(α, β) = ½ B(1/α, 1/β)`.
pub fn beta_normalizer(alpha: f64, beta: f64) -> Result<f64> {
    for (name, v) in [("alpha", alpha), ("beta", beta)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(invalid(name, format!("must be finite and > 0, got {v}")));
        }
    }
    Ok(0.5 * ln_beta(1.0 / alpha, 1.0 / beta).exp())
}

/// Point of the level curve `x^α + y^β = r` at parameter `u = sin² t`.
#[inline]
pub fn level_point(r: f64, u: f64, alpha: f64, beta: f64) -> (f64, f64) {
    ((r * (1.0 - u)).powf(1.0 / alpha), (r * u).powf(1.0 / beta))
}

/// The level-curve average `φ(r)` of a kernel, normalized by `B(1/α, 1/β)`.
#[derive(Clone)]
pub struct LevelAverage {
    kernel: Kernel,
    alpha: f64,
    beta: f64,
    rule: JacobiRule,
    mass: f64,
}

impl LevelAverage {
    pub fn try_eval(&self, r: f64) -> Result<f64> {
        let mut acc = 0.0;
        for (&u, &w) in self.rule.nodes.iter().zip(&self.rule.weights) {
            let (x, y) = level_point(r, u, self.alpha, self.beta);
            let v = (self.kernel)(x, y);
            if !v.is_finite() {
                return Err(Error::LevelCurve {
                    r,
                    t: u.sqrt().asin(),
                    value: v,
                });
            }
            acc += w * v;
        }
        Ok(acc / self.mass)
    }

    /// Evaluator form; failed evaluations surface as NaN and are caught at assembly.
    pub fn to_symbol(&self) -> Symbol {
        let me = self.clone();
        Symbol::new(format!("Q[alpha={},beta={}]", self.alpha, self.beta), None, move |r| {
            me.try_eval(r).unwrap_or(f64::NAN)
        })
    }
}

/// Continuous averaging projection of a kernel onto distorted Hankel form.
pub fn project_q(k: Kernel, alpha: f64, beta: f64, rule: &JacobiRule) -> Result<LevelAverage> {
    let expected = (1.0 / beta - 1.0, 1.0 / alpha - 1.0);
    let (p, q) = rule.exponents();
    if (p - expected.0).abs() > 1e-14 || (q - expected.1).abs() > 1e-14 {
        return Err(invalid(
            "rule",
            format!("rule exponents ({p}, {q}) do not match alpha={alpha}, beta={beta}"),
        ));
    }
    Ok(LevelAverage {
        kernel: k,
        alpha,
        beta,
        rule: rule.clone(),
        mass: 2.0 * beta_normalizer(alpha, beta)?,
    })
}

/// Radial resolution and optional level band of the discrete projector.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectorConfig {
    /// Hat functions per octave in `r`.
    pub radial_ppo: u32,
    /// Restrict to level values `R_min <= x^α + y^β <= R_max`; entries outside are zeroed.
    pub band: Option<(f64, f64)>,
}

/// `S_2`-orthogonal projection of Nyström matrices onto the span of
/// `√(w_i w_j) h_k(x_i^α + y_j^β)`, with `h_k` hat functions in `log₂ r`.
///
/// Exactly idempotent and self-adjoint for the Frobenius inner product.
#[derive(Clone, Debug)]
pub struct DistortedHankelProjector {
    rows: usize,
    cols: usize,
    alpha: f64,
    beta: f64,
    row_grid: Grid,
    col_grid: Grid,
    lo: f64,
    ppo: f64,
    nodes: usize,
    left: Vec<u32>,
    frac: Vec<f64>,
    scale: Vec<f64>,
    kept: Vec<bool>,
    diag: Vec<f64>,
    lower: Vec<f64>,
    band: Option<(f64, f64)>,
}

impl DistortedHankelProjector {
    pub fn new(gx: &Grid, gy: &Grid, alpha: f64, beta: f64, cfg: ProjectorConfig) -> Result<Self> {
        for (name, v) in [("alpha", alpha), ("beta", beta)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(name, format!("must be finite and > 0, got {v}")));
            }
        }
        if cfg.radial_ppo == 0 {
            return Err(invalid("radial_ppo", "must be >= 1"));
        }
        let ppo = f64::from(cfg.radial_ppo);
        let (rows, cols) = (gx.len(), gy.len());
        let xa: Vec<f64> = gx.points().iter().map(|x| x.powf(alpha)).collect();
        let yb: Vec<f64> = gy.points().iter().map(|y| y.powf(beta)).collect();
        let (lo, nodes) = match cfg.band {
            Some((rmin, rmax)) => {
                if !(rmin > 0.0 && rmax > rmin && rmax.is_finite()) {
                    return Err(invalid("band", format!("need 0 < R_min < R_max, got ({rmin}, {rmax})")));
                }
                let lo = rmin.log2();
                let k = ((rmax.log2() - lo) * ppo).ceil() as usize + 1;
                (lo, k.max(2))
            }
            None => {
                let rmin = xa[0] + yb[0];
                let rmax = xa[rows - 1] + yb[cols - 1];
                let lo = (rmin.log2() * ppo).floor() / ppo;
                let hi = (rmax.log2() * ppo).ceil() / ppo;
                let k = ((hi - lo) * ppo).round() as usize + 1;
                (lo, k.max(2))
            }
        };
        let sx = gx.sqrt_weights();
        let sy = gy.sqrt_weights();
        let len = rows * cols;
        let mut left = vec![0u32; len];
        let mut frac = vec![0.0; len];
        let mut scale = vec![0.0; len];
        let mut gdiag = vec![0.0; nodes];
        let mut goff = vec![0.0; nodes - 1];
        for j in 0..cols {
            for i in 0..rows {
                let idx = j * rows + i;
                let r = xa[i] + yb[j];
                if let Some((rmin, rmax)) = cfg.band {
                    if r < rmin || r > rmax {
                        continue;
                    }
                }
                let t = (r.log2() - lo) * ppo;
                let k0 = (t.floor().max(0.0) as usize).min(nodes - 2);
                let f = (t - k0 as f64).clamp(0.0, 1.0);
                let w = sx[i] * sy[j];
                left[idx] = k0 as u32;
                frac[idx] = f;
                scale[idx] = w;
                let a = w * w;
                gdiag[k0] += a * (1.0 - f) * (1.0 - f);
                gdiag[k0 + 1] += a * f * f;
                goff[k0] += a * f * (1.0 - f);
            }
        }
        let top = gdiag.iter().fold(0.0f64, |m, v| m.max(*v));
        let kept: Vec<bool> = gdiag.iter().map(|d| *d > 1e-13 * top).collect();
        let mut a = gdiag.clone();
        let mut e = goff.clone();
        for k in 0..nodes {
            if !kept[k] {
                a[k] = 1.0;
                if k > 0 {
                    e[k - 1] = 0.0;
                }
                if k + 1 < nodes {
                    e[k] = 0.0;
                }
            }
        }
        // LDLᵀ of the tridiagonal Gram matrix
        let mut diag = vec![0.0; nodes];
        let mut lower = vec![0.0; nodes - 1];
        diag[0] = a[0];
        for k in 1..nodes {
            lower[k - 1] = e[k - 1] / diag[k - 1];
            diag[k] = a[k] - lower[k - 1] * e[k - 1];
        }
        Ok(Self {
            rows,
            cols,
            alpha,
            beta,
            row_grid: gx.clone(),
            col_grid: gy.clone(),
            lo,
            ppo,
            nodes,
            left,
            frac,
            scale,
            kept,
            diag,
            lower,
            band: cfg.band,
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn radial_nodes(&self) -> usize {
        self.nodes
    }

    /// Zeroes entries outside the level band; identity without a band.
    pub fn restrict(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        if self.band.is_none() {
            return m.clone();
        }
        DMatrix::from_fn(self.rows, self.cols, |i, j| {
            if self.scale[j * self.rows + i] == 0.0 {
                0.0
            } else {
                m[(i, j)]
            }
        })
    }

    /// Hat-basis coefficients of the projection of `m`.
    pub fn coefficients(&self, m: &DMatrix<f64>) -> Result<Vec<f64>> {
        if m.shape() != (self.rows, self.cols) {
            return Err(Error::DimensionMismatch(format!(
                "{:?} matrix for a {}x{} projector",
                m.shape(),
                self.rows,
                self.cols
            )));
        }
        let mut rhs = vec![0.0; self.nodes];
        for (idx, v) in m.iter().enumerate() {
            let w = self.scale[idx];
            if w == 0.0 {
                continue;
            }
            let k0 = self.left[idx] as usize;
            let f = self.frac[idx];
            rhs[k0] += v * w * (1.0 - f);
            rhs[k0 + 1] += v * w * f;
        }
        for (k, keep) in self.kept.iter().enumerate() {
            if !keep {
                rhs[k] = 0.0;
            }
        }
        for k in 1..self.nodes {
            rhs[k] -= self.lower[k - 1] * rhs[k - 1];
        }
        for (r, d) in rhs.iter_mut().zip(&self.diag) {
            *r /= d;
        }
        for k in (0..self.nodes - 1).rev() {
            rhs[k] -= self.lower[k] * rhs[k + 1];
        }
        Ok(rhs)
    }

    /// The projected matrix.
    pub fn apply(&self, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let c = self.coefficients(m)?;
        let mut out = DMatrix::zeros(self.rows, self.cols);
        for (idx, slot) in out.iter_mut().enumerate() {
            let w = self.scale[idx];
            if w == 0.0 {
                continue;
            }
            let k0 = self.left[idx] as usize;
            let f = self.frac[idx];
            *slot = w * (c[k0] * (1.0 - f) + c[k0 + 1] * f);
        }
        Ok(out)
    }

    /// The symbol `r ↦ Σ c_k h_k(log₂ r)` generating the projection of `m`.
    pub fn symbol(&self, m: &DMatrix<f64>) -> Result<Symbol> {
        let c = self.coefficients(m)?;
        let (lo, ppo, nodes) = (self.lo, self.ppo, self.nodes);
        let r_lo = lo.exp2();
        let r_hi = (lo + (nodes - 1) as f64 / ppo).exp2();
        let (s_lo, s_hi) = match self.band {
            Some(b) => b,
            None => (r_lo, r_hi),
        };
        Ok(Symbol::new(
            "piecewise-linear level profile",
            Some((s_lo, s_hi)),
            move |r| {
                if !(r >= s_lo && r <= s_hi) {
                    return 0.0;
                }
                let t = (r.log2() - lo) * ppo;
                let k0 = (t.floor().max(0.0) as usize).min(nodes - 2);
                let f = (t - k0 as f64).clamp(0.0, 1.0);
                c[k0] * (1.0 - f) + c[k0 + 1] * f
            },
        ))
    }

    /// Projection of a [`KernelMatrix`] on the projector's grids, carrying the generating kernel.
    pub fn project(&self, m: &KernelMatrix) -> Result<KernelMatrix> {
        if !m.row_grid().matches(&self.row_grid, 1e-14) || !m.col_grid().matches(&self.col_grid, 1e-14) {
            return Err(Error::DimensionMismatch(
                "matrix grids differ from projector grids".into(),
            ));
        }
        let entries = self.apply(m.entries())?;
        let phi = self.symbol(m.entries())?;
        let label = format!(
            "Q[{};alpha={},beta={}{}]",
            m.label(),
            self.alpha,
            self.beta,
            if self.band.is_some() { ";banded" } else { "" }
        );
        let mut out = KernelMatrix::from_entries(self.row_grid.clone(), self.col_grid.clone(), entries, label)?;
        out.attach_kernel(crate::operator::distorted_kernel(&phi, self.alpha, self.beta));
        Ok(out)
    }
}

/// Projects `m` with twice the radial resolution of its row grid (32 per octave otherwise).
pub fn project_q_matrix(m: &KernelMatrix, alpha: f64, beta: f64) -> Result<KernelMatrix> {
    let ppo = 2 * m.row_grid().dyadic().map_or(16, |d| d.ppo);
    let proj = DistortedHankelProjector::new(
        m.row_grid(),
        m.col_grid(),
        alpha,
        beta,
        ProjectorConfig {
            radial_ppo: ppo,
            band: None,
        },
    )?;
    proj.project(m)
}

/// Anti-diagonal averages computed pointwise, with failures reported per point.
#[derive(Clone)]
pub struct AntiDiagonalAverage {
    kernel: Kernel,
    weighted: Option<JacobiRule>,
    tol: f64,
}

const TANH_SINH_TMAX: f64 = 6.0;
const TANH_SINH_LEVELS: u32 = 12;

impl AntiDiagonalAverage {
    pub fn try_eval(&self, x: f64) -> Result<f64> {
        if !(x > 0.0 && x.is_finite()) {
            return Err(invalid("x", format!("must be finite and > 0, got {x}")));
        }
        match &self.weighted {
            Some(rule) => {
                let mut acc = 0.0;
                let mut mass = 0.0;
                for (&u, &w) in rule.nodes().iter().zip(rule.weights()) {
                    let v = (self.kernel)(x * u, x * (1.0 - u));
                    if !v.is_finite() {
                        return Err(Error::Divergent { x, estimates: vec![v] });
                    }
                    acc += w * v;
                    mass += w;
                }
                Ok(acc / mass)
            }
            None => Ok(self.tanh_sinh(x)? / x),
        }
    }

    /// `∫₀ˣ k(t, x-t) dt` by the tanh-sinh rule with step halving.
    fn tanh_sinh(&self, x: f64) -> Result<f64> {
        let pi = std::f64::consts::PI;
        let term = |tau: f64| -> Result<(f64, f64)> {
            let z = pi * tau.sinh();
            let t = x / (1.0 + (-z).exp());
            let s = x / (1.0 + z.exp());
            let jac = x * pi * tau.cosh() / (2.0 + 2.0 * z.cosh());
            if jac == 0.0 || t == 0.0 || s == 0.0 {
                return Ok((0.0, 0.0));
            }
            let v = (self.kernel)(t, s);
            if !v.is_finite() {
                return Err(Error::Divergent { x, estimates: vec![v] });
            }
            Ok((v * jac, (v * jac).abs()))
        };
        let mut h = 1.0;
        let mut sum = 0.0;
        let mut abs_sum = 0.0;
        let steps = (TANH_SINH_TMAX / h) as i64;
        for k in -steps..=steps {
            let (v, a) = term(k as f64 * h)?;
            sum += v;
            abs_sum += a;
        }
        let edge = term(TANH_SINH_TMAX)?.1.max(term(-TANH_SINH_TMAX)?.1);
        let mut estimates = vec![sum * h];
        for _ in 0..TANH_SINH_LEVELS {
            h *= 0.5;
            let steps = (TANH_SINH_TMAX / h) as i64;
            let mut k = -steps + if steps % 2 == 0 { 1 } else { 0 };
            while k <= steps {
                let (v, a) = term(k as f64 * h)?;
                sum += v;
                abs_sum += a;
                k += 2;
            }
            let est = sum * h;
            let prev = *estimates.last().expect("nonempty");
            estimates.push(est);
            let scale = est.abs().max(self.tol * abs_sum * h);
            if estimates.len() >= 4 && (est - prev).abs() <= self.tol * scale {
                if edge > 1e-10 * scale.max(f64::MIN_POSITIVE) {
                    return Err(Error::Divergent { x, estimates });
                }
                return Ok(est);
            }
        }
        Err(Error::Divergent { x, estimates })
    }

    pub fn to_symbol(&self) -> Symbol {
        let me = self.clone();
        let label = if self.weighted.is_some() { "P[weighted]" } else { "P" };
        Symbol::new(label, None, move |x| me.try_eval(x).unwrap_or(f64::NAN))
    }
}

/// `φ(x) = (1/x) ∫₀ˣ k(t, x-t) dt`.
pub fn project_p(k: Kernel) -> AntiDiagonalAverage {
    AntiDiagonalAverage {
        kernel: k,
        weighted: None,
        tol: 1e-12,
    }
}

/// `φ(x) = ∫₀ˣ t^a (x-t)^b k(t, x-t) dt / ∫₀ˣ t^a (x-t)^b dt` by a Gauss–Jacobi rule.
pub fn project_p_weighted(k: Kernel, a: f64, b: f64, nodes: usize) -> Result<AntiDiagonalAverage> {
    for (name, v) in [("a", a), ("b", b)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(invalid(name, format!("must be finite and > 0, got {v}")));
        }
    }
    Ok(AntiDiagonalAverage {
        kernel: k,
        weighted: Some(JacobiRule::unit(a, b, nodes)?),
        tol: 1e-12,
    })
}

/// Radial grid and tail threshold for [`polar_integrate`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolarConfig {
    pub j_min: i32,
    pub j_max: i32,
    pub ppo: u32,
    /// Largest admissible share of the outermost octaves in the total.
    pub tail_tol: f64,
}

impl Default for PolarConfig {
    fn default() -> Self {
        Self {
            j_min: -40,
            j_max: 8,
            ppo: 32,
            tail_tol: 1e-9,
        }
    }
}

/// `∬ f dx dy` in generalized polar coordinates:
/// `(2/(αβ)) ∫ r^{1/α+1/β-1} ∫ f(…) cos^{2/α-1}t sin^{2/β-1}t dt dr`.
pub fn polar_integrate(
    f: impl Fn(f64, f64) -> f64 + Sync,
    alpha: f64,
    beta: f64,
    rule: &JacobiRule,
    cfg: &PolarConfig,
) -> Result<f64> {
    let expected = (1.0 / beta - 1.0, 1.0 / alpha - 1.0);
    let (p, q) = rule.exponents();
    if (p - expected.0).abs() > 1e-14 || (q - expected.1).abs() > 1e-14 {
        return Err(invalid("rule", "rule exponents do not match (alpha, beta)"));
    }
    let grid = Grid::log(cfg.j_min, cfg.j_max, cfg.ppo)?;
    let power = 1.0 / alpha + 1.0 / beta - 1.0;
    let mut total = 0.0;
    let mut edges = 0.0;
    let last = grid.len() - 1;
    let ppo = cfg.ppo as usize;
    for (k, (&r, &w)) in grid.points().iter().zip(grid.weights()).enumerate() {
        let mut ang = 0.0;
        for (&u, &wu) in rule.nodes().iter().zip(rule.weights()) {
            let (x, y) = level_point(r, u, alpha, beta);
            let v = f(x, y);
            if !v.is_finite() {
                return Err(Error::NonFiniteIntegrand { x: r, value: v });
            }
            ang += wu * v;
        }
        let contrib = w * r.powf(power) * ang;
        total += contrib;
        if k < ppo || k + ppo > last {
            edges += contrib.abs();
        }
    }
    let result = total / (alpha * beta);
    if edges > cfg.tail_tol * total.abs() && edges > 0.0 {
        return Err(Error::RadialTail {
            ratio: edges / total.abs(),
        });
    }
    Ok(result)
}
