//! Galerkin matrices of weighted Hankel operators with strip symbols.
//!
//! The kernel `x^a y^b χ(1 < x + y < 1 + 2/n)` is compressed onto cell
//! indicators of width `h = 1/(n m)`. Both strip edges run through cell
//! corners, so every cell is either empty, full, or cut in half along its
//! anti-diagonal; the blocks `Δ_j = (j/n, (j+1)/n) × ((n-j)/n, (n-j+1)/n)`
//! are unions of full cells.

use std::ops::Range;

use nalgebra::DMatrix;

use crate::error::{invalid, Result};
use crate::projection::JacobiRule;

#[derive(Clone, Debug)]
pub struct StripGalerkin {
    pub n: u32,
    pub cells_per_block: usize,
    pub a: f64,
    pub b: f64,
    pub matrix: DMatrix<f64>,
    /// Row and column cell ranges of the blocks `Δ_0 ..= Δ_n`.
    pub blocks: Vec<(Range<usize>, Range<usize>)>,
}

/// `∫_i^{i+1} t^a dt`.
fn unit_power(i: usize, a: f64) -> f64 {
    let i = i as f64;
    ((i + 1.0).powf(a + 1.0) - i.powf(a + 1.0)) / (a + 1.0)
}

/// `∫∫ (i+s)^a (j+t)^b` over the half of the unit square with `s + t >= 1`
/// (`upper = false`) or `s + t <= 1` (`upper = true`).
fn half_cell(i: usize, j: usize, a: f64, b: f64, upper: bool) -> Result<f64> {
    let (fi, fj) = (i as f64, j as f64);
    let inner = |s: f64| {
        let mid = (fj + 1.0 - s).powf(b + 1.0);
        if upper {
            (mid - fj.powf(b + 1.0)) / (b + 1.0)
        } else {
            ((fj + 1.0).powf(b + 1.0) - mid) / (b + 1.0)
        }
    };
    if i == 0 {
        Ok(JacobiRule::unit(a, 0.0, 48)?.integrate(inner))
    } else {
        Ok(JacobiRule::unit(0.0, 0.0, 48)?.integrate(|s| (fi + s).powf(a) * inner(s)))
    }
}

impl StripGalerkin {
    pub fn new(n: u32, cells_per_block: usize, a: f64, b: f64) -> Result<Self> {
        if n == 0 || cells_per_block == 0 {
            return Err(invalid("n", "strip parameters must be >= 1"));
        }
        if !(a > -1.0 && b > -1.0) {
            return Err(invalid("a", "exponents must exceed -1"));
        }
        let m = cells_per_block;
        let nm = n as usize * m;
        let dim = nm + 2 * m;
        let h = 1.0 / nm as f64;
        let scale = h.powf(1.0 + a + b);
        let xs: Vec<f64> = (0..dim).map(|i| unit_power(i, a)).collect();
        let ys: Vec<f64> = (0..dim).map(|j| unit_power(j, b)).collect();
        let mut matrix = DMatrix::zeros(dim, dim);
        for i in 0..dim {
            for j in 0..dim {
                let d = i + j;
                let v = if d + 1 == nm {
                    half_cell(i, j, a, b, false)?
                } else if d + 1 == nm + 2 * m {
                    half_cell(i, j, a, b, true)?
                } else if d >= nm && d + 2 <= nm + 2 * m {
                    xs[i] * ys[j]
                } else {
                    continue;
                };
                matrix[(i, j)] = scale * v;
            }
        }
        let blocks = (0..=n as usize)
            .map(|j| (j * m..(j + 1) * m, (n as usize - j) * m..(n as usize - j + 1) * m))
            .collect();
        Ok(Self {
            n,
            cells_per_block: m,
            a,
            b,
            matrix,
            blocks,
        })
    }

    pub fn cell_width(&self) -> f64 {
        1.0 / (self.n as usize * self.cells_per_block) as f64
    }

    /// The `Δ_j` sub-blocks, each of rank one.
    pub fn block(&self, j: usize) -> DMatrix<f64> {
        let (r, c) = &self.blocks[j];
        self.matrix.view((r.start, c.start), (r.len(), c.len())).into_owned()
    }

    /// Singular value of each Galerkin block.
    pub fn block_norms(&self) -> Vec<f64> {
        (0..self.blocks.len()).map(|j| self.block(j).norm()).collect()
    }
}

/// `∫_{lo}^{hi} t^e dt`, infinite when divergent at 0.
fn power_integral(lo: f64, hi: f64, e: f64) -> f64 {
    if (e + 1.0).abs() < 1e-15 {
        if lo == 0.0 {
            f64::INFINITY
        } else {
            (hi / lo).ln()
        }
    } else if e + 1.0 < 0.0 && lo == 0.0 {
        f64::INFINITY
    } else {
        (hi.powf(e + 1.0) - lo.powf(e + 1.0)) / (e + 1.0)
    }
}

/// `(Σ_j (∫_{Δ_j row} x^{2a})^{p/2} (∫_{Δ_j col} y^{2b})^{p/2})^{1/p}`, the
/// Schatten norm of the continuous rank-one block restrictions.
pub fn analytic_block_bound(n: u32, a: f64, b: f64, p: f64) -> f64 {
    let nf = f64::from(n);
    let norms = (0..=n).map(|j| {
        let j = f64::from(j);
        let row = power_integral(j / nf, (j + 1.0) / nf, 2.0 * a);
        let col = power_integral((nf - j) / nf, (nf - j + 1.0) / nf, 2.0 * b);
        (row * col).sqrt()
    });
    if p.is_infinite() {
        norms.fold(0.0, f64::max)
    } else {
        norms.map(|s| s.powf(p)).sum::<f64>().powf(1.0 / p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn block_bound_unweighted() {
        for n in [1u32, 4, 9] {
            let nf = f64::from(n);
            assert_relative_eq!(
                analytic_block_bound(n, 0.0, 0.0, 2.0),
                (nf + 1.0).sqrt() / nf,
                epsilon = 1e-14
            );
        }
        assert_relative_eq!(
            analytic_block_bound(4, 0.0, 0.0, 2.0),
            5f64.sqrt() / 4.0,
            epsilon = 1e-14
        );
        assert!(analytic_block_bound(4, -0.5, 0.0, 2.0).is_infinite());
        assert!(analytic_block_bound(4, -0.25, 0.0, 4.0).is_finite());
    }

    #[test]
    fn unweighted_entries() {
        let g = StripGalerkin::new(4, 3, 0.0, 0.0).unwrap();
        let h = g.cell_width();
        let m = &g.matrix;
        assert_eq!(m.nrows(), 18);
        // full cells carry h, cut cells h/2
        assert_relative_eq!(m[(0, 12)], h, epsilon = 1e-15);
        assert_relative_eq!(m[(0, 11)], h / 2.0, epsilon = 1e-14);
        assert_relative_eq!(m[(0, 17)], h / 2.0, epsilon = 1e-14);
        assert_eq!(m[(0, 10)], 0.0);
        // total mass equals the strip area (2/n)(1 + 1/n)... over the quadrant
        let mass: f64 = m.iter().sum::<f64>() * h;
        let area = 0.5 * ((1.0 + 2.0 / 4.0f64).powi(2) - 1.0);
        assert_relative_eq!(mass, area, epsilon = 1e-13);
    }

    #[test]
    fn weighted_mass_matches_integral() {
        // ∫∫ x^a χ(1 < x+y < 1+2/n) dy dx over the quadrant
        let (n, a) = (4u32, -0.5);
        let g = StripGalerkin::new(n, 4, a, 0.0).unwrap();
        let h = g.cell_width();
        let mass: f64 = g.matrix.iter().sum::<f64>() * h;
        let c = 1.0 + 2.0 / f64::from(n);
        let f = |u: f64, e: f64| u.powf(e) / e;
        let exact = (2.0 / f64::from(n)) * f(1.0, a + 1.0) + (c * f(c, a + 1.0) - f(c, a + 2.0))
            - (c * f(1.0, a + 1.0) - f(1.0, a + 2.0));
        assert_relative_eq!(mass, exact, max_relative = 1e-10);
    }

    #[test]
    fn blocks_are_rank_one_and_dominated() {
        let g = StripGalerkin::new(8, 4, -0.25, 0.0).unwrap();
        for j in [0, 3, 8] {
            let s = crate::spectrum::dense_singular_values(&g.block(j)).unwrap();
            assert!(s.values[1] < 1e-14 * s.values[0]);
        }
        let gal: f64 = g.block_norms().iter().map(|s| s.powi(4)).sum::<f64>().powf(0.25);
        let cont = analytic_block_bound(8, -0.25, 0.0, 4.0);
        assert!(gal <= cont && gal > 0.97 * cont, "{gal} {cont}");
    }
}
