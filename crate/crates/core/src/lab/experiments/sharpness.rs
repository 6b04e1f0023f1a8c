//! Lower bounds for `Γ^{a,b}_{φ_n}` and Hilbert–Schmidt divergence under grid cutoffs.

use rayon::prelude::*;

use crate::besov::{besov_norm, support_octaves};
use crate::error::Result;
use crate::grid::Grid;
use crate::lab::config::HsCase;
use crate::lab::plot::Plot;
use crate::lab::report::{num, Cell, Rule, VerdictRecord};
use crate::lab::strip::{analytic_block_bound, StripGalerkin};
use crate::lab::Context;
use crate::operator::kernel;
use crate::spectrum::hs_norm_quadrature;
use crate::symbol::indicator_phi_n;

use super::{fit_line, fmt_num, Output};

struct Sweep {
    n: u32,
    discrete: f64,
    bound: f64,
    besov: f64,
}

fn sweep_cell(ctx: &Context, n: u32, cell: &mut Cell) -> Result<Sweep> {
    let cfg = &ctx.cfg.sharpness;
    let p = cfg.p;
    let g = StripGalerkin::new(n, cfg.cells_per_block, cfg.a, cfg.b)?;
    let sp = ctx.audit.svd(&g.matrix)?;
    let blocks: Vec<_> = (0..g.blocks.len()).map(|j| g.block(j)).collect();
    let block_spectra = blocks.iter().map(|b| ctx.audit.svd(b)).collect::<Result<Vec<_>>>()?;
    let refs: Vec<_> = blocks.iter().collect();
    ctx.audit.direct_sum(&refs, &block_spectra)?;

    let discrete = sp.schatten(p);
    let galerkin_blocks = {
        let norms = g.block_norms();
        if p.is_infinite() {
            norms.iter().fold(0.0, |m: f64, v| m.max(*v))
        } else {
            norms.iter().map(|s| s.powf(p.value())).sum::<f64>().powf(p.recip())
        }
    };
    let bound = analytic_block_bound(n, cfg.a, cfg.b, p.value());
    let phi = indicator_phi_n(n)?;
    let s = p.recip() + cfg.a + cfg.b;
    let octaves = support_octaves(&phi).expect("indicator has compact support");
    let besov = besov_norm(&phi, p, s, octaves, &cfg.fourier)?;
    cell.put("dim", g.matrix.nrows());
    cell.put("noise_floor", num(sp.noise_floor));
    cell.put(
        "s_prefix",
        sp.values.iter().take(8).map(|v| num(*v)).collect::<Vec<_>>(),
    );
    cell.put("schatten_discrete", num(discrete));
    cell.put("block_bound_analytic", num(bound));
    cell.put("block_bound_galerkin", num(galerkin_blocks));
    cell.put("besov", num(besov));
    cell.put("discrete_over_bound", num(discrete / bound));
    cell.put("ratio", num(discrete / besov));
    Ok(Sweep {
        n,
        discrete,
        bound,
        besov,
    })
}

/// Predictor variable of the divergence law for exponent `a`.
fn predictor(a: f64, delta: f64) -> f64 {
    if (a + 0.5).abs() < 1e-12 {
        (1.0 / delta).ln()
    } else {
        delta.powf(2.0 * a + 1.0)
    }
}

/// Predicted slope of `HS²` against [`predictor`].
pub fn predicted_hs_slope(c: &HsCase) -> f64 {
    let hi = 1.0 + 2.0 / f64::from(c.n);
    let e = 2.0 * c.b + 1.0;
    let col = (hi.powf(e) - 1.0) / e;
    if (c.a + 0.5).abs() < 1e-12 {
        col
    } else {
        col / (-(2.0 * c.a + 1.0))
    }
}

fn hs_squared(ctx: &Context, c: &HsCase, k: i32) -> Result<f64> {
    let cfg = &ctx.cfg.sharpness;
    let width = 2.0 / f64::from(c.n);
    let hi = 1.0 + width;
    let gx = Grid::log(k, hi.log2().ceil() as i32, cfg.hs_ppo)?;
    let step = width / cfg.hs_nodes_per_strip as f64;
    let gy = Grid::uniform_midpoint(0.0, step, (hi / step).ceil() as usize + 1)?;
    let (a, b) = (c.a, c.b);
    let k = kernel(move |x, y| {
        let r = x + y;
        if r > 1.0 && r < hi {
            x.powf(a) * y.powf(b)
        } else {
            0.0
        }
    });
    Ok(hs_norm_quadrature(&k, &gx, &gy)?.powi(2))
}

pub fn run(ctx: &Context) -> Result<Output> {
    let cfg = &ctx.cfg.sharpness;
    let tol = &ctx.cfg.tolerances;
    let sweep: Vec<(Cell, Option<Sweep>)> = cfg
        .ns
        .par_iter()
        .map(|&n| {
            let id = format!("strip/p={},a={},b={}/n={n}", cfg.p, fmt_num(cfg.a), fmt_num(cfg.b));
            let mut cell = Cell::new(id.clone())
                .param("n", n)
                .param("p", cfg.p)
                .param("a", cfg.a)
                .param("b", cfg.b)
                .param("cells_per_block", cfg.cells_per_block);
            let out = match ctx.timed(&id, || sweep_cell(ctx, n, &mut cell)) {
                Ok(s) => Some(s),
                Err(e) => {
                    cell.fail(e);
                    None
                }
            };
            (cell, out)
        })
        .collect();

    let hs_tasks: Vec<(usize, i32)> = (0..cfg.hs_cases.len())
        .flat_map(|c| cfg.delta_exponents.iter().map(move |k| (c, *k)))
        .collect();
    let hs: Vec<(Cell, Option<f64>)> = hs_tasks
        .par_iter()
        .map(|&(ci, k)| {
            let c = &cfg.hs_cases[ci];
            let id = format!("hs/a={},b={},n={}/delta=2^{k}", fmt_num(c.a), fmt_num(c.b), c.n);
            let mut cell = Cell::new(id.clone())
                .param("a", c.a)
                .param("b", c.b)
                .param("n", c.n)
                .param("delta", f64::from(k).exp2());
            let out = match ctx.timed(&id, || hs_squared(ctx, c, k)) {
                Ok(v) => {
                    cell.put("hs_squared", num(v));
                    cell.put("predictor", num(predictor(c.a, f64::from(k).exp2())));
                    Some(v)
                }
                Err(e) => {
                    cell.fail(e);
                    None
                }
            };
            (cell, out)
        })
        .collect();

    let mut verdicts = Vec::new();
    let mut plots = Vec::new();
    let done: Vec<&Sweep> = sweep.iter().filter_map(|s| s.1.as_ref()).collect();
    verdicts.push(VerdictRecord::new(
        "block_dominance",
        format!(
            "discrete S_p norm >= (1 - {}) x analytic block bound for every n",
            tol.block_slack
        ),
        Rule::AtLeast {
            values: done.iter().map(|s| s.discrete / s.bound).collect(),
            limit: 1.0 - tol.block_slack,
        },
    ));
    let ratios: Vec<f64> = done.iter().map(|s| s.discrete / s.besov).collect();
    verdicts.push(VerdictRecord::new(
        "ratio_increasing",
        "S_p(Gamma)/Besov norm strictly increasing in n",
        Rule::Increasing { series: ratios.clone() },
    ));
    if let (Some(first), Some(last)) = (done.first(), done.last()) {
        let (n0, n1) = (f64::from(first.n), f64::from(last.n));
        let predicted = ((1.0 + n1).ln() / (1.0 + n0).ln()).powf(cfg.p.recip());
        verdicts.push(VerdictRecord::new(
            "log_growth",
            format!(
                "ratio growth from n={} to n={} matches (log(1+n))^(1/p)",
                first.n, last.n
            ),
            Rule::Relative {
                measured: ratios[ratios.len() - 1] / ratios[0],
                predicted,
                tol: tol.slope,
            },
        ));
    }
    let mut plot = Plot::new("Sharpness: norm ratio vs n", "n", "value").log_x().log_y();
    plot.add(
        "S_p / Besov",
        done.iter().zip(&ratios).map(|(s, r)| (f64::from(s.n), *r)).collect(),
    );
    plot.add(
        "S_p / block bound",
        done.iter().map(|s| (f64::from(s.n), s.discrete / s.bound)).collect(),
    );
    plots.push(("ratio_vs_n".into(), plot));

    let mut hs_plot = Plot::new("Hilbert-Schmidt norm vs cutoff", "log2(1/delta)", "HS^2");
    for (ci, c) in cfg.hs_cases.iter().enumerate() {
        let label = format!("a={},b={},n={}", fmt_num(c.a), fmt_num(c.b), c.n);
        let pts: Vec<(f64, f64, f64)> = hs_tasks
            .iter()
            .zip(&hs)
            .filter(|((i, _), _)| *i == ci)
            .filter_map(|((_, k), (_, v))| {
                let d = f64::from(*k).exp2();
                v.map(|v| (-f64::from(*k), predictor(c.a, d), v))
            })
            .collect();
        let xs: Vec<f64> = pts.iter().map(|p| p.1).collect();
        let ys: Vec<f64> = pts.iter().map(|p| p.2).collect();
        let predicted = predicted_hs_slope(c);
        match fit_line(&xs, &ys) {
            Some(fit) => {
                verdicts.push(VerdictRecord::new(
                    format!("hs_slope/{label}"),
                    format!(
                        "fitted slope of HS^2 against {} within {} of {predicted:.6}",
                        if (c.a + 0.5).abs() < 1e-12 {
                            "log(1/delta)"
                        } else {
                            "delta^(2a+1)"
                        },
                        tol.slope
                    ),
                    Rule::Relative {
                        measured: fit.slope,
                        predicted,
                        tol: tol.slope,
                    },
                ));
                verdicts.push(VerdictRecord::new(
                    format!("hs_fit_r2/{label}"),
                    format!("linear fit R^2 >= {}", tol.r_squared),
                    Rule::AtLeast {
                        values: vec![fit.r_squared],
                        limit: tol.r_squared,
                    },
                ));
            }
            None => verdicts.push(VerdictRecord::failed(
                format!("hs_slope/{label}"),
                "fitted HS^2 slope",
                "fewer than two cutoffs completed",
            )),
        }
        hs_plot.add(label, pts.iter().map(|p| (p.0, p.2)).collect());
    }
    plots.push(("hs_vs_cutoff".into(), hs_plot));

    let mut cells: Vec<Cell> = sweep.into_iter().map(|s| s.0).collect();
    cells.extend(hs.into_iter().map(|h| h.0));
    Ok((cells, verdicts, plots))
}
