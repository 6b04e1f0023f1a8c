//! Singular values of `G^{α,β}_φ` against the weighted Hankel operator on power grids.

use rayon::prelude::*;

use crate::error::Result;
use crate::grid::{parse_grid_spec, Grid};
use crate::lab::config::parse_symbol;
use crate::lab::plot::Plot;
use crate::lab::report::{num, Cell, Rule, VerdictRecord};
use crate::lab::Context;
use crate::operator::{assemble_distorted, assemble_weighted_hankel};

use super::{fmt_num, Output};

struct Task {
    symbol: String,
    alpha: f64,
    beta: f64,
    grid: String,
}

fn cell_id(t: &Task) -> String {
    format!(
        "{}/alpha={},beta={}/grid={}",
        t.symbol,
        fmt_num(t.alpha),
        fmt_num(t.beta),
        t.grid
    )
}

fn compute(ctx: &Context, t: &Task, cell: &mut Cell) -> Result<f64> {
    let (j0, j1, ppo) = parse_grid_spec(&t.grid)?;
    let g = Grid::log(j0, j1, ppo)?;
    let phi = parse_symbol(&t.symbol)?;
    let (alpha, beta) = (t.alpha, t.beta);
    let a = 0.5 / alpha - 0.5;
    let b = 0.5 / beta - 0.5;
    let distorted = assemble_distorted(&phi, alpha, beta, &g, &g)?;
    let weighted = assemble_weighted_hankel(&phi, a, b, &g.power_transform(alpha)?, &g.power_transform(beta)?)?;
    let sd = ctx.audit.svd(distorted.entries())?;
    let sw = ctx.audit.svd(weighted.entries())?;
    ctx.audit
        .direct_sum(&[distorted.entries(), weighted.entries()], &[sd.clone(), sw.clone()])?;
    let scale = (alpha * beta).sqrt();
    let k = ctx.cfg.unitary.top.min(sd.values.len());
    let top = sw.top();
    let mut normwise = 0.0f64;
    let mut relative = 0.0f64;
    for j in 0..k {
        let (x, y) = (scale * sd.values[j], sw.values[j]);
        let d = (x - y).abs();
        normwise = normwise.max(if top > 0.0 { d / top } else { d });
        if y > 1e-8 * top {
            relative = relative.max(d / y);
        }
    }
    cell.put("n", g.len());
    cell.put(
        "s_distorted_scaled",
        sd.values[..k].iter().map(|v| num(scale * v)).collect::<Vec<_>>(),
    );
    cell.put(
        "s_weighted_hankel",
        sw.values[..k].iter().map(|v| num(*v)).collect::<Vec<_>>(),
    );
    cell.put("noise_floor_distorted", num(sd.noise_floor));
    cell.put("noise_floor_weighted_hankel", num(sw.noise_floor));
    cell.put("deviation", num(normwise));
    cell.put("max_relative_deviation_above_1e-8", num(relative));
    Ok(normwise)
}

pub fn run(ctx: &Context) -> Result<Output> {
    let cfg = &ctx.cfg.unitary;
    let mut tasks = Vec::new();
    for grid in &cfg.grids {
        for symbol in &cfg.symbols {
            for [alpha, beta] in &cfg.pairs {
                tasks.push(Task {
                    symbol: symbol.clone(),
                    alpha: *alpha,
                    beta: *beta,
                    grid: grid.clone(),
                });
            }
        }
    }
    let results: Vec<(Cell, Option<f64>)> = tasks
        .par_iter()
        .map(|t| {
            let id = cell_id(t);
            let mut cell = Cell::new(id.clone())
                .param("symbol", &t.symbol)
                .param("alpha", t.alpha)
                .param("beta", t.beta)
                .param("grid", &t.grid);
            let dev = match ctx.timed(&id, || compute(ctx, t, &mut cell)) {
                Ok(d) => Some(d),
                Err(e) => {
                    cell.fail(e);
                    None
                }
            };
            (cell, dev)
        })
        .collect();
    let deviations: Vec<f64> = results.iter().filter_map(|r| r.1).collect();
    let tol = ctx.cfg.tolerances.unitary;
    let verdict = VerdictRecord::new(
        "unitary_equivalence",
        format!(
            "max_j<{} |sqrt(ab) s_j(G) - s_j(Gamma)| / s_0(Gamma) <= {tol:e} on every cell",
            cfg.top
        ),
        Rule::AtMost {
            values: deviations.clone(),
            limit: tol,
        },
    );
    let mut plot = Plot::new("Unitary equivalence deviation", "cell", "normwise deviation").log_y();
    plot.add(
        "deviation",
        deviations
            .iter()
            .enumerate()
            .map(|(i, d)| (i as f64, d.max(1e-18)))
            .collect(),
    );
    let cells = results.into_iter().map(|r| r.0).collect();
    Ok((cells, vec![verdict], vec![("deviation".into(), plot)]))
}
