//! Schatten norms of `G^{α,β}_{φ_λ}` against Besov norms of `φ_λ` along a dilation sweep.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::besov::{besov_norm, support_octaves};
use crate::error::{Error, Result};
use crate::grid::{parse_grid_spec, Grid};
use crate::lab::config::{parse_symbol, BesovCase};
use crate::lab::plot::Plot;
use crate::lab::report::{num, Cell, Rule, VerdictRecord};
use crate::lab::Context;
use crate::operator::{assemble_distorted, distorted_kernel};
use crate::spectrum::{hs_norm_quadrature, SingularSpectrum};
use crate::Exponent;

use super::{fmt_num, Output};

/// Besov smoothness matched to `S_p` membership of `G^{α,β}_φ`.
pub fn matched_smoothness(alpha: f64, beta: f64, p: Exponent) -> f64 {
    0.5 / alpha + 0.5 / beta + p.recip() - 1.0
}

fn exponents(case: &BesovCase, operator_norm: bool) -> Vec<Exponent> {
    let mut ps = case.ps.clone();
    if operator_norm && !ps.iter().any(|p| p.is_infinite()) {
        ps.push(Exponent::INFINITY);
    }
    ps
}

fn case_label(case: &BesovCase) -> String {
    format!("alpha={},beta={}", fmt_num(case.alpha), fmt_num(case.beta))
}

fn ratio_key(p: Exponent) -> String {
    format!("ratio_p={p}")
}

type Computed = (DMatrix<f64>, SingularSpectrum);

fn compute(ctx: &Context, g: &Grid, case: &BesovCase, k: i32, cell: &mut Cell) -> Result<Option<Computed>> {
    let lambda = f64::from(k).exp2();
    let phi = parse_symbol(&ctx.cfg.besov_schatten.family)?.dilate(lambda)?;
    let m = assemble_distorted(&phi, case.alpha, case.beta, g, g)?;
    let sp = ctx.audit.svd(m.entries())?;
    let hs = hs_norm_quadrature(&distorted_kernel(&phi, case.alpha, case.beta), g, g)?;
    let s2 = sp.schatten(Exponent::new(2.0)?);
    cell.put("noise_floor", num(sp.noise_floor));
    cell.put(
        "s_prefix",
        sp.values.iter().take(8).map(|v| num(*v)).collect::<Vec<_>>(),
    );
    cell.put("hs_quadrature", num(hs));
    cell.put("hs_svd", num(s2));
    cell.put(
        "hs_relative_gap",
        num(if hs == s2 { 0.0 } else { (hs - s2).abs() / hs.max(s2) }),
    );
    if phi.is_zero() {
        cell.put("vacuous", true);
        return Ok(Some((m.into_entries(), sp)));
    }
    let octaves =
        support_octaves(&phi).ok_or_else(|| Error::Config("besov_schatten.family must have compact support".into()))?;
    for p in exponents(case, ctx.cfg.besov_schatten.operator_norm) {
        let s = matched_smoothness(case.alpha, case.beta, p);
        let sch = sp.schatten(p);
        let bes = besov_norm(&phi, p, s, octaves.clone(), &ctx.cfg.fourier)?;
        cell.put(&format!("schatten_p={p}"), num(sch));
        cell.put(&format!("besov_p={p}_s={s}"), num(bes));
        cell.put(&ratio_key(p), num(sch / bes));
    }
    Ok(Some((m.into_entries(), sp)))
}

pub fn run(ctx: &Context) -> Result<Output> {
    let cfg = &ctx.cfg.besov_schatten;
    let (j0, j1, ppo) = parse_grid_spec(&cfg.grid)?;
    let g = Grid::log(j0, j1, ppo)?;
    let tasks: Vec<(usize, i32)> = (0..cfg.cases.len())
        .flat_map(|c| cfg.lambda_exponents.iter().map(move |k| (c, *k)))
        .collect();
    let results: Vec<(Cell, Option<Computed>)> = tasks
        .par_iter()
        .map(|&(c, k)| {
            let case = &cfg.cases[c];
            let id = format!("{}/lambda=2^{k}", case_label(case));
            let mut cell = Cell::new(id.clone())
                .param("alpha", case.alpha)
                .param("beta", case.beta)
                .param("lambda", f64::from(k).exp2())
                .param("symbol", &cfg.family);
            let out = match ctx.timed(&id, || compute(ctx, &g, case, k, &mut cell)) {
                Ok(v) => v,
                Err(e) => {
                    cell.fail(e);
                    None
                }
            };
            (cell, out)
        })
        .collect();

    // additivity on direct sums of neighbouring dilations
    for pair in results.windows(2) {
        if let (Some((m0, s0)), Some((m1, s1))) = (&pair[0].1, &pair[1].1) {
            if pair[0].0.params.get("alpha") == pair[1].0.params.get("alpha")
                && pair[0].0.params.get("beta") == pair[1].0.params.get("beta")
            {
                ctx.audit.direct_sum(&[m0, m1], &[s0.clone(), s1.clone()])?;
            }
        }
    }
    let cells: Vec<Cell> = results.into_iter().map(|r| r.0).collect();

    let mut verdicts = Vec::new();
    let mut plots = Vec::new();
    for case in &cfg.cases {
        let label = case_label(case);
        let case_cells: Vec<&Cell> = cells
            .iter()
            .filter(|c| c.is_ok() && c.id.starts_with(&format!("{label}/")))
            .collect();
        let mut plot = Plot::new(&format!("Schatten/Besov ratio, {label}"), "lambda", "rho(lambda)")
            .log_x()
            .log_y();
        for p in exponents(case, cfg.operator_norm) {
            let series: Vec<(f64, f64)> = case_cells
                .iter()
                .filter_map(|c| {
                    let lam = c.params.get("lambda").and_then(crate::lab::report::value_as_f64)?;
                    Some((lam, c.get_f64(&ratio_key(p))?))
                })
                .collect();
            let values: Vec<f64> = series.iter().map(|s| s.1).collect();
            let name = format!("ratio_window/{label},p={p}");
            let desc = format!(
                "max/min of S_p(G)/Besov(p, s={}) over lambda < {}",
                fmt_num(matched_smoothness(case.alpha, case.beta, p)),
                ctx.cfg.tolerances.ratio_window
            );
            verdicts.push(VerdictRecord::new(
                name,
                desc,
                Rule::RatioWindow {
                    values,
                    max_ratio: ctx.cfg.tolerances.ratio_window,
                },
            ));
            plot.add(format!("p={p}"), series);
        }
        plots.push((format!("ratio_{}", label.replace(['=', ','], "_")), plot));
    }
    let gaps: Vec<f64> = cells.iter().filter_map(|c| c.get_f64("hs_relative_gap")).collect();
    verdicts.push(VerdictRecord::new(
        "hs_two_ways",
        "S_2 from the spectrum equals the Hilbert-Schmidt quadrature",
        Rule::AtMost {
            values: gaps,
            limit: ctx.cfg.tolerances.hs_agreement,
        },
    ));
    Ok((cells, verdicts, plots))
}
