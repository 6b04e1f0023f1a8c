//! `S_p → S_p` norms of the discrete averaging projection over a kernel battery.
//!
//! Norms are lower-bounded by `max ‖Q X‖_p / ‖X‖_p` over the battery. Strip
//! members are refined by the nonlinear power method with dual maps
//! `Y ↦ U Σ^{p-1} Vᵀ`.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::lab::plot::Plot;
use crate::lab::report::{num, Cell, Rule, VerdictRecord};
use crate::lab::Context;
use crate::operator::{assemble_distorted, assemble_kernel, kernel};
use crate::projection::{DistortedHankelProjector, ProjectorConfig};
use crate::spectrum::{SingularSpectrum, SpectrumSource};
use crate::symbol::indicator_phi_n;
use crate::Exponent;

use super::{fmt_num, Output};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WindowPosition {
    Inside,
    Outside,
}

/// Whether `Q_{α,β}` is bounded on `S_p`: `-p < max(α,β)(p-2) < p` for finite
/// `p`, and `α, β < 1` at `p = ∞`.
pub fn window_position(alpha: f64, beta: f64, p: Exponent) -> WindowPosition {
    let m = alpha.max(beta);
    let inside = if p.is_infinite() {
        m < 1.0
    } else {
        let (pv, lhs) = (p.value(), m * (p.value() - 2.0));
        -pv < lhs && lhs < pv
    };
    if inside {
        WindowPosition::Inside
    } else {
        WindowPosition::Outside
    }
}

struct Setup {
    alpha: f64,
    beta: f64,
    grid: Grid,
    q: DistortedHankelProjector,
    intervals: u32,
}

struct Member {
    name: String,
    x: DMatrix<f64>,
    refine: bool,
    /// Row and column index sets of disjoint blocks, when block structured.
    blocks: Option<Vec<(Vec<usize>, Vec<usize>)>>,
}

struct FullSvd {
    u: DMatrix<f64>,
    s: Vec<f64>,
    vt: DMatrix<f64>,
}

fn full_svd(m: &DMatrix<f64>) -> Result<FullSvd> {
    let (rows, cols) = m.shape();
    let svd = m
        .clone()
        .try_svd(true, true, f64::EPSILON, 0)
        .ok_or(Error::SvdNonConvergence { rows, cols })?;
    let (u, vt) = match (svd.u, svd.v_t) {
        (Some(u), Some(vt)) => (u, vt),
        _ => return Err(Error::SvdNonConvergence { rows, cols }),
    };
    Ok(FullSvd {
        u,
        s: svd.singular_values.as_slice().to_vec(),
        vt,
    })
}

fn spectrum_of(s: &[f64], dim: usize) -> SingularSpectrum {
    SingularSpectrum::from_values(s.to_vec(), SpectrumSource::Dense, dim)
}

/// Norming functional of `A` in the dual of `S_e`: `U (Σ/s_0)^{e-1} Vᵀ`,
/// `u_0 v_0ᵀ` at `e = ∞` and `U Vᵀ` on the numerical range at `e = 1`.
///
/// Returns the matrix with its singular values.
fn dual_map(f: &FullSvd, e: f64, floor: f64) -> (DMatrix<f64>, Vec<f64>) {
    let top = f.s.iter().cloned().fold(0.0, f64::max);
    let weights: Vec<f64> =
        f.s.iter()
            .map(|&s| {
                if top == 0.0 || s <= floor {
                    0.0
                } else if e.is_infinite() {
                    if s >= top * (1.0 - 1e-12) {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    (s / top).powf(e - 1.0)
                }
            })
            .collect();
    let k = weights.iter().rposition(|w| *w > 0.0).map_or(0, |i| i + 1);
    let mut left = f.u.columns(0, k).into_owned();
    for (j, w) in weights.iter().take(k).enumerate() {
        left.column_mut(j).scale_mut(*w);
    }
    (left * f.vt.rows(0, k), weights)
}

#[cfg(test)]
fn schatten_values(s: &[f64], dim: usize, p: Exponent) -> f64 {
    spectrum_of(s, dim).schatten(p)
}

fn setup(alpha: f64, beta: f64, j_min: i32, j_max: i32, ppo: u32, band: [f64; 2], radial_factor: f64) -> Result<Setup> {
    let grid = Grid::log(j_min, j_max, ppo)?;
    let radial_ppo = (f64::from(ppo) * radial_factor).round().max(1.0) as u32;
    let q = DistortedHankelProjector::new(
        &grid,
        &grid,
        alpha,
        beta,
        ProjectorConfig {
            radial_ppo,
            band: Some((band[0], band[1])),
        },
    )?;
    Ok(Setup {
        alpha,
        beta,
        grid,
        q,
        intervals: (j_max - j_min) as u32 * ppo,
    })
}

fn battery(ctx: &Context, st: &Setup) -> Result<Vec<Member>> {
    let cfg = &ctx.cfg.window;
    let g = &st.grid;
    let n = g.len();
    let mut members = Vec::new();
    for d in 0..cfg.random_draws {
        let seed = ctx
            .cfg
            .seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(u64::from(st.intervals) << 20)
            .wrapping_add(d as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw = DMatrix::from_fn(n, n, |_, _| StandardNormal.sample(&mut rng));
        let mut x = st.q.restrict(&raw);
        let norm = x.norm();
        if norm > 0.0 {
            x /= norm;
        }
        members.push(Member {
            name: format!("random{d}"),
            x,
            refine: false,
            blocks: None,
        });
    }
    let (alpha, beta) = (st.alpha, st.beta);
    let gs = g.power_transform(alpha)?;
    let gt = g.power_transform(beta)?;
    let a = 0.5 / alpha - 0.5;
    let b = 0.5 / beta - 0.5;
    let scale = 1.0 / (alpha * beta).sqrt();
    for &c in &cfg.levels {
        for &sn in &cfg.strip_ns {
            let nf = f64::from(sn);
            let row_block = move |s: f64| -> Option<usize> {
                let j = (s * nf / c).floor();
                (j >= 0.0 && j <= nf).then_some(j as usize)
            };
            let col_in = move |j: usize, t: f64| {
                let lo = c * (nf - j as f64) / nf;
                t >= lo && t < lo + c / nf
            };
            let k = kernel(move |s, t| match row_block(s) {
                Some(j) if col_in(j, t) => s.powf(a) * t.powf(b),
                _ => 0.0,
            });
            let mut x = assemble_kernel(k, &gs, &gt, "blocks")?.into_entries();
            x *= scale;
            let mut blocks = Vec::new();
            for j in 0..=sn as usize {
                let rows: Vec<usize> = (0..n).filter(|&i| row_block(gs.points()[i]) == Some(j)).collect();
                let cols: Vec<usize> = (0..n).filter(|&i| col_in(j, gt.points()[i])).collect();
                if !rows.is_empty() && !cols.is_empty() {
                    blocks.push((rows, cols));
                }
            }
            if x.norm() > 0.0 {
                members.push(Member {
                    name: format!("blocks(c={},n={sn})", fmt_num(c)),
                    x,
                    refine: false,
                    blocks: Some(blocks),
                });
            }
            let phi = indicator_phi_n(sn)?.dilate(c)?;
            let strip = assemble_distorted(&phi, alpha, beta, g, g)?.into_entries();
            if strip.norm() > 0.0 {
                members.push(Member {
                    name: format!("strip(c={},n={sn})", fmt_num(c)),
                    x: strip,
                    refine: true,
                    blocks: None,
                });
            }
        }
    }
    Ok(members)
}

/// Best `‖QX‖_p/‖X‖_p` along the nonlinear power iteration started at `x0`.
fn refine(ctx: &Context, st: &Setup, x0: &DMatrix<f64>, p: Exponent, iterations: usize) -> Result<f64> {
    let n = x0.nrows();
    let pc = p.conjugate();
    let mut x = x0.clone();
    let mut nx = ctx.audit.svd(&x)?.schatten(p);
    let mut best = 0.0f64;
    for it in 0..=iterations {
        let y = st.q.apply(&x)?;
        let fy = full_svd(&y)?;
        let sy = spectrum_of(&fy.s, n);
        ctx.audit.spectrum(&sy);
        if nx > 0.0 {
            best = best.max(sy.schatten(p) / nx);
        }
        if it == iterations || sy.top() == 0.0 {
            break;
        }
        let z = st.q.apply(&dual_map(&fy, p.value(), sy.noise_floor).0)?;
        let fz = full_svd(&z)?;
        let sz = spectrum_of(&fz.s, n);
        ctx.audit.spectrum(&sz);
        if sz.top() == 0.0 {
            break;
        }
        let (next, weights) = dual_map(&fz, pc, sz.noise_floor);
        let spx = spectrum_of(&weights, n);
        ctx.audit.spectrum(&spx);
        nx = spx.schatten(p);
        x = next;
    }
    Ok(best)
}

struct MemberResult {
    name: String,
    ratios: Vec<f64>,
}

fn evaluate(ctx: &Context, st: &Setup, m: &Member, ps: &[Exponent]) -> Result<MemberResult> {
    let sx = ctx.audit.svd(&m.x)?;
    let qx = st.q.apply(&m.x)?;
    let sq = ctx.audit.svd(&qx)?;
    if let Some(blocks) = &m.blocks {
        let parts = blocks
            .iter()
            .map(|(r, c)| ctx.audit.svd(&m.x.select_rows(r).select_columns(c)))
            .collect::<Result<Vec<_>>>()?;
        ctx.audit.additivity(&sx, &parts);
    }
    let iterations = ctx.cfg.window.refine_iterations;
    let ratios = ps
        .par_iter()
        .map(|&p| {
            let plain = sq.schatten(p) / sx.schatten(p);
            if m.refine && iterations > 0 && p.value() != 2.0 {
                Ok(plain.max(refine(ctx, st, &m.x, p, iterations)?))
            } else {
                Ok(plain)
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(MemberResult {
        name: m.name.clone(),
        ratios,
    })
}

/// Runs the battery for one discretization; returns `max R` per exponent.
fn run_cell(ctx: &Context, st: &Setup, ps: &[Exponent], cell: &mut Cell) -> Result<Vec<f64>> {
    let members = battery(ctx, st)?;
    let results = members
        .par_iter()
        .map(|m| evaluate(ctx, st, m, ps))
        .collect::<Result<Vec<_>>>()?;
    cell.put("n_nodes", st.grid.len());
    cell.put("radial_nodes", st.q.radial_nodes());
    cell.put("members", results.len());
    let mut maxima = Vec::new();
    for (k, p) in ps.iter().enumerate() {
        let mut table = BTreeMap::new();
        let mut best = (f64::NEG_INFINITY, String::new());
        for r in &results {
            table.insert(r.name.clone(), num(r.ratios[k]));
            if r.ratios[k] > best.0 {
                best = (r.ratios[k], r.name.clone());
            }
        }
        cell.put(&format!("ratios_p={p}"), Value::Object(table.into_iter().collect()));
        cell.put(&format!("max_ratio_p={p}"), num(best.0));
        cell.put(&format!("argmax_p={p}"), best.1);
        maxima.push(best.0);
    }
    Ok(maxima)
}

pub fn run(ctx: &Context) -> Result<Output> {
    let cfg = &ctx.cfg.window;
    let tol = &ctx.cfg.tolerances;
    let mut cells = Vec::new();
    let mut verdicts = Vec::new();
    let mut plots = Vec::new();

    // main sweep
    let mut series: Vec<Vec<(f64, f64)>> = vec![Vec::new(); cfg.ps.len()];
    let mut p2_all = Vec::new();
    for &ppo in &cfg.ppos {
        let intervals = (cfg.j_max - cfg.j_min) as u32 * ppo;
        let id = format!("alpha={},beta={}/N={intervals}", fmt_num(cfg.alpha), fmt_num(cfg.beta));
        let mut cell = Cell::new(id.clone())
            .param("alpha", cfg.alpha)
            .param("beta", cfg.beta)
            .param("N", intervals)
            .param("ppo", ppo)
            .param("band", cfg.band);
        let out = ctx.timed(&id, || -> Result<Vec<f64>> {
            let st = setup(
                cfg.alpha,
                cfg.beta,
                cfg.j_min,
                cfg.j_max,
                ppo,
                cfg.band,
                cfg.radial_factor,
            )?;
            run_cell(ctx, &st, &cfg.ps, &mut cell)
        });
        match out {
            Ok(maxima) => {
                for (k, m) in maxima.iter().enumerate() {
                    series[k].push((f64::from(intervals), *m));
                }
                if let Some(k) = cfg.ps.iter().position(|p| p.value() == 2.0) {
                    if let Some(Value::Object(t)) = cell.quantities.get(&format!("ratios_p={}", cfg.ps[k])) {
                        p2_all.extend(t.values().filter_map(crate::lab::report::value_as_f64));
                    }
                }
            }
            Err(e) => cell.fail(e),
        }
        cells.push(cell);
    }
    let mut plot = Plot::new(
        &format!(
            "Projection norm lower bounds, alpha={}, beta={}",
            fmt_num(cfg.alpha),
            fmt_num(cfg.beta)
        ),
        "N",
        "max R",
    )
    .log_x();
    for (k, p) in cfg.ps.iter().enumerate() {
        let values: Vec<f64> = series[k].iter().map(|s| s.1).collect();
        if p.value() == 2.0 {
            verdicts.push(VerdictRecord::new(
                "contraction_p=2",
                format!("every battery ratio at p=2 is <= 1 + {:e}", tol.contraction),
                Rule::AtMost {
                    values: p2_all.clone(),
                    limit: 1.0 + tol.contraction,
                },
            ));
        } else {
            verdicts.push(trend_verdict(
                cfg.alpha,
                cfg.beta,
                *p,
                values,
                tol.stability,
                tol.growth,
                "",
            ));
        }
        plot.add(format!("p={p}"), series[k].clone());
    }
    plots.push(("ratio_vs_n".into(), plot));

    // operator-norm battery
    let inf = [Exponent::INFINITY];
    let mut op_plot = Plot::new("Operator-norm battery", "N", "max R").log_x();
    for case in &cfg.operator_norm {
        let label = format!("alpha={},beta={}", fmt_num(case.alpha), fmt_num(case.beta));
        let mut pts = Vec::new();
        for &ppo in &cfg.ppos {
            let intervals = (case.j_max - case.j_min) as u32 * ppo;
            let id = format!("opnorm/{label}/N={intervals}");
            let mut cell = Cell::new(id.clone())
                .param("alpha", case.alpha)
                .param("beta", case.beta)
                .param("N", intervals)
                .param("ppo", ppo)
                .param("band", cfg.band)
                .param("p", "inf");
            let out = ctx.timed(&id, || -> Result<Vec<f64>> {
                let st = setup(
                    case.alpha,
                    case.beta,
                    case.j_min,
                    case.j_max,
                    ppo,
                    cfg.band,
                    cfg.radial_factor,
                )?;
                run_cell(ctx, &st, &inf, &mut cell)
            });
            match out {
                Ok(m) => pts.push((f64::from(intervals), m[0])),
                Err(e) => cell.fail(e),
            }
            cells.push(cell);
        }
        let values = pts.iter().map(|p| p.1).collect();
        verdicts.push(trend_verdict(
            case.alpha,
            case.beta,
            Exponent::INFINITY,
            values,
            tol.stability,
            tol.growth,
            &format!("/{label}"),
        ));
        op_plot.add(label, pts);
    }
    if !cfg.operator_norm.is_empty() {
        plots.push(("operator_norm_vs_n".into(), op_plot));
    }
    Ok((cells, verdicts, plots))
}

fn trend_verdict(
    alpha: f64,
    beta: f64,
    p: Exponent,
    values: Vec<f64>,
    stability: f64,
    growth: f64,
    suffix: &str,
) -> VerdictRecord {
    match window_position(alpha, beta, p) {
        WindowPosition::Inside => VerdictRecord::new(
            format!("stable_p={p}{suffix}"),
            format!("p={p} inside the window: max R changes by <= {stability} per doubling of N"),
            Rule::StablePerStep {
                series: values,
                tol: stability,
            },
        ),
        WindowPosition::Outside => VerdictRecord::new(
            format!("growth_p={p}{suffix}"),
            format!("p={p} outside the window: max R grows by >= {growth} per doubling of N"),
            Rule::GrowthPerStep {
                series: values,
                min_growth: growth,
            },
        ),
    }
}
