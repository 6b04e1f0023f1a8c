//! `S_1 / S_p` ratios of strip operators for `p < 1`.

use rayon::prelude::*;

use crate::error::Result;
use crate::lab::plot::Plot;
use crate::lab::report::{num, Cell, Rule, VerdictRecord};
use crate::lab::strip::StripGalerkin;
use crate::lab::Context;
use crate::spectrum::SingularSpectrum;
use crate::Exponent;

use super::Output;

/// `‖T‖_{S_1} / ‖T‖_{S_p}`.
pub fn quasinorm_ratio(sp: &SingularSpectrum, p: Exponent) -> Result<f64> {
    let q = sp.schatten(p);
    Ok(if q == 0.0 {
        f64::NAN
    } else {
        sp.schatten(Exponent::new(1.0)?) / q
    })
}

fn compute(ctx: &Context, n: u32, cell: &mut Cell) -> Result<f64> {
    let cfg = &ctx.cfg.quasinorm;
    let g = StripGalerkin::new(n, cfg.cells_per_block, 0.0, 0.0)?;
    let sp = ctx.audit.svd(&g.matrix)?;
    let blocks: Vec<_> = (0..g.blocks.len()).map(|j| g.block(j)).collect();
    let spectra = blocks.iter().map(|b| ctx.audit.svd(b)).collect::<Result<Vec<_>>>()?;
    let refs: Vec<_> = blocks.iter().collect();
    ctx.audit.direct_sum(&refs, &spectra)?;
    let ratio = quasinorm_ratio(&sp, cfg.p)?;
    cell.put("dim", g.matrix.nrows());
    cell.put("noise_floor", num(sp.noise_floor));
    cell.put("significant_values", sp.significant().len());
    cell.put(
        "s_prefix",
        sp.values.iter().take(8).map(|v| num(*v)).collect::<Vec<_>>(),
    );
    cell.put("schatten_1", num(sp.schatten(Exponent::new(1.0)?)));
    cell.put(&format!("schatten_{}", cfg.p), num(sp.schatten(cfg.p)));
    cell.put("ratio", num(ratio));
    Ok(ratio)
}

pub fn run(ctx: &Context) -> Result<Output> {
    let cfg = &ctx.cfg.quasinorm;
    let results: Vec<(Cell, Option<f64>)> = cfg
        .ns
        .par_iter()
        .map(|&n| {
            let id = format!("strip/p={}/n={n}", cfg.p);
            let mut cell = Cell::new(id.clone())
                .param("n", n)
                .param("p", cfg.p)
                .param("cells_per_block", cfg.cells_per_block);
            let out = match ctx.timed(&id, || compute(ctx, n, &mut cell)) {
                Ok(r) => Some(r),
                Err(e) => {
                    cell.fail(e);
                    None
                }
            };
            (cell, out)
        })
        .collect();
    let series: Vec<(f64, f64)> = cfg
        .ns
        .iter()
        .zip(&results)
        .filter_map(|(n, r)| r.1.map(|v| (f64::from(*n), v)))
        .collect();
    let verdict = VerdictRecord::new(
        "ratio_shrinks",
        format!(
            "S_1/S_{} shrinks by >= {} per doubling of n",
            cfg.p, ctx.cfg.tolerances.shrink
        ),
        Rule::ShrinkPerStep {
            series: series.iter().map(|s| s.1).collect(),
            min_shrink: ctx.cfg.tolerances.shrink,
        },
    );
    let mut plot = Plot::new("Quasinorm gap", "n", "S_1 / S_p").log_x().log_y();
    plot.add(format!("p={}", cfg.p), series);
    let cells = results.into_iter().map(|r| r.0).collect();
    Ok((cells, vec![verdict], vec![("ratio_vs_n".into(), plot)]))
}
