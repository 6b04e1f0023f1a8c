//! Littlewood–Paley partition and Besov norms of symbols.
//!
//! Band `j` is `v_j φ` with `v_j(x) = v(x/2^j)`, supported on `[2^{j-1}, 2^{j+1}]`.
//! Its Fourier transform `(Fg)(ξ) = ∫ g(t) e^{-iξt} dt` is sampled by a
//! zero-padded FFT of uniform samples, and the band norm is the `L^p(dξ)`
//! Riemann sum over the full discrete frequency window.

use std::ops::RangeInclusive;

use num_complex::Complex;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::symbol::Symbol;
use crate::Exponent;

/// Smooth `v` with support `[1/2, 2]` and `Σ_j v(x/2^j) = 1` on `(0, ∞)`.
#[derive(Clone, Copy, Debug, Default)]
pub struct PartitionFunction;

impl PartitionFunction {
    pub fn new() -> Self {
        PartitionFunction
    }

    /// Generator `ρ(x) = exp(-1/((x - 1/2)(2 - x)))` on `(1/2, 2)`.
    #[inline]
    pub fn generator(x: f64) -> f64 {
        if x <= 0.5 || x >= 2.0 {
            0.0
        } else {
            (-1.0 / ((x - 0.5) * (2.0 - x))).exp()
        }
    }

    /// `Σ_j ρ(x/2^j)`; only octaves adjacent to `log2 x` contribute.
    pub fn normalizer(x: f64) -> f64 {
        let j0 = x.log2().floor() as i32;
        (j0 - 1..=j0 + 2).map(|j| Self::generator(x * (-j as f64).exp2())).sum()
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        let r = Self::generator(x);
        if r == 0.0 {
            0.0
        } else {
            r / Self::normalizer(x)
        }
    }

    /// `v_j(x) = v(x/2^j)`.
    #[inline]
    pub fn band(&self, j: i32, x: f64) -> f64 {
        self.eval(x * (-j as f64).exp2())
    }
}

/// Sampling parameters of the band Fourier transforms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FourierConfig {
    /// Initial uniform samples per band.
    pub samples: usize,
    /// Zero-padding factor.
    pub oversample: usize,
    /// Admissible `|Fg|/max|Fg|` over the top three octaves below Nyquist.
    pub rel_tail: f64,
    /// Ceiling for adaptive doubling of `samples`.
    pub max_samples: usize,
}

impl Default for FourierConfig {
    fn default() -> Self {
        Self {
            samples: 4096,
            oversample: 8,
            rel_tail: 1e-8,
            max_samples: 1 << 16,
        }
    }
}

impl FourierConfig {
    /// Settings for symbols with jump discontinuities, whose transforms decay like `1/ξ`.
    pub fn for_indicators() -> Self {
        Self {
            samples: 1 << 14,
            oversample: 4,
            rel_tail: 1e-2,
            max_samples: 1 << 20,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.samples < 16 {
            return Err(invalid("samples", "need at least 16 samples per band"));
        }
        if self.oversample == 0 {
            return Err(invalid("oversample", "must be >= 1"));
        }
        if !(self.rel_tail > 0.0 && self.rel_tail < 1.0) {
            return Err(invalid("rel_tail", format!("must lie in (0,1), got {}", self.rel_tail)));
        }
        Ok(())
    }
}

/// Discrete Fourier samples of one band.
#[derive(Clone, Debug)]
pub struct BandSpectrum {
    /// `|Fg(ξ_k)|` over the full FFT window, in FFT index order.
    pub magnitudes: Vec<f64>,
    /// Frequency spacing `Δξ`.
    pub dxi: f64,
    /// Time step of the samples.
    pub dt: f64,
    /// Achieved `max_tail / max` ratio.
    pub tail_ratio: f64,
    pub samples: usize,
    /// False when the tail test failed at the sample ceiling.
    pub converged: bool,
}

impl BandSpectrum {
    /// `(Σ |F|^p Δξ)^{1/p}`, or the maximum for `p = ∞`.
    pub fn lp_norm(&self, p: Exponent) -> f64 {
        lp_riemann(&self.magnitudes, self.dxi, p)
    }
}

fn lp_riemann(values: &[f64], step: f64, p: Exponent) -> f64 {
    if p.is_infinite() {
        values.iter().fold(0.0, |m: f64, v| m.max(*v))
    } else {
        let pv = p.value();
        let top = values.iter().fold(0.0, |m: f64, v| m.max(*v));
        if top == 0.0 {
            return 0.0;
        }
        let sum: f64 = values.iter().map(|v| (v / top).powf(pv)).sum();
        top * (sum * step).powf(1.0 / pv)
    }
}

fn band_interval(j: i32) -> (f64, f64) {
    (f64::from(j - 1).exp2(), f64::from(j + 1).exp2())
}

fn band_misses_support(phi: &Symbol, j: i32) -> bool {
    if phi.is_zero() {
        return true;
    }
    match phi.support() {
        Some((lo, hi)) => {
            let (a, b) = band_interval(j);
            hi <= a || lo >= b
        }
        None => false,
    }
}

/// Samples `v_j φ` and returns its discrete Fourier magnitudes.
///
/// `None` when the band is identically zero.
pub fn band_spectrum(phi: &Symbol, j: i32, cfg: &FourierConfig) -> Result<Option<BandSpectrum>> {
    match band_spectrum_lenient(phi, j, cfg)? {
        Some(b) if !b.converged => Err(Error::InsufficientFrequencyWindow {
            tail_ratio: b.tail_ratio,
            rel_tail: cfg.rel_tail,
            samples: b.samples,
        }),
        other => Ok(other),
    }
}

/// As [`band_spectrum`], but returns the ceiling-resolution spectrum flagged
/// `converged = false` instead of failing the tail test.
fn band_spectrum_lenient(phi: &Symbol, j: i32, cfg: &FourierConfig) -> Result<Option<BandSpectrum>> {
    cfg.validate()?;
    if band_misses_support(phi, j) {
        return Ok(None);
    }
    let v = PartitionFunction::new();
    let (a, b) = band_interval(j);
    let mut m = cfg.samples;
    let mut planner = FftPlanner::<f64>::new();
    loop {
        let dt = (b - a) / m as f64;
        let p_len = m * cfg.oversample;
        let mut buf = vec![Complex::new(0.0, 0.0); p_len];
        let mut any = false;
        for (k, slot) in buf.iter_mut().take(m).enumerate() {
            let t = a + k as f64 * dt;
            let w = v.band(j, t);
            if w == 0.0 {
                continue;
            }
            let g = w * phi.eval(t);
            if !g.is_finite() {
                return Err(Error::NonFiniteIntegrand { x: t, value: g });
            }
            if g != 0.0 {
                any = true;
            }
            slot.re = g;
        }
        if !any {
            return Ok(None);
        }
        planner.plan_fft_forward(p_len).process(&mut buf);
        let magnitudes: Vec<f64> = buf.iter().map(|c| c.norm() * dt).collect();
        let top = magnitudes.iter().fold(0.0f64, |acc, v| acc.max(*v));
        let cut = p_len / 16;
        let tail = magnitudes
            .iter()
            .enumerate()
            .filter(|(k, _)| {
                let kk = if *k <= p_len / 2 { *k } else { p_len - *k };
                kk >= cut
            })
            .fold(0.0f64, |acc, (_, v)| acc.max(*v));
        let tail_ratio = tail / top;
        let converged = tail_ratio <= cfg.rel_tail;
        if converged || 2 * m > cfg.max_samples {
            return Ok(Some(BandSpectrum {
                magnitudes,
                dxi: 2.0 * std::f64::consts::PI / (p_len as f64 * dt),
                dt,
                tail_ratio,
                samples: m,
                converged,
            }));
        }
        m *= 2;
    }
}

/// `‖F(v_j φ)‖_{L^p}`.
pub fn band_norm(phi: &Symbol, j: i32, p: Exponent, cfg: &FourierConfig) -> Result<f64> {
    Ok(band_spectrum(phi, j, cfg)?.map_or(0.0, |b| b.lp_norm(p)))
}

/// Per-band norms together with the exponent and smoothness that weight them.
#[derive(Clone, Debug, Serialize)]
pub struct BandDecomposition {
    pub j_min: i32,
    pub j_max: i32,
    pub p: Exponent,
    pub s: f64,
    /// `(j, ‖F(v_j φ)‖_{L^p})` in increasing `j`.
    pub band_norms: Vec<(i32, f64)>,
}

impl BandDecomposition {
    /// `(Σ_j (2^{js} b_j)^p)^{1/p}`, or the supremum when `p = ∞`.
    pub fn norm(&self) -> f64 {
        let weighted: Vec<f64> = self
            .band_norms
            .iter()
            .map(|&(j, b)| (f64::from(j) * self.s).exp2() * b)
            .collect();
        lp_riemann(&weighted, 1.0, self.p)
    }
}

/// Octaves whose band interval meets the open support of `phi`.
pub fn support_octaves(phi: &Symbol) -> Option<RangeInclusive<i32>> {
    let (lo, hi) = phi.support()?;
    if lo >= hi {
        #[allow(clippy::reversed_empty_ranges)]
        return Some(1..=0);
    }
    let mut first = lo.log2().floor() as i32 - 2;
    while f64::from(first + 1).exp2() <= lo {
        first += 1;
    }
    let mut last = hi.log2().ceil() as i32 + 2;
    while f64::from(last - 1).exp2() >= hi {
        last -= 1;
    }
    Some(first..=last)
}

/// Computes every band over `j_range` in parallel.
///
/// A band whose tail test fails at the sample ceiling is accepted only when its
/// weighted contribution is below `rel_tail` times the norm of the other bands.
pub fn band_decomposition(
    phi: &Symbol,
    p: Exponent,
    s: f64,
    j_range: RangeInclusive<i32>,
    cfg: &FourierConfig,
) -> Result<BandDecomposition> {
    if j_range.is_empty() {
        return Err(invalid("j_range", "empty octave range"));
    }
    if let Some(needed) = support_octaves(phi) {
        let missing: Vec<i32> = needed.filter(|j| !j_range.contains(j)).collect();
        if !missing.is_empty() {
            return Err(Error::UncoveredSupport { missing });
        }
    }
    let (j_min, j_max) = (*j_range.start(), *j_range.end());
    let bands = (j_min..=j_max)
        .into_par_iter()
        .map(|j| {
            band_spectrum_lenient(phi, j, cfg).map(|b| {
                (
                    j,
                    b.as_ref().map_or(0.0, |b| b.lp_norm(p)),
                    b.map(|b| (b.converged, b.tail_ratio, b.samples)),
                )
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let band_norms: Vec<(i32, f64)> = bands.iter().map(|(j, n, _)| (*j, *n)).collect();
    let settled = BandDecomposition {
        j_min,
        j_max,
        p,
        s,
        band_norms: bands
            .iter()
            .map(|(j, n, st)| (*j, if matches!(st, Some((false, _, _))) { 0.0 } else { *n }))
            .collect(),
    }
    .norm();
    for (j, n, st) in &bands {
        if let Some((false, tail_ratio, samples)) = st {
            let weighted = (f64::from(*j) * s).exp2() * n;
            if !(weighted <= cfg.rel_tail * settled) {
                return Err(Error::InsufficientFrequencyWindow {
                    tail_ratio: *tail_ratio,
                    rel_tail: cfg.rel_tail,
                    samples: *samples,
                });
            }
        }
    }
    Ok(BandDecomposition {
        j_min,
        j_max,
        p,
        s,
        band_norms,
    })
}

/// `‖φ‖_{𝔅_p^s}` truncated to `j_range`.
pub fn besov_norm(phi: &Symbol, p: Exponent, s: f64, j_range: RangeInclusive<i32>, cfg: &FourierConfig) -> Result<f64> {
    Ok(band_decomposition(phi, p, s, j_range, cfg)?.norm())
}

/// `(j, 2^{js} ‖F(v_j φ)‖_{L^∞})` over `j_range`, unthresholded.
pub fn decay_profile(
    phi: &Symbol,
    s: f64,
    j_range: RangeInclusive<i32>,
    cfg: &FourierConfig,
) -> Result<Vec<(i32, f64)>> {
    let dec = band_decomposition(phi, Exponent::INFINITY, s, j_range, cfg)?;
    Ok(dec
        .band_norms
        .into_iter()
        .map(|(j, b)| (j, (f64::from(j) * s).exp2() * b))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::projection::JacobiRule;
    use crate::symbol::{bump, exp_symbol, indicator_phi_n, Symbol};
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn exp_p(p: f64) -> Exponent {
        Exponent::new(p).unwrap()
    }

    /// Composite Gauss–Legendre on `[a, b]` with `panels` panels.
    fn gauss_legendre(a: f64, b: f64, panels: usize, order: usize) -> Vec<(f64, f64)> {
        let rule = JacobiRule::new(1.0, 1.0, order).unwrap();
        let h = (b - a) / panels as f64;
        let mut out = Vec::with_capacity(panels * order);
        for k in 0..panels {
            let lo = a + k as f64 * h;
            for (u, w) in rule.nodes().iter().zip(rule.weights()) {
                out.push((lo + u * h, w * h));
            }
        }
        out
    }

    #[test]
    fn partition_examples() {
        let v = PartitionFunction::new();
        assert_eq!(v.eval(0.4), 0.0);
        assert_eq!(v.eval(0.5), 0.0);
        assert_eq!(v.eval(2.0), 0.0);
        assert!(v.eval(0.51) > 0.0 && v.eval(1.99) > 0.0);
        let at_one: f64 = (-3..=3).map(|j| v.band(j, 1.0)).sum();
        assert_relative_eq!(at_one, 1.0, max_relative = 1e-15);
        assert_relative_eq!(v.eval(1.5) + v.eval(0.75), 1.0, max_relative = 1e-14);
    }

    #[test]
    fn partition_of_unity_everywhere() {
        let v = PartitionFunction::new();
        let mut worst = 0.0f64;
        for k in 0..10_000 {
            let x = (-8.0 + 16.0 * k as f64 / 9_999.0).exp2();
            let j0 = x.log2().floor() as i32;
            let total: f64 = (j0 - 3..=j0 + 3).map(|j| v.band(j, x)).sum();
            worst = worst.max((total - 1.0).abs());
        }
        assert!(worst < 1e-12, "{worst}");
    }

    #[test]
    fn partition_window_identity() {
        let v = PartitionFunction::new();
        for k in 0..200 {
            let x = 0.5 + 3.5 * k as f64 / 199.0;
            let total: f64 = (-2..=2).map(|j| v.band(j, x)).sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_symbol_has_zero_norms() {
        let cfg = FourierConfig::default();
        let z = Symbol::zero();
        for p in [1.0, 2.0, f64::INFINITY] {
            assert_eq!(band_norm(&z, 0, exp_p(p), &cfg).unwrap(), 0.0);
            assert_eq!(besov_norm(&z, exp_p(p), 0.5, -3..=3, &cfg).unwrap(), 0.0);
        }
        let undeclared = Symbol::new("nil", None, |_| 0.0);
        assert_eq!(band_norm(&undeclared, 2, exp_p(2.0), &cfg).unwrap(), 0.0);
        assert!(decay_profile(&z, 0.0, -2..=2, &cfg)
            .unwrap()
            .iter()
            .all(|(_, v)| *v == 0.0));
    }

    #[test]
    fn band_locality() {
        let cfg = FourierConfig::default();
        let b = bump(1.0).unwrap();
        for j in -4..=4 {
            let n = band_norm(&b, j, exp_p(2.0), &cfg).unwrap();
            if (-1..=1).contains(&j) {
                assert!(n > 0.0, "band {j}");
            } else {
                assert_eq!(n, 0.0, "band {j}");
            }
        }
        assert_eq!(support_octaves(&b), Some(-1..=1));
        let prof = decay_profile(&b, 0.0, -3..=3, &cfg).unwrap();
        assert!(prof.iter().all(|&(j, v)| (v > 0.0) == (-1..=1).contains(&j)));
    }

    #[test]
    fn uncovered_support_is_reported() {
        let cfg = FourierConfig::default();
        match besov_norm(&bump(1.0).unwrap(), exp_p(2.0), 0.0, 0..=3, &cfg) {
            Err(Error::UncoveredSupport { missing }) => assert_eq!(missing, vec![-1]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn band_dilation_identity() {
        let cfg = FourierConfig::default();
        let a = band_norm(&bump(2.0).unwrap(), 1, exp_p(2.0), &cfg).unwrap();
        let b = band_norm(&bump(1.0).unwrap(), 0, exp_p(2.0), &cfg).unwrap();
        assert!((a / (2f64.sqrt() * b) - 1.0).abs() < 5e-3);
    }

    #[test]
    fn dilation_law_for_besov_norms() {
        let smooth = FourierConfig::default();
        let rough = FourierConfig::for_indicators();
        let family = [
            (bump(1.0).unwrap(), smooth),
            (bump(3.0).unwrap(), smooth),
            (indicator_phi_n(8).unwrap(), rough),
        ];
        for (phi, cfg) in &family {
            let wide = phi.dilate(2.0).unwrap();
            for p in [1.0, 2.0, 4.0, f64::INFINITY] {
                for s in [0.0, 1.5] {
                    let p = exp_p(p);
                    let base = besov_norm(phi, p, s, -4..=6, cfg).unwrap();
                    let dil = besov_norm(&wide, p, s, -4..=6, cfg).unwrap();
                    let expected = (s + 1.0 / p.conjugate()).exp2();
                    assert!(
                        (dil / base / expected - 1.0).abs() < 0.01,
                        "{} p={p} s={s}: {}",
                        phi.label(),
                        dil / base / expected
                    );
                }
            }
        }
    }

    #[test]
    fn dilation_law_with_exponential() {
        let cfg = FourierConfig::default();
        let e = exp_symbol();
        let wide = e.dilate(2.0).unwrap();
        for (p, s) in [(1.0, 1.0), (2.0, 1.5), (f64::INFINITY, 0.0)] {
            let p = exp_p(p);
            let base = besov_norm(&e, p, s, -40..=8, &cfg).unwrap();
            let dil = besov_norm(&wide, p, s, -40..=8, &cfg).unwrap();
            let expected = (s + 1.0 / p.conjugate()).exp2();
            assert!((dil / base / expected - 1.0).abs() < 0.01, "p={p} s={s}");
        }
    }

    /// Direct evaluation of the same trapezoid sum at every FFT frequency sample.
    fn direct_dft_norm(phi: &Symbol, j: i32, p: Exponent, spec: &BandSpectrum, oversample: usize) -> f64 {
        let v = PartitionFunction::new();
        let a = f64::from(j - 1).exp2();
        let m = spec.samples;
        let samples: Vec<(f64, f64)> = (0..m)
            .map(|k| {
                let t = a + k as f64 * spec.dt;
                (t, v.band(j, t) * phi.eval(t))
            })
            .filter(|(_, g)| *g != 0.0)
            .collect();
        let p_len = m * oversample;
        let mags: Vec<f64> = (0..p_len)
            .into_par_iter()
            .map(|k| {
                let xi = 2.0 * PI * k as f64 / (p_len as f64 * spec.dt);
                let mut acc = Complex::new(0.0, 0.0);
                for &(t, g) in &samples {
                    acc += Complex::from_polar(g, -xi * (t - a));
                }
                acc.norm() * spec.dt
            })
            .collect();
        lp_riemann(&mags, spec.dxi, p)
    }

    #[test]
    fn fft_matches_direct_sums() {
        let phi = indicator_phi_n(8).unwrap();
        let cfg = FourierConfig {
            samples: 1024,
            oversample: 4,
            rel_tail: 0.5,
            max_samples: 1024,
        };
        let spec = band_spectrum(&phi, 0, &cfg).unwrap().unwrap();
        let p = exp_p(2.0);
        let fast = spec.lp_norm(p);
        let slow = direct_dft_norm(&phi, 0, p, &spec, cfg.oversample);
        assert!((fast / slow - 1.0).abs() < 1e-6, "{fast} {slow}");
    }

    /// Continuous transform by composite Gauss–Legendre at the FFT frequencies
    /// below one eighth of Nyquist; the rest is below the tail threshold.
    fn quadrature_norm(phi: &Symbol, j: i32, p: Exponent, spec: &BandSpectrum) -> f64 {
        let v = PartitionFunction::new();
        let (a, b) = band_interval(j);
        let nodes: Vec<(f64, f64)> = gauss_legendre(a, b, 256, 24)
            .into_iter()
            .map(|(t, w)| (t, w * v.band(j, t) * phi.eval(t)))
            .collect();
        let p_len = spec.magnitudes.len();
        let cut = p_len / 16;
        let mags: Vec<f64> = (0..p_len)
            .into_par_iter()
            .map(|k| {
                let kk = if k <= p_len / 2 {
                    k as f64
                } else {
                    k as f64 - p_len as f64
                };
                if kk.abs() >= cut as f64 {
                    return 0.0;
                }
                let xi = kk * spec.dxi;
                let mut acc = Complex::new(0.0, 0.0);
                for &(t, w) in &nodes {
                    acc += Complex::from_polar(w, -xi * t);
                }
                acc.norm()
            })
            .collect();
        lp_riemann(&mags, spec.dxi, p)
    }

    #[test]
    fn fft_matches_quadrature_on_smooth_symbols() {
        let cfg = FourierConfig::default();
        for phi in [bump(1.0).unwrap(), exp_symbol()] {
            for j in [-1, 0, 1] {
                let spec = band_spectrum(&phi, j, &cfg).unwrap().unwrap();
                for p in [1.0, 2.0, f64::INFINITY] {
                    let p = exp_p(p);
                    let fast = spec.lp_norm(p);
                    let slow = quadrature_norm(&phi, j, p, &spec);
                    assert!(
                        (fast / slow - 1.0).abs() < 1e-6,
                        "{} j={j} p={p}: {fast} vs {slow}",
                        phi.label()
                    );
                }
            }
        }
    }

    /// Plancherel: `‖Fg‖_2² = 2π ‖g‖_2²`, with `‖g‖_2` by Gauss–Legendre split at the jumps.
    #[test]
    fn fft_matches_plancherel_on_indicators() {
        let cfg = FourierConfig::for_indicators();
        let v = PartitionFunction::new();
        for n in [4u32, 8, 16] {
            let phi = indicator_phi_n(n).unwrap();
            let hi = 1.0 + 2.0 / f64::from(n);
            for j in [0, 1] {
                let (a, b) = band_interval(j);
                let (lo, up) = (a.max(1.0), b.min(hi));
                let l2sq: f64 = gauss_legendre(lo, up, 64, 24)
                    .into_iter()
                    .map(|(t, w)| w * v.band(j, t).powi(2))
                    .sum();
                let exact = (2.0 * PI * l2sq).sqrt();
                let fast = band_norm(&phi, j, exp_p(2.0), &cfg).unwrap();
                assert!((fast / exact - 1.0).abs() < 1e-3, "n={n} j={j}: {fast} vs {exact}");
            }
        }
    }

    #[test]
    fn insufficient_window_is_an_error() {
        let cfg = FourierConfig {
            samples: 256,
            oversample: 2,
            rel_tail: 1e-8,
            max_samples: 1024,
        };
        match band_norm(&indicator_phi_n(8).unwrap(), 0, exp_p(2.0), &cfg) {
            Err(Error::InsufficientFrequencyWindow { tail_ratio, .. }) => assert!(tail_ratio > 1e-8),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn indicator_norm_trend() {
        let cfg = FourierConfig::for_indicators();
        let p = exp_p(2.0);
        let mut prev = None;
        for n in [16u32, 32, 64, 128] {
            let phi = indicator_phi_n(n).unwrap();
            let norm = besov_norm(&phi, p, 0.0, support_octaves(&phi).unwrap(), &cfg).unwrap();
            if let Some(last) = prev {
                let ratio: f64 = norm / last;
                assert!((ratio / 0.5f64.sqrt() - 1.0).abs() < 0.15, "n={n}: {ratio}");
            }
            prev = Some(norm);
        }
    }
}
