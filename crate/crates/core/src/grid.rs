//! Truncated quadrature grids on (0, ∞).
//!
//! The workhorse is the dyadic-logarithmic grid `x_k = 2^{j_min + k/ppo}` with
//! trapezoid weights in the variable `ln x`. Power maps `x ↦ x^a` send such a
//! grid to another grid whose weights carry the Jacobian, so a change of
//! variables performed on grids is exact at the discrete level.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Octave range and resolution of a dyadic grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DyadicMeta {
    pub j_min: i32,
    pub j_max: i32,
    pub ppo: u32,
}

/// Positive abscissae with positive quadrature weights.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    points: Vec<f64>,
    weights: Vec<f64>,
    dyadic: Option<DyadicMeta>,
}

impl Grid {
    /// Builds a grid from raw points and weights, validating the invariants.
    pub fn new(points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        Self::validated(points, weights, None)
    }

    fn validated(points: Vec<f64>, weights: Vec<f64>, dyadic: Option<DyadicMeta>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidGrid("no points".into()));
        }
        if points.len() != weights.len() {
            return Err(Error::InvalidGrid(format!(
                "{} points but {} weights",
                points.len(),
                weights.len()
            )));
        }
        if let Some(i) = points.iter().position(|x| !x.is_finite() || *x <= 0.0) {
            return Err(Error::InvalidGrid(format!(
                "point {i} = {} is not a finite positive number",
                points[i]
            )));
        }
        if let Some(i) = points.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGrid(format!(
                "points not strictly increasing at index {}",
                i + 1
            )));
        }
        if let Some(i) = weights.iter().position(|w| !w.is_finite() || *w <= 0.0) {
            return Err(Error::InvalidGrid(format!(
                "weight {i} = {} is not a finite positive number",
                weights[i]
            )));
        }
        Ok(Self {
            points,
            weights,
            dyadic,
        })
    }

    /// Dyadic-logarithmic grid on `[2^j_min, 2^j_max]` with `ppo` points per octave.
    pub fn log(j_min: i32, j_max: i32, ppo: u32) -> Result<Self> {
        if j_min >= j_max {
            return Err(invalid("j_min", format!("need j_min < j_max, got {j_min} >= {j_max}")));
        }
        if ppo == 0 {
            return Err(invalid("ppo", "points per octave must be at least 1"));
        }
        let count = (j_max - j_min) as usize * ppo as usize + 1;
        let h = std::f64::consts::LN_2 / ppo as f64;
        let points: Vec<f64> = (0..count)
            .map(|k| (f64::from(j_min) + k as f64 / f64::from(ppo)).exp2())
            .collect();
        let weights = points
            .iter()
            .enumerate()
            .map(|(k, &x)| if k == 0 || k + 1 == count { 0.5 * h * x } else { h * x })
            .collect();
        Self::validated(points, weights, Some(DyadicMeta { j_min, j_max, ppo }))
    }

    /// Midpoint grid of `n` cells of width `step` starting at `start >= 0`.
    pub fn uniform_midpoint(start: f64, step: f64, n: usize) -> Result<Self> {
        if !(start >= 0.0 && start.is_finite()) {
            return Err(invalid("start", format!("must be finite and >= 0, got {start}")));
        }
        if !(step > 0.0 && step.is_finite()) {
            return Err(invalid("step", format!("must be finite and > 0, got {step}")));
        }
        if n == 0 {
            return Err(invalid("n", "need at least one cell"));
        }
        let points = (0..n).map(|i| start + (i as f64 + 0.5) * step).collect();
        Self::validated(points, vec![step; n], None)
    }

    /// Image of the grid under `x ↦ x^a`, weights multiplied by the Jacobian `a x^{a-1}`.
    pub fn power_transform(&self, a: f64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(invalid("a", format!("power must be finite and > 0, got {a}")));
        }
        if a == 1.0 {
            return Ok(self.clone());
        }
        let points = self.points.iter().map(|x| x.powf(a)).collect();
        let weights = self
            .points
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| a * x.powf(a - 1.0) * w)
            .collect();
        Self::validated(points, weights, None)
    }

    /// `Σ w_i f(x_i)`; fails on the first non-finite sample.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> Result<f64> {
        let mut acc = 0.0;
        for (&x, &w) in self.points.iter().zip(&self.weights) {
            let value = f(x);
            if !value.is_finite() {
                return Err(Error::NonFiniteIntegrand { x, value });
            }
            acc += w * value;
        }
        Ok(acc)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dyadic(&self) -> Option<DyadicMeta> {
        self.dyadic
    }

    pub fn lower(&self) -> f64 {
        self.points[0]
    }

    pub fn upper(&self) -> f64 {
        self.points[self.points.len() - 1]
    }

    /// `√w_i`, the symmetrized Nyström scaling factors.
    pub fn sqrt_weights(&self) -> Vec<f64> {
        self.weights.iter().map(|w| w.sqrt()).collect()
    }

    /// True when both grids carry the same points and weights up to relative `tol`.
    pub fn matches(&self, other: &Grid, tol: f64) -> bool {
        let close = |a: &[f64], b: &[f64]| {
            a.len() == b.len()
                && a.iter()
                    .zip(b)
                    .all(|(x, y)| (x - y).abs() <= tol * x.abs().max(y.abs()))
        };
        close(&self.points, &other.points) && close(&self.weights, &other.weights)
    }
}

/// Parses `j_min:j_max:ppo`, the command-line grid spelling.
pub fn parse_grid_spec(spec: &str) -> Result<(i32, i32, u32)> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(Error::Config(format!(
            "grid spec `{spec}` must have the form j_min:j_max:ppo"
        )));
    }
    let bad = |what: &str| Error::Config(format!("grid spec `{spec}`: bad {what}"));
    let j_min = parts[0].trim().parse().map_err(|_| bad("j_min"))?;
    let j_max = parts[1].trim().parse().map_err(|_| bad("j_max"))?;
    let ppo = parts[2].trim().parse().map_err(|_| bad("ppo"))?;
    Ok((j_min, j_max, ppo))
}
