//! Symbols: evaluable functions on `(0, ∞)` with optional support metadata.

use std::fmt;
use std::sync::Arc;

use crate::besov::PartitionFunction;
use crate::error::{invalid, Result};

type Eval = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A pure evaluator `φ : (0, ∞) → ℝ`, exactly zero outside `support` when declared.
#[derive(Clone)]
pub struct Symbol {
    eval: Eval,
    support: Option<(f64, f64)>,
    label: String,
}

impl fmt::Debug for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Symbol")
            .field("label", &self.label)
            .field("support", &self.support)
            .finish()
    }
}

impl Symbol {
    pub fn new(
        label: impl Into<String>,
        support: Option<(f64, f64)>,
        eval: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            eval: Arc::new(eval),
            support,
            label: label.into(),
        }
    }

    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        (self.eval)(t)
    }

    pub fn support(&self) -> Option<(f64, f64)> {
        self.support
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// The identically zero symbol, with empty support.
    pub fn zero() -> Self {
        Self::new("zero", Some((1.0, 1.0)), |_| 0.0)
    }

    /// True when the symbol is declared to vanish identically.
    pub fn is_zero(&self) -> bool {
        matches!(self.support, Some((lo, hi)) if lo >= hi)
    }

    /// `t ↦ φ(t/λ)`, support scaled by `λ`.
    pub fn dilate(&self, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(invalid("lambda", format!("dilation must be > 0, got {lambda}")));
        }
        let inner = self.eval.clone();
        let support = self.support.map(|(lo, hi)| (lo * lambda, hi * lambda));
        Ok(Self::new(format!("{}(./{lambda})", self.label), support, move |t| {
            inner(t / lambda)
        }))
    }
}

/// Characteristic function of `(1, 1 + 2/n]`.
pub fn indicator_phi_n(n: u32) -> Result<Symbol> {
    if n == 0 {
        return Err(invalid("n", "need n >= 1"));
    }
    let hi = 1.0 + 2.0 / f64::from(n);
    Ok(Symbol::new(format!("phi_{n}"), Some((1.0, hi)), move |t| {
        if t > 1.0 && t <= hi {
            1.0
        } else {
            0.0
        }
    }))
}

/// `t ↦ e^{-t}`.
pub fn exp_symbol() -> Symbol {
    Symbol::new("exp", None, |t| (-t).exp())
}

/// `t ↦ v(t/λ)` with `v` the Littlewood–Paley generator; support `[λ/2, 2λ]`.
pub fn bump(lambda: f64) -> Result<Symbol> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(invalid("lambda", format!("bump scale must be > 0, got {lambda}")));
    }
    let v = PartitionFunction::new();
    Ok(Symbol::new(
        format!("bump({lambda})"),
        Some((0.5 * lambda, 2.0 * lambda)),
        move |t| v.eval(t / lambda),
    ))
}

/// `t ↦ t^σ φ(t)`.
pub fn power_weight(phi: &Symbol, sigma: f64) -> Symbol {
    if sigma == 0.0 {
        return phi.clone();
    }
    let inner = phi.eval.clone();
    Symbol::new(format!("t^{sigma}*{}", phi.label), phi.support, move |t| {
        let v = inner(t);
        if v == 0.0 {
            0.0
        } else {
            t.powf(sigma) * v
        }
    })
}

/// Symbol family names accepted by configuration files and the command line.
pub fn by_name(name: &str, param: Option<f64>) -> Result<Symbol> {
    match name {
        "exp" => Ok(exp_symbol()),
        "zero" => Ok(Symbol::zero()),
        "bump" => bump(param.unwrap_or(1.0)),
        "phi_n" | "indicator" => {
            let n = param.unwrap_or(8.0);
            if n < 1.0 || n.fract() != 0.0 {
                return Err(invalid(
                    "n",
                    format!("indicator index must be a positive integer, got {n}"),
                ));
            }
            indicator_phi_n(n as u32)
        }
        other => Err(crate::error::Error::Config(format!(
            "unknown symbol family `{other}` (expected exp, bump, phi_n, zero)"
        ))),
    }
}
