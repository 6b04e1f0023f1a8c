//! Numerical laboratory for distorted Hankel integral operators.
//!
//! Operators with kernel `φ(x^α + y^β)` and weighted Hankel operators with
//! kernel `x^a y^b φ(x + y)` are discretized by symmetrized Nyström matrices
//! on dyadic-logarithmic grids. The crate computes their singular spectra and
//! Schatten norms, the Besov norms of their symbols, and the averaging
//! projections onto the class of distorted Hankel kernels. The [`lab`] module
//! bundles these into reproducible experiments driven by the `dhankel` binary.

// `!(a <= b)` is used on purpose so that NaN lands on the failing branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod besov;
pub mod error;
pub mod grid;
pub mod lab;
pub mod operator;
pub mod projection;
pub mod spectrum;
pub mod symbol;

pub use error::{Error, Result};
pub use grid::Grid;
pub use operator::KernelMatrix;
pub use spectrum::SingularSpectrum;
pub use symbol::Symbol;

/// A Schatten or Lebesgue exponent in `(0, ∞]`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct Exponent(f64);

impl Exponent {
    pub const INFINITY: Exponent = Exponent(f64::INFINITY);

    pub fn new(p: f64) -> Result<Self> {
        if p > 0.0 && !p.is_nan() {
            Ok(Exponent(p))
        } else {
            Err(error::invalid("p", format!("exponent must lie in (0, inf], got {p}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_infinite(self) -> bool {
        self.0.is_infinite()
    }

    /// Conjugate exponent `p'` with `1/p + 1/p' = 1`; infinite for `p <= 1`.
    pub fn conjugate(self) -> f64 {
        if self.0 <= 1.0 {
            f64::INFINITY
        } else if self.0.is_infinite() {
            1.0
        } else {
            self.0 / (self.0 - 1.0)
        }
    }

    /// `1/p`, zero at infinity.
    pub fn recip(self) -> f64 {
        1.0 / self.0
    }
}

impl std::fmt::Display for Exponent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.0.is_infinite() {
            f.write_str("inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl std::str::FromStr for Exponent {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        if matches!(t, "inf" | "infinity" | "Inf" | "INF" | "∞") {
            return Ok(Exponent::INFINITY);
        }
        let v: f64 = t
            .parse()
            .map_err(|_| Error::Config(format!("cannot parse exponent `{s}`")))?;
        Exponent::new(v)
    }
}

impl serde::Serialize for Exponent {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> serde::Deserialize<'de> for Exponent {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(serde::Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        let parsed = match Raw::deserialize(d)? {
            Raw::Num(v) => Exponent::new(v),
            Raw::Text(t) => t.parse(),
        };
        parsed.map_err(serde::de::Error::custom)
    }
}
