//! TOML configuration of the experiment harness.
//!
//! Every section is optional; omitted keys take the defaults below and unknown
//! keys are rejected with their location.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::besov::FourierConfig;
use crate::error::{Error, Result};
use crate::grid::parse_grid_spec;
use crate::symbol::{by_name, Symbol};
use crate::Exponent;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LabConfig {
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    pub jobs: usize,
    pub out: PathBuf,
    pub jacobi_nodes: usize,
    pub fourier: FourierConfig,
    pub tolerances: Tolerances,
    pub unitary: UnitaryConfig,
    pub besov_schatten: BesovSchattenConfig,
    pub sharpness: SharpnessConfig,
    pub window: WindowConfig,
    pub quasinorm: QuasinormConfig,
}

impl Default for LabConfig {
    fn default() -> Self {
        Self {
            seed: 20240601,
            jobs: 0,
            out: PathBuf::from("results"),
            jacobi_nodes: 64,
            fourier: FourierConfig::default(),
            tolerances: Tolerances::default(),
            unitary: UnitaryConfig::default(),
            besov_schatten: BesovSchattenConfig::default(),
            sharpness: SharpnessConfig::default(),
            window: WindowConfig::default(),
            quasinorm: QuasinormConfig::default(),
        }
    }
}

/// Verdict thresholds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Normwise singular value deviation in the unitary experiment.
    pub unitary: f64,
    /// Admissible `max ρ / min ρ` across a dilation sweep.
    pub ratio_window: f64,
    /// Relative change per doubling counted as stable.
    pub stability: f64,
    /// Minimal relative growth per doubling.
    pub growth: f64,
    /// Minimal relative shrink per doubling.
    pub shrink: f64,
    /// Slack of the block lower bound.
    pub block_slack: f64,
    /// Relative tolerance of fitted slopes and log-growth predictions.
    pub slope: f64,
    pub r_squared: f64,
    /// Excess over 1 allowed for `‖Qm‖_2 / ‖m‖_2`.
    pub contraction: f64,
    /// Relative defect of `‖⊕A_k‖_p^p = Σ‖A_k‖_p^p`.
    pub additivity: f64,
    /// Relative agreement of the two Hilbert–Schmidt evaluations.
    pub hs_agreement: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            unitary: 1e-10,
            ratio_window: 4.0,
            stability: 0.25,
            growth: 0.15,
            shrink: 0.10,
            block_slack: 0.02,
            slope: 0.25,
            r_squared: 0.99,
            contraction: 1e-10,
            additivity: 1e-8,
            hs_agreement: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UnitaryConfig {
    /// Symbol specs `name` or `name:param`.
    pub symbols: Vec<String>,
    /// `(α, β)` pairs.
    pub pairs: Vec<[f64; 2]>,
    /// Grid specs `j_min:j_max:ppo`; `-10:7:15` has 256 nodes.
    pub grids: Vec<String>,
    /// Number of leading singular values compared.
    pub top: usize,
}

impl Default for UnitaryConfig {
    fn default() -> Self {
        Self {
            symbols: vec!["exp".into(), "bump:1".into(), "phi_n:8".into()],
            pairs: vec![[2.0, 2.0], [1.0, 3.0], [0.5, 2.0]],
            grids: vec!["-10:7:15".into()],
            top: 20,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BesovCase {
    pub alpha: f64,
    pub beta: f64,
    pub ps: Vec<Exponent>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BesovSchattenConfig {
    /// Symbol dilated by each `λ`.
    pub family: String,
    pub cases: Vec<BesovCase>,
    /// Dilations `λ = 2^k`.
    pub lambda_exponents: Vec<i32>,
    pub grid: String,
    /// Also run the operator-norm variant.
    pub operator_norm: bool,
}

impl Default for BesovSchattenConfig {
    fn default() -> Self {
        let ex = |v: &[f64]| v.iter().map(|p| Exponent::new(*p).expect("positive")).collect();
        Self {
            family: "bump:1".into(),
            cases: vec![
                BesovCase {
                    alpha: 0.5,
                    beta: 0.5,
                    ps: ex(&[1.0, 2.0, 4.0]),
                },
                BesovCase {
                    alpha: 1.0,
                    beta: 1.0,
                    ps: ex(&[1.0, 2.0]),
                },
                BesovCase {
                    alpha: 2.0,
                    beta: 1.0,
                    ps: ex(&[1.5, 3.0]),
                },
            ],
            lambda_exponents: (-3..=3).collect(),
            grid: "-16:10:12".into(),
            operator_norm: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HsCase {
    pub a: f64,
    #[serde(default)]
    pub b: f64,
    pub n: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SharpnessConfig {
    pub p: Exponent,
    pub a: f64,
    pub b: f64,
    pub ns: Vec<u32>,
    /// Galerkin cells per block width `1/n`.
    pub cells_per_block: usize,
    /// Hilbert–Schmidt divergence series.
    pub hs_cases: Vec<HsCase>,
    /// Cutoffs `δ = 2^k`.
    pub delta_exponents: Vec<i32>,
    /// Points per octave of the logarithmic `x` grid.
    pub hs_ppo: u32,
    /// Uniform `y` nodes per strip width `2/n`.
    pub hs_nodes_per_strip: usize,
    pub fourier: FourierConfig,
}

impl Default for SharpnessConfig {
    fn default() -> Self {
        Self {
            p: Exponent::new(4.0).expect("positive"),
            a: -0.25,
            b: 0.0,
            ns: vec![16, 32, 64, 128, 256],
            cells_per_block: 4,
            hs_cases: vec![
                HsCase { a: -0.5, b: 0.0, n: 16 },
                HsCase {
                    a: -0.75,
                    b: 0.0,
                    n: 16,
                },
            ],
            delta_exponents: (-20..=-8).rev().collect(),
            hs_ppo: 32,
            hs_nodes_per_strip: 64,
            fourier: FourierConfig::for_indicators(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorNormCase {
    pub alpha: f64,
    pub beta: f64,
    pub j_min: i32,
    pub j_max: i32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WindowConfig {
    pub alpha: f64,
    pub beta: f64,
    pub ps: Vec<Exponent>,
    pub j_min: i32,
    pub j_max: i32,
    /// Points per octave; each run has `(j_max - j_min) * ppo` intervals.
    pub ppos: Vec<u32>,
    /// Level band `[R_min, R_max]` of the projector.
    pub band: [f64; 2],
    /// Radial hat functions per octave relative to the grid ppo.
    pub radial_factor: f64,
    pub random_draws: usize,
    /// Strip widths `2c/n` of the adversarial family.
    pub strip_ns: Vec<u32>,
    /// Levels `c` of the adversarial family.
    pub levels: Vec<f64>,
    /// Nonlinear power iterations applied to the strip members.
    pub refine_iterations: usize,
    pub operator_norm: Vec<OperatorNormCase>,
}

impl Default for WindowConfig {
    fn default() -> Self {
        let ex = |v: &[f64]| v.iter().map(|p| Exponent::new(*p).expect("positive")).collect();
        Self {
            alpha: 1.0,
            beta: 2.0,
            ps: ex(&[2.0, 3.0, 8.0, 1.1]),
            j_min: -6,
            j_max: 2,
            ppos: vec![8, 16, 32, 64],
            band: [1.0, 4.0],
            radial_factor: 1.0,
            random_draws: 8,
            strip_ns: vec![8, 32, 128],
            levels: vec![1.2, 2.0],
            refine_iterations: 15,
            operator_norm: vec![
                OperatorNormCase {
                    alpha: 0.5,
                    beta: 0.5,
                    j_min: -4,
                    j_max: 4,
                },
                OperatorNormCase {
                    alpha: 1.0,
                    beta: 2.0,
                    j_min: -6,
                    j_max: 2,
                },
            ],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuasinormConfig {
    pub p: Exponent,
    pub ns: Vec<u32>,
    pub cells_per_block: usize,
}

impl Default for QuasinormConfig {
    fn default() -> Self {
        Self {
            p: Exponent::new(0.5).expect("positive"),
            ns: vec![16, 32, 64, 128, 256],
            cells_per_block: 4,
        }
    }
}

fn cfg_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

/// Parses `name` or `name:param` into a symbol.
pub fn parse_symbol(spec: &str) -> Result<Symbol> {
    match spec.split_once(':') {
        Some((name, param)) => {
            let v: f64 = param
                .parse()
                .map_err(|_| cfg_err(format!("symbol `{spec}`: parameter is not a number")))?;
            by_name(name, Some(v))
        }
        None => by_name(spec, None),
    }
}

impl LabConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: LabConfig = toml::from_str(text).map_err(|e| cfg_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| cfg_err(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => cfg_err(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| cfg_err(e.to_string()))
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).unwrap_or_default();
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(cfg_err(format!("{name} must be finite and > 0, got {v}")))
            }
        };
        if self.jacobi_nodes == 0 {
            return Err(cfg_err("jacobi_nodes must be >= 1"));
        }
        for s in &self.unitary.symbols {
            parse_symbol(s).map_err(|e| cfg_err(format!("unitary.symbols: {e}")))?;
        }
        for [a, b] in &self.unitary.pairs {
            positive("unitary.pairs alpha", *a)?;
            positive("unitary.pairs beta", *b)?;
        }
        for g in &self.unitary.grids {
            parse_grid_spec(g).map_err(|e| cfg_err(format!("unitary.grids: {e}")))?;
        }
        parse_symbol(&self.besov_schatten.family).map_err(|e| cfg_err(format!("besov_schatten.family: {e}")))?;
        parse_grid_spec(&self.besov_schatten.grid).map_err(|e| cfg_err(format!("besov_schatten.grid: {e}")))?;
        for c in &self.besov_schatten.cases {
            positive("besov_schatten.cases alpha", c.alpha)?;
            positive("besov_schatten.cases beta", c.beta)?;
            for p in &c.ps {
                let m = c.alpha.max(c.beta);
                if !p.is_infinite() && !(m * (p.value() - 2.0) < p.value()) {
                    return Err(cfg_err(format!(
                        "besov_schatten: p = {p} violates max(alpha, beta)(p - 2) < p for ({}, {})",
                        c.alpha, c.beta
                    )));
                }
            }
        }
        let sh = &self.sharpness;
        if sh.a <= -1.0 || sh.b <= -1.0 {
            return Err(cfg_err("sharpness: a and b must exceed -1"));
        }
        if sh.cells_per_block == 0 || self.quasinorm.cells_per_block == 0 {
            return Err(cfg_err("cells_per_block must be >= 1"));
        }
        if sh.ns.contains(&0) || self.quasinorm.ns.contains(&0) {
            return Err(cfg_err("strip parameters n must be >= 1"));
        }
        for c in &sh.hs_cases {
            if c.a <= -1.0 || c.a > -0.5 || c.b <= -0.5 || c.n == 0 {
                return Err(cfg_err(format!(
                    "sharpness.hs_cases: need -1 < a <= -1/2, b > -1/2, n >= 1; got a = {}, b = {}, n = {}",
                    c.a, c.b, c.n
                )));
            }
        }
        let w = &self.window;
        positive("window.alpha", w.alpha)?;
        positive("window.beta", w.beta)?;
        if !(w.band[0] > 0.0 && w.band[0] < w.band[1]) {
            return Err(cfg_err("window.band must satisfy 0 < R_min < R_max"));
        }
        if w.j_min >= w.j_max || w.ppos.contains(&0) {
            return Err(cfg_err("window: need j_min < j_max and ppo >= 1"));
        }
        positive("window.radial_factor", w.radial_factor)?;
        for c in &w.operator_norm {
            positive("window.operator_norm alpha", c.alpha)?;
            positive("window.operator_norm beta", c.beta)?;
            if c.j_min >= c.j_max {
                return Err(cfg_err("window.operator_norm: need j_min < j_max"));
            }
        }
        if !(self.quasinorm.p.value() < 1.0) {
            return Err(cfg_err("quasinorm.p must lie in (0, 1)"));
        }
        Ok(())
    }
}
