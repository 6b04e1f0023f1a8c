//! Structural checks run on every spectrum an experiment produces.

use std::sync::Mutex;

use nalgebra::DMatrix;

use crate::error::Result;
use crate::spectrum::{
    block_additivity_defect, dense_singular_values, direct_sum, monotonicity_violations, SingularSpectrum,
};
use crate::Exponent;

use super::report::{Rule, VerdictRecord};

fn audit_ps() -> Vec<Exponent> {
    [0.5, 1.0, 2.0, 4.0]
        .iter()
        .map(|p| Exponent::new(*p).expect("positive"))
        .chain(std::iter::once(Exponent::INFINITY))
        .collect()
}

fn additivity_ps() -> Vec<Exponent> {
    [1.0, 2.0, 4.0]
        .iter()
        .map(|p| Exponent::new(*p).expect("positive"))
        .chain(std::iter::once(Exponent::INFINITY))
        .collect()
}

#[derive(Debug, Default)]
struct State {
    spectra: usize,
    monotonicity_violations: usize,
    additivity_checks: usize,
    additivity_violations: usize,
    worst_defect: f64,
}

/// Thread-safe tally of spectrum checks.
#[derive(Debug)]
pub struct Audit {
    tol: f64,
    state: Mutex<State>,
}

impl Audit {
    pub fn new(additivity_tol: f64) -> Self {
        Self {
            tol: additivity_tol,
            state: Mutex::new(State::default()),
        }
    }

    fn with<T>(&self, f: impl FnOnce(&mut State) -> T) -> T {
        let mut guard = self.state.lock().unwrap_or_else(|e| e.into_inner());
        f(&mut guard)
    }

    /// Checks `p ↦ ‖·‖_{S_p}` is nonincreasing.
    pub fn spectrum(&self, sp: &SingularSpectrum) {
        let bad = !monotonicity_violations(sp, &audit_ps()).is_empty();
        self.with(|s| {
            s.spectra += 1;
            s.monotonicity_violations += usize::from(bad);
        });
    }

    /// Dense spectrum of `m`, audited.
    pub fn svd(&self, m: &DMatrix<f64>) -> Result<SingularSpectrum> {
        let sp = dense_singular_values(m)?;
        self.spectrum(&sp);
        Ok(sp)
    }

    /// Compares a spectrum with those of its blocks.
    pub fn additivity(&self, whole: &SingularSpectrum, parts: &[SingularSpectrum]) -> f64 {
        let defect = block_additivity_defect(whole, parts, &additivity_ps());
        let tol = self.tol;
        self.with(|s| {
            s.additivity_checks += 1;
            s.additivity_violations += usize::from(!(defect <= tol));
            s.worst_defect = s.worst_defect.max(defect);
        });
        defect
    }

    /// Audits the direct sum of matrices whose spectra are already known.
    pub fn direct_sum(&self, blocks: &[&DMatrix<f64>], spectra: &[SingularSpectrum]) -> Result<f64> {
        let whole = self.svd(&direct_sum(blocks))?;
        Ok(self.additivity(&whole, spectra))
    }

    pub fn spectra(&self) -> usize {
        self.with(|s| s.spectra)
    }

    pub fn worst_defect(&self) -> f64 {
        self.with(|s| s.worst_defect)
    }

    pub fn verdicts(&self) -> Vec<VerdictRecord> {
        self.with(|s| {
            vec![
                VerdictRecord::new(
                    "schatten_monotonicity",
                    format!("S_p norms nonincreasing in p on all {} spectra", s.spectra),
                    Rule::NoViolations {
                        violations: s.monotonicity_violations,
                        checked: s.spectra,
                    },
                ),
                VerdictRecord::new(
                    "block_additivity",
                    format!(
                        "S_p^p of direct sums equals the sum over blocks ({} checks, worst defect {:.2e})",
                        s.additivity_checks, s.worst_defect
                    ),
                    Rule::NoViolations {
                        violations: s.additivity_violations,
                        checked: s.additivity_checks,
                    },
                ),
            ]
        })
    }
}
