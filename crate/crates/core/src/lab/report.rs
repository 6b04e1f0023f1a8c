//! Reports, verdict rules and their serialization.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Pass,
    Fail,
    Vacuous,
    Failed,
}

impl Verdict {
    pub fn is_ok(self) -> bool {
        matches!(self, Verdict::Pass | Verdict::Vacuous)
    }

    fn from_bool(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Vacuous => "VACUOUS",
            Verdict::Failed => "FAILED",
        })
    }
}

/// A verdict rule together with the data it is applied to.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Rule {
    /// Every value `<= limit`.
    AtMost { values: Vec<f64>, limit: f64 },
    /// Every value `>= limit`.
    AtLeast { values: Vec<f64>, limit: f64 },
    /// `max/min < max_ratio` over positive values.
    RatioWindow { values: Vec<f64>, max_ratio: f64 },
    /// `|s_{k+1}/s_k - 1| <= tol` for consecutive entries.
    StablePerStep { series: Vec<f64>, tol: f64 },
    /// `s_{k+1}/s_k >= 1 + min_growth` for consecutive entries.
    GrowthPerStep { series: Vec<f64>, min_growth: f64 },
    /// `s_{k+1}/s_k <= 1 - min_shrink` for consecutive entries.
    ShrinkPerStep { series: Vec<f64>, min_shrink: f64 },
    /// Strictly increasing.
    Increasing { series: Vec<f64> },
    /// `|measured/predicted - 1| <= tol`.
    Relative { measured: f64, predicted: f64, tol: f64 },
    /// Count of violations must be zero.
    NoViolations { violations: usize, checked: usize },
}

fn steps(series: &[f64]) -> impl Iterator<Item = f64> + '_ {
    series.windows(2).map(|w| w[1] / w[0])
}

impl Rule {
    pub fn evaluate(&self) -> Verdict {
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        match self {
            Rule::AtMost { values, limit } => {
                if values.is_empty() {
                    return Verdict::Vacuous;
                }
                Verdict::from_bool(values.iter().all(|v| *v <= *limit))
            }
            Rule::AtLeast { values, limit } => {
                if values.is_empty() {
                    return Verdict::Vacuous;
                }
                Verdict::from_bool(values.iter().all(|v| *v >= *limit))
            }
            Rule::RatioWindow { values, max_ratio } => {
                let pos: Vec<f64> = values.iter().copied().filter(|v| *v > 0.0).collect();
                if pos.len() < 2 {
                    return Verdict::Vacuous;
                }
                let hi = pos.iter().fold(f64::MIN, |m, v| m.max(*v));
                let lo = pos.iter().fold(f64::MAX, |m, v| m.min(*v));
                Verdict::from_bool(finite(&pos) && hi / lo < *max_ratio)
            }
            Rule::StablePerStep { series, tol } => {
                if series.len() < 2 {
                    return Verdict::Vacuous;
                }
                Verdict::from_bool(finite(series) && steps(series).all(|r| (r - 1.0).abs() <= *tol))
            }
            Rule::GrowthPerStep { series, min_growth } => {
                if series.len() < 2 {
                    return Verdict::Vacuous;
                }
                Verdict::from_bool(finite(series) && steps(series).all(|r| r >= 1.0 + min_growth))
            }
            Rule::ShrinkPerStep { series, min_shrink } => {
                if series.len() < 2 {
                    return Verdict::Vacuous;
                }
                Verdict::from_bool(finite(series) && steps(series).all(|r| r <= 1.0 - min_shrink))
            }
            Rule::Increasing { series } => {
                if series.len() < 2 {
                    return Verdict::Vacuous;
                }
                Verdict::from_bool(finite(series) && series.windows(2).all(|w| w[1] > w[0]))
            }
            Rule::Relative {
                measured,
                predicted,
                tol,
            } => Verdict::from_bool((measured / predicted - 1.0).abs() <= *tol),
            Rule::NoViolations { violations, checked } => {
                if *checked == 0 {
                    Verdict::Vacuous
                } else {
                    Verdict::from_bool(*violations == 0)
                }
            }
        }
    }

    /// Per-step ratios of series rules, for display.
    pub fn step_ratios(&self) -> Option<Vec<f64>> {
        match self {
            Rule::StablePerStep { series, .. }
            | Rule::GrowthPerStep { series, .. }
            | Rule::ShrinkPerStep { series, .. }
            | Rule::Increasing { series } => Some(steps(series).collect()),
            _ => None,
        }
    }
}

/// A named assertion over the records of a report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerdictRecord {
    pub name: String,
    pub description: String,
    #[serde(flatten)]
    pub rule: Rule,
    pub verdict: Verdict,
    /// Set when the verdict could not be evaluated because its inputs failed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl VerdictRecord {
    pub fn new(name: impl Into<String>, description: impl Into<String>, rule: Rule) -> Self {
        let verdict = rule.evaluate();
        Self {
            name: name.into(),
            description: description.into(),
            rule,
            verdict,
            error: None,
        }
    }

    pub fn failed(name: impl Into<String>, description: impl Into<String>, error: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            description: description.into(),
            rule: Rule::NoViolations {
                violations: 0,
                checked: 0,
            },
            verdict: Verdict::Failed,
            error: Some(error.into()),
        }
    }

    pub fn vacuous(name: impl Into<String>, description: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            description: description.into(),
            rule: Rule::NoViolations {
                violations: 0,
                checked: 0,
            },
            verdict: Verdict::Vacuous,
            error: None,
        }
    }

    /// Re-evaluates the stored rule; `Failed` records are kept as they are.
    pub fn recompute(&self) -> Verdict {
        if self.error.is_some() {
            Verdict::Failed
        } else {
            self.rule.evaluate()
        }
    }
}

/// One unit of work: inputs, measured quantities and its status.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub id: String,
    pub params: BTreeMap<String, Value>,
    pub quantities: BTreeMap<String, Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Cell {
    pub fn new(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            params: BTreeMap::new(),
            quantities: BTreeMap::new(),
            error: None,
        }
    }

    pub fn param(mut self, key: &str, value: impl Serialize) -> Self {
        self.params.insert(key.to_string(), to_value(value));
        self
    }

    pub fn put(&mut self, key: &str, value: impl Serialize) {
        self.quantities.insert(key.to_string(), to_value(value));
    }

    pub fn get_f64(&self, key: &str) -> Option<f64> {
        self.quantities.get(key).and_then(value_as_f64)
    }

    pub fn fail(&mut self, err: impl std::fmt::Display) {
        self.error = Some(err.to_string());
    }

    pub fn is_ok(&self) -> bool {
        self.error.is_none()
    }
}

fn to_value(value: impl Serialize) -> Value {
    match serde_json::to_value(value) {
        Ok(Value::Number(n)) => Value::Number(n),
        Ok(v) => v,
        Err(_) => Value::Null,
    }
}

/// Reads a JSON number, or the string forms of infinities.
pub fn value_as_f64(v: &Value) -> Option<f64> {
    match v {
        Value::Number(n) => n.as_f64(),
        Value::String(s) if s == "inf" => Some(f64::INFINITY),
        Value::String(s) if s == "-inf" => Some(f64::NEG_INFINITY),
        _ => None,
    }
}

/// JSON-safe float: non-finite values become strings.
pub fn num(v: f64) -> Value {
    if v.is_finite() {
        serde_json::Number::from_f64(v).map_or(Value::Null, Value::Number)
    } else if v.is_nan() {
        Value::String("nan".into())
    } else if v > 0.0 {
        Value::String("inf".into())
    } else {
        Value::String("-inf".into())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
    pub crate_version: String,
}

/// Deterministic result document of one experiment run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub experiment: String,
    pub provenance: Provenance,
    pub config: Value,
    pub cells: Vec<Cell>,
    pub verdicts: Vec<VerdictRecord>,
}

/// Wall-clock data kept apart from the deterministic report.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub experiment: String,
    pub total_seconds: f64,
    pub cells: BTreeMap<String, f64>,
}

impl Report {
    /// True when every verdict is PASS or VACUOUS.
    pub fn all_ok(&self) -> bool {
        self.verdicts.iter().all(|v| v.verdict.is_ok())
    }

    pub fn verdict(&self, name: &str) -> Option<&VerdictRecord> {
        self.verdicts.iter().find(|v| v.name == name)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Long-format CSV: `experiment,cell,params,quantity,value,verdict`.
    ///
    /// Cell rows carry the cell status in the verdict column; verdict rows use
    /// the cell column `verdict:<name>` and the verdict itself.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["experiment", "cell", "params", "quantity", "value", "verdict"])?;
        for cell in &self.cells {
            let params = serde_json::to_string(&cell.params)?;
            let status = if cell.is_ok() { "OK" } else { "FAILED" };
            if let Some(err) = &cell.error {
                w.write_record([&self.experiment, &cell.id, &params, "error", err, status])?;
            }
            for (k, v) in &cell.quantities {
                let text = match v {
                    Value::String(s) => s.clone(),
                    other => other.to_string(),
                };
                w.write_record([self.experiment.as_str(), &cell.id, &params, k, &text, status])?;
            }
        }
        for v in &self.verdicts {
            let rule = serde_json::to_string(&v.rule)?;
            w.write_record([
                self.experiment.as_str(),
                &format!("verdict:{}", v.name),
                "{}",
                "rule",
                &rule,
                &v.verdict.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// One line per verdict.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        for v in &self.verdicts {
            let extra = match (&v.error, v.rule.step_ratios()) {
                (Some(e), _) => format!(" error: {e}"),
                (None, Some(r)) => format!(" steps: {}", fmt_list(&r)),
                (None, None) => String::new(),
            };
            out.push_str(&format!(
                "[{}] {}/{}: {}{}\n",
                v.verdict, self.experiment, v.name, v.description, extra
            ));
        }
        out
    }
}

pub fn fmt_list(values: &[f64]) -> String {
    let parts: Vec<String> = values.iter().map(|v| format!("{v:.4}")).collect();
    format!("[{}]", parts.join(", "))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rule_evaluation() {
        assert_eq!(
            Rule::AtMost {
                values: vec![1.0, 2.0],
                limit: 2.0
            }
            .evaluate(),
            Verdict::Pass
        );
        assert_eq!(
            Rule::AtMost {
                values: vec![2.1],
                limit: 2.0
            }
            .evaluate(),
            Verdict::Fail
        );
        assert_eq!(
            Rule::AtMost {
                values: vec![],
                limit: 2.0
            }
            .evaluate(),
            Verdict::Vacuous
        );
        assert_eq!(
            Rule::RatioWindow {
                values: vec![1.0, 3.9],
                max_ratio: 4.0
            }
            .evaluate(),
            Verdict::Pass
        );
        assert_eq!(
            Rule::RatioWindow {
                values: vec![1.0, 4.0],
                max_ratio: 4.0
            }
            .evaluate(),
            Verdict::Fail
        );
        let s = vec![1.0, 1.2, 1.45];
        assert_eq!(
            Rule::GrowthPerStep {
                series: s.clone(),
                min_growth: 0.15
            }
            .evaluate(),
            Verdict::Pass
        );
        assert_eq!(
            Rule::GrowthPerStep {
                series: s.clone(),
                min_growth: 0.21
            }
            .evaluate(),
            Verdict::Fail
        );
        assert_eq!(
            Rule::StablePerStep {
                series: s.clone(),
                tol: 0.25
            }
            .evaluate(),
            Verdict::Pass
        );
        assert_eq!(Rule::Increasing { series: s }.evaluate(), Verdict::Pass);
        assert_eq!(Rule::Increasing { series: vec![1.0, 1.0] }.evaluate(), Verdict::Fail);
        assert_eq!(
            Rule::ShrinkPerStep {
                series: vec![1.0, 0.5],
                min_shrink: 0.1
            }
            .evaluate(),
            Verdict::Pass
        );
        assert_eq!(
            Rule::Relative {
                measured: 1.2,
                predicted: 1.0,
                tol: 0.25
            }
            .evaluate(),
            Verdict::Pass
        );
        assert_eq!(
            Rule::NoViolations {
                violations: 0,
                checked: 0
            }
            .evaluate(),
            Verdict::Vacuous
        );
    }

    #[test]
    fn report_round_trip() {
        let mut cell = Cell::new("c1").param("p", 2.0);
        cell.put("ratio", num(1.5));
        cell.put("edge", num(f64::INFINITY));
        let report = Report {
            experiment: "demo".into(),
            provenance: Provenance {
                config_hash: "00".into(),
                seed: 1,
                crate_version: "0".into(),
            },
            config: Value::Null,
            cells: vec![cell],
            verdicts: vec![VerdictRecord::new(
                "v",
                "d",
                Rule::AtMost {
                    values: vec![1.0],
                    limit: 2.0,
                },
            )],
        };
        let text = report.to_json().unwrap();
        let back: Report = serde_json::from_str(&text).unwrap();
        assert_eq!(back, report);
        assert_eq!(back.cells[0].get_f64("edge"), Some(f64::INFINITY));
        assert!(back.all_ok());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        report.write_csv(&path).unwrap();
        let csv = std::fs::read_to_string(&path).unwrap();
        assert!(csv.starts_with("experiment,cell,params,quantity,value,verdict"));
        assert!(csv.contains("verdict:v"));
    }
}
