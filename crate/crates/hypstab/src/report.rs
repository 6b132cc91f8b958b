//! Verdicts and the structured report document consumed by the CLI.

use serde::Serialize;
use std::collections::BTreeMap;

/// Pass/fail with a numeric margin. Margins are oriented so that positive
/// means "passing with room": a stability margin is the distance of the worst
/// eigenvalue from the forbidden region.
#[derive(Clone, Debug, Serialize)]
pub struct Verdict {
    pub pass: bool,
    pub margin: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<String>,
}

impl Verdict {
    pub fn new(pass: bool, margin: f64) -> Self {
        Self { pass, margin, witness: None }
    }

    pub fn with_witness(pass: bool, margin: f64, witness: impl Into<String>) -> Self {
        Self { pass, margin, witness: Some(witness.into()) }
    }

    /// Combine: overall pass requires both, margin is the minimum.
    pub fn and(&self, other: &Verdict) -> Verdict {
        let witness = if !self.pass {
            self.witness.clone()
        } else if !other.pass {
            other.witness.clone()
        } else if self.margin <= other.margin {
            self.witness.clone()
        } else {
            other.witness.clone()
        };
        Verdict { pass: self.pass && other.pass, margin: self.margin.min(other.margin), witness }
    }
}

/// One condition entry in the JSON report:
/// {condition, grid, margin, verdict, witnesses}.
#[derive(Clone, Debug, Serialize)]
pub struct ConditionReport {
    pub condition: String,
    pub grid: String,
    pub margin: f64,
    pub verdict: String,
    pub witnesses: Vec<String>,
}

impl ConditionReport {
    pub fn from_verdict(condition: &str, grid: &str, v: &Verdict) -> Self {
        Self {
            condition: condition.to_string(),
            grid: grid.to_string(),
            margin: v.margin,
            verdict: if v.pass { "pass".into() } else { "fail".into() },
            witnesses: v.witness.iter().cloned().collect(),
        }
    }
}

/// Report document with stable (sorted) key order.
#[derive(Clone, Debug, Default, Serialize)]
pub struct ReportDoc {
    pub conditions: Vec<ConditionReport>,
    pub values: BTreeMap<String, f64>,
    pub notes: Vec<String>,
}

impl ReportDoc {
    pub fn all_pass(&self) -> bool {
        self.conditions.iter().all(|c| c.verdict == "pass")
    }

    pub fn push(&mut self, c: ConditionReport) {
        self.conditions.push(c);
    }

    pub fn record(&mut self, key: &str, value: f64) {
        self.values.insert(key.to_string(), value);
    }

    pub fn note(&mut self, s: impl Into<String>) {
        self.notes.push(s.into());
    }
}
