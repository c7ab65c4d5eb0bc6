//! Desk-scale verdicts. A `Supported` verdict means the defining inequality
//! held on every sampled point of a finite plan; it is evidence, never proof.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::system::DisturbanceSignal;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Status {
    Supported,
    Refuted,
    Inconclusive,
}

impl Status {
    /// CLI exit code contract: 0 Supported, 1 Refuted, 3 Inconclusive.
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Supported => 0,
            Status::Refuted => 1,
            Status::Inconclusive => 3,
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Status::Supported => "Supported",
            Status::Refuted => "Refuted",
            Status::Inconclusive => "Inconclusive",
        };
        f.write_str(s)
    }
}

/// A replayable counterexample (or the sample that could not be decided).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Witness {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub state: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub disturbance: Option<DisturbanceSignal>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub time: Option<f64>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty", default)]
    pub values: BTreeMap<String, f64>,
    pub message: String,
}

impl Witness {
    pub fn new(message: impl Into<String>) -> Self {
        Witness {
            message: message.into(),
            ..Default::default()
        }
    }

    pub fn state(mut self, x: &[f64]) -> Self {
        self.state = Some(x.to_vec());
        self
    }

    pub fn disturbance(mut self, d: &DisturbanceSignal) -> Self {
        self.disturbance = Some(d.clone());
        self
    }

    pub fn time(mut self, t: f64) -> Self {
        self.time = Some(t);
        self
    }

    pub fn value(mut self, key: &str, v: f64) -> Self {
        self.values.insert(key.to_string(), v);
        self
    }
}

/// A numeric table (e.g. an empirical τ(r, ε) or δ(ε, h) map).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> crate::Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|v| format!("{v}")))?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| crate::Error::InvalidArgument(e.to_string()))?;
        Ok(String::from_utf8_lossy(&bytes).into_owned())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    /// Name of the checked property or inequality (`"UGAS"`, `"iUGS"`, `"cocycle"`, ...).
    pub check: String,
    pub status: Status,
    /// Worst slack observed (rhs − lhs of the defining inequality).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub margin: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub witness: Option<Witness>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty", default)]
    pub parameters: BTreeMap<String, Value>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub table: Option<Table>,
    pub samples: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub notes: Vec<String>,
}

impl Evidence {
    pub fn new(check: impl Into<String>, status: Status) -> Self {
        Evidence {
            check: check.into(),
            status,
            margin: None,
            witness: None,
            parameters: BTreeMap::new(),
            table: None,
            samples: 0,
            seed: None,
            notes: Vec::new(),
        }
    }

    pub fn is_supported(&self) -> bool {
        self.status == Status::Supported
    }

    pub fn is_refuted(&self) -> bool {
        self.status == Status::Refuted
    }

    pub fn with_param(mut self, key: &str, value: impl Serialize) -> Self {
        self.parameters.insert(
            key.to_string(),
            serde_json::to_value(value).unwrap_or(Value::Null),
        );
        self
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.notes.push(note.into());
        self
    }

    pub(crate) fn from_sweep(check: impl Into<String>, sweep: Sweep) -> Self {
        let mut ev = Evidence::new(check, sweep.status());
        ev.margin = sweep.worst;
        ev.samples = sweep.samples;
        ev.witness = sweep.refuted.or(sweep.undecided);
        ev
    }
}

/// Result of checking one sample of a plan.
#[derive(Debug, Clone)]
pub(crate) enum Outcome {
    Pass { margin: f64 },
    Fail { margin: f64, witness: Witness },
    Unknown { witness: Witness },
}

impl Outcome {
    /// Compare `lhs ≤ rhs + tol` and build the outcome lazily.
    pub fn compare(lhs: f64, rhs: f64, tol: f64, witness: impl FnOnce() -> Witness) -> Outcome {
        let margin = rhs - lhs;
        if margin.is_nan() {
            Outcome::Unknown {
                witness: witness().value("lhs", lhs).value("rhs", rhs),
            }
        } else if margin >= -tol {
            Outcome::Pass { margin }
        } else {
            Outcome::Fail {
                margin,
                witness: witness().value("lhs", lhs).value("rhs", rhs),
            }
        }
    }
}

/// Order-dependent fold over sample outcomes. Callers feed outcomes in plan
/// order, so the first failure is deterministic regardless of how the
/// outcomes were computed.
#[derive(Debug, Clone, Default)]
pub(crate) struct Sweep {
    pub worst: Option<f64>,
    pub refuted: Option<Witness>,
    pub undecided: Option<Witness>,
    pub samples: usize,
}

impl Sweep {
    pub fn push(&mut self, outcome: Outcome) {
        self.samples += 1;
        match outcome {
            Outcome::Pass { margin } => self.margin(margin),
            Outcome::Fail { margin, witness } => {
                self.margin(margin);
                if self.refuted.is_none() {
                    self.refuted = Some(witness);
                }
            }
            Outcome::Unknown { witness } => {
                if self.undecided.is_none() {
                    self.undecided = Some(witness);
                }
            }
        }
    }

    fn margin(&mut self, m: f64) {
        self.worst = Some(match self.worst {
            Some(w) => w.min(m),
            None => m,
        });
    }

    pub fn status(&self) -> Status {
        if self.refuted.is_some() {
            Status::Refuted
        } else if self.undecided.is_some() || self.samples == 0 {
            Status::Inconclusive
        } else {
            Status::Supported
        }
    }
}

impl FromIterator<Outcome> for Sweep {
    fn from_iter<I: IntoIterator<Item = Outcome>>(iter: I) -> Self {
        let mut s = Sweep::default();
        for o in iter {
            s.push(o);
        }
        s
    }
}
