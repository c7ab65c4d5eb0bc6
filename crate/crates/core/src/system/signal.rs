use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Right-continuous piecewise-constant disturbance. `values[i]` holds on
/// `[breakpoints[i], breakpoints[i + 1])`; the last value is held forever.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SignalRepr", into = "SignalRepr")]
pub struct DisturbanceSignal {
    breakpoints: Vec<f64>,
    values: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct SignalRepr {
    breakpoints: Vec<f64>,
    values: Vec<Vec<f64>>,
}

impl TryFrom<SignalRepr> for DisturbanceSignal {
    type Error = Error;
    fn try_from(r: SignalRepr) -> Result<Self> {
        DisturbanceSignal::new(r.breakpoints, r.values)
    }
}

impl From<DisturbanceSignal> for SignalRepr {
    fn from(d: DisturbanceSignal) -> Self {
        SignalRepr {
            breakpoints: d.breakpoints,
            values: d.values,
        }
    }
}

impl DisturbanceSignal {
    /// Build from breakpoints (first must be 0, nondecreasing) and values.
    /// Repeated breakpoints keep the last value (right continuity); equal
    /// consecutive values are merged.
    pub fn new(breakpoints: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        if breakpoints.is_empty() || breakpoints.len() != values.len() {
            return Err(Error::InvalidArgument(
                "signal needs one value per breakpoint and at least one piece".into(),
            ));
        }
        if breakpoints[0] != 0.0 {
            return Err(Error::InvalidArgument("first breakpoint must be 0".into()));
        }
        if breakpoints.iter().any(|b| !b.is_finite()) || breakpoints.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidArgument(
                "breakpoints must be finite and nondecreasing".into(),
            ));
        }
        let m = values[0].len();
        if values.iter().any(|v| v.len() != m || v.iter().any(|c| !c.is_finite())) {
            return Err(Error::InvalidArgument(
                "signal values must be finite with a common dimension".into(),
            ));
        }
        let mut s = DisturbanceSignal {
            breakpoints: Vec::with_capacity(breakpoints.len()),
            values: Vec::with_capacity(values.len()),
        };
        for (b, v) in breakpoints.into_iter().zip(values) {
            s.push_piece(b, v);
        }
        Ok(s)
    }

    fn push_piece(&mut self, b: f64, v: Vec<f64>) {
        if let Some(&last_b) = self.breakpoints.last() {
            if b == last_b {
                self.values.pop();
                self.breakpoints.pop();
            }
        }
        if self.values.last() == Some(&v) {
            return;
        }
        self.breakpoints.push(b);
        self.values.push(v);
    }

    pub fn constant(value: Vec<f64>) -> Self {
        DisturbanceSignal {
            breakpoints: vec![0.0],
            values: vec![value],
        }
    }

    /// The only signal of a system without disturbance input.
    pub fn empty() -> Self {
        DisturbanceSignal::constant(Vec::new())
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn is_constant(&self) -> bool {
        self.values.len() == 1
    }

    fn piece_index(&self, t: f64) -> usize {
        self.breakpoints.partition_point(|&b| b <= t).max(1) - 1
    }

    pub fn value_at(&self, t: f64) -> &[f64] {
        &self.values[self.piece_index(t)]
    }

    /// `d(· + tau)`.
    pub fn shift(&self, tau: f64) -> Self {
        if tau <= 0.0 {
            return self.clone();
        }
        let start = self.piece_index(tau);
        let mut s = DisturbanceSignal::constant(self.values[start].clone());
        for i in start + 1..self.breakpoints.len() {
            s.push_piece(self.breakpoints[i] - tau, self.values[i].clone());
        }
        s
    }

    /// `self` on `[0, t)`, then `other(· − t)`.
    pub fn concatenate(&self, other: &DisturbanceSignal, t: f64) -> Result<Self> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "concatenation time must be positive, got {t}"
            )));
        }
        if self.dim() != other.dim() {
            return Err(Error::InvalidArgument("signal dimensions differ".into()));
        }
        let mut s = DisturbanceSignal::constant(self.values[0].clone());
        for i in 1..self.breakpoints.len() {
            if self.breakpoints[i] >= t {
                break;
            }
            s.push_piece(self.breakpoints[i], self.values[i].clone());
        }
        for (b, v) in other.breakpoints.iter().zip(&other.values) {
            s.push_piece(b + t, v.clone());
        }
        Ok(s)
    }

    /// Breakpoints strictly inside `(a, b)`.
    pub fn breakpoints_in(&self, a: f64, b: f64) -> impl Iterator<Item = f64> + '_ {
        self.breakpoints
            .iter()
            .copied()
            .filter(move |&s| s > a && s < b)
    }

    pub fn inside(&self, bx: &DisturbanceBox) -> bool {
        self.values.iter().all(|v| bx.contains(v))
    }
}

/// Disturbance value set `D`: a product of closed intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct DisturbanceBox {
    bounds: Vec<[f64; 2]>,
}

impl DisturbanceBox {
    pub fn new(bounds: Vec<[f64; 2]>) -> Result<Self> {
        for (i, [lo, hi]) in bounds.iter().enumerate() {
            if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::Config(format!(
                    "disturbance box interval {i} is invalid: [{lo}, {hi}]"
                )));
            }
        }
        Ok(DisturbanceBox { bounds })
    }

    pub fn none() -> Self {
        DisturbanceBox { bounds: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[[f64; 2]] {
        &self.bounds
    }

    pub fn contains(&self, v: &[f64]) -> bool {
        v.len() == self.bounds.len()
            && v.iter()
                .zip(&self.bounds)
                .all(|(x, [lo, hi])| *lo <= *x && *x <= *hi)
    }

    /// Extreme points, upper corner first.
    pub fn corners(&self) -> Vec<Vec<f64>> {
        let m = self.bounds.len();
        let n = 1usize << m.min(12);
        (0..n)
            .map(|mask| {
                self.bounds
                    .iter()
                    .enumerate()
                    .map(|(j, [lo, hi])| if j < 12 && mask >> j & 1 == 1 { *lo } else { *hi })
                    .collect()
            })
            .collect()
    }

    pub fn center(&self) -> Vec<f64> {
        self.bounds.iter().map(|[lo, hi]| 0.5 * (lo + hi)).collect()
    }
}
