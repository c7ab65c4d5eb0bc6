use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::signal::{DisturbanceBox, DisturbanceSignal};

/// Systems with closed-form transition maps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "name")]
pub enum Catalogue {
    /// ẋ = −x
    ScalarStable,
    /// ẋ = x
    ScalarUnstable,
    /// ẋ = −x + d·x, d ∈ [−1, 1]
    Bilinear,
    /// ẋ = A_d x with A₁ = [[−c, 1], [−a, −c]], A₂ = [[−c, a], [−1, −c]];
    /// mode 1 while d < 0.5, mode 2 otherwise, d ∈ [0, 1]
    Switched2d { a: f64, c: f64 },
    /// ẋ = −x / (1 + x²)
    Saturating,
    /// φ(t, x) = x + t², which violates the cocycle property
    BrokenCocycleDemo,
}

impl Catalogue {
    pub fn names() -> &'static [&'static str] {
        &[
            "scalar_stable",
            "scalar_unstable",
            "bilinear",
            "switched_2d",
            "saturating",
            "broken_cocycle_demo",
        ]
    }

    pub fn from_name(name: &str, params: &BTreeMap<String, f64>) -> Result<Self> {
        let allowed: &[&str] = match name {
            "switched_2d" => &["a", "c"],
            _ => &[],
        };
        if let Some(k) = params.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(Error::Config(format!(
                "catalogue system `{name}` has no parameter `{k}`"
            )));
        }
        Ok(match name {
            "scalar_stable" => Catalogue::ScalarStable,
            "scalar_unstable" => Catalogue::ScalarUnstable,
            "bilinear" => Catalogue::Bilinear,
            "switched_2d" => {
                let a = params.get("a").copied().unwrap_or(10.0);
                let c = params.get("c").copied().unwrap_or(0.1);
                if !(a > 0.0 && c > 0.0) {
                    return Err(Error::Config(
                        "switched_2d needs a > 0 and c > 0 (both modes Hurwitz)".into(),
                    ));
                }
                Catalogue::Switched2d { a, c }
            }
            "saturating" => Catalogue::Saturating,
            "broken_cocycle_demo" => Catalogue::BrokenCocycleDemo,
            other => {
                return Err(Error::Config(format!(
                    "unknown catalogue system `{other}` (known: {})",
                    Catalogue::names().join(", ")
                )))
            }
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Catalogue::ScalarStable => "scalar_stable",
            Catalogue::ScalarUnstable => "scalar_unstable",
            Catalogue::Bilinear => "bilinear",
            Catalogue::Switched2d { .. } => "switched_2d",
            Catalogue::Saturating => "saturating",
            Catalogue::BrokenCocycleDemo => "broken_cocycle_demo",
        }
    }

    pub fn params(&self) -> BTreeMap<String, f64> {
        match self {
            Catalogue::Switched2d { a, c } => [("a".to_string(), *a), ("c".to_string(), *c)].into(),
            _ => BTreeMap::new(),
        }
    }

    pub fn dimension(&self) -> usize {
        match self {
            Catalogue::Switched2d { .. } => 2,
            _ => 1,
        }
    }

    pub fn default_box(&self) -> DisturbanceBox {
        match self {
            Catalogue::Bilinear => DisturbanceBox::new(vec![[-1.0, 1.0]]).unwrap(),
            Catalogue::Switched2d { .. } => DisturbanceBox::new(vec![[0.0, 1.0]]).unwrap(),
            _ => DisturbanceBox::none(),
        }
    }

    /// Whether ‖φ(t, x, d)‖ is nondecreasing in ‖x‖ along rays, so that the
    /// worst case over a ball sits on its boundary.
    pub fn is_norm_monotone(&self) -> bool {
        !matches!(self, Catalogue::BrokenCocycleDemo)
    }

    pub fn flow(&self, t: f64, x: &[f64], d: &DisturbanceSignal) -> Vec<f64> {
        if t <= 0.0 {
            return x.to_vec();
        }
        match self {
            Catalogue::ScalarStable => vec![x[0] * (-t).exp()],
            Catalogue::ScalarUnstable => vec![x[0] * t.exp()],
            Catalogue::Saturating => vec![saturating_flow(t, x[0])],
            Catalogue::BrokenCocycleDemo => vec![x[0] + t * t],
            Catalogue::Bilinear => {
                let mut rate = 0.0;
                for_each_piece(d, t, |dt, v| rate += (v[0] - 1.0) * dt);
                vec![x[0] * rate.exp()]
            }
            Catalogue::Switched2d { a, c } => {
                let mut y = [x[0], x[1]];
                for_each_piece(d, t, |dt, v| {
                    let m = if v[0] < 0.5 {
                        [[-c, 1.0], [-a, -c]]
                    } else {
                        [[-c, *a], [-1.0, -c]]
                    };
                    let e = expm2(m, dt);
                    y = [e[0][0] * y[0] + e[0][1] * y[1], e[1][0] * y[0] + e[1][1] * y[1]];
                });
                y.to_vec()
            }
        }
    }
}

/// Visit the constant pieces of `d` on `[0, t]` as (duration, value).
fn for_each_piece(d: &DisturbanceSignal, t: f64, mut f: impl FnMut(f64, &[f64])) {
    let bps = d.breakpoints();
    let vals = d.values();
    for i in 0..bps.len() {
        let start = bps[i];
        if start >= t {
            break;
        }
        let end = if i + 1 < bps.len() { bps[i + 1].min(t) } else { t };
        f(end - start, &vals[i]);
    }
}

/// Matrix exponential of a 2×2 matrix times `t`.
fn expm2(m: [[f64; 2]; 2], t: f64) -> [[f64; 2]; 2] {
    let tr = 0.5 * (m[0][0] + m[1][1]);
    let disc = (0.5 * (m[0][0] - m[1][1])).powi(2) + m[0][1] * m[1][0];
    let (ch, sh) = if disc > 0.0 {
        let s = disc.sqrt();
        ((s * t).cosh(), (s * t).sinh() / s)
    } else if disc < 0.0 {
        let s = (-disc).sqrt();
        ((s * t).cos(), (s * t).sin() / s)
    } else {
        (1.0, t)
    };
    let e = (tr * t).exp();
    [
        [e * (ch + sh * (m[0][0] - tr)), e * sh * m[0][1]],
        [e * sh * m[1][0], e * (ch + sh * (m[1][1] - tr))],
    ]
}

/// Solves ln|x| + x²/2 = ln|x₀| + x₀²/2 − t for the sign-preserving root.
fn saturating_flow(t: f64, x0: f64) -> f64 {
    if x0 == 0.0 {
        return 0.0;
    }
    let target = x0.abs().ln() + 0.5 * x0 * x0 - t;
    // g(y) = y + e^{2y}/2 is increasing and convex
    let g = |y: f64| y + 0.5 * (2.0 * y).exp();
    let mut lo = target - 1.0;
    while g(lo) > target {
        lo -= 1.0 + lo.abs();
    }
    let mut hi = if target > 0.0 { 0.5 * (2.0 * target).ln().max(0.0) + 1.0 } else { target + 1.0 };
    while g(hi) < target {
        hi += 1.0 + hi.abs();
    }
    let mut y = if target < 0.0 { target } else { 0.5 * (2.0 * target).ln() };
    if !(y > lo && y < hi) {
        y = 0.5 * (lo + hi);
    }
    for _ in 0..200 {
        let r = g(y) - target;
        if r > 0.0 {
            hi = y;
        } else {
            lo = y;
        }
        let step = r / (1.0 + (2.0 * y).exp());
        let mut next = y - step;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - y).abs() <= 1e-16 * y.abs().max(1e-300) || next == y {
            y = next;
            break;
        }
        y = next;
    }
    x0.signum() * y.exp()
}
