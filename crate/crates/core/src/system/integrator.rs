//! Dormand–Prince 5(4) with FSAL, PI-free step control and continuous
//! (dense) output of order 4.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Norm above which a trajectory is treated as escaping in finite time.
pub const ESCAPE_GUARD: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegratorSettings {
    pub rtol: f64,
    pub atol: f64,
    pub h_max: f64,
    pub max_steps: usize,
    pub guard: f64,
}

impl Default for IntegratorSettings {
    fn default() -> Self {
        IntegratorSettings {
            rtol: 1e-10,
            atol: 1e-12,
            h_max: 1.0,
            max_steps: 1_000_000,
            guard: ESCAPE_GUARD,
        }
    }
}

impl IntegratorSettings {
    pub fn with_tolerance(rtol: f64, atol: f64) -> Self {
        IntegratorSettings {
            rtol,
            atol,
            ..Default::default()
        }
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// One accepted step with its interpolation coefficients.
#[derive(Debug, Clone)]
pub struct DenseStep {
    pub t0: f64,
    pub h: f64,
    r: [Vec<f64>; 5],
}

impl DenseStep {
    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }

    pub fn eval(&self, t: f64, out: &mut [f64]) {
        let th = ((t - self.t0) / self.h).clamp(0.0, 1.0);
        let th1 = 1.0 - th;
        let [r1, r2, r3, r4, r5] = &self.r;
        for i in 0..out.len() {
            out[i] = r1[i] + th * (r2[i] + th1 * (r3[i] + th * (r4[i] + th1 * r5[i])));
        }
    }
}

/// Result of integrating over one interval.
#[derive(Debug, Clone)]
pub struct Segment {
    pub y: Vec<f64>,
    pub steps: Vec<DenseStep>,
    /// Sum of accepted local error estimates (absolute, max-norm).
    pub error: f64,
}

fn norm(y: &[f64]) -> f64 {
    y.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Integrate `y' = f(t, y)` from `t0` to `t1` (`t1 ≥ t0`).
pub fn integrate<F>(
    f: F,
    t0: f64,
    y0: &[f64],
    t1: f64,
    settings: &IntegratorSettings,
    dense: bool,
) -> Result<Segment>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    let n = y0.len();
    let mut y = y0.to_vec();
    let mut seg = Segment {
        y: y.clone(),
        steps: Vec::new(),
        error: 0.0,
    };
    if t1 <= t0 || n == 0 {
        return Ok(seg);
    }
    let span = t1 - t0;
    let sk = |a: &[f64], b: &[f64], i: usize| settings.atol + settings.rtol * a[i].abs().max(b[i].abs());

    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut k5 = vec![0.0; n];
    let mut k6 = vec![0.0; n];
    let mut k7 = vec![0.0; n];
    let mut ys = vec![0.0; n];
    let mut y1 = vec![0.0; n];
    f(t0, &y, &mut k1);

    // initial step (Hairer's heuristic, first stage only)
    let d0 = (y.iter().enumerate().map(|(i, v)| (v / sk(&y, &y, i)).powi(2)).sum::<f64>() / n as f64).sqrt();
    let d1 = (k1.iter().enumerate().map(|(i, v)| (v / sk(&y, &y, i)).powi(2)).sum::<f64>() / n as f64).sqrt();
    let mut h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h = h.min(settings.h_max).min(span);

    let mut t = t0;
    let mut steps = 0usize;
    let mut reject_streak = 0usize;
    while t < t1 {
        steps += 1;
        if steps > settings.max_steps {
            return Err(Error::Integrator(format!(
                "step budget {} exhausted at t={t}",
                settings.max_steps
            )));
        }
        let last = t + h >= t1 || t1 - (t + h) < 1e-12 * span;
        if last {
            h = t1 - t;
        }
        for i in 0..n {
            ys[i] = y[i] + h * A21 * k1[i];
        }
        f(t + C2 * h, &ys, &mut k2);
        for i in 0..n {
            ys[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        f(t + C3 * h, &ys, &mut k3);
        for i in 0..n {
            ys[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        f(t + C4 * h, &ys, &mut k4);
        for i in 0..n {
            ys[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        f(t + C5 * h, &ys, &mut k5);
        for i in 0..n {
            ys[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        f(t + h, &ys, &mut k6);
        for i in 0..n {
            y1[i] = y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        f(t + h, &y1, &mut k7);

        let mut err = 0.0;
        let mut err_abs: f64 = 0.0;
        for i in 0..n {
            let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            err += (e / sk(&y, &y1, i)).powi(2);
            err_abs = err_abs.max(e.abs());
        }
        let err = (err / n as f64).sqrt();

        if !err.is_finite() || y1.iter().any(|v| !v.is_finite()) {
            reject_streak += 1;
            if norm(&y) > settings.guard * 1e-3 || reject_streak > 60 {
                return Err(Error::FiniteEscape {
                    t_lo: t,
                    t_hi: t + h,
                    guard: settings.guard,
                });
            }
            h *= 0.1;
            continue;
        }

        if err <= 1.0 {
            reject_streak = 0;
            if dense {
                let mut r = [
                    y.clone(),
                    vec![0.0; n],
                    vec![0.0; n],
                    vec![0.0; n],
                    vec![0.0; n],
                ];
                for i in 0..n {
                    let ydiff = y1[i] - y[i];
                    let bspl = h * k1[i] - ydiff;
                    r[1][i] = ydiff;
                    r[2][i] = bspl;
                    r[3][i] = ydiff - h * k7[i] - bspl;
                    r[4][i] = h
                        * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
                }
                seg.steps.push(DenseStep { t0: t, h, r });
            }
            let t_prev = t;
            t = if last { t1 } else { t + h };
            std::mem::swap(&mut y, &mut y1);
            std::mem::swap(&mut k1, &mut k7);
            seg.error += err_abs;
            if norm(&y) > settings.guard {
                return Err(Error::FiniteEscape {
                    t_lo: t_prev,
                    t_hi: t,
                    guard: settings.guard,
                });
            }
            let fac = (err.powf(0.2) / 0.9).clamp(0.2, 10.0);
            h = (h / fac).min(settings.h_max);
        } else {
            reject_streak += 1;
            let fac = (err.powf(0.2) / 0.9).clamp(1.0, 10.0);
            h /= fac;
        }
        if h < 1e-15 * t.abs().max(1.0) {
            return Err(if norm(&y) > settings.guard * 1e-3 {
                Error::FiniteEscape {
                    t_lo: t,
                    t_hi: t + h,
                    guard: settings.guard,
                }
            } else {
                Error::Integrator(format!("step size underflow at t={t}"))
            });
        }
    }
    seg.y = y;
    Ok(seg)
}
