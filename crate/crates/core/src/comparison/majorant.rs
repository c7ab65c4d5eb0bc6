use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::kl::{KLFunction, MeshInterpolant};
use super::mesh::Mesh;
use super::scalar::ScalarFunction;

const HYPOTHESIS_TOL: f64 = 1e-12;

fn precondition(message: impl Into<String>, r: f64, t: f64) -> Error {
    Error::Precondition {
        message: message.into(),
        witness: vec![r, t],
    }
}

/// Interpolated KL upper bound for `psi` on the given meshes.
///
/// Node rule: β(R_k, 0) = 2ψ(R_{k+1}, 0) + ω(R_{k+1}, 0) and
/// β(R_k, τ_m) = ψ(R_{k+1}, τ_{m−1}) + ω(R_{k+1}, τ_{m−1}) for m ≥ 1, where the
/// last radius uses the extension point R_{K+1} = 2·R_K. Inside the mesh hull
/// every cell corner dominates ψ(R_{k+1}, τ_m), which bounds ψ on the cell.
pub fn kl_majorant(
    psi: &dyn Fn(f64, f64) -> f64,
    omega: &KLFunction,
    r_mesh: &Mesh,
    t_mesh: &Mesh,
) -> Result<KLFunction> {
    let rs = r_mesh.points();
    let ts = t_mesh.points();
    if rs.len() < 2 || ts.len() < 2 {
        return Err(Error::InvalidArgument("meshes need at least two points".into()));
    }
    if !(rs[0] > 0.0) {
        return Err(Error::InvalidArgument("r mesh must be positive".into()));
    }
    if ts[0] != 0.0 {
        return Err(Error::InvalidArgument("t mesh must start at 0".into()));
    }
    let mut ext = rs.to_vec();
    ext.push(2.0 * rs[rs.len() - 1]);

    // hypotheses on the mesh (with the extension point)
    let val = |r: f64, t: f64| psi(r, t);
    for &t in ts {
        let z = val(0.0, t);
        if z.abs() > HYPOTHESIS_TOL {
            return Err(precondition(format!("ψ(0, t) = {z} ≠ 0"), 0.0, t));
        }
    }
    for &r in &ext {
        let mut prev = f64::INFINITY;
        for &t in ts {
            let v = val(r, t);
            if !v.is_finite() || v < -HYPOTHESIS_TOL {
                return Err(precondition(format!("ψ(r, t) = {v} is not a finite nonnegative value"), r, t));
            }
            if v > prev + HYPOTHESIS_TOL * prev.abs().max(1.0) {
                return Err(precondition("ψ increases in t", r, t));
            }
            prev = v;
        }
        let (start, end) = (val(r, 0.0), val(r, ts[ts.len() - 1]));
        if start > 0.0 && !(end < start) {
            return Err(precondition("ψ(r, ·) does not decay over the time mesh", r, ts[ts.len() - 1]));
        }
    }
    for &t in ts {
        let mut prev: f64 = 0.0;
        for &r in &ext {
            let v = val(r, t);
            if v < prev - HYPOTHESIS_TOL * prev.abs().max(1.0) {
                return Err(precondition("ψ decreases in r", r, t));
            }
            prev = v;
        }
    }

    let nt = ts.len();
    let mut nodes = vec![0.0; rs.len() * nt];
    for k in 0..rs.len() {
        let rn = ext[k + 1];
        for m in 0..nt {
            let (tm, factor) = if m == 0 { (0.0, 2.0) } else { (ts[m - 1], 1.0) };
            let w = omega.eval(rn, tm);
            if !(w > 0.0) || !w.is_finite() {
                return Err(precondition(format!("ω(R, τ) = {w} is not strictly positive"), rn, tm));
            }
            nodes[k * nt + m] = factor * val(rn, tm) + w;
        }
    }
    Ok(KLFunction::mesh(MeshInterpolant::new(rs.to_vec(), ts.to_vec(), nodes)?))
}

/// One δ of the ε-ladder: times τ_n with ψ-levels ε_n = ψ(δ)/2^n.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderRecord {
    pub delta: f64,
    /// τ_0 = 0, τ_1, … after monotone repair.
    pub times: Vec<f64>,
    /// Node values ω(δ, τ_n): 2ψ(δ) at τ_0, ε_{n−1} at τ_n.
    pub levels: Vec<f64>,
    /// First n for which the time map had no answer.
    pub truncated_at: Option<usize>,
    /// Last certified level ε_N: the tail bound beyond the ladder.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayEnvelope {
    pub beta: KLFunction,
    pub ladders: Vec<LadderRecord>,
}

/// Minimum spacing enforced between consecutive ladder times.
pub const LADDER_MIN_GAP: f64 = 1e-3;
/// Ladder times are capped here so that the default ω stays representable.
pub const LADDER_MAX_TIME: f64 = 500.0;

impl LadderRecord {
    /// Piecewise-linear ω(δ, ·) through the ladder nodes, decaying
    /// exponentially after the last one.
    fn omega(&self, t: f64) -> f64 {
        let ts = &self.times;
        let n = ts.len();
        if t >= ts[n - 1] {
            return self.levels[n - 1] * (-(t - ts[n - 1])).exp();
        }
        let i = ts.partition_point(|&x| x <= t).max(1) - 1;
        let w = (t - ts[i]) / (ts[i + 1] - ts[i]);
        self.levels[i] + w * (self.levels[i + 1] - self.levels[i])
    }
}

/// KL bound assembled from a decay-time map τ(ε, δ): for each δ of the grid
/// the levels ε_n = ψ_gs(δ)/2^n are reached at τ_n, giving ω(δ, τ_n) = ε_{n−1}
/// and ω(δ, 0) = 2ψ_gs(δ). The envelope sup_{s ≤ r} ω(s, t) + r·e^{−t} is then
/// passed through [`kl_majorant`] on the δ-grid × ladder-time meshes.
pub fn decay_envelope_from_ladder(
    psi_gs: &ScalarFunction,
    tau_of: &dyn Fn(f64, f64) -> Option<f64>,
    delta_grid: &[f64],
    n_max: usize,
) -> Result<DecayEnvelope> {
    let mut deltas: Vec<f64> = delta_grid.iter().copied().filter(|d| *d > 0.0).collect();
    if delta_grid.iter().any(|d| !d.is_finite() || *d < 0.0) {
        return Err(Error::InvalidArgument("delta grid must be finite and nonnegative".into()));
    }
    deltas.sort_by(f64::total_cmp);
    deltas.dedup();

    let mut ladders = Vec::with_capacity(deltas.len());
    for &delta in &deltas {
        let p = psi_gs.eval(delta);
        if !(p >= 0.0) || !p.is_finite() {
            return Err(Error::ClassViolation(format!("ψ({delta}) = {p} is not a nonnegative number")));
        }
        let mut times = vec![0.0];
        let mut levels = vec![2.0 * p];
        let mut truncated_at = None;
        let mut residual = p;
        for n in 1..=n_max {
            let eps_n = p / 2f64.powi(n as i32);
            let raw = if eps_n > 0.0 { tau_of(eps_n, delta) } else { Some(0.0) };
            let tau = match raw {
                Some(t) if t.is_finite() => t.max(times[n - 1] + LADDER_MIN_GAP),
                _ => {
                    truncated_at = Some(n);
                    break;
                }
            };
            if tau > LADDER_MAX_TIME {
                truncated_at = Some(n);
                break;
            }
            times.push(tau);
            levels.push(p / 2f64.powi(n as i32 - 1));
            residual = eps_n;
        }
        ladders.push(LadderRecord {
            delta,
            times,
            levels,
            truncated_at,
            residual,
        });
    }

    // meshes
    let mut r_pts = deltas.clone();
    if r_pts.is_empty() {
        r_pts = vec![1.0, 2.0];
    } else if r_pts.len() == 1 {
        r_pts.push(2.0 * r_pts[0]);
    }
    let mut t_pts: Vec<f64> = ladders.iter().flat_map(|l| l.times.iter().copied()).collect();
    t_pts.push(0.0);
    t_pts.sort_by(f64::total_cmp);
    t_pts.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs().max(1.0));
    if t_pts.len() < 2 {
        t_pts.push(1.0);
    }
    let r_mesh = Mesh::from_points(r_pts)?;
    let t_mesh = Mesh::from_points(t_pts)?;

    let top = deltas.last().copied();
    let envelope = |r: f64, t: f64| -> f64 {
        if !(r > 0.0) {
            return 0.0;
        }
        let reg = r * (-t).exp();
        let Some(top) = top else { return reg };
        // sup over grid points up to the first one ≥ r
        let limit = deltas.partition_point(|&d| d < r);
        let sup_upto = |upto: usize| {
            ladders[..upto]
                .iter()
                .map(|l| l.omega(t))
                .fold(0.0, f64::max)
        };
        if r > top {
            sup_upto(ladders.len()) * r / top + reg
        } else {
            sup_upto(limit + 1) + reg
        }
    };
    let beta = kl_majorant(&envelope, &KLFunction::default_omega(), &r_mesh, &t_mesh)?;
    Ok(DecayEnvelope { beta, ladders })
}
