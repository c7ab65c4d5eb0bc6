//! Shared plumbing for the sampled certification checks.

use crate::comparison::{verify_class, verify_kl, FunctionClass, KLFunction, ScalarFunction};
use crate::error::{Error, Result};
use crate::evidence::{Outcome, Witness};
use crate::system::{ball_samples, SystemDef};

/// Origin first, then the sphere (and for non norm-monotone systems an
/// interior layer) of radius `r`.
pub(crate) fn states_in_ball(sys: &SystemDef, r: f64, seed: u64) -> Vec<Vec<f64>> {
    let n = sys.dimension();
    let mut xs = vec![vec![0.0; n]];
    if r > 0.0 {
        xs.extend(ball_samples(n, r, sys.is_norm_monotone(), seed));
    }
    xs
}

/// Decide `value ≤ rhs` when only `lower ≤ value ≤ upper` is known.
pub(crate) fn decide(lower: f64, upper: f64, rhs: f64, tol: f64, witness: impl FnOnce() -> Witness) -> Outcome {
    if upper <= rhs + tol {
        Outcome::Pass { margin: rhs - upper }
    } else if lower > rhs + tol {
        Outcome::Fail {
            margin: rhs - lower,
            witness: witness().value("lower", lower).value("upper", upper).value("rhs", rhs),
        }
    } else {
        Outcome::Unknown {
            witness: witness().value("lower", lower).value("upper", upper).value("rhs", rhs),
        }
    }
}

/// Geometric probe grid `{1e-3, …, 1e3}` used for weight class checks.
pub fn class_grid() -> Vec<f64> {
    (0..=24).map(|k| 10f64.powf(-3.0 + 0.25 * k as f64)).collect()
}

/// α must be of class K (or declared positive definite, which is allowed
/// with a note by the callers).
pub(crate) fn check_alpha(alpha: &ScalarFunction) -> Result<()> {
    match alpha.class() {
        FunctionClass::K | FunctionClass::Kinf => {
            let ev = verify_class(alpha, &class_grid(), 1e-12)?;
            if ev.is_refuted() {
                let msg = ev.witness.map(|w| w.message).unwrap_or_default();
                return Err(Error::ClassViolation(format!("α = {alpha}: {msg}")));
            }
            Ok(())
        }
        FunctionClass::PositiveDefinite => {
            let g = class_grid();
            if alpha.eval(0.0).abs() > 1e-12 || g.iter().any(|&r| !(alpha.eval(r) > 0.0)) {
                return Err(Error::ClassViolation(format!("α = {alpha} is not positive definite")));
            }
            Ok(())
        }
        c => Err(Error::ClassViolation(format!(
            "α must be of class K, K∞ or positive definite, declared {c:?}"
        ))),
    }
}

/// ψ serves as an upper bound only: it has to be nonnegative and nondecreasing.
/// Returns a note when it is not of class K∞.
pub(crate) fn check_bound(name: &str, psi: &ScalarFunction) -> Result<Option<String>> {
    let mut g = class_grid();
    g.insert(0, 0.0);
    let v: Vec<f64> = g.iter().map(|&r| psi.eval(r)).collect();
    if v.iter().any(|y| !(*y >= 0.0)) || v.windows(2).any(|w| w[1] < w[0] - 1e-12) {
        return Err(Error::ClassViolation(format!("{name} = {psi} is not a nonnegative nondecreasing bound")));
    }
    let kinf = verify_class(&psi.clone().with_class(FunctionClass::Kinf), &class_grid(), 1e-12)?;
    Ok((!kinf.is_supported()).then(|| format!("{name} = {psi} is not of class K∞; it is used as a bound only")))
}

pub(crate) fn check_beta(beta: &KLFunction) -> Result<()> {
    let ts: Vec<f64> = (0..=20).map(|k| 0.25 * k as f64).collect();
    let ev = verify_kl(beta, &class_grid(), &ts, 1e-12)?;
    if ev.is_refuted() {
        let msg = ev.witness.map(|w| w.message).unwrap_or_default();
        return Err(Error::ClassViolation(format!("β is not of class KL: {msg}")));
    }
    Ok(())
}

/// Geometric descending δ grid `2^{k/2}` for k = 8, 7, …, −40.
pub(crate) fn default_delta_grid() -> Vec<f64> {
    (-40..=8).rev().map(|k| 2f64.powf(k as f64 / 2.0)).collect()
}

/// `ε_n = 2^{−n} ε₀`, n = 0..levels.
pub fn eps_ladder(eps0: f64, levels: usize) -> Vec<f64> {
    (0..levels).map(|n| eps0 * 0.5f64.powi(n as i32)).collect()
}

pub(crate) fn sorted_desc(v: &[f64]) -> Vec<f64> {
    let mut v = v.to_vec();
    v.sort_by(|a, b| b.total_cmp(a));
    v.dedup();
    v
}

pub(crate) fn sorted_asc(v: &[f64]) -> Vec<f64> {
    let mut v = v.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}
