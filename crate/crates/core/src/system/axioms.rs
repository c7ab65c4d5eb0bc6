use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evidence::{Evidence, Outcome, Sweep, Witness};

use super::ensemble::{build_ensemble, sphere_directions, EnsembleSpec};
use super::signal::DisturbanceSignal;
use super::{norm, SystemDef};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AxiomPlan {
    /// Radii of the sampled states (the origin is always sampled first).
    pub radii: Vec<f64>,
    pub times: Vec<f64>,
    pub steps: Vec<f64>,
    /// Refinement ladder for the continuity check.
    pub continuity_steps: Vec<f64>,
    pub ensemble: EnsembleSpec,
}

impl Default for AxiomPlan {
    fn default() -> Self {
        AxiomPlan {
            radii: vec![0.5, 1.0, 2.0],
            times: vec![1.0, 0.5, 2.5],
            steps: vec![1.0, 0.25, 3.0],
            continuity_steps: vec![1e-1, 1e-2, 1e-3],
            ensemble: EnsembleSpec::small(0),
        }
    }
}

impl AxiomPlan {
    fn states(&self, n: usize) -> Vec<Vec<f64>> {
        let mut xs = vec![vec![0.0; n]];
        for &r in &self.radii {
            for d in sphere_directions(n) {
                xs.push(d.iter().map(|c| c * r).collect());
            }
        }
        xs
    }
}

fn residual(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn escape_outcome(e: Error, x: &[f64], d: &DisturbanceSignal, t: f64) -> Result<Outcome> {
    match e {
        Error::FiniteEscape { .. } => Ok(Outcome::Unknown {
            witness: Witness::new(format!("finite escape during sampling: {e}"))
                .state(x)
                .disturbance(d)
                .time(t),
        }),
        other => Err(other),
    }
}

fn collect(check: &str, outcomes: Vec<Result<Outcome>>, plan: &AxiomPlan, tol: f64) -> Result<Evidence> {
    let sweep: Sweep = outcomes.into_iter().collect::<Result<Vec<_>>>()?.into_iter().collect();
    let mut ev = Evidence::from_sweep(check, sweep).with_param("tol", tol);
    ev.seed = Some(plan.ensemble.seed);
    Ok(ev)
}

/// Sample the identity, causality, continuity and cocycle axioms (in that
/// order) on the plan's states × ensemble × times × steps.
pub fn check_axioms(sys: &SystemDef, plan: &AxiomPlan, tol: f64) -> Result<Vec<Evidence>> {
    if plan.times.is_empty() || plan.steps.is_empty() {
        return Err(Error::InvalidArgument("axiom plan needs times and steps".into()));
    }
    let states = plan.states(sys.dimension());
    let ensemble = build_ensemble(sys.disturbance(), &plan.ensemble);
    let corners = sys.disturbance().corners();

    let pairs: Vec<(&Vec<f64>, &DisturbanceSignal)> = states
        .iter()
        .flat_map(|x| ensemble.iter().map(move |d| (x, d)))
        .collect();

    let identity: Vec<Result<Outcome>> = pairs
        .par_iter()
        .map(|(x, d)| {
            let y = sys.flow(0.0, x, d)?;
            Ok(Outcome::compare(residual(&y, x), 0.0, tol, || {
                Witness::new("φ(0, x, d) ≠ x").state(x).disturbance(d).time(0.0)
            }))
        })
        .collect();

    let triples: Vec<(&Vec<f64>, &DisturbanceSignal, f64)> = pairs
        .iter()
        .flat_map(|&(x, d)| plan.times.iter().map(move |&t| (x, d, t)))
        .collect();

    let causality: Vec<Result<Outcome>> = triples
        .par_iter()
        .map(|&(x, d, t)| {
            // replace the signal after t by the corner farthest from d(t)
            let here = d.value_at(t);
            let alt = corners
                .iter()
                .max_by(|a, b| residual(a, here).total_cmp(&residual(b, here)))
                .cloned()
                .unwrap_or_default();
            let d2 = d.concatenate(&DisturbanceSignal::constant(alt), t)?;
            let a = match sys.flow(t, x, d) {
                Ok(v) => v,
                Err(e) => return escape_outcome(e, x, d, t),
            };
            let b = match sys.flow(t, x, &d2) {
                Ok(v) => v,
                Err(e) => return escape_outcome(e, x, &d2, t),
            };
            Ok(Outcome::compare(residual(&a, &b), 0.0, tol, || {
                Witness::new("changing d after t changed φ(t, x, d)")
                    .state(x)
                    .disturbance(&d2)
                    .time(t)
            }))
        })
        .collect();

    let continuity: Vec<Result<Outcome>> = triples
        .par_iter()
        .map(|&(x, d, t)| {
            let base = match sys.flow(t, x, d) {
                Ok(v) => v,
                Err(e) => return escape_outcome(e, x, d, t),
            };
            let mut moduli = Vec::with_capacity(plan.continuity_steps.len());
            for &dt in &plan.continuity_steps {
                match sys.flow(t + dt, x, d) {
                    Ok(v) => moduli.push(residual(&v, &base)),
                    Err(e) => return escape_outcome(e, x, d, t + dt),
                }
            }
            // largest increase of the modulus under refinement
            let growth = moduli
                .windows(2)
                .map(|w| w[1] - w[0])
                .fold(f64::NEG_INFINITY, f64::max)
                .max(0.0);
            Ok(Outcome::compare(growth, 0.0, tol, || {
                let mut w = Witness::new("modulus of continuity does not shrink").state(x).disturbance(d).time(t);
                for (k, m) in moduli.iter().enumerate() {
                    w = w.value(&format!("modulus_{k}"), *m);
                }
                w
            }))
        })
        .collect();

    let quads: Vec<(&Vec<f64>, &DisturbanceSignal, f64, f64)> = triples
        .iter()
        .flat_map(|&(x, d, t)| plan.steps.iter().map(move |&h| (x, d, t, h)))
        .collect();

    let cocycle: Vec<Result<Outcome>> = quads
        .par_iter()
        .map(|&(x, d, t, h)| {
            let mid = match sys.flow(t, x, d) {
                Ok(v) => v,
                Err(e) => return escape_outcome(e, x, d, t),
            };
            let lhs = match sys.flow(h, &mid, &d.shift(t)) {
                Ok(v) => v,
                Err(e) => return escape_outcome(e, &mid, d, h),
            };
            let rhs = match sys.flow(t + h, x, d) {
                Ok(v) => v,
                Err(e) => return escape_outcome(e, x, d, t + h),
            };
            let r = residual(&lhs, &rhs);
            Ok(Outcome::compare(r, 0.0, tol, || {
                Witness::new("φ(h, φ(t, x, d), d(· + t)) ≠ φ(t + h, x, d)")
                    .state(x)
                    .disturbance(d)
                    .time(t)
                    .value("t", t)
                    .value("h", h)
                    .value("composed", norm(&lhs))
                    .value("direct", norm(&rhs))
                    .value("residual", r)
            }))
        })
        .collect();

    Ok(vec![
        collect("identity", identity, plan, tol)?,
        collect("causality", causality, plan, tol)?,
        collect("continuity", continuity, plan, tol)?,
        collect("cocycle", cocycle, plan, tol)?,
    ])
}

/// Geometric time ladder `{0, 0.25, 0.5, 1, 2, 4, …, horizon}`.
pub(crate) fn time_ladder(horizon: f64) -> Vec<f64> {
    let mut ts = vec![0.0];
    let mut t = 0.25;
    while t < horizon {
        ts.push(t);
        t *= 2.0;
    }
    if horizon > 0.0 {
        ts.push(horizon);
    }
    ts
}

/// Is 0 an equilibrium for every signal of the ensemble?
pub fn equilibrium_check(
    sys: &SystemDef,
    horizon: f64,
    ensemble: &[DisturbanceSignal],
    tol: f64,
) -> Result<Evidence> {
    let zero = vec![0.0; sys.dimension()];
    let ladder = time_ladder(horizon);
    let outcomes: Vec<Result<Outcome>> = ensemble
        .par_iter()
        .map(|d| {
            let tr = match sys.trajectory(&zero, d, horizon) {
                Ok(tr) => tr,
                Err(e) => return escape_outcome(e, &zero, d, horizon),
            };
            let mut grid = tr.grid();
            grid.extend(&ladder);
            let (t_worst, worst) = grid
                .iter()
                .map(|&t| (t, tr.norm_at(t)))
                .fold((0.0, 0.0), |acc, (t, v)| if v > acc.1 { (t, v) } else { acc });
            Ok(Outcome::compare(worst, 0.0, tol, || {
                Witness::new("trajectory from 0 leaves the origin")
                    .state(&zero)
                    .disturbance(d)
                    .time(t_worst)
            }))
        })
        .collect();
    let sweep: Sweep = outcomes.into_iter().collect::<Result<Vec<_>>>()?.into_iter().collect();
    Ok(Evidence::from_sweep("equilibrium", sweep)
        .with_param("horizon", horizon)
        .with_param("tol", tol))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evidence::Status;
    use crate::system::DisturbanceBox;

    #[test]
    fn scalar_stable_satisfies_axioms() {
        let sys = SystemDef::named("scalar_stable").unwrap();
        let ev = check_axioms(&sys, &AxiomPlan::default(), 1e-8).unwrap();
        assert_eq!(ev.len(), 4);
        for e in ev {
            assert_eq!(e.status, Status::Supported, "{}", e.check);
        }
    }

    #[test]
    fn broken_cocycle_is_refuted() {
        let sys = SystemDef::named("broken_cocycle_demo").unwrap();
        let ev = check_axioms(&sys, &AxiomPlan::default(), 1e-12).unwrap();
        let co = ev.iter().find(|e| e.check == "cocycle").unwrap();
        assert_eq!(co.status, Status::Refuted);
        let w = co.witness.as_ref().unwrap();
        assert_eq!(w.state.as_deref(), Some(&[0.0][..]));
        assert_eq!(w.values["t"], 1.0);
        assert_eq!(w.values["h"], 1.0);
        assert_eq!(w.values["composed"], 2.0);
        assert_eq!(w.values["direct"], 4.0);
        assert!(ev[0].is_supported());
    }

    #[test]
    fn equilibrium_examples() {
        let stable = SystemDef::named("scalar_stable").unwrap();
        let e = build_ensemble(stable.disturbance(), &EnsembleSpec::small(0));
        assert!(equilibrium_check(&stable, 10.0, &e, 1e-12).unwrap().is_supported());

        let bx = DisturbanceBox::new(vec![[-1.0, 1.0]]).unwrap();
        let additive = SystemDef::ode("additive", &["-x1 + d1"], bx.clone(), Default::default()).unwrap();
        let e = build_ensemble(&bx, &EnsembleSpec::small(0));
        let ev = equilibrium_check(&additive, 10.0, &e, 1e-9).unwrap();
        assert!(ev.is_refuted());
        let w = ev.witness.unwrap();
        assert_eq!(w.disturbance.unwrap(), DisturbanceSignal::constant(vec![1.0]));

        let mult = SystemDef::ode("mult", &["-x1 + d1*x1"], bx, Default::default()).unwrap();
        assert!(equilibrium_check(&mult, 10.0, &e, 1e-12).unwrap().is_supported());
    }

    #[test]
    fn ladder_shape() {
        assert_eq!(time_ladder(4.0), vec![0.0, 0.25, 0.5, 1.0, 2.0, 4.0]);
        assert_eq!(time_ladder(3.0), vec![0.0, 0.25, 0.5, 1.0, 2.0, 3.0]);
    }
}
