//! Non-coercive Lyapunov functions: the trajectory-integral construction
//! V̂(x) = max_d ∫₀^∞ ρ(‖φ(s, x, d)‖) ds, Dini derivatives along solutions, and
//! the sampled decay, Bellman, bound and monotonicity checks.

use std::collections::HashMap;
use std::io::Write;
use std::sync::RwLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::comparison::{verify_class, FunctionClass, ScalarFunction};
use crate::error::{Error, Result};
use crate::evidence::{Evidence, Outcome, Status, Sweep, Table, Witness};
use crate::expr::{Expr, Scope};
use crate::integral::{cumulative_integrals, integral_transform, IntegralPolicy};
use crate::sampling::{check_alpha, check_bound, decide, states_in_ball};
use crate::system::{build_ensemble, norm, time_ladder, DisturbanceSignal, EnsembleSpec, SystemDef};

/// How V̂ is evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NclfPolicy {
    pub ensemble: EnsembleSpec,
    pub quadrature: IntegralPolicy,
    /// Relative allowance for the gap between the ensemble max and the true sup.
    pub deficit_rel: f64,
}

impl Default for NclfPolicy {
    fn default() -> Self {
        NclfPolicy {
            ensemble: EnsembleSpec::small(0),
            quadrature: IntegralPolicy {
                abs_tol: 1e-13,
                rel_tol: 1e-13,
                max_intervals: 4000,
                ..IntegralPolicy::default()
            },
            deficit_rel: 1e-3,
        }
    }
}

#[derive(Debug, Clone)]
pub enum LyapunovKind {
    /// Expression in the states `x1, …, xn`.
    ClosedForm(Expr),
    TrajectoryIntegral {
        sys: SystemDef,
        rho: ScalarFunction,
        ensemble: Vec<DisturbanceSignal>,
        policy: NclfPolicy,
    },
}

/// One V̂ value with its truncation metadata.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VSample {
    pub value: f64,
    pub tail_bound: f64,
    pub quad_error: f64,
    /// Index of the maximizing ensemble signal (none for closed forms).
    pub argmax: Option<usize>,
}

/// A candidate Lyapunov function with a value cache (concurrent reads,
/// single-writer insertion).
#[derive(Debug)]
pub struct LyapunovEvaluator {
    kind: LyapunovKind,
    cache: RwLock<HashMap<Vec<u64>, VSample>>,
}

impl Clone for LyapunovEvaluator {
    fn clone(&self) -> Self {
        LyapunovEvaluator::new(self.kind.clone())
    }
}

impl LyapunovEvaluator {
    pub fn new(kind: LyapunovKind) -> Self {
        LyapunovEvaluator {
            kind,
            cache: RwLock::new(HashMap::new()),
        }
    }

    /// V from an expression in `x1, …, xn`.
    pub fn closed_form(source: &str, dimension: usize) -> Result<Self> {
        let e = Expr::parse(
            source,
            Scope::System {
                states: dimension,
                disturbances: 0,
            },
        )?;
        Ok(LyapunovEvaluator::new(LyapunovKind::ClosedForm(e)))
    }

    pub fn kind(&self) -> &LyapunovKind {
        &self.kind
    }

    pub fn is_trajectory_integral(&self) -> bool {
        matches!(self.kind, LyapunovKind::TrajectoryIntegral { .. })
    }

    pub fn ensemble_size(&self) -> usize {
        match &self.kind {
            LyapunovKind::ClosedForm(_) => 0,
            LyapunovKind::TrajectoryIntegral { ensemble, .. } => ensemble.len(),
        }
    }

    pub fn cached_len(&self) -> usize {
        self.cache.read().map(|c| c.len()).unwrap_or(0)
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        Ok(self.sample(x)?.value)
    }

    pub fn sample(&self, x: &[f64]) -> Result<VSample> {
        let key: Vec<u64> = x.iter().map(|v| (v + 0.0).to_bits()).collect();
        if let Some(v) = self.cache.read().ok().and_then(|c| c.get(&key).copied()) {
            return Ok(v);
        }
        let v = self.compute(x)?;
        if let Ok(mut c) = self.cache.write() {
            c.entry(key).or_insert(v);
        }
        Ok(v)
    }

    fn compute(&self, x: &[f64]) -> Result<VSample> {
        match &self.kind {
            LyapunovKind::ClosedForm(e) => {
                let mut vars = Vec::with_capacity(x.len() + 1);
                vars.push(0.0);
                vars.extend_from_slice(x);
                Ok(VSample {
                    value: e.eval(&vars),
                    tail_bound: 0.0,
                    quad_error: 0.0,
                    argmax: None,
                })
            }
            LyapunovKind::TrajectoryIntegral {
                sys,
                rho,
                ensemble,
                policy,
            } => {
                let vals: Vec<Result<(f64, f64, f64)>> = ensemble
                    .par_iter()
                    .map(|d| match integral_transform(sys, rho, x, d, 0.0, &policy.quadrature) {
                        Ok(t) => Ok((t.value + t.tail_bound, t.tail_bound, t.quad_error)),
                        Err(e @ Error::FiniteEscape { .. }) => Err(Error::Precondition {
                            message: format!("trajectory escapes while evaluating V̂: {e}"),
                            witness: x.to_vec(),
                        }),
                        Err(e) => Err(e),
                    })
                    .collect();
                let mut best = VSample {
                    value: 0.0,
                    tail_bound: 0.0,
                    quad_error: 0.0,
                    argmax: None,
                };
                for (i, v) in vals.into_iter().enumerate() {
                    let (v, tail, err) = v?;
                    if best.argmax.is_none() || v > best.value {
                        best = VSample {
                            value: v,
                            tail_bound: tail,
                            quad_error: err,
                            argmax: Some(i),
                        };
                    }
                }
                Ok(best)
            }
        }
    }

    /// Write `x1, …, xn, value` rows for the given states.
    pub fn write_level_csv(&self, points: &[Vec<f64>], out: impl Write) -> Result<()> {
        let n = points.first().map_or(0, Vec::len);
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
        header.push("value".into());
        w.write_record(&header)?;
        for p in points {
            let mut row: Vec<String> = p.iter().map(|v| v.to_string()).collect();
            row.push(self.eval(p)?.to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// V̂(x) = max over the ensemble of ∫₀^T ρ(‖φ(s, x, d)‖) ds + tail.
///
/// ρ has to be of class K and bounded: the construction is only claimed for
/// weights in K∖K∞.
pub fn construct_nclf(sys: &SystemDef, rho: &ScalarFunction, policy: &NclfPolicy) -> Result<LyapunovEvaluator> {
    match rho.class() {
        FunctionClass::Kinf => {
            return Err(Error::ClassViolation(format!(
                "ρ = {rho} is declared K∞; the converse construction needs a bounded ρ of class K (K∖K∞)"
            )))
        }
        FunctionClass::K => {}
        c => {
            return Err(Error::ClassViolation(format!(
                "ρ = {rho} must be of class K, declared {c:?}"
            )))
        }
    }
    check_alpha(rho)?;
    let grid: Vec<f64> = (0..=12).map(|k| 10f64.powi(k - 3)).collect();
    let unbounded = verify_class(&rho.clone().with_class(FunctionClass::Kinf), &grid, 0.0)?;
    if unbounded.is_supported() {
        return Err(Error::ClassViolation(format!(
            "ρ = {rho} appears unbounded; the converse construction needs a bounded ρ (K∖K∞)"
        )));
    }
    if !(policy.deficit_rel >= 0.0) {
        return Err(Error::InvalidArgument("deficit_rel must be nonnegative".into()));
    }
    let ensemble = build_ensemble(sys.disturbance(), &policy.ensemble);
    Ok(LyapunovEvaluator::new(LyapunovKind::TrajectoryIntegral {
        sys: sys.clone(),
        rho: rho.clone(),
        ensemble,
        policy: policy.clone(),
    }))
}

/// Default ρ: the unit saturation `min(r, 1)`.
pub fn default_rho() -> ScalarFunction {
    ScalarFunction::expr("min(r, 1)", FunctionClass::K).expect("parses")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Trend {
    Converged,
    NotConverged,
}

/// Difference quotients of V along one solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiniEstimate {
    pub ladder: Vec<f64>,
    pub quotients: Vec<f64>,
    /// Linear extrapolation of the last two quotients to h = 0.
    pub extrapolated: f64,
    /// min of the last three quotients and the extrapolation.
    pub estimate: f64,
    pub trend: Trend,
}

impl DiniEstimate {
    pub fn is_converged(&self) -> bool {
        self.trend == Trend::Converged
    }
}

pub const DEFAULT_DINI_LADDER: [f64; 5] = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5];
/// Spread allowed among the last three quotients, relative to max(1, |q|).
const DINI_SPREAD: f64 = 1e-2;

/// Lower right Dini derivative of V along φ(·, x, d) at t = 0, estimated from
/// `(V(φ(h, x, d)) − V(x)) / h` on a strictly decreasing ladder of h.
pub fn dini_derivative(
    v: &LyapunovEvaluator,
    sys: &SystemDef,
    x: &[f64],
    d: &DisturbanceSignal,
    ladder: &[f64],
) -> Result<DiniEstimate> {
    if ladder.len() < 3 || ladder.iter().any(|h| !(*h > 0.0)) || ladder.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidArgument(
            "Dini ladder needs at least three strictly decreasing positive steps".into(),
        ));
    }
    let v0 = v.eval(x)?;
    let quotients: Vec<f64> = ladder
        .iter()
        .map(|&h| Ok((v.eval(&sys.flow(h, x, d)?)? - v0) / h))
        .collect::<Result<_>>()?;
    let n = quotients.len();
    let tail = &quotients[n - 3..];
    let (h1, h2) = (ladder[n - 2], ladder[n - 1]);
    let (q1, q2) = (quotients[n - 2], quotients[n - 1]);
    let extrapolated = q2 - h2 * (q1 - q2) / (h1 - h2);
    let lo = tail.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = tail.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let converged = tail.iter().all(|q| q.is_finite()) && hi - lo <= DINI_SPREAD * q2.abs().max(1.0);
    Ok(DiniEstimate {
        ladder: ladder.to_vec(),
        quotients,
        extrapolated,
        estimate: lo.min(extrapolated),
        trend: if converged { Trend::Converged } else { Trend::NotConverged },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LyapunovPlan {
    pub radii: Vec<f64>,
    pub ensemble: EnsembleSpec,
    pub dini_ladder: Vec<f64>,
    /// Times t of the integral bound.
    pub t_ladder: Vec<f64>,
    pub h_grid: Vec<f64>,
    pub quadrature: IntegralPolicy,
    pub tol: f64,
}

impl Default for LyapunovPlan {
    fn default() -> Self {
        LyapunovPlan {
            radii: vec![0.25, 0.5, 1.0, 2.0, 4.0],
            ensemble: EnsembleSpec::small(0),
            dini_ladder: DEFAULT_DINI_LADDER.to_vec(),
            t_ladder: time_ladder(20.0),
            h_grid: vec![1e-3, 1e-2, 0.1, 0.5, 1.0, 2.0],
            quadrature: IntegralPolicy::default(),
            tol: 1e-6,
        }
    }
}

fn plan_states(sys: &SystemDef, plan: &LyapunovPlan) -> Vec<Vec<f64>> {
    let mut xs = vec![vec![0.0; sys.dimension()]];
    for &r in &plan.radii {
        xs.extend(states_in_ball(sys, r, plan.ensemble.seed).into_iter().skip(1));
    }
    xs
}

fn allowance(v: &LyapunovEvaluator, value: f64, tol: f64) -> f64 {
    match &v.kind {
        LyapunovKind::TrajectoryIntegral { policy, .. } => tol + policy.deficit_rel * value.abs(),
        LyapunovKind::ClosedForm(_) => tol,
    }
}

fn lyap_error(e: Error, x: &[f64], d: &DisturbanceSignal) -> Result<Outcome> {
    match e {
        Error::FiniteEscape { .. } | Error::Precondition { .. } => Ok(Outcome::Unknown {
            witness: Witness::new(format!("evaluation failed: {e}")).state(x).disturbance(d),
        }),
        other => Err(other),
    }
}

/// Dini derivative ≤ −α(‖x‖) at every plan sample.
pub fn verify_decay(v: &LyapunovEvaluator, sys: &SystemDef, alpha: &ScalarFunction, plan: &LyapunovPlan) -> Result<Evidence> {
    check_alpha(alpha)?;
    let xs = plan_states(sys, plan);
    let ds = build_ensemble(sys.disturbance(), &plan.ensemble);
    let samples: Vec<(&Vec<f64>, &DisturbanceSignal)> = xs.iter().flat_map(|x| ds.iter().map(move |d| (x, d))).collect();
    let outcomes: Vec<Result<Outcome>> = samples
        .par_iter()
        .map(|&(x, d)| {
            let est = match dini_derivative(v, sys, x, d, &plan.dini_ladder) {
                Ok(e) => e,
                Err(e) => return lyap_error(e, x, d),
            };
            let rhs = -alpha.eval(norm(x));
            let w = || {
                let mut w = Witness::new("Dini derivative exceeds −α(‖x‖)")
                    .state(x)
                    .disturbance(d)
                    .time(0.0)
                    .value("dini", est.estimate);
                for (h, q) in est.ladder.iter().zip(&est.quotients) {
                    w = w.value(&format!("q({h:e})"), *q);
                }
                w
            };
            if !est.is_converged() {
                return Ok(Outcome::Unknown {
                    witness: w().value("rhs", rhs),
                });
            }
            Ok(Outcome::compare(est.estimate, rhs, plan.tol, w))
        })
        .collect();
    let sweep: Sweep = outcomes.into_iter().collect::<Result<Vec<_>>>()?.into_iter().collect();
    let mut ev = Evidence::from_sweep("decay", sweep)
        .with_param("alpha", alpha)
        .with_param("dini_ladder", &plan.dini_ladder)
        .with_param("ensemble_size", ds.len())
        .with_param("tol", plan.tol);
    ev.seed = Some(plan.ensemble.seed);
    Ok(ev)
}

/// ∫₀^h ρ(‖φ(t, x, d)‖) dt + V̂(φ(h, x, d)) ≤ V̂(x) for each h.
pub fn verify_bellman(
    v: &LyapunovEvaluator,
    sys: &SystemDef,
    x: &[f64],
    d: &DisturbanceSignal,
    h_grid: &[f64],
    tol: f64,
) -> Result<Evidence> {
    let (rho, policy) = match &v.kind {
        LyapunovKind::TrajectoryIntegral { rho, policy, .. } => (rho, policy),
        LyapunovKind::ClosedForm(_) => {
            return Err(Error::InvalidArgument(
                "the Bellman check needs a trajectory-integral V".into(),
            ))
        }
    };
    let mut hs = h_grid.to_vec();
    if hs.iter().any(|h| !(*h >= 0.0) || !h.is_finite()) {
        return Err(Error::InvalidArgument("h grid must be finite and nonnegative".into()));
    }
    hs.sort_by(f64::total_cmp);
    hs.dedup();
    let vx = v.sample(x)?;
    let ints = cumulative_integrals(sys, rho, x, d, &hs, &policy.quadrature)?;
    let mut table = Table::new(&["h", "lhs", "rhs", "gap_over_h"]);
    let mut sweep = Sweep::default();
    for (&h, int) in hs.iter().zip(&ints) {
        let y = sys.flow(h, x, d)?;
        let vy = v.sample(&y)?;
        let lhs = int.value + vy.value;
        let slack = allowance(v, vx.value, tol) + int.quad_error + vy.quad_error + vx.quad_error;
        let gap = vx.value - lhs;
        table.push(vec![h, lhs, vx.value, if h > 0.0 { gap / h } else { 0.0 }]);
        sweep.push(Outcome::compare(lhs, vx.value, slack, || {
            Witness::new("∫₀^h ρ(‖φ‖) + V̂(φ(h)) exceeds V̂(x); the ensemble may be too small to realize the sup")
                .state(x)
                .disturbance(d)
                .time(h)
                .value("h", h)
        }));
    }
    let mut ev = Evidence::from_sweep("bellman", sweep)
        .with_param("rho", rho)
        .with_param("ensemble_size", v.ensemble_size())
        .with_param("tol", tol);
    ev.table = Some(table);
    Ok(ev)
}

/// ∫₀^t α(‖φ(s, x, d)‖) ds ≤ V(x) ≤ ψ₂(‖x‖) on plan samples and the t ladder.
pub fn verify_integral_bound(
    v: &LyapunovEvaluator,
    sys: &SystemDef,
    alpha: &ScalarFunction,
    psi2: &ScalarFunction,
    plan: &LyapunovPlan,
) -> Result<Evidence> {
    check_alpha(alpha)?;
    let note = check_bound("ψ₂", psi2)?;
    let xs = plan_states(sys, plan);
    let ds = build_ensemble(sys.disturbance(), &plan.ensemble);
    let mut ts = plan.t_ladder.clone();
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    let per_x: Vec<Result<Vec<Outcome>>> = xs
        .par_iter()
        .map(|x| {
            let vx = match v.sample(x) {
                Ok(s) => s,
                Err(e) => return Ok(vec![lyap_error(e, x, &ds[0])?]),
            };
            let nx = norm(x);
            let mut out = vec![Outcome::compare(vx.value, psi2.eval(nx), plan.tol, || {
                Witness::new("V(x) exceeds ψ₂(‖x‖)").state(x)
            })];
            let slack = allowance(v, vx.value, plan.tol) + vx.quad_error;
            for d in &ds {
                match cumulative_integrals(sys, alpha, x, d, &ts, &plan.quadrature) {
                    Ok(ints) => {
                        for (int, &t) in ints.iter().zip(&ts) {
                            out.push(decide(int.lower(), int.value + int.quad_error, vx.value, slack, || {
                                Witness::new("∫₀^t α(‖φ‖) exceeds V(x)").state(x).disturbance(d).time(t)
                            }));
                        }
                    }
                    Err(e) => out.push(lyap_error(e, x, d)?),
                }
            }
            Ok(out)
        })
        .collect();
    let mut sweep = Sweep::default();
    for o in per_x {
        for o in o? {
            sweep.push(o);
        }
    }
    let mut ev = Evidence::from_sweep("integral_bound", sweep)
        .with_param("alpha", alpha)
        .with_param("psi2", psi2)
        .with_param("t_ladder", &ts)
        .with_param("ensemble_size", ds.len())
        .with_param("tol", plan.tol);
    ev.seed = Some(plan.ensemble.seed);
    ev.notes.extend(note);
    Ok(ev)
}

/// s ↦ V(φ(s, x, d)) is nonincreasing on the grid up to `tol`.
pub fn monotonicity_along_trajectory(
    v: &LyapunovEvaluator,
    sys: &SystemDef,
    x: &[f64],
    d: &DisturbanceSignal,
    s_grid: &[f64],
    tol: f64,
) -> Result<Evidence> {
    let mut ss = s_grid.to_vec();
    if ss.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
        return Err(Error::InvalidArgument("s grid must be finite and nonnegative".into()));
    }
    ss.sort_by(f64::total_cmp);
    ss.dedup();
    let vals: Vec<f64> = ss
        .par_iter()
        .map(|&s| v.eval(&sys.flow(s, x, d)?))
        .collect::<Result<_>>()?;
    let mut table = Table::new(&["s", "V"]);
    for (s, val) in ss.iter().zip(&vals) {
        table.push(vec![*s, *val]);
    }
    let sweep: Sweep = vals
        .windows(2)
        .zip(ss.windows(2))
        .map(|(w, s)| {
            let slack = allowance(v, w[0], tol);
            Outcome::compare(w[1], w[0], slack, || {
                Witness::new("V increases along the trajectory")
                    .state(x)
                    .disturbance(d)
                    .time(s[1])
                    .value("s_prev", s[0])
                    .value("V_prev", w[0])
                    .value("V", w[1])
            })
        })
        .collect();
    let mut ev = Evidence::from_sweep("monotonicity", sweep).with_param("tol", tol);
    if ss.len() < 2 {
        ev.status = Status::Inconclusive;
    }
    ev.table = Some(table);
    Ok(ev)
}

/// V(x) > 0 for every sampled x ≠ 0 and V(0) = 0.
pub fn verify_positivity(v: &LyapunovEvaluator, sys: &SystemDef, plan: &LyapunovPlan) -> Result<Evidence> {
    let xs = plan_states(sys, plan);
    let vals: Vec<Result<f64>> = xs.par_iter().map(|x| v.eval(x)).collect();
    let mut sweep = Sweep::default();
    for (x, val) in xs.iter().zip(vals) {
        let val = val?;
        if norm(x) == 0.0 {
            sweep.push(Outcome::compare(val.abs(), 0.0, plan.tol, || Witness::new("V(0) ≠ 0").state(x)));
        } else if val > 0.0 {
            sweep.push(Outcome::Pass { margin: val });
        } else {
            sweep.push(Outcome::Fail {
                margin: val,
                witness: Witness::new("V vanishes off the origin").state(x).value("V", val),
            });
        }
    }
    Ok(Evidence::from_sweep("positivity", sweep))
}

/// Sampled non-coercive (or, with ψ₁, coercive) Lyapunov certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovCertificate {
    pub status: Status,
    pub alpha: ScalarFunction,
    pub psi2: ScalarFunction,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub psi1: Option<ScalarFunction>,
    pub checks: Vec<Evidence>,
    /// min over the checks' margins.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub margin: Option<f64>,
}

impl LyapunovCertificate {
    pub fn is_coercive(&self) -> bool {
        self.psi1.is_some() && self.status == Status::Supported
    }
}

/// ψ₁(‖x‖) ≤ V(x) at plan samples.
fn verify_coercive(v: &LyapunovEvaluator, sys: &SystemDef, psi1: &ScalarFunction, plan: &LyapunovPlan) -> Result<Evidence> {
    let xs = plan_states(sys, plan);
    let mut sweep = Sweep::default();
    for x in &xs {
        let val = v.eval(x)?;
        sweep.push(Outcome::compare(psi1.eval(norm(x)), val, plan.tol, || {
            Witness::new("V(x) is below ψ₁(‖x‖)").state(x)
        }));
    }
    Ok(Evidence::from_sweep("coercive_bound", sweep).with_param("psi1", psi1))
}

/// Positivity, upper bound with the integral inequality, decay and (optionally)
/// the coercive lower bound; Supported only when all are.
pub fn certify_lyapunov(
    v: &LyapunovEvaluator,
    sys: &SystemDef,
    alpha: &ScalarFunction,
    psi2: &ScalarFunction,
    psi1: Option<&ScalarFunction>,
    plan: &LyapunovPlan,
) -> Result<LyapunovCertificate> {
    let mut checks = vec![
        verify_positivity(v, sys, plan)?,
        verify_integral_bound(v, sys, alpha, psi2, plan)?,
        verify_decay(v, sys, alpha, plan)?,
    ];
    if let Some(p) = psi1 {
        check_alpha(p)?;
        checks.push(verify_coercive(v, sys, p, plan)?);
    }
    let status = if checks.iter().any(Evidence::is_refuted) {
        Status::Refuted
    } else if checks.iter().all(Evidence::is_supported) {
        Status::Supported
    } else {
        Status::Inconclusive
    };
    let margin = checks.iter().filter_map(|c| c.margin).reduce(f64::min);
    Ok(LyapunovCertificate {
        status,
        alpha: alpha.clone(),
        psi2: psi2.clone(),
        psi1: psi1.cloned(),
        checks,
        margin,
    })
}

/// Serializable description of V for reports and `--verify` inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VSpec {
    ClosedForm { expr: String },
    Constructed {
        rho: ScalarFunction,
        #[serde(default)]
        policy: NclfPolicy,
    },
}

impl VSpec {
    pub fn build(&self, sys: &SystemDef) -> Result<LyapunovEvaluator> {
        match self {
            VSpec::ClosedForm { expr } => LyapunovEvaluator::closed_form(expr, sys.dimension()),
            VSpec::Constructed { rho, policy } => construct_nclf(sys, rho, policy),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn stable() -> SystemDef {
        SystemDef::named("scalar_stable").unwrap()
    }

    fn vhat() -> LyapunovEvaluator {
        construct_nclf(&stable(), &default_rho(), &NclfPolicy::default()).unwrap()
    }

    fn empty() -> DisturbanceSignal {
        DisturbanceSignal::empty()
    }

    #[test]
    fn construct_examples() {
        let v = vhat();
        assert_relative_eq!(v.eval(&[2.0]).unwrap(), 2f64.ln() + 1.0, epsilon = 1e-9);
        assert_eq!(v.eval(&[0.0]).unwrap(), 0.0);
        assert_relative_eq!(v.eval(&[0.5]).unwrap(), 0.5, epsilon = 1e-10);
        assert_eq!(v.cached_len(), 3);
        assert_eq!(v.sample(&[2.0]).unwrap().argmax, Some(0));
    }

    #[test]
    fn construct_rejects_unbounded_rho() {
        let s = stable();
        assert!(matches!(
            construct_nclf(&s, &ScalarFunction::identity(), &NclfPolicy::default()),
            Err(Error::ClassViolation(_))
        ));
        let r = ScalarFunction::expr("r", FunctionClass::K).unwrap();
        assert!(matches!(
            construct_nclf(&s, &r, &NclfPolicy::default()),
            Err(Error::ClassViolation(_))
        ));
    }

    #[test]
    fn dini_examples() {
        let s = stable();
        let v = LyapunovEvaluator::closed_form("abs(x1)", 1).unwrap();
        let e = dini_derivative(&v, &s, &[2.0], &empty(), &DEFAULT_DINI_LADDER).unwrap();
        assert!(e.is_converged());
        assert_relative_eq!(e.estimate, -2.0, epsilon = 1e-7);
        let e = dini_derivative(&v, &s, &[0.0], &empty(), &DEFAULT_DINI_LADDER).unwrap();
        assert_eq!(e.estimate, 0.0);
        let e = dini_derivative(&vhat(), &s, &[2.0], &empty(), &DEFAULT_DINI_LADDER).unwrap();
        assert!(e.is_converged());
        assert_relative_eq!(e.estimate, -1.0, epsilon = 1e-4);
        assert!(dini_derivative(&v, &s, &[2.0], &empty(), &[1e-3, 1e-2, 1e-4]).is_err());
    }

    #[test]
    fn non_convergent_quotients() {
        // V has a square-root cusp at x = 1: quotients grow like h^{-1/2}
        let s = stable();
        let v = LyapunovEvaluator::closed_form("sqrt(abs(x1 - 1))", 1).unwrap();
        let e = dini_derivative(&v, &s, &[1.0], &empty(), &DEFAULT_DINI_LADDER).unwrap();
        assert!(!e.is_converged());
    }

    #[test]
    fn decay_examples() {
        let s = stable();
        let plan = LyapunovPlan::default();
        let v = LyapunovEvaluator::closed_form("abs(x1)", 1).unwrap();
        let ev = verify_decay(&v, &s, &ScalarFunction::identity(), &plan).unwrap();
        assert_eq!(ev.status, Status::Supported, "{ev:?}");
        assert!(ev.margin.unwrap().abs() < 1e-6);

        let v2 = LyapunovEvaluator::closed_form("x1^2", 1).unwrap();
        let a2 = ScalarFunction::expr("r^2", FunctionClass::Kinf).unwrap();
        let ev = verify_decay(&v2, &s, &a2, &plan).unwrap();
        assert_eq!(ev.status, Status::Supported);

        let u = SystemDef::named("scalar_unstable").unwrap();
        let ev = verify_decay(&v, &u, &ScalarFunction::identity(), &plan).unwrap();
        assert_eq!(ev.status, Status::Refuted);
        assert_ne!(ev.witness.unwrap().state.unwrap()[0], 0.0);
    }

    #[test]
    fn bellman_examples() {
        let s = stable();
        let v = vhat();
        let ev = verify_bellman(&v, &s, &[2.0], &empty(), &[2f64.ln(), 1e-3, 0.1], 1e-8).unwrap();
        assert_eq!(ev.status, Status::Supported);
        assert!(ev.margin.unwrap().abs() < 1e-8);
        let ev = verify_bellman(&v, &s, &[0.0], &empty(), &[1.0], 1e-12).unwrap();
        assert!(ev.is_supported());
        let closed = LyapunovEvaluator::closed_form("abs(x1)", 1).unwrap();
        assert!(verify_bellman(&closed, &s, &[1.0], &empty(), &[1.0], 1e-8).is_err());
    }

    #[test]
    fn integral_bound_examples() {
        let s = stable();
        let plan = LyapunovPlan::default();
        let v = LyapunovEvaluator::closed_form("abs(x1)", 1).unwrap();
        let id = ScalarFunction::identity();
        assert!(verify_integral_bound(&v, &s, &id, &id, &plan).unwrap().is_supported());
        let half = ScalarFunction::expr("r/2", FunctionClass::Kinf).unwrap();
        let ev = verify_integral_bound(&v, &s, &id, &half, &plan).unwrap();
        assert_eq!(ev.status, Status::Refuted);
    }

    #[test]
    fn monotonicity_examples() {
        let s = stable();
        let grid: Vec<f64> = (0..=20).map(|k| 0.25 * k as f64).collect();
        assert!(monotonicity_along_trajectory(&vhat(), &s, &[3.0], &empty(), &grid, 1e-9)
            .unwrap()
            .is_supported());
        let u = SystemDef::named("scalar_unstable").unwrap();
        let v2 = LyapunovEvaluator::closed_form("x1^2", 1).unwrap();
        assert!(monotonicity_along_trajectory(&v2, &u, &[1.0], &empty(), &grid, 1e-9)
            .unwrap()
            .is_refuted());
        assert!(monotonicity_along_trajectory(&v2, &u, &[0.0], &empty(), &grid, 1e-12)
            .unwrap()
            .is_supported());
    }

    #[test]
    fn certificate_and_positivity() {
        let s = stable();
        let plan = LyapunovPlan::default();
        let v = vhat();
        let rho = default_rho();
        // V̂ ≤ |x|, and V̂(x) ≥ min(|x|, 1) · (something) > 0
        let cert = certify_lyapunov(&v, &s, &rho, &ScalarFunction::identity(), None, &plan).unwrap();
        assert_eq!(cert.status, Status::Supported, "{:#?}", cert.checks);
        assert!(!cert.is_coercive());
        let zero = LyapunovEvaluator::closed_form("0", 1).unwrap();
        assert!(verify_positivity(&zero, &s, &plan).unwrap().is_refuted());
    }

    #[test]
    fn level_csv() {
        let v = LyapunovEvaluator::closed_form("x1^2 + x2^2", 2).unwrap();
        let mut buf = Vec::new();
        v.write_level_csv(&[vec![1.0, 2.0], vec![0.0, 0.0]], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "x1,x2,value\n1,2,5\n0,0,0\n");
    }

    #[test]
    fn vspec_roundtrip() {
        let spec: VSpec = serde_json::from_str(r#"{"expr": "abs(x1)"}"#).unwrap();
        assert_eq!(spec.build(&stable()).unwrap().eval(&[-3.0]).unwrap(), 3.0);
        let spec: VSpec = serde_json::from_str(r#"{"rho": {"expr": "min(r, 1)", "class": "K"}}"#).unwrap();
        assert!(spec.build(&stable()).unwrap().is_trajectory_integral());
    }
}
