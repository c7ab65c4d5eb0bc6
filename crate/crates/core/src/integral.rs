//! Weighted trajectory integrals ∫ α(‖φ(s, x, d)‖) ds and the integral
//! stability checks built on them.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::comparison::{FunctionClass, KLFunction, ScalarFunction};
use crate::error::{Error, Result};
use crate::evidence::{Evidence, Outcome, Sweep, Table, Witness};
use crate::quadrature;
use crate::sampling::{
    check_alpha, check_beta, check_bound, decide, default_delta_grid, eps_ladder, sorted_asc, sorted_desc,
    states_in_ball,
};
use crate::system::{build_ensemble, DisturbanceSignal, EnsembleSpec, SystemDef, Trajectory};

/// Integrand values below this at the horizon count as zero.
const NEGLIGIBLE: f64 = 1e-14;

/// ∫ over `[t0, t0 + horizon]` plus an estimate of the remainder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailIntegral {
    pub value: f64,
    pub horizon: f64,
    /// Estimated remainder beyond the horizon (`inf` if the integrand does not decay).
    pub tail_bound: f64,
    pub quad_error: f64,
}

impl TailIntegral {
    pub fn total(&self) -> f64 {
        self.value
    }

    pub fn upper(&self) -> f64 {
        self.value + self.tail_bound + self.quad_error
    }

    pub fn lower(&self) -> f64 {
        (self.value - self.quad_error).max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegralPolicy {
    /// Truncation horizon T for improper integrals.
    pub horizon: f64,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for IntegralPolicy {
    fn default() -> Self {
        IntegralPolicy {
            horizon: 50.0,
            abs_tol: 1e-11,
            rel_tol: 1e-10,
            max_intervals: 2000,
        }
    }
}

fn integrand<'a>(tr: &'a Trajectory<'_>, alpha: &'a ScalarFunction) -> impl Fn(f64) -> f64 + 'a {
    move |s| alpha.eval(tr.norm_at(s))
}

fn quad(g: &dyn Fn(f64) -> f64, tr: &Trajectory<'_>, a: f64, b: f64, policy: &IntegralPolicy) -> quadrature::Quadrature {
    let mut pts = vec![a];
    pts.extend(tr.breakpoints_in(a, b));
    pts.push(b);
    quadrature::integrate(g, &pts, policy.abs_tol, policy.rel_tol, policy.max_intervals)
}

/// Remainder estimate past `b` from the integrand over the last tenth of `[a, b]`.
/// Zero for a negligible decreasing integrand; otherwise a log-linear fit
/// `g ≈ c·e^{λs}` gives `g_max / |λ|` when λ < 0 and `inf` when it does not decay.
fn tail_bound(g: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let w = 0.1 * (b - a);
    let s: Vec<f64> = (0..=10).map(|j| b - w + w * j as f64 / 10.0).collect();
    let v: Vec<f64> = s.iter().map(|&x| g(x)).collect();
    let last = v[10];
    let decreasing = v.windows(2).all(|p| p[1] <= p[0]);
    if last < NEGLIGIBLE && decreasing {
        return 0.0;
    }
    let pts: Vec<(f64, f64)> = s.iter().zip(&v).filter(|(_, y)| **y > 0.0).map(|(x, y)| (*x, y.ln())).collect();
    if pts.len() < 2 {
        return if last == 0.0 { 0.0 } else { f64::INFINITY };
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let lambda = sxy / sxx;
    if !(lambda < 0.0) {
        return f64::INFINITY;
    }
    let head = if decreasing { last } else { v.iter().copied().fold(0.0, f64::max) };
    head / -lambda
}

/// ∫_{starts[j]}^{end} α(‖φ‖) for every start (ascending, all ≤ `end`),
/// with the tail past `end` added when `with_tail` is set.
fn integrals_to_end(
    tr: &Trajectory<'_>,
    alpha: &ScalarFunction,
    starts: &[f64],
    end: f64,
    with_tail: bool,
    policy: &IntegralPolicy,
) -> Vec<TailIntegral> {
    let g = integrand(tr, alpha);
    let tail = if with_tail { tail_bound(&g, starts[0], end) } else { 0.0 };
    let mut out = vec![
        TailIntegral {
            value: 0.0,
            horizon: 0.0,
            tail_bound: tail,
            quad_error: 0.0
        };
        starts.len()
    ];
    let (mut acc, mut err) = (0.0, 0.0);
    let mut hi = end;
    for j in (0..starts.len()).rev() {
        let q = quad(&g, tr, starts[j], hi, policy);
        acc += q.value;
        err += q.error;
        hi = starts[j];
        out[j].value = acc.max(0.0);
        out[j].quad_error = err;
        out[j].horizon = end - starts[j];
    }
    out
}

/// ∫_0^{ends[k]} α(‖φ‖) for every end (ascending).
fn integrals_from_zero(
    tr: &Trajectory<'_>,
    alpha: &ScalarFunction,
    ends: &[f64],
    policy: &IntegralPolicy,
) -> Vec<TailIntegral> {
    let g = integrand(tr, alpha);
    let (mut acc, mut err, mut lo) = (0.0, 0.0, 0.0);
    ends.iter()
        .map(|&e| {
            let q = quad(&g, tr, lo, e, policy);
            acc += q.value;
            err += q.error;
            lo = e;
            TailIntegral {
                value: acc.max(0.0),
                horizon: e,
                tail_bound: 0.0,
                quad_error: err,
            }
        })
        .collect()
}

/// ∫_{t0}^∞ α(‖φ(s, x, d)‖) ds, truncated at `t0 + policy.horizon`.
pub fn integral_transform(
    sys: &SystemDef,
    alpha: &ScalarFunction,
    x: &[f64],
    d: &DisturbanceSignal,
    t0: f64,
    policy: &IntegralPolicy,
) -> Result<TailIntegral> {
    if !(t0 >= 0.0) || !(policy.horizon > 0.0) {
        return Err(Error::InvalidArgument("need t0 ≥ 0 and a positive horizon".into()));
    }
    let end = t0 + policy.horizon;
    let tr = sys.trajectory(x, d, end)?;
    Ok(integrals_to_end(&tr, alpha, &[t0], end, true, policy)[0])
}

/// ∫_a^b α(‖φ(s, x, d)‖) ds without tail accounting.
pub fn finite_integral(
    sys: &SystemDef,
    alpha: &ScalarFunction,
    x: &[f64],
    d: &DisturbanceSignal,
    a: f64,
    b: f64,
    policy: &IntegralPolicy,
) -> Result<TailIntegral> {
    if !(a >= 0.0) || !(b >= a) {
        return Err(Error::InvalidArgument(format!("bad interval [{a}, {b}]")));
    }
    let tr = sys.trajectory(x, d, b)?;
    let mut v = integrals_to_end(&tr, alpha, &[a], b, false, policy)[0];
    v.horizon = b - a;
    Ok(v)
}

/// ∫_0^{e} α(‖φ(s, x, d)‖) ds for every `e` of the ascending `ends`, from one trajectory.
pub fn cumulative_integrals(
    sys: &SystemDef,
    alpha: &ScalarFunction,
    x: &[f64],
    d: &DisturbanceSignal,
    ends: &[f64],
    policy: &IntegralPolicy,
) -> Result<Vec<TailIntegral>> {
    if ends.iter().any(|e| !(*e >= 0.0)) || ends.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidArgument("integration ends must be ascending and nonnegative".into()));
    }
    let end = ends.last().copied().unwrap_or(0.0);
    if end == 0.0 {
        return Ok(ends
            .iter()
            .map(|_| TailIntegral {
                value: 0.0,
                horizon: 0.0,
                tail_bound: 0.0,
                quad_error: 0.0,
            })
            .collect());
    }
    let tr = sys.trajectory(x, d, end)?;
    Ok(integrals_from_zero(&tr, alpha, ends, policy))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum IntegralKind {
    #[serde(rename = "iREP")]
    IRep,
    #[serde(rename = "iRFC")]
    IRfc,
    #[serde(rename = "iULS")]
    IUls,
    #[serde(rename = "iUGS")]
    IUgs,
    #[serde(rename = "iUGATT")]
    IUgatt,
    #[serde(rename = "iUGAS")]
    IUgas,
    #[serde(rename = "UltiULS")]
    UltiUls,
}

impl IntegralKind {
    pub const ALL: [IntegralKind; 7] = [
        IntegralKind::IRep,
        IntegralKind::IRfc,
        IntegralKind::IUls,
        IntegralKind::IUgs,
        IntegralKind::IUgatt,
        IntegralKind::IUgas,
        IntegralKind::UltiUls,
    ];

    pub fn name(self) -> &'static str {
        match self {
            IntegralKind::IRep => "iREP",
            IntegralKind::IRfc => "iRFC",
            IntegralKind::IUls => "iULS",
            IntegralKind::IUgs => "iUGS",
            IntegralKind::IUgatt => "iUGATT",
            IntegralKind::IUgas => "iUGAS",
            IntegralKind::UltiUls => "UltiULS",
        }
    }
}

impl fmt::Display for IntegralKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for IntegralKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        IntegralKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown integral property `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub alpha: ScalarFunction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi: Option<ScalarFunction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<KLFunction>,
}

impl Weights {
    pub fn alpha(alpha: ScalarFunction) -> Self {
        Weights {
            alpha,
            psi: None,
            beta: None,
        }
    }

    pub fn with_psi(mut self, psi: ScalarFunction) -> Self {
        self.psi = Some(psi);
        self
    }

    pub fn with_beta(mut self, beta: KLFunction) -> Self {
        self.beta = Some(beta);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegralPlan {
    /// State radii (iUGS, iUGAS, iUGATT, iRFC's C).
    pub radii: Vec<f64>,
    /// The `r` of iULS: only radii up to it are checked.
    pub local_radius: f64,
    /// ε values for the δ/τ searches; defaults to `2^{−n}` for n < 6.
    pub eps: Vec<f64>,
    /// Finite horizons h (iREP) and τ (iRFC).
    pub horizons: Vec<f64>,
    /// Candidate δ values, searched from the largest down.
    pub delta_grid: Vec<f64>,
    /// Sampled start times t of tail integrals (iUGATT, iUGAS, UltiULS).
    pub tau_ladder: Vec<f64>,
    /// iUGATT: the sup of tail integrals must fall below this at the last τ.
    pub vanish_threshold: f64,
    pub policy: IntegralPolicy,
    pub ensemble: EnsembleSpec,
    pub tol: f64,
}

impl Default for IntegralPlan {
    fn default() -> Self {
        IntegralPlan {
            radii: vec![0.25, 0.5, 1.0, 2.0, 4.0],
            local_radius: 1.0,
            eps: eps_ladder(1.0, 6),
            horizons: vec![0.5, 1.0, 2.0, 5.0],
            delta_grid: default_delta_grid(),
            tau_ladder: vec![0.0, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0],
            vanish_threshold: 1e-3,
            policy: IntegralPolicy::default(),
            ensemble: EnsembleSpec::default(),
            tol: 1e-6,
        }
    }
}

impl IntegralPlan {
    fn validate(&self) -> Result<()> {
        let bad = |v: &[f64]| v.is_empty() || v.iter().any(|x| !x.is_finite() || *x < 0.0);
        if bad(&self.radii) || bad(&self.eps) || bad(&self.horizons) || bad(&self.delta_grid) || bad(&self.tau_ladder) {
            return Err(Error::InvalidArgument(
                "plan grids must be nonempty, finite and nonnegative".into(),
            ));
        }
        if self.eps.iter().any(|e| *e <= 0.0) || self.horizons.iter().any(|h| *h <= 0.0) {
            return Err(Error::InvalidArgument("ε and horizon values must be positive".into()));
        }
        if !(self.policy.horizon > 0.0) || !(self.tol >= 0.0) {
            return Err(Error::InvalidArgument("policy horizon must be positive and tol nonnegative".into()));
        }
        Ok(())
    }
}

fn escape_witness(e: &Error, x: &[f64], d: &DisturbanceSignal) -> Witness {
    let mut w = Witness::new(format!("finite escape: {e}")).state(x).disturbance(d);
    if let Error::FiniteEscape { t_lo, t_hi, .. } = e {
        w = w.time(*t_hi).value("t_lo", *t_lo).value("t_hi", *t_hi);
    }
    w
}

type Sample<'a> = (&'a Vec<f64>, &'a DisturbanceSignal);

fn pairs<'a>(xs: &'a [Vec<f64>], ds: &'a [DisturbanceSignal]) -> Vec<Sample<'a>> {
    xs.iter().flat_map(|x| ds.iter().map(move |d| (x, d))).collect()
}

type SampleResult = std::result::Result<Vec<TailIntegral>, Witness>;

/// Per-sample integrals, computed in parallel and returned in sample order.
/// `Err(witness)` marks a finite escape before `end`.
fn per_sample<F>(sys: &SystemDef, samples: &[Sample<'_>], end: f64, f: F) -> Result<Vec<SampleResult>>
where
    F: Fn(&Trajectory<'_>) -> Vec<TailIntegral> + Sync,
{
    samples
        .par_iter()
        .map(|&(x, d)| match sys.trajectory(x, d, end) {
            Ok(tr) => Ok(Ok(f(&tr))),
            Err(e @ Error::FiniteEscape { .. }) => Ok(Err(escape_witness(&e, x, d))),
            Err(e) => Err(e),
        })
        .collect()
}

/// Origin, then the ball samples of every radius.
fn states_for_radii(sys: &SystemDef, radii: &[f64], seed: u64) -> Vec<Vec<f64>> {
    let mut xs = vec![vec![0.0; sys.dimension()]];
    for &r in radii {
        xs.extend(states_in_ball(sys, r, seed).into_iter().skip(1));
    }
    xs
}

/// Column-wise sup of upper and lower bounds over samples, with the witness
/// (first sample attaining the largest lower bound) per column.
struct SupStats {
    upper: Vec<f64>,
    lower: Vec<f64>,
    arg: Vec<usize>,
    escaped: Option<Witness>,
}

fn sup_stats(results: &[SampleResult], cols: usize) -> SupStats {
    let mut st = SupStats {
        upper: vec![0.0; cols],
        lower: vec![0.0; cols],
        arg: vec![0; cols],
        escaped: None,
    };
    for (i, r) in results.iter().enumerate() {
        match r {
            Ok(v) => {
                for (k, ti) in v.iter().enumerate() {
                    let u = ti.upper();
                    if u > st.upper[k] || u.is_nan() {
                        st.upper[k] = if u.is_nan() { f64::INFINITY } else { u };
                    }
                    if ti.lower() > st.lower[k] {
                        st.lower[k] = ti.lower();
                        st.arg[k] = i;
                    }
                }
            }
            Err(w) => {
                if st.escaped.is_none() {
                    st.escaped = Some(w.clone());
                }
            }
        }
    }
    st
}

fn sample_witness(samples: &[Sample<'_>], i: usize, t: f64, msg: &str) -> Witness {
    let (x, d) = samples[i];
    Witness::new(msg).state(x).disturbance(d).time(t)
}

fn bounded(
    kind: IntegralKind,
    sys: &SystemDef,
    weights: &Weights,
    plan: &IntegralPlan,
    ensemble: &[DisturbanceSignal],
) -> Result<Evidence> {
    let psi = weights.psi.as_ref().expect("checked by caller");
    let mut radii = sorted_asc(&plan.radii);
    if kind == IntegralKind::IUls {
        radii.retain(|r| *r <= plan.local_radius);
        if radii.is_empty() {
            radii.push(plan.local_radius);
        }
    }
    let xs = states_for_radii(sys, &radii, plan.ensemble.seed);
    let samples = pairs(&xs, ensemble);
    let h = plan.policy.horizon;
    let res = per_sample(sys, &samples, h, |tr| {
        integrals_to_end(tr, &weights.alpha, &[0.0], h, true, &plan.policy)
    })?;
    let sweep: Sweep = res
        .into_iter()
        .zip(&samples)
        .map(|(r, &(x, d))| match r {
            Ok(v) => decide(v[0].lower(), v[0].upper(), psi.eval(crate::system::norm(x)), plan.tol, || {
                Witness::new("∫₀^∞ α(‖φ‖) exceeds ψ(‖x‖)").state(x).disturbance(d).time(0.0)
            }),
            Err(w) => Outcome::Unknown { witness: w },
        })
        .collect();
    Ok(Evidence::from_sweep(kind.name(), sweep).with_param("radii", &radii))
}

fn iugas(sys: &SystemDef, weights: &Weights, plan: &IntegralPlan, ensemble: &[DisturbanceSignal]) -> Result<Evidence> {
    let beta = weights.beta.as_ref().expect("checked by caller");
    let radii = sorted_asc(&plan.radii);
    let ladder = sorted_asc(&plan.tau_ladder);
    let end = ladder[ladder.len() - 1] + plan.policy.horizon;
    let xs = states_for_radii(sys, &radii, plan.ensemble.seed);
    let samples = pairs(&xs, ensemble);
    let res = per_sample(sys, &samples, end, |tr| {
        integrals_to_end(tr, &weights.alpha, &ladder, end, true, &plan.policy)
    })?;
    let mut sweep = Sweep::default();
    for (r, &(x, d)) in res.into_iter().zip(&samples) {
        match r {
            Ok(v) => {
                let nx = crate::system::norm(x);
                for (ti, &t) in v.iter().zip(&ladder) {
                    sweep.push(decide(ti.lower(), ti.upper(), beta.eval(nx, t), plan.tol, || {
                        Witness::new("∫_t^∞ α(‖φ‖) exceeds β(‖x‖, t)").state(x).disturbance(d).time(t)
                    }));
                }
            }
            Err(w) => sweep.push(Outcome::Unknown { witness: w }),
        }
    }
    Ok(Evidence::from_sweep("iUGAS", sweep)
        .with_param("radii", &radii)
        .with_param("tau_ladder", &ladder))
}

fn iugatt(sys: &SystemDef, weights: &Weights, plan: &IntegralPlan, ensemble: &[DisturbanceSignal]) -> Result<Evidence> {
    let radii = sorted_asc(&plan.radii);
    let ladder = sorted_asc(&plan.tau_ladder);
    let last = ladder.len() - 1;
    let end = ladder[last] + plan.policy.horizon;
    let eps = sorted_desc(&plan.eps);
    let mut table = Table::new(&["r", "eps", "tau", "sup_tail"]);
    let mut sweep = Sweep::default();
    for &r in &radii {
        let xs = states_in_ball(sys, r, plan.ensemble.seed);
        let samples = pairs(&xs, ensemble);
        let res = per_sample(sys, &samples, end, |tr| {
            integrals_to_end(tr, &weights.alpha, &ladder, end, true, &plan.policy)
        })?;
        let st = sup_stats(&res, ladder.len());
        if let Some(w) = st.escaped {
            sweep.push(Outcome::Unknown { witness: w });
            continue;
        }
        for &e in &eps {
            match (0..ladder.len()).find(|&j| st.upper[j] <= e + plan.tol) {
                Some(j) => {
                    table.push(vec![r, e, ladder[j], st.upper[j]]);
                    sweep.push(Outcome::Pass { margin: e - st.upper[j] });
                }
                None => sweep.push(decide(st.lower[last], st.upper[last], e, plan.tol, || {
                    sample_witness(&samples, st.arg[last], ladder[last], "no τ on the ladder brings the tail integral below ε")
                        .value("r", r)
                        .value("eps", e)
                })),
            }
        }
        sweep.push(decide(st.lower[last], st.upper[last], plan.vanish_threshold, plan.tol, || {
            sample_witness(&samples, st.arg[last], ladder[last], "sup of tail integrals does not vanish along the τ ladder")
                .value("r", r)
        }));
    }
    let mut ev = Evidence::from_sweep("iUGATT", sweep)
        .with_param("radii", &radii)
        .with_param("tau_ladder", &ladder)
        .with_param("eps", &eps)
        .with_param("vanish_threshold", plan.vanish_threshold);
    ev.table = Some(table);
    Ok(ev)
}

/// Search the δ grid downwards; `cols` integrals per sample are reduced to
/// column sups and `assign(sup, δ)` records which targets the δ satisfies.
/// Returns the sup statistics and samples of the smallest δ tried.
fn delta_search<F>(
    sys: &SystemDef,
    plan: &IntegralPlan,
    ensemble: &[DisturbanceSignal],
    end: f64,
    cols: usize,
    integrals: F,
    mut assign: impl FnMut(&SupStats, f64) -> bool,
) -> Result<Option<(SupStats, Vec<Vec<f64>>, f64)>>
where
    F: Fn(&Trajectory<'_>) -> Vec<TailIntegral> + Sync,
{
    let mut deltas = plan.delta_grid.clone();
    deltas.extend(&plan.eps);
    let deltas = sorted_desc(&deltas);
    let mut last = None;
    for &delta in deltas.iter().filter(|d| **d > 0.0) {
        let xs = states_in_ball(sys, delta, plan.ensemble.seed);
        let samples = pairs(&xs, ensemble);
        let res = per_sample(sys, &samples, end, &integrals)?;
        let st = sup_stats(&res, cols);
        if st.escaped.is_none() && assign(&st, delta) {
            return Ok(None);
        }
        last = Some((st, xs, delta));
    }
    Ok(last)
}

fn unresolved(
    sweep: &mut Sweep,
    last: &Option<(SupStats, Vec<Vec<f64>>, f64)>,
    ensemble: &[DisturbanceSignal],
    col: usize,
    e: f64,
    t: f64,
    tol: f64,
    msg: &str,
) {
    match last {
        Some((st, xs, delta)) => {
            if let Some(w) = &st.escaped {
                sweep.push(Outcome::Unknown { witness: w.clone() });
                return;
            }
            let samples = pairs(xs, ensemble);
            sweep.push(decide(st.lower[col], st.upper[col], e, tol, || {
                sample_witness(&samples, st.arg[col], t, msg).value("delta", *delta).value("eps", e)
            }));
        }
        None => sweep.push(Outcome::Unknown {
            witness: Witness::new("δ grid is empty"),
        }),
    }
}

fn irep(sys: &SystemDef, weights: &Weights, plan: &IntegralPlan, ensemble: &[DisturbanceSignal]) -> Result<Evidence> {
    let hs = sorted_asc(&plan.horizons);
    let eps = sorted_desc(&plan.eps);
    let end = hs[hs.len() - 1];
    // found[i][k] = (δ, sup) for (eps[i], hs[k])
    let mut found: Vec<Vec<Option<(f64, f64)>>> = vec![vec![None; hs.len()]; eps.len()];
    let last = delta_search(
        sys,
        plan,
        ensemble,
        end,
        hs.len(),
        |tr| integrals_from_zero(tr, &weights.alpha, &hs, &plan.policy),
        |st, delta| {
            for (i, &e) in eps.iter().enumerate() {
                for k in 0..hs.len() {
                    if found[i][k].is_none() && st.upper[k] <= e + plan.tol {
                        found[i][k] = Some((delta, st.upper[k]));
                    }
                }
            }
            found.iter().flatten().all(Option::is_some)
        },
    )?;
    let mut table = Table::new(&["eps", "h", "delta", "sup_integral"]);
    let mut sweep = Sweep::default();
    for (i, &e) in eps.iter().enumerate() {
        for (k, &h) in hs.iter().enumerate() {
            match found[i][k] {
                Some((delta, sup)) => {
                    table.push(vec![e, h, delta, sup]);
                    sweep.push(Outcome::Pass { margin: e - sup });
                }
                None => unresolved(&mut sweep, &last, ensemble, k, e, h, plan.tol, "no δ on the grid keeps ∫₀^h α(‖φ‖) below ε"),
            }
        }
    }
    let mut ev = Evidence::from_sweep("iREP", sweep)
        .with_param("eps", &eps)
        .with_param("horizons", &hs);
    ev.table = Some(table);
    Ok(ev)
}

fn ultimate(sys: &SystemDef, weights: &Weights, plan: &IntegralPlan, ensemble: &[DisturbanceSignal]) -> Result<Evidence> {
    let mut ts: Vec<f64> = sorted_asc(&plan.tau_ladder).into_iter().filter(|t| *t > 0.0).collect();
    if ts.is_empty() {
        ts.push(1.0);
    }
    let end = ts[ts.len() - 1] + plan.policy.horizon;
    let eps = sorted_desc(&plan.eps);
    let mut found: Vec<Option<(f64, f64, f64)>> = vec![None; eps.len()];
    let last = delta_search(
        sys,
        plan,
        ensemble,
        end,
        ts.len(),
        |tr| integrals_to_end(tr, &weights.alpha, &ts, end, true, &plan.policy),
        |st, delta| {
            for (i, &e) in eps.iter().enumerate() {
                if found[i].is_none() {
                    if let Some(j) = (0..ts.len()).find(|&j| st.upper[j] <= e + plan.tol) {
                        found[i] = Some((ts[j], delta, st.upper[j]));
                    }
                }
            }
            found.iter().all(Option::is_some)
        },
    )?;
    let mut table = Table::new(&["eps", "T", "delta", "sup_tail"]);
    let mut sweep = Sweep::default();
    let lastcol = ts.len() - 1;
    for (i, &e) in eps.iter().enumerate() {
        match found[i] {
            Some((t, delta, sup)) => {
                table.push(vec![e, t, delta, sup]);
                sweep.push(Outcome::Pass { margin: e - sup });
            }
            None => unresolved(
                &mut sweep,
                &last,
                ensemble,
                lastcol,
                e,
                ts[lastcol],
                plan.tol,
                "no (T, δ) on the grids keeps ∫_T^∞ α(‖φ‖) below ε",
            ),
        }
    }
    let mut ev = Evidence::from_sweep("UltiULS", sweep)
        .with_param("eps", &eps)
        .with_param("T_ladder", &ts);
    ev.table = Some(table);
    Ok(ev)
}

fn irfc(sys: &SystemDef, weights: &Weights, plan: &IntegralPlan, ensemble: &[DisturbanceSignal]) -> Result<Evidence> {
    let cs = sorted_asc(&plan.radii);
    let taus = sorted_asc(&plan.horizons);
    let end = taus[taus.len() - 1];
    let mut table = Table::new(&["C", "tau", "bound"]);
    let mut sweep = Sweep::default();
    for &c in &cs {
        let xs = states_in_ball(sys, c, plan.ensemble.seed);
        let samples = pairs(&xs, ensemble);
        let res = per_sample(sys, &samples, end, |tr| {
            integrals_from_zero(tr, &weights.alpha, &taus, &plan.policy)
        })?;
        let st = sup_stats(&res, taus.len());
        if let Some(w) = st.escaped {
            // a trajectory leaving every bounded set makes the sup infinite
            sweep.push(Outcome::Fail {
                margin: f64::NEG_INFINITY,
                witness: w.value("C", c),
            });
            continue;
        }
        for (k, &t) in taus.iter().enumerate() {
            if st.upper[k].is_finite() {
                table.push(vec![c, t, st.upper[k]]);
                sweep.push(Outcome::Pass { margin: f64::INFINITY });
            } else {
                sweep.push(Outcome::Unknown {
                    witness: sample_witness(&samples, st.arg[k], t, "integral bound is not finite").value("C", c),
                });
            }
        }
    }
    let mut ev = Evidence::from_sweep("iRFC", sweep)
        .with_param("radii", &cs)
        .with_param("horizons", &taus);
    ev.margin = None;
    ev.table = Some(table);
    Ok(ev)
}

/// Certify one integral stability property on the plan's samples.
pub fn certify_integral(
    kind: IntegralKind,
    sys: &SystemDef,
    weights: &Weights,
    plan: &IntegralPlan,
) -> Result<Evidence> {
    plan.validate()?;
    check_alpha(&weights.alpha)?;
    let mut notes = Vec::new();
    if weights.alpha.class() == FunctionClass::PositiveDefinite {
        notes.push("α is positive definite but not of class K".to_string());
    }
    match kind {
        IntegralKind::IUgs | IntegralKind::IUls => {
            let psi = weights
                .psi
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument(format!("{kind} needs ψ")))?;
            notes.extend(check_bound("ψ", psi)?);
        }
        IntegralKind::IUgas => {
            let beta = weights
                .beta
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument("iUGAS needs β".into()))?;
            check_beta(beta)?;
        }
        _ => {}
    }
    let ensemble = build_ensemble(sys.disturbance(), &plan.ensemble);
    let mut ev = match kind {
        IntegralKind::IUgs | IntegralKind::IUls => bounded(kind, sys, weights, plan, &ensemble)?,
        IntegralKind::IUgas => iugas(sys, weights, plan, &ensemble)?,
        IntegralKind::IUgatt => iugatt(sys, weights, plan, &ensemble)?,
        IntegralKind::IRep => irep(sys, weights, plan, &ensemble)?,
        IntegralKind::UltiUls => ultimate(sys, weights, plan, &ensemble)?,
        IntegralKind::IRfc => irfc(sys, weights, plan, &ensemble)?,
    };
    ev.seed = Some(plan.ensemble.seed);
    ev.notes.extend(notes);
    let mut ev = ev
        .with_param("alpha", &weights.alpha)
        .with_param("ensemble_size", ensemble.len())
        .with_param("horizon", plan.policy.horizon)
        .with_param("tol", plan.tol);
    if let Some(p) = &weights.psi {
        ev = ev.with_param("psi", p);
    }
    if let Some(b) = &weights.beta {
        ev = ev.with_param("beta", b);
    }
    Ok(ev)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evidence::Status;
    use approx::assert_relative_eq;

    fn alpha_pd() -> ScalarFunction {
        ScalarFunction::expr("r/(1+r^2)", FunctionClass::PositiveDefinite).unwrap()
    }

    fn quick_plan() -> IntegralPlan {
        IntegralPlan {
            ensemble: EnsembleSpec::small(0),
            ..Default::default()
        }
    }

    #[test]
    fn transform_examples() {
        let p = IntegralPolicy::default();
        let e = DisturbanceSignal::empty();
        let s = SystemDef::named("scalar_stable").unwrap();
        let v = integral_transform(&s, &ScalarFunction::identity(), &[1.0], &e, 0.0, &p).unwrap();
        assert_relative_eq!(v.total(), 1.0, epsilon = 1e-9);
        assert_eq!(v.tail_bound, 0.0);
        let u = SystemDef::named("scalar_unstable").unwrap();
        let v = integral_transform(&u, &alpha_pd(), &[1.0], &e, 0.0, &p).unwrap();
        assert_relative_eq!(v.total() + v.tail_bound, std::f64::consts::FRAC_PI_4, epsilon = 1e-9);
        let z = integral_transform(&u, &alpha_pd(), &[0.0], &e, 0.0, &p).unwrap();
        assert_eq!(z.value, 0.0);
        assert_eq!(z.upper(), 0.0);
        // growing integrand: no finite tail
        let g = integral_transform(&u, &ScalarFunction::identity(), &[1.0], &e, 0.0, &p).unwrap();
        assert!(g.tail_bound.is_infinite());
    }

    #[test]
    fn transform_is_additive() {
        let p = IntegralPolicy::default();
        let s = SystemDef::named("bilinear").unwrap();
        let d = DisturbanceSignal::new(vec![0.0, 0.7, 2.0], vec![vec![0.5], vec![-1.0], vec![0.2]]).unwrap();
        let a = ScalarFunction::expr("r^2", FunctionClass::Kinf).unwrap();
        let whole = finite_integral(&s, &a, &[1.5], &d, 0.0, 5.0, &p).unwrap();
        let l = finite_integral(&s, &a, &[1.5], &d, 0.0, 1.3, &p).unwrap();
        let r = finite_integral(&s, &a, &[1.5], &d, 1.3, 5.0, &p).unwrap();
        assert!((whole.value - l.value - r.value).abs() <= 2.0 * (p.abs_tol + p.rel_tol * whole.value) + 1e-12);
    }

    #[test]
    fn kinds_parse() {
        for k in IntegralKind::ALL {
            assert_eq!(k.name().parse::<IntegralKind>().unwrap(), k);
        }
        assert!("iugas".parse::<IntegralKind>().is_ok());
        assert!("UGAS".parse::<IntegralKind>().is_err());
    }

    #[test]
    fn iugs_examples() {
        let s = SystemDef::named("scalar_stable").unwrap();
        let w = Weights::alpha(ScalarFunction::identity()).with_psi(ScalarFunction::identity());
        let ev = certify_integral(IntegralKind::IUgs, &s, &w, &quick_plan()).unwrap();
        assert_eq!(ev.status, Status::Supported);
        assert!(ev.margin.unwrap().abs() < 1e-6);

        let u = SystemDef::named("scalar_unstable").unwrap();
        let w = Weights::alpha(alpha_pd()).with_psi(ScalarFunction::expr("r+2", FunctionClass::Kinf).unwrap());
        let ev = certify_integral(IntegralKind::IUgs, &u, &w, &quick_plan()).unwrap();
        assert_eq!(ev.status, Status::Supported, "{ev:?}");
        assert!(!ev.notes.is_empty());

        let w = Weights::alpha(ScalarFunction::identity()).with_psi(ScalarFunction::identity());
        let ev = certify_integral(IntegralKind::IUgs, &u, &w, &quick_plan()).unwrap();
        assert_eq!(ev.status, Status::Refuted);
        assert!(ev.witness.unwrap().state.is_some());
    }

    #[test]
    fn weights_are_checked() {
        let s = SystemDef::named("scalar_stable").unwrap();
        let w = Weights::alpha(ScalarFunction::identity());
        assert!(certify_integral(IntegralKind::IUgs, &s, &w, &quick_plan()).is_err());
        assert!(certify_integral(IntegralKind::IUgas, &s, &w, &quick_plan()).is_err());
        let bad = Weights::alpha(ScalarFunction::expr("r/(1+r^2)", FunctionClass::K).unwrap());
        assert!(matches!(
            certify_integral(IntegralKind::IRfc, &s, &bad, &quick_plan()),
            Err(Error::ClassViolation(_))
        ));
        let w = Weights::alpha(ScalarFunction::identity()).with_beta(KLFunction::expr("r").unwrap());
        assert!(matches!(
            certify_integral(IntegralKind::IUgas, &s, &w, &quick_plan()),
            Err(Error::ClassViolation(_))
        ));
    }

    #[test]
    fn iugatt_examples() {
        let u = SystemDef::named("scalar_unstable").unwrap();
        let plan = IntegralPlan {
            radii: vec![1.0],
            tau_ladder: vec![0.0, 5.0, 10.0],
            ..quick_plan()
        };
        let ev = certify_integral(IntegralKind::IUgatt, &u, &Weights::alpha(alpha_pd()), &plan).unwrap();
        assert_eq!(ev.status, Status::Supported, "{ev:?}");
        let ev = certify_integral(IntegralKind::IUgatt, &u, &Weights::alpha(ScalarFunction::identity()), &plan).unwrap();
        assert_eq!(ev.status, Status::Refuted);
        // the same α gives a finite bound on every finite window
        let ev = certify_integral(IntegralKind::IRfc, &u, &Weights::alpha(ScalarFunction::identity()), &plan).unwrap();
        assert_eq!(ev.status, Status::Supported);
    }

    #[test]
    fn irep_example() {
        let s = SystemDef::named("scalar_stable").unwrap();
        let plan = IntegralPlan {
            eps: vec![0.1],
            horizons: vec![1.0],
            ..quick_plan()
        };
        let ev = certify_integral(IntegralKind::IRep, &s, &Weights::alpha(ScalarFunction::identity()), &plan).unwrap();
        assert_eq!(ev.status, Status::Supported);
        let t = ev.table.unwrap();
        assert_eq!(t.rows.len(), 1);
        let delta = t.rows[0][2];
        assert!(delta >= 0.1 && delta * (1.0 - (-1.0f64).exp()) <= 0.1 + 1e-9);
    }

    #[test]
    fn iugas_and_iugs_with_beta_at_zero() {
        let s = SystemDef::named("bilinear").unwrap();
        let plan = quick_plan();
        let ev = certify_integral(
            IntegralKind::IUgas,
            &s,
            &Weights::alpha(ScalarFunction::identity()).with_beta(KLFunction::expr("r*exp(-t)").unwrap()),
            &plan,
        )
        .unwrap();
        // d ≡ 1 freezes the state: the integral diverges
        assert_eq!(ev.status, Status::Refuted);

        let st = SystemDef::named("scalar_stable").unwrap();
        let beta = KLFunction::expr("2*r*exp(-t)").unwrap();
        let a = Weights::alpha(ScalarFunction::identity()).with_beta(beta);
        assert!(certify_integral(IntegralKind::IUgas, &st, &a, &plan).unwrap().is_supported());
        let b = Weights::alpha(ScalarFunction::identity())
            .with_psi(ScalarFunction::expr("2*r", FunctionClass::Kinf).unwrap());
        assert!(certify_integral(IntegralKind::IUgs, &st, &b, &plan).unwrap().is_supported());
    }

    #[test]
    fn ultimate_and_iuls() {
        let s = SystemDef::named("scalar_stable").unwrap();
        let w = Weights::alpha(ScalarFunction::identity()).with_psi(ScalarFunction::identity());
        let ev = certify_integral(IntegralKind::UltiUls, &s, &w, &quick_plan()).unwrap();
        assert_eq!(ev.status, Status::Supported);
        assert_eq!(ev.table.unwrap().rows.len(), 6);
        assert!(certify_integral(IntegralKind::IUls, &s, &w, &quick_plan()).unwrap().is_supported());
    }

    #[test]
    fn escape_counts_against_irfc() {
        let sys = SystemDef::ode("blowup", &["x1^2"], crate::system::DisturbanceBox::none(), Default::default()).unwrap();
        let plan = IntegralPlan {
            radii: vec![1.0],
            horizons: vec![2.0],
            ..quick_plan()
        };
        let ev = certify_integral(IntegralKind::IRfc, &sys, &Weights::alpha(ScalarFunction::identity()), &plan).unwrap();
        assert_eq!(ev.status, Status::Refuted);
        assert!(ev.witness.unwrap().message.contains("escape"));
    }
}
