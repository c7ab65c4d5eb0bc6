//! Sampled checks of the classical (norm-based) stability notions.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::comparison::{
    decay_envelope_from_ladder, DecayEnvelope, FunctionClass, KLFunction, ScalarFunction, Tabulated,
};
use crate::error::{Error, Result};
use crate::evidence::{Evidence, Outcome, Sweep, Table, Witness};
use crate::sampling::{
    check_alpha, check_beta, decide, default_delta_grid, eps_ladder, sorted_asc, sorted_desc, states_in_ball,
};
use crate::system::{build_ensemble, norm, time_ladder, DisturbanceSignal, EnsembleSpec, SystemDef};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ClassicalKind {
    #[serde(rename = "ULS")]
    Uls,
    #[serde(rename = "UAS")]
    Uas,
    #[serde(rename = "UGAS")]
    Ugas,
    #[serde(rename = "UGWA")]
    Ugwa,
    #[serde(rename = "UGATT")]
    Ugatt,
    #[serde(rename = "REP")]
    Rep,
    #[serde(rename = "RFC")]
    Rfc,
    #[serde(rename = "UltULS")]
    UltUls,
}

impl ClassicalKind {
    pub const ALL: [ClassicalKind; 8] = [
        ClassicalKind::Uls,
        ClassicalKind::Uas,
        ClassicalKind::Ugas,
        ClassicalKind::Ugwa,
        ClassicalKind::Ugatt,
        ClassicalKind::Rep,
        ClassicalKind::Rfc,
        ClassicalKind::UltUls,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ClassicalKind::Uls => "ULS",
            ClassicalKind::Uas => "UAS",
            ClassicalKind::Ugas => "UGAS",
            ClassicalKind::Ugwa => "UGWA",
            ClassicalKind::Ugatt => "UGATT",
            ClassicalKind::Rep => "REP",
            ClassicalKind::Rfc => "RFC",
            ClassicalKind::UltUls => "UltULS",
        }
    }
}

impl fmt::Display for ClassicalKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ClassicalKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ClassicalKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown classical property `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassicalParams {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<KLFunction>,
    pub radii: Vec<f64>,
    pub eps: Vec<f64>,
    /// h values (REP) and τ values (RFC).
    pub horizons: Vec<f64>,
    pub delta_grid: Vec<f64>,
    /// "for all t ≥ 0" is sampled on the geometric ladder up to this time.
    pub horizon: f64,
    pub ensemble: EnsembleSpec,
    pub tol: f64,
}

impl Default for ClassicalParams {
    fn default() -> Self {
        ClassicalParams {
            beta: None,
            radii: vec![0.25, 0.5, 1.0, 2.0, 4.0],
            eps: eps_ladder(1.0, 6),
            horizons: vec![0.5, 1.0, 2.0, 5.0],
            delta_grid: default_delta_grid(),
            horizon: 20.0,
            ensemble: EnsembleSpec::default(),
            tol: 1e-8,
        }
    }
}

impl ClassicalParams {
    fn validate(&self) -> Result<()> {
        let bad = |v: &[f64]| v.is_empty() || v.iter().any(|x| !x.is_finite() || *x < 0.0);
        if bad(&self.radii) || bad(&self.eps) || bad(&self.horizons) || bad(&self.delta_grid) {
            return Err(Error::InvalidArgument(
                "grids must be nonempty, finite and nonnegative".into(),
            ));
        }
        if self.eps.iter().any(|e| *e <= 0.0) || self.horizons.iter().any(|h| *h <= 0.0) {
            return Err(Error::InvalidArgument("ε and horizon values must be positive".into()));
        }
        if !(self.horizon > 0.0) || !(self.tol >= 0.0) {
            return Err(Error::InvalidArgument("horizon must be positive and tol nonnegative".into()));
        }
        Ok(())
    }

    fn ladder(&self) -> Vec<f64> {
        time_ladder(self.horizon)
    }
}

/// ‖φ(t, x, d)‖ sampled on the dense output grid merged with extra times.
struct Path {
    ts: Vec<f64>,
    ns: Vec<f64>,
}

impl Path {
    /// sup of the norm over grid points with `a ≤ t ≤ b`.
    fn sup_on(&self, a: f64, b: f64) -> (f64, f64) {
        let mut best = (a, 0.0);
        for (t, n) in self.ts.iter().zip(&self.ns) {
            if *t >= a && *t <= b && *n >= best.1 {
                best = (*t, *n);
            }
        }
        best
    }

    fn value_at(&self, t: f64) -> f64 {
        let i = self.ts.partition_point(|s| *s < t).min(self.ts.len() - 1);
        self.ns[i]
    }
}

type Sample<'a> = (&'a Vec<f64>, &'a DisturbanceSignal);

fn pairs<'a>(xs: &'a [Vec<f64>], ds: &'a [DisturbanceSignal]) -> Vec<Sample<'a>> {
    xs.iter().flat_map(|x| ds.iter().map(move |d| (x, d))).collect()
}

fn escape_witness(e: &Error, x: &[f64], d: &DisturbanceSignal) -> Witness {
    let mut w = Witness::new(format!("finite escape: {e}")).state(x).disturbance(d);
    if let Error::FiniteEscape { t_lo, t_hi, .. } = e {
        w = w.time(*t_hi).value("t_lo", *t_lo).value("t_hi", *t_hi);
    }
    w
}

fn paths(
    sys: &SystemDef,
    samples: &[Sample<'_>],
    horizon: f64,
    extra: &[f64],
) -> Result<Vec<std::result::Result<Path, Witness>>> {
    samples
        .par_iter()
        .map(|&(x, d)| match sys.trajectory(x, d, horizon) {
            Ok(tr) => {
                let mut ts = tr.grid();
                ts.extend(extra.iter().filter(|t| **t <= horizon));
                ts.sort_by(f64::total_cmp);
                ts.dedup();
                let ns = ts.iter().map(|&t| tr.norm_at(t)).collect();
                Ok(Ok(Path { ts, ns }))
            }
            Err(e @ Error::FiniteEscape { .. }) => Ok(Err(escape_witness(&e, x, d))),
            Err(e) => Err(e),
        })
        .collect()
}

fn states_for_radii(sys: &SystemDef, radii: &[f64], seed: u64) -> Vec<Vec<f64>> {
    let mut xs = vec![vec![0.0; sys.dimension()]];
    for &r in radii {
        xs.extend(states_in_ball(sys, r, seed).into_iter().skip(1));
    }
    xs
}

/// Column sups over samples of a per-path statistic, with the first
/// attaining sample and time, or the first escape.
struct Sups {
    val: Vec<f64>,
    at: Vec<(usize, f64)>,
    escaped: Option<Witness>,
}

fn column_sups(
    res: &[std::result::Result<Path, Witness>],
    cols: usize,
    stat: impl Fn(&Path, usize) -> (f64, f64),
) -> Sups {
    let mut s = Sups {
        val: vec![0.0; cols],
        at: vec![(0, 0.0); cols],
        escaped: None,
    };
    for (i, r) in res.iter().enumerate() {
        match r {
            Ok(p) => {
                for k in 0..cols {
                    let (t, v) = stat(p, k);
                    if v > s.val[k] || v.is_nan() {
                        s.val[k] = if v.is_nan() { f64::INFINITY } else { v };
                        s.at[k] = (i, t);
                    }
                }
            }
            Err(w) => {
                if s.escaped.is_none() {
                    s.escaped = Some(w.clone());
                }
            }
        }
    }
    s
}

fn witness_at(samples: &[Sample<'_>], at: (usize, f64), msg: &str) -> Witness {
    let (x, d) = samples[at.0];
    Witness::new(msg).state(x).disturbance(d).time(at.1)
}

/// Certify one classical property on the sampled (x, d, t) lattice.
pub fn certify_classical(kind: ClassicalKind, sys: &SystemDef, params: &ClassicalParams) -> Result<Evidence> {
    params.validate()?;
    if matches!(kind, ClassicalKind::Ugas | ClassicalKind::Uas) {
        let beta = params
            .beta
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument(format!("{kind} needs β")))?;
        check_beta(beta)?;
    }
    let ensemble = build_ensemble(sys.disturbance(), &params.ensemble);
    let mut ev = match kind {
        ClassicalKind::Ugas => ugas(sys, params, &ensemble, &sorted_asc(&params.radii), "UGAS")?,
        ClassicalKind::Uas => uas(sys, params, &ensemble)?,
        ClassicalKind::Uls => uls(sys, params, &ensemble)?,
        ClassicalKind::Rep => rep(sys, params, &ensemble)?,
        ClassicalKind::Rfc => rfc(sys, params, &ensemble)?,
        ClassicalKind::Ugwa => ugwa(sys, params, &ensemble)?,
        ClassicalKind::Ugatt => ugatt(sys, params, &ensemble)?,
        ClassicalKind::UltUls => ult_uls(sys, params, &ensemble)?,
    };
    ev.seed = Some(params.ensemble.seed);
    let mut ev = ev
        .with_param("ensemble_size", ensemble.len())
        .with_param("horizon", params.horizon)
        .with_param("tol", params.tol);
    if let Some(b) = &params.beta {
        ev = ev.with_param("beta", b);
    }
    Ok(ev)
}

fn ugas(
    sys: &SystemDef,
    params: &ClassicalParams,
    ensemble: &[DisturbanceSignal],
    radii: &[f64],
    name: &str,
) -> Result<Evidence> {
    let beta = params.beta.as_ref().expect("checked by caller");
    let ladder = params.ladder();
    let xs = states_for_radii(sys, radii, params.ensemble.seed);
    let samples = pairs(&xs, ensemble);
    let res = paths(sys, &samples, params.horizon, &ladder)?;
    let mut sweep = Sweep::default();
    for (r, &(x, d)) in res.iter().zip(&samples) {
        match r {
            Ok(p) => {
                let nx = norm(x);
                for &t in &ladder {
                    let n = p.value_at(t);
                    sweep.push(Outcome::compare(n, beta.eval(nx, t), params.tol, || {
                        Witness::new("‖φ(t, x, d)‖ exceeds β(‖x‖, t)").state(x).disturbance(d).time(t)
                    }));
                }
            }
            Err(w) => sweep.push(Outcome::Unknown { witness: w.clone() }),
        }
    }
    Ok(Evidence::from_sweep(name, sweep)
        .with_param("radii", radii)
        .with_param("time_ladder", &ladder))
}

fn uas(sys: &SystemDef, params: &ClassicalParams, ensemble: &[DisturbanceSignal]) -> Result<Evidence> {
    let radii = sorted_asc(&params.radii);
    let mut first_failure = None;
    let mut certified: Option<(f64, Evidence)> = None;
    for &r in &radii {
        let ev = ugas(sys, params, ensemble, &[r], "UAS")?;
        if ev.is_supported() {
            certified = Some((r, ev));
        } else {
            first_failure = Some(ev);
            break;
        }
    }
    Ok(match certified {
        Some((r, mut ev)) => {
            ev.parameters.remove("radii");
            // recheck on all radii up to r so samples and margin cover the whole ball
            let all: Vec<f64> = radii.iter().copied().filter(|x| *x <= r).collect();
            let full = ugas(sys, params, ensemble, &all, "UAS")?;
            ev.margin = full.margin;
            ev.samples = full.samples;
            ev.with_param("radius", r).with_param("radii", &all)
        }
        None => first_failure.expect("nonempty radii").with_note("no sampled radius passes the β bound"),
    })
}

/// Descending δ search; `cols` statistics per path are reduced to column sups
/// and `assign` records the targets met by δ. Returns the sups and samples of
/// the smallest δ tried when some target stays unmet.
#[allow(clippy::type_complexity)]
fn delta_search(
    sys: &SystemDef,
    params: &ClassicalParams,
    ensemble: &[DisturbanceSignal],
    horizon: f64,
    extra: &[f64],
    cols: usize,
    stat: &(dyn Fn(&Path, usize) -> (f64, f64) + Sync),
    mut assign: impl FnMut(&Sups, f64) -> bool,
) -> Result<Option<(Sups, Vec<Vec<f64>>, f64)>> {
    let mut deltas = params.delta_grid.clone();
    deltas.extend(&params.eps);
    let mut last = None;
    for delta in sorted_desc(&deltas).into_iter().filter(|d| *d > 0.0) {
        let xs = states_in_ball(sys, delta, params.ensemble.seed);
        let samples = pairs(&xs, ensemble);
        let res = paths(sys, &samples, horizon, extra)?;
        let s = column_sups(&res, cols, stat);
        if s.escaped.is_none() && assign(&s, delta) {
            return Ok(None);
        }
        last = Some((s, xs, delta));
    }
    Ok(last)
}

#[allow(clippy::too_many_arguments)]
fn unresolved(
    sweep: &mut Sweep,
    last: &Option<(Sups, Vec<Vec<f64>>, f64)>,
    ensemble: &[DisturbanceSignal],
    col: usize,
    e: f64,
    tol: f64,
    msg: &str,
) {
    match last {
        Some((s, xs, delta)) => {
            if let Some(w) = &s.escaped {
                sweep.push(Outcome::Unknown { witness: w.clone() });
                return;
            }
            let samples = pairs(xs, ensemble);
            sweep.push(decide(s.val[col], s.val[col], e, tol, || {
                witness_at(&samples, s.at[col], msg).value("delta", *delta).value("eps", e)
            }));
        }
        None => sweep.push(Outcome::Unknown {
            witness: Witness::new("δ grid is empty"),
        }),
    }
}

fn uls(sys: &SystemDef, params: &ClassicalParams, ensemble: &[DisturbanceSignal]) -> Result<Evidence> {
    let eps = sorted_desc(&params.eps);
    let ladder = params.ladder();
    let mut found: Vec<Option<(f64, f64)>> = vec![None; eps.len()];
    let h = params.horizon;
    let last = delta_search(sys, params, ensemble, h, &ladder, 1, &|p, _| p.sup_on(0.0, h), |s, delta| {
        for (i, &e) in eps.iter().enumerate() {
            if found[i].is_none() && s.val[0] <= e + params.tol {
                found[i] = Some((delta, s.val[0]));
            }
        }
        found.iter().all(Option::is_some)
    })?;
    let mut table = Table::new(&["eps", "delta", "sup_norm"]);
    let mut sweep = Sweep::default();
    for (i, &e) in eps.iter().enumerate() {
        match found[i] {
            Some((delta, sup)) => {
                table.push(vec![e, delta, sup]);
                sweep.push(Outcome::Pass { margin: e - sup });
            }
            None => unresolved(&mut sweep, &last, ensemble, 0, e, params.tol, "no δ on the grid keeps ‖φ‖ below ε"),
        }
    }
    let mut ev = Evidence::from_sweep("ULS", sweep).with_param("eps", &eps);
    ev.table = Some(table);
    Ok(ev)
}

fn rep(sys: &SystemDef, params: &ClassicalParams, ensemble: &[DisturbanceSignal]) -> Result<Evidence> {
    let hs = sorted_asc(&params.horizons);
    let eps = sorted_desc(&params.eps);
    let end = hs[hs.len() - 1];
    let mut sweep = Sweep::default();

    // equilibrium: φ(t, 0, d) = 0 on the horizon
    let zero = vec![vec![0.0; sys.dimension()]];
    let zs = pairs(&zero, ensemble);
    let zres = paths(sys, &zs, end.max(params.horizon), &params.ladder())?;
    let z = column_sups(&zres, 1, |p, _| p.sup_on(0.0, f64::INFINITY));
    match z.escaped {
        Some(w) => sweep.push(Outcome::Unknown { witness: w }),
        None => sweep.push(Outcome::compare(z.val[0], 0.0, params.tol, || {
            witness_at(&zs, z.at[0], "0 is not an equilibrium")
        })),
    }

    let mut found: Vec<Vec<Option<(f64, f64)>>> = vec![vec![None; hs.len()]; eps.len()];
    let stat = |p: &Path, k: usize| p.sup_on(0.0, hs[k]);
    let last = delta_search(sys, params, ensemble, end, &hs, hs.len(), &stat, |s, delta| {
        for (i, &e) in eps.iter().enumerate() {
            for k in 0..hs.len() {
                if found[i][k].is_none() && s.val[k] <= e + params.tol {
                    found[i][k] = Some((delta, s.val[k]));
                }
            }
        }
        found.iter().flatten().all(Option::is_some)
    })?;
    let mut table = Table::new(&["eps", "h", "delta", "sup_norm"]);
    for (i, &e) in eps.iter().enumerate() {
        for (k, &h) in hs.iter().enumerate() {
            match found[i][k] {
                Some((delta, sup)) => {
                    table.push(vec![e, h, delta, sup]);
                    sweep.push(Outcome::Pass { margin: e - sup });
                }
                None => unresolved(&mut sweep, &last, ensemble, k, e, params.tol, "no δ on the grid keeps ‖φ‖ below ε on [0, h]"),
            }
        }
    }
    let mut ev = Evidence::from_sweep("REP", sweep)
        .with_param("eps", &eps)
        .with_param("horizons", &hs);
    ev.table = Some(table);
    Ok(ev)
}

fn rfc(sys: &SystemDef, params: &ClassicalParams, ensemble: &[DisturbanceSignal]) -> Result<Evidence> {
    let cs = sorted_asc(&params.radii);
    let taus = sorted_asc(&params.horizons);
    let end = taus[taus.len() - 1];
    let mut table = Table::new(&["C", "tau", "bound"]);
    let mut sweep = Sweep::default();
    for &c in &cs {
        let xs = states_in_ball(sys, c, params.ensemble.seed);
        let samples = pairs(&xs, ensemble);
        let res = paths(sys, &samples, end, &taus)?;
        let s = column_sups(&res, taus.len(), |p, k| p.sup_on(0.0, taus[k]));
        if let Some(w) = s.escaped {
            sweep.push(Outcome::Fail {
                margin: f64::NEG_INFINITY,
                witness: w.value("C", c),
            });
            continue;
        }
        for (k, &t) in taus.iter().enumerate() {
            if s.val[k].is_finite() {
                table.push(vec![c, t, s.val[k]]);
                sweep.push(Outcome::Pass { margin: f64::INFINITY });
            } else {
                sweep.push(Outcome::Unknown {
                    witness: witness_at(&samples, s.at[k], "reachable norm is not finite").value("C", c),
                });
            }
        }
    }
    let mut ev = Evidence::from_sweep("RFC", sweep)
        .with_param("radii", &cs)
        .with_param("horizons", &taus);
    ev.margin = None;
    ev.table = Some(table);
    Ok(ev)
}

/// First time on the dense grid with ‖φ‖ ≤ ε.
fn hitting_time(p: &Path, e: f64) -> Option<f64> {
    p.ts.iter().zip(&p.ns).find(|(_, n)| **n <= e).map(|(t, _)| *t)
}

fn ugwa(sys: &SystemDef, params: &ClassicalParams, ensemble: &[DisturbanceSignal]) -> Result<Evidence> {
    let radii = sorted_asc(&params.radii);
    let eps = sorted_desc(&params.eps);
    let mut table = Table::new(&["r", "eps", "tau"]);
    let mut sweep = Sweep::default();
    for &r in &radii {
        let xs = states_in_ball(sys, r, params.ensemble.seed);
        let samples = pairs(&xs, ensemble);
        let res = paths(sys, &samples, params.horizon, &[])?;
        for &e in &eps {
            let mut tau: f64 = 0.0;
            let mut miss = None;
            let mut undecided = None;
            for (i, p) in res.iter().enumerate() {
                match p {
                    Ok(p) => match hitting_time(p, e) {
                        Some(t) => tau = tau.max(t),
                        None => {
                            if miss.is_none() {
                                let min = p.ns.iter().copied().fold(f64::INFINITY, f64::min);
                                miss = Some(
                                    witness_at(&samples, (i, params.horizon), "trajectory never reaches the ε-ball")
                                        .value("r", r)
                                        .value("eps", e)
                                        .value("min_norm", min),
                                );
                            }
                        }
                    },
                    Err(w) => {
                        if undecided.is_none() {
                            undecided = Some(w.clone());
                        }
                    }
                }
            }
            if let Some(w) = miss {
                let m = -w.values["min_norm"] + e;
                sweep.push(Outcome::Fail { margin: m, witness: w });
            } else if let Some(w) = undecided {
                sweep.push(Outcome::Unknown { witness: w });
            } else {
                table.push(vec![r, e, tau]);
                sweep.push(Outcome::Pass {
                    margin: params.horizon - tau,
                });
            }
        }
    }
    let mut ev = Evidence::from_sweep("UGWA", sweep)
        .with_param("radii", &radii)
        .with_param("eps", &eps)
        .with_note("margin is the unused part of the horizon after the worst hitting time");
    ev.table = Some(table);
    Ok(ev)
}

fn ugatt(sys: &SystemDef, params: &ClassicalParams, ensemble: &[DisturbanceSignal]) -> Result<Evidence> {
    let radii = sorted_asc(&params.radii);
    let eps = sorted_desc(&params.eps);
    let ladder = params.ladder();
    let h = params.horizon;
    let last = ladder.len() - 1;
    let mut table = Table::new(&["r", "eps", "tau", "tail_sup"]);
    let mut sweep = Sweep::default();
    for &r in &radii {
        let xs = states_in_ball(sys, r, params.ensemble.seed);
        let samples = pairs(&xs, ensemble);
        let res = paths(sys, &samples, h, &ladder)?;
        let s = column_sups(&res, ladder.len(), |p, j| p.sup_on(ladder[j], h));
        if let Some(w) = s.escaped {
            sweep.push(Outcome::Unknown { witness: w });
            continue;
        }
        for &e in &eps {
            match (0..ladder.len()).find(|&j| s.val[j] <= e + params.tol) {
                Some(j) => {
                    table.push(vec![r, e, ladder[j], s.val[j]]);
                    sweep.push(Outcome::Pass { margin: e - s.val[j] });
                }
                None => sweep.push(Outcome::compare(s.val[last], e, params.tol, || {
                    witness_at(&samples, s.at[last], "no τ on the ladder keeps the tail of ‖φ‖ below ε")
                        .value("r", r)
                        .value("eps", e)
                })),
            }
        }
    }
    let mut ev = Evidence::from_sweep("UGATT", sweep)
        .with_param("radii", &radii)
        .with_param("eps", &eps)
        .with_param("time_ladder", &ladder);
    ev.table = Some(table);
    Ok(ev)
}

fn ult_uls(sys: &SystemDef, params: &ClassicalParams, ensemble: &[DisturbanceSignal]) -> Result<Evidence> {
    let eps = sorted_desc(&params.eps);
    let ts: Vec<f64> = params.ladder().into_iter().filter(|t| *t > 0.0).collect();
    let h = params.horizon;
    let mut found: Vec<Option<(f64, f64, f64)>> = vec![None; eps.len()];
    let stat = |p: &Path, j: usize| p.sup_on(ts[j], h);
    let last = delta_search(sys, params, ensemble, h, &ts, ts.len(), &stat, |s, delta| {
        for (i, &e) in eps.iter().enumerate() {
            if found[i].is_none() {
                if let Some(j) = (0..ts.len()).find(|&j| s.val[j] <= e + params.tol) {
                    found[i] = Some((ts[j], delta, s.val[j]));
                }
            }
        }
        found.iter().all(Option::is_some)
    })?;
    let mut table = Table::new(&["eps", "T", "delta", "tail_sup"]);
    let mut sweep = Sweep::default();
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
                ts.len() - 1,
                e,
                params.tol,
                "no (T, δ) on the grids keeps ‖φ(t)‖ below ε for t ≥ T",
            ),
        }
    }
    let mut ev = Evidence::from_sweep("UltULS", sweep)
        .with_param("eps", &eps)
        .with_param("T_ladder", &ts);
    ev.table = Some(table);
    Ok(ev)
}

/// Tail-norm form of attractivity: sup over the ensemble and the ball of
/// α(sup_{s ≥ t} ‖φ(s, x, d)‖) along the t ladder, with the sup taken before α.
///
/// Supported when, for every radius, the tail sup shrinks along the ladder and
/// α of it ends below the smallest ε of `params.eps`. A tail sup that does not
/// shrink refutes, however small α makes it look.
pub fn ugatt_tailnorm_check(
    sys: &SystemDef,
    alpha: &ScalarFunction,
    radii: &[f64],
    t_ladder: &[f64],
    ensemble: &[DisturbanceSignal],
    params: &ClassicalParams,
) -> Result<Evidence> {
    check_alpha(alpha)?;
    if radii.is_empty() || t_ladder.is_empty() {
        return Err(Error::InvalidArgument("radii and t ladder must be nonempty".into()));
    }
    let ladder = sorted_asc(t_ladder);
    let h = params.horizon.max(ladder[ladder.len() - 1]);
    let last = ladder.len() - 1;
    let eps_min = params.eps.iter().copied().fold(f64::INFINITY, f64::min);
    let mut table = Table::new(&["r", "t", "tail_sup", "alpha_tail_sup"]);
    let mut sweep = Sweep::default();
    for &r in &sorted_asc(radii) {
        let xs = states_in_ball(sys, r, params.ensemble.seed);
        let samples = pairs(&xs, ensemble);
        let res = paths(sys, &samples, h, &ladder)?;
        let s = column_sups(&res, ladder.len(), |p, j| p.sup_on(ladder[j], h));
        if let Some(w) = s.escaped {
            sweep.push(Outcome::Fail {
                margin: f64::NEG_INFINITY,
                witness: w.value("r", r),
            });
            continue;
        }
        for (j, &t) in ladder.iter().enumerate() {
            table.push(vec![r, t, s.val[j], alpha.eval(s.val[j])]);
        }
        let (first, end) = (s.val[0], s.val[last]);
        if first > 0.0 && end >= first - params.tol {
            sweep.push(Outcome::Fail {
                margin: first - end,
                witness: witness_at(&samples, s.at[last], "sup of ‖φ‖ over the tail does not shrink")
                    .value("r", r)
                    .value("tail_sup", end)
                    .value("alpha_tail_sup", alpha.eval(end)),
            });
            continue;
        }
        sweep.push(Outcome::compare(alpha.eval(end), eps_min, params.tol, || {
            witness_at(&samples, s.at[last], "α of the tail sup stays above the smallest ε")
                .value("r", r)
                .value("tail_sup", end)
        }));
    }
    let mut ev = Evidence::from_sweep("UGATT-tailnorm", sweep)
        .with_param("alpha", alpha)
        .with_param("radii", radii)
        .with_param("t_ladder", &ladder)
        .with_param("ensemble_size", ensemble.len());
    ev.seed = Some(params.ensemble.seed);
    ev.table = Some(table);
    Ok(ev)
}

/// KL envelope of the sampled trajectories: ψ_gs(δ) is the largest sampled
/// norm from the δ-ball, and τ(ε, δ) the first grid time after which every
/// sampled trajectory from the δ-ball stays at or below ε.
pub fn decay_envelope(sys: &SystemDef, params: &ClassicalParams, n_max: usize) -> Result<DecayEnvelope> {
    params.validate()?;
    let deltas: Vec<f64> = sorted_asc(&params.radii).into_iter().filter(|r| *r > 0.0).collect();
    if deltas.is_empty() {
        return Err(Error::InvalidArgument("decay envelope needs a positive radius".into()));
    }
    let ensemble = build_ensemble(sys.disturbance(), &params.ensemble);
    let mut per_delta: Vec<Vec<Path>> = Vec::with_capacity(deltas.len());
    for &delta in &deltas {
        let xs = states_in_ball(sys, delta, params.ensemble.seed);
        let samples = pairs(&xs, &ensemble);
        let mut ps = Vec::with_capacity(samples.len());
        for r in paths(sys, &samples, params.horizon, &[])? {
            match r {
                Ok(p) => ps.push(p),
                Err(w) => {
                    return Err(Error::Precondition {
                        message: format!("decay envelope: {}", w.message),
                        witness: w.state.unwrap_or_default(),
                    })
                }
            }
        }
        per_delta.push(ps);
    }
    let sup = |ps: &[Path]| ps.iter().flat_map(|p| p.ns.iter().copied()).fold(0.0, f64::max);
    let mut abscissae = vec![0.0];
    let mut ords = vec![0.0];
    for (d, ps) in deltas.iter().zip(&per_delta) {
        abscissae.push(*d);
        ords.push(sup(ps).max(*ords.last().expect("nonempty")));
    }
    let n = abscissae.len();
    let slope = (ords[n - 1] - ords[n - 2]) / (abscissae[n - 1] - abscissae[n - 2]);
    let psi_gs = ScalarFunction::tabulated(Tabulated::new(abscissae, ords, slope.max(1.0))?, FunctionClass::Kinf);
    let tau_of = |eps: f64, delta: f64| -> Option<f64> {
        let k = deltas.iter().position(|d| *d == delta)?;
        let mut worst: f64 = 0.0;
        for p in &per_delta[k] {
            match p.ns.iter().rposition(|n| *n > eps) {
                None => {}
                Some(i) if i + 1 < p.ts.len() => worst = worst.max(p.ts[i + 1]),
                Some(_) => return None,
            }
        }
        Some(worst)
    };
    decay_envelope_from_ladder(&psi_gs, &tau_of, &deltas, n_max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::comparison::FunctionClass;
    use crate::evidence::Status;
    use approx::assert_relative_eq;

    fn quick() -> ClassicalParams {
        ClassicalParams {
            ensemble: EnsembleSpec::small(0),
            ..Default::default()
        }
    }

    #[test]
    fn kinds_parse() {
        for k in ClassicalKind::ALL {
            assert_eq!(k.name().parse::<ClassicalKind>().unwrap(), k);
        }
        assert!("iUGAS".parse::<ClassicalKind>().is_err());
    }

    #[test]
    fn ugas_equality_case() {
        let s = SystemDef::named("scalar_stable").unwrap();
        let p = ClassicalParams {
            beta: Some(KLFunction::expr("r*exp(-t)").unwrap()),
            ..quick()
        };
        let ev = certify_classical(ClassicalKind::Ugas, &s, &p).unwrap();
        assert_eq!(ev.status, Status::Supported);
        assert!(ev.margin.unwrap().abs() < 1e-12);
        assert!(certify_classical(ClassicalKind::Ugas, &s, &quick()).is_err());
    }

    #[test]
    fn ugwa_refuted_for_growth() {
        let u = SystemDef::named("scalar_unstable").unwrap();
        let p = ClassicalParams {
            radii: vec![1.0],
            eps: vec![0.5],
            ..quick()
        };
        let ev = certify_classical(ClassicalKind::Ugwa, &u, &p).unwrap();
        assert_eq!(ev.status, Status::Refuted);
        let w = ev.witness.unwrap();
        assert_eq!(w.values["min_norm"], 1.0);
        let s = SystemDef::named("scalar_stable").unwrap();
        let ev = certify_classical(ClassicalKind::Ugwa, &s, &p).unwrap();
        assert!(ev.is_supported());
        let tau = ev.table.unwrap().rows[0][2];
        assert!((tau - 2f64.ln()).abs() < 0.011);
    }

    #[test]
    fn rep_bilinear() {
        let b = SystemDef::named("bilinear").unwrap();
        let p = ClassicalParams {
            eps: vec![0.1],
            horizons: vec![1.0],
            ..quick()
        };
        let ev = certify_classical(ClassicalKind::Rep, &b, &p).unwrap();
        assert_eq!(ev.status, Status::Supported);
        let row = &ev.table.unwrap().rows[0];
        assert_eq!(row[2], 0.1);
    }

    #[test]
    fn rfc_bound() {
        let u = SystemDef::named("scalar_unstable").unwrap();
        let p = ClassicalParams {
            radii: vec![1.0],
            horizons: vec![2.0],
            ..quick()
        };
        let ev = certify_classical(ClassicalKind::Rfc, &u, &p).unwrap();
        assert_eq!(ev.status, Status::Supported);
        assert_relative_eq!(ev.table.unwrap().rows[0][2], 2f64.exp(), epsilon = 1e-9);

        let blow = SystemDef::ode("blowup", &["x1^2"], crate::system::DisturbanceBox::none(), Default::default()).unwrap();
        let ev = certify_classical(ClassicalKind::Rfc, &blow, &p).unwrap();
        assert_eq!(ev.status, Status::Refuted);
    }

    #[test]
    fn definitional_chain() {
        let s = SystemDef::named("bilinear").unwrap();
        // d ≡ 1 freezes the state, nothing attracts
        assert!(certify_classical(ClassicalKind::Ugatt, &s, &quick()).unwrap().is_refuted());
        assert!(certify_classical(ClassicalKind::Ugwa, &s, &quick()).unwrap().is_refuted());
        assert!(certify_classical(ClassicalKind::Uls, &s, &quick()).unwrap().is_supported());

        let st = SystemDef::named("scalar_stable").unwrap();
        for k in [ClassicalKind::Ugatt, ClassicalKind::Ugwa, ClassicalKind::UltUls, ClassicalKind::Uls] {
            assert!(certify_classical(k, &st, &quick()).unwrap().is_supported(), "{k}");
        }
    }

    #[test]
    fn uas_reports_radius() {
        let s = SystemDef::named("scalar_stable").unwrap();
        let p = ClassicalParams {
            beta: Some(KLFunction::expr("r*exp(-t)").unwrap()),
            ..quick()
        };
        let ev = certify_classical(ClassicalKind::Uas, &s, &p).unwrap();
        assert!(ev.is_supported());
        assert_eq!(ev.parameters["radius"], 4.0);
    }

    #[test]
    fn tailnorm() {
        let s = SystemDef::named("scalar_stable").unwrap();
        let e = vec![DisturbanceSignal::empty()];
        let ladder = [0.0, 1.0, 2.0, 4.0, 8.0, 16.0];
        let ev = ugatt_tailnorm_check(&s, &ScalarFunction::identity(), &[1.0], &ladder, &e, &quick()).unwrap();
        assert_eq!(ev.status, Status::Supported);
        let ev = ugatt_tailnorm_check(&s, &ScalarFunction::identity(), &[0.0], &ladder, &e, &quick()).unwrap();
        assert_eq!(ev.status, Status::Supported);

        let u = SystemDef::named("scalar_unstable").unwrap();
        let a = ScalarFunction::expr("r/(1+r^2)", FunctionClass::PositiveDefinite).unwrap();
        let ev = ugatt_tailnorm_check(&u, &a, &[1.0], &ladder, &e, &quick()).unwrap();
        assert_eq!(ev.status, Status::Refuted);
        let w = ev.witness.unwrap();
        assert!(w.values["tail_sup"] > 1e8);
        assert!(w.values["alpha_tail_sup"] < 1e-8);
        assert!(certify_classical(ClassicalKind::Ugatt, &u, &quick()).unwrap().is_refuted());
    }

    #[test]
    fn envelope_majorizes_samples() {
        let s = SystemDef::named("scalar_stable").unwrap();
        let env = decay_envelope(&s, &quick(), 8).unwrap();
        for r in [0.25, 0.5, 1.0, 2.0, 4.0] {
            for t in [0.0, 0.5, 1.0, 3.0, 10.0] {
                assert!(env.beta.eval(r, t) >= r * (-t).exp(), "r={r} t={t}");
            }
        }
        let grid: Vec<f64> = (0..=12).map(|k| 0.25 * 2f64.powi(k - 4)).collect();
        let ts: Vec<f64> = (0..=20).map(|k| 0.5 * k as f64).collect();
        assert!(!crate::comparison::verify_kl(&env.beta, &grid, &ts, 1e-9).unwrap().is_refuted());
        let u = SystemDef::named("scalar_unstable").unwrap();
        assert!(decay_envelope(&u, &quick(), 8).is_err() || decay_envelope(&u, &quick(), 8).unwrap().ladders.iter().all(|l| l.truncated_at.is_some()));
    }
}
