//! Systems Σ = (X, D, φ): finite-dimensional state, box-valued
//! piecewise-constant disturbances, and a transition map that is either
//! closed form or integrated from a parsed right-hand side.

mod axioms;
mod catalogue;
mod config;
mod ensemble;
pub mod integrator;
mod signal;

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expr::{parse_rhs, Expr};

pub use axioms::{check_axioms, equilibrium_check, AxiomPlan};
pub(crate) use axioms::time_ladder;
pub use catalogue::Catalogue;
pub use config::{CatalogueConfig, DisturbanceConfig, SystemConfig};
pub use ensemble::{ball_samples, build_ensemble, sphere_directions, EnsembleSpec};
pub use integrator::{DenseStep, IntegratorSettings, ESCAPE_GUARD};
pub use signal::{DisturbanceBox, DisturbanceSignal};

/// Euclidean norm.
pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[derive(Debug, Clone)]
pub struct OdeRhs {
    rhs: Arc<Vec<Expr>>,
    settings: IntegratorSettings,
}

impl OdeRhs {
    pub fn expressions(&self) -> &[Expr] {
        &self.rhs
    }

    pub fn settings(&self) -> &IntegratorSettings {
        &self.settings
    }

    fn field(&self, t: f64, x: &[f64], d: &[f64], out: &mut [f64], slots: &mut Vec<f64>) {
        slots.clear();
        slots.push(t);
        slots.extend_from_slice(x);
        slots.extend_from_slice(d);
        for (o, e) in out.iter_mut().zip(self.rhs.iter()) {
            *o = e.eval(slots);
        }
    }
}

#[derive(Debug, Clone)]
pub enum Evaluator {
    Analytic(Catalogue),
    Ode(OdeRhs),
}

#[derive(Debug, Clone)]
pub struct SystemDef {
    name: String,
    dimension: usize,
    disturbance: DisturbanceBox,
    evaluator: Evaluator,
}

impl SystemDef {
    pub fn catalogue(entry: Catalogue) -> Self {
        SystemDef {
            name: entry.name().to_string(),
            dimension: entry.dimension(),
            disturbance: entry.default_box(),
            evaluator: Evaluator::Analytic(entry),
        }
    }

    /// Catalogue entry by name with default parameters.
    pub fn named(name: &str) -> Result<Self> {
        Ok(SystemDef::catalogue(Catalogue::from_name(name, &Default::default())?))
    }

    pub fn ode(
        name: &str,
        rhs: &[&str],
        disturbance: DisturbanceBox,
        settings: IntegratorSettings,
    ) -> Result<Self> {
        let n = rhs.len();
        if n == 0 {
            return Err(Error::Config("rhs needs at least one component".into()));
        }
        let exprs = rhs
            .iter()
            .map(|s| parse_rhs(s, n, disturbance.dim()))
            .collect::<Result<Vec<_>>>()?;
        Ok(SystemDef {
            name: name.to_string(),
            dimension: n,
            disturbance,
            evaluator: Evaluator::Ode(OdeRhs {
                rhs: Arc::new(exprs),
                settings,
            }),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn disturbance(&self) -> &DisturbanceBox {
        &self.disturbance
    }

    pub fn evaluator(&self) -> &Evaluator {
        &self.evaluator
    }

    pub fn is_analytic(&self) -> bool {
        matches!(self.evaluator, Evaluator::Analytic(_))
    }

    pub fn is_norm_monotone(&self) -> bool {
        match &self.evaluator {
            Evaluator::Analytic(c) => c.is_norm_monotone(),
            Evaluator::Ode(_) => false,
        }
    }

    pub fn with_settings(mut self, settings: IntegratorSettings) -> Self {
        if let Evaluator::Ode(o) = &mut self.evaluator {
            o.settings = settings;
        }
        self
    }

    fn validate(&self, t: f64, x: &[f64], d: &DisturbanceSignal) -> Result<()> {
        if x.len() != self.dimension {
            return Err(Error::InvalidArgument(format!(
                "state has dimension {}, system `{}` has {}",
                x.len(),
                self.name,
                self.dimension
            )));
        }
        if d.dim() != self.disturbance.dim() {
            return Err(Error::InvalidArgument(format!(
                "disturbance has dimension {}, system `{}` expects {}",
                d.dim(),
                self.name,
                self.disturbance.dim()
            )));
        }
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::InvalidArgument(format!("time must be finite and ≥ 0, got {t}")));
        }
        Ok(())
    }

    /// φ(t, x, d).
    pub fn flow(&self, t: f64, x: &[f64], d: &DisturbanceSignal) -> Result<Vec<f64>> {
        self.validate(t, x, d)?;
        if t == 0.0 {
            return Ok(x.to_vec());
        }
        match &self.evaluator {
            Evaluator::Analytic(c) => Ok(c.flow(t, x, d)),
            Evaluator::Ode(o) => Ok(integrate_pieces(o, t, x, d, false)?.0),
        }
    }

    /// Trajectory on `[0, horizon]`, computed once and sampled afterwards.
    pub fn trajectory(&self, x: &[f64], d: &DisturbanceSignal, horizon: f64) -> Result<Trajectory<'_>> {
        self.validate(horizon, x, d)?;
        let (dense, error) = match &self.evaluator {
            Evaluator::Analytic(_) => (None, 0.0),
            Evaluator::Ode(o) => {
                let (_, steps, err) = integrate_pieces(o, horizon, x, d, true)?;
                (Some(steps), err)
            }
        };
        Ok(Trajectory {
            sys: self,
            x0: x.to_vec(),
            d: d.clone(),
            horizon,
            dense,
            error_estimate: error,
        })
    }
}

/// Integrate piece by piece so that no step crosses a disturbance breakpoint.
fn integrate_pieces(
    o: &OdeRhs,
    t_end: f64,
    x: &[f64],
    d: &DisturbanceSignal,
    dense: bool,
) -> Result<(Vec<f64>, Vec<DenseStep>, f64)> {
    let mut cuts: Vec<f64> = vec![0.0];
    cuts.extend(d.breakpoints_in(0.0, t_end));
    cuts.push(t_end);
    let mut y = x.to_vec();
    let mut steps = Vec::new();
    let mut err = 0.0;
    for w in cuts.windows(2) {
        let dv = d.value_at(w[0]).to_vec();
        let scratch = std::cell::RefCell::new(Vec::with_capacity(1 + x.len() + dv.len()));
        let seg = integrator::integrate(
            |t, y, dy| o.field(t, y, &dv, dy, &mut scratch.borrow_mut()),
            w[0],
            &y,
            w[1],
            &o.settings,
            dense,
        )?;
        y = seg.y;
        err += seg.error;
        steps.extend(seg.steps);
    }
    Ok((y, steps, err))
}

/// A sampled solution on `[0, horizon]`.
#[derive(Debug, Clone)]
pub struct Trajectory<'a> {
    sys: &'a SystemDef,
    x0: Vec<f64>,
    d: DisturbanceSignal,
    horizon: f64,
    dense: Option<Vec<DenseStep>>,
    error_estimate: f64,
}

impl Trajectory<'_> {
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn initial_state(&self) -> &[f64] {
        &self.x0
    }

    pub fn disturbance(&self) -> &DisturbanceSignal {
        &self.d
    }

    pub fn error_estimate(&self) -> f64 {
        self.error_estimate
    }

    pub fn state_at(&self, s: f64) -> Vec<f64> {
        let s = s.clamp(0.0, self.horizon);
        if s == 0.0 {
            return self.x0.clone();
        }
        match (&self.dense, &self.sys.evaluator) {
            (Some(steps), _) if !steps.is_empty() => {
                let i = steps.partition_point(|st| st.t0 <= s).max(1) - 1;
                let mut out = vec![0.0; self.x0.len()];
                steps[i].eval(s, &mut out);
                out
            }
            (_, Evaluator::Analytic(c)) => c.flow(s, &self.x0, &self.d),
            _ => self.x0.clone(),
        }
    }

    pub fn norm_at(&self, s: f64) -> f64 {
        norm(&self.state_at(s))
    }

    /// Output grid: accepted integrator steps, or a uniform grid of spacing at
    /// most `0.01` for closed-form systems; breakpoints are always included.
    pub fn grid(&self) -> Vec<f64> {
        let mut g: Vec<f64> = match &self.dense {
            Some(steps) => {
                let mut g: Vec<f64> = steps.iter().map(|s| s.t0).collect();
                g.push(self.horizon);
                g
            }
            None => {
                let n = ((self.horizon / 0.01).ceil() as usize).max(1);
                (0..=n).map(|k| self.horizon * k as f64 / n as f64).collect()
            }
        };
        g.extend(self.d.breakpoints_in(0.0, self.horizon));
        g.sort_by(f64::total_cmp);
        g.dedup();
        g
    }

    /// Breakpoints of the disturbance inside `(a, b)`.
    pub fn breakpoints_in(&self, a: f64, b: f64) -> Vec<f64> {
        self.d.breakpoints_in(a, b).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn flow_examples() {
        let s = SystemDef::named("scalar_stable").unwrap();
        let e = DisturbanceSignal::empty();
        assert_relative_eq!(s.flow(1.0, &[2.0], &e).unwrap()[0], 0.7357589, epsilon = 1e-7);
        assert_eq!(s.flow(0.0, &[2.0], &e).unwrap(), vec![2.0]);
        let u = SystemDef::named("scalar_unstable").unwrap();
        assert_relative_eq!(u.flow(2f64.ln(), &[1.0], &e).unwrap()[0], 2.0, epsilon = 1e-14);
        assert!(s.flow(-1.0, &[1.0], &e).is_err());
        assert!(s.flow(1.0, &[1.0, 2.0], &e).is_err());
    }

    #[test]
    fn ode_matches_closed_form() {
        let s = SystemDef::ode("lin", &["-x1"], DisturbanceBox::none(), Default::default()).unwrap();
        let e = DisturbanceSignal::empty();
        let x = s.flow(1.0, &[2.0], &e).unwrap()[0];
        assert!((x - 2.0 * (-1.0f64).exp()).abs() < 1e-9);
        assert_eq!(s.flow(0.0, &[2.0], &e).unwrap(), vec![2.0]);
    }

    #[test]
    fn ode_respects_breakpoints() {
        let b = DisturbanceBox::new(vec![[-1.0, 1.0]]).unwrap();
        let s = SystemDef::ode("bil", &["-x1 + d1*x1"], b, Default::default()).unwrap();
        let d = DisturbanceSignal::new(vec![0.0, 1.0], vec![vec![-1.0], vec![1.0]]).unwrap();
        let ode = s.flow(5.0, &[1.0], &d).unwrap()[0];
        let exact = SystemDef::named("bilinear").unwrap().flow(5.0, &[1.0], &d).unwrap()[0];
        assert!((ode - exact).abs() < 1e-10, "{ode} vs {exact}");
    }

    #[test]
    fn ode_finite_escape() {
        let s = SystemDef::ode("blow", &["x1^2"], DisturbanceBox::none(), Default::default()).unwrap();
        assert!(matches!(
            s.flow(2.0, &[1.0], &DisturbanceSignal::empty()),
            Err(Error::FiniteEscape { .. })
        ));
    }

    #[test]
    fn dense_trajectory_matches_flow() {
        let s = SystemDef::ode("lin", &["-x1"], DisturbanceBox::none(), Default::default()).unwrap();
        let tr = s.trajectory(&[1.0], &DisturbanceSignal::empty(), 10.0).unwrap();
        for t in [0.0, 0.3, 2.2, 9.9, 10.0] {
            assert!((tr.state_at(t)[0] - (-t).exp()).abs() < 1e-9);
        }
        let g = tr.grid();
        assert_eq!(g[0], 0.0);
        assert_eq!(*g.last().unwrap(), 10.0);
    }
}
