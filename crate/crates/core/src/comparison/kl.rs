use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evidence::{Evidence, Status, Witness};
use crate::expr::{Expr, Scope};

/// Node values of a KL bound on a rectangular mesh, interpolated on the two
/// triangles of each cell split along the (R_{k+1}, τ_m)–(R_k, τ_{m+1})
/// diagonal. `nodes` is row-major: `nodes[k * t_mesh.len() + m] = β(R_k, τ_m)`.
///
/// Outside the hull: linear in r towards zero below `R_0`, proportional to r
/// above the last radius, and exponential decay past the last time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MeshRepr", into = "MeshRepr")]
pub struct MeshInterpolant {
    r_mesh: Vec<f64>,
    t_mesh: Vec<f64>,
    nodes: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct MeshRepr {
    r_mesh: Vec<f64>,
    t_mesh: Vec<f64>,
    nodes: Vec<f64>,
}

impl TryFrom<MeshRepr> for MeshInterpolant {
    type Error = Error;
    fn try_from(m: MeshRepr) -> Result<Self> {
        MeshInterpolant::new(m.r_mesh, m.t_mesh, m.nodes)
    }
}

impl From<MeshInterpolant> for MeshRepr {
    fn from(m: MeshInterpolant) -> Self {
        MeshRepr {
            r_mesh: m.r_mesh,
            t_mesh: m.t_mesh,
            nodes: m.nodes,
        }
    }
}

impl MeshInterpolant {
    pub fn new(r_mesh: Vec<f64>, t_mesh: Vec<f64>, nodes: Vec<f64>) -> Result<Self> {
        if r_mesh.len() < 2 || t_mesh.len() < 2 {
            return Err(Error::InvalidArgument("mesh needs at least two points per axis".into()));
        }
        if nodes.len() != r_mesh.len() * t_mesh.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} node values, got {}",
                r_mesh.len() * t_mesh.len(),
                nodes.len()
            )));
        }
        if !(r_mesh[0] > 0.0) || r_mesh.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("r_mesh must be positive and strictly increasing".into()));
        }
        if t_mesh[0] != 0.0 || t_mesh.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("t_mesh must start at 0 and strictly increase".into()));
        }
        if nodes.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidArgument("node values must be finite and nonnegative".into()));
        }
        Ok(MeshInterpolant { r_mesh, t_mesh, nodes })
    }

    pub fn r_mesh(&self) -> &[f64] {
        &self.r_mesh
    }

    pub fn t_mesh(&self) -> &[f64] {
        &self.t_mesh
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn node(&self, k: usize, m: usize) -> f64 {
        self.nodes[k * self.t_mesh.len() + m]
    }

    pub fn eval(&self, r: f64, t: f64) -> f64 {
        if !(r > 0.0) {
            return 0.0;
        }
        let t = t.max(0.0);
        let (r0, rl) = (self.r_mesh[0], *self.r_mesh.last().unwrap());
        if r < r0 {
            return self.eval(r0, t) * r / r0;
        }
        if r > rl {
            return self.eval(rl, t) * r / rl;
        }
        let tl = *self.t_mesh.last().unwrap();
        if t > tl {
            return self.eval(r, tl) * (-(t - tl)).exp();
        }
        let k = (self.r_mesh.partition_point(|&x| x <= r).max(1) - 1).min(self.r_mesh.len() - 2);
        let m = (self.t_mesh.partition_point(|&x| x <= t).max(1) - 1).min(self.t_mesh.len() - 2);
        let u = (r - self.r_mesh[k]) / (self.r_mesh[k + 1] - self.r_mesh[k]);
        let v = (t - self.t_mesh[m]) / (self.t_mesh[m + 1] - self.t_mesh[m]);
        let f00 = self.node(k, m);
        let f10 = self.node(k + 1, m);
        let f01 = self.node(k, m + 1);
        let f11 = self.node(k + 1, m + 1);
        if u + v <= 1.0 {
            f00 + u * (f10 - f00) + v * (f01 - f00)
        } else {
            f11 + (1.0 - u) * (f01 - f11) + (1.0 - v) * (f10 - f11)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum KLKind {
    /// Expression in `r` and `t`.
    ClosedForm(Expr),
    Mesh(MeshInterpolant),
}

/// A function of class KL (or a candidate for it).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KLRepr", into = "KLRepr")]
pub struct KLFunction {
    kind: KLKind,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum KLRepr {
    Expr { expr: String },
    Mesh(MeshInterpolant),
}

impl TryFrom<KLRepr> for KLFunction {
    type Error = Error;
    fn try_from(r: KLRepr) -> Result<Self> {
        match r {
            KLRepr::Expr { expr } => KLFunction::expr(&expr),
            KLRepr::Mesh(m) => Ok(KLFunction::mesh(m)),
        }
    }
}

impl From<KLFunction> for KLRepr {
    fn from(f: KLFunction) -> Self {
        match f.kind {
            KLKind::ClosedForm(e) => KLRepr::Expr {
                expr: e.source().to_string(),
            },
            KLKind::Mesh(m) => KLRepr::Mesh(m),
        }
    }
}

impl KLFunction {
    pub fn expr(source: &str) -> Result<Self> {
        Ok(KLFunction {
            kind: KLKind::ClosedForm(Expr::parse(source, Scope::TwoArg)?),
        })
    }

    pub fn mesh(m: MeshInterpolant) -> Self {
        KLFunction { kind: KLKind::Mesh(m) }
    }

    /// r·e^{−t}/(1 + r): the default positive slack used by [`super::kl_majorant`].
    pub fn default_omega() -> Self {
        KLFunction::expr("r*exp(-t)/(1+r)").expect("default omega parses")
    }

    pub fn kind(&self) -> &KLKind {
        &self.kind
    }

    pub fn as_mesh(&self) -> Option<&MeshInterpolant> {
        match &self.kind {
            KLKind::Mesh(m) => Some(m),
            _ => None,
        }
    }

    pub fn eval(&self, r: f64, t: f64) -> f64 {
        match &self.kind {
            KLKind::ClosedForm(e) => e.eval(&[r, t]),
            KLKind::Mesh(m) => m.eval(r, t),
        }
    }
}

/// Time after which the tail test probes a KL candidate.
const TAIL_PROBE: f64 = 1e6;

/// Check the KL invariants on a grid: for each t, r ↦ β(r, t) is zero at zero,
/// positive and nondecreasing; for each r > 0, t ↦ β(r, t) is nonincreasing and
/// falls below `1e-3·β(r, 0)` at a far time probe.
pub fn verify_kl(beta: &KLFunction, r_grid: &[f64], t_grid: &[f64], tol: f64) -> Result<Evidence> {
    if r_grid.is_empty() || t_grid.is_empty() {
        return Err(Error::InvalidArgument("verify_kl needs nonempty grids".into()));
    }
    if r_grid.iter().chain(t_grid).any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::InvalidArgument("grids must be finite and nonnegative".into()));
    }
    let mut rs = r_grid.to_vec();
    rs.push(0.0);
    rs.sort_by(f64::total_cmp);
    rs.dedup();
    let mut ts = t_grid.to_vec();
    ts.sort_by(f64::total_cmp);
    ts.dedup();

    let refute = |msg: &str, r: f64, t: f64, a: f64, b: f64| {
        let mut ev = Evidence::new("KL", Status::Refuted);
        ev.witness = Some(Witness::new(msg).value("r", r).value("t", t).value("first", a).value("second", b));
        ev
    };
    let samples = rs.len() * ts.len();
    let finish = |mut ev: Evidence| {
        ev.samples = samples;
        Ok(ev.with_param("tol", tol))
    };

    for &t in &ts {
        let z = beta.eval(0.0, t);
        if z.abs() > tol {
            return finish(refute("β(0, t) ≠ 0", 0.0, t, z, z));
        }
        let mut prev = z;
        for &r in &rs[1..] {
            let v = beta.eval(r, t);
            if !(v > 0.0) {
                return finish(refute("β(r, t) not positive", r, t, prev, v));
            }
            if v < prev - tol {
                return finish(refute("β(·, t) decreasing in r", r, t, prev, v));
            }
            prev = v;
        }
    }
    for &r in &rs[1..] {
        let mut prev = beta.eval(r, ts[0]);
        for &t in &ts[1..] {
            let v = beta.eval(r, t);
            if v > prev + tol {
                return finish(refute("β(r, ·) increasing in t", r, t, prev, v));
            }
            prev = v;
        }
        let far = beta.eval(r, ts.last().unwrap() + TAIL_PROBE);
        let start = beta.eval(r, 0.0);
        if !(far <= 1e-3 * start + tol) {
            return finish(refute("β(r, t) does not vanish as t grows", r, TAIL_PROBE, start, far));
        }
    }
    finish(Evidence::new("KL", Status::Supported))
}
