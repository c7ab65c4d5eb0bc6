use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evidence::{Evidence, Status, Witness};
use crate::expr::{Expr, Scope};

/// Declared comparison class of a scalar function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FunctionClass {
    K,
    Kinf,
    L,
    PositiveDefinite,
    None,
}

impl FunctionClass {
    fn needs_nonnegative_grid(self) -> bool {
        matches!(
            self,
            FunctionClass::K | FunctionClass::Kinf | FunctionClass::PositiveDefinite
        )
    }

    pub fn is_k(self) -> bool {
        matches!(self, FunctionClass::K | FunctionClass::Kinf)
    }
}

impl std::str::FromStr for FunctionClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "k" => FunctionClass::K,
            "kinf" | "k_inf" | "k∞" => FunctionClass::Kinf,
            "l" => FunctionClass::L,
            "positivedefinite" | "pd" | "positive_definite" => FunctionClass::PositiveDefinite,
            "none" => FunctionClass::None,
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown function class `{other}`"
                )))
            }
        })
    }
}

/// Monotone piecewise-linear table with a declared extrapolation slope past
/// the last abscissa. Arguments below the first abscissa take the first ordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tabulated {
    abscissae: Vec<f64>,
    ordinates: Vec<f64>,
    extrapolation_slope: f64,
}

/// Minimum slope enforced by [`Tabulated::monotone_repair`].
pub const MIN_REPAIR_SLOPE: f64 = 1e-12;

impl Tabulated {
    pub fn new(abscissae: Vec<f64>, ordinates: Vec<f64>, extrapolation_slope: f64) -> Result<Self> {
        if abscissae.is_empty() || abscissae.len() != ordinates.len() {
            return Err(Error::InvalidArgument(format!(
                "table needs matching nonempty columns (got {} abscissae, {} ordinates)",
                abscissae.len(),
                ordinates.len()
            )));
        }
        if abscissae.iter().chain(&ordinates).any(|v| !v.is_finite()) || !extrapolation_slope.is_finite()
        {
            return Err(Error::InvalidArgument("table contains non-finite values".into()));
        }
        if abscissae[0] < 0.0 {
            return Err(Error::InvalidArgument("table abscissae must be nonnegative".into()));
        }
        if let Some(w) = abscissae.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument(format!(
                "table abscissae must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
        Ok(Tabulated {
            abscissae,
            ordinates,
            extrapolation_slope,
        })
    }

    /// Tabulate `f` on `grid`, extrapolating with the slope of the last segment.
    pub fn from_fn(grid: &[f64], f: impl Fn(f64) -> f64) -> Result<Self> {
        let ords: Vec<f64> = grid.iter().map(|&r| f(r)).collect();
        let slope = match grid.len() {
            0 | 1 => 0.0,
            n => (ords[n - 1] - ords[n - 2]) / (grid[n - 1] - grid[n - 2]),
        };
        Tabulated::new(grid.to_vec(), ords, slope.max(0.0))
    }

    pub fn abscissae(&self) -> &[f64] {
        &self.abscissae
    }

    pub fn ordinates(&self) -> &[f64] {
        &self.ordinates
    }

    pub fn extrapolation_slope(&self) -> f64 {
        self.extrapolation_slope
    }

    pub fn eval(&self, r: f64) -> f64 {
        let a = &self.abscissae;
        let o = &self.ordinates;
        let n = a.len();
        if r <= a[0] {
            return o[0];
        }
        if r >= a[n - 1] {
            return o[n - 1] + self.extrapolation_slope * (r - a[n - 1]);
        }
        let i = a.partition_point(|&x| x <= r) - 1;
        let w = (r - a[i]) / (a[i + 1] - a[i]);
        o[i] + w * (o[i + 1] - o[i])
    }

    /// Force strict increase with slope at least [`MIN_REPAIR_SLOPE`] between
    /// consecutive nodes, lifting ordinates where the data dips or plateaus.
    pub fn monotone_repair(mut self) -> Self {
        for i in 1..self.ordinates.len() {
            let floor =
                self.ordinates[i - 1] + MIN_REPAIR_SLOPE * (self.abscissae[i] - self.abscissae[i - 1]);
            if self.ordinates[i] < floor {
                self.ordinates[i] = floor;
            }
        }
        self.extrapolation_slope = self.extrapolation_slope.max(MIN_REPAIR_SLOPE);
        self
    }

    /// Read `(abscissa, ordinate)` rows; a header row is skipped when it does
    /// not parse as numbers.
    pub fn read_csv(reader: impl Read, extrapolation_slope: Option<f64>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() < 2 {
                return Err(Error::Config(format!("row {} has fewer than two columns", i + 1)));
            }
            match (rec[0].parse::<f64>(), rec[1].parse::<f64>()) {
                (Ok(x), Ok(y)) => {
                    xs.push(x);
                    ys.push(y);
                }
                _ if i == 0 => continue,
                _ => return Err(Error::Config(format!("row {} is not numeric", i + 1))),
            }
        }
        let slope = match extrapolation_slope {
            Some(s) => s,
            None if xs.len() >= 2 => {
                let n = xs.len();
                ((ys[n - 1] - ys[n - 2]) / (xs[n - 1] - xs[n - 2])).max(0.0)
            }
            None => 0.0,
        };
        Tabulated::new(xs, ys, slope)
    }

    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["abscissa", "ordinate"])?;
        for (x, y) in self.abscissae.iter().zip(&self.ordinates) {
            w.write_record([format!("{x}"), format!("{y}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScalarKind {
    /// Expression in the single variable `r`.
    ClosedForm(Expr),
    Tabulated(Tabulated),
    Min(Box<ScalarFunction>, Box<ScalarFunction>),
}

/// A comparison function of one argument with its declared class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScalarRepr", into = "ScalarRepr")]
pub struct ScalarFunction {
    kind: ScalarKind,
    class: FunctionClass,
}

impl ScalarFunction {
    pub fn expr(source: &str, class: FunctionClass) -> Result<Self> {
        Ok(ScalarFunction {
            kind: ScalarKind::ClosedForm(Expr::parse(source, Scope::Scalar)?),
            class,
        })
    }

    pub fn identity() -> Self {
        ScalarFunction::expr("r", FunctionClass::Kinf).expect("identity parses")
    }

    pub fn constant(c: f64) -> Self {
        ScalarFunction::expr(&format!("{c}"), FunctionClass::None).expect("constant parses")
    }

    pub fn tabulated(table: Tabulated, class: FunctionClass) -> Self {
        ScalarFunction {
            kind: ScalarKind::Tabulated(table),
            class,
        }
    }

    pub fn kind(&self) -> &ScalarKind {
        &self.kind
    }

    pub fn class(&self) -> FunctionClass {
        self.class
    }

    pub fn with_class(mut self, class: FunctionClass) -> Self {
        self.class = class;
        self
    }

    pub fn eval(&self, r: f64) -> f64 {
        match &self.kind {
            ScalarKind::ClosedForm(e) => e.eval(&[r]),
            ScalarKind::Tabulated(t) => t.eval(r),
            ScalarKind::Min(f, g) => f.eval(r).min(g.eval(r)),
        }
    }
}

impl fmt::Display for ScalarFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ScalarKind::ClosedForm(e) => write!(f, "{e}"),
            ScalarKind::Tabulated(t) => write!(f, "table[{} nodes]", t.abscissae.len()),
            ScalarKind::Min(a, b) => write!(f, "min({a}, {b})"),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "snake_case", untagged)]
enum ScalarRepr {
    Expr {
        expr: String,
        class: FunctionClass,
    },
    Table {
        table: Tabulated,
        class: FunctionClass,
    },
    Min {
        min: (Box<ScalarFunction>, Box<ScalarFunction>),
        class: FunctionClass,
    },
}

impl TryFrom<ScalarRepr> for ScalarFunction {
    type Error = Error;

    fn try_from(repr: ScalarRepr) -> Result<Self> {
        Ok(match repr {
            ScalarRepr::Expr { expr, class } => ScalarFunction::expr(&expr, class)?,
            ScalarRepr::Table { table, class } => {
                // re-validate: serde bypasses the constructor
                let t = Tabulated::new(table.abscissae, table.ordinates, table.extrapolation_slope)?;
                ScalarFunction::tabulated(t, class)
            }
            ScalarRepr::Min { min: (a, b), class } => ScalarFunction {
                kind: ScalarKind::Min(a, b),
                class,
            },
        })
    }
}

impl From<ScalarFunction> for ScalarRepr {
    fn from(f: ScalarFunction) -> Self {
        match f.kind {
            ScalarKind::ClosedForm(e) => ScalarRepr::Expr {
                expr: e.source().to_string(),
                class: f.class,
            },
            ScalarKind::Tabulated(table) => ScalarRepr::Table {
                table,
                class: f.class,
            },
            ScalarKind::Min(a, b) => ScalarRepr::Min {
                min: (a, b),
                class: f.class,
            },
        }
    }
}

/// Factor by which a K∞ function must grow between the largest grid point and
/// the far probe `PROBE_SCALE × max(grid)`.
const UNBOUNDED_GROWTH: f64 = 2.0;
const PROBE_SCALE: f64 = 1e6;

/// Check the declared class axioms of `f` on `grid`.
///
/// The grid is sorted and deduplicated first (so the verdict does not depend on
/// its order), and `0` is added for the K-type classes. Increase is checked in
/// the non-strict sense together with positivity off zero, so saturations such
/// as `min(r, 1)` count as class K. Unboundedness (K∞) and decay to zero (L)
/// are probed at `1e6 × max(grid)`.
pub fn verify_class(f: &ScalarFunction, grid: &[f64], tol: f64) -> Result<Evidence> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("verify_class needs a nonempty grid".into()));
    }
    if grid.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("grid contains non-finite values".into()));
    }
    let class = f.class();
    if class.needs_nonnegative_grid() && grid.iter().any(|&r| r < 0.0) {
        return Err(Error::InvalidArgument(format!(
            "negative abscissa in grid for class {class:?}"
        )));
    }
    let mut g: Vec<f64> = grid.to_vec();
    if class.needs_nonnegative_grid() {
        g.push(0.0);
    }
    g.sort_by(f64::total_cmp);
    g.dedup();
    let values: Vec<f64> = g.iter().map(|&r| f.eval(r)).collect();

    let refuted = |msg: String, r1: f64, r2: f64, f1: f64, f2: f64| {
        let mut ev = Evidence::new("class", Status::Refuted);
        ev.witness = Some(
            Witness::new(msg)
                .value("r1", r1)
                .value("r2", r2)
                .value("f1", f1)
                .value("f2", f2),
        );
        ev
    };

    let finish = |mut ev: Evidence| {
        ev.samples = g.len();
        Ok(ev.with_param("declared", class).with_param("tol", tol))
    };

    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return finish(refuted(
            "non-finite value".into(),
            g[i],
            g[i],
            values[i],
            values[i],
        ));
    }

    match class {
        FunctionClass::None => return finish(Evidence::new("class", Status::Supported)),
        FunctionClass::K | FunctionClass::Kinf | FunctionClass::PositiveDefinite => {
            if values[0].abs() > tol {
                return finish(refuted("value at zero is not zero".into(), 0.0, 0.0, values[0], values[0]));
            }
            for i in 1..g.len() {
                if values[i] <= 0.0 {
                    return finish(refuted(
                        "not positive off zero".into(),
                        g[i - 1],
                        g[i],
                        values[i - 1],
                        values[i],
                    ));
                }
                if class.is_k() && values[i] < values[i - 1] - tol {
                    return finish(refuted(
                        "decreasing between grid points".into(),
                        g[i - 1],
                        g[i],
                        values[i - 1],
                        values[i],
                    ));
                }
            }
            if class == FunctionClass::Kinf {
                let top = *g.last().unwrap();
                let base = if top > 0.0 { top } else { 1.0 };
                let probe = base * PROBE_SCALE;
                let (fb, fp) = (f.eval(base), f.eval(probe));
                if !(fp >= UNBOUNDED_GROWTH * fb) || !fp.is_finite() {
                    return finish(refuted(
                        "bounded: no growth towards infinity".into(),
                        base,
                        probe,
                        fb,
                        fp,
                    ));
                }
            }
        }
        FunctionClass::L => {
            for i in 1..g.len() {
                if values[i] > values[i - 1] + tol || values[i] < -tol {
                    return finish(refuted(
                        "not nonincreasing and nonnegative".into(),
                        g[i - 1],
                        g[i],
                        values[i - 1],
                        values[i],
                    ));
                }
            }
            let top = g.last().unwrap().abs().max(1.0);
            let probe = top * PROBE_SCALE;
            let fp = f.eval(probe);
            if !(fp <= 1e-3 * values[0].abs() + tol) {
                return finish(refuted(
                    "does not tend to zero".into(),
                    top,
                    probe,
                    f.eval(top),
                    fp,
                ));
            }
        }
    }
    finish(Evidence::new("class", Status::Supported))
}

/// Find `r` with `|f(r) − y| ≤ tol` by bisection on an automatically expanded
/// bracket `[0, 2^k]`.
pub fn invert_monotone(f: &ScalarFunction, y: f64, tol: f64) -> Result<f64> {
    if !(y >= 0.0) || !y.is_finite() {
        return Err(Error::InvalidArgument(format!("cannot invert at y = {y}")));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    if (f.eval(0.0) - y).abs() <= tol {
        return Ok(0.0);
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut f_hi = f.eval(hi);
    while f_hi < y {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() || hi > 1e300 {
            return Err(Error::Range {
                requested: y,
                supremum: f_hi,
            });
        }
        f_hi = f.eval(hi);
    }
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        let fm = f.eval(mid);
        if (fm - y).abs() <= tol {
            return Ok(mid);
        }
        if fm < y {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi.max(1e-300) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Pointwise minimum; class K unless both arguments are K∞.
pub fn pointwise_min(f: &ScalarFunction, g: &ScalarFunction) -> ScalarFunction {
    let class = match (f.class(), g.class()) {
        (FunctionClass::Kinf, FunctionClass::Kinf) => FunctionClass::Kinf,
        (a, b) if a.is_k() && b.is_k() => FunctionClass::K,
        (FunctionClass::PositiveDefinite, _) | (_, FunctionClass::PositiveDefinite) => {
            FunctionClass::PositiveDefinite
        }
        _ => FunctionClass::None,
    };
    ScalarFunction {
        kind: ScalarKind::Min(Box::new(f.clone()), Box::new(g.clone())),
        class,
    }
}

/// `min(f, level)`: a bounded class-K function.
pub fn saturate(f: &ScalarFunction, level: f64) -> Result<ScalarFunction> {
    if !(level > 0.0) || !level.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "saturation level must be positive, got {level}"
        )));
    }
    Ok(pointwise_min(f, &ScalarFunction::constant(level)).with_class(FunctionClass::K))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sf(src: &str, class: FunctionClass) -> ScalarFunction {
        ScalarFunction::expr(src, class).unwrap()
    }

    #[test]
    fn identity_is_kinf() {
        let ev = verify_class(&ScalarFunction::identity(), &[0.0, 0.5, 1.0, 10.0], 0.0).unwrap();
        assert_eq!(ev.status, Status::Supported);
    }

    #[test]
    fn hump_is_not_k() {
        let f = sf("r/(1+r^2)", FunctionClass::K);
        let ev = verify_class(&f, &[0.0, 1.0, 2.0], 1e-12).unwrap();
        assert_eq!(ev.status, Status::Refuted);
        let w = ev.witness.unwrap();
        assert_eq!(w.values["r1"], 1.0);
        assert_eq!(w.values["r2"], 2.0);
        assert!((w.values["f2"] - 0.4).abs() < 1e-15);
        assert!((w.values["f1"] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn saturation_is_not_kinf() {
        let f = sf("min(r,1)", FunctionClass::Kinf);
        let ev = verify_class(&f, &[0.0, 1.0, 2.0, 100.0], 1e-12).unwrap();
        assert_eq!(ev.status, Status::Refuted);
        assert!(ev.witness.unwrap().message.contains("bounded"));
        // but it is class K
        let ev = verify_class(&f.with_class(FunctionClass::K), &[0.0, 1.0, 2.0, 100.0], 0.0).unwrap();
        assert_eq!(ev.status, Status::Supported);
    }

    #[test]
    fn class_errors() {
        let f = ScalarFunction::identity();
        assert!(verify_class(&f, &[], 0.0).is_err());
        assert!(verify_class(&f, &[-1.0, 1.0], 0.0).is_err());
        // L-class functions may be sampled anywhere
        let l = sf("exp(-r)", FunctionClass::L);
        assert!(verify_class(&l, &[0.0, 1.0, 5.0], 1e-12).unwrap().is_supported());
        let not_l = sf("1/(1+r)+0.5", FunctionClass::L);
        assert!(verify_class(&not_l, &[0.0, 1.0, 5.0], 1e-12).unwrap().is_refuted());
    }

    #[test]
    fn positive_definite_class() {
        let f = sf("r/(1+r^2)", FunctionClass::PositiveDefinite);
        assert!(verify_class(&f, &[0.0, 1.0, 2.0, 50.0], 1e-12).unwrap().is_supported());
        let g = sf("abs(r-1)", FunctionClass::PositiveDefinite);
        assert!(verify_class(&g, &[0.0, 1.0, 2.0], 1e-12).unwrap().is_refuted());
    }

    #[test]
    fn inversion_examples() {
        let sq = sf("r^2", FunctionClass::Kinf);
        assert!((invert_monotone(&sq, 4.0, 1e-9).unwrap() - 2.0).abs() < 1e-9);
        let frac = sf("r/(1+r)", FunctionClass::K);
        assert!((invert_monotone(&frac, 0.5, 1e-12).unwrap() - 1.0).abs() < 1e-10);
        match invert_monotone(&sf("min(r,1)", FunctionClass::K), 2.0, 1e-9) {
            Err(Error::Range { supremum, .. }) => assert_eq!(supremum, 1.0),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(invert_monotone(&sq, 0.0, 1e-9).unwrap(), 0.0);
    }

    #[test]
    fn min_and_saturate() {
        let id = ScalarFunction::identity();
        let two = sf("2*r", FunctionClass::Kinf);
        let m = pointwise_min(&id, &two);
        assert_eq!(m.class(), FunctionClass::Kinf);
        for r in [0.0, 0.3, 7.0] {
            assert_eq!(m.eval(r), r);
        }
        let sq = sf("r^2", FunctionClass::Kinf);
        let m = pointwise_min(&id, &sq);
        assert_eq!(m.eval(0.5), 0.25);
        assert_eq!(m.eval(2.0), 2.0);
        let mm = pointwise_min(&sq, &sq);
        for r in [0.0, 0.5, 3.0] {
            assert_eq!(mm.eval(r), sq.eval(r));
        }

        let s = saturate(&id, 1.0).unwrap();
        assert_eq!(s.eval(5.0), 1.0);
        assert_eq!(s.class(), FunctionClass::K);
        assert_eq!(saturate(&sq, 4.0).unwrap().eval(1.0), 1.0);
        let bounded = saturate(&id, 1.0).unwrap().with_class(FunctionClass::Kinf);
        assert!(verify_class(&bounded, &[0.0, 1.0, 10.0], 0.0).unwrap().is_refuted());
        assert!(saturate(&id, 0.0).is_err());
        assert!(saturate(&id, -1.0).is_err());
    }

    #[test]
    fn tabulated_eval_and_repair() {
        let t = Tabulated::new(vec![0.0, 1.0, 2.0], vec![0.0, 1.0, 1.0], 0.0).unwrap();
        assert_eq!(t.eval(0.5), 0.5);
        assert_eq!(t.eval(3.0), 1.0);
        let r = t.monotone_repair();
        assert!(r.ordinates()[2] > r.ordinates()[1]);
        assert!(Tabulated::new(vec![0.0, 0.0], vec![0.0, 1.0], 0.0).is_err());
        assert!(Tabulated::new(vec![-1.0, 0.0], vec![0.0, 1.0], 0.0).is_err());
        assert!(Tabulated::new(vec![], vec![], 0.0).is_err());
    }

    #[test]
    fn tabulated_csv_roundtrip() {
        let t = Tabulated::new(vec![0.0, 0.5, 2.0], vec![0.0, 0.25, 4.0], 3.0).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let back = Tabulated::read_csv(buf.as_slice(), Some(3.0)).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn json_roundtrip() {
        let f = pointwise_min(&ScalarFunction::identity(), &sf("r^2", FunctionClass::Kinf));
        let s = serde_json::to_string(&f).unwrap();
        let back: ScalarFunction = serde_json::from_str(&s).unwrap();
        assert_eq!(back, f);
        let g: ScalarFunction =
            serde_json::from_str(r#"{"expr":"min(r,1)","class":"K"}"#).unwrap();
        assert_eq!(g.eval(3.0), 1.0);
    }

    proptest! {
        #[test]
        fn verify_class_is_order_independent(mut grid in proptest::collection::vec(0.0f64..100.0, 1..12),
                                             seed in any::<u64>()) {
            let f = sf("r/(1+r^2)", FunctionClass::K);
            let a = verify_class(&f, &grid, 1e-12).unwrap();
            // deterministic shuffle
            let n = grid.len();
            let mut s = seed;
            for i in (1..n).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                grid.swap(i, (s >> 33) as usize % (i + 1));
            }
            let b = verify_class(&f, &grid, 1e-12).unwrap();
            prop_assert_eq!(&a, &b);
            let c = verify_class(&f, &grid, 1e-12).unwrap();
            prop_assert_eq!(b, c);
        }

        #[test]
        fn invert_then_eval_round_trips(y in 0.0f64..1e4) {
            let tol = 1e-9;
            for src in ["r", "r^2", "r^3 + r", "exp(r) - 1", "2*sqrt(r)"] {
                let f = sf(src, FunctionClass::Kinf);
                let r = invert_monotone(&f, y, tol).unwrap();
                prop_assert!((f.eval(r) - y).abs() <= 2.0 * tol * y.max(1.0),
                    "{} at y={}: f(r)={}", src, y, f.eval(r));
            }
        }
    }
}
