use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Finite truncation of a bi-infinite increasing sequence of abscissae.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    points: Vec<f64>,
    /// Oscillation bound the mesh was refined for, if any.
    pub target_oscillation: Option<f64>,
    /// Dyadic exponents of the first and last seed (`2^k_min ≤ r_low`,
    /// `2^k_max ≥ r_high`).
    pub k_min: i32,
    pub k_max: i32,
    pub r_low: f64,
    pub r_high: f64,
}

impl Mesh {
    /// Strictly increasing, nonnegative points.
    pub fn from_points(points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidArgument("mesh needs at least one point".into()));
        }
        if points.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidArgument("mesh points must be finite and nonnegative".into()));
        }
        if let Some(w) = points.windows(2).find(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument(format!(
                "mesh points must strictly increase ({} then {})",
                w[0], w[1]
            )));
        }
        let (lo, hi) = (points[0], *points.last().unwrap());
        Ok(Mesh {
            k_min: lo.max(f64::MIN_POSITIVE).log2().floor() as i32,
            k_max: hi.max(f64::MIN_POSITIVE).log2().ceil() as i32,
            r_low: lo,
            r_high: hi,
            target_oscillation: None,
            points,
        })
    }

    /// `{2^k : k_min ≤ k ≤ k_max}`.
    pub fn dyadic(k_min: i32, k_max: i32) -> Result<Self> {
        if k_min > k_max {
            return Err(Error::InvalidArgument("k_min must not exceed k_max".into()));
        }
        let mut m = Mesh::from_points((k_min..=k_max).map(|k| 2f64.powi(k)).collect())?;
        m.k_min = k_min;
        m.k_max = k_max;
        Ok(m)
    }

    /// `{0} ∪ {2^k : k_min ≤ k ≤ k_max}`, a time mesh starting at zero.
    pub fn dyadic_time(k_min: i32, k_max: i32) -> Result<Self> {
        let d = Mesh::dyadic(k_min, k_max)?;
        let mut pts = vec![0.0];
        pts.extend(d.points);
        let mut m = Mesh::from_points(pts)?;
        m.k_min = k_min;
        m.k_max = k_max;
        Ok(m)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn cells(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.points.windows(2).map(|w| (w[0], w[1]))
    }
}

/// Default number of equispaced samples per cell for oscillation estimates.
pub const DEFAULT_SAMPLES_PER_INTERVAL: usize = 17;
const MAX_DEPTH: u32 = 48;
const MAX_CELLS: usize = 1 << 20;

/// Sampled oscillation of `z` on `[a, b]`, inflated by half the largest jump
/// between neighbouring samples to allow for variation between samples.
pub fn sampled_oscillation(z: &dyn Fn(f64) -> f64, a: f64, b: f64, samples: usize) -> f64 {
    let n = samples.max(2);
    let vals: Vec<f64> = (0..n)
        .map(|i| z(a + (b - a) * i as f64 / (n - 1) as f64))
        .collect();
    if vals.iter().any(|v| !v.is_finite()) {
        return f64::INFINITY;
    }
    let (lo, hi) = vals
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    let jump = vals.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max);
    (hi - lo) + 0.5 * jump
}

/// Dyadic seeds `2^k` covering `[r_low, r_high]`, each cell bisected until its
/// estimated oscillation of `z` is below `eps`.
pub fn build_partition(
    z: &dyn Fn(f64) -> f64,
    eps: f64,
    r_low: f64,
    r_high: f64,
    samples_per_interval: usize,
) -> Result<Mesh> {
    if !(r_low > 0.0) || !(r_high > r_low) || !r_high.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "need 0 < r_low < r_high, got [{r_low}, {r_high}]"
        )));
    }
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument("eps must be positive".into()));
    }
    if samples_per_interval < 2 {
        return Err(Error::InvalidArgument("need at least two samples per interval".into()));
    }
    let k_min = r_low.log2().floor() as i32;
    let k_max = (r_high.log2().ceil() as i32).max(k_min + 1);
    let mut points = vec![2f64.powi(k_min)];
    for k in k_min..k_max {
        let (a, b) = (2f64.powi(k), 2f64.powi(k + 1));
        refine(z, eps, a, b, samples_per_interval, 0, &mut points)?;
    }
    let mut mesh = Mesh::from_points(points)?;
    mesh.k_min = k_min;
    mesh.k_max = k_max;
    mesh.r_low = r_low;
    mesh.r_high = r_high;
    mesh.target_oscillation = Some(eps);
    Ok(mesh)
}

fn refine(
    z: &dyn Fn(f64) -> f64,
    eps: f64,
    a: f64,
    b: f64,
    samples: usize,
    depth: u32,
    out: &mut Vec<f64>,
) -> Result<()> {
    let osc = sampled_oscillation(z, a, b, samples);
    if osc < eps {
        out.push(b);
        return Ok(());
    }
    let mid = 0.5 * (a + b);
    if depth >= MAX_DEPTH || out.len() >= MAX_CELLS || !(mid > a && mid < b) {
        return Err(Error::RefinementBudget {
            lo: a,
            hi: b,
            oscillation: osc,
        });
    }
    refine(z, eps, a, mid, samples, depth + 1, out)?;
    refine(z, eps, mid, b, samples, depth + 1, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_is_unrefined() {
        let m = build_partition(&|_| 3.0, 0.1, 0.3, 5.0, 17).unwrap();
        assert_eq!(m.points(), &[0.25, 0.5, 1.0, 2.0, 4.0, 8.0]);
        assert_eq!((m.k_min, m.k_max), (-2, 3));
    }

    #[test]
    fn identity_cells_are_narrow() {
        let m = build_partition(&|r| r, 0.25, 1.0, 2.0, 17).unwrap();
        assert_eq!(m.points()[0], 1.0);
        assert_eq!(*m.points().last().unwrap(), 2.0);
        assert!(m.cells().all(|(a, b)| b - a <= 0.25));
        assert!(m.points().windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn covers_range() {
        let m = build_partition(&|r| r.sin(), 0.05, 0.01, 30.0, 17).unwrap();
        assert!(m.points()[0] <= 0.01 && *m.points().last().unwrap() >= 30.0);
    }

    #[test]
    fn errors() {
        assert!(build_partition(&|r| r, 0.1, 2.0, 1.0, 17).is_err());
        assert!(build_partition(&|r| r, 0.0, 1.0, 2.0, 17).is_err());
        assert!(build_partition(&|r| r, 0.1, 0.0, 2.0, 17).is_err());
        match build_partition(&|r| (1e9 * r).sin() + if r > 1.5 { 1.0 } else { 0.0 }, 0.1, 1.0, 2.0, 17) {
            Err(Error::RefinementBudget { lo, hi, .. }) => assert!(lo < hi),
            other => panic!("{other:?}"),
        }
    }

    fn dense_oscillation(z: &dyn Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let v: Vec<f64> = (0..n).map(|i| z(a + (b - a) * i as f64 / (n - 1) as f64)).collect();
        v.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - v.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn sin_cells_pass_dense_resampling() {
        let z = |r: f64| (10.0 * r).sin();
        let m = build_partition(&z, 0.1, 1.0, 2.0, 17).unwrap();
        for (a, b) in m.cells() {
            assert!(dense_oscillation(&z, a, b, 170) < 0.1, "[{a}, {b}]");
        }
    }

    proptest! {
        #[test]
        fn cells_hold_under_denser_sampling(freq in 0.5f64..20.0, amp in 0.1f64..3.0, eps in 0.02f64..0.5) {
            let z = move |r: f64| amp * (freq * r).sin() + 0.3 * r;
            let m = build_partition(&z, eps, 0.5, 4.0, DEFAULT_SAMPLES_PER_INTERVAL).unwrap();
            for (a, b) in m.cells() {
                prop_assert!(dense_oscillation(&z, a, b, 10 * DEFAULT_SAMPLES_PER_INTERVAL) < eps);
            }
        }
    }
}
