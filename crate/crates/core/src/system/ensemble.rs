use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::signal::{DisturbanceBox, DisturbanceSignal};

/// Deterministic finite stand-in for the disturbance space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnsembleSpec {
    pub seed: u64,
    /// Number of random switching signals (in addition to the corners).
    pub random_signals: usize,
    pub max_switches: usize,
    /// Switch times are drawn from `[0, switch_horizon)`.
    pub switch_horizon: f64,
    pub include_corners: bool,
}

impl Default for EnsembleSpec {
    fn default() -> Self {
        EnsembleSpec {
            seed: 0,
            random_signals: 64,
            max_switches: 8,
            switch_horizon: 10.0,
            include_corners: true,
        }
    }
}

impl EnsembleSpec {
    pub fn small(seed: u64) -> Self {
        EnsembleSpec {
            seed,
            random_signals: 8,
            ..Default::default()
        }
    }
}

/// Constant corner signals (upper corner first), then Latin-hypercube switching
/// signals: switch times are stratified over the switch horizon, and piece
/// values are either stratified per coordinate (odd index) or bang-bang (even
/// index). A box of dimension 0 yields the single empty signal.
pub fn build_ensemble(bx: &DisturbanceBox, spec: &EnsembleSpec) -> Vec<DisturbanceSignal> {
    if bx.dim() == 0 {
        return vec![DisturbanceSignal::empty()];
    }
    let mut out: Vec<DisturbanceSignal> = Vec::new();
    if spec.include_corners {
        out.extend(bx.corners().into_iter().map(DisturbanceSignal::constant));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    for i in 0..spec.random_signals {
        let k = if spec.max_switches == 0 {
            0
        } else {
            rng.gen_range(1..=spec.max_switches)
        };
        let pieces = k + 1;
        let mut breakpoints = vec![0.0];
        for j in 0..k {
            let u: f64 = rng.gen();
            breakpoints.push(spec.switch_horizon * (j as f64 + u) / k as f64);
        }
        let mut values = vec![vec![0.0; bx.dim()]; pieces];
        for (c, [lo, hi]) in bx.bounds().iter().enumerate() {
            if i % 2 == 0 {
                for v in values.iter_mut() {
                    v[c] = if rng.gen_bool(0.5) { *hi } else { *lo };
                }
            } else {
                let mut perm: Vec<usize> = (0..pieces).collect();
                perm.shuffle(&mut rng);
                for (j, v) in values.iter_mut().enumerate() {
                    let u: f64 = rng.gen();
                    v[c] = lo + (hi - lo) * (perm[j] as f64 + u) / pieces as f64;
                }
            }
        }
        // breakpoint 0 may repeat if u = 0; the constructor merges it
        if let Ok(s) = DisturbanceSignal::new(breakpoints, values) {
            out.push(s);
        }
    }
    out
}

/// Unit directions used to probe spheres: ±1 in 1D, eight compass directions
/// in 2D, and ± coordinate axes plus the normalized diagonals otherwise.
pub fn sphere_directions(n: usize) -> Vec<Vec<f64>> {
    match n {
        0 => vec![vec![]],
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..8)
            .map(|k| {
                let a = std::f64::consts::FRAC_PI_4 * k as f64;
                vec![a.cos(), a.sin()]
            })
            .collect(),
        _ => {
            let mut dirs = Vec::new();
            for i in 0..n {
                for s in [1.0, -1.0] {
                    let mut v = vec![0.0; n];
                    v[i] = s;
                    dirs.push(v);
                }
            }
            let c = 1.0 / (n as f64).sqrt();
            dirs.push(vec![c; n]);
            dirs.push(vec![-c; n]);
            dirs
        }
    }
}

/// Sample states in the closed ball of radius `r`: the sphere directions
/// scaled to `r`, plus (for systems that are not norm monotone) 32 interior
/// Latin-hypercube points drawn from `seed`. The origin is not included.
pub fn ball_samples(n: usize, r: f64, norm_monotone: bool, seed: u64) -> Vec<Vec<f64>> {
    let mut pts: Vec<Vec<f64>> = sphere_directions(n)
        .into_iter()
        .map(|d| d.into_iter().map(|c| c * r).collect())
        .collect();
    if !norm_monotone && n > 0 && r > 0.0 {
        const LAYER: usize = 32;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        let perms: Vec<Vec<usize>> = (0..n)
            .map(|_| {
                let mut p: Vec<usize> = (0..LAYER).collect();
                p.shuffle(&mut rng);
                p
            })
            .collect();
        for j in 0..LAYER {
            let mut v: Vec<f64> = (0..n)
                .map(|c| {
                    let u: f64 = rng.gen();
                    -1.0 + 2.0 * (perms[c][j] as f64 + u) / LAYER as f64
                })
                .collect();
            // keep inside the ball
            let nv = super::norm(&v);
            if nv > 1.0 {
                v.iter_mut().for_each(|c| *c /= nv);
            }
            pts.push(v.into_iter().map(|c| c * r).collect());
        }
    }
    pts
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_box_gives_singleton() {
        let e = build_ensemble(&DisturbanceBox::none(), &EnsembleSpec::default());
        assert_eq!(e, vec![DisturbanceSignal::empty()]);
    }

    #[test]
    fn ensemble_is_seeded_and_inside() {
        let bx = DisturbanceBox::new(vec![[-1.0, 1.0]]).unwrap();
        let spec = EnsembleSpec::default();
        let a = build_ensemble(&bx, &spec);
        let b = build_ensemble(&bx, &spec);
        assert_eq!(a, b);
        assert_eq!(a.len(), 2 + 64);
        assert_eq!(a[0], DisturbanceSignal::constant(vec![1.0]));
        assert!(a.iter().all(|s| s.inside(&bx)));
        assert!(a.iter().all(|s| s.breakpoints().len() <= 9));
        let c = build_ensemble(&bx, &EnsembleSpec { seed: 1, ..spec });
        assert_ne!(a, c);
    }

    #[test]
    fn ball_samples_stay_in_ball() {
        for n in 1..4 {
            for mono in [true, false] {
                let pts = ball_samples(n, 2.0, mono, 0);
                assert!(pts.iter().all(|p| super::super::norm(p) <= 2.0 + 1e-12));
                assert_eq!(pts.len() > sphere_directions(n).len(), !mono);
            }
        }
    }
}
