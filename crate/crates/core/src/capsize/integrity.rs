use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::hamiltonian_2dof;

/// Volume of `U = {H < 1/4, |y| < 1}`: the velocity ellipse over `(x, y)` has area
/// `2 pi sqrt(2h) (1/4 - W)`, and `W < 1/4` is `2y^2 - 1 < x < 1`, giving `64 pi sqrt(2h) / 105`.
pub fn well_region_volume(h: f64) -> f64 {
    64.0 * std::f64::consts::PI * (2.0 * h).sqrt() / 105.0
}

/// Volume of the sampling box `C = (-1,1)^2 x (-sqrt h, sqrt h) x (-sqrt 2, sqrt 2)`.
pub fn sampling_box_volume(h: f64) -> f64 {
    16.0 * (2.0 * h).sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegrityResult {
    /// Safe fraction times the analytic volume of U.
    pub absolute: f64,
    /// Safe fraction of U.
    pub relative: f64,
    pub std_error: f64,
    pub accepted: usize,
    pub draws: usize,
    /// Analytic volume of U.
    pub region_volume: f64,
    /// Monte-Carlo estimate of the volume of U from the acceptance rate.
    pub region_volume_mc: f64,
    pub region_volume_mc_se: f64,
    pub seed: u64,
}

/// Accepted points of U, half with `y > 0` and half with `y < 0`.
pub fn sample_well_region(h: f64, samples: usize, seed: u64) -> (Vec<[f64; 4]>, usize) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let (sh, s2) = (h.sqrt(), 2f64.sqrt());
    let per = samples.div_ceil(2);
    let mut out = Vec::with_capacity(2 * per);
    let mut draws = 0;
    for sign in [1.0, -1.0] {
        let mut got = 0;
        while got < per {
            draws += 1;
            let x = rng.random_range(-1.0..1.0);
            let y = sign * rng.random_range(0.0..1.0);
            let vx = rng.random_range(-sh..sh);
            let vy = rng.random_range(-s2..s2);
            if hamiltonian_2dof(h, x, y, vx, vy) < 0.25 && y.abs() < 1.0 {
                out.push([x, y, vx, vy]);
                got += 1;
            }
        }
    }
    (out, draws)
}

/// Monte-Carlo volume of U from exactly `draws` uniform points of C, with its standard error.
pub fn region_volume_mc(h: f64, draws: usize, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let (sh, s2) = (h.sqrt(), 2f64.sqrt());
    let mut hits = 0usize;
    for _ in 0..draws {
        let x = rng.random_range(-1.0..1.0);
        let y = rng.random_range(-1.0..1.0);
        let vx = rng.random_range(-sh..sh);
        let vy = rng.random_range(-s2..s2);
        if hamiltonian_2dof(h, x, y, vx, vy) < 0.25 {
            hits += 1;
        }
    }
    let p = hits as f64 / draws as f64;
    let v = sampling_box_volume(h);
    (v * p, v * (p * (1.0 - p) / draws as f64).sqrt())
}

/// Safe volume of U under `is_safe`, by stratified rejection sampling in C.
pub fn integrity_measure<F>(is_safe: F, h: f64, samples: usize, seed: u64) -> IntegrityResult
where
    F: Fn(&[f64; 4]) -> bool + Sync,
{
    let (points, draws) = sample_well_region(h, samples, seed);
    let half = points.len() / 2;
    let safe: Vec<bool> = points.par_iter().map(&is_safe).collect();
    let frac = |s: &[bool]| s.iter().filter(|b| **b).count() as f64 / s.len() as f64;
    let (p1, p2) = (frac(&safe[..half]), frac(&safe[half..]));
    let relative = 0.5 * (p1 + p2);
    let std_error = 0.5 * (p1 * (1.0 - p1) / half as f64 + p2 * (1.0 - p2) / (points.len() - half) as f64).sqrt();
    let acc = points.len() as f64 / draws as f64;
    let vbox = sampling_box_volume(h);
    let region_volume = well_region_volume(h);
    IntegrityResult {
        absolute: relative * region_volume,
        relative,
        std_error,
        accepted: points.len(),
        draws,
        region_volume,
        region_volume_mc: acc * vbox,
        region_volume_mc_se: vbox * (acc * (1.0 - acc) / draws as f64).sqrt(),
        seed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accept_all_gives_full_volume() {
        let r = integrity_measure(|_| true, 1.0, 20_000, 3);
        assert_eq!(r.relative, 1.0);
        assert!((r.absolute - well_region_volume(1.0)).abs() < 1e-12);
        assert!((r.region_volume_mc - r.region_volume).abs() < 4.0 * r.region_volume_mc_se);
    }

    #[test]
    fn samples_lie_in_region() {
        let (pts, draws) = sample_well_region(2.0, 1000, 9);
        assert!(draws >= pts.len());
        assert_eq!(pts.iter().filter(|p| p[1] > 0.0).count(), 500);
        assert!(pts.iter().all(|p| hamiltonian_2dof(2.0, p[0], p[1], p[2], p[3]) < 0.25));
    }

    #[test]
    fn fixed_draw_volume_matches_closed_form() {
        for h in [0.5, 1.0, 2.0] {
            let (v, se) = region_volume_mc(h, 200_000, 4);
            assert!((v - well_region_volume(h)).abs() < 4.0 * se, "h = {h}: {v} vs {}", well_region_volume(h));
        }
    }

    #[test]
    fn half_classifier_gives_half() {
        let r = integrity_measure(|p| p[1] > 0.0, 1.0, 10_000, 1);
        assert!((r.relative - 0.5).abs() < 1e-12);
    }
}
