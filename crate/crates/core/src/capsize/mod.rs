//! Capsize classification, dividing manifolds, time to capsize and the integrity measure.

mod classify;
mod dividing;
mod integrity;

pub use classify::{
    classify_by_integration, classify_state, classify_state_lenient, ClassificationReport, EscapeOptions, Label,
    Method, StableGraphs,
};
pub use dividing::{
    build_dividing_manifold, complement_normal, hermite_state, time_to_capsize, time_to_transition_1dof,
    CapsizeTime, DividingManifold, OrientationProbe,
};
pub use integrity::{integrity_measure, region_volume_mc, sample_well_region, sampling_box_volume, well_region_volume, IntegrityResult};

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::SaddleSystem;
use crate::error::Result;

/// Uniform states in the box `prod [lo_i, hi_i]`.
pub fn uniform_states(bounds: &[(f64, f64)], count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    (0..count).map(|_| bounds.iter().map(|&(lo, hi)| rng.random_range(lo..hi)).collect()).collect()
}

/// Graph classification of many states (overlaps resolved leniently and flagged).
pub fn classify_batch(states: &[Vec<f64>], t: f64, graphs: &StableGraphs) -> Vec<ClassificationReport> {
    states.par_iter().map(|s| classify_state_lenient(s, t, graphs)).collect()
}

/// Direct-integration classification of many states.
pub fn integrate_batch(sys: &SaddleSystem, states: &[Vec<f64>], t0: f64, opts: &EscapeOptions) -> Result<Vec<ClassificationReport>> {
    states.par_iter().map(|s| classify_by_integration(sys, s, t0, opts)).collect()
}

/// Agreement statistics between predicted and reference capsize labels. `sensitivity` is the
/// fraction of capsize predictions that are correct, `specificity` the fraction of safe
/// predictions that are correct.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgreementSummary {
    pub n: usize,
    pub accuracy: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub true_capsize: usize,
    pub false_capsize: usize,
    pub true_safe: usize,
    pub false_safe: usize,
    pub reference_capsize_fraction: f64,
    pub inconsistent: usize,
    pub extrapolated: usize,
}

pub fn agreement(predicted: &[ClassificationReport], reference: &[ClassificationReport]) -> AgreementSummary {
    let (mut tc, mut fc, mut ts, mut fs) = (0, 0, 0, 0);
    for (p, r) in predicted.iter().zip(reference) {
        match (p.label.is_capsize(), r.label.is_capsize()) {
            (true, true) => tc += 1,
            (true, false) => fc += 1,
            (false, false) => ts += 1,
            (false, true) => fs += 1,
        }
    }
    let n = predicted.len().min(reference.len());
    let ratio = |a: usize, b: usize| if b == 0 { f64::NAN } else { a as f64 / b as f64 };
    AgreementSummary {
        n,
        accuracy: ratio(tc + ts, n),
        sensitivity: ratio(tc, tc + fc),
        specificity: ratio(ts, ts + fs),
        true_capsize: tc,
        false_capsize: fc,
        true_safe: ts,
        false_safe: fs,
        reference_capsize_fraction: ratio(tc + fs, n),
        inconsistent: predicted.iter().filter(|p| p.inconsistent).count(),
        extrapolated: predicted.iter().filter(|p| p.extrapolated).count(),
    }
}

/// CSV `x,y,vx,vy,label,margin,tcross` (generic state width).
pub fn reports_csv(reports: &[ClassificationReport]) -> String {
    let d = reports.first().map_or(4, |r| r.state.len());
    let names = ["x", "y", "vx", "vy"];
    let mut s = String::new();
    for i in 0..d {
        if i > 0 {
            s.push(',');
        }
        s.push_str(names.get(i).copied().unwrap_or("z"));
    }
    s.push_str(",label,margin,tcross\n");
    for r in reports {
        for (i, v) in r.state.iter().enumerate() {
            if i > 0 {
                s.push(',');
            }
            let _ = write!(s, "{v:.16e}");
        }
        let margin = r.margin.map_or(String::new(), |m| format!("{m:.16e}"));
        let tc = r.crossing_time.map_or(String::new(), |m| format!("{m:.16e}"));
        let _ = writeln!(s, ",{},{margin},{tc}", r.label.as_str());
    }
    s
}
