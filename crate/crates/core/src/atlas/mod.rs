//! Sampled immersions of the stable/centre manifolds, graph fits and immersion Jacobians.

mod rbf;

pub use rbf::{RbfInterpolant, RbfOptions, RbfValue};

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bvp::{manifold_trajectory, ManifoldKind, NewtonOptions, WindowRule};
use crate::dynamics::{GridTrajectory, SaddleSystem};
use crate::error::{Error, Result};
use crate::saddle::SaddleEigenstructure;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LatticePattern {
    /// Full tensor lattice, `count^m` points.
    Full,
    /// Origin plus the points on the coordinate axes, `1 + 2 m (count - 1) / 2` points.
    Axes,
}

/// Lattice `{-R, ..., R}^m` with `count` points per axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub bound: f64,
    pub count: usize,
    pub pattern: LatticePattern,
}

impl LatticeSpec {
    pub fn full(bound: f64, count: usize) -> Self {
        Self { bound, count, pattern: LatticePattern::Full }
    }

    pub fn axes(bound: f64, count: usize) -> Self {
        Self { bound, count, pattern: LatticePattern::Axes }
    }

    pub fn step(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            2.0 * self.bound / (self.count - 1) as f64
        }
    }

    fn axis_values(&self) -> Vec<f64> {
        if self.count < 2 {
            return vec![0.0];
        }
        (0..self.count).map(|i| -self.bound + i as f64 * self.step()).collect()
    }

    /// Lattice points in dimension `m`.
    pub fn points(&self, m: usize) -> Vec<Vec<f64>> {
        let vals = self.axis_values();
        match self.pattern {
            LatticePattern::Full => {
                let mut out = vec![Vec::with_capacity(m)];
                for _ in 0..m {
                    out = out
                        .into_iter()
                        .flat_map(|p| {
                            vals.iter().map(move |v| {
                                let mut q = p.clone();
                                q.push(*v);
                                q
                            })
                        })
                        .collect();
                }
                out
            }
            LatticePattern::Axes => {
                let mut out = vec![vec![0.0; m]];
                for axis in 0..m {
                    for v in &vals {
                        if v.abs() > 1e-12 {
                            let mut q = vec![0.0; m];
                            q[axis] = *v;
                            out.push(q);
                        }
                    }
                }
                out
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifoldSample {
    pub q: Vec<f64>,
    pub t0: f64,
    pub point: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub clipped: bool,
}

/// Converged manifold points `iota(q, t0)` over a lattice of `q` and a list of times.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifoldSampleSet {
    pub kind: ManifoldKind,
    pub side: i8,
    pub lattice: LatticeSpec,
    pub times: Vec<f64>,
    pub samples: Vec<ManifoldSample>,
    pub failed: usize,
}

/// Sampling configuration shared by [`sample_manifold`] calls.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingOptions {
    pub window: WindowRule,
    pub newton: NewtonOptions,
    /// Largest tolerated failure fraction.
    pub max_failed_fraction: f64,
}

impl Default for SamplingOptions {
    fn default() -> Self {
        // The chord iteration converges linearly far from the saddle, so lattice corners need
        // more than the hyperbolic solve's 50 iterations.
        let newton = NewtonOptions { max_iter: 100, ..NewtonOptions::default() };
        Self { window: WindowRule::default(), newton, max_failed_fraction: 0.2 }
    }
}

/// One manifold solve per lattice point per time node. Failed solves are counted and dropped.
pub fn sample_manifold(
    sys: &SaddleSystem,
    eig: &SaddleEigenstructure,
    x_hyp: &GridTrajectory,
    kind: ManifoldKind,
    lattice: &LatticeSpec,
    times: &[f64],
    opts: &SamplingOptions,
) -> Result<ManifoldSampleSet> {
    let m = kind.param_dim(eig);
    let qs = lattice.points(m);
    let nodes: Vec<(f64, usize)> = times
        .iter()
        .map(|&t| {
            let j = x_hyp.grid.nearest(t);
            (x_hyp.grid.time(j), j)
        })
        .collect();
    let jobs: Vec<(usize, usize)> = (0..nodes.len()).flat_map(|a| (0..qs.len()).map(move |b| (a, b))).collect();
    let results: Vec<Option<ManifoldSample>> = jobs
        .par_iter()
        .map(|&(a, b)| {
            let (t0, j) = nodes[a];
            let q = &qs[b];
            match manifold_trajectory(sys, eig, x_hyp, kind, q, j, &opts.window, &opts.newton) {
                Ok(sol) => Some(ManifoldSample {
                    q: q.clone(),
                    t0,
                    point: sol.point().to_vec(),
                    iterations: sol.report.iterations,
                    residual: sol.report.final_residual,
                    clipped: sol.clipped,
                }),
                Err(e) => {
                    log::debug!("manifold solve failed at t0 = {t0}, q = {q:?}: {e}");
                    None
                }
            }
        })
        .collect();
    let total = results.len();
    let samples: Vec<ManifoldSample> = results.into_iter().flatten().collect();
    let failed = total - samples.len();
    if failed as f64 > opts.max_failed_fraction * total as f64 {
        return Err(Error::Sampling { failed, total });
    }
    if failed > 0 {
        log::warn!("{failed} of {total} manifold solves failed and were excluded");
    }
    Ok(ManifoldSampleSet {
        kind,
        side: sys.side,
        lattice: *lattice,
        times: nodes.iter().map(|n| n.0).collect(),
        samples,
        failed,
    })
}

impl ManifoldSampleSet {
    /// CSV `side,kind,t0,q1..qm,x1..xd`.
    pub fn to_csv(&self) -> String {
        let m = self.samples.first().map_or(0, |s| s.q.len());
        let d = self.samples.first().map_or(0, |s| s.point.len());
        let mut s = String::from("side,kind,t0");
        for i in 1..=m {
            let _ = write!(s, ",q{i}");
        }
        for i in 1..=d {
            let _ = write!(s, ",x{i}");
        }
        s.push('\n');
        let kind = match self.kind {
            ManifoldKind::Centre => "centre",
            ManifoldKind::Stable => "stable",
            ManifoldKind::Unstable => "unstable",
        };
        for smp in &self.samples {
            let _ = write!(s, "{},{kind},{:.16e}", self.side, smp.t0);
            for v in smp.q.iter().chain(&smp.point) {
                let _ = write!(s, ",{v:.16e}");
            }
            s.push('\n');
        }
        s
    }

    /// Sample at `(q, t)` if present.
    pub fn find(&self, q: &[f64], t: f64) -> Option<&ManifoldSample> {
        self.samples.iter().find(|s| {
            (s.t0 - t).abs() < 1e-9 && s.q.len() == q.len() && s.q.iter().zip(q).all(|(a, b)| (a - b).abs() < 1e-9)
        })
    }

    /// Graph inputs `(t0, point without axis)` and values `point[axis]`.
    pub fn graph_data(&self, axis: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut inputs = Vec::with_capacity(self.samples.len());
        let mut values = Vec::with_capacity(self.samples.len());
        for s in &self.samples {
            let mut z = vec![s.t0];
            z.extend(s.point.iter().enumerate().filter(|(i, _)| *i != axis).map(|(_, v)| *v));
            inputs.push(z);
            values.push(s.point[axis]);
        }
        (inputs, values)
    }
}

/// Graph of component `axis` over `(t, other components)` fitted through the samples.
pub fn fit_graph(samples: &ManifoldSampleSet, axis: usize, opts: &RbfOptions) -> Result<ManifoldGraph> {
    let (inputs, values) = samples.graph_data(axis);
    let rbf = RbfInterpolant::fit(&inputs, &values, opts)?;
    Ok(ManifoldGraph { axis, side: samples.side, rbf })
}

/// `x[axis] = g(t, x without axis)` representation of a manifold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifoldGraph {
    pub axis: usize,
    pub side: i8,
    pub rbf: RbfInterpolant,
}

impl ManifoldGraph {
    /// Graph value at the base point of `state` (its `axis` entry is ignored).
    pub fn eval(&self, t: f64, state: &[f64]) -> RbfValue {
        let mut z = Vec::with_capacity(state.len());
        z.push(t);
        z.extend(state.iter().enumerate().filter(|(i, _)| *i != self.axis).map(|(_, v)| *v));
        self.rbf.eval(&z)
    }
}

/// Central-difference Jacobian `d iota / d q` at `q = 0`, time `t`, using lattice step `h`:
/// column `i` is `(iota(h e_i) - iota(-h e_i)) / 2h`.
pub fn immersion_jacobian(samples: &ManifoldSampleSet, t: f64) -> Result<DMatrix<f64>> {
    let h = samples.lattice.step();
    let first = samples.samples.first().ok_or_else(|| Error::MissingSample("empty sample set".into()))?;
    let (m, d) = (first.q.len(), first.point.len());
    if h <= 0.0 {
        return Err(Error::MissingSample("lattice has no step".into()));
    }
    let mut jac = DMatrix::zeros(d, m);
    for i in 0..m {
        let mut qp = vec![0.0; m];
        qp[i] = h;
        let mut qm = vec![0.0; m];
        qm[i] = -h;
        let (sp, sm) = match (samples.find(&qp, t), samples.find(&qm, t)) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(Error::MissingSample(format!("q = ±{h} e_{} at t = {t}", i + 1))),
        };
        for r in 0..d {
            jac[(r, i)] = (sp.point[r] - sm.point[r]) / (2.0 * h);
        }
    }
    Ok(jac)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lattice_sizes() {
        assert_eq!(LatticeSpec::full(1.5, 5).points(3).len(), 125);
        assert_eq!(LatticeSpec::full(1.5, 1).points(3), vec![vec![0.0; 3]]);
        let ax = LatticeSpec::axes(0.5, 5).points(3);
        assert_eq!(ax.len(), 13);
        assert!(ax.contains(&vec![0.0, -0.25, 0.0]));
        assert!((LatticeSpec::full(0.5, 5).step() - 0.25).abs() < 1e-15);
    }
}
