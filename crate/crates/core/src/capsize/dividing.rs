use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::classify::{classify_by_integration, EscapeOptions, Label};
use crate::dynamics::{rk4_step, GridTrajectory, Rk4Work, SaddleSystem};
use crate::error::{Error, Result};
use crate::saddle::SaddleEigenstructure;

/// Piecewise-linear family of affine functionals `L_t(x) = n_t . x + b_t` whose zero sets
/// approximate the dividing manifold of one saddle. `L_t > 0` is the capsized side.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DividingManifold {
    pub side: i8,
    pub times: Vec<f64>,
    pub normals: Vec<Vec<f64>>,
    pub offsets: Vec<f64>,
    /// Crossings only count where `side * x[component] > 0`.
    pub gate_component: Option<usize>,
}

impl DividingManifold {
    pub fn t_first(&self) -> f64 {
        self.times[0]
    }

    pub fn t_last(&self) -> f64 {
        *self.times.last().unwrap()
    }

    /// `L_t(x)`, linearly interpolating `(n_t, b_t)` between nodes; `None` outside the nodes.
    pub fn value(&self, t: f64, x: &[f64]) -> Option<f64> {
        let n = self.times.len();
        let eps = 1e-9;
        if t < self.times[0] - eps || t > self.times[n - 1] + eps {
            return None;
        }
        if n == 1 {
            return Some(dot(&self.normals[0], x) + self.offsets[0]);
        }
        let i = match self.times.partition_point(|s| *s <= t) {
            0 => 0,
            k => (k - 1).min(n - 2),
        };
        let w = ((t - self.times[i]) / (self.times[i + 1] - self.times[i])).clamp(0.0, 1.0);
        let a = dot(&self.normals[i], x) + self.offsets[i];
        let b = dot(&self.normals[i + 1], x) + self.offsets[i + 1];
        Some((1.0 - w) * a + w * b)
    }

    pub fn in_gate(&self, x: &[f64]) -> bool {
        self.gate_component.is_none_or(|c| f64::from(self.side) * x[c] > 0.0)
    }

    /// Capsized according to this side at time `t`.
    pub fn capsized(&self, t: f64, x: &[f64]) -> Option<bool> {
        self.value(t, x).map(|v| v > 0.0 && self.in_gate(x))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Unit vector orthogonal to the columns of `span` (assumed `d x (d-1)`), or `None` if the
/// columns are rank deficient.
pub fn complement_normal(span: &DMatrix<f64>) -> Option<DVector<f64>> {
    let d = span.nrows();
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let scale = span.amax().max(1e-300);
    for c in 0..span.ncols() {
        let mut v: DVector<f64> = span.column(c).into();
        for _ in 0..2 {
            for b in &basis {
                let p = b.dot(&v);
                v -= b * p;
            }
        }
        let nv = v.norm();
        if nv < 1e-8 * scale {
            return None;
        }
        basis.push(v / nv);
    }
    let mut best: Option<DVector<f64>> = None;
    for e in 0..d {
        let mut v = DVector::zeros(d);
        v[e] = 1.0;
        for _ in 0..2 {
            for b in &basis {
                let p = b.dot(&v);
                v -= b * p;
            }
        }
        if best.as_ref().is_none_or(|w| v.norm() > w.norm()) {
            best = Some(v);
        }
    }
    best.map(|v| {
        let n = v.norm();
        v / n
    })
}

/// Probe used to orient the first functional.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrientationProbe {
    /// Displacement along the unstable eigenvector.
    pub distance: f64,
    pub escape: EscapeOptions,
    /// Integration length after the first node.
    pub duration: f64,
}

impl Default for OrientationProbe {
    fn default() -> Self {
        Self { distance: 0.1, escape: EscapeOptions::default(), duration: 20.0 }
    }
}

/// Builds `L_t` at every `(t, jacobian)` node. The spanning set is the centre columns of the
/// immersion Jacobian plus `(J_s + v_u)/2` for each strong-stable column `J_s`, with `v_u` the
/// unstable eigenvector.
pub fn build_dividing_manifold(
    sys: &SaddleSystem,
    x_hyp: &GridTrajectory,
    jacobians: &[(f64, DMatrix<f64>)],
    eig: &SaddleEigenstructure,
    probe: &OrientationProbe,
) -> Result<DividingManifold> {
    if jacobians.is_empty() {
        return Err(Error::Parameter("no Jacobians supplied".into()));
    }
    if eig.n_plus != 1 {
        return Err(Error::UnsupportedRegime("dividing manifold needs one unstable direction".into()));
    }
    let d = eig.dim();
    let vu = DVector::from_vec(eig.basis(eig.dim() - 1));
    let mut times = Vec::with_capacity(jacobians.len());
    let mut normals: Vec<Vec<f64>> = Vec::with_capacity(jacobians.len());
    let mut offsets = Vec::with_capacity(jacobians.len());
    for (t, jac) in jacobians {
        if jac.nrows() != d || jac.ncols() != d - 1 {
            return Err(Error::Parameter(format!("Jacobian at t = {t} must be {d} x {}", d - 1)));
        }
        let mut span = jac.clone();
        for c in eig.n_c..jac.ncols() {
            let col = (jac.column(c) + &vu) * 0.5;
            span.set_column(c, &col);
        }
        let mut n = complement_normal(&span).ok_or(Error::RankDeficient(*t))?;
        if let Some(prev) = normals.last() {
            if dot(prev, n.as_slice()) < 0.0 {
                n = -n;
            }
        }
        let anchor = x_hyp
            .interpolate(*t)
            .ok_or_else(|| Error::Parameter(format!("t = {t} outside the hyperbolic trajectory")))?;
        times.push(*t);
        offsets.push(-dot(n.as_slice(), &anchor));
        normals.push(n.iter().copied().collect());
    }

    // Orientation from the fate of X_hyp(t_1) +/- distance * v_u.
    let t1 = times[0];
    let anchor = x_hyp.interpolate(t1).unwrap();
    let mut sign = 0.0;
    let side_label = Label::from_side(f64::from(sys.side));
    let esc = EscapeOptions { t_max: t1 + probe.duration, ..probe.escape };
    for s in [1.0, -1.0] {
        let x: Vec<f64> = anchor.iter().zip(vu.iter()).map(|(a, v)| a + s * probe.distance * v).collect();
        let r = classify_by_integration(sys, &x, t1, &esc)?;
        if r.label == side_label {
            sign = s;
            break;
        }
    }
    if sign == 0.0 {
        // Neither probe escaped over this saddle: orient v_u outward in the gate component.
        log::warn!("orientation probes did not escape; using the geometric rule");
        sign = if f64::from(sys.side) * vu[1] > 0.0 { 1.0 } else { -1.0 };
    }
    let outward = vu * sign;
    if dot(&normals[0], outward.as_slice()) < 0.0 {
        for (n, b) in normals.iter_mut().zip(offsets.iter_mut()) {
            n.iter_mut().for_each(|v| *v = -*v);
            *b = -*b;
        }
    }
    Ok(DividingManifold { side: sys.side, times, normals, offsets, gate_component: if d == 4 { Some(1) } else { None } })
}

/// Outcome of [`time_to_capsize`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "kebab-case")]
pub enum CapsizeTime {
    Crossed { side: i8, time: f64 },
    NoCrossing,
    /// No crossing while the dividing manifolds were defined, but `t_end` lies beyond them.
    HorizonExceeded { last_time: f64 },
}

fn capsized_any(dividing: &[DividingManifold], t: f64, x: &[f64]) -> Option<i8> {
    dividing.iter().find(|d| d.capsized(t, x) == Some(true)).map(|d| d.side)
}

/// First time the trajectory from `(state, t0)` enters a capsized half-space, bisected to 1e-6.
pub fn time_to_capsize(
    sys: &SaddleSystem,
    state: &[f64],
    t0: f64,
    t_end: f64,
    dividing: &[DividingManifold],
    step: f64,
) -> Result<CapsizeTime> {
    if dividing.is_empty() {
        return Err(Error::Parameter("no dividing manifolds".into()));
    }
    let cover_lo = dividing.iter().map(DividingManifold::t_first).fold(f64::NEG_INFINITY, f64::max);
    let cover_hi = dividing.iter().map(DividingManifold::t_last).fold(f64::INFINITY, f64::min);
    if t0 < cover_lo - 1e-9 || t0 > cover_hi + 1e-9 {
        return Ok(CapsizeTime::HorizonExceeded { last_time: t0 });
    }
    if let Some(side) = capsized_any(dividing, t0, state) {
        return Ok(CapsizeTime::Crossed { side, time: t0 });
    }
    let stop = t_end.min(cover_hi);
    let mut x = state.to_vec();
    let mut w = Rk4Work::new(x.len());
    let mut t = t0;
    while t < stop - 1e-12 {
        let h = step.min(stop - t);
        let prev = x.clone();
        rk4_step(sys, &mut x, t, h, &mut w);
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::BlowUp { step: 0, time: t });
        }
        if let Some(side) = capsized_any(dividing, t + h, &x) {
            let (mut lo, mut hi) = (0.0, h);
            let mut y = prev.clone();
            while hi - lo > 1e-7 {
                let mid = 0.5 * (lo + hi);
                y.copy_from_slice(&prev);
                rk4_step(sys, &mut y, t, mid, &mut w);
                if capsized_any(dividing, t + mid, &y).is_some() {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return Ok(CapsizeTime::Crossed { side, time: t + hi });
        }
        t += h;
    }
    if t_end > cover_hi + 1e-9 {
        Ok(CapsizeTime::HorizonExceeded { last_time: cover_hi })
    } else {
        Ok(CapsizeTime::NoCrossing)
    }
}

/// Cubic Hermite interpolation of a converged trajectory using the vector field as slope.
pub fn hermite_state(sys: &SaddleSystem, traj: &GridTrajectory, t: f64) -> Option<Vec<f64>> {
    let g = &traj.grid;
    if t < g.t_minus - 1e-12 || t > g.t_plus + 1e-12 {
        return None;
    }
    let dt = g.dt();
    let s = ((t - g.t_minus) / dt).clamp(0.0, (g.n - 1) as f64);
    let i = (s.floor() as usize).min(g.n - 2);
    let u = s - i as f64;
    let (a, b) = (traj.state(i), traj.state(i + 1));
    let d = traj.dim;
    let mut fa = vec![0.0; d];
    let mut fb = vec![0.0; d];
    sys.eval(a, g.time(i), &mut fa);
    sys.eval(b, g.time(i + 1), &mut fb);
    let (h00, h10, h01, h11) = (
        2.0 * u.powi(3) - 3.0 * u * u + 1.0,
        u.powi(3) - 2.0 * u * u + u,
        -2.0 * u.powi(3) + 3.0 * u * u,
        u.powi(3) - u * u,
    );
    Some((0..d).map(|c| h00 * a[c] + h10 * dt * fa[c] + h01 * b[c] + h11 * dt * fb[c]).collect())
}

/// 1DoF transition time: first crossing of `x = x_hyp(t)` after `t0`, or `None` before `t_end`
/// (clamped to the trajectory's grid).
pub fn time_to_transition_1dof(
    sys: &SaddleSystem,
    x_hyp: &GridTrajectory,
    state: &[f64],
    t0: f64,
    t_end: f64,
    step: f64,
) -> Result<Option<f64>> {
    let gap = |x: &[f64], t: f64| -> f64 { x[0] - hermite_state(sys, x_hyp, t).map_or(f64::NAN, |h| h[0]) };
    let stop = t_end.min(x_hyp.grid.t_plus);
    let mut x = state.to_vec();
    let mut w = Rk4Work::new(x.len());
    let mut t = t0;
    let mut g0 = gap(&x, t);
    if !g0.is_finite() {
        return Err(Error::Parameter(format!("t0 = {t0} outside the hyperbolic trajectory")));
    }
    if g0 == 0.0 {
        return Ok(Some(t0));
    }
    while t < stop - 1e-12 {
        let h = step.min(stop - t);
        let prev = x.clone();
        rk4_step(sys, &mut x, t, h, &mut w);
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::BlowUp { step: 0, time: t });
        }
        let g1 = gap(&x, t + h);
        if g1 == 0.0 || g1.signum() != g0.signum() {
            let (mut lo, mut hi) = (0.0, h);
            let mut y = prev.clone();
            while hi - lo > 1e-7 {
                let mid = 0.5 * (lo + hi);
                y.copy_from_slice(&prev);
                rk4_step(sys, &mut y, t, mid, &mut w);
                if gap(&y, t + mid).signum() == g0.signum() {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            return Ok(Some(t + hi));
        }
        g0 = g1;
        t += h;
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complement_is_orthogonal() {
        let span = DMatrix::from_row_slice(4, 3, &[1.0, 0.0, 0.2, 0.0, 1.0, 0.3, 0.5, 0.1, 1.0, 0.0, 0.0, 0.7]);
        let n = complement_normal(&span).unwrap();
        assert!((n.norm() - 1.0).abs() < 1e-14);
        for c in 0..3 {
            assert!(span.column(c).dot(&n).abs() < 1e-13);
        }
        let deficient = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 0.0, 0.0, 1.0, 2.0]);
        assert!(complement_normal(&deficient).is_none());
    }

    #[test]
    fn interpolated_functional() {
        let dm = DividingManifold {
            side: 1,
            times: vec![0.0, 1.0],
            normals: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            offsets: vec![0.0, -1.0],
            gate_component: None,
        };
        assert_eq!(dm.value(0.5, &[2.0, 4.0]), Some(0.5 * 2.0 + 0.5 * 3.0));
        assert_eq!(dm.value(1.5, &[0.0, 0.0]), None);
    }
}
