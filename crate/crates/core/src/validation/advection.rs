use serde::{Deserialize, Serialize};

use crate::bvp::{manifold_trajectory, ManifoldKind, NewtonOptions, WindowRule};
use crate::dynamics::{rk4_step, GridTrajectory, Rk4Work, SaddleSystem};
use crate::error::{Error, Result};
use crate::saddle::SaddleEigenstructure;

/// Insertion thresholds `(alpha, d_alpha, delta)`.
///
/// A new point goes between `p_i` and `p_{i+1}` when the gap `g` exceeds `delta` and
/// `g > alpha`, or the turning angle `a` at either end exceeds `alpha`, or `g * a > d_alpha`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HobsonParams {
    pub alpha: f64,
    pub d_alpha: f64,
    pub delta: f64,
}

impl Default for HobsonParams {
    fn default() -> Self {
        Self { alpha: 0.3, d_alpha: 1e-4, delta: 1e-6 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdvectedCurve {
    pub points: Vec<[f64; 2]>,
    /// Time the points belong to.
    pub time: f64,
    pub start_time: f64,
    pub dt: f64,
    pub params: HobsonParams,
    pub inserted: usize,
    /// The point limit was hit; `time` is where advection stopped.
    pub aborted: bool,
}

impl AdvectedCurve {
    /// Turns an aborted advection into [`Error::CurveExplosion`].
    pub fn into_result(self) -> Result<Self> {
        if self.aborted {
            Err(Error::CurveExplosion { points: self.points.len() })
        } else {
            Ok(self)
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,v\n");
        for p in &self.points {
            s.push_str(&format!("{:.16e},{:.16e}\n", p[0], p[1]));
        }
        s
    }

    pub fn length(&self) -> f64 {
        self.points.windows(2).map(|w| dist(w[0], w[1])).sum()
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn turning_angle(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    let u = [b[0] - a[0], b[1] - a[1]];
    let v = [c[0] - b[0], c[1] - b[1]];
    let cross = u[0] * v[1] - u[1] * v[0];
    let dot = u[0] * v[0] + u[1] * v[1];
    cross.atan2(dot).abs()
}

/// Natural cubic spline through `(s_i, y_i)`, `s` strictly increasing.
#[derive(Clone, Debug)]
pub struct NaturalSpline {
    s: Vec<f64>,
    y: Vec<f64>,
    m: Vec<f64>,
}

impl NaturalSpline {
    pub fn new(s: &[f64], y: &[f64]) -> Self {
        let n = s.len();
        let mut m = vec![0.0; n];
        if n > 2 {
            // Thomas algorithm for the interior second derivatives.
            let k = n - 2;
            let mut diag = vec![0.0; k];
            let mut rhs = vec![0.0; k];
            let mut sup = vec![0.0; k];
            for i in 0..k {
                let h0 = s[i + 1] - s[i];
                let h1 = s[i + 2] - s[i + 1];
                diag[i] = 2.0 * (h0 + h1);
                sup[i] = h1;
                rhs[i] = 6.0 * ((y[i + 2] - y[i + 1]) / h1 - (y[i + 1] - y[i]) / h0);
            }
            for i in 1..k {
                let sub = s[i + 1] - s[i];
                let w = sub / diag[i - 1];
                diag[i] -= w * sup[i - 1];
                rhs[i] -= w * rhs[i - 1];
            }
            m[k] = rhs[k - 1] / diag[k - 1];
            for i in (0..k - 1).rev() {
                m[i + 1] = (rhs[i] - sup[i] * m[i + 2]) / diag[i];
            }
        }
        Self { s: s.to_vec(), y: y.to_vec(), m }
    }

    pub fn eval(&self, t: f64) -> f64 {
        let n = self.s.len();
        let i = match self.s.partition_point(|v| *v <= t) {
            0 => 0,
            k => (k - 1).min(n - 2),
        };
        let h = self.s[i + 1] - self.s[i];
        let a = (self.s[i + 1] - t) / h;
        let b = (t - self.s[i]) / h;
        a * self.y[i]
            + b * self.y[i + 1]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0
    }
}

fn needs_insertion(pts: &[[f64; 2]], i: usize, p: &HobsonParams) -> bool {
    let g = dist(pts[i], pts[i + 1]);
    if g <= p.delta {
        return false;
    }
    let mut angle: f64 = 0.0;
    if i > 0 {
        angle = angle.max(turning_angle(pts[i - 1], pts[i], pts[i + 1]));
    }
    if i + 2 < pts.len() {
        angle = angle.max(turning_angle(pts[i], pts[i + 1], pts[i + 2]));
    }
    g > p.alpha || angle > p.alpha || g * angle > p.d_alpha
}

/// One insertion pass: midpoints (in chord length) of every flagged gap from a natural spline
/// through the current points. Returns the number of inserted points.
pub fn hobson_refine(pts: &mut Vec<[f64; 2]>, p: &HobsonParams) -> usize {
    if pts.len() < 2 {
        return 0;
    }
    let flagged: Vec<usize> = (0..pts.len() - 1).filter(|&i| needs_insertion(pts, i, p)).collect();
    if flagged.is_empty() {
        return 0;
    }
    let mut s = vec![0.0; pts.len()];
    for i in 1..pts.len() {
        s[i] = s[i - 1] + dist(pts[i - 1], pts[i]).max(1e-300);
    }
    let xs: Vec<f64> = pts.iter().map(|p| p[0]).collect();
    let vs: Vec<f64> = pts.iter().map(|p| p[1]).collect();
    let (sx, sv) = (NaturalSpline::new(&s, &xs), NaturalSpline::new(&s, &vs));
    let mut out = Vec::with_capacity(pts.len() + flagged.len());
    let mut f = flagged.iter().peekable();
    for i in 0..pts.len() {
        out.push(pts[i]);
        if f.peek() == Some(&&i) {
            f.next();
            let mid = 0.5 * (s[i] + s[i + 1]);
            out.push([sx.eval(mid), sv.eval(mid)]);
        }
    }
    *pts = out;
    flagged.len()
}

/// Options of [`advect_curve`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdvectionOptions {
    pub dt: f64,
    pub hobson: HobsonParams,
    pub max_points: usize,
}

impl Default for AdvectionOptions {
    fn default() -> Self {
        Self { dt: 0.005, hobson: HobsonParams::default(), max_points: 1000 }
    }
}

/// Advects a planar curve from `t_start` to `t_end` with RK4 steps of size `dt`, refining after
/// every step.
pub fn advect_curve(
    sys: &SaddleSystem,
    seed: &[[f64; 2]],
    t_start: f64,
    t_end: f64,
    opts: &AdvectionOptions,
) -> Result<AdvectedCurve> {
    if sys.dim() != 2 {
        return Err(Error::UnsupportedRegime("curve advection is planar".into()));
    }
    if !(opts.dt > 0.0) {
        return Err(Error::Parameter("advection step must be positive".into()));
    }
    let span = t_end - t_start;
    let steps = (span.abs() / opts.dt).round().max(1.0) as usize;
    let h = span / steps as f64;
    let mut pts = seed.to_vec();
    let mut w = Rk4Work::new(2);
    let mut inserted = 0;
    let curve = |pts: Vec<[f64; 2]>, time: f64, inserted: usize, aborted: bool| AdvectedCurve {
        points: pts,
        time,
        start_time: t_start,
        dt: opts.dt,
        params: opts.hobson,
        inserted,
        aborted,
    };
    for k in 0..steps {
        let t = t_start + k as f64 * h;
        for p in pts.iter_mut() {
            let mut x = [p[0], p[1]];
            rk4_step(sys, &mut x, t, h, &mut w);
            if !(x[0].is_finite() && x[1].is_finite()) {
                return Err(Error::BlowUp { step: k, time: t });
            }
            *p = x;
        }
        for _ in 0..32 {
            let n = hobson_refine(&mut pts, &opts.hobson);
            inserted += n;
            if pts.len() > opts.max_points {
                log::warn!("curve advection aborted at t = {} with {} points", t + h, pts.len());
                return Ok(curve(pts, t + h, inserted, true));
            }
            if n == 0 {
                break;
            }
        }
    }
    Ok(curve(pts, t_end, inserted, false))
}

/// Seed segment: `count` BVP manifold points at time `t_a` with the pinned eigen-coordinate
/// equally spaced in `[-range, range]`.
#[allow(clippy::too_many_arguments)]
pub fn manifold_segment_1dof(
    sys: &SaddleSystem,
    eig: &SaddleEigenstructure,
    x_hyp: &GridTrajectory,
    kind: ManifoldKind,
    t_a: f64,
    range: f64,
    count: usize,
    newton: &NewtonOptions,
) -> Result<Vec<[f64; 2]>> {
    if sys.dim() != 2 || kind == ManifoldKind::Centre {
        return Err(Error::UnsupportedRegime("planar stable or unstable manifolds only".into()));
    }
    let j = x_hyp.grid.nearest(t_a);
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let q = if count < 2 { 0.0 } else { -range + 2.0 * range * i as f64 / (count - 1) as f64 };
        let sol = manifold_trajectory(sys, eig, x_hyp, kind, &[q], j, &WindowRule::default(), newton)?;
        let p = sol.point();
        out.push([p[0], p[1]]);
    }
    Ok(out)
}

/// Advection seeded on the BVP manifold at `t_a` and run to `t = 0`. The seed range is
/// `range * e^{-|lambda| |t_a|}`, so the advected curve has about the extent of the BVP curve
/// with `q` in `[-range, range]` at `t = 0`.
#[allow(clippy::too_many_arguments)]
pub fn advect_manifold_1dof(
    sys: &SaddleSystem,
    eig: &SaddleEigenstructure,
    x_hyp: &GridTrajectory,
    kind: ManifoldKind,
    t_a: f64,
    range: f64,
    count: usize,
    newton: &NewtonOptions,
    opts: &AdvectionOptions,
) -> Result<AdvectedCurve> {
    let rate = match kind {
        ManifoldKind::Stable => eig.lambda_minus().abs(),
        _ => eig.lambda_plus(),
    };
    let seed_range = range * (-rate * t_a.abs()).exp();
    let seed = manifold_segment_1dof(sys, eig, x_hyp, kind, t_a, seed_range, count, newton)?;
    advect_curve(sys, &seed, t_a, 0.0, opts)
}

fn closest_on_segment(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> (f64, f64) {
    let d = [b[0] - a[0], b[1] - a[1]];
    let l2 = d[0] * d[0] + d[1] * d[1];
    let u = if l2 == 0.0 { 0.0 } else { (((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / l2).clamp(0.0, 1.0) };
    (dist(p, [a[0] + u * d[0], a[1] + u * d[1]]), u)
}

/// Distance from `p` to the polyline and whether the nearest point is one of its endpoints.
fn polyline_distance(p: [f64; 2], line: &[[f64; 2]]) -> (f64, bool) {
    if line.len() == 1 {
        return (dist(p, line[0]), true);
    }
    let mut best = (f64::INFINITY, false);
    let last = line.len() - 2;
    for (i, w) in line.windows(2).enumerate() {
        let (d, u) = closest_on_segment(p, w[0], w[1]);
        if d < best.0 {
            let end = (i == 0 && u == 0.0) || (i == last && u == 1.0);
            best = (d, end);
        }
    }
    best
}

/// Hausdorff distance between two polylines over their shared extent: points whose nearest
/// point on the other curve is that curve's endpoint are skipped.
pub fn shared_hausdorff(a: &[[f64; 2]], b: &[[f64; 2]]) -> f64 {
    let one_way = |from: &[[f64; 2]], to: &[[f64; 2]]| {
        from.iter()
            .map(|p| polyline_distance(*p, to))
            .filter(|(_, end)| !end)
            .map(|(d, _)| d)
            .fold(0.0, f64::max)
    };
    one_way(a, b).max(one_way(b, a))
}
