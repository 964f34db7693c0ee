use nalgebra::{DMatrix, Matrix4, Vector4};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{hamiltonian_2dof, Model};
use crate::error::{Error, Result};

/// Undamped, unforced roll-heave flow with its variational equations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AutonomousFlow {
    pub h: f64,
    /// Fixed RK4 step.
    pub step: f64,
}

impl AutonomousFlow {
    pub fn new(h: f64) -> Self {
        Self { h, step: 1e-3 }
    }

    fn model(&self) -> Model {
        Model::RollHeave { h: self.h, kx: 0.0, ky: 0.0 }
    }

    pub fn field(&self, x: &Vector4<f64>) -> Vector4<f64> {
        let mut out = [0.0; 4];
        self.model().eval(x.as_slice(), &mut out);
        Vector4::from(out)
    }

    fn jac(&self, x: &Vector4<f64>) -> Matrix4<f64> {
        let (h, y) = (self.h, x[1]);
        Matrix4::new(
            0.0, 0.0, 1.0, 0.0, //
            0.0, 0.0, 0.0, 1.0, //
            -h, 2.0 * h * y, 0.0, 0.0, //
            y, x[0] - 1.0, 0.0, 0.0,
        )
    }

    pub fn energy(&self, x: &Vector4<f64>) -> f64 {
        hamiltonian_2dof(self.h, x[0], x[1], x[2], x[3])
    }

    pub fn step_state(&self, x: &Vector4<f64>, dt: f64) -> Vector4<f64> {
        let k1 = self.field(x);
        let k2 = self.field(&(x + k1 * (0.5 * dt)));
        let k3 = self.field(&(x + k2 * (0.5 * dt)));
        let k4 = self.field(&(x + k3 * dt));
        x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
    }

    pub fn step_with_stm(&self, x: &Vector4<f64>, m: &Matrix4<f64>, dt: f64) -> (Vector4<f64>, Matrix4<f64>) {
        let f = |x: &Vector4<f64>, m: &Matrix4<f64>| (self.field(x), self.jac(x) * m);
        let (k1, l1) = f(x, m);
        let (k2, l2) = f(&(x + k1 * (0.5 * dt)), &(m + l1 * (0.5 * dt)));
        let (k3, l3) = f(&(x + k2 * (0.5 * dt)), &(m + l2 * (0.5 * dt)));
        let (k4, l4) = f(&(x + k3 * dt), &(m + l3 * dt));
        (
            x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0),
            m + (l1 + l2 * 2.0 + l3 * 2.0 + l4) * (dt / 6.0),
        )
    }

    /// State after time `t` (either sign), in steps no longer than `step`.
    pub fn flow(&self, x: &Vector4<f64>, t: f64) -> Vector4<f64> {
        let n = (t.abs() / self.step).ceil().max(1.0) as usize;
        let dt = t / n as f64;
        (0..n).fold(*x, |y, _| self.step_state(&y, dt))
    }

    /// State and state-transition matrix after time `t`.
    pub fn flow_with_stm(&self, x: &Vector4<f64>, t: f64) -> (Vector4<f64>, Matrix4<f64>) {
        let n = (t.abs() / self.step).ceil().max(1.0) as usize;
        let dt = t / n as f64;
        (0..n).fold((*x, Matrix4::identity()), |(y, m), _| self.step_with_stm(&y, &m, dt))
    }

    /// Integrates with the STM until `v_y` changes sign (after at least `min_time`), and returns
    /// the refined event time, state and STM.
    fn to_vy_zero(&self, x0: &Vector4<f64>, min_time: f64, max_time: f64) -> Option<(f64, Vector4<f64>, Matrix4<f64>)> {
        let dt = self.step;
        let (mut x, mut m, mut t) = (*x0, Matrix4::identity(), 0.0);
        while t < max_time {
            let (xn, mn) = self.step_with_stm(&x, &m, dt);
            if t + dt > min_time && xn[3] != 0.0 && x[3].signum() != xn[3].signum() && x[3] != 0.0 {
                // Newton on the partial step length.
                let mut tau = dt * x[3] / (x[3] - xn[3]);
                for _ in 0..20 {
                    let (y, _) = self.step_with_stm(&x, &m, tau);
                    let dy = self.field(&y)[3];
                    let d = y[3] / dy;
                    tau -= d;
                    if d.abs() < 1e-15 {
                        break;
                    }
                }
                let (y, my) = self.step_with_stm(&x, &m, tau);
                return Some((t + tau, y, my));
            }
            x = xn;
            m = mn;
            t += dt;
        }
        None
    }
}

/// Symmetric periodic orbit of the autonomous roll-heave flow around the `y > 0` saddle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodicOrbit {
    pub h: f64,
    /// Rest point `(x0, y0, 0, 0)` on the zero-velocity curve.
    pub initial_state: [f64; 4],
    pub period: f64,
    pub energy: f64,
    pub amplitude: f64,
    /// `|phi_T(x0) - x0|`.
    pub closure: f64,
    /// Row-major monodromy matrix.
    pub monodromy: Vec<f64>,
    /// Floquet multipliers `(re, im)`.
    pub multipliers: Vec<[f64; 2]>,
    pub monodromy_det: f64,
    /// Eigenvector of the multiplier with modulus above one (unit length).
    pub unstable_vector: [f64; 4],
    /// Eigenvector of the multiplier with modulus below one (unit length).
    pub stable_vector: [f64; 4],
}

/// Continuation and correction settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrectionOptions {
    /// Amplitude of the first orbit along the linear centre direction.
    pub seed_amplitude: f64,
    /// Largest continuation step in amplitude.
    pub max_step: f64,
    pub max_iter: usize,
    /// Tolerance on `v_x` at the half period.
    pub tol: f64,
    /// Energy tolerance of the bisection.
    pub energy_tol: f64,
    pub step: f64,
}

impl Default for CorrectionOptions {
    fn default() -> Self {
        Self { seed_amplitude: 1e-4, max_step: 0.01, max_iter: 50, tol: 1e-12, energy_tol: 1e-8, step: 1e-3 }
    }
}

/// Configuration-space direction of the linear centre oscillation at the saddle `(1, 1)`.
pub fn centre_direction(h: f64) -> [f64; 2] {
    // Centre eigenvector (i w, -i/w, ...) of the undamped linearization.
    let (alpha, _) = crate::saddle::alpha_beta(h);
    let w = 0.5 * alpha.sqrt();
    let (a, b) = (w, -1.0 / w);
    let n = a.hypot(b);
    [-a / n, -b / n]
}

struct Corrected {
    y0: f64,
    half_period: f64,
}

fn correct(flow: &AutonomousFlow, x0: f64, mut y0: f64, amplitude: f64, opts: &CorrectionOptions) -> Result<Corrected> {
    let err = |reason: String| Error::Continuation { amplitude, reason };
    for _ in 0..opts.max_iter {
        let start = Vector4::new(x0, y0, 0.0, 0.0);
        let (th, xe, m) = flow.to_vy_zero(&start, 0.5, 50.0).ok_or_else(|| err("no half-period event".into()))?;
        let f = flow.field(&xe);
        let deriv = m[(2, 1)] - f[2] / f[3] * m[(3, 1)];
        if xe[2].abs() < opts.tol {
            return Ok(Corrected { y0, half_period: th });
        }
        if !deriv.is_finite() || deriv == 0.0 {
            return Err(err("singular correction".into()));
        }
        let d = xe[2] / deriv;
        y0 -= d;
        if d.abs() < 1e-15 * y0.abs().max(1.0) {
            return Ok(Corrected { y0, half_period: th });
        }
    }
    Err(err(format!("no convergence in {} corrections", opts.max_iter)))
}

fn orbit_at(flow: &AutonomousFlow, a: f64, guess: f64, opts: &CorrectionOptions) -> Result<(f64, Corrected)> {
    let d = centre_direction(flow.h);
    let x0 = 1.0 + a * d[0];
    let c = correct(flow, x0, guess, a, opts)?;
    Ok((x0, c))
}

/// Lyapunov orbit of energy `target` for the undamped, unforced roll-heave model, continued from
/// a small-amplitude orbit and bisected on the amplitude.
pub fn differential_correction(h: f64, target: f64, opts: &CorrectionOptions) -> Result<PeriodicOrbit> {
    let e_s = 0.25;
    if !(target > e_s) {
        return Err(Error::Parameter(format!("target energy {target} must exceed the saddle energy {e_s}")));
    }
    let flow = AutonomousFlow { h, step: opts.step };
    let d = centre_direction(h);
    let w = |x: f64, y: f64| hamiltonian_2dof(h, x, y, 0.0, 0.0);
    let mut a = opts.seed_amplitude;
    let (x0, c) = orbit_at(&flow, a, 1.0 + a * d[1], opts)?;
    let mut prev: (f64, f64, f64) = (a, c.y0, w(x0, c.y0));
    let mut before: Option<(f64, f64)> = None;
    let bracket = loop {
        let step = (a).min(opts.max_step);
        let next = a + step;
        // Secant prediction of y0 along the family.
        let guess = match before {
            Some((ab, yb)) => prev.1 + (prev.1 - yb) / (prev.0 - ab) * (next - prev.0),
            None => 1.0 + next * d[1],
        };
        let (x1, c1) = orbit_at(&flow, next, guess, opts)?;
        let e1 = w(x1, c1.y0);
        if e1 >= target {
            break (prev, (next, c1.y0, e1));
        }
        before = Some((prev.0, prev.1));
        prev = (next, c1.y0, e1);
        a = next;
        if a > 1.0 {
            return Err(Error::Continuation { amplitude: a, reason: "family did not reach the target energy".into() });
        }
    };
    let (mut lo, mut hi) = (bracket.0, bracket.1);
    let mut best = orbit_at(&flow, lo.0, lo.1, opts)?;
    for _ in 0..200 {
        let mid = 0.5 * (lo.0 + hi.0);
        let guess = lo.1 + (hi.1 - lo.1) * (mid - lo.0) / (hi.0 - lo.0);
        let (xm, cm) = orbit_at(&flow, mid, guess, opts)?;
        let em = w(xm, cm.y0);
        let y = cm.y0;
        best = (xm, cm);
        if (em - target).abs() < opts.energy_tol {
            return finish_orbit(&flow, best.0, best.1, mid);
        }
        if em < target {
            lo = (mid, y, em);
        } else {
            hi = (mid, y, em);
        }
    }
    let amplitude = 0.5 * (lo.0 + hi.0);
    log::warn!("energy bisection stopped at |E - target| = {}", (w(best.0, best.1.y0) - target).abs());
    finish_orbit(&flow, best.0, best.1, amplitude)
}

/// Orbit of the family at a given amplitude (no energy targeting).
pub fn orbit_at_amplitude(h: f64, amplitude: f64, opts: &CorrectionOptions) -> Result<PeriodicOrbit> {
    let flow = AutonomousFlow { h, step: opts.step };
    let d = centre_direction(h);
    let mut a = opts.seed_amplitude.min(amplitude);
    let (_, mut c) = orbit_at(&flow, a, 1.0 + a * d[1], opts)?;
    while a < amplitude {
        let next = (a + a.min(opts.max_step)).min(amplitude);
        let guess = 1.0 + (c.y0 - 1.0) * next / a;
        c = orbit_at(&flow, next, guess, opts)?.1;
        a = next;
    }
    let x0 = 1.0 + a * d[0];
    finish_orbit(&flow, x0, c, a)
}

fn unit(v: &nalgebra::DVector<f64>) -> [f64; 4] {
    let n = v.norm();
    // Fix the sign so the largest component is positive.
    let i = v.iamax();
    let s = if v[i] < 0.0 { -1.0 } else { 1.0 };
    [s * v[0] / n, s * v[1] / n, s * v[2] / n, s * v[3] / n]
}

fn real_null_vector(m: &Matrix4<f64>, mu: f64) -> nalgebra::DVector<f64> {
    let a = DMatrix::from_fn(4, 4, |i, j| m[(i, j)] - if i == j { mu } else { 0.0 });
    let svd = a.svd(false, true);
    let vt = svd.v_t.expect("requested");
    let k = svd.singular_values.imin();
    vt.row(k).transpose()
}

fn finish_orbit(flow: &AutonomousFlow, x0: f64, c: Corrected, amplitude: f64) -> Result<PeriodicOrbit> {
    let start = Vector4::new(x0, c.y0, 0.0, 0.0);
    let period = 2.0 * c.half_period;
    let (end, m) = flow.flow_with_stm(&start, period);
    let closure = (end - start).norm();
    let eig = DMatrix::from_fn(4, 4, |i, j| m[(i, j)]).complex_eigenvalues();
    let mut multipliers: Vec<[f64; 2]> = eig.iter().map(|z| [z.re, z.im]).collect();
    multipliers.sort_by(|a, b| a[0].hypot(a[1]).total_cmp(&b[0].hypot(b[1])));
    let (small, large) = (multipliers[0], multipliers[3]);
    if small[1].abs() > 1e-8 || large[1].abs() > 1e-8 || large[0].abs() <= 1.0 {
        return Err(Error::UnsupportedRegime("orbit is not hyperbolic".into()));
    }
    Ok(PeriodicOrbit {
        h: flow.h,
        initial_state: [x0, c.y0, 0.0, 0.0],
        period,
        energy: flow.energy(&start),
        amplitude,
        closure,
        monodromy: (0..16).map(|k| m[(k / 4, k % 4)]).collect(),
        multipliers,
        monodromy_det: m.determinant(),
        unstable_vector: unit(&real_null_vector(&m, large[0])),
        stable_vector: unit(&real_null_vector(&m, small[0])),
    })
}

impl PeriodicOrbit {
    pub fn flow(&self) -> AutonomousFlow {
        AutonomousFlow::new(self.h)
    }

    pub fn start(&self) -> Vector4<f64> {
        Vector4::from(self.initial_state)
    }

    pub fn monodromy_matrix(&self) -> Matrix4<f64> {
        Matrix4::from_row_slice(&self.monodromy)
    }

    /// `count` equally spaced phase points with the transported eigenvectors `(point, v_s, v_u)`.
    pub fn phase_samples(&self, count: usize) -> Vec<(Vector4<f64>, Vector4<f64>, Vector4<f64>)> {
        let flow = self.flow();
        let dt = self.period / count as f64;
        let (mut x, mut m) = (self.start(), Matrix4::identity());
        let vs = Vector4::from(self.stable_vector);
        let vu = Vector4::from(self.unstable_vector);
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            out.push((x, (m * vs).normalize(), (m * vu).normalize()));
            let n = (dt / flow.step).ceil() as usize;
            for _ in 0..n {
                let (y, mm) = flow.step_with_stm(&x, &m, dt / n as f64);
                x = y;
                m = mm;
            }
        }
        out
    }

    /// Largest energy deviation over `count` phase samples.
    pub fn energy_deviation(&self, count: usize) -> f64 {
        let flow = self.flow();
        self.phase_samples(count).iter().map(|(x, _, _)| (flow.energy(x) - self.energy).abs()).fold(0.0, f64::max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branch {
    /// Stable manifold: seeded along the contracting eigenvector and integrated backward.
    ForwardContracting,
    /// Unstable manifold: seeded along the expanding eigenvector and integrated forward.
    BackwardContracting,
}

/// Why a bundle trajectory stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stop {
    Section,
    Escaped,
    /// Time budget exhausted before the section (truncated trajectory).
    Budget,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BundleTrajectory {
    pub phase: usize,
    /// Sign of the eigenvector displacement.
    pub sign: i8,
    pub points: Vec<[f64; 4]>,
    pub times: Vec<f64>,
    pub stop: Stop,
    pub section_point: Option<[f64; 4]>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlobalizeOptions {
    pub epsilon: f64,
    pub phases: usize,
    pub time_budget: f64,
    /// Stop when `y^2` reaches this value.
    pub escape_y2: f64,
    /// Keep every n-th integration step in the polyline.
    pub record_every: usize,
}

impl Default for GlobalizeOptions {
    fn default() -> Self {
        Self { epsilon: 1e-6, phases: 50, time_budget: 40.0, escape_y2: 10.0, record_every: 20 }
    }
}

/// Trajectory fan of the stable or unstable manifold of `orbit`, stopped on the section
/// `{x = 0, v_x > 0}`.
pub fn globalize_manifolds(orbit: &PeriodicOrbit, branch: Branch, opts: &GlobalizeOptions) -> Vec<BundleTrajectory> {
    let flow = orbit.flow();
    let samples = orbit.phase_samples(opts.phases);
    let dir = match branch {
        Branch::ForwardContracting => -1.0,
        Branch::BackwardContracting => 1.0,
    };
    let jobs: Vec<(usize, f64)> = (0..samples.len()).flat_map(|p| [(p, 1.0), (p, -1.0)]).collect();
    jobs.par_iter()
        .map(|&(p, s)| {
            let (x, vs, vu) = samples[p];
            let v = if branch == Branch::ForwardContracting { vs } else { vu };
            let seed = x + v * (s * opts.epsilon);
            integrate_to_section(&flow, &seed, dir, opts, p, s as i8)
        })
        .collect()
}

fn integrate_to_section(
    flow: &AutonomousFlow,
    seed: &Vector4<f64>,
    dir: f64,
    opts: &GlobalizeOptions,
    phase: usize,
    sign: i8,
) -> BundleTrajectory {
    let dt = dir * flow.step;
    let (mut x, mut t) = (*seed, 0.0f64);
    let mut points = vec![[x[0], x[1], x[2], x[3]]];
    let mut times = vec![0.0];
    let mut k = 0usize;
    let mut stop = Stop::Budget;
    let mut section_point = None;
    while t.abs() < opts.time_budget {
        let y = flow.step_state(&x, dt);
        k += 1;
        if x[0] != 0.0 && x[0].signum() != y[0].signum() {
            // Refine the crossing of x = 0 by Newton on the partial step.
            let mut tau = dt * x[0] / (x[0] - y[0]);
            for _ in 0..20 {
                let z = flow.step_state(&x, tau);
                let d = z[0] / flow.field(&z)[0];
                tau -= d;
                if d.abs() < 1e-15 {
                    break;
                }
            }
            let z = flow.step_state(&x, tau);
            if z[2] > 0.0 {
                t += tau;
                points.push([z[0], z[1], z[2], z[3]]);
                times.push(t);
                section_point = Some([z[0], z[1], z[2], z[3]]);
                stop = Stop::Section;
                break;
            }
        }
        x = y;
        t += dt;
        if k.is_multiple_of(opts.record_every) {
            points.push([x[0], x[1], x[2], x[3]]);
            times.push(t);
        }
        if x[1] * x[1] >= opts.escape_y2 {
            stop = Stop::Escaped;
            break;
        }
    }
    if stop != Stop::Section && times.last() != Some(&t) {
        points.push([x[0], x[1], x[2], x[3]]);
        times.push(t);
    }
    BundleTrajectory { phase, sign, points, times, stop, section_point }
}

/// Section curve `(y, v_y)` from the bundle trajectories that reached the section, ordered by
/// phase.
pub fn section_curve(bundle: &[BundleTrajectory]) -> Vec<[f64; 4]> {
    let mut pts: Vec<(usize, [f64; 4])> = bundle.iter().filter_map(|b| b.section_point.map(|p| (b.phase, p))).collect();
    pts.sort_by_key(|p| p.0);
    pts.into_iter().map(|p| p.1).collect()
}

/// Point on the section at energy `e` with the given `(y, v_y)`, or `None` if not accessible.
pub fn section_state(h: f64, e: f64, y: f64, vy: f64) -> Option<Vector4<f64>> {
    let rest = e - 0.5 * vy * vy - hamiltonian_2dof(h, 0.0, y, 0.0, 0.0);
    (rest > 0.0).then(|| Vector4::new(0.0, y, (4.0 * h * rest).sqrt(), vy))
}

/// Outcome of integrating a section state forward until it escapes (sign of `y`) or returns to
/// the section.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SectionFate {
    EscapePlus,
    EscapeMinus,
    Returned,
    Undecided,
}

pub fn section_fate(flow: &AutonomousFlow, x0: &Vector4<f64>, escape_y2: f64, t_max: f64) -> SectionFate {
    let (mut x, mut t) = (*x0, 0.0);
    while t < t_max {
        let y = flow.step_state(&x, flow.step);
        t += flow.step;
        if y[1] * y[1] >= escape_y2 {
            return if y[1] > 0.0 { SectionFate::EscapePlus } else { SectionFate::EscapeMinus };
        }
        if t > 0.1 && x[0] < 0.0 && y[0] >= 0.0 && y[2] > 0.0 {
            return SectionFate::Returned;
        }
        x = y;
    }
    SectionFate::Undecided
}

/// Distance between a seeded point and its orbit point after `periods` forward periods.
pub fn seeding_return_distance(orbit: &PeriodicOrbit, epsilon: f64, phase: usize, phases: usize, periods: usize) -> f64 {
    let flow = orbit.flow();
    let (x, vs, _) = orbit.phase_samples(phases)[phase];
    let t = orbit.period * periods as f64;
    (flow.flow(&(x + vs * epsilon), t) - flow.flow(&x, t)).norm()
}

/// Bundle as CSV `branch,phase,sign,t,x,y,vx,vy`.
pub fn bundle_csv(branch: Branch, bundle: &[BundleTrajectory]) -> String {
    let name = match branch {
        Branch::ForwardContracting => "stable",
        Branch::BackwardContracting => "unstable",
    };
    let mut s = String::from("branch,phase,sign,t,x,y,vx,vy\n");
    for b in bundle {
        for (p, t) in b.points.iter().zip(&b.times) {
            s.push_str(&format!(
                "{name},{},{},{t:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
                b.phase, b.sign, p[0], p[1], p[2], p[3]
            ));
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centre_direction_is_parallel_to_minus_two_one() {
        let d = centre_direction(1.0);
        assert!((d[0] * 1.0 - d[1] * -2.0).abs() < 1e-14);
    }

    #[test]
    fn stm_matches_finite_differences() {
        let flow = AutonomousFlow::new(1.0);
        let x = Vector4::new(0.9, 1.05, 0.01, -0.02);
        let (_, m) = flow.flow_with_stm(&x, 1.3);
        let e = 1e-6;
        for j in 0..4 {
            let mut a = x;
            a[j] += e;
            let mut b = x;
            b[j] -= e;
            let col = (flow.flow(&a, 1.3) - flow.flow(&b, 1.3)) / (2.0 * e);
            for i in 0..4 {
                assert!((col[i] - m[(i, j)]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn section_state_has_requested_energy() {
        let x = section_state(1.0, 0.26, 0.2, 0.3).unwrap();
        assert!((hamiltonian_2dof(1.0, x[0], x[1], x[2], x[3]) - 0.26).abs() < 1e-14);
        assert!(section_state(1.0, 0.26, 0.2, 3.0).is_none());
    }
}
