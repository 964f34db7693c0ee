use std::fmt::Write as _;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::TimeGrid;
use crate::error::{Error, Result};

/// One term `amp * cos(omega * t + phase)` acting on state component `component`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CosineTerm {
    pub amp: f64,
    pub omega: f64,
    #[serde(default)]
    pub phase: f64,
    pub component: usize,
}

/// Sampled forcing on a uniform grid, linearly interpolated, zero outside its domain.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledPath {
    pub t0: f64,
    pub dt: f64,
    pub dim: usize,
    /// `n * dim` values, row-major.
    pub values: Arc<Vec<f64>>,
    pub seed: Option<u64>,
}

impl SampledPath {
    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn t_end(&self) -> f64 {
        self.t0 + (self.len() - 1) as f64 * self.dt
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    fn add_to(&self, t: f64, out: &mut [f64]) {
        let n = self.len();
        let s = (t - self.t0) / self.dt;
        if !(s >= -1e-9 && s <= (n - 1) as f64 + 1e-9) {
            return;
        }
        let s = s.clamp(0.0, (n - 1) as f64);
        let i = (s as usize).min(n - 2);
        let w = s - i as f64;
        let d = self.dim;
        let a = &self.values[i * d..(i + 1) * d];
        let b = &self.values[(i + 1) * d..(i + 2) * d];
        for c in 0..d {
            out[c] += (1.0 - w) * a[c] + w * b[c];
        }
    }
}

/// Time-dependent additive forcing F(t).
#[derive(Clone, Debug, PartialEq, Default)]
pub enum ForcingSignal {
    #[default]
    Zero,
    QuasiPeriodic(Vec<CosineTerm>),
    Sampled(SampledPath),
}

#[derive(Serialize, Deserialize)]
struct QuasiPeriodicJson {
    terms: Vec<CosineTerm>,
}

impl ForcingSignal {
    pub fn quasi_periodic(terms: Vec<CosineTerm>) -> Self {
        ForcingSignal::QuasiPeriodic(terms)
    }

    /// Adds F(t) to `out`.
    #[inline]
    pub fn add_to(&self, t: f64, out: &mut [f64]) {
        match self {
            ForcingSignal::Zero => {}
            ForcingSignal::QuasiPeriodic(terms) => {
                for term in terms {
                    out[term.component] += term.amp * (term.omega * t + term.phase).cos();
                }
            }
            ForcingSignal::Sampled(p) => p.add_to(t, out),
        }
    }

    pub fn eval(&self, t: f64, dim: usize) -> Vec<f64> {
        let mut out = vec![0.0; dim];
        self.add_to(t, &mut out);
        out
    }

    pub fn is_zero(&self) -> bool {
        match self {
            ForcingSignal::Zero => true,
            ForcingSignal::QuasiPeriodic(t) => t.iter().all(|c| c.amp == 0.0),
            ForcingSignal::Sampled(p) => p.values.iter().all(|v| *v == 0.0),
        }
    }

    /// Time-reversed signal `t -> F(-t)`.
    pub fn reversed(&self) -> Self {
        match self {
            ForcingSignal::Zero => ForcingSignal::Zero,
            ForcingSignal::QuasiPeriodic(terms) => ForcingSignal::QuasiPeriodic(
                terms.iter().map(|c| CosineTerm { phase: -c.phase, ..*c }).collect(),
            ),
            ForcingSignal::Sampled(p) => {
                let n = p.len();
                let mut v = Vec::with_capacity(p.values.len());
                for i in (0..n).rev() {
                    v.extend_from_slice(p.node(i));
                }
                ForcingSignal::Sampled(SampledPath {
                    t0: -p.t_end(),
                    values: Arc::new(v),
                    ..p.clone()
                })
            }
        }
    }

    pub fn quasi_periodic_json(&self) -> Option<String> {
        match self {
            ForcingSignal::QuasiPeriodic(terms) => {
                serde_json::to_string(&QuasiPeriodicJson { terms: terms.clone() }).ok()
            }
            _ => None,
        }
    }

    pub fn from_quasi_periodic_json(s: &str) -> Result<Self> {
        let q: QuasiPeriodicJson = serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))?;
        Ok(ForcingSignal::QuasiPeriodic(q.terms))
    }

    /// CSV `t,f1,..,fd` at the given times, 17 significant digits.
    pub fn to_csv(&self, times: &[f64], dim: usize) -> String {
        let mut s = String::from("t");
        for c in 1..=dim {
            let _ = write!(s, ",f{c}");
        }
        s.push('\n');
        for &t in times {
            let _ = write!(s, "{t:.16e}");
            for v in self.eval(t, dim) {
                let _ = write!(s, ",{v:.16e}");
            }
            s.push('\n');
        }
        s
    }

    /// Node values of a sampled path as CSV; other kinds are not tabulated here.
    pub fn sampled_csv(&self) -> Option<String> {
        match self {
            ForcingSignal::Sampled(p) => {
                let times: Vec<f64> = (0..p.len()).map(|i| p.t0 + i as f64 * p.dt).collect();
                Some(self.to_csv(&times, p.dim))
            }
            _ => None,
        }
    }

    /// Reads a uniformly spaced `t,f1..fd` table back into a sampled path.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::Parse("empty forcing csv".into()))?;
        let dim = header.split(',').count() - 1;
        if dim == 0 {
            return Err(Error::Parse("forcing csv has no value columns".into()));
        }
        let mut times = Vec::new();
        let mut values = Vec::new();
        for (ln, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != dim + 1 {
                return Err(Error::Parse(format!("row {}: expected {} fields", ln + 2, dim + 1)));
            }
            let mut row = fields.iter().map(|f| f.trim().parse::<f64>());
            times.push(row.next().unwrap().map_err(|e| Error::Parse(e.to_string()))?);
            for v in row {
                values.push(v.map_err(|e| Error::Parse(e.to_string()))?);
            }
        }
        if times.len() < 2 {
            return Err(Error::Parse("forcing csv needs at least two rows".into()));
        }
        let dt = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
        for (i, t) in times.iter().enumerate() {
            if (t - (times[0] + i as f64 * dt)).abs() > 1e-9 * dt.abs().max(1.0) {
                return Err(Error::Parse("forcing csv times are not uniform".into()));
            }
        }
        Ok(ForcingSignal::Sampled(SampledPath { t0: times[0], dt, dim, values: Arc::new(values), seed: None }))
    }
}

/// Parameters of `d eta = D eta dt + B dW` with `D = [[-lambda, -omega], [omega, -lambda]]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OuParams {
    pub lambda: f64,
    pub omega: f64,
    pub b: [[f64; 2]; 2],
}

/// Exact transition of the 2D OU process over `delta`: mean map `E` and covariance `Q`.
pub fn ou_transition(p: &OuParams, delta: f64) -> ([[f64; 2]; 2], [[f64; 2]; 2]) {
    let (l, w) = (p.lambda, p.omega);
    let decay = (-l * delta).exp();
    let (s, c) = (w * delta).sin_cos();
    let e = [[decay * c, -decay * s], [decay * s, decay * c]];

    let b = p.b;
    let bb = [
        [b[0][0] * b[0][0] + b[0][1] * b[0][1], b[0][0] * b[1][0] + b[0][1] * b[1][1]],
        [0.0, b[1][0] * b[1][0] + b[1][1] * b[1][1]],
    ];
    let (s11, s12, s22) = (bb[0][0], bb[0][1], bb[1][1]);
    // Isotropic part is invariant under rotation; the traceless part (a + ib) turns at 2*omega.
    let iso = 0.5 * (s11 + s22);
    let (a, bt) = (0.5 * (s11 - s22), s12);
    let iso_int = if l * delta > 1e-8 {
        (1.0 - (-2.0 * l * delta).exp()) / (2.0 * l)
    } else {
        delta
    };
    let z = num_complex::Complex64::new(-2.0 * l, 2.0 * w);
    let tr_int = if z.norm() * delta > 1e-8 {
        ((z * delta).exp() - 1.0) / z
    } else {
        num_complex::Complex64::new(delta, 0.0)
    };
    let t = num_complex::Complex64::new(a, bt) * tr_int;
    let q = [[iso * iso_int + t.re, t.im], [t.im, iso * iso_int - t.re]];
    (e, q)
}

/// One exact-discretisation realisation of the OU process on `grid`, started at zero and fed
/// into state components `components` of a `dim`-dimensional system.
pub fn sample_ou_path(
    params: &OuParams,
    seed: u64,
    grid: &TimeGrid,
    components: [usize; 2],
    dim: usize,
) -> Result<ForcingSignal> {
    if !(params.lambda > 0.0) || !params.lambda.is_finite() {
        return Err(Error::Parameter(format!("OU rate must be positive, got {}", params.lambda)));
    }
    if components.iter().any(|&c| c >= dim) {
        return Err(Error::Parameter("OU target component out of range".into()));
    }
    let (e, q) = ou_transition(params, grid.dt());
    let l11 = q[0][0].max(0.0).sqrt();
    let l21 = if l11 > 0.0 { q[1][0] / l11 } else { 0.0 };
    let l22 = (q[1][1] - l21 * l21).max(0.0).sqrt();

    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut values = vec![0.0; grid.n * dim];
    let mut eta = [0.0f64; 2];
    for i in 1..grid.n {
        let z0: f64 = StandardNormal.sample(&mut rng);
        let z1: f64 = StandardNormal.sample(&mut rng);
        eta = [
            e[0][0] * eta[0] + e[0][1] * eta[1] + l11 * z0,
            e[1][0] * eta[0] + e[1][1] * eta[1] + l21 * z0 + l22 * z1,
        ];
        values[i * dim + components[0]] += eta[0];
        values[i * dim + components[1]] += eta[1];
    }
    Ok(ForcingSignal::Sampled(SampledPath {
        t0: grid.t_minus,
        dt: grid.dt(),
        dim,
        values: Arc::new(values),
        seed: Some(seed),
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> OuParams {
        OuParams { lambda: 0.8, omega: 1.3, b: [[0.5, 0.5], [-0.5, 0.5]] }
    }

    #[test]
    fn quasi_periodic_is_exact_sum() {
        let f = ForcingSignal::quasi_periodic(vec![
            CosineTerm { amp: 0.1, omega: 0.7, phase: 0.0, component: 1 },
            CosineTerm { amp: -0.15, omega: 2.0, phase: 0.0, component: 1 },
        ]);
        let t = 1.234;
        let v = f.eval(t, 2);
        assert_eq!(v[0], 0.0);
        assert!((v[1] - (0.1 * (0.7 * t).cos() - 0.15 * (2.0 * t).cos())).abs() < 1e-16);
    }

    #[test]
    fn quasi_periodic_json_round_trip() {
        let f = ForcingSignal::quasi_periodic(vec![CosineTerm { amp: 2.0, omega: 4.0, phase: 0.5, component: 3 }]);
        let s = f.quasi_periodic_json().unwrap();
        assert!(s.contains("\"terms\""));
        assert_eq!(ForcingSignal::from_quasi_periodic_json(&s).unwrap(), f);
    }

    #[test]
    fn zero_noise_gives_zero_path() {
        let g = TimeGrid::new(-1.0, 1.0, 201).unwrap();
        let p = OuParams { b: [[0.0; 2]; 2], ..params() };
        let f = sample_ou_path(&p, 7, &g, [2, 3], 4).unwrap();
        assert!(f.is_zero());
    }

    #[test]
    fn rejects_nonpositive_rate() {
        let g = TimeGrid::new(-1.0, 1.0, 21).unwrap();
        let p = OuParams { lambda: 0.0, ..params() };
        assert!(sample_ou_path(&p, 1, &g, [2, 3], 4).is_err());
    }

    #[test]
    fn same_seed_same_path() {
        let g = TimeGrid::new(-1.0, 1.0, 101).unwrap();
        let a = sample_ou_path(&params(), 3, &g, [2, 3], 4).unwrap();
        let b = sample_ou_path(&params(), 3, &g, [2, 3], 4).unwrap();
        let c = sample_ou_path(&params(), 4, &g, [2, 3], 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn sampled_csv_round_trip() {
        let g = TimeGrid::new(-1.0, 1.0, 51).unwrap();
        let a = sample_ou_path(&params(), 11, &g, [2, 3], 4).unwrap();
        let b = ForcingSignal::from_csv(&a.sampled_csv().unwrap()).unwrap();
        for t in [-0.99, -0.3, 0.0, 0.41, 0.97] {
            let (va, vb) = (a.eval(t, 4), b.eval(t, 4));
            for c in 0..4 {
                assert!((va[c] - vb[c]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn interpolation_between_nodes_is_linear() {
        let g = TimeGrid::new(0.0, 1.0, 11).unwrap();
        let f = sample_ou_path(&params(), 5, &g, [0, 1], 2).unwrap();
        let ForcingSignal::Sampled(p) = &f else { unreachable!() };
        let mid = f.eval(0.35, 2);
        for c in 0..2 {
            assert!((mid[c] - 0.5 * (p.node(3)[c] + p.node(4)[c])).abs() < 1e-14);
        }
        assert_eq!(f.eval(2.0, 2), vec![0.0, 0.0]);
    }
}
