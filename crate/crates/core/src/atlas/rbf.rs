use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fitting options for [`RbfInterpolant::fit`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RbfOptions {
    /// Append an affine polynomial tail.
    pub linear_tail: bool,
    /// Fixed shape parameter; median pairwise distance of the standardised centres if `None`.
    pub shape: Option<f64>,
    /// Refit threshold on the kernel matrix condition number.
    pub max_condition: f64,
}

impl Default for RbfOptions {
    fn default() -> Self {
        Self { linear_tail: false, shape: None, max_condition: 1e12 }
    }
}

/// Multiquadric interpolant `s(x) = sum_i w_i sqrt(|z - z_i|^2 + c^2) [+ a0 + a.z]` on
/// per-axis standardised inputs `z = (x - mean) / scale`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RbfInterpolant {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    /// Standardised centres, row-major.
    pub centers: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    pub weights: Vec<f64>,
    pub tail: Option<Vec<f64>>,
    pub c: f64,
    pub condition: f64,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

/// Value plus whether the query left the box spanned by the centres.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RbfValue {
    pub value: f64,
    pub extrapolated: bool,
}

fn standardise(points: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let n = points.len() as f64;
    let m = points[0].len();
    let mut mean = vec![0.0; m];
    for p in points {
        for (a, v) in mean.iter_mut().zip(p) {
            *a += v / n;
        }
    }
    let mut scale = vec![0.0; m];
    for p in points {
        for k in 0..m {
            scale[k] += (p[k] - mean[k]).powi(2) / n;
        }
    }
    for s in scale.iter_mut() {
        *s = s.sqrt();
        if !(*s > 1e-12) {
            *s = 1.0;
        }
    }
    (mean, scale)
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return 1.0;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

impl RbfInterpolant {
    /// Fits an interpolant through `(inputs[i], values[i])`.
    pub fn fit(inputs: &[Vec<f64>], values: &[f64], opts: &RbfOptions) -> Result<Self> {
        let n = inputs.len();
        if n == 0 || n != values.len() {
            return Err(Error::Parameter("RBF fit needs matching, non-empty inputs and values".into()));
        }
        let m = inputs[0].len();
        if inputs.iter().any(|p| p.len() != m || p.iter().any(|v| !v.is_finite())) {
            return Err(Error::Parameter("RBF inputs must be finite with equal length".into()));
        }
        let (mean, scale) = standardise(inputs);
        let centers: Vec<Vec<f64>> =
            inputs.iter().map(|p| p.iter().zip(&mean).zip(&scale).map(|((x, mu), s)| (x - mu) / s).collect()).collect();
        for i in 0..n {
            for j in 0..i {
                if dist2(&centers[i], &centers[j]) < 1e-24 {
                    return Err(Error::Parameter(format!("duplicate RBF centres {j} and {i}")));
                }
            }
        }
        let mut c = match opts.shape {
            Some(c) if c > 0.0 => c,
            Some(c) => return Err(Error::Parameter(format!("shape parameter must be positive, got {c}"))),
            None => {
                let mut d = Vec::with_capacity(n * (n - 1) / 2);
                for i in 0..n {
                    for j in 0..i {
                        d.push(dist2(&centers[i], &centers[j]).sqrt());
                    }
                }
                median(d).max(1e-6)
            }
        };
        let mut lo = vec![f64::INFINITY; m];
        let mut hi = vec![f64::NEG_INFINITY; m];
        for p in &centers {
            for k in 0..m {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let mut warnings = Vec::new();
        for attempt in 0..8 {
            let kernel = DMatrix::from_fn(n, n, |i, j| (dist2(&centers[i], &centers[j]) + c * c).sqrt());
            let condition = if n <= 3000 {
                let sv = kernel.clone().svd(false, false).singular_values;
                sv.max() / sv.min()
            } else {
                f64::NAN
            };
            if condition > opts.max_condition && attempt < 7 {
                // Multiquadric matrices flatten (and lose conditioning) as c grows, so shrink c.
                let msg = format!("kernel condition {condition:.2e} with c = {c:.3e}; refitting with c/2");
                log::warn!("{msg}");
                warnings.push(msg);
                c *= 0.5;
                continue;
            }
            let (weights, tail) = if opts.linear_tail {
                let k = m + 1;
                let mut a = DMatrix::zeros(n + k, n + k);
                a.view_mut((0, 0), (n, n)).copy_from(&kernel);
                for i in 0..n {
                    a[(i, n)] = 1.0;
                    a[(n, i)] = 1.0;
                    for d in 0..m {
                        a[(i, n + 1 + d)] = centers[i][d];
                        a[(n + 1 + d, i)] = centers[i][d];
                    }
                }
                let mut rhs = DVector::zeros(n + k);
                rhs.rows_mut(0, n).copy_from_slice(values);
                let sol = a.lu().solve(&rhs).ok_or_else(|| Error::Singular("RBF system with tail".into()))?;
                (sol.rows(0, n).iter().copied().collect(), Some(sol.rows(n, k).iter().copied().collect()))
            } else {
                let sol = kernel
                    .lu()
                    .solve(&DVector::from_column_slice(values))
                    .ok_or_else(|| Error::Singular("RBF kernel matrix".into()))?;
                (sol.iter().copied().collect(), None)
            };
            return Ok(Self { mean, scale, centers, values: values.to_vec(), weights, tail, c, condition, lo, hi, warnings });
        }
        unreachable!("the last attempt always solves")
    }

    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    fn standardised(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.mean).zip(&self.scale).map(|((v, mu), s)| (v - mu) / s).collect()
    }

    /// Evaluates at `x` (raw, unstandardised input). Queries on a centre return its value.
    pub fn eval(&self, x: &[f64]) -> RbfValue {
        let z = self.standardised(x);
        let tol = 1e-9;
        let extrapolated = z.iter().enumerate().any(|(k, v)| *v < self.lo[k] - tol || *v > self.hi[k] + tol);
        let c2 = self.c * self.c;
        let mut s = 0.0;
        for (i, (ctr, w)) in self.centers.iter().zip(&self.weights).enumerate() {
            let d2 = dist2(&z, ctr);
            if d2 < 1e-24 {
                return RbfValue { value: self.values[i], extrapolated: false };
            }
            s += w * (d2 + c2).sqrt();
        }
        if let Some(a) = &self.tail {
            s += a[0] + a[1..].iter().zip(&z).map(|(p, q)| p * q).sum::<f64>();
        }
        RbfValue { value: s, extrapolated }
    }

    /// Evaluates ignoring the exact-centre shortcut (for checking the solve itself).
    pub fn eval_kernel(&self, x: &[f64]) -> f64 {
        let z = self.standardised(x);
        let c2 = self.c * self.c;
        let mut s: f64 = self.centers.iter().zip(&self.weights).map(|(ctr, w)| w * (dist2(&z, ctr) + c2).sqrt()).sum();
        if let Some(a) = &self.tail {
            s += a[0] + a[1..].iter().zip(&z).map(|(p, q)| p * q).sum::<f64>();
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("plain data serialises")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))
    }
}
