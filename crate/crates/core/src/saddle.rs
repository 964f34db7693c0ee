//! Saddle eigenstructure, the basis change P, matrix exponentials and the closed-form
//! hyperbolic trajectory of the linearised barrier.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::dynamics::{CosineTerm, Model};
use crate::error::{Error, Result};

/// Eigen-data at a saddle. Columns of `p` are ordered (strong stable, centre pair as
/// (Re v, Im v), unstable); `eigenvalues[j]` belongs to column `j` (the centre pair is listed
/// as `lambda, conj(lambda)`).
#[derive(Clone, Debug)]
pub struct SaddleEigenstructure {
    pub a: DMatrix<f64>,
    pub eigenvalues: Vec<Complex64>,
    pub n_minus: usize,
    pub n_c: usize,
    pub n_plus: usize,
    pub p: DMatrix<f64>,
    pub p_inv: DMatrix<f64>,
    pub condition: f64,
    /// Imaginary part magnitude of the centre pair, if any.
    pub omega: Option<f64>,
}

#[derive(Serialize)]
struct EigenDump<'a> {
    eigenvalues: Vec<[f64; 2]>,
    p: Vec<f64>,
    dims: Dims,
    condition: f64,
    omega: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    closed_form_residual: Option<&'a [f64]>,
}

#[derive(Serialize)]
struct Dims {
    n_minus: usize,
    n_c: usize,
    n_plus: usize,
}

impl SaddleEigenstructure {
    fn assemble(a: DMatrix<f64>, eigenvalues: Vec<Complex64>, cols: Vec<DVector<f64>>, dims: (usize, usize, usize), omega: Option<f64>) -> Result<Self> {
        let d = a.nrows();
        let p = DMatrix::from_columns(&cols);
        let sv = p.clone().svd(false, false).singular_values;
        let (smax, smin) = (sv.max(), sv.min());
        if !(smin > 1e-14 * smax) {
            return Err(Error::Singular("eigenvector basis P".into()));
        }
        let p_inv = p.clone().try_inverse().ok_or_else(|| Error::Singular("eigenvector basis P".into()))?;
        debug_assert_eq!(p.ncols(), d);
        Ok(Self { a, eigenvalues, n_minus: dims.0, n_c: dims.1, n_plus: dims.2, p, p_inv, condition: smax / smin, omega })
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    /// Real part of the eigenvalue attached to column `j` of P.
    pub fn rate(&self, j: usize) -> f64 {
        self.eigenvalues[j].re
    }

    /// Most negative strong-stable real part (the `lambda_-` of the window rule).
    pub fn lambda_minus(&self) -> f64 {
        (0..self.n_minus).map(|j| self.rate(j)).fold(f64::INFINITY, f64::min)
    }

    /// Most positive unstable real part (the `lambda_+` of the window rule).
    pub fn lambda_plus(&self) -> f64 {
        (self.dim() - self.n_plus..self.dim()).map(|j| self.rate(j)).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn stable_cols(&self) -> std::ops::Range<usize> {
        0..self.n_minus
    }

    pub fn centre_cols(&self) -> std::ops::Range<usize> {
        self.n_minus..self.n_minus + self.n_c
    }

    pub fn unstable_cols(&self) -> std::ops::Range<usize> {
        self.n_minus + self.n_c..self.dim()
    }

    /// Column of P (eigen-basis vector).
    pub fn basis(&self, j: usize) -> Vec<f64> {
        self.p.column(j).iter().copied().collect()
    }

    /// Displacement `P * coords`.
    pub fn from_coords(&self, coords: &[f64]) -> Vec<f64> {
        (&self.p * DVector::from_column_slice(coords)).iter().copied().collect()
    }

    /// Eigen-coordinates `P^{-1} y`.
    pub fn to_coords(&self, y: &[f64]) -> Vec<f64> {
        (&self.p_inv * DVector::from_column_slice(y)).iter().copied().collect()
    }

    /// `P^{-1} A P`, block diagonal for a valid basis.
    pub fn block_form(&self) -> DMatrix<f64> {
        &self.p_inv * &self.a * &self.p
    }

    /// Largest `|A v - lambda v|` over the eigenpairs encoded in P.
    pub fn residual(&self) -> f64 {
        let mut worst = 0.0f64;
        let d = self.dim();
        let mut j = 0;
        while j < d {
            let lam = self.eigenvalues[j];
            let is_pair = lam.im != 0.0 && j + 1 < d;
            let v: Vec<Complex64> = if is_pair {
                (0..d).map(|r| Complex64::new(self.p[(r, j)], self.p[(r, j + 1)])).collect()
            } else {
                (0..d).map(|r| Complex64::new(self.p[(r, j)], 0.0)).collect()
            };
            for r in 0..d {
                let av: Complex64 = (0..d).map(|c| v[c] * self.a[(r, c)]).sum();
                worst = worst.max((av - lam * v[r]).norm());
            }
            j += if is_pair { 2 } else { 1 };
        }
        worst
    }

    pub fn to_json(&self) -> String {
        let res = [self.residual()];
        let dump = EigenDump {
            eigenvalues: self.eigenvalues.iter().map(|z| [z.re, z.im]).collect(),
            p: (0..self.dim()).flat_map(|r| (0..self.dim()).map(move |c| (r, c))).map(|(r, c)| self.p[(r, c)]).collect(),
            dims: Dims { n_minus: self.n_minus, n_c: self.n_c, n_plus: self.n_plus },
            condition: self.condition,
            omega: self.omega,
            closed_form_residual: Some(&res),
        };
        serde_json::to_string_pretty(&dump).expect("plain data serialises")
    }

    /// Numerical eigenstructure of an arbitrary saddle matrix (real stable eigenvalues, at
    /// most complex pairs in the centre block, real unstable eigenvalues).
    pub fn from_matrix(a: &DMatrix<f64>) -> Result<Self> {
        let d = a.nrows();
        let eig = numeric_eigenvalues(a);
        let tol = 1e-10 * (1.0 + a.norm());
        let mut stable: Vec<Complex64> = eig.iter().copied().filter(|z| z.im.abs() <= tol && z.re < 0.0).collect();
        let mut unstable: Vec<Complex64> = eig.iter().copied().filter(|z| z.im.abs() <= tol && z.re > 0.0).collect();
        let mut pairs: Vec<Complex64> = eig.iter().copied().filter(|z| z.im < -tol).collect();
        if eig.iter().any(|z| z.im.abs() <= tol && z.re == 0.0) {
            return Err(Error::UnsupportedRegime("zero eigenvalue at the saddle".into()));
        }
        stable.sort_by(|x, y| x.re.total_cmp(&y.re));
        unstable.sort_by(|x, y| y.re.total_cmp(&x.re));
        pairs.sort_by(|x, y| x.re.total_cmp(&y.re));
        let mut cols = Vec::with_capacity(d);
        let mut lams = Vec::with_capacity(d);
        for z in &stable {
            let v = null_vector(a, Complex64::new(z.re, 0.0));
            cols.push(real_part(&normalise(v)));
            lams.push(Complex64::new(z.re, 0.0));
        }
        for z in &pairs {
            let v = normalise(null_vector(a, *z));
            cols.push(real_part(&v));
            cols.push(DVector::from_iterator(d, v.iter().map(|c| c.im)));
            lams.push(*z);
            lams.push(z.conj());
        }
        for z in &unstable {
            let v = null_vector(a, Complex64::new(z.re, 0.0));
            cols.push(real_part(&normalise(v)));
            lams.push(Complex64::new(z.re, 0.0));
        }
        if cols.len() != d {
            return Err(Error::UnsupportedRegime("eigenvalues could not be split into real/complex-pair blocks".into()));
        }
        let omega = pairs.first().map(|z| z.im.abs());
        Self::assemble(a.clone(), lams, cols, (stable.len(), 2 * pairs.len(), unstable.len()), omega)
    }
}

fn real_part(v: &DVector<Complex64>) -> DVector<f64> {
    DVector::from_iterator(v.len(), v.iter().map(|c| c.re))
}

/// Last component 1 when it is not tiny, unit norm otherwise.
fn normalise(v: DVector<Complex64>) -> DVector<Complex64> {
    let n = v.norm();
    let last = v[v.len() - 1];
    if last.norm() > 1e-8 * n {
        v / last
    } else {
        v / Complex64::new(n, 0.0)
    }
}

/// Eigenvalues of a real matrix via the real Schur form.
pub fn numeric_eigenvalues(a: &DMatrix<f64>) -> Vec<Complex64> {
    a.clone().complex_eigenvalues().iter().copied().collect()
}

/// Right singular vector of `A - lambda I` for the smallest singular value.
fn null_vector(a: &DMatrix<f64>, lambda: Complex64) -> DVector<Complex64> {
    let d = a.nrows();
    let mut m: DMatrix<Complex64> = a.map(|x| Complex64::new(x, 0.0));
    for i in 0..d {
        m[(i, i)] -= lambda;
    }
    let svd = m.svd(false, true);
    let vt = svd.v_t.expect("requested V^H");
    let k = svd.singular_values.iter().enumerate().min_by(|x, y| x.1.total_cmp(y.1)).map(|(i, _)| i).unwrap();
    DVector::from_iterator(d, vt.row(k).iter().map(|c| c.conj()))
}

/// Closed-form eigenstructure of the linearised barrier: `A = [[0,1],[1,-k]]`,
/// `lambda_pm = (-k ± sqrt(4+k^2))/2`, eigenvectors `(1, lambda)`.
pub fn eigenstructure_1dof(k: f64) -> Result<SaddleEigenstructure> {
    if !(k >= 0.0) {
        return Err(Error::Parameter(format!("damping must be non-negative, got {k}")));
    }
    let a = Model::Eckart { k }.jacobian(&[0.0, 0.0]);
    let r = (4.0 + k * k).sqrt();
    let (lm, lp) = (0.5 * (-k - r), 0.5 * (-k + r));
    let cols = vec![DVector::from_column_slice(&[1.0, lm]), DVector::from_column_slice(&[1.0, lp])];
    SaddleEigenstructure::assemble(a, vec![Complex64::new(lm, 0.0), Complex64::new(lp, 0.0)], cols, (1, 0, 1), None)
}

/// `alpha = 2h + 2 sqrt(h) sqrt(8+h)` and `beta = -2h + 2 sqrt(h) sqrt(8+h)`.
pub fn alpha_beta(h: f64) -> (f64, f64) {
    let s = 2.0 * h.sqrt() * (8.0 + h).sqrt();
    (2.0 * h + s, -2.0 * h + s)
}

/// Closed-form eigenvalues `(lambda1, lambda2, lambda3, lambda4)` of the roll-heave saddles
/// with equal damping `k`. `lambda1,2 = (-k ∓ sqrt(k^2 - alpha))/2`,
/// `lambda3,4 = (-k ∓ sqrt(k^2 + beta))/2`.
pub fn eigenvalues_2dof(h: f64, k: f64) -> [Complex64; 4] {
    let (alpha, beta) = alpha_beta(h);
    let disc = Complex64::new(k * k - alpha, 0.0).sqrt();
    let r = (k * k + beta).sqrt();
    let half = Complex64::new(-0.5 * k, 0.0);
    [half - 0.5 * disc, half + 0.5 * disc, Complex64::new(0.5 * (-k - r), 0.0), Complex64::new(0.5 * (-k + r), 0.0)]
}

/// Eigenvector of `Df(1, side, 0, 0)` for eigenvalue `lambda`, scaled so its last entry is 1:
/// `(side (lambda + k), 1/lambda, side lambda (lambda + k), 1)`.
pub fn eigenvector_2dof(lambda: Complex64, k: f64, side: i8) -> [Complex64; 4] {
    let s = f64::from(side.signum());
    let lk = lambda + k;
    [lk * s, lambda.inv(), lambda * lk * s, Complex64::new(1.0, 0.0)]
}

/// Closed-form eigenstructure of the roll-heave saddle `(1, side, 0, 0)` with `kx = ky = k`.
pub fn eigenstructure_2dof(h: f64, k: f64, side: i8) -> Result<SaddleEigenstructure> {
    if !(h > 0.0) || !(k >= 0.0) {
        return Err(Error::Parameter(format!("need h > 0 and k >= 0, got h={h}, k={k}")));
    }
    let (alpha, _) = alpha_beta(h);
    if k * k >= alpha {
        return Err(Error::UnsupportedRegime(format!("k^2 = {} >= alpha = {alpha}: overdamped centre", k * k)));
    }
    let side = if side < 0 { -1 } else { 1 };
    let a = Model::RollHeave { h, kx: k, ky: k }.jacobian(&[1.0, f64::from(side), 0.0, 0.0]);
    let [l1, _l2, l3, l4] = eigenvalues_2dof(h, k);
    let re = |v: [Complex64; 4]| DVector::from_iterator(4, v.iter().map(|c| c.re));
    let im = |v: [Complex64; 4]| DVector::from_iterator(4, v.iter().map(|c| c.im));
    let v1 = eigenvector_2dof(l1, k, side);
    let cols = vec![re(eigenvector_2dof(l3, k, side)), re(v1), im(v1), re(eigenvector_2dof(l4, k, side))];
    let omega = 0.5 * (alpha - k * k).sqrt();
    SaddleEigenstructure::assemble(a, vec![l3, l1, l1.conj(), l4], cols, (1, 2, 1), Some(omega))
}

/// Eigenstructure for any model/saddle: closed forms where they exist, numerics otherwise.
pub fn eigenstructure_for(model: &Model, side: i8) -> Result<SaddleEigenstructure> {
    match *model {
        Model::Eckart { k } => eigenstructure_1dof(k),
        Model::RollHeave { h, kx, ky } if kx == ky => eigenstructure_2dof(h, kx, side),
        Model::RollHeave { .. } => {
            let e = SaddleEigenstructure::from_matrix(&model.jacobian(&model.saddle(side)))?;
            if e.n_c != 2 || e.n_minus != 1 || e.n_plus != 1 {
                return Err(Error::UnsupportedRegime("roll-heave saddle without an oscillatory centre pair".into()));
            }
            Ok(e)
        }
    }
}

/// `e^{dt A}` by diagonalisation when A is diagonalisable with eigenvector condition < 1e8,
/// by scaling and squaring with a Padé approximant otherwise.
pub fn block_matrix_exp(a: &DMatrix<f64>, dt: f64) -> DMatrix<f64> {
    expm_eigen(a, dt).unwrap_or_else(|| expm_pade(&(a * dt)))
}

/// Diagonalisation route; `None` when the eigenvector matrix is (nearly) singular.
pub fn expm_eigen(a: &DMatrix<f64>, dt: f64) -> Option<DMatrix<f64>> {
    let d = a.nrows();
    let lams = numeric_eigenvalues(a);
    let mut v = DMatrix::<Complex64>::zeros(d, d);
    for (j, &l) in lams.iter().enumerate() {
        let col = null_vector(a, l);
        v.set_column(j, &col);
    }
    let sv = v.clone().svd(false, false).singular_values;
    let (smax, smin) = (sv.max(), sv.min());
    if !(smin > 0.0) || smax / smin >= 1e8 {
        return None;
    }
    let vinv = v.clone().try_inverse()?;
    let diag = DMatrix::from_diagonal(&DVector::from_iterator(d, lams.iter().map(|l| (l * dt).exp())));
    let e = v * diag * vinv;
    Some(e.map(|c| c.re))
}

/// Scaling and squaring with the diagonal (6,6) Padé approximant.
pub fn expm_pade(x: &DMatrix<f64>) -> DMatrix<f64> {
    let d = x.nrows();
    let norm = (0..d).map(|r| x.row(r).iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    let s = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let xs = x / 2f64.powi(s);
    const Q: usize = 6;
    let mut c = 1.0;
    let id = DMatrix::<f64>::identity(d, d);
    let mut num = id.clone();
    let mut den = id.clone();
    let mut pow = id;
    for j in 1..=Q {
        c *= (Q + 1 - j) as f64 / (j * (2 * Q + 1 - j)) as f64;
        pow = &pow * &xs;
        num += &pow * c;
        den += &pow * (if j % 2 == 0 { c } else { -c });
    }
    let mut e = den.lu().solve(&num).expect("Padé denominator is well conditioned after scaling");
    for _ in 0..s {
        e = &e * &e;
    }
    e
}

/// Bounded solution of the linearised barrier under a sum of cosines.
#[derive(Clone, Debug)]
pub struct LinearHypTrajectory {
    p: DMatrix<f64>,
    rates: Vec<f64>,
    /// Per term: eigen-coordinate amplitudes `P^{-1} e_c a`, frequency, phase.
    terms: Vec<(Vec<f64>, f64, f64)>,
}

impl LinearHypTrajectory {
    pub fn new(eig: &SaddleEigenstructure, terms: &[CosineTerm]) -> Result<Self> {
        if eig.n_c != 0 || eig.eigenvalues.iter().any(|z| z.im != 0.0) {
            return Err(Error::UnsupportedRegime("closed-form linear solution needs a real spectrum".into()));
        }
        let d = eig.dim();
        let mut out = Vec::with_capacity(terms.len());
        for t in terms {
            if t.component >= d {
                return Err(Error::Parameter(format!("forcing component {} out of range", t.component)));
            }
            let g: Vec<f64> = (0..d).map(|j| eig.p_inv[(j, t.component)] * t.amp).collect();
            out.push((g, t.omega, t.phase));
        }
        Ok(Self { p: eig.p.clone(), rates: eig.eigenvalues.iter().map(|z| z.re).collect(), terms: out })
    }

    fn coords(&self, t: f64, derivative: bool) -> Vec<f64> {
        let d = self.rates.len();
        let mut z = vec![0.0; d];
        for (g, w, phi) in &self.terms {
            let (s, c) = (w * t + phi).sin_cos();
            for j in 0..d {
                let l = self.rates[j];
                let den = w * w + l * l;
                // z_j' = l z_j + g_j cos(w t + phi); the omega = 0 case reduces to -g_j cos(phi)/l.
                z[j] += if derivative {
                    g[j] * w * (w * c + l * s) / den
                } else {
                    g[j] * (w * s - l * c) / den
                };
            }
        }
        z
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        (&self.p * DVector::from_vec(self.coords(t, false))).iter().copied().collect()
    }

    pub fn derivative(&self, t: f64) -> Vec<f64> {
        (&self.p * DVector::from_vec(self.coords(t, true))).iter().copied().collect()
    }
}

/// Closed-form hyperbolic trajectory of the linearised barrier with damping `k`.
pub fn linear_hyp_trajectory_1dof(k: f64, terms: &[CosineTerm]) -> Result<LinearHypTrajectory> {
    LinearHypTrajectory::new(&eigenstructure_1dof(k)?, terms)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_dof_values() {
        let e = eigenstructure_1dof(0.0).unwrap();
        assert!((e.rate(0) + 1.0).abs() < 1e-15 && (e.rate(1) - 1.0).abs() < 1e-15);
        assert_eq!(e.basis(0), vec![1.0, -1.0]);
        let e = eigenstructure_1dof(1.0).unwrap();
        assert!((e.lambda_plus() - 0.618034).abs() < 1e-6);
        assert!((e.lambda_minus() + 1.618034).abs() < 1e-6);
        let e = eigenstructure_1dof(3.0).unwrap();
        assert!((e.lambda_plus() - 0.302776).abs() < 1e-6);
        assert!(e.residual() < 1e-14);
    }

    #[test]
    fn two_dof_undamped_values() {
        let [l1, l2, l3, l4] = eigenvalues_2dof(1.0, 0.0);
        assert!((l3.re + 1.0).abs() < 1e-14 && (l4.re - 1.0).abs() < 1e-14);
        assert!((l1.im + 2f64.sqrt()).abs() < 1e-14 && (l2.im - 2f64.sqrt()).abs() < 1e-14);
        let (alpha, beta) = alpha_beta(1.0);
        assert!((alpha - 8.0).abs() < 1e-14 && (beta - 4.0).abs() < 1e-14);
    }

    #[test]
    fn two_dof_residual_and_block_form() {
        for side in [-1, 1] {
            let e = eigenstructure_2dof(1.0, 1.0, side).unwrap();
            assert!(e.residual() < 1e-10);
            let b = e.block_form();
            for r in 0..4 {
                for c in 0..4 {
                    let in_block = r == c || ((1..=2).contains(&r) && (1..=2).contains(&c));
                    if !in_block {
                        assert!(b[(r, c)].abs() < 1e-10, "off-block entry {r},{c} = {}", b[(r, c)]);
                    }
                }
            }
            let w = e.omega.unwrap();
            assert!((b[(1, 1)] + 0.5).abs() < 1e-10 && (b[(1, 2)] + w).abs() < 1e-10 && (b[(2, 1)] - w).abs() < 1e-10);
        }
    }

    #[test]
    fn overdamped_is_rejected() {
        assert!(matches!(eigenstructure_2dof(1.0, 3.0, 1), Err(Error::UnsupportedRegime(_))));
    }

    #[test]
    fn numeric_route_matches_closed_form_spectrum() {
        let e = eigenstructure_2dof(1.3, 0.7, 1).unwrap();
        let n = SaddleEigenstructure::from_matrix(&e.a).unwrap();
        for j in 0..4 {
            assert!((e.eigenvalues[j] - n.eigenvalues[j]).norm() < 1e-10);
        }
        assert!(n.residual() < 1e-10);
    }

    #[test]
    fn expm_paths_agree() {
        let mats = [
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, -1.0]),
            eigenstructure_2dof(1.0, 1.0, 1).unwrap().a,
            DMatrix::from_row_slice(3, 3, &[-0.3, 2.0, 0.1, -1.5, 0.2, 0.0, 0.4, -0.7, -1.1]),
        ];
        for a in &mats {
            for dt in [0.05, 0.7, 2.5] {
                let e1 = expm_eigen(a, dt).unwrap();
                let e2 = expm_pade(&(a * dt));
                assert!((&e1 - &e2).amax() < 1e-12 * e2.amax().max(1.0), "dt={dt}");
            }
        }
    }

    #[test]
    fn expm_basics() {
        let z = DMatrix::<f64>::zeros(3, 3);
        assert_eq!(block_matrix_exp(&z, 0.1), DMatrix::identity(3, 3));
        let a = eigenstructure_1dof(1.0).unwrap().a;
        let prod = block_matrix_exp(&a, 0.05) * block_matrix_exp(&a, -0.05);
        assert!((prod - DMatrix::<f64>::identity(2, 2)).amax() < 1e-12);
        // Defective matrix falls back to Padé.
        let j = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        let e = block_matrix_exp(&j, 1.0);
        let ex = std::f64::consts::E;
        assert!((e[(0, 0)] - ex).abs() < 1e-13 && (e[(0, 1)] - ex).abs() < 1e-13 && e[(1, 0)].abs() < 1e-13);
    }

    #[test]
    fn linear_solution_satisfies_ode() {
        let k = 1.0;
        let terms = [
            CosineTerm { amp: 0.1, omega: 0.7, phase: 0.0, component: 1 },
            CosineTerm { amp: 0.3, omega: 0.0, phase: 0.4, component: 1 },
        ];
        let lin = linear_hyp_trajectory_1dof(k, &terms).unwrap();
        for i in 0..50 {
            let t = -10.0 + 0.4 * i as f64;
            let y = lin.eval(t);
            let dy = lin.derivative(t);
            let f = 0.1 * (0.7 * t).cos() + 0.3 * 0.4f64.cos();
            assert!((dy[0] - y[1]).abs() < 1e-13);
            assert!((dy[1] - (y[0] - k * y[1] + f)).abs() < 1e-13);
        }
    }

    #[test]
    fn zero_forcing_linear_solution_vanishes() {
        let lin = linear_hyp_trajectory_1dof(1.0, &[]).unwrap();
        assert_eq!(lin.eval(3.0), vec![0.0, 0.0]);
    }
}
