use serde::{Deserialize, Serialize};

use super::{BvpKind, BvpProblem};
use crate::dynamics::{GridTrajectory, SaddleSystem, TimeGrid};
use crate::error::{Error, Result};
use crate::saddle::{block_matrix_exp, LinearHypTrajectory, SaddleEigenstructure};

/// Convergence settings. Norms are max-norms over all `N*d` entries.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NewtonOptions {
    pub eps_c: f64,
    pub eps_f: f64,
    pub max_iter: usize,
    /// Halve the step (up to 4 times) when the residual grows.
    pub damping: bool,
    /// RK4 steps per grid interval.
    pub substeps: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self { eps_c: 1e-7, eps_f: 1e-6, max_iter: 50, damping: true, substeps: 10 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NewtonReport {
    pub iterations: usize,
    pub final_residual: f64,
    pub final_step: f64,
    pub converged: bool,
    pub step_history: Vec<f64>,
    pub residual_history: Vec<f64>,
}

fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Newton iteration `X <- X + dX`, `M dX = -Phi(X)`, with `M` factorised once.
/// Returns the trajectory `X + reference`.
pub fn newton_solve(problem: &BvpProblem<'_>, opts: &NewtonOptions) -> Result<(GridTrajectory, NewtonReport)> {
    if !(opts.eps_c > 0.0 && opts.eps_f > 0.0) {
        return Err(Error::Parameter("tolerances must be positive".into()));
    }
    let m = problem.factor()?;
    let mut x: Vec<f64> =
        problem.initial_guess.states.iter().zip(&problem.reference.states).map(|(g, r)| g - r).collect();
    let mut r = problem.residual(&x)?;
    let mut res = max_norm(&r);
    let mut report = NewtonReport {
        iterations: 0,
        final_residual: res,
        final_step: f64::INFINITY,
        converged: false,
        step_history: Vec::new(),
        residual_history: vec![res],
    };

    for it in 1..=opts.max_iter {
        let rhs: Vec<f64> = r.iter().map(|v| -v).collect();
        let dx = m.solve(&rhs);
        let mut scale = 1.0;
        let trial = |s: f64| -> (Vec<f64>, Result<Vec<f64>>) {
            let xn: Vec<f64> = x.iter().zip(&dx).map(|(a, b)| a + s * b).collect();
            let rn = problem.residual(&xn);
            (xn, rn)
        };
        let (mut xn, mut rn) = trial(scale);
        if opts.damping {
            for _ in 0..4 {
                let worse = match &rn {
                    Ok(v) => {
                        let nr = max_norm(v);
                        !nr.is_finite() || (nr > res && nr > opts.eps_f)
                    }
                    Err(_) => true,
                };
                if !worse {
                    break;
                }
                scale *= 0.5;
                (xn, rn) = trial(scale);
            }
        }
        let rn = rn?;
        let step = scale * max_norm(&dx);
        x = xn;
        r = rn;
        res = max_norm(&r);
        report.iterations = it;
        report.final_step = step;
        report.final_residual = res;
        report.step_history.push(step);
        report.residual_history.push(res);
        if !res.is_finite() {
            return Err(Error::Divergence(report));
        }
        if step < opts.eps_c && res < opts.eps_f {
            report.converged = true;
            let states = x.iter().zip(&problem.reference.states).map(|(a, b)| a + b).collect();
            return Ok((GridTrajectory::new(problem.grid, problem.dim(), states), report));
        }
        let h = &report.residual_history;
        let k = h.len();
        if k >= 4 && h[k - 1] > 10.0 * h[k - 4] && h[k - 1] > h[k - 2] && h[k - 2] > h[k - 3] && h[k - 3] > h[k - 4] {
            return Err(Error::Divergence(report));
        }
    }
    Err(Error::NonConvergence(report))
}

/// Initial guess for the hyperbolic problem.
#[derive(Clone, Debug)]
pub enum GuessMode {
    /// `t -> p`.
    Constant,
    /// `t -> p + y_lin(t)` from the closed-form linear solution.
    Linearised(LinearHypTrajectory),
}

/// Hyperbolic trajectory of `sys` on `grid`.
pub fn hyperbolic_trajectory(
    sys: &SaddleSystem,
    eig: &SaddleEigenstructure,
    grid: TimeGrid,
    guess: &GuessMode,
    opts: &NewtonOptions,
) -> Result<(GridTrajectory, NewtonReport)> {
    let reference = GridTrajectory::constant(grid, &sys.saddle);
    let initial = match guess {
        GuessMode::Constant => reference.clone(),
        GuessMode::Linearised(lin) => {
            let mut states = Vec::with_capacity(grid.n * sys.dim());
            for i in 0..grid.n {
                let y = lin.eval(grid.time(i));
                states.extend(y.iter().zip(&sys.saddle).map(|(a, b)| a + b));
            }
            GridTrajectory::new(grid, sys.dim(), states)
        }
    };
    let problem = BvpProblem::new(sys, eig, BvpKind::Hyperbolic, reference, initial, opts.substeps)?;
    newton_solve(&problem, opts)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ManifoldKind {
    Centre,
    Stable,
    Unstable,
}

impl ManifoldKind {
    /// Parameter dimension for this kind at `eig`.
    pub fn param_dim(self, eig: &SaddleEigenstructure) -> usize {
        match self {
            ManifoldKind::Centre => eig.n_c,
            ManifoldKind::Stable => eig.n_c + eig.n_minus,
            ManifoldKind::Unstable => eig.n_c + eig.n_plus,
        }
    }

    /// Eigen-coordinates pinned by `q`, in q order.
    pub fn pinned_cols(self, eig: &SaddleEigenstructure) -> Vec<usize> {
        let mut v: Vec<usize> = eig.centre_cols().collect();
        match self {
            ManifoldKind::Centre => {}
            ManifoldKind::Stable => v.extend(eig.stable_cols()),
            ManifoldKind::Unstable => v.extend(eig.unstable_cols()),
        }
        v
    }

    fn bvp_kind(self, q: Vec<f64>, j: usize) -> BvpKind {
        match self {
            ManifoldKind::Centre => BvpKind::Centre { q, j },
            ManifoldKind::Stable => BvpKind::Stable { q, j },
            ManifoldKind::Unstable => BvpKind::Unstable { q, j },
        }
    }
}

/// Shortened window `[t_J - dT_-, t_J + dT_+]` with `e^{|lambda_-| dT_-} = e^{lambda_+ dT_+} = growth`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowRule {
    pub growth: f64,
}

impl Default for WindowRule {
    fn default() -> Self {
        Self { growth: 10.0 }
    }
}

impl WindowRule {
    /// Node offsets (back, forward) on a grid with spacing `dt`.
    pub fn offsets(&self, eig: &SaddleEigenstructure, dt: f64) -> (usize, usize) {
        let g = self.growth.ln();
        let back = (g / eig.lambda_minus().abs() / dt).round().max(1.0) as usize;
        let fwd = (g / eig.lambda_plus() / dt).round().max(1.0) as usize;
        (back, fwd)
    }
}

#[derive(Clone, Debug)]
pub struct ManifoldSolution {
    pub trajectory: GridTrajectory,
    pub report: NewtonReport,
    /// Index of the pinning node inside `trajectory`.
    pub j_local: usize,
    /// The window was cut by the ends of the hyperbolic trajectory's grid.
    pub clipped: bool,
}

impl ManifoldSolution {
    /// Point at the pinning time (the immersion value).
    pub fn point(&self) -> &[f64] {
        self.trajectory.state(self.j_local)
    }
}

/// Trajectory on the chosen manifold of `x_hyp` whose pinned eigen-coordinates at node `j`
/// (index into `x_hyp`'s grid) equal `q`. Solved on the shortened window around `j`.
#[allow(clippy::too_many_arguments)]
pub fn manifold_trajectory(
    sys: &SaddleSystem,
    eig: &SaddleEigenstructure,
    x_hyp: &GridTrajectory,
    kind: ManifoldKind,
    q: &[f64],
    j: usize,
    window: &WindowRule,
    opts: &NewtonOptions,
) -> Result<ManifoldSolution> {
    let n = x_hyp.grid.n;
    if j == 0 || j + 1 >= n {
        return Err(Error::Parameter(format!("pinning node {j} must be interior to the grid")));
    }
    let dt = x_hyp.grid.dt();
    let (back, fwd) = window.offsets(eig, dt);
    let i0 = j.saturating_sub(back);
    let i1 = (j + fwd).min(n - 1);
    let clipped = i0 + back != j || i1 != j + fwd;
    if clipped {
        log::debug!("manifold window around t = {} clipped to the grid", x_hyp.grid.time(j));
    }
    let reference = x_hyp.slice(i0, i1);
    let j_local = j - i0;

    let cols = kind.pinned_cols(eig);
    if q.len() != cols.len() {
        return Err(Error::Parameter(format!("q has {} entries, expected {}", q.len(), cols.len())));
    }
    let mut coords = vec![0.0; eig.dim()];
    for (c, v) in cols.iter().zip(q) {
        coords[*c] = *v;
    }
    let initial = linear_manifold_guess(eig, &reference, j_local, &coords);
    let problem = BvpProblem::new(sys, eig, kind.bvp_kind(q.to_vec(), j_local), reference, initial, opts.substeps)?;
    if q.iter().all(|v| *v == 0.0) {
        // The hyperbolic trajectory is the q = 0 member of every manifold.
        let res = max_norm(&problem.residual(&vec![0.0; problem.reference.states.len()])?);
        if res < opts.eps_f {
            let report = NewtonReport {
                iterations: 0,
                final_residual: res,
                final_step: 0.0,
                converged: true,
                step_history: Vec::new(),
                residual_history: vec![res],
            };
            return Ok(ManifoldSolution { trajectory: problem.reference.clone(), report, j_local, clipped });
        }
    }
    let (trajectory, report) = newton_solve(&problem, opts)?;
    Ok(ManifoldSolution { trajectory, report, j_local, clipped })
}

/// `X_hyp(t_i) + e^{(t_i - t_J) A} P coords` on the reference grid.
fn linear_manifold_guess(eig: &SaddleEigenstructure, reference: &GridTrajectory, j: usize, coords: &[f64]) -> GridTrajectory {
    let d = eig.dim();
    let n = reference.grid.n;
    let dt = reference.grid.dt();
    let fwd = block_matrix_exp(&eig.a, dt);
    let bwd = block_matrix_exp(&eig.a, -dt);
    let mut disp = vec![0.0; n * d];
    disp[j * d..(j + 1) * d].copy_from_slice(&eig.from_coords(coords));
    for i in j + 1..n {
        for r in 0..d {
            disp[i * d + r] = (0..d).map(|c| fwd[(r, c)] * disp[(i - 1) * d + c]).sum();
        }
    }
    for i in (0..j).rev() {
        for r in 0..d {
            disp[i * d + r] = (0..d).map(|c| bwd[(r, c)] * disp[(i + 1) * d + c]).sum();
        }
    }
    let states = disp.iter().zip(&reference.states).map(|(a, b)| a + b).collect();
    GridTrajectory::new(reference.grid, d, states)
}
