//! Discretised Newton boundary-value solver for hyperbolic trajectories and their
//! centre, stable and unstable manifolds.
//!
//! Unknowns are displacements `X_i` from a reference trajectory (the saddle for the hyperbolic
//! problem, a converged hyperbolic trajectory for manifold problems). Shooting defects are
//! `phi_dt(X_i + r_i, t_i) - X_{i+1} - r_{i+1}`; the last `d` equations pin eigen-coordinates
//! `(P^{-1} X_n)_j` at chosen nodes. The Jacobian of each shooting block is approximated by
//! `e^{dt A}`, so the Newton matrix is constant and factorised once per solve.

mod banded;
mod newton;

pub use banded::{BandLu, BandMatrix};
pub use newton::{
    hyperbolic_trajectory, manifold_trajectory, newton_solve, GuessMode, ManifoldKind, ManifoldSolution, NewtonOptions,
    NewtonReport, WindowRule,
};

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::dynamics::{flow_map_into, GridTrajectory, Rk4Work, SaddleSystem, TimeGrid};
use crate::error::{Error, Result};
use crate::saddle::{block_matrix_exp, SaddleEigenstructure};

/// What the boundary block pins.
#[derive(Clone, Debug, PartialEq)]
pub enum BvpKind {
    /// Forward-contracting coordinates vanish at the first node, unstable ones at the last.
    Hyperbolic,
    /// `q` has one entry per centre coordinate, pinned at node `j`.
    Centre { q: Vec<f64>, j: usize },
    /// `q` is (centre..., strong stable...), pinned at node `j`; unstable vanish at the last node.
    Stable { q: Vec<f64>, j: usize },
    /// `q` is (centre..., unstable...), pinned at node `j`; strong stable vanish at the first node.
    Unstable { q: Vec<f64>, j: usize },
}

/// One boundary equation `(P^{-1} X_node)_coord = target`.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryRow {
    pub node: usize,
    pub coord: usize,
    pub target: f64,
}

/// A boundary-value problem on a grid, ready to be solved.
#[derive(Clone, Debug)]
pub struct BvpProblem<'a> {
    pub sys: &'a SaddleSystem,
    pub eig: &'a SaddleEigenstructure,
    pub grid: TimeGrid,
    pub kind: BvpKind,
    /// Reference trajectory the unknowns are displacements from.
    pub reference: GridTrajectory,
    pub initial_guess: GridTrajectory,
    pub substeps: usize,
    rows: Vec<BoundaryRow>,
    step_matrix: DMatrix<f64>,
}

impl<'a> BvpProblem<'a> {
    pub fn new(
        sys: &'a SaddleSystem,
        eig: &'a SaddleEigenstructure,
        kind: BvpKind,
        reference: GridTrajectory,
        initial_guess: GridTrajectory,
        substeps: usize,
    ) -> Result<Self> {
        let grid = reference.grid;
        let d = sys.dim();
        if eig.dim() != d || reference.dim != d || initial_guess.dim != d || initial_guess.grid.n != grid.n {
            return Err(Error::Parameter("dimension mismatch between system, eigenstructure and trajectories".into()));
        }
        if !initial_guess.states.iter().all(|v| v.is_finite()) {
            return Err(Error::Parameter("initial guess is not finite".into()));
        }
        let rows = boundary_rows(eig, &kind, grid.n)?;
        let step_matrix = block_matrix_exp(&eig.a, grid.dt());
        Ok(Self { sys, eig, grid, kind, reference, initial_guess, substeps: substeps.max(1), rows, step_matrix })
    }

    pub fn dim(&self) -> usize {
        self.sys.dim()
    }

    pub fn boundary_rows(&self) -> &[BoundaryRow] {
        &self.rows
    }

    /// Residual in the displayed layout: `N-1` shooting blocks, then the `d` boundary rows.
    pub fn residual(&self, x: &[f64]) -> Result<Vec<f64>> {
        let d = self.dim();
        let n = self.grid.n;
        let dt = self.grid.dt();
        let mut out = vec![0.0; n * d];
        let blocks: Vec<Result<()>> = out[..(n - 1) * d]
            .par_chunks_mut(d)
            .with_min_len(64)
            .enumerate()
            .map_init(
                || (Rk4Work::new(d), vec![0.0; d]),
                |(work, state), (i, block)| {
                    let r0 = self.reference.state(i);
                    for c in 0..d {
                        state[c] = x[i * d + c] + r0[c];
                    }
                    flow_map_into(self.sys, state, self.grid.time(i), dt, self.substeps, work)
                        .map_err(|_| Error::ResidualBlowUp { interval: i })?;
                    let r1 = self.reference.state(i + 1);
                    for c in 0..d {
                        block[c] = state[c] - x[(i + 1) * d + c] - r1[c];
                    }
                    Ok(())
                },
            )
            .collect();
        for b in blocks {
            b?;
        }
        let base = (n - 1) * d;
        for (k, row) in self.rows.iter().enumerate() {
            let xs = &x[row.node * d..(row.node + 1) * d];
            let proj: f64 = (0..d).map(|c| self.eig.p_inv[(row.coord, c)] * xs[c]).sum();
            out[base + k] = proj - row.target;
        }
        Ok(out)
    }

    /// Dense Newton matrix in the displayed layout (used as a test oracle).
    pub fn dense_matrix(&self) -> DMatrix<f64> {
        let d = self.dim();
        let n = self.grid.n;
        let mut m = DMatrix::zeros(n * d, n * d);
        for i in 0..n - 1 {
            for r in 0..d {
                for c in 0..d {
                    m[(i * d + r, i * d + c)] = self.step_matrix[(r, c)];
                }
                m[(i * d + r, (i + 1) * d + r)] = -1.0;
            }
        }
        for (k, row) in self.rows.iter().enumerate() {
            for c in 0..d {
                m[((n - 1) * d + k, row.node * d + c)] = self.eig.p_inv[(row.coord, c)];
            }
        }
        m
    }

    /// Row order that makes the Newton matrix banded: each node's boundary rows are placed
    /// immediately before that node's shooting block. Entry `r` is the displayed row index.
    pub fn banded_row_order(&self) -> Vec<usize> {
        let d = self.dim();
        let n = self.grid.n;
        let mut order = Vec::with_capacity(n * d);
        for node in 0..n {
            for (k, row) in self.rows.iter().enumerate() {
                if row.node == node {
                    order.push((n - 1) * d + k);
                }
            }
            if node + 1 < n {
                order.extend(node * d..(node + 1) * d);
            }
        }
        order
    }

    /// Newton matrix with rows permuted by [`Self::banded_row_order`].
    pub fn band_matrix(&self) -> BandMatrix {
        let d = self.dim();
        let n = self.grid.n;
        let order = self.banded_row_order();
        // (row, first column, last column) of each permuted row's nonzero span.
        let span = |displayed: usize| -> (usize, usize) {
            if displayed < (n - 1) * d {
                let i = displayed / d;
                (i * d, (i + 2) * d - 1)
            } else {
                let node = self.rows[displayed - (n - 1) * d].node;
                (node * d, (node + 1) * d - 1)
            }
        };
        let (mut kl, mut ku) = (0usize, 0usize);
        for (r, &disp) in order.iter().enumerate() {
            let (c0, c1) = span(disp);
            kl = kl.max(r.saturating_sub(c0));
            ku = ku.max(c1.saturating_sub(r));
        }
        let mut band = BandMatrix::zeros(n * d, kl, ku);
        for (r, &disp) in order.iter().enumerate() {
            if disp < (n - 1) * d {
                let i = disp / d;
                let rr = disp % d;
                for c in 0..d {
                    band.set(r, i * d + c, self.step_matrix[(rr, c)]);
                }
                band.set(r, (i + 1) * d + rr, -1.0);
            } else {
                let row = &self.rows[disp - (n - 1) * d];
                for c in 0..d {
                    band.set(r, row.node * d + c, self.eig.p_inv[(row.coord, c)]);
                }
            }
        }
        band
    }

    /// Factorised Newton matrix.
    pub fn factor(&self) -> Result<NewtonMatrix> {
        Ok(NewtonMatrix { lu: self.band_matrix().factor()?, order: self.banded_row_order() })
    }
}

/// LU factors of the Newton matrix plus the row permutation used to band it.
#[derive(Clone, Debug)]
pub struct NewtonMatrix {
    lu: BandLu,
    order: Vec<usize>,
}

impl NewtonMatrix {
    /// Solves `M z = rhs` with `rhs` in the displayed row layout.
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut b: Vec<f64> = self.order.iter().map(|&r| rhs[r]).collect();
        self.lu.solve_in_place(&mut b);
        b
    }
}

fn boundary_rows(eig: &SaddleEigenstructure, kind: &BvpKind, n: usize) -> Result<Vec<BoundaryRow>> {
    let d = eig.dim();
    let last = n - 1;
    let row = |node, coord, target| BoundaryRow { node, coord, target };
    let check_j = |j: usize| -> Result<()> {
        if j == 0 || j >= last {
            Err(Error::Parameter(format!("pinning node {j} must lie strictly inside 0..{last}")))
        } else {
            Ok(())
        }
    };
    let check_q = |q: &[f64], want: usize| -> Result<()> {
        if q.len() != want {
            Err(Error::Parameter(format!("q has {} entries, expected {want}", q.len())))
        } else if !q.iter().all(|v| v.is_finite()) {
            Err(Error::Parameter("q is not finite".into()))
        } else {
            Ok(())
        }
    };
    let mut rows = Vec::with_capacity(d);
    match kind {
        BvpKind::Hyperbolic => {
            for j in 0..d {
                let rate = eig.rate(j);
                if rate.abs() < 1e-12 {
                    return Err(Error::UnsupportedRegime("neutral direction: hyperbolic problem is ill-posed".into()));
                }
                rows.push(row(if rate < 0.0 { 0 } else { last }, j, 0.0));
            }
        }
        BvpKind::Centre { q, j } => {
            check_j(*j)?;
            check_q(q, eig.n_c)?;
            rows.extend(eig.stable_cols().map(|c| row(0, c, 0.0)));
            rows.extend(eig.centre_cols().zip(q).map(|(c, v)| row(*j, c, *v)));
            rows.extend(eig.unstable_cols().map(|c| row(last, c, 0.0)));
        }
        BvpKind::Stable { q, j } => {
            check_j(*j)?;
            check_q(q, eig.n_c + eig.n_minus)?;
            let pinned = eig.centre_cols().chain(eig.stable_cols());
            rows.extend(pinned.zip(q).map(|(c, v)| row(*j, c, *v)));
            rows.extend(eig.unstable_cols().map(|c| row(last, c, 0.0)));
        }
        BvpKind::Unstable { q, j } => {
            check_j(*j)?;
            check_q(q, eig.n_c + eig.n_plus)?;
            rows.extend(eig.stable_cols().map(|c| row(0, c, 0.0)));
            let pinned = eig.centre_cols().chain(eig.unstable_cols());
            rows.extend(pinned.zip(q).map(|(c, v)| row(*j, c, *v)));
        }
    }
    debug_assert_eq!(rows.len(), d);
    Ok(rows)
}
