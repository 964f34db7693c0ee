//! Standard forcings and the two-saddle stable-graph pipeline shared by the driver and tests.

use serde::{Deserialize, Serialize};

use crate::atlas::{fit_graph, immersion_jacobian, sample_manifold, LatticeSpec, ManifoldSampleSet, RbfOptions, SamplingOptions};
use crate::bvp::{hyperbolic_trajectory, GuessMode, ManifoldKind, NewtonOptions, NewtonReport};
use crate::capsize::{build_dividing_manifold, DividingManifold, OrientationProbe, StableGraphs};
use crate::dynamics::{sample_ou_path, CosineTerm, ForcingSignal, GridTrajectory, OuParams, SaddleSystem, TimeGrid};
use crate::error::{Error, Result};
use crate::saddle::{eigenstructure_for, SaddleEigenstructure};

/// `0.1 cos(0.7 t) - 0.15 cos(2 t)` on the velocity equation of the barrier.
pub fn eckart_forcing() -> Vec<CosineTerm> {
    vec![
        CosineTerm { amp: 0.1, omega: 0.7, phase: 0.0, component: 1 },
        CosineTerm { amp: -0.15, omega: 2.0, phase: 0.0, component: 1 },
    ]
}

/// `cos(sqrt 2 t) + 2 cos(4 t)` on the roll equation.
pub fn roll_heave_quasi_forcing() -> Vec<CosineTerm> {
    vec![
        CosineTerm { amp: 1.0, omega: 2f64.sqrt(), phase: 0.0, component: 3 },
        CosineTerm { amp: 2.0, omega: 4.0, phase: 0.0, component: 3 },
    ]
}

/// OU parameters tied to the saddle: rate `|lambda_3|`, rotation the centre frequency and
/// `B = [[1, 1], [-1, 1]] / 2`.
pub fn ou_params(eig: &SaddleEigenstructure) -> Result<OuParams> {
    let omega = eig.omega.ok_or_else(|| Error::UnsupportedRegime("OU forcing needs a centre pair".into()))?;
    Ok(OuParams { lambda: eig.lambda_minus().abs(), omega, b: [[0.5, 0.5], [-0.5, 0.5]] })
}

/// One OU realisation on a grid ten times finer than `grid`, driving the two velocity
/// equations of the roll-heave model.
pub fn roll_heave_ou_forcing(h: f64, k: f64, seed: u64, grid: &TimeGrid) -> Result<ForcingSignal> {
    let eig = eigenstructure_for(&crate::dynamics::Model::RollHeave { h, kx: k, ky: k }, 1)?;
    let fine = TimeGrid::new(grid.t_minus, grid.t_plus, (grid.n - 1) * 10 + 1)?;
    sample_ou_path(&ou_params(&eig)?, seed, &fine, [2, 3], 4)
}

/// Settings of [`build_stable_graphs`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphPipeline {
    pub grid: TimeGrid,
    pub hyp_newton: NewtonOptions,
    pub sampling: SamplingOptions,
    pub lattice: LatticeSpec,
    /// Times at which the manifolds are sampled.
    pub times: Vec<f64>,
    pub rbf: RbfOptions,
    /// Graph component (`v_y`).
    pub axis: usize,
}

impl Default for GraphPipeline {
    fn default() -> Self {
        Self {
            grid: TimeGrid { t_minus: -15.0, t_plus: 15.0, n: 601 },
            hyp_newton: NewtonOptions { eps_c: 1e-5, eps_f: 1e-6, ..NewtonOptions::default() },
            sampling: SamplingOptions::default(),
            lattice: LatticeSpec::full(1.5, 5),
            times: vec![0.0],
            rbf: RbfOptions::default(),
            axis: 3,
        }
    }
}

/// Everything produced for one saddle.
#[derive(Clone, Debug)]
pub struct SaddleArtifacts {
    pub side: i8,
    pub eig: SaddleEigenstructure,
    pub hyp: GridTrajectory,
    pub hyp_report: NewtonReport,
    pub samples: ManifoldSampleSet,
}

#[derive(Clone, Debug)]
pub struct GraphBuild {
    pub graphs: StableGraphs,
    pub plus: SaddleArtifacts,
    pub minus: SaddleArtifacts,
}

/// Hyperbolic trajectory (constant guess) and sampled stable manifold of one saddle.
pub fn saddle_artifacts(sys: &SaddleSystem, cfg: &GraphPipeline) -> Result<SaddleArtifacts> {
    let eig = eigenstructure_for(&sys.model, sys.side)?;
    let (hyp, hyp_report) = hyperbolic_trajectory(sys, &eig, cfg.grid, &GuessMode::Constant, &cfg.hyp_newton)?;
    let samples = sample_manifold(sys, &eig, &hyp, ManifoldKind::Stable, &cfg.lattice, &cfg.times, &cfg.sampling)?;
    Ok(SaddleArtifacts { side: sys.side, eig, hyp, hyp_report, samples })
}

/// Stable-manifold graphs of both saddles of the roll-heave model.
pub fn build_stable_graphs(sys: &SaddleSystem, cfg: &GraphPipeline) -> Result<GraphBuild> {
    let plus = saddle_artifacts(&sys.with_side(1), cfg)?;
    let minus = saddle_artifacts(&sys.with_side(-1), cfg)?;
    let graphs = StableGraphs {
        plus: fit_graph(&plus.samples, cfg.axis, &cfg.rbf)?,
        minus: fit_graph(&minus.samples, cfg.axis, &cfg.rbf)?,
    };
    Ok(GraphBuild { graphs, plus, minus })
}

/// Dividing manifold of one saddle from axis-lattice Jacobians (`[-0.5, 0.5]`, 5 per axis) at
/// the grid nodes nearest `times`.
pub fn dividing_manifold(
    sys: &SaddleSystem,
    eig: &SaddleEigenstructure,
    hyp: &GridTrajectory,
    times: &[f64],
    sampling: &SamplingOptions,
) -> Result<DividingManifold> {
    let set = sample_manifold(sys, eig, hyp, ManifoldKind::Stable, &LatticeSpec::axes(0.5, 5), times, sampling)?;
    let jacobians = set
        .times
        .iter()
        .map(|&t| immersion_jacobian(&set, t).map(|j| (t, j)))
        .collect::<Result<Vec<_>>>()?;
    build_dividing_manifold(sys, hyp, &jacobians, eig, &OrientationProbe::default())
}

/// [`dividing_manifold`] from the artifacts of one saddle.
pub fn dividing_from_artifacts(
    sys: &SaddleSystem,
    art: &SaddleArtifacts,
    times: &[f64],
    sampling: &SamplingOptions,
) -> Result<DividingManifold> {
    dividing_manifold(sys, &art.eig, &art.hyp, times, sampling)
}

/// Grid times in `[t0, t1]` taking every `stride`-th node.
pub fn node_times(grid: &TimeGrid, t0: f64, t1: f64, stride: usize) -> Vec<f64> {
    let (a, b) = (grid.nearest(t0), grid.nearest(t1));
    (a..=b).step_by(stride.max(1)).map(|i| grid.time(i)).collect()
}
