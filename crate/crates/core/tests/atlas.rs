use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use saddlepath::atlas::{fit_graph, immersion_jacobian, sample_manifold, LatticeSpec, RbfOptions, SamplingOptions};
use saddlepath::bvp::{hyperbolic_trajectory, manifold_trajectory, GuessMode, ManifoldKind, NewtonOptions};
use saddlepath::dynamics::{ForcingSignal, GridTrajectory, SaddleSystem, TimeGrid};
use saddlepath::presets::{roll_heave_quasi_forcing, saddle_artifacts, GraphPipeline};
use saddlepath::saddle::{eigenstructure_1dof, eigenstructure_2dof, SaddleEigenstructure};

fn ship(forcing: ForcingSignal, side: i8) -> SaddleSystem {
    SaddleSystem::roll_heave(1.0, 1.0, 1.0, forcing, side).unwrap()
}

fn ship_hyp(sys: &SaddleSystem) -> (SaddleEigenstructure, GridTrajectory) {
    let cfg = GraphPipeline::default();
    let eig = eigenstructure_2dof(1.0, 1.0, sys.side).unwrap();
    let (hyp, _) = hyperbolic_trajectory(sys, &eig, cfg.grid, &GuessMode::Constant, &cfg.hyp_newton).unwrap();
    (eig, hyp)
}

#[test]
fn origin_lattice_reproduces_hyperbolic_points() {
    let sys = ship(ForcingSignal::quasi_periodic(roll_heave_quasi_forcing()), 1);
    let (eig, hyp) = ship_hyp(&sys);
    let times = [-2.0, 0.0, 3.0];
    let set = sample_manifold(&sys, &eig, &hyp, ManifoldKind::Stable, &LatticeSpec::full(0.0, 1), &times, &SamplingOptions::default()).unwrap();
    assert_eq!(set.samples.len(), 3);
    for s in &set.samples {
        let h = hyp.state(hyp.grid.nearest(s.t0));
        let err = s.point.iter().zip(h).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-8, "t0 = {}: {err}", s.t0);
    }
}

#[test]
fn quasi_periodic_lattice_converges_and_is_a_graph() {
    let sys = ship(ForcingSignal::quasi_periodic(roll_heave_quasi_forcing()), 1);
    let a = saddle_artifacts(&sys, &GraphPipeline::default()).unwrap();
    assert_eq!(a.samples.samples.len(), 125);
    assert_eq!(a.samples.failed, 0);
    let s = &a.samples.samples;
    for i in 0..s.len() {
        for j in i + 1..s.len() {
            let base = [0usize, 1, 2].iter().map(|&c| (s[i].point[c] - s[j].point[c]).abs()).fold(0.0, f64::max);
            if base < 1e-6 {
                assert!((s[i].point[3] - s[j].point[3]).abs() <= 1e-4, "samples {i} and {j} overlap");
            }
        }
    }
    let origin = a.samples.find(&[0.0, 0.0, 0.0], 0.0).unwrap();
    let h = a.hyp.state(a.hyp.grid.nearest(0.0));
    assert!(origin.point.iter().zip(h).all(|(p, q)| (p - q).abs() < 1e-8));
}

#[test]
fn reflected_parameters_negate_displacement_to_first_order() {
    let sys = ship(ForcingSignal::Zero, 1);
    let (eig, hyp) = ship_hyp(&sys);
    let j = hyp.grid.nearest(0.0);
    let base = hyp.state(j).to_vec();
    let newton = NewtonOptions::default();
    let window = SamplingOptions::default().window;
    let asym = |q: [f64; 3]| {
        let neg = q.map(|v| -v);
        let p = manifold_trajectory(&sys, &eig, &hyp, ManifoldKind::Stable, &q, j, &window, &newton).unwrap();
        let m = manifold_trajectory(&sys, &eig, &hyp, ManifoldKind::Stable, &neg, j, &window, &newton).unwrap();
        (0..4).map(|c| (p.point()[c] - base[c] + m.point()[c] - base[c]).abs()).fold(0.0, f64::max)
    };
    for dir in [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.6, -0.3, 0.5]] {
        let big = asym(dir.map(|v| 0.2 * v));
        let small = asym(dir.map(|v| 0.1 * v));
        assert!(small <= 0.35 * big + 1e-9, "{dir:?}: {small} vs {big}");
    }
}

#[test]
fn unforced_graphs_mirror_each_other() {
    let cfg = GraphPipeline::default();
    let plus = saddle_artifacts(&ship(ForcingSignal::Zero, 1), &cfg).unwrap();
    let minus = saddle_artifacts(&ship(ForcingSignal::Zero, -1), &cfg).unwrap();
    let gp = fit_graph(&plus.samples, 3, &cfg.rbf).unwrap();
    let gm = fit_graph(&minus.samples, 3, &cfg.rbf).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    for _ in 0..200 {
        let (x, y, vx) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-3.0..3.0));
        let a = gp.eval(0.0, &[x, y, vx, 0.0]).value;
        let b = gm.eval(0.0, &[x, -y, vx, 0.0]).value;
        assert!((a + b).abs() < 1e-6, "({x}, {y}, {vx}): {a} vs {b}");
    }
}

#[test]
fn graph_reproduces_centres_and_left_out_samples() {
    let sys = ship(ForcingSignal::quasi_periodic(roll_heave_quasi_forcing()), 1);
    let cfg = GraphPipeline::default();
    let a = saddle_artifacts(&sys, &cfg).unwrap();
    let g = fit_graph(&a.samples, 3, &cfg.rbf).unwrap();
    for s in &a.samples.samples {
        assert!((g.eval(s.t0, &s.point).value - s.point[3]).abs() < 1e-8);
    }
    let interior: Vec<usize> =
        (0..a.samples.samples.len()).filter(|&i| a.samples.samples[i].q.iter().all(|v| v.abs() < 1.0)).take(10).collect();
    assert_eq!(interior.len(), 10);
    for i in interior {
        let mut set = a.samples.clone();
        let left = set.samples.remove(i);
        let g = fit_graph(&set, 3, &cfg.rbf).unwrap();
        let err = (g.eval(left.t0, &left.point).value - left.point[3]).abs();
        assert!(err < 1e-3, "q = {:?}: {err}", left.q);
    }
}

#[test]
fn conservative_barrier_graph_is_minus_tanh() {
    let sys = SaddleSystem::eckart(0.0, ForcingSignal::Zero).unwrap();
    let eig = eigenstructure_1dof(0.0).unwrap();
    let grid = TimeGrid::symmetric(10.0, 401).unwrap();
    let (hyp, _) = hyperbolic_trajectory(&sys, &eig, grid, &GuessMode::Constant, &NewtonOptions::default()).unwrap();
    let set = sample_manifold(&sys, &eig, &hyp, ManifoldKind::Stable, &LatticeSpec::full(0.5, 11), &[0.0], &SamplingOptions::default()).unwrap();
    let g = fit_graph(&set, 1, &RbfOptions::default()).unwrap();
    let v = g.eval(0.0, &[0.3, 0.0]).value;
    assert!((v + 0.3f64.tanh()).abs() < 1e-3, "{v}");
}

/// Largest principal angle between the column spaces of `a` and `b`.
fn largest_principal_angle(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let qa = a.clone().qr().q();
    let qb = b.clone().qr().q();
    let s = (qa.transpose() * qb).svd(false, false).singular_values;
    s.min().clamp(-1.0, 1.0).acos()
}

#[test]
fn immersion_jacobian_spans_the_stable_and_centre_subspace() {
    let sys = ship(ForcingSignal::Zero, 1);
    let (eig, hyp) = ship_hyp(&sys);
    let opts = SamplingOptions::default();
    let jac = |bound: f64| {
        let set = sample_manifold(&sys, &eig, &hyp, ManifoldKind::Stable, &LatticeSpec::axes(bound, 5), &[0.0], &opts).unwrap();
        immersion_jacobian(&set, 0.0).unwrap()
    };
    let (j1, j2, j3) = (jac(0.4), jac(0.2), jac(0.1));
    let analytic = eig.p.columns(0, 3).into_owned();
    let angle = largest_principal_angle(&j3, &analytic);
    assert!(angle < 1e-2, "angle {angle}");
    let (d1, d2) = ((&j1 - &j2).amax(), (&j2 - &j3).amax());
    assert!(d1 / d2 > 3.0, "{d1} vs {d2}");
}
