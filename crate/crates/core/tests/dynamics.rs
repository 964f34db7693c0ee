use proptest::prelude::*;

use saddlepath::dynamics::{
    flow_map, hamiltonian_1dof, ou_transition, sample_ou_path, ForcingSignal, OuParams, SaddleSystem, TimeGrid,
};
use saddlepath::presets::{eckart_forcing, ou_params, roll_heave_quasi_forcing};
use saddlepath::saddle::eigenstructure_2dof;

fn quasi_roll_heave() -> SaddleSystem {
    SaddleSystem::roll_heave(1.0, 1.0, 1.0, ForcingSignal::quasi_periodic(roll_heave_quasi_forcing()), 1).unwrap()
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn flow_composes(
        x in prop::array::uniform4(-0.8f64..0.8),
        t0 in -5.0f64..5.0,
        d1 in 0.1f64..1.0,
        d2 in 0.1f64..1.0,
    ) {
        let sys = quasi_roll_heave();
        let steps = |d: f64| (d / 1e-3).ceil() as usize;
        let whole = flow_map(&sys, &x, t0, d1 + d2, steps(d1 + d2)).unwrap();
        let mid = flow_map(&sys, &x, t0, d1, steps(d1)).unwrap();
        let parts = flow_map(&sys, &mid, t0 + d1, d2, steps(d2)).unwrap();
        prop_assert!(max_diff(&whole, &parts) < 1e-9, "{}", max_diff(&whole, &parts));
    }

    #[test]
    fn conservative_barrier_keeps_energy(x in -1.5f64..1.5, v in -0.8f64..0.8) {
        let sys = SaddleSystem::eckart(0.0, ForcingSignal::Zero).unwrap();
        let e0 = hamiltonian_1dof(x, v);
        let mut s = vec![x, v];
        for i in 0..10 {
            s = flow_map(&sys, &s, i as f64, 1.0, 1000).unwrap();
        }
        let drift = (hamiltonian_1dof(s[0], s[1]) - e0).abs() / e0.abs().max(1e-3);
        prop_assert!(drift <= 1e-8 * 10.0, "drift {drift}");
    }
}

#[test]
fn rk4_error_drops_sixteenfold() {
    let sys = quasi_roll_heave().unforced();
    let x0 = [0.3, 0.4, 0.5, -0.2];
    let reference = flow_map(&sys, &x0, 0.0, 2.0, 4000).unwrap();
    let coarse = max_diff(&flow_map(&sys, &x0, 0.0, 2.0, 20).unwrap(), &reference);
    let fine = max_diff(&flow_map(&sys, &x0, 0.0, 2.0, 40).unwrap(), &reference);
    let ratio = coarse / fine;
    assert!((12.0..20.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn fixed_points_stay_put() {
    let damped = SaddleSystem::eckart(1.0, ForcingSignal::Zero).unwrap();
    assert_eq!(flow_map(&damped, &[0.0, 0.0], 0.0, 3.0, 30).unwrap(), vec![0.0, 0.0]);
    let ship = quasi_roll_heave().unforced();
    let x = flow_map(&ship, &[1.0, 1.0, 0.0, 0.0], 0.0, 2.0, 20).unwrap();
    assert!(max_diff(&x, &[1.0, 1.0, 0.0, 0.0]) < 1e-15);
}

#[test]
fn conservative_separatrix_point_stays_on_graph() {
    let sys = SaddleSystem::eckart(0.0, ForcingSignal::Zero).unwrap();
    let x = flow_map(&sys, &[0.5, -(0.5f64).tanh()], 0.0, 1.0, 1000).unwrap();
    assert!((x[1] + x[0].tanh()).abs() < 1e-6);
}

#[test]
fn forcing_enters_velocity_equation() {
    let sys = SaddleSystem::eckart(1.0, ForcingSignal::quasi_periodic(eckart_forcing())).unwrap();
    let mut f = [0.0; 2];
    sys.eval(&[0.0, 0.0], 0.0, &mut f);
    assert!((f[1] - (0.1 - 0.15)).abs() < 1e-15);
    assert_eq!(f[0], 0.0);
}

fn ship_ou_params() -> OuParams {
    ou_params(&eigenstructure_2dof(1.0, 1.0, 1).unwrap()).unwrap()
}

fn path_values(p: &ForcingSignal, grid: &TimeGrid) -> Vec<[f64; 2]> {
    grid.times().iter().map(|&t| {
        let v = p.eval(t, 4);
        [v[2], v[3]]
    }).collect()
}

#[test]
fn ou_autocorrelation_follows_rotating_decay() {
    let p = ship_ou_params();
    let grid = TimeGrid::new(0.0, 50.0, 10_001).unwrap();
    let lag = 100;
    let delta = lag as f64 * grid.dt();
    let burn = 2000;
    let (mut num, mut den) = (0.0, 0.0);
    for seed in 0..100 {
        let v = path_values(&sample_ou_path(&p, seed, &grid, [2, 3], 4).unwrap(), &grid);
        for i in burn..v.len() - lag {
            num += v[i][0] * v[i + lag][0] + v[i][1] * v[i + lag][1];
            den += v[i][0] * v[i][0] + v[i][1] * v[i][1];
        }
    }
    let empirical = num / den;
    let expected = (-p.lambda * delta).exp() * (p.omega * delta).cos();
    assert!((empirical - expected).abs() <= 0.2 * expected.abs(), "{empirical} vs {expected}");
}

#[test]
fn ou_end_value_has_zero_mean() {
    let p = ship_ou_params();
    let grid = TimeGrid::new(-5.0, 5.0, 2001).unwrap();
    let ends: Vec<[f64; 2]> = (0..1000u64)
        .map(|s| {
            let v = sample_ou_path(&p, s, &grid, [2, 3], 4).unwrap().eval(5.0, 4);
            [v[2], v[3]]
        })
        .collect();
    for c in 0..2 {
        let n = ends.len() as f64;
        let mean = ends.iter().map(|e| e[c]).sum::<f64>() / n;
        let sd = (ends.iter().map(|e| (e[c] - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!(mean.abs() < 3.0 * sd / n.sqrt(), "component {c}: mean {mean}, sd {sd}");
    }
}

#[test]
fn ou_covariance_matches_quadrature() {
    let p = OuParams { lambda: 0.7, omega: 1.3, b: [[0.9, -0.2], [0.4, 0.3]] };
    let delta = 0.8;
    let (e, q) = ou_transition(&p, delta);
    let m = 4000;
    let h = delta / m as f64;
    let mut oracle = [[0.0; 2]; 2];
    for i in 0..=m {
        let s = i as f64 * h;
        let w = if i == 0 || i == m { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
        let decay = (-p.lambda * s).exp();
        let (sn, cs) = (p.omega * s).sin_cos();
        let r = [[decay * cs, -decay * sn], [decay * sn, decay * cs]];
        let mut rb = [[0.0; 2]; 2];
        for a in 0..2 {
            for b in 0..2 {
                rb[a][b] = (0..2).map(|c| r[a][c] * p.b[c][b]).sum();
            }
        }
        for a in 0..2 {
            for b in 0..2 {
                oracle[a][b] += w * h / 3.0 * (0..2).map(|c| rb[a][c] * rb[b][c]).sum::<f64>();
            }
        }
    }
    for a in 0..2 {
        for b in 0..2 {
            assert!((q[a][b] - oracle[a][b]).abs() < 1e-10, "Q[{a}][{b}] {} vs {}", q[a][b], oracle[a][b]);
        }
    }
    let decay = (-p.lambda * delta).exp();
    assert!((e[0][0] - decay * (p.omega * delta).cos()).abs() < 1e-15);
    assert!((e[1][0] - decay * (p.omega * delta).sin()).abs() < 1e-15);
}
