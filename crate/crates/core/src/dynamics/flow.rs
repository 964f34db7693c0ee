use super::SaddleSystem;
use crate::error::{Error, Result};

/// Scratch buffers for RK4 steps.
#[derive(Clone, Debug)]
pub struct Rk4Work {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4Work {
    pub fn new(dim: usize) -> Self {
        Self { k1: vec![0.0; dim], k2: vec![0.0; dim], k3: vec![0.0; dim], k4: vec![0.0; dim], tmp: vec![0.0; dim] }
    }
}

/// One classical RK4 step of length `h` from `(x, t)`, in place.
#[inline]
pub fn rk4_step(sys: &SaddleSystem, x: &mut [f64], t: f64, h: f64, w: &mut Rk4Work) {
    let d = x.len();
    sys.eval(x, t, &mut w.k1);
    for i in 0..d {
        w.tmp[i] = x[i] + 0.5 * h * w.k1[i];
    }
    sys.eval(&w.tmp, t + 0.5 * h, &mut w.k2);
    for i in 0..d {
        w.tmp[i] = x[i] + 0.5 * h * w.k2[i];
    }
    sys.eval(&w.tmp, t + 0.5 * h, &mut w.k3);
    for i in 0..d {
        w.tmp[i] = x[i] + h * w.k3[i];
    }
    sys.eval(&w.tmp, t + h, &mut w.k4);
    for i in 0..d {
        x[i] += h / 6.0 * (w.k1[i] + 2.0 * w.k2[i] + 2.0 * w.k3[i] + w.k4[i]);
    }
}

/// Advances `x` from `t0` by `dt` (negative for backward time) in `substeps` RK4 steps.
pub fn flow_map_into(
    sys: &SaddleSystem,
    x: &mut [f64],
    t0: f64,
    dt: f64,
    substeps: usize,
    w: &mut Rk4Work,
) -> Result<()> {
    let substeps = substeps.max(1);
    let h = dt / substeps as f64;
    for s in 0..substeps {
        let t = t0 + s as f64 * h;
        rk4_step(sys, x, t, h, w);
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::BlowUp { step: s, time: t });
        }
    }
    Ok(())
}

/// Classical RK4 flow map `phi_dt(x0, t0)` with `substeps` equal steps.
pub fn flow_map(sys: &SaddleSystem, x0: &[f64], t0: f64, dt: f64, substeps: usize) -> Result<Vec<f64>> {
    let mut x = x0.to_vec();
    let mut w = Rk4Work::new(x.len());
    flow_map_into(sys, &mut x, t0, dt, substeps, &mut w)?;
    Ok(x)
}
