//! Vector fields, forcing signals, time grids and the RK4 flow map.

mod flow;
mod forcing;
mod grid;

pub use flow::{flow_map, flow_map_into, rk4_step, Rk4Work};
pub use forcing::{ou_transition, sample_ou_path, CosineTerm, ForcingSignal, OuParams, SampledPath};
pub use grid::{GridTrajectory, TimeGrid};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Autonomous part of the models.
///
/// `Eckart` is the rescaled barrier `x'' = tanh x sech^2 x - k x'`.
/// `RollHeave` is the coupled roll-heave ship model with saddles at `(1, ±1, 0, 0)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum Model {
    Eckart { k: f64 },
    RollHeave { h: f64, kx: f64, ky: f64 },
}

impl Model {
    pub fn dim(&self) -> usize {
        match self {
            Model::Eckart { .. } => 2,
            Model::RollHeave { .. } => 4,
        }
    }

    /// Writes f0(x) into `out`.
    #[inline]
    pub fn eval(&self, x: &[f64], out: &mut [f64]) {
        match *self {
            Model::Eckart { k } => {
                let s = 1.0 / x[0].cosh();
                out[0] = x[1];
                out[1] = x[0].tanh() * s * s - k * x[1];
            }
            Model::RollHeave { h, kx, ky } => {
                let (px, py, vx, vy) = (x[0], x[1], x[2], x[3]);
                out[0] = vx;
                out[1] = vy;
                out[2] = -h * (px - py * py) - kx * vx;
                out[3] = -py + px * py - ky * vy;
            }
        }
    }

    pub fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        match *self {
            Model::Eckart { k } => {
                let s2 = 1.0 / (x[0].cosh() * x[0].cosh());
                let t = x[0].tanh();
                DMatrix::from_row_slice(2, 2, &[0.0, 1.0, s2 * s2 - 2.0 * t * t * s2, -k])
            }
            Model::RollHeave { h, kx, ky } => DMatrix::from_row_slice(
                4,
                4,
                &[
                    0.0, 0.0, 1.0, 0.0, //
                    0.0, 0.0, 0.0, 1.0, //
                    -h, 2.0 * h * x[1], -kx, 0.0, //
                    x[1], x[0] - 1.0, 0.0, -ky,
                ],
            ),
        }
    }

    /// Saddle point on the given side (`side` is ignored for the 1DoF barrier).
    pub fn saddle(&self, side: i8) -> Vec<f64> {
        match self {
            Model::Eckart { .. } => vec![0.0, 0.0],
            Model::RollHeave { .. } => vec![1.0, f64::from(side.signum()), 0.0, 0.0],
        }
    }

    /// Conserved energy of the undamped, unforced model.
    pub fn energy(&self, x: &[f64]) -> f64 {
        match *self {
            Model::Eckart { .. } => hamiltonian_1dof(x[0], x[1]),
            Model::RollHeave { h, .. } => hamiltonian_2dof(h, x[0], x[1], x[2], x[3]),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Model::Eckart { k } => k.is_finite() && k >= 0.0,
            Model::RollHeave { h, kx, ky } => {
                h.is_finite() && h > 0.0 && kx.is_finite() && kx >= 0.0 && ky.is_finite() && ky >= 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Parameter(format!("invalid model parameters {self:?}")))
        }
    }
}

/// Forced system `x' = f0(x) + F(t)` together with the saddle it is studied around.
#[derive(Clone, Debug)]
pub struct SaddleSystem {
    pub model: Model,
    pub forcing: ForcingSignal,
    pub saddle: Vec<f64>,
    pub side: i8,
}

impl SaddleSystem {
    pub fn new(model: Model, forcing: ForcingSignal, side: i8) -> Result<Self> {
        model.validate()?;
        let side = if side < 0 { -1 } else { 1 };
        let saddle = model.saddle(side);
        let mut f = vec![0.0; model.dim()];
        model.eval(&saddle, &mut f);
        debug_assert!(f.iter().all(|v| v.abs() < 1e-10));
        Ok(Self { model, forcing, saddle, side })
    }

    pub fn eckart(k: f64, forcing: ForcingSignal) -> Result<Self> {
        Self::new(Model::Eckart { k }, forcing, 1)
    }

    pub fn roll_heave(h: f64, kx: f64, ky: f64, forcing: ForcingSignal, side: i8) -> Result<Self> {
        Self::new(Model::RollHeave { h, kx, ky }, forcing, side)
    }

    /// Same model and forcing, other saddle.
    pub fn with_side(&self, side: i8) -> Self {
        Self::new(self.model.clone(), self.forcing.clone(), side).expect("model already validated")
    }

    pub fn unforced(&self) -> Self {
        Self { forcing: ForcingSignal::Zero, ..self.clone() }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    /// Full vector field f0(x) + F(t).
    #[inline]
    pub fn eval(&self, x: &[f64], t: f64, out: &mut [f64]) {
        self.model.eval(x, out);
        self.forcing.add_to(t, out);
    }

    pub fn jacobian_at_saddle(&self) -> DMatrix<f64> {
        self.model.jacobian(&self.saddle)
    }
}

/// `H = v_x^2/(4h) + v_y^2/2 + (y^2 + x^2/2 - x y^2)/2`.
pub fn hamiltonian_2dof(h: f64, x: f64, y: f64, vx: f64, vy: f64) -> f64 {
    vx * vx / (4.0 * h) + 0.5 * vy * vy + 0.5 * (y * y + 0.5 * x * x - x * y * y)
}

/// `H = v^2/2 + sech^2(x)/2` for the undamped barrier.
pub fn hamiltonian_1dof(x: f64, v: f64) -> f64 {
    let s = 1.0 / x.cosh();
    0.5 * v * v + 0.5 * s * s
}
