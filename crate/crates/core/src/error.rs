use thiserror::Error;

use crate::bvp::NewtonReport;

#[derive(Debug, Error)]
pub enum Error {
    #[error("integration blew up at step {step} (t = {time})")]
    BlowUp { step: usize, time: f64 },

    #[error("flow blew up on interval {interval} of the shooting grid")]
    ResidualBlowUp { interval: usize },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("unsupported regime: {0}")]
    UnsupportedRegime(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("newton did not converge after {} iterations (step {:.3e}, residual {:.3e})", .0.iterations, .0.final_step, .0.final_residual)]
    NonConvergence(NewtonReport),

    #[error("newton diverged after {} iterations (residual {:.3e})", .0.iterations, .0.final_residual)]
    Divergence(NewtonReport),

    #[error("{failed} of {total} manifold solves failed; try a smaller lattice bound")]
    Sampling { failed: usize, total: usize },

    #[error("missing lattice sample for {0}; use a denser lattice")]
    MissingSample(String),

    #[error("both capsize conditions hold (margins {plus:.3e}, {minus:.3e})")]
    InconsistentGraphs { plus: f64, minus: f64 },

    #[error("rank deficient spanning set at t = {0}")]
    RankDeficient(f64),

    #[error("curve advection aborted: {points} points exceed the limit")]
    CurveExplosion { points: usize },

    #[error("continuation failed at amplitude {amplitude:.3e}: {reason}")]
    Continuation { amplitude: f64, reason: String },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
