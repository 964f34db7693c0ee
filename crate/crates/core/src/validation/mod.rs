//! Cross-checks: manifold advection with point insertion, and the periodic orbits and manifold
//! tubes of the autonomous roll-heave model.

mod advection;
mod periodic;

pub use advection::{
    advect_curve, advect_manifold_1dof, hobson_refine, manifold_segment_1dof, shared_hausdorff, AdvectedCurve,
    AdvectionOptions, HobsonParams, NaturalSpline,
};
pub use periodic::{
    bundle_csv, centre_direction, differential_correction, globalize_manifolds, orbit_at_amplitude,
    section_curve, section_fate, section_state, seeding_return_distance, AutonomousFlow, Branch,
    BundleTrajectory, CorrectionOptions, GlobalizeOptions, PeriodicOrbit, SectionFate, Stop,
};
