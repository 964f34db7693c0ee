//! Task execution. Tasks run in list order and share results in memory; a prerequisite that
//! is not in the list is loaded from the output directory.

use std::fmt::Write as _;
use std::fs;

use serde_json::json;

use saddlepath::atlas::{fit_graph, sample_manifold, LatticeSpec, ManifoldSampleSet, RbfOptions, SamplingOptions};
use saddlepath::bvp::{hyperbolic_trajectory, GuessMode, ManifoldKind, NewtonOptions};
use saddlepath::capsize::{
    agreement, classify_batch, classify_state_lenient, integrate_batch, integrity_measure, reports_csv,
    time_to_capsize, uniform_states, CapsizeTime, EscapeOptions, Label, StableGraphs,
};
use saddlepath::dynamics::{ForcingSignal, GridTrajectory, Model, SaddleSystem, TimeGrid};
use saddlepath::presets::{dividing_manifold, node_times, roll_heave_ou_forcing};
use saddlepath::saddle::{eigenstructure_for, linear_hyp_trajectory_1dof, SaddleEigenstructure};
use saddlepath::validation::{
    advect_manifold_1dof, bundle_csv, differential_correction, globalize_manifolds, manifold_segment_1dof,
    section_curve, shared_hausdorff, AdvectionOptions, Branch, CorrectionOptions, GlobalizeOptions, HobsonParams,
};

use crate::config::{artifact_files, side_suffix, sides, ExperimentConfig, ForcingKind, Task};
use crate::output::{pairs_csv, read_trajectory_csv, trajectory_csv, ArtifactWriter};
use crate::CliError;

struct Saddle {
    sys: SaddleSystem,
    eig: SaddleEigenstructure,
    hyp: GridTrajectory,
}

pub struct Pipeline<'a> {
    cfg: &'a ExperimentConfig,
    out: ArtifactWriter,
    sys: SaddleSystem,
    grid: TimeGrid,
    saddles: Option<Vec<Saddle>>,
    samples: Option<Vec<ManifoldSampleSet>>,
    graphs: Option<StableGraphs>,
}

fn numerical(e: saddlepath::Error) -> CliError {
    match e {
        saddlepath::Error::Io(io) => CliError::Io(io),
        other => CliError::Numerical(other),
    }
}

/// Forcing of the configured model on the configured grid.
pub fn build_forcing(cfg: &ExperimentConfig, grid: &TimeGrid) -> Result<ForcingSignal, CliError> {
    Ok(match cfg.forcing.kind {
        ForcingKind::None => ForcingSignal::Zero,
        ForcingKind::Quasi => ForcingSignal::quasi_periodic(cfg.forcing.terms.clone().unwrap_or_default()),
        ForcingKind::Ou => match cfg.model() {
            Model::RollHeave { h, kx, .. } => roll_heave_ou_forcing(h, kx, cfg.seed, grid).map_err(numerical)?,
            _ => unreachable!("validated"),
        },
    })
}

impl<'a> Pipeline<'a> {
    pub fn new(cfg: &'a ExperimentConfig) -> Result<Self, CliError> {
        let g = cfg.grid();
        let grid = TimeGrid::symmetric(g.t, g.n).map_err(numerical)?;
        let sys = SaddleSystem::new(cfg.model(), build_forcing(cfg, &grid)?, 1).map_err(numerical)?;
        let out = ArtifactWriter::new(&cfg.output_dir(), &cfg.name, &cfg.hash(), cfg.seed)?;
        Ok(Self { cfg, out, sys, grid, saddles: None, samples: None, graphs: None })
    }

    pub fn run(&mut self) -> Result<(), CliError> {
        for &task in &self.cfg.tasks {
            log::info!("task {}", task.name());
            match task {
                Task::HypTraj => self.hyp_traj()?,
                Task::ManifoldSample => self.manifold_sample()?,
                Task::FitGraphs => self.fit_graphs()?,
                Task::Classify => self.classify()?,
                Task::Dividing => self.dividing()?,
                Task::Integrity => self.integrity()?,
                Task::AdvectCheck => self.advect_check()?,
                Task::AutonomousFlux => self.autonomous_flux()?,
            }
        }
        Ok(())
    }

    fn newton(&self) -> NewtonOptions {
        let t = self.cfg.tolerances();
        NewtonOptions { eps_c: t.eps_c, eps_f: t.eps_f, max_iter: t.max_iter, damping: t.damping, ..NewtonOptions::default() }
    }

    fn sampling(&self) -> SamplingOptions {
        let d = SamplingOptions::default();
        SamplingOptions { newton: NewtonOptions { max_iter: self.cfg.sampling.max_iter, ..d.newton }, ..d }
    }

    fn guess(&self) -> Result<GuessMode, CliError> {
        match (self.cfg.model(), &self.sys.forcing) {
            (Model::Eckart { k }, ForcingSignal::QuasiPeriodic(terms)) => {
                Ok(GuessMode::Linearised(linear_hyp_trajectory_1dof(k, terms).map_err(numerical)?))
            }
            _ => Ok(GuessMode::Constant),
        }
    }

    fn hyp_traj(&mut self) -> Result<(), CliError> {
        let newton = self.newton();
        let guess = self.guess()?;
        let model = self.cfg.model;
        let mut saddles = Vec::new();
        for &side in sides(model) {
            let sys = self.sys.with_side(side);
            let eig = eigenstructure_for(&sys.model, side).map_err(numerical)?;
            let (hyp, report) = hyperbolic_trajectory(&sys, &eig, self.grid, &guess, &newton).map_err(numerical)?;
            log::info!("side {side:+}: {} Newton iterations, residual {:.3e}", report.iterations, report.final_residual);
            let details = json!({
                "side": side,
                "grid": self.grid,
                "tolerances": newton,
                "guess": if matches!(guess, GuessMode::Constant) { "constant" } else { "linearised" },
                "newton": report,
            });
            let file = format!("hyp-traj{}.csv", side_suffix(model, side));
            self.out.write("hyp-traj", &file, &trajectory_csv(&hyp), details)?;
            saddles.push(Saddle { sys, eig, hyp });
        }
        if self.cfg.forcing.kind != ForcingKind::None {
            let csv = self.sys.forcing.to_csv(&self.grid.times(), self.sys.dim());
            self.out.write("hyp-traj", "forcing.csv", &csv, json!({ "kind": self.cfg.forcing.kind }))?;
        }
        self.saddles = Some(saddles);
        Ok(())
    }

    fn saddles(&mut self) -> Result<&[Saddle], CliError> {
        if self.saddles.is_none() {
            let model = self.cfg.model;
            let files = artifact_files(Task::HypTraj, model);
            let mut saddles = Vec::new();
            for (&side, file) in sides(model).iter().zip(files) {
                let text = fs::read_to_string(self.out.path(&file))?;
                let hyp = read_trajectory_csv(&text, self.grid).map_err(|e| {
                    CliError::Config(crate::config::ConfigError { path: file.clone(), message: e })
                })?;
                let sys = self.sys.with_side(side);
                let eig = eigenstructure_for(&sys.model, side).map_err(numerical)?;
                log::info!("loaded {file}");
                saddles.push(Saddle { sys, eig, hyp });
            }
            self.saddles = Some(saddles);
        }
        Ok(self.saddles.as_deref().unwrap_or_default())
    }

    fn manifold_sample(&mut self) -> Result<(), CliError> {
        let s = self.cfg.sampling.clone();
        let lattice = LatticeSpec::full(s.bound, s.count);
        let opts = self.sampling();
        let model = self.cfg.model;
        let mut sets = Vec::new();
        for saddle in self.saddles()? {
            let set = sample_manifold(&saddle.sys, &saddle.eig, &saddle.hyp, ManifoldKind::Stable, &lattice, &s.times, &opts)
                .map_err(numerical)?;
            log::info!("side {:+}: {} samples, {} failed", saddle.sys.side, set.samples.len(), set.failed);
            sets.push(set);
        }
        for set in &sets {
            let details = json!({ "side": set.side, "lattice": lattice, "times": s.times, "samples": set.samples.len(), "failed": set.failed });
            let file = format!("manifold-samples{}.csv", side_suffix(model, set.side));
            self.out.write("manifold-sample", &file, &set.to_csv(), details)?;
        }
        self.out.write_json("manifold-sample", "manifold-samples.json", &sets, json!({ "sampling": opts }))?;
        self.samples = Some(sets);
        Ok(())
    }

    fn samples(&mut self) -> Result<&[ManifoldSampleSet], CliError> {
        if self.samples.is_none() {
            let text = fs::read_to_string(self.out.path("manifold-samples.json"))?;
            let sets = serde_json::from_str(&text).map_err(|e| {
                CliError::Config(crate::config::ConfigError { path: "manifold-samples.json".into(), message: e.to_string() })
            })?;
            log::info!("loaded manifold-samples.json");
            self.samples = Some(sets);
        }
        Ok(self.samples.as_deref().unwrap_or_default())
    }

    fn fit_graphs(&mut self) -> Result<(), CliError> {
        let opts = RbfOptions::default();
        let sets = self.samples()?;
        let pick = |side: i8| {
            sets.iter().find(|s| s.side == side).ok_or_else(|| {
                CliError::Config(crate::config::ConfigError {
                    path: "manifold-samples.json".into(),
                    message: format!("no samples for side {side:+}"),
                })
            })
        };
        let graphs = StableGraphs {
            plus: fit_graph(pick(1)?, 3, &opts).map_err(numerical)?,
            minus: fit_graph(pick(-1)?, 3, &opts).map_err(numerical)?,
        };
        self.out.write_json("fit-graphs", "graphs.json", &graphs, json!({ "rbf": opts, "axis": 3 }))?;
        self.graphs = Some(graphs);
        Ok(())
    }

    fn graphs(&mut self) -> Result<&StableGraphs, CliError> {
        if self.graphs.is_none() {
            let text = fs::read_to_string(self.out.path("graphs.json"))?;
            let g = serde_json::from_str(&text).map_err(|e| {
                CliError::Config(crate::config::ConfigError { path: "graphs.json".into(), message: e.to_string() })
            })?;
            log::info!("loaded graphs.json");
            self.graphs = Some(g);
        }
        Ok(self.graphs.as_ref().expect("just set"))
    }

    fn bounds(&self) -> Vec<(f64, f64)> {
        self.cfg.classify.bounds.iter().map(|b| (b[0], b[1])).collect()
    }

    fn escape(&self) -> EscapeOptions {
        let c = &self.cfg.classify;
        EscapeOptions { threshold: c.escape_y2, t_max: c.t_max, step: c.step, component: 1 }
    }

    fn classify(&mut self) -> Result<(), CliError> {
        let states = uniform_states(&self.bounds(), self.cfg.classify.samples, self.cfg.seed);
        let escape = self.escape();
        let predicted = classify_batch(&states, 0.0, self.graphs()?);
        let reference = integrate_batch(&self.sys, &states, 0.0, &escape).map_err(numerical)?;
        let summary = agreement(&predicted, &reference);
        log::info!(
            "accuracy {:.4}, sensitivity {:.4}, specificity {:.4}",
            summary.accuracy,
            summary.sensitivity,
            summary.specificity
        );
        let details = json!({ "states": states.len(), "bounds": self.cfg.classify.bounds, "t": 0.0 });
        self.out.write("classify", "classify.csv", &reports_csv(&predicted), json!({ "method": "graph", "sampling": details }))?;
        self.out.write(
            "classify",
            "reference.csv",
            &reports_csv(&reference),
            json!({ "method": "integration", "escape": escape, "sampling": details }),
        )?;
        self.out.write_json("classify", "classify-summary.json", &summary, json!({}))?;
        Ok(())
    }

    fn dividing(&mut self) -> Result<(), CliError> {
        let d = self.cfg.dividing.clone();
        let times = node_times(&self.grid, d.t_start, d.t_end, d.stride);
        let sampling = self.sampling();
        let model = self.cfg.model;
        let mut manifolds = Vec::new();
        for saddle in self.saddles()? {
            manifolds.push(dividing_manifold(&saddle.sys, &saddle.eig, &saddle.hyp, &times, &sampling).map_err(numerical)?);
        }
        for m in &manifolds {
            let file = format!("dividing{}.json", side_suffix(model, m.side));
            self.out.write_json("dividing", &file, m, json!({ "side": m.side, "nodes": times.len() }))?;
        }
        let states = uniform_states(&self.bounds(), d.samples, self.cfg.seed);
        let mut csv = String::from("x,y,vx,vy,outcome,side,time\n");
        for x in &states {
            let outcome = time_to_capsize(&self.sys, x, 0.0, self.cfg.classify.t_max, &manifolds, d.step).map_err(numerical)?;
            for v in x {
                let _ = write!(csv, "{v:.16e},");
            }
            let _ = match outcome {
                CapsizeTime::Crossed { side, time } => writeln!(csv, "crossed,{side},{time:.16e}"),
                CapsizeTime::NoCrossing => writeln!(csv, "no-crossing,,"),
                CapsizeTime::HorizonExceeded { last_time } => writeln!(csv, "horizon-exceeded,,{last_time:.16e}"),
            };
        }
        self.out.write("dividing", "capsize-times.csv", &csv, json!({ "states": d.samples, "t_max": self.cfg.classify.t_max, "step": d.step }))?;
        Ok(())
    }

    fn integrity(&mut self) -> Result<(), CliError> {
        let h = match self.cfg.model() {
            Model::RollHeave { h, .. } => h,
            _ => unreachable!("validated"),
        };
        let (samples, seed) = (self.cfg.integrity.samples, self.cfg.seed);
        let graphs = self.graphs()?;
        let result = integrity_measure(|x| classify_state_lenient(x, 0.0, graphs).label == Label::Safe, h, samples, seed);
        log::info!("integrity {:.4} (se {:.4})", result.relative, result.std_error);
        self.out.write_json("integrity", "integrity.json", &result, json!({ "classifier": "graph" }))?;
        Ok(())
    }

    fn advect_check(&mut self) -> Result<(), CliError> {
        let a = self.cfg.advect.clone();
        let newton = self.newton();
        let opts = AdvectionOptions { dt: a.dt, hobson: HobsonParams::default(), max_points: a.max_points };
        let saddles = self.saddles()?;
        let s = &saddles[0];
        let mut summary = serde_json::Map::new();
        let mut curves = Vec::new();
        for (kind, t_a, name) in [(ManifoldKind::Stable, a.t_stable, "stable"), (ManifoldKind::Unstable, a.t_unstable, "unstable")] {
            let bvp = manifold_segment_1dof(&s.sys, &s.eig, &s.hyp, kind, 0.0, a.range, a.bvp_points, &newton).map_err(numerical)?;
            let adv = advect_manifold_1dof(&s.sys, &s.eig, &s.hyp, kind, t_a, a.range, a.seed_points, &newton, &opts)
                .map_err(numerical)?;
            let distance = shared_hausdorff(&bvp, &adv.points);
            log::info!("{name}: Hausdorff distance {distance:.3e}, {} points", adv.points.len());
            summary.insert(
                name.into(),
                json!({ "hausdorff": distance, "t_a": t_a, "points": adv.points.len(), "inserted": adv.inserted, "aborted": adv.aborted }),
            );
            curves.push((name, bvp, adv));
        }
        for (name, bvp, adv) in &curves {
            self.out.write("advect-check", &format!("advect-{name}-bvp.csv"), &pairs_csv("x,v", bvp), json!({ "range": a.range }))?;
            self.out.write("advect-check", &format!("advect-{name}-advected.csv"), &adv.to_csv(), json!({ "hobson": adv.params, "dt": adv.dt }))?;
        }
        self.out.write_json("advect-check", "advect-summary.json", &summary, json!({}))?;
        for (_, _, adv) in curves {
            adv.into_result().map_err(numerical)?;
        }
        Ok(())
    }

    fn autonomous_flux(&mut self) -> Result<(), CliError> {
        let f = self.cfg.flux.clone();
        let h = match self.cfg.model() {
            Model::RollHeave { h, .. } => h,
            _ => unreachable!("validated"),
        };
        let orbit = differential_correction(h, f.energy, &CorrectionOptions::default()).map_err(numerical)?;
        log::info!("periodic orbit: energy {:.10}, period {:.6}", orbit.energy, orbit.period);
        self.out.write_json("autonomous-flux", "periodic-orbit.json", &orbit, json!({ "correction": CorrectionOptions::default() }))?;
        let opts = GlobalizeOptions { epsilon: f.epsilon, phases: f.phases, time_budget: f.time_budget, escape_y2: f.escape_y2, ..GlobalizeOptions::default() };
        let mut summary = serde_json::Map::new();
        summary.insert("energy".into(), json!(orbit.energy));
        summary.insert("period".into(), json!(orbit.period));
        for (branch, name) in [(Branch::ForwardContracting, "stable"), (Branch::BackwardContracting, "unstable")] {
            let bundle = globalize_manifolds(&orbit, branch, &opts);
            self.out.write("autonomous-flux", &format!("tube-{name}.csv"), &bundle_csv(branch, &bundle), json!({ "globalize": opts }))?;
            // Each sign of the seed displacement gives its own tube branch.
            let hits = |s: i8| bundle.iter().filter(|b| b.sign == s && b.section_point.is_some()).count();
            let sign = if hits(1) >= hits(-1) { 1 } else { -1 };
            let branch_only: Vec<_> = bundle.iter().filter(|b| b.sign == sign).cloned().collect();
            let section: Vec<[f64; 2]> = section_curve(&branch_only).iter().map(|p| [p[1], p[3]]).collect();
            let area = polygon_area(&section);
            log::info!("{name} tube: {} section points, area {area:.6e}", section.len());
            self.out.write("autonomous-flux", &format!("section-{name}.csv"), &pairs_csv("y,vy", &section), json!({ "sign": sign }))?;
            summary.insert(name.into(), json!({ "sign": sign, "section_points": section.len(), "section_area": area }));
        }
        self.out.write_json("autonomous-flux", "flux.json", &summary, json!({}))?;
        Ok(())
    }
}

/// Shoelace area of a closed polygon.
fn polygon_area(pts: &[[f64; 2]]) -> f64 {
    let n = pts.len();
    if n < 3 {
        return 0.0;
    }
    0.5 * (0..n).map(|i| {
        let (a, b) = (pts[i], pts[(i + 1) % n]);
        a[0] * b[1] - b[0] * a[1]
    }).sum::<f64>().abs()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_square_area() {
        assert_eq!(polygon_area(&[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]), 1.0);
    }
}
