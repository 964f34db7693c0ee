//! Experiment configuration: TOML schema, defaults and validation.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use saddlepath::dynamics::{CosineTerm, Model, SaddleSystem};
use saddlepath::presets::{eckart_forcing, roll_heave_quasi_forcing};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "eckart-1dof")]
    Eckart1dof,
    #[serde(rename = "roll-heave-2dof")]
    RollHeave2dof,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ForcingKind {
    None,
    Quasi,
    Ou,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    HypTraj,
    ManifoldSample,
    FitGraphs,
    Classify,
    Dividing,
    Integrity,
    AdvectCheck,
    AutonomousFlux,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::HypTraj => "hyp-traj",
            Task::ManifoldSample => "manifold-sample",
            Task::FitGraphs => "fit-graphs",
            Task::Classify => "classify",
            Task::Dividing => "dividing",
            Task::Integrity => "integrity",
            Task::AdvectCheck => "advect-check",
            Task::AutonomousFlux => "autonomous-flux",
        }
    }

    pub fn prerequisite(self) -> Option<Task> {
        match self {
            Task::HypTraj | Task::AutonomousFlux => None,
            Task::ManifoldSample | Task::Dividing | Task::AdvectCheck => Some(Task::HypTraj),
            Task::FitGraphs => Some(Task::ManifoldSample),
            Task::Classify | Task::Integrity => Some(Task::FitGraphs),
        }
    }

    fn model(self) -> Option<ModelKind> {
        match self {
            Task::HypTraj | Task::ManifoldSample => None,
            Task::AdvectCheck => Some(ModelKind::Eckart1dof),
            _ => Some(ModelKind::RollHeave2dof),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Parameters {
    /// Damping of the barrier model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kx: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ky: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForcingSpec {
    pub kind: ForcingKind,
    /// Cosine terms of the quasi-periodic forcing; the model's standard forcing if absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terms: Option<Vec<CosineTerm>>,
}

impl Default for ForcingSpec {
    fn default() -> Self {
        Self { kind: ForcingKind::None, terms: None }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    /// Half width: the grid covers `[-t, t]`.
    pub t: f64,
    pub n: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    pub eps_c: f64,
    pub eps_f: f64,
    pub max_iter: usize,
    pub damping: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingSpec {
    pub bound: f64,
    pub count: usize,
    pub times: Vec<f64>,
    pub max_iter: usize,
}

impl Default for SamplingSpec {
    fn default() -> Self {
        Self { bound: 1.5, count: 5, times: vec![0.0], max_iter: 100 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifySpec {
    pub samples: usize,
    /// Sampling box `[lo, hi]` per state component.
    pub bounds: Vec<[f64; 2]>,
    pub t_max: f64,
    pub escape_y2: f64,
    pub step: f64,
}

impl Default for ClassifySpec {
    fn default() -> Self {
        Self {
            samples: 10_000,
            bounds: vec![[-1.0, 1.0], [-1.0, 1.0], [-5.0, 5.0], [-5.0, 5.0]],
            t_max: 11.5,
            escape_y2: 10.0,
            step: 0.005,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DividingSpec {
    pub t_start: f64,
    pub t_end: f64,
    /// Take every `stride`-th grid node.
    pub stride: usize,
    /// States whose time to capsize is reported.
    pub samples: usize,
    pub step: f64,
}

impl Default for DividingSpec {
    fn default() -> Self {
        Self { t_start: 0.0, t_end: 12.0, stride: 5, samples: 200, step: 0.005 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegritySpec {
    pub samples: usize,
}

impl Default for IntegritySpec {
    fn default() -> Self {
        Self { samples: 20_000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdvectSpec {
    pub range: f64,
    pub bvp_points: usize,
    pub seed_points: usize,
    /// Start time of the stable-manifold advection (run backward to 0).
    pub t_stable: f64,
    /// Start time of the unstable-manifold advection (run forward to 0).
    pub t_unstable: f64,
    pub dt: f64,
    pub max_points: usize,
}

impl Default for AdvectSpec {
    fn default() -> Self {
        Self { range: 1.0, bvp_points: 201, seed_points: 100, t_stable: 4.25, t_unstable: -6.0, dt: 0.005, max_points: 1000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FluxSpec {
    pub energy: f64,
    pub phases: usize,
    pub epsilon: f64,
    pub time_budget: f64,
    pub escape_y2: f64,
}

impl Default for FluxSpec {
    fn default() -> Self {
        Self { energy: 0.26, phases: 50, epsilon: 1e-6, time_budget: 40.0, escape_y2: 10.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub model: ModelKind,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    pub tasks: Vec<Task>,
    #[serde(default)]
    pub parameters: Parameters,
    #[serde(default)]
    pub forcing: ForcingSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerances: Option<Tolerances>,
    #[serde(default)]
    pub sampling: SamplingSpec,
    #[serde(default)]
    pub classify: ClassifySpec,
    #[serde(default)]
    pub dividing: DividingSpec,
    #[serde(default)]
    pub integrity: IntegritySpec,
    #[serde(default)]
    pub advect: AdvectSpec,
    #[serde(default)]
    pub flux: FluxSpec,
}

fn default_seed() -> u64 {
    1
}

/// Schema or semantic error, with the path of the offending field.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self { path: path.into(), message: message.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() || self.path == "." {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{}: {}", self.path, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

impl ExperimentConfig {
    /// Parses TOML and fills model-dependent defaults.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let de = toml::Deserializer::new(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            ConfigError::new(path, inner.message().trim().to_string())
        })?;
        Ok(cfg.normalized())
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new("", format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// Same config with every model-dependent default made explicit.
    pub fn normalized(mut self) -> Self {
        let p = &mut self.parameters;
        match self.model {
            ModelKind::Eckart1dof => {
                p.k.get_or_insert(1.0);
                self.grid.get_or_insert(GridSpec { t: 10.0, n: 401 });
                self.tolerances.get_or_insert(Tolerances { eps_c: 1e-7, eps_f: 1e-6, max_iter: 50, damping: false });
            }
            ModelKind::RollHeave2dof => {
                p.h.get_or_insert(1.0);
                p.kx.get_or_insert(1.0);
                p.ky.get_or_insert(1.0);
                self.grid.get_or_insert(GridSpec { t: 15.0, n: 601 });
                self.tolerances.get_or_insert(Tolerances { eps_c: 1e-5, eps_f: 1e-6, max_iter: 50, damping: false });
            }
        }
        if self.forcing.kind == ForcingKind::Quasi && self.forcing.terms.is_none() {
            self.forcing.terms = Some(match self.model {
                ModelKind::Eckart1dof => eckart_forcing(),
                ModelKind::RollHeave2dof => roll_heave_quasi_forcing(),
            });
        }
        self
    }

    /// SHA-256 of the normalised TOML without the output directory.
    pub fn hash(&self) -> String {
        let plain = Self { output: None, ..self.clone() };
        format!("{:x}", Sha256::digest(plain.to_toml().as_bytes()))
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output.clone().unwrap_or_else(|| PathBuf::from("out").join(&self.name))
    }

    pub fn model(&self) -> Model {
        let p = &self.parameters;
        match self.model {
            ModelKind::Eckart1dof => Model::Eckart { k: p.k.unwrap_or(1.0) },
            ModelKind::RollHeave2dof => {
                Model::RollHeave { h: p.h.unwrap_or(1.0), kx: p.kx.unwrap_or(1.0), ky: p.ky.unwrap_or(1.0) }
            }
        }
    }

    pub fn grid(&self) -> GridSpec {
        self.grid.expect("normalised config has a grid")
    }

    pub fn tolerances(&self) -> Tolerances {
        self.tolerances.expect("normalised config has tolerances")
    }

    /// Semantic checks. Prerequisites missing from the task list must exist under `out`.
    pub fn validate(&self, out: &Path) -> Result<(), ConfigError> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(ConfigError::new("name", "must be a non-empty file name"));
        }
        let p = &self.parameters;
        let (used, unused): (&[(&str, Option<f64>)], &[(&str, Option<f64>)]) = match self.model {
            ModelKind::Eckart1dof => (&[("k", p.k)], &[("h", p.h), ("kx", p.kx), ("ky", p.ky)]),
            ModelKind::RollHeave2dof => (&[("h", p.h), ("kx", p.kx), ("ky", p.ky)], &[("k", p.k)]),
        };
        if let Some((name, _)) = unused.iter().find(|(_, v)| v.is_some()) {
            return Err(ConfigError::new(format!("parameters.{name}"), "not a parameter of this model"));
        }
        for (name, v) in used {
            if !v.is_some_and(f64::is_finite) {
                return Err(ConfigError::new(format!("parameters.{name}"), "must be a finite number"));
            }
        }
        SaddleSystem::new(self.model(), Default::default(), 1)
            .map_err(|e| ConfigError::new("parameters", e.to_string()))?;

        match self.forcing.kind {
            ForcingKind::Ou => {
                if self.model != ModelKind::RollHeave2dof {
                    return Err(ConfigError::new("forcing.kind", "OU forcing needs the roll-heave model"));
                }
                if p.kx != p.ky {
                    return Err(ConfigError::new("forcing.kind", "OU forcing needs kx == ky"));
                }
            }
            _ if self.forcing.terms.is_some() && self.forcing.kind != ForcingKind::Quasi => {
                return Err(ConfigError::new("forcing.terms", "only used by quasi-periodic forcing"));
            }
            _ => {}
        }
        let dim = self.model().dim();
        for (i, term) in self.forcing.terms.iter().flatten().enumerate() {
            if term.component >= dim {
                return Err(ConfigError::new(format!("forcing.terms[{i}].component"), format!("must be below {dim}")));
            }
        }

        let mut seen: Vec<Task> = Vec::new();
        for (i, &task) in self.tasks.iter().enumerate() {
            let path = format!("tasks[{i}]");
            if seen.contains(&task) {
                return Err(ConfigError::new(path, format!("duplicate task {}", task.name())));
            }
            if let Some(m) = task.model() {
                if m != self.model {
                    return Err(ConfigError::new(path, format!("{} is not available for this model", task.name())));
                }
            }
            if let Some(pre) = task.prerequisite() {
                if !seen.contains(&pre) && !artifact_exists(pre, self.model, out) {
                    return Err(ConfigError::new(
                        path,
                        format!("{} needs {} earlier in the list or its output in {}", task.name(), pre.name(), out.display()),
                    ));
                }
            }
            seen.push(task);
        }

        let g = self.grid();
        if !(g.t > 0.0 && g.t.is_finite()) {
            return Err(ConfigError::new("grid.t", "must be positive"));
        }
        if g.n < 3 {
            return Err(ConfigError::new("grid.n", "must be at least 3"));
        }
        let tol = self.tolerances();
        for (name, v) in [("eps_c", tol.eps_c), ("eps_f", tol.eps_f)] {
            if !(v > 0.0) {
                return Err(ConfigError::new(format!("tolerances.{name}"), "must be positive"));
            }
        }
        if tol.max_iter == 0 {
            return Err(ConfigError::new("tolerances.max_iter", "must be positive"));
        }
        let s = &self.sampling;
        if !(s.bound >= 0.0) || s.count == 0 || s.times.is_empty() {
            return Err(ConfigError::new("sampling", "needs bound >= 0, count >= 1 and at least one time"));
        }
        if let Some(i) = s.times.iter().position(|t| t.abs() > g.t) {
            return Err(ConfigError::new(format!("sampling.times[{i}]"), "outside the grid"));
        }
        let has = |t: Task| self.tasks.contains(&t);
        if has(Task::Classify) || has(Task::Dividing) {
            let b = &self.classify.bounds;
            if b.len() != dim || b.iter().any(|b| !(b[0] < b[1])) {
                return Err(ConfigError::new("classify.bounds", format!("needs {dim} intervals with lo < hi")));
            }
            for (name, v) in [("classify.t_max", self.classify.t_max), ("classify.step", self.classify.step)] {
                if !(v > 0.0) {
                    return Err(ConfigError::new(name, "must be positive"));
                }
            }
        }
        if has(Task::Dividing) {
            let d = &self.dividing;
            if !(d.t_start < d.t_end) || d.t_start < -g.t || d.t_end > g.t {
                return Err(ConfigError::new("dividing", "needs t_start < t_end inside the grid"));
            }
            if !(d.step > 0.0) || d.stride == 0 {
                return Err(ConfigError::new("dividing", "needs a positive step and stride"));
            }
        }
        if has(Task::AdvectCheck) {
            let a = &self.advect;
            if !(a.dt > 0.0) || a.bvp_points < 2 || a.seed_points < 2 {
                return Err(ConfigError::new("advect", "needs dt > 0 and at least two points per curve"));
            }
            for (name, t) in [("advect.t_stable", a.t_stable), ("advect.t_unstable", a.t_unstable)] {
                if !(t.abs() <= g.t) {
                    return Err(ConfigError::new(name, "outside the grid"));
                }
            }
        }
        if has(Task::Integrity) && self.integrity.samples < 2 {
            return Err(ConfigError::new("integrity.samples", "must be at least 2"));
        }

        Ok(())
    }
}

/// Saddle sides studied for a model.
pub fn sides(model: ModelKind) -> &'static [i8] {
    match model {
        ModelKind::Eckart1dof => &[1],
        ModelKind::RollHeave2dof => &[1, -1],
    }
}

pub fn side_suffix(model: ModelKind, side: i8) -> &'static str {
    match (model, side) {
        (ModelKind::Eckart1dof, _) => "",
        (_, s) if s > 0 => "-plus",
        _ => "-minus",
    }
}

/// Files a later run can load in place of re-running `task`.
pub fn artifact_files(task: Task, model: ModelKind) -> Vec<String> {
    match task {
        Task::HypTraj => sides(model).iter().map(|&s| format!("hyp-traj{}.csv", side_suffix(model, s))).collect(),
        Task::ManifoldSample => vec!["manifold-samples.json".into()],
        Task::FitGraphs => vec!["graphs.json".into()],
        _ => Vec::new(),
    }
}

fn artifact_exists(task: Task, model: ModelKind, out: &Path) -> bool {
    let files = artifact_files(task, model);
    !files.is_empty() && files.iter().all(|f| out.join(f).is_file())
}
