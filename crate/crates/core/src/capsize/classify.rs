use serde::{Deserialize, Serialize};

use crate::atlas::ManifoldGraph;
use crate::dynamics::{rk4_step, Rk4Work, SaddleSystem};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Label {
    Safe,
    CapsizePlus,
    CapsizeMinus,
}

impl Label {
    pub fn is_capsize(self) -> bool {
        self != Label::Safe
    }

    pub fn from_side(side: f64) -> Self {
        if side >= 0.0 {
            Label::CapsizePlus
        } else {
            Label::CapsizeMinus
        }
    }

    /// Label after the reflection `y -> -y`.
    pub fn mirrored(self) -> Self {
        match self {
            Label::Safe => Label::Safe,
            Label::CapsizePlus => Label::CapsizeMinus,
            Label::CapsizeMinus => Label::CapsizePlus,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Safe => "safe",
            Label::CapsizePlus => "capsize+",
            Label::CapsizeMinus => "capsize-",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    ManifoldGraph,
    DirectIntegration,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub state: Vec<f64>,
    pub t0: f64,
    pub label: Label,
    pub method: Method,
    pub crossing_time: Option<f64>,
    /// `v_y - v~_y` against the deciding (or nearer) graph.
    pub margin: Option<f64>,
    /// The query left the sample box of a graph.
    pub extrapolated: bool,
    /// Integration blew up before reaching the threshold.
    pub blow_up: bool,
    /// Both graph conditions held; the label follows the larger margin.
    pub inconsistent: bool,
}

/// The two stable-manifold graphs `v_y = v~_{y,±}(t, x, y, v_x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StableGraphs {
    pub plus: ManifoldGraph,
    pub minus: ManifoldGraph,
}

const TIE: f64 = 1e-12;

fn graph_report(state: &[f64], t: f64, graphs: &StableGraphs) -> (ClassificationReport, bool) {
    let axis = graphs.plus.axis;
    let v = state[axis];
    let gp = graphs.plus.eval(t, state);
    let gm = graphs.minus.eval(t, state);
    let mp = v - gp.value;
    let mm = v - gm.value;
    let cap_plus = mp > TIE;
    let cap_minus = mm < -TIE;
    let inconsistent = cap_plus && cap_minus;
    let (label, margin) = match (cap_plus, cap_minus) {
        (true, false) => (Label::CapsizePlus, mp),
        (false, true) => (Label::CapsizeMinus, mm),
        (true, true) if mp >= -mm => (Label::CapsizePlus, mp),
        (true, true) => (Label::CapsizeMinus, mm),
        (false, false) => (Label::Safe, if mp.abs() <= mm.abs() { mp } else { mm }),
    };
    let report = ClassificationReport {
        state: state.to_vec(),
        t0: t,
        label,
        method: Method::ManifoldGraph,
        crossing_time: None,
        margin: Some(margin),
        extrapolated: gp.extrapolated || gm.extrapolated,
        blow_up: false,
        inconsistent,
    };
    (report, inconsistent)
}

/// Capsize+ if `v_y > v~_{y,+}`, capsize- if `v_y < v~_{y,-}`, safe otherwise. Margins within
/// 1e-12 count as safe. Both conditions at once is an error.
pub fn classify_state(state: &[f64], t: f64, graphs: &StableGraphs) -> Result<ClassificationReport> {
    let (report, inconsistent) = graph_report(state, t, graphs);
    if inconsistent {
        let axis = graphs.plus.axis;
        return Err(Error::InconsistentGraphs {
            plus: state[axis] - graphs.plus.eval(t, state).value,
            minus: state[axis] - graphs.minus.eval(t, state).value,
        });
    }
    Ok(report)
}

/// Like [`classify_state`] but resolves overlapping graphs by the larger margin and flags it.
pub fn classify_state_lenient(state: &[f64], t: f64, graphs: &StableGraphs) -> ClassificationReport {
    graph_report(state, t, graphs).0
}

/// Escape test by direct integration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EscapeOptions {
    /// Escape when `x[component]^2 >= threshold`.
    pub threshold: f64,
    pub t_max: f64,
    pub step: f64,
    pub component: usize,
}

impl Default for EscapeOptions {
    fn default() -> Self {
        Self { threshold: 10.0, t_max: 11.5, step: 0.005, component: 1 }
    }
}

/// Integrates from `(state, t0)` and reports the first time `x[c]^2 >= threshold` before `t_max`.
pub fn classify_by_integration(sys: &SaddleSystem, state: &[f64], t0: f64, opts: &EscapeOptions) -> Result<ClassificationReport> {
    if !(opts.threshold > 0.0 && opts.step > 0.0) {
        return Err(Error::Parameter("escape threshold and step must be positive".into()));
    }
    let c = opts.component;
    let mut x = state.to_vec();
    let mut w = Rk4Work::new(x.len());
    let mut t = t0;
    let mut report = ClassificationReport {
        state: state.to_vec(),
        t0,
        label: Label::Safe,
        method: Method::DirectIntegration,
        crossing_time: None,
        margin: None,
        extrapolated: false,
        blow_up: false,
        inconsistent: false,
    };
    if x[c] * x[c] >= opts.threshold {
        report.label = Label::from_side(x[c]);
        report.crossing_time = Some(t0);
        return Ok(report);
    }
    while t < opts.t_max - 1e-12 {
        let h = opts.step.min(opts.t_max - t);
        let prev = x.clone();
        rk4_step(sys, &mut x, t, h, &mut w);
        if !x.iter().all(|v| v.is_finite()) {
            report.label = Label::from_side(prev[c]);
            report.blow_up = true;
            report.crossing_time = Some(t);
            return Ok(report);
        }
        if x[c] * x[c] >= opts.threshold {
            // Bisection on a single shortened step from the step start.
            let (mut lo, mut hi) = (0.0, h);
            let mut y = x.clone();
            while hi - lo > 1e-7 {
                let mid = 0.5 * (lo + hi);
                y.copy_from_slice(&prev);
                rk4_step(sys, &mut y, t, mid, &mut w);
                if y[c] * y[c] >= opts.threshold {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            report.label = Label::from_side(x[c]);
            report.crossing_time = Some(t + hi);
            return Ok(report);
        }
        t += h;
    }
    Ok(report)
}
