//! Reachable tubes of sampled-data loops closed through an MLP controller,
//! and one-sided safety checks over them.
//!
//! At each sampling instant the plant outputs are enclosed, the controller
//! input box is assembled from the wiring, the controller output set is
//! over-approximated and collapsed to its hull, and the plant is integrated
//! over the sampling interval with that input box held constant.

mod config;

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interval::{Interval, IntervalBox};
use crate::nn::MlpNetwork;
use crate::ode::{eval_outputs, reach_odex_span, reach_odey, rk4_step, substep_times, FlowpipeSegment, PlantModel};
use crate::reach_nn::{reach_mlp, ReachOptions};

pub use config::{ClosedLoopConfig, Comparison, LinearConstraint, LoadedRun, RunConfig, SafetySpec, WireSource};
use config::PlantInput;

/// One sampling step of the recursion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t_k: f64,
    pub t_next: f64,
    /// State enclosure at `t_k`.
    pub state: IntervalBox,
    /// Plant output enclosures at `t_k`.
    pub outputs: IndexMap<String, Interval>,
    pub controller_input: IntervalBox,
    /// Hull of the controller output set.
    pub control_hull: IntervalBox,
    pub controller_box_count: usize,
    /// Input box applied to the plant over `[t_k, t_next]`, in plant order.
    pub plant_inputs: Vec<Interval>,
    /// Indices `[start, end)` of this step's flowpipe segments.
    pub segments: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Flowpipe {
    pub segments: Vec<FlowpipeSegment>,
    pub steps: Vec<StepRecord>,
    pub final_state: IntervalBox,
}

impl Flowpipe {
    /// True when some segment spanning `t` contains `x`.
    pub fn contains(&self, t: f64, x: &[f64]) -> bool {
        self.segments
            .iter()
            .any(|s| s.t_lo <= t && t <= s.t_hi && s.states.contains_point(x).unwrap_or(false))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Safe,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub segment: usize,
    pub constraint: usize,
    pub t_lo: f64,
    pub t_hi: f64,
    /// Enclosure of the constraint's left-hand side on the segment.
    pub value: Interval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub verdict: Verdict,
    pub first_violation: Option<Violation>,
    pub flowpipe: Flowpipe,
}

fn controller_input(
    cfg: &ClosedLoopConfig,
    outputs: &IndexMap<String, Interval>,
) -> Result<IntervalBox> {
    let dims = cfg
        .input_wiring
        .iter()
        .map(|w| match w {
            WireSource::Output(name) => outputs
                .get(name)
                .copied()
                .ok_or_else(|| Error::Wiring(format!("plant has no output `{name}`"))),
            WireSource::Reference(i) => cfg
                .reference_input
                .as_ref()
                .and_then(|v| v.dims().get(*i).copied())
                .ok_or_else(|| Error::Wiring(format!("reference component {i} out of range"))),
            WireSource::Constant(name) => cfg
                .constant_inputs
                .get(name)
                .map(|&v| Interval::point(v))
                .ok_or_else(|| Error::Wiring(format!("no constant input named `{name}`"))),
        })
        .collect::<Result<Vec<_>>>()?;
    IntervalBox::new(dims)
}

/// Reachable tube of the closed loop over `[0, t_f]`.
pub fn reach_nncs(plant: &PlantModel, net: &MlpNetwork, x0: &IntervalBox, cfg: &ClosedLoopConfig) -> Result<Flowpipe> {
    if x0.dim() != plant.n_states() {
        return Err(Error::dims(plant.n_states(), x0.dim()));
    }
    cfg.validate(plant, net)?;
    let wiring = cfg.plant_inputs(plant)?;
    let opts = ReachOptions {
        tolerance: cfg.epsilon,
        n_sims: cfg.n_sims,
        seed: cfg.seed,
        threads: cfg.threads,
    };

    let times = cfg.sampling_times();
    let mut x = x0.clone();
    let mut segments = Vec::new();
    let mut steps = Vec::with_capacity(times.len() - 1);
    for w in times.windows(2) {
        let (t_k, t_next) = (w[0], w[1]);
        let outputs = reach_odey(plant, &x, None)?;
        let h = controller_input(cfg, &outputs)?;
        let reach = reach_mlp(net, &h, &opts)?;
        let u: Vec<Interval> = wiring
            .iter()
            .map(|p| match *p {
                PlantInput::Control(j) => reach.hull[j],
                PlantInput::Constant(v) => Interval::point(v),
            })
            .collect();
        let step = reach_odex_span(plant, &u, &x, t_k, t_next, cfg.substeps)?;
        let start = segments.len();
        segments.extend(step.segments);
        steps.push(StepRecord {
            t_k,
            t_next,
            state: x,
            outputs,
            controller_input: h,
            control_hull: reach.hull,
            controller_box_count: reach.boxes.len(),
            plant_inputs: u,
            segments: (start, segments.len()),
        });
        x = step.x_next;
    }
    Ok(Flowpipe {
        segments,
        steps,
        final_state: x,
    })
}

/// Enclosure of each constraint's left-hand side over one state box.
fn constraint_values(
    plant: &PlantModel,
    spec: &SafetySpec,
    states: &IntervalBox,
    inputs: Option<&[Interval]>,
) -> Result<Vec<Interval>> {
    let outputs = if spec
        .constraints
        .iter()
        .any(|c| c.terms.keys().any(|n| plant.state_index(n).is_none()))
    {
        reach_odey(plant, states, inputs)?
    } else {
        IndexMap::new()
    };
    spec.constraints
        .iter()
        .map(|c| {
            let mut acc = Interval::point(c.constant);
            for (name, &coef) in &c.terms {
                let v = match plant.state_index(name) {
                    Some(i) => states[i],
                    None => *outputs
                        .get(name)
                        .ok_or_else(|| Error::UnresolvedName(name.clone()))?,
                };
                acc = acc + v * coef;
            }
            Ok(acc)
        })
        .collect()
}

fn holds(op: Comparison, v: &Interval) -> bool {
    match op {
        Comparison::Greater => v.lo() > 0.0,
        Comparison::GreaterEq => v.lo() >= 0.0,
    }
}

/// Checks every constraint on every segment. `Safe` means the lower bound
/// of every left-hand side clears zero everywhere; anything else is
/// `Unknown`, reported at the first offending segment and constraint.
pub fn verify(flowpipe: Flowpipe, spec: &SafetySpec, plant: &PlantModel) -> Result<VerificationReport> {
    spec.check_names(plant)?;
    let mut first_violation = None;
    'outer: for step in &flowpipe.steps {
        for s in step.segments.0..step.segments.1 {
            let seg = &flowpipe.segments[s];
            let values = constraint_values(plant, spec, &seg.states, Some(&step.plant_inputs))?;
            for (ci, (c, v)) in spec.constraints.iter().zip(&values).enumerate() {
                if !holds(c.op, v) {
                    first_violation = Some(Violation {
                        segment: s,
                        constraint: ci,
                        t_lo: seg.t_lo,
                        t_hi: seg.t_hi,
                        value: *v,
                    });
                    break 'outer;
                }
            }
        }
    }
    Ok(VerificationReport {
        verdict: if first_violation.is_none() { Verdict::Safe } else { Verdict::Unknown },
        first_violation,
        flowpipe,
    })
}

/// Point value of each constraint's left-hand side.
pub fn constraint_margins(plant: &PlantModel, spec: &SafetySpec, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
    let outputs = eval_outputs(plant, x, u);
    spec.constraints
        .iter()
        .map(|c| {
            let mut acc = c.constant;
            for (name, &coef) in &c.terms {
                let v = match plant.state_index(name) {
                    Some(i) => x[i],
                    None => *outputs
                        .get(name)
                        .ok_or_else(|| Error::UnresolvedName(name.clone()))?,
                };
                acc += coef * v;
            }
            Ok(acc)
        })
        .collect()
}

/// Whether a point value satisfies a constraint.
pub fn satisfied(op: Comparison, margin: f64) -> bool {
    match op {
        Comparison::Greater => margin > 0.0,
        Comparison::GreaterEq => margin >= 0.0,
    }
}

/// A numeric closed-loop run sampled on the flowpipe's time grid, refined
/// `refine` times within each substep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// Plant input vector applied from each sampling instant on.
    pub inputs: Vec<Vec<f64>>,
}

/// Simulates the loop from `x0` with reference value `v` using exact
/// controller evaluation at the sampling instants and Runge-Kutta in between.
pub fn simulate_closed_loop(
    plant: &PlantModel,
    net: &MlpNetwork,
    x0: &[f64],
    v: Option<&[f64]>,
    cfg: &ClosedLoopConfig,
    refine: usize,
) -> Result<Trajectory> {
    if x0.len() != plant.n_states() {
        return Err(Error::dims(plant.n_states(), x0.len()));
    }
    cfg.validate(plant, net)?;
    let wiring = cfg.plant_inputs(plant)?;
    let refine = refine.max(1);
    let times = cfg.sampling_times();

    let mut x = x0.to_vec();
    let mut out_t = vec![times[0]];
    let mut out_x = vec![x.clone()];
    let mut out_u = Vec::new();
    for w in times.windows(2) {
        let outputs = eval_outputs(plant, &x, &[]);
        let eta = cfg
            .input_wiring
            .iter()
            .map(|wire| match wire {
                WireSource::Output(name) => outputs
                    .get(name)
                    .copied()
                    .ok_or_else(|| Error::Wiring(format!("plant has no output `{name}`"))),
                WireSource::Reference(i) => v
                    .and_then(|v| v.get(*i).copied())
                    .ok_or_else(|| Error::Wiring(format!("reference component {i} missing"))),
                WireSource::Constant(name) => cfg
                    .constant_inputs
                    .get(name)
                    .copied()
                    .ok_or_else(|| Error::Wiring(format!("no constant input named `{name}`"))),
            })
            .collect::<Result<Vec<f64>>>()?;
        let act = net.eval(&eta)?;
        let u: Vec<f64> = wiring
            .iter()
            .map(|p| match *p {
                PlantInput::Control(j) => act[j],
                PlantInput::Constant(c) => c,
            })
            .collect();
        let grid = substep_times(w[0], w[1], cfg.substeps);
        for g in grid.windows(2) {
            let fine = substep_times(g[0], g[1], refine);
            for f in fine.windows(2) {
                x = rk4_step(plant, &x, &u, f[1] - f[0]);
                out_t.push(f[1]);
                out_x.push(x.clone());
            }
        }
        out_u.push(u);
    }
    Ok(Trajectory {
        times: out_t,
        states: out_x,
        inputs: out_u,
    })
}

fn draw(b: &IntervalBox, rng: &mut ChaCha8Rng) -> Vec<f64> {
    b.dims()
        .iter()
        .map(|d| if d.width() > 0.0 { rng.gen_range(d.lo()..=d.hi()) } else { d.lo() })
        .collect()
}

/// `count` simulations from uniformly drawn initial states (and reference
/// values), reproducible from `seed`.
pub fn random_simulations(
    plant: &PlantModel,
    net: &MlpNetwork,
    x0: &IntervalBox,
    cfg: &ClosedLoopConfig,
    count: usize,
    seed: u64,
    refine: usize,
) -> Result<Vec<Trajectory>> {
    if count == 0 {
        return Err(Error::InvalidArgument("simulation count must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let x = draw(x0, &mut rng);
            let v = cfg.reference_input.as_ref().map(|b| draw(b, &mut rng));
            simulate_closed_loop(plant, net, &x, v.as_deref(), cfg, refine)
        })
        .collect()
}
