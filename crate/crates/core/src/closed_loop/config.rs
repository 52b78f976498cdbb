use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interval::IntervalBox;
use crate::nn::MlpNetwork;
use crate::ode::{PlantModel, DEFAULT_SUBSTEPS};

/// Where a controller input comes from at each sampling instant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WireSource {
    /// A named plant output.
    Output(String),
    /// A component of the reference input box.
    Reference(usize),
    /// A named entry of `constant_inputs`.
    Constant(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosedLoopConfig {
    pub sampling_period: f64,
    pub t_f: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_n_sims")]
    pub n_sims: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_substeps")]
    pub substeps: usize,
    #[serde(default = "default_threads")]
    pub threads: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_input: Option<IntervalBox>,
    /// Named constants; used by `Constant` wires and for plant inputs that
    /// the controller does not drive.
    #[serde(default)]
    pub constant_inputs: IndexMap<String, f64>,
    /// One entry per network input, in network order.
    pub input_wiring: Vec<WireSource>,
    /// Plant inputs receiving the network outputs, in network order.
    pub control_outputs: Vec<String>,
}

fn default_epsilon() -> f64 {
    0.1
}

fn default_n_sims() -> usize {
    1000
}

fn default_substeps() -> usize {
    DEFAULT_SUBSTEPS
}

fn default_threads() -> usize {
    1
}

/// Where each plant input comes from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum PlantInput {
    Control(usize),
    Constant(f64),
}

impl ClosedLoopConfig {
    /// Number of sampling steps covering `[0, t_f]`.
    pub fn step_count(&self) -> usize {
        ((self.t_f / self.sampling_period) - 1e-9).ceil().max(1.0) as usize
    }

    /// Sampling instants `t_0 .. t_K` with `t_K = t_f`.
    pub fn sampling_times(&self) -> Vec<f64> {
        let k = self.step_count();
        let mut t: Vec<f64> = (0..k).map(|i| i as f64 * self.sampling_period).collect();
        while t.len() > 1 && *t.last().unwrap() >= self.t_f {
            t.pop();
        }
        t.push(self.t_f);
        t
    }

    pub fn validate(&self, plant: &PlantModel, net: &MlpNetwork) -> Result<()> {
        let period = self.sampling_period;
        if !(period > 0.0 && period.is_finite()) {
            return Err(Error::Validation(format!("sampling_period must be positive, got {period}")));
        }
        if !(self.t_f >= period && self.t_f.is_finite()) {
            return Err(Error::Validation(format!(
                "t_f ({}) must be at least the sampling period ({period})",
                self.t_f
            )));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidTolerance(self.epsilon));
        }
        if self.n_sims == 0 {
            return Err(Error::Validation("n_sims must be at least 1".into()));
        }
        if self.substeps == 0 {
            return Err(Error::Validation("substeps must be at least 1".into()));
        }
        if self.input_wiring.len() != net.input_dim() {
            return Err(Error::Wiring(format!(
                "network has {} inputs but input_wiring has {} entries",
                net.input_dim(),
                self.input_wiring.len()
            )));
        }
        for w in &self.input_wiring {
            match w {
                WireSource::Output(name) => {
                    let k = plant
                        .output_index(name)
                        .ok_or_else(|| Error::Wiring(format!("plant has no output `{name}`")))?;
                    if plant.output_uses_inputs(k) {
                        return Err(Error::Wiring(format!("output `{name}` depends on plant inputs")));
                    }
                }
                WireSource::Reference(i) => {
                    let dim = self.reference_input.as_ref().map_or(0, IntervalBox::dim);
                    if *i >= dim {
                        return Err(Error::Wiring(format!(
                            "reference component {i} out of range (reference input has {dim})"
                        )));
                    }
                }
                WireSource::Constant(name) => {
                    if !self.constant_inputs.contains_key(name) {
                        return Err(Error::Wiring(format!("no constant input named `{name}`")));
                    }
                }
            }
        }
        if self.control_outputs.len() != net.output_dim() {
            return Err(Error::Wiring(format!(
                "network has {} outputs but control_outputs has {} entries",
                net.output_dim(),
                self.control_outputs.len()
            )));
        }
        for (i, name) in self.control_outputs.iter().enumerate() {
            if plant.input_index(name).is_none() {
                return Err(Error::Wiring(format!("plant has no input `{name}`")));
            }
            if self.control_outputs[..i].contains(name) {
                return Err(Error::Wiring(format!("plant input `{name}` is driven twice")));
            }
        }
        self.plant_inputs(plant).map(|_| ())
    }

    pub(crate) fn plant_inputs(&self, plant: &PlantModel) -> Result<Vec<PlantInput>> {
        plant
            .input_vars()
            .iter()
            .map(|name| {
                if let Some(j) = self.control_outputs.iter().position(|c| c == name) {
                    Ok(PlantInput::Control(j))
                } else if let Some(&v) = self.constant_inputs.get(name) {
                    Ok(PlantInput::Constant(v))
                } else {
                    Err(Error::Wiring(format!(
                        "plant input `{name}` is neither a control output nor a constant input"
                    )))
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparison {
    #[serde(rename = ">")]
    Greater,
    #[serde(rename = ">=")]
    GreaterEq,
}

/// `Σ terms[name]·name + constant ▷ 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearConstraint {
    pub terms: IndexMap<String, f64>,
    #[serde(default)]
    pub constant: f64,
    pub op: Comparison,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SafetySpec {
    pub constraints: Vec<LinearConstraint>,
}

impl SafetySpec {
    /// Every term must name a plant state or output.
    pub fn check_names(&self, plant: &PlantModel) -> Result<()> {
        for c in &self.constraints {
            for name in c.terms.keys() {
                if plant.state_index(name).is_none() && plant.output_index(name).is_none() {
                    return Err(Error::UnresolvedName(name.clone()));
                }
            }
        }
        Ok(())
    }
}

/// On-disk run description; paths are relative to the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub model: PathBuf,
    pub network: PathBuf,
    pub x0: IntervalBox,
    #[serde(flatten)]
    pub closed_loop: ClosedLoopConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<SafetySpec>,
}

/// A run configuration with its model and network loaded.
#[derive(Debug, Clone)]
pub struct LoadedRun {
    /// The configuration with resolved paths.
    pub config: RunConfig,
    pub plant: PlantModel,
    pub net: MlpNetwork,
}

impl RunConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Reads a run file and resolves its paths against the file's directory.
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::from_json_str(&text)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        config.model = base.join(&config.model);
        config.network = base.join(&config.network);
        Ok(config)
    }

    /// Loads the referenced model and network and validates the whole run.
    pub fn into_loaded(self) -> Result<LoadedRun> {
        let plant = PlantModel::load(&self.model)?;
        let net = MlpNetwork::load(&self.network)?;
        if self.x0.dim() != plant.n_states() {
            return Err(Error::dims(plant.n_states(), self.x0.dim()));
        }
        self.closed_loop.validate(&plant, &net)?;
        if let Some(spec) = &self.spec {
            spec.check_names(&plant)?;
        }
        Ok(LoadedRun {
            config: self,
            plant,
            net,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<LoadedRun> {
        Self::read(path)?.into_loaded()
    }
}
