//! Parameter sweeps over one scenario field and a set of schemes.

use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use uav_secrecy::optimizer::SchemeId;
use uav_secrecy::scenario::{dbm_to_watts, ScenarioConfig};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum SweepParameter {
    /// Flight period in seconds; the slot length is kept.
    Period,
    /// Radius of the eavesdropper disc in meters.
    EveRadius,
    /// Interference threshold in dBm, applied to every PU.
    InterferenceThreshold,
}

impl SweepParameter {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepParameter::Period => "period",
            SweepParameter::EveRadius => "eve_radius",
            SweepParameter::InterferenceThreshold => "interference_threshold",
        }
    }

    /// Built-in grids, used when no values are given.
    pub fn default_values(self) -> Vec<f64> {
        match self {
            SweepParameter::Period => vec![80.0, 100.0, 120.0, 140.0],
            SweepParameter::EveRadius => vec![0.0, 10.0, 20.0, 30.0],
            SweepParameter::InterferenceThreshold => vec![-95.0, -90.0, -85.0, -80.0, -75.0, -70.0],
        }
    }

    /// The scenario at one sweep value. A new period also moves both
    /// endpoints onto the resized initial circles.
    pub fn apply(self, sc: &ScenarioConfig, value: f64) -> Result<ScenarioConfig, CliError> {
        let out = match self {
            SweepParameter::Period => sc.with_period(value).map(|mut s| {
                s.place_endpoints_on_init_circles();
                s
            }),
            SweepParameter::EveRadius => sc.with_eve_radius(value),
            SweepParameter::InterferenceThreshold => sc.with_interference_threshold(dbm_to_watts(value)),
        };
        let out = out.map_err(|e| CliError::Input(format!("{} = {value}: {e}", self.as_str())))?;
        out.validate().map_err(|e| CliError::Input(format!("{} = {value}: {e}", self.as_str())))?;
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
    pub schemes: Vec<SchemeId>,
}

impl SweepSpec {
    /// Checks that both lists are non-empty and every value gives a valid scenario.
    pub fn new(
        parameter: SweepParameter,
        values: Vec<f64>,
        schemes: Vec<SchemeId>,
        base: &ScenarioConfig,
    ) -> Result<Self, CliError> {
        if values.is_empty() || schemes.is_empty() {
            return Err(CliError::Input("a sweep needs at least one value and one scheme".into()));
        }
        for &v in &values {
            if !v.is_finite() {
                return Err(CliError::Input(format!("sweep value {v} is not finite")));
            }
            parameter.apply(base, v)?;
        }
        Ok(Self { parameter, values, schemes })
    }
}

/// One line of `sweep.csv`. Failed points keep their error and report no objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub parameter_value: f64,
    pub scheme: SchemeId,
    pub objective: Option<f64>,
    pub iterations: usize,
    pub feasible: bool,
    pub error: Option<String>,
}

/// Metadata written next to `sweep.csv`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepMeta {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
    pub schemes: Vec<SchemeId>,
    /// `"builtin_default"` when the grid was not given on the command line.
    pub values_source: String,
    pub failures: Vec<String>,
}
