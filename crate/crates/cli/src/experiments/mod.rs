//! Experiment registry and typed parameter schemas.
//!
//! Each experiment owns a parameter struct with defaults for every field.
//! Unknown fields, wrong types and out-of-range values are rejected before any
//! computation starts.

mod circuit;
mod precision;
mod rf;
mod solver;

use std::fmt;
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::CliError;
use crate::output::Artifacts;

pub use circuit::{DynamicsRc, DynamicsRlc};
pub use precision::{Calibration, EnergyReport, SpgScaling, TransientTradeoff};
pub use rf::{CodeComm, Cosamp, SpectrumScan};
pub use solver::{MaxentCheck, MpDemo};

/// Parameter schema of one experiment.
pub trait Params: Serialize + DeserializeOwned + Default {
    fn validate(&self) -> Result<(), CliError>;
    fn run(&self, seed: u64) -> Result<Artifacts, CliError>;
}

macro_rules! registry {
    ($($variant:ident => $name:literal, $about:literal;)*) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
        pub enum Experiment {
            $($variant,)*
        }

        impl Experiment {
            pub const ALL: &'static [Experiment] = &[$(Experiment::$variant,)*];

            pub fn name(self) -> &'static str {
                match self {
                    $(Experiment::$variant => $name,)*
                }
            }

            pub fn about(self) -> &'static str {
                match self {
                    $(Experiment::$variant => $about,)*
                }
            }

            /// Resolved default parameters.
            pub fn defaults(self) -> Value {
                match self {
                    $(Experiment::$variant => serde_json::to_value($variant::default()).unwrap_or(Value::Null),)*
                }
            }
        }

        impl FromStr for Experiment {
            type Err = CliError;

            fn from_str(s: &str) -> Result<Self, CliError> {
                match s {
                    $($name => Ok(Experiment::$variant),)*
                    _ => Err(CliError::Usage(format!(
                        "experiment: unknown name {s:?}; expected one of {}",
                        Experiment::ALL.iter().map(|e| e.name()).collect::<Vec<_>>().join(", ")
                    ))),
                }
            }
        }

        /// Validated parameters of one experiment, ready to run.
        #[derive(Debug, Clone, PartialEq)]
        pub enum Plan {
            $($variant($variant),)*
        }

        impl Plan {
            pub fn parse(experiment: Experiment, parameters: &Map<String, Value>) -> Result<Plan, CliError> {
                match experiment {
                    $(Experiment::$variant => Ok(Plan::$variant(parse_params(parameters)?)),)*
                }
            }

            pub fn experiment(&self) -> Experiment {
                match self {
                    $(Plan::$variant(_) => Experiment::$variant,)*
                }
            }

            pub fn run(&self, seed: u64) -> Result<Artifacts, CliError> {
                match self {
                    $(Plan::$variant(p) => p.run(seed),)*
                }
            }

            pub fn resolved_parameters(&self) -> Result<Value, CliError> {
                let value = match self {
                    $(Plan::$variant(p) => serde_json::to_value(p),)*
                };
                value.map_err(|e| CliError::Numerical(format!("parameters: {e}")))
            }
        }
    };
}

registry! {
    MpDemo => "mp-demo", "MP solutions and gamma sweeps for relu, softplus and power nonlinearities";
    MaxentCheck => "maxent-check", "maximum-entropy ensembles against the equivalent MP problems";
    SpgScaling => "spg-scaling", "static MP and MAC signal-processing gain against input length";
    DynamicsRc => "dynamics-rc", "first-order transient trajectories with exponential fits";
    DynamicsRlc => "dynamics-rlc", "second-order transients with parasitic inductance";
    TransientTradeoff => "transient-tradeoff", "ENOB and TOPS/W against readout time";
    Calibration => "calibration", "calibration error against polynomial order";
    SpectrumScan => "spectrum-scan", "correlator spectrum of a tone mixture";
    Cosamp => "cosamp", "compressive spectrum recovery from correlator measurements";
    CodeComm => "code-comm", "code synchronization and 64-APSK despreading";
    EnergyReport => "energy-report", "TOPS/W from operation counts and energy";
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn parse_params<P: Params>(parameters: &Map<String, Value>) -> Result<P, CliError> {
    let value = Value::Object(parameters.clone());
    let params: P = serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        if path == "." {
            CliError::Usage(format!("parameters: {}", e.inner()))
        } else {
            CliError::Usage(format!("parameters.{path}: {}", e.inner()))
        }
    })?;
    params.validate()?;
    Ok(params)
}

/// Correlator used by the RF experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Mac,
    #[default]
    Mp,
    /// MP with an inverse map fitted on probe signals.
    MpCalibrated,
}

fn invalid(field: &str, message: impl fmt::Display) -> CliError {
    CliError::Usage(format!("parameters.{field}: {message}"))
}

fn check_range(field: &str, v: f64, lo: f64, hi: f64) -> Result<(), CliError> {
    if v.is_finite() && v >= lo && v <= hi {
        Ok(())
    } else {
        Err(invalid(field, format!("{v} outside [{lo}, {hi}]")))
    }
}

fn check_positive(field: &str, v: f64) -> Result<(), CliError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(field, format!("must be positive and finite, got {v}")))
    }
}

fn check_count(field: &str, v: usize, lo: usize, hi: usize) -> Result<(), CliError> {
    if (lo..=hi).contains(&v) {
        Ok(())
    } else {
        Err(invalid(field, format!("{v} outside [{lo}, {hi}]")))
    }
}

fn check_nonempty<T>(field: &str, v: &[T]) -> Result<(), CliError> {
    if v.is_empty() {
        Err(invalid(field, "must not be empty"))
    } else {
        Ok(())
    }
}

fn check_nonlinearity(field: &str, nl: &mpcorr_core::Nonlinearity) -> Result<(), CliError> {
    nl.validate().map_err(|e| invalid(field, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn names_round_trip() {
        for &e in Experiment::ALL {
            assert_eq!(e.name().parse::<Experiment>().unwrap(), e);
        }
        assert_eq!(Experiment::ALL.len(), 11);
    }

    #[test]
    fn defaults_validate() {
        for &e in Experiment::ALL {
            Plan::parse(e, &Map::new()).unwrap();
            assert!(e.defaults().is_object());
        }
    }

    #[test]
    fn type_errors_name_the_field() {
        let params = json!({"lengths": [64, "x"]});
        let err = Plan::parse(Experiment::SpgScaling, params.as_object().unwrap()).unwrap_err();
        assert!(err.to_string().contains("lengths[1]"), "{err}");
        let params = json!({"bogus": 1});
        let err = Plan::parse(Experiment::Cosamp, params.as_object().unwrap()).unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
    }
}
