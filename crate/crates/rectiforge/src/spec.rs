//! Optimization specs in TOML.
//!
//! ```toml
//! max_evals = 300
//! seed = 7
//!
//! [[tunable]]
//! param = "L1.l"
//! lower = "1n"        # numbers or netlist-style values
//! upper = 100e-9
//!
//! [[target]]
//! freq = "95meg"
//! pin = -2.5
//! metric = "s11_db"   # or "pce"
//! goal = -15
//! weight = 1
//! output = "RLF"      # load of the .output to use for pce
//! ```

use rectiforge_core::optimize::{Metric, OptSpec, Target, Tunable};
use rectiforge_core::units::parse_value;
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum Value {
    Number(f64),
    Text(String),
}

impl Value {
    fn get(&self, what: &str) -> Result<f64, CliError> {
        match self {
            Value::Number(x) => Ok(*x),
            Value::Text(s) => parse_value(s.trim()).ok_or_else(|| CliError::Usage(format!("{what}: bad value `{s}`"))),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TunableFile {
    param: String,
    lower: Value,
    upper: Value,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TargetFile {
    freq: Value,
    #[serde(default)]
    pin: Option<f64>,
    metric: String,
    goal: f64,
    #[serde(default = "one")]
    weight: f64,
    #[serde(default)]
    output: Option<String>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecFile {
    max_evals: Option<usize>,
    tolerance: Option<f64>,
    seed: Option<u64>,
    harmonics: Option<usize>,
    #[serde(default, rename = "tunable")]
    tunables: Vec<TunableFile>,
    #[serde(default, rename = "target")]
    targets: Vec<TargetFile>,
}

/// Parses and checks a spec (not yet against a circuit). `harmonics`
/// applies when the file does not set one.
pub fn parse_spec(text: &str, harmonics: usize) -> Result<OptSpec, CliError> {
    let file: SpecFile = toml::from_str(text).map_err(|e| CliError::Usage(format!("optimization spec: {e}")))?;
    let defaults = OptSpec::default();
    let tunables = file
        .tunables
        .iter()
        .map(|t| {
            Ok(Tunable {
                reference: t.param.clone(),
                lower: t.lower.get(&t.param)?,
                upper: t.upper.get(&t.param)?,
            })
        })
        .collect::<Result<_, CliError>>()?;
    let targets = file
        .targets
        .iter()
        .map(|t| {
            let metric: Metric = t.metric.parse()?;
            Ok(Target {
                freq: t.freq.get("target freq")?,
                pin: t.pin.unwrap_or(-10.0),
                metric,
                goal: t.goal,
                weight: t.weight,
                output: t.output.clone(),
            })
        })
        .collect::<Result<_, CliError>>()?;
    let spec = OptSpec {
        tunables,
        targets,
        max_evals: file.max_evals.unwrap_or(defaults.max_evals),
        tolerance: file.tolerance.unwrap_or(defaults.tolerance),
        seed: file.seed.unwrap_or(defaults.seed),
        harmonics: file.harmonics.unwrap_or(harmonics),
    };
    spec.check()?;
    Ok(spec)
}
