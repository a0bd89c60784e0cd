//! JSON scenario files and the bundled catalog.
//!
//! ```json
//! {
//!   "model_kind": "hierarchic",
//!   "m": 5.0,
//!   "n": 4000,
//!   "beta": {"expr": "2/(1+x)"},
//!   "mu": {"family": "affine", "params": {"base": 1.0, "slope": 1.0}},
//!   "mu0": 1.0,
//!   "saturation_K": 1.5,
//!   "solver": {"tol": 1e-9, "max_iter": 10000, "omega": 1.0, "alpha_bracket": [1e-8, 1e8]},
//!   "initial": {"expr": "exp(-a)"},
//!   "seed": 7
//! }
//! ```

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::model::{
    AgeGrid, ModelKind, Monotonicity, RateFamily, RateFunction, Scenario, SolverControls,
    VitalRates,
};
use crate::ratedsl;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expr: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_bracket: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    pub expr: String,
}

/// The on-disk schema, before semantic validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub model_kind: ModelKind,
    pub m: f64,
    pub n: usize,
    pub beta: RateSpec,
    pub mu: RateSpec,
    pub mu0: f64,
    #[serde(
        rename = "saturation_K",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    pub saturation_k: Option<f64>,
    /// Overrides the monotonicity read off the probe lattice.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_monotonicity: Option<Monotonicity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

fn rate_from_spec(spec: &RateSpec, key: &str) -> Result<RateFunction> {
    match (&spec.expr, &spec.family) {
        (Some(expr), None) => {
            if spec.params.is_some() {
                return Err(Error::InvalidScenario(format!(
                    "{key}: `params` requires `family`"
                )));
            }
            RateFunction::parse(expr)
        }
        (None, Some(family)) => {
            let mut tagged = serde_json::Map::new();
            tagged.insert("family".into(), Value::String(family.clone()));
            tagged.insert("params".into(), spec.params.clone().unwrap_or(Value::Null));
            let family: RateFamily = serde_json::from_value(Value::Object(tagged))
                .map_err(|e| Error::InvalidScenario(format!("{key}: {e}")))?;
            Ok(RateFunction::Family(family))
        }
        _ => Err(Error::InvalidScenario(format!(
            "{key}: exactly one of `expr` or `family` is required"
        ))),
    }
}

fn finite(value: f64, key: &str) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::InvalidScenario(format!("{key} must be finite")))
    }
}

impl ScenarioFile {
    pub fn into_scenario(&self) -> Result<Scenario> {
        let grid = AgeGrid::new(finite(self.m, "m")?, self.n)?;
        let mut rates = VitalRates {
            beta: rate_from_spec(&self.beta, "beta")?,
            mu: rate_from_spec(&self.mu, "mu")?,
            mu_lower_bound: finite(self.mu0, "mu0")?,
            beta_monotonicity: Monotonicity::None,
            kind: self.model_kind,
        };
        rates.check_finite(grid.max_age())?;
        rates.beta_monotonicity = match self.beta_monotonicity {
            Some(declared) => declared,
            None => rates.infer_beta_monotonicity(grid.max_age())?,
        };
        let mut solver = SolverControls::default();
        if let Some(spec) = &self.solver {
            if let Some(tol) = spec.tol {
                solver.tol = tol;
            }
            if let Some(max_iter) = spec.max_iter {
                solver.max_iter = max_iter;
            }
            if let Some(omega) = spec.omega {
                solver.omega = omega;
            }
            if let Some([lo, hi]) = spec.alpha_bracket {
                solver.alpha_bracket = (lo, hi);
            }
        }
        if let Some(k) = self.saturation_k {
            if !(k >= 0.0 && k.is_finite()) {
                return Err(Error::InvalidScenario(format!(
                    "saturation_K must be a non-negative number, got {k}"
                )));
            }
        }
        let initial = match &self.initial {
            Some(spec) => Some(ratedsl::parse(&spec.expr)?),
            None => None,
        };
        let scenario = Scenario {
            name: self.name.clone(),
            grid,
            rates,
            saturation_k: self.saturation_k,
            solver,
            initial,
            seed: self.seed,
        };
        scenario.validate()?;
        Ok(scenario)
    }
}

fn json_error(text: &str, err: serde_json::Error) -> Error {
    let (line, column) = (err.line(), err.column());
    let offset = if line == 0 {
        0
    } else {
        text.split_inclusive('\n')
            .take(line - 1)
            .map(str::len)
            .sum::<usize>()
            + column.saturating_sub(1)
    };
    Error::InvalidScenario(format!(
        "offset {offset} (line {line}, column {column}): {err}"
    ))
}

/// Parses a scenario document without semantic validation.
pub fn parse_file(text: &str) -> Result<ScenarioFile> {
    serde_json::from_str(text).map_err(|e| json_error(text, e))
}

/// Parses and validates a scenario document.
pub fn from_json(text: &str) -> Result<Scenario> {
    parse_file(text)?.into_scenario()
}

/// Parses a JSON value into a validated scenario.
pub fn from_value(value: Value) -> Result<Scenario> {
    let file: ScenarioFile =
        serde_json::from_value(value).map_err(|e| Error::InvalidScenario(e.to_string()))?;
    file.into_scenario()
}

/// Replaces the numeric field at a dotted path such as `beta.params.amplitude`
/// or `solver.alpha_bracket.1`.
pub fn set_path(doc: &mut Value, path: &str, value: f64) -> Result<()> {
    let bad = |why: &str| Error::InvalidScenario(format!("parameter path `{path}`: {why}"));
    let mut cursor = doc;
    for key in path.split('.') {
        cursor = match cursor {
            Value::Object(map) => map.get_mut(key).ok_or_else(|| bad("no such key"))?,
            Value::Array(items) => {
                let idx: usize = key.parse().map_err(|_| bad("expected an array index"))?;
                items
                    .get_mut(idx)
                    .ok_or_else(|| bad("index out of range"))?
            }
            _ => return Err(bad("descends into a scalar")),
        };
    }
    match cursor {
        Value::Number(old) => {
            let integral = value.fract() == 0.0 && value >= 0.0 && value < 2f64.powi(53);
            *cursor = if (old.is_u64() || old.is_i64()) && integral {
                Value::from(value as u64)
            } else {
                Value::from(value)
            };
            if cursor.is_null() {
                return Err(bad("value must be finite"));
            }
            Ok(())
        }
        _ => Err(bad("does not address a numeric field")),
    }
}

pub mod catalog {
    //! Scenarios shipped with the crate, addressed as `catalog:<name>`.

    const ENTRIES: &[(&str, &str)] = &[
        (
            "constant_rate",
            include_str!("../catalog/constant_rate.json"),
        ),
        ("extinction", include_str!("../catalog/extinction.json")),
        (
            "gurtin_mccamy_closed_form",
            include_str!("../catalog/gurtin_mccamy_closed_form.json"),
        ),
        (
            "hierarchic_reference",
            include_str!("../catalog/hierarchic_reference.json"),
        ),
        (
            "increasing_beta",
            include_str!("../catalog/increasing_beta.json"),
        ),
        (
            "pure_transport",
            include_str!("../catalog/pure_transport.json"),
        ),
    ];

    pub const PREFIX: &str = "catalog:";

    pub fn names() -> impl Iterator<Item = &'static str> {
        ENTRIES.iter().map(|(name, _)| *name)
    }

    /// Raw JSON text of a catalog entry.
    pub fn source(name: &str) -> Option<&'static str> {
        ENTRIES
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, text)| *text)
    }

    pub fn load(name: &str) -> crate::Result<crate::Scenario> {
        let text = source(name).ok_or_else(|| {
            crate::Error::InvalidScenario(format!("unknown catalog scenario `{name}`"))
        })?;
        super::from_json(text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_entries_load() {
        for name in catalog::names() {
            let s = catalog::load(name).unwrap();
            assert_eq!(s.name.as_deref(), Some(name));
        }
        assert!(catalog::load("nope").is_err());
    }

    #[test]
    fn catalog_monotonicity() {
        let dec = catalog::load("hierarchic_reference").unwrap();
        assert_eq!(dec.rates.beta_monotonicity, Monotonicity::Decreasing);
        let inc = catalog::load("increasing_beta").unwrap();
        assert_eq!(inc.rates.beta_monotonicity, Monotonicity::Increasing);
        assert_eq!(inc.solver.alpha_bracket, (0.01, 100.0));
    }

    #[test]
    fn families_and_expressions_agree() {
        let fam = catalog::load("gurtin_mccamy_closed_form").unwrap();
        let expr = from_json(
            r#"{"model_kind":"gurtin_mccamy","m":5,"n":4000,
                "beta":{"expr":"2/(1+x)"},"mu":{"expr":"1"},"mu0":1}"#,
        )
        .unwrap();
        for (a, x) in [(0.0, 0.0), (1.3, 0.7), (5.0, 12.0)] {
            assert_eq!(
                fam.rates.beta.eval(a, x).unwrap(),
                expr.rates.beta.eval(a, x).unwrap()
            );
        }
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = from_json(
            r#"{"model_kind":"linear","m":5,"n":10,"beta":{"expr":"1"},"mu":{"expr":"1"},"mu0":0,"colour":1}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("colour"), "{err}");
        let err = from_json(
            r#"{"model_kind":"linear","m":5,"n":10,"beta":{"expr":"1","extra":2},"mu":{"expr":"1"},"mu0":0}"#,
        )
        .unwrap_err();
        assert!(err.is_input_error());
    }

    #[test]
    fn malformed_json_reports_offset() {
        let text = "{\n  \"m\": 5,\n  oops\n}";
        let err = from_json(text).unwrap_err();
        assert!(err.to_string().contains("offset 14"), "{err}");
    }

    #[test]
    fn rate_spec_shape_enforced() {
        let doc = |beta: &str| {
            format!(
                r#"{{"model_kind":"linear","m":5,"n":10,"beta":{beta},"mu":{{"expr":"1"}},"mu0":0}}"#
            )
        };
        assert!(from_json(&doc(r#"{"expr":"1","family":"constant"}"#)).is_err());
        assert!(from_json(&doc(r#"{}"#)).is_err());
        assert!(from_json(&doc(r#"{"family":"hyperbolic","params":{"amplitude":1}}"#)).is_err());
        assert!(from_json(&doc(r#"{"family":"wobbly","params":{}}"#)).is_err());
        assert!(from_json(&doc(r#"{"expr":"2*a +"}"#))
            .unwrap_err()
            .is_input_error());
    }

    #[test]
    fn semantic_validation() {
        let base =
            r#"{"model_kind":"linear","m":5,"n":1,"beta":{"expr":"1"},"mu":{"expr":"1"},"mu0":0}"#;
        assert!(from_json(base).is_err());
        let omega = r#"{"model_kind":"linear","m":5,"n":10,"beta":{"expr":"1"},"mu":{"expr":"1"},"mu0":0,"solver":{"omega":1.5}}"#;
        assert!(from_json(omega).is_err());
        let initial = r#"{"model_kind":"linear","m":5,"n":10,"beta":{"expr":"1"},"mu":{"expr":"1"},"mu0":0,"initial":{"expr":"x"}}"#;
        assert!(from_json(initial).is_err());
    }

    #[test]
    fn dotted_paths() {
        let mut doc: Value =
            serde_json::from_str(catalog::source("gurtin_mccamy_closed_form").unwrap()).unwrap();
        set_path(&mut doc, "beta.params.amplitude", 3.0).unwrap();
        set_path(&mut doc, "n", 500.0).unwrap();
        set_path(&mut doc, "solver.alpha_bracket.1", 1e6).unwrap();
        let s = from_value(doc.clone()).unwrap();
        assert_eq!(s.rates.beta.eval(0.0, 0.0).unwrap(), 3.0);
        assert_eq!(s.grid.len(), 500);
        assert_eq!(s.solver.alpha_bracket.1, 1e6);
        set_path(&mut doc, "n", 2.5).unwrap();
        assert!(from_value(doc.clone()).is_err());
        let mut integral: Value =
            serde_json::from_str(r#"{"beta": {"params": {"amplitude": 1}}}"#).unwrap();
        set_path(&mut integral, "beta.params.amplitude", 0.5).unwrap();
        assert_eq!(integral["beta"]["params"]["amplitude"], 0.5);
        assert!(set_path(&mut doc, "m", f64::NAN).is_err());
        assert!(set_path(&mut doc, "model_kind", 1.0).is_err());
        assert!(set_path(&mut doc, "beta.nothing", 1.0).is_err());
    }

    #[test]
    fn round_trip_through_serde() {
        let file = parse_file(catalog::source("increasing_beta").unwrap()).unwrap();
        let text = serde_json::to_string(&file).unwrap();
        assert_eq!(parse_file(&text).unwrap(), file);
    }
}
