//! JSON configuration documents and their resolution into a model and bank.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::design::{design_bank, DesignOptions, DetectorBank};
use crate::error::{Error, Result};
use crate::eval::DEFAULT_MARGIN;
use crate::model::{build_augmented, AugmentedModel, AuxiliarySensorModel, PlantModel};
use crate::numerics::RealMatrix;
use crate::preset;
use crate::scenario::{named_scenario, AnomalyParams, ScenarioSpec};
use crate::sim::SimConfig;

pub const PRESETS: [&str; 1] = [preset::NAME];

fn runs_default() -> usize {
    100
}
fn margin_default() -> f64 {
    DEFAULT_MARGIN
}
fn debounce_default() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    #[serde(default = "runs_default")]
    pub n_runs: usize,
    #[serde(default = "margin_default")]
    pub margin: f64,
    #[serde(default = "debounce_default")]
    pub debounce: usize,
    #[serde(default)]
    pub anomalies: AnomalyParams,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { n_runs: runs_default(), margin: margin_default(), debounce: debounce_default(), anomalies: AnomalyParams::default() }
    }
}

/// A scenario given by name or spelled out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScenarioRef {
    Named(String),
    Spec(ScenarioSpec),
}

impl ScenarioRef {
    pub fn resolve(&self) -> Result<ScenarioSpec> {
        match self {
            ScenarioRef::Named(n) => named_scenario(n),
            ScenarioRef::Spec(s) => Ok(s.clone()),
        }
    }
}

/// Top-level configuration. Any model part left out is taken from `preset`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigDocument {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plant: Option<PlantModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auxiliary: Option<AuxiliarySensorModel>,
    #[serde(default, with = "crate::serde_util::opt_matrix", skip_serializing_if = "Option::is_none")]
    pub d_ac: Option<RealMatrix>,
    #[serde(default)]
    pub design: DesignOptions,
    /// Frozen bank; skips the design step.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bank: Option<DetectorBank>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<ScenarioRef>,
    #[serde(default)]
    pub sim: SimConfig,
    #[serde(default)]
    pub eval: EvalConfig,
}

/// Model, link signature and design inputs after preset defaults are filled.
#[derive(Debug, Clone)]
pub struct ResolvedModel {
    pub aug: AugmentedModel,
    pub d_ac: RealMatrix,
    pub design: DesignOptions,
}

impl ConfigDocument {
    pub fn preset(name: &str) -> Result<Self> {
        check_preset(name)?;
        Ok(Self { preset: Some(name.to_string()), ..Self::default() })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn resolve_model(&self) -> Result<ResolvedModel> {
        let from_preset = match &self.preset {
            Some(p) => {
                check_preset(p)?;
                true
            }
            None => false,
        };
        let need = |what: &str| Error::Config(format!("`{what}` is required when no preset is given"));
        let plant = match (&self.plant, from_preset) {
            (Some(p), _) => p.clone(),
            (None, true) => preset::plant(),
            (None, false) => return Err(need("plant")),
        };
        let aux = match (&self.auxiliary, from_preset) {
            (Some(a), _) => a.clone(),
            (None, true) => preset::aux(),
            (None, false) => return Err(need("auxiliary")),
        };
        let d_ac = match (&self.d_ac, from_preset) {
            (Some(d), _) => d.clone(),
            (None, true) => preset::d_ac(),
            (None, false) => return Err(need("d_ac")),
        };
        let mut design = self.design.clone();
        if from_preset && design.fixed_aa.is_none() && self.plant.is_none() && self.auxiliary.is_none() {
            design.fixed_aa = Some(preset::actuator_design());
        }
        Ok(ResolvedModel { aug: build_augmented(&plant, &aux)?, d_ac, design })
    }

    /// The frozen bank if present, otherwise a fresh design.
    pub fn resolve_bank(&self, model: &ResolvedModel) -> Result<DetectorBank> {
        match &self.bank {
            Some(b) => {
                b.check_dims(&model.aug)?;
                Ok(b.clone())
            }
            None => design_bank(&model.aug, &model.d_ac, &model.design),
        }
    }
}

fn check_preset(name: &str) -> Result<()> {
    if PRESETS.contains(&name) {
        Ok(())
    } else {
        Err(Error::Config(format!("unknown preset `{name}`; available: {}", PRESETS.join(", "))))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_resolves_to_fixture_bank() {
        let doc = ConfigDocument::preset(preset::NAME).unwrap();
        let m = doc.resolve_model().unwrap();
        let bank = doc.resolve_bank(&m).unwrap();
        assert_eq!(bank.aa.uio.h, preset::actuator_design().h);
        assert!(ConfigDocument::preset("other").is_err());
    }

    #[test]
    fn missing_model_without_preset_is_an_error() {
        let err = ConfigDocument::default().resolve_model().unwrap_err().to_string();
        assert!(err.contains("plant"));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(ConfigDocument::from_json(r#"{"preset":"paper-siv","bogus":1}"#).is_err());
        assert!(ConfigDocument::from_json(r#"{"preset":"paper-siv","sim":{"dtt":1}}"#).is_err());
    }

    #[test]
    fn full_document_round_trips() {
        let doc = ConfigDocument::preset(preset::NAME).unwrap();
        let m = doc.resolve_model().unwrap();
        let full = ConfigDocument {
            preset: None,
            plant: Some(m.aug.plant.clone()),
            auxiliary: Some(m.aug.aux.clone()),
            d_ac: Some(m.d_ac.clone()),
            design: m.design.clone(),
            bank: Some(doc.resolve_bank(&m).unwrap()),
            scenario: Some(ScenarioRef::Named("covert".into())),
            sim: SimConfig { dt: 0.01, ..SimConfig::default() },
            eval: EvalConfig::default(),
        };
        let text = serde_json::to_string_pretty(&full).unwrap();
        let back = ConfigDocument::from_json(&text).unwrap();
        assert_eq!(back, full);
        let named = back.scenario.unwrap().resolve().unwrap();
        assert_eq!(named.name, "covert");
    }

    #[test]
    fn inline_scenario_parses() {
        let doc = ConfigDocument::from_json(
            r#"{"preset":"paper-siv","scenario":{"name":"f","events":[{"kind":"bias-fault","channel":"f2","t0":1,"magnitude":[2]}]}}"#,
        )
        .unwrap();
        assert!(matches!(doc.scenario, Some(ScenarioRef::Spec(_))));
    }
}
