//! Shared fixtures for the pipeline benchmarks.

use cafdi::design::design_bank;
use cafdi::{preset, AugmentedModel, DesignOptions, DetectorBank, SimConfig};

pub struct Fixture {
    pub aug: AugmentedModel,
    pub bank: DetectorBank,
    pub cfg: SimConfig,
}

/// Preset model with its designed bank, noisy at a 1 ms step.
pub fn fixture() -> Fixture {
    let aug = preset::augmented();
    let bank = design_bank(&aug, &preset::d_ac(), &DesignOptions::default()).expect("preset design is feasible");
    Fixture { aug, bank, cfg: SimConfig { dt: 1e-3, noise_on: true, ..SimConfig::default() } }
}
