//! Simultaneous cyber-attack and fault detection and isolation for linear
//! cyber-physical systems.
//!
//! A plant with auxiliary sensor dynamics is monitored by a bank of four
//! detectors, one per anomaly category (actuator attack, sensor attack,
//! actuator fault, sensor fault). Each detector pairs a plant-side filter
//! with its command-and-control twin and drives an unknown input observer
//! whose residual reacts to its own category only.
//!
//! Typical flow: [`model::build_augmented`] → [`design::design_bank`] →
//! [`design::verify_conditions`] → [`sim::simulate`] → [`eval::detect`].

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod design;
pub mod error;
pub mod eval;
pub mod model;
pub mod numerics;
pub mod preset;
pub mod scenario;
pub mod serde_util;
pub mod sim;
pub mod threat;

pub use config::ConfigDocument;
pub use design::{Category, ConditionReport, DesignOptions, DetectorBank, DetectorEntry, SideFilter, UIODetector};
pub use error::{Error, Result};
pub use eval::{DetectionReport, ThresholdSet, TprTable};
pub use model::{AugmentedModel, AuxiliarySensorModel, PlantModel};
pub use numerics::{Integrator, RealMatrix};
pub use scenario::{Anomaly, AnomalyParams, ScenarioSpec};
pub use sim::{ScenarioTimeline, SimConfig, SimulationTrace};
pub use threat::{Channel, SignalGenerator, Term};
