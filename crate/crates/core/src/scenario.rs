//! Scenario catalog: the standard anomaly set used by campaigns and probes,
//! the five named scenarios, and config-driven event lists.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::design::{degrade_condition9, Category, DetectorBank};
use crate::error::{Error, Result};
use crate::model::AugmentedModel;
use crate::sim::{ScenarioTimeline, SimConfig};
use crate::threat::{
    bias_fault, comm_link_attack, covert_attack, replay_attack, undetectable_controllable_attack, zero_dynamics_attack,
    Channel, SignalGenerator, Term,
};

/// Duration of campaign and probe runs (s).
pub const CAMPAIGN_T_END: f64 = 30.0;

/// Names accepted by [`named_scenario`].
pub const SCENARIO_NAMES: [&str; 5] = ["zero-dynamics", "covert", "faults", "simultaneous", "degraded-c9"];

/// Anomaly kinds of the campaign grid. `AC` is the inter-filter link attack,
/// which no residual should see.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Anomaly {
    AA,
    SA,
    AF,
    SF,
    AC,
}

impl Anomaly {
    pub const ALL: [Anomaly; 5] = [Anomaly::AA, Anomaly::SA, Anomaly::AF, Anomaly::SF, Anomaly::AC];

    pub fn of(c: Category) -> Anomaly {
        match c {
            Category::AA => Anomaly::AA,
            Category::SA => Anomaly::SA,
            Category::AF => Anomaly::AF,
            Category::SF => Anomaly::SF,
        }
    }

    pub fn category(self) -> Option<Category> {
        match self {
            Anomaly::AA => Some(Category::AA),
            Anomaly::SA => Some(Category::SA),
            Anomaly::AF => Some(Category::AF),
            Anomaly::SF => Some(Category::SF),
            Anomaly::AC => None,
        }
    }
}

impl fmt::Display for Anomaly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Anomaly::AA => "AA",
            Anomaly::SA => "SA",
            Anomaly::AF => "AF",
            Anomaly::SF => "SF",
            Anomaly::AC => "AC",
        };
        f.write_str(s)
    }
}

fn v21() -> Vec<f64> {
    vec![2.0, 1.0]
}
fn v40() -> Vec<f64> {
    vec![40.0]
}
fn v20() -> Vec<f64> {
    vec![20.0]
}
fn t10() -> f64 {
    10.0
}
fn t5() -> f64 {
    5.0
}
fn t2() -> f64 {
    2.0
}
fn t_end_default() -> f64 {
    CAMPAIGN_T_END
}

/// Magnitudes and onsets of the standard anomalies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnomalyParams {
    /// Constant actuator attack; the sensor attack is its covert complement.
    #[serde(default = "v21")]
    pub a_u: Vec<f64>,
    #[serde(default = "t10")]
    pub t_attack: f64,
    #[serde(default = "v40")]
    pub f1: Vec<f64>,
    #[serde(default = "t5")]
    pub t_f1: f64,
    #[serde(default = "v20")]
    pub f2: Vec<f64>,
    #[serde(default = "t10")]
    pub t_f2: f64,
    /// Link-attack step; ones when empty.
    #[serde(default)]
    pub a_c: Vec<f64>,
    #[serde(default = "t2")]
    pub t_link: f64,
    #[serde(default = "t_end_default")]
    pub t_end: f64,
}

impl Default for AnomalyParams {
    fn default() -> Self {
        Self {
            a_u: v21(),
            t_attack: t10(),
            f1: v40(),
            t_f1: t5(),
            f2: v20(),
            t_f2: t10(),
            a_c: Vec::new(),
            t_link: t2(),
            t_end: CAMPAIGN_T_END,
        }
    }
}

impl AnomalyParams {
    pub fn onset(&self, a: Anomaly) -> f64 {
        match a {
            Anomaly::AA | Anomaly::SA => self.t_attack,
            Anomaly::AF => self.t_f1,
            Anomaly::SF => self.t_f2,
            Anomaly::AC => self.t_link,
        }
    }
}

/// Timeline with exactly the anomalies in `active`, each at its standard
/// magnitude. The sensor attack is the covert complement of `a_u` whether or
/// not `a_u` itself is injected.
pub fn anomaly_timeline(aug: &AugmentedModel, active: &[Anomaly], p: &AnomalyParams, cfg: &SimConfig) -> Result<ScenarioTimeline> {
    let mut labels: Vec<String> = active.iter().map(Anomaly::to_string).collect();
    labels.dedup();
    let mut tl = ScenarioTimeline::new(if labels.is_empty() { "healthy".into() } else { labels.join(" & ") }, p.t_end);
    let au = SignalGenerator::step(Channel::Au, p.t_attack, p.a_u.clone())?;
    if active.contains(&Anomaly::AA) {
        tl.signals.push(au.clone());
    }
    if active.contains(&Anomaly::SA) {
        tl.signals.push(covert_attack(aug, &au, cfg.dt, cfg.integrator)?);
    }
    if active.contains(&Anomaly::AF) {
        tl.signals.push(bias_fault(Channel::F1, p.f1.clone(), p.t_f1)?);
    }
    if active.contains(&Anomaly::SF) {
        tl.signals.push(bias_fault(Channel::F2, p.f2.clone(), p.t_f2)?);
    }
    if active.contains(&Anomaly::AC) {
        let n = aug.dims.n;
        let value = if p.a_c.is_empty() { vec![1.0; n] } else { p.a_c.clone() };
        let amp: Vec<f64> = value.iter().map(|v| 0.5 * v).collect();
        let w = SignalGenerator::waveform(
            Channel::Ac,
            p.t_link,
            vec![Term::Step { value }, Term::Sine { amplitude: amp, omega: 1.7, phase: 0.0 }],
        )?;
        tl.signals.push(w);
    }
    Ok(tl)
}

fn one() -> f64 {
    1.0
}
fn tenth() -> f64 {
    0.1
}
fn yes() -> bool {
    true
}

/// One event in a config-declared scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EventSpec {
    /// Arbitrary waveform on one channel.
    Waveform { channel: Channel, t0: f64, terms: Vec<Term> },
    /// Exponential along the plant's non-minimum-phase zero direction.
    ZeroDynamics {
        #[serde(default)]
        t0: f64,
        #[serde(default = "one")]
        scale: f64,
    },
    /// Constant `a_u` with its covert sensor complement.
    Covert {
        t0: f64,
        a_u: Vec<f64>,
        /// Inject `a_u` itself; `false` leaves only the sensor part.
        #[serde(default = "yes")]
        actuator: bool,
    },
    /// Record `y_p` over `[t_a − Δ, t_a)`, replay it over `[t_a, t_b]` while
    /// applying a constant `a_u`.
    Replay { t_a: f64, t_b: f64, a_u: Vec<f64> },
    BiasFault { channel: Channel, t0: f64, magnitude: Vec<f64> },
    CommLink { t0: f64, terms: Vec<Term> },
    /// Hidden actuator attack against the actuator-attack filter.
    UndetectableControllable {
        #[serde(default)]
        t0: f64,
        #[serde(default = "one")]
        scale: f64,
        #[serde(default = "tenth")]
        rate: f64,
    },
}

/// Declarative scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub name: String,
    #[serde(default = "t_end_default")]
    pub t_end: f64,
    /// Replace the actuator-attack filter by one that violates the
    /// rank-preservation condition before running.
    #[serde(default)]
    pub degrade_c9: bool,
    pub events: Vec<EventSpec>,
}

/// A built scenario: its timeline, the bank it runs against, and the onset
/// of each anomaly category present.
#[derive(Debug, Clone)]
pub struct ScenarioSetup {
    pub timeline: ScenarioTimeline,
    pub bank: DetectorBank,
    pub onsets: [Option<f64>; 4],
}

impl ScenarioSetup {
    pub fn active(&self) -> Vec<Category> {
        Category::ALL.into_iter().filter(|c| self.onsets[c.index()].is_some()).collect()
    }
}

fn note(onsets: &mut [Option<f64>; 4], c: Category, t: f64) {
    let slot = &mut onsets[c.index()];
    *slot = Some(slot.map_or(t, |s| s.min(t)));
}

impl ScenarioSpec {
    pub fn build(&self, aug: &AugmentedModel, bank: &DetectorBank, cfg: &SimConfig) -> Result<ScenarioSetup> {
        let bank = if self.degrade_c9 { degrade_condition9(bank)? } else { bank.clone() };
        let mut tl = ScenarioTimeline::new(self.name.clone(), self.t_end);
        let mut onsets = [None; 4];
        for ev in &self.events {
            match ev {
                EventSpec::Waveform { channel, t0, terms } => {
                    tl.signals.push(SignalGenerator::waveform(*channel, *t0, terms.clone())?);
                    let cat = match channel {
                        Channel::Au => Some(Category::AA),
                        Channel::Ay => Some(Category::SA),
                        Channel::F1 => Some(Category::AF),
                        Channel::F2 => Some(Category::SF),
                        Channel::U | Channel::Ac => None,
                    };
                    if let Some(c) = cat {
                        note(&mut onsets, c, *t0);
                    }
                }
                EventSpec::ZeroDynamics { t0, scale } => {
                    tl.signals.push(zero_dynamics_attack(&aug.plant, *scale, *t0)?);
                    note(&mut onsets, Category::AA, *t0);
                }
                EventSpec::Covert { t0, a_u, actuator } => {
                    let au = SignalGenerator::step(Channel::Au, *t0, a_u.clone())?;
                    tl.signals.push(covert_attack(aug, &au, cfg.dt, cfg.integrator)?);
                    note(&mut onsets, Category::SA, *t0);
                    if *actuator {
                        tl.signals.push(au);
                        note(&mut onsets, Category::AA, *t0);
                    }
                }
                EventSpec::Replay { t_a, t_b, a_u } => {
                    let au = SignalGenerator::step(Channel::Au, *t_a, a_u.clone())?;
                    let (ay, au) = replay_attack(aug, None, (*t_a, *t_b), au)?;
                    tl.signals.push(ay);
                    tl.signals.push(au);
                    note(&mut onsets, Category::SA, *t_a);
                    note(&mut onsets, Category::AA, *t_a);
                }
                EventSpec::BiasFault { channel, t0, magnitude } => {
                    tl.signals.push(bias_fault(*channel, magnitude.clone(), *t0)?);
                    let c = if *channel == Channel::F1 { Category::AF } else { Category::SF };
                    note(&mut onsets, c, *t0);
                }
                EventSpec::CommLink { t0, terms } => {
                    let w = SignalGenerator::waveform(Channel::Ac, *t0, terms.clone())?;
                    tl.signals.push(comm_link_attack(&bank.d_ac, w)?);
                }
                EventSpec::UndetectableControllable { t0, scale, rate } => {
                    let e = &bank.aa;
                    tl.signals.push(undetectable_controllable_attack(&e.filter, &e.uio.l, &aug.plant.b_a_s(), *scale, *rate, *t0)?);
                    note(&mut onsets, Category::AA, *t0);
                }
            }
        }
        Ok(ScenarioSetup { timeline: tl, bank, onsets })
    }
}

/// One of [`SCENARIO_NAMES`].
pub fn named_scenario(name: &str) -> Result<ScenarioSpec> {
    let spec = |events: Vec<EventSpec>| ScenarioSpec { name: name.to_string(), t_end: CAMPAIGN_T_END, degrade_c9: false, events };
    Ok(match name {
        "zero-dynamics" => spec(vec![EventSpec::ZeroDynamics { t0: 0.0, scale: 1.0 }]),
        "covert" => spec(vec![EventSpec::Covert { t0: 10.0, a_u: v21(), actuator: true }]),
        "faults" => spec(vec![
            EventSpec::BiasFault { channel: Channel::F1, t0: 5.0, magnitude: v40() },
            EventSpec::BiasFault { channel: Channel::F2, t0: 10.0, magnitude: v20() },
        ]),
        "simultaneous" => spec(vec![
            EventSpec::Covert { t0: 0.0, a_u: v21(), actuator: true },
            EventSpec::BiasFault { channel: Channel::F1, t0: 5.0, magnitude: v40() },
            EventSpec::BiasFault { channel: Channel::F2, t0: 10.0, magnitude: v20() },
        ]),
        "degraded-c9" => ScenarioSpec {
            degrade_c9: true,
            ..spec(vec![EventSpec::UndetectableControllable { t0: 0.0, scale: 1.0, rate: 0.1 }])
        },
        other => {
            return Err(Error::InvalidInput(format!(
                "unknown scenario `{other}`; valid names: {}",
                SCENARIO_NAMES.join(", ")
            )))
        }
    })
}
