//! Threshold calibration, detection decisions, covertness measurement and
//! Monte Carlo TPR campaigns.

use std::collections::BTreeSet;
use std::io::Write;
use std::ops::ControlFlow;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::design::{Category, DetectorBank};
use crate::error::{Error, Result};
use crate::model::AugmentedModel;
use crate::scenario::{anomaly_timeline, Anomaly, AnomalyParams, CAMPAIGN_T_END};
use crate::sim::{ScenarioTimeline, SimConfig, SimulationTrace, Simulator};

/// Default factor over the largest healthy residual peak.
pub const DEFAULT_MARGIN: f64 = 1.1;
/// Smallest raw peak treated as noise rather than round-off.
pub const THRESHOLD_FLOOR: f64 = 1e-6;

const STREAM_CALIBRATION: u64 = 1;
const STREAM_CAMPAIGN: u64 = 2;
/// Seed stream for fresh healthy runs, disjoint from calibration.
pub const STREAM_VALIDATION: u64 = 3;

/// Seed of run `i` in `stream`, derived from `base` by SplitMix64 mixing.
pub fn run_seed(base: u64, stream: u64, i: u64) -> u64 {
    let mut z = base
        .wrapping_add(stream.wrapping_mul(0xD1B5_4A32_D192_ED03))
        .wrapping_add(i.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One value per residual category.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "UPPERCASE")]
pub struct PerCategory<T> {
    pub aa: T,
    pub sa: T,
    pub af: T,
    pub sf: T,
}

impl<T> PerCategory<T> {
    pub fn from_fn(mut f: impl FnMut(Category) -> T) -> Self {
        Self { aa: f(Category::AA), sa: f(Category::SA), af: f(Category::AF), sf: f(Category::SF) }
    }

    pub fn get(&self, c: Category) -> &T {
        match c {
            Category::AA => &self.aa,
            Category::SA => &self.sa,
            Category::AF => &self.af,
            Category::SF => &self.sf,
        }
    }

    pub fn get_mut(&mut self, c: Category) -> &mut T {
        match c {
            Category::AA => &mut self.aa,
            Category::SA => &mut self.sa,
            Category::AF => &mut self.af,
            Category::SF => &mut self.sf,
        }
    }
}

impl<T: Copy> PerCategory<T> {
    pub fn to_array(&self) -> [T; 4] {
        [self.aa, self.sa, self.af, self.sf]
    }
}

/// Calibrated detection thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdSet {
    pub eta: PerCategory<f64>,
    /// Largest healthy peak per residual, before margin and floor.
    pub raw_max: PerCategory<f64>,
    /// Set where the raw peak fell below [`THRESHOLD_FLOOR`]; `eta` then
    /// reflects only the floor.
    pub degenerate: PerCategory<bool>,
    pub margin: f64,
    pub floor: f64,
    pub n_runs: usize,
    pub seed: u64,
    pub dt: f64,
    pub t_end: f64,
    /// Consecutive samples above `eta` required for a detection.
    #[serde(default = "one")]
    pub debounce: usize,
}

fn one() -> usize {
    1
}

impl ThresholdSet {
    /// Thresholds set directly, without a calibration record.
    pub fn fixed(eta: [f64; 4]) -> Result<Self> {
        if eta.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            return Err(Error::InvalidInput(format!("thresholds must be positive and finite, got {eta:?}")));
        }
        Ok(Self {
            eta: PerCategory::from_fn(|c| eta[c.index()]),
            raw_max: PerCategory::from_fn(|c| eta[c.index()]),
            degenerate: PerCategory::default(),
            margin: 1.0,
            floor: THRESHOLD_FLOOR,
            n_runs: 0,
            seed: 0,
            dt: 0.0,
            t_end: 0.0,
            debounce: 1,
        })
    }

    pub fn eta(&self, c: Category) -> f64 {
        *self.eta.get(c)
    }

    pub fn with_debounce(mut self, debounce: usize) -> Self {
        self.debounce = debounce.max(1);
        self
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for c in Category::ALL {
            *out.eta.get_mut(c) *= factor;
        }
        out.margin *= factor;
        out
    }
}

/// Runs `f(0..n)` over the available cores and collects results in order.
pub fn parallel_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let workers = std::thread::available_parallelism().map_or(1, |w| w.get()).min(n.max(1));
    if workers <= 1 {
        return (0..n).map(f).collect();
    }
    let mut slots: Vec<Option<T>> = (0..n).map(|_| None).collect();
    let next = std::sync::atomic::AtomicUsize::new(0);
    let results = std::sync::Mutex::new(&mut slots);
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let v = f(i);
                results.lock().expect("worker panicked")[i] = Some(v);
            });
        }
    });
    slots.into_iter().map(|v| v.expect("every index visited")).collect()
}

/// Peak residual norm of each category over one run.
fn peak_norms(aug: &AugmentedModel, bank: &DetectorBank, timeline: &ScenarioTimeline, cfg: &SimConfig) -> Result<[f64; 4]> {
    let mut sim = Simulator::new(aug, bank, timeline, cfg)?;
    let mut peak = [0.0f64; 4];
    sim.run(|s| {
        for b in s.blocks {
            let p = &mut peak[b.category.index()];
            *p = p.max(b.norm);
        }
        ControlFlow::Continue(())
    });
    Ok(peak)
}

/// Peak healthy residual norms over `n_runs` seeded runs with noise on.
/// Seeds come from stream `stream` of `cfg.seed`.
pub fn healthy_peaks(
    aug: &AugmentedModel,
    bank: &DetectorBank,
    cfg: &SimConfig,
    n_runs: usize,
    stream: u64,
) -> Result<Vec<[f64; 4]>> {
    let timeline = ScenarioTimeline::new("healthy", CAMPAIGN_T_END);
    let base = SimConfig { noise_on: true, categories: None, ..cfg.clone() };
    Simulator::new(aug, bank, &timeline, &base)?;
    parallel_map(n_runs, |i| {
        let c = SimConfig { seed: run_seed(cfg.seed, stream, i as u64), ..base.clone() };
        peak_norms(aug, bank, &timeline, &c)
    })
    .into_iter()
    .collect()
}

/// η_ℓ = margin · max over `n_runs` healthy runs of max_t ‖res_ℓ‖, floored
/// at [`THRESHOLD_FLOOR`] for residuals the noise does not reach.
pub fn calibrate_threshold(
    aug: &AugmentedModel,
    bank: &DetectorBank,
    cfg: &SimConfig,
    n_runs: usize,
    margin: f64,
) -> Result<ThresholdSet> {
    if n_runs == 0 {
        return Err(Error::InvalidInput("calibration needs at least one run".into()));
    }
    if !(margin >= 1.0 && margin.is_finite()) {
        return Err(Error::InvalidInput(format!("margin must be at least 1, got {margin}")));
    }
    let peaks = healthy_peaks(aug, bank, cfg, n_runs, STREAM_CALIBRATION)?;
    let raw = PerCategory::from_fn(|c| peaks.iter().map(|p| p[c.index()]).fold(0.0, f64::max));
    Ok(ThresholdSet {
        eta: PerCategory::from_fn(|c| margin * raw.get(c).max(THRESHOLD_FLOOR)),
        degenerate: PerCategory::from_fn(|c| *raw.get(c) < THRESHOLD_FLOOR),
        raw_max: raw,
        margin,
        floor: THRESHOLD_FLOOR,
        n_runs,
        seed: cfg.seed,
        dt: cfg.dt,
        t_end: cfg.t_end.unwrap_or(CAMPAIGN_T_END),
        debounce: 1,
    })
}

/// Streaming form of the detection rule: fires once `debounce` consecutive
/// samples exceed `eta`.
#[derive(Debug, Clone)]
pub struct CrossingDetector {
    eta: f64,
    debounce: usize,
    streak: usize,
    streak_start: f64,
    first: Option<f64>,
}

impl CrossingDetector {
    pub fn new(eta: f64, debounce: usize) -> Self {
        Self { eta, debounce: debounce.max(1), streak: 0, streak_start: 0.0, first: None }
    }

    /// Feeds one sample; returns the crossing time once detected.
    pub fn push(&mut self, t: f64, norm: f64) -> Option<f64> {
        if self.first.is_some() {
            return self.first;
        }
        if norm > self.eta {
            if self.streak == 0 {
                self.streak_start = t;
            }
            self.streak += 1;
            if self.streak >= self.debounce {
                self.first = Some(self.streak_start);
            }
        } else {
            self.streak = 0;
        }
        self.first
    }

    pub fn first_crossing(&self) -> Option<f64> {
        self.first
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryDetection {
    pub detected: bool,
    pub first_crossing: Option<f64>,
    pub max_norm: f64,
    pub eta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub scenario: String,
    /// `None` for categories absent from the trace.
    pub categories: PerCategory<Option<CategoryDetection>>,
    /// Detected categories, in crossing order.
    pub verdict: Vec<Category>,
    pub truncated: bool,
}

impl DetectionReport {
    pub fn detected(&self, c: Category) -> bool {
        self.categories.get(c).as_ref().is_some_and(|d| d.detected)
    }

    pub fn first_crossing(&self, c: Category) -> Option<f64> {
        self.categories.get(c).as_ref().and_then(|d| d.first_crossing)
    }

    pub fn verdict_set(&self) -> BTreeSet<Category> {
        self.verdict.iter().copied().collect()
    }
}

/// Applies the threshold rule to every residual recorded in `trace`.
pub fn detect(trace: &SimulationTrace, thresholds: &ThresholdSet, debounce: usize) -> DetectionReport {
    let categories = PerCategory::from_fn(|c| {
        trace.category(c).map(|ct| {
            let eta = thresholds.eta(c);
            let mut det = CrossingDetector::new(eta, debounce);
            for (t, n) in trace.t.iter().zip(&ct.norm) {
                if det.push(*t, *n).is_some() {
                    break;
                }
            }
            let first = det.first_crossing();
            CategoryDetection { detected: first.is_some(), first_crossing: first, max_norm: ct.max_norm(), eta }
        })
    });
    let mut verdict: Vec<(f64, Category)> =
        Category::ALL.into_iter().filter_map(|c| categories.get(c).as_ref().and_then(|d| d.first_crossing).map(|t| (t, c))).collect();
    verdict.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.index().cmp(&b.1.index())));
    DetectionReport {
        scenario: trace.scenario.clone(),
        categories,
        verdict: verdict.into_iter().map(|(_, c)| c).collect(),
        truncated: trace.truncated,
    }
}

/// Where an output comparison is taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputSide {
    /// `y*`, as received by the command-and-control side.
    Received,
    /// `y_p`, at the plant.
    Plant,
}

fn output_history(aug: &AugmentedModel, bank: &DetectorBank, timeline: &ScenarioTimeline, cfg: &SimConfig, side: OutputSide) -> Result<Vec<DVector<f64>>> {
    let mut sim = Simulator::new(aug, bank, timeline, cfg)?;
    let mut out = Vec::with_capacity(sim.n_steps() + 1);
    sim.run(|s| {
        out.push(match side {
            OutputSide::Received => s.y_star.clone(),
            OutputSide::Plant => s.y_p.clone(),
        });
        ControlFlow::Continue(())
    });
    Ok(out)
}

/// max_t ‖y(t) − y_0(t)‖ between `timeline` and an attack-free run of equal
/// length and seed.
pub fn output_gap(aug: &AugmentedModel, bank: &DetectorBank, timeline: &ScenarioTimeline, cfg: &SimConfig, side: OutputSide) -> Result<f64> {
    let cfg = SimConfig { categories: Some(Vec::new()), ..cfg.clone() };
    let quiet = ScenarioTimeline::new("attack-free", timeline.t_end);
    let a = output_history(aug, bank, timeline, &cfg, side)?;
    let b = output_history(aug, bank, &quiet, &cfg, side)?;
    Ok(a.iter().zip(&b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max))
}

/// [`output_gap`] at the command-and-control input `y*`.
pub fn covertness_gap(aug: &AugmentedModel, bank: &DetectorBank, timeline: &ScenarioTimeline, cfg: &SimConfig) -> Result<f64> {
    output_gap(aug, bank, timeline, cfg, OutputSide::Received)
}

/// Rows of one TPR table: every combination contains the target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableSpec {
    pub target: Category,
    pub rows: Vec<Vec<Anomaly>>,
}

/// The four standard tables: the target alone, with each other category,
/// with each pair, and with all three, in that order.
pub fn standard_tables() -> Vec<TableSpec> {
    let others = |c: Category| -> Vec<Anomaly> {
        let order: &[Category] = match c {
            Category::AA => &[Category::SA, Category::AF, Category::SF],
            Category::SA => &[Category::AA, Category::AF, Category::SF],
            Category::AF => &[Category::AA, Category::SA, Category::SF],
            Category::SF => &[Category::AA, Category::SA, Category::AF],
        };
        order.iter().map(|o| Anomaly::of(*o)).collect()
    };
    Category::ALL
        .into_iter()
        .map(|target| {
            let t = Anomaly::of(target);
            let o = others(target);
            let mut rows = vec![vec![t]];
            rows.extend(o.iter().map(|a| vec![t, *a]));
            rows.extend([(0, 1), (0, 2), (1, 2)].iter().map(|&(i, j)| vec![t, o[i], o[j]]));
            rows.push(vec![t, o[0], o[1], o[2]]);
            TableSpec { target, rows }
        })
        .collect()
}

pub fn combo_label(combo: &[Anomaly]) -> String {
    combo.iter().map(Anomaly::to_string).collect::<Vec<_>>().join(" & ")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TprRow {
    pub combo: String,
    pub tp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TprTable {
    pub table: Category,
    pub rows: Vec<TprRow>,
}

impl TprTable {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "table,combo,tp,fn,tpr")?;
        for r in &self.rows {
            writeln!(w, "{},{},{},{},{}", self.table, r.combo, r.tp, r.fn_, r.tpr)?;
        }
        Ok(())
    }

    pub fn row(&self, combo: &str) -> Option<&TprRow> {
        self.rows.iter().find(|r| r.combo == combo)
    }
}

/// Campaign settings beyond the grid itself.
#[derive(Debug, Clone)]
pub struct CampaignOptions {
    pub n_runs: usize,
    pub base_seed: u64,
    pub params: AnomalyParams,
    /// Step, integrator and initial state; noise is always on.
    pub sim: SimConfig,
}

/// Runs every distinct combination of the grid `n_runs` times and counts,
/// per table row, the runs in which the target residual crosses its
/// threshold between the target's onset and the end of the run.
pub fn tpr_campaign(
    aug: &AugmentedModel,
    bank: &DetectorBank,
    thresholds: &ThresholdSet,
    tables: &[TableSpec],
    opts: &CampaignOptions,
) -> Result<Vec<TprTable>> {
    if opts.n_runs == 0 {
        return Err(Error::InvalidInput("campaign needs at least one run".into()));
    }
    let mut combos: Vec<(BTreeSet<Anomaly>, BTreeSet<Category>)> = Vec::new();
    for t in tables {
        for row in &t.rows {
            if !row.contains(&Anomaly::of(t.target)) {
                return Err(Error::InvalidInput(format!(
                    "row `{}` of the {} table does not activate its target",
                    combo_label(row),
                    t.target
                )));
            }
            let key: BTreeSet<Anomaly> = row.iter().copied().collect();
            match combos.iter_mut().find(|(k, _)| *k == key) {
                Some((_, targets)) => {
                    targets.insert(t.target);
                }
                None => combos.push((key, BTreeSet::from([t.target]))),
            }
        }
    }
    let timelines = combos
        .iter()
        .map(|(k, _)| {
            let active: Vec<Anomaly> = k.iter().copied().collect();
            anomaly_timeline(aug, &active, &opts.params, &opts.sim)
        })
        .collect::<Result<Vec<_>>>()?;
    for (tl, (_, targets)) in timelines.iter().zip(&combos) {
        let c = SimConfig { categories: Some(targets.iter().copied().collect()), ..opts.sim.clone() };
        Simulator::new(aug, bank, tl, &c)?;
    }

    let n_runs = opts.n_runs;
    let jobs = combos.len() * n_runs;
    let hits: Vec<Result<[bool; 4]>> = parallel_map(jobs, |j| {
        let (ci, i) = (j / n_runs, j % n_runs);
        let targets = &combos[ci].1;
        let cfg = SimConfig {
            seed: run_seed(opts.base_seed, STREAM_CAMPAIGN, i as u64),
            noise_on: true,
            categories: Some(targets.iter().copied().collect()),
            ..opts.sim.clone()
        };
        let mut sim = Simulator::new(aug, bank, &timelines[ci], &cfg)?;
        let mut dets: Vec<(Category, f64, CrossingDetector)> = targets
            .iter()
            .map(|c| (*c, opts.params.onset(Anomaly::of(*c)), CrossingDetector::new(thresholds.eta(*c), thresholds.debounce)))
            .collect();
        sim.run(|s| {
            let mut done = true;
            for (cat, onset, det) in dets.iter_mut() {
                if let Some(b) = s.blocks.iter().find(|b| b.category == *cat) {
                    if s.t >= *onset - 1e-9 {
                        det.push(s.t, b.norm);
                    }
                }
                done &= det.first_crossing().is_some();
            }
            if done {
                ControlFlow::Break(())
            } else {
                ControlFlow::Continue(())
            }
        });
        let mut out = [false; 4];
        for (c, _, d) in &dets {
            out[c.index()] = d.first_crossing().is_some();
        }
        Ok(out)
    });
    let hits = hits.into_iter().collect::<Result<Vec<_>>>()?;

    Ok(tables
        .iter()
        .map(|t| TprTable {
            table: t.target,
            rows: t
                .rows
                .iter()
                .map(|row| {
                    let key: BTreeSet<Anomaly> = row.iter().copied().collect();
                    let ci = combos.iter().position(|(k, _)| *k == key).expect("combo registered");
                    let tp = hits[ci * n_runs..(ci + 1) * n_runs].iter().filter(|h| h[t.target.index()]).count();
                    TprRow { combo: combo_label(row), tp, fn_: n_runs - tp, tpr: tp as f64 / n_runs as f64 }
                })
                .collect(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{design_bank, DesignOptions};
    use crate::preset;
    use crate::sim::{simulate, RecordLevel};
    use crate::threat::{Channel, SignalGenerator};

    fn setup() -> (AugmentedModel, DetectorBank) {
        let aug = preset::augmented();
        let opts = DesignOptions { fixed_aa: Some(preset::actuator_design()), ..Default::default() };
        let bank = design_bank(&aug, &preset::d_ac(), &opts).unwrap();
        (aug, bank)
    }

    fn fast() -> SimConfig {
        SimConfig { dt: 0.01, t_end: Some(5.0), seed: 7, record: RecordLevel::Norms, ..SimConfig::default() }
    }

    #[test]
    fn seeds_are_distinct_across_streams() {
        let mut s = BTreeSet::new();
        for stream in 1..4 {
            for i in 0..200 {
                s.insert(run_seed(42, stream, i));
            }
        }
        assert_eq!(s.len(), 600);
    }

    #[test]
    fn parallel_map_keeps_order() {
        assert_eq!(parallel_map(50, |i| i * i), (0..50).map(|i| i * i).collect::<Vec<_>>());
    }

    #[test]
    fn calibration_is_deterministic_and_linear_in_margin() {
        let (aug, bank) = setup();
        let a = calibrate_threshold(&aug, &bank, &fast(), 3, 1.1).unwrap();
        let b = calibrate_threshold(&aug, &bank, &fast(), 3, 1.1).unwrap();
        assert_eq!(a, b);
        let c = calibrate_threshold(&aug, &bank, &fast(), 3, 2.2).unwrap();
        for cat in Category::ALL {
            assert!(a.eta(cat) > 0.0);
            assert!((c.eta(cat) - 2.0 * a.eta(cat)).abs() <= 1e-12 * c.eta(cat));
        }
        assert!(calibrate_threshold(&aug, &bank, &fast(), 0, 1.1).is_err());
        assert!(calibrate_threshold(&aug, &bank, &fast(), 1, 0.5).is_err());
    }

    #[test]
    fn attack_residuals_see_no_noise() {
        let (aug, bank) = setup();
        let th = calibrate_threshold(&aug, &bank, &fast(), 2, 1.1).unwrap();
        assert!(th.degenerate.aa && th.degenerate.sa);
        assert!(!th.degenerate.af && !th.degenerate.sf);
        assert_eq!(th.eta.aa, 1.1 * THRESHOLD_FLOOR);
    }

    #[test]
    fn noise_off_single_run_is_degenerate() {
        let (aug, bank) = setup();
        let cfg = SimConfig { noise_on: false, ..fast() };
        let peaks = peak_norms(&aug, &bank, &ScenarioTimeline::new("h", 5.0), &cfg).unwrap();
        assert!(peaks.iter().all(|p| *p == 0.0));
    }

    #[test]
    fn crossing_detector_debounces() {
        let mut d = CrossingDetector::new(1.0, 3);
        let seq = [0.0, 2.0, 2.0, 0.5, 2.0, 2.0, 2.0, 2.0];
        let mut got = None;
        for (k, v) in seq.iter().enumerate() {
            got = d.push(k as f64, *v);
        }
        assert_eq!(got, Some(4.0));
        let mut d = CrossingDetector::new(1.0, 1);
        assert_eq!(d.push(0.0, 1.0), None);
        assert_eq!(d.push(1.0, 1.0 + 1e-12), Some(1.0));
    }

    #[test]
    fn zero_residuals_detect_nothing() {
        let (aug, bank) = setup();
        let cfg = SimConfig { noise_on: false, ..fast() };
        let tr = simulate(&aug, &bank, &ScenarioTimeline::new("h", 5.0), &cfg).unwrap();
        let r = detect(&tr, &ThresholdSet::fixed([1e-9; 4]).unwrap(), 1);
        assert!(r.verdict.is_empty());
        assert!(Category::ALL.iter().all(|c| r.categories.get(*c).is_some()));
    }

    #[test]
    fn fault_detection_times_follow_onsets() {
        let (aug, bank) = setup();
        let cfg = SimConfig { noise_on: false, t_end: Some(12.0), ..fast() };
        let tl = ScenarioTimeline::new("f", 12.0)
            .with(SignalGenerator::step(Channel::F1, 5.0, vec![40.0]).unwrap())
            .with(SignalGenerator::step(Channel::F2, 10.0, vec![20.0]).unwrap());
        let tr = simulate(&aug, &bank, &tl, &cfg).unwrap();
        let r = detect(&tr, &ThresholdSet::fixed([1e-3; 4]).unwrap(), 1);
        assert_eq!(r.verdict, vec![Category::AF, Category::SF]);
        assert!(r.first_crossing(Category::AF).unwrap() >= 5.0);
        assert!(r.first_crossing(Category::SF).unwrap() >= 10.0);
    }

    #[test]
    fn covert_gap_small_at_received_output_only() {
        let (aug, bank) = setup();
        let cfg = SimConfig { noise_on: false, t_end: Some(15.0), ..fast() };
        let p = AnomalyParams::default();
        let tl = anomaly_timeline(&aug, &[Anomaly::AA, Anomaly::SA], &p, &cfg).unwrap();
        assert!(covertness_gap(&aug, &bank, &tl, &cfg).unwrap() < 1e-9);
        assert!(output_gap(&aug, &bank, &tl, &cfg, OutputSide::Plant).unwrap() > 0.5);
        assert_eq!(covertness_gap(&aug, &bank, &ScenarioTimeline::new("h", 15.0), &cfg).unwrap(), 0.0);
    }

    #[test]
    fn standard_grid_shape() {
        let t = standard_tables();
        assert_eq!(t.len(), 4);
        assert!(t.iter().all(|s| s.rows.len() == 8));
        assert_eq!(combo_label(&t[1].rows[7]), "SA & AA & AF & SF");
        assert_eq!(combo_label(&t[2].rows[6]), "AF & SA & SF");
        let distinct: BTreeSet<BTreeSet<Anomaly>> =
            t.iter().flat_map(|s| s.rows.iter().map(|r| r.iter().copied().collect())).collect();
        assert_eq!(distinct.len(), 15);
    }

    #[test]
    fn campaign_rejects_inactive_target() {
        let (aug, bank) = setup();
        let tables = [TableSpec { target: Category::AA, rows: vec![vec![Anomaly::AF]] }];
        let opts = CampaignOptions { n_runs: 1, base_seed: 0, params: AnomalyParams::default(), sim: fast() };
        let th = ThresholdSet::fixed([1.0; 4]).unwrap();
        assert!(tpr_campaign(&aug, &bank, &th, &tables, &opts).is_err());
    }

    #[test]
    fn single_run_campaign_gives_binary_rates() {
        let (aug, bank) = setup();
        let sim = SimConfig { t_end: Some(12.0), ..fast() };
        let th = calibrate_threshold(&aug, &bank, &sim, 3, DEFAULT_MARGIN).unwrap();
        let tables = [TableSpec { target: Category::AF, rows: vec![vec![Anomaly::AF], vec![Anomaly::AF, Anomaly::SF]] }];
        let opts = CampaignOptions { n_runs: 1, base_seed: 3, params: AnomalyParams::default(), sim };
        let out = tpr_campaign(&aug, &bank, &th, &tables, &opts).unwrap();
        for r in &out[0].rows {
            assert!(r.tpr == 0.0 || r.tpr == 1.0);
            assert_eq!(r.tp + r.fn_, 1);
        }
        let json = serde_json::to_value(&out[0]).unwrap();
        assert_eq!(json["table"], "AF");
        assert!(json["rows"][0].get("fn").is_some());
    }
}
