use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cafdi::config::{ConfigDocument, ResolvedModel};
use cafdi::design::{verify_conditions, ConditionReport};
use cafdi::eval::{calibrate_threshold, detect, standard_tables, tpr_campaign, CampaignOptions, ThresholdSet, TprTable};
use cafdi::numerics::{invariant_zeros, zero_direction, ZeroDirection};
use cafdi::scenario::SCENARIO_NAMES;
use cafdi::sim::simulate;
use cafdi::{DetectorBank, Error, RealMatrix};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

const EXIT_USAGE: u8 = 2;
const EXIT_INFEASIBLE: u8 = 3;
const EXIT_TRUNCATED: u8 = 4;

#[derive(Parser)]
#[command(name = "cafdi", version, about = "Design, simulate and evaluate attack/fault detector banks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Design the detector bank and check every condition.
    Design(Common),
    /// Simulate a scenario and report detections.
    Run(RunArgs),
    /// Calibrate thresholds from healthy noisy runs.
    Calibrate(CalibrateArgs),
    /// Monte Carlo true-positive-rate tables.
    Tpr(CalibrateArgs),
    /// Invariant zeros of the configured plant.
    Zeros(Common),
}

#[derive(Args)]
struct Common {
    /// Built-in model; used when no config is given.
    #[arg(long, default_value = cafdi::preset::NAME)]
    preset: String,
    /// JSON config document.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Frozen bank JSON, as written by `design`.
    #[arg(long)]
    bank: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; results go to stdout only when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long = "t-end")]
    t_end: Option<f64>,
    #[arg(long = "no-noise")]
    no_noise: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    /// One of zero-dynamics, covert, faults, simultaneous, degraded-c9.
    #[arg(long)]
    scenario: Option<String>,
    /// Thresholds JSON, as written by `calibrate`; calibrated on the fly when absent.
    #[arg(long)]
    thresholds: Option<PathBuf>,
    /// Calibration runs when no thresholds file is given.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    runs: Option<u64>,
}

#[derive(Args)]
struct CalibrateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    runs: Option<u64>,
    #[arg(long)]
    thresholds: Option<PathBuf>,
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::DesignInfeasible { .. } | Error::CovertnessInfeasible(_) | Error::AttackInfeasible(_) => EXIT_INFEASIBLE,
            _ => EXIT_USAGE,
        };
        Failure { code, message: e.to_string() }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure { code: EXIT_USAGE, message: message.into() }
}

fn io_failure(path: &Path, e: io::Error) -> Failure {
    usage(format!("{}: {e}", path.display()))
}

type Outcome = Result<u8, Failure>;

struct Context {
    doc: ConfigDocument,
    model: ResolvedModel,
    out: Option<PathBuf>,
}

impl Context {
    fn load(c: &Common, seed_into_design: bool) -> Result<Self, Failure> {
        let mut doc = match &c.config {
            Some(p) => ConfigDocument::load(p)?,
            None => ConfigDocument::preset(&c.preset)?,
        };
        if let Some(p) = &c.bank {
            let text = fs::read_to_string(p).map_err(|e| io_failure(p, e))?;
            doc.bank = Some(serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", p.display())))?);
        }
        if let Some(s) = c.seed {
            if seed_into_design {
                doc.design.seed = s;
            } else {
                doc.sim.seed = s;
            }
        }
        if let Some(dt) = c.dt {
            doc.sim.dt = dt;
        }
        if let Some(t) = c.t_end {
            doc.sim.t_end = Some(t);
        }
        if c.no_noise {
            doc.sim.noise_on = false;
        }
        let model = doc.resolve_model()?;
        if let Some(dir) = &c.out {
            fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
        }
        Ok(Self { doc, model, out: c.out.clone() })
    }

    fn bank(&self) -> Result<DetectorBank, Failure> {
        Ok(self.doc.resolve_bank(&self.model)?)
    }

    /// Writes `bytes` to `<out>/<name>` when an output directory is set.
    fn write(&self, name: &str, bytes: &[u8]) -> Result<(), Failure> {
        if let Some(dir) = &self.out {
            let p = dir.join(name);
            fs::write(&p, bytes).map_err(|e| io_failure(&p, e))?;
        }
        Ok(())
    }

    fn thresholds(&self, bank: &DetectorBank, file: Option<&PathBuf>, runs: Option<u64>) -> Result<ThresholdSet, Failure> {
        match file {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| io_failure(p, e))?;
                Ok(serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", p.display())))?)
            }
            None => {
                let n = runs.map_or(self.doc.eval.n_runs, |r| r as usize);
                let cfg = cafdi::SimConfig { noise_on: true, ..self.doc.sim.clone() };
                let t = calibrate_threshold(&self.model.aug, bank, &cfg, n, self.doc.eval.margin)?;
                Ok(t.with_debounce(self.doc.eval.debounce))
            }
        }
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn print(text: &str) {
    let mut out = io::stdout().lock();
    let _ = out.write_all(text.as_bytes());
}

#[derive(Serialize)]
struct DesignOutput<'a> {
    all_passed: bool,
    failing: Vec<&'a str>,
    conditions: &'a ConditionReport,
}

fn cmd_design(c: &Common) -> Outcome {
    let ctx = Context::load(c, true)?;
    let bank = ctx.bank()?;
    let report = verify_conditions(&bank, &ctx.model.aug);
    let failing: Vec<&str> = report.failing().iter().map(|e| e.id.as_str()).collect();
    let out = DesignOutput { all_passed: report.all_passed(), failing: failing.clone(), conditions: &report };
    let json = to_json(&out);
    ctx.write("bank.json", to_json(&bank).as_bytes())?;
    ctx.write("conditions.json", json.as_bytes())?;
    print(&json);
    if report.all_passed() {
        Ok(0)
    } else {
        eprintln!("conditions failed: {}", failing.join(", "));
        Ok(EXIT_INFEASIBLE)
    }
}

fn cmd_run(a: &RunArgs) -> Outcome {
    let ctx = Context::load(&a.common, false)?;
    let spec = match (&a.scenario, &ctx.doc.scenario) {
        (Some(name), _) => cafdi::scenario::named_scenario(name).map_err(|e| usage(e.to_string()))?,
        (None, Some(s)) => s.resolve().map_err(|e| usage(e.to_string()))?,
        (None, None) => return Err(usage(format!("no scenario given; valid names: {}", SCENARIO_NAMES.join(", ")))),
    };
    let bank = ctx.bank()?;
    let thresholds = ctx.thresholds(&bank, a.thresholds.as_ref(), a.runs)?;
    let setup = spec.build(&ctx.model.aug, &bank, &ctx.doc.sim)?;
    let trace = simulate(&ctx.model.aug, &setup.bank, &setup.timeline, &ctx.doc.sim)?;
    let report = detect(&trace, &thresholds, thresholds.debounce);
    if ctx.out.is_some() {
        let mut csv = Vec::new();
        trace.write_csv(&mut csv, Some(&thresholds.eta.to_array()))?;
        ctx.write("trace.csv", &csv)?;
        ctx.write("thresholds.json", to_json(&thresholds).as_bytes())?;
    }
    let json = to_json(&report);
    ctx.write("report.json", json.as_bytes())?;
    print(&json);
    if trace.truncated {
        eprintln!("simulation diverged at t = {:.3} s; trace truncated", trace.t.last().copied().unwrap_or(0.0));
        return Ok(EXIT_TRUNCATED);
    }
    Ok(0)
}

fn cmd_calibrate(a: &CalibrateArgs) -> Outcome {
    let ctx = Context::load(&a.common, false)?;
    let bank = ctx.bank()?;
    let t = ctx.thresholds(&bank, None, a.runs)?;
    let json = to_json(&t);
    ctx.write("thresholds.json", json.as_bytes())?;
    print(&json);
    Ok(0)
}

fn tables_csv(tables: &[TprTable]) -> Result<Vec<u8>, Failure> {
    let mut out = Vec::new();
    for (i, t) in tables.iter().enumerate() {
        let mut buf = Vec::new();
        t.write_csv(&mut buf)?;
        let text = String::from_utf8(buf).expect("ascii csv");
        let body = if i == 0 { text.as_str() } else { text.split_once('\n').map_or("", |(_, rest)| rest) };
        out.extend_from_slice(body.as_bytes());
    }
    Ok(out)
}

fn cmd_tpr(a: &CalibrateArgs) -> Outcome {
    let ctx = Context::load(&a.common, false)?;
    let bank = ctx.bank()?;
    let thresholds = ctx.thresholds(&bank, a.thresholds.as_ref(), None)?;
    let n_runs = a.runs.map_or(ctx.doc.eval.n_runs, |r| r as usize);
    let opts = CampaignOptions {
        n_runs,
        base_seed: ctx.doc.sim.seed,
        params: ctx.doc.eval.anomalies.clone(),
        sim: cafdi::SimConfig { noise_on: true, ..ctx.doc.sim.clone() },
    };
    let tables = tpr_campaign(&ctx.model.aug, &bank, &thresholds, &standard_tables(), &opts)?;
    ctx.write("tpr.csv", &tables_csv(&tables)?)?;
    let json = to_json(&tables);
    ctx.write("tpr.json", json.as_bytes())?;
    print(&json);
    Ok(0)
}

#[derive(Serialize)]
struct ZerosOutput {
    zeros: Vec<[f64; 2]>,
    normal_rank: usize,
    nonminimum_phase: Vec<ZeroDirection>,
}

fn cmd_zeros(c: &Common) -> Outcome {
    let ctx = Context::load(c, false)?;
    let p = &ctx.model.aug.plant;
    let b = p.b_a_s();
    let d = RealMatrix::zeros(p.c_s.nrows(), b.ncols());
    let zs = invariant_zeros(&p.a_s, &b, &p.c_s, &d)?;
    let nonminimum_phase =
        zs.real_nonminimum_phase().into_iter().map(|z| zero_direction(&p.a_s, &b, &p.c_s, &d, z)).collect::<Result<Vec<_>, _>>()?;
    let out = ZerosOutput { zeros: zs.zeros.iter().map(|z| [z.re, z.im]).collect(), normal_rank: zs.normal_rank, nonminimum_phase };
    let json = to_json(&out);
    ctx.write("zeros.json", json.as_bytes())?;
    print(&json);
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Design(c) => cmd_design(c),
        Command::Run(a) => cmd_run(a),
        Command::Calibrate(a) => cmd_calibrate(a),
        Command::Tpr(a) => cmd_tpr(a),
        Command::Zeros(c) => cmd_zeros(c),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
