use std::hint::black_box;

use cafdi::design::{design_bank, verify_conditions};
use cafdi::eval::calibrate_threshold;
use cafdi::scenario::named_scenario;
use cafdi::sim::simulate;
use cafdi::{preset, DesignOptions};
use cafdi_bench::fixture;
use criterion::{criterion_group, criterion_main, Criterion};

fn design(c: &mut Criterion) {
    let aug = preset::augmented();
    let d_ac = preset::d_ac();
    let opts = DesignOptions::default();
    c.bench_function("design_bank", |b| b.iter(|| design_bank(black_box(&aug), &d_ac, &opts).unwrap()));
    let bank = design_bank(&aug, &d_ac, &opts).unwrap();
    c.bench_function("verify_conditions", |b| b.iter(|| verify_conditions(black_box(&bank), &aug)));
}

fn simulation(c: &mut Criterion) {
    let f = fixture();
    let mut g = c.benchmark_group("simulate");
    g.sample_size(10);
    for name in ["covert", "simultaneous"] {
        let setup = named_scenario(name).unwrap().build(&f.aug, &f.bank, &f.cfg).unwrap();
        g.bench_function(name, |b| b.iter(|| simulate(&f.aug, &setup.bank, &setup.timeline, &f.cfg).unwrap()));
    }
    g.finish();
}

fn calibration(c: &mut Criterion) {
    let f = fixture();
    let mut g = c.benchmark_group("calibrate");
    g.sample_size(10);
    g.bench_function("10_runs", |b| b.iter(|| calibrate_threshold(&f.aug, &f.bank, &f.cfg, 10, 1.1).unwrap()));
    g.finish();
}

criterion_group!(benches, design, simulation, calibration);
criterion_main!(benches);
