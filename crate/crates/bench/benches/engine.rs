use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use raise_core::carbon::record_activity;
use raise_core::play::{input_limit, play, PlayPolicy};
use raise_core::{
    brute_force_best, evaluate_layout, replay, summary_report, validate_graph, CarbonLedger,
    EmissionCatalog, FarmLayout,
};

use raise_bench::{content_dir, scenario, shipped_challenge, survey};

fn engine(c: &mut Criterion) {
    let doc = scenario("windfarm");
    let limit = input_limit(&doc);
    c.bench_function("play windfarm random", |b| {
        b.iter(|| play(&doc, black_box(17), "en", &PlayPolicy::Random(17), limit).unwrap())
    });
    let run = play(&doc, 17, "en", &PlayPolicy::Random(17), limit).unwrap();
    c.bench_function("replay windfarm", |b| {
        b.iter(|| replay(&doc, 17, black_box(&run.inputs)).unwrap())
    });
    c.bench_function("validate windfarm", |b| b.iter(|| validate_graph(black_box(&doc))));
}

fn windfarm(c: &mut Criterion) {
    let ch = shipped_challenge();
    let cells = ch.buildable_cells();
    let layout = FarmLayout::new(cells.iter().copied().take(3));
    c.bench_function("evaluate_layout 3 turbines", |b| {
        b.iter(|| evaluate_layout(&ch, black_box(&layout)).unwrap())
    });
    c.bench_function("brute_force_best 4x4", |b| b.iter(|| brute_force_best(black_box(&ch)).unwrap()));
}

fn carbon(c: &mut Criterion) {
    let bytes = std::fs::read(content_dir().join("carbon_catalog.json")).unwrap();
    let catalog = EmissionCatalog::from_json(&bytes).unwrap();
    let ids: Vec<String> = catalog.options().map(|(_, o)| o.option_id.clone()).collect();
    c.bench_function("ledger 1000 entries", |b| {
        b.iter(|| {
            let mut ledger = CarbonLedger::new();
            for i in 0..1000 {
                ledger = record_activity(&catalog, &ledger, &ids[i % ids.len()], i as f64 * 0.1).unwrap();
            }
            ledger.total()
        })
    });
}

fn analytics(c: &mut Criterion) {
    let (_, rs) = survey();
    c.bench_function("summary_report 1000 rows", |b| b.iter(|| summary_report(black_box(&rs)).unwrap()));
}

criterion_group!(benches, engine, windfarm, carbon, analytics);
criterion_main!(benches);
