use std::f64::consts::PI;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use qdyne::fisher::{grid_map, Axis, AxisSpec, GridBase, GridSpec};
use qdyne::simulate::{simulate_ensemble, CountModel, TraceConfig};
use qdyne::{CorrelationModel, EnvelopeKind, Execution, ProtocolTiming, ReadoutParams};

fn grid() -> GridSpec {
    let model = CorrelationModel::new(1.0, 2.0 * PI * 1e3, 100e-6, EnvelopeKind::PowerLawDiffusion).unwrap();
    let readout = ReadoutParams::new(0.04, 0.03).unwrap();
    let timing = ProtocolTiming::new(23e-6, 2e-6, 3600.0).unwrap();
    GridSpec {
        x: AxisSpec {
            axis: Axis::DiffusionTime,
            lo: 10e-6,
            hi: 1e-3,
            n: 16,
            log: true,
        },
        y: AxisSpec {
            axis: Axis::Delta,
            lo: 2.0 * PI * 10.0,
            hi: 2.0 * PI * 1e4,
            n: 16,
            log: true,
        },
        base: GridBase {
            model,
            readout_cs: readout,
            readout_qd: readout,
            timing_cs: timing,
            timing_qd: timing,
            fixed_delta_td: None,
        },
    }
}

fn traces() -> TraceConfig {
    TraceConfig {
        model: CorrelationModel::new(0.5, 2.0 * PI * 5e3, 100e-6, EnvelopeKind::Exponential).unwrap(),
        readout: ReadoutParams::new(1.0, 0.2).unwrap(),
        timing: ProtocolTiming::new(23e-6, 2e-6, 0.5).unwrap(),
        n_measurements: 20_000,
        seed: 1,
        count_model: CountModel::Poisson,
        t2: None,
        clamp_negative_mean: false,
    }
}

fn bench(c: &mut Criterion) {
    let spec = grid();
    let mut g = c.benchmark_group("ratio_grid_16x16");
    g.sample_size(10);
    for exec in [Execution::Sequential, Execution::Parallel] {
        g.bench_function(format!("{exec:?}"), |b| {
            b.iter(|| grid_map(black_box(&spec), exec).unwrap())
        });
    }
    g.finish();

    let config = traces();
    let mut g = c.benchmark_group("ensemble_16_traces");
    g.sample_size(10);
    for exec in [Execution::Sequential, Execution::Parallel] {
        g.bench_function(format!("{exec:?}"), |b| {
            b.iter(|| simulate_ensemble(black_box(&config), 16, exec))
        });
    }
    g.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
