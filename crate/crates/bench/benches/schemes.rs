use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ppsde_bench::fixture;
use ppsde_core::noise::step_size;
use ppsde_core::{
    integrate, NewtonSettings, Preset, SchemeConfig, SchemeKind, Stepper, TamingConfig,
};

const LEVEL: u32 = 10;

fn single_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("step");
    for preset in Preset::ALL {
        let (params, increments) = fixture(preset, LEVEL, 1);
        let h = step_size(1.0, LEVEL);
        for kind in [SchemeKind::Tem, SchemeKind::Bem, SchemeKind::Em] {
            let stepper = Stepper::with_step(
                &params,
                kind,
                h,
                &TamingConfig::default(),
                NewtonSettings::default(),
            )
            .unwrap();
            group.bench_with_input(
                BenchmarkId::new(kind.name(), preset.name()),
                &increments,
                |b, incs| {
                    let mut i = 0;
                    b.iter(|| {
                        i = (i + 1) % incs.len();
                        black_box(stepper.step(black_box(0.8), incs[i]))
                    })
                },
            );
        }
    }
    group.finish();
}

fn whole_path(c: &mut Criterion) {
    let mut group = c.benchmark_group("integrate_2^-10");
    for preset in Preset::ALL {
        let (params, increments) = fixture(preset, LEVEL, 2);
        for kind in [SchemeKind::Tem, SchemeKind::Bem] {
            let cfg = SchemeConfig::new(kind, 1.0, increments.len());
            group.bench_with_input(
                BenchmarkId::new(kind.name(), preset.name()),
                &increments,
                |b, incs| {
                    b.iter(|| black_box(integrate(&params, &cfg, incs).unwrap().states.len()))
                },
            );
        }
    }
    group.finish();
}

criterion_group!(benches, single_step, whole_path);
criterion_main!(benches);
