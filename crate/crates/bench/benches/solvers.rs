use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rfedit_bench::{edit_bench, random_spd};
use rfedit_core::baselines::midpoint_invert;
use rfedit_core::dna::{dna_invert, reconstruct};
use rfedit_core::math::{cholesky, RngStream};
use rfedit_core::mvg::{mvg_edit, EditConfig};
use rfedit_core::velocity::VelocityField;

fn bench_cholesky(c: &mut Criterion) {
    let a = random_spd(16, 3);
    c.bench_function("cholesky_d16", |b| {
        b.iter(|| cholesky(black_box(&a)).expect("spd input"))
    });
}

fn bench_field_eval(c: &mut Criterion) {
    let s = edit_bench(5);
    let z = s.image.clone();
    c.bench_function("field_eval_d8_k2", |b| {
        b.iter(|| {
            s.field
                .eval(black_box(&z), black_box(0.6), &s.src)
                .expect("eval runs")
        })
    });
}

fn bench_dna_invert(c: &mut Criterion) {
    let s = edit_bench(5);
    c.bench_function("dna_invert_t24", |b| {
        b.iter_batched(
            || RngStream::new(9),
            |mut rng| {
                dna_invert(black_box(&s.image), &s.field, &s.src, &s.sched, &mut rng)
                    .expect("inversion runs")
            },
            BatchSize::SmallInput,
        )
    });
}

fn bench_reconstruct(c: &mut Criterion) {
    let s = edit_bench(5);
    c.bench_function("reconstruct_offsets_t24", |b| {
        b.iter(|| {
            reconstruct(black_box(&s.trace), &s.field, &s.src, &s.sched, true)
                .expect("replay runs")
        })
    });
}

fn bench_midpoint_invert(c: &mut Criterion) {
    let s = edit_bench(5);
    c.bench_function("midpoint_invert_t24", |b| {
        b.iter(|| {
            midpoint_invert(black_box(&s.image), &s.field, &s.src, &s.sched)
                .expect("inversion runs")
        })
    });
}

fn bench_mvg_edit(c: &mut Criterion) {
    let s = edit_bench(5);
    let cfg = EditConfig {
        eta: s.eta,
        t_start: s.t_start,
        use_res_offset: true,
        use_mvg: true,
        src_cond: s.src.clone(),
        tgt_cond: s.tgt.clone(),
    };
    c.bench_function("mvg_edit_t24", |b| {
        b.iter(|| {
            mvg_edit(black_box(&s.trace), &s.image, &s.field, &cfg, &s.sched)
                .expect("guided edit runs")
        })
    });
}

criterion_group!(
    benches,
    bench_cholesky,
    bench_field_eval,
    bench_dna_invert,
    bench_reconstruct,
    bench_midpoint_invert,
    bench_mvg_edit
);
criterion_main!(benches);
