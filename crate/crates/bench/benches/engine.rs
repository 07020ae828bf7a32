use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use std::hint::black_box;
use topeq_core::{check_all, expand_d_power, ConjugacyEngine, Scenario, TruncationPolicy, Variant, Vector};

fn engine(v: Variant) -> (Scenario, ConjugacyEngine) {
    let sc = Scenario::preset(v).unwrap();
    let e = ConjugacyEngine::new(&sc, TruncationPolicy::default()).unwrap();
    (sc, e)
}

fn conditions(c: &mut Criterion) {
    let sc = Scenario::preset(Variant::Ex189).unwrap();
    c.bench_function("check_all ex189 horizon 200", |b| {
        b.iter(|| check_all(black_box(&sc), 200))
    });
}

// fresh engines per batch so the orbit caches do not hide the work
fn maps(c: &mut Criterion) {
    let p = Vector::from_vec(vec![1.0, -2.0, 0.5]);
    c.bench_function("map_h ex188 k=4", |b| {
        b.iter_batched(
            || engine(Variant::Ex188).1,
            |e| e.map_h(4, &p).unwrap(),
            BatchSize::SmallInput,
        )
    });
    c.bench_function("map_g ex189 k=4", |b| {
        b.iter_batched(
            || engine(Variant::Ex189).1,
            |e| e.map_g(4, &p).unwrap(),
            BatchSize::SmallInput,
        )
    });
    c.bench_function("hessian_g c2_corollary k=4", |b| {
        b.iter_batched(
            || engine(Variant::C2Corollary).1,
            |e| e.hessian_g(4, &p).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

fn dif(c: &mut Criterion) {
    c.bench_function("expand_d_power s=6", |b| {
        b.iter(|| expand_d_power(black_box(6), 6).unwrap())
    });
}

criterion_group!(benches, conditions, maps, dif);
criterion_main!(benches);
