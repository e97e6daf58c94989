use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use d2dcache::allocation::allocate_channels;
use d2dcache::bounds::{expected_delay_bound, DelayBoundTable, LinkBoundParams};
use d2dcache::caching::place_all;
use d2dcache::delivery::FastEvaluator;
use d2dcache::exact::{solve_exhaustive, SolveLimits};
use d2dcache_bench::{preset, tiny};
use std::hint::black_box;

fn bounds(c: &mut Criterion) {
    let mut g = c.benchmark_group("bounds");
    for theta in [1e-2, 1.0, 100.0] {
        let p = LinkBoundParams::interference_free(theta, 0.01).unwrap();
        g.bench_function(format!("expected_delay/theta={theta}"), |b| {
            b.iter(|| expected_delay_bound(black_box(&p)).unwrap())
        });
    }
    let sc = preset(10, 10, 1);
    g.sample_size(10);
    g.bench_function("table/precompute_u10", |b| {
        b.iter_batched(
            || DelayBoundTable::new(&sc.instance).unwrap(),
            |t| t.precompute_all().unwrap(),
            BatchSize::LargeInput,
        )
    });
    g.finish();
}

fn evaluator(c: &mut Criterion) {
    let sc = preset(10, 50, 2);
    let alloc = allocate_channels(&sc.instance).unwrap();
    let placement = place_all(&sc.instance, &sc.popularity, &alloc.channel_of, &sc.table).unwrap();
    let mut eval = FastEvaluator::new(
        &sc.instance,
        &sc.table,
        &sc.popularity,
        &placement.holder,
        &alloc.channel_of,
    )
    .unwrap();
    c.bench_function("evaluator/g_all_u10_f50", |b| {
        b.iter(|| {
            let mut s = 0.0;
            for u in 0..sc.instance.num_ue {
                for f in 0..sc.instance.num_files() {
                    s += eval.g(u, f).unwrap();
                }
            }
            s
        })
    });
    let node = sc.instance.node_count() - 1;
    c.bench_function("evaluator/set_holder", |b| {
        b.iter(|| {
            eval.set_holder(0, Some(node));
            eval.set_holder(0, placement.holder[0]);
        })
    });
}

fn heuristics(c: &mut Criterion) {
    let mut g = c.benchmark_group("heuristic");
    g.sample_size(10);
    let sc = preset(10, 50, 3);
    g.bench_function("allocate_u10", |b| {
        b.iter(|| allocate_channels(black_box(&sc.instance)).unwrap())
    });
    let alloc = allocate_channels(&sc.instance).unwrap();
    g.bench_function("place_all_u10_f50", |b| {
        b.iter(|| place_all(&sc.instance, &sc.popularity, &alloc.channel_of, &sc.table).unwrap())
    });
    g.finish();
}

fn exact(c: &mut Criterion) {
    let sc = tiny(4);
    let mut g = c.benchmark_group("exact");
    g.sample_size(10);
    g.bench_function("exhaustive_u3_f4", |b| {
        b.iter(|| solve_exhaustive(&sc.instance, &sc.popularity, &sc.table, &SolveLimits::default()).unwrap())
    });
    g.finish();
}

criterion_group!(benches, bounds, evaluator, heuristics, exact);
criterion_main!(benches);
