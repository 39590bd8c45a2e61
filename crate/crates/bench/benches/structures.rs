use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use omm_bench::{line_points, uniform_square};
use omm_core::hst::{HstTree, OnlineHst, Variant};
use omm_core::hst_matching::{HeavyPathInward, Inward, TreeMatcher};
use omm_core::l2::L2Embedding;
use omm_core::light_matching::{LightMatching, TreeStrategy};
use omm_core::line_matching::LineMatching;
use omm_core::nets::PointStream;
use omm_core::oracles::mwpm_bruteforce;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

fn tree_matchers(c: &mut Criterion) {
    let mut g = c.benchmark_group("tree_matchers");
    for e in [10u32, 13] {
        let n = 1usize << e;
        let tree = HstTree::random(n, &mut ChaCha8Rng::seed_from_u64(e as u64));
        let order: Vec<u32> = (0..n as u32).rev().collect();
        g.bench_with_input(BenchmarkId::new("inward", n), &n, |b, _| {
            b.iter(|| {
                let mut m = Inward::new(&tree);
                for &x in &order {
                    m.insert(&tree, x);
                }
                black_box(m.matching().len())
            })
        });
        g.bench_with_input(BenchmarkId::new("heavy_path", n), &n, |b, _| {
            b.iter(|| {
                let mut m = HeavyPathInward::new(&tree);
                for &x in &order {
                    m.insert(&tree, x);
                }
                black_box(m.matching().len())
            })
        });
    }
    g.finish();
}

fn light(c: &mut Criterion) {
    let mut g = c.benchmark_group("light_matching");
    g.sample_size(10);
    for n in [1usize << 10, 1 << 12] {
        let pts = line_points(n, 3);
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| {
                let mut m = LightMatching::new(TreeStrategy::Greedy);
                for x in 0..n as u32 {
                    m.insert(&pts, x);
                }
                black_box(m.tree_weight())
            })
        });
    }
    g.finish();
}

fn line_matching(c: &mut Criterion) {
    let mut g = c.benchmark_group("line_matching_insert");
    for n in [1usize << 10, 1 << 14] {
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, &n| {
            b.iter(|| {
                let mut lm = LineMatching::new();
                let mut root = lm.create(0);
                for i in 1..n as u32 {
                    let pos = (i as usize * 7919) % (lm.len(root) + 1);
                    root = lm.insert_point(Some(root), pos, i).unwrap();
                }
                black_box(lm.modifications())
            })
        });
    }
    g.finish();
}

fn embeddings(c: &mut Criterion) {
    let mut g = c.benchmark_group("embeddings");
    g.sample_size(10);
    let o = uniform_square(256, 5);
    g.bench_function("online_tree_256", |b| b.iter(|| black_box(OnlineHst::embed(&o, Variant::Doubling, 1, 0).tree.len())));
    let small = uniform_square(48, 6);
    g.bench_function("euclidean_48_budget_16", |b| {
        b.iter(|| black_box(L2Embedding::new(PointStream::new(small.clone()), 1, 16).unwrap().vectors().len()))
    });
    g.finish();
}

fn oracle(c: &mut Criterion) {
    let o = uniform_square(16, 7);
    let idx: Vec<usize> = (0..16).collect();
    c.bench_function("mwpm_bruteforce_16", |b| b.iter(|| black_box(mwpm_bruteforce(&o, &idx).unwrap().cost)));
}

criterion_group!(benches, tree_matchers, light, line_matching, embeddings, oracle);
criterion_main!(benches);
