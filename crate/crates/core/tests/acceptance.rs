//! One PASS/FAIL line per acceptance criterion; exits nonzero if any fails.

use omm_core::adversary::{
    arrival_order_weight, line_opt, no_recourse_sequences, recourse_one_sequence, run_adaptive, LaaksoGraph,
};
use omm_core::decomp::Decomposition;
use omm_core::hst::{HstTree, OnlineHst, TreeMetric, Variant};
use omm_core::hst_matching::{HeavyPathInward, Inward, TreeMatcher};
use omm_core::l2::{quadrature_sq_distance, single_sample_embed, L2Embedding};
use omm_core::light_matching::{LightMatching, TreeStrategy};
use omm_core::line_matching::LineMatching;
use omm_core::metric::{DistanceOracle, Metric, Mode, Payload, PointId};
use omm_core::nets::PointStream;
use omm_core::oracles::mwpm_bruteforce;
use omm_core::pipeline::{make_matcher, Algo, Capped, OnlineMatcher};
use omm_core::rng::splitmix64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::time::{Duration, Instant};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    let len = a.len().max(b.len());
    (0..len)
        .map(|t| {
            let v = a.get(t).copied().unwrap_or(0.0) - b.get(t).copied().unwrap_or(0.0);
            v * v
        })
        .sum()
}

fn random_points(seed: u64, n: usize, side: f64) -> DistanceOracle {
    let mut r = rng(seed);
    let pts: Vec<Vec<f64>> = (0..n).map(|_| vec![r.random_range(0.0..side), r.random_range(0.0..side)]).collect();
    DistanceOracle::from_points(2, &pts).unwrap()
}

fn p99(mut v: Vec<u32>) -> u32 {
    v.sort_unstable();
    v[v.len() * 99 / 100]
}

/// Random 2-HST with an even number of leaves (2 to 20) and a random arrival order.
fn small_tree(seed: u64) -> (HstTree, Vec<u32>) {
    let mut r = rng(seed);
    let leaves = 2 * r.random_range(1..=10usize);
    let tree = HstTree::random(leaves, &mut r);
    let mut order: Vec<u32> = (0..leaves as u32).collect();
    order.shuffle(&mut r);
    (tree, order)
}

/// Per even step: (algorithm tree cost, exact optimum).
fn tree_costs<M: TreeMatcher>(tree: &HstTree, order: &[u32], mut m: M) -> Vec<(f64, f64)> {
    let metric = DistanceOracle::from_metric(&TreeMetric(tree));
    let mut out = Vec::new();
    for (i, pair) in order.chunks(2).enumerate() {
        for &x in pair {
            m.insert(tree, x);
        }
        m.end_step();
        let active: Vec<usize> = order[..2 * i + 2].iter().map(|&x| x as usize).collect();
        let opt = mwpm_bruteforce(&metric, &active).unwrap().cost;
        out.push((m.tree_cost(tree), opt));
    }
    out
}

const TREES: u64 = 600;

fn inward_exact() -> Outcome {
    let bad: Vec<String> = (0..TREES)
        .into_par_iter()
        .filter_map(|s| {
            let (tree, order) = small_tree(s);
            let costs = tree_costs(&tree, &order, Inward::new(&tree));
            costs.iter().position(|(c, o)| c != o).map(|i| format!("tree {s} step {i}: {} vs {}", costs[i].0, costs[i].1))
        })
        .collect();
    outcome(bad.is_empty(), format!("{TREES} trees, mismatches {}{}", bad.len(), bad.first().map(|b| format!(" ({b})")).unwrap_or_default()))
}

fn hp_two_approx() -> Outcome {
    let results: Vec<(f64, Option<String>)> = (0..TREES)
        .into_par_iter()
        .map(|s| {
            let (tree, order) = small_tree(s);
            let costs = tree_costs(&tree, &order, HeavyPathInward::new(&tree));
            let worst = costs.iter().filter(|(_, o)| *o > 0.0).map(|(c, o)| c / o).fold(1.0, f64::max);
            let bad = costs.iter().position(|(c, o)| *c > 2.0 * o).map(|i| format!("tree {s} step {i}"));
            (worst, bad)
        })
        .collect();
    let worst = results.iter().map(|r| r.0).fold(1.0, f64::max);
    let bad: Vec<&String> = results.iter().filter_map(|r| r.1.as_ref()).collect();
    outcome(bad.is_empty(), format!("{TREES} trees, worst ratio {worst:.3}, violations {}", bad.len()))
}

struct RecourseSample {
    height: usize,
    max_deletions: u32,
    inward: u32,
    hp: u32,
    light: u32,
    line: u32,
}

fn recourse_sample(e: u32) -> RecourseSample {
    let n = 1usize << e;
    let mut r = rng(e as u64);
    let tree = HstTree::random(n, &mut r);
    let height = tree.height();
    let mut order: Vec<u32> = (0..n as u32).collect();
    order.shuffle(&mut r);
    let mut inw = Inward::new(&tree);
    let mut hp = HeavyPathInward::new(&tree);
    let (mut mi, mut mh, mut max_deletions) = (Vec::new(), Vec::new(), 0);
    for pair in order.chunks(2) {
        for &x in pair {
            inw.insert(&tree, x);
            hp.insert(&tree, x);
        }
        let a = inw.end_step();
        let b = hp.end_step();
        max_deletions = max_deletions.max(a.deletions);
        mi.push(a.deletions + a.additions);
        mh.push(b.deletions + b.additions);
    }

    let pts: Vec<f64> = (0..n).map(|_| r.random_range(0.0..1e6)).collect();
    let mut light = LightMatching::new(TreeStrategy::Greedy);
    let mut ml = Vec::new();
    for x in 0..n as u32 {
        light.insert(&pts, x);
        if x % 2 == 1 {
            let d = light.end_step();
            ml.push(d.deletions + d.additions);
        }
    }

    let mut lm = LineMatching::new();
    let mut root = lm.create(0);
    for i in 1..n as u32 {
        let len = lm.len(root);
        root = lm.insert_point(Some(root), r.random_range(0..=len), i).unwrap();
    }
    let mut mods = Vec::new();
    for _ in 0..20_000 {
        let before = lm.modifications();
        let len = lm.len(root);
        if r.random::<bool>() {
            root = lm.insert_point(Some(root), r.random_range(0..=len), 0).unwrap();
        } else {
            let top = lm.root(root);
            let h = lm.select(top, r.random_range(1..=len));
            let keep = lm.select(top, if lm.rank(h) == 1 { 2 } else { 1 });
            lm.remove_point(h).unwrap();
            root = lm.root(keep);
        }
        mods.push((lm.modifications() - before) as u32);
    }
    RecourseSample { height, max_deletions, inward: p99(mi), hp: p99(mh), light: p99(ml), line: p99(mods) }
}

fn recourse_scaling() -> Outcome {
    let (small, large) = rayon::join(|| recourse_sample(12), || recourse_sample(16));
    let limit = (16.0f64 / 12.0).powi(3) * 1.1;
    let mut pass = true;
    let mut parts = Vec::new();
    for s in [&small, &large] {
        let ok = s.max_deletions as usize <= 2 * s.height;
        pass &= ok;
        parts.push(format!("deletions {} <= 2*{}", s.max_deletions, s.height));
    }
    for (name, a, b) in [
        ("inward", small.inward, large.inward),
        ("hp", small.hp, large.hp),
        ("light", small.light, large.light),
        ("line", small.line, large.line),
    ] {
        let g = b as f64 / a.max(1) as f64;
        pass &= g <= limit;
        parts.push(format!("{name} p99 {a}->{b}"));
    }
    outcome(pass, format!("{}; growth limit {limit:.2}", parts.join(", ")))
}

fn line_invariants() -> Outcome {
    const OPS: usize = 100_000;
    const MAX_LIVE: usize = 160;
    let mut r = rng(4);
    let mut lm = LineMatching::new();
    let mut sets: Vec<u32> = Vec::new();
    let mut live = 0usize;
    let mut tag = 0u32;
    let mut checks = 0usize;
    for step in 0..OPS {
        let op = r.random_range(0..6u32);
        let touched: Vec<u32> = match op {
            0 if live < MAX_LIVE || sets.is_empty() => {
                tag += 1;
                let h = lm.create(tag);
                sets.push(h);
                live += 1;
                vec![h]
            }
            1 => {
                if let Some(i) = sets.iter().position(|&h| lm.len(h) == 1) {
                    lm.delete(sets.swap_remove(i)).unwrap();
                    live -= 1;
                }
                vec![]
            }
            2 if sets.len() >= 2 => {
                let i = r.random_range(0..sets.len());
                let a = sets.swap_remove(i);
                let j = r.random_range(0..sets.len());
                let b = sets[j];
                let h = lm.merge(a, b).unwrap();
                sets[j] = h;
                vec![h]
            }
            3 if !sets.is_empty() => {
                let i = r.random_range(0..sets.len());
                let m = lm.len(sets[i]);
                if m < 2 {
                    vec![]
                } else {
                    let (a, b) = lm.split(sets[i], r.random_range(1..m)).unwrap();
                    sets[i] = a;
                    sets.push(b);
                    vec![a, b]
                }
            }
            4 if !sets.is_empty() && live < MAX_LIVE => {
                let i = r.random_range(0..sets.len());
                tag += 1;
                let m = lm.len(sets[i]);
                let h = lm.insert_point(Some(sets[i]), r.random_range(0..=m), tag).unwrap();
                sets[i] = h;
                live += 1;
                vec![h]
            }
            5 if !sets.is_empty() => {
                let i = r.random_range(0..sets.len());
                let m = lm.len(sets[i]);
                if m < 2 {
                    vec![]
                } else {
                    let top = lm.root(sets[i]);
                    let victim = lm.select(top, r.random_range(1..=m));
                    let rest = lm.remove_point(victim).unwrap().expect("set keeps a point");
                    sets[i] = rest;
                    live -= 1;
                    vec![rest]
                }
            }
            _ => vec![],
        };
        for h in touched {
            if let Err(v) = lm.check(h) {
                return outcome(false, format!("op {step}: {v}"));
            }
            checks += 1;
        }
    }
    let sizes: usize = sets.iter().map(|&h| lm.len(h)).sum();
    let all_ok = sets.iter().all(|&h| lm.check(h).is_ok());
    outcome(all_ok && sizes == live, format!("{OPS} ops, {checks} full checks, {} sets at the end", sets.len()))
}

fn domination() -> Outcome {
    let cases: Vec<(u64, Variant)> =
        (0..60).flat_map(|s| [(s, Variant::Doubling), (s, Variant::Euclidean)]).collect();
    let bad: Vec<String> = cases
        .par_iter()
        .filter_map(|&(s, variant)| {
            let o = if s % 4 == 0 && variant == Variant::Doubling {
                LaaksoGraph::build(5, &mut rng(s)).oracle()
            } else if s % 4 == 1 {
                let mut r = rng(s);
                let xs: Vec<Vec<f64>> = (0..60).map(|_| vec![r.random_range(0.0..1e3)]).collect();
                DistanceOracle::from_points(1, &xs).unwrap()
            } else {
                random_points(s, 60, 100.0 * (1 + s % 5) as f64)
            };
            let h = OnlineHst::embed(&o, variant, s, 0);
            for a in 0..o.len() {
                for b in 0..a {
                    let du = h.tree.hst_distance(PointId::from_idx(a), PointId::from_idx(b)).unwrap();
                    if du < o.dist(a, b) {
                        return Some(format!("{variant:?} seed {s} pair ({a},{b})"));
                    }
                }
            }
            None
        })
        .collect();
    outcome(bad.is_empty(), format!("{} embeddings, contractions {}", cases.len(), bad.len()))
}

fn lipschitz_sparsity() -> Outcome {
    let bad: Vec<String> = (0..100u64)
        .into_par_iter()
        .filter_map(|seed| {
            let s = PointStream::new(random_points(1000 + seed, 50, 64.0));
            let f = single_sample_embed(&s, seed, 0);
            for (x, fx) in f.iter().enumerate() {
                if fx.len() > 3 * (x + 1) {
                    return Some(format!("seed {seed} point {x}: {} nonzeros", fx.len()));
                }
                for y in 0..x {
                    let d = s.oracle.dist(x, y);
                    let coord = |v: &[(i32, f64)], i: i32| v.iter().find(|p| p.0 == i).map_or(0.0, |p| p.1);
                    for &(i, _) in fx.iter().chain(f[y].iter()) {
                        let (a, b) = (coord(fx, i), coord(&f[y], i));
                        // Equality cases (y a center) round to within a few ulps.
                        if (a - b).abs() > d + 4.0 * f64::EPSILON * (a.abs() + b.abs() + d) {
                            return Some(format!("seed {seed} pair ({x},{y}) scale {i}"));
                        }
                    }
                }
            }
            None
        })
        .collect();
    outcome(bad.is_empty(), format!("100 seeds x 50 points, violations {}{}", bad.len(), bad.first().map(|b| format!(" ({b})")).unwrap_or_default()))
}

fn wilson(hits: u64, n: u64) -> (f64, f64) {
    let (p, n, z) = (hits as f64 / n as f64, n as f64, 1.959964f64);
    let c = (p + z * z / (2.0 * n)) / (1.0 + z * z / n);
    let w = z / (1.0 + z * z / n) * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt();
    (c - w, c + w)
}

fn padding_scaling() -> Outcome {
    const TRIALS: u64 = 20_000;
    const SCALE: i32 = 7;
    let pts: Vec<Vec<f64>> = (0..1024).map(|k| vec![(k % 32) as f64, (k / 32) as f64]).collect();
    let s = PointStream::new(DistanceOracle::from_points(2, &pts).unwrap());
    // Radii 2^SCALE / 64, /32, /16, /8.
    let radii: Vec<f64> = (0..4).map(|k| 2f64.powi(SCALE - 6 + k)).collect();
    let hits = (0..TRIALS)
        .into_par_iter()
        .map(|t| {
            let d = Decomposition::for_stream(&s, 0, t);
            let x = (splitmix64(t) % 1024) as usize;
            let cx = d.center_index(&s.oracle, &s.nets, x, SCALE);
            let mut row = [0u64; 4];
            for y in 0..1024 {
                let dxy = s.oracle.dist(x, y);
                if dxy > radii[3] || d.center_index(&s.oracle, &s.nets, y, SCALE) == cx {
                    continue;
                }
                for (k, r) in radii.iter().enumerate() {
                    if dxy <= *r {
                        row[k] = 1;
                    }
                }
            }
            row
        })
        .reduce(|| [0; 4], |a, b| [a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3]]);
    let mut pass = true;
    for k in 0..3 {
        let (lo, hi) = wilson(hits[k], TRIALS);
        let (lo2, hi2) = wilson(hits[k + 1], TRIALS);
        pass &= lo <= hi2 / 2.0 && lo2 / 2.0 <= hi;
    }
    let p: Vec<String> = hits.iter().map(|&h| format!("{:.4}", h as f64 / TRIALS as f64)).collect();
    outcome(pass, format!("split probability at R/2^i = 1/64..1/8: [{}]", p.join(", ")))
}

fn line_instance(inst: u64) -> Vec<f64> {
    let mut xs = vec![0.0];
    let mut s = inst * 77 + 1;
    for _ in 0..5 {
        s = splitmix64(s);
        xs.push((s % 1000) as f64 / 10.0);
    }
    xs
}

fn d_matrix_realization() -> Outcome {
    const EVALS: usize = 100_000;
    const BUDGET: u64 = 20_000;
    let tractable: Vec<Vec<f64>> = (0..50u64)
        .map(line_instance)
        .filter(|xs| {
            let st = PointStream::new(DistanceOracle::from_line(xs));
            (0..6).all(|a| (0..a).all(|b| quadrature_sq_distance(&st, PointId::from_idx(a), PointId::from_idx(b), 1).is_ok()))
        })
        .take(3)
        .collect();
    let results: Vec<(f64, bool)> = tractable
        .par_iter()
        .map(|xs| {
            let st = PointStream::new(DistanceOracle::from_line(xs));
            let mut e = L2Embedding::new(st.clone(), 7, BUDGET).unwrap();
            let ys = e.vectors().to_vec();
            let mut worst: f64 = 0.0;
            for a in 0..6 {
                for b in 0..a {
                    let q = quadrature_sq_distance(&st, PointId::from_idx(a), PointId::from_idx(b), EVALS).unwrap();
                    worst = worst.max((sq_dist(&ys[a], &ys[b]) - q).abs() / q);
                }
            }
            let _ = e.push(Payload::Coords(&[xs.iter().sum::<f64>() / 6.0 + 0.3]));
            let same = e.vectors()[..6].iter().zip(&ys).all(|(u, v)| {
                u.len() == v.len() && u.iter().zip(v).all(|(p, q)| p.to_bits() == q.to_bits())
            });
            (worst, same)
        })
        .collect();
    let worst = results.iter().map(|r| r.0).fold(0.0, f64::max);
    let stable = results.iter().all(|r| r.1);
    outcome(
        tractable.len() == 3 && worst <= 0.05 && stable,
        format!("{} instances, worst relative error {:.4}, earlier vectors unchanged: {stable}", tractable.len(), worst),
    )
}

fn laakso_trend() -> Outcome {
    const SEEDS: u64 = 50;
    const BUDGET: u64 = 64;
    let ks: Vec<u32> = (2..=6).collect();
    let means: Vec<f64> = ks
        .iter()
        .map(|&k| {
            let total: f64 = (0..SEEDS)
                .into_par_iter()
                .map(|s| {
                    let g = LaaksoGraph::build(k, &mut rng(s));
                    let e = L2Embedding::new(PointStream::new(g.oracle()), s, BUDGET).unwrap();
                    e.distortion().worst
                })
                .sum();
            total / SEEDS as f64
        })
        .collect();
    let monotone = means.windows(2).all(|w| w[1] > w[0]);
    let xs: Vec<f64> = ks.iter().map(|&k| k as f64).collect();
    let ys: Vec<f64> = means.iter().map(|m| m * m).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    let ss_res: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - my - slope * (x - mx)).powi(2)).sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let r2 = 1.0 - ss_res / ss_tot;
    let m: Vec<String> = means.iter().map(|v| format!("{v:.2}")).collect();
    outcome(
        monotone && slope > 0.0 && r2 >= 0.8,
        format!("mean distortion k=2..6 [{}], slope {slope:.2}, R^2 {r2:.3}", m.join(", ")),
    )
}

fn line_matcher(algo: Algo) -> Box<dyn OnlineMatcher> {
    make_matcher(algo, Mode::Euclidean { dim: 1 }, Variant::Doubling, 1)
}

fn adaptive_lower_bound() -> Outcome {
    let mut alg = Capped::new(line_matcher(Algo::Light), 2);
    let rep = run_adaptive(&mut alg, 2, 8000).unwrap();
    let witnesses: Vec<String> =
        rep.certificates.iter().map(|c| format!("{}>={}", c.witness, c.threshold)).collect();
    outcome(
        rep.all_hold() && rep.final_weight >= rep.weight_floor && rep.max_step_deletions <= 2,
        format!(
            "weight {} >= floor {} (diameter {}), certificates [{}]",
            rep.final_weight,
            rep.weight_floor,
            rep.diameter,
            witnesses.join(", ")
        ),
    )
}

fn recourse_one_trap() -> Outcome {
    let seq = recourse_one_sequence(5.0, 0.04).unwrap();
    let opt = line_opt(&seq);
    let mut pass = (opt - 0.16).abs() < 1e-12;
    let mut parts = vec![format!("opt {opt:.2}")];
    for algo in [Algo::Inward, Algo::Hp, Algo::Light] {
        let mut c = Capped::new(line_matcher(algo), 1);
        for pair in seq.chunks(2) {
            for &x in pair {
                c.push(Payload::Coords(&[x])).unwrap();
            }
            pass &= c.end_step().deletions <= 1;
        }
        let w = c.cost();
        pass &= w > 1.0 && w / opt > 5.0;
        parts.push(format!("{} {w:.2}", algo.name()));
    }
    outcome(pass, parts.join(", "))
}

fn no_recourse_baseline() -> Outcome {
    let (n, w, eps) = (100u64, 1e6, 1e-3);
    // Scaling by 1/eps keeps every value integral, so the sums are exact.
    let scale = 1.0 / eps;
    let (a, _) = no_recourse_sequences(n, w, eps, scale);
    let greedy = arrival_order_weight(&a);
    let opt = line_opt(&a);
    let want_greedy = 2.0 * n as f64 * w * scale;
    let want_opt = 2.0 * n as f64 * eps * scale;
    outcome(greedy == want_greedy && opt == want_opt, format!("arrival order {greedy} (want {want_greedy}), opt {opt} (want {want_opt})"))
}

type Criterion = (&'static str, Duration, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 12] = [
        ("inward is exact on random 2-HSTs", Duration::from_secs(60), inward_exact),
        ("heavy-path inward is within 2x on random 2-HSTs", Duration::from_secs(60), hp_two_approx),
        ("recourse ceilings and growth from 2^12 to 2^16", Duration::from_secs(600), recourse_scaling),
        ("line matching invariants under random operations", Duration::from_secs(300), line_invariants),
        ("tree embeddings never contract", Duration::from_secs(120), domination),
        ("per-coordinate Lipschitz and sparsity", Duration::from_secs(120), lipschitz_sparsity),
        ("split probability halves with the radius", Duration::from_secs(300), padding_scaling),
        ("realized squared distances match quadrature", Duration::from_secs(120), d_matrix_realization),
        ("distortion grows on the Laakso family", Duration::from_secs(600), laakso_trend),
        ("adaptive adversary forces a heavy matching", Duration::from_secs(300), adaptive_lower_bound),
        ("recourse one cannot follow the trap sequence", Duration::from_secs(1), recourse_one_trap),
        ("no-recourse baseline on the shifted pairs", Duration::from_secs(1), no_recourse_baseline),
    ];
    let mut failed = 0;
    for (i, (name, limit, run)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let o = run();
        let el = t.elapsed();
        let pass = o.pass && el <= *limit;
        if !pass {
            failed += 1;
        }
        println!(
            "{} {:>2} {name}: {} [{:.2}s, limit {}s]",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            o.detail,
            el.as_secs_f64(),
            limit.as_secs()
        );
    }
    println!("{} of {} criteria pass", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
