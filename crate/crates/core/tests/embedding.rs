use omm_core::adversary::{preserves_distances, LaaksoGraph};
use omm_core::hst::{HstTree, OnlineHst, Variant};
use omm_core::l2::{single_sample_embed, L2Embedding};
use omm_core::metric::{DistanceOracle, Metric, Payload, PointId};
use omm_core::nets::PointStream;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn points(coords: &[(f64, f64)]) -> DistanceOracle {
    let pts: Vec<Vec<f64>> = coords.iter().map(|&(x, y)| vec![x, y]).collect();
    DistanceOracle::from_points(2, &pts).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn tree_embedding_dominates(coords in proptest::collection::vec((0.0f64..100.0, 0.0f64..100.0), 2..30), seed in 0u64..1000) {
        let o = points(&coords);
        for variant in [Variant::Doubling, Variant::Euclidean] {
            let h = OnlineHst::embed(&o, variant, seed, 0);
            prop_assert!(h.tree.check().is_ok());
            for a in 0..o.len() {
                for b in 0..a {
                    let du = h.tree.hst_distance(PointId::from_idx(a), PointId::from_idx(b)).unwrap();
                    prop_assert!(du >= o.dist(a, b));
                }
            }
        }
    }

    #[test]
    fn online_tree_equals_batch_tree(coords in proptest::collection::vec((0.0f64..50.0, 0.0f64..50.0), 2..25), seed in 0u64..1000) {
        let o = points(&coords);
        let batch = OnlineHst::embed(&o, Variant::Doubling, seed, 1);
        let mut online = OnlineHst::new(DistanceOracle::euclidean(2), Variant::Doubling, seed, 1);
        for &(x, y) in &coords {
            online.append(Payload::Coords(&[x, y])).unwrap();
        }
        prop_assert!(batch.tree.same_shape(&online.tree));
        let text = online.tree.export();
        let back = HstTree::parse(&text).unwrap();
        prop_assert!(back.same_shape(&online.tree));
    }

    #[test]
    fn sample_vectors_are_sparse_and_lipschitz(coords in proptest::collection::vec((0.0f64..64.0, 0.0f64..64.0), 2..30), seed in 0u64..1000) {
        let s = PointStream::new(points(&coords));
        let f = single_sample_embed(&s, seed, 0);
        let coord = |v: &[(i32, f64)], i: i32| v.iter().find(|p| p.0 == i).map_or(0.0, |p| p.1);
        for (x, fx) in f.iter().enumerate() {
            prop_assert!(fx.len() <= 3 * (x + 1));
            for y in 0..x {
                let d = s.oracle.dist(x, y);
                for &(i, _) in fx.iter().chain(&f[y]) {
                    let (a, b) = (coord(fx, i), coord(&f[y], i));
                    prop_assert!((a - b).abs() <= d + 4.0 * f64::EPSILON * (a.abs() + b.abs() + d));
                }
            }
        }
    }
}

#[test]
fn euclidean_vectors_never_move() {
    let xs = [0.0, 3.0, 1.0, 8.0, 2.5, 6.0, 4.0];
    let mut e = L2Embedding::new(PointStream::new(DistanceOracle::from_points(1, &[vec![xs[0]]]).unwrap()), 11, 32).unwrap();
    let mut history: Vec<Vec<f64>> = vec![e.vectors()[0].clone()];
    for &x in &xs[1..] {
        e.push(Payload::Coords(&[x])).unwrap();
        for (k, v) in history.iter().enumerate() {
            assert_eq!(&e.vectors()[k], v);
        }
        history.push(e.vectors().last().unwrap().clone());
    }
    let rep = e.distortion();
    assert!(rep.worst >= 1.0 && rep.worst.is_finite());
}

#[test]
fn laakso_growth_keeps_old_distances() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut g = LaaksoGraph::h0();
    for k in 1..=6 {
        let next = g.next(&mut rng);
        assert_eq!(next.n, 4 * k + 2);
        assert!(preserves_distances(&g.distances(), &next.distances()));
        g = next;
    }
}
