//! Online low-diameter decompositions.
//!
//! Doubling variant: at scale `i` (diameter bound `2^i`) the centers are the
//! members of net level `i-3`; a point joins the earliest center `q` with
//! `d(x, q) <= 2^(i-2) * r_q`. Euclidean variant: a ball around the first
//! point, then lazy random carving.

use crate::metric::{DistanceOracle, Metric, Mode, PointId};
use crate::nets::{NetHierarchy, PointStream};
use crate::rng::{derive_seed, rng_for, Stream};
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// CDF of the exponential law with rate `lambda` conditioned on `[1, 2]`.
pub fn texp_cdf(lambda: f64, y: f64) -> f64 {
    if y <= 1.0 {
        return 0.0;
    }
    if y >= 2.0 {
        return 1.0;
    }
    // (1 - e^{-λ(y-1)}) / (1 - e^{-λ})
    (-(lambda * (y - 1.0))).exp_m1() / (-lambda).exp_m1()
}

/// Inverse CDF of the same law.
pub fn texp_quantile(lambda: f64, u: f64) -> f64 {
    let y = 1.0 - (u * (-lambda).exp_m1()).ln_1p() / lambda;
    y.clamp(1.0, 2.0)
}

/// Mean of the same law.
pub fn texp_mean(lambda: f64) -> f64 {
    // ∫ y f(y) dy over [1,2] = 1 + 1/λ - e^{-λ} / (1 - e^{-λ})
    let e = (-lambda).exp();
    1.0 + 1.0 / lambda - e / (1.0 - e)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadiusSample {
    pub point: PointId,
    pub r: f64,
    pub lambda: f64,
    pub alpha: bool,
}

/// Draws `(r, α)` for one point from its own cell of the seed space.
pub fn sample_radius(x: PointId, lambda: f64, seed: u64, trial: u64) -> RadiusSample {
    let mut rng = rng_for(seed, Stream::Radius, x.0 as u64, trial);
    let u: f64 = rng.random();
    let bit: bool = rng.random();
    RadiusSample { point: x, r: texp_quantile(lambda, u), lambda, alpha: bit && x.0 != 1 }
}

/// Identity of a cluster at one scale.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Center {
    Point(PointId),
    /// The ball around the first point (Euclidean variant).
    OriginBall,
    /// A lazily sampled carving center (Euclidean variant).
    Carved(u64),
    /// No carving center covered the point.
    Singleton(PointId),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub point: PointId,
    pub scale: i32,
    pub center: Center,
    pub permanent: bool,
}

#[inline]
pub(crate) fn pow2(i: i32) -> f64 {
    2f64.powi(i)
}

/// Shared per-point radii for one random draw `(seed, trial)`.
#[derive(Clone, Debug)]
pub struct Decomposition {
    pub seed: u64,
    pub trial: u64,
    radii: Vec<RadiusSample>,
}

impl Decomposition {
    pub fn new(seed: u64, trial: u64) -> Self {
        Decomposition { seed, trial, radii: Vec::new() }
    }

    /// Builds radii for every point of `stream`.
    pub fn for_stream(stream: &PointStream, seed: u64, trial: u64) -> Self {
        let mut d = Self::new(seed, trial);
        d.extend(&stream.nets);
        d
    }

    /// Samples radii for points the decomposition has not seen yet.
    pub fn extend(&mut self, nets: &NetHierarchy) {
        while self.radii.len() < nets.len() {
            let x = PointId::from_idx(self.radii.len());
            let lambda = 4.0 * nets.estimate_ddim(x) as f64;
            self.radii.push(sample_radius(x, lambda, self.seed, self.trial));
        }
    }

    pub fn len(&self) -> usize {
        self.radii.len()
    }

    pub fn is_empty(&self) -> bool {
        self.radii.is_empty()
    }

    pub fn radius(&self, x: PointId) -> &RadiusSample {
        &self.radii[x.idx()]
    }

    pub fn radii(&self) -> &[RadiusSample] {
        &self.radii
    }

    /// Zero-based index of the center of `x` at scale `i`.
    pub fn center_index<M: Metric + ?Sized>(&self, m: &M, nets: &NetHierarchy, x: usize, i: i32) -> usize {
        let level = i - 3;
        let quarter = pow2(i - 2);
        for q in 0..=x {
            if nets.in_net(q, level) && m.dist(x, q) <= quarter * self.radii[q].r {
                return q;
            }
        }
        panic!("no center covers point {} at scale {i}: net covering violated", x + 1);
    }

    pub fn cluster_of(&self, stream: &PointStream, x: PointId, i: i32) -> ClusterAssignment {
        let q = self.center_index(&stream.oracle, &stream.nets, x.idx(), i);
        ClusterAssignment { point: x, scale: i, center: Center::Point(PointId::from_idx(q)), permanent: true }
    }
}

#[derive(Clone, Debug)]
struct Carver {
    pos: Vec<f64>,
    priority: f64,
    id: u64,
}

/// Expected number of carving centers inside a radius-Δ/2 ball.
const CARVE_DENSITY: f64 = 20.0;

fn unit_ball_volume(d: usize) -> f64 {
    let (mut v0, mut v1) = (1.0, 2.0);
    if d == 0 {
        return v0;
    }
    for k in 2..=d {
        let v = 2.0 * std::f64::consts::PI / k as f64 * v0;
        v0 = v1;
        v1 = v;
    }
    v1
}

fn zigzag(i: i64) -> u64 {
    ((i << 1) ^ (i >> 63)) as u64
}

/// Euclidean decomposition for one random draw.
#[derive(Clone, Debug)]
pub struct EuclideanDecomposition {
    pub seed: u64,
    pub trial: u64,
    boxes: HashMap<(i32, Vec<i64>), Vec<Carver>>,
}

impl EuclideanDecomposition {
    pub fn new(seed: u64, trial: u64) -> Self {
        EuclideanDecomposition { seed, trial, boxes: HashMap::new() }
    }

    /// Radius of the first point's ball at scale `i`, uniform in `[Δ/4, Δ/2]`.
    pub fn ball_radius(&self, i: i32) -> f64 {
        let mut rng = rng_for(self.seed, Stream::BallRadius, zigzag(i as i64), self.trial);
        let u: f64 = rng.random();
        pow2(i) * (0.25 + 0.25 * u)
    }

    fn materialize(&mut self, i: i32, key: &[i64]) {
        if self.boxes.contains_key(&(i, key.to_vec())) {
            return;
        }
        let d = key.len();
        let side = 4.0 * pow2(i);
        let mean = CARVE_DENSITY * 8f64.powi(d as i32) / unit_ball_volume(d);
        let mut h = zigzag(i as i64);
        for &k in key {
            h = crate::rng::splitmix64(h ^ zigzag(k));
        }
        let mut rng = rng_for(self.seed, Stream::Carving, h, self.trial);
        let count = Poisson::new(mean).expect("positive mean").sample(&mut rng) as usize;
        let carvers = (0..count)
            .map(|slot| Carver {
                pos: key.iter().map(|&k| (k as f64 + rng.random::<f64>()) * side).collect(),
                priority: rng.random(),
                id: derive_seed(h, Stream::Carving, slot as u64, 0),
            })
            .collect();
        self.boxes.insert((i, key.to_vec()), carvers);
    }

    /// Cluster of a coordinate vector at scale `i`, given the first point.
    pub fn assign(&mut self, origin: &[f64], x: &[f64], i: i32) -> Center {
        let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
        if dist(origin, x) <= self.ball_radius(i) {
            return Center::OriginBall;
        }
        let half = pow2(i) / 2.0;
        let side = 4.0 * pow2(i);
        let d = x.len();
        let lo: Vec<i64> = x.iter().map(|&v| ((v - half) / side).floor() as i64).collect();
        let hi: Vec<i64> = x.iter().map(|&v| ((v + half) / side).floor() as i64).collect();
        let mut key = lo.clone();
        let mut best: Option<(f64, u64)> = None;
        loop {
            self.materialize(i, &key);
            for c in &self.boxes[&(i, key.clone())] {
                if dist(&c.pos, x) <= half && best.is_none_or(|b| c.priority < b.0) {
                    best = Some((c.priority, c.id));
                }
            }
            // Odometer over the box range.
            let mut k = 0;
            while k < d {
                if key[k] < hi[k] {
                    key[k] += 1;
                    break;
                }
                key[k] = lo[k];
                k += 1;
            }
            if k == d {
                break;
            }
        }
        match best {
            Some((_, id)) => Center::Carved(id),
            None => Center::Singleton(PointId(0)),
        }
    }

    pub fn cluster_of(&mut self, oracle: &DistanceOracle, x: PointId, i: i32) -> ClusterAssignment {
        assert!(matches!(oracle.mode(), Mode::Euclidean { .. }), "euclidean mode required");
        let origin = oracle.coords(PointId(1)).expect("first point").to_vec();
        let xc = oracle.coords(x).expect("known point");
        let center = match self.assign(&origin, xc, i) {
            Center::Singleton(_) => {
                // Identical coordinates share the singleton of their earliest copy.
                let first = oracle.ids().find(|&p| oracle.coords(p) == Some(xc)).unwrap_or(x);
                Center::Singleton(first)
            }
            c => c,
        };
        ClusterAssignment { point: x, scale: i, center, permanent: true }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::DistanceOracle;

    #[test]
    fn texp_cdf_endpoints() {
        assert_eq!(texp_cdf(4.0, 2.0), 1.0);
        assert_eq!(texp_cdf(4.0, 1.0), 0.0);
        assert!((texp_quantile(4.0, 1.0) - 2.0).abs() < 1e-12);
        assert_eq!(texp_quantile(4.0, 0.0), 1.0);
    }

    #[test]
    fn texp_mean_matches_numeric_integral() {
        for &lambda in &[0.5, 4.0, 40.0] {
            let n = 200_000;
            let m: f64 = (0..n).map(|k| texp_quantile(lambda, (k as f64 + 0.5) / n as f64)).sum::<f64>() / n as f64;
            assert!((m - texp_mean(lambda)).abs() < 1e-6, "{lambda}: {m} vs {}", texp_mean(lambda));
        }
    }

    #[test]
    fn first_point_alpha_zero() {
        for t in 0..50 {
            assert!(!sample_radius(PointId(1), 4.0, 9, t).alpha);
        }
    }

    #[test]
    fn near_origin_joins_first_cluster() {
        let s = PointStream::new(DistanceOracle::from_line(&[0.0, 0.9, 5.0, 0.5]));
        let d = Decomposition::for_stream(&s, 3, 0);
        for i in 2..6 {
            assert_eq!(d.cluster_of(&s, PointId(2), i).center, Center::Point(PointId(1)));
            assert_eq!(d.cluster_of(&s, PointId(4), i).center, Center::Point(PointId(1)));
        }
    }

    #[test]
    fn euclidean_origin_ball() {
        let o = DistanceOracle::from_points(2, &[vec![0.0, 0.0], vec![1.0, 0.0], vec![50.0, 0.0]]).unwrap();
        let mut e = EuclideanDecomposition::new(1, 0);
        for i in 0..8 {
            assert_eq!(e.cluster_of(&o, PointId(1), i).center, Center::OriginBall);
        }
        assert_eq!(e.cluster_of(&o, PointId(2), 2).center, Center::OriginBall);
        assert!(matches!(e.cluster_of(&o, PointId(3), 3).center, Center::Carved(_)));
    }

    #[test]
    fn unit_ball_volumes() {
        assert!((unit_ball_volume(2) - std::f64::consts::PI).abs() < 1e-12);
        assert!((unit_ball_volume(3) - 4.0 / 3.0 * std::f64::consts::PI).abs() < 1e-12);
    }
}
