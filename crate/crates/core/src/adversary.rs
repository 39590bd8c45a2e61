//! Input sequences that force heavy matchings or large distortion.

use crate::metric::{DistanceOracle, Metric, Payload};
use crate::pipeline::OnlineMatcher;
use rand::Rng;
use serde::Serialize;
use std::collections::{HashMap, HashSet};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum AdversaryError {
    #[error("epsilon {eps} must be below 1/(4k) for k = {k}")]
    EpsilonTooLarge { eps: f64, k: f64 },
    #[error("need at least {min} points, got {n}")]
    TooFewPoints { n: u64, min: u64 },
    #[error("expected {expected} bits, got {got}")]
    BitCount { expected: usize, got: usize },
    #[error("recourse must be at least {min}, got {r}")]
    SmallRecourse { r: u32, min: u32 },
}

/// Eight points on the line that punish recourse one: `0, 1, s, s+1`, then
/// `1+eps, s+eps`, then `eps, s+1+eps`, with `s = k + 1`.
pub fn recourse_one_sequence(k: f64, eps: f64) -> Result<Vec<f64>, AdversaryError> {
    if !(eps > 0.0 && eps < 1.0 / (4.0 * k)) {
        return Err(AdversaryError::EpsilonTooLarge { eps, k });
    }
    let s = k + 1.0;
    Ok(vec![0.0, 1.0, s, s + 1.0, 1.0 + eps, s + eps, eps, s + 1.0 + eps])
}

/// Parameters shared by both nested-multiples adversaries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Nesting {
    pub r: u32,
    pub q: u64,
    pub k: u32,
}

impl Nesting {
    /// `q = 10 r` and the largest `k` with `q^k <= n`.
    pub fn new(r: u32, n: u64) -> Result<Self, AdversaryError> {
        if r < 1 {
            return Err(AdversaryError::SmallRecourse { r, min: 1 });
        }
        let q = 10 * r as u64;
        if n < q {
            return Err(AdversaryError::TooFewPoints { n, min: q });
        }
        let mut k = 0;
        while q.pow(k + 1) <= n {
            k += 1;
        }
        Ok(Nesting { r, q, k })
    }

    /// Positive multiples of `q^i` up to `q^k`.
    pub fn q_set(&self, i: u32) -> Vec<u64> {
        let step = self.q.pow(i);
        (1..=self.q.pow(self.k - i)).map(|j| j * step).collect()
    }

    /// `Q_i \ Q_{i+1}` ascending; an odd batch also carries `q^k` so pairs stay whole.
    pub fn batch(&self, i: u32) -> Vec<f64> {
        let next = self.q.pow(i + 1);
        let mut b: Vec<f64> = self.q_set(i).into_iter().filter(|v| v % next != 0).map(|v| v as f64).collect();
        if b.len() % 2 == 1 {
            b.push(self.q.pow(self.k) as f64);
        }
        b
    }

    /// Long-edge length and count threshold of round `i`.
    pub fn thresholds(&self, i: u32) -> (f64, f64) {
        (self.q.pow(i) as f64 / (4.0 * self.r as f64), self.q.pow(self.k - i) as f64 / 10.0)
    }

    /// Weight every recourse-`r` algorithm ends with: `k q^k / (100 r)`.
    pub fn weight_floor(&self) -> f64 {
        self.k as f64 * self.q.pow(self.k) as f64 / (100.0 * self.r as f64)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum RoundCase {
    /// Round 0: the whole bottom layer arrives.
    Initial,
    /// Enough long edges already; nothing arrives.
    Skip,
    /// Few long edges; the next layer arrives.
    Present,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RoundCertificate {
    pub round: u32,
    pub case: RoundCase,
    /// Long edges of the matching seen before the round.
    pub long_before: usize,
    /// Size of the long-edge witness set found in the matching after the round.
    pub witness: usize,
    pub threshold: f64,
    pub holds: bool,
}

/// Adaptive adversary on nested multiples of `q`.
#[derive(Clone, Debug)]
pub struct AdaptiveAdversary {
    pub nest: Nesting,
    round: u32,
    /// Values of all emitted points, by arrival index.
    values: Vec<f64>,
    before: Vec<(u32, u32)>,
    last_case: RoundCase,
    last_batch: Vec<u32>,
    pub certificates: Vec<RoundCertificate>,
}

fn long_edges(values: &[f64], m: &[(u32, u32)], len: f64) -> Vec<(u32, u32)> {
    m.iter().copied().filter(|&(a, b)| (values[a as usize] - values[b as usize]).abs() >= len).collect()
}

impl AdaptiveAdversary {
    pub fn new(r: u32, n: u64) -> Result<Self, AdversaryError> {
        Ok(AdaptiveAdversary {
            nest: Nesting::new(r, n)?,
            round: 0,
            values: Vec::new(),
            before: Vec::new(),
            last_case: RoundCase::Initial,
            last_batch: Vec::new(),
            certificates: Vec::new(),
        })
    }

    /// Given the matching after the previous round, certifies that round and
    /// returns the next batch, or `None` when all rounds are played.
    pub fn next(&mut self, observed: &[(u32, u32)]) -> Option<Vec<f64>> {
        if self.round > 0 {
            let c = self.certify(self.round - 1, observed);
            self.certificates.push(c);
        }
        if self.round == self.nest.k {
            return None;
        }
        let i = self.round;
        let (len, threshold) = self.nest.thresholds(i);
        let long = long_edges(&self.values, observed, len).len();
        let (case, batch) = if i == 0 {
            (RoundCase::Initial, self.nest.batch(0))
        } else if long as f64 >= threshold {
            (RoundCase::Skip, Vec::new())
        } else {
            (RoundCase::Present, self.nest.batch(i))
        };
        self.before = observed.to_vec();
        self.last_case = case;
        let start = self.values.len() as u32;
        self.last_batch = (start..start + batch.len() as u32).collect();
        self.values.extend(&batch);
        self.round += 1;
        Some(batch)
    }

    fn certify(&self, i: u32, after: &[(u32, u32)]) -> RoundCertificate {
        let (len, threshold) = self.nest.thresholds(i);
        let long_before = long_edges(&self.values, &self.before, len).len();
        let witness = match self.last_case {
            RoundCase::Initial => after.len(),
            RoundCase::Skip => long_edges(&self.values, after, len).len(),
            RoundCase::Present => self.interval_witness(i, after).len(),
        };
        RoundCertificate { round: i, case: self.last_case, long_before, witness, threshold, holds: witness as f64 >= threshold }
    }

    /// Long new edges found by walking from the centres of good intervals.
    fn interval_witness(&self, i: u32, after: &[(u32, u32)]) -> HashSet<(u32, u32)> {
        let v = &self.values;
        let r = self.nest.r as usize;
        let (len, _) = self.nest.thresholds(i);
        let half = self.nest.q.pow(i) as f64 / 2.0;
        let next = self.nest.q.pow(i + 1) as f64;
        let key = |a: u32, b: u32| (a.min(b), a.max(b));
        let old: HashMap<u32, u32> = self.before.iter().flat_map(|&(a, b)| [(a, b), (b, a)]).collect();
        let new: HashMap<u32, u32> = after.iter().flat_map(|&(a, b)| [(a, b), (b, a)]).collect();
        let old_set: HashSet<(u32, u32)> = self.before.iter().map(|&(a, b)| key(a, b)).collect();
        let new_set: HashSet<(u32, u32)> = after.iter().map(|&(a, b)| key(a, b)).collect();
        let mut rematched: Vec<f64> =
            old_set.difference(&new_set).flat_map(|&(a, b)| [v[a as usize], v[b as usize]]).collect();
        rematched.sort_by(f64::total_cmp);
        let mut long_ends: Vec<f64> =
            long_edges(v, &self.before, len).into_iter().flat_map(|(a, b)| [v[a as usize], v[b as usize]]).collect();
        long_ends.sort_by(f64::total_cmp);
        let inside = |sorted: &[f64], c: f64| {
            let lo = sorted.partition_point(|&x| x <= c - half);
            let hi = sorted.partition_point(|&x| x < c + half);
            hi - lo
        };
        let mut found = HashSet::new();
        for &p in &self.last_batch {
            let c = v[p as usize];
            if c % next == 0.0 {
                continue; // the pairing filler is not a centre
            }
            if inside(&rematched, c) >= 2 * r || inside(&long_ends, c) > 0 {
                continue;
            }
            // Alternate new and old edges of the symmetric difference until leaving the interval.
            let mut cur = p;
            let mut use_new = true;
            loop {
                let step = if use_new { new.get(&cur) } else { old.get(&cur) };
                let Some(&nxt) = step else { break };
                let e = key(cur, nxt);
                let in_diff = if use_new { !old_set.contains(&e) } else { !new_set.contains(&e) };
                if !in_diff {
                    break;
                }
                if use_new && (v[cur as usize] - v[nxt as usize]).abs() >= len {
                    found.insert(e);
                    break;
                }
                if (v[nxt as usize] - c).abs() >= half {
                    break;
                }
                cur = nxt;
                use_new = !use_new;
            }
        }
        found
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct AdaptiveReport {
    pub points: usize,
    pub final_weight: f64,
    pub diameter: f64,
    pub weight_floor: f64,
    pub max_step_deletions: u32,
    pub certificates: Vec<RoundCertificate>,
}

impl AdaptiveReport {
    pub fn all_hold(&self) -> bool {
        self.certificates.iter().all(|c| c.holds)
    }
}

/// Plays the adaptive adversary against `alg`, which must take 1-D coordinates.
pub fn run_adaptive(alg: &mut dyn OnlineMatcher, r: u32, n: u64) -> Result<AdaptiveReport, AdversaryError> {
    let mut adv = AdaptiveAdversary::new(r, n)?;
    let mut max_del = 0;
    let mut observed: Vec<(u32, u32)> = Vec::new();
    while let Some(batch) = adv.next(&observed) {
        for pair in batch.chunks(2) {
            for &x in pair {
                alg.push(Payload::Coords(&[x])).expect("one-dimensional matcher");
            }
            max_del = max_del.max(alg.end_step().deletions);
        }
        observed = alg.matching().edges();
    }
    let o = alg.oracle();
    Ok(AdaptiveReport {
        points: o.len(),
        final_weight: alg.cost(),
        diameter: o.stats().diameter,
        weight_floor: adv.nest.weight_floor(),
        max_step_deletions: max_del,
        certificates: adv.certificates,
    })
}

/// Fixed sequence: the bottom layer, then layer `i` iff `bits[i-1]`.
pub fn oblivious_lb_sequence(r: u32, n: u64, bits: &[bool]) -> Result<Vec<f64>, AdversaryError> {
    if n < 10 * r as u64 {
        return Err(AdversaryError::TooFewPoints { n, min: 10 * r as u64 });
    }
    let nest = Nesting::new(r, n)?;
    let want = nest.k.saturating_sub(1) as usize;
    if bits.len() != want {
        return Err(AdversaryError::BitCount { expected: want, got: bits.len() });
    }
    let mut out = nest.batch(0);
    for (i, &b) in bits.iter().enumerate() {
        if b {
            out.extend(nest.batch(i as u32 + 1));
        }
    }
    Ok(out)
}

pub fn random_bits<R: Rng>(count: usize, rng: &mut R) -> Vec<bool> {
    (0..count).map(|_| rng.random::<bool>()).collect()
}

/// Weight of pairing each arriving pair with itself and never changing.
pub fn arrival_order_weight(seq: &[f64]) -> f64 {
    seq.chunks_exact(2).map(|p| (p[0] - p[1]).abs()).sum()
}

/// Two motivating sequences on the line, both in arrival order.
///
/// `a`: pairs `{i, W+i}` for `i = 1..n`, then pairs `{i+eps, W+i+eps}`.
/// `b`: pairs `{j, j+1}` for `j = 0..2n` (every inner integer twice), then the pair `{0, 2n+1}`.
/// Every value is multiplied by `scale`; with `scale = 1/eps` integral
/// inputs stay integral and all sums are exact.
pub fn no_recourse_sequences(n: u64, w: f64, eps: f64, scale: f64) -> (Vec<f64>, Vec<f64>) {
    let mut a = Vec::new();
    for i in 1..=n {
        a.extend([i as f64 * scale, (w + i as f64) * scale]);
    }
    for i in 1..=n {
        a.extend([i as f64 * scale + eps * scale, (w + i as f64) * scale + eps * scale]);
    }
    let mut b = Vec::new();
    for j in 0..=2 * n {
        b.extend([j as f64 * scale, (j + 1) as f64 * scale]);
    }
    b.extend([0.0, (2 * n + 1) as f64 * scale]);
    (a, b)
}

// ---------------------------------------------------------------- Laakso

/// Series-parallel graph grown by replacing one random edge of the newest
/// diamond with a scaled diamond.
#[derive(Clone, Debug, PartialEq)]
pub struct LaaksoGraph {
    pub level: u32,
    pub n: usize,
    pub edges: Vec<(u32, u32, f64)>,
    /// Newest copy as `[s, a, b, c, d, t]`; at level 0 only `s` and `t` are set.
    pub copy: [u32; 6],
}

/// Diamond edges as label indices into `[s, a, b, c, d, t]`, with sampling weights in eighths.
const DIAMOND: [(usize, usize, u32); 6] = [(0, 1, 2), (1, 2, 1), (2, 3, 1), (1, 4, 1), (4, 3, 1), (3, 5, 2)];

impl LaaksoGraph {
    /// A single unit edge.
    pub fn h0() -> Self {
        LaaksoGraph { level: 0, n: 2, edges: vec![(0, 1, 1.0)], copy: [0, u32::MAX, u32::MAX, u32::MAX, u32::MAX, 1] }
    }

    /// Replaces one edge of the newest copy by a diamond with edge weight `4^-(level+1)`.
    pub fn next<R: Rng>(&self, rng: &mut R) -> Self {
        let (x, y) = if self.level == 0 {
            (self.copy[0], self.copy[5])
        } else {
            let mut t = rng.random_range(0..8u32);
            let &(i, j, _) = DIAMOND
                .iter()
                .find(|&&(_, _, w)| {
                    if t < w {
                        true
                    } else {
                        t -= w;
                        false
                    }
                })
                .expect("weights sum to eight");
            (self.copy[i], self.copy[j])
        };
        let mut g = self.clone();
        g.level += 1;
        let w = 0.25f64.powi(g.level as i32);
        g.edges.retain(|&(a, b, _)| !((a, b) == (x, y) || (a, b) == (y, x)));
        let base = g.n as u32;
        g.n += 4;
        g.copy = [x, base, base + 1, base + 2, base + 3, y];
        for &(i, j, _) in &DIAMOND {
            g.edges.push((g.copy[i], g.copy[j], w));
        }
        g
    }

    pub fn build<R: Rng>(k: u32, rng: &mut R) -> Self {
        let mut g = Self::h0();
        for _ in 0..k {
            g = g.next(rng);
        }
        g
    }

    /// All-pairs shortest paths (Floyd-Warshall).
    pub fn distances(&self) -> Vec<Vec<f64>> {
        let n = self.n;
        let mut d = vec![vec![f64::INFINITY; n]; n];
        for (i, row) in d.iter_mut().enumerate() {
            row[i] = 0.0;
        }
        for &(a, b, w) in &self.edges {
            let (a, b) = (a as usize, b as usize);
            d[a][b] = d[a][b].min(w);
            d[b][a] = d[b][a].min(w);
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let via = d[i][k] + d[k][j];
                    if via < d[i][j] {
                        d[i][j] = via;
                    }
                }
            }
        }
        d
    }

    /// Shortest-path metric with vertices in creation order.
    pub fn oracle(&self) -> DistanceOracle {
        let d = self.distances();
        let mut o = DistanceOracle::matrix();
        for (j, row) in d.iter().enumerate() {
            o.append(Payload::Row(&row[..j])).expect("shortest paths form a metric");
        }
        o
    }
}

/// Whether `fine` restricted to the first `coarse.len()` vertices equals `coarse`.
pub fn preserves_distances(coarse: &[Vec<f64>], fine: &[Vec<f64>]) -> bool {
    coarse.iter().enumerate().all(|(i, row)| row.iter().enumerate().all(|(j, &x)| (fine[i][j] - x).abs() <= 1e-12))
}

/// Distances of a point sequence on the line.
pub fn line_oracle(xs: &[f64]) -> DistanceOracle {
    let mut o = DistanceOracle::euclidean(1);
    for &x in xs {
        o.append(Payload::Coords(&[x])).expect("finite coordinate");
    }
    o
}

/// Optimum of an even line sequence, by sorted pairing.
pub fn line_opt(xs: &[f64]) -> f64 {
    crate::oracles::mwpm_line(xs).map(|r| r.cost).unwrap_or(f64::NAN)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn recourse_one_values() {
        let s = recourse_one_sequence(5.0, 0.04).unwrap();
        assert_eq!(s.len(), 8);
        assert!((line_opt(&s) - 0.16).abs() < 1e-12);
        assert!((line_opt(&s[..4]) - 2.0).abs() < 1e-12);
        assert_eq!(recourse_one_sequence(5.0, 0.06), Err(AdversaryError::EpsilonTooLarge { eps: 0.06, k: 5.0 }));
    }

    #[test]
    fn nested_sets() {
        let nest = Nesting::new(2, 8000).unwrap();
        assert_eq!((nest.q, nest.k), (20, 3));
        for i in 0..=3 {
            assert_eq!(nest.q_set(i).len() as u64, 20u64.pow(3 - i));
        }
        assert_eq!(nest.batch(0).len(), 8000 - 400);
        assert_eq!(nest.batch(2).len(), 20);
        let q1: HashSet<u64> = nest.q_set(1).into_iter().collect();
        assert!(nest.q_set(2).iter().all(|v| q1.contains(v)));
    }

    #[test]
    fn oblivious_extremes() {
        let zero = oblivious_lb_sequence(2, 8000, &[false, false]).unwrap();
        assert_eq!(zero, Nesting::new(2, 8000).unwrap().batch(0));
        let mut ones = oblivious_lb_sequence(2, 8000, &[true, true]).unwrap();
        ones.sort_by(f64::total_cmp);
        let all: Vec<f64> = (1..=8000).map(|v| v as f64).collect();
        assert_eq!(ones, all);
        assert!(oblivious_lb_sequence(2, 19, &[]).is_err());
    }

    #[test]
    fn laakso_growth_preserves_distances() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut g = LaaksoGraph::h0();
        assert_eq!(g.edges, vec![(0, 1, 1.0)]);
        for k in 1..=6 {
            let h = g.next(&mut rng);
            assert_eq!(h.n, 4 * k + 2);
            assert!(preserves_distances(&g.distances(), &h.distances()));
            if k == 1 {
                assert!(h.edges.iter().all(|e| e.2 == 0.25));
                assert_eq!(h.edges.len(), 6);
            }
            g = h;
        }
    }

    #[test]
    fn no_recourse_exact_values() {
        let (n, w, eps) = (100u64, 1e6, 1e-3);
        let (a, b) = no_recourse_sequences(n, w, eps, 1e3);
        assert!(a.iter().all(|x| x.fract() == 0.0));
        assert_eq!(arrival_order_weight(&a), 2.0 * n as f64 * w * 1e3);
        assert_eq!(line_opt(&a), 2.0 * n as f64);
        assert_eq!(line_opt(&b[..b.len() - 2]), (2 * n + 1) as f64 * 1e3);
        assert_eq!(line_opt(&b), 0.0);
    }
}
