//! End-to-end online matchers over a point stream, a recourse cap, and
//! per-step benchmark rows.

use crate::hst::{OnlineHst, Variant};
use crate::hst_matching::{HeavyPathInward, Inward, TreeMatcher};
use crate::light_matching::{LightMatching, TreeStrategy};
use crate::metric::{DistanceOracle, Metric, MetricError, Mode, Payload};
use crate::oracles::{mwpm_bruteforce, mwpm_line};
use crate::recourse::{RecourseMatching, StepDelta};
use serde::{Deserialize, Serialize};

/// A matcher fed one point at a time; steps end after every pair.
pub trait OnlineMatcher {
    fn algo(&self) -> String;
    fn oracle(&self) -> &DistanceOracle;
    fn push(&mut self, p: Payload<'_>) -> Result<(), MetricError>;
    fn end_step(&mut self) -> StepDelta;
    fn matching(&self) -> &RecourseMatching;

    fn cost(&self) -> f64 {
        let o = self.oracle();
        self.matching().cost(|a, b| o.dist(a as usize, b as usize))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Algo {
    Inward,
    Hp,
    Light,
}

impl Algo {
    pub fn parse(s: &str) -> Option<Algo> {
        match s {
            "inward" => Some(Algo::Inward),
            "hp" => Some(Algo::Hp),
            "light" => Some(Algo::Light),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Algo::Inward => "inward",
            Algo::Hp => "hp",
            Algo::Light => "light",
        }
    }
}

/// Builds a matcher over an empty oracle of the given mode.
pub fn make_matcher(algo: Algo, mode: Mode, variant: Variant, seed: u64) -> Box<dyn OnlineMatcher> {
    let empty = match mode {
        Mode::Euclidean { dim } => DistanceOracle::euclidean(dim),
        Mode::Matrix => DistanceOracle::matrix(),
    };
    match algo {
        Algo::Inward => Box::new(HstPipeline::new(empty, variant, seed, Inward::new(&Default::default()))),
        Algo::Hp => Box::new(HstPipeline::new(empty, variant, seed, HeavyPathInward::new(&Default::default()))),
        Algo::Light => Box::new(LightPipeline::new(empty, TreeStrategy::Greedy)),
    }
}

/// Online tree embedding followed by a tree matcher; the matching is read
/// back in the source metric.
pub struct HstPipeline<M: TreeMatcher> {
    pub hst: OnlineHst,
    pub matcher: M,
    /// Largest deletion count of a single step so far.
    pub max_step_deletions: u32,
}

impl<M: TreeMatcher> HstPipeline<M> {
    pub fn new(oracle: DistanceOracle, variant: Variant, seed: u64, matcher: M) -> Self {
        HstPipeline { hst: OnlineHst::new(oracle, variant, seed, 0), matcher, max_step_deletions: 0 }
    }

    pub fn tree_cost(&self) -> f64 {
        self.matcher.tree_cost(&self.hst.tree)
    }
}

impl<M: TreeMatcher> OnlineMatcher for HstPipeline<M> {
    fn algo(&self) -> String {
        self.matcher.name().to_string()
    }

    fn oracle(&self) -> &DistanceOracle {
        &self.hst.stream.oracle
    }

    fn push(&mut self, p: Payload<'_>) -> Result<(), MetricError> {
        self.hst.append(p)?;
        let x = (self.hst.stream.len() - 1) as u32;
        self.matcher.insert(&self.hst.tree, x);
        Ok(())
    }

    fn end_step(&mut self) -> StepDelta {
        let d = self.matcher.end_step();
        self.max_step_deletions = self.max_step_deletions.max(d.deletions);
        d
    }

    fn matching(&self) -> &RecourseMatching {
        self.matcher.matching()
    }
}

pub struct LightPipeline {
    pub oracle: DistanceOracle,
    pub light: LightMatching,
}

impl LightPipeline {
    pub fn new(oracle: DistanceOracle, strategy: TreeStrategy) -> Self {
        LightPipeline { oracle, light: LightMatching::new(strategy) }
    }
}

impl OnlineMatcher for LightPipeline {
    fn algo(&self) -> String {
        "light".to_string()
    }

    fn oracle(&self) -> &DistanceOracle {
        &self.oracle
    }

    fn push(&mut self, p: Payload<'_>) -> Result<(), MetricError> {
        let id = self.oracle.append(p)?;
        self.light.insert(&self.oracle, id.idx() as u32);
        Ok(())
    }

    fn end_step(&mut self) -> StepDelta {
        self.light.end_step()
    }

    fn matching(&self) -> &RecourseMatching {
        self.light.matching()
    }
}

/// Largest cap the exact re-matching handles (`2r + 2` free points).
pub const MAX_CAP: u32 = 9;

/// Follows an inner matcher while deleting at most `cap` edges per step.
///
/// Edges the inner matcher no longer uses are deleted most expensive first,
/// up to the cap; the freed points and the new pair are then re-matched
/// optimally among themselves.
pub struct Capped {
    pub inner: Box<dyn OnlineMatcher>,
    cap: u32,
    own: RecourseMatching,
    pending: Vec<u32>,
}

impl Capped {
    pub fn new(inner: Box<dyn OnlineMatcher>, cap: u32) -> Self {
        assert!(cap <= MAX_CAP, "cap above {MAX_CAP}");
        Capped { inner, cap, own: RecourseMatching::new(), pending: Vec::new() }
    }

    pub fn cap(&self) -> u32 {
        self.cap
    }
}

impl OnlineMatcher for Capped {
    fn algo(&self) -> String {
        format!("{}-cap{}", self.inner.algo(), self.cap)
    }

    fn oracle(&self) -> &DistanceOracle {
        self.inner.oracle()
    }

    fn push(&mut self, p: Payload<'_>) -> Result<(), MetricError> {
        self.inner.push(p)?;
        self.pending.push((self.inner.oracle().len() - 1) as u32);
        Ok(())
    }

    fn end_step(&mut self) -> StepDelta {
        self.inner.end_step();
        let o = self.inner.oracle();
        let target: std::collections::HashSet<(u32, u32)> = self.inner.matching().edges().into_iter().collect();
        let mut dropped: Vec<(f64, (u32, u32))> = self
            .own
            .edges()
            .into_iter()
            .filter(|e| !target.contains(e))
            .map(|(a, b)| (o.dist(a as usize, b as usize), (a, b)))
            .collect();
        dropped.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
        let mut free: Vec<u32> = std::mem::take(&mut self.pending);
        for &(_, (a, b)) in dropped.iter().take(self.cap as usize) {
            self.own.del(a, b);
            free.extend([a, b]);
        }
        // An odd leftover point from earlier stays free.
        let unmatched_before: Vec<u32> =
            (0..o.len() as u32).filter(|&p| !free.contains(&p) && self.own.partner(p).is_none()).collect();
        free.extend(unmatched_before.iter().take(1));
        if free.len() % 2 == 1 {
            free.pop();
        }
        free.sort_unstable();
        let idx: Vec<usize> = free.iter().map(|&p| p as usize).collect();
        if !idx.is_empty() {
            let best = mwpm_bruteforce(o, &idx).expect("small even set");
            for (a, b) in best.matching {
                self.own.add(a as u32, b as u32);
            }
        }
        self.own.end_step()
    }

    fn matching(&self) -> &RecourseMatching {
        &self.own
    }
}

/// Minimum spanning tree kept under point insertions.
#[derive(Clone, Debug, Default)]
pub struct IncrementalMst {
    edges: Vec<(f64, u32, u32)>,
    n: usize,
    weight: f64,
}

impl IncrementalMst {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    /// Adds the next point of `m`; only old tree edges and new edges can be in the new tree.
    pub fn push<M: Metric + ?Sized>(&mut self, m: &M) {
        let x = self.n as u32;
        self.n += 1;
        let mut cand = std::mem::take(&mut self.edges);
        cand.extend((0..x).map(|j| (m.dist(j as usize, x as usize), j, x)));
        cand.sort_by(|a, b| a.0.total_cmp(&b.0).then((a.1, a.2).cmp(&(b.1, b.2))));
        let mut parent: Vec<u32> = (0..self.n as u32).collect();
        fn find(p: &mut [u32], mut v: u32) -> u32 {
            while p[v as usize] != v {
                p[v as usize] = p[p[v as usize] as usize];
                v = p[v as usize];
            }
            v
        }
        self.weight = 0.0;
        for (w, a, b) in cand {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                parent[ra as usize] = rb;
                self.edges.push((w, a, b));
                self.weight += w;
            }
        }
    }
}

/// One CSV row per step, in this field order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub step: u64,
    pub algo: String,
    pub cost: f64,
    pub opt: Option<f64>,
    pub ratio: Option<f64>,
    pub mst: f64,
    pub lightness: f64,
    pub deletions: u32,
    pub additions: u32,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OptMode {
    Skip,
    /// Exact by subset dynamic programming while the prefix has at most 20 points.
    Exact,
    /// Sorted pairing; valid for one-dimensional inputs.
    Line,
}

fn opt_of(o: &DistanceOracle, mode: OptMode) -> Option<f64> {
    let n = o.len();
    match mode {
        OptMode::Skip => None,
        OptMode::Exact if n <= 20 => Some(mwpm_bruteforce(o, &(0..n).collect::<Vec<_>>()).ok()?.cost),
        OptMode::Exact => None,
        OptMode::Line => {
            let xs: Vec<f64> = o.ids().map(|p| o.coords(p).expect("line input has coordinates")[0]).collect();
            Some(mwpm_line(&xs).ok()?.cost)
        }
    }
}

/// Feeds the points of `src` in pairs and reports every step.
pub fn run_rows(alg: &mut dyn OnlineMatcher, src: &DistanceOracle, opt: OptMode, seed: u64) -> Result<Vec<BenchRow>, MetricError> {
    let mut rows = Vec::new();
    let mut mst = IncrementalMst::new();
    let ids: Vec<_> = src.ids().collect();
    for (step, pair) in ids.chunks(2).enumerate() {
        for &p in pair {
            alg.push(src.payload_of(p))?;
            mst.push(alg.oracle());
        }
        let d = alg.end_step();
        let cost = alg.cost();
        let opt = opt_of(alg.oracle(), opt);
        let ratio = opt.map(|o| if o > 0.0 { cost / o } else if cost == 0.0 { 1.0 } else { f64::INFINITY });
        let lightness = if mst.weight() > 0.0 { cost / mst.weight() } else { 1.0 };
        rows.push(BenchRow {
            step: step as u64 + 1,
            algo: alg.algo(),
            cost,
            opt,
            ratio,
            mst: mst.weight(),
            lightness,
            deletions: d.deletions,
            additions: d.additions,
            seed,
        });
    }
    Ok(rows)
}

/// Rows as CSV with a header.
pub fn rows_to_csv(rows: &[BenchRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    if rows.is_empty() {
        w.write_record(["step", "algo", "cost", "opt", "ratio", "mst", "lightness", "deletions", "additions", "seed"])
            .expect("in-memory write");
    }
    for r in rows {
        w.serialize(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::mst_cost;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_plane(n: usize, seed: u64) -> DistanceOracle {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random_range(0.0..100.0), rng.random_range(0.0..100.0)]).collect();
        DistanceOracle::from_points(2, &pts).unwrap()
    }

    #[test]
    fn incremental_mst_matches_prim() {
        let o = random_plane(40, 3);
        let mut m = IncrementalMst::new();
        let mut sub = DistanceOracle::euclidean(2);
        for p in o.ids() {
            sub.append(o.payload_of(p)).unwrap();
            m.push(&sub);
            let all: Vec<usize> = (0..sub.len()).collect();
            assert!((m.weight() - mst_cost(&sub, &all)).abs() < 1e-9);
        }
    }

    #[test]
    fn first_pair_has_ratio_one_for_every_algorithm() {
        let o = random_plane(12, 5);
        for algo in [Algo::Inward, Algo::Hp, Algo::Light] {
            let mut a = make_matcher(algo, o.mode(), Variant::Doubling, 9);
            let rows = run_rows(a.as_mut(), &o, OptMode::Exact, 9).unwrap();
            assert_eq!(rows[0].ratio, Some(1.0));
            assert!(rows.iter().all(|r| r.ratio.unwrap() >= 1.0 - 1e-9 && r.opt.unwrap() <= r.mst + 1e-9));
        }
    }

    #[test]
    fn source_cost_is_dominated_by_tree_cost() {
        let o = random_plane(30, 8);
        let mut p = HstPipeline::new(DistanceOracle::euclidean(2), Variant::Doubling, 4, Inward::new(&Default::default()));
        for q in o.ids() {
            p.push(o.payload_of(q)).unwrap();
            if q.idx() % 2 == 1 {
                p.end_step();
                assert!(p.cost() <= p.tree_cost() + 1e-9);
            }
        }
    }

    #[test]
    fn capped_respects_the_cap() {
        let o = random_plane(30, 11);
        for cap in [1, 2] {
            let inner = make_matcher(Algo::Light, o.mode(), Variant::Doubling, 1);
            let mut c = Capped::new(inner, cap);
            let rows = run_rows(&mut c, &o, OptMode::Skip, 1).unwrap();
            assert!(rows.iter().all(|r| r.deletions <= cap));
            assert_eq!(c.matching().len(), 15);
        }
    }

    #[test]
    fn csv_is_deterministic() {
        let o = random_plane(16, 2);
        let run = || {
            let mut a = make_matcher(Algo::Hp, o.mode(), Variant::Doubling, 5);
            rows_to_csv(&run_rows(a.as_mut(), &o, OptMode::Exact, 5).unwrap())
        };
        let (a, b) = (run(), run());
        assert_eq!(a, b);
        assert!(a.starts_with("step,algo,cost,opt,ratio,mst,lightness,deletions,additions,seed\n"));
    }
}
