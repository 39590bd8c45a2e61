//! Matchings light relative to the MST: an online spanning tree, its Euler
//! tour, and a shortcut Hamilton path whose order drives [`LineMatching`].
//!
//! Each vertex keeps one *picked* occurrence in the tour (the head of an arc,
//! or the tour start). The path visits vertices in tour order of their picked
//! occurrences, so its cost is at most the tour cost, i.e. twice the tree.
//! Every link or cut is a constant number of splices on both sequences.

use crate::line_matching::{EdgeEvent, Handle, LineMatching};
use crate::metric::Metric;
use crate::recourse::{RecourseMatching, StepDelta};
use crate::seq::{SeqForest, SeqHandle};
use std::collections::HashMap;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TreeStrategy {
    /// Attach to the nearest earlier point.
    Greedy,
    /// Greedy, then up to `budget` best-improvement swaps at the new point.
    SwapImproved { budget: usize },
}

#[derive(Clone, Debug)]
pub struct LightMatching {
    strategy: TreeStrategy,
    adj: Vec<Vec<u32>>,
    weights: HashMap<(u32, u32), f64>,
    tour: SeqForest<(u32, u32)>,
    arc: HashMap<(u32, u32), SeqHandle>,
    picked: Vec<Option<SeqHandle>>,
    lm: LineMatching,
    ph: Vec<Handle>,
    m: RecourseMatching,
    tree_weight: f64,
    /// Tour and path splices of every link and cut so far.
    pub event_splices: Vec<(u32, u32)>,
    path_splices: u64,
}

fn ekey(a: u32, b: u32) -> (u32, u32) {
    (a.min(b), a.max(b))
}

impl LightMatching {
    pub fn new(strategy: TreeStrategy) -> Self {
        LightMatching {
            strategy,
            adj: Vec::new(),
            weights: HashMap::new(),
            tour: SeqForest::new(),
            arc: HashMap::new(),
            picked: Vec::new(),
            lm: LineMatching::new(),
            ph: Vec::new(),
            m: RecourseMatching::new(),
            tree_weight: 0.0,
            event_splices: Vec::new(),
            path_splices: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.adj.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adj.is_empty()
    }

    pub fn tree_weight(&self) -> f64 {
        self.tree_weight
    }

    pub fn tree_edges(&self) -> Vec<(u32, u32)> {
        let mut v: Vec<(u32, u32)> = self.weights.keys().copied().collect();
        v.sort_unstable();
        v
    }

    pub fn matching(&self) -> &RecourseMatching {
        &self.m
    }

    pub fn matching_mut(&mut self) -> &mut RecourseMatching {
        &mut self.m
    }

    pub fn end_step(&mut self) -> StepDelta {
        self.m.end_step()
    }

    /// Line-matching modifications so far.
    pub fn list_modifications(&self) -> u64 {
        self.lm.modifications()
    }

    /// Vertices in path order for the component of `v`.
    pub fn path(&self, v: u32) -> Vec<u32> {
        self.lm.elements(self.ph[v as usize]).into_iter().map(|h| self.lm.tag(h)).collect()
    }

    /// Arcs of the tour of `v`'s component, from its start.
    pub fn tour(&self, v: u32) -> Vec<(u32, u32)> {
        self.tour_of(v).map_or_else(Vec::new, |t| self.tour.to_vec(t))
    }

    fn tour_of(&self, v: u32) -> Option<SeqHandle> {
        self.adj[v as usize].first().map(|&w| self.arc[&(v, w)])
    }

    fn pos(&self, v: u32) -> usize {
        self.picked[v as usize].map_or(0, |a| self.tour.index(a) + 1)
    }

    /// Path vertices whose picked occurrence lies at or before tour position `limit`.
    fn count_up_to(&self, v: u32, limit: usize) -> usize {
        let root = self.lm.root(self.ph[v as usize]);
        let (mut lo, mut hi) = (0, self.lm.len(root));
        while lo < hi {
            let mid = (lo + hi) / 2;
            let w = self.lm.tag(self.lm.select(root, mid + 1));
            if self.pos(w) <= limit {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        lo
    }

    fn lm_split(&mut self, h: Handle, k: usize) -> (Handle, Handle) {
        self.path_splices += 1;
        self.lm.split(h, k).expect("valid path split")
    }

    fn lm_merge(&mut self, a: Handle, b: Handle) -> Handle {
        self.path_splices += 1;
        self.lm.merge(a, b).expect("merge")
    }

    /// Makes `v` the start of its tour and of its path.
    fn reroot(&mut self, v: u32) {
        let Some(a) = self.picked[v as usize] else { return };
        let t = self.tour.root(a);
        let first = self.tour.select(t, 0);
        let old_root = self.tour.get(first).0;
        let last = self.tour.last(t);
        let (alpha, beta) = self.tour.split(t, self.tour.index(a) + 1);
        self.tour.concat(beta, alpha);
        // The start occurrence becomes the closing one.
        if self.picked[old_root as usize].is_none() {
            self.picked[old_root as usize] = Some(last);
        }
        self.picked[v as usize] = None;
        let h = self.ph[v as usize];
        let k = self.lm.rank(h) - 1;
        if k > 0 {
            let (front, back) = self.lm_split(h, k);
            self.lm_merge(back, front);
        }
    }

    /// Joins the components of `u` and `v` by the tree edge `uv`.
    pub fn link(&mut self, u: u32, v: u32, w: f64) {
        let (t0, p0) = (self.tour.splices(), self.path_splices);
        assert_ne!(self.lm.root(self.ph[u as usize]), self.lm.root(self.ph[v as usize]), "already connected");
        self.reroot(v);
        let tu = self.tour_of(u);
        let tv = self.tour_of(v);
        let down = self.tour.create((u, v));
        let up = self.tour.create((v, u));
        let at = self.pos(u);
        let (l, r) = match tu {
            Some(t) => self.tour.split(t, at),
            None => (None, None),
        };
        let x = self.tour.concat(l, Some(down));
        let x = self.tour.concat(x, tv);
        let x = self.tour.concat(x, Some(up));
        self.tour.concat(x, r);
        self.arc.insert((u, v), down);
        self.arc.insert((v, u), up);
        self.picked[v as usize] = Some(down);
        self.adj[u as usize].push(v);
        self.adj[v as usize].push(u);
        self.weights.insert(ekey(u, v), w);
        self.tree_weight += w;

        let (hu, hv) = (self.ph[u as usize], self.ph[v as usize]);
        let k = self.lm.rank(hu);
        let len = self.lm.len(hu);
        if k < len {
            let (l, r) = self.lm_split(hu, k);
            let x = self.lm_merge(l, hv);
            self.lm_merge(x, r);
        } else {
            self.lm_merge(hu, hv);
        }
        self.event_splices.push(((self.tour.splices() - t0) as u32, (self.path_splices - p0) as u32));
    }

    /// Removes the tree edge `ab`.
    pub fn cut(&mut self, a: u32, b: u32) {
        let (t0, p0) = (self.tour.splices(), self.path_splices);
        let (ab, ba) = (self.arc[&(a, b)], self.arc[&(b, a)]);
        let (mut i, mut j) = (self.tour.index(ab), self.tour.index(ba));
        let (down, up, p, c) = if i < j { (ab, ba, a, b) } else { (ba, ab, b, a) };
        if i > j {
            std::mem::swap(&mut i, &mut j);
        }
        let lo = self.count_up_to(c, i);
        let hi = self.count_up_to(c, j);

        let t = self.tour.root(down);
        let (x, rest) = self.tour.split(t, i);
        let x_last = x.map(|h| self.tour.last(h));
        let (_, rest) = self.tour.split(rest.expect("down arc"), 1);
        let (y, rest) = match rest {
            Some(r) if j - i - 1 > 0 => self.tour.split(r, j - i - 1),
            other => (None, other),
        };
        let (_, z) = self.tour.split(rest.expect("up arc"), 1);
        self.tour.concat(x, z);
        self.tour.destroy(down);
        self.tour.destroy(up);
        self.arc.remove(&(a, b));
        self.arc.remove(&(b, a));
        if self.picked[c as usize] == Some(down) {
            self.picked[c as usize] = None;
        }
        if self.picked[p as usize] == Some(up) {
            self.picked[p as usize] = x_last;
        }
        debug_assert_eq!(hi - lo, y.map_or(0, |h| self.tour.len(h)) / 2 + 1);
        self.adj[a as usize].retain(|&w| w != b);
        self.adj[b as usize].retain(|&w| w != a);
        self.tree_weight -= self.weights.remove(&ekey(a, b)).expect("tree edge");

        let h = self.ph[c as usize];
        let len = self.lm.len(h);
        let (before, rest) = if lo > 0 {
            let (l, r) = self.lm_split(h, lo);
            (Some(l), r)
        } else {
            (None, self.lm.root(h))
        };
        let after = if hi < len { Some(self.lm_split(rest, hi - lo).1) } else { None };
        if let (Some(l), Some(r)) = (before, after) {
            self.lm_merge(l, r);
        }
        self.event_splices.push(((self.tour.splices() - t0) as u32, (self.path_splices - p0) as u32));
    }

    fn sync(&mut self) {
        for ev in self.lm.take_events() {
            match ev {
                EdgeEvent::Add(a, b) => self.m.add(self.lm.tag(a), self.lm.tag(b)),
                EdgeEvent::Del(a, b) => self.m.del(self.lm.tag(a), self.lm.tag(b)),
            }
        }
    }

    /// Adds point `x` (the next index of `metric`) to the tree and the matching.
    pub fn insert<M: Metric + ?Sized>(&mut self, metric: &M, x: u32) {
        assert_eq!(x as usize, self.adj.len(), "points arrive in index order");
        self.adj.push(Vec::new());
        self.picked.push(None);
        let h = self.lm.create(x);
        self.ph.push(h);
        if x > 0 {
            let (u, d) = (0..x)
                .map(|u| (u, metric.dist(u as usize, x as usize)))
                .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
                .expect("earlier points");
            self.link(u, x, d);
            if let TreeStrategy::SwapImproved { budget } = self.strategy {
                for _ in 0..budget {
                    if !self.improve_at(metric, x) {
                        break;
                    }
                }
            }
        }
        self.sync();
    }

    /// One best-improvement swap adding an edge at `x`; false if none helps.
    fn improve_at<M: Metric + ?Sized>(&mut self, metric: &M, x: u32) -> bool {
        let n = self.adj.len();
        // Heaviest edge on the tree path from x to every vertex.
        let mut heaviest: Vec<Option<(f64, u32, u32)>> = vec![None; n];
        let mut seen = vec![false; n];
        seen[x as usize] = true;
        let mut stack = vec![x];
        while let Some(v) = stack.pop() {
            for &w in &self.adj[v as usize] {
                if seen[w as usize] {
                    continue;
                }
                seen[w as usize] = true;
                let e = (self.weights[&ekey(v, w)], v, w);
                heaviest[w as usize] = Some(match heaviest[v as usize] {
                    Some(h) if h.0 >= e.0 => h,
                    _ => e,
                });
                stack.push(w);
            }
        }
        let mut best: Option<(f64, u32, f64, (u32, u32))> = None;
        for u in 0..n as u32 {
            let Some((hw, a, b)) = heaviest[u as usize] else { continue };
            if self.adj[x as usize].contains(&u) {
                continue;
            }
            let d = metric.dist(u as usize, x as usize);
            let gain = hw - d;
            if gain > 1e-12 * hw.max(1e-300) && best.is_none_or(|bb| gain > bb.0) {
                best = Some((gain, u, d, (a, b)));
            }
        }
        let Some((_, u, d, (a, b))) = best else { return false };
        self.cut(a, b);
        self.link(x, u, d);
        true
    }

    /// Checks tour, path and shortcut invariants on every component.
    pub fn check<M: Metric + ?Sized>(&self, metric: &M) -> Result<(), String> {
        let n = self.adj.len() as u32;
        let mut done = vec![false; n as usize];
        for s in 0..n {
            if done[s as usize] {
                continue;
            }
            let path = self.path(s);
            for &v in &path {
                done[v as usize] = true;
            }
            let tour = self.tour(s);
            if tour.len() != 2 * (path.len() - 1) {
                return Err(format!("tour of {s} has {} arcs for {} vertices", tour.len(), path.len()));
            }
            let mut seen_arcs = std::collections::HashSet::new();
            for (k, &(u, v)) in tour.iter().enumerate() {
                let (nu, _) = tour[(k + 1) % tour.len()];
                if v != nu {
                    return Err(format!("tour breaks after arc {u}->{v}"));
                }
                if !self.weights.contains_key(&ekey(u, v)) || !seen_arcs.insert((u, v)) {
                    return Err(format!("arc {u}->{v} missing from the tree or repeated"));
                }
            }
            let start = tour.first().map_or(s, |a| a.0);
            let mut last = None;
            for &v in &path {
                let ok = match self.picked[v as usize] {
                    None => v == start,
                    Some(a) => self.tour.get(a).1 == v,
                };
                if !ok {
                    return Err(format!("picked occurrence of {v} is not on the tour"));
                }
                let p = self.pos(v);
                if last.is_some_and(|l| p <= l) {
                    return Err(format!("path order of {v} disagrees with the tour"));
                }
                last = Some(p);
            }
            let path_cost: f64 = path.windows(2).map(|w| metric.dist(w[0] as usize, w[1] as usize)).sum();
            let tree_cost: f64 = tour.iter().map(|&(u, v)| self.weights[&ekey(u, v)]).sum::<f64>() / 2.0;
            if path_cost > 2.0 * tree_cost * (1.0 + 1e-9) + 1e-9 {
                return Err(format!("path cost {path_cost} exceeds twice the tree {tree_cost}"));
            }
            self.lm.check(self.ph[s as usize]).map_err(|e| format!("line matching: {e:?}"))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::{mst_cost, mwpm_bruteforce};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn first_pair_is_matched() {
        let pts = vec![0.0, 3.0];
        let mut l = LightMatching::new(TreeStrategy::Greedy);
        l.insert(&pts, 0);
        l.insert(&pts, 1);
        assert_eq!(l.end_step(), StepDelta { deletions: 0, additions: 1 });
        assert_eq!(l.matching().cost(|a, b| pts.dist(a as usize, b as usize)), 3.0);
    }

    #[test]
    fn greedy_on_a_line_builds_the_path() {
        let pts: Vec<f64> = (1..=12).map(f64::from).collect();
        let mut l = LightMatching::new(TreeStrategy::Greedy);
        for x in 0..12 {
            l.insert(&pts, x);
        }
        assert_eq!(l.tree_weight(), 11.0);
        assert_eq!(l.path(0), (0..12).collect::<Vec<_>>());
        l.check(&pts).unwrap();
    }

    #[test]
    fn cutting_a_leaf_edge_on_a_three_path() {
        let pts = vec![0.0, 1.0, 2.0];
        let mut l = LightMatching::new(TreeStrategy::Greedy);
        for x in 0..3 {
            l.insert(&pts, x);
        }
        l.cut(1, 2);
        assert_eq!(l.path(0), vec![0, 1]);
        assert_eq!(l.path(2), vec![2]);
        assert_eq!(*l.event_splices.last().unwrap(), (4, 1));
        l.check(&pts).unwrap();
    }

    #[test]
    fn random_churn_keeps_tours_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pts: Vec<f64> = (0..30).map(|_| rng.random_range(0.0..100.0)).collect();
        let mut l = LightMatching::new(TreeStrategy::Greedy);
        for x in 0..30 {
            l.insert(&pts, x);
        }
        for _ in 0..300 {
            let edges = l.tree_edges();
            let (a, b) = edges[rng.random_range(0..edges.len())];
            l.cut(a, b);
            l.check(&pts).unwrap();
            // Reconnect across the cut with a random pair.
            let side: std::collections::HashSet<u32> = l.path(a).into_iter().collect();
            let u = *side.iter().nth(rng.random_range(0..side.len())).unwrap();
            let others: Vec<u32> = (0..30).filter(|v| !side.contains(v)).collect();
            let v = others[rng.random_range(0..others.len())];
            l.link(u, v, pts.dist(u as usize, v as usize));
            l.check(&pts).unwrap();
        }
        assert!(l.event_splices.iter().all(|&(t, p)| t <= 8 && p <= 8));
    }

    #[test]
    fn swaps_never_hurt_and_matching_is_light() {
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts: Vec<f64> = (0..16).map(|_| rng.random_range(0.0..1000.0)).collect();
            let mut g = LightMatching::new(TreeStrategy::Greedy);
            let mut s = LightMatching::new(TreeStrategy::SwapImproved { budget: 2 });
            for x in 0..16 {
                g.insert(&pts, x);
                s.insert(&pts, x);
                assert!(s.tree_weight() <= g.tree_weight() + 1e-9);
                s.check(&pts).unwrap();
            }
            let all: Vec<usize> = (0..16).collect();
            let mst = mst_cost(&pts, &all);
            let opt = mwpm_bruteforce(&pts, &all).unwrap().cost;
            let cost = s.matching().cost(|a, b| pts.dist(a as usize, b as usize));
            assert_eq!(s.matching().len(), 8);
            assert!(cost >= opt - 1e-9);
            // Nesting depth of the line matching times the path cost.
            assert!(cost <= 4.0 * 2.0 * s.tree_weight() + 1e-9 && s.tree_weight() >= mst - 1e-9);
        }
    }
}
