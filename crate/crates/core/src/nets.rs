//! Online nested nets and the net-based doubling-dimension estimate.
//!
//! A point belongs to level `i` iff `i <= top_level`. The first point belongs to
//! every level; duplicates of an earlier point belong to none.

use crate::metric::{DistanceOracle, Metric, PointId};
use std::collections::HashMap;

/// Internal sentinel for the first point.
pub const TOP_INFINITE: i32 = i32::MAX;
/// Internal sentinel for duplicates.
pub const TOP_NONE: i32 = i32::MIN;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TopLevel {
    Infinite,
    Level(i32),
    /// Duplicate of an earlier point; member of no level.
    None,
}

impl TopLevel {
    fn from_raw(t: i32) -> Self {
        match t {
            TOP_INFINITE => TopLevel::Infinite,
            TOP_NONE => TopLevel::None,
            v => TopLevel::Level(v),
        }
    }
}

/// `floor(log2 d)` for positive finite `d`.
#[inline]
pub fn floor_log2(d: f64) -> i32 {
    debug_assert!(d > 0.0 && d.is_finite());
    let e = d.log2().floor() as i32;
    // Correct rounding at exact powers of two.
    if 2f64.powi(e) > d {
        e - 1
    } else if 2f64.powi(e + 1) <= d {
        e + 1
    } else {
        e
    }
}

/// `ceil(log2 d)` for positive finite `d`.
#[inline]
pub fn ceil_log2(d: f64) -> i32 {
    let f = floor_log2(d);
    if 2f64.powi(f) == d {
        f
    } else {
        f + 1
    }
}

#[derive(Clone, Debug)]
pub struct NetHierarchy {
    top: Vec<i32>,
    /// Distance to the nearest earlier point (infinite for the first).
    nn: Vec<f64>,
    /// Nearest earlier point of each duplicate, by index.
    twin: Vec<Option<u32>>,
    /// Ball counts at (level, point) that differ from the default of 1.
    counts: HashMap<(i32, u32), u32>,
    max_count: u32,
    estimates: Vec<u32>,
    /// Tolerance factor on the estimate, used when comparing against true values.
    pub slack: u32,
}

impl Default for NetHierarchy {
    fn default() -> Self {
        Self::new()
    }
}

impl NetHierarchy {
    pub fn new() -> Self {
        NetHierarchy {
            top: Vec::new(),
            nn: Vec::new(),
            twin: Vec::new(),
            counts: HashMap::new(),
            max_count: 1,
            estimates: Vec::new(),
            slack: 2,
        }
    }

    pub fn len(&self) -> usize {
        self.top.len()
    }

    pub fn is_empty(&self) -> bool {
        self.top.is_empty()
    }

    /// Builds the hierarchy over every point of `m`.
    pub fn build<M: Metric + ?Sized>(m: &M) -> Self {
        let mut h = Self::new();
        for _ in 0..m.len() {
            h.insert(m);
        }
        h
    }

    /// Inserts the next point of `m` (index `self.len()`), returning its top level.
    pub fn insert<M: Metric + ?Sized>(&mut self, m: &M) -> TopLevel {
        let j = self.top.len();
        assert!(j < m.len(), "point not yet appended");
        if j == 0 {
            self.top.push(TOP_INFINITE);
            self.nn.push(f64::INFINITY);
            self.twin.push(None);
            self.estimates.push(1);
            return TopLevel::Infinite;
        }
        let dists: Vec<f64> = (0..j).map(|k| m.dist(j, k)).collect();
        let (mut nn, mut arg) = (f64::INFINITY, 0);
        for (k, &d) in dists.iter().enumerate() {
            if d < nn {
                nn = d;
                arg = k;
            }
        }
        self.nn.push(nn);
        if nn == 0.0 {
            self.top.push(TOP_NONE);
            self.twin.push(Some(arg as u32));
            self.estimates.push(self.current_estimate());
            return TopLevel::None;
        }
        self.twin.push(None);
        let start = floor_log2(nn) - 1;
        // (top, d) for candidates that can be in some level >= start, sorted by top descending.
        let mut cand: Vec<(i32, f64)> =
            (0..j).filter(|&k| self.top[k] >= start).map(|k| (self.top[k], dists[k])).collect();
        cand.sort_by_key(|c| std::cmp::Reverse(c.0));
        let mut i = start;
        let top = loop {
            // d(x, N_i) = min over candidates with top >= i.
            let dn = cand.iter().take_while(|c| c.0 >= i).map(|c| c.1).fold(f64::INFINITY, f64::min);
            if dn <= 2f64.powi(i) {
                break i - 1;
            }
            i += 1;
        };
        self.top.push(top);
        self.update_counts(j, &dists, nn, top);
        self.estimates.push(self.current_estimate());
        TopLevel::from_raw(top)
    }

    fn update_counts(&mut self, j: usize, dists: &[f64], nn: f64, top: i32) {
        let lo = floor_log2(nn) - 3;
        for i in lo..=top {
            let radius = 2f64.powi(i + 2);
            let mut own = 1u32;
            for (k, &d) in dists.iter().enumerate() {
                if self.top[k] >= i && d <= radius {
                    own += 1;
                    let c = self.counts.entry((i, k as u32)).or_insert(1);
                    *c += 1;
                    self.max_count = self.max_count.max(*c);
                }
            }
            if own > 1 {
                self.counts.insert((i, j as u32), own);
                self.max_count = self.max_count.max(own);
            }
        }
    }

    fn current_estimate(&self) -> u32 {
        let raw = (self.max_count as f64).log2().ceil() as u32;
        let prev = self.estimates.last().copied().unwrap_or(1);
        raw.max(1).max(prev)
    }

    pub fn top_level(&self, p: PointId) -> TopLevel {
        TopLevel::from_raw(self.top[p.idx()])
    }

    /// Raw top level with sentinels `TOP_INFINITE` / `TOP_NONE`.
    #[inline]
    pub fn top_raw(&self, idx: usize) -> i32 {
        self.top[idx]
    }

    /// Whether `idx` is a duplicate of an earlier point, and of which.
    pub fn twin_of(&self, idx: usize) -> Option<usize> {
        self.twin[idx].map(|t| t as usize)
    }

    /// Distance from point `idx` to its nearest predecessor.
    pub fn nearest_prior(&self, idx: usize) -> f64 {
        self.nn[idx]
    }

    #[inline]
    pub fn in_net(&self, idx: usize, level: i32) -> bool {
        self.top[idx] >= level
    }

    /// Members of level `i`, in arrival order.
    pub fn net_at(&self, i: i32) -> Vec<PointId> {
        (0..self.top.len()).filter(|&k| self.top[k] >= i).map(PointId::from_idx).collect()
    }

    /// Nearest member of level `i` to `x`; ties go to the earlier point.
    pub fn nearest_net_point<M: Metric + ?Sized>(&self, m: &M, x: PointId, i: i32) -> (PointId, f64) {
        let mut best = (PointId(1), f64::INFINITY);
        for k in 0..self.top.len() {
            if self.top[k] >= i {
                let d = m.dist(x.idx(), k);
                if d < best.1 {
                    best = (PointId::from_idx(k), d);
                }
            }
        }
        best
    }

    /// Nontrivial level window `[i_lo, i_hi]` for a prefix with these statistics.
    pub fn level_window(min_dist: f64, diameter: f64) -> Option<(i32, i32)> {
        if !(min_dist.is_finite() && diameter > 0.0) {
            return None;
        }
        Some((floor_log2(min_dist) - 1, ceil_log2(diameter) + 3))
    }

    /// Running estimate after the first `prefix` points.
    pub fn estimate_ddim(&self, prefix: PointId) -> u32 {
        self.estimates[prefix.idx()]
    }

    /// Largest ball count seen so far.
    pub fn max_ball_count(&self) -> u32 {
        self.max_count
    }
}

/// A distance oracle together with its nets; keeps `PrefixStats::ddim_estimate` current.
#[derive(Clone, Debug)]
pub struct PointStream {
    pub oracle: DistanceOracle,
    pub nets: NetHierarchy,
}

impl PointStream {
    pub fn new(oracle: DistanceOracle) -> Self {
        let nets = NetHierarchy::build(&oracle);
        let mut s = PointStream { oracle, nets };
        if !s.oracle.is_empty() {
            let e = s.nets.estimate_ddim(PointId::from_idx(s.oracle.len() - 1));
            s.oracle.stats_mut().ddim_estimate = e;
        }
        s
    }

    pub fn append(&mut self, payload: crate::metric::Payload<'_>) -> Result<PointId, crate::metric::MetricError> {
        let id = self.oracle.append(payload)?;
        self.nets.insert(&self.oracle);
        self.oracle.stats_mut().ddim_estimate = self.nets.estimate_ddim(id);
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.oracle.len()
    }

    pub fn is_empty(&self) -> bool {
        self.oracle.is_empty()
    }
}
