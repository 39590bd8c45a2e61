//! Online 2-HST built from nested per-scale clusterings.
//!
//! The tree is stored compressed: only scales where a cluster branches get a
//! node. An internal node at scale `s` has label `2^s`; leaves and the nodes
//! grouping duplicate points have label 0. Pairwise tree distances never change
//! once both points are present, although a new branching node may later be
//! placed on an existing edge.

use crate::decomp::{Center, Decomposition, EuclideanDecomposition};
use crate::metric::{DistanceOracle, Metric, Payload, PointId};
use crate::nets::{ceil_log2, PointStream};
use rand::seq::SliceRandom;
use rand::Rng;
use std::collections::HashMap;
use std::fmt::Write as _;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct NodeId(pub u32);

impl NodeId {
    #[inline]
    pub fn ix(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeKind {
    Internal(i32),
    Leaf(u32),
    /// Groups points at distance zero.
    Zero,
}

#[derive(Clone, Debug)]
pub struct HstNode {
    pub parent: Option<NodeId>,
    pub kind: NodeKind,
    pub children: Vec<NodeId>,
    keys: Vec<Center>,
    /// Some point in the subtree (zero-based index).
    pub rep: u32,
}

/// Structural change, in the order it happened.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TreeEvent {
    FirstLeaf { leaf: NodeId },
    NewLeaf { leaf: NodeId, parent: NodeId },
    /// `node` placed on the edge `parent -> child`.
    Interposed { node: NodeId, parent: NodeId, child: NodeId },
    NewRoot { node: NodeId, old_root: NodeId },
}

/// Per-point access to nested cluster identities.
pub trait ChainSource {
    /// Cluster of point `x` at scale `s`.
    fn key(&mut self, x: u32, s: i32) -> Center;
    /// From this scale upward `x` shares the first point's cluster.
    fn top_bound(&mut self, x: u32) -> i32;
    /// Highest scale at which `x` and `y` are surely separated; `None` if they coincide.
    fn split_floor(&mut self, x: u32, y: u32) -> Option<i32>;
}

#[derive(Clone, Debug, Default)]
pub struct HstTree {
    nodes: Vec<HstNode>,
    root: Option<NodeId>,
    leaf_of: HashMap<u32, NodeId>,
    events: Vec<TreeEvent>,
}

impl HstTree {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn root(&self) -> Option<NodeId> {
        self.root
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, v: NodeId) -> &HstNode {
        &self.nodes[v.ix()]
    }

    pub fn parent(&self, v: NodeId) -> Option<NodeId> {
        self.nodes[v.ix()].parent
    }

    pub fn children(&self, v: NodeId) -> &[NodeId] {
        &self.nodes[v.ix()].children
    }

    pub fn events(&self) -> &[TreeEvent] {
        &self.events
    }

    pub fn leaf(&self, point: u32) -> Option<NodeId> {
        self.leaf_of.get(&point).copied()
    }

    pub fn leaf_count(&self) -> usize {
        self.leaf_of.len()
    }

    /// Points with a leaf, ascending.
    pub fn points(&self) -> Vec<u32> {
        let mut v: Vec<u32> = self.leaf_of.keys().copied().collect();
        v.sort_unstable();
        v
    }

    pub fn label(&self, v: NodeId) -> f64 {
        match self.nodes[v.ix()].kind {
            NodeKind::Internal(s) => 2f64.powi(s),
            _ => 0.0,
        }
    }

    /// Order key that strictly increases towards the root.
    #[inline]
    pub fn rank(&self, v: NodeId) -> i64 {
        match self.nodes[v.ix()].kind {
            NodeKind::Internal(s) => s as i64,
            NodeKind::Zero => i64::MIN + 1,
            NodeKind::Leaf(_) => i64::MIN,
        }
    }

    pub fn lca(&self, mut a: NodeId, mut b: NodeId) -> NodeId {
        while a != b {
            let (ra, rb) = (self.rank(a), self.rank(b));
            if ra <= rb {
                a = self.parent(a).expect("nodes share a root");
            }
            if rb <= ra && a != b {
                b = self.parent(b).expect("nodes share a root");
            }
        }
        a
    }

    /// Tree distance between two points (zero-based indices).
    pub fn dist_points(&self, a: u32, b: u32) -> f64 {
        if a == b {
            return 0.0;
        }
        let (la, lb) = (self.leaf_of[&a], self.leaf_of[&b]);
        self.label(self.lca(la, lb))
    }

    pub fn hst_distance(&self, a: PointId, b: PointId) -> Result<f64, crate::metric::MetricError> {
        for p in [a, b] {
            if p.0 == 0 || !self.leaf_of.contains_key(&(p.idx() as u32)) {
                return Err(crate::metric::MetricError::UnknownPoint(p.0));
            }
        }
        Ok(self.dist_points(a.idx() as u32, b.idx() as u32))
    }

    /// Root label; needs at least two points.
    pub fn hst_diameter(&self) -> Option<f64> {
        if self.leaf_of.len() < 2 {
            return None;
        }
        self.root.map(|r| self.label(r))
    }

    /// Path from `v` up to the root, `v` first.
    pub fn root_path(&self, v: NodeId) -> Vec<NodeId> {
        let mut out = vec![v];
        let mut cur = v;
        while let Some(p) = self.parent(cur) {
            out.push(p);
            cur = p;
        }
        out
    }

    /// Maximum number of edges on a root-to-leaf path.
    pub fn height(&self) -> usize {
        let Some(r) = self.root else { return 0 };
        let mut best = 0;
        let mut stack = vec![(r, 0usize)];
        while let Some((v, d)) = stack.pop() {
            best = best.max(d);
            for &c in &self.nodes[v.ix()].children {
                stack.push((c, d + 1));
            }
        }
        best
    }

    /// Points under `v`.
    pub fn subtree_points(&self, v: NodeId) -> Vec<u32> {
        let mut out = Vec::new();
        let mut stack = vec![v];
        while let Some(u) = stack.pop() {
            if let NodeKind::Leaf(p) = self.nodes[u.ix()].kind {
                out.push(p);
            }
            stack.extend(self.nodes[u.ix()].children.iter().copied());
        }
        out
    }

    fn push_node(&mut self, kind: NodeKind, parent: Option<NodeId>, rep: u32) -> NodeId {
        let id = NodeId(self.nodes.len() as u32);
        self.nodes.push(HstNode { parent, kind, children: Vec::new(), keys: Vec::new(), rep });
        if let NodeKind::Leaf(p) = kind {
            self.leaf_of.insert(p, id);
        }
        id
    }

    fn add_child(&mut self, parent: NodeId, child: NodeId, key: Center) {
        self.nodes[parent.ix()].children.push(child);
        self.nodes[parent.ix()].keys.push(key);
        self.nodes[child.ix()].parent = Some(parent);
    }

    /// Places a new node of `kind` on the edge above `child`, keeping the child's slot.
    fn interpose(&mut self, child: NodeId, kind: NodeKind, child_key: Center) -> NodeId {
        let parent = self.parent(child);
        let rep = self.nodes[child.ix()].rep;
        let w = self.push_node(kind, parent, rep);
        match parent {
            Some(p) => {
                let slot = self.nodes[p.ix()].children.iter().position(|&c| c == child).expect("child listed");
                self.nodes[p.ix()].children[slot] = w;
                self.events.push(TreeEvent::Interposed { node: w, parent: p, child });
            }
            None => {
                self.root = Some(w);
                self.events.push(TreeEvent::NewRoot { node: w, old_root: child });
            }
        }
        self.nodes[w.ix()].children.push(child);
        self.nodes[w.ix()].keys.push(child_key);
        self.nodes[child.ix()].parent = Some(w);
        w
    }

    fn attach_leaf(&mut self, parent: NodeId, x: u32, key: Center) -> NodeId {
        let leaf = self.push_node(NodeKind::Leaf(x), None, x);
        self.add_child(parent, leaf, key);
        self.events.push(TreeEvent::NewLeaf { leaf, parent });
        leaf
    }

    /// Adds point `x`, walking its cluster chain against the existing tree.
    pub fn insert<S: ChainSource>(&mut self, src: &mut S, x: u32) -> NodeId {
        assert!(!self.leaf_of.contains_key(&x), "point {x} inserted twice");
        let Some(root) = self.root else {
            let leaf = self.push_node(NodeKind::Leaf(x), None, x);
            self.root = Some(leaf);
            self.events.push(TreeEvent::FirstLeaf { leaf });
            return leaf;
        };
        // Compare with the whole current point set at and above the root.
        let rep = self.nodes[root.ix()].rep;
        let lo = match self.nodes[root.ix()].kind {
            NodeKind::Internal(s) => s,
            _ => match src.split_floor(x, rep) {
                Some(f) => f,
                None => return self.add_duplicate(root, x),
            },
        };
        let hi = src.top_bound(x).max(src.top_bound(rep)).max(lo);
        for t in (lo..=hi).rev() {
            let (kx, kr) = (src.key(x, t), src.key(rep, t));
            if kx != kr {
                let w = self.interpose(root, NodeKind::Internal(t + 1), kr);
                return self.attach_leaf(w, x, kx);
            }
        }
        let mut n = root;
        loop {
            let NodeKind::Internal(sn) = self.nodes[n.ix()].kind else { unreachable!("descent stays on internal nodes") };
            let k = src.key(x, sn - 1);
            let slot = self.nodes[n.ix()].keys.iter().position(|&c| c == k);
            let Some(slot) = slot else {
                return self.attach_leaf(n, x, k);
            };
            let c = self.nodes[n.ix()].children[slot];
            let rc = self.nodes[c.ix()].rep;
            let lo = match self.nodes[c.ix()].kind {
                NodeKind::Internal(sc) => sc,
                _ => match src.split_floor(x, rc) {
                    Some(f) => f,
                    None => return self.add_duplicate(c, x),
                },
            };
            for t in (lo..=sn - 2).rev() {
                let (kx, kc) = (src.key(x, t), src.key(rc, t));
                if kx != kc {
                    let w = self.interpose(c, NodeKind::Internal(t + 1), kc);
                    return self.attach_leaf(w, x, kx);
                }
            }
            assert!(
                matches!(self.nodes[c.ix()].kind, NodeKind::Internal(_)),
                "points {x} and {rc} never separated above their distance scale"
            );
            n = c;
        }
    }

    fn add_duplicate(&mut self, c: NodeId, x: u32) -> NodeId {
        let z = match self.nodes[c.ix()].kind {
            NodeKind::Zero => c,
            _ => self.interpose(c, NodeKind::Zero, Center::Point(PointId(0))),
        };
        self.attach_leaf(z, x, Center::Point(PointId(0)))
    }

    /// Indented preorder dump: `depth label point?` per line.
    pub fn export(&self) -> String {
        let mut s = String::new();
        let Some(r) = self.root else { return s };
        let mut stack = vec![(r, 0usize)];
        while let Some((v, d)) = stack.pop() {
            let node = &self.nodes[v.ix()];
            let _ = write!(s, "{:indent$}{} {}", "", d, self.label(v), indent = 2 * d);
            match node.kind {
                NodeKind::Leaf(p) => {
                    let _ = writeln!(s, " {}", p + 1);
                }
                NodeKind::Zero => {
                    let _ = writeln!(s, " z");
                }
                NodeKind::Internal(_) => s.push('\n'),
            }
            for &c in node.children.iter().rev() {
                stack.push((c, d + 1));
            }
        }
        s
    }

    /// Inverse of [`export`](Self::export).
    pub fn parse(text: &str) -> Result<HstTree, String> {
        let mut t = HstTree::new();
        let mut stack: Vec<NodeId> = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.is_empty() {
                continue;
            }
            let err = |m: &str| format!("line {}: {m}", ln + 1);
            let depth: usize = f[0].parse().map_err(|_| err("bad depth"))?;
            let label: f64 = f.get(1).ok_or_else(|| err("missing label"))?.parse().map_err(|_| err("bad label"))?;
            let kind = match f.get(2) {
                Some(&"z") => NodeKind::Zero,
                Some(p) => NodeKind::Leaf(p.parse::<u32>().map_err(|_| err("bad point id"))? - 1),
                None => {
                    if label <= 0.0 {
                        return Err(err("internal label must be positive"));
                    }
                    NodeKind::Internal(label.log2().round() as i32)
                }
            };
            if depth > stack.len() || (depth == 0 && t.root.is_some()) {
                return Err(err("bad depth"));
            }
            stack.truncate(depth);
            let parent = stack.last().copied();
            let v = t.push_node(kind, None, 0);
            match parent {
                Some(p) => t.add_child(p, v, Center::Point(PointId(0))),
                None => t.root = Some(v),
            }
            stack.push(v);
        }
        t.fix_reps();
        Ok(t)
    }

    fn fix_reps(&mut self) {
        for v in (0..self.nodes.len()).rev() {
            if let NodeKind::Leaf(p) = self.nodes[v].kind {
                let mut cur = Some(NodeId(v as u32));
                while let Some(c) = cur {
                    self.nodes[c.ix()].rep = p;
                    cur = self.nodes[c.ix()].parent;
                }
            }
        }
    }

    /// Ordered structural comparison (kinds and shape).
    pub fn same_shape(&self, other: &HstTree) -> bool {
        self.export() == other.export()
    }

    /// Builds a static tree from nested groups; used for synthetic ultrametrics.
    fn build_static(&mut self, parent: Option<NodeId>, shape: &Shape) -> NodeId {
        let v = match shape {
            Shape::Leaf(p) => self.push_node(NodeKind::Leaf(*p), parent, *p),
            Shape::Node(s, kids) => {
                let v = self.push_node(NodeKind::Internal(*s), parent, 0);
                for k in kids {
                    let c = self.build_static(Some(v), k);
                    self.nodes[v.ix()].children.push(c);
                    self.nodes[v.ix()].keys.push(Center::Point(PointId(0)));
                }
                v
            }
        };
        if parent.is_none() {
            self.root = Some(v);
            self.fix_reps();
        }
        v
    }

    /// Random static 2-HST over points `0..leaves`.
    pub fn random<R: Rng>(leaves: usize, rng: &mut R) -> HstTree {
        let mut pts: Vec<u32> = (0..leaves as u32).collect();
        pts.shuffle(rng);
        let top = 2 * (usize::BITS - leaves.leading_zeros()) as i32 + 2;
        let shape = random_shape(&pts, top, rng);
        let mut t = HstTree::new();
        t.build_static(None, &shape);
        t
    }

    /// Checks the structural invariants; returns a description of the first failure.
    pub fn check(&self) -> Result<(), String> {
        for (i, n) in self.nodes.iter().enumerate() {
            let v = NodeId(i as u32);
            if Some(v) != self.root && n.parent.is_none() {
                return Err(format!("node {i} detached"));
            }
            for &c in &n.children {
                if self.parent(c) != Some(v) {
                    return Err(format!("parent link of {} broken", c.0));
                }
                if self.rank(c) >= self.rank(v) {
                    return Err(format!("labels not decreasing below node {i}"));
                }
                if let NodeKind::Internal(_) = n.kind {
                    if self.label(c) > self.label(v) / 2.0 {
                        return Err(format!("2-HST separation fails below node {i}"));
                    }
                }
            }
        }
        Ok(())
    }
}

enum Shape {
    Leaf(u32),
    Node(i32, Vec<Shape>),
}

fn random_shape<R: Rng>(pts: &[u32], scale: i32, rng: &mut R) -> Shape {
    if pts.len() == 1 {
        return Shape::Leaf(pts[0]);
    }
    let parts = rng.random_range(2..=pts.len().min(4));
    let mut cuts: Vec<usize> = (1..pts.len()).collect();
    cuts.shuffle(rng);
    let mut cuts: Vec<usize> = cuts[..parts - 1].to_vec();
    cuts.sort_unstable();
    let mut kids = Vec::new();
    let mut start = 0;
    for &c in cuts.iter().chain(std::iter::once(&pts.len())) {
        let skip = rng.random_range(1..=2);
        kids.push(random_shape(&pts[start..c], scale - skip, rng));
        start = c;
    }
    Shape::Node(scale, kids)
}

/// Tree distances between the points of a tree, as a metric over `0..n`.
pub struct TreeMetric<'a>(pub &'a HstTree);

impl Metric for TreeMetric<'_> {
    fn len(&self) -> usize {
        self.0.leaf_count()
    }
    fn dist(&self, a: usize, b: usize) -> f64 {
        self.0.dist_points(a as u32, b as u32)
    }
}

/// Chains from the doubling decomposition, with memoized keys.
pub struct DoublingChain<'a> {
    pub stream: &'a PointStream,
    pub decomp: &'a Decomposition,
    cache: HashMap<(u32, i32), Center>,
}

impl<'a> DoublingChain<'a> {
    pub fn new(stream: &'a PointStream, decomp: &'a Decomposition) -> Self {
        DoublingChain { stream, decomp, cache: HashMap::new() }
    }
}

impl ChainSource for DoublingChain<'_> {
    fn key(&mut self, x: u32, s: i32) -> Center {
        let (stream, decomp) = (self.stream, self.decomp);
        *self.cache.entry((x, s)).or_insert_with(|| {
            Center::Point(PointId::from_idx(decomp.center_index(&stream.oracle, &stream.nets, x as usize, s)))
        })
    }
    fn top_bound(&mut self, x: u32) -> i32 {
        top_bound_of(&self.stream.oracle, x)
    }
    fn split_floor(&mut self, x: u32, y: u32) -> Option<i32> {
        split_floor_of(&self.stream.oracle, x, y)
    }
}

fn top_bound_of(o: &DistanceOracle, x: u32) -> i32 {
    let d = o.dist(x as usize, 0);
    if d > 0.0 {
        ceil_log2(d) + 2
    } else {
        i32::MIN / 4
    }
}

fn split_floor_of(o: &DistanceOracle, x: u32, y: u32) -> Option<i32> {
    let d = o.dist(x as usize, y as usize);
    (d > 0.0).then(|| ceil_log2(d) - 1)
}

/// Chains from the Euclidean decomposition.
pub struct EuclideanChain<'a> {
    pub oracle: &'a DistanceOracle,
    pub decomp: &'a mut EuclideanDecomposition,
}

impl ChainSource for EuclideanChain<'_> {
    fn key(&mut self, x: u32, s: i32) -> Center {
        self.decomp.cluster_of(self.oracle, PointId::from_idx(x as usize), s).center
    }
    fn top_bound(&mut self, x: u32) -> i32 {
        top_bound_of(self.oracle, x)
    }
    fn split_floor(&mut self, x: u32, y: u32) -> Option<i32> {
        split_floor_of(self.oracle, x, y)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    Doubling,
    Euclidean,
}

/// A point stream with its decomposition and online tree.
pub struct OnlineHst {
    pub stream: PointStream,
    pub tree: HstTree,
    pub variant: Variant,
    decomp: Decomposition,
    euclid: EuclideanDecomposition,
    cache: HashMap<(u32, i32), Center>,
}

impl OnlineHst {
    pub fn new(oracle: DistanceOracle, variant: Variant, seed: u64, trial: u64) -> Self {
        assert!(oracle.is_empty(), "start from an empty oracle and append");
        OnlineHst {
            stream: PointStream::new(oracle),
            tree: HstTree::new(),
            variant,
            decomp: Decomposition::new(seed, trial),
            euclid: EuclideanDecomposition::new(seed, trial),
            cache: HashMap::new(),
        }
    }

    pub fn decomposition(&self) -> &Decomposition {
        &self.decomp
    }

    pub fn append(&mut self, payload: Payload<'_>) -> Result<NodeId, crate::metric::MetricError> {
        let id = self.stream.append(payload)?;
        self.decomp.extend(&self.stream.nets);
        let x = id.idx() as u32;
        let leaf = match self.variant {
            Variant::Doubling => {
                let mut src = DoublingChain {
                    stream: &self.stream,
                    decomp: &self.decomp,
                    cache: std::mem::take(&mut self.cache),
                };
                let leaf = self.tree.insert(&mut src, x);
                self.cache = src.cache;
                leaf
            }
            Variant::Euclidean => {
                let mut src = EuclideanChain { oracle: &self.stream.oracle, decomp: &mut self.euclid };
                self.tree.insert(&mut src, x)
            }
        };
        Ok(leaf)
    }

    /// Builds the embedding of a whole oracle.
    pub fn embed(oracle: &DistanceOracle, variant: Variant, seed: u64, trial: u64) -> Self {
        let empty = match oracle.mode() {
            crate::metric::Mode::Euclidean { dim } => DistanceOracle::euclidean(dim),
            crate::metric::Mode::Matrix => DistanceOracle::matrix(),
        };
        let mut h = OnlineHst::new(empty, variant, seed, trial);
        let mut row = Vec::new();
        for p in oracle.ids() {
            match oracle.coords(p) {
                Some(c) => h.append(Payload::Coords(c)),
                None => {
                    row.clear();
                    row.extend((0..p.idx()).map(|k| oracle.dist(p.idx(), k)));
                    h.append(Payload::Row(&row))
                }
            }
            .expect("copying a valid oracle");
        }
        h
    }

    /// Cluster of `x` at scale `s` under the active variant.
    pub fn cluster_key(&mut self, x: u32, s: i32) -> Center {
        match self.variant {
            Variant::Doubling => Center::Point(PointId::from_idx(self.decomp.center_index(
                &self.stream.oracle,
                &self.stream.nets,
                x as usize,
                s,
            ))),
            Variant::Euclidean => self.euclid.cluster_of(&self.stream.oracle, PointId::from_idx(x as usize), s).center,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn first_point_single_leaf() {
        let h = OnlineHst::embed(&DistanceOracle::from_line(&[0.0]), Variant::Doubling, 1, 0);
        assert_eq!(h.tree.len(), 1);
        assert_eq!(h.tree.hst_diameter(), None);
        assert_eq!(h.tree.export().lines().count(), 1);
    }

    #[test]
    fn two_points_root_label() {
        for seed in 0..200 {
            let h = OnlineHst::embed(&DistanceOracle::from_line(&[0.0, 1.0]), Variant::Doubling, seed, 0);
            let l = h.tree.hst_diameter().unwrap();
            assert!([2.0, 4.0, 8.0].contains(&l), "label {l}");
        }
    }

    #[test]
    fn duplicates_share_zero_node() {
        let h = OnlineHst::embed(&DistanceOracle::from_line(&[0.0, 5.0, 5.0, 0.0, 5.0]), Variant::Doubling, 4, 0);
        assert_eq!(h.tree.dist_points(1, 2), 0.0);
        assert_eq!(h.tree.dist_points(0, 3), 0.0);
        assert_eq!(h.tree.dist_points(2, 4), 0.0);
        assert!(h.tree.dist_points(0, 1) >= 5.0);
        h.tree.check().unwrap();
    }

    #[test]
    fn lca_distance_on_random_tree() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = HstTree::random(30, &mut rng);
        t.check().unwrap();
        for a in 0..30 {
            assert_eq!(t.dist_points(a, a), 0.0);
            for b in 0..30 {
                assert_eq!(t.dist_points(a, b), t.dist_points(b, a));
            }
        }
        assert_eq!(t.leaf_count(), 30);
    }

    #[test]
    fn export_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = HstTree::random(50, &mut rng);
        let p = HstTree::parse(&t.export()).unwrap();
        assert!(t.same_shape(&p));
        assert_eq!(HstTree::parse("").unwrap().len(), 0);
    }
}
