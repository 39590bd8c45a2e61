//! Online matchings on a growing ultrametric tree.
//!
//! [`Inward`] keeps, for every node, all but at most one of its active points
//! matched inside the node; such matchings are optimal. [`HeavyPathInward`]
//! relaxes this to heavy-path tops and keeps the per-path order lists in
//! [`LineMatching`], trading exactness (factor 2) for polylogarithmic recourse.
//!
//! Both follow the tree through its event log, so they work on static trees
//! with inactive leaves and on trees that grow while points arrive.

use crate::hst::{HstTree, NodeId, NodeKind, TreeEvent};
use crate::line_matching::{EdgeEvent, Handle, LineMatching};
use crate::recourse::{RecourseMatching, StepDelta};
use std::collections::{HashMap, HashSet};

/// Common interface of the ultrametric matchers.
pub trait TreeMatcher {
    /// Activates point `x`, whose leaf must already be in `tree`.
    fn insert(&mut self, tree: &HstTree, x: u32);
    fn matching(&self) -> &RecourseMatching;
    fn matching_mut(&mut self) -> &mut RecourseMatching;
    fn name(&self) -> &'static str;

    fn end_step(&mut self) -> StepDelta {
        self.matching_mut().end_step()
    }

    /// Cost under the tree metric.
    fn tree_cost(&self, tree: &HstTree) -> f64 {
        self.matching().cost(|a, b| tree.dist_points(a, b))
    }
}

fn point_of(tree: &HstTree, v: NodeId) -> u32 {
    match tree.node(v).kind {
        NodeKind::Leaf(p) => p,
        _ => panic!("node {v:?} is not a leaf"),
    }
}

// ---------------------------------------------------------------- inward

#[derive(Clone, Debug, Default)]
pub struct Inward {
    count: Vec<u32>,
    /// The point of the subtree not matched inside it, for odd counts.
    esc: Vec<Option<u32>>,
    seen_events: usize,
    m: RecourseMatching,
    /// Deletions since the last `end_step`.
    step_deletions: usize,
}

impl Inward {
    /// Starts on `tree`, whose current leaves are all inactive.
    pub fn new(tree: &HstTree) -> Self {
        let mut s = Inward { seen_events: tree.events().len(), ..Default::default() };
        s.grow(tree);
        s
    }

    fn grow(&mut self, tree: &HstTree) {
        self.count.resize(tree.len(), 0);
        self.esc.resize(tree.len(), None);
    }

    fn sync(&mut self, tree: &HstTree) {
        self.grow(tree);
        for ev in &tree.events()[self.seen_events..] {
            match *ev {
                TreeEvent::Interposed { node, child, .. } | TreeEvent::NewRoot { node, old_root: child } => {
                    self.count[node.ix()] = self.count[child.ix()];
                    self.esc[node.ix()] = self.esc[child.ix()];
                }
                TreeEvent::FirstLeaf { .. } | TreeEvent::NewLeaf { .. } => {}
            }
        }
        self.seen_events = tree.events().len();
    }

    /// Deletions performed since the last step boundary.
    pub fn step_deletions(&self) -> usize {
        self.step_deletions
    }

    pub fn count(&self, v: NodeId) -> u32 {
        self.count[v.ix()]
    }
}

impl TreeMatcher for Inward {
    fn insert(&mut self, tree: &HstTree, x: u32) {
        self.sync(tree);
        let mut p = x;
        loop {
            let leaf = tree.leaf(p).expect("point has a leaf");
            debug_assert_eq!(self.count[leaf.ix()], 0);
            let path = tree.root_path(leaf);
            let Some(k) = path.iter().position(|v| self.count[v.ix()] % 2 == 1) else {
                for v in &path {
                    self.count[v.ix()] += 1;
                    self.esc[v.ix()] = Some(p);
                }
                break;
            };
            for v in &path[..k] {
                self.count[v.ix()] += 1;
                self.esc[v.ix()] = Some(p);
            }
            let y = self.esc[path[k].ix()].expect("odd node has an escape point");
            for v in &path[k..] {
                self.count[v.ix()] += 1;
            }
            match self.m.partner(y) {
                None => {
                    self.m.add(p, y);
                    for v in &path[k..] {
                        self.esc[v.ix()] = None;
                    }
                    break;
                }
                Some(yh) => {
                    let ly = tree.leaf(y).expect("leaf");
                    let lyh = tree.leaf(yh).expect("leaf");
                    let top = tree.lca(ly, lyh);
                    self.m.del(y, yh);
                    self.step_deletions += 1;
                    self.m.add(p, y);
                    for v in &path[k..] {
                        if *v == top {
                            break;
                        }
                        self.esc[v.ix()] = None;
                    }
                    let rtop = tree.rank(top);
                    for v in tree.root_path(lyh) {
                        self.count[v.ix()] -= 1;
                        if tree.rank(v) < rtop {
                            self.esc[v.ix()] = None;
                        }
                    }
                    p = yh;
                }
            }
        }
    }

    fn matching(&self) -> &RecourseMatching {
        &self.m
    }

    fn matching_mut(&mut self) -> &mut RecourseMatching {
        &mut self.m
    }

    fn name(&self) -> &'static str {
        "inward"
    }

    fn end_step(&mut self) -> StepDelta {
        self.step_deletions = 0;
        self.m.end_step()
    }
}

/// Per node: active leaves and edges with both ends inside.
fn node_tallies(tree: &HstTree, active: &HashSet<u32>, edges: &[(u32, u32)]) -> (Vec<u32>, Vec<u32>) {
    let n = tree.len();
    let mut cnt = vec![0u32; n];
    let mut internal = vec![0u32; n];
    for &p in active {
        for v in tree.root_path(tree.leaf(p).expect("leaf")) {
            cnt[v.ix()] += 1;
        }
    }
    for &(a, b) in edges {
        let l = tree.lca(tree.leaf(a).expect("leaf"), tree.leaf(b).expect("leaf"));
        for v in tree.root_path(l) {
            internal[v.ix()] += 1;
        }
    }
    (cnt, internal)
}

/// Checks that every node holds `floor(count/2)` internal edges.
pub fn check_inward(tree: &HstTree, active: &HashSet<u32>, edges: &[(u32, u32)]) -> Result<(), String> {
    let Some(root) = tree.root() else { return Ok(()) };
    let (cnt, internal) = node_tallies(tree, active, edges);
    let mut stack = vec![root];
    while let Some(v) = stack.pop() {
        if internal[v.ix()] != cnt[v.ix()] / 2 {
            return Err(format!("node {} has {} internal edges for {} active points", v.0, internal[v.ix()], cnt[v.ix()]));
        }
        stack.extend(tree.children(v).iter().copied());
    }
    Ok(())
}

// ---------------------------------------------------------------- heavy paths

#[derive(Clone, Copy, Debug, Default)]
struct UnitInfo {
    node: NodeId,
    /// The bottom leaf of its own path, rather than a light child.
    selfleaf: bool,
    order: u64,
}

#[derive(Clone, Copy, Debug, Default)]
struct PathList {
    set: Option<Handle>,
    /// Unit held out of `set` when the list is odd.
    pin: Option<Handle>,
}

#[derive(Clone, Debug, Default)]
pub struct HeavyPathInward {
    weight: Vec<u32>,
    count: Vec<u32>,
    heavy: Vec<Option<NodeId>>,
    light_unit: Vec<Option<Handle>>,
    leaf_unit: Vec<Option<Handle>>,
    uinfo: Vec<UnitInfo>,
    paths: HashMap<NodeId, PathList>,
    lm: LineMatching,
    realized: HashMap<(Handle, Handle), Option<(u32, u32)>>,
    touched: Vec<NodeId>,
    next_order: u64,
    seen_events: usize,
    m: RecourseMatching,
}

fn hkey(a: Handle, b: Handle) -> (Handle, Handle) {
    (a.min(b), a.max(b))
}

impl HeavyPathInward {
    /// Starts on `tree`, whose current leaves are all inactive.
    pub fn new(tree: &HstTree) -> Self {
        let mut s = HeavyPathInward { seen_events: tree.events().len(), lm: LineMatching::new(), ..Default::default() };
        s.grow(tree);
        if let Some(root) = tree.root() {
            // Post-order weights, then heavy children and path tops.
            let mut order = Vec::new();
            let mut stack = vec![root];
            while let Some(v) = stack.pop() {
                order.push(v);
                stack.extend(tree.children(v).iter().copied());
            }
            for &v in order.iter().rev() {
                s.weight[v.ix()] = match tree.node(v).kind {
                    NodeKind::Leaf(_) => 1,
                    _ => tree.children(v).iter().map(|c| s.weight[c.ix()]).sum(),
                };
            }
            for &v in &order {
                s.heavy[v.ix()] = s.desired_heavy(tree, v);
                let is_top = match tree.parent(v) {
                    None => true,
                    Some(p) => s.heavy[p.ix()] != Some(v),
                };
                if is_top {
                    s.paths.insert(v, PathList::default());
                }
            }
        }
        s
    }

    /// Line-matching modifications so far.
    pub fn list_modifications(&self) -> u64 {
        self.lm.modifications()
    }

    fn grow(&mut self, tree: &HstTree) {
        let n = tree.len();
        self.weight.resize(n, 0);
        self.count.resize(n, 0);
        self.heavy.resize(n, None);
        self.light_unit.resize(n, None);
        self.leaf_unit.resize(n, None);
    }

    fn desired_heavy(&self, tree: &HstTree, u: NodeId) -> Option<NodeId> {
        let w = self.weight[u.ix()];
        tree.children(u).iter().copied().find(|c| 2 * self.weight[c.ix()] > w)
    }

    fn top_of(&self, tree: &HstTree, u: NodeId) -> NodeId {
        let mut v = u;
        while let Some(p) = tree.parent(v) {
            if self.heavy[p.ix()] == Some(v) {
                v = p;
            } else {
                break;
            }
        }
        v
    }

    fn attach(&self, tree: &HstTree, h: Handle) -> NodeId {
        let u = self.uinfo[h as usize];
        if u.selfleaf {
            u.node
        } else {
            tree.parent(u.node).expect("light child has a parent")
        }
    }

    /// Whether unit `a` precedes unit `b` along their path.
    fn before(&self, tree: &HstTree, a: Handle, b: Handle) -> bool {
        let (ra, rb) = (tree.rank(self.attach(tree, a)), tree.rank(self.attach(tree, b)));
        ra > rb || (ra == rb && self.uinfo[a as usize].order < self.uinfo[b as usize].order)
    }

    fn new_unit(&mut self, node: NodeId, selfleaf: bool) -> Handle {
        let h = self.lm.create(0);
        if self.uinfo.len() <= h as usize {
            self.uinfo.resize(h as usize + 1, UnitInfo::default());
        }
        self.uinfo[h as usize] = UnitInfo { node, selfleaf, order: self.next_order };
        self.next_order += 1;
        h
    }

    fn place(&mut self, tree: &HstTree, top: NodeId, h: Handle) {
        let set = self.paths[&top].set;
        let new = match set {
            None => h,
            Some(s) => {
                let pos = self.lm.count_prefix(s, |x| self.before(tree, x, h));
                self.lm.insert_handle(s, pos, h).expect("valid position")
            }
        };
        self.paths.get_mut(&top).expect("path").set = Some(new);
    }

    fn unpin(&mut self, tree: &HstTree, top: NodeId) {
        if let Some(p) = self.paths.get_mut(&top).expect("path").pin.take() {
            self.place(tree, top, p);
        }
    }

    fn repin(&mut self, tree: &HstTree, top: NodeId) {
        let Some(s) = self.paths[&top].set else { return };
        if self.lm.len(s).is_multiple_of(2) {
            return;
        }
        // First unit of the first attach group that makes the prefix odd.
        let elems = self.lm.elements(s);
        let mut i = 0;
        let mut prefix = 0usize;
        let pin = loop {
            let g = self.attach(tree, elems[i]);
            let mut j = i;
            while j < elems.len() && self.attach(tree, elems[j]) == g {
                j += 1;
            }
            prefix += j - i;
            if prefix % 2 == 1 {
                break elems[i];
            }
            i = j;
        };
        let rest = self.lm.detach(pin).expect("live unit");
        let pl = self.paths.get_mut(&top).expect("path");
        pl.set = rest;
        pl.pin = Some(pin);
    }

    fn insert_unit(&mut self, tree: &HstTree, top: NodeId, h: Handle) {
        self.unpin(tree, top);
        self.place(tree, top, h);
        self.repin(tree, top);
        self.touched.push(top);
    }

    fn remove_unit(&mut self, tree: &HstTree, top: NodeId, h: Handle) {
        self.unpin(tree, top);
        let rest = self.lm.detach(h).expect("live unit");
        self.lm.delete(h).expect("detached unit is a singleton");
        self.paths.get_mut(&top).expect("path").set = rest;
        self.repin(tree, top);
        self.touched.push(top);
    }

    /// `a`, the heavy child of `u`, becomes light.
    fn split_below(&mut self, tree: &HstTree, u: NodeId, a: NodeId) {
        let t = self.top_of(tree, u);
        self.unpin(tree, t);
        self.heavy[u.ix()] = None;
        let ru = tree.rank(u);
        let (top_set, bot_set) = match self.paths[&t].set {
            None => (None, None),
            Some(s) => {
                let k = self.lm.count_prefix(s, |x| tree.rank(self.attach(tree, x)) >= ru);
                let m = self.lm.len(s);
                if k == 0 {
                    (None, Some(s))
                } else if k == m {
                    (Some(s), None)
                } else {
                    let (l, r) = self.lm.split(s, k).expect("valid split");
                    (Some(l), Some(r))
                }
            }
        };
        self.paths.get_mut(&t).expect("path").set = top_set;
        self.paths.insert(a, PathList { set: bot_set, pin: None });
        self.repin(tree, a);
        if self.count[a.ix()] % 2 == 1 {
            let h = self.new_unit(a, false);
            self.light_unit[a.ix()] = Some(h);
            self.place(tree, t, h);
        }
        self.repin(tree, t);
        self.touched.push(t);
        self.touched.push(a);
    }

    /// `b`, a light child of `u`, becomes its heavy child.
    fn join_below(&mut self, tree: &HstTree, u: NodeId, b: NodeId) {
        let t = self.top_of(tree, u);
        self.unpin(tree, t);
        if let Some(h) = self.light_unit[b.ix()].take() {
            let rest = self.lm.detach(h).expect("live unit");
            self.lm.delete(h).expect("singleton");
            self.paths.get_mut(&t).expect("path").set = rest;
        }
        self.unpin(tree, b);
        let pb = self.paths.remove(&b).expect("light child heads a path");
        self.heavy[u.ix()] = Some(b);
        let merged = match (self.paths[&t].set, pb.set) {
            (Some(x), Some(y)) => Some(self.lm.merge(x, y).expect("merge")),
            (x, y) => x.or(y),
        };
        self.paths.get_mut(&t).expect("path").set = merged;
        self.repin(tree, t);
        self.touched.push(t);
    }

    fn rebalance(&mut self, tree: &HstTree, u: NodeId) {
        let want = self.desired_heavy(tree, u);
        let have = self.heavy[u.ix()];
        if want == have {
            return;
        }
        if let Some(a) = have {
            self.split_below(tree, u, a);
        }
        if let Some(b) = want {
            self.join_below(tree, u, b);
        }
    }

    fn sync(&mut self, tree: &HstTree) {
        self.grow(tree);
        let events: Vec<TreeEvent> = tree.events()[self.seen_events..].to_vec();
        self.seen_events = tree.events().len();
        for ev in events {
            match ev {
                TreeEvent::FirstLeaf { leaf } => {
                    self.weight[leaf.ix()] = 1;
                    self.paths.insert(leaf, PathList::default());
                }
                TreeEvent::Interposed { node, parent, child } => {
                    self.weight[node.ix()] = self.weight[child.ix()];
                    self.count[node.ix()] = self.count[child.ix()];
                    self.heavy[node.ix()] = Some(child);
                    if self.heavy[parent.ix()] == Some(child) {
                        self.heavy[parent.ix()] = Some(node);
                    } else {
                        self.replace_top(child, node);
                    }
                }
                TreeEvent::NewRoot { node, old_root } => {
                    self.weight[node.ix()] = self.weight[old_root.ix()];
                    self.count[node.ix()] = self.count[old_root.ix()];
                    self.heavy[node.ix()] = Some(old_root);
                    let pl = self.paths.remove(&old_root).expect("root heads a path");
                    self.paths.insert(node, pl);
                }
                TreeEvent::NewLeaf { leaf, parent } => {
                    self.weight[leaf.ix()] = 1;
                    self.paths.insert(leaf, PathList::default());
                    let anc = tree.root_path(parent);
                    for v in &anc {
                        self.weight[v.ix()] += 1;
                    }
                    for v in anc {
                        self.rebalance(tree, v);
                    }
                }
            }
        }
    }

    /// New node `w` takes over the light slot and the path of `c`.
    fn replace_top(&mut self, c: NodeId, w: NodeId) {
        if let Some(h) = self.light_unit[c.ix()].take() {
            self.uinfo[h as usize].node = w;
            self.light_unit[w.ix()] = Some(h);
        }
        let pl = self.paths.remove(&c).expect("light child heads a path");
        self.paths.insert(w, pl);
    }

    fn activate(&mut self, tree: &HstTree, leaf: NodeId) {
        let path = tree.root_path(leaf);
        for v in &path {
            self.count[v.ix()] += 1;
        }
        let h = self.new_unit(leaf, true);
        self.leaf_unit[leaf.ix()] = Some(h);
        let t = self.top_of(tree, leaf);
        self.insert_unit(tree, t, h);
        for &v in &path {
            let Some(p) = tree.parent(v) else { break };
            if self.heavy[p.ix()] == Some(v) {
                continue;
            }
            let t = self.top_of(tree, p);
            if self.count[v.ix()] % 2 == 1 {
                let h = self.new_unit(v, false);
                self.light_unit[v.ix()] = Some(h);
                self.insert_unit(tree, t, h);
            } else {
                let h = self.light_unit[v.ix()].take().expect("odd light child had a unit");
                self.remove_unit(tree, t, h);
            }
        }
    }

    fn esc(&self, tree: &HstTree, mut h: Handle) -> u32 {
        loop {
            let u = self.uinfo[h as usize];
            if u.selfleaf {
                return point_of(tree, u.node);
            }
            h = self.paths[&u.node].pin.expect("odd light child has a pinned unit below");
        }
    }

    /// Turns list-level changes into point-level matching changes.
    fn realize(&mut self, tree: &HstTree) {
        let mut fresh: HashSet<(Handle, Handle)> = HashSet::new();
        for ev in self.lm.take_events() {
            match ev {
                EdgeEvent::Del(a, b) => {
                    let k = hkey(a, b);
                    fresh.remove(&k);
                    if let Some(Some((p, q))) = self.realized.remove(&k) {
                        self.m.del(p, q);
                    }
                }
                EdgeEvent::Add(a, b) => {
                    let k = hkey(a, b);
                    self.realized.insert(k, None);
                    fresh.insert(k);
                }
            }
        }
        let mut dirty: HashSet<Handle> = HashSet::new();
        for t in std::mem::take(&mut self.touched) {
            let mut v = self.top_of(tree, t);
            while let Some(p) = tree.parent(v) {
                let Some(h) = self.light_unit[v.ix()] else { break };
                dirty.insert(h);
                let tp = self.top_of(tree, p);
                if self.paths[&tp].pin == Some(h) {
                    v = tp;
                } else {
                    break;
                }
            }
        }
        let mut todo: HashSet<(Handle, Handle)> = fresh;
        for h in dirty {
            if let Some(o) = self.lm.partner(h) {
                todo.insert(hkey(h, o));
            }
        }
        let mut adds = Vec::new();
        for k in todo {
            let want = (self.esc(tree, k.0), self.esc(tree, k.1));
            let entry = self.realized.get_mut(&k).expect("live list edge");
            match *entry {
                Some(old) if old == want => {}
                Some(old) => {
                    self.m.del(old.0, old.1);
                    *entry = Some(want);
                    adds.push(want);
                }
                None => {
                    *entry = Some(want);
                    adds.push(want);
                }
            }
        }
        for (p, q) in adds {
            self.m.add(p, q);
        }
    }

    /// Heavy child of every node, as maintained.
    pub fn heavy_child(&self, v: NodeId) -> Option<NodeId> {
        self.heavy[v.ix()]
    }
}

impl TreeMatcher for HeavyPathInward {
    fn insert(&mut self, tree: &HstTree, x: u32) {
        self.sync(tree);
        let leaf = tree.leaf(x).expect("point has a leaf");
        self.activate(tree, leaf);
        self.realize(tree);
    }

    fn matching(&self) -> &RecourseMatching {
        &self.m
    }

    fn matching_mut(&mut self) -> &mut RecourseMatching {
        &mut self.m
    }

    fn name(&self) -> &'static str {
        "hp"
    }
}

/// Heavy child by leaf count (strict majority), recomputed from scratch.
pub fn heavy_children(tree: &HstTree) -> Vec<Option<NodeId>> {
    let n = tree.len();
    let mut w = vec![0u32; n];
    let mut heavy = vec![None; n];
    let Some(root) = tree.root() else { return heavy };
    let mut order = Vec::new();
    let mut stack = vec![root];
    while let Some(v) = stack.pop() {
        order.push(v);
        stack.extend(tree.children(v).iter().copied());
    }
    for &v in order.iter().rev() {
        w[v.ix()] = match tree.node(v).kind {
            NodeKind::Leaf(_) => 1,
            _ => tree.children(v).iter().map(|c| w[c.ix()]).sum(),
        };
    }
    for &v in &order {
        heavy[v.ix()] = tree.children(v).iter().copied().find(|c| 2 * w[c.ix()] > w[v.ix()]);
    }
    heavy
}

/// Checks both heavy-path conditions and near-perfectness.
pub fn check_hp_inward(tree: &HstTree, active: &HashSet<u32>, edges: &[(u32, u32)]) -> Result<(), String> {
    let Some(root) = tree.root() else { return Ok(()) };
    let matched: usize = edges.len() * 2;
    if active.len() - matched > 1 {
        return Err(format!("{} active points left unmatched", active.len() - matched));
    }
    let heavy = heavy_children(tree);
    let partner: HashMap<u32, u32> = edges.iter().flat_map(|&(a, b)| [(a, b), (b, a)]).collect();
    let mut under: HashMap<NodeId, HashSet<u32>> = HashMap::new();
    let mut set_of = |v: NodeId| -> HashSet<u32> {
        under
            .entry(v)
            .or_insert_with(|| tree.subtree_points(v).into_iter().filter(|p| active.contains(p)).collect())
            .clone()
    };
    let mut stack = vec![root];
    let mut tops = vec![root];
    while let Some(v) = stack.pop() {
        for &c in tree.children(v) {
            if heavy[v.ix()] != Some(c) {
                tops.push(c);
            }
            stack.push(c);
        }
    }
    for t in tops {
        let xs = set_of(t);
        // Points matched outside, or left unmatched.
        let out: Vec<u32> = xs.iter().copied().filter(|p| partner.get(p).is_none_or(|q| !xs.contains(q))).collect();
        let expected_out = xs.len() % 2;
        if out.len() != expected_out {
            return Err(format!("path top {} has {} points matched outside, expected {expected_out}", t.0, out.len()));
        }
        if let Some(&p) = out.first() {
            // Smallest i* >= 2 with an odd number of active points above u_{i*}.
            let mut path = vec![t];
            while let Some(h) = heavy[path.last().expect("nonempty").ix()] {
                path.push(h);
            }
            let mut below: HashSet<u32> = HashSet::new();
            for i in 1..=path.len() {
                below = if i < path.len() { set_of(path[i]) } else { HashSet::new() };
                if (xs.len() - below.len()) % 2 == 1 {
                    break;
                }
            }
            if below.contains(&p) {
                return Err(format!("path top {}: escaping point {p} lies too deep", t.0));
            }
        }
    }
    Ok(())
}
