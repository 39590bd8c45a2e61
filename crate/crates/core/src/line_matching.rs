//! Laminar near-perfect matchings on ordered sets under create, delete, merge
//! and split, with virtual edges keeping the nesting depth logarithmic.
//!
//! Each set is an implicit-key treap; ranks are positions. Elements are
//! addressed by stable handles that survive merges and splits. A virtual
//! edge length is a rank difference inside one set, which merge and split
//! never change, so it is stored as a constant.

use thiserror::Error;

pub type Handle = u32;
pub const NIL: u32 = u32::MAX;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LineError {
    #[error("delete needs a one-element set, this one has {0}")]
    NotSingleton(usize),
    #[error("split position {k} out of range for a set of size {m}")]
    BadSplit { k: usize, m: usize },
    #[error("insert position {pos} out of range for a set of size {m}")]
    BadPosition { pos: usize, m: usize },
    #[error("handle {0} is not live")]
    DeadHandle(Handle),
    #[error("repair exceeded {0} iterations")]
    RepairGuard(usize),
    #[error("repair precondition: violators {0} and {1} overlap")]
    OverlappingViolators(Handle, Handle),
}

/// One modification of the matching.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EdgeEvent {
    Add(Handle, Handle),
    Del(Handle, Handle),
}

#[derive(Clone, Debug)]
struct Node {
    l: u32,
    r: u32,
    p: u32,
    prio: u64,
    size: u32,
    tag: u32,
    live: bool,
    partner: u32,
    edge: u32,
    is_left: bool,
    xi_here: Vec<u32>,
    unmatched: u32,
    /// Longest virtual length among real edges whose left endpoint lies in the subtree.
    emax: u32,
    /// Leftmost subtree position (1-based) attaining `emax`.
    epos: u32,
    /// Max of `position + length` over virtual edges starting in the subtree.
    xreach: u32,
}

#[derive(Clone, Copy, Debug)]
struct Edge {
    a: u32,
    b: u32,
    c: u32,
    d: u32,
    len: u32,
    alive: bool,
}

/// An edge as ranks inside its set: `a < b`, virtual edge `[c, d]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RankedEdge {
    pub a: usize,
    pub b: usize,
    pub c: usize,
    pub d: usize,
}

#[derive(Clone, Debug, Default)]
pub struct LineMatching {
    nodes: Vec<Node>,
    free_nodes: Vec<u32>,
    edges: Vec<Edge>,
    free_edges: Vec<u32>,
    events: Vec<EdgeEvent>,
    mods: u64,
    rng: u64,
    /// Run the quadratic checker after every operation.
    pub verify: bool,
}

impl LineMatching {
    pub fn new() -> Self {
        LineMatching { rng: 0x5EED, ..Default::default() }
    }

    /// Total number of edge additions and deletions so far.
    pub fn modifications(&self) -> u64 {
        self.mods
    }

    pub fn events(&self) -> &[EdgeEvent] {
        &self.events
    }

    /// Drains the event log.
    pub fn take_events(&mut self) -> Vec<EdgeEvent> {
        std::mem::take(&mut self.events)
    }

    pub fn tag(&self, h: Handle) -> u32 {
        self.nodes[h as usize].tag
    }

    pub fn set_tag(&mut self, h: Handle, tag: u32) {
        self.nodes[h as usize].tag = tag;
    }

    pub fn partner(&self, h: Handle) -> Option<Handle> {
        let p = self.nodes[h as usize].partner;
        (p != NIL).then_some(p)
    }

    pub fn is_live(&self, h: Handle) -> bool {
        (h as usize) < self.nodes.len() && self.nodes[h as usize].live
    }

    // ---- treap plumbing ----

    fn next_prio(&mut self) -> u64 {
        self.rng = crate::rng::splitmix64(self.rng);
        self.rng
    }

    #[inline]
    fn sz(&self, x: u32) -> u32 {
        if x == NIL {
            0
        } else {
            self.nodes[x as usize].size
        }
    }

    fn pull(&mut self, x: u32) {
        let (l, r) = (self.nodes[x as usize].l, self.nodes[x as usize].r);
        let sl = self.sz(l);
        let me = sl + 1;
        let mut size = me;
        let mut unmatched = (self.nodes[x as usize].partner == NIL) as u32;
        let (mut emax, mut epos, mut xreach) = (0u32, 0u32, 0u32);
        if l != NIL {
            let n = &self.nodes[l as usize];
            unmatched += n.unmatched;
            emax = n.emax;
            epos = n.epos;
            xreach = n.xreach;
        }
        {
            let n = &self.nodes[x as usize];
            if n.partner != NIL && n.is_left {
                let len = self.edges[n.edge as usize].len;
                if len > emax {
                    emax = len;
                    epos = me;
                }
            }
            for &e in &n.xi_here {
                xreach = xreach.max(me + self.edges[e as usize].len);
            }
        }
        if r != NIL {
            let n = &self.nodes[r as usize];
            size += n.size;
            unmatched += n.unmatched;
            if n.emax > emax {
                emax = n.emax;
                epos = me + n.epos;
            }
            if n.xreach > 0 {
                xreach = xreach.max(me + n.xreach);
            }
        }
        let n = &mut self.nodes[x as usize];
        n.size = size;
        n.unmatched = unmatched;
        n.emax = emax;
        n.epos = epos;
        n.xreach = xreach;
    }

    fn update_up(&mut self, mut x: u32) {
        while x != NIL {
            self.pull(x);
            x = self.nodes[x as usize].p;
        }
    }

    /// Root of the set containing `h`.
    pub fn root(&self, mut h: Handle) -> Handle {
        while self.nodes[h as usize].p != NIL {
            h = self.nodes[h as usize].p;
        }
        h
    }

    /// Number of elements in the set containing `h`.
    pub fn len(&self, h: Handle) -> usize {
        self.nodes[self.root(h) as usize].size as usize
    }

    /// 1-based rank of `h` in its set.
    pub fn rank(&self, h: Handle) -> usize {
        let mut r = self.sz(self.nodes[h as usize].l) as usize + 1;
        let mut x = h;
        while self.nodes[x as usize].p != NIL {
            let p = self.nodes[x as usize].p;
            if self.nodes[p as usize].r == x {
                r += self.sz(self.nodes[p as usize].l) as usize + 1;
            }
            x = p;
        }
        r
    }

    /// Element at 1-based rank `k` in the set rooted at `root`.
    pub fn select(&self, root: Handle, mut k: usize) -> Handle {
        let mut x = root;
        loop {
            let sl = self.sz(self.nodes[x as usize].l) as usize;
            if k <= sl {
                x = self.nodes[x as usize].l;
            } else if k == sl + 1 {
                return x;
            } else {
                k -= sl + 1;
                x = self.nodes[x as usize].r;
            }
        }
    }

    fn merge_trees(&mut self, a: u32, b: u32) -> u32 {
        if a == NIL {
            return b;
        }
        if b == NIL {
            return a;
        }
        if self.nodes[a as usize].prio > self.nodes[b as usize].prio {
            let ar = self.nodes[a as usize].r;
            let m = self.merge_trees(ar, b);
            self.nodes[a as usize].r = m;
            self.nodes[m as usize].p = a;
            self.pull(a);
            a
        } else {
            let bl = self.nodes[b as usize].l;
            let m = self.merge_trees(a, bl);
            self.nodes[b as usize].l = m;
            self.nodes[m as usize].p = b;
            self.pull(b);
            b
        }
    }

    /// Splits off the first `k` elements.
    fn split_tree(&mut self, t: u32, k: u32) -> (u32, u32) {
        if t == NIL {
            return (NIL, NIL);
        }
        let l = self.nodes[t as usize].l;
        let sl = self.sz(l);
        if k <= sl {
            let (a, b) = self.split_tree(l, k);
            self.nodes[t as usize].l = b;
            if b != NIL {
                self.nodes[b as usize].p = t;
            }
            if a != NIL {
                self.nodes[a as usize].p = NIL;
            }
            self.pull(t);
            (a, t)
        } else {
            let r = self.nodes[t as usize].r;
            let (a, b) = self.split_tree(r, k - sl - 1);
            self.nodes[t as usize].r = a;
            if a != NIL {
                self.nodes[a as usize].p = t;
            }
            if b != NIL {
                self.nodes[b as usize].p = NIL;
            }
            self.pull(t);
            (t, b)
        }
    }

    // ---- edges ----

    fn add_edge(&mut self, a: u32, b: u32, c: u32, d: u32, len: u32) -> u32 {
        let e = Edge { a, b, c, d, len, alive: true };
        let id = match self.free_edges.pop() {
            Some(id) => {
                self.edges[id as usize] = e;
                id
            }
            None => {
                self.edges.push(e);
                self.edges.len() as u32 - 1
            }
        };
        for (h, left, other) in [(a, true, b), (b, false, a)] {
            let n = &mut self.nodes[h as usize];
            debug_assert_eq!(n.partner, NIL, "endpoint already matched");
            n.partner = other;
            n.edge = id;
            n.is_left = left;
        }
        self.nodes[c as usize].xi_here.push(id);
        self.update_up(a);
        self.update_up(b);
        self.update_up(c);
        self.events.push(EdgeEvent::Add(a, b));
        self.mods += 1;
        id
    }

    fn del_edge(&mut self, id: u32) {
        let e = self.edges[id as usize];
        debug_assert!(e.alive);
        for h in [e.a, e.b] {
            let n = &mut self.nodes[h as usize];
            n.partner = NIL;
            n.edge = NIL;
            n.is_left = false;
        }
        let xs = &mut self.nodes[e.c as usize].xi_here;
        let pos = xs.iter().position(|&x| x == id).expect("virtual edge registered");
        xs.swap_remove(pos);
        self.edges[id as usize].alive = false;
        self.free_edges.push(id);
        self.update_up(e.a);
        self.update_up(e.b);
        self.update_up(e.c);
        self.events.push(EdgeEvent::Del(e.a, e.b));
        self.mods += 1;
    }

    /// Max virtual length among real edges with left endpoint in ranks `[lo, hi]`,
    /// with the leftmost rank attaining it.
    fn range_emax(&self, t: u32, lo: u32, hi: u32) -> (u32, u32) {
        self.range_emax_rec(t, 0, lo, hi)
    }

    fn range_emax_rec(&self, x: u32, off: u32, lo: u32, hi: u32) -> (u32, u32) {
        if x == NIL || lo > hi {
            return (0, 0);
        }
        let n = &self.nodes[x as usize];
        let (first, last) = (off + 1, off + n.size);
        if hi < first || lo > last {
            return (0, 0);
        }
        if lo <= first && last <= hi {
            return (n.emax, if n.emax > 0 { off + n.epos } else { 0 });
        }
        let me = off + self.sz(n.l) + 1;
        let mut best = self.range_emax_rec(n.l, off, lo, hi);
        if (lo..=hi).contains(&me) && n.partner != NIL && n.is_left {
            let len = self.edges[n.edge as usize].len;
            if len > best.0 {
                best = (len, me);
            }
        }
        let rb = self.range_emax_rec(n.r, me, lo, hi);
        if rb.0 > best.0 {
            best = rb;
        }
        best
    }

    /// Edges whose virtual edge spans the gap between ranks `k` and `k+1`.
    fn crossing(&self, t: u32, k: u32) -> Vec<u32> {
        let mut out = Vec::new();
        self.crossing_rec(t, 0, k, &mut out);
        out
    }

    fn crossing_rec(&self, x: u32, off: u32, k: u32, out: &mut Vec<u32>) {
        if x == NIL {
            return;
        }
        let n = &self.nodes[x as usize];
        if n.xreach == 0 || off + n.xreach <= k || off >= k {
            return;
        }
        let me = off + self.sz(n.l) + 1;
        self.crossing_rec(n.l, off, k, out);
        if me <= k {
            for &e in &n.xi_here {
                if me + self.edges[e as usize].len > k {
                    out.push(e);
                }
            }
            self.crossing_rec(n.r, me, k, out);
        }
    }

    /// Unmatched elements of the set rooted at `t`, in rank order.
    fn unmatched_in(&self, t: u32) -> Vec<u32> {
        let mut out = Vec::new();
        self.unmatched_rec(t, &mut out);
        out
    }

    fn unmatched_rec(&self, x: u32, out: &mut Vec<u32>) {
        if x == NIL || self.nodes[x as usize].unmatched == 0 {
            return;
        }
        let n = &self.nodes[x as usize];
        self.unmatched_rec(n.l, out);
        if n.partner == NIL {
            out.push(x);
        }
        self.unmatched_rec(n.r, out);
    }

    /// The unmatched element of an odd set.
    pub fn unmatched(&self, h: Handle) -> Option<Handle> {
        self.unmatched_in(self.root(h)).first().copied()
    }

    // ---- operations ----

    /// New one-element set; returns its handle.
    pub fn create(&mut self, tag: u32) -> Handle {
        let prio = self.next_prio();
        let node = Node {
            l: NIL,
            r: NIL,
            p: NIL,
            prio,
            size: 1,
            tag,
            live: true,
            partner: NIL,
            edge: NIL,
            is_left: false,
            xi_here: Vec::new(),
            unmatched: 1,
            emax: 0,
            epos: 0,
            xreach: 0,
        };
        match self.free_nodes.pop() {
            Some(h) => {
                self.nodes[h as usize] = node;
                h
            }
            None => {
                self.nodes.push(node);
                self.nodes.len() as u32 - 1
            }
        }
    }

    /// Removes a one-element set.
    pub fn delete(&mut self, h: Handle) -> Result<(), LineError> {
        if !self.is_live(h) {
            return Err(LineError::DeadHandle(h));
        }
        let m = self.len(h);
        if m != 1 {
            return Err(LineError::NotSingleton(m));
        }
        self.nodes[h as usize].live = false;
        self.free_nodes.push(h);
        Ok(())
    }

    /// Concatenates the set of `a` followed by the set of `b`; returns the new root.
    pub fn merge(&mut self, a: Handle, b: Handle) -> Result<Handle, LineError> {
        let (ra, rb) = (self.root(a), self.root(b));
        let (odd_a, odd_b) = (self.nodes[ra as usize].size % 2 == 1, self.nodes[rb as usize].size % 2 == 1);
        let ua = if odd_a && odd_b { self.unmatched_in(ra).first().copied() } else { None };
        let ub = if odd_a && odd_b { self.unmatched_in(rb).first().copied() } else { None };
        let t = self.merge_trees(ra, rb);
        if let (Some(x), Some(y)) = (ua, ub) {
            let len = (self.rank(y) - self.rank(x)) as u32;
            let e = self.add_edge(x, y, x, y, len);
            self.repair(y, vec![e])?;
        }
        let root = self.root(t);
        self.maybe_verify(root);
        Ok(root)
    }

    /// Splits the set of `h` into its first `k` elements and the rest.
    pub fn split(&mut self, h: Handle, k: usize) -> Result<(Handle, Handle), LineError> {
        let t = self.root(h);
        let m = self.nodes[t as usize].size as usize;
        if k == 0 || k >= m {
            return Err(LineError::BadSplit { k, m });
        }
        for e in self.crossing(t, k as u32) {
            self.del_edge(e);
        }
        let t = self.root(h);
        let (l, r) = self.split_tree(t, k as u32);
        for side in [l, r] {
            let free = self.unmatched_in(side);
            let mut new_edges = Vec::new();
            for pair in free.chunks_exact(2) {
                let len = (self.rank(pair[1]) - self.rank(pair[0])) as u32;
                new_edges.push(self.add_edge(pair[0], pair[1], pair[0], pair[1], len));
            }
            if !new_edges.is_empty() {
                self.repair(side, new_edges)?;
            }
        }
        let (l, r) = (self.root(l), self.root(r));
        self.maybe_verify(l);
        self.maybe_verify(r);
        Ok((l, r))
    }

    /// Restores the nesting invariant starting from candidate violators `cands`.
    fn repair(&mut self, h: Handle, mut cands: Vec<u32>) -> Result<(), LineError> {
        let m = self.len(h).max(2);
        let guard = 4 * cands.len() * (usize::BITS - (m - 1).leading_zeros()) as usize + 8;
        self.assert_disjoint(&cands)?;
        let mut iters = 0;
        loop {
            // Leftmost violator among live candidates.
            let mut pick: Option<(usize, u32, u32, u32)> = None;
            cands.retain(|&e| self.edges[e as usize].alive);
            for &e in &cands {
                let ed = self.edges[e as usize];
                let (ra, rb) = (self.rank(ed.a), self.rank(ed.b));
                let root = self.root(ed.a);
                let (l1, p1) = self.range_emax(root, ra as u32 + 1, rb as u32 - 1);
                if 2 * l1 > ed.len && pick.is_none_or(|p| ra < p.0) {
                    pick = Some((ra, e, p1, root));
                }
            }
            let Some((_, e2, p1, root)) = pick else { return Ok(()) };
            iters += 1;
            if iters > guard {
                return Err(LineError::RepairGuard(guard));
            }
            let ed2 = self.edges[e2 as usize];
            let a1 = self.select(root, p1 as usize);
            let e1 = self.nodes[a1 as usize].edge;
            let b1 = self.edges[e1 as usize].b;
            let (a2, b2) = (ed2.a, ed2.b);
            let (ra1, rb1, ra2, rb2) = (self.rank(a1), self.rank(b1), self.rank(a2), self.rank(b2));
            self.del_edge(e1);
            self.del_edge(e2);
            let (x, y) = if ra1 - ra2 <= rb2 - rb1 {
                let x = self.add_edge(a2, a1, ed2.c, ed2.d, ed2.len);
                let y = self.add_edge(b1, b2, b1, b2, (rb2 - rb1) as u32);
                (x, y)
            } else {
                let x = self.add_edge(a2, a1, a2, a1, (ra1 - ra2) as u32);
                let y = self.add_edge(b1, b2, ed2.c, ed2.d, ed2.len);
                (x, y)
            };
            cands.push(x);
            cands.push(y);
        }
    }

    fn assert_disjoint(&self, cands: &[u32]) -> Result<(), LineError> {
        let mut iv: Vec<(usize, usize, u32)> = cands
            .iter()
            .map(|&e| {
                let ed = self.edges[e as usize];
                (self.rank(ed.a), self.rank(ed.b), ed.a)
            })
            .collect();
        iv.sort_unstable();
        for w in iv.windows(2) {
            if w[1].0 <= w[0].1 {
                return Err(LineError::OverlappingViolators(w[0].2, w[1].2));
            }
        }
        Ok(())
    }

    /// Inserts a new element at 0-based position `pos` of the set of `h` (or as a new set).
    pub fn insert_point(&mut self, h: Option<Handle>, pos: usize, tag: u32) -> Result<Handle, LineError> {
        let s = self.create(tag);
        if let Some(h) = h {
            if let Err(e) = self.insert_handle(h, pos, s) {
                self.delete(s)?;
                return Err(e);
            }
        }
        Ok(s)
    }

    /// Inserts the one-element set `s` at 0-based position `pos` of the set of `h`.
    pub fn insert_handle(&mut self, h: Handle, pos: usize, s: Handle) -> Result<Handle, LineError> {
        let m = self.len(h);
        if pos > m {
            return Err(LineError::BadPosition { pos, m });
        }
        if self.len(s) != 1 {
            return Err(LineError::NotSingleton(self.len(s)));
        }
        if pos == 0 {
            self.merge(s, h)
        } else if pos == m {
            self.merge(h, s)
        } else {
            let (l, r) = self.split(h, pos)?;
            let l = self.merge(l, s)?;
            self.merge(l, r)
        }
    }

    /// Inserts a new element right after `after`.
    pub fn insert_after(&mut self, after: Handle, tag: u32) -> Result<Handle, LineError> {
        let pos = self.rank(after);
        self.insert_point(Some(after), pos, tag)
    }

    /// Takes `h` out of its set, leaving it as a one-element set; returns a handle into the rest.
    pub fn detach(&mut self, h: Handle) -> Result<Option<Handle>, LineError> {
        if !self.is_live(h) {
            return Err(LineError::DeadHandle(h));
        }
        let m = self.len(h);
        let r = self.rank(h);
        let mut left = None;
        let mut right = None;
        if r > 1 {
            let (l, _) = self.split(h, r - 1)?;
            left = Some(l);
        }
        if r < m {
            let (_, rr) = self.split(h, 1)?;
            right = Some(rr);
        }
        Ok(match (left, right) {
            (Some(l), Some(rr)) => Some(self.merge(l, rr)?),
            (l, rr) => l.or(rr),
        })
    }

    /// Removes element `h`; returns a handle into the remaining set, if any.
    pub fn remove_point(&mut self, h: Handle) -> Result<Option<Handle>, LineError> {
        let rest = self.detach(h)?;
        self.delete(h)?;
        Ok(rest)
    }

    /// Number of leading elements of the set of `h` satisfying `before`.
    /// `before` must hold on a prefix of the set.
    pub fn count_prefix(&self, h: Handle, before: impl Fn(Handle) -> bool) -> usize {
        let mut x = self.root(h);
        let mut acc = 0usize;
        while x != NIL {
            let n = &self.nodes[x as usize];
            if before(x) {
                acc += self.sz(n.l) as usize + 1;
                x = n.r;
            } else {
                x = n.l;
            }
        }
        acc
    }

    /// Elements of the set of `h` in rank order.
    pub fn elements(&self, h: Handle) -> Vec<Handle> {
        let mut out = Vec::new();
        let mut stack = Vec::new();
        let mut x = self.root(h);
        while x != NIL || !stack.is_empty() {
            while x != NIL {
                stack.push(x);
                x = self.nodes[x as usize].l;
            }
            let y = stack.pop().expect("nonempty");
            out.push(y);
            x = self.nodes[y as usize].r;
        }
        out
    }

    /// Edges of the set of `h` as ranks, sorted by left endpoint.
    pub fn ranked_edges(&self, h: Handle) -> Vec<RankedEdge> {
        let elems = self.elements(h);
        let mut rank = std::collections::HashMap::with_capacity(elems.len());
        for (i, &e) in elems.iter().enumerate() {
            rank.insert(e, i + 1);
        }
        let mut out = Vec::new();
        for &x in &elems {
            let n = &self.nodes[x as usize];
            if n.partner != NIL && n.is_left {
                let e = self.edges[n.edge as usize];
                out.push(RankedEdge { a: rank[&e.a], b: rank[&e.b], c: rank[&e.c], d: rank[&e.d] });
            }
        }
        out
    }

    /// Matched pairs of the set of `h` as handles.
    pub fn pairs(&self, h: Handle) -> Vec<(Handle, Handle)> {
        self.elements(h)
            .into_iter()
            .filter_map(|x| {
                let n = &self.nodes[x as usize];
                (n.partner != NIL && n.is_left).then_some((x, n.partner))
            })
            .collect()
    }

    /// Maximum number of pairwise nested edges.
    pub fn depth(&self, h: Handle) -> usize {
        let (mut cur, mut best) = (0usize, 0usize);
        for x in self.elements(h) {
            let n = &self.nodes[x as usize];
            if n.partner != NIL {
                if n.is_left {
                    cur += 1;
                    best = best.max(cur);
                } else {
                    cur -= 1;
                }
            }
        }
        best
    }

    /// `a b xi_c xi_d` lines, preceded by the set size.
    pub fn dump(&self, h: Handle) -> String {
        let mut s = format!("# m={}\n", self.len(h));
        for e in self.ranked_edges(h) {
            s.push_str(&format!("{} {} {} {}\n", e.a, e.b, e.c, e.d));
        }
        s
    }

    /// Runs the quadratic checker on the set of `h`.
    pub fn check(&self, h: Handle) -> Result<(), Violation> {
        check_edges(self.len(h), &self.ranked_edges(h), true)
    }

    fn maybe_verify(&self, h: Handle) {
        if self.verify {
            if let Err(v) = self.check(h) {
                panic!("line matching invariant broken: {v}");
            }
        }
    }
}

/// A failed invariant, named as in the checker.
#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum Violation {
    #[error("(I1) edges {0:?} and {1:?} cross")]
    Crossing((usize, usize), (usize, usize)),
    #[error("(I2) interval {1:?} lies strictly between edge {0:?} and its virtual edge")]
    BetweenVirtual((usize, usize), (usize, usize)),
    #[error("(I3) unmatched point {0} lies inside {1:?}")]
    UnmatchedInside(usize, (usize, usize)),
    #[error("(I4) nested edges {0:?} inside {1:?} have virtual lengths {2} and {3}")]
    VirtualLengths((usize, usize), (usize, usize), usize, usize),
    #[error("edge {0:?} is not inside its virtual edge {1:?}")]
    VirtualContainment((usize, usize), (usize, usize)),
    #[error("point {0} is matched twice or out of range")]
    NotAMatching(usize),
    #[error("{0} unmatched points")]
    NotNearPerfect(usize),
    #[error("depth {0} exceeds {1}")]
    Depth(usize, usize),
}

fn crosses(x: (usize, usize), y: (usize, usize)) -> bool {
    (x.0 < y.0 && y.0 < x.1 && x.1 < y.1) || (y.0 < x.0 && x.0 < y.1 && y.1 < x.1)
}

fn proper_sub(x: (usize, usize), y: (usize, usize)) -> bool {
    y.0 <= x.0 && x.1 <= y.1 && x != y
}

/// Checks laminarity, virtual-edge gaps, uncovered singles and length halving, plus matching validity and, optionally, near-perfectness and the depth bound.
pub fn check_edges(m: usize, edges: &[RankedEdge], near_perfect: bool) -> Result<(), Violation> {
    let mut used = vec![false; m + 1];
    for e in edges {
        for p in [e.a, e.b] {
            if p == 0 || p > m || used[p] {
                return Err(Violation::NotAMatching(p));
            }
            used[p] = true;
        }
        if !(e.c <= e.a && e.b <= e.d) {
            return Err(Violation::VirtualContainment((e.a, e.b), (e.c, e.d)));
        }
    }
    let unmatched: Vec<usize> = (1..=m).filter(|&p| !used[p]).collect();
    if near_perfect && unmatched.len() > 1 {
        return Err(Violation::NotNearPerfect(unmatched.len()));
    }
    let mut all: Vec<(usize, usize)> = Vec::with_capacity(2 * edges.len());
    for e in edges {
        all.push((e.a, e.b));
        all.push((e.c, e.d));
    }
    for i in 0..all.len() {
        for j in i + 1..all.len() {
            if crosses(all[i], all[j]) {
                return Err(Violation::Crossing(all[i], all[j]));
            }
        }
    }
    for e in edges {
        let (ab, xi) = ((e.a, e.b), (e.c, e.d));
        for &f in &all {
            if proper_sub(ab, f) && proper_sub(f, xi) {
                return Err(Violation::BetweenVirtual(ab, f));
            }
        }
    }
    for &u in &unmatched {
        for &f in &all {
            if f.0 <= u && u <= f.1 {
                return Err(Violation::UnmatchedInside(u, f));
            }
        }
    }
    for e1 in edges {
        for e2 in edges {
            let (x, y) = ((e1.a, e1.b), (e2.a, e2.b));
            if proper_sub(x, y) {
                let (l1, l2) = (e1.d - e1.c, e2.d - e2.c);
                if 2 * l1 > l2 {
                    return Err(Violation::VirtualLengths(x, y, l1, l2));
                }
            }
        }
    }
    let bound = if m <= 1 { 0 } else { (usize::BITS - (m - 1).leading_zeros()) as usize };
    let depth = depth_of(m, edges);
    if depth > bound {
        return Err(Violation::Depth(depth, bound));
    }
    Ok(())
}

/// Depth of a laminar edge set given by ranks.
pub fn depth_of(m: usize, edges: &[RankedEdge]) -> usize {
    let mut delta = vec![0i64; m + 2];
    for e in edges {
        delta[e.a] += 1;
        delta[e.b + 1] -= 1;
    }
    let (mut cur, mut best) = (0i64, 0i64);
    for d in delta {
        cur += d;
        best = best.max(cur);
    }
    best as usize
}

/// Parses the dump format; returns the set size and edges.
pub fn parse_dump(text: &str) -> Result<(usize, Vec<RankedEdge>), String> {
    let mut m = None;
    let mut edges = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if let Some(rest) = line.strip_prefix("# m=") {
            m = Some(rest.trim().parse::<usize>().map_err(|e| format!("line {}: {e}", ln + 1))?);
            continue;
        }
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let v: Result<Vec<usize>, _> = line.split_whitespace().map(str::parse).collect();
        let v = v.map_err(|e| format!("line {}: {e}", ln + 1))?;
        if v.len() != 4 {
            return Err(format!("line {}: expected `a b xi_c xi_d`", ln + 1));
        }
        let (a, b) = (v[0].min(v[1]), v[0].max(v[1]));
        edges.push(RankedEdge { a, b, c: v[2].min(v[3]), d: v[2].max(v[3]) });
    }
    let m = m.unwrap_or_else(|| edges.iter().map(|e| e.d.max(e.b)).max().unwrap_or(0));
    Ok((m, edges))
}
