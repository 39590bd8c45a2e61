//! Ordered sequences with stable handles: split and concatenate in
//! logarithmic expected time (implicit treap with parent links).

pub type SeqHandle = u32;
const NIL: u32 = u32::MAX;

#[derive(Clone, Debug)]
struct Node<T> {
    val: T,
    prio: u64,
    size: u32,
    left: u32,
    right: u32,
    parent: u32,
}

#[derive(Clone, Debug, Default)]
pub struct SeqForest<T> {
    nodes: Vec<Node<T>>,
    free: Vec<u32>,
    splices: u64,
}

fn mix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

impl<T: Copy> SeqForest<T> {
    pub fn new() -> Self {
        SeqForest { nodes: Vec::new(), free: Vec::new(), splices: 0 }
    }

    /// Split and concatenate calls so far.
    pub fn splices(&self) -> u64 {
        self.splices
    }

    pub fn create(&mut self, val: T) -> SeqHandle {
        let id = self.free.pop().unwrap_or(self.nodes.len() as u32);
        let node = Node { val, prio: mix(id as u64 ^ (self.nodes.len() as u64) << 32), size: 1, left: NIL, right: NIL, parent: NIL };
        if id as usize == self.nodes.len() {
            self.nodes.push(node);
        } else {
            self.nodes[id as usize] = node;
        }
        id
    }

    /// Frees a singleton.
    pub fn destroy(&mut self, h: SeqHandle) {
        let n = &self.nodes[h as usize];
        assert!(n.size == 1 && n.parent == NIL, "only singletons can be destroyed");
        self.free.push(h);
    }

    pub fn get(&self, h: SeqHandle) -> T {
        self.nodes[h as usize].val
    }

    fn sz(&self, h: u32) -> u32 {
        if h == NIL {
            0
        } else {
            self.nodes[h as usize].size
        }
    }

    fn pull(&mut self, h: u32) {
        let (l, r) = (self.nodes[h as usize].left, self.nodes[h as usize].right);
        self.nodes[h as usize].size = 1 + self.sz(l) + self.sz(r);
        if l != NIL {
            self.nodes[l as usize].parent = h;
        }
        if r != NIL {
            self.nodes[r as usize].parent = h;
        }
    }

    pub fn root(&self, mut h: SeqHandle) -> SeqHandle {
        while self.nodes[h as usize].parent != NIL {
            h = self.nodes[h as usize].parent;
        }
        h
    }

    pub fn len(&self, h: SeqHandle) -> usize {
        self.sz(self.root(h)) as usize
    }

    /// Zero-based position of `h` in its sequence.
    pub fn index(&self, h: SeqHandle) -> usize {
        let mut i = self.sz(self.nodes[h as usize].left) as usize;
        let mut cur = h;
        loop {
            let p = self.nodes[cur as usize].parent;
            if p == NIL {
                return i;
            }
            if self.nodes[p as usize].right == cur {
                i += 1 + self.sz(self.nodes[p as usize].left) as usize;
            }
            cur = p;
        }
    }

    /// Element at position `k` of the sequence of `h`.
    pub fn select(&self, h: SeqHandle, mut k: usize) -> SeqHandle {
        let mut cur = self.root(h);
        loop {
            let l = self.nodes[cur as usize].left;
            let ls = self.sz(l) as usize;
            if k < ls {
                cur = l;
            } else if k == ls {
                return cur;
            } else {
                k -= ls + 1;
                cur = self.nodes[cur as usize].right;
            }
        }
    }

    pub fn last(&self, h: SeqHandle) -> SeqHandle {
        let mut cur = self.root(h);
        while self.nodes[cur as usize].right != NIL {
            cur = self.nodes[cur as usize].right;
        }
        cur
    }

    fn join(&mut self, a: u32, b: u32) -> u32 {
        if a == NIL {
            return b;
        }
        if b == NIL {
            return a;
        }
        if self.nodes[a as usize].prio > self.nodes[b as usize].prio {
            let r = self.nodes[a as usize].right;
            let j = self.join(r, b);
            self.nodes[a as usize].right = j;
            self.pull(a);
            a
        } else {
            let l = self.nodes[b as usize].left;
            let j = self.join(a, l);
            self.nodes[b as usize].left = j;
            self.pull(b);
            b
        }
    }

    fn cut(&mut self, t: u32, k: u32) -> (u32, u32) {
        if t == NIL {
            return (NIL, NIL);
        }
        let l = self.nodes[t as usize].left;
        let ls = self.sz(l);
        if k <= ls {
            let (a, b) = self.cut(l, k);
            self.nodes[t as usize].left = b;
            self.pull(t);
            if a != NIL {
                self.nodes[a as usize].parent = NIL;
            }
            (a, t)
        } else {
            let r = self.nodes[t as usize].right;
            let (a, b) = self.cut(r, k - ls - 1);
            self.nodes[t as usize].right = a;
            self.pull(t);
            if b != NIL {
                self.nodes[b as usize].parent = NIL;
            }
            (t, b)
        }
    }

    /// Concatenation of the two sequences (either may be absent).
    pub fn concat(&mut self, a: Option<SeqHandle>, b: Option<SeqHandle>) -> Option<SeqHandle> {
        self.splices += 1;
        let ra = a.map_or(NIL, |h| self.root(h));
        let rb = b.map_or(NIL, |h| self.root(h));
        let t = self.join(ra, rb);
        if t == NIL {
            None
        } else {
            self.nodes[t as usize].parent = NIL;
            Some(t)
        }
    }

    /// First `k` elements and the rest.
    pub fn split(&mut self, h: SeqHandle, k: usize) -> (Option<SeqHandle>, Option<SeqHandle>) {
        self.splices += 1;
        let r = self.root(h);
        let (a, b) = self.cut(r, k as u32);
        let wrap = |x: u32| (x != NIL).then_some(x);
        (wrap(a), wrap(b))
    }

    pub fn to_vec(&self, h: SeqHandle) -> Vec<T> {
        let mut out = Vec::with_capacity(self.len(h));
        let mut stack = Vec::new();
        let mut cur = self.root(h);
        loop {
            while cur != NIL {
                stack.push(cur);
                cur = self.nodes[cur as usize].left;
            }
            let Some(n) = stack.pop() else { break };
            out.push(self.nodes[n as usize].val);
            cur = self.nodes[n as usize].right;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn matches_a_vec_model(ops in proptest::collection::vec((0u8..3, 0usize..50, 0usize..50), 1..200)) {
            let mut f = SeqForest::new();
            let mut model: Vec<Vec<u32>> = Vec::new();
            let mut handles: Vec<SeqHandle> = Vec::new();
            for (op, a, b) in ops {
                match op {
                    0 => {
                        let v = handles.len() as u32;
                        handles.push(f.create(v));
                        model.push(vec![v]);
                    }
                    1 if model.len() >= 2 => {
                        let (i, j) = (a % model.len(), b % model.len());
                        if i == j { continue; }
                        let (hi, hj) = (handles[model[i][0] as usize], handles[model[j][0] as usize]);
                        f.concat(Some(hi), Some(hj));
                        let tail = model[j].clone();
                        model[i].extend(tail);
                        model.remove(j);
                    }
                    2 if !model.is_empty() => {
                        let i = a % model.len();
                        if model[i].len() < 2 { continue; }
                        let k = 1 + b % (model[i].len() - 1);
                        let h = handles[model[i][0] as usize];
                        f.split(h, k);
                        let rest = model[i].split_off(k);
                        model.push(rest);
                    }
                    _ => {}
                }
                for s in &model {
                    let h = handles[s[0] as usize];
                    prop_assert_eq!(&f.to_vec(h), s);
                    for (k, &v) in s.iter().enumerate() {
                        prop_assert_eq!(f.index(handles[v as usize]), k);
                        prop_assert_eq!(f.get(f.select(h, k)), v);
                    }
                }
            }
        }
    }
}
