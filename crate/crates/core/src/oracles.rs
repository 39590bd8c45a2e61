//! Exact ground truth for small instances.

use crate::hst::{HstTree, NodeId, NodeKind};
use crate::metric::Metric;
use std::collections::HashSet;
use thiserror::Error;

pub const BRUTEFORCE_CAP: usize = 20;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("odd number of points ({0})")]
    Odd(usize),
    #[error("{0} points exceed the exact solver cap of {BRUTEFORCE_CAP}")]
    TooLarge(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    BitmaskDp,
    SortedLine,
    Ultrametric,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleResult {
    pub cost: f64,
    pub matching: Vec<(usize, usize)>,
    pub method: Method,
}

/// Exact minimum-weight perfect matching over `pts` by dynamic programming on subsets.
pub fn mwpm_bruteforce<M: Metric + ?Sized>(m: &M, pts: &[usize]) -> Result<OracleResult, OracleError> {
    let n = pts.len();
    if n % 2 == 1 {
        return Err(OracleError::Odd(n));
    }
    if n > BRUTEFORCE_CAP {
        return Err(OracleError::TooLarge(n));
    }
    let full = (1usize << n) - 1;
    let mut dp = vec![f64::INFINITY; 1 << n];
    let mut choice = vec![0u8; 1 << n];
    dp[0] = 0.0;
    // dp[mask] = cost of matching the points in mask; the lowest point is paired first.
    for mask in 1..=full {
        if mask.count_ones() % 2 == 1 {
            continue;
        }
        let i = mask.trailing_zeros() as usize;
        let rest = mask & !(1 << i);
        let mut bits = rest;
        while bits != 0 {
            let j = bits.trailing_zeros() as usize;
            bits &= bits - 1;
            let c = dp[rest & !(1 << j)] + m.dist(pts[i], pts[j]);
            if c < dp[mask] {
                dp[mask] = c;
                choice[mask] = j as u8;
            }
        }
    }
    let mut matching = Vec::with_capacity(n / 2);
    let mut mask = full;
    while mask != 0 {
        let i = mask.trailing_zeros() as usize;
        let j = choice[mask] as usize;
        matching.push((pts[i], pts[j]));
        mask &= !(1 << i) & !(1 << j);
    }
    let cost = matching.iter().map(|&(a, b)| m.dist(a, b)).sum();
    Ok(OracleResult { cost, matching, method: Method::BitmaskDp })
}

/// Optimal matching on the line: consecutive points in sorted order.
pub fn mwpm_line(xs: &[f64]) -> Result<OracleResult, OracleError> {
    if xs.len() % 2 == 1 {
        return Err(OracleError::Odd(xs.len()));
    }
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]).then(a.cmp(&b)));
    let matching: Vec<(usize, usize)> = idx.chunks(2).map(|c| (c[0], c[1])).collect();
    let cost = matching.iter().map(|&(a, b)| (xs[a] - xs[b]).abs()).sum();
    Ok(OracleResult { cost, matching, method: Method::SortedLine })
}

/// Optimal matching of the active points of an ultrametric: pair bottom-up.
pub fn mwpm_ultrametric(tree: &HstTree, active: &[u32]) -> Result<OracleResult, OracleError> {
    if active.len() % 2 == 1 {
        return Err(OracleError::Odd(active.len()));
    }
    let mut matching = Vec::new();
    let mut cost = 0.0;
    if let Some(root) = tree.root() {
        let act: HashSet<u32> = active.iter().copied().collect();
        let left = pair_up(tree, root, &act, &mut matching, &mut cost);
        debug_assert!(left.is_none());
    }
    Ok(OracleResult { cost, matching, method: Method::Ultrametric })
}

fn pair_up(tree: &HstTree, v: NodeId, act: &HashSet<u32>, out: &mut Vec<(usize, usize)>, cost: &mut f64) -> Option<u32> {
    if let NodeKind::Leaf(p) = tree.node(v).kind {
        return act.contains(&p).then_some(p);
    }
    let mut pending: Option<u32> = None;
    for &c in tree.children(v) {
        if let Some(p) = pair_up(tree, c, act, out, cost) {
            match pending.take() {
                Some(q) => {
                    out.push((q as usize, p as usize));
                    *cost += tree.label(v);
                }
                None => pending = Some(p),
            }
        }
    }
    pending
}

/// Minimum spanning tree weight by Prim's algorithm.
pub fn mst_cost<M: Metric + ?Sized>(m: &M, pts: &[usize]) -> f64 {
    let n = pts.len();
    if n <= 1 {
        return 0.0;
    }
    let mut best = vec![f64::INFINITY; n];
    let mut used = vec![false; n];
    best[0] = 0.0;
    let mut total = 0.0;
    for _ in 0..n {
        let mut u = usize::MAX;
        for v in 0..n {
            if !used[v] && (u == usize::MAX || best[v] < best[u]) {
                u = v;
            }
        }
        used[u] = true;
        total += best[u];
        for v in 0..n {
            if !used[v] {
                let d = m.dist(pts[u], pts[v]);
                if d < best[v] {
                    best[v] = d;
                }
            }
        }
    }
    total
}

/// Sum of edge lengths of a matching.
pub fn matching_weight<M: Metric + ?Sized>(m: &M, edges: &[(usize, usize)]) -> f64 {
    edges.iter().map(|&(a, b)| m.dist(a, b)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::DistanceOracle;

    fn all(n: usize) -> Vec<usize> {
        (0..n).collect()
    }

    #[test]
    fn two_points() {
        let o = DistanceOracle::from_line(&[0.0, 5.0]);
        assert_eq!(mwpm_bruteforce(&o, &all(2)).unwrap().cost, 5.0);
    }

    #[test]
    fn line_of_four_by_enumeration() {
        let xs = [0.0, 1.0, 5.0, 6.0];
        // The three perfect matchings cost 2, 10 and 10.
        assert_eq!(mwpm_bruteforce(&xs[..], &all(4)).unwrap().cost, 2.0);
        assert_eq!(mwpm_line(&xs).unwrap().cost, 2.0);
    }

    #[test]
    fn unit_square() {
        let o = DistanceOracle::from_points(2, &[vec![0., 0.], vec![1., 0.], vec![1., 1.], vec![0., 1.]]).unwrap();
        assert_eq!(mwpm_bruteforce(&o, &all(4)).unwrap().cost, 2.0);
    }

    #[test]
    fn errors() {
        let xs = [0.0; 22];
        assert_eq!(mwpm_bruteforce(&xs[..], &all(3)), Err(OracleError::Odd(3)));
        assert_eq!(mwpm_bruteforce(&xs[..], &all(22)), Err(OracleError::TooLarge(22)));
        assert_eq!(mwpm_line(&[1.0]), Err(OracleError::Odd(1)));
    }

    #[test]
    fn line_doubled_integers() {
        let n = 5;
        let mut xs = vec![0.0];
        for i in 1..=2 * n {
            xs.push(i as f64);
            xs.push(i as f64);
        }
        xs.push(2.0 * n as f64 + 1.0);
        assert_eq!(mwpm_line(&xs).unwrap().cost, 2.0 * n as f64 + 1.0);
        let mut ys = vec![];
        for i in 0..=2 * n + 1 {
            ys.push(i as f64);
            ys.push(i as f64);
        }
        assert_eq!(mwpm_line(&ys).unwrap().cost, 0.0);
    }

    #[test]
    fn mst_basics() {
        assert_eq!(mst_cost(&[3.0][..], &all(1)), 0.0);
        let xs: Vec<f64> = (1..=7).map(f64::from).collect();
        assert_eq!(mst_cost(&xs, &all(7)), 6.0);
    }
}
