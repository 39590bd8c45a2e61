//! A perfect matching with an append-only modification log.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Op {
    Add,
    Del,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEntry {
    pub step: u64,
    pub op: Op,
    pub a: u32,
    pub b: u32,
}

/// Net change of one step: edges present before and absent after, and vice versa.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepDelta {
    pub deletions: u32,
    pub additions: u32,
}

impl std::ops::AddAssign for StepDelta {
    fn add_assign(&mut self, o: Self) {
        self.deletions += o.deletions;
        self.additions += o.additions;
    }
}

#[derive(Clone, Debug, Default)]
pub struct RecourseMatching {
    partner: Vec<Option<u32>>,
    log: Vec<LogEntry>,
    step: u64,
    pending: HashMap<(u32, u32), i32>,
    size: usize,
}

fn key(a: u32, b: u32) -> (u32, u32) {
    (a.min(b), a.max(b))
}

impl RecourseMatching {
    pub fn new() -> Self {
        Self::default()
    }

    fn ensure(&mut self, p: u32) {
        if self.partner.len() <= p as usize {
            self.partner.resize(p as usize + 1, None);
        }
    }

    pub fn partner(&self, p: u32) -> Option<u32> {
        self.partner.get(p as usize).copied().flatten()
    }

    /// Number of edges.
    pub fn len(&self) -> usize {
        self.size
    }

    pub fn is_empty(&self) -> bool {
        self.size == 0
    }

    pub fn add(&mut self, a: u32, b: u32) {
        assert_ne!(a, b, "self-loop");
        self.ensure(a.max(b));
        assert!(self.partner[a as usize].is_none() && self.partner[b as usize].is_none(), "endpoint already matched");
        self.partner[a as usize] = Some(b);
        self.partner[b as usize] = Some(a);
        self.size += 1;
        self.log.push(LogEntry { step: self.step, op: Op::Add, a, b });
        *self.pending.entry(key(a, b)).or_default() += 1;
    }

    pub fn del(&mut self, a: u32, b: u32) {
        assert_eq!(self.partner(a), Some(b), "edge not present");
        self.partner[a as usize] = None;
        self.partner[b as usize] = None;
        self.size -= 1;
        self.log.push(LogEntry { step: self.step, op: Op::Del, a, b });
        *self.pending.entry(key(a, b)).or_default() -= 1;
    }

    /// Closes the current step and reports its net change.
    pub fn end_step(&mut self) -> StepDelta {
        let mut d = StepDelta::default();
        for (_, v) in self.pending.drain() {
            match v {
                1 => d.additions += 1,
                -1 => d.deletions += 1,
                0 => {}
                _ => unreachable!("edge toggled inconsistently"),
            }
        }
        self.step += 1;
        d
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn log(&self) -> &[LogEntry] {
        &self.log
    }

    /// Edges with `a < b`, sorted.
    pub fn edges(&self) -> Vec<(u32, u32)> {
        let mut out: Vec<(u32, u32)> = self
            .partner
            .iter()
            .enumerate()
            .filter_map(|(a, p)| p.filter(|&b| (a as u32) < b).map(|b| (a as u32, b)))
            .collect();
        out.sort_unstable();
        out
    }

    /// Rebuilds the edge set from the log.
    pub fn replay(log: &[LogEntry]) -> Vec<(u32, u32)> {
        let mut m = RecourseMatching::new();
        for e in log {
            match e.op {
                Op::Add => m.add(e.a, e.b),
                Op::Del => m.del(e.a, e.b),
            }
        }
        m.edges()
    }

    /// Sum of `dist` over the edges.
    pub fn cost(&self, dist: impl Fn(u32, u32) -> f64) -> f64 {
        self.edges().into_iter().map(|(a, b)| dist(a, b)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn net_change_ignores_transient_edges() {
        let mut m = RecourseMatching::new();
        m.add(0, 1);
        assert_eq!(m.end_step(), StepDelta { deletions: 0, additions: 1 });
        m.del(0, 1);
        m.add(0, 2);
        m.del(0, 2);
        m.add(0, 1);
        m.add(2, 3);
        assert_eq!(m.end_step(), StepDelta { deletions: 0, additions: 1 });
        assert_eq!(RecourseMatching::replay(m.log()), m.edges());
        assert_eq!(m.edges(), vec![(0, 1), (2, 3)]);
    }

    #[test]
    fn cost_sums_edges() {
        let mut m = RecourseMatching::new();
        assert_eq!(m.cost(|_, _| 1.0), 0.0);
        m.add(3, 5);
        assert_eq!(m.cost(|a, b| (a + b) as f64), 8.0);
    }
}
