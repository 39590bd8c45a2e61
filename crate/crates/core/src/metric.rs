//! Append-only point sequences with pairwise distance access.

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// Arrival index of a point, starting at 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PointId(pub u32);

impl PointId {
    /// Zero-based slot.
    #[inline]
    pub fn idx(self) -> usize {
        self.0 as usize - 1
    }
    #[inline]
    pub fn from_idx(i: usize) -> Self {
        PointId(i as u32 + 1)
    }
}

impl fmt::Display for PointId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("coordinate dimension {got} does not match {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("distance row has length {got}, expected {expected}")]
    RowLength { expected: usize, got: usize },
    #[error("negative distance {value} to point {to}")]
    NegativeDistance { to: usize, value: f64 },
    #[error("non-finite value in payload")]
    NonFinite,
    #[error("unknown point id {0}")]
    UnknownPoint(u32),
    #[error("payload kind does not match the oracle mode")]
    WrongPayload,
    #[error("triangle inequality fails on ({0}, {1}, {2})")]
    Triangle(u32, u32, u32),
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Anything with zero-based pairwise distances.
pub trait Metric {
    fn len(&self) -> usize;
    fn dist(&self, a: usize, b: usize) -> f64;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Points on the real line.
impl Metric for [f64] {
    fn len(&self) -> usize {
        <[f64]>::len(self)
    }
    fn dist(&self, a: usize, b: usize) -> f64 {
        (self[a] - self[b]).abs()
    }
}

impl Metric for Vec<f64> {
    fn len(&self) -> usize {
        <[f64]>::len(self)
    }
    fn dist(&self, a: usize, b: usize) -> f64 {
        (self[a] - self[b]).abs()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Euclidean { dim: usize },
    Matrix,
}

/// What a new point brings along.
#[derive(Clone, Copy, Debug)]
pub enum Payload<'a> {
    Coords(&'a [f64]),
    /// Distances to every earlier point, in arrival order.
    Row(&'a [f64]),
}

/// Incrementally maintained summary of the prefix.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrefixStats {
    pub n: usize,
    pub diameter: f64,
    /// Smallest positive pairwise distance; infinite when there is none.
    pub min_dist: f64,
    pub ddim_estimate: u32,
}

impl Default for PrefixStats {
    fn default() -> Self {
        PrefixStats { n: 0, diameter: 0.0, min_dist: f64::INFINITY, ddim_estimate: 1 }
    }
}

impl PrefixStats {
    /// diameter / min_dist, or 1 when no positive distance exists.
    pub fn aspect_ratio(&self) -> f64 {
        if self.min_dist.is_finite() && self.diameter > 0.0 {
            self.diameter / self.min_dist
        } else {
            1.0
        }
    }

    /// Scratch recomputation over all pairs.
    pub fn recompute<M: Metric + ?Sized>(m: &M) -> PrefixStats {
        let mut s = PrefixStats { n: m.len(), ..Default::default() };
        for a in 0..m.len() {
            for b in 0..a {
                let d = m.dist(a, b);
                if d > s.diameter {
                    s.diameter = d;
                }
                if d > 0.0 && d < s.min_dist {
                    s.min_dist = d;
                }
            }
        }
        s
    }
}

/// Distance storage: coordinates or a lower-triangular matrix.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DistanceOracle {
    mode: Mode,
    coords: Vec<f64>,
    rows: Vec<Vec<f64>>,
    stats: PrefixStats,
    verify: bool,
}

impl DistanceOracle {
    pub fn euclidean(dim: usize) -> Self {
        DistanceOracle {
            mode: Mode::Euclidean { dim },
            coords: Vec::new(),
            rows: Vec::new(),
            stats: PrefixStats::default(),
            verify: false,
        }
    }

    pub fn matrix() -> Self {
        DistanceOracle {
            mode: Mode::Matrix,
            coords: Vec::new(),
            rows: Vec::new(),
            stats: PrefixStats::default(),
            verify: false,
        }
    }

    /// Builds a matrix oracle from points on the line.
    pub fn from_line(xs: &[f64]) -> Self {
        let mut o = Self::matrix();
        let mut row = Vec::new();
        for (j, &x) in xs.iter().enumerate() {
            row.clear();
            row.extend(xs[..j].iter().map(|&y| (x - y).abs()));
            o.append(Payload::Row(&row)).expect("line distances are valid");
        }
        o
    }

    /// Builds a Euclidean oracle from a list of points.
    pub fn from_points(dim: usize, pts: &[Vec<f64>]) -> Result<Self, MetricError> {
        let mut o = Self::euclidean(dim);
        for p in pts {
            o.append(Payload::Coords(p))?;
        }
        Ok(o)
    }

    /// Builds a matrix oracle from any metric.
    pub fn from_metric<M: Metric + ?Sized>(m: &M) -> Self {
        let mut o = Self::matrix();
        let mut row = Vec::new();
        for j in 0..m.len() {
            row.clear();
            row.extend((0..j).map(|k| m.dist(j, k)));
            o.append(Payload::Row(&row)).expect("metric distances are valid");
        }
        o
    }

    /// An empty oracle of the same mode.
    pub fn empty_like(&self) -> Self {
        let mut o = match self.mode {
            Mode::Euclidean { dim } => Self::euclidean(dim),
            Mode::Matrix => Self::matrix(),
        };
        o.verify = self.verify;
        o
    }

    /// The payload that appended point `p`.
    pub fn payload_of(&self, p: PointId) -> Payload<'_> {
        match self.mode {
            Mode::Euclidean { .. } => Payload::Coords(self.coords(p).expect("known point")),
            Mode::Matrix => Payload::Row(&self.rows[p.idx()]),
        }
    }

    /// In verify mode every append checks all triangles through the new point.
    pub fn set_verify(&mut self, on: bool) {
        self.verify = on;
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn stats(&self) -> &PrefixStats {
        &self.stats
    }

    pub(crate) fn stats_mut(&mut self) -> &mut PrefixStats {
        &mut self.stats
    }

    pub fn ids(&self) -> impl Iterator<Item = PointId> {
        (0..self.stats.n).map(PointId::from_idx)
    }

    pub fn coords(&self, p: PointId) -> Option<&[f64]> {
        match self.mode {
            Mode::Euclidean { dim } if p.0 >= 1 && p.idx() < self.stats.n => {
                Some(&self.coords[p.idx() * dim..(p.idx() + 1) * dim])
            }
            _ => None,
        }
    }

    pub fn append(&mut self, payload: Payload<'_>) -> Result<PointId, MetricError> {
        let n = self.stats.n;
        match (self.mode, payload) {
            (Mode::Euclidean { dim }, Payload::Coords(c)) => {
                if c.len() != dim {
                    return Err(MetricError::DimensionMismatch { expected: dim, got: c.len() });
                }
                if c.iter().any(|v| !v.is_finite()) {
                    return Err(MetricError::NonFinite);
                }
                self.coords.extend_from_slice(c);
            }
            (Mode::Matrix, Payload::Row(r)) => {
                if r.len() != n {
                    return Err(MetricError::RowLength { expected: n, got: r.len() });
                }
                for (k, &v) in r.iter().enumerate() {
                    if !v.is_finite() {
                        return Err(MetricError::NonFinite);
                    }
                    if v < 0.0 {
                        return Err(MetricError::NegativeDistance { to: k + 1, value: v });
                    }
                }
                self.rows.push(r.to_vec());
            }
            _ => return Err(MetricError::WrongPayload),
        }
        self.stats.n += 1;
        if self.verify {
            if let Err(e) = self.check_triangles_through(n) {
                self.pop_last();
                return Err(e);
            }
        }
        for k in 0..n {
            let d = self.dist(n, k);
            if d > self.stats.diameter {
                self.stats.diameter = d;
            }
            if d > 0.0 && d < self.stats.min_dist {
                self.stats.min_dist = d;
            }
        }
        Ok(PointId::from_idx(n))
    }

    fn pop_last(&mut self) {
        match self.mode {
            Mode::Euclidean { dim } => self.coords.truncate(self.coords.len() - dim),
            Mode::Matrix => {
                self.rows.pop();
            }
        }
        self.stats.n -= 1;
    }

    fn check_triangles_through(&self, c: usize) -> Result<(), MetricError> {
        for a in 0..c {
            for b in 0..c {
                if a == b {
                    continue;
                }
                let (ab, ac, bc) = (self.dist(a, b), self.dist(a, c), self.dist(b, c));
                let tol = 1e-9 * (ab + ac + bc).max(1.0);
                if ab > ac + bc + tol || ac > ab + bc + tol {
                    return Err(MetricError::Triangle(a as u32 + 1, b as u32 + 1, c as u32 + 1));
                }
            }
        }
        Ok(())
    }

    /// Exhaustive triangle check over all triples.
    pub fn verify_triangles(&self) -> Result<(), MetricError> {
        for c in 0..self.stats.n {
            self.check_triangles_through(c)?;
        }
        Ok(())
    }

    pub fn distance(&self, a: PointId, b: PointId) -> Result<f64, MetricError> {
        for p in [a, b] {
            if p.0 == 0 || p.idx() >= self.stats.n {
                return Err(MetricError::UnknownPoint(p.0));
            }
        }
        Ok(self.dist(a.idx(), b.idx()))
    }

    /// Distance by ids; panics on unknown ids.
    #[inline]
    pub fn d(&self, a: PointId, b: PointId) -> f64 {
        self.dist(a.idx(), b.idx())
    }
}

impl Metric for DistanceOracle {
    fn len(&self) -> usize {
        self.stats.n
    }

    #[inline]
    fn dist(&self, a: usize, b: usize) -> f64 {
        if a == b {
            return 0.0;
        }
        match self.mode {
            Mode::Euclidean { dim } => {
                let (pa, pb) = (&self.coords[a * dim..(a + 1) * dim], &self.coords[b * dim..(b + 1) * dim]);
                pa.iter().zip(pb).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
            }
            Mode::Matrix => {
                if a > b {
                    self.rows[a][b]
                } else {
                    self.rows[b][a]
                }
            }
        }
    }
}

/// Parses `id,x1,...,xd` lines. A header line starting with a non-number is skipped.
pub fn parse_points_csv(text: &str) -> Result<DistanceOracle, MetricError> {
    let mut oracle: Option<DistanceOracle> = None;
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed: Result<Vec<f64>, _> = fields.iter().map(|f| f.parse::<f64>()).collect();
        let vals = match parsed {
            Ok(v) => v,
            Err(_) if oracle.is_none() && ln == 0 => continue,
            Err(e) => return Err(MetricError::Parse { line: ln + 1, msg: e.to_string() }),
        };
        if vals.len() < 2 {
            return Err(MetricError::Parse { line: ln + 1, msg: "expected id and coordinates".into() });
        }
        let o = oracle.get_or_insert_with(|| DistanceOracle::euclidean(vals.len() - 1));
        o.append(Payload::Coords(&vals[1..]))
            .map_err(|e| MetricError::Parse { line: ln + 1, msg: e.to_string() })?;
    }
    Ok(oracle.unwrap_or_else(|| DistanceOracle::euclidean(1)))
}

/// Parses a lower-triangular matrix: line j holds the j-1 distances to earlier points.
pub fn parse_matrix(text: &str) -> Result<DistanceOracle, MetricError> {
    let mut o = DistanceOracle::matrix();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.starts_with('#') {
            continue;
        }
        let row: Result<Vec<f64>, _> =
            line.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).map(str::parse).collect();
        let row = row.map_err(|e: std::num::ParseFloatError| MetricError::Parse { line: ln + 1, msg: e.to_string() })?;
        if row.is_empty() && o.len() > 0 {
            continue;
        }
        o.append(Payload::Row(&row)).map_err(|e| MetricError::Parse { line: ln + 1, msg: e.to_string() })?;
    }
    Ok(o)
}

/// Writes the lower-triangular text form read by [`parse_matrix`].
pub fn format_matrix<M: Metric + ?Sized>(m: &M) -> String {
    let mut s = String::new();
    for j in 0..m.len() {
        let row: Vec<String> = (0..j).map(|k| format!("{}", m.dist(j, k))).collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_point_is_one() {
        let mut o = DistanceOracle::matrix();
        assert_eq!(o.append(Payload::Row(&[])).unwrap(), PointId(1));
    }

    #[test]
    fn row_echo_and_symmetry() {
        let mut o = DistanceOracle::matrix();
        o.append(Payload::Row(&[])).unwrap();
        o.append(Payload::Row(&[3.0])).unwrap();
        assert_eq!(o.distance(PointId(1), PointId(2)).unwrap(), 3.0);
        assert_eq!(o.distance(PointId(2), PointId(1)).unwrap(), 3.0);
        assert_eq!(o.distance(PointId(1), PointId(1)).unwrap(), 0.0);
    }

    #[test]
    fn pythagoras() {
        let o = DistanceOracle::from_points(2, &[vec![0.0, 0.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(o.d(PointId(1), PointId(2)), 5.0);
    }

    #[test]
    fn payload_errors() {
        let mut o = DistanceOracle::matrix();
        o.append(Payload::Row(&[])).unwrap();
        assert_eq!(o.append(Payload::Row(&[1.0, 2.0])), Err(MetricError::RowLength { expected: 1, got: 2 }));
        assert!(matches!(o.append(Payload::Row(&[-1.0])), Err(MetricError::NegativeDistance { .. })));
        let mut e = DistanceOracle::euclidean(2);
        assert_eq!(e.append(Payload::Coords(&[1.0])), Err(MetricError::DimensionMismatch { expected: 2, got: 1 }));
        assert_eq!(o.distance(PointId(1), PointId(9)), Err(MetricError::UnknownPoint(9)));
    }

    #[test]
    fn verify_mode_rejects_bad_triangle() {
        let mut o = DistanceOracle::matrix();
        o.set_verify(true);
        o.append(Payload::Row(&[])).unwrap();
        o.append(Payload::Row(&[1.0])).unwrap();
        assert!(matches!(o.append(Payload::Row(&[1.0, 5.0])), Err(MetricError::Triangle(..))));
        assert_eq!(o.len(), 2);
        o.append(Payload::Row(&[1.0, 1.5])).unwrap();
    }

    #[test]
    fn stats_match_recompute() {
        let o = DistanceOracle::from_line(&[0.0, 4.0, 4.0, 1.0, -3.0]);
        let s = PrefixStats::recompute(&o);
        assert_eq!(s.diameter, o.stats().diameter);
        assert_eq!(s.min_dist, o.stats().min_dist);
        assert_eq!(o.stats().aspect_ratio(), 7.0);
    }

    #[test]
    fn parse_roundtrip() {
        let o = parse_points_csv("id,x,y\n1,0,0\n2,3,4\n").unwrap();
        assert_eq!(o.d(PointId(1), PointId(2)), 5.0);
        let m = parse_matrix(&format_matrix(&o)).unwrap();
        assert_eq!(m.d(PointId(2), PointId(1)), 5.0);
    }
}
