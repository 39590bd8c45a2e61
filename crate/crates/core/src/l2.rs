//! Online embedding into Euclidean space.
//!
//! One random draw gives each point a sparse vector `f(x)` with one coordinate per
//! scale; coordinate `i` is the point's distance-to-boundary in the scale-`i`
//! partition, kept or zeroed by the cluster's sign bit. The deterministic embedding
//! realizes the expected squared distances `D` by online Gram-Schmidt.

use crate::decomp::{pow2, Decomposition};
use crate::metric::{Metric, MetricError, Payload, PointId};
use crate::nets::{ceil_log2, NetHierarchy, PointStream, TOP_INFINITE, TOP_NONE};
use crate::rng::splitmix64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum L2Error {
    #[error("sample budget must be positive")]
    ZeroBudget,
    #[error("point {0} is unknown")]
    UnknownPoint(u32),
    #[error("scale {scale} has {count} relevant net points; quadrature handles at most {max}")]
    Intractable { scale: i32, count: usize, max: usize },
    #[error("realizing point {point} shifted a squared distance by {shift:.3e} (tolerance {tolerance:.3e})")]
    PsdShift { point: u32, shift: f64, tolerance: f64 },
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// Sparse vector: `(scale, value)` sorted by scale, zeros omitted.
pub type SparseVec = Vec<(i32, f64)>;

/// Zero-based center of `x` at scale `i` under radii `r`.
pub fn center_at<M: Metric + ?Sized>(m: &M, nets: &NetHierarchy, r: &[f64], x: usize, i: i32) -> usize {
    let quarter = pow2(i - 2);
    (0..=x)
        .find(|&q| nets.in_net(q, i - 3) && m.dist(x, q) <= quarter * r[q])
        .unwrap_or_else(|| panic!("no center covers point {} at scale {i}", x + 1))
}

/// Distance from `x` to the boundary of its scale-`i` cluster, as seen by earlier centers.
pub fn paddedness<M: Metric + ?Sized>(m: &M, nets: &NetHierarchy, r: &[f64], x: usize, i: i32) -> f64 {
    let q = center_at(m, nets, r, x, i);
    let quarter = pow2(i - 2);
    (0..=q)
        .filter(|&k| nets.in_net(k, i - 3))
        .map(|k| (r[k] * quarter - m.dist(k, x)).abs())
        .fold(f64::INFINITY, f64::min)
}

/// Whether center `q`'s sign bit applies at scale `i`.
fn alpha_window(nets: &NetHierarchy, q: usize, i: i32) -> bool {
    let t = nets.top_raw(q);
    if t == TOP_INFINITE || t == TOP_NONE {
        return false;
    }
    (t + 1..=t + 3).contains(&i)
}

/// Coordinate `f_i(x)` for one draw.
pub fn coordinate<M: Metric + ?Sized>(m: &M, nets: &NetHierarchy, r: &[f64], alpha: &[bool], x: usize, i: i32) -> f64 {
    let q = center_at(m, nets, r, x, i);
    if q == 0 || !alpha[q] || !alpha_window(nets, q, i) {
        return 0.0;
    }
    paddedness(m, nets, r, x, i)
}

/// Scales where `f_i(x)` can be nonzero: three per earlier center, below the first point's ball.
pub fn candidate_scales<M: Metric + ?Sized>(m: &M, nets: &NetHierarchy, x: usize) -> Vec<i32> {
    let d1 = m.dist(0, x);
    if d1 == 0.0 {
        return Vec::new();
    }
    let ceiling = ceil_log2(4.0 * d1);
    let mut out: Vec<i32> = (1..=x)
        .filter_map(|q| {
            let t = nets.top_raw(q);
            (t != TOP_INFINITE && t != TOP_NONE).then_some(t)
        })
        .flat_map(|t| t + 1..=t + 3)
        .filter(|&i| i < ceiling)
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

/// The full sparse vector `f(x)` for one draw.
pub fn feature_vector<M: Metric + ?Sized>(m: &M, nets: &NetHierarchy, r: &[f64], alpha: &[bool], x: usize) -> SparseVec {
    candidate_scales(m, nets, x)
        .into_iter()
        .filter_map(|i| {
            let v = coordinate(m, nets, r, alpha, x, i);
            (v != 0.0).then_some((i, v))
        })
        .collect()
}

pub fn sq_dist_sparse(a: &[(i32, f64)], b: &[(i32, f64)]) -> f64 {
    let (mut i, mut j, mut s) = (0, 0, 0.0);
    while i < a.len() || j < b.len() {
        let ka = a.get(i).map_or(i32::MAX, |p| p.0);
        let kb = b.get(j).map_or(i32::MAX, |p| p.0);
        let diff = if ka == kb {
            let v = a[i].1 - b[j].1;
            i += 1;
            j += 1;
            v
        } else if ka < kb {
            i += 1;
            a[i - 1].1
        } else {
            j += 1;
            b[j - 1].1
        };
        s += diff * diff;
    }
    s
}

fn draw_arrays(d: &Decomposition) -> (Vec<f64>, Vec<bool>) {
    d.radii().iter().map(|s| (s.r, s.alpha)).unzip()
}

/// One concrete draw of `f` over the whole stream.
pub fn single_sample_embed(stream: &PointStream, seed: u64, trial: u64) -> Vec<SparseVec> {
    let d = Decomposition::for_stream(stream, seed, trial);
    let (r, alpha) = draw_arrays(&d);
    (0..stream.len()).map(|x| feature_vector(&stream.oracle, &stream.nets, &r, &alpha, x)).collect()
}

/// Monte-Carlo estimate of `E‖f(x_j) − f(x_q)‖²` with its standard error.
pub fn expected_sq_distance(stream: &PointStream, j: PointId, q: PointId, budget: u64, seed: u64) -> Result<(f64, f64), L2Error> {
    if budget == 0 {
        return Err(L2Error::ZeroBudget);
    }
    for p in [j, q] {
        if p.0 == 0 || p.idx() >= stream.len() {
            return Err(L2Error::UnknownPoint(p.0));
        }
    }
    if j == q {
        return Ok((0.0, 0.0));
    }
    let (mut sum, mut sum2) = (0.0, 0.0);
    for t in 0..budget {
        let d = Decomposition::for_stream(stream, seed, t);
        let (r, alpha) = draw_arrays(&d);
        let fj = feature_vector(&stream.oracle, &stream.nets, &r, &alpha, j.idx());
        let fq = feature_vector(&stream.oracle, &stream.nets, &r, &alpha, q.idx());
        let v = sq_dist_sparse(&fj, &fq);
        sum += v;
        sum2 += v * v;
    }
    let b = budget as f64;
    let mean = sum / b;
    let var = if budget > 1 { ((sum2 - b * mean * mean) / (b - 1.0)).max(0.0) } else { 0.0 };
    Ok((mean, (var / b).sqrt()))
}

/// Most relevant net points per scale that quadrature accepts.
pub const QUADRATURE_MAX_RELEVANT: usize = 4;

/// `E‖f(x_j) − f(x_q)‖²` by grid quadrature, scale by scale.
///
/// At each scale only net points within `Δ_i` of either endpoint affect the two
/// coordinates; their radii are integrated on a midpoint grid in quantile space
/// and their sign bits are enumerated. `evals` caps grid points per scale.
pub fn quadrature_sq_distance(stream: &PointStream, j: PointId, q: PointId, evals: usize) -> Result<f64, L2Error> {
    let (m, nets) = (&stream.oracle, &stream.nets);
    let (a, b) = (j.idx(), q.idx());
    if a == b {
        return Ok(0.0);
    }
    let hi = a.max(b);
    let lambdas: Vec<f64> = (0..=hi).map(|x| 4.0 * nets.estimate_ddim(PointId::from_idx(x)) as f64).collect();
    let mut scales = candidate_scales(m, nets, a);
    scales.extend(candidate_scales(m, nets, b));
    scales.sort_unstable();
    scales.dedup();
    let mut total = 0.0;
    for i in scales {
        let rel: Vec<usize> = (0..=hi)
            .filter(|&k| nets.in_net(k, i - 3) && (m.dist(k, a) < pow2(i) || m.dist(k, b) < pow2(i)))
            .collect();
        if rel.len() > QUADRATURE_MAX_RELEVANT {
            return Err(L2Error::Intractable { scale: i, count: rel.len(), max: QUADRATURE_MAX_RELEVANT });
        }
        let k = rel.len() as u32;
        let grid = ((evals as f64).powf(1.0 / k.max(1) as f64).floor() as usize).max(1);
        let cells = grid.pow(k);
        // Radii outside `rel` never matter at this scale.
        let mut r = vec![1.5; hi + 1];
        let mut alpha = vec![false; hi + 1];
        let mut acc = 0.0;
        for cell in 0..cells {
            let mut c = cell;
            for &p in &rel {
                let u = ((c % grid) as f64 + 0.5) / grid as f64;
                c /= grid;
                r[p] = crate::decomp::texp_quantile(lambdas[p], u);
            }
            let mut sub = 0.0;
            let signs = 1usize << k;
            for mask in 0..signs {
                for (t, &p) in rel.iter().enumerate() {
                    alpha[p] = p != 0 && mask >> t & 1 == 1;
                }
                let fa = coordinate(m, nets, &r, &alpha, a, i);
                let fb = coordinate(m, nets, &r, &alpha, b, i);
                sub += (fa - fb) * (fa - fb);
            }
            acc += sub / signs as f64;
        }
        total += acc / cells as f64;
    }
    Ok(total)
}

/// Online realization of a squared-distance matrix by Gram-Schmidt.
#[derive(Clone, Debug)]
pub struct GramState {
    vecs: Vec<Vec<f64>>,
    /// Residual norm below which a point adds no new direction.
    pub pivot_tol: f64,
    /// Allowed shift of any realized squared distance, relative to the row maximum.
    pub tolerance: f64,
    max_correction: f64,
    pivots: Vec<usize>,
}

impl Default for GramState {
    fn default() -> Self {
        GramState { vecs: Vec::new(), pivot_tol: 1e-9, tolerance: 1e-6, max_correction: 0.0, pivots: Vec::new() }
    }
}

impl GramState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vecs
    }

    pub fn dimension(&self) -> usize {
        self.pivots.len()
    }

    /// Largest squared-distance shift introduced by clipping so far.
    pub fn max_correction(&self) -> f64 {
        self.max_correction
    }

    /// Places the next point given `D` against all earlier points. The point is
    /// always placed; an error reports a shift beyond tolerance.
    pub fn realize_next(&mut self, drow: &[f64]) -> Result<Vec<f64>, L2Error> {
        let n = self.vecs.len();
        assert_eq!(drow.len(), n, "one entry per earlier point");
        if n == 0 {
            self.vecs.push(Vec::new());
            return Ok(Vec::new());
        }
        let norm_sq = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
        let mut c = vec![0.0; self.pivots.len()];
        for (col, &k) in self.pivots.iter().enumerate() {
            let yk = &self.vecs[k];
            let g = 0.5 * (drow[0] + norm_sq(yk) - drow[k]);
            let s: f64 = (0..col).map(|t| c[t] * yk[t]).sum();
            c[col] = (g - s) / yk[col];
        }
        let rho2 = drow[0] - norm_sq(&c);
        if rho2.max(0.0).sqrt() > self.pivot_tol {
            c.push(rho2.sqrt());
            self.pivots.push(n);
        }
        let dist2 = |a: &[f64], b: &[f64]| {
            let len = a.len().max(b.len());
            (0..len)
                .map(|t| {
                    let d = a.get(t).copied().unwrap_or(0.0) - b.get(t).copied().unwrap_or(0.0);
                    d * d
                })
                .sum::<f64>()
        };
        let shift = (0..n).map(|k| (dist2(&c, &self.vecs[k]) - drow[k]).abs()).fold(0.0, f64::max);
        self.max_correction = self.max_correction.max(shift);
        let scale = drow.iter().copied().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        self.vecs.push(c.clone());
        if shift > self.tolerance * scale {
            return Err(L2Error::PsdShift { point: n as u32 + 1, shift, tolerance: self.tolerance * scale });
        }
        Ok(c)
    }
}

/// Deterministic online embedding: Monte-Carlo `D` with common random numbers, realized online.
#[derive(Clone, Debug)]
pub struct L2Embedding {
    pub stream: PointStream,
    pub seed: u64,
    pub budget: u64,
    /// `feats[t][x]`: the draw-`t` vector of point `x`.
    feats: Vec<Vec<SparseVec>>,
    draws: Vec<Decomposition>,
    d: Vec<Vec<f64>>,
    pub gram: GramState,
}

impl L2Embedding {
    pub fn new(stream: PointStream, seed: u64, budget: u64) -> Result<Self, L2Error> {
        if budget == 0 {
            return Err(L2Error::ZeroBudget);
        }
        let n = stream.len();
        let empty = PointStream::new(stream.oracle.empty_like());
        let mut e = L2Embedding {
            stream: empty,
            seed,
            budget,
            feats: vec![Vec::new(); budget as usize],
            draws: (0..budget).map(|t| Decomposition::new(seed, t)).collect(),
            d: Vec::new(),
            gram: GramState::new(),
        };
        for p in 0..n {
            let payload = stream.oracle.payload_of(PointId::from_idx(p));
            e.push(payload)?;
        }
        Ok(e)
    }

    /// Appends a point and realizes its vector.
    pub fn push(&mut self, payload: Payload<'_>) -> Result<Vec<f64>, L2Error> {
        self.stream.append(payload)?;
        let x = self.stream.len() - 1;
        for t in 0..self.budget as usize {
            self.draws[t].extend(&self.stream.nets);
            let (r, alpha) = draw_arrays(&self.draws[t]);
            let f = feature_vector(&self.stream.oracle, &self.stream.nets, &r, &alpha, x);
            self.feats[t].push(f);
        }
        let b = self.budget as f64;
        let row: Vec<f64> = (0..x)
            .map(|k| self.feats.iter().map(|ft| sq_dist_sparse(&ft[x], &ft[k])).sum::<f64>() / b)
            .collect();
        self.d.push(row.clone());
        self.gram.realize_next(&row)
    }

    pub fn len(&self) -> usize {
        self.stream.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stream.is_empty()
    }

    /// Estimated `D_{j,q}` (zero-based indices).
    pub fn d(&self, j: usize, q: usize) -> f64 {
        match j.cmp(&q) {
            std::cmp::Ordering::Equal => 0.0,
            std::cmp::Ordering::Greater => self.d[j][q],
            std::cmp::Ordering::Less => self.d[q][j],
        }
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        self.gram.vectors()
    }

    /// Stretch statistics of the realized vectors against the source metric.
    pub fn distortion(&self) -> DistortionReport {
        distortion_of(&self.stream.oracle, self.vectors())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DistortionReport {
    pub max_stretch: f64,
    pub min_stretch: f64,
    pub mean_stretch: f64,
    /// `max_stretch / min_stretch`.
    pub worst: f64,
}

/// Stretch `‖y_a − y_b‖ / d(a, b)` over all pairs at positive distance.
pub fn distortion_of<M: Metric + ?Sized>(m: &M, ys: &[Vec<f64>]) -> DistortionReport {
    let (mut mx, mut mn, mut sum, mut cnt) = (0.0f64, f64::INFINITY, 0.0, 0usize);
    for a in 0..ys.len() {
        for b in 0..a {
            let d = m.dist(a, b);
            if d == 0.0 {
                continue;
            }
            let len = ys[a].len().max(ys[b].len());
            let e: f64 = (0..len)
                .map(|t| {
                    let v = ys[a].get(t).copied().unwrap_or(0.0) - ys[b].get(t).copied().unwrap_or(0.0);
                    v * v
                })
                .sum::<f64>()
                .sqrt();
            let s = e / d;
            mx = mx.max(s);
            mn = mn.min(s);
            sum += s;
            cnt += 1;
        }
    }
    if cnt == 0 {
        return DistortionReport { max_stretch: 0.0, min_stretch: 0.0, mean_stretch: 0.0, worst: 1.0 };
    }
    let worst = if mn > 0.0 { mx / mn } else { f64::INFINITY };
    DistortionReport { max_stretch: mx, min_stretch: mn, mean_stretch: sum / cnt as f64, worst }
}

/// Seed mixer for per-instance embedding seeds.
pub fn instance_seed(seed: u64, instance: u64) -> u64 {
    splitmix64(seed ^ splitmix64(instance))
}
