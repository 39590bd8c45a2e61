//! Deterministic inputs shared by the benchmarks.

use omm_core::metric::DistanceOracle;

/// `n` points in the unit square from a fixed generator.
pub fn uniform_square(n: usize, seed: u64) -> DistanceOracle {
    let mut s = seed;
    let mut next = || {
        s = omm_core::rng::splitmix64(s);
        (s >> 11) as f64 / (1u64 << 53) as f64
    };
    let pts: Vec<Vec<f64>> = (0..n).map(|_| vec![next(), next()]).collect();
    DistanceOracle::from_points(2, &pts).expect("finite points")
}

/// `n` points on `[0, 1e6)`.
pub fn line_points(n: usize, seed: u64) -> Vec<f64> {
    let mut s = seed;
    (0..n)
        .map(|_| {
            s = omm_core::rng::splitmix64(s);
            (s >> 11) as f64 / (1u64 << 53) as f64 * 1e6
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use omm_core::metric::Metric;

    #[test]
    fn inputs_are_reproducible() {
        assert_eq!(line_points(5, 1), line_points(5, 1));
        assert_eq!(uniform_square(4, 2).len(), 4);
    }
}
