//! Online metric embeddings and low-recourse matchings.

pub mod adversary;
pub mod decomp;
pub mod hst;
pub mod hst_matching;
pub mod l2;
pub mod light_matching;
pub mod line_matching;
pub mod metric;
pub mod nets;
pub mod oracles;
pub mod pipeline;
pub mod recourse;
pub mod rng;
pub mod seq;

pub use metric::{DistanceOracle, Metric, MetricError, Mode, Payload, PointId, PrefixStats};
pub use nets::{NetHierarchy, PointStream, TopLevel};
