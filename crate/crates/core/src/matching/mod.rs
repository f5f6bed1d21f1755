//! Batch ride matching: a one-to-one request/vehicle assignment followed by
//! pairwise vehicle merging, plus the two solvers it is built on.

mod blossom;
mod gmomatch;
mod hungarian;

pub use blossom::{max_weight_matching, max_weight_matching_int, WEIGHT_SCALE};
pub use gmomatch::{
    gmomatch, gmomatch_step1, gmomatch_step2, MatchOptions, MatchResult, MatchStats, Merge,
    Step1Pair, VehicleGraph,
};
pub use hungarian::{hungarian, Assignment, CostMatrix};
