//! Quadratic funding with a capital-constrained matching pool.
//!
//! Allocation (`funding`), concentration of backers (`concentration`), the
//! efficiency coefficient λ_p (`efficiency`), contributor equilibria
//! (`equilibrium`), collusion arithmetic (`strategy`), a day-by-day round
//! simulator (`sim`), and CSV I/O plus reciprocity forensics.

// `!(x > 0.0)` guards reject NaN along with nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod concentration;
pub mod efficiency;
pub mod equilibrium;
pub mod error;
pub mod forensics;
pub mod funding;
pub mod ids;
pub mod ledger;
pub mod report;
pub mod sim;
pub mod stats;
pub mod strategy;

pub use error::{Error, Result};
pub use funding::{
    compute_k, cqf_allocate, marginal_match, matching_requirement, qf_target, Allocation, Contribution,
    MatchOutcome, PoolState, ProjectLedger, SurplusPolicy,
};
pub use ids::{CategoryId, ContributorId, ProjectId};
