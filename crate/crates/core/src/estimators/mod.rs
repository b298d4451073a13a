//! Sparse recovery of the grid-domain fading vector.

mod omp;
mod sbl;

pub use omp::{omp, OmpResult};
pub use sbl::{
    neg_log_evidence, neg_log_evidence_woodbury, sbl_e_step, sbl_e_step_route, sbl_em, sbl_m_step, whiten,
    EStepRoute, SblOptions, SblState, PRUNE_RATIO,
};
