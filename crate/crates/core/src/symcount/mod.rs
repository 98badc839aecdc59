//! Parametric counting over statement domains.
mod count;
mod domain;
mod faulhaber;
mod footprint;
mod poly;
mod prover;

pub use count::{count_points, normalize, Merge, Normalized};
pub use domain::{stmt_domain, DomainVar, StmtDomain, VarRole};
pub use faulhaber::{power_sum_coefficients, sum_over};
pub use footprint::{
    access_footprint, cell_counts, fill_footprint, lane_stride, lane_stride_at, AxisImage,
    Footprint,
};
pub use poly::{CountExpr, Monomial, Symbol};
pub use prover::{Facts, Range};
