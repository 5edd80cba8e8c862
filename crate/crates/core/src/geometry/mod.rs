//! Projections and min-max evaluations over piecewise-linear models.

mod level;
mod minmax;
pub mod qp;
mod region;

pub use level::{project_onto_level_set, LevelProjection, DEFAULT_QP_TOL};
pub use minmax::{eval_wgap, max_support, min_max_affine, MinMaxValue, WGap};
pub use region::Region;
