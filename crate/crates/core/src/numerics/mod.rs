//! Linear algebra, probability and statistics primitives.

pub mod linalg;
pub mod prob;
pub mod rng;
pub mod stats;

pub use linalg::{dot, invert_spd, sherman_morrison_downdate, solve_spd, work_units, Ldl, Matrix};
pub use prob::{argmax, kl_divergence, softmax, total_variation};
pub use rng::{gaussian_vector, RngStream};
pub use stats::{jeffreys_interval, median, spearman, CredibleInterval};
