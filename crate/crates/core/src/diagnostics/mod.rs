//! Velocity-norm profiles, Gaussian Frechet distances and lag tracking.

mod frechet;
mod lag;
pub(crate) mod profile;
pub mod svg;

pub use frechet::{frechet_gaussian, split_half_floor, sqrtm_psd, MomentStats, EIG_TOL};
pub use lag::{lag_improvement, lag_table_csv, terminal_noise_floor, track_fld, FldReport, LagRow};
pub use profile::{norm_profile, NormProfile, MIN_PROFILE_SAMPLES};
