//! Gradient interface models: potentials, Langevin dynamics, Gibbs sampling,
//! induced conductances and covariance checks.

mod checks;
mod covariance;
mod field;
mod gaussian;
mod gff;
mod langevin;
mod potential;
mod sampling;
mod scaling;

pub use checks::{brascamp_lieb_check, moment_check, BrascampLieb, MomentReport, MomentRow};
pub use covariance::{
    cov_direct, cov_hs, covariance_table, hs_integrals, induced_env, omega_moment, CovRow, CovarianceEstimate, HsIntegrals, HsParams,
    OmegaMoment,
};
pub use field::{force, hamiltonian, InterfaceField};
pub use gaussian::DirichletBasis;
pub use gff::{gff_test, limit_variance, smeared_variance, GffLevel, GffSpec, GffTestRecord, GreenTable, LaplacePoint, TestFunction};
pub use langevin::{default_dt, evolve, LangevinParams, Trajectory};
pub use potential::{Potential, PotentialSpec};
pub use sampling::{relaxation_time, sample_gibbs, GibbsMode, GibbsParams};
pub use scaling::{cov_scaling_curve, gaussian_kernel, lattice_kernel, lattice_kernel_integral, pbar, ScalingCurve, ScalingPoint};
