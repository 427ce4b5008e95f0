pub mod calibration;
pub mod ergodic;
pub mod exponents;
pub mod functionals;
pub mod gfun;
pub mod inequalities;
pub mod norms;

pub use calibration::{calibrate, CalibrationReport, CalibrationSpec};
pub use ergodic::{ergodic_sup_check, ErgodicReport, ErgodicSpec, LocalFunctional};
pub use exponents::{exponents, Exponent, ExponentBundle, Schedule, ScheduleValues};
pub use functionals::{Functionals, LocalData};
pub use gfun::{cbar, g_function};
pub use inequalities::{check_energy, check_maximal, check_poincare, check_sobolev, InequalityKind, InequalityReport};
