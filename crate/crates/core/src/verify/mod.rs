//! Exact-dynamics analysis on small MDPs: expected updates computed in closed
//! form, Jacobian symmetry, gradient matching, the oscillation game's ODE and
//! cross-entropy minima.

mod analysis;
mod exact;
mod fixtures;
mod minima;
mod oscillation;
mod sampled;

pub use analysis::{finite_difference_gradient, gradient_match, jacobian, jacobian_symmetry_defect, FD_STEP};
pub use exact::{occupancy, ExactDynamics, Parametrization, DEFAULT_HORIZON, HORIZON_MASS_TOLERANCE};
pub use fixtures::{
    counterexample_fixture, counterexample_teacher, three_by_three_fixture, three_state_fixture, Fixture,
};
pub use minima::cross_entropy_minimizer;
pub use oscillation::{
    closed_form_field, first_integral, first_integral_gradient, integrate, integrate_until, Integrator,
    OdePath,
};
pub use sampled::{monte_carlo_update, UpdateEstimate};

use thiserror::Error;

use crate::distill::DistillError;
use crate::mdp::MdpError;
use crate::teacher::TeacherError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VerifyError {
    #[error("episodes do not end: {remaining:e} probability mass left after {horizon} steps")]
    HorizonUnbounded { horizon: usize, remaining: f64 },
    #[error("parameter vector has {got} entries, expected {expected}")]
    Dimension { expected: usize, got: usize },
    #[error(transparent)]
    Distill(#[from] DistillError),
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error(transparent)]
    Teacher(#[from] TeacherError),
}
