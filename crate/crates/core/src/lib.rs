//! Reduction of slow/fast stochastic systems to low-dimensional models:
//! deterministic center manifolds, stochastic normal-form transforms, and
//! Monte Carlo validation of the reduced models.

pub mod cm;
pub mod experiments;
pub mod linalg;
pub mod nf;
pub mod seir;
pub mod sim;
pub mod stochpoly;
pub mod system;
pub mod systems;
