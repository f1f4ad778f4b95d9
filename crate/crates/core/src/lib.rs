//! Coupled electro-thermal (NDC-T) lithium-ion cell model and maximum-likelihood
//! identification of its parameters by Bayesian optimization with ellipsoidal
//! search-space reduction.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod battery;
pub mod bayesopt;
pub mod gp;
pub mod likelihood;
pub mod optim;
pub mod simulator;
