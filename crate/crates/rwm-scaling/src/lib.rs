//! Proposal-scaling analysis and empirical validation for random-walk
//! Metropolis samplers on targets with dimension-dependent scaling terms.
//!
//! The crate has two halves that check each other:
//!
//! * a symbolic analyzer ([`asymptotics`]) that works on exact rational
//!   powers of the dimension and derives the proposal-variance exponent, the
//!   aggregate roughness constant, the optimal proposal constant
//!   `ell_hat = 2.38 / sqrt(E_R)` and the asymptotically optimal acceptance
//!   rate 0.234 — or refuses to report a rate when a finite-multiplicity
//!   scaling term dominates;
//! * an empirical side ([`target`], [`sampler`], [`diffusion`],
//!   [`experiments`]) that instantiates concrete targets at finite
//!   dimension, runs the Metropolis kernel with acceptance/ESJD diagnostics,
//!   integrates the limiting Langevin diffusion as a reference, and packages
//!   reproducible studies comparing the two.
//!
//! The `rwm-scaling` binary exposes all of it behind a configuration file;
//! see the crate README.

pub mod asymptotics;
pub mod cli;
pub mod config;
pub mod diffusion;
pub mod experiments;
pub mod exponent;
pub mod quadrature;
pub mod sampler;
pub mod special;
pub mod target;
