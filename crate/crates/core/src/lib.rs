//! Numerical laboratory for transportation-information inequalities
//! `alpha(T_c(nu, mu)) <= I(nu | mu)` on finite reversible Markov chains and
//! one-dimensional diffusions.
//!
//! The crate computes transport costs (exact optimal transport), the
//! Fisher-Donsker-Varadhan information, Feynman-Kac principal eigenvalues,
//! spectral gaps and Lyapunov drifts, and checks the deviation bounds they
//! imply by exact Monte Carlo simulation.

// NaN-rejecting comparisons and index loops over several arrays are idiomatic here
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod diffusion;
pub mod error;
pub mod feynman_kac;
pub mod linalg;
pub mod lyapunov;
pub mod markov;
pub mod sample;
pub mod simulate;
pub mod transport;
pub mod trivial_metric;

pub use error::{Error, Result};
pub use markov::{
    build_chain, dirichlet_energy, fisher_information, lipschitz_norm, poisson_solve, product_chain,
    relative_entropy, spectral_gap, tv_weighted, Density, MetricMatrix, ReversibleChain, SpectralGap,
};
pub use nalgebra::DMatrix;
pub use transport::{
    alpha_conjugate, alpha_infconv, alpha_infconv_identical, infconv_potential, kantorovich_dual, ot_cost,
    supconv_potential, tensor_cost, tensor_subadditivity_check, w1, w2, w2_quantile_1d, CostMatrix, Coupling,
    RateFunction,
};
