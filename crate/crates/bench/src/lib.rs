//! Deterministic inputs shared by the kernel benchmarks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use transinfo::sample::{random_birth_death, random_metric, random_observable, random_probability, random_reversible_chain};
use transinfo::{CostMatrix, ReversibleChain};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Cost matrix from a random metric plus two marginals on `n` points.
pub fn transport_instance(n: usize) -> (CostMatrix, Vec<f64>, Vec<f64>) {
    let mut r = rng(n as u64);
    let d = random_metric(&mut r, n);
    let nu = random_probability(&mut r, n);
    let mu = random_probability(&mut r, n);
    (CostMatrix::from_metric(&d), nu, mu)
}

/// Dense reversible chain and an observable on `n` states.
pub fn chain_with_observable(n: usize) -> (ReversibleChain, Vec<f64>) {
    let mut r = rng(1000 + n as u64);
    let chain = random_reversible_chain(&mut r, n);
    let u = random_observable(&mut r, n, 1.0);
    (chain, u)
}

pub fn birth_death(n: usize) -> ReversibleChain {
    random_birth_death(&mut rng(2000 + n as u64), n)
}
