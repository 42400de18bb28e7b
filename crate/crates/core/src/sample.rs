//! Random instances: reversible chains, densities, metrics and observables.
//! Used by scans, property tests and the bundled experiments.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::markov::{build_chain, Density, MetricMatrix, ReversibleChain};

/// Probability vector with entries bounded away from zero.
pub fn random_probability<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| 0.05 + rng.random::<f64>()).collect();
    let s: f64 = w.iter().sum();
    w.iter().map(|v| v / s).collect()
}

/// Random irreducible reversible chain on `n` states: a random law and
/// symmetric edge conductances on a connected random graph.
pub fn random_reversible_chain<R: Rng + ?Sized>(rng: &mut R, n: usize) -> ReversibleChain {
    let mu = random_probability(rng, n);
    let mut kappa = DMatrix::zeros(n, n);
    // a random spanning tree keeps the graph connected
    for y in 1..n {
        let x = rng.random_range(0..y);
        let k = 0.1 + rng.random::<f64>();
        kappa[(x, y)] = k;
        kappa[(y, x)] = k;
    }
    for x in 0..n {
        for y in x + 1..n {
            if kappa[(x, y)] == 0.0 && rng.random::<f64>() < 0.5 {
                let k = 0.1 + rng.random::<f64>();
                kappa[(x, y)] = k;
                kappa[(y, x)] = k;
            }
        }
    }
    chain_from_conductances(&kappa, &mu)
}

/// Random birth-death chain on `n` states.
pub fn random_birth_death<R: Rng + ?Sized>(rng: &mut R, n: usize) -> ReversibleChain {
    let mu = random_probability(rng, n);
    let mut kappa = DMatrix::zeros(n, n);
    for x in 0..n - 1 {
        let k = 0.1 + rng.random::<f64>();
        kappa[(x, x + 1)] = k;
        kappa[(x + 1, x)] = k;
    }
    chain_from_conductances(&kappa, &mu)
}

/// Chain with `q_xy = kappa_xy / mu_x` for a symmetric conductance matrix.
pub fn chain_from_conductances(kappa: &DMatrix<f64>, mu: &[f64]) -> ReversibleChain {
    let n = mu.len();
    let rates = DMatrix::from_fn(n, n, |x, y| if x == y { 0.0 } else { kappa[(x, y)] / mu[x] });
    build_chain(&rates, Some(mu)).expect("symmetric conductances give a reversible chain")
}

/// Density with log-normal weights of random spread.
pub fn random_density<R: Rng + ?Sized>(rng: &mut R, mu: &[f64]) -> Density {
    let spread = 0.1 + 2.0 * rng.random::<f64>();
    let w: Vec<f64> = mu
        .iter()
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            (spread * z).exp()
        })
        .collect();
    Density::from_weights(mu, &w).expect("positive weights")
}

/// Density supported on a random nonempty subset, with some exact zeros.
pub fn random_sparse_density<R: Rng + ?Sized>(rng: &mut R, mu: &[f64]) -> Density {
    let n = mu.len();
    let keep = rng.random_range(0..n);
    let w: Vec<f64> =
        (0..n).map(|i| if i == keep || rng.random::<f64>() < 0.5 { rng.random::<f64>() + 0.01 } else { 0.0 }).collect();
    Density::from_weights(mu, &w).expect("nonzero weights")
}

/// Shortest-path metric of a complete graph with random edge weights.
pub fn random_metric<R: Rng + ?Sized>(rng: &mut R, n: usize) -> MetricMatrix {
    let mut d = DMatrix::zeros(n, n);
    for x in 0..n {
        for y in x + 1..n {
            let w = 0.2 + 2.0 * rng.random::<f64>();
            d[(x, y)] = w;
            d[(y, x)] = w;
        }
    }
    for k in 0..n {
        for x in 0..n {
            for y in 0..n {
                let via = d[(x, k)] + d[(k, y)];
                if via < d[(x, y)] {
                    d[(x, y)] = via;
                }
            }
        }
    }
    MetricMatrix::new(d).expect("shortest-path closure is a metric")
}

/// Observable with standard normal entries times `scale`.
pub fn random_observable<R: Rng + ?Sized>(rng: &mut R, n: usize, scale: f64) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            scale * z
        })
        .collect()
}
