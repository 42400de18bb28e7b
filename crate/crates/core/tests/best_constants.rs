use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use transinfo::feynman_kac::best_w1i;
use transinfo::sample::{random_metric, random_reversible_chain};
use transinfo::{product_chain, MetricMatrix};

// Above the exact-enumeration size the dual search relies on candidates, so
// the primal witness must never beat it.
#[test]
fn dual_dominates_primal_on_larger_spaces() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let a = random_reversible_chain(&mut rng, 3);
    let b = random_reversible_chain(&mut rng, 3);
    let product = product_chain(&[&a, &b]).unwrap();
    let r = best_w1i(&product, &MetricMatrix::trivial(9));
    assert!(r.c_primal <= r.c_dual + 1e-9, "{} > {}", r.c_primal, r.c_dual);
    assert!(r.c_dual - r.c_primal <= 1e-3, "{} vs {}", r.c_dual, r.c_primal);

    for n in [7, 8, 10] {
        let chain = random_reversible_chain(&mut rng, n);
        let d = random_metric(&mut rng, n);
        let r = best_w1i(&chain, &d);
        assert!(r.c_primal <= r.c_dual + 1e-9, "n = {n}: {} > {}", r.c_primal, r.c_dual);
    }
}
