//! The NIC cache must agree with an independent brute-force LRU simulation
//! on arbitrary access traces.

use proptest::prelude::*;
use verbs_sim::{NicModel, QpId};

/// Brute-force LRU: a recency-ordered list, most recent last.
struct OracleLru {
    capacity: usize,
    order: Vec<u32>,
}

impl OracleLru {
    fn new(capacity: usize) -> Self {
        OracleLru { capacity, order: Vec::new() }
    }

    fn access(&mut self, qp: u32) -> bool {
        if let Some(pos) = self.order.iter().position(|q| *q == qp) {
            self.order.remove(pos);
            self.order.push(qp);
            true
        } else {
            if self.order.len() >= self.capacity {
                self.order.remove(0);
            }
            self.order.push(qp);
            false
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn nic_cache_equals_bruteforce_lru(
        capacity in 1usize..32,
        trace in proptest::collection::vec(0u32..64, 1..512),
    ) {
        let mut nic = NicModel::new(capacity);
        let mut oracle = OracleLru::new(capacity);
        for (i, qp) in trace.iter().enumerate() {
            let got = nic.access(QpId(*qp));
            let want = oracle.access(*qp);
            prop_assert_eq!(got, want, "diverged at access {} (qp {})", i, qp);
        }
    }
}

#[test]
fn long_random_trace_matches_oracle() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    let mut nic = NicModel::new(400);
    let mut oracle = OracleLru::new(400);
    for i in 0..10_000 {
        let qp = rng.gen_range(0..1000u32);
        assert_eq!(nic.access(QpId(qp)), oracle.access(qp), "access {i}");
    }
}
