//! Finite QP-context cache with LRU replacement.
//!
//! Every work request served by a NIC first touches the QP's on-adapter
//! context. A context miss pays `miss_cost` and evicts the least recently
//! used entry once the cache is full. This is the mechanism behind the
//! throughput cliff when the number of active QPs exceeds the capacity.

use std::collections::HashMap;

use crate::config::SimConfig;
use crate::types::QpId;

#[derive(Debug)]
pub struct NicModel {
    capacity: usize,
    /// qp -> last-use tick.
    cached: HashMap<QpId, u64>,
    tick: u64,
    pub hits: u64,
    pub misses: u64,
}

impl NicModel {
    pub fn new(capacity: usize) -> Self {
        NicModel {
            capacity: capacity.max(1),
            cached: HashMap::new(),
            tick: 0,
            hits: 0,
            misses: 0,
        }
    }

    /// Touch a QP context. Returns true on a cache hit.
    pub fn access(&mut self, qp: QpId) -> bool {
        self.tick += 1;
        if let Some(t) = self.cached.get_mut(&qp) {
            *t = self.tick;
            self.hits += 1;
            return true;
        }
        self.misses += 1;
        if self.cached.len() >= self.capacity {
            // Evict the LRU entry; qp_id breaks (impossible) tick ties.
            let victim = self
                .cached
                .iter()
                .min_by_key(|(id, t)| (**t, id.0))
                .map(|(id, _)| *id)
                .expect("non-empty cache");
            self.cached.remove(&victim);
        }
        self.cached.insert(qp, self.tick);
        false
    }

    /// Drop a context without charging an access (QP teardown).
    pub fn invalidate(&mut self, qp: QpId) {
        self.cached.remove(&qp);
    }

    pub fn occupancy(&self) -> usize {
        self.cached.len()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn hit_rate(&self) -> f64 {
        let total = self.hits + self.misses;
        if total == 0 {
            return 0.0;
        }
        self.hits as f64 / total as f64
    }

    /// Fixed per-WR service cost for one access, before any batch discount.
    pub fn service_cost(&mut self, qp: QpId, cfg: &SimConfig) -> (f64, bool) {
        if self.access(qp) {
            (cfg.hit_cost_ns, true)
        } else {
            (cfg.miss_cost_ns, false)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(capacity: usize, accesses: &[u32]) -> Vec<bool> {
        let mut nic = NicModel::new(capacity);
        accesses.iter().map(|q| nic.access(QpId(*q))).collect()
    }

    #[test]
    fn round_robin_over_capacity_always_misses() {
        // capacity=2, [1,2,3,1]: 1 is evicted by 3, so the final access misses.
        assert_eq!(seq(2, &[1, 2, 3, 1]), vec![false, false, false, false]);
    }

    #[test]
    fn repeat_within_capacity_hits() {
        assert_eq!(seq(2, &[1, 2, 1]), vec![false, false, true]);
    }

    #[test]
    fn full_capacity_steady_state_all_hits() {
        let mut nic = NicModel::new(400);
        for round in 0..3 {
            for q in 0..400u32 {
                let hit = nic.access(QpId(q));
                assert_eq!(hit, round > 0);
            }
        }
        assert_eq!(nic.occupancy(), 400);
    }

    #[test]
    fn occupancy_never_exceeds_capacity() {
        let mut nic = NicModel::new(3);
        for q in 0..100u32 {
            nic.access(QpId(q));
            assert!(nic.occupancy() <= 3);
        }
    }
}
