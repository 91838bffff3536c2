//! First-fit extent allocator over the daemon's one registered staging
//! region (SRQ slots, READ landing buffers, copied send payloads, and
//! WRITE landing areas all come from here).
//!
//! `free` takes only the extent's offset; allocation sizes are tracked
//! internally so a consumer that only knows a payload's byte count (which
//! may be smaller than the slot it arrived in) still releases the whole
//! extent.

use std::collections::HashMap;

use verbs_sim::MemoryRegion;

#[derive(Debug)]
pub struct ArenaPool {
    mr: MemoryRegion,
    /// (offset, len), sorted by offset, coalesced.
    free: Vec<(u64, u64)>,
    sizes: HashMap<u64, u64>,
    used: u64,
}

impl ArenaPool {
    pub fn new(mr: MemoryRegion) -> Self {
        ArenaPool {
            free: vec![(0, mr.length)],
            sizes: HashMap::new(),
            used: 0,
            mr,
        }
    }

    pub fn mr(&self) -> &MemoryRegion {
        &self.mr
    }

    pub fn used(&self) -> u64 {
        self.used
    }

    /// Offset of a fresh extent, or None when no hole fits.
    pub fn alloc(&mut self, len: u64) -> Option<u64> {
        if len == 0 {
            return None;
        }
        let slot = self.free.iter().position(|(_, l)| *l >= len)?;
        let off = self.free[slot].0;
        if self.free[slot].1 == len {
            self.free.remove(slot);
        } else {
            self.free[slot].0 += len;
            self.free[slot].1 -= len;
        }
        self.sizes.insert(off, len);
        self.used += len;
        Some(off)
    }

    /// Release the extent starting at `offset`. Unknown offsets are
    /// ignored (double-free safe).
    pub fn free(&mut self, offset: u64) {
        let Some(len) = self.sizes.remove(&offset) else { return };
        self.used -= len;
        let pos = self.free.partition_point(|(base, _)| *base < offset);
        self.free.insert(pos, (offset, len));
        let mut i = pos.saturating_sub(1);
        while i + 1 < self.free.len() {
            if self.free[i].0 + self.free[i].1 == self.free[i + 1].0 {
                self.free[i].1 += self.free[i + 1].1;
                self.free.remove(i + 1);
            } else {
                i += 1;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use verbs_sim::{MrId, NodeId};

    fn mr(len: u64) -> MemoryRegion {
        MemoryRegion {
            mr_id: MrId(1),
            node: NodeId(0),
            base: 0,
            length: len,
            local_key: 1,
            remote_key: 2,
            registered_at: 0,
        }
    }

    #[test]
    fn alloc_free_coalesce() {
        let mut p = ArenaPool::new(mr(1024));
        let a = p.alloc(256).unwrap();
        let b = p.alloc(256).unwrap();
        let c = p.alloc(512).unwrap();
        assert_eq!(p.used(), 1024);
        assert!(p.alloc(1).is_none());
        p.free(b);
        p.free(a);
        p.free(c);
        assert_eq!(p.used(), 0);
        // Fully coalesced: one 1024-byte allocation fits again.
        assert_eq!(p.alloc(1024), Some(0));
    }

    #[test]
    fn free_by_offset_releases_whole_extent() {
        let mut p = ArenaPool::new(mr(1024));
        let a = p.alloc(512).unwrap();
        p.free(a); // caller may have consumed fewer bytes than 512
        assert_eq!(p.used(), 0);
        p.free(a); // double free is a no-op
        assert_eq!(p.used(), 0);
    }
}
