//! Lock-free single-producer / single-consumer ring.
//!
//! Indices grow monotonically; a slot index is the counter masked by
//! `capacity - 1`. Full/empty disambiguation uses the one-slot sentinel
//! scheme, so a ring of capacity N holds at most N-1 records. The producer
//! publishes with a release store of `tail`, the consumer with a release
//! store of `head`; each side reads the other's counter with acquire.

use std::cell::UnsafeCell;
use std::mem::MaybeUninit;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum RingError {
    #[error("capacity must be a power of two >= 2")]
    BadCapacity,
    #[error("ring full")]
    Full,
    #[error("ring empty")]
    Empty,
}

struct Inner<T> {
    mask: usize,
    slots: Box<[UnsafeCell<MaybeUninit<T>>]>,
    head: AtomicUsize,
    tail: AtomicUsize,
}

// Records are plain data moved across the ring; the SPSC protocol ensures
// a slot is touched by exactly one side at a time.
unsafe impl<T: Send + Copy> Send for Inner<T> {}
unsafe impl<T: Send + Copy> Sync for Inner<T> {}

pub struct Producer<T: Copy> {
    inner: Arc<Inner<T>>,
}

pub struct Consumer<T: Copy> {
    inner: Arc<Inner<T>>,
}

/// Create an SPSC ring. The two halves are the only handles that will ever
/// touch it; neither is cloneable.
pub fn ring_create<T: Copy + Send>(
    capacity: usize,
) -> Result<(Producer<T>, Consumer<T>), RingError> {
    if capacity < 2 || !capacity.is_power_of_two() {
        return Err(RingError::BadCapacity);
    }
    let slots = (0..capacity)
        .map(|_| UnsafeCell::new(MaybeUninit::uninit()))
        .collect::<Vec<_>>()
        .into_boxed_slice();
    let inner = Arc::new(Inner {
        mask: capacity - 1,
        slots,
        head: AtomicUsize::new(0),
        tail: AtomicUsize::new(0),
    });
    Ok((Producer { inner: inner.clone() }, Consumer { inner }))
}

impl<T: Copy> Producer<T> {
    pub fn enqueue(&mut self, value: T) -> Result<(), RingError> {
        let inner = &*self.inner;
        let tail = inner.tail.load(Ordering::Relaxed);
        let head = inner.head.load(Ordering::Acquire);
        if tail.wrapping_sub(head) == inner.mask {
            return Err(RingError::Full);
        }
        unsafe {
            (*inner.slots[tail & inner.mask].get()).write(value);
        }
        inner.tail.store(tail.wrapping_add(1), Ordering::Release);
        Ok(())
    }

    /// Records currently readable by the consumer.
    pub fn len(&self) -> usize {
        let inner = &*self.inner;
        inner
            .tail
            .load(Ordering::Relaxed)
            .wrapping_sub(inner.head.load(Ordering::Acquire))
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Usable slot count (capacity minus the sentinel slot).
    pub fn usable_capacity(&self) -> usize {
        self.inner.mask
    }
}

impl<T: Copy> Consumer<T> {
    pub fn dequeue(&mut self) -> Result<T, RingError> {
        let inner = &*self.inner;
        let head = inner.head.load(Ordering::Relaxed);
        let tail = inner.tail.load(Ordering::Acquire);
        if head == tail {
            return Err(RingError::Empty);
        }
        let value = unsafe { (*inner.slots[head & inner.mask].get()).assume_init_read() };
        inner.head.store(head.wrapping_add(1), Ordering::Release);
        Ok(value)
    }

    pub fn len(&self) -> usize {
        let inner = &*self.inner;
        inner
            .tail
            .load(Ordering::Acquire)
            .wrapping_sub(inner.head.load(Ordering::Relaxed))
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn usable_capacity(&self) -> usize {
        self.inner.mask
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn capacity_must_be_power_of_two() {
        assert!(ring_create::<u32>(8).is_ok());
        assert_eq!(ring_create::<u32>(7).err(), Some(RingError::BadCapacity));
        assert_eq!(ring_create::<u32>(0).err(), Some(RingError::BadCapacity));
        assert_eq!(ring_create::<u32>(1).err(), Some(RingError::BadCapacity));
    }

    #[test]
    fn fresh_ring_is_empty() {
        let (p, mut c) = ring_create::<u32>(8).unwrap();
        assert_eq!(p.len(), 0);
        assert_eq!(c.dequeue(), Err(RingError::Empty));
    }

    #[test]
    fn sentinel_capacity() {
        let (mut p, _c) = ring_create::<u32>(2).unwrap();
        assert_eq!(p.usable_capacity(), 1);
        p.enqueue(1).unwrap();
        assert_eq!(p.enqueue(2), Err(RingError::Full));
    }

    #[test]
    fn fifo_order() {
        let (mut p, mut c) = ring_create::<u8>(8).unwrap();
        for v in [b'a', b'b', b'c'] {
            p.enqueue(v).unwrap();
        }
        assert_eq!(c.dequeue(), Ok(b'a'));
        assert_eq!(c.dequeue(), Ok(b'b'));
        assert_eq!(c.dequeue(), Ok(b'c'));
        assert_eq!(c.dequeue(), Err(RingError::Empty));
    }

    #[test]
    fn full_then_drain_then_reuse() {
        let (mut p, mut c) = ring_create::<usize>(4).unwrap();
        for round in 0..10 {
            for i in 0..3 {
                p.enqueue(round * 10 + i).unwrap();
            }
            assert_eq!(p.enqueue(99), Err(RingError::Full));
            for i in 0..3 {
                assert_eq!(c.dequeue(), Ok(round * 10 + i));
            }
        }
    }
}
