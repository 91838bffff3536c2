//! Lock-free SPSC rings plus an event-signaling channel: the
//! application <-> daemon request/response path, with a byte-frozen
//! record ABI.

pub mod event;
pub mod record;
pub mod ring;

pub use event::{EventChannel, WaitOutcome};
pub use record::{
    OpCode, RequestRecord, RespKind, ResponseRecord, RECORD_BYTES, STATUS_OK,
};
pub use ring::{ring_create, Consumer, Producer, RingError};
