//! Software emulation of the RDMA verbs queuing model: queue pairs,
//! completion queues, shared receive queues and memory regions over an
//! in-process lossless fabric, with a NIC context-cache cost model and a
//! logical clock.

pub mod config;
pub mod error;
pub mod fabric;
pub mod nic;
pub mod types;

pub use config::SimConfig;
pub use error::{BatchError, Result, SimError};
pub use fabric::{Fabric, SharedFabric, TraceEvent, MAX_RECV_DEPTH};
pub use nic::NicModel;
pub use types::*;
