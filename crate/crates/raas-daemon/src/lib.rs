//! Per-node RDMA service daemon over the in-process verbs simulator:
//! many logical connections (vQPNs) multiplexed onto a few shared QPs,
//! worker threads that batch-post work requests from per-connection IPC
//! rings, a poller that demultiplexes completions back to applications,
//! and an adaptive transport/verb selection policy.

pub mod addr;
pub mod cluster;
pub mod config;
pub mod daemon;
pub mod error;
pub mod flags;
pub mod metrics;
pub mod policy;
pub mod pool;
mod poller;
mod state;
pub mod vqpn;
mod worker;

pub use addr::Addr;
pub use cluster::{AppEndpoint, Cluster};
pub use config::DaemonConfig;
pub use daemon::Daemon;
pub use error::{status, DaemonError, Result};
pub use flags::Flags;
pub use metrics::{MetricsSnapshot, METRICS_CSV_HEADER};
pub use policy::{
    select_path, send_path_copy_or_register, CopyMode, LoadStats, PolicyConfig,
};
pub use vqpn::{encode_wr, pack_wr_id, unpack_wr_id, VqpnAllocator, DOORBELL_BIT};
