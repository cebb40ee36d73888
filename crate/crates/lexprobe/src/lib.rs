//! File formats, persistence, HTTP gateway and CLI around [`lexprobe_core`].
//!
//! - [`kgfile`]: the JSON taxonomy document.
//! - [`wire`]: JSON shapes for beliefs, gain tables, configs and traces.
//! - [`log`]: append-only session logs and recovery.
//! - [`store`]: live sessions that write ahead to their logs.
//! - [`server`]: the `/api/v1` HTTP service.
//! - [`cli`]: the `lexprobe` command.

pub mod cli;
pub mod kgfile;
pub mod log;
pub mod server;
pub mod store;
pub mod wire;

pub use lexprobe_core as core;
