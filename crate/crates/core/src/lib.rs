//! Suspicious-taint-based access control over a simulated kernel.
//!
//! Processes, files and sockets carry flags. Untrusted remote input taints
//! processes, taint spreads along process, file and exec flows, and tainted
//! subjects are refused access to confidential, integrity-protected and
//! scarce resources. Traces of system events are replayed deterministically
//! into an audit log and a dependency graph.

pub mod engine;
pub mod guard;
pub mod rule;
pub mod scenarios;
pub mod taint;
pub mod vital;
pub mod world;

pub use engine::{apply_event, replay, Bundle, Event, Policy, Replay, Trace};
pub use rule::Rule;
pub use world::{Flag, FlagSet, World};
pub mod oracle;
#[cfg(feature = "cli")]
pub mod cli;
