//! Instrumented pairing heaps and an offline auditor for their link counts.
//!
//! [`heap::Forest`] runs pairing heaps and records every link and cut into
//! a [`trace::Trace`]. [`classify`] labels each node and link of a finished
//! trace, and [`audit`] evaluates the amortized link-count bounds over those
//! labels. [`oracle`] and [`workload`] provide the reference queue and the
//! seeded workload generators used to drive everything.

pub mod audit;
pub mod classify;
pub mod heap;
pub mod key;
pub mod oracle;
pub mod rng;
pub mod trace;
pub mod workload;

pub use heap::{Forest, HeapError};
pub use key::{HeapId, ItemId, Key, Strategy};
pub use trace::{Trace, TraceEvent, TraceMeta};
