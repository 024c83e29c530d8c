//! A lock-free chained hash table built from 128-byte slabs, executed under
//! an emulated 32-lane warp-cooperative model and backed by a warp-aware
//! fixed-size slab allocator.
//!
//! ```
//! use std::sync::Arc;
//! use slabhash::{AllocatorConfig, Op, OpOutcome, SlabAlloc, SlabHashTable, SlabLayout};
//!
//! let alloc = Arc::new(SlabAlloc::new(AllocatorConfig::new(1, 16)).unwrap());
//! let table = SlabHashTable::new(64, SlabLayout::KeyValue, 1, alloc).unwrap();
//! table.bulk_build(&[(1, 10), (2, 20)], 1).unwrap();
//! let report = table.execute_batch(&[Op::search(2), Op::delete(1), Op::search(1)], 1).unwrap();
//! assert_eq!(report.outcomes, vec![OpOutcome::Found(20), OpOutcome::Deleted(1), OpOutcome::NotFound]);
//! ```

pub mod alloc;
pub mod bench;
pub mod list;
pub mod oracle;
pub mod slab;
pub mod table;
pub mod warp;

pub use alloc::{AllocError, AllocatorConfig, SlabAddress, SlabAlloc};
pub use list::{Op, OpKind, OpOutcome, SlabLayout, SlabList, WarpRun};
pub use oracle::{compare_trace, OracleMap, TraceConfig};
pub use table::{HashParams, SlabHashTable, TableError, TableStats};
pub use warp::{LaneId, WarpContext};
