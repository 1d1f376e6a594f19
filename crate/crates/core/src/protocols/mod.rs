//! Routing, broadcasting, gathering and sorting primitives built on the
//! simulator. Every invocation checks its round and message bounds against
//! the transcript.

mod dgs;
mod dsg;
mod gather;
mod rsg;
mod sort;

use std::sync::atomic::{AtomicU64, Ordering};

pub use dgs::{dgs_broadcast, DgsOutcome};
pub use dsg::{dsg_gather, dsg_item_capacity, DsgOutcome};
pub use gather::{gather_branching, tree_gather, GatherTree, TreeGatherOutcome, TreeRole};
pub use rsg::{rsg_budget, rsg_destination_cap, rsg_route, rsg_route_batched, RsgItem, RsgOutcome};
pub use sort::{distributed_sort, SortOutcome};

use crate::error::{Error, Result};

static CHECKS: AtomicU64 = AtomicU64::new(0);
static VIOLATIONS: AtomicU64 = AtomicU64::new(0);

/// Process-wide count of `(bound checks, violations)` across all invocations.
pub fn bound_checks() -> (u64, u64) {
    (CHECKS.load(Ordering::Relaxed), VIOLATIONS.load(Ordering::Relaxed))
}

pub(crate) fn check_bound(ok: bool, what: impl FnOnce() -> String) -> Result<()> {
    CHECKS.fetch_add(1, Ordering::Relaxed);
    if ok {
        Ok(())
    } else {
        VIOLATIONS.fetch_add(1, Ordering::Relaxed);
        Err(Error::ProtocolFailure(format!("bound violated: {}", what())))
    }
}
