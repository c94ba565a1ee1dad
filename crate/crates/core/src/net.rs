//! Outbound network accounting. Every request issued by a remote client is
//! counted here before it leaves the process, which lets offline runs assert
//! that nothing was sent.

use std::sync::atomic::{AtomicU64, Ordering};

static OUTBOUND_REQUESTS: AtomicU64 = AtomicU64::new(0);

pub(crate) fn note_outbound() {
    OUTBOUND_REQUESTS.fetch_add(1, Ordering::SeqCst);
}

/// Number of outbound requests attempted by remote clients in this process.
pub fn outbound_requests() -> u64 {
    OUTBOUND_REQUESTS.load(Ordering::SeqCst)
}
