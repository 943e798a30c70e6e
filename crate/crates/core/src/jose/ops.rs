//! Per-thread counters of signature operations.
//!
//! Every EdDSA signature produced by [`super::sign_with_header`] and every
//! verification attempted through [`super::Jws::verify`] is recorded here, so
//! callers can assert how many cryptographic operations a protocol step costs.

use std::cell::Cell;

thread_local! {
    static SIGNS: Cell<u64> = const { Cell::new(0) };
    static VERIFIES: Cell<u64> = const { Cell::new(0) };
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OpCounts {
    pub signs: u64,
    pub verifies: u64,
}

impl std::ops::Sub for OpCounts {
    type Output = OpCounts;

    fn sub(self, rhs: OpCounts) -> OpCounts {
        OpCounts {
            signs: self.signs - rhs.signs,
            verifies: self.verifies - rhs.verifies,
        }
    }
}

pub(crate) fn record_sign() {
    SIGNS.with(|c| c.set(c.get() + 1));
}

pub(crate) fn record_verify() {
    VERIFIES.with(|c| c.set(c.get() + 1));
}

/// Totals for the current thread since it started.
pub fn snapshot() -> OpCounts {
    OpCounts {
        signs: SIGNS.with(Cell::get),
        verifies: VERIFIES.with(Cell::get),
    }
}

/// Runs `f` and returns the operations it performed on this thread.
pub fn measure<R>(f: impl FnOnce() -> R) -> (R, OpCounts) {
    let before = snapshot();
    let out = f();
    (out, snapshot() - before)
}
