use std::collections::BTreeMap;

use crate::world::{ProcessId, ResourceKind};

const KINDS: usize = ResourceKind::ALL.len();
const DEFAULT_SYS_PERCENT: u8 = 90;

/// Availability accounting for every resource kind.
///
/// `allocated_sys` is the sum over all live processes; tainted processes are
/// additionally bounded by the per-process mark and the system percentage.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ResourceLedger {
    totals: [u64; KINDS],
    allocated: [u64; KINDS],
    hwm_st: [Option<u64>; KINDS],
    hwm_sys: [u8; KINDS],
    per_process: BTreeMap<ProcessId, [u64; KINDS]>,
}

impl Default for ResourceLedger {
    fn default() -> Self {
        ResourceLedger {
            totals: [u64::MAX; KINDS],
            allocated: [0; KINDS],
            hwm_st: [None; KINDS],
            hwm_sys: [DEFAULT_SYS_PERCENT; KINDS],
            per_process: BTreeMap::new(),
        }
    }
}

/// Outcome of testing an allocation against the marks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AllocCheck {
    Within,
    OverProcessMark,
    OverSystemMark,
    Exhausted,
}

impl ResourceLedger {
    pub fn set_capacity(&mut self, kind: ResourceKind, total: u64) {
        self.totals[kind.index()] = total;
    }

    pub fn set_marks(&mut self, kind: ResourceKind, per_tainted: u64, sys_percent: u8) {
        self.hwm_st[kind.index()] = Some(per_tainted);
        self.hwm_sys[kind.index()] = sys_percent;
    }

    pub fn capacity(&self, kind: ResourceKind) -> u64 {
        self.totals[kind.index()]
    }

    pub fn allocated_sys(&self, kind: ResourceKind) -> u64 {
        self.allocated[kind.index()]
    }

    /// Per-tainted-process mark; half the capacity unless configured.
    pub fn hwm_st(&self, kind: ResourceKind) -> u64 {
        self.hwm_st[kind.index()].unwrap_or(self.totals[kind.index()] / 2)
    }

    pub fn hwm_sys(&self, kind: ResourceKind) -> u8 {
        self.hwm_sys[kind.index()]
    }

    pub fn usage(&self, pid: ProcessId, kind: ResourceKind) -> u64 {
        self.per_process
            .get(&pid)
            .map_or(0, |row| row[kind.index()])
    }

    /// Tests `amount` more units for `pid`. Marks apply only when `tainted`.
    /// Denial uses strict `>` on the post-allocation values.
    pub fn check(&self, pid: ProcessId, kind: ResourceKind, amount: u64, tainted: bool) -> AllocCheck {
        let i = kind.index();
        let after_sys = u128::from(self.allocated[i]) + u128::from(amount);
        if tainted {
            let after_proc = u128::from(self.usage(pid, kind)) + u128::from(amount);
            if after_proc > u128::from(self.hwm_st(kind)) {
                return AllocCheck::OverProcessMark;
            }
            if 100 * after_sys > u128::from(self.hwm_sys[i]) * u128::from(self.totals[i]) {
                return AllocCheck::OverSystemMark;
            }
        }
        if after_sys > u128::from(self.totals[i]) {
            return AllocCheck::Exhausted;
        }
        AllocCheck::Within
    }

    pub fn charge(&mut self, pid: ProcessId, kind: ResourceKind, amount: u64) {
        let i = kind.index();
        self.allocated[i] += amount;
        self.per_process.entry(pid).or_insert([0; KINDS])[i] += amount;
    }

    /// Returns everything `pid` holds to the system.
    pub fn release(&mut self, pid: ProcessId) {
        if let Some(row) = self.per_process.remove(&pid) {
            for (slot, held) in self.allocated.iter_mut().zip(row) {
                *slot -= held;
            }
        }
    }

    /// Per-process sums equal the system totals for every kind.
    pub fn is_conserved(&self) -> bool {
        (0..KINDS).all(|i| {
            let sum: u128 = self.per_process.values().map(|r| u128::from(r[i])).sum();
            sum == u128::from(self.allocated[i]) && self.allocated[i] <= self.totals[i]
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CPU: ResourceKind = ResourceKind::CpuTicks;

    fn ledger() -> ResourceLedger {
        let mut l = ResourceLedger::default();
        l.set_capacity(CPU, 100);
        l.set_marks(CPU, 10, 50);
        l
    }

    #[test]
    fn equality_at_the_mark_is_allowed() {
        let mut l = ledger();
        let p = ProcessId(2);
        l.charge(p, CPU, 9);
        assert_eq!(l.check(p, CPU, 1, true), AllocCheck::Within);
        l.charge(p, CPU, 1);
        assert_eq!(l.check(p, CPU, 1, true), AllocCheck::OverProcessMark);
    }

    #[test]
    fn system_percentage_is_predictive() {
        let mut l = ledger();
        l.charge(ProcessId(3), CPU, 45);
        // 45 + 5 = 50% -> allowed, 45 + 6 = 51% -> denied
        assert_eq!(l.check(ProcessId(2), CPU, 5, true), AllocCheck::Within);
        assert_eq!(l.check(ProcessId(2), CPU, 6, true), AllocCheck::OverSystemMark);
        assert_eq!(l.check(ProcessId(2), CPU, 6, false), AllocCheck::Within);
    }

    #[test]
    fn health_processes_hit_only_capacity() {
        let l = ledger();
        assert_eq!(l.check(ProcessId(2), CPU, 100, false), AllocCheck::Within);
        assert_eq!(l.check(ProcessId(2), CPU, 101, false), AllocCheck::Exhausted);
    }

    #[test]
    fn release_conserves() {
        let mut l = ledger();
        l.charge(ProcessId(2), CPU, 7);
        l.charge(ProcessId(3), ResourceKind::MemoryBytes, 70);
        assert!(l.is_conserved());
        l.release(ProcessId(2));
        assert_eq!(l.allocated_sys(CPU), 0);
        assert_eq!(l.usage(ProcessId(2), CPU), 0);
        assert!(l.is_conserved());
    }

    #[test]
    fn default_marks() {
        let l = ResourceLedger::default();
        assert_eq!(l.hwm_sys(CPU), 90);
        assert_eq!(l.hwm_st(CPU), u64::MAX / 2);
        let mut l = l;
        l.set_capacity(CPU, 40);
        assert_eq!(l.hwm_st(CPU), 20);
    }
}
