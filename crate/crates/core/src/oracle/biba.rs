//! Two-level low-water-mark reading of the labels: tainted entities are low,
//! everything else is high.
//!
//! 1. A subject that consumes low input becomes low.
//! 2. A low subject's write leaves the object low. Only writes that leave
//!    the file executable are held to this; non-executable writes are
//!    listed as exceptions, and any of those that lands on an integrity
//!    object is a violation.
//! 3. A process created or exec'd by a low subject is low.

use std::collections::{BTreeMap, BTreeSet};

use crate::engine::{AuditRecord, Op};
use crate::world::{Flag, FlagSet, Tick};

use super::apply_effects;
use super::flows::{Effect, FlowKind, StepFlows, WriteAttempt};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BibaViolation {
    pub condition: u8,
    pub step: usize,
    pub tick: Tick,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BibaReport {
    pub violations: Vec<BibaViolation>,
    /// Plain reads of low files by high subjects; reading does not lower.
    pub read_exceptions: Vec<(usize, String)>,
    /// Non-executable writes by low subjects.
    pub write_exceptions: Vec<(usize, WriteAttempt)>,
}

impl BibaReport {
    pub fn condition(&self, n: u8) -> impl Iterator<Item = &BibaViolation> {
        self.violations.iter().filter(move |v| v.condition == n)
    }

    pub fn holds(&self, n: u8) -> bool {
        self.condition(n).next().is_none()
    }

    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

struct View {
    labels: BTreeMap<String, FlagSet>,
}

impl View {
    fn low(&self, key: &str) -> bool {
        self.labels.get(key).is_some_and(|f| f.has(Flag::Taint))
    }

    fn inte(&self, key: &str) -> bool {
        self.labels.get(key).is_some_and(|f| f.has(Flag::Inte))
    }
}

/// Checks the three conditions over `steps`, reading levels from `initial`
/// plus the label changes recorded in `audit`.
pub fn check_biba(initial: &BTreeMap<String, FlagSet>, steps: &[StepFlows], audit: &[AuditRecord]) -> BibaReport {
    let mut report = BibaReport::default();
    let mut view = View {
        labels: initial.clone(),
    };
    let mut marked_fifos: BTreeSet<String> = BTreeSet::new();
    for (i, (step, record)) in steps.iter().zip(audit).enumerate() {
        let mut violation = |condition, detail: String| {
            report.violations.push(BibaViolation {
                condition,
                step: i,
                tick: step.tick,
                detail,
            })
        };
        let before_low: BTreeSet<String> = view
            .labels
            .iter()
            .filter(|(_, f)| f.has(Flag::Taint))
            .map(|(k, _)| k.clone())
            .collect();
        let before_inte: BTreeSet<String> = step
            .writes
            .iter()
            .filter(|w| view.inte(&w.protected))
            .map(|w| w.protected.clone())
            .collect();
        apply_effects(&mut view.labels, &step.effects);
        for effect in &step.effects {
            if let Effect::Remove(path) = effect {
                marked_fifos.retain(|k| k != path && !k.starts_with(&format!("{path}/")));
            }
        }
        for change in &record.flag_changes {
            let slot = view.labels.entry(change.label.clone()).or_default();
            *slot = if change.on { slot.with(change.flag) } else { slot.without(change.flag) };
        }
        let was_low = |k: &str| before_low.contains(k);

        for f in &step.flows {
            let source_low = match f.kind {
                FlowKind::SocketProc => true,
                FlowKind::FifoProc => marked_fifos.contains(&f.cause),
                _ => was_low(&f.cause),
            };
            if !source_low {
                continue;
            }
            match f.kind {
                FlowKind::ProcFifo => {
                    marked_fifos.insert(f.effect.clone());
                }
                FlowKind::FileProc => {
                    if !view.low(&f.effect) {
                        report.read_exceptions.push((i, format!("{} read {}", f.effect, f.cause)));
                    }
                }
                FlowKind::SocketProc | FlowKind::ProcProc | FlowKind::FifoProc | FlowKind::ExeProc => {
                    if !view.low(&f.effect) {
                        let spawned = step.effects.contains(&Effect::Spawn(f.effect.clone()));
                        let condition = if spawned { 3 } else { 1 };
                        violation(condition, format!("{} consumed low {} and stayed high", f.effect, f.cause));
                    }
                }
                FlowKind::ProcExe | FlowKind::ProcFile => {}
            }
        }

        if step.op == Op::Execve && !step.outcome.is_denied() && was_low(&step.subject) && !view.low(&step.subject) {
            violation(3, format!("{} exec'd while low and came out high", step.subject));
        }

        for w in &step.writes {
            if !was_low(&w.subject) {
                continue;
            }
            if w.performed && before_inte.contains(&w.protected) {
                violation(2, format!("{} wrote {} under integrity object {}", w.subject, w.target, w.protected));
            }
            if w.exec_after {
                if w.performed && !view.low(&w.target) {
                    violation(2, format!("{} left executable {} high", w.subject, w.target));
                }
            } else {
                report.write_exceptions.push((i, w.clone()));
            }
        }
    }
    report
}
