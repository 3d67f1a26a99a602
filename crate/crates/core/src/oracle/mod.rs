//! Brute-force reference checks for the engine.
//!
//! The taint closure is recomputed by forward reachability over flows read off
//! the raw trace, independently of the rule functions, and compared tick by
//! tick with what the engine recorded. Integrity is checked against the
//! two-level low-water-mark reading of the labels.

mod biba;
mod flows;

use std::collections::{BTreeMap, BTreeSet};

pub use biba::{check_biba, BibaReport, BibaViolation};
pub use flows::{derive_flows, Effect, FlowEdge, FlowKind, StepFlows, WriteAttempt};

use crate::engine::{replay_observed, Bundle, BundleError, Outcome, Policy, Replay};
use crate::world::{Flag, Tick};

/// Tainted live processes (`pid:N`) and tainted paths after each event.
pub type Timeline = Vec<BTreeSet<String>>;

/// Folds one step's structural effects into a path/pid-keyed map.
pub(crate) fn apply_effects<V: Default>(map: &mut BTreeMap<String, V>, effects: &[Effect]) {
    for effect in effects {
        match effect {
            Effect::Spawn(k) | Effect::Create(k) => {
                map.insert(k.clone(), V::default());
            }
            Effect::Exit(k) => {
                map.remove(k);
            }
            Effect::Remove(path) => flows::remove_keys(map, path),
            Effect::Rename { from, to } => flows::rename_keys(map, from, to),
            Effect::Label { .. } => {}
        }
    }
}

/// Forward reachability from untrusted sockets, replayed step by step. Within
/// one step flows are iterated to a fixpoint; a flow fires only when its
/// cause is already tainted.
pub fn taint_closure(steps: &[StepFlows]) -> Timeline {
    // key -> tainted; fifo marks live alongside under the same keys
    let mut state: BTreeMap<String, (bool, bool)> = BTreeMap::new();
    let mut timeline = Vec::with_capacity(steps.len());
    for step in steps {
        apply_effects(&mut state, &step.effects);
        for effect in &step.effects {
            if let Effect::Label { key, flag: Flag::Taint, on } = effect {
                state.entry(key.clone()).or_default().0 = *on;
            }
        }
        loop {
            let mut changed = false;
            for f in &step.flows {
                let cause = state.get(&f.cause).copied().unwrap_or_default();
                let fires = match f.kind {
                    FlowKind::SocketProc => true,
                    FlowKind::FifoProc => cause.1,
                    FlowKind::ProcFifo => cause.0,
                    k if k.carries_taint() => cause.0,
                    _ => false,
                };
                if !fires {
                    continue;
                }
                let slot = state.entry(f.effect.clone()).or_default();
                let bit = if f.kind == FlowKind::ProcFifo { &mut slot.1 } else { &mut slot.0 };
                if !*bit {
                    *bit = true;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        timeline.push(state.iter().filter(|(_, v)| v.0).map(|(k, _)| k.clone()).collect());
    }
    timeline
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Divergence {
    pub step: usize,
    pub tick: Tick,
    /// Tainted by the oracle only.
    pub missing: Vec<String>,
    /// Tainted by the engine only.
    pub extra: Vec<String>,
}

/// Per-step set differences; empty iff the timelines agree everywhere.
pub fn diff_taint(engine: &[BTreeSet<String>], oracle: &[BTreeSet<String>], ticks: &[Tick]) -> Vec<Divergence> {
    let empty = BTreeSet::new();
    let len = engine.len().max(oracle.len());
    (0..len)
        .filter_map(|i| {
            let e = engine.get(i).unwrap_or(&empty);
            let o = oracle.get(i).unwrap_or(&empty);
            (e != o).then(|| Divergence {
                step: i,
                tick: ticks.get(i).copied().unwrap_or_default(),
                missing: o.difference(e).cloned().collect(),
                extra: e.difference(o).cloned().collect(),
            })
        })
        .collect()
}

/// Engine replay with its per-step taint timeline.
pub fn engine_timeline(bundle: &Bundle, policy: &Policy) -> Result<(Replay, Timeline), BundleError> {
    let mut timeline = Vec::with_capacity(bundle.trace.len());
    let replay = replay_observed(bundle.boot()?, policy, &bundle.trace, |w| timeline.push(w.tainted_keys()))?;
    Ok((replay, timeline))
}

/// Everything `check` reports for one bundle.
#[derive(Clone, Debug)]
pub struct CheckReport {
    pub divergences: Vec<Divergence>,
    pub biba: BibaReport,
    pub events: usize,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.divergences.is_empty() && self.biba.passed()
    }
}

/// Replays `bundle` under `policy` and runs both oracles against the result.
/// The oracles always model the full rule set.
pub fn check(bundle: &Bundle, policy: &Policy) -> Result<CheckReport, BundleError> {
    let (replay, engine) = engine_timeline(bundle, policy)?;
    let outcomes: Vec<Outcome> = replay.world.audit.iter().map(|r| r.outcome.clone()).collect();
    let steps = derive_flows(
        &bundle.config,
        &bundle.policy.trust,
        &bundle.policy.pcopy,
        &bundle.trace.events,
        &outcomes,
    );
    let oracle = taint_closure(&steps);
    let ticks: Vec<Tick> = bundle.trace.events.iter().map(|e| e.tick).collect();
    let initial = bundle.boot()?.label_snapshot();
    Ok(CheckReport {
        divergences: diff_taint(&engine, &oracle, &ticks),
        biba: check_biba(&initial, &steps, &replay.world.audit),
        events: bundle.trace.len(),
    })
}

/// Flows for a trace whose outcomes are read from a rendered audit log.
pub fn flows_from_audit(bundle: &Bundle, audit: &str) -> Result<Vec<StepFlows>, String> {
    let lines = crate::engine::parse_audit(audit)?;
    if lines.len() != bundle.trace.len() {
        return Err(format!("{} audit lines for {} events", lines.len(), bundle.trace.len()));
    }
    let outcomes: Vec<Outcome> = lines.into_iter().map(|l| l.outcome).collect();
    Ok(derive_flows(
        &bundle.config,
        &bundle.policy.trust,
        &bundle.policy.pcopy,
        &bundle.trace.events,
        &outcomes,
    ))
}

/// Shorthand used by tests: closure of a trace given all-allow outcomes.
pub fn closure_all_allowed(bundle: &Bundle) -> Timeline {
    let outcomes = vec![Outcome::Allow; bundle.trace.len()];
    taint_closure(&derive_flows(
        &bundle.config,
        &bundle.policy.trust,
        &bundle.policy.pcopy,
        &bundle.trace.events,
        &outcomes,
    ))
}
