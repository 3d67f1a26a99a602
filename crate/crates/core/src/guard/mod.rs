//! Decision core: the three protection rules, trust-list matching,
//! partial-copy redirection and availability accounting.
//!
//! Protection rules bind tainted subjects only. Every function here is a pure
//! decision over the world; the engine applies ledger charges and mutations.

mod ledger;
mod pcopy;
mod trust;

use thiserror::Error;

pub use ledger::{AllocCheck, ResourceLedger};
pub use pcopy::{redirect_partial, PartialCopyMap, COPY_ROOT};
pub use trust::{match_trust, EndpointPattern, TrustEntry, TrustList};

use crate::rule::Rule;
use crate::taint::TaintMutation;
use crate::vital::VitalMutation;
use crate::world::{
    parent_path, EntityRef, Flag, FlagSet, NodeId, ProcessId, ResourceKind, World, WorldError,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("line {line}: {message}")]
pub struct ListError {
    pub line: usize,
    pub message: String,
}

impl ListError {
    pub(crate) fn new(line: usize, message: impl Into<String>) -> Self {
        ListError {
            line,
            message: message.into(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GuardError {
    #[error(transparent)]
    World(#[from] WorldError),
    #[error("{kind} exhausted: {pid} asked for {amount} more")]
    Exhausted {
        pid: ProcessId,
        kind: ResourceKind,
        amount: u64,
    },
    #[error("allocation amount must be positive")]
    ZeroAmount,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    Allow,
    Deny(Rule),
    /// The access goes to the partial copy instead of the shared file.
    AllowRedirected { rule: Rule, path: String },
}

/// A label change produced by a rule.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Mutation {
    Taint(TaintMutation),
    Vital(VitalMutation),
    Admin {
        target: EntityRef,
        flag: Flag,
        on: bool,
        actor: ProcessId,
    },
}

impl Mutation {
    /// `(target, added, cleared, rule, cause)`.
    pub fn parts(&self) -> (EntityRef, FlagSet, FlagSet, Rule, Option<EntityRef>) {
        match self {
            Mutation::Taint(t) => (t.target, FlagSet::TAINT, FlagSet::empty(), t.rule, Some(t.cause)),
            Mutation::Vital(v) => (v.target, v.added, v.cleared, v.rule, Some(v.cause)),
            Mutation::Admin {
                target,
                flag,
                on,
                actor,
            } => {
                let (add, clear) = if *on {
                    (flag.bit(), FlagSet::empty())
                } else {
                    (FlagSet::empty(), flag.bit())
                };
                (*target, add, clear, Rule::Admin, Some(EntityRef::Process(*actor)))
            }
        }
    }
}

/// Verdict plus the mutations to apply when the access goes ahead.
/// A denial never carries mutations.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Decision {
    pub verdict: Verdict,
    pub mutations: Vec<Mutation>,
}

impl Decision {
    pub fn allow() -> Decision {
        Decision {
            verdict: Verdict::Allow,
            mutations: Vec::new(),
        }
    }

    pub fn deny(rule: Rule) -> Decision {
        Decision {
            verdict: Verdict::Deny(rule),
            mutations: Vec::new(),
        }
    }

    pub fn redirect(rule: Rule, path: &str) -> Decision {
        Decision {
            verdict: Verdict::AllowRedirected {
                rule,
                path: path.to_string(),
            },
            mutations: Vec::new(),
        }
    }

    pub fn with(mut self, m: Mutation) -> Decision {
        if !self.is_denied() {
            self.mutations.push(m);
        }
        self
    }

    pub fn is_denied(&self) -> bool {
        matches!(self.verdict, Verdict::Deny(_))
    }

    pub fn denied_by(&self) -> Option<Rule> {
        match self.verdict {
            Verdict::Deny(r) => Some(r),
            _ => None,
        }
    }

    pub fn redirect_path(&self) -> Option<&str> {
        match &self.verdict {
            Verdict::AllowRedirected { path, .. } => Some(path),
            _ => None,
        }
    }
}

/// What a protection rule is evaluated against.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Target {
    Node(NodeId),
    Process(ProcessId),
    Nothing,
}

impl Target {
    pub fn of(entity: EntityRef) -> Target {
        match entity {
            EntityRef::Node(n) => Target::Node(n),
            EntityRef::Process(p) => Target::Process(p),
            EntityRef::Socket(_) => Target::Nothing,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ConfOp {
    ReadFile,
    ReadDir,
    SearchDir,
    Ptrace,
    GetAttr,
}

impl ConfOp {
    pub const ALL: [ConfOp; 5] = [
        ConfOp::ReadFile,
        ConfOp::ReadDir,
        ConfOp::SearchDir,
        ConfOp::Ptrace,
        ConfOp::GetAttr,
    ];
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum InteOp {
    Write,
    CreateInDir,
    Delete,
    Rename,
    Truncate,
    Chmod,
    Chown,
    Mount,
    Umount,
    Kill,
    SetuidFamily,
    CreateModule,
    DeleteModule,
    Reboot,
    Swapoff,
    Setrlimit,
    SetAttr,
}

impl InteOp {
    /// Denied to every tainted process whatever the target.
    pub fn is_privileged(self) -> bool {
        matches!(
            self,
            InteOp::Mount
                | InteOp::Umount
                | InteOp::SetuidFamily
                | InteOp::CreateModule
                | InteOp::DeleteModule
                | InteOp::Reboot
                | InteOp::Swapoff
                | InteOp::Setrlimit
                | InteOp::SetAttr
        )
    }
}

fn target_flags(world: &World, target: Target) -> Result<FlagSet, WorldError> {
    match target {
        Target::Node(n) => world
            .node(n)
            .map(|n| n.flags)
            .ok_or(WorldError::UnknownNode(n)),
        Target::Process(p) => world.live_process(p).map(|p| p.flags),
        Target::Nothing => Ok(FlagSet::empty()),
    }
}

fn copy_for<'a>(world: &World, pcopy: &'a PartialCopyMap, target: Target) -> Option<&'a str> {
    match target {
        Target::Node(n) => world.node(n).and_then(|n| redirect_partial(pcopy, &n.path)),
        _ => None,
    }
}

/// Confidentiality rule: a tainted subject may not read confidential files,
/// read or search confidential directories, ptrace, or read labels.
pub fn pr_conf(
    world: &World,
    pcopy: &PartialCopyMap,
    pid: ProcessId,
    target: Target,
    op: ConfOp,
) -> Result<Decision, GuardError> {
    let subject = world.live_process(pid)?;
    let flags = target_flags(world, target)?;
    if !subject.flags.is_tainted() {
        return Ok(Decision::allow());
    }
    let denied = match op {
        ConfOp::Ptrace | ConfOp::GetAttr => true,
        ConfOp::ReadFile | ConfOp::ReadDir | ConfOp::SearchDir => flags.has(Flag::Conf),
    };
    if !denied {
        return Ok(Decision::allow());
    }
    if matches!(op, ConfOp::ReadFile | ConfOp::ReadDir) {
        if let Some(copy) = copy_for(world, pcopy, target) {
            return Ok(Decision::redirect(Rule::PrConf, copy));
        }
    }
    Ok(Decision::deny(Rule::PrConf))
}

/// Integrity rule: a tainted subject may not modify, create in, delete or
/// rename protected nodes, signal protected processes, or run privileged
/// operations.
pub fn pr_inte(
    world: &World,
    pcopy: &PartialCopyMap,
    pid: ProcessId,
    target: Target,
    op: InteOp,
) -> Result<Decision, GuardError> {
    let subject = world.live_process(pid)?;
    let flags = target_flags(world, target)?;
    if !subject.flags.is_tainted() {
        return Ok(Decision::allow());
    }
    if op.is_privileged() {
        return Ok(Decision::deny(Rule::PrInte));
    }
    if !flags.has(Flag::Inte) {
        return Ok(Decision::allow());
    }
    if op == InteOp::Write {
        if let Some(copy) = copy_for(world, pcopy, target) {
            return Ok(Decision::redirect(Rule::PrInte, copy));
        }
    }
    Ok(Decision::deny(Rule::PrInte))
}

/// Availability rule. Tainted processes are held under both high-water marks;
/// everyone is held under capacity, which is an error rather than a denial.
pub fn pr_avai(
    world: &World,
    pid: ProcessId,
    kind: ResourceKind,
    amount: u64,
) -> Result<Decision, GuardError> {
    if amount == 0 {
        return Err(GuardError::ZeroAmount);
    }
    let subject = world.live_process(pid)?;
    match world
        .ledger
        .check(pid, kind, amount, subject.flags.is_tainted())
    {
        AllocCheck::Within => Ok(Decision::allow()),
        AllocCheck::OverProcessMark | AllocCheck::OverSystemMark => Ok(Decision::deny(Rule::PrAvai)),
        AllocCheck::Exhausted => Err(GuardError::Exhausted { pid, kind, amount }),
    }
}

/// Path search: a tainted subject resolving `path` through a confidential
/// directory is denied. Checks every proper ancestor.
pub fn search_check(world: &World, pid: ProcessId, path: &str) -> Result<Decision, GuardError> {
    let subject = world.live_process(pid)?;
    if !subject.flags.is_tainted() {
        return Ok(Decision::allow());
    }
    let mut cur = parent_path(path);
    while let Some(dir) = cur {
        if let Some(id) = world.lookup(dir) {
            let d = pr_conf(world, &PartialCopyMap::default(), pid, Target::Node(id), ConfOp::SearchDir)?;
            if d.is_denied() {
                return Ok(d);
            }
        }
        cur = parent_path(dir);
    }
    Ok(Decision::allow())
}
