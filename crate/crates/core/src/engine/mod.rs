//! Enforcement loop: each event is checked by the guard, and on allow its
//! structural effect is applied followed by every taint and vital rule the
//! dispatch table assigns to the operation.

mod audit;
mod event;
mod graph;

use std::collections::BTreeSet;

use thiserror::Error;

pub use audit::{parse_audit, render_audit, AuditLine, AuditRecord, Outcome};
pub use event::{Event, EventKind, Op, Trace, TraceError};
pub use graph::{export_graph, DepGraph, GraphEdge, GraphNode, NodeShape};

use crate::guard::{
    self, ConfOp, Decision, GuardError, InteOp, ListError, Mutation, PartialCopyMap, Target, TrustList,
    Verdict,
};
use crate::rule::Rule;
use crate::taint::{self, Channel, ExeAction, LoadAction, TaintMutation};
use crate::vital::{self, ConsumeAction, VitalMutation, WriteAction};
use crate::world::{
    parent_path, ConfigError, EntityRef, Flag, FlagChange, FlagQuery, InitConfig, NodeId, NodeKind,
    ProcessId, ResourceKind, Socket, World, WorldError, ROOT,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EngineError {
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
    #[error("tick {tick} is earlier than the clock ({clock})")]
    ClockSkew { tick: u64, clock: u64 },
}

impl From<GuardError> for EngineError {
    fn from(e: GuardError) -> Self {
        match e {
            GuardError::World(w) => EngineError::World(w),
            GuardError::Exhausted { pid, kind, amount } => EngineError::Exhausted { pid, kind, amount },
            GuardError::ZeroAmount => EngineError::ZeroAmount,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("trace line {line}: {source}")]
pub struct ReplayError {
    pub line: usize,
    pub source: EngineError,
}

/// Everything outside the world that shapes decisions.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Policy {
    pub trust: TrustList,
    pub pcopy: PartialCopyMap,
    /// Rules switched off, for mutation testing.
    pub disabled: BTreeSet<Rule>,
}

impl Policy {
    pub fn new(trust: TrustList, pcopy: PartialCopyMap) -> Policy {
        Policy {
            trust,
            pcopy,
            disabled: BTreeSet::new(),
        }
    }

    pub fn without(mut self, rule: Rule) -> Policy {
        self.disabled.insert(rule);
        self
    }
}

use Rule::{PrAvai, PrConf, PrInte, TrExeProc, TrProcExe, TrProcProc, TrSockProc, VrDirDir, VrFileProc, VrProcFile, VrProcProc};

/// Rule families consulted for each operation. Path-bearing operations also
/// run the `PR_conf` search check on every ancestor directory.
pub fn rule_families(op: Op) -> &'static [Rule] {
    match op {
        Op::Fork | Op::Vfork | Op::Clone => &[TrProcProc, VrProcProc],
        Op::Pipe | Op::Shmat | Op::Msgrcv => &[TrProcProc],
        Op::Mkfifo => &[TrProcProc, VrDirDir, PrConf, PrInte],
        Op::Mknod => &[TrProcProc, VrDirDir, PrConf, PrInte],
        Op::OpenRead => &[TrProcProc, VrFileProc, PrConf],
        Op::OpenWrite => &[TrProcExe, VrDirDir, VrProcFile, PrConf, PrInte],
        Op::Create => &[TrProcExe, VrDirDir, VrProcFile, PrConf, PrInte],
        Op::Chmod => &[TrProcExe, PrConf, PrInte],
        Op::Fchmod => &[TrProcExe, PrInte],
        Op::Execve => &[TrExeProc, VrFileProc, PrConf],
        Op::MmapExec => &[TrExeProc, PrConf],
        Op::Mkdir => &[VrDirDir, PrConf, PrInte],
        Op::Truncate | Op::Chown | Op::Rmdir | Op::Rename | Op::Unlink | Op::Mount | Op::Umount => {
            &[PrConf, PrInte]
        }
        Op::Setrlimit => &[PrInte, PrAvai],
        Op::Reboot
        | Op::Swapoff
        | Op::CreateModule
        | Op::DeleteModule
        | Op::Setuid
        | Op::Setgid
        | Op::Setfsuid
        | Op::Kill
        | Op::SetStbacAttr => &[PrInte],
        Op::Ptrace | Op::GetStbacAttr => &[PrConf],
        Op::SocketOpen => &[TrSockProc],
        Op::SockSend => &[PrAvai],
        Op::SockRecv => &[TrProcProc, PrAvai],
        Op::BrkAlloc | Op::SchedTick | Op::DiskAlloc | Op::Exit => &[PrAvai],
    }
}

/// The published rule-to-syscall assignment, translated to trace operations.
/// `sys_open` splits by direction, `sys_map` is shared mapping (`shmat`),
/// the chown and truncate variants fold into one operation each.
pub const PUBLISHED_ASSIGNMENT: &[(Rule, &[Op])] = &[
    (TrSockProc, &[Op::SocketOpen]),
    (
        TrProcProc,
        &[Op::Fork, Op::Vfork, Op::Clone, Op::Pipe, Op::Shmat, Op::Msgrcv, Op::Mkfifo, Op::Mknod],
    ),
    (TrProcExe, &[Op::OpenWrite, Op::Create, Op::Chmod, Op::Fchmod]),
    (TrExeProc, &[Op::Execve, Op::MmapExec]),
    (VrDirDir, &[Op::OpenWrite, Op::Create, Op::Mkdir, Op::Mknod]),
    (VrProcProc, &[Op::Fork, Op::Vfork, Op::Clone]),
    (VrFileProc, &[Op::Execve]),
    (VrProcFile, &[Op::OpenWrite, Op::Create]),
    (PrConf, &[Op::OpenRead, Op::Ptrace, Op::GetStbacAttr]),
    (
        PrInte,
        &[
            Op::OpenWrite,
            Op::Truncate,
            Op::Chmod,
            Op::Fchmod,
            Op::Chown,
            Op::Rmdir,
            Op::Rename,
            Op::Unlink,
            Op::Mount,
            Op::Umount,
            Op::Setrlimit,
            Op::Reboot,
            Op::Swapoff,
            Op::CreateModule,
            Op::DeleteModule,
            Op::Setuid,
            Op::Setgid,
            Op::Setfsuid,
            Op::SetStbacAttr,
            Op::Kill,
        ],
    ),
    (
        PrAvai,
        &[Op::Setrlimit, Op::SockRecv, Op::SockSend, Op::BrkAlloc, Op::SchedTick, Op::DiskAlloc],
    ),
];

/// Entries of `rule_families` beyond the published assignment.
pub const EXTENSIONS: &[(Op, Rule, &str)] = &[
    (Op::Mkfifo, VrDirDir, "a fifo is a directory entry like any mknod"),
    (Op::Mkfifo, PrConf, "path search"),
    (Op::Mkfifo, PrInte, "creation in a protected directory"),
    (Op::Mknod, PrConf, "path search"),
    (Op::Mknod, PrInte, "creation in a protected directory"),
    (Op::OpenRead, TrProcProc, "reading a fifo a tainted writer wrote to"),
    (Op::OpenRead, VrFileProc, "reading a confidential file confers Fconf"),
    (Op::OpenWrite, PrConf, "path search"),
    (Op::Create, PrConf, "path search"),
    (Op::Create, PrInte, "creation in a protected directory"),
    (Op::Chmod, PrConf, "path search"),
    (Op::Execve, PrConf, "path search"),
    (Op::MmapExec, PrConf, "path search"),
    (Op::Mkdir, PrConf, "path search"),
    (Op::Mkdir, PrInte, "creation in a protected directory"),
    (Op::Truncate, PrConf, "path search"),
    (Op::Chown, PrConf, "path search"),
    (Op::Rmdir, PrConf, "path search"),
    (Op::Rename, PrConf, "path search"),
    (Op::Unlink, PrConf, "path search"),
    (Op::Mount, PrConf, "path search"),
    (Op::Umount, PrConf, "path search"),
    (Op::SockRecv, TrProcProc, "message from a local peer process"),
    (Op::Exit, PrAvai, "releases the ledger"),
];

fn object_and_param(world: &World, event: &Event) -> (String, String) {
    let dash = || "-".to_string();
    match &event.kind {
        EventKind::Spawn { child, .. } => (child.to_string(), dash()),
        EventKind::Receive { from, .. } => (from.to_string(), dash()),
        EventKind::Shmat { key } => (format!("shm:{key}"), dash()),
        EventKind::MakeNode { op, path, kind } => {
            let param = if *op == Op::Mknod { kind.name().to_string() } else { dash() };
            (path.clone(), param)
        }
        EventKind::OpenRead { path }
        | EventKind::OpenWrite { path }
        | EventKind::Load { path, .. }
        | EventKind::Mkdir { path }
        | EventKind::PathOp { path, .. } => (path.clone(), dash()),
        EventKind::Create { path, exec } | EventKind::Chmod { path, exec, .. } => {
            (path.clone(), format!("exec={}", u8::from(*exec)))
        }
        EventKind::Rename { from, to } => (from.clone(), to.clone()),
        EventKind::Setrlimit { kind, amount } => (kind.to_string(), amount.to_string()),
        EventKind::Bare { .. } | EventKind::Exit => {
            let obj = match event.kind {
                EventKind::Exit => event.pid.to_string(),
                _ => dash(),
            };
            (obj, dash())
        }
        EventKind::Module { name, .. } => (name.clone(), dash()),
        EventKind::SetId { op, id } => {
            let name = op.name().trim_start_matches("set");
            (dash(), format!("{name}={id}"))
        }
        EventKind::Signal { target, .. } => (target.to_string(), dash()),
        EventKind::SocketOpen {
            sock,
            local,
            remote,
            proto,
        } => (sock.to_string(), format!("{}/{local}->{remote}", proto.name())),
        EventKind::SockSend { sock, bytes } | EventKind::SockRecv { sock, bytes, .. } => {
            (sock.to_string(), bytes.to_string())
        }
        EventKind::Alloc { kind, amount, .. } => (kind.to_string(), amount.to_string()),
        EventKind::SetAttr { target, flag, on } => (
            display_target(world, target),
            format!("{}={}", flag.name(), u8::from(*on)),
        ),
        EventKind::GetAttr { target } => (display_target(world, target), dash()),
    }
}

fn display_target(world: &World, target: &str) -> String {
    match world.resolve(target) {
        Ok(e) => world.label(e),
        Err(_) => target.to_string(),
    }
}

struct Step<'a> {
    world: &'a mut World,
    policy: &'a Policy,
    families: &'static [Rule],
    changes: Vec<FlagChange>,
}

type StepResult = Result<Outcome, EngineError>;

impl Step<'_> {
    /// Applies a rule's mutation unless the rule is switched off.
    fn fire(&mut self, m: Mutation) {
        let rule = m.parts().3;
        debug_assert!(
            rule == Rule::Admin || self.families.contains(&rule),
            "{rule} fired outside its dispatch entry"
        );
        if self.policy.disabled.contains(&rule) {
            return;
        }
        let changes = self.world.apply_mutation(&m);
        self.changes.extend(changes);
    }

    fn taint(&mut self, m: Option<TaintMutation>) {
        if let Some(m) = m {
            self.fire(Mutation::Taint(m));
        }
    }

    fn taints(&mut self, ms: Vec<TaintMutation>) {
        for m in ms {
            self.fire(Mutation::Taint(m));
        }
    }

    fn vital(&mut self, m: Option<VitalMutation>) {
        if let Some(m) = m {
            self.fire(Mutation::Vital(m));
        }
    }

    /// `Some(outcome)` when the decision stops the event here.
    fn stop(&self, d: &Decision) -> Option<Outcome> {
        match &d.verdict {
            Verdict::Deny(rule) if !self.policy.disabled.contains(rule) => {
                debug_assert!(self.families.contains(rule), "{rule} denied outside its dispatch entry");
                Some(Outcome::Deny(*rule))
            }
            _ => None,
        }
    }

    fn redirect<'d>(&self, d: &'d Decision) -> Option<&'d str> {
        match &d.verdict {
            Verdict::AllowRedirected { rule, path } if !self.policy.disabled.contains(rule) => Some(path),
            _ => None,
        }
    }

    fn search(&self, pid: ProcessId, path: &str) -> Result<Option<Outcome>, EngineError> {
        let d = guard::search_check(self.world, pid, path)?;
        Ok(self.stop(&d))
    }

    fn inte(&self, pid: ProcessId, target: Target, op: InteOp) -> Result<Decision, EngineError> {
        Ok(guard::pr_inte(self.world, &self.policy.pcopy, pid, target, op)?)
    }

    fn conf(&self, pid: ProcessId, target: Target, op: ConfOp) -> Result<Decision, EngineError> {
        Ok(guard::pr_conf(self.world, &self.policy.pcopy, pid, target, op)?)
    }

    fn existing(&self, path: &str) -> Result<NodeId, EngineError> {
        self.world
            .lookup(path)
            .ok_or_else(|| WorldError::NoSuchPath(path.to_string()).into())
    }

    fn run(&mut self, event: &Event) -> StepResult {
        let p = event.pid;
        match &event.kind {
            EventKind::Spawn { child, .. } => {
                self.world.spawn(p, *child)?;
                let ms = taint::tr_proc_proc(self.world, p, *child, Channel::ForkChild)?;
                self.taints(ms);
                let m = vital::vr_proc_proc(self.world, p, *child)?;
                self.vital(m);
                Ok(Outcome::Allow)
            }
            EventKind::Receive { op, from } => {
                let channel = if *op == Op::Pipe { Channel::PipeMsg } else { Channel::MsgqRecv };
                let ms = taint::tr_proc_proc(self.world, *from, p, channel)?;
                self.taints(ms);
                Ok(Outcome::Allow)
            }
            EventKind::Shmat { key } => {
                let others: Vec<ProcessId> = self.world.shm_members(key).filter(|m| *m != p).collect();
                self.world.shm_attach(key, p);
                // twice: first into the new member, then back out to the rest
                for _ in 0..2 {
                    for other in &others {
                        let ms = taint::tr_proc_proc(self.world, *other, p, Channel::ShmAttach)?;
                        self.taints(ms);
                    }
                }
                Ok(Outcome::Allow)
            }
            EventKind::MakeNode { path, kind, .. } => self.create(p, path, *kind, false),
            EventKind::Mkdir { path } => self.create(p, path, NodeKind::Dir, true),
            EventKind::Create { path, exec } => {
                if self.world.lookup(path).is_some() {
                    return Err(WorldError::AlreadyExists(path.clone()).into());
                }
                self.create(p, path, NodeKind::File, *exec)
            }
            EventKind::OpenRead { path } => self.open_read(p, path),
            EventKind::OpenWrite { path } => self.open_write(p, path),
            EventKind::Chmod { op, path, exec } => {
                if *op == Op::Chmod {
                    if let Some(o) = self.search(p, path)? {
                        return Ok(o);
                    }
                }
                let id = self.existing(path)?;
                let d = self.inte(p, Target::Node(id), InteOp::Chmod)?;
                if let Some(o) = self.stop(&d) {
                    return Ok(o);
                }
                self.world.set_exec_bits(id, *exec);
                if self.world.node(id).is_some_and(|n| n.is_file()) {
                    let m = taint::tr_proc_exe(self.world, p, id, ExeAction::ChmodSetExec)?;
                    self.taint(m);
                }
                Ok(Outcome::Allow)
            }
            EventKind::Load { op, path } => {
                if let Some(o) = self.search(p, path)? {
                    return Ok(o);
                }
                let id = self.existing(path)?;
                if *op == Op::Execve {
                    let t = taint::tr_exe_proc(self.world, p, id, LoadAction::Execve)?;
                    let v = vital::vr_file_proc(self.world, p, id, ConsumeAction::Execve)?;
                    self.world.exec(p, id);
                    self.vital(v);
                    self.taint(t);
                } else {
                    let t = taint::tr_exe_proc(self.world, p, id, LoadAction::MmapExec)?;
                    self.taint(t);
                }
                Ok(Outcome::Allow)
            }
            EventKind::PathOp { op, path } => self.path_op(p, *op, path),
            EventKind::Rename { from, to } => self.rename(p, from, to),
            EventKind::Setrlimit { .. } => {
                // no allocation happens, so only the privilege check can refuse
                let d = self.inte(p, Target::Nothing, InteOp::Setrlimit)?;
                Ok(self.stop(&d).unwrap_or(Outcome::Allow))
            }
            EventKind::Bare { op } => {
                let iop = if *op == Op::Reboot { InteOp::Reboot } else { InteOp::Swapoff };
                let d = self.inte(p, Target::Nothing, iop)?;
                Ok(self.stop(&d).unwrap_or(Outcome::Allow))
            }
            EventKind::Module { op, .. } => {
                let iop = if *op == Op::CreateModule { InteOp::CreateModule } else { InteOp::DeleteModule };
                let d = self.inte(p, Target::Nothing, iop)?;
                Ok(self.stop(&d).unwrap_or(Outcome::Allow))
            }
            EventKind::SetId { op, id } => {
                let d = self.inte(p, Target::Nothing, InteOp::SetuidFamily)?;
                if let Some(o) = self.stop(&d) {
                    return Ok(o);
                }
                if *op == Op::Setuid {
                    self.world.set_uid(p, *id);
                }
                Ok(Outcome::Allow)
            }
            EventKind::Signal { op, target } => {
                if *op == Op::Kill {
                    let d = self.inte(p, Target::Process(*target), InteOp::Kill)?;
                    if let Some(o) = self.stop(&d) {
                        return Ok(o);
                    }
                    self.world.exit(*target);
                } else {
                    let d = self.conf(p, Target::Process(*target), ConfOp::Ptrace)?;
                    if let Some(o) = self.stop(&d) {
                        return Ok(o);
                    }
                }
                Ok(Outcome::Allow)
            }
            EventKind::SocketOpen {
                sock,
                local,
                remote,
                proto,
            } => {
                let program = self.world.live_process(p)?.exe_display().to_string();
                let trusted = self.policy.trust.matches(&program, local, remote, *proto, event.tick);
                self.world.open_socket(Socket {
                    id: *sock,
                    owner: p,
                    local: local.clone(),
                    remote: remote.clone(),
                    proto: *proto,
                    trusted,
                    opened_at: event.tick,
                })?;
                let m = taint::tr_sock_proc(self.world, p, *sock)?;
                self.taint(m);
                Ok(Outcome::Allow)
            }
            EventKind::SockSend { sock, bytes } => {
                self.owned_socket(p, *sock)?;
                self.allocate(p, ResourceKind::NetBytes, *bytes)
            }
            EventKind::SockRecv { sock, bytes, peer } => {
                self.owned_socket(p, *sock)?;
                if let Some(peer) = peer {
                    self.world.live_process(*peer)?;
                }
                let outcome = self.allocate(p, ResourceKind::NetBytes, *bytes)?;
                if let (Outcome::Allow, Some(peer)) = (&outcome, peer) {
                    let ms = taint::tr_proc_proc(self.world, *peer, p, Channel::LocalSocketMsg)?;
                    self.taints(ms);
                }
                Ok(outcome)
            }
            EventKind::Alloc { kind, amount, .. } => self.allocate(p, *kind, *amount),
            EventKind::SetAttr { target, flag, on } => {
                let entity = self.world.resolve(target)?;
                let d = self.world.plan_set_flag(entity, *flag, *on, p)?;
                if let Some(o) = self.stop(&d) {
                    return Ok(o);
                }
                for m in d.mutations {
                    self.fire(m);
                }
                Ok(Outcome::Allow)
            }
            EventKind::GetAttr { target } => {
                let entity = self.world.resolve(target)?;
                match self.world.get_flag(entity, p)? {
                    FlagQuery::Denied(d) => Ok(self.stop(&d).unwrap_or(Outcome::Allow)),
                    FlagQuery::Flags(_) => Ok(Outcome::Allow),
                }
            }
            EventKind::Exit => {
                self.world.exit(p);
                Ok(Outcome::Allow)
            }
        }
    }

    fn owned_socket(&self, p: ProcessId, sock: crate::world::SocketId) -> Result<(), EngineError> {
        let s = self.world.socket(sock).ok_or(WorldError::UnknownSocket(sock))?;
        if s.owner != p {
            return Err(WorldError::SocketOwnership { sock, pid: p }.into());
        }
        Ok(())
    }

    fn allocate(&mut self, p: ProcessId, kind: ResourceKind, amount: u64) -> StepResult {
        let d = guard::pr_avai(self.world, p, kind, amount)?;
        if let Some(o) = self.stop(&d) {
            return Ok(o);
        }
        self.world.ledger.charge(p, kind, amount);
        Ok(Outcome::Allow)
    }

    fn create(&mut self, p: ProcessId, path: &str, kind: NodeKind, exec: bool) -> StepResult {
        if let Some(o) = self.search(p, path)? {
            return Ok(o);
        }
        if self.world.lookup(path).is_some() {
            return Err(WorldError::AlreadyExists(path.to_string()).into());
        }
        let parent_path = parent_path(path).ok_or(WorldError::RootImmutable)?;
        let parent = self.world.node_at(parent_path)?;
        if !parent.is_dir() {
            return Err(WorldError::NotADirectory(parent_path.to_string()).into());
        }
        let parent = parent.id;
        let d = self.inte(p, Target::Node(parent), InteOp::CreateInDir)?;
        if let Some(o) = self.stop(&d) {
            return Ok(o);
        }
        let id = self.world.create_node(path, kind, exec)?;
        let m = vital::vr_dir_dir(self.world, parent, id)?;
        self.vital(m);
        if kind == NodeKind::File {
            let m = taint::tr_proc_exe(self.world, p, id, ExeAction::Create)?;
            self.taint(m);
            let m = vital::vr_proc_file(self.world, p, id, WriteAction::Create)?;
            self.vital(m);
        }
        Ok(Outcome::Allow)
    }

    fn open_read(&mut self, p: ProcessId, path: &str) -> StepResult {
        if let Some(o) = self.search(p, path)? {
            return Ok(o);
        }
        let id = self.existing(path)?;
        let op = if self.world.node(id).is_some_and(|n| n.is_dir()) {
            ConfOp::ReadDir
        } else {
            ConfOp::ReadFile
        };
        let d = self.conf(p, Target::Node(id), op)?;
        if let Some(o) = self.stop(&d) {
            return Ok(o);
        }
        let (target, outcome) = match self.redirect(&d) {
            Some(copy) => (self.existing(copy)?, Outcome::AllowRedir(copy.to_string())),
            None => (id, Outcome::Allow),
        };
        let node = self.world.node(target).ok_or(WorldError::UnknownNode(target))?;
        match node.kind {
            NodeKind::File => {
                let m = vital::vr_file_proc(self.world, p, target, ConsumeAction::Read)?;
                self.vital(m);
            }
            NodeKind::Fifo => {
                if let Some(writer) = node.fifo_taint_from {
                    let ms = taint::tr_proc_proc(self.world, writer, p, Channel::FifoMsg)?;
                    self.taints(ms);
                }
            }
            NodeKind::Dir | NodeKind::Device => {}
        }
        Ok(outcome)
    }

    fn open_write(&mut self, p: ProcessId, path: &str) -> StepResult {
        if let Some(o) = self.search(p, path)? {
            return Ok(o);
        }
        let Some(id) = self.world.lookup(path) else {
            return self.create(p, path, NodeKind::File, false);
        };
        if self.world.node(id).is_some_and(|n| n.is_dir()) {
            return Err(WorldError::NotAFile(path.to_string()).into());
        }
        let d = self.inte(p, Target::Node(id), InteOp::Write)?;
        if let Some(o) = self.stop(&d) {
            return Ok(o);
        }
        let (target, outcome) = match self.redirect(&d) {
            Some(copy) => {
                // a confidential writer would leak into the copy; refuse instead
                let flags = self.world.live_process(p)?.flags;
                if flags.has(Flag::Conf) && flags.has(Flag::Leak) {
                    return Ok(Outcome::Deny(PrInte));
                }
                (self.existing(copy)?, Outcome::AllowRedir(copy.to_string()))
            }
            None => (id, Outcome::Allow),
        };
        let kind = self.world.node(target).ok_or(WorldError::UnknownNode(target))?.kind;
        match kind {
            NodeKind::File => {
                let m = taint::tr_proc_exe(self.world, p, target, ExeAction::Write)?;
                self.taint(m);
                let m = vital::vr_proc_file(self.world, p, target, WriteAction::Write)?;
                self.vital(m);
            }
            NodeKind::Fifo => {
                if self.world.is_tainted(EntityRef::Process(p)) {
                    self.world.mark_fifo(target, p);
                }
            }
            NodeKind::Dir | NodeKind::Device => {}
        }
        Ok(outcome)
    }

    fn path_op(&mut self, p: ProcessId, op: Op, path: &str) -> StepResult {
        if let Some(o) = self.search(p, path)? {
            return Ok(o);
        }
        let id = self.existing(path)?;
        let node = self.world.node(id).ok_or(WorldError::UnknownNode(id))?;
        let parent = node.parent;
        let is_dir = node.is_dir();
        let (iop, removal) = match op {
            Op::Truncate => {
                if !node.is_file() {
                    return Err(WorldError::NotAFile(path.to_string()).into());
                }
                (InteOp::Truncate, None)
            }
            Op::Chown => (InteOp::Chown, None),
            Op::Mount => (InteOp::Mount, None),
            Op::Umount => (InteOp::Umount, None),
            Op::Rmdir | Op::Unlink => {
                let dir = op == Op::Rmdir;
                if id == ROOT {
                    return Err(WorldError::RootImmutable.into());
                }
                match (dir, is_dir) {
                    (true, false) => return Err(WorldError::NotADirectory(path.to_string()).into()),
                    (false, true) => return Err(WorldError::NotAFile(path.to_string()).into()),
                    (true, true) if !node.children.is_empty() => {
                        return Err(WorldError::DirectoryNotEmpty(path.to_string()).into())
                    }
                    _ => {}
                }
                (InteOp::Delete, Some(dir))
            }
            other => unreachable!("{other} is not a single-path operation"),
        };
        let d = self.inte(p, Target::Node(id), iop)?;
        if let Some(o) = self.stop(&d) {
            return Ok(o);
        }
        if let Some(dir) = removal {
            let parent = parent.expect("non-root node has a parent");
            let d = self.inte(p, Target::Node(parent), InteOp::Delete)?;
            if let Some(o) = self.stop(&d) {
                return Ok(o);
            }
            self.world.remove_node(id, dir)?;
        }
        Ok(Outcome::Allow)
    }

    fn rename(&mut self, p: ProcessId, from: &str, to: &str) -> StepResult {
        for path in [from, to] {
            if let Some(o) = self.search(p, path)? {
                return Ok(o);
            }
        }
        let id = self.existing(from)?;
        let replaced = self.world.check_rename(id, to)?;
        let src_parent = self.world.node(id).and_then(|n| n.parent).ok_or(WorldError::RootImmutable)?;
        let dst_parent = self.existing(parent_path(to).ok_or(WorldError::RootImmutable)?)?;
        let mut checks = vec![
            (Target::Node(id), InteOp::Rename),
            (Target::Node(src_parent), InteOp::Delete),
            (Target::Node(dst_parent), InteOp::CreateInDir),
        ];
        if let Some(old) = replaced {
            checks.push((Target::Node(old), InteOp::Delete));
        }
        for (target, op) in checks {
            let d = self.inte(p, target, op)?;
            if let Some(o) = self.stop(&d) {
                return Ok(o);
            }
        }
        self.world.rename_node(id, to)?;
        Ok(Outcome::Allow)
    }
}

/// Applies one event and appends its audit record to `world.audit`.
pub fn apply_event(world: &mut World, policy: &Policy, event: &Event) -> Result<(), EngineError> {
    if event.tick < world.clock {
        return Err(EngineError::ClockSkew {
            tick: event.tick,
            clock: world.clock,
        });
    }
    let exe = world.live_process(event.pid)?.exe_display().to_string();
    let (object, param) = object_and_param(world, event);
    let op = event.op();
    let mut step = Step {
        world,
        policy,
        families: rule_families(op),
        changes: Vec::new(),
    };
    let outcome = step.run(event)?;
    let flag_changes = step.changes;
    world.clock = event.tick;
    world.audit.push(AuditRecord {
        tick: event.tick,
        pid: event.pid,
        exe,
        object,
        op,
        param,
        outcome,
        flag_changes,
    });
    Ok(())
}

/// Final state of a replay; the audit log is `world.audit`.
#[derive(Clone, Debug)]
pub struct Replay {
    pub world: World,
    pub graph: DepGraph,
}

impl Replay {
    pub fn audit_text(&self) -> String {
        render_audit(&self.world.audit)
    }

    pub fn denials(&self) -> impl Iterator<Item = &AuditRecord> {
        self.world.audit.iter().filter(|r| r.outcome.is_denied())
    }
}

/// Replays `trace`, calling `observe` on the world after every event.
pub fn replay_observed(
    mut world: World,
    policy: &Policy,
    trace: &Trace,
    mut observe: impl FnMut(&World),
) -> Result<Replay, ReplayError> {
    let initial = world.label_snapshot();
    let start = world.audit.len();
    for (event, line) in trace.events.iter().zip(&trace.lines) {
        apply_event(&mut world, policy, event).map_err(|source| ReplayError { line: *line, source })?;
        observe(&world);
    }
    let graph = DepGraph::build(&initial, &world.audit[start..], &world);
    Ok(Replay { world, graph })
}

pub fn replay(world: World, policy: &Policy, trace: &Trace) -> Result<Replay, ReplayError> {
    replay_observed(world, policy, trace, |_| {})
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BundleError {
    #[error("init config: {0}")]
    Config(#[from] ConfigError),
    #[error("trust list: {0}")]
    Trust(ListError),
    #[error("partial-copy map: {0}")]
    Pcopy(ListError),
    #[error("{0}")]
    Trace(#[from] TraceError),
    #[error("partial copies: {0}")]
    Install(WorldError),
    #[error("{0}")]
    Replay(#[from] ReplayError),
}

/// The four inputs of a replay.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Bundle {
    pub config: InitConfig,
    pub policy: Policy,
    pub trace: Trace,
}

impl Bundle {
    pub fn parse(init: &str, trust: &str, pcopy: &str, trace: &str) -> Result<Bundle, BundleError> {
        Ok(Bundle {
            config: InitConfig::parse(init)?,
            policy: Policy::new(
                TrustList::parse(trust).map_err(BundleError::Trust)?,
                PartialCopyMap::parse(pcopy).map_err(BundleError::Pcopy)?,
            ),
            trace: Trace::parse(trace)?,
        })
    }

    /// The boot world with partial copies in place.
    pub fn boot(&self) -> Result<World, BundleError> {
        let mut world = World::boot(&self.config)?;
        world
            .install_partial_copies(&self.policy.pcopy)
            .map_err(BundleError::Install)?;
        Ok(world)
    }

    pub fn run(&self) -> Result<Replay, BundleError> {
        Ok(replay(self.boot()?, &self.policy, &self.trace)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::FlagSet;

    fn bundle(init: &str, trace: &str) -> Bundle {
        Bundle::parse(init, "", "", trace).unwrap()
    }

    const FS: &str = "node /bin dir 0\nnode /bin/sh file 1\nnode /etc dir 0\ninte /etc\n\
        node /etc/motd file 0\ninte /etc/motd\nnode /tmp dir 0\nnode /home dir 0\nconf /home\n\
        node /home/f file 0\n";

    #[test]
    fn fork_by_tainted_parent_runs_both_families() {
        let b = bundle(
            FS,
            "1,1,fork,2\n2,2,socket_open,1,10.0.0.1:80,10.0.0.9:5555,tcp\n3,1,set_stbac_attr,pid:2,leak,1\n4,2,fork,3\n",
        );
        let r = b.run().unwrap();
        let child = r.world.process(ProcessId(3)).unwrap();
        assert_eq!(child.flags, FlagSet::TAINT | FlagSet::LEAK);
        let rules: Vec<Rule> = r.world.audit[3].flag_changes.iter().map(|c| c.rule).collect();
        assert_eq!(rules, vec![Rule::TrProcProc, Rule::VrProcProc]);
    }

    #[test]
    fn denied_write_leaves_world_unchanged() {
        let b = bundle(FS, "1,1,fork,2\n2,2,socket_open,1,10.0.0.1:80,10.0.0.9:5555,tcp\n");
        let mut world = b.run().unwrap().world;
        let before = world.clone();
        let ev: Event = "3,2,open_write,/etc/motd".parse().unwrap();
        apply_event(&mut world, &b.policy, &ev).unwrap();
        let rec = world.audit.pop().unwrap();
        assert_eq!(rec.outcome, Outcome::Deny(Rule::PrInte));
        assert!(rec.flag_changes.is_empty());
        world.clock = before.clock;
        assert_eq!(world, before);
    }

    #[test]
    fn exit_returns_allocations() {
        let b = bundle("", "1,1,fork,2\n2,2,brk_alloc,4096\n3,2,disk_alloc,8\n4,2,exit\n");
        let w = b.run().unwrap().world;
        assert_eq!(w.ledger.allocated_sys(ResourceKind::MemoryBytes), 0);
        assert_eq!(w.ledger.allocated_sys(ResourceKind::DiskBlocks), 0);
        assert!(w.ledger.is_conserved());
        assert!(!w.process(ProcessId(2)).unwrap().alive);
    }

    #[test]
    fn empty_trace_is_identity() {
        let b = bundle(FS, "");
        let r = b.run().unwrap();
        assert_eq!(r.world, b.boot().unwrap());
        assert!(r.audit_text().is_empty());
        assert_eq!(export_graph(&r.graph), "digraph stbac {\n}\n");
    }

    #[test]
    fn errors_report_the_trace_line() {
        let b = bundle(FS, "# c\n1,1,fork,2\n2,9,exit\n");
        let err = b.run().unwrap_err();
        assert!(matches!(err, BundleError::Replay(ReplayError { line: 3, .. })), "{err}");
        let b = bundle(FS, "1,1,create,/etc/motd,0\n");
        assert!(b.run().is_err());
    }

    #[test]
    fn audit_fields() {
        let b = bundle(
            FS,
            "1,1,fork,2\n2,2,execve,/bin/sh\n3,2,create,/tmp/x,1\n4,2,rename,/tmp/x,/tmp/y\n\
             5,2,setuid,0\n6,2,socket_open,4,10.0.0.1:22,127.0.0.1:9,udp\n7,2,sched_tick\n",
        );
        let text = b.run().unwrap().audit_text();
        let expected = "\
<4>1,1:-,pid:2,fork,-,ALLOW
<4>2,2:-,/bin/sh,execve,-,ALLOW
<4>3,2:/bin/sh,/tmp/x,create,exec=1,ALLOW
<4>4,2:/bin/sh,/tmp/x,rename,/tmp/y,ALLOW
<4>5,2:/bin/sh,-,setuid,uid=0,ALLOW
<4>6,2:/bin/sh,sock:4,socket_open,udp/10.0.0.1:22->127.0.0.1:9,ALLOW
<4>7,2:/bin/sh,cpu_ticks,sched_tick,1,ALLOW
";
        assert_eq!(text, expected);
    }

    #[test]
    fn search_through_confidential_dir_is_denied() {
        let b = bundle(
            FS,
            "1,1,fork,2\n2,2,socket_open,1,10.0.0.1:80,10.0.0.9:5555,tcp\n3,2,open_read,/home/f\n4,2,create,/home/g,0\n",
        );
        let r = b.run().unwrap();
        let denies: Vec<&Outcome> = r.denials().map(|d| &d.outcome).collect();
        assert_eq!(denies, vec![&Outcome::Deny(PrConf), &Outcome::Deny(PrConf)]);
    }

    #[test]
    fn redirected_write_goes_to_copy() {
        let b = Bundle::parse(
            FS,
            "",
            "pcopy /etc/motd /.stbac/motd",
            "1,1,fork,2\n2,2,socket_open,1,10.0.0.1:80,10.0.0.9:5555,tcp\n3,2,open_write,/etc/motd\n",
        )
        .unwrap();
        let r = b.run().unwrap();
        assert_eq!(r.world.audit[2].outcome, Outcome::AllowRedir("/.stbac/motd".into()));
    }

    #[test]
    fn fifo_taints_reader_after_writer_exits() {
        let b = bundle(
            FS,
            "1,1,fork,2\n2,1,fork,3\n3,2,socket_open,1,10.0.0.1:80,10.0.0.9:5555,tcp\n\
             4,1,mkfifo,/tmp/q\n5,2,open_write,/tmp/q\n6,2,exit\n7,3,open_read,/tmp/q\n",
        );
        let r = b.run().unwrap();
        assert!(r.world.is_tainted(EntityRef::Process(ProcessId(3))));
    }

    #[test]
    fn shm_group_shares_taint_in_any_order() {
        let b = bundle(
            FS,
            "1,1,fork,2\n2,1,fork,3\n3,1,fork,4\n4,4,socket_open,1,10.0.0.1:80,10.0.0.9:5555,tcp\n\
             5,2,shmat,k\n6,4,shmat,k\n7,3,shmat,k\n",
        );
        let w = b.run().unwrap().world;
        for p in [2, 3, 4] {
            assert!(w.is_tainted(EntityRef::Process(ProcessId(p))), "pid {p}");
        }
    }

    #[test]
    fn disabled_rule_is_skipped() {
        let b = bundle(FS, "1,1,fork,2\n2,2,socket_open,1,10.0.0.1:80,10.0.0.9:5555,tcp\n");
        let policy = b.policy.clone().without(Rule::TrSockProc);
        let r = replay(b.boot().unwrap(), &policy, &b.trace).unwrap();
        assert!(r.world.tainted_keys().is_empty());
    }

    #[test]
    fn dispatch_table_covers_published_assignment() {
        let mut extras = BTreeSet::new();
        for op in Op::ALL {
            assert!(!rule_families(*op).is_empty(), "{op}");
            for rule in rule_families(*op) {
                extras.insert((*op, *rule));
            }
        }
        for (rule, ops) in PUBLISHED_ASSIGNMENT {
            for op in *ops {
                assert!(rule_families(*op).contains(rule), "{rule} missing on {op}");
                extras.remove(&(*op, *rule));
            }
        }
        let documented: BTreeSet<(Op, Rule)> = EXTENSIONS.iter().map(|(o, r, _)| (*o, *r)).collect();
        assert_eq!(extras, documented);
    }
}
