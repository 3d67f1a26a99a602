//! Simulated kernel state and the label store.
//!
//! Labels live inline on the entity records. An entity is tainted iff it
//! carries `Ft`, vital iff it carries `Fconf` or `Finte`, and health
//! otherwise; tainted and vital bits are reported independently.

mod config;
mod entity;
mod flags;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use thiserror::Error;

pub use config::{parse_directive, ConfigError, Directive, InitConfig};
pub use entity::{
    parent_path, validate_path, Endpoint, EntityRef, FsNode, NodeId, NodeKind, Process, ProcessId,
    Proto, ResourceKind, Socket, SocketId, Tick,
};
pub use flags::{Flag, FlagSet};

use crate::engine::AuditRecord;
use crate::guard::{self, ConfOp, Decision, GuardError, InteOp, Mutation, PartialCopyMap, ResourceLedger, Target};
use crate::rule::Rule;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WorldError {
    #[error("unknown process {0}")]
    UnknownProcess(ProcessId),
    #[error("process {0} has exited")]
    DeadProcess(ProcessId),
    #[error("process id {0} was already used")]
    PidReused(ProcessId),
    #[error("no such path `{0}`")]
    NoSuchPath(String),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("unknown socket {0}")]
    UnknownSocket(SocketId),
    #[error("socket id {0} was already used")]
    SocketReused(SocketId),
    #[error("{sock} does not belong to {pid}")]
    SocketOwnership { sock: SocketId, pid: ProcessId },
    #[error("`{0}` already exists")]
    AlreadyExists(String),
    #[error("`{0}` is not a directory")]
    NotADirectory(String),
    #[error("`{0}` is not a regular file")]
    NotAFile(String),
    #[error("`{0}` is not executable")]
    NotExecutable(String),
    #[error("directory `{0}` is not empty")]
    DirectoryNotEmpty(String),
    #[error("`{0}` cannot be moved into its own subtree")]
    RenameIntoSelf(String),
    #[error("the root directory cannot be removed or renamed")]
    RootImmutable,
    #[error("{flag} cannot be attached to {entity}")]
    FlagNotAllowed { flag: Flag, entity: String },
    #[error("invalid path: {0}")]
    BadPath(String),
}

/// One effective label change, as recorded in the audit trail.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FlagChange {
    pub target: EntityRef,
    /// Path, `pid:N` or `sock:N` at the time of the change.
    pub label: String,
    pub flag: Flag,
    pub on: bool,
    pub rule: Rule,
    pub cause: Option<EntityRef>,
    pub cause_label: Option<String>,
}

/// Taint/vital classification of one entity.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Partition {
    pub tainted: bool,
    pub conf: bool,
    pub inte: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Class {
    Taint,
    Vital,
    Health,
}

impl Partition {
    pub fn of(flags: FlagSet) -> Partition {
        Partition {
            tainted: flags.has(Flag::Taint),
            conf: flags.has(Flag::Conf),
            inte: flags.has(Flag::Inte),
        }
    }

    /// Primary class; a tainted entity is `Taint` even when also vital.
    pub fn class(self) -> Class {
        if self.tainted {
            Class::Taint
        } else if self.conf || self.inte {
            Class::Vital
        } else {
            Class::Health
        }
    }
}

/// Result of reading labels through the guarded interface.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FlagQuery {
    Flags(FlagSet),
    Denied(Decision),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct World {
    processes: BTreeMap<ProcessId, Process>,
    nodes: BTreeMap<NodeId, FsNode>,
    paths: HashMap<String, NodeId>,
    sockets: BTreeMap<SocketId, Socket>,
    shm: BTreeMap<String, BTreeSet<ProcessId>>,
    next_node: u32,
    pub ledger: ResourceLedger,
    pub clock: Tick,
    pub audit: Vec<AuditRecord>,
}

pub const ROOT: NodeId = NodeId(0);

// Label checks never allocate, so only lookup failures can surface.
fn label_check_error(e: GuardError) -> WorldError {
    match e {
        GuardError::World(w) => w,
        other => unreachable!("label check failed with {other}"),
    }
}

impl Default for World {
    fn default() -> Self {
        World::empty()
    }
}

impl World {
    /// `/` and the init process, nothing else.
    pub fn empty() -> World {
        let root = FsNode {
            id: ROOT,
            path: "/".to_string(),
            kind: NodeKind::Dir,
            exec_bits: true,
            flags: FlagSet::empty(),
            parent: None,
            children: BTreeSet::new(),
            fifo_taint_from: None,
        };
        let init = Process {
            id: ProcessId::INIT,
            parent: ProcessId(0),
            exe: None,
            exe_path: None,
            uid: 0,
            flags: FlagSet::empty(),
            alive: true,
        };
        World {
            processes: BTreeMap::from([(init.id, init)]),
            nodes: BTreeMap::from([(ROOT, root)]),
            paths: HashMap::from([("/".to_string(), ROOT)]),
            sockets: BTreeMap::new(),
            shm: BTreeMap::new(),
            next_node: 1,
            ledger: ResourceLedger::default(),
            clock: 0,
            audit: Vec::new(),
        }
    }

    /// Builds the boot state from a parsed configuration, in directive order.
    pub fn boot(config: &InitConfig) -> Result<World, ConfigError> {
        let mut world = World::empty();
        for (line, directive) in &config.directives {
            let line = *line;
            match directive {
                Directive::Node { path, kind, exec } => {
                    if world.paths.contains_key(path) {
                        return Err(ConfigError::new(line, format!("duplicate path `{path}`")));
                    }
                    world
                        .create_node(path, *kind, *exec)
                        .map_err(|e| ConfigError::new(line, e.to_string()))?;
                }
                Directive::Label { flag, path } => {
                    let id = world.lookup(path).ok_or_else(|| {
                        ConfigError::new(line, format!("flag assigned to nonexistent path `{path}`"))
                    })?;
                    let node = world.nodes.get_mut(&id).expect("indexed node");
                    node.flags = node.flags.with(*flag);
                }
                Directive::Hwm {
                    kind,
                    per_tainted,
                    sys_percent,
                } => world.ledger.set_marks(*kind, *per_tainted, *sys_percent),
                Directive::Cap { kind, total } => world.ledger.set_capacity(*kind, *total),
            }
        }
        Ok(world)
    }

    /// Creates `/.stbac` and any missing copy files. Copies never carry `Fconf`.
    pub fn install_partial_copies(&mut self, map: &PartialCopyMap) -> Result<(), WorldError> {
        if map.is_empty() {
            return Ok(());
        }
        if self.lookup(guard::COPY_ROOT).is_none() {
            self.create_node(guard::COPY_ROOT, NodeKind::Dir, true)?;
        }
        for (_, copy) in map.iter() {
            let id = match self.lookup(copy) {
                Some(id) => id,
                None => self.create_node(copy, NodeKind::File, false)?,
            };
            let node = &self.nodes[&id];
            if !node.is_file() {
                return Err(WorldError::NotAFile(copy.to_string()));
            }
            if node.flags.has(Flag::Conf) {
                return Err(WorldError::FlagNotAllowed {
                    flag: Flag::Conf,
                    entity: copy.to_string(),
                });
            }
        }
        Ok(())
    }

    pub fn lookup(&self, path: &str) -> Option<NodeId> {
        self.paths.get(path).copied()
    }

    pub fn node(&self, id: NodeId) -> Option<&FsNode> {
        self.nodes.get(&id)
    }

    pub fn node_at(&self, path: &str) -> Result<&FsNode, WorldError> {
        self.lookup(path)
            .and_then(|id| self.nodes.get(&id))
            .ok_or_else(|| WorldError::NoSuchPath(path.to_string()))
    }

    pub fn nodes(&self) -> impl Iterator<Item = &FsNode> {
        self.nodes.values()
    }

    pub fn process(&self, pid: ProcessId) -> Option<&Process> {
        self.processes.get(&pid)
    }

    /// The process, if it exists and has not exited.
    pub fn live_process(&self, pid: ProcessId) -> Result<&Process, WorldError> {
        match self.processes.get(&pid) {
            None => Err(WorldError::UnknownProcess(pid)),
            Some(p) if !p.alive => Err(WorldError::DeadProcess(pid)),
            Some(p) => Ok(p),
        }
    }

    pub fn processes(&self) -> impl Iterator<Item = &Process> {
        self.processes.values()
    }

    pub fn socket(&self, id: SocketId) -> Option<&Socket> {
        self.sockets.get(&id)
    }

    pub fn sockets(&self) -> impl Iterator<Item = &Socket> {
        self.sockets.values()
    }

    pub fn shm_members(&self, key: &str) -> impl Iterator<Item = ProcessId> + '_ {
        self.shm.get(key).into_iter().flatten().copied()
    }

    pub fn flags_of(&self, entity: EntityRef) -> Option<FlagSet> {
        match entity {
            EntityRef::Process(p) => self.processes.get(&p).map(|p| p.flags),
            EntityRef::Node(n) => self.nodes.get(&n).map(|n| n.flags),
            EntityRef::Socket(_) => Some(FlagSet::empty()),
        }
    }

    pub fn is_tainted(&self, entity: EntityRef) -> bool {
        self.flags_of(entity).is_some_and(FlagSet::is_tainted)
    }

    pub fn classify(&self, entity: EntityRef) -> Option<Partition> {
        self.flags_of(entity).map(Partition::of)
    }

    /// Display label: path for nodes, `pid:N` / `sock:N` otherwise.
    pub fn label(&self, entity: EntityRef) -> String {
        match entity {
            EntityRef::Node(n) => self
                .nodes
                .get(&n)
                .map_or_else(|| n.to_string(), |n| n.path.clone()),
            other => other.to_string(),
        }
    }

    /// Resolves a `pid:N`, bare number or absolute path reference.
    pub fn resolve(&self, reference: &str) -> Result<EntityRef, WorldError> {
        if let Some(n) = reference.strip_prefix("pid:").or_else(|| {
            reference
                .chars()
                .all(|c| c.is_ascii_digit())
                .then_some(reference)
        }) {
            let pid = ProcessId(
                n.parse()
                    .map_err(|_| WorldError::BadPath(reference.to_string()))?,
            );
            self.processes
                .get(&pid)
                .ok_or(WorldError::UnknownProcess(pid))?;
            return Ok(EntityRef::Process(pid));
        }
        validate_path(reference).map_err(WorldError::BadPath)?;
        self.lookup(reference)
            .map(EntityRef::Node)
            .ok_or_else(|| WorldError::NoSuchPath(reference.to_string()))
    }

    fn check_entity(&self, entity: EntityRef) -> Result<(), WorldError> {
        match entity {
            EntityRef::Process(p) => self.live_process(p).map(|_| ()),
            EntityRef::Node(n) => self
                .nodes
                .contains_key(&n)
                .then_some(())
                .ok_or(WorldError::UnknownNode(n)),
            EntityRef::Socket(s) => self
                .sockets
                .contains_key(&s)
                .then_some(())
                .ok_or(WorldError::UnknownSocket(s)),
        }
    }

    /// Guarded label write on behalf of `actor`. A tainted actor is denied
    /// under `PR_inte` and nothing changes.
    pub fn set_flag(
        &mut self,
        entity: EntityRef,
        flag: Flag,
        on: bool,
        actor: ProcessId,
    ) -> Result<Decision, WorldError> {
        let mut decision = self.plan_set_flag(entity, flag, on, actor)?;
        if !decision.is_denied() {
            for m in &decision.mutations {
                self.apply_mutation(m);
            }
            decision.mutations.clear();
        }
        Ok(decision)
    }

    /// The decision `set_flag` would take, with the admin mutation attached.
    pub fn plan_set_flag(
        &self,
        entity: EntityRef,
        flag: Flag,
        on: bool,
        actor: ProcessId,
    ) -> Result<Decision, WorldError> {
        self.check_entity(entity)?;
        if flag == Flag::Avai || matches!(entity, EntityRef::Socket(_)) {
            return Err(WorldError::FlagNotAllowed {
                flag,
                entity: self.label(entity),
            });
        }
        let decision = guard::pr_inte(self, &PartialCopyMap::default(), actor, Target::of(entity), InteOp::SetAttr)
            .map_err(label_check_error)?;
        if decision.is_denied() {
            return Ok(decision);
        }
        Ok(Decision::allow().with(Mutation::Admin {
            target: entity,
            flag,
            on,
            actor,
        }))
    }

    /// Applies `set_flag` to the entity and every descendant (subtree for
    /// directories, child processes for processes). Returns the number of
    /// entities touched, or the denial.
    pub fn set_flag_recursive(
        &mut self,
        entity: EntityRef,
        flag: Flag,
        on: bool,
        actor: ProcessId,
    ) -> Result<Result<usize, Decision>, WorldError> {
        let targets = self.descendants(entity)?;
        // all-or-nothing: plan everything before touching anything
        let mut plans = Vec::with_capacity(targets.len());
        for t in &targets {
            let d = self.plan_set_flag(*t, flag, on, actor)?;
            if d.is_denied() {
                return Ok(Err(d));
            }
            plans.push(d);
        }
        for d in plans {
            for m in &d.mutations {
                self.apply_mutation(m);
            }
        }
        Ok(Ok(targets.len()))
    }

    /// Guarded label read. A tainted actor is denied under `PR_conf`.
    pub fn get_flag(&self, entity: EntityRef, actor: ProcessId) -> Result<FlagQuery, WorldError> {
        self.check_entity(entity)?;
        let decision = guard::pr_conf(self, &PartialCopyMap::default(), actor, Target::of(entity), ConfOp::GetAttr)
            .map_err(label_check_error)?;
        if decision.is_denied() {
            return Ok(FlagQuery::Denied(decision));
        }
        Ok(FlagQuery::Flags(self.flags_of(entity).unwrap_or_default()))
    }

    /// `entity` followed by its subtree (nodes) or live descendants (processes),
    /// in id order.
    pub fn descendants(&self, entity: EntityRef) -> Result<Vec<EntityRef>, WorldError> {
        self.check_entity(entity)?;
        let mut out = vec![entity];
        match entity {
            EntityRef::Node(root) => {
                let mut stack: Vec<NodeId> = self.nodes[&root].children.iter().rev().copied().collect();
                while let Some(id) = stack.pop() {
                    out.push(EntityRef::Node(id));
                    stack.extend(self.nodes[&id].children.iter().rev());
                }
            }
            EntityRef::Process(root) => {
                let mut frontier = BTreeSet::from([root]);
                let mut seen = BTreeSet::from([root]);
                while !frontier.is_empty() {
                    let next: BTreeSet<ProcessId> = self
                        .processes
                        .values()
                        .filter(|p| p.alive && frontier.contains(&p.parent) && !seen.contains(&p.id))
                        .map(|p| p.id)
                        .collect();
                    for p in &next {
                        out.push(EntityRef::Process(*p));
                        seen.insert(*p);
                    }
                    frontier = next;
                }
            }
            EntityRef::Socket(_) => {}
        }
        Ok(out)
    }

    /// Sets and clears bits; returns the effective changes.
    pub(crate) fn apply_mutation(&mut self, m: &Mutation) -> Vec<FlagChange> {
        let (target, add, clear, rule, cause) = m.parts();
        let label = self.label(target);
        let cause_label = cause.map(|c| self.label(c));
        let slot = match target {
            EntityRef::Process(p) => self.processes.get_mut(&p).map(|p| &mut p.flags),
            EntityRef::Node(n) => self.nodes.get_mut(&n).map(|n| &mut n.flags),
            EntityRef::Socket(_) => None,
        };
        let Some(flags) = slot else {
            return Vec::new();
        };
        let before = *flags;
        let after = (before - clear) | add;
        *flags = after;
        let mut changes = Vec::new();
        for flag in Flag::ALL {
            if before.has(flag) != after.has(flag) {
                changes.push(FlagChange {
                    target,
                    label: label.clone(),
                    flag,
                    on: after.has(flag),
                    rule,
                    cause,
                    cause_label: cause_label.clone(),
                });
            }
        }
        changes
    }

    pub(crate) fn create_node(&mut self, path: &str, kind: NodeKind, exec: bool) -> Result<NodeId, WorldError> {
        validate_path(path).map_err(WorldError::BadPath)?;
        if self.paths.contains_key(path) {
            return Err(WorldError::AlreadyExists(path.to_string()));
        }
        let parent_path = parent_path(path).ok_or(WorldError::RootImmutable)?;
        let parent = self.node_at(parent_path)?;
        if !parent.is_dir() {
            return Err(WorldError::NotADirectory(parent_path.to_string()));
        }
        let parent = parent.id;
        let id = NodeId(self.next_node);
        self.next_node += 1;
        self.nodes.insert(
            id,
            FsNode {
                id,
                path: path.to_string(),
                kind,
                exec_bits: exec,
                flags: FlagSet::empty(),
                parent: Some(parent),
                children: BTreeSet::new(),
                fifo_taint_from: None,
            },
        );
        self.nodes.get_mut(&parent).expect("parent").children.insert(id);
        self.paths.insert(path.to_string(), id);
        Ok(id)
    }

    /// `unlink` (`dir == false`) or `rmdir` (`dir == true`).
    pub(crate) fn remove_node(&mut self, id: NodeId, dir: bool) -> Result<(), WorldError> {
        if id == ROOT {
            return Err(WorldError::RootImmutable);
        }
        let node = self.nodes.get(&id).ok_or(WorldError::UnknownNode(id))?;
        match (dir, node.is_dir()) {
            (true, false) => return Err(WorldError::NotADirectory(node.path.clone())),
            (false, true) => return Err(WorldError::NotAFile(node.path.clone())),
            (true, true) if !node.children.is_empty() => {
                return Err(WorldError::DirectoryNotEmpty(node.path.clone()))
            }
            _ => {}
        }
        let node = self.nodes.remove(&id).expect("checked");
        self.paths.remove(&node.path);
        if let Some(parent) = node.parent {
            self.nodes.get_mut(&parent).expect("parent").children.remove(&id);
        }
        Ok(())
    }

    pub(crate) fn check_rename(&self, id: NodeId, to: &str) -> Result<Option<NodeId>, WorldError> {
        if id == ROOT {
            return Err(WorldError::RootImmutable);
        }
        validate_path(to).map_err(WorldError::BadPath)?;
        let node = self.nodes.get(&id).ok_or(WorldError::UnknownNode(id))?;
        if to == node.path || to.starts_with(&format!("{}/", node.path)) {
            return Err(WorldError::RenameIntoSelf(node.path.clone()));
        }
        let parent = parent_path(to).ok_or(WorldError::RootImmutable)?;
        if !self.node_at(parent)?.is_dir() {
            return Err(WorldError::NotADirectory(parent.to_string()));
        }
        match self.lookup(to) {
            None => Ok(None),
            Some(existing) => {
                let existing_node = &self.nodes[&existing];
                if existing_node.is_dir() || node.is_dir() {
                    Err(WorldError::AlreadyExists(to.to_string()))
                } else {
                    Ok(Some(existing))
                }
            }
        }
    }

    /// Moves `id` (and its subtree) to `to`, replacing an existing non-directory.
    pub(crate) fn rename_node(&mut self, id: NodeId, to: &str) -> Result<(), WorldError> {
        if let Some(existing) = self.check_rename(id, to)? {
            self.remove_node(existing, false)?;
        }
        let old_parent = self.nodes[&id].parent.expect("not root");
        let new_parent = self.lookup(parent_path(to).expect("not root")).expect("checked");
        self.nodes.get_mut(&old_parent).expect("parent").children.remove(&id);
        self.nodes.get_mut(&new_parent).expect("parent").children.insert(id);
        self.nodes.get_mut(&id).expect("node").parent = Some(new_parent);

        let old = self.nodes[&id].path.clone();
        let moved = self.descendants(EntityRef::Node(id))?;
        for entity in moved {
            let EntityRef::Node(n) = entity else { continue };
            let node = self.nodes.get_mut(&n).expect("node");
            let new_path = format!("{to}{}", &node.path[old.len()..]);
            self.paths.remove(&node.path);
            self.paths.insert(new_path.clone(), n);
            node.path = new_path;
        }
        Ok(())
    }

    pub(crate) fn set_exec_bits(&mut self, id: NodeId, exec: bool) {
        if let Some(n) = self.nodes.get_mut(&id) {
            n.exec_bits = exec;
        }
    }

    pub(crate) fn mark_fifo(&mut self, id: NodeId, writer: ProcessId) {
        if let Some(n) = self.nodes.get_mut(&id) {
            n.fifo_taint_from.get_or_insert(writer);
        }
    }

    pub(crate) fn spawn(&mut self, parent: ProcessId, child: ProcessId) -> Result<(), WorldError> {
        let p = self.live_process(parent)?.clone();
        if self.processes.contains_key(&child) || child.0 == 0 {
            return Err(WorldError::PidReused(child));
        }
        self.processes.insert(
            child,
            Process {
                id: child,
                parent,
                exe: p.exe,
                exe_path: p.exe_path,
                uid: p.uid,
                flags: FlagSet::empty(),
                alive: true,
            },
        );
        Ok(())
    }

    pub(crate) fn exec(&mut self, pid: ProcessId, node: NodeId) {
        let path = self.nodes.get(&node).map(|n| n.path.clone());
        if let Some(p) = self.processes.get_mut(&pid) {
            p.exe = Some(node);
            p.exe_path = path;
        }
    }

    pub(crate) fn set_uid(&mut self, pid: ProcessId, uid: u32) {
        if let Some(p) = self.processes.get_mut(&pid) {
            p.uid = uid;
        }
    }

    /// Marks the process dead and returns its resources.
    pub(crate) fn exit(&mut self, pid: ProcessId) {
        if let Some(p) = self.processes.get_mut(&pid) {
            p.alive = false;
        }
        self.ledger.release(pid);
        for members in self.shm.values_mut() {
            members.remove(&pid);
        }
    }

    pub(crate) fn open_socket(&mut self, socket: Socket) -> Result<(), WorldError> {
        if self.sockets.contains_key(&socket.id) {
            return Err(WorldError::SocketReused(socket.id));
        }
        self.sockets.insert(socket.id, socket);
        Ok(())
    }

    pub(crate) fn shm_attach(&mut self, key: &str, pid: ProcessId) {
        self.shm.entry(key.to_string()).or_default().insert(pid);
    }

    /// Live tainted processes and tainted nodes, keyed for comparison.
    pub fn tainted_keys(&self) -> BTreeSet<String> {
        let procs = self
            .processes
            .values()
            .filter(|p| p.alive && p.flags.is_tainted())
            .map(|p| p.id.to_string());
        let nodes = self
            .nodes
            .values()
            .filter(|n| n.flags.is_tainted())
            .map(|n| n.path.clone());
        procs.chain(nodes).collect()
    }

    /// Labels of every live process (`pid:N`) and node (path).
    pub fn label_snapshot(&self) -> BTreeMap<String, FlagSet> {
        let procs = self
            .processes
            .values()
            .filter(|p| p.alive)
            .map(|p| (p.id.to_string(), p.flags));
        let nodes = self.nodes.values().map(|n| (n.path.clone(), n.flags));
        procs.chain(nodes).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::guard::Verdict;

    fn boot(text: &str) -> World {
        World::boot(&InitConfig::parse(text).unwrap()).unwrap()
    }

    const DEFAULT: &str = "node /etc dir 0\nnode /etc/passwd file 0\nnode /etc/shadow file 0\n\
        node /home dir 0\nnode /home/szy dir 0\nnode /home/szy/data file 0\n\
        conf /etc/passwd\nconf /etc/shadow\nconf /home/szy/data\ninte /etc\n\
        node /sbin dir 0\ninte /sbin\n";

    #[test]
    fn boot_applies_labels() {
        let w = boot(DEFAULT);
        let passwd = w.node_at("/etc/passwd").unwrap();
        assert_eq!(passwd.flags, FlagSet::CONF);
        assert_eq!(w.node_at("/etc").unwrap().flags, FlagSet::INTE);
        let init = w.process(ProcessId::INIT).unwrap();
        assert!(init.alive);
        assert!(init.flags.is_empty());
    }

    #[test]
    fn empty_config_is_identity() {
        let w = boot("");
        assert_eq!(w, World::empty());
        assert_eq!(w.nodes().count(), 1);
        assert_eq!(w.processes().count(), 1);
        assert!(w.label_snapshot().values().all(|f| f.is_empty()));
    }

    #[test]
    fn boot_errors() {
        let dup = World::boot(&InitConfig::parse("node /a dir 0\nnode /a dir 0").unwrap()).unwrap_err();
        assert_eq!(dup.line, 2);
        assert!(World::boot(&InitConfig::parse("conf /nope").unwrap()).is_err());
        assert!(World::boot(&InitConfig::parse("node /a/b file 0").unwrap()).is_err());
        assert!(World::boot(&InitConfig::parse("node /a file 0\nnode /a/b file 0").unwrap()).is_err());
    }

    #[test]
    fn lookup() {
        let w = boot(DEFAULT);
        assert_eq!(w.lookup("/"), Some(ROOT));
        assert!(w.lookup("/etc/passwd").is_some());
        assert_eq!(w.lookup("/no/such"), None);
    }

    #[test]
    fn set_flag_by_health_admin() {
        let mut w = boot(DEFAULT);
        let sbin = EntityRef::Node(w.lookup("/sbin").unwrap());
        let d = w.set_flag(sbin, Flag::Inte, true, ProcessId::INIT).unwrap();
        assert_eq!(d.verdict, Verdict::Allow);
        assert!(w.flags_of(sbin).unwrap().has(Flag::Inte));
        // idempotent
        let again = w.set_flag(sbin, Flag::Inte, true, ProcessId::INIT).unwrap();
        assert_eq!(again.verdict, Verdict::Allow);
        assert_eq!(w.flags_of(sbin).unwrap(), FlagSet::INTE);
    }

    #[test]
    fn set_flag_by_tainted_actor_is_denied() {
        let mut w = boot(DEFAULT);
        w.spawn(ProcessId::INIT, ProcessId(2)).unwrap();
        w.processes.get_mut(&ProcessId(2)).unwrap().flags = FlagSet::TAINT;
        let before = w.clone();
        let target = EntityRef::Node(w.lookup("/etc/passwd").unwrap());
        let d = w.set_flag(target, Flag::Conf, false, ProcessId(2)).unwrap();
        assert_eq!(d.verdict, Verdict::Deny(Rule::PrInte));
        assert!(d.mutations.is_empty());
        assert_eq!(w, before);
    }

    #[test]
    fn set_flag_rejects_avai_and_unknown() {
        let mut w = boot(DEFAULT);
        let etc = EntityRef::Node(w.lookup("/etc").unwrap());
        assert!(matches!(
            w.set_flag(etc, Flag::Avai, true, ProcessId::INIT),
            Err(WorldError::FlagNotAllowed { .. })
        ));
        assert!(w
            .set_flag(EntityRef::Node(NodeId(999)), Flag::Inte, true, ProcessId::INIT)
            .is_err());
    }

    #[test]
    fn get_flag_paths() {
        let mut w = boot(DEFAULT);
        let passwd = EntityRef::Node(w.lookup("/etc/passwd").unwrap());
        let home = EntityRef::Node(w.lookup("/home").unwrap());
        assert_eq!(w.get_flag(passwd, ProcessId::INIT).unwrap(), FlagQuery::Flags(FlagSet::CONF));
        assert_eq!(w.get_flag(home, ProcessId::INIT).unwrap(), FlagQuery::Flags(FlagSet::empty()));
        w.spawn(ProcessId::INIT, ProcessId(2)).unwrap();
        w.processes.get_mut(&ProcessId(2)).unwrap().flags = FlagSet::TAINT;
        match w.get_flag(passwd, ProcessId(2)).unwrap() {
            FlagQuery::Denied(d) => assert_eq!(d.verdict, Verdict::Deny(Rule::PrConf)),
            other => panic!("expected denial, got {other:?}"),
        }
    }

    #[test]
    fn recursive_set_covers_subtree_and_descendants() {
        let mut w = boot("node /bin dir 0\nnode /bin/ls file 1\nnode /bin/sub dir 0\nnode /bin/sub/x file 1\nnode /tmp dir 0");
        let bin = EntityRef::Node(w.lookup("/bin").unwrap());
        let n = w.set_flag_recursive(bin, Flag::Inte, true, ProcessId::INIT).unwrap().unwrap();
        assert_eq!(n, 4);
        for p in ["/bin", "/bin/ls", "/bin/sub", "/bin/sub/x"] {
            assert!(w.node_at(p).unwrap().flags.has(Flag::Inte), "{p}");
        }
        assert!(w.node_at("/tmp").unwrap().flags.is_empty());

        w.spawn(ProcessId::INIT, ProcessId(2)).unwrap();
        w.spawn(ProcessId(2), ProcessId(3)).unwrap();
        w.spawn(ProcessId::INIT, ProcessId(4)).unwrap();
        let n = w
            .set_flag_recursive(EntityRef::Process(ProcessId(2)), Flag::Leak, true, ProcessId::INIT)
            .unwrap()
            .unwrap();
        assert_eq!(n, 2);
        assert!(w.process(ProcessId(3)).unwrap().flags.has(Flag::Leak));
        assert!(!w.process(ProcessId(4)).unwrap().flags.has(Flag::Leak));
    }

    #[test]
    fn rename_moves_subtree_paths() {
        let mut w = boot("node /a dir 0\nnode /a/b dir 0\nnode /a/b/c file 0\nnode /z dir 0");
        let a = w.lookup("/a").unwrap();
        w.rename_node(a, "/z/a2").unwrap();
        assert!(w.lookup("/a/b/c").is_none());
        let c = w.node_at("/z/a2/b/c").unwrap();
        assert_eq!(c.name(), "c");
        assert!(w.check_rename(w.lookup("/z").unwrap(), "/z/a2/inner").is_err());
    }

    #[test]
    fn rmdir_requires_empty() {
        let mut w = boot("node /a dir 0\nnode /a/f file 0");
        let a = w.lookup("/a").unwrap();
        assert!(matches!(w.remove_node(a, true), Err(WorldError::DirectoryNotEmpty(_))));
        let f = w.lookup("/a/f").unwrap();
        assert!(w.remove_node(f, true).is_err());
        w.remove_node(f, false).unwrap();
        w.remove_node(a, true).unwrap();
        assert_eq!(w.nodes().count(), 1);
    }

    #[test]
    fn partition_reports_both_bits() {
        let p = Partition::of(FlagSet::TAINT | FlagSet::INTE);
        assert!(p.tainted && p.inte);
        assert_eq!(p.class(), Class::Taint);
        assert_eq!(Partition::of(FlagSet::CONF).class(), Class::Vital);
        assert_eq!(Partition::of(FlagSet::LEAK).class(), Class::Health);
    }

    #[test]
    fn partial_copies_are_installed() {
        let mut w = boot(DEFAULT);
        let map = PartialCopyMap::parse("pcopy /etc/passwd /.stbac/passwd").unwrap();
        w.install_partial_copies(&map).unwrap();
        let copy = w.node_at("/.stbac/passwd").unwrap();
        assert!(copy.is_file());
        assert!(copy.flags.is_empty());
    }
}
