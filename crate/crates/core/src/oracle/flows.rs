//! Information flows read off the raw trace by a path-keyed shadow of the
//! file system and process table. Nothing here looks at engine labels; the
//! only engine output consumed is the per-event outcome.

use std::collections::{BTreeMap, BTreeSet};

use crate::engine::{Event, EventKind, Op, Outcome};
use crate::guard::{PartialCopyMap, TrustList, COPY_ROOT};
use crate::world::{Flag, InitConfig, NodeKind, Tick};

/// Flow kinds between subjects and objects.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FlowKind {
    /// Untrusted remote socket into its owner.
    SocketProc,
    /// Fork, pipe, message queue, shared memory, local socket.
    ProcProc,
    /// Write into a fifo.
    ProcFifo,
    /// Read from a fifo.
    FifoProc,
    /// Write leaving the file executable.
    ProcExe,
    /// Write leaving the file non-executable.
    ProcFile,
    /// Exec or executable mapping.
    ExeProc,
    /// Plain read of a regular file.
    FileProc,
}

impl FlowKind {
    /// Carries suspicion from cause to effect.
    pub fn carries_taint(self) -> bool {
        !matches!(self, FlowKind::ProcFile | FlowKind::FileProc | FlowKind::ProcFifo | FlowKind::FifoProc)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct FlowEdge {
    pub kind: FlowKind,
    /// `pid:N`, `sock:N` or a path.
    pub cause: String,
    pub effect: String,
    pub tick: Tick,
}

/// Structural consequences of an allowed event.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Effect {
    Spawn(String),
    Exit(String),
    Create(String),
    Remove(String),
    Rename { from: String, to: String },
    Label { key: String, flag: Flag, on: bool },
}

/// A create, write or chmod, whether or not it was allowed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WriteAttempt {
    pub subject: String,
    pub target: String,
    /// Where integrity is checked: the file, or its directory on creation.
    pub protected: String,
    pub exec_after: bool,
    /// Went to the named file rather than a partial copy.
    pub performed: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StepFlows {
    pub tick: Tick,
    pub op: Op,
    pub subject: String,
    pub outcome: Outcome,
    pub effects: Vec<Effect>,
    pub flows: Vec<FlowEdge>,
    pub writes: Vec<WriteAttempt>,
}

struct Shadow {
    nodes: BTreeMap<String, (NodeKind, bool)>,
    exe: BTreeMap<u32, String>,
    shm: BTreeMap<String, BTreeSet<u32>>,
}

fn pkey(pid: u32) -> String {
    format!("pid:{pid}")
}

fn parent_of(path: &str) -> String {
    match path.rfind('/') {
        Some(0) | None => "/".to_string(),
        Some(i) => path[..i].to_string(),
    }
}

fn is_loopback(ip: &str) -> bool {
    matches!(ip, "127.0.0.1" | "::1" | "localhost" | "local")
}

impl Shadow {
    fn boot(config: &InitConfig, pcopy: &PartialCopyMap) -> Shadow {
        let mut nodes = BTreeMap::from([("/".to_string(), (NodeKind::Dir, true))]);
        for (path, kind, exec) in config.nodes() {
            nodes.insert(path.to_string(), (kind, exec));
        }
        if !pcopy.is_empty() {
            nodes.entry(COPY_ROOT.to_string()).or_insert((NodeKind::Dir, true));
            for (_, copy) in pcopy.iter() {
                nodes.entry(copy.to_string()).or_insert((NodeKind::File, false));
            }
        }
        Shadow {
            nodes,
            exe: BTreeMap::from([(1, "-".to_string())]),
            shm: BTreeMap::new(),
        }
    }

    fn rename(&mut self, from: &str, to: &str) {
        rename_keys(&mut self.nodes, from, to);
    }

    fn exit(&mut self, pid: u32) {
        self.exe.remove(&pid);
        for members in self.shm.values_mut() {
            members.remove(&pid);
        }
    }
}

/// Derives the flows of every event. `outcomes[i]` is the engine's result for
/// `events[i]`; denied events contribute no effects and no flows.
pub fn derive_flows(
    config: &InitConfig,
    trust: &TrustList,
    pcopy: &PartialCopyMap,
    events: &[Event],
    outcomes: &[Outcome],
) -> Vec<StepFlows> {
    let mut sh = Shadow::boot(config, pcopy);
    let mut out = Vec::with_capacity(events.len());
    for (ev, outcome) in events.iter().zip(outcomes) {
        let p = ev.pid.0;
        let me = pkey(p);
        let allowed = !outcome.is_denied();
        let redirected = match outcome {
            Outcome::AllowRedir(path) => Some(path.clone()),
            _ => None,
        };
        let mut effects = Vec::new();
        let mut flows = Vec::new();
        let mut writes = Vec::new();
        let mut flow = |kind, cause: String, effect: String| {
            flows.push(FlowEdge {
                kind,
                cause,
                effect,
                tick: ev.tick,
            })
        };
        match &ev.kind {
            EventKind::Spawn { child, .. } if allowed => {
                let exe = sh.exe.get(&p).cloned().unwrap_or_else(|| "-".to_string());
                sh.exe.insert(child.0, exe);
                effects.push(Effect::Spawn(pkey(child.0)));
                flow(FlowKind::ProcProc, me.clone(), pkey(child.0));
            }
            EventKind::Receive { from, .. } if allowed => flow(FlowKind::ProcProc, pkey(from.0), me.clone()),
            EventKind::Shmat { key } if allowed => {
                let group = sh.shm.entry(key.clone()).or_default();
                for other in group.iter().filter(|m| **m != p) {
                    flow(FlowKind::ProcProc, pkey(*other), me.clone());
                    flow(FlowKind::ProcProc, me.clone(), pkey(*other));
                }
                group.insert(p);
            }
            EventKind::MakeNode { path, kind, .. } if allowed => {
                sh.nodes.insert(path.clone(), (*kind, false));
                effects.push(Effect::Create(path.clone()));
            }
            EventKind::Mkdir { path } if allowed => {
                sh.nodes.insert(path.clone(), (NodeKind::Dir, true));
                effects.push(Effect::Create(path.clone()));
            }
            EventKind::Create { path, exec } => {
                writes.push(WriteAttempt {
                    subject: me.clone(),
                    target: path.clone(),
                    protected: parent_of(path),
                    exec_after: *exec,
                    performed: allowed,
                });
                if allowed {
                    sh.nodes.insert(path.clone(), (NodeKind::File, *exec));
                    effects.push(Effect::Create(path.clone()));
                    let kind = if *exec { FlowKind::ProcExe } else { FlowKind::ProcFile };
                    flow(kind, me.clone(), path.clone());
                }
            }
            EventKind::OpenWrite { path } => match sh.nodes.get(path).copied() {
                None => {
                    writes.push(WriteAttempt {
                        subject: me.clone(),
                        target: path.clone(),
                        protected: parent_of(path),
                        exec_after: false,
                        performed: allowed,
                    });
                    if allowed {
                        sh.nodes.insert(path.clone(), (NodeKind::File, false));
                        effects.push(Effect::Create(path.clone()));
                        flow(FlowKind::ProcFile, me.clone(), path.clone());
                    }
                }
                Some((kind, exec)) => {
                    if kind == NodeKind::File {
                        writes.push(WriteAttempt {
                            subject: me.clone(),
                            target: path.clone(),
                            protected: path.clone(),
                            exec_after: exec,
                            performed: allowed && redirected.is_none(),
                        });
                    }
                    if allowed {
                        let target = redirected.clone().unwrap_or_else(|| path.clone());
                        let (kind, exec) = sh.nodes.get(&target).copied().unwrap_or((kind, exec));
                        match kind {
                            NodeKind::File if exec => flow(FlowKind::ProcExe, me.clone(), target),
                            NodeKind::File => flow(FlowKind::ProcFile, me.clone(), target),
                            NodeKind::Fifo => flow(FlowKind::ProcFifo, me.clone(), target),
                            NodeKind::Dir | NodeKind::Device => {}
                        }
                    }
                }
            },
            EventKind::Chmod { path, exec, .. } => {
                let kind = sh.nodes.get(path).map(|n| n.0);
                if kind == Some(NodeKind::File) {
                    writes.push(WriteAttempt {
                        subject: me.clone(),
                        target: path.clone(),
                        protected: path.clone(),
                        exec_after: *exec,
                        performed: allowed,
                    });
                }
                if allowed {
                    if let Some(node) = sh.nodes.get_mut(path) {
                        node.1 = *exec;
                    }
                    if kind == Some(NodeKind::File) {
                        let kind = if *exec { FlowKind::ProcExe } else { FlowKind::ProcFile };
                        flow(kind, me.clone(), path.clone());
                    }
                }
            }
            EventKind::OpenRead { path } if allowed => {
                let target = redirected.clone().unwrap_or_else(|| path.clone());
                match sh.nodes.get(&target).map(|n| n.0) {
                    Some(NodeKind::File) => flow(FlowKind::FileProc, target, me.clone()),
                    Some(NodeKind::Fifo) => flow(FlowKind::FifoProc, target, me.clone()),
                    _ => {}
                }
            }
            EventKind::Load { op, path } if allowed => {
                if *op == Op::Execve {
                    sh.exe.insert(p, path.clone());
                }
                flow(FlowKind::ExeProc, path.clone(), me.clone());
            }
            EventKind::PathOp { op, path } if allowed && matches!(op, Op::Rmdir | Op::Unlink) => {
                sh.nodes.remove(path);
                effects.push(Effect::Remove(path.clone()));
            }
            EventKind::Rename { from, to } if allowed => {
                sh.rename(from, to);
                effects.push(Effect::Rename {
                    from: from.clone(),
                    to: to.clone(),
                });
            }
            EventKind::Signal { op: Op::Kill, target } if allowed => {
                sh.exit(target.0);
                effects.push(Effect::Exit(pkey(target.0)));
            }
            EventKind::SocketOpen {
                sock,
                local,
                remote,
                proto,
            } if allowed => {
                let program = sh.exe.get(&p).map_or("-", String::as_str);
                let trusted = trust.matches(program, local, remote, *proto, ev.tick);
                if !trusted && !is_loopback(&remote.ip) {
                    flow(FlowKind::SocketProc, format!("sock:{}", sock.0), me.clone());
                }
            }
            EventKind::SockRecv { peer: Some(peer), .. } if allowed => {
                flow(FlowKind::ProcProc, pkey(peer.0), me.clone());
            }
            EventKind::SetAttr { target, flag, on } if allowed => {
                effects.push(Effect::Label {
                    key: target.clone(),
                    flag: *flag,
                    on: *on,
                });
            }
            EventKind::Exit if allowed => {
                sh.exit(p);
                effects.push(Effect::Exit(me.clone()));
            }
            _ => {}
        }
        out.push(StepFlows {
            tick: ev.tick,
            op: ev.op(),
            subject: me,
            outcome: outcome.clone(),
            effects,
            flows,
            writes,
        });
    }
    out
}

/// Moves `from` and everything under it to `to` in a key set.
pub(crate) fn rename_keys<V>(map: &mut BTreeMap<String, V>, from: &str, to: &str) {
    map.remove(to);
    let prefix = format!("{from}/");
    let moved: Vec<String> = map
        .keys()
        .filter(|k| *k == from || k.starts_with(&prefix))
        .cloned()
        .collect();
    for old in moved {
        let v = map.remove(&old).expect("listed");
        map.insert(format!("{to}{}", &old[from.len()..]), v);
    }
}

pub(crate) fn remove_keys<V>(map: &mut BTreeMap<String, V>, path: &str) {
    let prefix = format!("{path}/");
    map.retain(|k, _| k != path && !k.starts_with(&prefix));
}
