//! Taint rules: how `Ft` spreads from untrusted sockets to processes,
//! between processes, into executables and back out of them.

use crate::rule::Rule;
use crate::world::{EntityRef, FsNode, NodeId, ProcessId, SocketId, World, WorldError};

/// Sets `Ft` on `target`; `cause -> target` is a dependency edge.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TaintMutation {
    pub target: EntityRef,
    pub rule: Rule,
    pub cause: EntityRef,
}

impl TaintMutation {
    fn new(rule: Rule, cause: EntityRef, target: EntityRef) -> TaintMutation {
        TaintMutation { target, rule, cause }
    }
}

/// Process-to-process communication channels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Channel {
    ForkChild,
    PipeMsg,
    LocalSocketMsg,
    /// No message direction; both endpoints are evaluated.
    ShmAttach,
    MsgqRecv,
    /// The message may outlive its writer.
    FifoMsg,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ExeAction {
    Create,
    Write,
    ChmodSetExec,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LoadAction {
    Execve,
    MmapExec,
}

fn regular_file(world: &World, node: NodeId) -> Result<&FsNode, WorldError> {
    let n = world.node(node).ok_or(WorldError::UnknownNode(node))?;
    if !n.is_file() {
        return Err(WorldError::NotAFile(n.path.clone()));
    }
    Ok(n)
}

/// A process using a non-trustable remote communication is tainted.
pub fn tr_sock_proc(
    world: &World,
    pid: ProcessId,
    sock: SocketId,
) -> Result<Option<TaintMutation>, WorldError> {
    world.live_process(pid)?;
    let socket = world.socket(sock).ok_or(WorldError::UnknownSocket(sock))?;
    if socket.owner != pid {
        return Err(WorldError::SocketOwnership { sock, pid });
    }
    Ok(socket.is_untrusted_remote().then(|| {
        TaintMutation::new(Rule::TrSockProc, EntityRef::Socket(sock), EntityRef::Process(pid))
    }))
}

/// A process created by, or receiving a message from, a tainted process is
/// tainted. Shared memory taints in both directions.
pub fn tr_proc_proc(
    world: &World,
    source: ProcessId,
    sink: ProcessId,
    channel: Channel,
) -> Result<Vec<TaintMutation>, WorldError> {
    let src = match channel {
        Channel::FifoMsg => world.process(source).ok_or(WorldError::UnknownProcess(source))?,
        _ => world.live_process(source)?,
    };
    let dst = world.live_process(sink)?;
    let mut out = Vec::new();
    if src.flags.is_tainted() {
        out.push(TaintMutation::new(
            Rule::TrProcProc,
            EntityRef::Process(source),
            EntityRef::Process(sink),
        ));
    }
    if channel == Channel::ShmAttach && dst.flags.is_tainted() {
        out.push(TaintMutation::new(
            Rule::TrProcProc,
            EntityRef::Process(sink),
            EntityRef::Process(source),
        ));
    }
    Ok(out)
}

/// An executable file created or modified by a tainted process is tainted.
/// Evaluated after the action, so `exec_bits` reflects the new mode.
pub fn tr_proc_exe(
    world: &World,
    pid: ProcessId,
    node: NodeId,
    _action: ExeAction,
) -> Result<Option<TaintMutation>, WorldError> {
    let proc = world.live_process(pid)?;
    let file = regular_file(world, node)?;
    Ok((proc.flags.is_tainted() && file.exec_bits).then(|| {
        TaintMutation::new(Rule::TrProcExe, EntityRef::Process(pid), EntityRef::Node(node))
    }))
}

/// A process that executes or maps a tainted file is tainted.
pub fn tr_exe_proc(
    world: &World,
    pid: ProcessId,
    node: NodeId,
    action: LoadAction,
) -> Result<Option<TaintMutation>, WorldError> {
    world.live_process(pid)?;
    let file = regular_file(world, node)?;
    if action == LoadAction::Execve && !file.exec_bits {
        return Err(WorldError::NotExecutable(file.path.clone()));
    }
    Ok(file.flags.is_tainted().then(|| {
        TaintMutation::new(Rule::TrExeProc, EntityRef::Node(node), EntityRef::Process(pid))
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::guard::TrustList;
    use crate::world::{Flag, InitConfig, NodeKind, Proto, Socket};

    const P: ProcessId = ProcessId(2);
    const Q: ProcessId = ProcessId(3);

    fn world() -> World {
        let cfg = "node /bin dir 0\nnode /bin/ls file 1\nnode /tmp dir 0\nnode /tmp/log file 0\n\
                   node /tmp/consume-cpu file 1";
        let mut w = World::boot(&InitConfig::parse(cfg).unwrap()).unwrap();
        w.spawn(ProcessId::INIT, P).unwrap();
        w.spawn(ProcessId::INIT, Q).unwrap();
        w
    }

    fn taint(w: &mut World, e: EntityRef) {
        w.set_flag(e, Flag::Taint, true, ProcessId::INIT).unwrap();
    }

    fn sock(w: &mut World, id: u32, owner: ProcessId, program: &str, remote: &str, trust: &TrustList) -> SocketId {
        let local = "192.1.1.1:23".parse().unwrap();
        let remote = remote.parse().unwrap();
        let trusted = trust.matches(program, &local, &remote, Proto::Tcp, 0);
        w.open_socket(Socket {
            id: SocketId(id),
            owner,
            local,
            remote,
            proto: Proto::Tcp,
            trusted,
            opened_at: 0,
        })
        .unwrap();
        SocketId(id)
    }

    #[test]
    fn untrusted_login_socket_taints_owner() {
        let mut w = world();
        let s = sock(&mut w, 1, P, "/usr/sbin/in.telnetd", "192.1.1.2:1025", &TrustList::default());
        let m = tr_sock_proc(&w, P, s).unwrap().unwrap();
        assert_eq!(m.target, EntityRef::Process(P));
        assert_eq!(m.rule, Rule::TrSockProc);
        // idempotent on an already-tainted owner
        taint(&mut w, EntityRef::Process(P));
        assert_eq!(tr_sock_proc(&w, P, s).unwrap(), Some(m));
    }

    #[test]
    fn trusted_and_local_sockets_do_not_taint() {
        let mut w = world();
        let trust = TrustList::parse("trust /usr/sbin/sshd *:23 *:* tcp 0..inf").unwrap();
        let s = sock(&mut w, 1, P, "/usr/sbin/sshd", "192.1.1.2:1025", &trust);
        assert_eq!(tr_sock_proc(&w, P, s).unwrap(), None);
        let l = sock(&mut w, 2, P, "/x", "127.0.0.1:5432", &TrustList::default());
        assert_eq!(tr_sock_proc(&w, P, l).unwrap(), None);
        assert!(matches!(tr_sock_proc(&w, Q, s), Err(WorldError::SocketOwnership { .. })));
    }

    #[test]
    fn fork_and_messages_carry_taint_forward() {
        let mut w = world();
        assert!(tr_proc_proc(&w, P, Q, Channel::ForkChild).unwrap().is_empty());
        taint(&mut w, EntityRef::Process(P));
        for ch in [Channel::ForkChild, Channel::PipeMsg, Channel::MsgqRecv, Channel::LocalSocketMsg] {
            let ms = tr_proc_proc(&w, P, Q, ch).unwrap();
            assert_eq!(ms.len(), 1);
            assert_eq!(ms[0].target, EntityRef::Process(Q));
        }
        // receive direction only
        assert!(tr_proc_proc(&w, Q, P, Channel::PipeMsg).unwrap().is_empty());
    }

    #[test]
    fn shared_memory_is_order_independent() {
        let mut w = world();
        taint(&mut w, EntityRef::Process(P));
        let a = tr_proc_proc(&w, P, Q, Channel::ShmAttach).unwrap();
        let b = tr_proc_proc(&w, Q, P, Channel::ShmAttach).unwrap();
        let hits = |ms: &[TaintMutation]| ms.iter().any(|m| m.target == EntityRef::Process(Q));
        assert!(hits(&a) && hits(&b));
    }

    #[test]
    fn dead_process_is_an_error() {
        let mut w = world();
        w.exit(Q);
        assert!(tr_proc_proc(&w, P, Q, Channel::ForkChild).is_err());
        assert!(tr_proc_proc(&w, Q, P, Channel::PipeMsg).is_err());
        assert!(tr_proc_proc(&w, Q, P, Channel::FifoMsg).is_ok());
    }

    #[test]
    fn executables_written_by_tainted_processes() {
        let mut w = world();
        taint(&mut w, EntityRef::Process(P));
        let cpu = w.lookup("/tmp/consume-cpu").unwrap();
        let log = w.lookup("/tmp/log").unwrap();
        assert!(tr_proc_exe(&w, P, cpu, ExeAction::Write).unwrap().is_some());
        assert!(tr_proc_exe(&w, P, log, ExeAction::Write).unwrap().is_none());
        assert!(tr_proc_exe(&w, Q, cpu, ExeAction::Write).unwrap().is_none());
        w.set_exec_bits(log, true);
        assert!(tr_proc_exe(&w, P, log, ExeAction::ChmodSetExec).unwrap().is_some());
        let dir = w.lookup("/tmp").unwrap();
        assert!(tr_proc_exe(&w, P, dir, ExeAction::Create).is_err());
    }

    #[test]
    fn loading_tainted_files() {
        let mut w = world();
        let cpu = w.lookup("/tmp/consume-cpu").unwrap();
        let ls = w.lookup("/bin/ls").unwrap();
        assert!(tr_exe_proc(&w, Q, ls, LoadAction::Execve).unwrap().is_none());
        taint(&mut w, EntityRef::Node(cpu));
        let m = tr_exe_proc(&w, Q, cpu, LoadAction::Execve).unwrap().unwrap();
        assert_eq!(m.cause, EntityRef::Node(cpu));
        // a tainted library without exec bits can still be mapped
        let lib = w.create_node("/tmp/libevil.so", NodeKind::File, false).unwrap();
        taint(&mut w, EntityRef::Node(lib));
        assert!(tr_exe_proc(&w, Q, lib, LoadAction::MmapExec).unwrap().is_some());
        assert!(matches!(
            tr_exe_proc(&w, Q, lib, LoadAction::Execve),
            Err(WorldError::NotExecutable(_))
        ));
    }
}
