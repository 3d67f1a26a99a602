//! Trace events: `tick,pid,op,arg1,arg2,...`, one per line, `#` comments.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::world::{validate_path, Endpoint, Flag, NodeKind, ProcessId, Proto, ResourceKind, SocketId, Tick};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("trace line {line}: {message}")]
pub struct TraceError {
    pub line: usize,
    pub message: String,
}

macro_rules! ops {
    ($($variant:ident => $name:literal,)*) => {
        /// Operation names of the trace vocabulary.
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum Op {
            $($variant,)*
        }

        impl Op {
            pub const ALL: &'static [Op] = &[$(Op::$variant,)*];

            pub fn name(self) -> &'static str {
                match self {
                    $(Op::$variant => $name,)*
                }
            }
        }
    };
}

ops! {
    Fork => "fork",
    Vfork => "vfork",
    Clone => "clone",
    Pipe => "pipe",
    Shmat => "shmat",
    Msgrcv => "msgrcv",
    Mkfifo => "mkfifo",
    Mknod => "mknod",
    OpenRead => "open_read",
    OpenWrite => "open_write",
    Create => "create",
    Chmod => "chmod",
    Fchmod => "fchmod",
    Execve => "execve",
    MmapExec => "mmap_exec",
    Mkdir => "mkdir",
    Truncate => "truncate",
    Chown => "chown",
    Rmdir => "rmdir",
    Rename => "rename",
    Unlink => "unlink",
    Mount => "mount",
    Umount => "umount",
    Setrlimit => "setrlimit",
    Reboot => "reboot",
    Swapoff => "swapoff",
    CreateModule => "create_module",
    DeleteModule => "delete_module",
    Setuid => "setuid",
    Setgid => "setgid",
    Setfsuid => "setfsuid",
    Kill => "kill",
    Ptrace => "ptrace",
    SocketOpen => "socket_open",
    SockSend => "sock_send",
    SockRecv => "sock_recv",
    BrkAlloc => "brk_alloc",
    SchedTick => "sched_tick",
    DiskAlloc => "disk_alloc",
    SetStbacAttr => "set_stbac_attr",
    GetStbacAttr => "get_stbac_attr",
    Exit => "exit",
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Op {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Op::ALL
            .iter()
            .copied()
            .find(|op| op.name() == s)
            .ok_or_else(|| format!("unknown operation `{s}`"))
    }
}

/// Operands, by operation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EventKind {
    /// `fork`, `vfork`, `clone`; the child pid must be fresh.
    Spawn { op: Op, child: ProcessId },
    /// `pipe` / `msgrcv`: the subject receives from `from`.
    Receive { op: Op, from: ProcessId },
    Shmat { key: String },
    /// `mkfifo`, `mknod`.
    MakeNode { op: Op, path: String, kind: NodeKind },
    OpenRead { path: String },
    /// Creates a plain non-executable file when the path is missing.
    OpenWrite { path: String },
    Create { path: String, exec: bool },
    /// `chmod`, `fchmod`.
    Chmod { op: Op, path: String, exec: bool },
    /// `execve`, `mmap_exec`.
    Load { op: Op, path: String },
    Mkdir { path: String },
    /// `truncate`, `chown`, `rmdir`, `unlink`, `mount`, `umount`.
    PathOp { op: Op, path: String },
    Rename { from: String, to: String },
    Setrlimit { kind: ResourceKind, amount: u64 },
    /// `reboot`, `swapoff`.
    Bare { op: Op },
    /// `create_module`, `delete_module`.
    Module { op: Op, name: String },
    /// `setuid`, `setgid`, `setfsuid`.
    SetId { op: Op, id: u32 },
    /// `kill`, `ptrace`.
    Signal { op: Op, target: ProcessId },
    SocketOpen {
        sock: SocketId,
        local: Endpoint,
        remote: Endpoint,
        proto: Proto,
    },
    SockSend { sock: SocketId, bytes: u64 },
    /// `peer` is the local sending process, if any.
    SockRecv { sock: SocketId, bytes: u64, peer: Option<ProcessId> },
    /// `brk_alloc`, `sched_tick`, `disk_alloc`.
    Alloc { op: Op, kind: ResourceKind, amount: u64 },
    SetAttr { target: String, flag: Flag, on: bool },
    GetAttr { target: String },
    Exit,
}

impl EventKind {
    pub fn op(&self) -> Op {
        match self {
            EventKind::Spawn { op, .. }
            | EventKind::Receive { op, .. }
            | EventKind::MakeNode { op, .. }
            | EventKind::Chmod { op, .. }
            | EventKind::Load { op, .. }
            | EventKind::PathOp { op, .. }
            | EventKind::Bare { op }
            | EventKind::Module { op, .. }
            | EventKind::SetId { op, .. }
            | EventKind::Signal { op, .. }
            | EventKind::Alloc { op, .. } => *op,
            EventKind::Shmat { .. } => Op::Shmat,
            EventKind::OpenRead { .. } => Op::OpenRead,
            EventKind::OpenWrite { .. } => Op::OpenWrite,
            EventKind::Create { .. } => Op::Create,
            EventKind::Mkdir { .. } => Op::Mkdir,
            EventKind::Rename { .. } => Op::Rename,
            EventKind::Setrlimit { .. } => Op::Setrlimit,
            EventKind::SocketOpen { .. } => Op::SocketOpen,
            EventKind::SockSend { .. } => Op::SockSend,
            EventKind::SockRecv { .. } => Op::SockRecv,
            EventKind::SetAttr { .. } => Op::SetStbacAttr,
            EventKind::GetAttr { .. } => Op::GetStbacAttr,
            EventKind::Exit => Op::Exit,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Event {
    pub tick: Tick,
    pub pid: ProcessId,
    pub kind: EventKind,
}

impl Event {
    pub fn new(tick: Tick, pid: u32, kind: EventKind) -> Event {
        Event {
            tick,
            pid: ProcessId(pid),
            kind,
        }
    }

    pub fn op(&self) -> Op {
        self.kind.op()
    }
}

fn bit(b: bool) -> u8 {
    u8::from(b)
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{}", self.tick, self.pid.0, self.op())?;
        match &self.kind {
            EventKind::Spawn { child, .. } => write!(f, ",{}", child.0),
            EventKind::Receive { from, .. } => write!(f, ",{}", from.0),
            EventKind::Shmat { key } => write!(f, ",{key}"),
            EventKind::MakeNode { op: Op::Mknod, path, kind } => write!(f, ",{path},{}", kind.name()),
            EventKind::MakeNode { path, .. }
            | EventKind::OpenRead { path }
            | EventKind::OpenWrite { path }
            | EventKind::Load { path, .. }
            | EventKind::Mkdir { path }
            | EventKind::PathOp { path, .. } => write!(f, ",{path}"),
            EventKind::Create { path, exec } | EventKind::Chmod { path, exec, .. } => {
                write!(f, ",{path},{}", bit(*exec))
            }
            EventKind::Rename { from, to } => write!(f, ",{from},{to}"),
            EventKind::Setrlimit { kind, amount } => write!(f, ",{kind},{amount}"),
            EventKind::Bare { .. } | EventKind::Exit => Ok(()),
            EventKind::Alloc { op: Op::SchedTick, .. } => Ok(()),
            EventKind::Module { name, .. } => write!(f, ",{name}"),
            EventKind::SetId { id, .. } => write!(f, ",{id}"),
            EventKind::Signal { target, .. } => write!(f, ",{}", target.0),
            EventKind::SocketOpen {
                sock,
                local,
                remote,
                proto,
            } => write!(f, ",{},{local},{remote},{}", sock.0, proto.name()),
            EventKind::SockSend { sock, bytes } => write!(f, ",{},{bytes}", sock.0),
            EventKind::SockRecv { sock, bytes, peer } => {
                write!(f, ",{},{bytes}", sock.0)?;
                match peer {
                    Some(p) => write!(f, ",{}", p.0),
                    None => Ok(()),
                }
            }
            EventKind::Alloc { amount, .. } => write!(f, ",{amount}"),
            EventKind::SetAttr { target, flag, on } => write!(f, ",{target},{},{}", flag.name(), bit(*on)),
            EventKind::GetAttr { target } => write!(f, ",{target}"),
        }
    }
}

fn path(s: &str) -> Result<String, String> {
    validate_path(s)?;
    Ok(s.to_string())
}

fn num<T: FromStr>(s: &str, what: &str) -> Result<T, String> {
    s.parse().map_err(|_| format!("bad {what} `{s}`"))
}

fn flag01(s: &str) -> Result<bool, String> {
    match s {
        "0" => Ok(false),
        "1" => Ok(true),
        _ => Err(format!("expected 0 or 1, got `{s}`")),
    }
}

fn pid(s: &str) -> Result<ProcessId, String> {
    Ok(ProcessId(num(s, "pid")?))
}

fn positive(s: &str) -> Result<u64, String> {
    match num(s, "amount")? {
        0 => Err("amount must be positive".to_string()),
        n => Ok(n),
    }
}

fn entity_ref(s: &str) -> Result<String, String> {
    match s.strip_prefix("pid:") {
        Some(n) => pid(n).map(|_| s.to_string()),
        None => path(s),
    }
}

fn parse_kind(op: Op, args: &[&str]) -> Result<EventKind, String> {
    let want = |n: usize| -> Result<(), String> {
        if args.len() == n {
            Ok(())
        } else {
            Err(format!("{op} takes {n} argument(s), got {}", args.len()))
        }
    };
    let kind = match op {
        Op::Fork | Op::Vfork | Op::Clone => {
            want(1)?;
            EventKind::Spawn { op, child: pid(args[0])? }
        }
        Op::Pipe | Op::Msgrcv => {
            want(1)?;
            EventKind::Receive { op, from: pid(args[0])? }
        }
        Op::Shmat => {
            want(1)?;
            if args[0].is_empty() {
                return Err("empty shm key".to_string());
            }
            EventKind::Shmat { key: args[0].to_string() }
        }
        Op::Mkfifo => {
            want(1)?;
            EventKind::MakeNode {
                op,
                path: path(args[0])?,
                kind: NodeKind::Fifo,
            }
        }
        Op::Mknod => {
            want(2)?;
            let kind = match args[1] {
                "fifo" => NodeKind::Fifo,
                "device" => NodeKind::Device,
                other => return Err(format!("mknod kind must be fifo or device, got `{other}`")),
            };
            EventKind::MakeNode {
                op,
                path: path(args[0])?,
                kind,
            }
        }
        Op::OpenRead => {
            want(1)?;
            EventKind::OpenRead { path: path(args[0])? }
        }
        Op::OpenWrite => {
            want(1)?;
            EventKind::OpenWrite { path: path(args[0])? }
        }
        Op::Create => {
            want(2)?;
            EventKind::Create {
                path: path(args[0])?,
                exec: flag01(args[1])?,
            }
        }
        Op::Chmod | Op::Fchmod => {
            want(2)?;
            EventKind::Chmod {
                op,
                path: path(args[0])?,
                exec: flag01(args[1])?,
            }
        }
        Op::Execve | Op::MmapExec => {
            want(1)?;
            EventKind::Load { op, path: path(args[0])? }
        }
        Op::Mkdir => {
            want(1)?;
            EventKind::Mkdir { path: path(args[0])? }
        }
        Op::Truncate | Op::Chown | Op::Rmdir | Op::Unlink | Op::Mount | Op::Umount => {
            want(1)?;
            EventKind::PathOp { op, path: path(args[0])? }
        }
        Op::Rename => {
            want(2)?;
            EventKind::Rename {
                from: path(args[0])?,
                to: path(args[1])?,
            }
        }
        Op::Setrlimit => {
            want(2)?;
            EventKind::Setrlimit {
                kind: args[0].parse()?,
                amount: num(args[1], "amount")?,
            }
        }
        Op::Reboot | Op::Swapoff => {
            want(0)?;
            EventKind::Bare { op }
        }
        Op::CreateModule | Op::DeleteModule => {
            want(1)?;
            if args[0].is_empty() {
                return Err("empty module name".to_string());
            }
            EventKind::Module {
                op,
                name: args[0].to_string(),
            }
        }
        Op::Setuid | Op::Setgid | Op::Setfsuid => {
            want(1)?;
            EventKind::SetId { op, id: num(args[0], "id")? }
        }
        Op::Kill | Op::Ptrace => {
            want(1)?;
            EventKind::Signal { op, target: pid(args[0])? }
        }
        Op::SocketOpen => {
            want(4)?;
            EventKind::SocketOpen {
                sock: SocketId(num(args[0], "socket id")?),
                local: args[1].parse()?,
                remote: args[2].parse()?,
                proto: args[3].parse()?,
            }
        }
        Op::SockSend => {
            want(2)?;
            EventKind::SockSend {
                sock: SocketId(num(args[0], "socket id")?),
                bytes: positive(args[1])?,
            }
        }
        Op::SockRecv => {
            if !(2..=3).contains(&args.len()) {
                return Err(format!("sock_recv takes 2 or 3 arguments, got {}", args.len()));
            }
            EventKind::SockRecv {
                sock: SocketId(num(args[0], "socket id")?),
                bytes: positive(args[1])?,
                peer: args.get(2).map(|p| pid(p)).transpose()?,
            }
        }
        Op::BrkAlloc => {
            want(1)?;
            EventKind::Alloc {
                op,
                kind: ResourceKind::MemoryBytes,
                amount: positive(args[0])?,
            }
        }
        Op::DiskAlloc => {
            want(1)?;
            EventKind::Alloc {
                op,
                kind: ResourceKind::DiskBlocks,
                amount: positive(args[0])?,
            }
        }
        Op::SchedTick => {
            want(0)?;
            EventKind::Alloc {
                op,
                kind: ResourceKind::CpuTicks,
                amount: 1,
            }
        }
        Op::SetStbacAttr => {
            want(3)?;
            EventKind::SetAttr {
                target: entity_ref(args[0])?,
                flag: args[1].parse()?,
                on: flag01(args[2])?,
            }
        }
        Op::GetStbacAttr => {
            want(1)?;
            EventKind::GetAttr {
                target: entity_ref(args[0])?,
            }
        }
        Op::Exit => {
            want(0)?;
            EventKind::Exit
        }
    };
    Ok(kind)
}

impl FromStr for Event {
    type Err = String;

    fn from_str(line: &str) -> Result<Self, Self::Err> {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() < 3 {
            return Err("expected tick,pid,op[,args...]".to_string());
        }
        let tick = num(fields[0], "tick")?;
        let pid = pid(fields[1])?;
        let op: Op = fields[2].parse()?;
        let kind = parse_kind(op, &fields[3..])?;
        Ok(Event { tick, pid, kind })
    }
}

/// A parsed trace; `lines[i]` is the source line of `events[i]`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Trace {
    pub events: Vec<Event>,
    pub lines: Vec<usize>,
}

impl Trace {
    pub fn parse(text: &str) -> Result<Trace, TraceError> {
        let mut trace = Trace::default();
        let mut last = 0;
        for (idx, raw) in text.lines().enumerate() {
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let line = idx + 1;
            let event: Event = body.parse().map_err(|message| TraceError { line, message })?;
            if event.tick < last {
                return Err(TraceError {
                    line,
                    message: format!("tick {} goes backwards from {last}", event.tick),
                });
            }
            last = event.tick;
            trace.events.push(event);
            trace.lines.push(line);
        }
        Ok(trace)
    }

    pub fn from_events(events: Vec<Event>) -> Trace {
        let lines = (1..=events.len()).collect();
        Trace { events, lines }
    }

    pub fn to_text(&self) -> String {
        self.events.iter().map(|e| format!("{e}\n")).collect()
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}
