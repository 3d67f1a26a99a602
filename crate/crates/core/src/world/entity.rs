use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use super::flags::FlagSet;

macro_rules! id_newtype {
    ($name:ident, $prefix:literal) => {
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub struct $name(pub u32);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!($prefix, "{}"), self.0)
            }
        }
    };
}

id_newtype!(ProcessId, "pid:");
id_newtype!(NodeId, "node:");
id_newtype!(SocketId, "sock:");

impl ProcessId {
    pub const INIT: ProcessId = ProcessId(1);
}

/// Logical time supplied by the trace.
pub type Tick = u64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NodeKind {
    File,
    Dir,
    Device,
    Fifo,
}

impl NodeKind {
    pub fn name(self) -> &'static str {
        match self {
            NodeKind::File => "file",
            NodeKind::Dir => "dir",
            NodeKind::Device => "device",
            NodeKind::Fifo => "fifo",
        }
    }
}

impl FromStr for NodeKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "file" => Ok(NodeKind::File),
            "dir" => Ok(NodeKind::Dir),
            "device" => Ok(NodeKind::Device),
            "fifo" => Ok(NodeKind::Fifo),
            other => Err(format!("unknown node kind `{other}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FsNode {
    pub id: NodeId,
    pub path: String,
    pub kind: NodeKind,
    /// Any execute permission bit set.
    pub exec_bits: bool,
    pub flags: FlagSet,
    pub parent: Option<NodeId>,
    pub children: BTreeSet<NodeId>,
    /// Set once a tainted writer has put a message into a FIFO.
    pub fifo_taint_from: Option<ProcessId>,
}

impl FsNode {
    pub fn is_dir(&self) -> bool {
        self.kind == NodeKind::Dir
    }

    pub fn is_file(&self) -> bool {
        self.kind == NodeKind::File
    }

    /// Final path component; `/` for the root.
    pub fn name(&self) -> &str {
        match self.path.rfind('/') {
            Some(i) if self.path.len() > 1 => &self.path[i + 1..],
            _ => "/",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Process {
    pub id: ProcessId,
    pub parent: ProcessId,
    /// The executable last exec'd; `None` for init before its first exec.
    pub exe: Option<NodeId>,
    /// Path of `exe` when it was exec'd. Survives unlink of the binary.
    pub exe_path: Option<String>,
    pub uid: u32,
    pub flags: FlagSet,
    pub alive: bool,
}

impl Process {
    pub fn exe_display(&self) -> &str {
        self.exe_path.as_deref().unwrap_or("-")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Proto {
    Tcp,
    Udp,
}

impl Proto {
    pub fn name(self) -> &'static str {
        match self {
            Proto::Tcp => "tcp",
            Proto::Udp => "udp",
        }
    }
}

impl FromStr for Proto {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tcp" => Ok(Proto::Tcp),
            "udp" => Ok(Proto::Udp),
            other => Err(format!("unknown protocol `{other}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Endpoint {
    pub ip: String,
    pub port: u16,
}

impl Endpoint {
    /// Loopback and unix-domain peers are local, never remote communications.
    pub fn is_local(&self) -> bool {
        matches!(self.ip.as_str(), "127.0.0.1" | "::1" | "localhost" | "local")
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.ip, self.port)
    }
}

impl FromStr for Endpoint {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (ip, port) = s
            .rsplit_once(':')
            .ok_or_else(|| format!("endpoint `{s}` is not ip:port"))?;
        if ip.is_empty() {
            return Err(format!("endpoint `{s}` has an empty address"));
        }
        let port = port
            .parse()
            .map_err(|_| format!("endpoint `{s}` has a bad port"))?;
        Ok(Endpoint { ip: ip.to_string(), port })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Socket {
    pub id: SocketId,
    pub owner: ProcessId,
    pub local: Endpoint,
    pub remote: Endpoint,
    pub proto: Proto,
    /// Matched the trustable-communication list when opened.
    pub trusted: bool,
    pub opened_at: Tick,
}

impl Socket {
    /// A remote communication with no trust-list match.
    pub fn is_untrusted_remote(&self) -> bool {
        !self.trusted && !self.remote.is_local()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ResourceKind {
    CpuTicks,
    MemoryBytes,
    DiskBlocks,
    NetBytes,
    KernelObjects,
}

impl ResourceKind {
    pub const ALL: [ResourceKind; 5] = [
        ResourceKind::CpuTicks,
        ResourceKind::MemoryBytes,
        ResourceKind::DiskBlocks,
        ResourceKind::NetBytes,
        ResourceKind::KernelObjects,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            ResourceKind::CpuTicks => "cpu_ticks",
            ResourceKind::MemoryBytes => "memory_bytes",
            ResourceKind::DiskBlocks => "disk_blocks",
            ResourceKind::NetBytes => "net_bytes",
            ResourceKind::KernelObjects => "kernel_objects",
        }
    }
}

impl fmt::Display for ResourceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ResourceKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ResourceKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown resource kind `{s}`"))
    }
}

/// Anything that can carry a label or cause a flow.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EntityRef {
    Process(ProcessId),
    Node(NodeId),
    Socket(SocketId),
}

impl fmt::Display for EntityRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EntityRef::Process(p) => p.fmt(f),
            EntityRef::Node(n) => n.fmt(f),
            EntityRef::Socket(s) => s.fmt(f),
        }
    }
}

/// Checks that `path` is absolute and normalized: no empty, `.` or `..`
/// components, no trailing slash, no commas.
pub fn validate_path(path: &str) -> Result<(), String> {
    if !path.starts_with('/') {
        return Err(format!("path `{path}` is not absolute"));
    }
    if path == "/" {
        return Ok(());
    }
    if path.contains(',') || path.chars().any(char::is_whitespace) {
        return Err(format!("path `{path}` contains a separator character"));
    }
    for part in path[1..].split('/') {
        if part.is_empty() || part == "." || part == ".." {
            return Err(format!("path `{path}` is not normalized"));
        }
    }
    Ok(())
}

/// Parent path of a normalized absolute path; `None` for the root.
pub fn parent_path(path: &str) -> Option<&str> {
    if path == "/" {
        return None;
    }
    match path.rfind('/') {
        Some(0) => Some("/"),
        Some(i) => Some(&path[..i]),
        None => None,
    }
}
