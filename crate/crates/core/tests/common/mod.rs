#![allow(dead_code)]

use std::collections::BTreeSet;

use stbac::engine::{apply_event, Bundle, Event, EventKind, Outcome, Trace};
use stbac::world::{InitConfig, ProcessId, World};

pub const INIT: &str = "\
node /bin dir 0
node /bin/sh file 1
node /bin/cp file 1
node /usr dir 0
node /usr/sbin dir 0
node /usr/sbin/sshd file 1
node /etc dir 0
node /etc/passwd file 0
node /etc/shadow file 0
node /tmp dir 0
node /home dir 0
node /home/u dir 0
node /home/u/data file 0
inte /bin
inte /bin/sh
inte /etc
inte /etc/passwd
conf /etc/passwd
conf /etc/shadow
conf /home/u/data
leak /bin/cp
hwm cpu_ticks 8 50
cap cpu_ticks 40
hwm memory_bytes 4096 50
cap memory_bytes 16384
";

pub const TRUST: &str = "trust /usr/sbin/sshd *:22 *:* tcp 0..inf\n";
pub const PCOPY: &str = "pcopy /etc/shadow /.stbac/shadow\n";

/// Twenty paths the generator draws from; some exist at boot.
pub const PATHS: [&str; 20] = [
    "/bin/sh",
    "/bin/cp",
    "/usr/sbin/sshd",
    "/etc/passwd",
    "/etc/shadow",
    "/home/u/data",
    "/tmp/a",
    "/tmp/b",
    "/tmp/x",
    "/tmp/y",
    "/tmp/fifo",
    "/tmp/d",
    "/tmp/d/e",
    "/home/u/f",
    "/home/u/g",
    "/bin/new",
    "/etc/new",
    "/tmp",
    "/home/u",
    "/bin",
];

pub const MAX_PIDS: u32 = 10;

/// Which kinds of remote peers the generator may open sockets to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Remote {
    Any,
    /// Trusted or loopback only: nothing can become tainted.
    Benign,
}

fn pick<T: Copy>(items: &[T], n: u8) -> T {
    items[n as usize % items.len()]
}

struct Gen {
    world: World,
    bundle: Bundle,
    next_pid: u32,
    next_sock: u32,
    socks: Vec<(u32, u32)>,
    events: Vec<Event>,
    remote: Remote,
}

impl Gen {
    fn live(&self) -> Vec<u32> {
        (1..self.next_pid)
            .filter(|p| self.world.process(ProcessId(*p)).is_some_and(|p| p.alive))
            .collect()
    }

    fn candidate(&mut self, (sel, a, b, c): (u8, u8, u8, u8)) -> Option<String> {
        let live = self.live();
        if live.is_empty() {
            return None;
        }
        let pid = pick(&live, a);
        let other = pick(&live, b);
        let path = pick(&PATHS, b);
        let path2 = pick(&PATHS, c);
        let bit = c % 2;
        let args = match sel % 24 {
            0 | 1 => {
                if self.next_pid > MAX_PIDS {
                    return None;
                }
                format!("{},{}", pick(&["fork", "vfork", "clone"], c), self.next_pid)
            }
            2 | 3 => format!("execve,{path}"),
            4 => format!("create,{path},{bit}"),
            5 => format!("open_write,{path}"),
            6 | 7 => format!("open_read,{path}"),
            8 => format!("chmod,{path},{bit}"),
            9 | 10 => {
                let sshd = self
                    .world
                    .process(ProcessId(pid))
                    .is_some_and(|p| p.exe_display() == "/usr/sbin/sshd");
                let loopback = ("127.0.0.1:5000".to_string(), "127.0.0.1:6000".to_string());
                let ssh = ("10.0.0.1:22".to_string(), "10.9.9.9:5555".to_string());
                let (local, remote) = match (self.remote, c % 4) {
                    (Remote::Any, 0 | 1) => ("10.0.0.1:4000".to_string(), format!("10.9.9.{}:80", c % 3)),
                    (Remote::Any, 2) => loopback,
                    (Remote::Any, _) => ssh,
                    (Remote::Benign, _) if sshd && c % 2 == 1 => ssh,
                    (Remote::Benign, _) => loopback,
                };
                format!("socket_open,{},{local},{remote},tcp", self.next_sock)
            }
            11 => {
                let (sock, _) = *self.socks.get(c as usize % self.socks.len().max(1))?;
                if c % 3 == 0 {
                    format!("sock_recv,{sock},64,{other}")
                } else {
                    format!("sock_recv,{sock},64")
                }
            }
            12 => format!("{},{other}", pick(&["pipe", "msgrcv"], c)),
            13 => format!("shmat,k{}", c % 2),
            14 => format!("mmap_exec,{path}"),
            // init stays up so the trace keeps going
            15 if pid == 1 => return None,
            15 => "exit".to_string(),
            16 if other == 1 => return None,
            16 => format!("kill,{other}"),
            17 => format!("rename,{path},{path2}"),
            18 => format!("{},{path}", pick(&["unlink", "rmdir", "truncate", "chown"], c)),
            19 => format!("{},{path}", pick(&["mkfifo", "mkdir"], c)),
            20 => {
                let flag = pick(&["conf", "inte", "leak"], c);
                format!("set_stbac_attr,{path},{flag},{}", (c / 4) % 2)
            }
            21 => format!("{},{}", pick(&["brk_alloc", "disk_alloc"], c), 512 * (1 + u64::from(c % 8))),
            22 => "sched_tick".to_string(),
            _ => pick(
                &["setuid,0", "reboot", "create_module,m", "swapoff", "setrlimit,cpu_ticks,5"],
                c,
            )
            .to_string(),
        };
        let tick = self.events.len() as u64 + 1;
        Some(format!("{tick},{pid},{args}"))
    }

    fn step(&mut self, choice: (u8, u8, u8, u8)) {
        let Some(line) = self.candidate(choice) else { return };
        let event: Event = line.parse().unwrap_or_else(|e| panic!("generator produced `{line}`: {e}"));
        let mut trial = self.world.clone();
        if apply_event(&mut trial, &self.bundle.policy, &event).is_err() {
            return;
        }
        let allowed = !trial.audit.last().expect("recorded").outcome.is_denied();
        match &event.kind {
            EventKind::Spawn { .. } => self.next_pid += 1,
            EventKind::SocketOpen { sock, .. } if allowed => {
                self.socks.push((sock.0, event.pid.0));
                self.next_sock += 1;
            }
            EventKind::SocketOpen { .. } => self.next_sock += 1,
            _ => {}
        }
        self.world = trial;
        self.events.push(event);
    }
}

/// Turns raw choices into a trace that replays without errors. Candidates
/// the engine rejects as malformed (missing paths, dead pids, ...) are dropped.
pub fn build(choices: &[(u8, u8, u8, u8)], remote: Remote) -> Bundle {
    let bundle = Bundle::parse(INIT, TRUST, PCOPY, "").expect("fixture parses");
    let mut g = Gen {
        world: bundle.boot().expect("fixture boots"),
        bundle,
        next_pid: 2,
        next_sock: 1,
        socks: Vec::new(),
        events: Vec::new(),
        remote,
    };
    for c in choices {
        g.step(*c);
    }
    Bundle {
        trace: Trace::from_events(g.events),
        ..g.bundle
    }
}

/// Long traces for timing: processes fork, exec, read, write and exit in a
/// rotating pool, with a few untrusted sockets mixed in. Always valid.
pub fn structured(n: usize) -> Bundle {
    let mut lines = String::with_capacity(n * 24);
    let mut tick = 0u64;
    let mut next = 2u32;
    let mut pool: Vec<u32> = Vec::new();
    let mut emit = |lines: &mut String, pid: u32, args: String| {
        tick += 1;
        lines.push_str(&format!("{tick},{pid},{args}\n"));
    };
    let mut count = 0;
    let mut k = 0usize;
    while count < n {
        count += 1;
        if pool.len() < 8 {
            emit(&mut lines, 1, format!("fork,{next}"));
            pool.push(next);
            next += 1;
            continue;
        }
        k += 1;
        let i = (k * 7) % pool.len();
        let p = pool[i];
        let args = match k % 13 {
            0 => format!("socket_open,{k},10.0.0.1:4000,10.9.9.9:80,tcp"),
            1 => "execve,/bin/sh".to_string(),
            2 | 3 => "open_read,/tmp/a".to_string(),
            4 => format!("open_write,/tmp/f{}", k % 64),
            5 => format!("pipe,{}", pool[(i + 1) % pool.len()]),
            6 => "open_read,/etc/passwd".to_string(),
            7 => format!("open_write,/tmp/x{}", k % 64),
            8 => format!("execve,/tmp/x{}", (k * 5) % 64),
            9 | 10 => "sched_tick".to_string(),
            11 => "open_write,/bin/sh".to_string(),
            _ => {
                pool.remove(i);
                "exit".to_string()
            }
        };
        emit(&mut lines, p, args);
    }
    let mut init = INIT.to_string();
    init.push_str("cap cpu_ticks 100000000\nnode /tmp/a file 0\n");
    for k in 0..64 {
        init.push_str(&format!("node /tmp/x{k} file 1\n"));
    }
    Bundle::parse(&init, TRUST, PCOPY, &lines).expect("structured trace parses")
}

/// Keys an event reads or writes, for independence checks. Paths conflict
/// with their ancestors and descendants.
pub fn operands(ev: &Event) -> BTreeSet<String> {
    let mut out = BTreeSet::from([format!("pid:{}", ev.pid.0)]);
    match &ev.kind {
        EventKind::Spawn { child, .. } => {
            out.insert(format!("pid:{}", child.0));
        }
        EventKind::Receive { from, .. } => {
            out.insert(format!("pid:{}", from.0));
        }
        EventKind::Shmat { key } => {
            out.insert(format!("shm:{key}"));
        }
        EventKind::MakeNode { path, .. }
        | EventKind::OpenRead { path }
        | EventKind::OpenWrite { path }
        | EventKind::Create { path, .. }
        | EventKind::Chmod { path, .. }
        | EventKind::Load { path, .. }
        | EventKind::Mkdir { path }
        | EventKind::PathOp { path, .. } => {
            out.insert(path.clone());
        }
        EventKind::Rename { from, to } => {
            out.insert(from.clone());
            out.insert(to.clone());
        }
        EventKind::Signal { target, .. } => {
            out.insert(format!("pid:{}", target.0));
        }
        EventKind::SocketOpen { sock, .. } | EventKind::SockSend { sock, .. } => {
            out.insert(format!("sock:{}", sock.0));
            out.insert("res:net_bytes".into());
        }
        EventKind::SockRecv { sock, peer, .. } => {
            out.insert(format!("sock:{}", sock.0));
            out.insert("res:net_bytes".into());
            if let Some(p) = peer {
                out.insert(format!("pid:{}", p.0));
            }
        }
        EventKind::Alloc { kind, .. } | EventKind::Setrlimit { kind, .. } => {
            out.insert(format!("res:{kind}"));
        }
        EventKind::SetAttr { target, .. } | EventKind::GetAttr { target } => {
            out.insert(target.clone());
        }
        EventKind::Bare { .. } | EventKind::Module { .. } | EventKind::SetId { .. } | EventKind::Exit => {}
    }
    out
}

fn related(a: &str, b: &str) -> bool {
    if !(a.starts_with('/') && b.starts_with('/')) {
        return a == b;
    }
    let under = |x: &str, y: &str| x == y || y == "/" || x.starts_with(&format!("{y}/"));
    under(a, b) || under(b, a)
}

/// Events that read or write global state (ledger totals, shm groups,
/// release on exit) are never treated as independent.
fn global(ev: &Event) -> bool {
    matches!(
        ev.kind,
        EventKind::Alloc { .. }
            | EventKind::SockSend { .. }
            | EventKind::SockRecv { .. }
            | EventKind::Setrlimit { .. }
            | EventKind::Shmat { .. }
            | EventKind::Exit
            | EventKind::Signal { .. }
    )
}

pub fn independent(a: &Event, b: &Event) -> bool {
    if global(a) || global(b) {
        return false;
    }
    let (oa, ob) = (operands(a), operands(b));
    oa.iter().all(|x| ob.iter().all(|y| !related(x, y)))
}

/// Ticks stay in place; only the event bodies swap.
pub fn swap_adjacent(trace: &Trace, i: usize) -> Trace {
    let mut events = trace.events.clone();
    let (ta, tb) = (events[i].tick, events[i + 1].tick);
    events.swap(i, i + 1);
    events[i].tick = ta;
    events[i + 1].tick = tb;
    Trace::from_events(events)
}

pub fn denials(world: &World) -> usize {
    world.audit.iter().filter(|r| matches!(r.outcome, Outcome::Deny(_))).count()
}

pub fn boot_fixture() -> World {
    World::boot(&InitConfig::parse(INIT).unwrap()).unwrap()
}
