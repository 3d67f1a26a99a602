use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use stbac::guard::TrustList;

const SCENARIOS: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios");

fn stbac(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stbac")).args(args).output().unwrap()
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

fn scenario_file(name: &str, file: &str) -> String {
    format!("{SCENARIOS}/{name}/{file}")
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn replay_remote_user_files() {
    let dir = tempfile::tempdir().unwrap();
    let audit = dir.path().join("audit.log");
    let dot = dir.path().join("g.dot");
    let out = stbac(&[
        "--init",
        &scenario_file("remote_user", "init.conf"),
        "--trust",
        &scenario_file("remote_user", "trust.list"),
        "--pcopy",
        &scenario_file("remote_user", "pcopy.list"),
        "--audit",
        audit.to_str().unwrap(),
        "--dot",
        dot.to_str().unwrap(),
        "replay",
        &scenario_file("remote_user", "trace.csv"),
    ]);
    assert_eq!(out.status.code(), Some(1), "{}", text(&out.stderr));
    let log = fs::read_to_string(&audit).unwrap();
    assert_eq!(log, fs::read_to_string(scenario_file("remote_user", "expected_audit.log")).unwrap());
    assert_eq!(log.matches("DENY(").count(), 2);
    assert!(fs::read_to_string(&dot).unwrap().starts_with("digraph stbac {"));
}

#[test]
fn health_only_trace_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let init = write(dir.path(), "init.conf", "node /tmp dir 0\nnode /bin dir 0\nnode /bin/sh file 1\n");
    let trace = write(dir.path(), "t.csv", "1,1,fork,2\n2,2,execve,/bin/sh\n3,2,create,/tmp/x,0\n4,2,exit\n");
    let out = stbac(&["--init", &init, "replay", &trace]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(text(&out.stdout).lines().count(), 4);
}

#[test]
fn bad_pid_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let init = write(dir.path(), "init.conf", "node /tmp dir 0\n");
    let trace = write(dir.path(), "t.csv", "# header\n1,1,fork,2\n2,x,exit\n");
    let out = stbac(&["--init", &init, "replay", &trace]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("line 3"), "{}", text(&out.stderr));

    let trace = write(dir.path(), "u.csv", "1,1,fork,2\n2,7,exit\n");
    let out = stbac(&["--init", &init, "replay", &trace]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("line 2"), "{}", text(&out.stderr));

    let out = stbac(&["--init", "/nonexistent/init.conf", "replay", &trace]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn set_flag_recursive_marks_subtree() {
    let dir = tempfile::tempdir().unwrap();
    let init = write(
        dir.path(),
        "init.conf",
        "# boot tree\nnode /bin dir 0\nnode /bin/sh file 1\nnode /bin/ls file 1\nnode /bin/x dir 0\nnode /bin/x/y file 0\nnode /tmp dir 0\n",
    );
    let out = stbac(&["--init", &init, "--recursive", "set-flag", "/bin", "inte", "1"]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    let out = stbac(&["--init", &init, "--recursive", "get-flag", "/bin"]);
    let listing = text(&out.stdout);
    assert_eq!(listing.lines().count(), 5);
    assert!(listing.lines().all(|l| l.ends_with("{Finte}")), "{listing}");
    assert!(fs::read_to_string(&init).unwrap().starts_with("# boot tree\n"));

    let out = stbac(&["--init", &init, "get-flag", "/tmp"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(text(&out.stdout), "/tmp {}\n");

    let out = stbac(&["--init", &init, "set-flag", "/bin/sh", "inte", "0"]);
    assert_eq!(out.status.code(), Some(0));
    let out = stbac(&["--init", &init, "get-flag", "/bin/sh"]);
    assert_eq!(text(&out.stdout), "/bin/sh {}\n");

    let out = stbac(&["--init", &init, "set-flag", "/missing", "conf", "1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn get_flag_on_process_after_trace() {
    let out = stbac(&[
        "--init",
        &scenario_file("web_download", "init.conf"),
        "--recursive",
        "get-flag",
        "pid:2",
        "--after",
        &scenario_file("web_download", "trace.csv"),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    assert_eq!(text(&out.stdout), "pid:2 {}\npid:3 {Ft}\n");
}

#[test]
fn trust_list_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let file = write(dir.path(), "trust.list", "");
    let out = stbac(&["--trust", &file, "trust", "list"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());

    let entry = ["/usr/sbin/sshd", "*:22", "*:*", "tcp", "0..inf"];
    let mut args = vec!["--trust", file.as_str(), "trust", "add"];
    args.extend(entry);
    assert_eq!(stbac(&args).status.code(), Some(0));
    let body = fs::read_to_string(&file).unwrap();
    assert_eq!(body.lines().count(), 1);
    let parsed = TrustList::parse(&body).unwrap();
    let expected = stbac::guard::TrustEntry::from_fields(&entry).unwrap();
    assert_eq!(parsed.entries, [expected]);
    assert_eq!(stbac(&args).status.code(), Some(2), "duplicate add");

    let out = stbac(&["--trust", &file, "trust", "add", "/usr/sbin/sshd", "*:22"]);
    assert_eq!(out.status.code(), Some(2), "malformed entry");

    args[3] = "remove";
    assert_eq!(stbac(&args).status.code(), Some(0));
    assert_eq!(fs::read_to_string(&file).unwrap(), "");
}

#[test]
fn pcopy_add_list_remove() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("pcopy.list");
    let f = file.to_str().unwrap();
    assert_eq!(stbac(&["--pcopy", f, "pcopy", "add", "/etc/shadow", "/.stbac/shadow"]).status.code(), Some(0));
    let out = stbac(&["--pcopy", f, "pcopy", "list"]);
    assert_eq!(text(&out.stdout), "pcopy /etc/shadow /.stbac/shadow\n");
    assert_eq!(stbac(&["--pcopy", f, "pcopy", "add", "/etc/gshadow", "/tmp/g"]).status.code(), Some(2));
    assert_eq!(stbac(&["--pcopy", f, "pcopy", "remove", "/etc/shadow"]).status.code(), Some(0));
    assert_eq!(stbac(&["--pcopy", f, "pcopy", "remove", "/etc/shadow"]).status.code(), Some(2));
}

#[test]
fn check_passes_on_scenarios_and_catches_mutations() {
    for name in ["remote_user", "web_download", "remote_attack"] {
        let out = stbac(&["check", "--scenario", name]);
        let report = text(&out.stdout);
        assert_eq!(out.status.code(), Some(0), "{name}: {report}");
        assert_eq!(report.matches(" PASS").count(), 4, "{report}");
    }
    let out = stbac(&["check", "--scenario", "remote_attack", "--disable-rule", "TR_sock_proc"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stdout).contains("taint-closure FAIL"));
}

#[test]
fn check_empty_trace_is_vacuous() {
    let dir = tempfile::tempdir().unwrap();
    let init = write(dir.path(), "init.conf", "node /tmp dir 0\n");
    let trace = write(dir.path(), "t.csv", "");
    let out = stbac(&["--init", &init, "check", &trace]);
    assert_eq!(out.status.code(), Some(0));
    assert!(text(&out.stdout).starts_with("taint-closure PASS (0 events"));
}

#[test]
fn graph_is_deterministic() {
    let a = stbac(&["graph", "--scenario", "remote_attack"]);
    let b = stbac(&["graph", "--scenario", "remote_attack"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let dot = text(&a.stdout);
    assert!(dot.contains("\"pid:5\" -> \"pid:2\" [label=\"PR_inte@11\", style=dashed];"), "{dot}");
    assert!(dot.contains("\"/root/sh\" [shape=ellipse, taint=1, style=filled"), "{dot}");
}
