//! Command-line front end.
//!
//! Exit codes: 0 success, 1 a replay produced a denial or a check failed,
//! 2 bad input (unreadable file, parse error, unknown entity).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::engine::{export_graph, Bundle, Trace};
use crate::guard::{PartialCopyMap, TrustEntry, TrustList};
use crate::oracle;
use crate::rule::Rule;
use crate::scenarios;
use crate::world::{parse_directive, Directive, Flag, FlagQuery, InitConfig, ProcessId, World};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DENIED: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "stbac", version, about = "Replay system-event traces under taint-based access control")]
pub struct Cli {
    #[command(flatten)]
    pub files: Files,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Default)]
pub struct Files {
    /// Boot configuration (also the label snapshot edited by set-flag).
    #[arg(long, global = true)]
    pub init: Option<PathBuf>,
    /// Trusted-communication list.
    #[arg(long, global = true)]
    pub trust: Option<PathBuf>,
    /// Partial-copy map.
    #[arg(long, global = true)]
    pub pcopy: Option<PathBuf>,
    /// Where to write the audit log (default: stdout).
    #[arg(long, global = true)]
    pub audit: Option<PathBuf>,
    /// Where to write the dependency graph.
    #[arg(long, global = true)]
    pub dot: Option<PathBuf>,
    /// Apply to a whole subtree or all descendant processes.
    #[arg(long, global = true)]
    pub recursive: bool,
}

#[derive(Args, Debug)]
pub struct Source {
    /// Event trace (`tick,pid,op,args` per line).
    pub trace: Option<PathBuf>,
    /// Use a bundled scenario instead of files.
    #[arg(long, conflicts_with = "trace")]
    pub scenario: Option<String>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Replay a trace and write its audit log.
    Replay(Source),
    /// Set or clear a label in the boot configuration.
    SetFlag {
        target: String,
        flag: Flag,
        #[arg(value_parser = parse_bit, action = clap::ArgAction::Set)]
        value: bool,
    },
    /// Print the labels of a path, or of a process after replaying a trace.
    GetFlag {
        target: String,
        /// Replay this trace first so processes can be queried.
        #[arg(long = "after")]
        after: Option<PathBuf>,
    },
    /// Edit or list the trusted-communication list.
    Trust {
        #[command(subcommand)]
        action: TrustAction,
    },
    /// Edit or list the partial-copy map.
    Pcopy {
        #[command(subcommand)]
        action: PcopyAction,
    },
    /// Replay a trace and write its dependency graph.
    Graph(Source),
    /// Compare the engine with the reference oracles.
    Check {
        #[command(flatten)]
        source: Source,
        /// Run the engine with this rule switched off.
        #[arg(long = "disable-rule")]
        disable: Vec<Rule>,
    },
    /// List the bundled scenarios.
    Scenarios,
}

#[derive(Subcommand, Debug)]
pub enum TrustAction {
    /// `<program> <local> <remote> <proto> <from..to|inf>`
    Add { fields: Vec<String> },
    List,
    Remove { fields: Vec<String> },
}

#[derive(Subcommand, Debug)]
pub enum PcopyAction {
    Add { shared: String, copy: String },
    List,
    Remove { shared: String },
}

fn parse_bit(s: &str) -> Result<bool, String> {
    match s {
        "0" | "off" => Ok(false),
        "1" | "on" => Ok(true),
        _ => Err(format!("expected 0 or 1, got `{s}`")),
    }
}

/// A failure with its exit code; the message goes to stderr.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

fn input(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_INPUT,
        message: message.into(),
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| input(format!("{}: {e}", path.display())))
}

fn read_opt(path: Option<&PathBuf>) -> Result<String, Failure> {
    path.map_or(Ok(String::new()), |p| read(p))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| input(format!("{}: {e}", path.display())))
}

fn required<'a>(path: Option<&'a PathBuf>, flag: &str) -> Result<&'a PathBuf, Failure> {
    path.ok_or_else(|| input(format!("--{flag} is required")))
}

fn load(files: &Files, source: &Source) -> Result<Bundle, Failure> {
    if let Some(name) = &source.scenario {
        let s = scenarios::find(name).ok_or_else(|| input(format!("no scenario named `{name}`")))?;
        return s.bundle().map_err(|e| input(e.to_string()));
    }
    let trace = source.trace.as_ref().ok_or_else(|| input("a trace file or --scenario is required"))?;
    Bundle::parse(
        &read(required(files.init.as_ref(), "init")?)?,
        &read_opt(files.trust.as_ref())?,
        &read_opt(files.pcopy.as_ref())?,
        &read(trace)?,
    )
    .map_err(|e| input(e.to_string()))
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let target: &mut dyn Write = if e.use_stderr() { err } else { out };
            let _ = write!(target, "{}", e.render());
            return code;
        }
    };
    match execute(&cli, out) {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(err, "stbac: {}", f.message);
            f.code
        }
    }
}

pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<i32, Failure> {
    let files = &cli.files;
    let io = |e: std::io::Error| input(e.to_string());
    match &cli.command {
        Command::Replay(source) => {
            let bundle = load(files, source)?;
            let replay = bundle.run().map_err(|e| input(e.to_string()))?;
            let text = replay.audit_text();
            match &files.audit {
                Some(path) => write(path, &text)?,
                None => out.write_all(text.as_bytes()).map_err(io)?,
            }
            if let Some(path) = &files.dot {
                write(path, &export_graph(&replay.graph))?;
            }
            Ok(if replay.denials().next().is_some() { EXIT_DENIED } else { EXIT_OK })
        }
        Command::Graph(source) => {
            let replay = load(files, source)?.run().map_err(|e| input(e.to_string()))?;
            let dot = export_graph(&replay.graph);
            match &files.dot {
                Some(path) => write(path, &dot)?,
                None => out.write_all(dot.as_bytes()).map_err(io)?,
            }
            if let Some(path) = &files.audit {
                write(path, &replay.audit_text())?;
            }
            Ok(EXIT_OK)
        }
        Command::SetFlag { target, flag, value } => {
            set_flag(required(files.init.as_ref(), "init")?, target, *flag, *value, files.recursive)?;
            Ok(EXIT_OK)
        }
        Command::GetFlag { target, after } => {
            for line in get_flag(files, target, after.as_deref())? {
                writeln!(out, "{line}").map_err(io)?;
            }
            Ok(EXIT_OK)
        }
        Command::Trust { action } => trust(required(files.trust.as_ref(), "trust")?, action, out),
        Command::Pcopy { action } => pcopy(required(files.pcopy.as_ref(), "pcopy")?, action, out),
        Command::Check { source, disable } => {
            let bundle = load(files, source)?;
            let policy = disable.iter().fold(bundle.policy.clone(), |p, r| p.without(*r));
            let report = oracle::check(&bundle, &policy).map_err(|e| input(e.to_string()))?;
            write_report(&report, out).map_err(io)?;
            Ok(if report.passed() { EXIT_OK } else { EXIT_DENIED })
        }
        Command::Scenarios => {
            for s in &scenarios::SCENARIOS {
                writeln!(out, "{:<14} {}", s.name, s.summary).map_err(io)?;
            }
            Ok(EXIT_OK)
        }
    }
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

fn write_report(report: &oracle::CheckReport, out: &mut dyn Write) -> std::io::Result<()> {
    writeln!(
        out,
        "taint-closure {} ({} events, {} divergent steps)",
        verdict(report.divergences.is_empty()),
        report.events,
        report.divergences.len()
    )?;
    for d in &report.divergences {
        writeln!(
            out,
            "  step {} tick {}: oracle-only {:?}, engine-only {:?}",
            d.step, d.tick, d.missing, d.extra
        )?;
    }
    let biba = &report.biba;
    for n in 1..=3u8 {
        let extra = match n {
            1 => format!(" ({} read exceptions)", biba.read_exceptions.len()),
            2 => format!(" ({} non-exec write exceptions)", biba.write_exceptions.len()),
            _ => String::new(),
        };
        writeln!(out, "biba-{n} {}{extra}", verdict(biba.holds(n)))?;
        for v in biba.condition(n) {
            writeln!(out, "  step {} tick {}: {}", v.step, v.tick, v.detail)?;
        }
    }
    Ok(())
}

/// Edits the label directives of `init` in place. Comments and the order of
/// untouched lines survive; new labels are appended.
fn set_flag(init: &Path, target: &str, flag: Flag, on: bool, recursive: bool) -> Result<(), Failure> {
    if !matches!(flag, Flag::Conf | Flag::Inte | Flag::Leak) {
        return Err(input(format!(
            "{flag} is not part of the boot configuration; use set_stbac_attr in a trace"
        )));
    }
    let text = read(init)?;
    let config = InitConfig::parse(&text).map_err(|e| input(e.to_string()))?;
    let world = World::boot(&config).map_err(|e| input(e.to_string()))?;
    if target.starts_with("pid:") {
        return Err(input("the boot configuration holds no processes; use set_stbac_attr in a trace"));
    }
    let root = world.resolve(target).map_err(|e| input(e.to_string()))?;
    let targets = if recursive {
        world.descendants(root).map_err(|e| input(e.to_string()))?
    } else {
        vec![root]
    };
    let paths: Vec<String> = targets.into_iter().map(|t| world.label(t)).collect();
    let is_target = |d: &Directive| matches!(d, Directive::Label { flag: f, path } if *f == flag && paths.contains(path));

    let mut lines: Vec<String> = Vec::new();
    let mut present = Vec::new();
    for raw in text.lines() {
        match parse_directive(raw) {
            Ok(Some(d)) if is_target(&d) => {
                if on {
                    if let Directive::Label { path, .. } = &d {
                        present.push(path.clone());
                    }
                    lines.push(raw.to_string());
                }
            }
            _ => lines.push(raw.to_string()),
        }
    }
    if on {
        for path in paths.iter().filter(|p| !present.contains(p)) {
            lines.push(Directive::Label { flag, path: path.clone() }.to_string());
        }
    }
    let mut updated = lines.join("\n");
    updated.push('\n');
    let check = InitConfig::parse(&updated).and_then(|c| World::boot(&c).map(|_| ()));
    check.map_err(|e| input(e.to_string()))?;
    write(init, &updated)
}

fn get_flag(files: &Files, target: &str, after: Option<&Path>) -> Result<Vec<String>, Failure> {
    let bundle = Bundle::parse(
        &read(required(files.init.as_ref(), "init")?)?,
        &read_opt(files.trust.as_ref())?,
        &read_opt(files.pcopy.as_ref())?,
        "",
    )
    .map_err(|e| input(e.to_string()))?;
    let world = match after {
        Some(path) => {
            let trace = Trace::parse(&read(path)?).map_err(|e| input(e.to_string()))?;
            let bundle = Bundle { trace, ..bundle };
            bundle.run().map_err(|e| input(e.to_string()))?.world
        }
        None => bundle.boot().map_err(|e| input(e.to_string()))?,
    };
    let root = world.resolve(target).map_err(|e| input(e.to_string()))?;
    let targets = if files.recursive {
        world.descendants(root).map_err(|e| input(e.to_string()))?
    } else {
        vec![root]
    };
    targets
        .into_iter()
        .map(|t| match world.get_flag(t, ProcessId(1)) {
            Ok(FlagQuery::Flags(flags)) => Ok(format!("{} {flags}", world.label(t))),
            Ok(FlagQuery::Denied(_)) => unreachable!("init is never tainted"),
            Err(e) => Err(input(e.to_string())),
        })
        .collect()
}

fn edit_list(path: &Path, keep: impl Fn(&str) -> bool, append: Option<String>) -> Result<usize, Failure> {
    let text = if path.exists() { read(path)? } else { String::new() };
    let mut removed = 0;
    let mut lines: Vec<&str> = Vec::new();
    for raw in text.lines() {
        if keep(raw) {
            lines.push(raw);
        } else {
            removed += 1;
        }
    }
    let mut updated: String = lines.iter().map(|l| format!("{l}\n")).collect();
    if let Some(line) = append {
        updated.push_str(&line);
        updated.push('\n');
    }
    write(path, &updated)?;
    Ok(removed)
}

fn trust(path: &Path, action: &TrustAction, out: &mut dyn Write) -> Result<i32, Failure> {
    let parse_entry = |fields: &[String]| {
        let words: Vec<&str> = fields.iter().map(String::as_str).collect();
        let words = words.strip_prefix(&["trust"]).unwrap_or(&words);
        TrustEntry::from_fields(words).map_err(input)
    };
    match action {
        TrustAction::List => {
            let list = TrustList::parse(&read(path)?).map_err(|e| input(e.to_string()))?;
            for e in &list.entries {
                writeln!(out, "{e}").map_err(|e| input(e.to_string()))?;
            }
        }
        TrustAction::Add { fields } => {
            let entry = parse_entry(fields)?;
            if path.exists() {
                let list = TrustList::parse(&read(path)?).map_err(|e| input(e.to_string()))?;
                if list.entries.contains(&entry) {
                    return Err(input(format!("`{entry}` is already listed")));
                }
            }
            edit_list(path, |_| true, Some(entry.to_string()))?;
        }
        TrustAction::Remove { fields } => {
            let entry = parse_entry(fields)?;
            let same = |raw: &str| TrustList::parse(raw).is_ok_and(|l| l.entries == [entry.clone()]);
            if edit_list(path, |raw| !same(raw), None)? == 0 {
                return Err(input(format!("`{entry}` is not listed")));
            }
        }
    }
    Ok(EXIT_OK)
}

fn pcopy(path: &Path, action: &PcopyAction, out: &mut dyn Write) -> Result<i32, Failure> {
    let current = || -> Result<PartialCopyMap, Failure> {
        let text = if path.exists() { read(path)? } else { String::new() };
        PartialCopyMap::parse(&text).map_err(|e| input(e.to_string()))
    };
    match action {
        PcopyAction::List => {
            let map = PartialCopyMap::parse(&read(path)?).map_err(|e| input(e.to_string()))?;
            out.write_all(map.to_text().as_bytes()).map_err(|e| input(e.to_string()))?;
        }
        PcopyAction::Add { shared, copy } => {
            current()?.insert(shared, copy).map_err(input)?;
            edit_list(path, |_| true, Some(format!("pcopy {shared} {copy}")))?;
        }
        PcopyAction::Remove { shared } => {
            current()?;
            let maps = |raw: &str| PartialCopyMap::parse(raw).is_ok_and(|m| m.iter().any(|(s, _)| s == shared));
            if edit_list(path, |raw| !maps(raw), None)? == 0 {
                return Err(input(format!("`{shared}` is not mapped")));
            }
        }
    }
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_str(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(std::iter::once("stbac").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn scenario_replay_exit_codes() {
        let (code, out, _) = run_str(&["replay", "--scenario", "remote_user"]);
        assert_eq!(code, EXIT_DENIED);
        assert_eq!(out, scenarios::find("remote_user").unwrap().expected_audit);
        let (code, _, err) = run_str(&["replay", "--scenario", "nope"]);
        assert_eq!(code, EXIT_INPUT);
        assert!(err.contains("nope"));
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run_str(&[]).0, EXIT_INPUT);
        assert_eq!(run_str(&["set-flag", "/x", "conf", "7"]).0, EXIT_INPUT);
        assert_eq!(run_str(&["--help"]).0, EXIT_OK);
    }

    #[test]
    fn check_reports_each_property() {
        let (code, out, _) = run_str(&["check", "--scenario", "remote_attack"]);
        assert_eq!(code, EXIT_OK, "{out}");
        for key in ["taint-closure PASS", "biba-1 PASS", "biba-2 PASS", "biba-3 PASS"] {
            assert!(out.contains(key), "{out}");
        }
        let (code, out, _) = run_str(&["check", "--scenario", "web_download", "--disable-rule", "TR_exe_proc"]);
        assert_eq!(code, EXIT_DENIED);
        assert!(out.contains("taint-closure FAIL"), "{out}");
    }
}
