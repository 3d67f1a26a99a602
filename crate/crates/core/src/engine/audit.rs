//! Audit records, one per event: `<4>{tick},{pid}:{exe},{object},{op},{param},{RESULT}`.

use std::fmt;
use std::str::FromStr;

use crate::rule::Rule;
use crate::world::{FlagChange, ProcessId, Tick};

use super::event::Op;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Outcome {
    Allow,
    AllowRedir(String),
    Deny(Rule),
}

impl Outcome {
    pub fn is_denied(&self) -> bool {
        matches!(self, Outcome::Deny(_))
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outcome::Allow => f.write_str("ALLOW"),
            Outcome::AllowRedir(path) => write!(f, "ALLOW_REDIR({path})"),
            Outcome::Deny(rule) => write!(f, "DENY({rule})"),
        }
    }
}

impl FromStr for Outcome {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "ALLOW" {
            return Ok(Outcome::Allow);
        }
        if let Some(path) = s.strip_prefix("ALLOW_REDIR(").and_then(|r| r.strip_suffix(')')) {
            return Ok(Outcome::AllowRedir(path.to_string()));
        }
        if let Some(rule) = s.strip_prefix("DENY(").and_then(|r| r.strip_suffix(')')) {
            return Ok(Outcome::Deny(rule.parse()?));
        }
        Err(format!("unknown result `{s}`"))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AuditRecord {
    pub tick: Tick,
    pub pid: ProcessId,
    /// Executable of the subject before the event; `-` if it never exec'd.
    pub exe: String,
    pub object: String,
    pub op: Op,
    pub param: String,
    pub outcome: Outcome,
    /// Effective label changes, in application order. Empty on denial.
    pub flag_changes: Vec<FlagChange>,
}

impl fmt::Display for AuditRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "<4>{},{}:{},{},{},{},{}",
            self.tick, self.pid.0, self.exe, self.object, self.op, self.param, self.outcome
        )
    }
}

/// The text fields of one audit line.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AuditLine {
    pub tick: Tick,
    pub pid: ProcessId,
    pub exe: String,
    pub object: String,
    pub op: Op,
    pub param: String,
    pub outcome: Outcome,
}

impl FromStr for AuditLine {
    type Err = String;

    fn from_str(line: &str) -> Result<Self, Self::Err> {
        let body = line.strip_prefix("<4>").ok_or("missing `<4>` prefix")?;
        let fields: Vec<&str> = body.splitn(6, ',').collect();
        let [tick, subject, object, op, param, result] = fields[..] else {
            return Err(format!("expected 6 fields in `{line}`"));
        };
        let (pid, exe) = subject
            .split_once(':')
            .ok_or_else(|| format!("subject `{subject}` is not pid:exe"))?;
        Ok(AuditLine {
            tick: tick.parse().map_err(|_| format!("bad tick `{tick}`"))?,
            pid: ProcessId(pid.parse().map_err(|_| format!("bad pid `{pid}`"))?),
            exe: exe.to_string(),
            object: object.to_string(),
            op: op.parse()?,
            param: param.to_string(),
            outcome: result.parse()?,
        })
    }
}

impl From<&AuditRecord> for AuditLine {
    fn from(r: &AuditRecord) -> AuditLine {
        AuditLine {
            tick: r.tick,
            pid: r.pid,
            exe: r.exe.clone(),
            object: r.object.clone(),
            op: r.op,
            param: r.param.clone(),
            outcome: r.outcome.clone(),
        }
    }
}

pub fn render_audit(records: &[AuditRecord]) -> String {
    records.iter().map(|r| format!("{r}\n")).collect()
}

/// Parses a rendered audit log, skipping blank lines.
pub fn parse_audit(text: &str) -> Result<Vec<AuditLine>, String> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| l.parse().map_err(|e| format!("audit line {}: {e}", i + 1)))
        .collect()
}
