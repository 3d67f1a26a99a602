//! Boot configuration: the initial tree, its labels and the resource marks.
//!
//! One directive per line, `#` starts a comment:
//!
//! ```text
//! node /etc dir 0
//! node /etc/passwd file 0
//! conf /etc/passwd
//! inte /etc
//! leak /bin/cp
//! hwm cpu_ticks 5 90
//! cap cpu_ticks 1000
//! ```

use std::fmt;

use thiserror::Error;

use super::entity::{validate_path, NodeKind, ResourceKind};
use super::flags::Flag;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("config line {line}: {message}")]
pub struct ConfigError {
    pub line: usize,
    pub message: String,
}

impl ConfigError {
    pub(crate) fn new(line: usize, message: impl Into<String>) -> Self {
        ConfigError {
            line,
            message: message.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Directive {
    Node {
        path: String,
        kind: NodeKind,
        exec: bool,
    },
    /// `conf`, `inte` or `leak` on a path.
    Label { flag: Flag, path: String },
    Hwm {
        kind: ResourceKind,
        per_tainted: u64,
        sys_percent: u8,
    },
    Cap { kind: ResourceKind, total: u64 },
}

impl fmt::Display for Directive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Directive::Node { path, kind, exec } => {
                write!(f, "node {path} {} {}", kind.name(), u8::from(*exec))
            }
            Directive::Label { flag, path } => write!(f, "{} {path}", flag.name()),
            Directive::Hwm {
                kind,
                per_tainted,
                sys_percent,
            } => write!(f, "hwm {kind} {per_tainted} {sys_percent}"),
            Directive::Cap { kind, total } => write!(f, "cap {kind} {total}"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct InitConfig {
    /// Directives with their 1-based source line.
    pub directives: Vec<(usize, Directive)>,
}

impl InitConfig {
    pub fn parse(text: &str) -> Result<InitConfig, ConfigError> {
        let mut directives = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            if let Some(d) = parse_directive(raw).map_err(|m| ConfigError::new(line, m))? {
                directives.push((line, d));
            }
        }
        Ok(InitConfig { directives })
    }

    pub fn push(&mut self, directive: Directive) {
        let line = self.directives.last().map_or(1, |(l, _)| l + 1);
        self.directives.push((line, directive));
    }

    /// Node directives in file order.
    pub fn nodes(&self) -> impl Iterator<Item = (&str, NodeKind, bool)> {
        self.directives.iter().filter_map(|(_, d)| match d {
            Directive::Node { path, kind, exec } => Some((path.as_str(), *kind, *exec)),
            _ => None,
        })
    }
}

/// Parses one line. `Ok(None)` for blank lines and comments.
pub fn parse_directive(raw: &str) -> Result<Option<Directive>, String> {
    let body = raw.split('#').next().unwrap_or("").trim();
    if body.is_empty() {
        return Ok(None);
    }
    let words: Vec<&str> = body.split_whitespace().collect();
    let arity = |n: usize| {
        if words.len() == n {
            Ok(())
        } else {
            Err(format!("`{}` takes {} argument(s)", words[0], n - 1))
        }
    };
    let directive = match words[0] {
        "node" => {
            arity(4)?;
            validate_path(words[1])?;
            let kind: NodeKind = words[2].parse()?;
            let exec = match words[3] {
                "0" => false,
                "1" => true,
                other => return Err(format!("exec bit must be 0 or 1, got `{other}`")),
            };
            Directive::Node {
                path: words[1].to_string(),
                kind,
                exec,
            }
        }
        "conf" | "inte" | "leak" => {
            arity(2)?;
            validate_path(words[1])?;
            Directive::Label {
                flag: words[0].parse()?,
                path: words[1].to_string(),
            }
        }
        "hwm" => {
            arity(4)?;
            let kind = words[1].parse()?;
            let per_tainted = words[2]
                .parse()
                .map_err(|_| format!("bad per-process mark `{}`", words[2]))?;
            let sys_percent: u8 = words[3]
                .parse()
                .map_err(|_| format!("bad system percentage `{}`", words[3]))?;
            if !(1..=100).contains(&sys_percent) {
                return Err(format!("system percentage {sys_percent} outside (0,100]"));
            }
            Directive::Hwm {
                kind,
                per_tainted,
                sys_percent,
            }
        }
        "cap" => {
            arity(3)?;
            Directive::Cap {
                kind: words[1].parse()?,
                total: words[2]
                    .parse()
                    .map_err(|_| format!("bad capacity `{}`", words[2]))?,
            }
        }
        other => return Err(format!("unknown directive `{other}`")),
    };
    Ok(Some(directive))
}
