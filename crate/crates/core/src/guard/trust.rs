//! Trustable-communication list.
//!
//! `trust <program> <local_ip|*>:<port|*> <remote_ip|*>:<port|*> <tcp|udp> <from>..<to|inf>`

use std::fmt;
use std::str::FromStr;

use crate::world::{validate_path, Endpoint, Proto, Tick};

use super::ListError;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct EndpointPattern {
    pub ip: Option<String>,
    pub port: Option<u16>,
}

impl EndpointPattern {
    pub const ANY: EndpointPattern = EndpointPattern { ip: None, port: None };

    pub fn matches(&self, ep: &Endpoint) -> bool {
        self.ip.as_ref().is_none_or(|ip| *ip == ep.ip) && self.port.is_none_or(|p| p == ep.port)
    }
}

impl fmt::Display for EndpointPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.ip {
            Some(ip) => f.write_str(ip)?,
            None => f.write_str("*")?,
        }
        match self.port {
            Some(p) => write!(f, ":{p}"),
            None => f.write_str(":*"),
        }
    }
}

impl FromStr for EndpointPattern {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (ip, port) = s
            .rsplit_once(':')
            .ok_or_else(|| format!("`{s}` is not <ip|*>:<port|*>"))?;
        let ip = match ip {
            "*" => None,
            "" => return Err(format!("`{s}` has an empty address")),
            ip => Some(ip.to_string()),
        };
        let port = match port {
            "*" => None,
            p => Some(p.parse().map_err(|_| format!("`{s}` has a bad port"))?),
        };
        Ok(EndpointPattern { ip, port })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TrustEntry {
    pub program: String,
    pub local: EndpointPattern,
    pub remote: EndpointPattern,
    pub proto: Proto,
    pub from: Tick,
    /// `None` is an open-ended span.
    pub to: Option<Tick>,
}

impl TrustEntry {
    pub fn matches(
        &self,
        program: &str,
        local: &Endpoint,
        remote: &Endpoint,
        proto: Proto,
        tick: Tick,
    ) -> bool {
        self.program == program
            && self.proto == proto
            && self.local.matches(local)
            && self.remote.matches(remote)
            && self.from <= tick
            && self.to.is_none_or(|to| tick <= to)
    }

    /// Parses the fields after the `trust` keyword.
    pub fn from_fields(fields: &[&str]) -> Result<TrustEntry, String> {
        let [program, local, remote, proto, span] = fields else {
            return Err(format!("trust entry needs 5 fields, got {}", fields.len()));
        };
        validate_path(program)?;
        let (from, to) = span
            .split_once("..")
            .ok_or_else(|| format!("span `{span}` is not <from>..<to|inf>"))?;
        let from: Tick = from.parse().map_err(|_| format!("bad span start `{from}`"))?;
        let to = match to {
            "inf" => None,
            t => Some(t.parse::<Tick>().map_err(|_| format!("bad span end `{t}`"))?),
        };
        if to.is_some_and(|to| from > to) {
            return Err(format!("span `{span}` ends before it starts"));
        }
        Ok(TrustEntry {
            program: program.to_string(),
            local: local.parse()?,
            remote: remote.parse()?,
            proto: proto.parse()?,
            from,
            to,
        })
    }
}

impl fmt::Display for TrustEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "trust {} {} {} {} {}..",
            self.program,
            self.local,
            self.remote,
            self.proto.name(),
            self.from
        )?;
        match self.to {
            Some(to) => write!(f, "{to}"),
            None => f.write_str("inf"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TrustList {
    pub entries: Vec<TrustEntry>,
}

impl TrustList {
    pub fn parse(text: &str) -> Result<TrustList, ListError> {
        let mut entries = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let words: Vec<&str> = body.split_whitespace().collect();
            if words[0] != "trust" {
                return Err(ListError::new(idx + 1, format!("expected `trust`, got `{}`", words[0])));
            }
            let entry = TrustEntry::from_fields(&words[1..]).map_err(|m| ListError::new(idx + 1, m))?;
            entries.push(entry);
        }
        Ok(TrustList { entries })
    }

    pub fn matches(
        &self,
        program: &str,
        local: &Endpoint,
        remote: &Endpoint,
        proto: Proto,
        tick: Tick,
    ) -> bool {
        match_trust(&self.entries, program, local, remote, proto, tick)
    }
}

/// True iff some entry matches every non-wildcard field and `tick` lies in its span.
pub fn match_trust(
    list: &[TrustEntry],
    program: &str,
    local: &Endpoint,
    remote: &Endpoint,
    proto: Proto,
    tick: Tick,
) -> bool {
    list.iter()
        .any(|e| e.matches(program, local, remote, proto, tick))
}
