//! Dependency graph: cause -> effect edges for every applied taint or vital
//! mutation, plus a dashed marker for every denial.

use std::collections::BTreeMap;
use std::fmt::Write;

use crate::rule::Rule;
use crate::world::{Flag, FlagSet, ProcessId, Tick, World};

use super::audit::{AuditRecord, Outcome};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeShape {
    Process,
    File,
    Socket,
    /// Denials against resources, modules and other non-entities.
    Pseudo,
}

impl NodeShape {
    fn of(key: &str) -> NodeShape {
        if key.starts_with("pid:") {
            NodeShape::Process
        } else if key.starts_with("sock:") {
            NodeShape::Socket
        } else if key.starts_with('/') {
            NodeShape::File
        } else {
            NodeShape::Pseudo
        }
    }

    fn dot(self) -> &'static str {
        match self {
            NodeShape::Process => "box",
            NodeShape::File => "ellipse",
            NodeShape::Socket => "diamond",
            NodeShape::Pseudo => "plaintext",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GraphNode {
    pub key: String,
    pub shape: NodeShape,
    pub label: String,
    /// Labels after the last recorded change.
    pub flags: FlagSet,
    /// `+Fconf@7`, `-Fleak@9`, ...
    pub history: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GraphEdge {
    pub cause: String,
    pub effect: String,
    pub rule: Rule,
    pub tick: Tick,
    pub denial: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DepGraph {
    pub nodes: BTreeMap<String, GraphNode>,
    pub edges: Vec<GraphEdge>,
}

impl DepGraph {
    /// Builds the graph of `audit`; `initial` holds labels before the first
    /// record and `world` supplies process executables.
    pub fn build(initial: &BTreeMap<String, FlagSet>, audit: &[AuditRecord], world: &World) -> DepGraph {
        let mut g = DepGraph::default();
        for rec in audit {
            if let Outcome::Deny(rule) = rec.outcome {
                let object = if rec.object == "-" {
                    rec.op.name().to_string()
                } else {
                    rec.object.clone()
                };
                g.edge(rec.pid.to_string(), object, rule, rec.tick, true, initial);
                continue;
            }
            for change in &rec.flag_changes {
                let effect = change.label.clone();
                g.touch(&effect, initial);
                let node = g.nodes.get_mut(&effect).expect("touched");
                node.flags = if change.on {
                    node.flags.with(change.flag)
                } else {
                    node.flags.without(change.flag)
                };
                let sign = if change.on { '+' } else { '-' };
                node.history.push(format!("{sign}{}@{}", change.flag, rec.tick));
                if change.rule == Rule::Admin {
                    continue;
                }
                if let Some(cause) = &change.cause_label {
                    g.edge(cause.clone(), effect, change.rule, rec.tick, false, initial);
                }
            }
        }
        for node in g.nodes.values_mut() {
            if let Some(pid) = node.key.strip_prefix("pid:").and_then(|n| n.parse().ok()) {
                if let Some(exe) = world.process(ProcessId(pid)).and_then(|p| p.exe_path.as_deref()) {
                    node.label = format!("{} {exe}", node.key);
                }
            }
        }
        g
    }

    fn touch(&mut self, key: &str, initial: &BTreeMap<String, FlagSet>) {
        if !self.nodes.contains_key(key) {
            self.nodes.insert(
                key.to_string(),
                GraphNode {
                    key: key.to_string(),
                    shape: NodeShape::of(key),
                    label: key.to_string(),
                    flags: initial.get(key).copied().unwrap_or_default(),
                    history: Vec::new(),
                },
            );
        }
    }

    fn edge(
        &mut self,
        cause: String,
        effect: String,
        rule: Rule,
        tick: Tick,
        denial: bool,
        initial: &BTreeMap<String, FlagSet>,
    ) {
        self.touch(&cause, initial);
        self.touch(&effect, initial);
        let e = GraphEdge {
            cause,
            effect,
            rule,
            tick,
            denial,
        };
        // one mutation changing several bits is still one edge
        if self.edges.last() != Some(&e) {
            self.edges.push(e);
        }
    }

    pub fn has_edge(&self, cause: &str, effect: &str, rule: Rule) -> bool {
        self.edges
            .iter()
            .any(|e| e.cause == cause && e.effect == effect && e.rule == rule)
    }
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

/// Graphviz text; byte-identical for identical graphs.
pub fn export_graph(g: &DepGraph) -> String {
    let mut out = String::from("digraph stbac {\n");
    for node in g.nodes.values() {
        let mut attrs = vec![format!("shape={}", node.shape.dot())];
        if node.label != node.key {
            attrs.push(format!("label={}", quote(&node.label)));
        }
        if node.flags.has(Flag::Taint) {
            attrs.push("taint=1".to_string());
            attrs.push("style=filled".to_string());
        }
        let vital: Vec<&str> = [Flag::Conf, Flag::Inte]
            .into_iter()
            .filter(|f| node.flags.has(*f))
            .map(Flag::name)
            .collect();
        if !vital.is_empty() {
            attrs.push(format!("vital={}", quote(&vital.join("|"))));
        }
        if node.flags.has(Flag::Leak) {
            attrs.push("leak=1".to_string());
        }
        if !node.history.is_empty() {
            attrs.push(format!("history={}", quote(&node.history.join(" "))));
        }
        let _ = writeln!(out, "  {} [{}];", quote(&node.key), attrs.join(", "));
    }
    for e in &g.edges {
        let label = quote(&format!("{}@{}", e.rule, e.tick));
        let style = if e.denial { ", style=dashed" } else { "" };
        let _ = writeln!(out, "  {} -> {} [label={label}{style}];", quote(&e.cause), quote(&e.effect));
    }
    out.push_str("}\n");
    out
}
