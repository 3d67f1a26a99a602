//! Browser bindings. Every export takes and returns JSON text so the page
//! stays framework-free and the same functions run in native tests.

use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

use stbac::engine::{export_graph, replay_observed, Bundle};
use stbac::oracle;
use stbac::scenarios::{self, SCENARIOS};
use stbac::Rule;

#[derive(Debug, Default, Deserialize, Serialize)]
pub struct BundleText {
    pub init: String,
    #[serde(default)]
    pub trust: String,
    #[serde(default)]
    pub pcopy: String,
    pub trace: String,
}

impl BundleText {
    fn parse(&self) -> Result<Bundle, String> {
        Bundle::parse(&self.init, &self.trust, &self.pcopy, &self.trace).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Serialize)]
pub struct AuditRow {
    pub line: String,
    pub tick: u64,
    pub result: String,
    pub denied: bool,
    pub changes: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct ReplayView {
    pub audit: Vec<AuditRow>,
    pub denials: usize,
    pub dot: String,
}

#[derive(Debug, Serialize)]
pub struct CheckView {
    pub passed: bool,
    pub lines: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct Label {
    pub key: String,
    pub flags: String,
    pub tainted: bool,
}

#[derive(Debug, Serialize)]
pub struct Snapshot {
    pub step: usize,
    pub steps: usize,
    pub event: Option<String>,
    pub labels: Vec<Label>,
}

fn json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("plain data serializes")
}

fn bundle_of(text: &str) -> Result<Bundle, String> {
    serde_json::from_str::<BundleText>(text)
        .map_err(|e| format!("bad request: {e}"))?
        .parse()
}

pub fn scenario_list() -> String {
    let names: Vec<(&str, &str)> = SCENARIOS.iter().map(|s| (s.name, s.summary)).collect();
    json(&names)
}

pub fn scenario_bundle(name: &str) -> Result<String, String> {
    let s = scenarios::find(name).ok_or_else(|| format!("no scenario `{name}`"))?;
    Ok(json(&BundleText {
        init: s.init.into(),
        trust: s.trust.into(),
        pcopy: s.pcopy.into(),
        trace: s.trace.into(),
    }))
}

pub fn replay_bundle(request: &str) -> Result<String, String> {
    let replay = bundle_of(request)?.run().map_err(|e| e.to_string())?;
    let audit: Vec<AuditRow> = replay
        .world
        .audit
        .iter()
        .map(|r| AuditRow {
            line: r.to_string(),
            tick: r.tick,
            result: r.outcome.to_string(),
            denied: r.outcome.is_denied(),
            changes: r
                .flag_changes
                .iter()
                .map(|c| format!("{} {}{} by {}", c.label, if c.on { '+' } else { '-' }, c.flag, c.rule))
                .collect(),
        })
        .collect();
    Ok(json(&ReplayView {
        denials: audit.iter().filter(|r| r.denied).count(),
        dot: export_graph(&replay.graph),
        audit,
    }))
}

/// Runs the oracles; `disabled` is a comma-separated list of rule names to
/// switch off in the engine.
pub fn check_bundle(request: &str, disabled: &str) -> Result<String, String> {
    let bundle = bundle_of(request)?;
    let mut policy = bundle.policy.clone();
    for name in disabled.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        policy = policy.without(name.parse::<Rule>()?);
    }
    let report = oracle::check(&bundle, &policy).map_err(|e| e.to_string())?;
    let mut lines = vec![format!(
        "taint closure: {} divergent step(s) over {} events",
        report.divergences.len(),
        report.events
    )];
    for d in &report.divergences {
        lines.push(format!(
            "  tick {}: oracle-only {:?}, engine-only {:?}",
            d.tick, d.missing, d.extra
        ));
    }
    for n in 1..=3 {
        let state = if report.biba.holds(n) { "holds" } else { "violated" };
        lines.push(format!("low-water-mark condition {n}: {state}"));
        for v in report.biba.condition(n) {
            lines.push(format!("  tick {}: {}", v.tick, v.detail));
        }
    }
    lines.push(format!(
        "{} plain read(s) and {} non-executable write(s) outside the rules",
        report.biba.read_exceptions.len(),
        report.biba.write_exceptions.len()
    ));
    Ok(json(&CheckView {
        passed: report.passed(),
        lines,
    }))
}

/// Labels of every flagged entity after the first `step` events.
pub fn labels_at(request: &str, step: usize) -> Result<String, String> {
    let bundle = bundle_of(request)?;
    let steps = bundle.trace.len();
    let step = step.min(steps);
    let mut snap = bundle.boot().map_err(|e| e.to_string())?.label_snapshot();
    let mut seen = 0;
    let replay = replay_observed(bundle.boot().map_err(|e| e.to_string())?, &bundle.policy, &bundle.trace, |w| {
        seen += 1;
        if seen == step {
            snap = w.label_snapshot();
        }
    })
    .map_err(|e| e.to_string())?;
    let event = step.checked_sub(1).map(|i| replay.world.audit[i].to_string());
    let labels = snap
        .into_iter()
        .filter(|(_, f)| !f.is_empty())
        .map(|(key, f)| Label {
            key,
            flags: f.to_string(),
            tainted: f.is_tainted(),
        })
        .collect();
    Ok(json(&Snapshot {
        step,
        steps,
        event,
        labels,
    }))
}

fn js(r: Result<String, String>) -> Result<String, JsError> {
    r.map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = scenarioList)]
pub fn wasm_scenario_list() -> String {
    scenario_list()
}

#[wasm_bindgen(js_name = scenarioBundle)]
pub fn wasm_scenario_bundle(name: &str) -> Result<String, JsError> {
    js(scenario_bundle(name))
}

#[wasm_bindgen(js_name = replayBundle)]
pub fn wasm_replay_bundle(request: &str) -> Result<String, JsError> {
    js(replay_bundle(request))
}

#[wasm_bindgen(js_name = checkBundle)]
pub fn wasm_check_bundle(request: &str, disabled: &str) -> Result<String, JsError> {
    js(check_bundle(request, disabled))
}

#[wasm_bindgen(js_name = labelsAt)]
pub fn wasm_labels_at(request: &str, step: usize) -> Result<String, JsError> {
    js(labels_at(request, step))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    fn request(name: &str) -> String {
        scenario_bundle(name).unwrap()
    }

    #[test]
    fn replay_counts_denials() {
        let v: Value = serde_json::from_str(&replay_bundle(&request("remote_attack")).unwrap()).unwrap();
        assert_eq!(v["denials"], 8);
        assert!(v["dot"].as_str().unwrap().starts_with("digraph stbac {"));
    }

    #[test]
    fn check_and_mutation() {
        let v: Value = serde_json::from_str(&check_bundle(&request("web_download"), "").unwrap()).unwrap();
        assert_eq!(v["passed"], true);
        let v: Value = serde_json::from_str(&check_bundle(&request("web_download"), "TR_proc_exe").unwrap()).unwrap();
        assert_eq!(v["passed"], false);
        assert!(check_bundle(&request("web_download"), "nope").is_err());
    }

    #[test]
    fn labels_step_through() {
        let r = request("remote_user");
        let v: Value = serde_json::from_str(&labels_at(&r, 0).unwrap()).unwrap();
        assert!(v["event"].is_null());
        let v: Value = serde_json::from_str(&labels_at(&r, 14).unwrap()).unwrap();
        let tainted: Vec<&str> = v["labels"]
            .as_array()
            .unwrap()
            .iter()
            .filter(|l| l["tainted"] == true)
            .map(|l| l["key"].as_str().unwrap())
            .collect();
        assert_eq!(tainted, ["pid:5"]);
        let v: Value = serde_json::from_str(&labels_at(&r, 999).unwrap()).unwrap();
        assert_eq!(v["step"], 25);
    }

    #[test]
    fn bad_requests() {
        assert!(replay_bundle("{").is_err());
        assert!(replay_bundle(r#"{"init":"bogus","trace":""}"#).is_err());
        assert!(scenario_bundle("nope").is_err());
        let list: Vec<(String, String)> = serde_json::from_str(&scenario_list()).unwrap();
        assert_eq!(list.len(), 3);
    }
}
