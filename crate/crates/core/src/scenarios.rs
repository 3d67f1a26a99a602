//! The three attack walkthroughs shipped with the crate, compiled in.

use crate::engine::{Bundle, BundleError};

#[derive(Clone, Copy, Debug)]
pub struct Scenario {
    pub name: &'static str,
    pub summary: &'static str,
    pub init: &'static str,
    pub trust: &'static str,
    pub pcopy: &'static str,
    pub trace: &'static str,
    pub expected_audit: &'static str,
}

macro_rules! scenario {
    ($name:literal, $summary:literal) => {
        Scenario {
            name: $name,
            summary: $summary,
            init: include_str!(concat!("../scenarios/", $name, "/init.conf")),
            trust: include_str!(concat!("../scenarios/", $name, "/trust.list")),
            pcopy: include_str!(concat!("../scenarios/", $name, "/pcopy.list")),
            trace: include_str!(concat!("../scenarios/", $name, "/trace.csv")),
            expected_audit: include_str!(concat!("../scenarios/", $name, "/expected_audit.log")),
        }
    };
}

pub const SCENARIOS: [Scenario; 3] = [
    scenario!(
        "remote_user",
        "A telnet session tries to read a copied password file and change a new system command"
    ),
    scenario!(
        "web_download",
        "Programs fetched by a browser try to exhaust CPU time and memory"
    ),
    scenario!(
        "remote_attack",
        "A samba root shell tries to blind logging, steal secrets and install a rootkit"
    ),
];

pub fn find(name: &str) -> Option<&'static Scenario> {
    SCENARIOS.iter().find(|s| s.name == name)
}

impl Scenario {
    pub fn bundle(&self) -> Result<Bundle, BundleError> {
        Bundle::parse(self.init, self.trust, self.pcopy, self.trace)
    }
}
