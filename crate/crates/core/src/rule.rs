use std::fmt;
use std::str::FromStr;

/// Every rule that can mutate a label or deny an access.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Rule {
    TrSockProc,
    TrProcProc,
    TrProcExe,
    TrExeProc,
    VrDirDir,
    VrProcProc,
    VrProcFile,
    VrFileProc,
    PrConf,
    PrInte,
    PrAvai,
    /// Explicit administrator label change.
    Admin,
}

impl Rule {
    pub const TAINT: [Rule; 4] = [Rule::TrSockProc, Rule::TrProcProc, Rule::TrProcExe, Rule::TrExeProc];
    pub const VITAL: [Rule; 4] = [Rule::VrDirDir, Rule::VrProcProc, Rule::VrProcFile, Rule::VrFileProc];
    pub const PROTECTION: [Rule; 3] = [Rule::PrConf, Rule::PrInte, Rule::PrAvai];

    pub fn name(self) -> &'static str {
        match self {
            Rule::TrSockProc => "TR_sock_proc",
            Rule::TrProcProc => "TR_proc_proc",
            Rule::TrProcExe => "TR_proc_exe",
            Rule::TrExeProc => "TR_exe_proc",
            Rule::VrDirDir => "VR_dir_dir",
            Rule::VrProcProc => "VR_proc_proc",
            Rule::VrProcFile => "VR_proc_file",
            Rule::VrFileProc => "VR_file_proc",
            Rule::PrConf => "PR_conf",
            Rule::PrInte => "PR_inte",
            Rule::PrAvai => "PR_avai",
            Rule::Admin => "admin",
        }
    }

    pub fn is_taint(self) -> bool {
        Rule::TAINT.contains(&self)
    }

    pub fn is_protection(self) -> bool {
        Rule::PROTECTION.contains(&self)
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Rule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Rule::TAINT
            .into_iter()
            .chain(Rule::VITAL)
            .chain(Rule::PROTECTION)
            .chain([Rule::Admin])
            .find(|r| r.name().eq_ignore_ascii_case(s) || r.name().replace('_', "-").eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown rule `{s}`"))
    }
}
