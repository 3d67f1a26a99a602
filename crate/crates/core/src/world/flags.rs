use std::fmt;
use std::str::FromStr;

use bitflags::bitflags;

bitflags! {
    /// The five labels carried by subjects and objects.
    #[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
    pub struct FlagSet: u8 {
        /// Suspiciously tainted.
        const TAINT = 0b0_0001;
        /// Confidentiality.
        const CONF = 0b0_0010;
        /// Integrity.
        const INTE = 0b0_0100;
        /// Availability. Only resource kinds carry it.
        const AVAI = 0b0_1000;
        /// Leak: the holder may relay secrets it has read.
        const LEAK = 0b1_0000;
    }
}

/// A single label, used where exactly one flag is addressed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Flag {
    Taint,
    Conf,
    Inte,
    Avai,
    Leak,
}

impl Flag {
    pub const ALL: [Flag; 5] = [Flag::Taint, Flag::Conf, Flag::Inte, Flag::Avai, Flag::Leak];

    pub fn bit(self) -> FlagSet {
        match self {
            Flag::Taint => FlagSet::TAINT,
            Flag::Conf => FlagSet::CONF,
            Flag::Inte => FlagSet::INTE,
            Flag::Avai => FlagSet::AVAI,
            Flag::Leak => FlagSet::LEAK,
        }
    }

    /// Short name used in config files, traces and DOT output.
    pub fn name(self) -> &'static str {
        match self {
            Flag::Taint => "t",
            Flag::Conf => "conf",
            Flag::Inte => "inte",
            Flag::Avai => "avai",
            Flag::Leak => "leak",
        }
    }
}

impl fmt::Display for Flag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "F{}", self.name())
    }
}

impl FromStr for Flag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.strip_prefix('F').unwrap_or(s);
        match s {
            "t" | "taint" => Ok(Flag::Taint),
            "conf" => Ok(Flag::Conf),
            "inte" => Ok(Flag::Inte),
            "avai" => Ok(Flag::Avai),
            "leak" => Ok(Flag::Leak),
            other => Err(format!("unknown flag `{other}`")),
        }
    }
}

impl FlagSet {
    pub fn has(self, flag: Flag) -> bool {
        self.contains(flag.bit())
    }

    pub fn with(self, flag: Flag) -> FlagSet {
        self | flag.bit()
    }

    pub fn without(self, flag: Flag) -> FlagSet {
        self - flag.bit()
    }

    pub fn flags(self) -> impl Iterator<Item = Flag> {
        Flag::ALL.into_iter().filter(move |f| self.has(*f))
    }

    pub fn is_tainted(self) -> bool {
        self.contains(FlagSet::TAINT)
    }

    /// Carries a confidentiality or integrity flag.
    pub fn is_vital(self) -> bool {
        self.intersects(FlagSet::CONF | FlagSet::INTE)
    }
}

impl fmt::Display for FlagSet {
    /// Renders as `{Ft,Fconf}`; the empty set is `{}`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, flag) in self.flags().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{flag}")?;
        }
        f.write_str("}")
    }
}
