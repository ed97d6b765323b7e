// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::refmodel::Quirks;

/// Planted vulnerability analogs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BugId {
    V1MbeIgnored,
    V2SbeIgnored,
    V3DelegatedStiVisible,
    V4StvalOne,
    V5MbeSbeWritable,
}

impl BugId {
    pub const ALL: [BugId; 5] = [
        BugId::V1MbeIgnored,
        BugId::V2SbeIgnored,
        BugId::V3DelegatedStiVisible,
        BugId::V4StvalOne,
        BugId::V5MbeSbeWritable,
    ];

    pub fn short(self) -> &'static str {
        match self {
            BugId::V1MbeIgnored => "V1",
            BugId::V2SbeIgnored => "V2",
            BugId::V3DelegatedStiVisible => "V3",
            BugId::V4StvalOne => "V4",
            BugId::V5MbeSbeWritable => "V5",
        }
    }

    pub fn long(self) -> &'static str {
        match self {
            BugId::V1MbeIgnored => "V1_MBE_IGNORED",
            BugId::V2SbeIgnored => "V2_SBE_IGNORED",
            BugId::V3DelegatedStiVisible => "V3_DELEGATED_STI_VISIBLE",
            BugId::V4StvalOne => "V4_STVAL_ONE",
            BugId::V5MbeSbeWritable => "V5_MBE_SBE_WRITABLE",
        }
    }

    fn apply(self, q: &mut Quirks) {
        match self {
            BugId::V1MbeIgnored => q.mbe_ignored = true,
            BugId::V2SbeIgnored => q.sbe_ignored = true,
            BugId::V3DelegatedStiVisible => q.delegated_sti_visible = true,
            BugId::V4StvalOne => q.stval_one = true,
            BugId::V5MbeSbeWritable => q.endian_bits_in_sstatus = true,
        }
    }
}

impl fmt::Display for BugId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short())
    }
}

impl FromStr for BugId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let up = s.trim().to_ascii_uppercase();
        BugId::ALL
            .into_iter()
            .find(|b| b.short() == up || b.long() == up)
            .ok_or_else(|| format!("unknown bug id `{s}`"))
    }
}

impl Serialize for BugId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.short())
    }
}

impl<'de> Deserialize<'de> for BugId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Set of enabled bugs; empty means the device behaves exactly like the reference.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BugConfig {
    pub enabled: BTreeSet<BugId>,
}

impl BugConfig {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn all() -> Self {
        BugConfig { enabled: BugId::ALL.into_iter().collect() }
    }

    pub fn only(b: BugId) -> Self {
        BugConfig { enabled: [b].into_iter().collect() }
    }

    pub fn is_empty(&self) -> bool {
        self.enabled.is_empty()
    }

    /// Parses `V1,V3` or `all` or `none`.
    pub fn parse_list(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "all" => return Ok(Self::all()),
            "" | "none" => return Ok(Self::none()),
            _ => {}
        }
        let enabled = s.split(',').map(str::parse).collect::<Result<_, _>>()?;
        Ok(BugConfig { enabled })
    }

    pub fn quirks(&self) -> Quirks {
        let mut q = Quirks::NONE;
        for b in &self.enabled {
            b.apply(&mut q);
        }
        q
    }
}

impl fmt::Display for BugConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.enabled.iter().map(|b| b.short()).collect();
        f.write_str(&names.join(","))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parsing() {
        assert_eq!(BugConfig::parse_list("V1,v3").unwrap().enabled.len(), 2);
        assert_eq!(BugConfig::parse_list("all").unwrap(), BugConfig::all());
        assert!(BugConfig::parse_list("V9").is_err());
        assert_eq!("V4_STVAL_ONE".parse::<BugId>().unwrap(), BugId::V4StvalOne);
        assert!(BugConfig::none().quirks().is_none());
        let toml_cfg: std::collections::HashMap<String, BugConfig> = toml::from_str("bugs = [\"V1\", \"V5\"]").unwrap();
        assert_eq!(toml_cfg["bugs"].to_string(), "V1,V5");
        let json: BugConfig = serde_json::from_str("[\"V2\"]").unwrap();
        assert_eq!(json, BugConfig::only(BugId::V2SbeIgnored));
    }
}
