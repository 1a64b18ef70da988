//! Pipeline configuration and its TOML file form.
//!
//! ```toml
//! rob_capacity   = 64          # per thread
//! rs_capacity    = 64          # shared
//! issue_width    = 4           # issue slots per cycle, dispatch per thread
//! ssc_scan_width = 4           # defaults to issue_width
//! policy         = "specwands" # fcfs | tdm | sc | specwands
//! mode           = "spectre"   # spectre | all
//! initial_owner  = 0           # Owner_TID of every port at reset
//! max_cycles     = 10000000
//! ports          = ["intalu", "intalu", "branch", "load", "intdiv"]
//! tdm.slice      = 12
//! sc.delayed     = "intdiv"    # comma separated op kinds
//! ```
//!
//! Each `ports` element lists the unit kinds behind one port, joined by `+`
//! (for example `"intalu+intdiv"`). Every key is optional.

use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::policy::{PolicyKind, DEFAULT_TDM_SLICE};
use crate::ssc::SpecMode;
use crate::workload::{OpKind, Tid};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PortSpec {
    pub kinds: Vec<OpKind>,
}

impl PortSpec {
    pub fn of(kinds: &[OpKind]) -> Self {
        PortSpec {
            kinds: kinds.to_vec(),
        }
    }

    pub fn label(&self) -> String {
        let names: Vec<&str> = self.kinds.iter().map(|k| k.long_name()).collect();
        names.join("+")
    }
}

pub fn default_ports() -> Vec<PortSpec> {
    vec![
        PortSpec::of(&[OpKind::IntAlu]),
        PortSpec::of(&[OpKind::IntAlu]),
        PortSpec::of(&[OpKind::Branch]),
        PortSpec::of(&[OpKind::Load]),
        PortSpec::of(&[OpKind::IntDiv]),
    ]
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PipelineConfig {
    pub rob_capacity: usize,
    pub rs_capacity: usize,
    pub issue_width: usize,
    pub ports: Vec<PortSpec>,
    pub ssc_scan_width: usize,
    pub policy: PolicyKind,
    /// Speculation definition used by the SSC. A SpecWands policy carries
    /// its own mode, which takes precedence.
    pub mode: SpecMode,
    pub initial_owner: Tid,
    pub max_cycles: u64,
    pub record_events: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            rob_capacity: 64,
            rs_capacity: 64,
            issue_width: 4,
            ports: default_ports(),
            ssc_scan_width: 4,
            policy: PolicyKind::Fcfs,
            mode: SpecMode::Spectre,
            initial_owner: 0,
            max_cycles: 10_000_000,
            record_events: false,
        }
    }
}

impl PipelineConfig {
    pub fn with_policy(policy: PolicyKind) -> Self {
        let mut cfg = PipelineConfig::default();
        cfg.set_policy(policy);
        cfg
    }

    pub fn set_policy(&mut self, policy: PolicyKind) {
        if let PolicyKind::SpecWands { mode } = policy {
            self.mode = mode;
        }
        self.policy = policy;
    }

    pub fn ssc_mode(&self) -> SpecMode {
        match self.policy {
            PolicyKind::SpecWands { mode } => mode,
            _ => self.mode,
        }
    }

    pub fn check(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.issue_width == 0 {
            return bad("issue_width must be >= 1");
        }
        if self.ssc_scan_width == 0 {
            return bad("ssc_scan_width must be >= 1");
        }
        if self.rob_capacity == 0 || self.rs_capacity == 0 {
            return bad("rob_capacity and rs_capacity must be >= 1");
        }
        if self.initial_owner > 1 {
            return bad("initial_owner must be 0 or 1");
        }
        if let PolicyKind::Tdm { slice_cycles: 0 } = self.policy {
            return bad("tdm.slice must be >= 1");
        }
        for k in [OpKind::IntAlu, OpKind::IntDiv, OpKind::Load, OpKind::Branch] {
            if !self.ports.iter().any(|p| p.kinds.contains(&k)) {
                return Err(ConfigError::Invalid(format!(
                    "no port serves `{}`",
                    k.long_name()
                )));
            }
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        raw.into_config()
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
        PipelineConfig::from_toml(&text)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("cannot read {path}: {msg}")]
    Io { path: String, msg: String },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    rob_capacity: Option<usize>,
    rs_capacity: Option<usize>,
    issue_width: Option<usize>,
    ssc_scan_width: Option<usize>,
    policy: Option<String>,
    mode: Option<String>,
    initial_owner: Option<u8>,
    max_cycles: Option<u64>,
    ports: Option<Vec<String>>,
    tdm: Option<RawTdm>,
    sc: Option<RawSc>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTdm {
    slice: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSc {
    delayed: String,
}

pub fn parse_mode(s: &str) -> Result<SpecMode, ConfigError> {
    match s {
        "spectre" => Ok(SpecMode::Spectre),
        "all" => Ok(SpecMode::All),
        other => Err(ConfigError::Invalid(format!(
            "mode must be spectre|all, found `{other}`"
        ))),
    }
}

pub fn parse_kinds(list: &str) -> Result<Vec<OpKind>, ConfigError> {
    list.split(['+', ','])
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            OpKind::from_mnemonic(s)
                .ok_or_else(|| ConfigError::Invalid(format!("unknown op kind `{s}`")))
        })
        .collect()
}

/// Builds a policy from its short name plus optional parameters.
pub fn parse_policy(
    name: &str,
    mode: SpecMode,
    tdm_slice: Option<u64>,
    sc_delayed: Option<Vec<OpKind>>,
) -> Result<PolicyKind, ConfigError> {
    Ok(match name {
        "fcfs" => PolicyKind::Fcfs,
        "tdm" => PolicyKind::Tdm {
            slice_cycles: tdm_slice.unwrap_or(DEFAULT_TDM_SLICE),
        },
        "sc" => PolicyKind::SpecCompress {
            delayed_classes: sc_delayed.unwrap_or_else(|| vec![OpKind::IntDiv]),
        },
        "specwands" => PolicyKind::SpecWands { mode },
        "specwands-spectre" => PolicyKind::SpecWands {
            mode: SpecMode::Spectre,
        },
        "specwands-all" => PolicyKind::SpecWands {
            mode: SpecMode::All,
        },
        other => {
            return Err(ConfigError::Invalid(format!(
                "policy must be fcfs|tdm|sc|specwands, found `{other}`"
            )))
        }
    })
}

impl RawConfig {
    fn into_config(self) -> Result<PipelineConfig, ConfigError> {
        let mut cfg = PipelineConfig::default();
        if let Some(v) = self.rob_capacity {
            cfg.rob_capacity = v;
        }
        if let Some(v) = self.rs_capacity {
            cfg.rs_capacity = v;
        }
        if let Some(v) = self.issue_width {
            cfg.issue_width = v;
            cfg.ssc_scan_width = v;
        }
        if let Some(v) = self.ssc_scan_width {
            cfg.ssc_scan_width = v;
        }
        if let Some(v) = self.initial_owner {
            cfg.initial_owner = v;
        }
        if let Some(v) = self.max_cycles {
            cfg.max_cycles = v;
        }
        if let Some(ports) = self.ports {
            cfg.ports = ports
                .iter()
                .map(|p| parse_kinds(p).map(|kinds| PortSpec { kinds }))
                .collect::<Result<_, _>>()?;
        }
        let mode = match self.mode {
            Some(m) => parse_mode(&m)?,
            None => SpecMode::Spectre,
        };
        cfg.mode = mode;
        let delayed = self.sc.map(|s| parse_kinds(&s.delayed)).transpose()?;
        let policy = parse_policy(
            self.policy.as_deref().unwrap_or("fcfs"),
            mode,
            self.tdm.map(|t| t.slice),
            delayed,
        )?;
        cfg.set_policy(policy);
        cfg.check()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_file() {
        let cfg = PipelineConfig::from_toml(
            "issue_width = 2\npolicy = \"sc\"\nmode = \"all\"\nports = [\"intalu+intdiv\", \"branch\", \"load\"]\nsc.delayed = \"intdiv,load\"\n",
        )
        .unwrap();
        assert_eq!(cfg.issue_width, 2);
        assert_eq!(cfg.ssc_scan_width, 2);
        assert_eq!(cfg.mode, SpecMode::All);
        assert_eq!(
            cfg.policy,
            PolicyKind::SpecCompress {
                delayed_classes: vec![OpKind::IntDiv, OpKind::Load]
            }
        );
        assert_eq!(cfg.ports[0].kinds, vec![OpKind::IntAlu, OpKind::IntDiv]);
    }

    #[test]
    fn tdm_and_specwands() {
        let cfg = PipelineConfig::from_toml("policy = \"tdm\"\ntdm.slice = 7\n").unwrap();
        assert_eq!(cfg.policy, PolicyKind::Tdm { slice_cycles: 7 });
        let cfg = PipelineConfig::from_toml("policy = \"specwands\"\nmode = \"all\"\n").unwrap();
        assert_eq!(cfg.ssc_mode(), SpecMode::All);
        assert_eq!(
            PipelineConfig::from_toml("").unwrap(),
            PipelineConfig::default()
        );
    }

    #[test]
    fn rejects_unknown_keys_and_values() {
        assert!(matches!(
            PipelineConfig::from_toml("bogus = 1"),
            Err(ConfigError::Parse(_))
        ));
        assert!(PipelineConfig::from_toml("policy = \"lru\"").is_err());
        assert!(PipelineConfig::from_toml("mode = \"some\"").is_err());
        assert!(PipelineConfig::from_toml("issue_width = 0").is_err());
        assert!(PipelineConfig::from_toml("ports = [\"intalu\"]").is_err());
    }
}
