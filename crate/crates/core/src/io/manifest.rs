use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng::SEED_RULE;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Identity of one CLI run. Everything except the wall clock is a function
/// of the resolved configuration and the master seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub master_seed: u64,
    pub seed_rule: String,
    /// SHA-256 of the resolved configuration text.
    pub config_hash: String,
    /// `seedbank-lab/<version>+<first 12 hex digits of the config hash>`.
    pub provenance: String,
    /// Seconds since the Unix epoch at the start of the run.
    pub wall_clock: f64,
    /// SHA-256 over all other fields.
    pub manifest_hash: String,
}

#[derive(Serialize)]
struct Hashed<'a> {
    command: &'a str,
    version: &'a str,
    master_seed: u64,
    seed_rule: &'a str,
    config_hash: &'a str,
    provenance: &'a str,
}

impl RunManifest {
    pub fn new(command: &str, master_seed: u64, resolved_config: &str) -> Self {
        let wall_clock = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
        Self::at(command, master_seed, resolved_config, wall_clock)
    }

    pub fn at(command: &str, master_seed: u64, resolved_config: &str, wall_clock: f64) -> Self {
        let config_hash = sha256_hex(resolved_config.as_bytes());
        let provenance = format!("seedbank-lab/{VERSION}+{}", &config_hash[..12]);
        let mut m = RunManifest {
            command: command.to_string(),
            version: VERSION.to_string(),
            master_seed,
            seed_rule: SEED_RULE.to_string(),
            config_hash,
            provenance,
            wall_clock,
            manifest_hash: String::new(),
        };
        m.manifest_hash = m.compute_hash();
        m
    }

    pub fn compute_hash(&self) -> String {
        let h = Hashed {
            command: &self.command,
            version: &self.version,
            master_seed: self.master_seed,
            seed_rule: &self.seed_rule,
            config_hash: &self.config_hash,
            provenance: &self.provenance,
        };
        sha256_hex(serde_json::to_string(&h).expect("plain struct serialises").as_bytes())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("plain struct serialises");
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}
