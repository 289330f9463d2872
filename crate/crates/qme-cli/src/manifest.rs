//! Run manifest: the resolved config echo, code version, seed, wall time,
//! and a digest of every file the run wrote. Rerunning with the same
//! config and seed reproduces the same digests; wall time is the one field
//! that may differ.

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::Config;
use crate::csvout::NamedOutput;

#[derive(Serialize)]
pub struct OutputEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Serialize)]
pub struct RunManifest<'a> {
    pub scenario: &'a str,
    pub code_version: &'a str,
    pub mode: &'a str,
    pub seed: u64,
    pub trajectories: u64,
    pub wall_time_s: f64,
    pub config: &'a Config,
    pub outputs: Vec<OutputEntry>,
}

pub fn sha256_hex(data: &[u8]) -> String {
    let digest = Sha256::digest(data);
    let mut hex = String::with_capacity(64);
    for b in digest {
        hex.push_str(&format!("{b:02x}"));
    }
    hex
}

pub fn digest_outputs(outputs: &[NamedOutput]) -> Vec<OutputEntry> {
    outputs
        .iter()
        .map(|o| OutputEntry {
            path: o.name.clone(),
            sha256: sha256_hex(o.data.as_bytes()),
            bytes: o.data.len() as u64,
        })
        .collect()
}
