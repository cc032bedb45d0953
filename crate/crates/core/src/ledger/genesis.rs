use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::codec::Hash32;
use crate::crypto::PublicKey;
use crate::scms::RegionId;
use crate::sim::NodeId;
use crate::vehicle::{DetectionParams, VerifyContext};

/// Everything an auditor needs besides the chain bytes: the founding
/// participants, the PoW difficulty and the public verification context.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenesisConfig {
    pub difficulty_bits: u32,
    pub participants: Vec<(NodeId, PublicKey)>,
    pub verify: VerifyContext,
}

impl GenesisConfig {
    /// Block 0 links to this hash, binding the chain to its genesis.
    pub fn hash(&self) -> Hash32 {
        Hash32::of("genesis", self)
    }

    pub fn to_toml(&self) -> String {
        let file = GenesisFile {
            difficulty_bits: self.difficulty_bits,
            participant: self
                .participants
                .iter()
                .map(|(node, key)| ParticipantEntry {
                    node: node.to_string(),
                    key: key.to_hex(),
                })
                .collect(),
            pca: self
                .verify
                .pca_keys
                .iter()
                .map(|(region, key)| PcaEntry {
                    region: region.0,
                    key: key.to_hex(),
                })
                .collect(),
            detection: self.verify.detection,
        };
        toml::to_string(&file).expect("genesis serializes")
    }

    pub fn from_toml(text: &str) -> Result<GenesisConfig, GenesisError> {
        let file: GenesisFile = toml::from_str(text).map_err(|e| GenesisError(e.to_string()))?;
        let key = |s: &str| {
            PublicKey::from_hex(s).ok_or_else(|| GenesisError(format!("bad public key {s:?}")))
        };
        let mut participants = Vec::with_capacity(file.participant.len());
        for p in &file.participant {
            let node = p.node.parse().map_err(|e| GenesisError(format!("{e}")))?;
            participants.push((node, key(&p.key)?));
        }
        let mut pca_keys = BTreeMap::new();
        for p in &file.pca {
            pca_keys.insert(RegionId(p.region), key(&p.key)?);
        }
        Ok(GenesisConfig {
            difficulty_bits: file.difficulty_bits,
            participants,
            verify: VerifyContext {
                pca_keys,
                detection: file.detection,
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid genesis file: {0}")]
pub struct GenesisError(String);

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GenesisFile {
    difficulty_bits: u32,
    participant: Vec<ParticipantEntry>,
    pca: Vec<PcaEntry>,
    detection: DetectionParams,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParticipantEntry {
    node: String,
    key: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PcaEntry {
    region: u8,
    key: String,
}
