//! Deterministic discrete-event engine: simulated clock, event queue, seeded
//! random streams, node identities, and unit-disc broadcast radio.

mod clock;
mod event_log;
mod queue;
mod radio;
mod rng;

pub use clock::{seconds, SimClock, Tick, TICKS_PER_SECOND, TICK_SECONDS};
pub use event_log::EventLog;
pub use queue::{EventQueue, PastTickError};
pub use radio::{broadcast, NoPositionError, Position, RadioModel, RadioRangeError};
pub use rng::RngStreams;

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NodeKind {
    Vehicle,
    Rsu,
    Ma,
}

/// Ground-truth identity of a simulated node. Stable for the whole run and
/// never exposed to other nodes' protocol logic, which only see pseudonyms
/// (vehicles) or introduced public identities (RSUs and MAs).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId {
    pub kind: NodeKind,
    pub index: u32,
}

impl NodeId {
    pub const fn vehicle(index: u32) -> NodeId {
        NodeId { kind: NodeKind::Vehicle, index }
    }

    pub const fn rsu(index: u32) -> NodeId {
        NodeId { kind: NodeKind::Rsu, index }
    }

    pub const fn ma(index: u32) -> NodeId {
        NodeId { kind: NodeKind::Ma, index }
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let prefix = match self.kind {
            NodeKind::Vehicle => "veh",
            NodeKind::Rsu => "rsu",
            NodeKind::Ma => "ma",
        };
        write!(f, "{prefix}{}", self.index)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid node id {0:?}; expected vehN, rsuN or maN")]
pub struct ParseNodeIdError(String);

impl std::str::FromStr for NodeId {
    type Err = ParseNodeIdError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseNodeIdError(s.to_string());
        let (kind, digits) = if let Some(rest) = s.strip_prefix("veh") {
            (NodeKind::Vehicle, rest)
        } else if let Some(rest) = s.strip_prefix("rsu") {
            (NodeKind::Rsu, rest)
        } else if let Some(rest) = s.strip_prefix("ma") {
            (NodeKind::Ma, rest)
        } else {
            return Err(err());
        };
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(err());
        }
        let index = digits.parse().map_err(|_| err())?;
        Ok(NodeId { kind, index })
    }
}
