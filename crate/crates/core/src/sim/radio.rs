use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn new(x: f64, y: f64) -> Self {
        Position { x, y }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("radio range {0} m outside 300..=1000 m")]
pub struct RadioRangeError(pub f64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("sender {0} has no position")]
pub struct NoPositionError(pub NodeId);

/// Unit-disc radio: every node within `range_m` (inclusive) hears a
/// broadcast, nobody else does.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadioModel {
    pub range_m: f64,
}

impl Default for RadioModel {
    fn default() -> Self {
        RadioModel { range_m: 500.0 }
    }
}

impl RadioModel {
    pub const MIN_RANGE_M: f64 = 300.0;
    pub const MAX_RANGE_M: f64 = 1000.0;

    pub fn new(range_m: f64) -> Result<Self, RadioRangeError> {
        if (Self::MIN_RANGE_M..=Self::MAX_RANGE_M).contains(&range_m) {
            Ok(RadioModel { range_m })
        } else {
            Err(RadioRangeError(range_m))
        }
    }

    /// Any positive finite range, bypassing the 802.11p bounds.
    pub fn overridden(range_m: f64) -> Result<Self, RadioRangeError> {
        if range_m.is_finite() && range_m > 0.0 {
            Ok(RadioModel { range_m })
        } else {
            Err(RadioRangeError(range_m))
        }
    }

    pub fn in_range(&self, a: &Position, b: &Position) -> bool {
        a.distance(b) <= self.range_m
    }
}

/// Receivers of a broadcast from `sender`, in `NodeId` order. Delivery
/// happens at the next tick; scheduling is the caller's job.
pub fn broadcast(
    sender: NodeId,
    positions: &BTreeMap<NodeId, Position>,
    radio: &RadioModel,
) -> Result<Vec<NodeId>, NoPositionError> {
    let origin = positions.get(&sender).ok_or(NoPositionError(sender))?;
    Ok(positions
        .iter()
        .filter(|(id, pos)| **id != sender && radio.in_range(origin, pos))
        .map(|(id, _)| *id)
        .collect())
}
