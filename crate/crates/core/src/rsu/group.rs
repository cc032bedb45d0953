use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::sim::{NodeId, Position};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GroupId(pub u32);

impl fmt::Display for GroupId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "g{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RsuGroup {
    pub id: GroupId,
    /// Sorted by `NodeId`.
    pub members: Vec<NodeId>,
    pub grid_cell: (i64, i64),
}

impl RsuGroup {
    pub fn n(&self) -> usize {
        self.members.len()
    }

    /// Tolerated Byzantine members, `floor((n - 1) / 3)`.
    pub fn f(&self) -> usize {
        fault_bound(self.n())
    }

    pub fn quorum(&self) -> usize {
        2 * self.f() + 1
    }

    /// Too small to tolerate any fault.
    pub fn is_degenerate(&self) -> bool {
        self.f() == 0
    }

    /// Leader of `height`: members in `NodeId` order, rotated by height.
    pub fn leader(&self, height: u64) -> NodeId {
        self.members[(height % self.n() as u64) as usize]
    }

    pub fn contains(&self, node: &NodeId) -> bool {
        self.members.binary_search(node).is_ok()
    }
}

pub fn fault_bound(n: usize) -> usize {
    n.saturating_sub(1) / 3
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GroupError {
    #[error("cell size must be positive, got {0}")]
    CellSize(f64),
}

/// Assigns each RSU to the group of its grid cell
/// `(floor(x / cell), floor(y / cell))`. Groups are numbered in cell order.
pub fn group_rsus(rsus: &[(NodeId, Position)], cell_size_m: f64) -> Result<Vec<RsuGroup>, GroupError> {
    if !(cell_size_m > 0.0 && cell_size_m.is_finite()) {
        return Err(GroupError::CellSize(cell_size_m));
    }
    let mut cells: BTreeMap<(i64, i64), Vec<NodeId>> = BTreeMap::new();
    for (id, pos) in rsus {
        let cell = (
            (pos.x / cell_size_m).floor() as i64,
            (pos.y / cell_size_m).floor() as i64,
        );
        cells.entry(cell).or_default().push(*id);
    }
    Ok(cells
        .into_iter()
        .enumerate()
        .map(|(i, (grid_cell, mut members))| {
            members.sort();
            RsuGroup {
                id: GroupId(i as u32),
                members,
                grid_cell,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn at(i: u32, x: f64) -> (NodeId, Position) {
        (NodeId::rsu(i), Position::new(x, 10.0))
    }

    #[test]
    fn same_cell_same_group() {
        let g = group_rsus(&[at(0, 100.0), at(1, 900.0)], 1000.0).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g[0].members, vec![NodeId::rsu(0), NodeId::rsu(1)]);
    }

    #[test]
    fn neighbouring_cells_split() {
        let g = group_rsus(&[at(0, 900.0), at(1, 1100.0)], 1000.0).unwrap();
        assert_eq!(g.len(), 2);
        assert_eq!(g[0].grid_cell, (0, 0));
        assert_eq!(g[1].grid_cell, (1, 0));
    }

    #[test]
    fn quorum_arithmetic() {
        let g = group_rsus(&[at(3, 1.0), at(0, 2.0), at(2, 3.0), at(1, 4.0)], 1000.0).unwrap();
        assert_eq!((g[0].f(), g[0].quorum()), (1, 3));
        assert!(!g[0].is_degenerate());
        assert_eq!(g[0].leader(0), NodeId::rsu(0));
        assert_eq!(g[0].leader(5), NodeId::rsu(1));
        for (n, f) in [(1, 0), (3, 0), (4, 1), (6, 1), (7, 2), (10, 3)] {
            assert_eq!(fault_bound(n), f);
        }
    }

    #[test]
    fn negative_coordinates_floor() {
        let g = group_rsus(&[(NodeId::rsu(0), Position::new(-1.0, 0.0))], 1000.0).unwrap();
        assert_eq!(g[0].grid_cell, (-1, 0));
    }

    #[test]
    fn bad_cell_size() {
        assert!(group_rsus(&[], 0.0).is_err());
    }
}
