//! Plausibility checks. Each check is a pure function of the signed beacons
//! it cites, so any third party can re-execute it and must reproduce the
//! same value bit for bit.

use std::collections::HashMap;
use std::rc::Rc;

use serde::{Deserialize, Serialize};

use super::beacon::Beacon;
use crate::codec::Hash32;
use crate::scms::PseudonymId;
use crate::sim::seconds;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionParams {
    pub v_max: f64,
    /// Relative slack on the speed bound.
    pub tol: f64,
    /// Absolute slack on single-hop jumps, meters.
    pub jump_slack_m: f64,
}

impl Default for DetectionParams {
    fn default() -> Self {
        DetectionParams {
            v_max: 70.0,
            tol: 0.1,
            jump_slack_m: 5.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    SpeedBound,
    Teleport,
    BeaconRate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Implausible,
}

/// Outcome of one check, recorded so validators can re-execute it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrustStatement {
    pub suspect: PseudonymId,
    pub check: CheckKind,
    /// Hashes of the cited beacons, oldest first.
    pub inputs: Vec<Hash32>,
    pub verdict: Verdict,
    pub computed_value: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Finding {
    pub computed_value: f64,
    pub threshold: f64,
    pub implausible: bool,
}

/// Runs `check` over `beacons` (oldest first). `None` when the input shape
/// does not fit the check: wrong count, mixed pseudonyms, or bad ordering.
pub fn evaluate(check: CheckKind, beacons: &[&Beacon], params: &DetectionParams) -> Option<Finding> {
    let [a, b] = beacons else { return None };
    if a.p_id() != b.p_id() || b.tick < a.tick {
        return None;
    }
    let dist = a.state.position.distance(&b.state.position);
    let dt = seconds(b.tick - a.tick);
    let (computed_value, threshold) = match check {
        CheckKind::SpeedBound if b.tick > a.tick => (dist / dt, params.v_max * (1.0 + params.tol)),
        CheckKind::Teleport if b.tick > a.tick => (dist, params.v_max * dt + params.jump_slack_m),
        CheckKind::BeaconRate if b.tick == a.tick => (2.0, 1.0),
        _ => return None,
    };
    Some(Finding {
        computed_value,
        threshold,
        implausible: computed_value > threshold,
    })
}

/// Per-receiver detection state: the latest beacon seen from each pseudonym.
#[derive(Debug, Default)]
pub struct Detector {
    params: DetectionParams,
    last: HashMap<PseudonymId, Rc<Beacon>>,
}

impl Detector {
    pub fn new(params: DetectionParams) -> Self {
        Detector {
            params,
            last: HashMap::new(),
        }
    }

    pub fn params(&self) -> &DetectionParams {
        &self.params
    }

    pub fn last_beacon(&self, p: &PseudonymId) -> Option<&Rc<Beacon>> {
        self.last.get(p)
    }

    /// Feeds a signature-verified beacon. Returns every check that fires,
    /// each with the beacons it cites.
    pub fn observe(&mut self, incoming: Rc<Beacon>) -> Vec<(TrustStatement, Vec<Rc<Beacon>>)> {
        let p = incoming.p_id();
        let Some(prev) = self.last.get(&p).cloned() else {
            self.last.insert(p, incoming);
            return Vec::new();
        };
        if incoming.tick < prev.tick {
            // stale replay; history only moves forward
            return Vec::new();
        }
        let checks: &[CheckKind] = if incoming.tick == prev.tick {
            &[CheckKind::BeaconRate]
        } else {
            &[CheckKind::SpeedBound, CheckKind::Teleport]
        };
        let mut out = Vec::new();
        for &check in checks {
            if let Some(f) = evaluate(check, &[&prev, &incoming], &self.params) {
                if f.implausible {
                    out.push((
                        TrustStatement {
                            suspect: p,
                            check,
                            inputs: vec![prev.hash(), incoming.hash()],
                            verdict: Verdict::Implausible,
                            computed_value: f.computed_value,
                            threshold: f.threshold,
                        },
                        vec![prev.clone(), incoming.clone()],
                    ));
                }
            }
        }
        self.last.insert(p, incoming);
        out
    }
}
