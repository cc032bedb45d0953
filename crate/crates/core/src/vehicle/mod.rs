//! Vehicle behavior: mobility, signed beaconing under the active pseudonym,
//! plausibility checks over received beacons, and misbehavior reports.

mod beacon;
mod detect;
mod kinematics;
mod report;

pub use beacon::{select_pseudonym, verify_beacon, verify_beacon_signature, Beacon, BeaconFault};
pub use detect::{evaluate, CheckKind, DetectionParams, Detector, Finding, TrustStatement, Verdict};
pub use kinematics::{step_mobility, KinematicState, MobilityParams};
pub use report::{build_report, verify_report, MisbehaviorReport, ReportError, ReportFault};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::crypto::PublicKey;
use crate::scms::RegionId;

/// Public parameters every validator needs to re-check evidence: the PCA
/// keys of all regions and the detection thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyContext {
    pub pca_keys: BTreeMap<RegionId, PublicKey>,
    pub detection: DetectionParams,
}
