use serde::{Deserialize, Serialize};

use super::kinematics::KinematicState;
use super::VerifyContext;
use crate::codec::{self, Hash32};
use crate::crypto::Signature;
use crate::scms::{Pseudonym, PseudonymCert, PseudonymId};
use crate::sim::Tick;

/// Periodic signed status broadcast. The pseudonym certificate travels
/// with the beacon so any receiver can verify it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Beacon {
    pub cert: PseudonymCert,
    pub tick: Tick,
    pub state: KinematicState,
    pub meta: Vec<u8>,
    pub signature: Signature,
}

#[derive(Serialize)]
struct SignedPart<'a> {
    cert: &'a PseudonymCert,
    tick: Tick,
    state: &'a KinematicState,
    meta: &'a [u8],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum BeaconFault {
    #[error("no PCA key for the issuing region")]
    UnknownIssuer,
    #[error("pseudonym certificate does not verify")]
    Certificate,
    #[error("pseudonym not valid at beacon tick")]
    Expired,
    #[error("beacon signature does not verify")]
    Signature,
}

impl Beacon {
    pub fn sign(pseudonym: &Pseudonym, tick: Tick, state: KinematicState, meta: Vec<u8>) -> Beacon {
        let signature = pseudonym.key.sign(&codec::encode(&SignedPart {
            cert: &pseudonym.cert,
            tick,
            state: &state,
            meta: &meta,
        }));
        Beacon {
            cert: pseudonym.cert.clone(),
            tick,
            state,
            meta,
            signature,
        }
    }

    pub fn p_id(&self) -> PseudonymId {
        self.cert.p_id
    }

    pub fn hash(&self) -> Hash32 {
        Hash32::of("beacon", self)
    }

    pub fn encoded_len(&self) -> usize {
        codec::encode(self).len()
    }

    fn signed_bytes(&self) -> Vec<u8> {
        codec::encode(&SignedPart {
            cert: &self.cert,
            tick: self.tick,
            state: &self.state,
            meta: &self.meta,
        })
    }
}

pub fn verify_beacon(beacon: &Beacon, ctx: &VerifyContext) -> Result<(), BeaconFault> {
    let pca = ctx
        .pca_keys
        .get(&beacon.cert.p_id.region)
        .ok_or(BeaconFault::UnknownIssuer)?;
    if !beacon.cert.verify(pca) {
        return Err(BeaconFault::Certificate);
    }
    verify_beacon_signature(beacon)
}

/// The checks of [`verify_beacon`] that follow certificate verification,
/// for a receiver that has already verified `beacon.cert`.
pub fn verify_beacon_signature(beacon: &Beacon) -> Result<(), BeaconFault> {
    if !beacon.cert.is_valid_at(beacon.tick) {
        return Err(BeaconFault::Expired);
    }
    if !beacon
        .cert
        .public_key
        .verify(&beacon.signed_bytes(), &beacon.signature)
    {
        return Err(BeaconFault::Signature);
    }
    Ok(())
}

/// The pseudonym to sign with at `t`: among those valid at `t` and not in
/// `excluded`, the one with the latest `valid_from`. With partially
/// overlapping windows this switches identity once per window.
pub fn select_pseudonym<'a>(
    pool: &'a [Pseudonym],
    t: Tick,
    excluded: impl Fn(&PseudonymId) -> bool,
) -> Option<&'a Pseudonym> {
    pool.iter()
        .filter(|p| p.cert.is_valid_at(t) && !excluded(&p.id()))
        .max_by_key(|p| (p.cert.valid_from, p.cert.p_id))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scms::{IssuancePolicy, RegionId, Scms};
    use crate::sim::{NodeId, RngStreams};
    use crate::testkit::{state_at, Fixture};

    #[test]
    fn signed_beacon_verifies_and_tampering_fails() {
        let fx = Fixture::new(1);
        let b = Beacon::sign(fx.pseudonym(0), 10, state_at(1.0, 2.0), vec![7]);
        assert_eq!(verify_beacon(&b, &fx.ctx), Ok(()));
        let mut moved = b.clone();
        moved.state.position.x += 1.0;
        assert_eq!(verify_beacon(&moved, &fx.ctx), Err(BeaconFault::Signature));
        let late = Beacon::sign(fx.pseudonym(0), 10_000, state_at(1.0, 2.0), Vec::new());
        assert_eq!(verify_beacon(&late, &fx.ctx), Err(BeaconFault::Expired));
        let mut ctx = fx.ctx.clone();
        ctx.pca_keys.clear();
        assert_eq!(verify_beacon(&b, &ctx), Err(BeaconFault::UnknownIssuer));
    }

    #[test]
    fn selection_prefers_newest_valid_pseudonym() {
        let mut scms = Scms::new(RegionId(0), RngStreams::fresh(3, "sel"));
        let lt = scms.enroll(NodeId::vehicle(0)).unwrap().certificate.lt_id;
        let pool = scms.issue_pseudonyms(lt, 0, 2000, IssuancePolicy::default()).unwrap();
        assert!(pool.len() >= 3);
        for t in (0..2000).step_by(25) {
            let chosen = select_pseudonym(&pool, t, |_| false).unwrap();
            let newest = pool
                .iter()
                .filter(|p| p.cert.is_valid_at(t))
                .map(|p| p.cert.valid_from)
                .max()
                .unwrap();
            assert_eq!(chosen.cert.valid_from, newest);
            let excluded = chosen.id();
            if let Some(other) = select_pseudonym(&pool, t, |p| *p == excluded) {
                assert_ne!(other.id(), excluded);
                assert!(other.cert.is_valid_at(t));
            }
        }
        assert!(select_pseudonym(&pool, 1_000_000, |_| false).is_none());
    }
}
