use std::collections::BTreeMap;

use crate::cluster::{tally_votes, ClusterBlock, ClusterId};
use crate::codec::Hash32;
use crate::scms::PseudonymId;
use crate::vehicle::{verify_report, ReportFault, VerifyContext};

/// How a block relates to the chain an RSU has seen for its cluster.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Linkage {
    /// Next block after the known tip, or a genesis block.
    Extends,
    /// First block seen of a cluster that started elsewhere.
    FirstObserved,
    /// Predecessor not yet seen.
    Gap,
    /// At or below the known tip.
    Stale,
    /// Links to something other than the known predecessor.
    Fork,
}

/// Per-cluster chain tips known to one RSU.
#[derive(Debug, Clone, Default)]
pub struct RsuChainView {
    tips: BTreeMap<ClusterId, (u64, Hash32)>,
}

impl RsuChainView {
    pub fn linkage(&self, block: &ClusterBlock) -> Linkage {
        match self.tips.get(&block.cluster_id) {
            None if block.height == 0 => {
                if block.prev_hash == Hash32::ZERO {
                    Linkage::Extends
                } else {
                    Linkage::Fork
                }
            }
            None => Linkage::FirstObserved,
            Some(&(h, _)) if block.height <= h => Linkage::Stale,
            Some(&(h, _)) if block.height > h + 1 => Linkage::Gap,
            Some(&(_, tip)) if tip == block.prev_hash => Linkage::Extends,
            Some(_) => Linkage::Fork,
        }
    }

    pub fn advance(&mut self, block: &ClusterBlock) {
        self.tips
            .insert(block.cluster_id, (block.height, block.hash()));
    }

    pub fn tip(&self, cluster: &ClusterId) -> Option<(u64, Hash32)> {
        self.tips.get(cluster).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BlockFault {
    #[error("chain linkage: {0:?}")]
    Linkage(Linkage),
    #[error("member list not sorted and unique")]
    MemberOrder,
    #[error("head is not a member")]
    HeadNotMember,
    #[error("member {0} certificate invalid at block tick")]
    MemberCertificate(PseudonymId),
    #[error("member {0} is revoked")]
    MemberRevoked(PseudonymId),
    #[error("{have} valid endorsements, quorum is {need}")]
    Quorum { have: usize, need: usize },
    #[error("report {0}: {1}")]
    Report(Hash32, ReportFault),
    #[error("revocation votes do not match the reports")]
    VoteTally,
}

/// Independent RSU-side check of a committed cluster block: linkage, member
/// credentials, endorsement quorum, and full re-execution of every report.
pub fn validate_cluster_block(
    view: &RsuChainView,
    block: &ClusterBlock,
    ctx: &VerifyContext,
    is_revoked: &dyn Fn(&PseudonymId) -> bool,
) -> Result<Linkage, BlockFault> {
    let linkage = view.linkage(block);
    if !matches!(linkage, Linkage::Extends | Linkage::FirstObserved) {
        return Err(BlockFault::Linkage(linkage));
    }
    if block.members.windows(2).any(|w| w[0].p_id >= w[1].p_id) {
        return Err(BlockFault::MemberOrder);
    }
    let members = block.member_ids();
    if !members.contains(&block.head) {
        return Err(BlockFault::HeadNotMember);
    }
    for c in &block.members {
        let issuer_ok = ctx
            .pca_keys
            .get(&c.p_id.region)
            .is_some_and(|k| c.verify(k));
        if !issuer_ok || !c.is_valid_at(block.tick) {
            return Err(BlockFault::MemberCertificate(c.p_id));
        }
        if is_revoked(&c.p_id) {
            return Err(BlockFault::MemberRevoked(c.p_id));
        }
    }
    let have = block.valid_endorsers().len();
    if have < block.quorum() {
        return Err(BlockFault::Quorum {
            have,
            need: block.quorum(),
        });
    }
    for r in &block.reports {
        verify_report(r, ctx).map_err(|f| BlockFault::Report(r.hash(), f))?;
    }
    if block.revocation_votes != tally_votes(&block.reports, &members) {
        return Err(BlockFault::VoteTally);
    }
    Ok(linkage)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testkit::Fixture;

    fn never(_: &PseudonymId) -> bool {
        false
    }

    #[test]
    fn committed_block_with_real_report_is_accepted_and_extends() {
        let fx = Fixture::new(4);
        let block = fx.cluster_block(&[0, 1, 2, 3], vec![fx.speeding_report(0, 3, 20)], 21);
        let mut view = RsuChainView::default();
        assert_eq!(validate_cluster_block(&view, &block, &fx.ctx, &never), Ok(Linkage::Extends));
        view.advance(&block);
        assert_eq!(view.tip(&block.cluster_id), Some((0, block.hash())));
        assert_eq!(view.linkage(&block), Linkage::Stale);
    }

    #[test]
    fn forged_and_missing_endorsements_fail_quorum() {
        let fx = Fixture::new(5);
        let mut block = fx.cluster_block(&[0, 1, 2, 3, 4], Vec::new(), 5);
        block.endorsements.truncate(2);
        let mut forged = block.endorsements[0].clone();
        forged.signer = fx.pseudonym(4).id();
        block.endorsements.push(forged);
        assert_eq!(
            validate_cluster_block(&RsuChainView::default(), &block, &fx.ctx, &never),
            Err(BlockFault::Quorum { have: 2, need: 3 })
        );
    }

    #[test]
    fn revoked_member_and_bad_report_are_rejected() {
        let fx = Fixture::new(4);
        let block = fx.cluster_block(&[0, 1, 2, 3], Vec::new(), 5);
        let revoked = fx.pseudonym(2).id();
        assert_eq!(
            validate_cluster_block(&RsuChainView::default(), &block, &fx.ctx, &|p| *p == revoked),
            Err(BlockFault::MemberRevoked(revoked))
        );
        let mut r = fx.speeding_report(0, 3, 20);
        r.detected[0].computed_value = 1e9;
        r.resign(fx.pseudonym(0));
        let block = fx.cluster_block(&[0, 1, 2, 3], vec![r.clone()], 21);
        assert!(matches!(
            validate_cluster_block(&RsuChainView::default(), &block, &fx.ctx, &never),
            Err(BlockFault::Report(h, _)) if h == r.hash()
        ));
    }

    #[test]
    fn vote_tally_must_match_reports() {
        let fx = Fixture::new(4);
        let mut block = fx.cluster_block(&[0, 1, 2, 3], vec![fx.speeding_report(0, 3, 20)], 21);
        block.revocation_votes.clear();
        let endorsers: Vec<usize> = vec![0, 1, 2, 3];
        block.endorsements = endorsers.iter().map(|&m| crate::cluster::endorse(fx.pseudonym(m), &block)).collect();
        assert_eq!(
            validate_cluster_block(&RsuChainView::default(), &block, &fx.ctx, &never),
            Err(BlockFault::VoteTally)
        );
    }

    #[test]
    fn linkage_classes() {
        let fx = Fixture::new(3);
        let g = fx.cluster_block(&[0, 1, 2], Vec::new(), 5);
        let mut view = RsuChainView::default();
        let mut later = g.clone();
        later.height = 4;
        later.prev_hash = Hash32::of("x", &1u8);
        assert_eq!(view.linkage(&later), Linkage::FirstObserved);
        let mut bad_genesis = g.clone();
        bad_genesis.prev_hash = Hash32::of("x", &2u8);
        assert_eq!(view.linkage(&bad_genesis), Linkage::Fork);
        view.advance(&g);
        assert_eq!(view.linkage(&later), Linkage::Gap);
        let mut next = g.clone();
        next.height = 1;
        next.prev_hash = g.hash();
        assert_eq!(view.linkage(&next), Linkage::Extends);
        next.prev_hash = Hash32::ZERO;
        assert_eq!(view.linkage(&next), Linkage::Fork);
    }
}
