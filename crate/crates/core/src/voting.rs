//! Vote-based blame analysis.
//!
//! Every traced flow that saw a retransmission votes `1/h` against each of
//! the `h` links on its path, so each such flow contributes exactly one
//! unit of vote mass. The tally orders links into a ranking, an iterative
//! threshold search flags the most problematic links (adjusting the other
//! links' votes for the flows the flagged link explains), and individual
//! flows are blamed on the highest-ranked link of their path.

use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use crate::routing::cooccurrence_row;
use crate::simulator::{DropClass, EpochTrace, FlowRecord};
use crate::topology::{LinkId, Topology};

/// Accumulated vote mass per link for one epoch.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VoteTally {
    pub epoch: u32,
    pub votes: Vec<f64>,
    /// Total mass at tally time (one unit per voting flow).
    pub total: f64,
}

impl VoteTally {
    pub fn total_mass(&self) -> f64 {
        self.votes.iter().sum()
    }
}

/// Adds `1/h` to every link of each traced retransmitted flow.
pub fn tally_votes(trace: &EpochTrace) -> VoteTally {
    let n_links = trace.link_drop_totals.len();
    let mut votes = vec![0.0f64; n_links];
    let mut flows = 0u64;
    for flow in trace.traced_retransmitted() {
        let share = 1.0 / flow.hops() as f64;
        for link in &flow.path.links {
            votes[link.index()] += share;
        }
        flows += 1;
    }
    VoteTally { epoch: trace.epoch, votes, total: flows as f64 }
}

/// Links sorted by vote mass descending, ties broken by ascending id.
/// Zero-vote links share the tail in id order.
#[derive(Clone, Debug, PartialEq)]
pub struct Ranking {
    pub order: Vec<LinkId>,
    /// Rank position per link id (0 = most voted).
    pub rank_of: Vec<u32>,
}

impl Ranking {
    pub fn from_votes(votes: &[f64]) -> Self {
        let mut order: Vec<LinkId> = (0..votes.len() as u32).map(LinkId).collect();
        order.sort_by(|a, b| {
            votes[b.index()]
                .partial_cmp(&votes[a.index()])
                .expect("vote masses are finite")
                .then(a.0.cmp(&b.0))
        });
        let mut rank_of = vec![0u32; votes.len()];
        for (rank, link) in order.iter().enumerate() {
            rank_of[link.index()] = rank as u32;
        }
        Self { order, rank_of }
    }

    pub fn from_tally(tally: &VoteTally) -> Self {
        Self::from_votes(&tally.votes)
    }

    pub fn rank(&self, link: LinkId) -> u32 {
        self.rank_of[link.index()]
    }
}

/// How the vote adjustment attributes co-occurring votes to a flagged link.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdjustMode {
    /// Subtract `count * P(k on path | flagged on path) * mean(1/h)` from
    /// every other link `k`, with the conditional computed analytically
    /// from the topology assuming uniform ECMP.
    Analytic,
    /// Subtract the actual `1/h` contributions of flows whose recorded
    /// paths contain both links.
    ExactPath,
}

/// Denominator of the threshold guard.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdBase {
    /// Fraction of the epoch's original total vote mass (default; avoids
    /// threshold drift as votes are subtracted).
    Frozen,
    /// Fraction of the current adjusted total.
    Recomputed,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, serde::Deserialize)]
pub struct BadLinkSearch {
    pub threshold_fraction: f64,
    pub mode: AdjustMode,
    pub base: ThresholdBase,
}

impl Default for BadLinkSearch {
    fn default() -> Self {
        Self {
            threshold_fraction: 0.01,
            mode: AdjustMode::Analytic,
            base: ThresholdBase::Frozen,
        }
    }
}

/// Links flagged by the iterative max-vote search, in pick order, with the
/// vote mass each held when picked and the final adjusted tally.
#[derive(Clone, Debug, PartialEq)]
pub struct BadLinkSet {
    pub links: Vec<LinkId>,
    pub picked_votes: Vec<f64>,
    pub final_votes: Vec<f64>,
}

impl BadLinkSet {
    pub fn contains(&self, link: LinkId) -> bool {
        self.links.contains(&link)
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }
}

/// Iteratively picks the most-voted unflagged link while it holds at least
/// `threshold_fraction` of the total votes, adjusting the remaining links'
/// votes after each pick.
pub fn find_bad_links(
    tally: &VoteTally,
    trace: &EpochTrace,
    topo: &Topology,
    cfg: &BadLinkSearch,
) -> BadLinkSet {
    let mut votes = tally.votes.clone();
    let mut flagged = vec![false; votes.len()];
    let mut out = BadLinkSet { links: Vec::new(), picked_votes: Vec::new(), final_votes: Vec::new() };
    loop {
        let denominator = match cfg.base {
            ThresholdBase::Frozen => tally.total,
            ThresholdBase::Recomputed => votes.iter().sum(),
        };
        let threshold = cfg.threshold_fraction * denominator;
        let Some(l_max) = argmax_unflagged(&votes, &flagged) else {
            break;
        };
        if votes[l_max.index()] < threshold || votes[l_max.index()] <= 0.0 {
            break;
        }
        flagged[l_max.index()] = true;
        out.links.push(l_max);
        out.picked_votes.push(votes[l_max.index()]);
        adjust_votes(&mut votes, l_max, trace, topo, cfg.mode);
    }
    out.final_votes = votes;
    out
}

fn argmax_unflagged(votes: &[f64], flagged: &[bool]) -> Option<LinkId> {
    let mut best: Option<(f64, LinkId)> = None;
    for (i, v) in votes.iter().enumerate() {
        if flagged[i] {
            continue;
        }
        let better = match best {
            None => true,
            Some((bv, _)) => *v > bv,
        };
        if better {
            best = Some((*v, LinkId(i as u32)));
        }
    }
    best.map(|(_, l)| l)
}

/// Removes from every other link the vote mass attributable to flows that
/// retransmitted while crossing `l_max`, clamping at zero.
pub fn adjust_votes(
    votes: &mut [f64],
    l_max: LinkId,
    trace: &EpochTrace,
    topo: &Topology,
    mode: AdjustMode,
) {
    match mode {
        AdjustMode::Analytic => {
            let mut count = 0u64;
            let mut inv_h_sum = 0.0f64;
            for flow in trace.traced_retransmitted() {
                if flow.path.contains(l_max) {
                    count += 1;
                    inv_h_sum += 1.0 / flow.hops() as f64;
                }
            }
            if count == 0 {
                return;
            }
            let mean_inv_h = inv_h_sum / count as f64;
            let row = cooccurrence_row::<f64>(topo, l_max);
            for (i, v) in votes.iter_mut().enumerate() {
                if i == l_max.index() {
                    continue;
                }
                *v = (*v - count as f64 * row[i] * mean_inv_h).max(0.0);
            }
        }
        AdjustMode::ExactPath => {
            for flow in trace.traced_retransmitted() {
                if !flow.path.contains(l_max) {
                    continue;
                }
                let share = 1.0 / flow.hops() as f64;
                for link in &flow.path.links {
                    if *link != l_max {
                        let v = &mut votes[link.index()];
                        *v = (*v - share).max(0.0);
                    }
                }
            }
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum VotingError {
    #[error("flow was not traced; its path is unknown to the analysis")]
    Unblamed,
}

/// Blames a traced retransmitted flow on the highest-ranked link of its
/// path (rank ties already break by ascending id).
pub fn blame_flow(flow: &FlowRecord, ranking: &Ranking) -> Result<LinkId, VotingError> {
    if !flow.traced || !flow.retransmitted {
        return Err(VotingError::Unblamed);
    }
    flow.path
        .links
        .iter()
        .copied()
        .min_by_key(|l| ranking.rank(*l))
        .ok_or(VotingError::Unblamed)
}

/// A retransmitted flow is a failure drop iff its path crosses a flagged
/// link; otherwise its drops are classed as noise.
pub fn classify_drop(flow: &FlowRecord, bad: &BadLinkSet) -> DropClass {
    if flow.path.links.iter().any(|l| bad.contains(*l)) {
        DropClass::Failure
    } else {
        DropClass::Noise
    }
}

/// `votes.csv`: per-link tally, rank, and flag state for one epoch.
pub fn write_votes_csv<W: Write>(
    mut w: W,
    epoch: u32,
    tally: &VoteTally,
    ranking: &Ranking,
    bad: &BadLinkSet,
) -> std::io::Result<()> {
    writeln!(w, "epoch,link_id,votes,rank,flagged")?;
    for (i, v) in tally.votes.iter().enumerate() {
        let link = LinkId(i as u32);
        writeln!(
            w,
            "{},{},{},{},{}",
            epoch,
            i,
            v,
            ranking.rank(link),
            u8::from(bad.contains(link))
        )?;
    }
    Ok(())
}

/// `blame.csv`: blamed link and drop class per traced retransmitted flow.
pub fn write_blame_csv<W: Write>(
    mut w: W,
    trace: &EpochTrace,
    ranking: &Ranking,
    bad: &BadLinkSet,
) -> std::io::Result<()> {
    writeln!(w, "flow_id,blamed_link,class")?;
    for flow in trace.traced_retransmitted() {
        let blamed = blame_flow(flow, ranking).expect("traced retransmitted flow");
        let class = match classify_drop(flow, bad) {
            DropClass::Noise => "noise",
            DropClass::Failure => "failure",
        };
        writeln!(w, "{},{},{}", flow.id, blamed.0, class)?;
    }
    Ok(())
}
