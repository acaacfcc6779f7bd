//! Flow endpoint and ECMP path sampling, analytic per-link probabilities,
//! and the flow-by-link routing matrix.
//!
//! ECMP is modeled as an independent uniform choice at every stage: one
//! tier-1 switch for intra-pod paths; an up tier-1, a tier-2, and a down
//! tier-1 switch for inter-pod paths. All analytic probabilities in this
//! module assume uniform traffic (a uniformly random ordered pair of
//! distinct ToRs) and are exact rationals, so they are generic over
//! [`Scalar`].

use std::io::{BufRead, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;
use crate::simulator::FlowRecord;
use crate::topology::{ClosParams, HostId, LinkId, LinkLevel, SwitchId, Topology};

/// An ECMP path as the ordered sequence of traversed links.
///
/// Levels follow `Host, L1, (L2, L2), L1, Host` order; intra-pod paths omit
/// the level-2 pair and host links are present only when modeled.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Path {
    pub links: Vec<LinkId>,
    pub inter_pod: bool,
}

impl Path {
    /// Number of links, the `h` used for vote weighting.
    pub fn hops(&self) -> usize {
        self.links.len()
    }

    pub fn contains(&self, link: LinkId) -> bool {
        self.links.contains(&link)
    }
}

/// Destination distribution for flow generation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrafficPattern {
    /// Destination ToR uniform over all ToRs other than the source's.
    Uniform,
    /// With probability `weight` the destination lies under one of `tors`
    /// (global ToR indices), otherwise under the complement.
    SkewedTorSet { tors: Vec<u32>, weight: f64 },
    /// With probability `fraction` the destination is the hot ToR,
    /// otherwise uniform over the remaining ToRs.
    HotTor { tor: u32, fraction: f64 },
}

#[derive(Debug, Error, PartialEq)]
pub enum RoutingError {
    #[error("analytic probabilities are defined for uniform traffic only")]
    NonUniformTraffic,
    #[error("traffic pattern invalid: {0}")]
    BadPattern(String),
}

impl TrafficPattern {
    /// Validates the pattern against a fabric; run once at config parse time.
    pub fn validate(&self, params: &ClosParams) -> Result<(), RoutingError> {
        let n_tor = params.tor_count();
        if n_tor < 2 {
            return Err(RoutingError::BadPattern(
                "at least two ToRs are required to form flows".into(),
            ));
        }
        match self {
            TrafficPattern::Uniform => Ok(()),
            TrafficPattern::SkewedTorSet { tors, weight } => {
                if tors.is_empty() || tors.len() as u32 >= n_tor {
                    return Err(RoutingError::BadPattern(
                        "skewed ToR set must be a proper nonempty subset".into(),
                    ));
                }
                if tors.iter().any(|t| *t >= n_tor) {
                    return Err(RoutingError::BadPattern("skewed ToR index out of range".into()));
                }
                if !(0.0..=1.0).contains(weight) {
                    return Err(RoutingError::BadPattern("skew weight outside [0,1]".into()));
                }
                Ok(())
            }
            TrafficPattern::HotTor { tor, fraction } => {
                if *tor >= n_tor {
                    return Err(RoutingError::BadPattern("hot ToR index out of range".into()));
                }
                if !(0.0..=1.0).contains(fraction) {
                    return Err(RoutingError::BadPattern("hot fraction outside [0,1]".into()));
                }
                Ok(())
            }
        }
    }
}

/// Uniform draw from `0..n` skipping `exclude`.
fn uniform_excluding<R: Rng + ?Sized>(n: u32, exclude: Option<u32>, rng: &mut R) -> u32 {
    match exclude {
        None => rng.gen_range(0..n),
        Some(e) => {
            debug_assert!(n >= 2 && e < n);
            let v = rng.gen_range(0..n - 1);
            if v >= e {
                v + 1
            } else {
                v
            }
        }
    }
}

fn pick_from_set<R: Rng + ?Sized>(set: &[u32], exclude: Option<u32>, rng: &mut R) -> Option<u32> {
    match exclude {
        Some(e) if set.contains(&e) => {
            if set.len() == 1 {
                None
            } else {
                let idx = rng.gen_range(0..set.len() - 1);
                let mut it = set.iter().filter(|t| **t != e);
                Some(*it.nth(idx).expect("index in range"))
            }
        }
        _ => {
            if set.is_empty() {
                None
            } else {
                Some(set[rng.gen_range(0..set.len())])
            }
        }
    }
}

/// Samples a destination ToR from the pattern, never returning `exclude`.
pub fn sample_dst_tor<R: Rng + ?Sized>(
    params: &ClosParams,
    pattern: &TrafficPattern,
    exclude: Option<u32>,
    rng: &mut R,
) -> u32 {
    let n_tor = params.tor_count();
    match pattern {
        TrafficPattern::Uniform => uniform_excluding(n_tor, exclude, rng),
        TrafficPattern::SkewedTorSet { tors, weight } => {
            let in_set = rng.gen_bool(*weight);
            if in_set {
                if let Some(t) = pick_from_set(tors, exclude, rng) {
                    return t;
                }
            } else {
                // Complement draw by rejection over the (small) ToR range.
                let complement: Vec<u32> = (0..n_tor).filter(|t| !tors.contains(t)).collect();
                if let Some(t) = pick_from_set(&complement, exclude, rng) {
                    return t;
                }
            }
            uniform_excluding(n_tor, exclude, rng)
        }
        TrafficPattern::HotTor { tor, fraction } => {
            if rng.gen_bool(*fraction) && exclude != Some(*tor) {
                *tor
            } else {
                // Cold flows avoid the hot ToR so the hot fraction stays
                // exactly `fraction` when no exclusion applies.
                let mut t = uniform_excluding(n_tor, exclude, rng);
                while t == *tor {
                    t = uniform_excluding(n_tor, exclude, rng);
                }
                t
            }
        }
    }
}

/// Samples `(src, dst)` hosts under distinct ToRs.
///
/// The destination ToR follows the pattern exactly; the source ToR is then
/// uniform over the remainder, which for uniform traffic is equivalent to a
/// uniformly random ordered pair of distinct ToRs.
pub fn sample_endpoints<R: Rng + ?Sized>(
    topo: &Topology,
    pattern: &TrafficPattern,
    rng: &mut R,
) -> (HostId, HostId) {
    let params = topo.params();
    let dst_tor = sample_dst_tor(params, pattern, None, rng);
    let src_tor = uniform_excluding(params.tor_count(), Some(dst_tor), rng);
    let h = params.hosts_per_tor;
    let src = HostId(src_tor * h + rng.gen_range(0..h));
    let dst = HostId(dst_tor * h + rng.gen_range(0..h));
    (src, dst)
}

/// Samples an ECMP path between hosts under distinct ToRs.
pub fn sample_path<R: Rng + ?Sized>(
    topo: &Topology,
    src: HostId,
    dst: HostId,
    rng: &mut R,
) -> Path {
    let params = topo.params();
    let src_tor = topo.tor_of_host(src);
    let dst_tor = topo.tor_of_host(dst);
    debug_assert_ne!(src_tor, dst_tor, "flows connect hosts under distinct ToRs");
    let pod_s = topo.pod_of_tor(src_tor);
    let pod_t = topo.pod_of_tor(dst_tor);
    let src_idx = src_tor.0 % params.n0;
    let dst_idx = dst_tor.0 % params.n0;
    let mut links = Vec::with_capacity(6);
    if let Some(l) = topo.host_link(src) {
        links.push(l);
    }
    let inter_pod = pod_s != pod_t;
    if inter_pod {
        let up = rng.gen_range(0..params.n1);
        let spine = rng.gen_range(0..params.n2);
        let down = rng.gen_range(0..params.n1);
        links.push(topo.level1_link(pod_s, src_idx, up));
        links.push(topo.level2_link(pod_s, up, spine));
        links.push(topo.level2_link(pod_t, down, spine));
        links.push(topo.level1_link(pod_t, dst_idx, down));
    } else {
        let t1 = rng.gen_range(0..params.n1);
        links.push(topo.level1_link(pod_s, src_idx, t1));
        links.push(topo.level1_link(pod_t, dst_idx, t1));
    }
    if let Some(l) = topo.host_link(dst) {
        links.push(l);
    }
    Path { links, inter_pod }
}

/// Probability that a uniformly random inter-ToR flow leaves its source pod.
pub fn inter_pod_probability<S: Scalar>(params: &ClosParams) -> S {
    if params.n_pod == 1 {
        return S::zero();
    }
    let n0 = params.n0 as u64;
    let n_pod = params.n_pod as u64;
    S::ratio(n0 * (n_pod - 1), n0 * n_pod - 1)
}

/// Analytic probability that a uniform flow traverses one fixed link of the
/// given level in its source-to-destination service direction (up at the
/// source side for level 1/2, the source's own link for host level).
///
/// A link is traversed in either direction with exactly twice this
/// probability under uniform traffic.
pub fn link_traversal_probability<S: Scalar>(
    params: &ClosParams,
    pattern: &TrafficPattern,
    level: LinkLevel,
) -> Result<S, RoutingError> {
    if *pattern != TrafficPattern::Uniform {
        return Err(RoutingError::NonUniformTraffic);
    }
    let n0 = params.n0 as u64;
    let n1 = params.n1 as u64;
    let n2 = params.n2 as u64;
    let n_pod = params.n_pod as u64;
    Ok(match level {
        LinkLevel::Host => S::ratio(1, (n0 * n_pod).max(1) * params.hosts_per_tor.max(1) as u64),
        LinkLevel::Level1 => S::ratio(1, n0 * n1 * n_pod),
        LinkLevel::Level2 => {
            let base = S::ratio(1, n1 * n2 * n_pod);
            base * inter_pod_probability::<S>(params)
        }
    })
}

/// Role of a link in the path structure; used by the analytic conditionals.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum LinkRole {
    Host { tor: u32, host: HostId },
    L1 { tor: u32, t1: u32 },
    L2 { pod: u32, t1: u32, t2: u32 },
}

fn link_role(topo: &Topology, link: LinkId) -> LinkRole {
    use crate::topology::Endpoint;
    let l = topo.link(link);
    match (l.level, l.a, l.b) {
        (LinkLevel::Host, Endpoint::Host(h), Endpoint::Switch(tor)) => LinkRole::Host {
            tor: topo.tor_index(tor),
            host: h,
        },
        (LinkLevel::Level1, Endpoint::Switch(tor), Endpoint::Switch(t1)) => LinkRole::L1 {
            tor: topo.tor_index(tor),
            t1: topo.tier1_coords(t1).1,
        },
        (LinkLevel::Level2, Endpoint::Switch(t1), Endpoint::Switch(t2)) => {
            let (pod, t1_idx) = topo.tier1_coords(t1);
            LinkRole::L2 {
                pod,
                t1: t1_idx,
                t2: t2.0 - topo.params().tor_count() - topo.params().t1_count(),
            }
        }
        _ => unreachable!("link endpoints always match their level"),
    }
}

/// ECMP choice variables pinned by conditioning on a traversed link.
#[derive(Clone, Copy, Default)]
struct Pins {
    src_host: Option<HostId>,
    dst_host: Option<HostId>,
    up_t1: Option<u32>,
    down_t1: Option<u32>,
    t2: Option<u32>,
}

fn choice_prob<S: Scalar>(pin: Option<u32>, want: u32, fan_out: u64) -> S {
    match pin {
        Some(v) if v == want => S::one(),
        Some(_) => S::zero(),
        None => S::ratio(1, fan_out),
    }
}

fn host_prob<S: Scalar>(pin: Option<HostId>, want: HostId, hosts: u64) -> S {
    match pin {
        Some(v) if v == want => S::one(),
        Some(_) => S::zero(),
        None => S::ratio(1, hosts),
    }
}

/// P(link `b` on the path | src ToR `x`, dst ToR `y`, pinned choices).
fn conditional_on_pair<S: Scalar>(
    params: &ClosParams,
    b: &LinkRole,
    x: u32,
    y: u32,
    pins: &Pins,
) -> S {
    let n0 = params.n0;
    let intra = x / n0 == y / n0;
    let n1 = params.n1 as u64;
    let n2 = params.n2 as u64;
    let hosts = params.hosts_per_tor as u64;
    match *b {
        LinkRole::Host { tor, host } => {
            let mut p = S::zero();
            if tor == x {
                p = p + host_prob::<S>(pins.src_host, host, hosts);
            }
            if tor == y {
                p = p + host_prob::<S>(pins.dst_host, host, hosts);
            }
            p
        }
        LinkRole::L1 { tor, t1 } => {
            let mut p = S::zero();
            if tor == x {
                p = p + choice_prob::<S>(pins.up_t1, t1, n1);
            }
            if tor == y {
                // Intra-pod paths reuse the single tier-1 choice on the way
                // down; inter-pod paths have an independent down choice.
                let pin = if intra { pins.up_t1 } else { pins.down_t1 };
                p = p + choice_prob::<S>(pin, t1, n1);
            }
            p
        }
        LinkRole::L2 { pod, t1, t2 } => {
            if intra {
                return S::zero();
            }
            let mut p = S::zero();
            if pod == x / n0 {
                p = p + choice_prob::<S>(pins.up_t1, t1, n1) * choice_prob::<S>(pins.t2, t2, n2);
            }
            if pod == y / n0 {
                p = p + choice_prob::<S>(pins.down_t1, t1, n1) * choice_prob::<S>(pins.t2, t2, n2);
            }
            p
        }
    }
}

/// Conditioning scenarios for a link: source-side or destination-side
/// traversal, enumerated over all compatible (src ToR, dst ToR) pairs with
/// their relative weights and the ECMP variables they pin.
fn conditioning_cases<S: Scalar>(
    topo: &Topology,
    a: &LinkRole,
) -> Vec<(u32, u32, S, Pins)> {
    let params = topo.params();
    let n_tor = params.tor_count();
    let n0 = params.n0;
    let n1 = params.n1 as u64;
    let n2 = params.n2 as u64;
    let hosts = params.hosts_per_tor as u64;
    let mut cases = Vec::new();
    match *a {
        LinkRole::Host { tor, host } => {
            let w = S::ratio(1, hosts);
            for other in (0..n_tor).filter(|t| *t != tor) {
                let src = Pins { src_host: Some(host), ..Pins::default() };
                cases.push((tor, other, w.clone(), src));
                let dst = Pins { dst_host: Some(host), ..Pins::default() };
                cases.push((other, tor, w.clone(), dst));
            }
        }
        LinkRole::L1 { tor, t1 } => {
            let w = S::ratio(1, n1);
            for other in (0..n_tor).filter(|t| *t != tor) {
                let src = Pins { up_t1: Some(t1), ..Pins::default() };
                cases.push((tor, other, w.clone(), src));
                // Intra-pod paths reuse the single tier-1 choice.
                let dst = if other / n0 == tor / n0 {
                    Pins { up_t1: Some(t1), ..Pins::default() }
                } else {
                    Pins { down_t1: Some(t1), ..Pins::default() }
                };
                cases.push((other, tor, w.clone(), dst));
            }
        }
        LinkRole::L2 { pod, t1, t2 } => {
            let w = S::ratio(1, n1 * n2);
            for inside in (0..n_tor).filter(|t| *t / n0 == pod) {
                for outside in (0..n_tor).filter(|t| *t / n0 != pod) {
                    let src = Pins { up_t1: Some(t1), t2: Some(t2), ..Pins::default() };
                    cases.push((inside, outside, w.clone(), src));
                    let dst = Pins { down_t1: Some(t1), t2: Some(t2), ..Pins::default() };
                    cases.push((outside, inside, w.clone(), dst));
                }
            }
        }
    }
    cases
}

/// P(each link on the path | link `a` on the path) for every link, under
/// uniform traffic and uniform independent ECMP.
///
/// When `a` can carry no traffic (a level-2 link in a single-pod fabric)
/// the conditional is undefined; the row is all zeros except `a` itself.
pub fn cooccurrence_row<S: Scalar>(topo: &Topology, a: LinkId) -> Vec<S> {
    let roles: Vec<LinkRole> = (0..topo.link_count() as u32)
        .map(|i| link_role(topo, LinkId(i)))
        .collect();
    let cases = conditioning_cases::<S>(topo, &roles[a.index()]);
    let mut num = vec![S::zero(); topo.link_count()];
    let mut den = S::zero();
    for (x, y, w, pins) in &cases {
        den = den + w.clone();
        for (i, role) in roles.iter().enumerate() {
            let p = conditional_on_pair::<S>(topo.params(), role, *x, *y, pins);
            if !p.is_zero() {
                num[i] = num[i].clone() + w.clone() * p;
            }
        }
    }
    if den.is_zero() {
        let mut row = vec![S::zero(); topo.link_count()];
        row[a.index()] = S::one();
        return row;
    }
    num.into_iter().map(|n| n / den.clone()).collect()
}

/// P(link `b` on the path | link `a` on the path). See [`cooccurrence_row`].
pub fn cooccurrence_probability<S: Scalar>(topo: &Topology, a: LinkId, b: LinkId) -> S {
    let roles = [link_role(topo, b)];
    let cases = conditioning_cases::<S>(topo, &link_role(topo, a));
    let mut num = S::zero();
    let mut den = S::zero();
    for (x, y, w, pins) in &cases {
        den = den + w.clone();
        num = num + w.clone() * conditional_on_pair::<S>(topo.params(), &roles[0], *x, *y, pins);
    }
    if den.is_zero() {
        if a == b {
            S::one()
        } else {
            S::zero()
        }
    } else {
        num / den
    }
}

/// Per-link marginal traversal probability (either direction), used to
/// cross-check co-occurrence symmetry: `P(b|a) P(a) = P(a|b) P(b)`.
pub fn marginal_on_path<S: Scalar>(topo: &Topology, link: LinkId) -> S {
    let params = topo.params();
    let n_tor = params.tor_count() as u64;
    let pairs = n_tor * (n_tor - 1);
    let cases = conditioning_cases::<S>(topo, &link_role(topo, link));
    let mut total = S::zero();
    for (_, _, w, _) in cases {
        total = total + w;
    }
    total / S::from_count(pairs)
}

/// Flow-by-link incidence with the per-flow status (`s`) and drop-count
/// (`c`) vectors feeding the covering programs.
#[derive(Clone, Debug, PartialEq)]
pub struct RoutingMatrix {
    n_links: usize,
    rows: Vec<Vec<LinkId>>,
    drops: Vec<u32>,
}

#[derive(Debug, Error, PartialEq)]
pub enum MatrixError {
    #[error("failed flow {0} has an empty routing row")]
    EmptyFailedRow(usize),
    #[error("row/drop vector lengths differ")]
    LengthMismatch,
    #[error("link id out of range in row {0}")]
    LinkOutOfRange(usize),
    #[error("malformed csv: {0}")]
    BadCsv(String),
}

impl RoutingMatrix {
    pub fn from_rows(
        rows: Vec<Vec<LinkId>>,
        drops: Vec<u32>,
        n_links: usize,
    ) -> Result<Self, MatrixError> {
        if rows.len() != drops.len() {
            return Err(MatrixError::LengthMismatch);
        }
        for (i, row) in rows.iter().enumerate() {
            if row.iter().any(|l| l.index() >= n_links) {
                return Err(MatrixError::LinkOutOfRange(i));
            }
            if drops[i] >= 1 && row.is_empty() {
                return Err(MatrixError::EmptyFailedRow(i));
            }
        }
        Ok(Self { n_links, rows, drops })
    }

    pub fn n_links(&self) -> usize {
        self.n_links
    }

    pub fn n_flows(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, i: usize) -> &[LinkId] {
        &self.rows[i]
    }

    /// Status vector entry: did flow `i` retransmit.
    pub fn status(&self, i: usize) -> bool {
        self.drops[i] >= 1
    }

    /// Drop-count vector entry for flow `i`.
    pub fn drop_count(&self, i: usize) -> u32 {
        self.drops[i]
    }

    pub fn total_drops(&self) -> u64 {
        self.drops.iter().map(|c| *c as u64).sum()
    }

    pub fn failed_rows(&self) -> Vec<usize> {
        (0..self.rows.len()).filter(|i| self.status(*i)).collect()
    }

    /// Sparse triplet export, one `(flow_id, link_id)` row per incidence.
    pub fn write_triplet_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "flow_id,link_id")?;
        for (i, row) in self.rows.iter().enumerate() {
            for link in row {
                writeln!(w, "{},{}", i, link.0)?;
            }
        }
        Ok(())
    }

    /// Per-flow status export: `flow_id,s,c`.
    pub fn write_status_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "flow_id,s,c")?;
        for (i, c) in self.drops.iter().enumerate() {
            writeln!(w, "{},{},{}", i, u8::from(*c >= 1), c)?;
        }
        Ok(())
    }

    /// Rebuilds a matrix from the triplet and status exports.
    pub fn read_csv<R1: BufRead, R2: BufRead>(
        triplets: R1,
        status: R2,
        n_links: usize,
    ) -> Result<Self, MatrixError> {
        let mut drops = Vec::new();
        for (ln, line) in status.lines().enumerate() {
            let line = line.map_err(|e| MatrixError::BadCsv(e.to_string()))?;
            if ln == 0 {
                continue;
            }
            let mut parts = line.split(',');
            let _flow: usize = parse_field(&mut parts)?;
            let _s: u8 = parse_field(&mut parts)?;
            let c: u32 = parse_field(&mut parts)?;
            drops.push(c);
        }
        let mut rows = vec![Vec::new(); drops.len()];
        for (ln, line) in triplets.lines().enumerate() {
            let line = line.map_err(|e| MatrixError::BadCsv(e.to_string()))?;
            if ln == 0 {
                continue;
            }
            let mut parts = line.split(',');
            let flow: usize = parse_field(&mut parts)?;
            let link: u32 = parse_field(&mut parts)?;
            if flow >= rows.len() {
                return Err(MatrixError::BadCsv(format!("flow id {flow} outside status file")));
            }
            rows[flow].push(LinkId(link));
        }
        Self::from_rows(rows, drops, n_links)
    }
}

fn parse_field<'a, T: std::str::FromStr>(
    parts: &mut impl Iterator<Item = &'a str>,
) -> Result<T, MatrixError> {
    parts
        .next()
        .ok_or_else(|| MatrixError::BadCsv("missing field".into()))?
        .trim()
        .parse()
        .map_err(|_| MatrixError::BadCsv("unparseable field".into()))
}

/// Builds the routing matrix of an epoch's flows.
pub fn build_routing_matrix(flows: &[FlowRecord], n_links: usize) -> RoutingMatrix {
    let rows: Vec<Vec<LinkId>> = flows.iter().map(|f| f.path.links.clone()).collect();
    let drops: Vec<u32> = flows.iter().map(|f| f.total_drops()).collect();
    RoutingMatrix::from_rows(rows, drops, n_links).expect("flow paths are never empty")
}

/// Switches traversed by a path, each listed once, derived from the link
/// endpoint chain (hosts are skipped).
pub fn switches_on_path(topo: &Topology, path: &Path) -> Vec<SwitchId> {
    use crate::topology::Endpoint;
    let mut switches = Vec::with_capacity(path.links.len() + 1);
    for link in &path.links {
        let l = topo.link(*link);
        for ep in [l.a, l.b] {
            if let Endpoint::Switch(s) = ep {
                if !switches.contains(&s) {
                    switches.push(s);
                }
            }
        }
    }
    switches
}
