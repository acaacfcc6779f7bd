//! Parameterized Clos fabrics with stable switch and link identifiers.
//!
//! A fabric has `n_pod` pods, each holding `n0` ToR and `n1` tier-1
//! switches wired as a complete bipartite block (level-1 links). All
//! tier-1 switches connect to every one of the `n2` global tier-2
//! switches (level-2 links). Each ToR optionally has `hosts_per_tor`
//! hosts hanging off it via host links.
//!
//! Identifiers are dense and assigned deterministically, sorted by
//! `(level, pod, lower-tier index, upper-tier index)`, so rebuilding the
//! same [`ClosParams`] always yields byte-identical serializations.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Dense switch identifier: ToRs first, then tier-1 per pod, then tier-2.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize, Deserialize)]
pub struct SwitchId(pub u32);

/// Dense host identifier, grouped by pod then ToR.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize, Deserialize)]
pub struct HostId(pub u32);

/// Dense link identifier; see the module docs for the assignment order.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize, Deserialize)]
pub struct LinkId(pub u32);

impl LinkId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Which tier boundary a link spans.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkLevel {
    /// Host to its ToR.
    Host,
    /// ToR to tier-1, inside one pod.
    Level1,
    /// Tier-1 to tier-2.
    Level2,
}

/// A link endpoint: either a host or a switch.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Endpoint {
    Host(HostId),
    Switch(SwitchId),
}

/// One undirected link. `a` is the lower-tier endpoint.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Link {
    pub id: LinkId,
    pub level: LinkLevel,
    pub a: Endpoint,
    pub b: Endpoint,
}

/// Size parameters of a Clos fabric.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct ClosParams {
    /// Number of pods.
    pub n_pod: u32,
    /// ToR switches per pod.
    pub n0: u32,
    /// Tier-1 switches per pod.
    pub n1: u32,
    /// Tier-2 switches (global).
    pub n2: u32,
    /// Hosts under each ToR.
    pub hosts_per_tor: u32,
    /// Whether host-to-ToR links are modeled as votable links.
    #[serde(default = "default_true")]
    pub include_host_links: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TopologyError {
    #[error("parameter `{field}` must be at least 1")]
    ZeroCount { field: &'static str },
    #[error("hosts_per_tor must be at least 1 when host links are enabled")]
    HostLinksWithoutHosts,
    #[error("endpoints are not adjacent in this fabric")]
    NotAdjacent,
}

impl ClosParams {
    /// Checks the count invariants without building index structures.
    pub fn validate(&self) -> Result<(), TopologyError> {
        for (value, field) in [
            (self.n_pod, "n_pod"),
            (self.n0, "n0"),
            (self.n1, "n1"),
            (self.n2, "n2"),
        ] {
            if value == 0 {
                return Err(TopologyError::ZeroCount { field });
            }
        }
        if self.include_host_links && self.hosts_per_tor == 0 {
            return Err(TopologyError::HostLinksWithoutHosts);
        }
        Ok(())
    }

    pub fn tor_count(&self) -> u32 {
        self.n_pod * self.n0
    }

    pub fn t1_count(&self) -> u32 {
        self.n_pod * self.n1
    }

    pub fn switch_count(&self) -> u32 {
        self.tor_count() + self.t1_count() + self.n2
    }

    pub fn host_count(&self) -> u32 {
        self.tor_count() * self.hosts_per_tor
    }

    pub fn host_link_count(&self) -> u32 {
        if self.include_host_links {
            self.host_count()
        } else {
            0
        }
    }

    pub fn level1_count(&self) -> u32 {
        self.n_pod * self.n0 * self.n1
    }

    pub fn level2_count(&self) -> u32 {
        self.n_pod * self.n1 * self.n2
    }

    pub fn link_count(&self) -> u32 {
        self.host_link_count() + self.level1_count() + self.level2_count()
    }
}

/// An immutable Clos fabric. Safe to share across threads.
#[derive(Clone, Debug)]
pub struct Topology {
    params: ClosParams,
    links: Vec<Link>,
}

impl Topology {
    /// Builds the fabric, assigning identifiers deterministically.
    pub fn build(params: ClosParams) -> Result<Self, TopologyError> {
        params.validate()?;
        let mut links = Vec::with_capacity(params.link_count() as usize);
        let mut next = 0u32;
        if params.include_host_links {
            for pod in 0..params.n_pod {
                for tor in 0..params.n0 {
                    for slot in 0..params.hosts_per_tor {
                        let host = host_id(&params, pod, tor, slot);
                        links.push(Link {
                            id: LinkId(next),
                            level: LinkLevel::Host,
                            a: Endpoint::Host(host),
                            b: Endpoint::Switch(tor_id(&params, pod, tor)),
                        });
                        next += 1;
                    }
                }
            }
        }
        for pod in 0..params.n_pod {
            for tor in 0..params.n0 {
                for t1 in 0..params.n1 {
                    links.push(Link {
                        id: LinkId(next),
                        level: LinkLevel::Level1,
                        a: Endpoint::Switch(tor_id(&params, pod, tor)),
                        b: Endpoint::Switch(t1_id(&params, pod, t1)),
                    });
                    next += 1;
                }
            }
        }
        for pod in 0..params.n_pod {
            for t1 in 0..params.n1 {
                for t2 in 0..params.n2 {
                    links.push(Link {
                        id: LinkId(next),
                        level: LinkLevel::Level2,
                        a: Endpoint::Switch(t1_id(&params, pod, t1)),
                        b: Endpoint::Switch(t2_id(&params, t2)),
                    });
                    next += 1;
                }
            }
        }
        Ok(Self { params, links })
    }

    pub fn params(&self) -> &ClosParams {
        &self.params
    }

    pub fn link_count(&self) -> usize {
        self.links.len()
    }

    pub fn link(&self, id: LinkId) -> &Link {
        &self.links[id.index()]
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    /// All links of one level, in id order.
    pub fn links_by_level(&self, level: LinkLevel) -> &[Link] {
        let (start, len) = self.level_range(level);
        &self.links[start..start + len]
    }

    fn level_range(&self, level: LinkLevel) -> (usize, usize) {
        let p = &self.params;
        match level {
            LinkLevel::Host => (0, p.host_link_count() as usize),
            LinkLevel::Level1 => (p.host_link_count() as usize, p.level1_count() as usize),
            LinkLevel::Level2 => (
                (p.host_link_count() + p.level1_count()) as usize,
                p.level2_count() as usize,
            ),
        }
    }

    // Identifier helpers. All panic on out-of-range indices.

    pub fn tor(&self, pod: u32, tor: u32) -> SwitchId {
        assert!(pod < self.params.n_pod && tor < self.params.n0);
        tor_id(&self.params, pod, tor)
    }

    pub fn tier1(&self, pod: u32, t1: u32) -> SwitchId {
        assert!(pod < self.params.n_pod && t1 < self.params.n1);
        t1_id(&self.params, pod, t1)
    }

    pub fn tier2(&self, t2: u32) -> SwitchId {
        assert!(t2 < self.params.n2);
        t2_id(&self.params, t2)
    }

    pub fn host(&self, pod: u32, tor: u32, slot: u32) -> HostId {
        assert!(pod < self.params.n_pod && tor < self.params.n0 && slot < self.params.hosts_per_tor);
        host_id(&self.params, pod, tor, slot)
    }

    /// The ToR a host hangs off.
    pub fn tor_of_host(&self, host: HostId) -> SwitchId {
        SwitchId(host.0 / self.params.hosts_per_tor)
    }

    /// Global ToR index (`pod * n0 + tor`) of a ToR switch id.
    pub fn tor_index(&self, tor: SwitchId) -> u32 {
        debug_assert!(tor.0 < self.params.tor_count());
        tor.0
    }

    pub fn tor_from_index(&self, index: u32) -> SwitchId {
        assert!(index < self.params.tor_count());
        SwitchId(index)
    }

    pub fn pod_of_tor(&self, tor: SwitchId) -> u32 {
        debug_assert!(tor.0 < self.params.tor_count());
        tor.0 / self.params.n0
    }

    pub fn pod_of_tier1(&self, t1: SwitchId) -> u32 {
        let offset = t1.0 - self.params.tor_count();
        offset / self.params.n1
    }

    /// Splits a tier-1 switch id into `(pod, index within pod)`.
    pub fn tier1_coords(&self, t1: SwitchId) -> (u32, u32) {
        let offset = t1.0 - self.params.tor_count();
        (offset / self.params.n1, offset % self.params.n1)
    }

    pub fn host_link(&self, host: HostId) -> Option<LinkId> {
        self.params.include_host_links.then_some(LinkId(host.0))
    }

    /// The unique level-1 link between a pod's `tor` and `t1` (indices within the pod).
    pub fn level1_link(&self, pod: u32, tor: u32, t1: u32) -> LinkId {
        let p = &self.params;
        LinkId(p.host_link_count() + (pod * p.n0 + tor) * p.n1 + t1)
    }

    /// The unique level-2 link between a pod's `t1` and global `t2`.
    pub fn level2_link(&self, pod: u32, t1: u32, t2: u32) -> LinkId {
        let p = &self.params;
        LinkId(p.host_link_count() + p.level1_count() + (pod * p.n1 + t1) * p.n2 + t2)
    }

    /// Total lookup of the link joining two endpoints.
    pub fn link_lookup(&self, a: Endpoint, b: Endpoint) -> Result<LinkId, TopologyError> {
        let (lo, hi) = match (a, b) {
            (Endpoint::Host(_), _) | (_, Endpoint::Switch(_)) => (a, b),
            _ => (b, a),
        };
        match (lo, hi) {
            (Endpoint::Host(h), Endpoint::Switch(s)) if h.0 < self.params.host_count() => {
                if self.tor_of_host(h) == s {
                    self.host_link(h).ok_or(TopologyError::NotAdjacent)
                } else {
                    Err(TopologyError::NotAdjacent)
                }
            }
            (Endpoint::Switch(x), Endpoint::Switch(y)) => self.switch_pair_link(x, y),
            _ => Err(TopologyError::NotAdjacent),
        }
    }

    fn switch_pair_link(&self, x: SwitchId, y: SwitchId) -> Result<LinkId, TopologyError> {
        let p = &self.params;
        let tor_end = p.tor_count();
        let t1_end = tor_end + p.t1_count();
        let class = |s: SwitchId| {
            if s.0 < tor_end {
                0
            } else if s.0 < t1_end {
                1
            } else if s.0 < t1_end + p.n2 {
                2
            } else {
                3
            }
        };
        let (cx, cy) = (class(x), class(y));
        let (lo, hi) = if cx <= cy { (x, y) } else { (y, x) };
        match (class(lo), class(hi)) {
            (0, 1) => {
                let pod = self.pod_of_tor(lo);
                let (t1_pod, t1_idx) = self.tier1_coords(hi);
                if pod == t1_pod {
                    Ok(self.level1_link(pod, lo.0 % p.n0, t1_idx))
                } else {
                    Err(TopologyError::NotAdjacent)
                }
            }
            (1, 2) => {
                let (pod, t1_idx) = self.tier1_coords(lo);
                let t2_idx = hi.0 - t1_end;
                Ok(self.level2_link(pod, t1_idx, t2_idx))
            }
            _ => Err(TopologyError::NotAdjacent),
        }
    }

    /// Debug JSON document: `{"params":{...},"links":[{"id","level","a","b"}...]}`.
    ///
    /// Endpoints are encoded as one integer space: switches keep their id,
    /// hosts are offset by the switch count.
    pub fn to_json(&self) -> String {
        let encode = |e: Endpoint| match e {
            Endpoint::Switch(s) => s.0,
            Endpoint::Host(h) => self.params.switch_count() + h.0,
        };
        let doc = TopologyDoc {
            params: self.params,
            links: self
                .links
                .iter()
                .map(|l| LinkDoc {
                    id: l.id.0,
                    level: l.level,
                    a: encode(l.a),
                    b: encode(l.b),
                })
                .collect(),
        };
        serde_json::to_string(&doc).expect("topology serializes")
    }
}

#[derive(Serialize)]
struct TopologyDoc {
    params: ClosParams,
    links: Vec<LinkDoc>,
}

#[derive(Serialize)]
struct LinkDoc {
    id: u32,
    level: LinkLevel,
    a: u32,
    b: u32,
}

fn tor_id(p: &ClosParams, pod: u32, tor: u32) -> SwitchId {
    SwitchId(pod * p.n0 + tor)
}

fn t1_id(p: &ClosParams, pod: u32, t1: u32) -> SwitchId {
    SwitchId(p.tor_count() + pod * p.n1 + t1)
}

fn t2_id(p: &ClosParams, t2: u32) -> SwitchId {
    SwitchId(p.tor_count() + p.t1_count() + t2)
}

fn host_id(p: &ClosParams, pod: u32, tor: u32, slot: u32) -> HostId {
    HostId((pod * p.n0 + tor) * p.hosts_per_tor + slot)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params(n_pod: u32, n0: u32, n1: u32, n2: u32, h: u32, host_links: bool) -> ClosParams {
        ClosParams {
            n_pod,
            n0,
            n1,
            n2,
            hosts_per_tor: h,
            include_host_links: host_links,
        }
    }

    #[test]
    fn link_counts_small_fabric() {
        // 8 level-1 + 8 level-2 + 4 host links, counted by hand from the
        // complete-bipartite wiring.
        let topo = Topology::build(params(2, 2, 2, 2, 1, true)).unwrap();
        assert_eq!(topo.links_by_level(LinkLevel::Level1).len(), 8);
        assert_eq!(topo.links_by_level(LinkLevel::Level2).len(), 8);
        assert_eq!(topo.links_by_level(LinkLevel::Host).len(), 4);
        assert_eq!(topo.link_count(), 20);
    }

    #[test]
    fn link_counts_minimal_fabric() {
        let topo = Topology::build(params(1, 1, 1, 1, 1, true)).unwrap();
        assert_eq!(topo.links_by_level(LinkLevel::Level1).len(), 1);
        assert_eq!(topo.links_by_level(LinkLevel::Level2).len(), 1);
        assert_eq!(topo.links_by_level(LinkLevel::Host).len(), 1);
    }

    #[test]
    fn link_counts_switch_fabric_only() {
        let topo = Topology::build(params(2, 20, 10, 10, 0, false)).unwrap();
        assert_eq!(topo.link_count(), 600);
        assert_eq!(topo.links_by_level(LinkLevel::Host).len(), 0);
    }

    #[test]
    fn rejects_zero_counts() {
        let err = Topology::build(params(0, 2, 2, 2, 1, true)).unwrap_err();
        assert_eq!(err, TopologyError::ZeroCount { field: "n_pod" });
        let err = Topology::build(params(2, 2, 0, 2, 1, true)).unwrap_err();
        assert_eq!(err, TopologyError::ZeroCount { field: "n1" });
        let err = Topology::build(params(2, 2, 2, 2, 0, true)).unwrap_err();
        assert_eq!(err, TopologyError::HostLinksWithoutHosts);
    }

    #[test]
    fn random_params_match_closed_form_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let p = params(
                rng.gen_range(1..=4),
                rng.gen_range(1..=6),
                rng.gen_range(1..=5),
                rng.gen_range(1..=5),
                rng.gen_range(1..=4),
                rng.gen_bool(0.5),
            );
            let topo = Topology::build(p).unwrap();
            assert_eq!(
                topo.links_by_level(LinkLevel::Level1).len() as u32,
                p.n_pod * p.n0 * p.n1
            );
            assert_eq!(
                topo.links_by_level(LinkLevel::Level2).len() as u32,
                p.n_pod * p.n1 * p.n2
            );
            assert_eq!(
                topo.links_by_level(LinkLevel::Host).len() as u32,
                if p.include_host_links {
                    p.n_pod * p.n0 * p.hosts_per_tor
                } else {
                    0
                }
            );
            assert_eq!(topo.link_count() as u32, p.link_count());
        }
    }

    #[test]
    fn rebuild_is_byte_identical() {
        let p = params(3, 4, 2, 3, 2, true);
        let a = Topology::build(p).unwrap().to_json();
        let b = Topology::build(p).unwrap().to_json();
        assert_eq!(a, b);
    }

    #[test]
    fn level_endpoints_respect_pods() {
        let topo = Topology::build(params(3, 3, 2, 2, 2, true)).unwrap();
        for link in topo.links_by_level(LinkLevel::Level1) {
            let (Endpoint::Switch(tor), Endpoint::Switch(t1)) = (link.a, link.b) else {
                panic!("level-1 links join two switches");
            };
            assert_eq!(topo.pod_of_tor(tor), topo.pod_of_tier1(t1));
        }
        for link in topo.links_by_level(LinkLevel::Level2) {
            let (Endpoint::Switch(t1), Endpoint::Switch(t2)) = (link.a, link.b) else {
                panic!("level-2 links join two switches");
            };
            let _ = topo.pod_of_tier1(t1);
            assert!(t2.0 >= topo.params().tor_count() + topo.params().t1_count());
        }
        for link in topo.links_by_level(LinkLevel::Host) {
            let (Endpoint::Host(h), Endpoint::Switch(tor)) = (link.a, link.b) else {
                panic!("host links join a host to a switch");
            };
            assert_eq!(topo.tor_of_host(h), tor);
        }
    }

    #[test]
    fn lookup_is_total_and_rejects_cross_pod() {
        let topo = Topology::build(params(2, 2, 2, 2, 1, true)).unwrap();
        let link = topo
            .link_lookup(
                Endpoint::Switch(topo.tor(0, 1)),
                Endpoint::Switch(topo.tier1(0, 0)),
            )
            .unwrap();
        assert_eq!(link, topo.level1_link(0, 1, 0));
        // ToR in pod 0 against tier-1 in pod 1: Clos links never cross pods
        // below tier-2.
        assert_eq!(
            topo.link_lookup(
                Endpoint::Switch(topo.tor(0, 0)),
                Endpoint::Switch(topo.tier1(1, 0)),
            ),
            Err(TopologyError::NotAdjacent)
        );
        assert_eq!(
            topo.links_by_level(LinkLevel::Level2).len() as u32,
            topo.params().n_pod * topo.params().n1 * topo.params().n2
        );
        // Every link resolves back through lookup.
        for l in topo.links() {
            assert_eq!(topo.link_lookup(l.a, l.b).unwrap(), l.id);
            assert_eq!(topo.link_lookup(l.b, l.a).unwrap(), l.id);
        }
    }
}
