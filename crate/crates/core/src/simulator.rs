//! Epoch-based flow-level simulation: inject per-link drop probabilities,
//! generate flows, drop packets, record ground truth, and account the
//! traceroute budget.
//!
//! A dropped packet is charged to exactly one link: the first link along
//! the path whose Bernoulli trial fails. Later links never see it, which
//! preserves the complement-product retransmission probability
//! `1 - prod (1 - p_i)^c` per flow.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::routing::{sample_dst_tor, sample_path, switches_on_path, Path, TrafficPattern};
use crate::theory::traceroute_budget;
use crate::topology::{HostId, LinkId, LinkLevel, Topology};

/// Half-open interval of per-packet drop probabilities.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateInterval {
    pub lo: f64,
    pub hi: f64,
}

impl RateInterval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn fixed(rate: f64) -> Self {
        Self { lo: rate, hi: rate }
    }

    pub fn validate(&self, what: &'static str) -> Result<(), ScenarioError> {
        if !(0.0..=1.0).contains(&self.lo) || !(0.0..=1.0).contains(&self.hi) || self.lo > self.hi
        {
            return Err(ScenarioError::BadInterval { what });
        }
        Ok(())
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.hi > self.lo {
            rng.gen_range(self.lo..self.hi)
        } else {
            self.lo
        }
    }
}

/// Where the failed links may land.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    /// Uniformly among all links.
    Uniform,
    /// Exactly these links.
    Fixed(Vec<LinkId>),
    /// Uniformly among links of the given levels.
    Levels(Vec<LinkLevel>),
}

/// Recipe for drawing a [`FailureScenario`].
///
/// `hot_failed_count` adds failures from a separate (by default much more
/// severe) rate interval on top of the `failed_count` ordinary ones, for
/// skewed multi-failure studies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub failed_count: u32,
    pub failed_rate: RateInterval,
    pub good_rate: RateInterval,
    pub placement: Placement,
    #[serde(default)]
    pub hot_failed_count: u32,
    #[serde(default = "default_hot_rate")]
    pub hot_failed_rate: RateInterval,
}

fn default_hot_rate() -> RateInterval {
    RateInterval::new(0.1, 1.0)
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            failed_count: 1,
            failed_rate: RateInterval::new(1e-4, 1e-2),
            good_rate: RateInterval::new(0.0, 1e-6),
            placement: Placement::Uniform,
            hot_failed_count: 0,
            hot_failed_rate: default_hot_rate(),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ScenarioError {
    #[error("{what} interval must satisfy 0 <= lo <= hi <= 1")]
    BadInterval { what: &'static str },
    #[error("placement yields {eligible} eligible links but {requested} failures requested")]
    TooManyFailures { eligible: usize, requested: u32 },
    #[error("fixed placement references link id out of range")]
    LinkOutOfRange,
}

/// Per-link drop probabilities with the failed set singled out.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailureScenario {
    pub drop_prob: Vec<f64>,
    pub failed: Vec<LinkId>,
}

impl FailureScenario {
    /// Draws a scenario: good links get a rate from the noise interval,
    /// the `failed_count` placed links get one from the failure interval.
    pub fn draw<R: Rng + ?Sized>(
        spec: &ScenarioSpec,
        topo: &Topology,
        rng: &mut R,
    ) -> Result<Self, ScenarioError> {
        spec.failed_rate.validate("failed_rate")?;
        spec.good_rate.validate("good_rate")?;
        spec.hot_failed_rate.validate("hot_failed_rate")?;
        let n_links = topo.link_count();
        let mut drop_prob = Vec::with_capacity(n_links);
        for _ in 0..n_links {
            drop_prob.push(spec.good_rate.sample(rng));
        }
        let eligible: Vec<LinkId> = match &spec.placement {
            Placement::Levels(levels) => levels
                .iter()
                .flat_map(|lv| topo.links_by_level(*lv))
                .map(|l| l.id)
                .collect(),
            _ => (0..n_links as u32).map(LinkId).collect(),
        };
        let ordinary = match &spec.placement {
            Placement::Fixed(links) => {
                if links.iter().any(|l| l.index() >= n_links) {
                    return Err(ScenarioError::LinkOutOfRange);
                }
                links.clone()
            }
            Placement::Uniform | Placement::Levels(_) => {
                if (spec.failed_count as usize) > eligible.len() {
                    return Err(ScenarioError::TooManyFailures {
                        eligible: eligible.len(),
                        requested: spec.failed_count,
                    });
                }
                sample_without_replacement(&eligible, spec.failed_count as usize, rng)
            }
        };
        let pool: Vec<LinkId> = eligible
            .iter()
            .copied()
            .filter(|l| !ordinary.contains(l))
            .collect();
        if (spec.hot_failed_count as usize) > pool.len() {
            return Err(ScenarioError::TooManyFailures {
                eligible: pool.len(),
                requested: spec.hot_failed_count,
            });
        }
        let hot = sample_without_replacement(&pool, spec.hot_failed_count as usize, rng);
        for link in &ordinary {
            drop_prob[link.index()] = spec.failed_rate.sample(rng);
        }
        for link in &hot {
            drop_prob[link.index()] = spec.hot_failed_rate.sample(rng);
        }
        let mut failed = ordinary;
        failed.extend(hot);
        failed.sort_unstable();
        failed.dedup();
        Ok(Self { drop_prob, failed })
    }

    pub fn is_failed(&self, link: LinkId) -> bool {
        self.failed.binary_search(&link).is_ok()
    }
}

fn sample_without_replacement<R: Rng + ?Sized>(
    pool: &[LinkId],
    k: usize,
    rng: &mut R,
) -> Vec<LinkId> {
    let mut pool = pool.to_vec();
    let mut picked = Vec::with_capacity(k);
    for _ in 0..k {
        let idx = rng.gen_range(0..pool.len());
        picked.push(pool.swap_remove(idx));
    }
    picked
}

/// Fixed or uniformly drawn integer count (inclusive bounds).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountSpec {
    Fixed(u32),
    Uniform(u32, u32),
}

impl CountSpec {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        match *self {
            CountSpec::Fixed(n) => n,
            CountSpec::Uniform(lo, hi) => rng.gen_range(lo..=hi),
        }
    }

    pub fn max(&self) -> u32 {
        match *self {
            CountSpec::Fixed(n) => n,
            CountSpec::Uniform(_, hi) => hi,
        }
    }

    pub fn validate(&self) -> bool {
        match *self {
            CountSpec::Fixed(_) => true,
            CountSpec::Uniform(lo, hi) => lo <= hi,
        }
    }
}

/// Traffic and tracing knobs for one epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrafficConfig {
    pub pattern: TrafficPattern,
    /// Connections each host opens per epoch.
    pub flows_per_host: CountSpec,
    pub packets_per_flow: CountSpec,
    pub epoch_seconds: f64,
    /// Switch-side ICMP cap feeding the host traceroute budget.
    pub t_max: f64,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        Self {
            pattern: TrafficPattern::Uniform,
            flows_per_host: CountSpec::Fixed(60),
            packets_per_flow: CountSpec::Fixed(100),
            epoch_seconds: 30.0,
            t_max: 100.0,
        }
    }
}

/// One simulated connection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowRecord {
    pub id: u32,
    pub src: HostId,
    pub dst: HostId,
    pub path: Path,
    pub packets: u32,
    /// Per-link drop counts aligned with `path.links`.
    pub drops: Vec<u32>,
    pub retransmitted: bool,
    /// Link with the most drops on this flow (ties to the lowest id).
    pub culprit: Option<LinkId>,
    /// Whether the flow was granted traceroute budget (its path is known
    /// to the analysis).
    pub traced: bool,
}

impl FlowRecord {
    pub fn total_drops(&self) -> u32 {
        self.drops.iter().sum()
    }

    pub fn hops(&self) -> usize {
        self.path.hops()
    }
}

/// Everything recorded during one epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochTrace {
    pub epoch: u32,
    pub flows: Vec<FlowRecord>,
    /// ICMP responses charged to each switch by traced flows.
    pub icmp_per_switch: Vec<u32>,
    pub traceroutes_per_host: Vec<u32>,
    /// Total packets dropped by each link across all flows.
    pub link_drop_totals: Vec<u64>,
    pub scenario: FailureScenario,
    pub epoch_seconds: f64,
    /// Per-host traceroute budget in force (flows per epoch).
    pub trace_budget_per_host: u32,
}

impl EpochTrace {
    pub fn traced_retransmitted(&self) -> impl Iterator<Item = &FlowRecord> {
        self.flows.iter().filter(|f| f.retransmitted && f.traced)
    }

    /// Per-switch ICMP rates in responses per second.
    pub fn icmp_rates(&self) -> impl Iterator<Item = f64> + '_ {
        self.icmp_per_switch
            .iter()
            .map(move |c| f64::from(*c) / self.epoch_seconds)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("trace serializes")
    }

    /// `flows.csv`: one row per flow.
    pub fn write_flows_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "flow_id,src,dst,h,packets,drops,retransmitted,culprit_link,traced")?;
        for f in &self.flows {
            let culprit = f.culprit.map(|l| l.0.to_string()).unwrap_or_default();
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                f.id,
                f.src.0,
                f.dst.0,
                f.hops(),
                f.packets,
                f.total_drops(),
                u8::from(f.retransmitted),
                culprit,
                u8::from(f.traced)
            )?;
        }
        Ok(())
    }

    /// `icmp.csv`: per-switch response rates.
    pub fn write_icmp_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "switch_id,rate")?;
        for (id, count) in self.icmp_per_switch.iter().enumerate() {
            writeln!(w, "{},{}", id, f64::from(*count) / self.epoch_seconds)?;
        }
        Ok(())
    }
}

/// Exact binomial draw via inverse CDF on a single uniform variate.
///
/// Falls back to per-trial Bernoulli sampling only when the PMF anchor
/// underflows (very large `n` at moderate `p`).
pub fn binomial_draw<R: Rng + ?Sized>(n: u32, p: f64, rng: &mut R) -> u32 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    if p > 0.5 {
        return n - binomial_draw(n, 1.0 - p, rng);
    }
    let q = 1.0 - p;
    let p0 = q.powi(n as i32);
    if p0 > 0.0 {
        let u: f64 = rng.gen();
        if u < p0 {
            return 0;
        }
        let ratio = p / q;
        let mut pmf = p0;
        let mut cum = p0;
        for k in 0..n {
            pmf *= f64::from(n - k) / f64::from(k + 1) * ratio;
            cum += pmf;
            if u < cum {
                return k + 1;
            }
        }
        n
    } else {
        (0..n).filter(|_| rng.gen_bool(p)).count() as u32
    }
}

/// Runs one epoch: per-host flow generation, packet dropping, ground-truth
/// culprit recording, and traceroute/ICMP accounting.
///
/// Flows are traced (path revealed to the analysis) only if they
/// retransmitted and their host still has budget; each flow is traced at
/// most once per epoch by construction.
pub fn run_epoch<R: Rng + ?Sized>(
    topo: &Topology,
    scenario: &FailureScenario,
    traffic: &TrafficConfig,
    epoch: u32,
    rng: &mut R,
) -> EpochTrace {
    let params = topo.params();
    assert_eq!(scenario.drop_prob.len(), topo.link_count(), "scenario covers every link");
    assert!(params.hosts_per_tor >= 1, "simulation requires hosts");
    let budget = traceroute_budget(params, traffic.t_max).per_epoch(traffic.epoch_seconds);
    let host_count = params.host_count();
    let mut flows = Vec::new();
    let mut icmp_per_switch = vec![0u32; params.switch_count() as usize];
    let mut traceroutes_per_host = vec![0u32; host_count as usize];
    let mut link_drop_totals = vec![0u64; topo.link_count()];
    let mut next_id = 0u32;
    for host in 0..host_count {
        let src = HostId(host);
        let src_tor = topo.tor_of_host(src);
        let n_flows = traffic.flows_per_host.sample(rng);
        for _ in 0..n_flows {
            let dst_tor =
                sample_dst_tor(params, &traffic.pattern, Some(topo.tor_index(src_tor)), rng);
            let dst = HostId(dst_tor * params.hosts_per_tor + rng.gen_range(0..params.hosts_per_tor));
            let path = sample_path(topo, src, dst, rng);
            let packets = traffic.packets_per_flow.sample(rng);
            let mut drops = vec![0u32; path.links.len()];
            let mut alive = packets;
            for (i, link) in path.links.iter().enumerate() {
                if alive == 0 {
                    break;
                }
                let p = scenario.drop_prob[link.index()];
                if p <= 0.0 {
                    continue;
                }
                let d = binomial_draw(alive, p, rng);
                if d > 0 {
                    drops[i] = d;
                    alive -= d;
                    link_drop_totals[link.index()] += u64::from(d);
                }
            }
            let retransmitted = alive < packets;
            let culprit = culprit_of(&path, &drops);
            let traced = retransmitted && traceroutes_per_host[host as usize] < budget;
            if traced {
                traceroutes_per_host[host as usize] += 1;
                for switch in switches_on_path(topo, &path) {
                    icmp_per_switch[switch.0 as usize] += 1;
                }
            }
            flows.push(FlowRecord {
                id: next_id,
                src,
                dst,
                path,
                packets,
                drops,
                retransmitted,
                culprit,
                traced,
            });
            next_id += 1;
        }
    }
    EpochTrace {
        epoch,
        flows,
        icmp_per_switch,
        traceroutes_per_host,
        link_drop_totals,
        scenario: scenario.clone(),
        epoch_seconds: traffic.epoch_seconds,
        trace_budget_per_host: budget,
    }
}

fn culprit_of(path: &Path, drops: &[u32]) -> Option<LinkId> {
    let mut best: Option<(u32, LinkId)> = None;
    for (link, d) in path.links.iter().zip(drops) {
        if *d == 0 {
            continue;
        }
        let better = match best {
            None => true,
            Some((count, id)) => *d > count || (*d == count && *link < id),
        };
        if better {
            best = Some((*d, *link));
        }
    }
    best.map(|(_, link)| link)
}

/// Outcome of ICMP-rate accounting against the switch cap.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct IcmpReport {
    /// Largest per-switch response rate observed (responses per second).
    pub max_rate: f64,
    /// Number of switches whose rate exceeded the cap.
    pub violations: u32,
    pub exceeded: bool,
}

/// Charges each switch on each traced path one ICMP response per traceroute
/// (already accumulated in the trace) and compares rates against `t_max`.
pub fn account_icmp(trace: &EpochTrace, t_max: f64) -> IcmpReport {
    let mut max_rate = 0.0f64;
    let mut violations = 0u32;
    for rate in trace.icmp_rates() {
        if rate > max_rate {
            max_rate = rate;
        }
        if rate > t_max {
            violations += 1;
        }
    }
    IcmpReport { max_rate, violations, exceeded: violations > 0 }
}

/// Ground-truth drop class of a retransmitted flow.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DropClass {
    /// The culprit link dropped exactly one packet in the whole epoch.
    Noise,
    Failure,
}

/// Per-flow ground truth: culprit link and noise partition.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    /// Indexed by position in `trace.flows`; `None` for healthy flows.
    pub verdicts: Vec<Option<(LinkId, DropClass)>>,
}

pub fn ground_truth(trace: &EpochTrace) -> GroundTruth {
    let verdicts = trace
        .flows
        .iter()
        .map(|f| {
            f.culprit.map(|link| {
                let class = if trace.link_drop_totals[link.index()] == 1 {
                    DropClass::Noise
                } else {
                    DropClass::Failure
                };
                (link, class)
            })
        })
        .collect();
    GroundTruth { verdicts }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::ClosParams;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fabric(n_pod: u32, n0: u32, n1: u32, n2: u32, h: u32) -> Topology {
        Topology::build(ClosParams {
            n_pod,
            n0,
            n1,
            n2,
            hosts_per_tor: h,
            include_host_links: true,
        })
        .unwrap()
    }

    fn quiet_scenario(topo: &Topology) -> FailureScenario {
        FailureScenario { drop_prob: vec![0.0; topo.link_count()], failed: vec![] }
    }

    #[test]
    fn zero_rates_mean_zero_retransmissions() {
        let topo = fabric(2, 2, 2, 2, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let trace = run_epoch(&topo, &quiet_scenario(&topo), &TrafficConfig::default(), 0, &mut rng);
        assert!(trace.flows.iter().all(|f| !f.retransmitted));
        assert!(ground_truth(&trace).verdicts.iter().all(Option::is_none));
    }

    #[test]
    fn rate_one_link_always_blamed() {
        let topo = fabric(2, 2, 1, 1, 1);
        let bad = topo.level2_link(0, 0, 0);
        let mut scenario = quiet_scenario(&topo);
        scenario.drop_prob[bad.index()] = 1.0;
        scenario.failed = vec![bad];
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let trace = run_epoch(&topo, &scenario, &TrafficConfig::default(), 0, &mut rng);
        for f in &trace.flows {
            if f.path.contains(bad) {
                assert!(f.retransmitted);
                assert_eq!(f.culprit, Some(bad));
                assert_eq!(f.total_drops(), f.packets);
            } else {
                assert!(!f.retransmitted);
            }
        }
    }

    #[test]
    fn retransmission_fraction_matches_binomial() {
        let topo = fabric(2, 4, 2, 2, 4);
        let bad = topo.level1_link(0, 0, 0);
        let mut scenario = quiet_scenario(&topo);
        scenario.drop_prob[bad.index()] = 0.01;
        scenario.failed = vec![bad];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut through = 0usize;
        let mut retrans = 0usize;
        for epoch in 0..60 {
            let trace = run_epoch(&topo, &scenario, &TrafficConfig::default(), epoch, &mut rng);
            for f in &trace.flows {
                if f.path.contains(bad) {
                    through += 1;
                    retrans += usize::from(f.retransmitted);
                }
            }
        }
        assert!(through > 10_000, "need samples, got {through}");
        let expected = 1.0 - 0.99f64.powi(100);
        let frac = retrans as f64 / through as f64;
        let sigma = (expected * (1.0 - expected) / through as f64).sqrt();
        assert!((frac - expected).abs() <= 3.0 * sigma, "frac={frac} expected={expected}");
    }

    #[test]
    fn per_flow_retransmission_matches_complement_product() {
        // Mixed-rate path: first-failing-link accounting must preserve
        // 1 - prod(1-p_i)^c.
        let topo = fabric(1, 2, 1, 1, 1);
        let mut scenario = quiet_scenario(&topo);
        for p in &mut scenario.drop_prob {
            *p = 0.002;
        }
        scenario.drop_prob[topo.level1_link(0, 0, 0).index()] = 0.01;
        let traffic = TrafficConfig { packets_per_flow: CountSpec::Fixed(50), ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut total = 0usize;
        let mut retrans = 0usize;
        let mut expected = None;
        for epoch in 0..200 {
            let trace = run_epoch(&topo, &scenario, &traffic, epoch, &mut rng);
            for f in &trace.flows {
                if f.path.contains(topo.level1_link(0, 0, 0)) {
                    total += 1;
                    retrans += usize::from(f.retransmitted);
                    let prob = 1.0
                        - f.path
                            .links
                            .iter()
                            .map(|l| (1.0 - scenario.drop_prob[l.index()]).powi(50))
                            .product::<f64>();
                    expected = Some(prob);
                }
                let drops: u32 = f.drops.iter().sum();
                assert!(drops <= f.packets);
            }
        }
        let expected = expected.unwrap();
        assert!(total >= 10_000);
        let frac = retrans as f64 / total as f64;
        let sigma = (expected * (1.0 - expected) / total as f64).sqrt();
        assert!((frac - expected).abs() <= 3.0 * sigma, "frac={frac} expected={expected}");
    }

    #[test]
    fn binomial_draw_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (n, p, reps) = (50u32, 0.3f64, 100_000usize);
        let mut sum = 0u64;
        let mut sq = 0u64;
        for _ in 0..reps {
            let d = u64::from(binomial_draw(n, p, &mut rng));
            sum += d;
            sq += d * d;
        }
        let mean = sum as f64 / reps as f64;
        let var = sq as f64 / reps as f64 - mean * mean;
        let expect_mean = f64::from(n) * p;
        let expect_var = expect_mean * (1.0 - p);
        assert!((mean - expect_mean).abs() < 3.0 * (expect_var / reps as f64).sqrt());
        assert!((var - expect_var).abs() < 0.2 * expect_var);
        assert_eq!(binomial_draw(10, 0.0, &mut rng), 0);
        assert_eq!(binomial_draw(10, 1.0, &mut rng), 10);
    }

    #[test]
    fn same_seed_same_trace() {
        let topo = fabric(2, 2, 2, 2, 2);
        let spec = ScenarioSpec::default();
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(6);
            let scenario = FailureScenario::draw(&spec, &topo, &mut rng).unwrap();
            run_epoch(&topo, &scenario, &TrafficConfig::default(), 0, &mut rng).to_json()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn zero_budget_leaves_all_flows_untraced() {
        let topo = fabric(2, 2, 2, 2, 1);
        let bad = topo.level1_link(0, 0, 0);
        let mut scenario = quiet_scenario(&topo);
        scenario.drop_prob[bad.index()] = 1.0;
        scenario.failed = vec![bad];
        let traffic = TrafficConfig { t_max: 0.0, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let trace = run_epoch(&topo, &scenario, &traffic, 0, &mut rng);
        assert!(trace.flows.iter().any(|f| f.retransmitted));
        assert!(trace.flows.iter().all(|f| !f.traced));
        assert_eq!(trace.icmp_per_switch.iter().sum::<u32>(), 0);
    }

    #[test]
    fn saturated_demand_respects_budget() {
        let topo = fabric(2, 2, 2, 2, 1);
        let mut scenario = quiet_scenario(&topo);
        for p in &mut scenario.drop_prob {
            *p = 0.5;
        }
        // t_max = 0.5 caps each host at 15 traceroutes per 30 s epoch here,
        // well below the 60 retransmitting flows it generates.
        let traffic = TrafficConfig { t_max: 0.5, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let trace = run_epoch(&topo, &scenario, &traffic, 0, &mut rng);
        let budget = trace.trace_budget_per_host;
        assert!(budget > 0);
        for host in &trace.traceroutes_per_host {
            assert!(*host <= budget);
        }
        // Demand exceeds the budget here, so some flows are left untraced.
        assert!(trace.flows.iter().any(|f| f.retransmitted && !f.traced));
    }

    #[test]
    fn epoch_csv_exports_have_stable_schemas() {
        let topo = fabric(2, 2, 2, 2, 1);
        let spec = ScenarioSpec::default();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let scenario = FailureScenario::draw(&spec, &topo, &mut rng).unwrap();
        let trace = run_epoch(&topo, &scenario, &TrafficConfig::default(), 0, &mut rng);
        let mut flows = Vec::new();
        trace.write_flows_csv(&mut flows).unwrap();
        let flows = String::from_utf8(flows).unwrap();
        assert!(flows
            .starts_with("flow_id,src,dst,h,packets,drops,retransmitted,culprit_link,traced\n"));
        assert_eq!(flows.lines().count(), trace.flows.len() + 1);
        let mut icmp = Vec::new();
        trace.write_icmp_csv(&mut icmp).unwrap();
        let icmp = String::from_utf8(icmp).unwrap();
        assert!(icmp.starts_with("switch_id,rate\n"));
        assert_eq!(icmp.lines().count(), topo.params().switch_count() as usize + 1);
    }

    #[test]
    fn hot_failures_draw_from_their_own_interval() {
        let topo = fabric(2, 4, 2, 2, 2);
        let spec = ScenarioSpec {
            failed_count: 3,
            failed_rate: RateInterval::new(1e-4, 1e-3),
            hot_failed_count: 1,
            hot_failed_rate: RateInterval::new(0.1, 1.0),
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let scenario = FailureScenario::draw(&spec, &topo, &mut rng).unwrap();
        assert_eq!(scenario.failed.len(), 4);
        let hot: Vec<_> = scenario
            .failed
            .iter()
            .filter(|l| scenario.drop_prob[l.index()] >= 0.1)
            .collect();
        assert_eq!(hot.len(), 1);
        assert_eq!(
            scenario
                .failed
                .iter()
                .filter(|l| {
                    let p = scenario.drop_prob[l.index()];
                    (1e-4..1e-3).contains(&p)
                })
                .count(),
            3
        );
    }

    #[test]
    fn ground_truth_noise_partition() {
        let topo = fabric(1, 2, 1, 1, 1);
        let link = topo.level1_link(0, 0, 0);
        let path = Path { links: vec![link], inter_pod: false };
        let flow = |id: u32, drops: u32| FlowRecord {
            id,
            src: HostId(0),
            dst: HostId(1),
            path: path.clone(),
            packets: 10,
            drops: vec![drops],
            retransmitted: drops > 0,
            culprit: (drops > 0).then_some(link),
            traced: drops > 0,
        };
        let mut trace = EpochTrace {
            epoch: 0,
            flows: vec![flow(0, 1)],
            icmp_per_switch: vec![0; topo.params().switch_count() as usize],
            traceroutes_per_host: vec![0; topo.params().host_count() as usize],
            link_drop_totals: vec![0; topo.link_count()],
            scenario: quiet_scenario(&topo),
            epoch_seconds: 30.0,
            trace_budget_per_host: 10,
        };
        trace.link_drop_totals[link.index()] = 1;
        let gt = ground_truth(&trace);
        assert_eq!(gt.verdicts[0], Some((link, DropClass::Noise)));
        // Two drops across two flows: both flows are failure-class.
        trace.flows = vec![flow(0, 1), flow(1, 1)];
        trace.link_drop_totals[link.index()] = 2;
        let gt = ground_truth(&trace);
        assert_eq!(gt.verdicts[0], Some((link, DropClass::Failure)));
        assert_eq!(gt.verdicts[1], Some((link, DropClass::Failure)));
    }
}
