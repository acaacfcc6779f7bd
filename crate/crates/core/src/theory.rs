//! Closed-form calculators for the traceroute-budget and ranking-fidelity
//! analysis: traceroute rates and the host budget, the signal multiplier
//! `alpha`, the noise threshold on good-link drop rates, vote-probability
//! bounds, the per-event traversal table behind them, and the
//! large-deviation error bound.
//!
//! The rational formulas are generic over [`Scalar`] so tests can evaluate
//! them in exact arithmetic; the transcendental ones (KL divergence and the
//! exponential tail) are `f64`.

use serde::Serialize;
use thiserror::Error;

use crate::routing::inter_pod_probability;
use crate::scalar::Scalar;
use crate::topology::{ClosParams, LinkLevel};

#[derive(Debug, Error, PartialEq)]
pub enum TheoryError {
    #[error("k = {k} violates the failed-link bound k < {bound}")]
    KCondition { k: u32, bound: f64 },
    #[error("pod condition failed on term `{term}`")]
    PodCondition { term: &'static str },
    #[error("condition failed: {0}")]
    ConditionFailed(&'static str),
}

/// Host traceroute-rate cap derived from the switch ICMP cap.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Budget<S> {
    /// Traceroutes per host per second.
    pub c_t: S,
    /// False in single-pod fabrics, where the inter-pod term of the bound
    /// is undefined and only the `n1` term applies.
    pub inter_pod_defined: bool,
}

impl Budget<f64> {
    /// Whole traceroutes a host may start per epoch.
    pub fn per_epoch(&self, epoch_seconds: f64) -> u32 {
        let raw = (self.c_t * epoch_seconds + 1e-9).floor();
        if raw <= 0.0 {
            0
        } else if raw >= f64::from(u32::MAX) {
            u32::MAX
        } else {
            raw as u32
        }
    }
}

/// `C_t = T_max / (n0 H) * min[n1, n2 (n0 n_pod - 1) / (n0 (n_pod - 1))]`.
pub fn traceroute_budget<S: Scalar>(params: &ClosParams, t_max: S) -> Budget<S> {
    let n0 = u64::from(params.n0);
    let n1 = u64::from(params.n1);
    let n2 = u64::from(params.n2);
    let n_pod = u64::from(params.n_pod);
    let hosts = u64::from(params.hosts_per_tor);
    if hosts == 0 || t_max <= S::zero() {
        return Budget { c_t: S::zero(), inter_pod_defined: params.n_pod >= 2 };
    }
    let term_n1 = S::from_count(n1);
    let (limit, inter_pod_defined) = if n_pod >= 2 {
        let inter = S::ratio(n2 * (n0 * n_pod - 1), n0 * (n_pod - 1));
        let min = if inter < term_n1 { inter } else { term_n1 };
        (min, true)
    } else {
        (term_n1, false)
    };
    Budget { c_t: t_max * limit / S::from_count(n0 * hosts), inter_pod_defined }
}

/// Per-link traceroute rates implied by hosts tracing at `c_t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TracerouteRates<S> {
    /// Rate on a level-1 link: `C_t H / n1`.
    pub r1: S,
    /// Rate on a level-2 link: `(n0 / (n1 n2)) * interpod * C_t H`.
    pub r2: S,
    /// `max[n0 R1, n1 R2]`, the per-switch ICMP rate bound.
    pub switch_rate_bound: S,
    pub inter_pod_defined: bool,
}

pub fn traceroute_rates<S: Scalar>(params: &ClosParams, c_t: S) -> TracerouteRates<S> {
    let n0 = u64::from(params.n0);
    let n1 = u64::from(params.n1);
    let n2 = u64::from(params.n2);
    let hosts = u64::from(params.hosts_per_tor);
    let per_tor = c_t * S::from_count(hosts);
    let r1 = per_tor.clone() / S::from_count(n1);
    let inter_pod_defined = params.n_pod >= 2;
    let r2 = if inter_pod_defined {
        S::ratio(n0, n1 * n2) * inter_pod_probability::<S>(params) * per_tor
    } else {
        S::zero()
    };
    let tor_side = S::from_count(n0) * r1.clone();
    let spine_side = S::from_count(n1) * r2.clone();
    let switch_rate_bound = if tor_side < spine_side { spine_side } else { tor_side };
    TracerouteRates { r1, r2, switch_rate_bound, inter_pod_defined }
}

/// Largest admissible failed-link count: `n2 (n0 n_pod - 1) / (n0 (n_pod - 1))`.
///
/// `None` in single-pod fabrics where the bound is vacuous.
pub fn k_bound<S: Scalar>(params: &ClosParams) -> Option<S> {
    if params.n_pod < 2 {
        return None;
    }
    let n0 = u64::from(params.n0);
    let n2 = u64::from(params.n2);
    let n_pod = u64::from(params.n_pod);
    Some(S::ratio(n2 * (n0 * n_pod - 1), n0 * (n_pod - 1)))
}

/// Signal multiplier
/// `alpha = n0 (4 n0 - k)(n_pod - 1) / (n2 (n0 n_pod - 1) - n0 (n_pod - 1) k)`.
pub fn alpha<S: Scalar>(params: &ClosParams, k: u32) -> Result<S, TheoryError> {
    let n0 = i128::from(params.n0);
    let n2 = i128::from(params.n2);
    let n_pod = i128::from(params.n_pod);
    let k_i = i128::from(k);
    let den = n2 * (n0 * n_pod - 1) - n0 * (n_pod - 1) * k_i;
    if den <= 0 {
        let bound = k_bound::<f64>(params).unwrap_or(f64::INFINITY);
        return Err(TheoryError::KCondition { k, bound });
    }
    let num = n0 * (4 * n0 - k_i) * (n_pod - 1);
    if num < 0 {
        return Err(TheoryError::ConditionFailed("k exceeds 4 n0"));
    }
    Ok(S::ratio(num as u64, den as u64))
}

/// Retransmission probability of a `c`-packet connection over a link that
/// drops packets with probability `p`: `r = 1 - (1 - p)^c`.
pub fn retransmission_prob<S: Scalar>(p: S, c: u32) -> S {
    S::one() - (S::one() - p).powu(c)
}

/// Largest good-link drop rate that keeps bad links ranked above good ones:
/// `p_g <= (1 - (1 - p_b)^c_l) / (alpha c_u)`.
pub fn pg_threshold<S: Scalar>(p_b: S, c_l: u32, c_u: u32, alpha: S) -> Result<S, TheoryError> {
    if alpha <= S::zero() {
        return Err(TheoryError::ConditionFailed("alpha must be positive"));
    }
    if c_u == 0 {
        return Err(TheoryError::ConditionFailed("c_u must be positive"));
    }
    Ok(retransmission_prob(p_b, c_l) / (alpha * S::from_count(u64::from(c_u))))
}

/// Pod condition of the ranking analysis:
/// `n0 >= n2` and `n_pod >= 1 + max[n0/n1, n2(n0-1)/(n0(n0-n2)), 1]`.
///
/// All comparisons are exact integer arithmetic.
pub fn pod_condition(params: &ClosParams) -> Result<(), TheoryError> {
    let n0 = u64::from(params.n0);
    let n1 = u64::from(params.n1);
    let n2 = u64::from(params.n2);
    let n_pod = u64::from(params.n_pod);
    if n0 < n2 {
        return Err(TheoryError::PodCondition { term: "n0 >= n2" });
    }
    if (n_pod - 1) * n1 < n0 {
        return Err(TheoryError::PodCondition { term: "n_pod >= 1 + n0/n1" });
    }
    if n0 == n2 {
        // The middle term diverges unless its numerator vanishes (n0 = 1).
        if n0 != 1 {
            return Err(TheoryError::PodCondition {
                term: "n_pod >= 1 + n2(n0-1)/(n0(n0-n2))",
            });
        }
    } else if (n_pod - 1) * n0 * (n0 - n2) < n2 * (n0 - 1) {
        return Err(TheoryError::PodCondition {
            term: "n_pod >= 1 + n2(n0-1)/(n0(n0-n2))",
        });
    }
    if n_pod < 2 {
        return Err(TheoryError::PodCondition { term: "n_pod >= 2" });
    }
    Ok(())
}

pub fn pod_condition_holds(params: &ClosParams) -> bool {
    pod_condition(params).is_ok()
}

/// Lower bound on a bad link's vote probability and upper bound on a good
/// link's, in terms of the retransmission probabilities `r_b`, `r_g`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VoteBounds<S> {
    /// `v_b >= r_b / (n0 n1 n_pod)`.
    pub v_b_lower: S,
    /// `v_g <= (1/(n1 n2 n_pod)) interpod [(4 - k/n0) r_g + (k/n0) r_b]`.
    pub v_g_upper: S,
}

impl<S: Scalar> VoteBounds<S> {
    /// Whether the bounds already certify bad-above-good ranking.
    pub fn separated(&self) -> bool {
        self.v_b_lower >= self.v_g_upper
    }
}

pub fn vote_prob_bounds<S: Scalar>(
    params: &ClosParams,
    k: u32,
    r_b: S,
    r_g: S,
) -> Result<VoteBounds<S>, TheoryError> {
    pod_condition(params)?;
    if k > params.n0 {
        return Err(TheoryError::ConditionFailed("bounds require k <= n0"));
    }
    let n0 = u64::from(params.n0);
    let n1 = u64::from(params.n1);
    let n2 = u64::from(params.n2);
    let n_pod = u64::from(params.n_pod);
    let v_b_lower = r_b.clone() / S::from_count(n0 * n1 * n_pod);
    let v_g_upper = good_vote_bound_level2(params, k, r_g, r_b)?;
    let _ = (n1, n2, n_pod);
    Ok(VoteBounds { v_b_lower, v_g_upper })
}

/// Worst-case vote-probability bound for a good level-1 link with `k <= n2`
/// adversarially placed bad links.
pub fn good_vote_bound_level1<S: Scalar>(
    params: &ClosParams,
    k: u32,
    r_g: S,
    r_b: S,
) -> Result<S, TheoryError> {
    if k > params.n2 {
        return Err(TheoryError::ConditionFailed("level-1 bound requires k <= n2"));
    }
    if params.n_pod < 2 {
        return Err(TheoryError::ConditionFailed("bound requires n_pod >= 2"));
    }
    let n0 = u64::from(params.n0);
    let n1 = u64::from(params.n1);
    let n2 = u64::from(params.n2);
    let n_pod = u64::from(params.n_pod);
    let k = u64::from(k);
    let base = S::ratio(1, n0 * n1 * n_pod) * inter_pod_probability::<S>(params);
    let good_coef = S::from_count(4) - S::ratio(k, n2)
        + S::ratio(2 * (n0 - 1), n0 * (n_pod - 1));
    Ok(base * (good_coef * r_g + S::ratio(k, n2) * r_b))
}

/// Worst-case vote-probability bound for a good level-2 link with `k <= n0`
/// adversarially placed bad links. This dominates the level-1 bound for
/// `n_pod >= 2` and is the overall good-link bound.
pub fn good_vote_bound_level2<S: Scalar>(
    params: &ClosParams,
    k: u32,
    r_g: S,
    r_b: S,
) -> Result<S, TheoryError> {
    if k > params.n0 {
        return Err(TheoryError::ConditionFailed("level-2 bound requires k <= n0"));
    }
    if params.n_pod < 2 {
        return Err(TheoryError::ConditionFailed("bound requires n_pod >= 2"));
    }
    let n0 = u64::from(params.n0);
    let n1 = u64::from(params.n1);
    let n2 = u64::from(params.n2);
    let n_pod = u64::from(params.n_pod);
    let k = u64::from(k);
    let base = S::ratio(1, n1 * n2 * n_pod) * inter_pod_probability::<S>(params);
    let good_coef = S::from_count(4) - S::ratio(k, n0);
    Ok(base * (good_coef * r_g + S::ratio(k, n0) * r_b))
}

/// One way a traversed link can be voted: some link class on the same path
/// causes the retransmission.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EventClass<S> {
    pub name: &'static str,
    /// Per-link weight multiplying the retransmission probability of each
    /// link in the class.
    pub coefficient: S,
    /// Number of links in the class.
    pub link_count: u64,
}

/// Event decomposition of "a fixed level-1/level-2 link receives a vote":
/// traversal probability times the union of per-class retransmission
/// events.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EventTable<S> {
    pub level: LinkLevel,
    /// Probability that a uniform flow traverses the fixed link
    /// (source-directed; `Pr[A0]` / `Pr[B0]`).
    pub traverse: S,
    pub events: Vec<EventClass<S>>,
}

impl<S: Scalar> EventTable<S> {
    /// Union-bound vote probability when every link in every class has the
    /// same retransmission probability `r`.
    pub fn vote_probability_uniform(&self, r: S) -> S {
        let mut sum = S::zero();
        for e in &self.events {
            sum = sum + e.coefficient.clone() * S::from_count(e.link_count) * r.clone();
        }
        self.traverse.clone() * sum
    }
}

/// Per-event probability table for a level-1 or level-2 link under uniform
/// traffic, parameterized by per-link retransmission probabilities through
/// the `(coefficient, link_count)` pairs.
pub fn event_probabilities<S: Scalar>(
    params: &ClosParams,
    level: LinkLevel,
) -> Result<EventTable<S>, TheoryError> {
    if params.n_pod < 2 {
        return Err(TheoryError::ConditionFailed("event table requires n_pod >= 2"));
    }
    let n0 = u64::from(params.n0);
    let n1 = u64::from(params.n1);
    let n2 = u64::from(params.n2);
    let n_pod = u64::from(params.n_pod);
    let interpod = inter_pod_probability::<S>(params);
    match level {
        LinkLevel::Level1 => {
            let events = vec![
                EventClass { name: "self", coefficient: S::one(), link_count: 1 },
                EventClass {
                    name: "same_pod_down_l1",
                    coefficient: S::ratio(1, n0 * n_pod - 1),
                    link_count: n0 - 1,
                },
                EventClass {
                    name: "origin_pod_up_l2",
                    coefficient: interpod.clone() * S::ratio(1, n2),
                    link_count: n2,
                },
                EventClass {
                    name: "far_pod_down_l2",
                    coefficient: S::ratio(n0, n0 * n_pod - 1) * S::ratio(1, n1 * n2),
                    link_count: n1 * n2 * (n_pod - 1),
                },
                EventClass {
                    name: "far_pod_down_l1",
                    coefficient: S::ratio(1, n0 * n_pod - 1) * S::ratio(1, n1),
                    link_count: n0 * n1 * (n_pod - 1),
                },
            ];
            Ok(EventTable {
                level,
                traverse: S::ratio(1, n0 * n1 * n_pod),
                events,
            })
        }
        LinkLevel::Level2 => {
            let events = vec![
                EventClass { name: "self", coefficient: S::one(), link_count: 1 },
                EventClass {
                    name: "origin_pod_l1",
                    coefficient: S::ratio(1, n0),
                    link_count: n0,
                },
                EventClass {
                    name: "far_pod_down_l2",
                    coefficient: S::ratio(1, n1 * (n_pod - 1)),
                    link_count: n1 * (n_pod - 1),
                },
                EventClass {
                    name: "far_pod_down_l1",
                    coefficient: S::ratio(1, n0 * n1 * (n_pod - 1)),
                    link_count: n0 * n1 * (n_pod - 1),
                },
            ];
            Ok(EventTable {
                level,
                traverse: S::ratio(1, n_pod) * interpod * S::ratio(1, n1 * n2),
                events,
            })
        }
        LinkLevel::Host => Err(TheoryError::ConditionFailed(
            "event table is defined for switch-level links",
        )),
    }
}

/// Kullback-Leibler divergence between Bernoulli(q) and Bernoulli(r), in
/// nats. Infinite when the supports disagree.
pub fn kl_bernoulli(q: f64, r: f64) -> f64 {
    assert!((0.0..=1.0).contains(&q) && (0.0..=1.0).contains(&r));
    if q == r {
        return 0.0;
    }
    let term = |a: f64, b: f64| -> f64 {
        if a == 0.0 {
            0.0
        } else if b == 0.0 {
            f64::INFINITY
        } else {
            a * (a / b).ln()
        }
    };
    term(q, r) + term(1.0 - q, 1.0 - r)
}

/// Two-term exponential error bound of the ranking analysis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EpsilonBound {
    pub epsilon: f64,
    pub delta: f64,
    pub kl_good: f64,
    pub kl_bad: f64,
}

/// `epsilon = e^{-N KL((1+d) v_g || v_g)} + e^{-N KL((1-d) v_b || v_b)}`
/// with `d` defaulting to its maximal admissible value
/// `(v_b - v_g)/(v_b + v_g)`. The result is clamped to a valid tail
/// probability.
pub fn epsilon_bound(
    n_flows: u64,
    v_g: f64,
    v_b: f64,
    delta: Option<f64>,
) -> Result<EpsilonBound, TheoryError> {
    if !(v_g > 0.0 && v_g < 1.0 && v_b > 0.0 && v_b < 1.0) {
        return Err(TheoryError::ConditionFailed("vote probabilities must lie in (0,1)"));
    }
    if v_b < v_g {
        return Err(TheoryError::ConditionFailed("bound requires v_b >= v_g"));
    }
    let mut delta = match delta {
        Some(d) => {
            if !(0.0..=1.0).contains(&d) {
                return Err(TheoryError::ConditionFailed("delta must lie in [0,1]"));
            }
            d
        }
        None => (v_b - v_g) / (v_b + v_g),
    };
    if (1.0 + delta) * v_g > 1.0 {
        delta = 1.0 / v_g - 1.0;
    }
    let kl_good = kl_bernoulli((1.0 + delta) * v_g, v_g);
    let kl_bad = kl_bernoulli((1.0 - delta) * v_b, v_b);
    let n = n_flows as f64;
    let epsilon = ((-n * kl_good).exp() + (-n * kl_bad).exp()).min(1.0);
    Ok(EpsilonBound { epsilon, delta, kl_good, kl_bad })
}

/// Inputs beyond the fabric parameters needed for a full bound report.
#[derive(Clone, Copy, Debug, Serialize, serde::Deserialize)]
pub struct BoundInputs {
    pub t_max: f64,
    pub k: u32,
    pub p_b: f64,
    pub p_g: f64,
    pub c_l: u32,
    pub c_u: u32,
    pub n_flows: u64,
    #[serde(default)]
    pub delta: Option<f64>,
}

/// Every closed-form quantity evaluated for one parameterization.
///
/// Fields that depend on a failed precondition are `None`; the condition
/// booleans say which ones.
#[derive(Clone, Debug, Serialize)]
pub struct BoundReport {
    pub params: ClosParams,
    pub t_max: f64,
    pub c_t: f64,
    pub inter_pod_defined: bool,
    pub r1: f64,
    pub r2: f64,
    pub switch_rate_bound: f64,
    pub inter_pod_probability: f64,
    pub k: u32,
    pub k_bound: Option<f64>,
    pub k_condition_ok: bool,
    pub pod_condition_ok: bool,
    pub pod_condition_failure: Option<String>,
    pub alpha: Option<f64>,
    pub p_b: f64,
    pub p_g: f64,
    pub c_l: u32,
    pub c_u: u32,
    pub r_b: f64,
    pub r_g: f64,
    pub pg_threshold: Option<f64>,
    pub noise_condition_ok: Option<bool>,
    pub v_b_lower: Option<f64>,
    pub v_g_upper: Option<f64>,
    pub bounds_separated: Option<bool>,
    pub n_flows: u64,
    pub delta: Option<f64>,
    pub kl_good: Option<f64>,
    pub kl_bad: Option<f64>,
    pub epsilon: Option<f64>,
}

impl BoundReport {
    pub fn compute(params: &ClosParams, inputs: &BoundInputs) -> Self {
        let budget = traceroute_budget::<f64>(params, inputs.t_max);
        let rates = traceroute_rates::<f64>(params, budget.c_t);
        let k_bound_v = k_bound::<f64>(params);
        let k_condition_ok = k_bound_v.is_some_and(|b| f64::from(inputs.k) < b);
        let pod = pod_condition(params);
        let alpha_v = alpha::<f64>(params, inputs.k).ok();
        let r_b = retransmission_prob(inputs.p_b, inputs.c_l);
        let r_g = retransmission_prob(inputs.p_g, inputs.c_u);
        let pg_threshold_v = alpha_v
            .and_then(|a| pg_threshold(inputs.p_b, inputs.c_l, inputs.c_u, a).ok());
        let vote_bounds = vote_prob_bounds::<f64>(params, inputs.k, r_b, r_g).ok();
        let eps = vote_bounds.as_ref().and_then(|vb| {
            epsilon_bound(inputs.n_flows, vb.v_g_upper, vb.v_b_lower, inputs.delta).ok()
        });
        BoundReport {
            params: *params,
            t_max: inputs.t_max,
            c_t: budget.c_t,
            inter_pod_defined: budget.inter_pod_defined,
            r1: rates.r1,
            r2: rates.r2,
            switch_rate_bound: rates.switch_rate_bound,
            inter_pod_probability: inter_pod_probability::<f64>(params),
            k: inputs.k,
            k_bound: k_bound_v,
            k_condition_ok,
            pod_condition_ok: pod.is_ok(),
            pod_condition_failure: pod.err().map(|e| e.to_string()),
            alpha: alpha_v,
            p_b: inputs.p_b,
            p_g: inputs.p_g,
            c_l: inputs.c_l,
            c_u: inputs.c_u,
            r_b,
            r_g,
            pg_threshold: pg_threshold_v,
            noise_condition_ok: pg_threshold_v.map(|t| inputs.p_g <= t),
            v_b_lower: vote_bounds.as_ref().map(|vb| vb.v_b_lower),
            v_g_upper: vote_bounds.as_ref().map(|vb| vb.v_g_upper),
            bounds_separated: vote_bounds.as_ref().map(VoteBounds::separated),
            n_flows: inputs.n_flows,
            delta: eps.map(|e| e.delta),
            kl_good: eps.map(|e| e.kl_good),
            kl_bad: eps.map(|e| e.kl_bad),
            epsilon: eps.map(|e| e.epsilon),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
