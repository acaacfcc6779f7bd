//! Covering-program baselines over the routing matrix.
//!
//! The binary program looks for the least number of links that explain
//! every failed flow (`A p >= s`); the integer program additionally assigns
//! whole drop counts to links (`A p >= c`, `sum p = sum c`), which yields a
//! ranking. Both are solved exactly at desk scale; the greedy algorithm
//! approximates the binary program.

use std::collections::BTreeMap;
use std::io::Write;
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::routing::RoutingMatrix;
use crate::topology::LinkId;

/// Search effort cap. Exceeding it yields the best solution found so far,
/// flagged non-optimal.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct SolverBudget {
    pub max_nodes: u64,
}

impl Default for SolverBudget {
    fn default() -> Self {
        Self { max_nodes: 5_000_000 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SolverStats {
    pub nodes: u64,
    pub optimal: bool,
    pub wall: Duration,
}

/// Solution of one covering program.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoverSolution {
    /// Selected links in pick order (greedy) or ascending id (exact).
    pub links: Vec<LinkId>,
    /// Drop counts per selected link; only the integer program fills this.
    pub counts: Option<BTreeMap<LinkId, u32>>,
    pub stats: SolverStats,
}

impl CoverSolution {
    /// Checks `A p >= s` row-wise against the matrix.
    pub fn satisfies_binary(&self, matrix: &RoutingMatrix) -> bool {
        (0..matrix.n_flows()).all(|i| {
            !matrix.status(i) || matrix.row(i).iter().any(|l| self.links.contains(l))
        })
    }

    /// Checks `A p >= c` row-wise and `sum p = sum c`.
    pub fn satisfies_integer(&self, matrix: &RoutingMatrix) -> bool {
        let Some(counts) = &self.counts else {
            return false;
        };
        let total: u64 = counts.values().map(|c| u64::from(*c)).sum();
        if total != matrix.total_drops() {
            return false;
        }
        (0..matrix.n_flows()).all(|i| {
            let explained: u64 = matrix
                .row(i)
                .iter()
                .filter_map(|l| counts.get(l))
                .map(|c| u64::from(*c))
                .sum();
            explained >= u64::from(matrix.drop_count(i))
        })
    }

    /// JSON export: `{"links":[...],"counts":{...},"optimal":bool}`.
    pub fn to_json(&self) -> String {
        let counts: BTreeMap<String, u32> = self
            .counts
            .as_ref()
            .map(|m| m.iter().map(|(l, c)| (l.0.to_string(), *c)).collect())
            .unwrap_or_default();
        serde_json::json!({
            "links": self.links.iter().map(|l| l.0).collect::<Vec<_>>(),
            "counts": counts,
            "optimal": self.stats.optimal,
        })
        .to_string()
    }
}

/// Candidate links (those on at least one failed row) with their failed-row
/// coverage as bitsets, after subset-dominance pruning.
struct Candidates {
    links: Vec<LinkId>,
    /// Coverage bitset per candidate, over `failed` row positions.
    coverage: Vec<Vec<u64>>,
    /// Failed row index -> candidate positions covering it.
    covering: Vec<Vec<usize>>,
    n_failed: usize,
}

fn blocks(n: usize) -> usize {
    n.div_ceil(64)
}

fn is_subset(a: &[u64], b: &[u64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x & !y == 0)
}

impl Candidates {
    fn build(matrix: &RoutingMatrix, prune: bool) -> Self {
        let failed = matrix.failed_rows();
        let n_failed = failed.len();
        let mut by_link: BTreeMap<LinkId, Vec<u64>> = BTreeMap::new();
        for (pos, row) in failed.iter().enumerate() {
            for link in matrix.row(*row) {
                let bits = by_link
                    .entry(*link)
                    .or_insert_with(|| vec![0u64; blocks(n_failed)]);
                bits[pos / 64] |= 1u64 << (pos % 64);
            }
        }
        let mut links: Vec<LinkId> = by_link.keys().copied().collect();
        let mut coverage: Vec<Vec<u64>> = links.iter().map(|l| by_link[l].clone()).collect();
        if prune {
            // Drop any link whose failed-row coverage is a subset of
            // another's; equal coverages keep the lowest id. At least one
            // optimum survives this reduction.
            let mut keep = vec![true; links.len()];
            for i in 0..links.len() {
                if !keep[i] {
                    continue;
                }
                for j in 0..links.len() {
                    if i == j || !keep[j] {
                        continue;
                    }
                    if is_subset(&coverage[i], &coverage[j])
                        && (coverage[i] != coverage[j] || links[j] < links[i])
                    {
                        keep[i] = false;
                        break;
                    }
                }
            }
            let mut kept_links = Vec::new();
            let mut kept_cov = Vec::new();
            for (i, k) in keep.iter().enumerate() {
                if *k {
                    kept_links.push(links[i]);
                    kept_cov.push(std::mem::take(&mut coverage[i]));
                }
            }
            links = kept_links;
            coverage = kept_cov;
        }
        let mut covering = vec![Vec::new(); n_failed];
        for (ci, bits) in coverage.iter().enumerate() {
            for (pos, slot) in covering.iter_mut().enumerate() {
                if bits[pos / 64] >> (pos % 64) & 1 == 1 {
                    slot.push(ci);
                }
            }
        }
        Self { links, coverage, covering, n_failed }
    }
}

/// Greedy set cover: repeatedly add the link explaining the most still
/// unexplained failed flows (ties to the lowest id) until all are covered.
pub fn greedy_cover(matrix: &RoutingMatrix) -> CoverSolution {
    let start = Instant::now();
    let cand = Candidates::build(matrix, false);
    let mut uncovered: Vec<u64> = vec![0u64; blocks(cand.n_failed)];
    for pos in 0..cand.n_failed {
        uncovered[pos / 64] |= 1u64 << (pos % 64);
    }
    let mut picked = Vec::new();
    let mut nodes = 0u64;
    while uncovered.iter().any(|b| *b != 0) {
        let mut best: Option<(u32, usize)> = None;
        for (ci, bits) in cand.coverage.iter().enumerate() {
            nodes += 1;
            let gain: u32 = bits
                .iter()
                .zip(&uncovered)
                .map(|(c, u)| (c & u).count_ones())
                .sum();
            if gain == 0 {
                continue;
            }
            let better = match best {
                None => true,
                Some((bg, bi)) => gain > bg || (gain == bg && cand.links[ci] < cand.links[bi]),
            };
            if better {
                best = Some((gain, ci));
            }
        }
        let (_, ci) = best.expect("failed rows are never empty");
        picked.push(cand.links[ci]);
        for (u, c) in uncovered.iter_mut().zip(&cand.coverage[ci]) {
            *u &= !c;
        }
    }
    CoverSolution {
        links: picked,
        counts: None,
        stats: SolverStats { nodes, optimal: false, wall: start.elapsed() },
    }
}

struct CoverSearch<'a> {
    cand: &'a Candidates,
    budget: u64,
    nodes: u64,
    exhausted: bool,
}

impl<'a> CoverSearch<'a> {
    /// Depth-limited search for a cover of exactly `depth` more links.
    /// Branches on the uncovered row with the fewest covering candidates.
    fn dfs(&mut self, uncovered: &[u64], depth: usize, chosen: &mut Vec<usize>) -> bool {
        if uncovered.iter().all(|b| *b == 0) {
            return true;
        }
        if depth == 0 {
            return false;
        }
        self.nodes += 1;
        if self.nodes > self.budget {
            self.exhausted = true;
            return false;
        }
        let mut pick: Option<(usize, usize)> = None;
        for pos in 0..self.cand.n_failed {
            if uncovered[pos / 64] >> (pos % 64) & 1 == 1 {
                let n = self.cand.covering[pos].len();
                if pick.is_none_or(|(_, best)| n < best) {
                    pick = Some((pos, n));
                }
            }
        }
        let (row, _) = pick.expect("some row is uncovered");
        for &ci in &self.cand.covering[row] {
            let mut next = uncovered.to_vec();
            for (u, c) in next.iter_mut().zip(&self.cand.coverage[ci]) {
                *u &= !c;
            }
            chosen.push(ci);
            if self.dfs(&next, depth - 1, chosen) {
                return true;
            }
            chosen.pop();
            if self.exhausted {
                return false;
            }
        }
        false
    }
}

/// Exact minimum-cardinality cover via iterative deepening over the support
/// size, with subset-dominance pruning of the candidates.
///
/// `k_cap` bounds the search depth; if no cover of size `<= k_cap` is found
/// (or the node budget runs out) the greedy solution is returned with
/// `optimal = false`.
pub fn exact_binary(matrix: &RoutingMatrix, k_cap: usize, budget: &SolverBudget) -> CoverSolution {
    let start = Instant::now();
    let cand = Candidates::build(matrix, true);
    let greedy = greedy_cover(matrix);
    if cand.n_failed == 0 {
        return CoverSolution {
            links: Vec::new(),
            counts: None,
            stats: SolverStats { nodes: 0, optimal: true, wall: start.elapsed() },
        };
    }
    let cap = k_cap.min(greedy.links.len());
    let mut search = CoverSearch { cand: &cand, budget: budget.max_nodes, nodes: 0, exhausted: false };
    let mut uncovered: Vec<u64> = vec![0u64; blocks(cand.n_failed)];
    for pos in 0..cand.n_failed {
        uncovered[pos / 64] |= 1u64 << (pos % 64);
    }
    for depth in 1..=cap {
        let mut chosen = Vec::new();
        if search.dfs(&uncovered, depth, &mut chosen) {
            let mut links: Vec<LinkId> = chosen.iter().map(|ci| cand.links[*ci]).collect();
            links.sort_unstable();
            links.dedup();
            return CoverSolution {
                links,
                counts: None,
                stats: SolverStats {
                    nodes: search.nodes,
                    optimal: !search.exhausted,
                    wall: start.elapsed(),
                },
            };
        }
        if search.exhausted {
            break;
        }
    }
    // Budget exceeded or cap too small: fall back to greedy, non-optimal.
    CoverSolution {
        links: greedy.links,
        counts: None,
        stats: SolverStats { nodes: search.nodes, optimal: false, wall: start.elapsed() },
    }
}

/// Exact integer program: lexicographically minimize the support size, then
/// assign whole drop counts.
///
/// Any minimum binary cover admits a count assignment with `sum p = sum c`
/// (give each failed row's count to one of its covering links), so the
/// support search reduces to the binary program; the counts returned here
/// assign each row's drops to its covering link with the widest coverage
/// (ties to the lowest id), which also satisfies `A p >= c`.
pub fn exact_integer(matrix: &RoutingMatrix, budget: &SolverBudget) -> CoverSolution {
    let start = Instant::now();
    let base = exact_binary(matrix, matrix.n_links(), budget);
    let mut counts: BTreeMap<LinkId, u32> = base.links.iter().map(|l| (*l, 0u32)).collect();
    let failed = matrix.failed_rows();
    for row in failed {
        let c = matrix.drop_count(row);
        let chosen = matrix
            .row(row)
            .iter()
            .filter(|l| counts.contains_key(l))
            .copied()
            .max_by_key(|l| {
                let coverage = matrix
                    .failed_rows()
                    .iter()
                    .filter(|r| matrix.row(**r).contains(l))
                    .count();
                (coverage, std::cmp::Reverse(l.0))
            });
        if let Some(link) = chosen {
            *counts.get_mut(&link).expect("chosen from counts") += c;
        }
    }
    CoverSolution {
        links: base.links,
        counts: Some(counts),
        stats: SolverStats {
            nodes: base.stats.nodes,
            optimal: base.stats.optimal,
            wall: start.elapsed(),
        },
    }
}

/// Ranking implied by an integer solution: counts descending, ties by id.
pub fn count_ranking(solution: &CoverSolution, n_links: usize) -> Vec<u32> {
    let mut order: Vec<LinkId> = (0..n_links as u32).map(LinkId).collect();
    let count_of = |l: &LinkId| {
        solution
            .counts
            .as_ref()
            .and_then(|m| m.get(l).copied())
            .unwrap_or(0)
    };
    order.sort_by(|a, b| count_of(b).cmp(&count_of(a)).then(a.0.cmp(&b.0)));
    let mut rank = vec![0u32; n_links];
    for (r, l) in order.iter().enumerate() {
        rank[l.index()] = r as u32;
    }
    rank
}

/// Writes a list of per-epoch solutions as a JSON array.
pub fn write_solutions_json<W: Write>(
    mut w: W,
    entries: &[(String, CoverSolution)],
) -> std::io::Result<()> {
    let items: Vec<serde_json::Value> = entries
        .iter()
        .map(|(label, sol)| {
            serde_json::json!({
                "label": label,
                "links": sol.links.iter().map(|l| l.0).collect::<Vec<_>>(),
                "counts": sol.counts.as_ref().map(|m| {
                    m.iter().map(|(l, c)| (l.0.to_string(), *c)).collect::<BTreeMap<_, _>>()
                }),
                "optimal": sol.stats.optimal,
                "nodes": sol.stats.nodes,
            })
        })
        .collect();
    writeln!(w, "{}", serde_json::to_string_pretty(&items).expect("serializes"))
}
