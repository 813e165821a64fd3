//! Exact cluster-head selection and assignment.
//!
//! Chooses `k` cluster heads `x_j` from the potential heads `H` and assigns
//! every alive node `i` to one of them (`y_ij`) so as to minimise
//!
//! ```text
//! α·Σ_i E_tx(i, CH(i))  +  β·Σ_{j ∈ CH} E_tx^ch(j)  +  γ·Σ_i E_rx(i)
//! ```
//!
//! subject to one head per node, exactly `k` heads, and assignments only to
//! selected heads. Once the head set is fixed the problem decomposes per
//! node: each node's best head is the one it can reach most cheaply, and the
//! `γ` term does not depend on the decision at all. What remains is a
//! k-facility location problem with opening costs, solved here by
//! best-first branch-and-bound over head subsets. [`solve_bruteforce`] is the
//! independent enumeration oracle used to check it.
//!
//! Solutions are ranked by `(objective, sorted head ids)`, so ties resolve to
//! the lexicographically smallest head list in both solvers.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{potential_heads, NetworkState, NodeId};
use crate::radio::RadioParams;

/// Largest enumeration [`solve_bruteforce`] accepts.
pub const BRUTEFORCE_LIMIT: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MilpWeights {
    /// Member → head transmission.
    pub alpha: f64,
    /// Head → base station transmission.
    pub beta: f64,
    /// Head reception from members.
    pub gamma: f64,
}

impl MilpWeights {
    /// Best weights of the reference weight sweep.
    pub const REFERENCE: MilpWeights = MilpWeights { alpha: 54.83, beta: 14.54, gamma: 35.31 };

    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        let w = Self { alpha, beta, gamma };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::param(name, format!("weights must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

impl Default for MilpWeights {
    fn default() -> Self {
        Self::REFERENCE
    }
}

/// A head set and node → head map, as the simulator consumes it.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Clustering {
    pub chs: Vec<NodeId>,
    pub assignment: BTreeMap<NodeId, NodeId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringSolution {
    /// Selected heads, ascending id.
    pub chs: Vec<NodeId>,
    /// Every alive node → its head; heads map to themselves.
    pub assignment: BTreeMap<NodeId, NodeId>,
    pub objective: f64,
    /// Set when fewer than the requested `k` candidates existed.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub k_clamped: bool,
}

impl From<ClusteringSolution> for Clustering {
    fn from(s: ClusteringSolution) -> Self {
        Clustering { chs: s.chs, assignment: s.assignment }
    }
}

impl ClusteringSolution {
    pub fn clustering(&self) -> Clustering {
        Clustering { chs: self.chs.clone(), assignment: self.assignment.clone() }
    }
}

/// Weighted objective of a solution.
///
/// Heads transmit to themselves at distance zero. Fails when an alive node is
/// unassigned or points at a node outside `chs`.
pub fn objective(s: &NetworkState, p: &RadioParams, w: &MilpWeights, sol: &Clustering) -> Result<f64> {
    for (&node, &head) in &sol.assignment {
        if sol.chs.binary_search(&head).is_err() && !sol.chs.contains(&head) {
            return Err(Error::AssignmentToNonHead { node, target: head });
        }
    }
    let mut member = 0.0;
    let mut rx = 0.0;
    for n in s.nodes.iter().filter(|n| n.alive) {
        let head = *sol.assignment.get(&n.id).ok_or(Error::MissingAssignment(n.id))?;
        let h = s.node(head).ok_or(Error::AssignmentToNonHead { node: n.id, target: head })?;
        member += p.tx_energy(p.b_data, n.distance_to(h));
        rx += p.rx_energy(p.b_data);
    }
    let mut heads = 0.0;
    for &j in &sol.chs {
        let idx = s.index_of(j).ok_or(Error::AssignmentToNonHead { node: j, target: j })?;
        heads += p.ch_tx_energy(p.b_data, s.distance_to_bs(idx));
    }
    Ok(w.alpha * member + w.beta * heads + w.gamma * rx)
}

/// Assigns each alive node to the head it reaches with the least transmit
/// energy; heads keep themselves and ties go to the lower head id.
///
/// Given the head set this is optimal for any weights: the `γ` summand of a
/// node is the same whichever head it joins, so only `E_tx` matters.
pub fn optimal_assignment(s: &NetworkState, p: &RadioParams, chs: &[NodeId]) -> Result<BTreeMap<NodeId, NodeId>> {
    if chs.is_empty() {
        return Err(Error::EmptyClusterHeads);
    }
    let mut sorted: Vec<NodeId> = chs.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let heads: Vec<&crate::network::NodeState> = sorted
        .iter()
        .map(|&j| s.node(j).ok_or(Error::AssignmentToNonHead { node: j, target: j }))
        .collect::<Result<_>>()?;
    let mut out = BTreeMap::new();
    for n in s.nodes.iter().filter(|n| n.alive) {
        if sorted.binary_search(&n.id).is_ok() {
            out.insert(n.id, n.id);
            continue;
        }
        let mut best = (f64::INFINITY, 0);
        for h in &heads {
            let e = p.tx_energy(p.b_data, n.distance_to(h));
            if e < best.0 {
                best = (e, h.id);
            }
        }
        out.insert(n.id, best.1);
    }
    Ok(out)
}

/// Precomputed costs for one solve.
struct Instance {
    /// Candidate node ids, ascending. Candidate index order is id order.
    cand_ids: Vec<NodeId>,
    n_alive: usize,
    /// `member[a * m + c]`: energy for alive node `a` to reach candidate `c`.
    member: Vec<f64>,
    /// Head → base station cost per candidate.
    open: Vec<f64>,
    rx_sum: f64,
    w: MilpWeights,
}

impl Instance {
    fn new(s: &NetworkState, p: &RadioParams, w: &MilpWeights) -> Result<Self> {
        w.validate()?;
        let alive: Vec<usize> = (0..s.len()).filter(|&i| s.nodes[i].alive).collect();
        if alive.is_empty() {
            return Err(Error::NoAliveNodes);
        }
        let cand_ids = potential_heads(s);
        let cand_idx: Vec<usize> = cand_ids.iter().map(|&id| s.index_of(id).expect("candidate id")).collect();
        let m = cand_idx.len();
        let mut member = Vec::with_capacity(alive.len() * m);
        let mut rx_sum = 0.0;
        for &a in &alive {
            for &c in &cand_idx {
                member.push(p.tx_energy(p.b_data, s.nodes[a].distance_to(&s.nodes[c])));
            }
            rx_sum += p.rx_energy(p.b_data);
        }
        let open = cand_idx.iter().map(|&c| p.ch_tx_energy(p.b_data, s.distance_to_bs(c))).collect();
        Ok(Self { cand_ids, n_alive: alive.len(), member, open, rx_sum, w: *w })
    }

    fn m(&self) -> usize {
        self.cand_ids.len()
    }

    fn row(&self, a: usize) -> &[f64] {
        let m = self.m();
        &self.member[a * m..(a + 1) * m]
    }

    /// Objective of a head set given as ascending candidate indices. Summation
    /// order matches [`objective`] so the two agree bit for bit.
    fn evaluate(&self, set: &[usize]) -> f64 {
        let mut member = 0.0;
        for a in 0..self.n_alive {
            let row = self.row(a);
            member += set.iter().map(|&c| row[c]).fold(f64::INFINITY, f64::min);
        }
        let heads: f64 = set.iter().map(|&c| self.open[c]).sum();
        self.w.alpha * member + self.w.beta * heads + self.w.gamma * self.rx_sum
    }

    fn solution(&self, s: &NetworkState, p: &RadioParams, set: &[usize], k_clamped: bool) -> Result<ClusteringSolution> {
        let chs: Vec<NodeId> = set.iter().map(|&c| self.cand_ids[c]).collect();
        let assignment = optimal_assignment(s, p, &chs)?;
        let clustering = Clustering { chs, assignment };
        let objective = objective(s, p, &self.w, &clustering)?;
        debug_assert_eq!(objective.to_bits(), self.evaluate(set).to_bits());
        Ok(ClusteringSolution { chs: clustering.chs, assignment: clustering.assignment, objective, k_clamped })
    }
}

/// Incumbent under the `(objective, ids)` total order.
#[derive(Debug, Clone)]
struct Best {
    obj: f64,
    set: Vec<usize>,
}

impl Best {
    fn none() -> Self {
        Best { obj: f64::INFINITY, set: Vec::new() }
    }

    fn offer(&mut self, obj: f64, set: &[usize]) {
        if obj < self.obj || (obj == self.obj && set < self.set.as_slice()) {
            self.obj = obj;
            self.set = set.to_vec();
        }
    }

    fn better(self, other: Best) -> Best {
        if other.obj < self.obj || (other.obj == self.obj && other.set < self.set) {
            other
        } else {
            self
        }
    }
}

/// `C(n, k)`, saturating.
pub fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > u64::MAX as u128 {
            return u64::MAX;
        }
    }
    acc as u64
}

fn clamp_k(k: usize, m: usize) -> Result<(usize, bool)> {
    if k == 0 {
        return Err(Error::param("k", "need at least one cluster head"));
    }
    if m == 0 {
        return Err(Error::NoAliveNodes);
    }
    Ok((k.min(m), k > m))
}

/// Enumerates every k-subset of the potential heads. Limited to
/// [`BRUTEFORCE_LIMIT`] subsets.
pub fn solve_bruteforce(s: &NetworkState, p: &RadioParams, w: &MilpWeights, k: usize) -> Result<ClusteringSolution> {
    let inst = Instance::new(s, p, w)?;
    let m = inst.m();
    let (k, clamped) = clamp_k(k, m)?;
    let count = binomial(m, k);
    if count > BRUTEFORCE_LIMIT {
        return Err(Error::CombinatorialLimit { candidates: m, k, limit: BRUTEFORCE_LIMIT });
    }
    // Split on the first element so chunks can run independently; the
    // reduction is order-insensitive under the total order.
    let best = crate::par::map_reduce(
        (0..=m - k).collect(),
        |first| {
            let mut best = Best::none();
            let mut set: Vec<usize> = (first..first + k).collect();
            loop {
                best.offer(inst.evaluate(&set), &set);
                if !next_combination(&mut set[1..], m) {
                    break;
                }
            }
            best
        },
        Best::none,
        Best::better,
    );
    inst.solution(s, p, &best.set, clamped)
}

/// Advances an ascending index combination drawn from `0..m`; returns false
/// after the last one.
fn next_combination(set: &mut [usize], m: usize) -> bool {
    let k = set.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if set[i] < m - k + i {
            set[i] += 1;
            for j in i + 1..k {
                set[j] = set[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Search statistics of the last branch-and-bound run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SearchStats {
    pub nodes_expanded: u64,
    pub leaves_evaluated: u64,
}

#[derive(Debug)]
struct Frontier {
    lb: f64,
    seq: u64,
    /// Chosen candidates, ascending index.
    chosen: Vec<usize>,
    /// Position in the branching order of the next undecided candidate.
    depth: usize,
}

impl PartialEq for Frontier {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Frontier {}
impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Frontier {
    // Reversed: BinaryHeap is a max-heap and we pop the smallest bound first.
    fn cmp(&self, other: &Self) -> Ordering {
        other.lb.total_cmp(&self.lb).then_with(|| other.seq.cmp(&self.seq))
    }
}

struct Search<'a> {
    inst: &'a Instance,
    k: usize,
    /// Candidates every optimal solution must contain, ascending.
    forced: Vec<usize>,
    /// Undecided candidates in branching order (ascending reduced cost).
    order: Vec<usize>,
    /// Lagrangian reduced cost per candidate.
    rho: Vec<f64>,
    /// Multiplier sum of the Lagrangian bound.
    lag_base: f64,
    /// `rho_prefix[t]`: summed reduced cost of `order[..t]`.
    rho_prefix: Vec<f64>,
    /// `suffix_min[t * n + a]`: cheapest reach of node `a` over `order[t..]`.
    suffix_min: Vec<f64>,
    best: Best,
    stats: SearchStats,
}

/// Relative slack absorbing rounding between the bound and leaf evaluations.
const BOUND_SLACK: f64 = 1e-11;

const SUBGRADIENT_ITERS: usize = 600;

impl<'a> Search<'a> {
    fn new(inst: &'a Instance, k: usize) -> Self {
        Self {
            inst,
            k,
            forced: Vec::new(),
            order: Vec::new(),
            rho: vec![0.0; inst.m()],
            lag_base: 0.0,
            rho_prefix: Vec::new(),
            suffix_min: Vec::new(),
            best: Best::none(),
            stats: SearchStats::default(),
        }
    }

    fn constant(&self) -> f64 {
        self.inst.w.gamma * self.inst.rx_sum
    }

    fn slack(&self) -> f64 {
        BOUND_SLACK * self.best.obj.abs()
    }

    fn leaf(&mut self, set: &[usize]) {
        self.stats.leaves_evaluated += 1;
        let obj = self.inst.evaluate(set);
        self.best.offer(obj, set);
    }

    /// Reduced costs `ρ_j = β·open_j + Σ_i min(0, α·c_ij - u_i)` for multipliers `u`.
    fn reduced_costs(&self, u: &[f64], rho: &mut [f64]) {
        let inst = self.inst;
        let (alpha, beta) = (inst.w.alpha, inst.w.beta);
        for (c, r) in rho.iter_mut().enumerate() {
            *r = beta * inst.open[c];
        }
        for (a, &ua) in u.iter().enumerate() {
            for (r, &cost) in rho.iter_mut().zip(inst.row(a)) {
                let v = alpha * cost - ua;
                if v < 0.0 {
                    *r += v;
                }
            }
        }
    }

    /// The `k` smallest reduced costs, ties by index.
    fn cheapest(&self, rho: &[f64]) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..rho.len()).collect();
        idx.sort_by(|&a, &b| rho[a].total_cmp(&rho[b]).then(a.cmp(&b)));
        idx.truncate(self.k);
        idx
    }

    /// Relaxes "each node joins exactly one head" with multipliers `u_i`; the
    /// relaxed problem opens the `k` heads of least reduced cost. Subgradient
    /// ascent tightens the bound, and every relaxed head set doubles as a
    /// feasible incumbent.
    fn lagrangian(&mut self) {
        let inst = self.inst;
        let n = inst.n_alive;
        let m = inst.m();
        let alpha = inst.w.alpha;
        let mut u: Vec<f64> =
            (0..n).map(|a| alpha * inst.row(a).iter().copied().fold(f64::INFINITY, f64::min)).collect();
        let mut rho = vec![0.0; m];
        let mut best = (f64::NEG_INFINITY, u.clone());
        let mut step = 2.0;
        let mut stall = 0;
        for _ in 0..SUBGRADIENT_ITERS {
            self.reduced_costs(&u, &mut rho);
            let mut sel = self.cheapest(&rho);
            let bound = u.iter().sum::<f64>() + sel.iter().map(|&c| rho[c]).sum::<f64>();
            if bound > best.0 {
                best = (bound, u.clone());
                stall = 0;
            } else {
                stall += 1;
                if stall >= 20 {
                    step /= 2.0;
                    stall = 0;
                }
            }
            sel.sort_unstable();
            self.leaf(&sel);
            let upper = self.best.obj - self.constant();
            if bound >= upper - self.slack() || step < 1e-4 {
                break;
            }
            let g: Vec<f64> = (0..n)
                .map(|a| {
                    let row = inst.row(a);
                    1.0 - sel.iter().filter(|&&c| alpha * row[c] < u[a]).count() as f64
                })
                .collect();
            let norm: f64 = g.iter().map(|x| x * x).sum();
            if norm == 0.0 {
                break;
            }
            let t = step * (upper - bound) / norm;
            for (ua, ga) in u.iter_mut().zip(&g) {
                *ua += t * ga;
            }
        }
        self.lag_base = best.1.iter().sum();
        let mut rho = vec![0.0; m];
        self.reduced_costs(&best.1, &mut rho);
        self.rho = rho;
    }

    /// Fixes candidates whose inclusion or exclusion alone pushes the
    /// Lagrangian bound strictly above the incumbent, then lays out the
    /// branching order over the rest.
    fn reduce(&mut self) {
        let m = self.inst.m();
        let n = self.inst.n_alive;
        let k = self.k;
        let mut by_rho: Vec<usize> = (0..m).collect();
        by_rho.sort_by(|&a, &b| self.rho[a].total_cmp(&self.rho[b]).then(a.cmp(&b)));
        let lag = self.lag_base + by_rho[..k].iter().map(|&c| self.rho[c]).sum::<f64>();
        let limit = self.best.obj - self.constant() + self.slack();
        let kth = self.rho[by_rho[k - 1]];
        let next = self.rho[by_rho[k]];
        let mut free = Vec::new();
        for (pos, &c) in by_rho.iter().enumerate() {
            if pos < k {
                if lag - self.rho[c] + next > limit {
                    self.forced.push(c);
                } else {
                    free.push(c);
                }
            } else if lag - kth + self.rho[c] <= limit {
                free.push(c);
            }
        }
        self.forced.sort_unstable();
        self.order = free;
        let mf = self.order.len();
        self.rho_prefix = vec![0.0; mf + 1];
        for t in 0..mf {
            self.rho_prefix[t + 1] = self.rho_prefix[t] + self.rho[self.order[t]];
        }
        let mut suffix_min = vec![f64::INFINITY; (mf + 1) * n];
        for t in (0..mf).rev() {
            let c = self.order[t];
            for a in 0..n {
                suffix_min[t * n + a] = suffix_min[(t + 1) * n + a].min(self.inst.row(a)[c]);
            }
        }
        self.suffix_min = suffix_min;
    }

    /// Per-node cheapest reach within `chosen`.
    fn reach(&self, chosen: &[usize]) -> Vec<f64> {
        (0..self.inst.n_alive)
            .map(|a| {
                let row = self.inst.row(a);
                chosen.iter().map(|&c| row[c]).fold(f64::INFINITY, f64::min)
            })
            .collect()
    }

    /// Lower bound over every completion of `chosen` by `k - |chosen|` heads
    /// drawn from `order[depth..]`, ignoring the constant `γ` term.
    ///
    /// The Lagrangian bound is cheap and usually decisive. When it is not,
    /// two combinatorial bounds are tried:
    /// 1. every node reaches its cheapest head among chosen and remaining,
    ///    while the heads still to open are the cheapest remaining ones;
    /// 2. from the chosen set's actual cost, subtract the best possible
    ///    individual net savings of the heads still to open (savings of a set
    ///    never exceed the sum of its members' savings).
    fn bound(&self, chosen: &[usize], depth: usize) -> f64 {
        let inst = self.inst;
        let r = self.k - chosen.len();
        let lag = self.lag_base
            + chosen.iter().map(|&c| self.rho[c]).sum::<f64>()
            + self.rho_prefix[depth + r]
            - self.rho_prefix[depth];
        if lag + self.constant() > self.best.obj + self.slack() {
            return lag;
        }

        let (alpha, beta) = (inst.w.alpha, inst.w.beta);
        let n = inst.n_alive;
        let open_chosen: f64 = chosen.iter().map(|&c| inst.open[c]).sum();
        let reach = self.reach(chosen);
        let suffix = &self.suffix_min[depth * n..(depth + 1) * n];

        let member_lb: f64 = reach.iter().zip(suffix).map(|(a, b)| a.min(*b)).sum();
        let mut opens: Vec<f64> = self.order[depth..].iter().map(|&c| inst.open[c]).collect();
        let open_rest: f64 = if r == 0 {
            0.0
        } else {
            opens.select_nth_unstable_by(r - 1, f64::total_cmp);
            opens[..r].iter().sum()
        };
        let lb1 = alpha * member_lb + beta * (open_chosen + open_rest);
        if chosen.is_empty() || r == 0 {
            return lag.max(lb1);
        }

        let member_now: f64 = reach.iter().sum();
        let mut savings: Vec<f64> = self.order[depth..]
            .iter()
            .map(|&c| {
                let gain: f64 = (0..n).map(|a| (reach[a] - inst.row(a)[c]).max(0.0)).sum();
                alpha * gain - beta * inst.open[c]
            })
            .collect();
        savings.sort_unstable_by(|a, b| b.total_cmp(a));
        let lb2 = alpha * member_now + beta * open_chosen - savings[..r].iter().sum::<f64>();
        lag.max(lb1).max(lb2)
    }

    /// Smallest sorted head list reachable from this subtree.
    fn lex_floor(&self, chosen: &[usize], depth: usize) -> Vec<usize> {
        let r = self.k - chosen.len();
        let mut rest: Vec<usize> = self.order[depth..].to_vec();
        rest.sort_unstable();
        let mut set: Vec<usize> = chosen.iter().copied().chain(rest.into_iter().take(r)).collect();
        set.sort_unstable();
        set
    }

    fn prunable(&self, lb: f64, chosen: &[usize], depth: usize) -> bool {
        let total = lb + self.constant();
        let slack = self.slack();
        if total > self.best.obj + slack {
            return true;
        }
        // Within rounding of the incumbent: only a lexicographically smaller
        // head list could still displace it.
        total >= self.best.obj - slack && self.lex_floor(chosen, depth) > self.best.set
    }

    fn seed_incumbents(&mut self, hint: Option<&[usize]>) {
        let m = self.inst.m();
        let k = self.k;
        let lexmin: Vec<usize> = (0..k).collect();
        self.leaf(&lexmin);
        if let Some(h) = hint {
            if h.len() == k {
                self.leaf(h);
            }
        }
        let mut cur = self.greedy();
        let mut cur_obj = self.inst.evaluate(&cur);
        self.leaf(&cur);
        // First-improvement swaps until a local optimum.
        let mut improved = true;
        let mut passes = 0;
        while improved && passes < 50 {
            improved = false;
            passes += 1;
            'scan: for slot in 0..k {
                for c in 0..m {
                    if cur.contains(&c) {
                        continue;
                    }
                    let mut trial = cur.clone();
                    trial[slot] = c;
                    trial.sort_unstable();
                    let obj = self.inst.evaluate(&trial);
                    if obj < cur_obj {
                        cur = trial;
                        cur_obj = obj;
                        improved = true;
                        break 'scan;
                    }
                }
            }
        }
        self.leaf(&cur);
    }

    fn greedy(&self) -> Vec<usize> {
        let inst = self.inst;
        let mut chosen: Vec<usize> = Vec::with_capacity(self.k);
        let mut reach = vec![f64::INFINITY; inst.n_alive];
        while chosen.len() < self.k {
            let mut best = (f64::INFINITY, usize::MAX);
            for c in 0..inst.m() {
                if chosen.contains(&c) {
                    continue;
                }
                let member: f64 = (0..inst.n_alive).map(|a| reach[a].min(inst.row(a)[c])).sum();
                let cost = inst.w.alpha * member + inst.w.beta * inst.open[c];
                if cost < best.0 {
                    best = (cost, c);
                }
            }
            let c = best.1;
            chosen.push(c);
            for (a, r) in reach.iter_mut().enumerate() {
                *r = r.min(inst.row(a)[c]);
            }
        }
        chosen.sort_unstable();
        chosen
    }

    fn run(&mut self, hint: Option<&[usize]>) {
        let m = self.inst.m();
        let k = self.k;
        if k == m {
            let all: Vec<usize> = (0..m).collect();
            self.leaf(&all);
            return;
        }
        self.seed_incumbents(hint);
        self.lagrangian();
        self.reduce();

        let root = self.forced.clone();
        let free = self.order.len();
        if root.len() + free == k {
            let mut set = root;
            set.extend_from_slice(&self.order);
            set.sort_unstable();
            self.leaf(&set);
            return;
        }
        if root.len() == k || root.len() + free < k {
            // Either fully fixed or nothing beats the incumbent.
            if root.len() == k {
                self.leaf(&root);
            }
            return;
        }

        let mut seq = 0u64;
        let mut heap = BinaryHeap::new();
        let root_lb = self.bound(&root, 0);
        heap.push(Frontier { lb: root_lb, seq, chosen: root, depth: 0 });

        while let Some(node) = heap.pop() {
            if self.prunable(node.lb, &node.chosen, node.depth) {
                continue;
            }
            self.stats.nodes_expanded += 1;
            let c = self.order[node.depth];
            let next = node.depth + 1;

            // Include `c`.
            let mut with: Vec<usize> = node.chosen.clone();
            let pos = with.partition_point(|&x| x < c);
            with.insert(pos, c);
            if with.len() == k {
                self.leaf(&with);
            } else if free - next >= k - with.len() {
                self.push_child(&mut heap, &mut seq, with, next);
            }

            // Exclude `c`.
            let need = k - node.chosen.len();
            if free - next == need {
                let mut set = node.chosen.clone();
                set.extend_from_slice(&self.order[next..]);
                set.sort_unstable();
                self.leaf(&set);
            } else if free - next > need {
                self.push_child(&mut heap, &mut seq, node.chosen, next);
            }
        }
    }

    fn push_child(&self, heap: &mut BinaryHeap<Frontier>, seq: &mut u64, chosen: Vec<usize>, depth: usize) {
        let lb = self.bound(&chosen, depth);
        if self.prunable(lb, &chosen, depth) {
            return;
        }
        *seq += 1;
        heap.push(Frontier { lb, seq: *seq, chosen, depth });
    }
}

/// Optimal solution by branch-and-bound; see the module docs.
pub fn solve_exact(s: &NetworkState, p: &RadioParams, w: &MilpWeights, k: usize) -> Result<ClusteringSolution> {
    solve_exact_with_hint(s, p, w, k, None).map(|(sol, _)| sol)
}

/// [`solve_exact`] seeded with a previous head set as an extra incumbent.
/// The hint only speeds up pruning; the result is the same with or without it.
pub fn solve_exact_with_hint(
    s: &NetworkState,
    p: &RadioParams,
    w: &MilpWeights,
    k: usize,
    hint: Option<&[NodeId]>,
) -> Result<(ClusteringSolution, SearchStats)> {
    let inst = Instance::new(s, p, w)?;
    let (k, clamped) = clamp_k(k, inst.m())?;
    let hint_idx: Option<Vec<usize>> = hint.and_then(|h| {
        let mut idx: Vec<usize> = h.iter().filter_map(|id| inst.cand_ids.binary_search(id).ok()).collect();
        idx.sort_unstable();
        idx.dedup();
        (idx.len() == k).then_some(idx)
    });
    let mut search = Search::new(&inst, k);
    search.run(hint_idx.as_deref());
    let stats = search.stats;
    let set = search.best.set.clone();
    Ok((inst.solution(s, p, &set, clamped)?, stats))
}
