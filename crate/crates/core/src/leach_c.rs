//! Centralised clustering by simulated annealing.
//!
//! Every round the base station picks `k` heads among the potential heads to
//! minimise the summed squared distance from each node to its nearest head.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::clustering::{Clustering, ClusteringSolution};
use crate::error::{Error, Result};
use crate::leach::assign_nearest;
use crate::network::{cluster_head_target, potential_heads, NetworkState, NodeId};
use crate::radio::RadioParams;
use crate::rng::{self, Stream};
use crate::sim::{Decision, Protocol};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnnealSchedule {
    pub iterations: u32,
    /// Initial temperature as a fraction of the starting objective.
    pub initial_temp_ratio: f64,
    /// Geometric cooling factor per iteration.
    pub cooling: f64,
}

impl Default for AnnealSchedule {
    fn default() -> Self {
        Self { iterations: 1000, initial_temp_ratio: 0.1, cooling: 0.99 }
    }
}

/// Sum over alive non-heads of the squared distance to the nearest head.
pub fn ssd(s: &NetworkState, chs: &[NodeId]) -> Result<f64> {
    if chs.is_empty() {
        return Err(Error::EmptyClusterHeads);
    }
    let heads: Vec<(f64, f64)> = chs
        .iter()
        .map(|&h| s.node(h).map(|n| (n.x, n.y)).ok_or(Error::AssignmentToNonHead { node: h, target: h }))
        .collect::<Result<_>>()?;
    Ok(s.nodes
        .iter()
        .filter(|n| n.alive && !chs.contains(&n.id))
        .map(|n| heads.iter().map(|h| (n.x - h.0).powi(2) + (n.y - h.1).powi(2)).fold(f64::INFINITY, f64::min))
        .sum())
}

/// Anneals over `k`-subsets of the potential heads. The best set seen is
/// returned with nearest-head assignment; its objective is the SSD.
pub fn leach_c_cluster(
    s: &NetworkState,
    k: usize,
    rng: &mut Stream,
    schedule: &AnnealSchedule,
) -> Result<ClusteringSolution> {
    let cands = potential_heads(s);
    if cands.is_empty() {
        return Err(Error::NoAliveNodes);
    }
    if k == 0 {
        return Err(Error::param("k", "need at least one cluster head"));
    }
    let k_clamped = k > cands.len();
    let k = k.min(cands.len());

    // `pool[..k]` is the current head set, the rest are swap candidates.
    let mut pool = cands.clone();
    for i in 0..k {
        let j = rng.gen_range(i..pool.len());
        pool.swap(i, j);
    }
    let mut cur = ssd(s, &pool[..k])?;
    let mut best = (cur, pool[..k].to_vec());
    if k < pool.len() {
        let mut temp = cur * schedule.initial_temp_ratio;
        for _ in 0..schedule.iterations {
            let i = rng.gen_range(0..k);
            let j = rng.gen_range(k..pool.len());
            pool.swap(i, j);
            let next = ssd(s, &pool[..k])?;
            let delta = next - cur;
            let accept = delta <= 0.0 || (temp > 0.0 && rng.gen::<f64>() < (-delta / temp).exp());
            if accept {
                cur = next;
                if cur < best.0 {
                    best = (cur, pool[..k].to_vec());
                }
            } else {
                pool.swap(i, j);
            }
            temp *= schedule.cooling;
        }
    }

    let mut chs = best.1;
    chs.sort_unstable();
    let assignment = assign_nearest(s, &chs);
    Ok(ClusteringSolution { chs, assignment, objective: best.0, k_clamped })
}

#[derive(Debug, Clone)]
pub struct LeachC {
    k_fraction: f64,
    schedule: AnnealSchedule,
    rng: Stream,
}

impl LeachC {
    pub fn new(k_fraction: f64, schedule: AnnealSchedule, seed: u64) -> Self {
        Self { k_fraction, schedule, rng: rng::stream(seed, "leach-c") }
    }
}

impl Protocol for LeachC {
    fn name(&self) -> &'static str {
        "leach-c"
    }

    fn centralized(&self) -> bool {
        true
    }

    fn decide(&mut self, s: &NetworkState, _: &RadioParams) -> Result<Decision> {
        let k = cluster_head_target(self.k_fraction, s.alive_count());
        let sol = leach_c_cluster(s, k, &mut self.rng, &self.schedule)?;
        Ok(Decision::Recluster(Clustering::from(sol)))
    }
}
