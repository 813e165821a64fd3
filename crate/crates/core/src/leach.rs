//! Distributed randomised clustering.
//!
//! Rounds are grouped into epochs of `⌈1/p⌉`. Within an epoch every node may
//! serve as head at most once, and an eligible node elects itself when a
//! uniform draw falls below
//!
//! ```text
//! T(n) = p / (1 - p·(r mod ⌈1/p⌉))
//! ```
//!
//! which rises to 1 by the epoch's last round. Non-heads join the nearest
//! head. No control traffic is charged.

use std::collections::BTreeMap;

use rand::Rng;

use crate::clustering::Clustering;
use crate::error::{Error, Result};
use crate::network::{NetworkState, NodeId};
use crate::radio::RadioParams;
use crate::rng::{self, Stream};
use crate::sim::{Decision, Protocol};

pub fn epoch_length(p_frac: f64) -> u32 {
    (1.0 / p_frac).ceil() as u32
}

/// Election threshold for an eligible node in round `r`.
pub fn threshold(p_frac: f64, r: u32) -> f64 {
    let denom = 1.0 - p_frac * f64::from(r % epoch_length(p_frac));
    // At the epoch's last round the denominator collapses to `p` up to rounding.
    if denom <= p_frac * (1.0 + 1e-9) {
        1.0
    } else {
        (p_frac / denom).min(1.0)
    }
}

#[derive(Debug, Clone)]
pub struct Leach {
    p_frac: f64,
    /// Not yet head in the current epoch, by node index.
    eligible: Vec<bool>,
    rng: Stream,
}

impl Leach {
    pub fn new(p_frac: f64, n_nodes: usize, seed: u64) -> Result<Self> {
        if !(p_frac > 0.0 && p_frac < 1.0) {
            return Err(Error::param("p_frac", format!("must lie in (0, 1), got {p_frac}")));
        }
        Ok(Self { p_frac, eligible: vec![true; n_nodes], rng: rng::stream(seed, "leach") })
    }

    /// Self-election for round `s.round`. Updates the epoch bookkeeping.
    pub fn elect(&mut self, s: &NetworkState) -> Vec<NodeId> {
        if s.round.is_multiple_of(epoch_length(self.p_frac)) {
            self.eligible.iter_mut().for_each(|e| *e = true);
        }
        let t = threshold(self.p_frac, s.round);
        let mut heads = Vec::new();
        for (i, n) in s.nodes.iter().enumerate() {
            if !n.alive || !self.eligible[i] {
                continue;
            }
            if self.rng.gen::<f64>() < t {
                self.eligible[i] = false;
                heads.push(n.id);
            }
        }
        heads
    }
}

/// Nearest alive head for every alive node; heads keep themselves and
/// equidistant ties go to the lower id. With no heads the map is empty and
/// every node sends directly.
pub fn assign_nearest(s: &NetworkState, chs: &[NodeId]) -> BTreeMap<NodeId, NodeId> {
    let heads: Vec<_> = chs.iter().filter_map(|&h| s.node(h)).filter(|h| h.alive).collect();
    let mut out = BTreeMap::new();
    if heads.is_empty() {
        return out;
    }
    for n in s.nodes.iter().filter(|n| n.alive) {
        if heads.iter().any(|h| h.id == n.id) {
            out.insert(n.id, n.id);
            continue;
        }
        let mut best = (f64::INFINITY, NodeId::MAX);
        for h in &heads {
            let d2 = (n.x - h.x).powi(2) + (n.y - h.y).powi(2);
            if d2 < best.0 || (d2 == best.0 && h.id < best.1) {
                best = (d2, h.id);
            }
        }
        out.insert(n.id, best.1);
    }
    out
}

impl Protocol for Leach {
    fn name(&self) -> &'static str {
        "leach"
    }

    fn centralized(&self) -> bool {
        false
    }

    fn decide(&mut self, s: &NetworkState, _: &RadioParams) -> Result<Decision> {
        let chs = self.elect(s);
        let assignment = assign_nearest(s, &chs);
        Ok(Decision::Recluster(Clustering { chs, assignment }))
    }
}
