//! Experiment orchestration and artifact export.
//!
//! Multi-run experiments fan out through [`crate::par`] and are merged in
//! job order, so every file written here depends only on the configuration
//! and seeds.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::clustering::MilpWeights;
use crate::config::Config;
use crate::dqn::{self, Backend, Env, PolicyGate};
use crate::error::{Error, Result};
use crate::leach::Leach;
use crate::leach_c::LeachC;
use crate::network::{generate_topology, NetworkConfig};
use crate::nn::Mlp;
use crate::par;
use crate::plot::{color_grid, line_chart, Series};
use crate::rlc::{ExactClusterer, FixedGate, Rlc};
use crate::sim::{simulate, Protocol, SimResult, StopCondition};
use crate::surrogate::{self, Predictor, Scenario, SurrogateClusterer};

/// Version stamped into every emitted schema.
pub const SCHEMA_VERSION: u32 = 1;

pub const ROUNDS_COLUMNS: [&str; 9] = [
    "round",
    "alive",
    "e_net_j",
    "e_dissipated_avg_j",
    "data_sent",
    "data_delivered",
    "control_packets",
    "reclustered",
    "ch_count",
];
pub const RUNS_COLUMNS: [&str; 9] =
    ["protocol", "seed", "rounds", "fnd", "hnd", "lnd", "control_packets", "reclusters", "pdr"];
pub const HISTOGRAM_COLUMNS: [&str; 3] = ["protocol", "ch_count", "rounds"];
pub const SWEEP_COLUMNS: [&str; 4] = ["alpha", "beta", "gamma", "fnd"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProtocolKind {
    Leach,
    LeachC,
    LeachRlc,
}

impl ProtocolKind {
    pub const ALL: [ProtocolKind; 3] = [ProtocolKind::Leach, ProtocolKind::LeachC, ProtocolKind::LeachRlc];

    pub fn name(self) -> &'static str {
        match self {
            ProtocolKind::Leach => "leach",
            ProtocolKind::LeachC => "leach-c",
            ProtocolKind::LeachRlc => "leach-rlc",
        }
    }
}

impl std::str::FromStr for ProtocolKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::param("protocol", format!("unknown protocol {s:?}; expected leach, leach-c or leach-rlc")))
    }
}

fn network_for(cfg: &Config, seed: u64) -> NetworkConfig {
    NetworkConfig { seed, ..cfg.network.clone() }
}

/// One run to the last death on the topology drawn from `seed`. The
/// learned protocol needs a policy.
pub fn run_protocol(kind: ProtocolKind, cfg: &Config, seed: u64, policy: Option<&Mlp>) -> Result<SimResult> {
    let net = network_for(cfg, seed);
    net.validate()?;
    let mut proto: Box<dyn Protocol> = match kind {
        ProtocolKind::Leach => Box::new(Leach::new(net.k_fraction, net.n_nodes, seed)?),
        ProtocolKind::LeachC => Box::new(LeachC::new(net.k_fraction, cfg.simulation.anneal, seed)),
        ProtocolKind::LeachRlc => {
            let qnet = policy.ok_or(Error::MissingArtifact { what: "policy", path: "<none>".into(), command: "train-agent" })?;
            let want = dqn::observation_len(net.n_nodes);
            if qnet.spec().input_dim() != want {
                return Err(Error::Dimension { context: "policy input", expected: want, got: qnet.spec().input_dim() });
            }
            let gate = PolicyGate { qnet: qnet.clone(), cfg: net.clone() };
            Box::new(Rlc::new(cfg.weights, net.k_fraction, gate))
        }
    };
    let mut s = generate_topology(&net);
    simulate(&mut s, &mut proto, &cfg.radio, cfg.simulation.control, StopCondition::AllDead)
}

pub fn load_policy(path: &Path) -> Result<Mlp> {
    if !path.exists() {
        return Err(Error::MissingArtifact { what: "policy", path: path.display().to_string(), command: "train-agent" });
    }
    Mlp::load(path)
}

fn opt(v: Option<u32>) -> String {
    v.map_or(String::new(), |v| v.to_string())
}

pub fn rounds_csv(r: &SimResult) -> String {
    let mut out = ROUNDS_COLUMNS.join(",");
    out.push('\n');
    for m in &r.per_round {
        let _ = writeln!(
            out,
            "{},{},{:?},{:?},{},{},{},{},{}",
            m.round,
            m.alive,
            m.e_net,
            m.e_dissipated_avg,
            m.data_sent,
            m.data_delivered,
            m.control_packets,
            m.reclustered,
            m.ch_count
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub schema_version: u32,
    pub protocol: String,
    pub seed: u64,
    pub rounds: usize,
    pub fnd: Option<u32>,
    pub hnd: Option<u32>,
    pub lnd: Option<u32>,
    pub control_packets: u64,
    pub reclusters: usize,
    pub pdr: f64,
    pub ch_count_histogram: BTreeMap<usize, u64>,
}

impl RunSummary {
    pub fn new(r: &SimResult, seed: u64) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            protocol: r.protocol.clone(),
            seed,
            rounds: r.rounds(),
            fnd: r.fnd,
            hnd: r.hnd,
            lnd: r.lnd,
            control_packets: r.total_control_packets,
            reclusters: r.recluster_count(),
            pdr: r.pdr,
            ch_count_histogram: r.ch_count_histogram.clone(),
        }
    }
}

fn write(path: PathBuf, content: impl AsRef<[u8]>) -> Result<PathBuf> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(&path, content)?;
    Ok(path)
}

fn alive_series(r: &SimResult) -> Vec<(f64, f64)> {
    r.per_round.iter().map(|m| (f64::from(m.round), m.alive as f64)).collect()
}

fn energy_series(r: &SimResult) -> Vec<(f64, f64)> {
    r.per_round.iter().map(|m| (f64::from(m.round), m.e_net)).collect()
}

/// `rounds.csv`, `summary.json`, `alive.svg` and `energy.svg`.
pub fn write_simulation(dir: &Path, r: &SimResult, seed: u64) -> Result<Vec<PathBuf>> {
    let name = r.protocol.as_str();
    Ok(vec![
        write(dir.join("rounds.csv"), rounds_csv(r))?,
        write(dir.join("summary.json"), serde_json::to_string_pretty(&RunSummary::new(r, seed))? + "\n")?,
        write(
            dir.join("alive.svg"),
            line_chart("Alive nodes", "round", "alive nodes", &[Series { name, points: alive_series(r) }]),
        )?,
        write(
            dir.join("energy.svg"),
            line_chart("Remaining energy", "round", "energy (J)", &[Series { name, points: energy_series(r) }]),
        )?,
    ])
}

pub fn median(values: &[f64]) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { (v[m - 1] + v[m]) / 2.0 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolReport {
    pub protocol: String,
    pub median_fnd: Option<f64>,
    pub median_hnd: Option<f64>,
    pub median_lnd: Option<f64>,
    pub mean_pdr: f64,
    pub total_control_packets: u64,
    pub ch_count_histogram: BTreeMap<usize, u64>,
    pub runs: Vec<RunSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub schema_version: u32,
    pub seeds: Vec<u64>,
    pub protocols: Vec<ProtocolReport>,
    /// Protocols by descending median FND.
    pub fnd_order: Vec<String>,
}

pub struct Comparison {
    pub report: CompareReport,
    /// Results per protocol, in seed order.
    pub results: BTreeMap<ProtocolKind, Vec<SimResult>>,
}

impl Comparison {
    pub fn protocol(&self, kind: ProtocolKind) -> Option<&ProtocolReport> {
        self.report.protocols.iter().find(|p| p.protocol == kind.name())
    }
}

/// Runs every protocol on every seed.
pub fn compare(cfg: &Config, seeds: &[u64], policy: &Mlp) -> Result<Comparison> {
    if seeds.is_empty() {
        return Err(Error::param("seeds", "need at least one seed"));
    }
    let jobs: Vec<(ProtocolKind, u64)> =
        ProtocolKind::ALL.iter().flat_map(|&k| seeds.iter().map(move |&s| (k, s))).collect();
    let runs = par::map(jobs.clone(), |(k, s)| run_protocol(k, cfg, s, Some(policy)));
    let mut results: BTreeMap<ProtocolKind, Vec<SimResult>> = BTreeMap::new();
    for ((k, _), r) in jobs.into_iter().zip(runs) {
        results.entry(k).or_default().push(r?);
    }
    let mut protocols = Vec::new();
    for k in ProtocolKind::ALL {
        let rs = &results[&k];
        let pick = |f: fn(&SimResult) -> Option<u32>| median(&rs.iter().filter_map(f).map(f64::from).collect::<Vec<_>>());
        let mut hist = BTreeMap::new();
        for r in rs {
            for (&c, &n) in &r.ch_count_histogram {
                *hist.entry(c).or_insert(0) += n;
            }
        }
        protocols.push(ProtocolReport {
            protocol: k.name().into(),
            median_fnd: pick(|r| r.fnd),
            median_hnd: pick(|r| r.hnd),
            median_lnd: pick(|r| r.lnd),
            mean_pdr: rs.iter().map(|r| r.pdr).sum::<f64>() / rs.len() as f64,
            total_control_packets: rs.iter().map(|r| r.total_control_packets).sum(),
            ch_count_histogram: hist,
            runs: rs.iter().zip(seeds).map(|(r, &s)| RunSummary::new(r, s)).collect(),
        });
    }
    let mut order: Vec<&ProtocolReport> = protocols.iter().collect();
    order.sort_by(|a, b| b.median_fnd.unwrap_or(-1.0).total_cmp(&a.median_fnd.unwrap_or(-1.0)));
    let fnd_order = order.iter().map(|p| p.protocol.clone()).collect();
    Ok(Comparison {
        report: CompareReport { schema_version: SCHEMA_VERSION, seeds: seeds.to_vec(), protocols, fnd_order },
        results,
    })
}

/// Head selections summed over a `bins × bins` grid of the field; row 0
/// holds the smallest `y`.
pub fn selection_heatmap(net: &NetworkConfig, r: &SimResult, bins: usize) -> Vec<Vec<f64>> {
    let s = generate_topology(net);
    let mut grid = vec![vec![0.0; bins]; bins];
    let cell = |v: f64| ((v / net.side_length * bins as f64).floor().max(0.0) as usize).min(bins - 1);
    for (node, &count) in s.nodes.iter().zip(&r.ch_selection_count) {
        grid[cell(node.y)][cell(node.x)] += f64::from(count);
    }
    grid
}

pub fn matrix_csv(m: &[Vec<f64>]) -> String {
    let mut out = String::new();
    for row in m {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Writes `compare.json`, `runs.csv`, `ch_histogram.csv`, per-protocol
/// `heatmap_<protocol>.csv/.svg` for the first seed, and `alive.svg`.
pub fn write_comparison(dir: &Path, cfg: &Config, c: &Comparison) -> Result<Vec<PathBuf>> {
    let mut files = vec![write(dir.join("compare.json"), serde_json::to_string_pretty(&c.report)? + "\n")?];
    let mut runs = RUNS_COLUMNS.join(",") + "\n";
    let mut hist = HISTOGRAM_COLUMNS.join(",") + "\n";
    for p in &c.report.protocols {
        for r in &p.runs {
            let _ = writeln!(
                runs,
                "{},{},{},{},{},{},{},{},{:?}",
                p.protocol,
                r.seed,
                r.rounds,
                opt(r.fnd),
                opt(r.hnd),
                opt(r.lnd),
                r.control_packets,
                r.reclusters,
                r.pdr
            );
        }
        for (k, n) in &p.ch_count_histogram {
            let _ = writeln!(hist, "{},{k},{n}", p.protocol);
        }
    }
    files.push(write(dir.join("runs.csv"), runs)?);
    files.push(write(dir.join("ch_histogram.csv"), hist)?);

    let seed = c.report.seeds[0];
    let net = network_for(cfg, seed);
    let mut alive = Vec::new();
    for (kind, rs) in &c.results {
        let grid = selection_heatmap(&net, &rs[0], 10);
        files.push(write(dir.join(format!("heatmap_{}.csv", kind.name())), matrix_csv(&grid))?);
        let title = format!("Head selections, {} (seed {seed})", kind.name());
        files.push(write(dir.join(format!("heatmap_{}.svg", kind.name())), color_grid(&title, &grid, "x", "y"))?);
        alive.push(Series { name: kind.name(), points: alive_series(&rs[0]) });
    }
    files.push(write(dir.join("alive.svg"), line_chart(&format!("Alive nodes (seed {seed})"), "round", "alive nodes", &alive))?);
    Ok(files)
}

/// Values of one weight axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
}

/// `lo:hi:count` (inclusive, evenly spaced) or a comma list.
pub fn parse_axis(text: &str) -> Result<Vec<f64>> {
    let bad = |why: String| Error::param("grid", format!("{text:?}: {why}"));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|e| bad(e.to_string()));
    let v = if let [lo, hi, n] = text.split(':').collect::<Vec<_>>()[..] {
        let (lo, hi) = (num(lo)?, num(hi)?);
        let n: usize = n.trim().parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?;
        match n {
            0 => return Err(bad("count must be positive".into())),
            1 => vec![lo],
            _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
        }
    } else {
        text.split(',').map(num).collect::<Result<Vec<_>>>()?
    };
    if v.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(bad("weights must be finite and >= 0".into()));
    }
    Ok(v)
}

impl GridSpec {
    /// `"a=<axis>;b=<axis>;g=<axis>"`, or one axis applied to all three.
    pub fn parse(text: &str) -> Result<Self> {
        if !text.contains('=') {
            let axis = parse_axis(text)?;
            return Ok(Self { alpha: axis.clone(), beta: axis.clone(), gamma: axis });
        }
        let (mut a, mut b, mut g) = (None, None, None);
        for part in text.split(';').filter(|p| !p.trim().is_empty()) {
            let (key, axis) = part.split_once('=').ok_or_else(|| Error::param("grid", format!("{part:?} lacks '='")))?;
            let slot = match key.trim() {
                "a" | "alpha" => &mut a,
                "b" | "beta" => &mut b,
                "g" | "gamma" => &mut g,
                other => return Err(Error::param("grid", format!("unknown axis {other:?}"))),
            };
            *slot = Some(parse_axis(axis)?);
        }
        let need = |v: Option<Vec<f64>>, n: &str| v.ok_or_else(|| Error::param("grid", format!("missing axis {n}")));
        Ok(Self { alpha: need(a, "alpha")?, beta: need(b, "beta")?, gamma: need(g, "gamma")? })
    }

    pub fn points(&self) -> Vec<MilpWeights> {
        let mut out = Vec::new();
        for &alpha in &self.alpha {
            for &beta in &self.beta {
                for &gamma in &self.gamma {
                    out.push(MilpWeights { alpha, beta, gamma });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub weights: MilpWeights,
    pub fnd: Option<u32>,
}

/// FND of the exact optimiser re-clustering every `period` rounds, for each
/// grid point on the configured topology.
pub fn sweep(cfg: &Config, grid: &GridSpec, period: u32) -> Result<Vec<SweepPoint>> {
    cfg.network.validate()?;
    let points = grid.points();
    let results = par::map(points.clone(), |w| -> Result<Option<u32>> {
        let gate = if period <= 1 { FixedGate::Always } else { FixedGate::Every(period) };
        let mut proto = Rlc::new(w, cfg.network.k_fraction, gate);
        let mut s = generate_topology(&cfg.network);
        Ok(simulate(&mut s, &mut proto, &cfg.radio, cfg.simulation.control, StopCondition::FirstDeath)?.fnd)
    });
    points.into_iter().zip(results).map(|(weights, fnd)| Ok(SweepPoint { weights, fnd: fnd? })).collect()
}

pub fn sweep_csv(points: &[SweepPoint]) -> String {
    let mut out = SWEEP_COLUMNS.join(",") + "\n";
    for p in points {
        let _ = writeln!(out, "{:?},{:?},{:?},{}", p.weights.alpha, p.weights.beta, p.weights.gamma, opt(p.fnd));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Alpha,
    Beta,
    Gamma,
}

impl Axis {
    fn of(self, w: &MilpWeights) -> f64 {
        match self {
            Axis::Alpha => w.alpha,
            Axis::Beta => w.beta,
            Axis::Gamma => w.gamma,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Axis::Alpha => "alpha",
            Axis::Beta => "beta",
            Axis::Gamma => "gamma",
        }
    }
}

/// Mean FND over the remaining axis: rows follow `row` values, columns
/// `col` values. The CSV form starts with a header row of column values
/// and each row with its row value.
pub fn projection(points: &[SweepPoint], grid: &GridSpec, row: Axis, col: Axis) -> Vec<Vec<f64>> {
    let axis = |a: Axis| match a {
        Axis::Alpha => &grid.alpha,
        Axis::Beta => &grid.beta,
        Axis::Gamma => &grid.gamma,
    };
    let (rv, cv) = (axis(row), axis(col));
    let mut sum = vec![vec![0.0; cv.len()]; rv.len()];
    let mut cnt = vec![vec![0usize; cv.len()]; rv.len()];
    for p in points {
        let (Some(i), Some(j)) = (rv.iter().position(|&v| v == row.of(&p.weights)), cv.iter().position(|&v| v == col.of(&p.weights)))
        else {
            continue;
        };
        if let Some(f) = p.fnd {
            sum[i][j] += f64::from(f);
            cnt[i][j] += 1;
        }
    }
    sum.iter()
        .zip(&cnt)
        .map(|(s, c)| s.iter().zip(c).map(|(s, &c)| if c > 0 { s / c as f64 } else { f64::NAN }).collect())
        .collect()
}

fn projection_csv(m: &[Vec<f64>], rows: &[f64], cols: &[f64], row: Axis, col: Axis) -> String {
    let mut out = format!("{}\\{}", row.name(), col.name());
    for c in cols {
        let _ = write!(out, ",{c:?}");
    }
    out.push('\n');
    for (r, vals) in rows.iter().zip(m) {
        let _ = write!(out, "{r:?}");
        for v in vals {
            let _ = write!(out, ",{v:?}");
        }
        out.push('\n');
    }
    out
}

/// `sweep.csv` plus the three pairwise projections as CSV and SVG.
pub fn write_sweep(dir: &Path, grid: &GridSpec, points: &[SweepPoint]) -> Result<Vec<PathBuf>> {
    let mut files = vec![write(dir.join("sweep.csv"), sweep_csv(points))?];
    let values = |a: Axis| match a {
        Axis::Alpha => &grid.alpha,
        Axis::Beta => &grid.beta,
        Axis::Gamma => &grid.gamma,
    };
    for (row, col) in [(Axis::Alpha, Axis::Beta), (Axis::Alpha, Axis::Gamma), (Axis::Beta, Axis::Gamma)] {
        let m = projection(points, grid, row, col);
        let stem = format!("fnd_{}_{}", row.name(), col.name());
        files.push(write(dir.join(format!("{stem}.csv")), projection_csv(&m, values(row), values(col), row, col))?);
        let title = format!("Mean FND over {} / {}", row.name(), col.name());
        files.push(write(dir.join(format!("{stem}.svg")), color_grid(&title, &m, col.name(), row.name()))?);
    }
    Ok(files)
}

/// Loads the two surrogate networks named in the configuration.
pub fn load_surrogate(cfg: &Config, out_dir: &Path) -> Result<SurrogateClusterer> {
    let load = |path: PathBuf| {
        if !path.exists() {
            return Err(Error::MissingArtifact { what: "surrogate model", path: path.display().to_string(), command: "train-surrogate" });
        }
        Predictor::load(&path)
    };
    let ch = load(cfg.paths.ch_model(out_dir))?;
    let assign = load(cfg.paths.assign_model(out_dir))?;
    if ch.n_nodes != cfg.network.n_nodes {
        return Err(Error::MismatchedNodes { left: cfg.network.n_nodes, right: ch.n_nodes });
    }
    Ok(SurrogateClusterer { ch, assign, k_fraction: cfg.network.k_fraction })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainAgentSummary {
    pub backend: Backend,
    pub steps: u64,
    pub episodes: u64,
    pub policy: PathBuf,
    pub log: PathBuf,
}

/// Trains a policy on the configured topology and writes `policy.json` (or
/// the configured path) and `train_log.jsonl`.
pub fn train_agent(cfg: &Config, out_dir: &Path, mut progress: impl FnMut(&dqn::LogEntry)) -> Result<TrainAgentSummary> {
    let mut log = String::new();
    let mut record = |e: &dqn::LogEntry| {
        log.push_str(&serde_json::to_string(e).expect("log entry serialises"));
        log.push('\n');
        progress(e);
    };
    let trained = match cfg.dqn.backend {
        Backend::Exact => {
            let mut env = Env::new(cfg.network.clone(), cfg.radio, cfg.simulation.control, cfg.weights, ExactClusterer::default())?;
            dqn::train(&mut env, &cfg.dqn, &mut record)?
        }
        Backend::Surrogate => {
            let sur = load_surrogate(cfg, out_dir)?;
            let mut env = Env::new(cfg.network.clone(), cfg.radio, cfg.simulation.control, cfg.weights, sur)?;
            dqn::train(&mut env, &cfg.dqn, &mut record)?
        }
    };
    let policy = cfg.paths.policy(out_dir);
    if let Some(dir) = policy.parent() {
        std::fs::create_dir_all(dir)?;
    }
    trained.qnet.save(&policy)?;
    let log_path = write(out_dir.join("train_log.jsonl"), log)?;
    Ok(TrainAgentSummary {
        backend: cfg.dqn.backend,
        steps: trained.log.len() as u64,
        episodes: trained.log.last().map_or(0, |e| e.episode + 1),
        policy,
        log: log_path,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateReport {
    pub schema_version: u32,
    pub rows: usize,
    pub duplicates: usize,
    pub train_rows: usize,
    pub test_rows: usize,
    pub ch_accuracy: surrogate::ChAccuracy,
    pub assign_accuracy: f64,
    pub ch_final_loss: Option<f64>,
    pub assign_final_loss: Option<f64>,
}

/// Builds (or takes) a labelled dataset, splits it, trains both networks
/// and writes the models, the dataset and `surrogate_report.json`.
pub fn train_surrogate(cfg: &Config, out_dir: &Path, dataset: Option<surrogate::SolutionDataset>) -> Result<SurrogateReport> {
    let ds = match dataset {
        Some(ds) => ds,
        None => {
            let scenarios: Vec<Scenario> = cfg
                .surrogate
                .dataset_seeds
                .iter()
                .map(|&seed| Scenario { network: network_for(cfg, seed), weights: cfg.weights })
                .collect();
            let ds = surrogate::build_dataset(&scenarios, &cfg.radio)?;
            ds.save(out_dir, "dataset")?;
            ds
        }
    };
    if ds.n_nodes != cfg.network.n_nodes {
        return Err(Error::MismatchedNodes { left: cfg.network.n_nodes, right: ds.n_nodes });
    }
    let (train, test) = ds.split(cfg.surrogate.train_fraction, cfg.surrogate.seed);
    let ch = surrogate::train_ch_predictor(&train, &cfg.surrogate)?;
    let assign = surrogate::train_assign_predictor(&train, &cfg.surrogate)?;
    let eval = if test.is_empty() { &train } else { &test };
    let report = SurrogateReport {
        schema_version: SCHEMA_VERSION,
        rows: ds.len(),
        duplicates: ds.duplicates,
        train_rows: train.len(),
        test_rows: test.len(),
        ch_accuracy: surrogate::ch_accuracy(&ch, eval)?,
        assign_accuracy: surrogate::assign_accuracy(&assign, eval)?,
        ch_final_loss: ch.history.last().copied(),
        assign_final_loss: assign.history.last().copied(),
    };
    std::fs::create_dir_all(out_dir)?;
    ch.save(&cfg.paths.ch_model(out_dir))?;
    assign.save(&cfg.paths.assign_model(out_dir))?;
    write(out_dir.join("surrogate_report.json"), serde_json::to_string_pretty(&report)? + "\n")?;
    Ok(report)
}

/// Result of checking one file against its schema.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchemaCheck {
    pub path: PathBuf,
    pub schema: &'static str,
    pub rows: usize,
}

fn fixed_schema(name: &str) -> Option<(&'static str, &'static [&'static str])> {
    match name {
        "rounds.csv" => Some(("rounds", &ROUNDS_COLUMNS)),
        "runs.csv" => Some(("runs", &RUNS_COLUMNS)),
        "ch_histogram.csv" => Some(("ch-histogram", &HISTOGRAM_COLUMNS)),
        "sweep.csv" => Some(("sweep", &SWEEP_COLUMNS)),
        _ => None,
    }
}

/// Validates a CSV emitted by this crate: header and arity for tabular
/// files, rectangular numeric content for matrices. Dataset files are
/// checked against their JSON sidecar.
pub fn schema_check(path: &Path) -> Result<SchemaCheck> {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
    let text = std::fs::read_to_string(path)?;
    let err = |line: usize, reason: String| Error::Csv { path: path.display().to_string(), line, reason };
    let mut lines = text.lines();

    if let Some((schema, cols)) = fixed_schema(&name) {
        let header = lines.next().ok_or_else(|| err(1, "empty file".into()))?;
        if header != cols.join(",") {
            return Err(err(1, format!("header {header:?} does not match {schema} v{SCHEMA_VERSION}")));
        }
        let mut rows = 0;
        for (i, line) in lines.enumerate() {
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != cols.len() {
                return Err(err(i + 2, format!("expected {} cells, found {}", cols.len(), cells.len())));
            }
            for (c, col) in cells.iter().zip(cols.iter()) {
                let ok = match *col {
                    "protocol" => c.parse::<ProtocolKind>().is_ok(),
                    "reclustered" => *c == "true" || *c == "false",
                    "fnd" | "hnd" | "lnd" => c.is_empty() || c.parse::<u64>().is_ok(),
                    _ => c.parse::<f64>().is_ok(),
                };
                if !ok {
                    return Err(err(i + 2, format!("column {col}: invalid value {c:?}")));
                }
            }
            rows += 1;
        }
        return Ok(SchemaCheck { path: path.to_path_buf(), schema, rows });
    }

    if let Some(stem) = name.strip_suffix(".csv") {
        let dir = path.parent().unwrap_or(Path::new("."));
        if dir.join(format!("{stem}.schema.json")).exists() {
            let ds = surrogate::SolutionDataset::load(dir, stem)?;
            return Ok(SchemaCheck { path: path.to_path_buf(), schema: "solution-dataset", rows: ds.len() });
        }
        if name.starts_with("heatmap_") || name.starts_with("fnd_") {
            let projection = name.starts_with("fnd_");
            let mut width = None;
            let mut rows = 0;
            for (i, line) in text.lines().enumerate() {
                let cells: Vec<&str> = line.split(',').collect();
                if *width.get_or_insert(cells.len()) != cells.len() {
                    return Err(err(i + 1, "ragged matrix row".into()));
                }
                let skip_first = projection && i == 0;
                for c in cells.iter().skip(usize::from(skip_first)) {
                    if c.parse::<f64>().is_err() {
                        return Err(err(i + 1, format!("invalid value {c:?}")));
                    }
                }
                rows += 1;
            }
            return Ok(SchemaCheck { path: path.to_path_buf(), schema: if projection { "projection" } else { "matrix" }, rows });
        }
    }
    Err(err(0, "no known schema for this file name".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Config {
        let mut c = Config::default();
        c.network.n_nodes = 20;
        c.network.k_fraction = 0.1;
        c
    }

    #[test]
    fn protocol_names_round_trip() {
        for k in ProtocolKind::ALL {
            assert_eq!(k.name().parse::<ProtocolKind>().unwrap(), k);
        }
        assert!("leachx".parse::<ProtocolKind>().is_err());
    }

    #[test]
    fn rounds_csv_has_one_row_per_round() {
        let r = run_protocol(ProtocolKind::LeachC, &small(), 1, None).unwrap();
        let csv = rounds_csv(&r);
        assert_eq!(csv.lines().count(), r.rounds() + 1);
        assert!(csv.starts_with("round,alive,e_net_j,e_dissipated_avg_j,data_sent,data_delivered,control_packets,reclustered,ch_count\n"));
        assert!(csv.lines().skip(1).all(|l| l.split(',').nth(7) == Some("true")));
    }

    #[test]
    fn learned_protocol_requires_a_policy() {
        let err = run_protocol(ProtocolKind::LeachRlc, &small(), 1, None).unwrap_err();
        assert!(matches!(err, Error::MissingArtifact { command: "train-agent", .. }));
    }

    #[test]
    fn median_examples() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }

    #[test]
    fn axis_parsing() {
        assert_eq!(parse_axis("0:100:5").unwrap(), vec![0.0, 25.0, 50.0, 75.0, 100.0]);
        assert_eq!(parse_axis("1, 2.5").unwrap(), vec![1.0, 2.5]);
        assert!(parse_axis("0:1:0").is_err());
        assert!(parse_axis("-1").is_err());
        let g = GridSpec::parse("a=0:100:3;b=10;g=1,2").unwrap();
        assert_eq!(g.points().len(), 6);
        assert_eq!(GridSpec::parse("0:100:3").unwrap().points().len(), 27);
        assert!(GridSpec::parse("a=1;b=2").is_err());
    }

    #[test]
    fn sweep_rows_are_complete_and_gamma_invariant() {
        let cfg = small();
        let grid = GridSpec { alpha: vec![0.0, 50.0, 100.0], beta: vec![0.0, 50.0, 100.0], gamma: vec![0.0, 50.0, 100.0] };
        let pts = sweep(&cfg, &grid, 1).unwrap();
        assert_eq!(pts.len(), 27);
        assert!(pts.iter().all(|p| p.fnd.is_some()));
        for chunk in pts.chunks(3) {
            assert!(chunk.iter().all(|p| p.fnd == chunk[0].fnd), "{chunk:?}");
        }
        let m = projection(&pts, &grid, Axis::Alpha, Axis::Beta);
        assert_eq!((m.len(), m[0].len()), (3, 3));
    }

    #[test]
    fn heatmap_totals_match_selections() {
        let cfg = small();
        let r = run_protocol(ProtocolKind::Leach, &cfg, 2, None).unwrap();
        let grid = selection_heatmap(&network_for(&cfg, 2), &r, 10);
        let total: f64 = grid.iter().flatten().sum();
        assert_eq!(total, r.ch_selection_count.iter().map(|&c| f64::from(c)).sum::<f64>());
    }

    #[test]
    fn written_files_pass_schema_check() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small();
        let r = run_protocol(ProtocolKind::Leach, &cfg, 1, None).unwrap();
        let files = write_simulation(dir.path(), &r, 1).unwrap();
        assert_eq!(schema_check(&files[0]).unwrap().rows, r.rounds());
        let grid = GridSpec::parse("0:100:2").unwrap();
        let pts = sweep(&cfg, &grid, 1).unwrap();
        for f in write_sweep(dir.path(), &grid, &pts).unwrap() {
            if f.extension().is_some_and(|e| e == "csv") {
                schema_check(&f).unwrap();
            }
        }
        let bad = dir.path().join("rounds.csv");
        std::fs::write(&bad, "round,alive\n1,2\n").unwrap();
        assert!(schema_check(&bad).is_err());
    }
}
