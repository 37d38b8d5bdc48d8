//! Monte Carlo engines: single-site Metropolis and cluster updates for the
//! spin model (open volumes or tori), single-bond heat bath for the biased
//! random-cluster model under the window-pair boundary conditions, chain
//! running with reproducible seeds, and histograms.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::biased_rc::WindowPair;
use crate::lattice::Volume;
use crate::potts::{ModelParams, PottsError};
use crate::unionfind::UnionFind;

#[derive(Debug, Error)]
pub enum McError {
    #[error(transparent)]
    Potts(#[from] PottsError),
    #[error("invalid chain configuration: {0}")]
    BadConfig(String),
    #[error("histogram needs a nonempty series")]
    EmptySeries,
}

/// Index-based simulation graph. `boundary_counts[i]` is the number of
/// lattice neighbours of site i outside the graph (used by the homogeneous
/// boundary condition); zero everywhere on the torus.
#[derive(Clone, Debug)]
pub struct SimGraph {
    pub n_sites: usize,
    pub bonds: Vec<[u32; 2]>,
    pub boundary_counts: Vec<u8>,
    pub adj: Vec<Vec<(u32, u32)>>,
}

impl SimGraph {
    pub fn from_volume(volume: &Volume) -> SimGraph {
        let n = volume.n_sites();
        let bonds: Vec<[u32; 2]> = volume
            .bonds()
            .iter()
            .map(|b| {
                let [u, v] = b.endpoints();
                [volume.site_index(u).unwrap() as u32, volume.site_index(v).unwrap() as u32]
            })
            .collect();
        let boundary_counts = volume
            .sites()
            .iter()
            .map(|s| {
                s.incident_bonds().iter().filter(|b| !volume.contains_site(b.other(*s))).count() as u8
            })
            .collect();
        Self::assemble(n, bonds, boundary_counts)
    }

    pub fn torus(w: u32, h: u32) -> SimGraph {
        assert!(w >= 3 && h >= 3, "torus needs at least 3x3 to avoid double bonds");
        let (w, h) = (w as usize, h as usize);
        let idx = |x: usize, y: usize| (y * w + x) as u32;
        let mut bonds = Vec::with_capacity(2 * w * h);
        for y in 0..h {
            for x in 0..w {
                bonds.push([idx(x, y), idx((x + 1) % w, y)]);
                bonds.push([idx(x, y), idx(x, (y + 1) % h)]);
            }
        }
        Self::assemble(w * h, bonds, vec![0; w * h])
    }

    fn assemble(n: usize, bonds: Vec<[u32; 2]>, boundary_counts: Vec<u8>) -> SimGraph {
        let mut adj = vec![Vec::new(); n];
        for (bi, b) in bonds.iter().enumerate() {
            adj[b[0] as usize].push((b[1], bi as u32));
            adj[b[1] as usize].push((b[0], bi as u32));
        }
        SimGraph { n_sites: n, bonds, boundary_counts, adj }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "k")]
pub enum Boundary {
    Free,
    Colour(u32),
    Disordered,
    Ordered,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplerKind {
    Metropolis,
    Cluster,
    RcHeatbath,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum GraphSpec {
    Window { n: u32 },
    Rect { w: u32, h: u32 },
    Torus { w: u32, h: u32 },
}

/// Everything one chain needs; deterministic given the seed.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainConfig {
    pub graph: GraphSpec,
    pub q: f64,
    pub r: f64,
    pub beta: f64,
    pub boundary: Boundary,
    pub sampler: SamplerKind,
    pub sweeps: u64,
    pub burn_in: u64,
    pub thin: u64,
    pub seed: u64,
}

impl ChainConfig {
    pub fn params(&self) -> Result<ModelParams, PottsError> {
        ModelParams::new(self.q, self.r, self.beta)
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ObservableSeries {
    pub sweep: Vec<u64>,
    pub energy_per_site: Vec<f64>,
    /// one row per measurement, one column per colour (spin chains only)
    pub colour_fractions: Vec<Vec<f64>>,
    pub largest_component_fraction: Vec<f64>,
    pub isolated_fraction: Vec<f64>,
}

impl ObservableSeries {
    pub fn len(&self) -> usize {
        self.sweep.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sweep.is_empty()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChainSummary {
    pub config: ChainConfig,
    pub n_measurements: usize,
    pub acceptance_rate: Option<f64>,
}

/// One Metropolis proposal: uniform site, uniform colour, accepted with
/// min(1, e^{-beta dH}). Returns whether the proposal was accepted.
pub fn metropolis_site_update<R: Rng>(
    graph: &SimGraph,
    colours: &mut [u32],
    params: &ModelParams,
    q: u32,
    n_colours: u32,
    boundary_k: Option<u32>,
    rng: &mut R,
) -> bool {
    let site = rng.gen_range(0..graph.n_sites);
    let proposal = rng.gen_range(1..=n_colours);
    let old = colours[site];
    if proposal == old {
        return true;
    }
    let matches = |c: u32| -> i64 {
        let mut m = 0i64;
        if c <= q {
            for &(nb, _) in &graph.adj[site] {
                if colours[nb as usize] == c {
                    m += 1;
                }
            }
            if boundary_k == Some(c) {
                m += graph.boundary_counts[site] as i64;
            }
        }
        m
    };
    let dh = -(matches(proposal) - matches(old)); // H = -#matches
    let accept = dh <= 0 || rng.gen_bool((-params.beta * dh as f64).exp());
    if accept {
        colours[site] = proposal;
    }
    accept
}

/// One cluster update on the simulation graph: compatible bonds are opened
/// with probability p_beta, frame-connected clusters are clamped to the
/// boundary colour, the rest are recoloured uniformly.
pub fn cluster_sweep<R: Rng>(
    graph: &SimGraph,
    colours: &mut [u32],
    params: &ModelParams,
    q: u32,
    n_colours: u32,
    boundary_k: Option<u32>,
    rng: &mut R,
) {
    let p = params.p();
    let n = graph.n_sites;
    let mut uf = UnionFind::new(n + 1);
    let mut covered = vec![false; n];
    for (bi, b) in graph.bonds.iter().enumerate() {
        let _ = bi;
        let (u, v) = (b[0] as usize, b[1] as usize);
        let cu = colours[u];
        if cu == colours[v] && cu <= q && p > 0.0 && rng.gen_bool(p) {
            uf.union(u, v);
            covered[u] = true;
            covered[v] = true;
        }
    }
    if let Some(k) = boundary_k {
        for i in 0..n {
            if colours[i] != k {
                continue;
            }
            for _ in 0..graph.boundary_counts[i] {
                if p > 0.0 && rng.gen_bool(p) {
                    uf.union(i, n);
                    covered[i] = true;
                }
            }
        }
    }
    let frame_root = uf.find(n);
    let mut root_colour: Vec<u32> = vec![0; n + 1];
    if boundary_k.is_some() {
        root_colour[frame_root] = boundary_k.unwrap();
    }
    for i in 0..n {
        if !covered[i] {
            colours[i] = rng.gen_range(1..=n_colours);
            continue;
        }
        let root = uf.find(i);
        if root_colour[root] == 0 {
            root_colour[root] = rng.gen_range(1..=q);
        }
        colours[i] = root_colour[root];
    }
}

/// Window-pair graph for the random-cluster heat bath: frozen bonds are
/// fixed by the boundary class, free bonds are updated one at a time.
#[derive(Clone, Debug)]
pub struct RcChain {
    pub pair: WindowPair,
    /// all bonds of the outer window: frozen first, then free
    ends: Vec<[u32; 2]>,
    n_frozen_present: usize,
    n_free: usize,
    /// current state of the free bonds
    pub present: Vec<bool>,
    q: f64,
    r: f64,
    p: f64,
}

impl RcChain {
    pub fn new(n: u32, params: &ModelParams, boundary: Boundary) -> Result<RcChain, McError> {
        let pair = WindowPair::new(n);
        let (frozen_present, free) = match boundary {
            Boundary::Ordered => (pair.ring.clone(), pair.non_ring.clone()),
            Boundary::Disordered => (Vec::new(), pair.inner_bonds.clone()),
            _ => {
                return Err(McError::BadConfig(
                    "random-cluster chains need the disordered or ordered boundary".into(),
                ))
            }
        };
        let site_index = |s| pair.outer.site_index(s).unwrap() as u32;
        let mut ends = Vec::new();
        for b in frozen_present.iter().chain(free.iter()) {
            let [u, v] = b.endpoints();
            ends.push([site_index(u), site_index(v)]);
        }
        Ok(RcChain {
            n_frozen_present: frozen_present.len(),
            n_free: free.len(),
            ends,
            present: vec![false; free.len()],
            q: params.q,
            r: params.r,
            p: params.p(),
            pair,
        })
    }

    pub fn n_free(&self) -> usize {
        self.n_free
    }

    fn degree_without(&self, site: u32, skip: usize) -> usize {
        let mut d = 0;
        for i in 0..self.n_frozen_present + self.n_free {
            if i == skip || !self.is_present(i) {
                continue;
            }
            if self.ends[i][0] == site || self.ends[i][1] == site {
                d += 1;
            }
        }
        d
    }

    fn is_present(&self, i: usize) -> bool {
        i < self.n_frozen_present || self.present[i - self.n_frozen_present]
    }

    fn connected_without(&self, a: u32, b: u32, skip: usize) -> bool {
        // bounded BFS over present bonds
        let n = self.pair.outer.n_sites();
        let mut seen = vec![false; n];
        let mut stack = vec![a];
        seen[a as usize] = true;
        while let Some(s) = stack.pop() {
            if s == b {
                return true;
            }
            for i in 0..self.n_frozen_present + self.n_free {
                if i == skip || !self.is_present(i) {
                    continue;
                }
                let [u, v] = self.ends[i];
                let o = if u == s {
                    v
                } else if v == s {
                    u
                } else {
                    continue;
                };
                if !seen[o as usize] {
                    seen[o as usize] = true;
                    stack.push(o);
                }
            }
        }
        false
    }

    /// Heat-bath refresh of one uniformly chosen free bond. The insertion
    /// odds are p/(1-p) (q+r)^{dk0} q^{dk1} with the component deltas read
    /// off locally.
    pub fn heatbath_step<R: Rng>(&mut self, rng: &mut R) {
        let j = rng.gen_range(0..self.n_free);
        let idx = self.n_frozen_present + j;
        let [u, v] = self.ends[idx];
        let u_iso = self.degree_without(u, idx) == 0;
        let v_iso = self.degree_without(v, idx) == 0;
        let ln_odds = (self.p / (1.0 - self.p)).ln()
            + match (u_iso, v_iso) {
                (true, true) => self.q.ln() - 2.0 * (self.q + self.r).ln(),
                (true, false) | (false, true) => -(self.q + self.r).ln(),
                (false, false) => {
                    if self.connected_without(u, v, idx) {
                        0.0
                    } else {
                        -self.q.ln()
                    }
                }
            };
        let p_present = 1.0 / (1.0 + (-ln_odds).exp());
        self.present[j] = rng.gen_bool(p_present);
    }

    /// Component counts of the whole configuration (frozen plus free).
    pub fn kappa(&self) -> (usize, usize) {
        let n = self.pair.outer.n_sites();
        let mut uf = UnionFind::new(n);
        let mut covered = vec![false; n];
        for i in 0..self.n_frozen_present + self.n_free {
            if !self.is_present(i) {
                continue;
            }
            let [u, v] = self.ends[i];
            uf.union(u as usize, v as usize);
            covered[u as usize] = true;
            covered[v as usize] = true;
        }
        let mut k0 = 0;
        let mut k1 = 0;
        let mut seen = std::collections::HashSet::new();
        for s in 0..n {
            if !covered[s] {
                k0 += 1;
            } else if seen.insert(uf.find(s)) {
                k1 += 1;
            }
        }
        (k0, k1)
    }

    pub fn n_present(&self) -> usize {
        (0..self.n_frozen_present + self.n_free).filter(|&i| self.is_present(i)).count()
    }

    pub fn largest_component_fraction(&self) -> f64 {
        let n = self.pair.outer.n_sites();
        let mut uf = UnionFind::new(n);
        for i in 0..self.n_frozen_present + self.n_free {
            if !self.is_present(i) {
                continue;
            }
            let [u, v] = self.ends[i];
            uf.union(u as usize, v as usize);
        }
        let mut best = 0;
        for s in 0..n {
            best = best.max(uf.class_size(s));
        }
        best as f64 / n as f64
    }
}

/// Spin-side observables of one configuration.
fn measure_spins(
    graph: &SimGraph,
    colours: &[u32],
    q: u32,
    n_colours: u32,
) -> (f64, Vec<f64>, f64, f64) {
    let n = graph.n_sites;
    let mut matches = 0i64;
    let mut uf = UnionFind::new(n);
    let mut covered = vec![false; n];
    for b in &graph.bonds {
        let (u, v) = (b[0] as usize, b[1] as usize);
        let cu = colours[u];
        if cu == colours[v] && cu <= q {
            matches += 1;
            uf.union(u, v);
            covered[u] = true;
            covered[v] = true;
        }
    }
    let energy_per_site = -(matches as f64) / n as f64;
    let mut fractions = vec![0.0; n_colours as usize];
    for &c in colours {
        fractions[(c - 1) as usize] += 1.0 / n as f64;
    }
    let mut largest = 0;
    for s in 0..n {
        if covered[s] {
            largest = largest.max(uf.class_size(s));
        }
    }
    let isolated = covered.iter().filter(|&&c| !c).count();
    (
        energy_per_site,
        fractions,
        largest as f64 / n as f64,
        isolated as f64 / n as f64,
    )
}

/// Runs one chain to completion. One sweep is n_sites Metropolis
/// proposals, one cluster update, or n_free heat-bath refreshes.
pub fn run_chain(cfg: &ChainConfig) -> Result<(ObservableSeries, ChainSummary), McError> {
    if cfg.thin == 0 {
        return Err(McError::BadConfig("thin must be >= 1".into()));
    }
    let params = cfg.params()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut series = ObservableSeries::default();

    match cfg.sampler {
        SamplerKind::RcHeatbath => {
            let n = match cfg.graph {
                GraphSpec::Window { n } => n,
                _ => {
                    return Err(McError::BadConfig(
                        "the random-cluster heat bath runs on window pairs".into(),
                    ))
                }
            };
            let mut chain = RcChain::new(n, &params, cfg.boundary)?;
            let n_sites = chain.pair.outer.n_sites() as f64;
            for sweep in 0..cfg.burn_in + cfg.sweeps {
                for _ in 0..chain.n_free().max(1) {
                    chain.heatbath_step(&mut rng);
                }
                if sweep >= cfg.burn_in && (sweep - cfg.burn_in) % cfg.thin == 0 {
                    let (k0, _) = chain.kappa();
                    series.sweep.push(sweep);
                    series.energy_per_site.push(-(chain.n_present() as f64) / n_sites);
                    series.colour_fractions.push(Vec::new());
                    series.largest_component_fraction.push(chain.largest_component_fraction());
                    series.isolated_fraction.push(k0 as f64 / n_sites);
                }
            }
            let summary = ChainSummary {
                config: cfg.clone(),
                n_measurements: series.len(),
                acceptance_rate: None,
            };
            Ok((series, summary))
        }
        SamplerKind::Metropolis | SamplerKind::Cluster => {
            let (q, r) = params.integer_colours()?;
            let n_colours = q + r;
            let boundary_k = match cfg.boundary {
                Boundary::Free => None,
                Boundary::Colour(k) => {
                    if k < 1 || k > q {
                        return Err(McError::BadConfig(format!("boundary colour {k} not visible")));
                    }
                    Some(k)
                }
                _ => {
                    return Err(McError::BadConfig(
                        "spin chains take the free or colour boundary".into(),
                    ))
                }
            };
            let graph = match cfg.graph {
                GraphSpec::Window { n } => SimGraph::from_volume(&Volume::window(n)),
                GraphSpec::Rect { w, h } => SimGraph::from_volume(&Volume::rect(w, h)),
                GraphSpec::Torus { w, h } => {
                    if boundary_k.is_some() {
                        return Err(McError::BadConfig(
                            "the torus has no boundary to colour".into(),
                        ));
                    }
                    SimGraph::torus(w, h)
                }
            };
            // start from the boundary colour when present, else colour 1
            let mut colours = vec![boundary_k.unwrap_or(1); graph.n_sites];
            let mut accepted = 0u64;
            let mut proposed = 0u64;
            for sweep in 0..cfg.burn_in + cfg.sweeps {
                match cfg.sampler {
                    SamplerKind::Metropolis => {
                        for _ in 0..graph.n_sites {
                            proposed += 1;
                            if metropolis_site_update(
                                &graph, &mut colours, &params, q, n_colours, boundary_k, &mut rng,
                            ) {
                                accepted += 1;
                            }
                        }
                    }
                    SamplerKind::Cluster => {
                        cluster_sweep(&graph, &mut colours, &params, q, n_colours, boundary_k, &mut rng);
                    }
                    SamplerKind::RcHeatbath => unreachable!(),
                }
                if sweep >= cfg.burn_in && (sweep - cfg.burn_in) % cfg.thin == 0 {
                    let (e, fr, largest, isolated) = measure_spins(&graph, &colours, q, n_colours);
                    series.sweep.push(sweep);
                    series.energy_per_site.push(e);
                    series.colour_fractions.push(fr);
                    series.largest_component_fraction.push(largest);
                    series.isolated_fraction.push(isolated);
                }
            }
            let summary = ChainSummary {
                config: cfg.clone(),
                n_measurements: series.len(),
                acceptance_rate: if proposed > 0 {
                    Some(accepted as f64 / proposed as f64)
                } else {
                    None
                },
            };
            Ok((series, summary))
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn centres(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }
}

pub fn histogram(series: &[f64], bins: usize) -> Result<Histogram, McError> {
    assert!(bins >= 2, "histogram needs at least two bins");
    if series.is_empty() {
        return Err(McError::EmptySeries);
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in series {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if hi <= lo {
        // constant series: a single occupied bin in the middle
        lo -= 0.5;
        hi += 0.5;
    }
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|i| lo + i as f64 * width).collect();
    let mut counts = vec![0u64; bins];
    for &v in series {
        let mut i = ((v - lo) / width) as usize;
        if i >= bins {
            i = bins - 1;
        }
        counts[i] += 1;
    }
    Ok(Histogram { edges, counts })
}

/// Histogram of an integer-valued series with bin edges aligned to whole
/// levels, so discrete observables do not alias against the bin grid. The
/// bin width is the smallest whole number of levels giving at most
/// `target_bins` bins.
pub fn histogram_integer(series: &[i64], target_bins: usize) -> Result<Histogram, McError> {
    assert!(target_bins >= 2);
    if series.is_empty() {
        return Err(McError::EmptySeries);
    }
    let lo = *series.iter().min().unwrap();
    let hi = *series.iter().max().unwrap();
    let levels = (hi - lo + 1) as usize;
    let width = levels.div_ceil(target_bins).max(1) as i64;
    let bins = ((levels as i64 + width - 1) / width) as usize;
    let edges: Vec<f64> = (0..=bins).map(|i| lo as f64 - 0.5 + (i as i64 * width) as f64).collect();
    let mut counts = vec![0u64; bins];
    for &v in series {
        counts[((v - lo) / width) as usize] += 1;
    }
    Ok(Histogram { edges, counts })
}

/// Batch-means estimate of the mean and its standard error.
pub fn batch_means(series: &[f64], n_batches: usize) -> (f64, f64) {
    assert!(n_batches >= 2);
    if series.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = series.iter().sum::<f64>() / series.len() as f64;
    if series.len() < 2 * n_batches {
        let var =
            series.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (series.len() - 1).max(1) as f64;
        return (mean, (var / series.len() as f64).sqrt());
    }
    let batch_len = series.len() / n_batches;
    let mut batch_means = Vec::with_capacity(n_batches);
    for b in 0..n_batches {
        let chunk = &series[b * batch_len..(b + 1) * batch_len];
        batch_means.push(chunk.iter().sum::<f64>() / chunk.len() as f64);
    }
    let bvar = batch_means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (n_batches - 1) as f64;
    (mean, (bvar / n_batches as f64).sqrt())
}

/// Exact reference kernels for the samplers, enumerated state by state.
/// These mirror the update rules analytically and serve as the oracles for
/// the stationarity checks.
pub mod exact {
    use super::*;

    /// All spin states of a small graph, as mixed-radix colour vectors.
    pub fn spin_states(n_sites: usize, n_colours: u32) -> Vec<Vec<u32>> {
        let mut states = Vec::new();
        let mut current = vec![1u32; n_sites];
        loop {
            states.push(current.clone());
            let mut pos = 0;
            loop {
                if pos == n_sites {
                    return states;
                }
                current[pos] += 1;
                if current[pos] <= n_colours {
                    break;
                }
                current[pos] = 1;
                pos += 1;
            }
        }
    }

    /// Boltzmann weights (unnormalized) of the spin states.
    pub fn boltzmann_weights(
        graph: &SimGraph,
        states: &[Vec<u32>],
        params: &ModelParams,
        q: u32,
        boundary_k: Option<u32>,
    ) -> Vec<f64> {
        states
            .iter()
            .map(|c| {
                let mut matches = 0i64;
                for b in &graph.bonds {
                    let cu = c[b[0] as usize];
                    if cu == c[b[1] as usize] && cu <= q {
                        matches += 1;
                    }
                }
                if let Some(k) = boundary_k {
                    for i in 0..graph.n_sites {
                        if c[i] == k {
                            matches += graph.boundary_counts[i] as i64;
                        }
                    }
                }
                (params.beta * matches as f64).exp()
            })
            .collect()
    }

    /// The exact Metropolis transition matrix (row-stochastic, row = from).
    pub fn metropolis_kernel(
        graph: &SimGraph,
        states: &[Vec<u32>],
        params: &ModelParams,
        q: u32,
        n_colours: u32,
        boundary_k: Option<u32>,
    ) -> Vec<Vec<f64>> {
        let weights = boltzmann_weights(graph, states, params, q, boundary_k);
        let index: std::collections::HashMap<Vec<u32>, usize> =
            states.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        let n = states.len();
        let n_props = (graph.n_sites as f64) * (n_colours as f64);
        let mut kernel = vec![vec![0.0; n]; n];
        for (i, state) in states.iter().enumerate() {
            let mut stay = 0.0;
            for site in 0..graph.n_sites {
                for colour in 1..=n_colours {
                    if colour == state[site] {
                        stay += 1.0 / n_props;
                        continue;
                    }
                    let mut to = state.clone();
                    to[site] = colour;
                    let j = index[&to];
                    let accept = (weights[j] / weights[i]).min(1.0);
                    kernel[i][j] += accept / n_props;
                    stay += (1.0 - accept) / n_props;
                }
            }
            kernel[i][i] += stay;
        }
        kernel
    }

    /// The exact cluster-update transition matrix: sum over bond
    /// configurations of P(X | sigma) P(sigma' | X), with the frame
    /// clamping for the homogeneous boundary.
    pub fn cluster_kernel(
        graph: &SimGraph,
        states: &[Vec<u32>],
        params: &ModelParams,
        q: u32,
        n_colours: u32,
        boundary_k: Option<u32>,
    ) -> Vec<Vec<f64>> {
        let p = params.p();
        let n_states = states.len();
        let n_bonds = graph.bonds.len();
        let total_boundary: usize = graph.boundary_counts.iter().map(|&c| c as usize).sum();
        let mut kernel = vec![vec![0.0; n_states]; n_states];

        for (i, sigma) in states.iter().enumerate() {
            let compatible: Vec<bool> = graph
                .bonds
                .iter()
                .map(|b| {
                    let cu = sigma[b[0] as usize];
                    cu == sigma[b[1] as usize] && cu <= q
                })
                .collect();
            // boundary slots: one per external neighbour of a site
            // carrying the boundary colour
            let mut slot_site = Vec::new();
            if let Some(k) = boundary_k {
                for s in 0..graph.n_sites {
                    if sigma[s] == k {
                        for _ in 0..graph.boundary_counts[s] {
                            slot_site.push(s);
                        }
                    }
                }
            }
            let _ = total_boundary;
            let n_slots = slot_site.len();
            for bond_mask in 0u64..(1 << n_bonds) {
                // probability of this bond draw
                let mut p_draw = 1.0;
                let mut valid = true;
                for b in 0..n_bonds {
                    let open = bond_mask >> b & 1 == 1;
                    if open && !compatible[b] {
                        valid = false;
                        break;
                    }
                    if compatible[b] {
                        p_draw *= if open { p } else { 1.0 - p };
                    }
                }
                if !valid || p_draw == 0.0 {
                    continue;
                }
                for slot_mask in 0u64..(1 << n_slots) {
                    let mut p_slots = 1.0;
                    for s in 0..n_slots {
                        let open = slot_mask >> s & 1 == 1;
                        p_slots *= if open { p } else { 1.0 - p };
                    }
                    if p_slots == 0.0 {
                        continue;
                    }
                    // components under this draw
                    let mut uf = UnionFind::new(graph.n_sites + 1);
                    let mut covered = vec![false; graph.n_sites];
                    for b in 0..n_bonds {
                        if bond_mask >> b & 1 == 1 {
                            let [u, v] = graph.bonds[b];
                            uf.union(u as usize, v as usize);
                            covered[u as usize] = true;
                            covered[v as usize] = true;
                        }
                    }
                    for s in 0..n_slots {
                        if slot_mask >> s & 1 == 1 {
                            uf.union(slot_site[s], graph.n_sites);
                            covered[slot_site[s]] = true;
                        }
                    }
                    let frame_root = uf.find(graph.n_sites);
                    // probability of each target state given the clusters
                    for (j, target) in states.iter().enumerate() {
                        let mut prob = p_draw * p_slots;
                        let mut root_colour: Vec<Option<u32>> = vec![None; graph.n_sites + 1];
                        if boundary_k.is_some() {
                            root_colour[frame_root] = boundary_k;
                        }
                        let mut ok = true;
                        for s in 0..graph.n_sites {
                            let c = target[s];
                            if !covered[s] {
                                prob *= 1.0 / n_colours as f64;
                                continue;
                            }
                            if c > q {
                                ok = false;
                                break;
                            }
                            let root = uf.find(s);
                            match root_colour[root] {
                                None => {
                                    root_colour[root] = Some(c);
                                    prob *= 1.0 / q as f64;
                                }
                                Some(rc) => {
                                    if rc != c {
                                        ok = false;
                                        break;
                                    }
                                }
                            }
                        }
                        if ok {
                            kernel[i][j] += prob;
                        }
                    }
                }
            }
        }
        kernel
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn torus_counts() {
        let g = SimGraph::torus(4, 4);
        assert_eq!(g.n_sites, 16);
        assert_eq!(g.bonds.len(), 32);
        assert!(g.boundary_counts.iter().all(|&c| c == 0));
    }

    #[test]
    fn window_graph_boundary_counts() {
        let g = SimGraph::from_volume(&Volume::window(0));
        assert_eq!(g.n_sites, 1);
        assert_eq!(g.boundary_counts, vec![4]);
    }

    #[test]
    fn metropolis_accepts_everything_at_beta_zero() {
        let g = SimGraph::from_volume(&Volume::rect(2, 2));
        let params = ModelParams::new(2.0, 1.0, 0.0).unwrap();
        let mut colours = vec![1u32; 4];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..500 {
            assert!(metropolis_site_update(&g, &mut colours, &params, 2, 3, None, &mut rng));
        }
    }

    #[test]
    fn chain_is_deterministic_given_seed() {
        let cfg = ChainConfig {
            graph: GraphSpec::Rect { w: 4, h: 4 },
            q: 2.0,
            r: 1.0,
            beta: 0.8,
            boundary: Boundary::Free,
            sampler: SamplerKind::Cluster,
            sweeps: 50,
            burn_in: 10,
            thin: 2,
            seed: 99,
        };
        let (a, _) = run_chain(&cfg).unwrap();
        let (b, _) = run_chain(&cfg).unwrap();
        assert_eq!(a.energy_per_site, b.energy_per_site);
        assert_eq!(a.colour_fractions, b.colour_fractions);
    }

    #[test]
    fn zero_sweeps_gives_empty_series() {
        let cfg = ChainConfig {
            graph: GraphSpec::Rect { w: 2, h: 2 },
            q: 2.0,
            r: 1.0,
            beta: 0.5,
            boundary: Boundary::Free,
            sampler: SamplerKind::Metropolis,
            sweeps: 0,
            burn_in: 0,
            thin: 1,
            seed: 7,
        };
        let (series, summary) = run_chain(&cfg).unwrap();
        assert!(series.is_empty());
        assert_eq!(summary.n_measurements, 0);
    }

    #[test]
    fn infinite_temperature_colour_fractions() {
        let cfg = ChainConfig {
            graph: GraphSpec::Rect { w: 8, h: 8 },
            q: 2.0,
            r: 1.0,
            beta: 0.0,
            boundary: Boundary::Free,
            sampler: SamplerKind::Cluster,
            sweeps: 2000,
            burn_in: 100,
            thin: 1,
            seed: 3,
        };
        let (series, _) = run_chain(&cfg).unwrap();
        for colour in 0..3 {
            let mean: f64 = series.colour_fractions.iter().map(|f| f[colour]).sum::<f64>()
                / series.len() as f64;
            // i.i.d. uniform over 3 colours on 64 sites
            let sd = (1.0 / 3.0 * 2.0 / 3.0 / (64.0 * series.len() as f64)).sqrt();
            assert!((mean - 1.0 / 3.0).abs() < 5.0 * sd, "colour {colour}: {mean}");
        }
    }

    #[test]
    fn heatbath_respects_frozen_ring() {
        let params = ModelParams::new(2.0, 1.0, 1.1).unwrap();
        let mut chain = RcChain::new(0, &params, Boundary::Ordered).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..2000 {
            chain.heatbath_step(&mut rng);
            // ring bonds are all present by construction (frozen prefix)
            assert_eq!(chain.n_present() - chain.present.iter().filter(|&&b| b).count(), 8);
        }
    }

    #[test]
    fn histogram_examples() {
        let h = histogram(&[1.0; 50], 5).unwrap();
        assert_eq!(h.total(), 50);
        assert_eq!(h.counts.iter().filter(|&&c| c > 0).count(), 1);

        let two_delta: Vec<f64> = (0..40).map(|i| if i % 2 == 0 { -1.0 } else { 1.0 }).collect();
        let h = histogram(&two_delta, 8).unwrap();
        assert_eq!(h.counts.iter().filter(|&&c| c > 0).count(), 2);

        assert!(histogram(&[], 4).is_err());
    }

    #[test]
    fn histogram_uniform_is_flat() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let series: Vec<f64> = (0..80_000).map(|_| rng.gen_range(0.0..1.0)).collect();
        let bins = 10;
        let h = histogram(&series, bins).unwrap();
        let expect = series.len() as f64 / bins as f64;
        let sd = (series.len() as f64 * (1.0 / bins as f64) * (1.0 - 1.0 / bins as f64)).sqrt();
        for &c in &h.counts {
            assert!((c as f64 - expect).abs() < 4.0 * sd);
        }
    }

    #[test]
    fn batch_means_reasonable() {
        let series: Vec<f64> = (0..3200).map(|i| (i % 2) as f64).collect();
        let (mean, err) = batch_means(&series, 32);
        assert!((mean - 0.5).abs() < 1e-12);
        assert!(err < 0.01);
    }
}
