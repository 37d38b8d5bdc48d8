//! Abstract contour models: enumeration of contours inside a volume,
//! partition functions over mutually compatible families, the
//! order/disorder weights whose contour models reproduce the biased
//! random-cluster partition functions, truncation, finite-volume pressure
//! estimates and Peierls sums.

use std::cell::RefCell;
use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contours::{
    extract_contours, geometry, Config, Contour, ContourGeometry, ContourKind, Energies,
    log_rho,
};
use crate::lattice::{Bond, Site, Volume, VolumeKey};
use crate::logsum::{LogSum, LogValue};
use crate::potts::ModelParams;

#[derive(Debug, Error)]
pub enum CmError {
    #[error("volume with {bonds} bonds exceeds the configuration sweep cap of {cap} bonds")]
    VolumeCapExceeded { bonds: usize, cap: usize },
    #[error("family sum aborted after {visited} families (cap {cap})")]
    FamilyCapExceeded { visited: u64, cap: u64 },
    #[error("pair universe of {pairs} exceeds the {max} supported by family masks")]
    UniverseTooLarge { pairs: usize, max: usize },
}

/// Enumeration budgets. Every capped result carries a completeness flag;
/// golden values are only asserted on complete enumerations.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnumerationCaps {
    /// growth cap on |B(gamma)| for candidate-set enumeration
    pub max_contour_bonds: usize,
    /// cap on contours per family in the partition sums
    pub max_family_size: usize,
    /// volumes with at most this many bonds may be swept configuration by
    /// configuration (2^bonds states)
    pub volume_cap_bonds: usize,
    /// abort threshold for the family DFS
    pub max_family_nodes: u64,
}

impl Default for EnumerationCaps {
    fn default() -> Self {
        EnumerationCaps {
            max_contour_bonds: 8,
            max_family_size: 24,
            volume_cap_bonds: 20,
            max_family_nodes: 400_000_000,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TruncationParams {
    pub tau: f64,
}

impl TruncationParams {
    pub fn new(tau: f64) -> TruncationParams {
        assert!(tau > 0.0, "tau must be positive");
        TruncationParams { tau }
    }
}

/// Provenance of a weight assignment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum WeightTag {
    Rho,
    RhoTilde,
    XiDisorder,
    XiOrder,
    XiDisorderSmall,
    Truncated,
    Custom,
}

/// A contour together with everything the weights need.
#[derive(Clone, Debug)]
pub struct EnumeratedContour {
    pub contour: Contour,
    pub geometry: ContourGeometry,
}

/// Result of enumerating the contours inside a volume.
#[derive(Clone, Debug)]
pub struct ContourList {
    pub contours: Vec<EnumeratedContour>,
    /// every disorder contour with bonds in the volume is present
    pub complete_disorder: bool,
    /// every order contour with bonds in the volume is present
    pub complete_order: bool,
}

impl ContourList {
    pub fn of_kind(&self, kind: ContourKind) -> impl Iterator<Item = &EnumeratedContour> {
        self.contours.iter().filter(move |c| c.contour.kind() == kind)
    }

    pub fn complete_for(&self, kind: ContourKind) -> bool {
        match kind {
            ContourKind::Disorder => self.complete_disorder,
            ContourKind::Order => self.complete_order,
        }
    }
}

/// All contours gamma with B(gamma) inside the volume.
///
/// Disorder contours are generated from their defining configurations:
/// connected bond sets whose sites keep all incident bonds inside the
/// volume. Order contours are read off the cofinite configurations when
/// the whole volume can be swept; otherwise candidate rims are grown
/// co-connectedly up to the bond cap (incomplete).
pub fn enumerate_contours(volume: &Volume, caps: &EnumerationCaps) -> Result<ContourList, CmError> {
    let mut list = enumerate_contours_of_kind(volume, caps, ContourKind::Disorder)?;
    let order = enumerate_contours_of_kind(volume, caps, ContourKind::Order)?;
    list.contours.extend(order.contours);
    list.complete_order = order.complete_order;
    Ok(list)
}

/// Enumerates only contours of the given kind (the other kind's flags are
/// reported as incomplete).
pub fn enumerate_contours_of_kind(
    volume: &Volume,
    caps: &EnumerationCaps,
    kind: ContourKind,
) -> Result<ContourList, CmError> {
    let mut contours = Vec::new();
    let mut complete_disorder = false;
    let mut complete_order = false;
    match kind {
        ContourKind::Disorder => {
            // disorder contours via their connected defining configurations
            let core = volume.core_bonds();
            if core.len() > caps.volume_cap_bonds {
                return Err(CmError::VolumeCapExceeded {
                    bonds: core.len(),
                    cap: caps.volume_cap_bonds,
                });
            }
            let mut seen: BTreeSet<Vec<(Site, Bond)>> = BTreeSet::new();
            connected_bond_subsets(&core, usize::MAX, &mut |subset| {
                let x: BTreeSet<Bond> = subset.iter().copied().collect();
                let extracted = extract_contours(&Config::Finite(x));
                if extracted.len() == 1 && extracted[0].kind() == ContourKind::Disorder {
                    let c = extracted.into_iter().next().unwrap();
                    if seen.insert(c.pairs().to_vec()) {
                        let geo = geometry(&c);
                        contours.push(EnumeratedContour { contour: c, geometry: geo });
                    }
                }
            });
            complete_disorder = true;
        }
        ContourKind::Order => {
            complete_order = volume.n_bonds() <= caps.volume_cap_bonds;
            if complete_order {
                let bonds = volume.bonds();
                let n = bonds.len();
                for mask in 0u64..(1u64 << n) {
                    let absent: BTreeSet<Bond> =
                        (0..n).filter(|i| mask >> i & 1 == 0).map(|i| bonds[i]).collect();
                    if absent.is_empty() {
                        continue;
                    }
                    let extracted = extract_contours(&Config::Cofinite(absent));
                    if extracted.len() == 1 && extracted[0].kind() == ContourKind::Order {
                        let c = extracted.into_iter().next().unwrap();
                        let geo = geometry(&c);
                        contours.push(EnumeratedContour { contour: c, geometry: geo });
                    }
                }
            } else {
                for ec in grow_order_candidates(volume.bonds(), caps.max_contour_bonds, None) {
                    contours.push(ec);
                }
            }
        }
    }
    Ok(ContourList { contours, complete_disorder, complete_order })
}

/// Enumerates all connected subsets (under shared endpoints) of the bond
/// list, up to `max_size`, invoking the sink once per nonempty subset.
pub fn connected_bond_subsets(bonds: &[Bond], max_size: usize, sink: &mut dyn FnMut(&[Bond])) {
    let n = bonds.len();
    let mut adj = vec![Vec::new(); n];
    for i in 0..n {
        for j in i + 1..n {
            let share = bonds[i].endpoints().iter().any(|s| bonds[j].endpoints().contains(s));
            if share {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
    }
    enumerate_connected(&adj, max_size, &mut |idxs| {
        let subset: Vec<Bond> = idxs.iter().map(|&i| bonds[i]).collect();
        sink(&subset);
    });
}

/// Enumerates all co-connected subsets (sharing unit squares) of the bond
/// list up to `max_size`.
pub fn co_connected_bond_subsets(bonds: &[Bond], max_size: usize, sink: &mut dyn FnMut(&[Bond])) {
    let n = bonds.len();
    let mut adj = vec![Vec::new(); n];
    for i in 0..n {
        for j in i + 1..n {
            if crate::lattice::co_adjacent(bonds[i], bonds[j]) {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
    }
    enumerate_connected(&adj, max_size, &mut |idxs| {
        let subset: Vec<Bond> = idxs.iter().map(|&i| bonds[i]).collect();
        sink(&subset);
    });
}

/// Connected-subgraph enumeration: every connected subset appears exactly
/// once, anchored at its minimal element.
fn enumerate_connected(adj: &[Vec<usize>], max_size: usize, sink: &mut dyn FnMut(&[usize])) {
    fn rec(
        adj: &[Vec<usize>],
        anchor: usize,
        current: &mut Vec<usize>,
        in_current: &mut [bool],
        banned: &mut [bool],
        frontier: &[usize],
        max_size: usize,
        sink: &mut dyn FnMut(&[usize]),
    ) {
        sink(current);
        if current.len() >= max_size {
            return;
        }
        let mut local_banned = Vec::new();
        for &v in frontier.iter() {
            if banned[v] || in_current[v] {
                continue;
            }
            current.push(v);
            in_current[v] = true;
            let mut next_frontier: Vec<usize> = frontier
                .iter()
                .copied()
                .filter(|&u| u != v && !banned[u] && !in_current[u])
                .collect();
            for &u in &adj[v] {
                if u > anchor && !in_current[u] && !banned[u] && !next_frontier.contains(&u) {
                    next_frontier.push(u);
                }
            }
            rec(adj, anchor, current, in_current, banned, &next_frontier, max_size, sink);
            in_current[v] = false;
            current.pop();
            banned[v] = true;
            local_banned.push(v);
        }
        for v in local_banned {
            banned[v] = false;
        }
    }

    let n = adj.len();
    let mut current = Vec::new();
    let mut in_current = vec![false; n];
    let mut banned = vec![false; n];
    for anchor in 0..n {
        current.push(anchor);
        in_current[anchor] = true;
        let frontier: Vec<usize> = adj[anchor].iter().copied().filter(|&u| u > anchor).collect();
        rec(adj, anchor, &mut current, &mut in_current, &mut banned, &frontier, max_size, sink);
        in_current[anchor] = false;
        current.pop();
    }
}

/// Grows co-connected candidate rims and keeps those that validate as
/// order contours; optionally prunes by doubled diameter during growth.
fn grow_order_candidates(
    bonds: &[Bond],
    max_bonds: usize,
    diam_cap_doubled: Option<i32>,
) -> Vec<EnumeratedContour> {
    let mut out = Vec::new();
    let mut seen: BTreeSet<Vec<Bond>> = BTreeSet::new();
    co_connected_bond_subsets(bonds, max_bonds, &mut |subset| {
        if let Some(cap) = diam_cap_doubled {
            if bond_set_diameter(subset) > cap {
                return;
            }
        }
        let mut key = subset.to_vec();
        key.sort_unstable();
        if !seen.insert(key) {
            return;
        }
        if let Some(ec) = validate_order_rim(subset) {
            out.push(ec);
        }
    });
    out
}

fn bond_set_diameter(bonds: &[Bond]) -> i32 {
    let mids: Vec<(i32, i32)> = bonds.iter().map(|b| b.midpoint_doubled()).collect();
    let mut d = 0;
    for i in 0..mids.len() {
        for j in i + 1..mids.len() {
            d = d.max(((mids[i].0 - mids[j].0).abs()).max((mids[i].1 - mids[j].1).abs()));
        }
    }
    d
}

/// A candidate rim K is an order contour iff the cofinite configuration
/// missing K and its enclosed region has exactly K as its boundary.
pub fn validate_order_rim(rim: &[Bond]) -> Option<EnumeratedContour> {
    let rim_set: BTreeSet<Bond> = rim.iter().copied().collect();
    let (_, interior_bonds) = region_of_bond_set(&rim_set);
    let mut absent = rim_set.clone();
    absent.extend(interior_bonds.iter().copied());
    let extracted = extract_contours(&Config::Cofinite(absent));
    if extracted.len() != 1 || extracted[0].kind() != ContourKind::Order {
        return None;
    }
    let c = extracted.into_iter().next().unwrap();
    if c.bonds().into_iter().collect::<BTreeSet<_>>() != rim_set {
        return None;
    }
    let geo = geometry(&c);
    Some(EnumeratedContour { contour: c, geometry: geo })
}

/// Interior sites and bonds enclosed by a bare bond set (flood fill in a
/// padded box with an infinity node).
fn region_of_bond_set(bonds: &BTreeSet<Bond>) -> (BTreeSet<Site>, BTreeSet<Bond>) {
    use crate::unionfind::UnionFind;
    let xs: Vec<i32> = bonds.iter().flat_map(|b| b.endpoints().map(|s| s.x)).collect();
    let ys: Vec<i32> = bonds.iter().flat_map(|b| b.endpoints().map(|s| s.y)).collect();
    let (min_x, max_x) = (xs.iter().min().unwrap() - 2, xs.iter().max().unwrap() + 2);
    let (min_y, max_y) = (ys.iter().min().unwrap() - 2, ys.iter().max().unwrap() + 2);
    let mut sites = Vec::new();
    for x in min_x..=max_x {
        for y in min_y..=max_y {
            sites.push(Site::new(x, y));
        }
    }
    let index: HashMap<Site, usize> = sites.iter().enumerate().map(|(i, &s)| (s, i)).collect();
    let inf = sites.len();
    let mut uf = UnionFind::new(sites.len() + 1);
    for (i, &s) in sites.iter().enumerate() {
        if s.x == min_x || s.x == max_x || s.y == min_y || s.y == max_y {
            uf.union(i, inf);
        }
        for b in [Bond::new(s, Site::new(s.x + 1, s.y)), Bond::new(s, Site::new(s.x, s.y + 1))] {
            if bonds.contains(&b) {
                continue;
            }
            if let Some(&j) = index.get(&b.other(s)) {
                uf.union(i, j);
            }
        }
    }
    let inf_root = uf.find(inf);
    let mut interior_sites = BTreeSet::new();
    for (i, &s) in sites.iter().enumerate() {
        if uf.find(i) != inf_root {
            interior_sites.insert(s);
        }
    }
    let mut interior_bonds = BTreeSet::new();
    for &s in &interior_sites {
        for b in s.incident_bonds() {
            if !bonds.contains(&b) && interior_sites.contains(&b.other(s)) {
                interior_bonds.insert(b);
            }
        }
    }
    (interior_sites, interior_bonds)
}

/// Weighted contour ready for the family sums.
#[derive(Clone, Debug)]
pub struct WeightedContour {
    pub contour: Contour,
    pub geometry: ContourGeometry,
    pub weight: LogValue,
}

/// A weight assignment over an enumerated contour list.
#[derive(Clone, Debug)]
pub struct WeightFunction {
    pub tag: WeightTag,
    pub entries: Vec<WeightedContour>,
}

impl WeightFunction {
    /// Truncation: weights above e^{-tau |gamma|} are damped to zero.
    pub fn truncate(&self, trunc: TruncationParams) -> WeightFunction {
        let entries = self
            .entries
            .iter()
            .map(|e| {
                let threshold = -trunc.tau * e.contour.len() as f64;
                let weight = if e.weight.ln() <= threshold { e.weight } else { LogValue::ZERO };
                WeightedContour { weight, ..e.clone() }
            })
            .collect();
        WeightFunction { tag: WeightTag::Truncated, entries }
    }

    pub fn nonzero(&self) -> impl Iterator<Item = &WeightedContour> {
        self.entries.iter().filter(|e| !e.weight.is_zero())
    }
}

/// Model compatibility of two same-kind contours: the pair must either be
/// nested (one inside the other's interior; admissibility is deliberately
/// not required there) or be jointly realizable side by side. Side-by-side
/// disorder contours need site-disjoint islands that stay out of each
/// other's interiors; side-by-side order contours need disjoint dead
/// zones whose rims do not join into one co-connected boundary.
pub fn model_compatible(a: &WeightedContour, b: &WeightedContour) -> bool {
    if !a.contour.is_compatible_with(&b.contour) {
        return false;
    }
    let a_bonds: BTreeSet<Bond> = a.contour.bonds().into_iter().collect();
    let b_bonds: BTreeSet<Bond> = b.contour.bonds().into_iter().collect();
    let nested_ab = a_bonds.iter().all(|x| b.geometry.interior_bonds.contains(x));
    let nested_ba = b_bonds.iter().all(|x| a.geometry.interior_bonds.contains(x));
    if nested_ab || nested_ba {
        return true;
    }
    match (a.contour.kind(), b.contour.kind()) {
        (ContourKind::Disorder, ContourKind::Disorder) => {
            let (ia, _) = crate::contours::island(&a.contour, &a.geometry);
            let (ib, _) = crate::contours::island(&b.contour, &b.geometry);
            ia.is_disjoint(&ib)
                && ia.iter().all(|s| !b.geometry.interior_sites.contains(s))
                && ib.iter().all(|s| !a.geometry.interior_sites.contains(s))
        }
        (ContourKind::Order, ContourKind::Order) => {
            let va: BTreeSet<Bond> = a.geometry.v_gamma.bonds().iter().copied().collect();
            let vb: BTreeSet<Bond> = b.geometry.v_gamma.bonds().iter().copied().collect();
            if !va.is_disjoint(&vb) {
                return false;
            }
            // rims must not join into one co-connected boundary
            for &x in &a_bonds {
                for &y in &b_bonds {
                    if x == y || crate::lattice::co_adjacent(x, y) {
                        return false;
                    }
                }
            }
            true
        }
        // mixed-kind families never occur under the one-kind weights
        _ => false,
    }
}

/// The abstract contour-model partition function: sum over families of
/// pairwise model-compatible contours of the product of weights; the empty
/// family contributes one.
pub fn abstract_log_partition(
    weights: &WeightFunction,
    caps: &EnumerationCaps,
) -> Result<LogValue, CmError> {
    let active: Vec<&WeightedContour> = weights.nonzero().collect();
    let n = active.len();
    let words = (n + 63) / 64;
    // pairwise compatibility as adjacency bitsets
    let mut compat = vec![vec![0u64; words]; n];
    for i in 0..n {
        for j in i + 1..n {
            if model_compatible(active[i], active[j]) {
                compat[i][j / 64] |= 1 << (j % 64);
                compat[j][i / 64] |= 1 << (i % 64);
            }
        }
    }
    let lnw: Vec<f64> = active.iter().map(|wc| wc.weight.ln()).collect();

    struct Dfs<'a> {
        compat: &'a [Vec<u64>],
        lnw: &'a [f64],
        acc: LogSum,
        visited: u64,
        caps: &'a EnumerationCaps,
        words: usize,
    }
    fn rec(d: &mut Dfs, cands: &[u64], ln_prod: f64, depth: usize) -> Result<(), CmError> {
        if depth >= d.caps.max_family_size {
            return Ok(());
        }
        for w in 0..d.words {
            let mut bits = cands[w];
            while bits != 0 {
                let b = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                let i = w * 64 + b;
                d.visited += 1;
                if d.visited > d.caps.max_family_nodes {
                    return Err(CmError::FamilyCapExceeded {
                        visited: d.visited,
                        cap: d.caps.max_family_nodes,
                    });
                }
                let p = ln_prod + d.lnw[i];
                d.acc.add_ln(p);
                // candidates after i: indices > i compatible with i
                let mut next = vec![0u64; d.words];
                for ww in 0..d.words {
                    next[ww] = cands[ww] & d.compat[i][ww];
                }
                // clear indices <= i
                for ww in 0..w {
                    next[ww] = 0;
                }
                next[w] &= !((1u64 << b) | ((1u64 << b) - 1));
                rec(d, &next, p, depth + 1)?;
            }
        }
        Ok(())
    }

    let mut dfs = Dfs { compat: &compat, lnw: &lnw, acc: LogSum::new(), visited: 0, caps, words };
    dfs.acc.add(LogValue::ONE); // empty family
    let all: Vec<u64> = (0..words)
        .map(|w| {
            let lo = w * 64;
            let hi = (lo + 64).min(n);
            if hi <= lo {
                0
            } else if hi - lo == 64 {
                u64::MAX
            } else {
                (1u64 << (hi - lo)) - 1
            }
        })
        .collect();
    rec(&mut dfs, &all, 0.0, 0)?;
    Ok(dfs.acc.total())
}

/// Evaluator for the biased random-cluster partition functions of
/// sub-volumes in their contour (redefined) form, memoized on translated
/// volume shapes. These are the building blocks of the order/disorder
/// contour weights.
pub struct RcEvaluator {
    pub params: ModelParams,
    pub energies: Energies,
    pub caps: EnumerationCaps,
    memo: RefCell<HashMap<(VolumeKey, bool), LogValue>>,
}

impl RcEvaluator {
    pub fn new(params: ModelParams, caps: EnumerationCaps) -> RcEvaluator {
        RcEvaluator {
            energies: Energies::new(&params),
            params,
            caps,
            memo: RefCell::new(HashMap::new()),
        }
    }

    /// Z^{RC.disord}(volume): sum over finite configurations whose
    /// boundary stays inside the volume, in the contour form.
    pub fn z_disord(&self, volume: &Volume) -> Result<LogValue, CmError> {
        let key = (volume.canonical_key(), false);
        if let Some(v) = self.memo.borrow().get(&key) {
            return Ok(*v);
        }
        let core = volume.core_bonds();
        if core.len() > self.caps.volume_cap_bonds {
            return Err(CmError::VolumeCapExceeded { bonds: core.len(), cap: self.caps.volume_cap_bonds });
        }
        let mut acc = LogSum::new();
        let n = core.len();
        let n_bonds = volume.n_bonds() as f64;
        for mask in 0u64..(1u64 << n) {
            let x: BTreeSet<Bond> = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| core[i]).collect();
            let n_present = x.len() as f64;
            let mut w = LogValue::from_ln(
                -n_present * self.energies.e_order - (n_bonds - n_present) * self.energies.e_disorder,
            );
            for c in extract_contours(&Config::Finite(x)) {
                w *= log_rho(&c, self.params.q, self.params.r);
            }
            acc.add(w);
        }
        let total = acc.total();
        self.memo.borrow_mut().insert(key, total);
        Ok(total)
    }

    /// Z^{RC.ord}(volume): sum over cofinite configurations that agree
    /// with the full lattice outside the volume, in the contour form.
    pub fn z_ord(&self, volume: &Volume) -> Result<LogValue, CmError> {
        let key = (volume.canonical_key(), true);
        if let Some(v) = self.memo.borrow().get(&key) {
            return Ok(*v);
        }
        let bonds = volume.bonds();
        let n = bonds.len();
        if n > self.caps.volume_cap_bonds {
            return Err(CmError::VolumeCapExceeded { bonds: n, cap: self.caps.volume_cap_bonds });
        }
        let mut acc = LogSum::new();
        let n_bonds = n as f64;
        for mask in 0u64..(1u64 << n) {
            let absent: BTreeSet<Bond> = (0..n).filter(|i| mask >> i & 1 == 0).map(|i| bonds[i]).collect();
            let n_present = (n - absent.len()) as f64;
            let mut w = LogValue::from_ln(
                -n_present * self.energies.e_order - (n_bonds - n_present) * self.energies.e_disorder,
            );
            for c in extract_contours(&Config::Cofinite(absent)) {
                w *= log_rho(&c, self.params.q, self.params.r);
            }
            acc.add(w);
        }
        let total = acc.total();
        self.memo.borrow_mut().insert(key, total);
        Ok(total)
    }

    fn interior_volume(geo: &ContourGeometry) -> Volume {
        Volume::new(
            geo.interior_sites.iter().copied().collect(),
            geo.interior_bonds.iter().copied().collect(),
        )
        .expect("interior bonds stay inside interior sites")
    }

    /// xi^d(gamma) = rho(gamma) Z^{RC.ord}(int gamma) / Z^{RC.disord}(int gamma)
    /// on disorder contours, zero otherwise.
    pub fn xi_disorder(&self, c: &Contour, geo: &ContourGeometry) -> Result<LogValue, CmError> {
        if c.kind() != ContourKind::Disorder {
            return Ok(LogValue::ZERO);
        }
        let interior = Self::interior_volume(geo);
        let zo = self.z_ord(&interior)?;
        let zd = self.z_disord(&interior)?;
        Ok(log_rho(c, self.params.q, self.params.r) * zo / zd)
    }

    /// xi^o(gamma) = rho(gamma) e^{|B(gamma)| e(B)}
    ///               Z^{RC.disord}(V(gamma)) / Z^{RC.ord}(int gamma)
    /// on order contours, zero otherwise.
    pub fn xi_order(&self, c: &Contour, geo: &ContourGeometry) -> Result<LogValue, CmError> {
        if c.kind() != ContourKind::Order {
            return Ok(LogValue::ZERO);
        }
        let interior = Self::interior_volume(geo);
        let zd_v = self.z_disord(&geo.v_gamma)?;
        let zo_int = self.z_ord(&interior)?;
        let n_bonds_gamma = c.bonds().len() as f64;
        Ok(log_rho(c, self.params.q, self.params.r)
            * LogValue::from_ln(n_bonds_gamma * self.energies.e_order)
            * zd_v
            / zo_int)
    }

    pub fn xi(&self, kind: ContourKind, c: &Contour, geo: &ContourGeometry) -> Result<LogValue, CmError> {
        match kind {
            ContourKind::Disorder => self.xi_disorder(c, geo),
            ContourKind::Order => self.xi_order(c, geo),
        }
    }
}

/// Builds the xi weight function of one kind over an enumerated list.
pub fn xi_weight_function(
    kind: ContourKind,
    list: &ContourList,
    evaluator: &RcEvaluator,
) -> Result<WeightFunction, CmError> {
    let mut entries = Vec::new();
    for ec in list.of_kind(kind) {
        let weight = evaluator.xi(kind, &ec.contour, &ec.geometry)?;
        entries.push(WeightedContour {
            contour: ec.contour.clone(),
            geometry: ec.geometry.clone(),
            weight,
        });
    }
    Ok(WeightFunction {
        tag: match kind {
            ContourKind::Disorder => WeightTag::XiDisorder,
            ContourKind::Order => WeightTag::XiOrder,
        },
        entries,
    })
}

/// The direct admissible-family sums Y^d / Y^o: configuration sweeps
/// weighted by products of rho-tilde. These are the reference side of the
/// contour-model identity; they never consult the xi machinery.
pub fn y_direct(
    volume: &Volume,
    params: &ModelParams,
    external: ContourKind,
    caps: &EnumerationCaps,
) -> Result<LogValue, CmError> {
    let e = Energies::new(params);
    let bonds: Vec<Bond> = match external {
        ContourKind::Disorder => volume.core_bonds(),
        ContourKind::Order => volume.bonds().to_vec(),
    };
    if bonds.len() > caps.volume_cap_bonds {
        return Err(CmError::VolumeCapExceeded { bonds: bonds.len(), cap: caps.volume_cap_bonds });
    }
    let mut geo_cache: HashMap<Contour, (usize, usize)> = HashMap::new();
    let mut acc = LogSum::new();
    let n = bonds.len();
    for mask in 0u64..(1u64 << n) {
        let config = match external {
            ContourKind::Disorder => {
                Config::Finite((0..n).filter(|i| mask >> i & 1 == 1).map(|i| bonds[i]).collect())
            }
            ContourKind::Order => {
                Config::Cofinite((0..n).filter(|i| mask >> i & 1 == 0).map(|i| bonds[i]).collect())
            }
        };
        let mut w = LogValue::ONE;
        for c in extract_contours(&config) {
            let (n_int, n_v) = *geo_cache.entry(c.clone()).or_insert_with(|| {
                let g = geometry(&c);
                (g.n_bonds_interior, g.n_bonds_v)
            });
            let corr = match c.kind() {
                ContourKind::Disorder => -(n_int as f64) * (e.e_order - e.e_disorder),
                ContourKind::Order => -(n_v as f64) * (e.e_disorder - e.e_order),
            };
            w *= log_rho(&c, params.q, params.r) * LogValue::from_ln(corr);
        }
        acc.add(w);
    }
    Ok(acc.total())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GfRow {
    pub n: u32,
    pub n_bonds: usize,
    pub g_order: f64,
    pub g_disorder: f64,
    pub f_order: f64,
    pub f_disorder: f64,
    /// single-site sums of truncated weights over enumerated contours
    pub site_bound_order: f64,
    pub site_bound_disorder: f64,
    pub complete_order: bool,
    pub complete_disorder: bool,
}

/// Finite-volume pressure estimates of the truncated contour models on
/// the windows Lambda_1..Lambda_{n_max}, with the single-site sums that
/// bound the limit pressure.
pub fn g_and_f_estimates(
    params: &ModelParams,
    trunc: TruncationParams,
    caps: &EnumerationCaps,
    n_max: u32,
) -> Result<Vec<GfRow>, CmError> {
    let e = Energies::new(params);
    let evaluator = RcEvaluator::new(*params, *caps);
    let origin = Site::new(0, 0);
    let mut rows = Vec::new();
    for n in 1..=n_max {
        let volume = Volume::window(n);
        let list = enumerate_contours(&volume, caps)?;
        let mut row = GfRow {
            n,
            n_bonds: volume.n_bonds(),
            g_order: 0.0,
            g_disorder: 0.0,
            f_order: 0.0,
            f_disorder: 0.0,
            site_bound_order: 0.0,
            site_bound_disorder: 0.0,
            complete_order: list.complete_order,
            complete_disorder: list.complete_disorder,
        };
        for kind in [ContourKind::Order, ContourKind::Disorder] {
            let xi = xi_weight_function(kind, &list, &evaluator)?;
            let damped = xi.truncate(trunc);
            let z = abstract_log_partition(&damped, caps)?;
            let g = z.ln() / volume.n_bonds() as f64;
            let site_bound: f64 = damped
                .nonzero()
                .filter(|wc| wc.contour.sites().contains(&origin))
                .map(|wc| wc.weight.value())
                .sum();
            match kind {
                ContourKind::Order => {
                    row.g_order = g;
                    row.f_order = -e.e_order + g;
                    row.site_bound_order = site_bound;
                }
                ContourKind::Disorder => {
                    row.g_disorder = g;
                    row.f_disorder = -e.e_disorder + g;
                    row.site_bound_disorder = site_bound;
                }
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PeierlsSum {
    pub log_value: f64,
    pub value: f64,
    pub n_contours: usize,
    pub complete: bool,
}

/// Sum of xi weights over contours of the given kind surrounding every
/// site of A, with bonds inside `within` and doubled diameter at most
/// `diam_cap_doubled`. Complete only when the caps cover the whole volume.
pub fn peierls_sum(
    a: &[Site],
    kind: ContourKind,
    within: &Volume,
    diam_cap_doubled: i32,
    evaluator: &RcEvaluator,
) -> Result<PeierlsSum, CmError> {
    let caps = evaluator.caps;
    let mut acc = LogSum::new();
    let mut n_contours = 0usize;

    let mut consider = |ec: &EnumeratedContour| -> Result<(), CmError> {
        if ec.contour.kind() != kind || ec.contour.diameter_doubled() > diam_cap_doubled {
            return Ok(());
        }
        if !a.iter().all(|s| ec.geometry.interior_sites.contains(s)) {
            return Ok(());
        }
        let w = evaluator.xi(kind, &ec.contour, &ec.geometry)?;
        if !w.is_zero() {
            acc.add(w);
        }
        n_contours += 1;
        Ok(())
    };

    let complete = match kind {
        ContourKind::Order => {
            if within.n_bonds() <= caps.volume_cap_bonds {
                let list = enumerate_contours(within, &caps)?;
                for ec in list.contours.iter() {
                    consider(ec)?;
                }
                true
            } else {
                for ec in
                    grow_order_candidates(within.bonds(), caps.max_contour_bonds, Some(diam_cap_doubled))
                {
                    consider(&ec)?;
                }
                false
            }
        }
        ContourKind::Disorder => {
            let list = enumerate_contours(within, &caps)?;
            for ec in list.contours.iter() {
                consider(ec)?;
            }
            list.complete_disorder
        }
    };

    let total = acc.total();
    Ok(PeierlsSum { log_value: total.ln(), value: total.value(), n_contours, complete })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DerivativeReport {
    pub beta: f64,
    pub h: f64,
    /// central finite difference of log Z(Lambda | truncated xi^o) per site
    pub finite_difference: f64,
    /// 2/(e^beta - 1) e^{-tau/2}
    pub closed_form_bound: f64,
    /// -2 (d e(B)/d beta) * sum of truncated weights over contours with 0 in S(V(gamma))
    pub enumerated_bound: f64,
    /// the truncation survivor set is identical at beta-h, beta, beta+h
    pub truncation_stable: bool,
    pub satisfies_closed_form: bool,
    pub satisfies_enumerated: bool,
}

/// Compares the beta-derivative of the truncated ordered contour pressure
/// against its bounds, by central finite differences on the given volume.
pub fn derivative_bound_check(
    params: &ModelParams,
    trunc: TruncationParams,
    caps: &EnumerationCaps,
    h: f64,
    volume: &Volume,
) -> Result<DerivativeReport, CmError> {
    let list = enumerate_contours(volume, caps)?;
    let n_sites = volume.n_sites() as f64;

    let eval_at = |beta: f64| -> Result<(f64, Vec<bool>), CmError> {
        let p = ModelParams::new(params.q, params.r, beta).expect("beta grid stays valid");
        let evaluator = RcEvaluator::new(p, *caps);
        let xi = xi_weight_function(ContourKind::Order, &list, &evaluator)?;
        let damped = xi.truncate(trunc);
        let survivors: Vec<bool> = damped.entries.iter().map(|e| !e.weight.is_zero()).collect();
        let z = abstract_log_partition(&damped, caps)?;
        Ok((z.ln() / n_sites, survivors))
    };

    let (lo, surv_lo) = eval_at(params.beta - h)?;
    let (_, surv_mid) = eval_at(params.beta)?;
    let (hi, surv_hi) = eval_at(params.beta + h)?;
    let finite_difference = (hi - lo) / (2.0 * h);
    let truncation_stable = surv_lo == surv_mid && surv_mid == surv_hi;

    let e_beta_m1 = params.beta.exp_m1();
    let closed_form_bound = 2.0 / e_beta_m1 * (-trunc.tau / 2.0).exp();

    let evaluator = RcEvaluator::new(*params, *caps);
    let xi = xi_weight_function(ContourKind::Order, &list, &evaluator)?;
    let damped = xi.truncate(trunc);
    let origin = Site::new(0, 0);
    let mut sum = 0.0;
    for wc in damped.nonzero() {
        let mut v_sites: BTreeSet<Site> = wc.geometry.v_gamma.sites().iter().copied().collect();
        v_sites.extend(wc.contour.sites());
        if v_sites.contains(&origin) {
            sum += wc.weight.value();
        }
    }
    let enumerated_bound = 2.0 / e_beta_m1 * sum;

    Ok(DerivativeReport {
        beta: params.beta,
        h,
        finite_difference,
        closed_form_bound,
        enumerated_bound,
        truncation_stable,
        satisfies_closed_form: finite_difference <= closed_form_bound + 1e-9,
        satisfies_enumerated: finite_difference <= enumerated_bound + 1e-6,
    })
}

/// Frozen enumeration results for golden-file tests.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GoldenRecord {
    pub params: (f64, f64, f64),
    pub caps: EnumerationCaps,
    pub value: f64,
    pub completeness: bool,
}
