//! The r-biased random-cluster model: weights singleton components by
//! (q+r) and non-singleton components by q. Exact partition functions on
//! finite graphs, plain and with the disordered/ordered boundary
//! conditions of the window pairs, plus the spin/bond identity checks.

use std::collections::BTreeMap;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::{Bond, Site, Volume};
use crate::logsum::{LogSum, LogValue};
use crate::potts::{self, ModelParams, PottsError};
use crate::unionfind::UnionFind;

#[derive(Debug, Error)]
pub enum RcError {
    #[error("enumeration of {states} bond configurations exceeds cap {cap}")]
    CapExceeded { states: u64, cap: u64 },
    #[error("bond {0:?} not part of the context bond set")]
    UnknownBond(Bond),
    #[error(transparent)]
    Potts(#[from] PottsError),
    #[error("{0}")]
    Invalid(String),
}

/// A subset of a context bond set.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BondConfig {
    present: BTreeSet<Bond>,
}

impl BondConfig {
    pub fn empty() -> BondConfig {
        BondConfig { present: BTreeSet::new() }
    }

    pub fn from_bonds(bonds: impl IntoIterator<Item = Bond>) -> BondConfig {
        BondConfig { present: bonds.into_iter().collect() }
    }

    pub fn contains(&self, b: Bond) -> bool {
        self.present.contains(&b)
    }

    pub fn insert(&mut self, b: Bond) {
        self.present.insert(b);
    }

    pub fn remove(&mut self, b: Bond) {
        self.present.remove(&b);
    }

    pub fn len(&self) -> usize {
        self.present.len()
    }

    pub fn is_empty(&self) -> bool {
        self.present.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = Bond> + '_ {
        self.present.iter().copied()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentCounts {
    /// isolated sites
    pub kappa0: usize,
    /// non-singleton connected components
    pub kappa1: usize,
}

/// Union-find component counter reused across a sweep over one bond set.
pub struct KappaSweep {
    n_sites: usize,
    ends: Vec<(u32, u32)>,
    uf: UnionFind,
    covered: Vec<bool>,
    seen_epoch: Vec<u32>,
    epoch: u32,
}

impl KappaSweep {
    pub fn new(sites: &[Site], bonds: &[Bond]) -> KappaSweep {
        let index: std::collections::HashMap<Site, u32> =
            sites.iter().enumerate().map(|(i, &s)| (s, i as u32)).collect();
        let ends = bonds
            .iter()
            .map(|b| {
                let [u, v] = b.endpoints();
                (index[&u], index[&v])
            })
            .collect();
        KappaSweep {
            n_sites: sites.len(),
            ends,
            uf: UnionFind::new(sites.len()),
            covered: vec![false; sites.len()],
            seen_epoch: vec![0; sites.len()],
            epoch: 0,
        }
    }

    /// Component counts for the configuration given by bond indices.
    pub fn kappa(&mut self, present: impl Iterator<Item = usize> + Clone) -> ComponentCounts {
        self.uf.reset();
        self.covered.fill(false);
        for i in present {
            let (u, v) = self.ends[i];
            self.uf.union(u as usize, v as usize);
            self.covered[u as usize] = true;
            self.covered[v as usize] = true;
        }
        self.epoch += 1;
        let mut kappa0 = 0;
        let mut kappa1 = 0;
        for s in 0..self.n_sites {
            if !self.covered[s] {
                kappa0 += 1;
                continue;
            }
            let root = self.uf.find(s);
            if self.seen_epoch[root] != self.epoch {
                self.seen_epoch[root] = self.epoch;
                kappa1 += 1;
            }
        }
        ComponentCounts { kappa0, kappa1 }
    }
}

/// Component counts of (sites, X) by union-find over present bonds.
pub fn component_counts(sites: &[Site], x: &BondConfig) -> ComponentCounts {
    let bonds: Vec<Bond> = x.iter().collect();
    let mut sweep = KappaSweep::new(sites, &bonds);
    sweep.kappa(0..bonds.len())
}

/// log of the biased random-cluster weight of X on the graph (sites, bonds).
pub fn rc_log_weight(
    sites: &[Site],
    bonds: &[Bond],
    x: &BondConfig,
    p: f64,
    q: f64,
    r: f64,
) -> Result<LogValue, RcError> {
    for b in x.iter() {
        if !bonds.contains(&b) {
            return Err(RcError::UnknownBond(b));
        }
    }
    let counts = component_counts(sites, x);
    let n_in = x.len() as i64;
    let n_out = bonds.len() as i64 - n_in;
    let w = LogValue::from_value(p).powi(n_in)
        * LogValue::from_value(1.0 - p).powi(n_out)
        * LogValue::from_value(q + r).powi(counts.kappa0 as i64)
        * LogValue::from_value(q).powi(counts.kappa1 as i64);
    Ok(w)
}

fn check_bond_cap(n_bonds: usize, cap: u64) -> Result<(), RcError> {
    if n_bonds >= 63 {
        return Err(RcError::CapExceeded { states: u64::MAX, cap });
    }
    let states = 1u64 << n_bonds;
    if states > cap {
        return Err(RcError::CapExceeded { states, cap });
    }
    Ok(())
}

/// Exact plain partition function: sum over all X subsets of the bond set.
/// Terms are grouped into exact (|X|, kappa0, kappa1) classes before the
/// log-sum.
pub fn log_partition(
    sites: &[Site],
    bonds: &[Bond],
    p: f64,
    q: f64,
    r: f64,
    cap: u64,
) -> Result<LogValue, RcError> {
    check_bond_cap(bonds.len(), cap)?;
    let mut sweep = KappaSweep::new(sites, bonds);
    let mut classes: BTreeMap<(u32, u32, u32), u64> = BTreeMap::new();
    let n = bonds.len();
    for mask in 0u64..(1u64 << n) {
        let counts = sweep.kappa((0..n).filter(|i| mask >> i & 1 == 1));
        let key = (mask.count_ones(), counts.kappa0 as u32, counts.kappa1 as u32);
        *classes.entry(key).or_insert(0) += 1;
    }
    Ok(sum_classes(&classes, bonds.len(), p, q, r))
}

fn sum_classes(classes: &BTreeMap<(u32, u32, u32), u64>, n_bonds: usize, p: f64, q: f64, r: f64) -> LogValue {
    let lp = LogValue::from_value(p);
    let lq1 = LogValue::from_value(1.0 - p);
    let lqr = LogValue::from_value(q + r);
    let lq = LogValue::from_value(q);
    let mut acc = LogSum::new();
    for (&(nx, k0, k1), &count) in classes {
        let w = lp.powi(nx as i64)
            * lq1.powi(n_bonds as i64 - nx as i64)
            * lqr.powi(k0 as i64)
            * lq.powi(k1 as i64)
            * LogValue::from_value(count as f64);
        acc.add(w);
    }
    acc.total()
}

/// The nested windows (Lambda_n, Lambda_{n+1}) with the ring of bonds
/// between them. The disordered class forbids every bond outside
/// B(Lambda_n); the ordered class freezes the ring present.
#[derive(Clone, Debug)]
pub struct WindowPair {
    pub n: u32,
    pub inner: Volume,
    pub outer: Volume,
    /// bonds of the outer window with both endpoints outside the inner one
    pub ring: Vec<Bond>,
    /// bonds of the inner window (free under the disordered condition)
    pub inner_bonds: Vec<Bond>,
    /// bonds of the outer window minus the ring (free under the ordered condition)
    pub non_ring: Vec<Bond>,
}

impl WindowPair {
    pub fn new(n: u32) -> WindowPair {
        let inner = Volume::window(n);
        let outer = Volume::window(n + 1);
        let ring: Vec<Bond> = outer
            .bonds()
            .iter()
            .copied()
            .filter(|b| b.endpoints().iter().all(|s| !inner.contains_site(*s)))
            .collect();
        let inner_bonds = inner.bonds().to_vec();
        let non_ring: Vec<Bond> = outer
            .bonds()
            .iter()
            .copied()
            .filter(|b| !ring.contains(b))
            .collect();
        WindowPair { n, inner, outer, ring, inner_bonds, non_ring }
    }
}

/// Boundary classes for the window pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryClass {
    Plain,
    Disordered,
    Ordered,
}

impl BoundaryClass {
    /// Membership test against the class definition on the window pair.
    pub fn contains(&self, pair: &WindowPair, x: &BondConfig) -> bool {
        let in_outer = x.iter().all(|b| pair.outer.contains_bond(b));
        match self {
            BoundaryClass::Plain => in_outer,
            BoundaryClass::Disordered => in_outer && pair.ring_and_spokes_absent(x),
            BoundaryClass::Ordered => in_outer && pair.ring.iter().all(|b| x.contains(*b)),
        }
    }
}

impl WindowPair {
    fn ring_and_spokes_absent(&self, x: &BondConfig) -> bool {
        // X must stay inside B(Lambda_n).
        x.iter().all(|b| self.inner.contains_bond(b))
    }
}

/// Exact constrained partition function on the pair (Lambda_n, Lambda_{n+1})
/// for the given boundary class, by enumeration over the free bonds.
pub fn log_partition_bc(
    pair: &WindowPair,
    p: f64,
    q: f64,
    r: f64,
    bc: BoundaryClass,
    cap: u64,
) -> Result<LogValue, RcError> {
    let (frozen, free): (Vec<Bond>, Vec<Bond>) = match bc {
        BoundaryClass::Plain => (Vec::new(), pair.outer.bonds().to_vec()),
        BoundaryClass::Disordered => (Vec::new(), pair.inner_bonds.clone()),
        BoundaryClass::Ordered => (pair.ring.clone(), pair.non_ring.clone()),
    };
    check_bond_cap(free.len(), cap)?;

    let mut all_bonds = frozen.clone();
    all_bonds.extend_from_slice(&free);
    let mut sweep = KappaSweep::new(pair.outer.sites(), &all_bonds);
    let n_frozen = frozen.len();
    let n_free = free.len();
    let n_total_bonds = pair.outer.n_bonds();

    let mut classes: BTreeMap<(u32, u32, u32), u64> = BTreeMap::new();
    for mask in 0u64..(1u64 << n_free) {
        let present = (0..n_frozen).chain((0..n_free).filter(|i| mask >> i & 1 == 1).map(|i| i + n_frozen));
        let counts = sweep.kappa(present);
        let nx = n_frozen as u32 + mask.count_ones();
        *classes.entry((nx, counts.kappa0 as u32, counts.kappa1 as u32)).or_insert(0) += 1;
    }
    Ok(sum_classes(&classes, n_total_bonds, p, q, r))
}

/// Residuals of the three partition-function identities connecting the
/// (q,r)-Potts model to the biased random-cluster model.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IdentityReport {
    pub rows: Vec<IdentityRow>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IdentityRow {
    pub name: String,
    pub lhs_ln: f64,
    pub rhs_ln: f64,
    pub residual: f64,
}

impl IdentityReport {
    pub fn max_residual(&self) -> f64 {
        self.rows.iter().map(|r| r.residual).fold(0.0, f64::max)
    }
}

/// Checks, by independent enumeration of both sides:
///  - plain:      Z_beta(G) = e^{beta |B|} Z^RC(G) on the given graph,
///  - disordered: the free-boundary reduction on the pair (Lambda_n, Lambda_{n+1}),
///  - ordered:    the omega^k reduction on the same pair.
pub fn identity_checks(
    params: &ModelParams,
    plain_graph: (&[Site], &[Bond]),
    pair: &WindowPair,
    cap: u64,
) -> Result<IdentityReport, RcError> {
    let p = params.p();
    let (q, r) = (params.q, params.r);
    let beta = params.beta;
    let mut rows = Vec::new();

    {
        let (sites, bonds) = plain_graph;
        let lhs = potts::log_partition_free_graph(sites, bonds, params, cap)?;
        let z_rc = log_partition(sites, bonds, p, q, r, cap)?;
        let rhs = LogValue::from_ln(beta * bonds.len() as f64) * z_rc;
        rows.push(IdentityRow {
            name: "plain".into(),
            lhs_ln: lhs.ln(),
            rhs_ln: rhs.ln(),
            residual: (lhs.ln() - rhs.ln()).abs(),
        });
    }

    {
        let lhs = potts::log_partition_free(&pair.inner, params, cap)?;
        let z = log_partition_bc(pair, p, q, r, BoundaryClass::Disordered, cap)?;
        let extra_sites = pair.outer.n_sites() - pair.inner.n_sites();
        let rhs = LogValue::from_ln(
            -(extra_sites as f64) * (q + r).ln() + beta * pair.outer.n_bonds() as f64,
        ) * z;
        rows.push(IdentityRow {
            name: "disordered".into(),
            lhs_ln: lhs.ln(),
            rhs_ln: rhs.ln(),
            residual: (lhs.ln() - rhs.ln()).abs(),
        });
    }

    if beta > 0.0 {
        let lhs = potts::log_partition_homogeneous(&pair.inner, params, 1, cap)?;
        let z = log_partition_bc(pair, p, q, r, BoundaryClass::Ordered, cap)?;
        let rhs = LogValue::from_ln(
            -q.ln() - pair.ring.len() as f64 * beta.exp_m1().ln()
                + beta * pair.outer.n_bonds() as f64,
        ) * z;
        rows.push(IdentityRow {
            name: "ordered".into(),
            lhs_ln: lhs.ln(),
            rhs_ln: rhs.ln(),
            residual: (lhs.ln() - rhs.ln()).abs(),
        });
    }

    Ok(IdentityReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_bond() -> (Vec<Site>, Vec<Bond>) {
        let u = Site::new(0, 0);
        let v = Site::new(1, 0);
        (vec![u, v], vec![Bond::new(u, v)])
    }

    fn path3() -> (Vec<Site>, Vec<Bond>) {
        let a = Site::new(0, 0);
        let b = Site::new(1, 0);
        let c = Site::new(2, 0);
        (vec![a, b, c], vec![Bond::new(a, b), Bond::new(b, c)])
    }

    #[test]
    fn component_count_examples() {
        let (sites, bonds) = path3();
        let x = BondConfig::from_bonds([bonds[0]]);
        let c = component_counts(&sites, &x);
        assert_eq!((c.kappa0, c.kappa1), (1, 1));

        let c = component_counts(&sites, &BondConfig::empty());
        assert_eq!((c.kappa0, c.kappa1), (3, 0));

        let v = Volume::rect(2, 2);
        let x = BondConfig::from_bonds(v.bonds().iter().copied());
        let c = component_counts(v.sites(), &x);
        assert_eq!((c.kappa0, c.kappa1), (0, 1));
    }

    #[test]
    fn weight_examples() {
        let (sites, bonds) = single_bond();
        let x = BondConfig::from_bonds([bonds[0]]);
        let w = rc_log_weight(&sites, &bonds, &x, 0.5, 2.0, 1.0).unwrap();
        assert!((w.ln() - (0.5 * 2.0f64).ln()).abs() < 1e-12);

        let w = rc_log_weight(&sites, &bonds, &BondConfig::empty(), 0.5, 2.0, 1.0).unwrap();
        assert!((w.ln() - (0.5 * 9.0f64).ln()).abs() < 1e-12);

        let (sites, bonds) = path3();
        let x = BondConfig::from_bonds([bonds[0]]);
        let w = rc_log_weight(&sites, &bonds, &x, 0.5, 2.0, 1.0).unwrap();
        assert!((w.ln() - 1.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn plain_partition_examples() {
        let (sites, bonds) = single_bond();
        let z = log_partition(&sites, &bonds, 0.5, 2.0, 1.0, 1 << 20).unwrap();
        assert!((z.ln() - 5.5f64.ln()).abs() < 1e-12);

        // p = 0: only the empty configuration, all sites isolated.
        let z = log_partition(&sites, &bonds, 0.0, 2.0, 1.0, 1 << 20).unwrap();
        assert!((z.ln() - (9.0f64).ln()).abs() < 1e-12);

        // p = 1 on a single bond: only the full configuration.
        let z = log_partition(&sites, &bonds, 1.0, 2.0, 1.0, 1 << 20).unwrap();
        assert!((z.ln() - 2.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn partition_matches_weight_sum() {
        // Sum of rc_log_weight over all X equals log_partition, on graphs
        // up to 12 bonds.
        let v = Volume::window(1);
        let (p, q, r) = (0.37, 1.7, 2.4);
        let z = log_partition(v.sites(), v.bonds(), p, q, r, 1 << 20).unwrap();
        let mut acc = LogSum::new();
        let n = v.n_bonds();
        for mask in 0u64..(1 << n) {
            let x = BondConfig::from_bonds(
                (0..n).filter(|i| mask >> i & 1 == 1).map(|i| v.bonds()[i]),
            );
            acc.add(rc_log_weight(v.sites(), v.bonds(), &x, p, q, r).unwrap());
        }
        assert!((z.ln() - acc.total().ln()).abs() < 1e-12);
    }

    #[test]
    fn r_zero_reduces_to_standard_rc() {
        let (sites, bonds) = path3();
        for mask in 0u64..4 {
            let x = BondConfig::from_bonds(
                (0..2).filter(|i| mask >> i & 1 == 1).map(|i| bonds[i]),
            );
            let (p, q) = (0.3, 2.5);
            let w = rc_log_weight(&sites, &bonds, &x, p, q, 0.0).unwrap();
            let c = component_counts(&sites, &x);
            let std_rc = LogValue::from_value(p).powi(x.len() as i64)
                * LogValue::from_value(1.0 - p).powi(2 - x.len() as i64)
                * LogValue::from_value(q).powi((c.kappa0 + c.kappa1) as i64);
            assert!((w.ln() - std_rc.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn bc_partition_n0_examples() {
        let pair = WindowPair::new(0);
        assert_eq!(pair.ring.len(), 8);
        assert_eq!(pair.non_ring.len(), 4);
        assert!(pair.inner_bonds.is_empty());

        // Disordered class at n=0 has the single term X = empty.
        let (p, q, r) = (0.5, 2.0, 1.0);
        let z = log_partition_bc(&pair, p, q, r, BoundaryClass::Disordered, 1 << 20).unwrap();
        let expect = (1.0f64 - p).powi(12).ln() + 9.0 * (q + r).ln();
        assert!((z.ln() - expect).abs() < 1e-12);

        // Ordered at p=1: only X = B(Lambda_1) survives, weight q.
        let z = log_partition_bc(&pair, 1.0, q, r, BoundaryClass::Ordered, 1 << 20).unwrap();
        assert!((z.ln() - q.ln()).abs() < 1e-12);
    }

    #[test]
    fn ordered_bc_partition_hand_value() {
        // (q,r,beta) = (2,1,ln 2): ring forced, 4 free spokes; counted by hand.
        let pair = WindowPair::new(0);
        let z = log_partition_bc(&pair, 0.5, 2.0, 1.0, BoundaryClass::Ordered, 1 << 20).unwrap();
        let expect = (36.0 / 4096.0f64).ln();
        assert!((z.ln() - expect).abs() < 1e-12);
    }

    #[test]
    fn identity_report_single_bond() {
        let params = ModelParams::new(2.0, 1.0, 2f64.ln()).unwrap();
        let (sites, bonds) = single_bond();
        let pair = WindowPair::new(0);
        let report = identity_checks(&params, (&sites, &bonds), &pair, 1 << 22).unwrap();
        assert_eq!(report.rows.len(), 3);
        for row in &report.rows {
            assert!(row.residual < 1e-12, "{}: {}", row.name, row.residual);
        }
        // plain identity: log Z = log 11 for the single bond at these params
        assert!((report.rows[0].lhs_ln - 11f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn boundary_class_membership() {
        let pair = WindowPair::new(0);
        let empty = BondConfig::empty();
        assert!(BoundaryClass::Disordered.contains(&pair, &empty));
        assert!(!BoundaryClass::Ordered.contains(&pair, &empty));
        let ring = BondConfig::from_bonds(pair.ring.iter().copied());
        assert!(BoundaryClass::Ordered.contains(&pair, &ring));
        assert!(!BoundaryClass::Disordered.contains(&pair, &ring));
    }

    #[test]
    fn cap_errors() {
        let v = Volume::window(2);
        let err = log_partition(v.sites(), v.bonds(), 0.5, 2.0, 1.0, 1 << 10).unwrap_err();
        assert!(matches!(err, RcError::CapExceeded { .. }));
    }
}
