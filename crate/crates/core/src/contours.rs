//! Contours of bond configurations: the boundary operator, extraction and
//! classification, interior/exterior geometry, contour weights, family
//! admissibility via reconstruction, and the contour forms of the
//! window-pair partition functions.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::biased_rc::BoundaryClass;
use crate::biased_rc::WindowPair;
use crate::lattice::{co_adjacent, Bond, Site, Volume};
use crate::logsum::{LogSum, LogValue};
use crate::potts::ModelParams;
use crate::unionfind::UnionFind;

#[derive(Debug, Error)]
pub enum ContourError {
    #[error("family contours are not mutually compatible")]
    Incompatible,
    #[error("family is not reconstructible: {0}")]
    NotReconstructible(String),
    #[error("malformed contour: {0}")]
    Malformed(String),
    #[error("configuration not in the requested boundary class")]
    NotInClass,
}

/// A bond configuration, either a finite set of present bonds or a
/// cofinite one described by its finite set of absent bonds.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Config {
    Finite(BTreeSet<Bond>),
    Cofinite(BTreeSet<Bond>),
}

impl Config {
    pub fn finite(bonds: impl IntoIterator<Item = Bond>) -> Config {
        Config::Finite(bonds.into_iter().collect())
    }

    pub fn cofinite(absent: impl IntoIterator<Item = Bond>) -> Config {
        Config::Cofinite(absent.into_iter().collect())
    }

    pub fn contains(&self, b: Bond) -> bool {
        match self {
            Config::Finite(s) => s.contains(&b),
            Config::Cofinite(a) => !a.contains(&b),
        }
    }

    /// The finite description: present bonds for finite configurations,
    /// absent bonds for cofinite ones.
    pub fn support(&self) -> &BTreeSet<Bond> {
        match self {
            Config::Finite(s) => s,
            Config::Cofinite(a) => a,
        }
    }

    pub fn is_cofinite(&self) -> bool {
        matches!(self, Config::Cofinite(_))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContourKind {
    /// boundary of a finite ordered island in a disordered sea
    Disorder,
    /// boundary of a finite disordered island in an ordered sea
    Order,
}

/// A contour: a co-connected set of (site, bond) incidence pairs arising
/// as the boundary of a connected configuration, with its type label.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Contour {
    pairs: Vec<(Site, Bond)>,
    kind: ContourKind,
}

impl Contour {
    pub fn from_parts(mut pairs: Vec<(Site, Bond)>, kind: ContourKind) -> Contour {
        pairs.sort_unstable();
        pairs.dedup();
        Contour { pairs, kind }
    }

    pub fn pairs(&self) -> &[(Site, Bond)] {
        &self.pairs
    }

    pub fn kind(&self) -> ContourKind {
        self.kind
    }

    /// |gamma|: the number of incidence pairs.
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// B(gamma): the bonds appearing in the contour.
    pub fn bonds(&self) -> Vec<Bond> {
        let set: BTreeSet<Bond> = self.pairs.iter().map(|&(_, b)| b).collect();
        set.into_iter().collect()
    }

    /// S(gamma): the sites appearing in the contour.
    pub fn sites(&self) -> Vec<Site> {
        let set: BTreeSet<Site> = self.pairs.iter().map(|&(s, _)| s).collect();
        set.into_iter().collect()
    }

    /// Maximum L-infinity distance between bond midpoints, in doubled
    /// coordinates (one doubled unit is half a lattice step).
    pub fn diameter_doubled(&self) -> i32 {
        let mids: Vec<(i32, i32)> = self.bonds().iter().map(|b| b.midpoint_doubled()).collect();
        let mut d = 0;
        for i in 0..mids.len() {
            for j in i + 1..mids.len() {
                let dx = (mids[i].0 - mids[j].0).abs();
                let dy = (mids[i].1 - mids[j].1).abs();
                d = d.max(dx.max(dy));
            }
        }
        d
    }

    pub fn is_compatible_with(&self, other: &Contour) -> bool {
        // mutually compatible = disjoint as sets of pairs
        let mine: HashSet<&(Site, Bond)> = self.pairs.iter().collect();
        other.pairs.iter().all(|p| !mine.contains(p))
    }
}

/// A set of pairwise mutually compatible contours.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContourFamily {
    pub contours: Vec<Contour>,
}

impl ContourFamily {
    pub fn new(mut contours: Vec<Contour>) -> Result<ContourFamily, ContourError> {
        for i in 0..contours.len() {
            for j in i + 1..contours.len() {
                if !contours[i].is_compatible_with(&contours[j]) {
                    return Err(ContourError::Incompatible);
                }
            }
        }
        contours.sort_unstable();
        Ok(ContourFamily { contours })
    }

    pub fn is_empty(&self) -> bool {
        self.contours.is_empty()
    }

    pub fn len(&self) -> usize {
        self.contours.len()
    }
}

/// The boundary operator: all pairs (i, b) with i covered by the
/// configuration, b absent, i incident to b.
pub fn boundary_of(config: &Config) -> BTreeSet<(Site, Bond)> {
    let mut out = BTreeSet::new();
    match config {
        Config::Finite(x) => {
            let covered: BTreeSet<Site> = x.iter().flat_map(|b| b.endpoints()).collect();
            for &s in &covered {
                for b in s.incident_bonds() {
                    if !x.contains(&b) {
                        out.insert((s, b));
                    }
                }
            }
        }
        Config::Cofinite(absent) => {
            for &b in absent {
                for s in b.endpoints() {
                    // s is covered unless every bond at s is absent
                    if s.incident_bonds().iter().any(|e| !absent.contains(e)) {
                        out.insert((s, b));
                    }
                }
            }
        }
    }
    out
}

/// Splits the boundary of each connected component of the configuration
/// into maximal co-connected bond groups; the groups are the contours.
pub fn extract_contours(config: &Config) -> Vec<Contour> {
    match config {
        Config::Finite(x) => extract_finite(x),
        Config::Cofinite(absent) => extract_cofinite(absent),
    }
}

fn extract_finite(x: &BTreeSet<Bond>) -> Vec<Contour> {
    if x.is_empty() {
        return Vec::new();
    }
    let sites: Vec<Site> = x.iter().flat_map(|b| b.endpoints()).collect::<BTreeSet<_>>().into_iter().collect();
    let index: HashMap<Site, usize> = sites.iter().enumerate().map(|(i, &s)| (s, i)).collect();
    let mut uf = UnionFind::new(sites.len());
    for b in x {
        let [u, v] = b.endpoints();
        uf.union(index[&u], index[&v]);
    }
    // bucket boundary pairs by component
    let mut buckets: BTreeMap<usize, Vec<(Site, Bond)>> = BTreeMap::new();
    for &s in &sites {
        let root = uf.find(index[&s]);
        for b in s.incident_bonds() {
            if !x.contains(&b) {
                buckets.entry(root).or_default().push((s, b));
            }
        }
    }
    let mut contours = Vec::new();
    for (_, pairs) in buckets {
        split_and_classify(pairs, false, &mut contours);
    }
    contours
}

fn extract_cofinite(absent: &BTreeSet<Bond>) -> Vec<Contour> {
    if absent.is_empty() {
        return Vec::new();
    }
    // Work inside a bounding box padded by 2; the border is wired to a
    // virtual infinity node, since all bonds outside the box are present.
    let xs: Vec<i32> = absent.iter().flat_map(|b| b.endpoints().map(|s| s.x)).collect();
    let ys: Vec<i32> = absent.iter().flat_map(|b| b.endpoints().map(|s| s.y)).collect();
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
    let mut live = vec![false; sites.len()];
    for (i, &s) in sites.iter().enumerate() {
        for b in s.incident_bonds() {
            if absent.contains(&b) {
                continue;
            }
            // present bond
            live[i] = true;
            match index.get(&b.other(s)) {
                Some(&j) => {
                    uf.union(i, j);
                }
                None => {
                    uf.union(i, inf);
                }
            }
        }
    }
    let mut buckets: BTreeMap<usize, Vec<(Site, Bond)>> = BTreeMap::new();
    for &b in absent {
        for s in b.endpoints() {
            let i = index[&s];
            if live[i] {
                buckets.entry(uf.find(i)).or_default().push((s, b));
            }
        }
    }
    let inf_root = uf.find(inf);
    let mut contours = Vec::new();
    for (root, pairs) in buckets {
        split_and_classify(pairs, root == inf_root, &mut contours);
    }
    contours
}

/// Splits one component's boundary pairs into maximal co-connected bond
/// groups and classifies each group. For the infinite component every
/// group is an order contour; for a finite component the group holding
/// the extreme bond is the outer (disorder) one and the rest bound holes
/// (order).
fn split_and_classify(pairs: Vec<(Site, Bond)>, from_infinite: bool, out: &mut Vec<Contour>) {
    if pairs.is_empty() {
        return;
    }
    let bonds: Vec<Bond> = pairs.iter().map(|&(_, b)| b).collect::<BTreeSet<_>>().into_iter().collect();
    let bond_pos: HashMap<Bond, usize> = bonds.iter().enumerate().map(|(i, &b)| (b, i)).collect();
    let mut uf = UnionFind::new(bonds.len());
    for i in 0..bonds.len() {
        for j in i + 1..bonds.len() {
            if co_adjacent(bonds[i], bonds[j]) {
                uf.union(i, j);
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<(Site, Bond)>> = BTreeMap::new();
    for &(s, b) in &pairs {
        groups.entry(uf.find(bond_pos[&b])).or_default().push((s, b));
    }
    // the group containing the lexicographically largest midpoint bond is
    // the outer boundary of a finite component
    let outer_root = bonds
        .iter()
        .max_by_key(|b| b.midpoint_doubled())
        .map(|b| uf.find(bond_pos[b]));
    for (root, group_pairs) in groups {
        let kind = if from_infinite {
            ContourKind::Order
        } else if Some(root) == outer_root {
            ContourKind::Disorder
        } else {
            ContourKind::Order
        };
        out.push(Contour::from_parts(group_pairs, kind));
    }
}

/// Interior/exterior structure of a contour.
#[derive(Clone, Debug)]
pub struct ContourGeometry {
    /// connected components of the interior, as volumes
    pub interior: Vec<Volume>,
    /// interior site and bond sets, merged over components
    pub interior_sites: BTreeSet<Site>,
    pub interior_bonds: BTreeSet<Bond>,
    /// V(gamma): interior plus the subgraph induced by B(gamma)
    pub v_gamma: Volume,
    pub n_bonds_interior: usize,
    pub n_bonds_v: usize,
    pub diameter_doubled: i32,
}

/// Geometry by flood fill of the lattice minus B(gamma), inside a bounding
/// box padded by two with a virtual infinity node.
pub fn geometry(contour: &Contour) -> ContourGeometry {
    let bonds: BTreeSet<Bond> = contour.bonds().into_iter().collect();
    assert!(!bonds.is_empty(), "contour with no bonds");
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
        for b in [
            Bond::new(s, Site::new(s.x + 1, s.y)),
            Bond::new(s, Site::new(s.x, s.y + 1)),
        ] {
            if bonds.contains(&b) {
                continue;
            }
            if let Some(&j) = index.get(&b.other(s)) {
                uf.union(i, j);
            }
        }
    }
    let inf_root = uf.find(inf);
    let mut interior_sites: BTreeSet<Site> = BTreeSet::new();
    for (i, &s) in sites.iter().enumerate() {
        if uf.find(i) != inf_root {
            interior_sites.insert(s);
        }
    }
    // interior bonds: lattice bonds not in B(gamma) with both endpoints interior
    let mut interior_bonds: BTreeSet<Bond> = BTreeSet::new();
    for &s in &interior_sites {
        for b in s.incident_bonds() {
            if !bonds.contains(&b) && interior_sites.contains(&b.other(s)) {
                interior_bonds.insert(b);
            }
        }
    }
    // split the interior into connected components
    let int_sites: Vec<Site> = interior_sites.iter().copied().collect();
    let int_index: HashMap<Site, usize> = int_sites.iter().enumerate().map(|(i, &s)| (s, i)).collect();
    let mut int_uf = UnionFind::new(int_sites.len());
    for b in &interior_bonds {
        let [u, v] = b.endpoints();
        int_uf.union(int_index[&u], int_index[&v]);
    }
    let mut comp_sites: BTreeMap<usize, Vec<Site>> = BTreeMap::new();
    for (i, &s) in int_sites.iter().enumerate() {
        comp_sites.entry(int_uf.find(i)).or_default().push(s);
    }
    let mut interior = Vec::new();
    for (_, cs) in comp_sites {
        let cset: HashSet<Site> = cs.iter().copied().collect();
        let cbonds: Vec<Bond> = interior_bonds
            .iter()
            .copied()
            .filter(|b| b.endpoints().iter().all(|s| cset.contains(s)))
            .collect();
        interior.push(Volume::new(cs, cbonds).expect("interior bonds stay inside interior sites"));
    }

    // V(gamma)
    let mut v_sites: Vec<Site> = interior_sites.iter().copied().collect();
    let mut v_bonds: Vec<Bond> = interior_bonds.iter().copied().collect();
    for &b in &bonds {
        v_bonds.push(b);
        v_sites.extend(b.endpoints());
    }
    let v_gamma = Volume::new(v_sites, v_bonds).expect("V(gamma) bonds stay inside its sites");

    ContourGeometry {
        n_bonds_interior: interior_bonds.len(),
        n_bonds_v: v_gamma.n_bonds(),
        diameter_doubled: contour.diameter_doubled(),
        interior,
        interior_sites,
        interior_bonds,
        v_gamma,
    }
}

/// Classification by geometry: a contour is disorder iff its sites lie in
/// its interior. Used as an independent cross-check of the extraction
/// rule.
pub fn classify_by_geometry(contour: &Contour) -> ContourKind {
    let geo = geometry(contour);
    let sites = contour.sites();
    let inside = sites.iter().filter(|s| geo.interior_sites.contains(s)).count();
    if inside == sites.len() {
        ContourKind::Disorder
    } else {
        debug_assert_eq!(inside, 0, "contour sites split between interior and exterior");
        ContourKind::Order
    }
}

/// Energies per bond of the two reference configurations:
/// fully ordered e(B) = -log(1 - e^{-beta}) and fully disordered
/// e(empty) = beta - log(q+r)/2.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Energies {
    pub e_order: f64,
    pub e_disorder: f64,
}

impl Energies {
    pub fn new(params: &ModelParams) -> Energies {
        Energies {
            e_order: -params.p().ln(),
            e_disorder: params.beta - 0.5 * params.qr().ln(),
        }
    }
}

/// rho(gamma) = (q+r)^{-|gamma|/4}, with an extra factor q for disorder
/// contours.
pub fn log_rho(contour: &Contour, q: f64, r: f64) -> LogValue {
    let base = -(contour.len() as f64) / 4.0 * (q + r).ln();
    match contour.kind() {
        ContourKind::Order => LogValue::from_ln(base),
        ContourKind::Disorder => LogValue::from_ln(base + q.ln()),
    }
}

/// rho-tilde folds the interior energy correction into the weight:
/// disorder contours pay for their ordered interior, order contours for
/// the disordered region V(gamma).
pub fn log_rho_tilde(contour: &Contour, geo: &ContourGeometry, params: &ModelParams) -> LogValue {
    let e = Energies::new(params);
    let rho = log_rho(contour, params.q, params.r);
    let corr = match contour.kind() {
        ContourKind::Disorder => -(geo.n_bonds_interior as f64) * (e.e_order - e.e_disorder),
        ContourKind::Order => -(geo.n_bonds_v as f64) * (e.e_disorder - e.e_order),
    };
    rho * LogValue::from_ln(corr)
}

/// Nesting metadata for the contours of one family: each contour's
/// interior bonds, its closed region (interior plus own bonds), and for
/// disorder contours the island part of the interior (the component
/// holding the contour's sites; other interior components are disordered
/// pockets).
struct Nesting {
    interiors: Vec<BTreeSet<Bond>>,
    regions: Vec<BTreeSet<Bond>>,
    islands: Vec<BTreeSet<Bond>>,
    kinds: Vec<ContourKind>,
}

impl Nesting {
    fn new(family: &ContourFamily) -> Nesting {
        let mut interiors = Vec::with_capacity(family.contours.len());
        let mut regions = Vec::with_capacity(family.contours.len());
        let mut islands = Vec::with_capacity(family.contours.len());
        let mut kinds = Vec::with_capacity(family.contours.len());
        for c in &family.contours {
            let g = geometry(c);
            let mut region: BTreeSet<Bond> = g.interior_bonds.clone();
            region.extend(c.bonds());
            islands.push(island_bonds(c, &g));
            interiors.push(g.interior_bonds);
            regions.push(region);
            kinds.push(c.kind());
        }
        Nesting { interiors, regions, islands, kinds }
    }

    /// Contour i lies inside contour j. When the closed regions coincide
    /// (an island touching its surrounding boundary everywhere) the
    /// disorder contour is the inner one.
    fn inside(&self, i: usize, j: usize) -> bool {
        if i == j {
            return false;
        }
        if !self.regions[i].is_subset(&self.regions[j]) {
            return false;
        }
        if self.regions[i].len() < self.regions[j].len() {
            return true;
        }
        self.kinds[i] == ContourKind::Disorder && self.kinds[j] == ContourKind::Order
    }

    /// The innermost contour whose interior contains the bond, if any.
    fn innermost_over(&self, b: Bond) -> Option<usize> {
        let mut best: Option<usize> = None;
        for i in 0..self.interiors.len() {
            if !self.interiors[i].contains(&b) {
                continue;
            }
            best = match best {
                None => Some(i),
                Some(j) => {
                    if self.inside(i, j) {
                        Some(i)
                    } else {
                        Some(j)
                    }
                }
            };
        }
        best
    }
}

/// The island of a contour: sites and bonds of the interior components
/// holding the contour's sites. For a disorder contour this is the ordered
/// island; the remaining interior components are disordered pockets.
pub fn island(contour: &Contour, geo: &ContourGeometry) -> (BTreeSet<Site>, BTreeSet<Bond>) {
    if geo.interior_sites.is_empty() {
        return (BTreeSet::new(), BTreeSet::new());
    }
    let int_sites: Vec<Site> = geo.interior_sites.iter().copied().collect();
    let index: HashMap<Site, usize> = int_sites.iter().enumerate().map(|(i, &s)| (s, i)).collect();
    let mut uf = UnionFind::new(int_sites.len());
    for b in &geo.interior_bonds {
        let [u, v] = b.endpoints();
        uf.union(index[&u], index[&v]);
    }
    let mut marked: HashSet<usize> = HashSet::new();
    for s in contour.sites() {
        if let Some(&i) = index.get(&s) {
            marked.insert(uf.find(i));
        }
    }
    let sites: BTreeSet<Site> = int_sites
        .iter()
        .copied()
        .filter(|&s| marked.contains(&uf.find(index[&s])))
        .collect();
    let bonds: BTreeSet<Bond> = geo
        .interior_bonds
        .iter()
        .copied()
        .filter(|b| {
            let [u, _] = b.endpoints();
            marked.contains(&uf.find(index[&u]))
        })
        .collect();
    (sites, bonds)
}

fn island_bonds(contour: &Contour, geo: &ContourGeometry) -> BTreeSet<Bond> {
    island(contour, geo).1
}

/// Rebuilds the configuration determined by a mutually compatible family.
/// Bonds of any contour are absent; every other bond takes the phase of
/// the innermost contour containing it, alternating from `external` at the
/// sea. Returns a finite configuration for disorder external type and a
/// cofinite one for order external type.
pub fn reconstruct(family: &ContourFamily, external: ContourKind) -> Result<Config, ContourError> {
    let nesting = Nesting::new(family);
    // candidate bond universe: all contour bonds plus all interior bonds
    let mut universe: BTreeSet<Bond> = BTreeSet::new();
    for (c, region) in family.contours.iter().zip(&nesting.regions) {
        universe.extend(c.bonds());
        universe.extend(region.iter().copied());
    }
    let contour_bonds: Vec<BTreeSet<Bond>> =
        family.contours.iter().map(|c| c.bonds().into_iter().collect()).collect();

    let phase_of = |b: Bond| -> ContourKind {
        match nesting.innermost_over(b) {
            // inside a disorder contour only the island component is
            // ordered; other interior components are disordered pockets.
            // Inside an order contour everything is disordered.
            Some(i) => match nesting.kinds[i] {
                ContourKind::Disorder => {
                    if nesting.islands[i].contains(&b) {
                        ContourKind::Order
                    } else {
                        ContourKind::Disorder
                    }
                }
                ContourKind::Order => ContourKind::Disorder,
            },
            None => match external {
                // disordered sea outside disorder contours, ordered sea outside order ones
                ContourKind::Disorder => ContourKind::Disorder,
                ContourKind::Order => ContourKind::Order,
            },
        }
    };

    match external {
        ContourKind::Disorder => {
            // finite configuration: present bonds are the ordered ones
            let mut present = BTreeSet::new();
            for &b in &universe {
                if contour_bonds.iter().any(|cb| cb.contains(&b)) {
                    continue;
                }
                if phase_of(b) == ContourKind::Order {
                    present.insert(b);
                }
            }
            Ok(Config::Finite(present))
        }
        ContourKind::Order => {
            // cofinite configuration: absent bonds are contour bonds plus
            // disordered-phase bonds
            let mut absent = BTreeSet::new();
            for &b in &universe {
                if contour_bonds.iter().any(|cb| cb.contains(&b)) {
                    absent.insert(b);
                    continue;
                }
                if phase_of(b) == ContourKind::Disorder {
                    absent.insert(b);
                }
            }
            Ok(Config::Cofinite(absent))
        }
    }
}

/// External type of a family: the type shared by its external contours
/// (those not inside any other contour of the family).
pub fn external_kind(family: &ContourFamily) -> Result<Option<ContourKind>, ContourError> {
    if family.is_empty() {
        return Ok(None);
    }
    let nesting = Nesting::new(family);
    let mut kinds = BTreeSet::new();
    'next: for (i, c) in family.contours.iter().enumerate() {
        for j in 0..family.contours.len() {
            if nesting.inside(i, j) {
                continue 'next;
            }
        }
        kinds.insert(match c.kind() {
            ContourKind::Disorder => 0u8,
            ContourKind::Order => 1u8,
        });
    }
    if kinds.len() != 1 {
        return Err(ContourError::NotReconstructible(
            "external contours of mixed type".into(),
        ));
    }
    Ok(Some(if kinds.contains(&0) { ContourKind::Disorder } else { ContourKind::Order }))
}

/// A family is admissible iff it reconstructs to a configuration whose
/// extraction returns the family itself.
pub fn is_admissible(family: &ContourFamily) -> bool {
    let external = match external_kind(family) {
        Ok(Some(k)) => k,
        Ok(None) => return true, // empty family
        Err(_) => return false,
    };
    let config = match reconstruct(family, external) {
        Ok(c) => c,
        Err(_) => return false,
    };
    let mut extracted = extract_contours(&config);
    extracted.sort_unstable();
    extracted == family.contours
}

/// Which of the two contour-form normalizations to evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContourVariant {
    /// with the (q+r)^{|bar-partial B|/4} (disordered) or q (ordered) prefactor
    Prefactored,
    /// the redefined partition functions without prefactors
    Redefined,
}

/// The contour-form weight of one configuration of the window pair:
/// e^{-|R^o| e(B) - |R^d| e(empty)} times the product of rho over the
/// configuration's contours.
pub fn config_contour_log_weight(
    x_mask_bonds: &BTreeSet<Bond>,
    pair: &WindowPair,
    bc: BoundaryClass,
    params: &ModelParams,
) -> Result<LogValue, ContourError> {
    let e = Energies::new(params);
    let n_bonds = pair.outer.n_bonds();
    let n_present = x_mask_bonds.len();
    let config = match bc {
        BoundaryClass::Disordered => Config::Finite(x_mask_bonds.clone()),
        BoundaryClass::Ordered => {
            let absent: BTreeSet<Bond> = pair
                .outer
                .bonds()
                .iter()
                .copied()
                .filter(|b| !x_mask_bonds.contains(b))
                .collect();
            Config::Cofinite(absent)
        }
        BoundaryClass::Plain => return Err(ContourError::NotInClass),
    };
    let contours = extract_contours(&config);
    let mut w = LogValue::from_ln(
        -(n_present as f64) * e.e_order - ((n_bonds - n_present) as f64) * e.e_disorder,
    );
    for c in &contours {
        w *= log_rho(c, params.q, params.r);
    }
    Ok(w)
}

/// The window-pair partition functions in contour form: a sum over the
/// boundary class's configurations of the contour-form weight, optionally
/// carrying the prefactor.
pub fn log_partition_contour_window(
    pair: &WindowPair,
    params: &ModelParams,
    bc: BoundaryClass,
    variant: ContourVariant,
    cap: u64,
) -> Result<LogValue, ContourError> {
    let free: &[Bond] = match bc {
        BoundaryClass::Disordered => &pair.inner_bonds,
        BoundaryClass::Ordered => &pair.non_ring,
        BoundaryClass::Plain => return Err(ContourError::NotInClass),
    };
    if free.len() >= 63 || (1u64 << free.len()) > cap {
        return Err(ContourError::Malformed(format!(
            "enumeration over {} free bonds exceeds cap {cap}",
            free.len()
        )));
    }
    let mut acc = LogSum::new();
    for mask in 0u64..(1u64 << free.len()) {
        let mut present: BTreeSet<Bond> = match bc {
            BoundaryClass::Ordered => pair.ring.iter().copied().collect(),
            _ => BTreeSet::new(),
        };
        for (i, &b) in free.iter().enumerate() {
            if mask >> i & 1 == 1 {
                present.insert(b);
            }
        }
        acc.add(config_contour_log_weight(&present, pair, bc, params)?);
    }
    let mut total = acc.total();
    if variant == ContourVariant::Prefactored {
        let pre = match bc {
            BoundaryClass::Disordered => {
                let pairs = pair.outer.boundary_counts().incidence_pairs;
                LogValue::from_ln(pairs as f64 / 4.0 * params.qr().ln())
            }
            BoundaryClass::Ordered => LogValue::from_value(params.q),
            BoundaryClass::Plain => unreachable!(),
        };
        total *= pre;
    }
    Ok(total)
}

/// The exact bond-site relations behind the contour rewriting: for a
/// configuration of the disordered class,
/// 2|B \ X| = 4 kappa0 + sum |gamma| - |bar-partial B(Lambda)|,
/// and for the ordered class the same without the last term.
pub fn bond_site_identity_check(
    pair: &WindowPair,
    x: &BTreeSet<Bond>,
    bc: BoundaryClass,
) -> Result<bool, ContourError> {
    let outer = &pair.outer;
    let (config, boundary_term) = match bc {
        BoundaryClass::Disordered => {
            let cfg = crate::biased_rc::BondConfig::from_bonds(x.iter().copied());
            if !bc.contains(pair, &cfg) {
                return Err(ContourError::NotInClass);
            }
            (
                Config::Finite(x.clone()),
                outer.boundary_counts().incidence_pairs as i64,
            )
        }
        BoundaryClass::Ordered => {
            let cfg = crate::biased_rc::BondConfig::from_bonds(x.iter().copied());
            if !bc.contains(pair, &cfg) {
                return Err(ContourError::NotInClass);
            }
            let absent: BTreeSet<Bond> =
                outer.bonds().iter().copied().filter(|b| !x.contains(b)).collect();
            (Config::Cofinite(absent), 0)
        }
        BoundaryClass::Plain => return Err(ContourError::NotInClass),
    };
    let contours = extract_contours(&config);
    let sum_gamma: i64 = contours.iter().map(|c| c.len() as i64).sum();
    // isolated sites of (S(outer), X)
    let covered: BTreeSet<Site> = x.iter().flat_map(|b| b.endpoints()).collect();
    let kappa0 = outer.sites().iter().filter(|s| !covered.contains(s)).count() as i64;
    let lhs = 2 * (outer.n_bonds() as i64 - x.len() as i64);
    let rhs = 4 * kappa0 + sum_gamma - boundary_term;
    Ok(lhs == rhs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bond(ax: i32, ay: i32, bx: i32, by: i32) -> Bond {
        Bond::new(Site::new(ax, ay), Site::new(bx, by))
    }

    #[test]
    fn boundary_of_examples() {
        let b = bond(0, 0, 1, 0);
        let x = Config::finite([b]);
        assert_eq!(boundary_of(&x).len(), 6);

        assert!(boundary_of(&Config::finite([])).is_empty());

        let y = Config::cofinite([b]);
        let pairs = boundary_of(&y);
        assert_eq!(pairs.len(), 2);
        for (s, bb) in pairs {
            assert_eq!(bb, b);
            assert!(b.touches(s));
        }
    }

    #[test]
    fn extract_single_bond_contour() {
        let b = bond(0, 0, 1, 0);
        let contours = extract_contours(&Config::finite([b]));
        assert_eq!(contours.len(), 1);
        assert_eq!(contours[0].kind(), ContourKind::Disorder);
        assert_eq!(contours[0].len(), 6);
        assert_eq!(contours[0].bonds().len(), 6);
    }

    #[test]
    fn extract_two_distant_bonds() {
        let contours =
            extract_contours(&Config::finite([bond(0, 0, 1, 0), bond(5, 5, 6, 5)]));
        assert_eq!(contours.len(), 2);
        assert!(contours.iter().all(|c| c.kind() == ContourKind::Disorder));
    }

    #[test]
    fn extract_cofinite_single_absent_bond() {
        let b = bond(0, 0, 1, 0);
        let contours = extract_contours(&Config::cofinite([b]));
        assert_eq!(contours.len(), 1);
        assert_eq!(contours[0].kind(), ContourKind::Order);
        assert_eq!(contours[0].len(), 2);
        assert_eq!(contours[0].bonds(), vec![b]);
    }

    #[test]
    fn ring_config_gives_disorder_plus_order() {
        // the 8-bond cycle around the centre of a 3x3 block
        let w = Volume::window(1);
        let centre = Site::new(0, 0);
        let ring: Vec<Bond> = w
            .bonds()
            .iter()
            .copied()
            .filter(|b| !b.touches(centre))
            .collect();
        assert_eq!(ring.len(), 8);
        let mut contours = extract_contours(&Config::finite(ring));
        contours.sort_by_key(|c| c.len());
        assert_eq!(contours.len(), 2);
        assert_eq!(contours[0].kind(), ContourKind::Order);
        assert_eq!(contours[0].len(), 4);
        assert_eq!(contours[1].kind(), ContourKind::Disorder);
        assert_eq!(contours[1].len(), 12);
    }

    #[test]
    fn geometry_of_minimal_contours() {
        let b = bond(0, 0, 1, 0);
        let disorder = &extract_contours(&Config::finite([b]))[0];
        let geo = geometry(disorder);
        assert_eq!(geo.interior_sites.len(), 2);
        assert_eq!(geo.n_bonds_interior, 1);
        assert_eq!(geo.n_bonds_v, 7);
        assert_eq!(geo.diameter_doubled, 4);
        assert_eq!(geo.interior.len(), 1);

        let order = &extract_contours(&Config::cofinite([b]))[0];
        let geo = geometry(order);
        assert!(geo.interior_sites.is_empty());
        assert_eq!(geo.n_bonds_interior, 0);
        assert_eq!(geo.n_bonds_v, 1);
    }

    #[test]
    fn geometry_of_full_plaquette() {
        let v = Volume::rect(2, 2);
        let contours = extract_contours(&Config::finite(v.bonds().iter().copied()));
        assert_eq!(contours.len(), 1);
        let geo = geometry(&contours[0]);
        assert_eq!(geo.interior_sites.len(), 4);
        assert_eq!(geo.n_bonds_interior, 4);
    }

    #[test]
    fn classification_matches_geometry() {
        let configs = [
            Config::finite([bond(0, 0, 1, 0)]),
            Config::finite([bond(0, 0, 1, 0), bond(1, 0, 2, 0), bond(0, 0, 0, 1)]),
            Config::cofinite([bond(0, 0, 1, 0), bond(0, 1, 1, 1)]),
        ];
        for cfg in &configs {
            for c in extract_contours(cfg) {
                assert_eq!(c.kind(), classify_by_geometry(&c));
            }
        }
    }

    #[test]
    fn rho_examples() {
        let b = bond(0, 0, 1, 0);
        let disorder = &extract_contours(&Config::finite([b]))[0];
        let rho = log_rho(disorder, 2.0, 2.0); // q+r = 4, |gamma| = 6
        assert!((rho.value() - 0.25).abs() < 1e-12);

        let order = &extract_contours(&Config::cofinite([b]))[0];
        let rho = log_rho(order, 2.0, 2.0); // |gamma| = 2
        assert!((rho.value() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rho_tilde_minimal_order_contour() {
        let params = ModelParams::new(2.0, 2.0, 2f64.ln()).unwrap();
        let b = bond(0, 0, 1, 0);
        let order = &extract_contours(&Config::cofinite([b]))[0];
        let geo = geometry(order);
        let rt = log_rho_tilde(order, &geo, &params);
        // e(empty) = 0, e(B) = ln 2 at these parameters
        assert!((rt.value() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn energies_cross_at_closed_form_point() {
        for (q, r) in [(2.0, 2.0), (1.0, 30.0), (3.0, 97.0)] {
            let beta_c = (1.0 + (q + r as f64).sqrt()).ln();
            let e = Energies::new(&ModelParams::new(q, r, beta_c).unwrap());
            assert!((e.e_order - e.e_disorder).abs() < 1e-12);
        }
    }

    #[test]
    fn reconstruct_single_contour() {
        let b = bond(0, 0, 1, 0);
        let x = Config::finite([b]);
        let family = ContourFamily::new(extract_contours(&x)).unwrap();
        let rebuilt = reconstruct(&family, ContourKind::Disorder).unwrap();
        assert_eq!(rebuilt, x);
        assert!(is_admissible(&family));
    }

    #[test]
    fn nested_same_type_family_is_inadmissible() {
        // minimal disorder contour around the centre bond, plus the
        // disorder contour of the full 3x3 block: nested, same type, no
        // separating order contour
        let w = Volume::window(1);
        let inner = extract_contours(&Config::finite([bond(0, 0, 0, 1)]));
        let outer = extract_contours(&Config::finite(w.bonds().iter().copied()));
        let family = ContourFamily::new([inner, outer].concat());
        match family {
            Ok(f) => assert!(!is_admissible(&f)),
            // sharing pairs also disqualifies the family
            Err(_) => {}
        }
    }

    #[test]
    fn roundtrip_random_configs() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let v = Volume::rect(4, 4);
        for _ in 0..500 {
            let present: BTreeSet<Bond> = v
                .bonds()
                .iter()
                .copied()
                .filter(|_| rng.gen_bool(0.5))
                .collect();
            let cfg = Config::Finite(present);
            let contours = extract_contours(&cfg);
            let family = ContourFamily::new(contours).expect("extracted families are compatible");
            if family.is_empty() {
                continue;
            }
            let rebuilt = reconstruct(&family, ContourKind::Disorder).unwrap();
            assert_eq!(rebuilt, cfg);
        }
    }

    #[test]
    fn roundtrip_random_cofinite_configs() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let v = Volume::rect(4, 4);
        for _ in 0..500 {
            let absent: BTreeSet<Bond> = v
                .bonds()
                .iter()
                .copied()
                .filter(|_| rng.gen_bool(0.4))
                .collect();
            if absent.is_empty() {
                continue;
            }
            let cfg = Config::Cofinite(absent);
            let contours = extract_contours(&cfg);
            let family = ContourFamily::new(contours).unwrap();
            let rebuilt = reconstruct(&family, ContourKind::Order).unwrap();
            assert_eq!(rebuilt, cfg);
        }
    }

    #[test]
    fn bond_site_identities_small() {
        let pair = WindowPair::new(0);
        // disordered class at n=0: only X = empty
        let ok = bond_site_identity_check(&pair, &BTreeSet::new(), BoundaryClass::Disordered)
            .unwrap();
        assert!(ok);
        // ordered class: X = all bonds
        let all: BTreeSet<Bond> = pair.outer.bonds().iter().copied().collect();
        assert!(bond_site_identity_check(&pair, &all, BoundaryClass::Ordered).unwrap());
    }

    #[test]
    fn contour_window_matches_bc_partition_n0() {
        // prefactored contour form equals the constrained kappa-form sum
        let params = ModelParams::new(2.0, 1.0, 2f64.ln()).unwrap();
        let pair = WindowPair::new(0);
        for bc in [BoundaryClass::Disordered, BoundaryClass::Ordered] {
            let via_contours = log_partition_contour_window(
                &pair,
                &params,
                bc,
                ContourVariant::Prefactored,
                1 << 22,
            )
            .unwrap();
            let direct = crate::biased_rc::log_partition_bc(
                &pair,
                params.p(),
                params.q,
                params.r,
                bc,
                1 << 22,
            )
            .unwrap();
            assert!(
                (via_contours.ln() - direct.ln()).abs() < 1e-10,
                "{bc:?}: {} vs {}",
                via_contours.ln(),
                direct.ln()
            );
        }
    }

    #[test]
    fn contour_serialization() {
        let b = bond(0, 0, 1, 0);
        let c = &extract_contours(&Config::finite([b]))[0];
        let s = serde_json::to_string(c).unwrap();
        let back: Contour = serde_json::from_str(&s).unwrap();
        assert_eq!(*c, back);
    }
}
