//! Finite pieces of the square lattice: sites, nearest-neighbour bonds,
//! co-adjacency, hole-free volumes and the window family.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A lattice site, identified by its integer coordinates.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize, Deserialize)]
pub struct Site {
    pub x: i32,
    pub y: i32,
}

impl Site {
    pub fn new(x: i32, y: i32) -> Site {
        Site { x, y }
    }

    pub fn neighbours(self) -> [Site; 4] {
        [
            Site::new(self.x + 1, self.y),
            Site::new(self.x - 1, self.y),
            Site::new(self.x, self.y + 1),
            Site::new(self.x, self.y - 1),
        ]
    }

    pub fn incident_bonds(self) -> [Bond; 4] {
        self.neighbours().map(|n| Bond::new(self, n))
    }

    pub fn is_adjacent(self, other: Site) -> bool {
        (self.x - other.x).abs() + (self.y - other.y).abs() == 1
    }
}

/// An unordered nearest-neighbour bond, stored with the lexicographically
/// smaller endpoint first so that every bond has a unique representation.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize, Deserialize)]
pub struct Bond {
    a: Site,
    b: Site,
}

impl Bond {
    /// Canonical bond between two adjacent sites. Panics if the sites are
    /// not nearest neighbours.
    pub fn new(u: Site, v: Site) -> Bond {
        assert!(u.is_adjacent(v), "bond endpoints must be nearest neighbours: {u:?} {v:?}");
        if u <= v {
            Bond { a: u, b: v }
        } else {
            Bond { a: v, b: u }
        }
    }

    pub fn try_new(u: Site, v: Site) -> Option<Bond> {
        if u.is_adjacent(v) {
            Some(Bond::new(u, v))
        } else {
            None
        }
    }

    pub fn endpoints(self) -> [Site; 2] {
        [self.a, self.b]
    }

    pub fn other(self, s: Site) -> Site {
        if s == self.a {
            self.b
        } else {
            debug_assert_eq!(s, self.b);
            self.a
        }
    }

    pub fn touches(self, s: Site) -> bool {
        self.a == s || self.b == s
    }

    pub fn is_horizontal(self) -> bool {
        self.a.y == self.b.y
    }

    /// Midpoint in doubled coordinates: one doubled unit is half a lattice
    /// step, so every bond midpoint is an integer point.
    pub fn midpoint_doubled(self) -> (i32, i32) {
        (self.a.x + self.b.x, self.a.y + self.b.y)
    }

    /// Centres (in doubled coordinates) of the two unit squares containing
    /// this bond. These are the endpoints of the dual edge.
    pub fn face_centres_doubled(self) -> [(i32, i32); 2] {
        let (mx, my) = self.midpoint_doubled();
        if self.is_horizontal() {
            [(mx, my + 1), (mx, my - 1)]
        } else {
            [(mx + 1, my), (mx - 1, my)]
        }
    }

    /// The six bonds sharing a unit square with this one.
    pub fn co_neighbours(self) -> Vec<Bond> {
        let mut out = Vec::with_capacity(6);
        for f in self.face_centres_doubled() {
            for e in bonds_of_face(f) {
                if e != self && !out.contains(&e) {
                    out.push(e);
                }
            }
        }
        out
    }
}

/// True iff some closed unit square of the lattice contains both bonds,
/// i.e. the dual edges share a dual endpoint.
pub fn co_adjacent(b1: Bond, b2: Bond) -> bool {
    if b1 == b2 {
        return false;
    }
    let f1 = b1.face_centres_doubled();
    let f2 = b2.face_centres_doubled();
    f1.iter().any(|f| f2.contains(f))
}

/// The four edges of the unit square with centre `f` (doubled coordinates).
fn bonds_of_face(f: (i32, i32)) -> [Bond; 4] {
    let (cx, cy) = f;
    debug_assert!(cx.rem_euclid(2) == 1 && cy.rem_euclid(2) == 1);
    let x0 = (cx - 1) / 2;
    let y0 = (cy - 1) / 2;
    let s = |x, y| Site::new(x, y);
    [
        Bond::new(s(x0, y0), s(x0 + 1, y0)),
        Bond::new(s(x0, y0 + 1), s(x0 + 1, y0 + 1)),
        Bond::new(s(x0, y0), s(x0, y0 + 1)),
        Bond::new(s(x0 + 1, y0), s(x0 + 1, y0 + 1)),
    ]
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum VolumeError {
    #[error("bond {0:?} has an endpoint outside the site set")]
    BondOutsideSites(Bond),
    #[error("subgraph has a hole: complement of the volume is disconnected")]
    NotHoleFree,
}

/// Counts attached to the boundary of a volume: `incidence_pairs` is the
/// number of (site, bond) pairs with the site covered by a volume bond and
/// the bond outside the volume; `external_bonds` is the number of lattice
/// bonds outside the volume incident to one of its sites.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundaryCounts {
    pub incidence_pairs: usize,
    pub external_bonds: usize,
}

/// A finite hole-free subgraph of the square lattice: removing it from the
/// lattice leaves the complement connected.
#[derive(Clone, Debug)]
pub struct Volume {
    sites: Vec<Site>,
    bonds: Vec<Bond>,
    site_index: HashMap<Site, usize>,
    bond_index: HashMap<Bond, usize>,
}

impl PartialEq for Volume {
    fn eq(&self, other: &Self) -> bool {
        self.sites == other.sites && self.bonds == other.bonds
    }
}
impl Eq for Volume {}

impl Volume {
    /// A finite subgraph: bonds must stay inside the site set. Regions
    /// derived from contours (interiors, V(gamma)) can trap exterior
    /// pockets, so hole-freeness is not enforced here; use
    /// [`Volume::new_strict`] or [`is_volume`] for the hole-free contract.
    pub fn new(mut sites: Vec<Site>, mut bonds: Vec<Bond>) -> Result<Volume, VolumeError> {
        sites.sort_unstable();
        sites.dedup();
        bonds.sort_unstable();
        bonds.dedup();
        let site_set: HashSet<Site> = sites.iter().copied().collect();
        for &b in &bonds {
            if !b.endpoints().iter().all(|s| site_set.contains(s)) {
                return Err(VolumeError::BondOutsideSites(b));
            }
        }
        let site_index = sites.iter().enumerate().map(|(i, &s)| (s, i)).collect();
        let bond_index = bonds.iter().enumerate().map(|(i, &b)| (b, i)).collect();
        Ok(Volume { sites, bonds, site_index, bond_index })
    }

    /// As [`Volume::new`], additionally requiring the complement of the
    /// subgraph in the full lattice to stay connected.
    pub fn new_strict(sites: Vec<Site>, bonds: Vec<Bond>) -> Result<Volume, VolumeError> {
        let v = Volume::new(sites, bonds)?;
        if !v.is_hole_free() {
            return Err(VolumeError::NotHoleFree);
        }
        Ok(v)
    }

    pub fn is_hole_free(&self) -> bool {
        let site_set: HashSet<Site> = self.sites.iter().copied().collect();
        complement_connected(&site_set)
    }

    /// The (2n+1) x (2n+1) window centred at the origin with all internal bonds.
    pub fn window(n: u32) -> Volume {
        let n = n as i32;
        Volume::rect_at(-n, -n, 2 * n as u32 + 1, 2 * n as u32 + 1)
    }

    /// A w x h grid anchored at the origin with all internal bonds.
    pub fn rect(w: u32, h: u32) -> Volume {
        assert!(w >= 1 && h >= 1);
        Volume::rect_at(0, 0, w, h)
    }

    pub fn rect_at(x0: i32, y0: i32, w: u32, h: u32) -> Volume {
        let (w, h) = (w as i32, h as i32);
        let mut sites = Vec::with_capacity((w * h) as usize);
        let mut bonds = Vec::new();
        for x in x0..x0 + w {
            for y in y0..y0 + h {
                let s = Site::new(x, y);
                sites.push(s);
                if x + 1 < x0 + w {
                    bonds.push(Bond::new(s, Site::new(x + 1, y)));
                }
                if y + 1 < y0 + h {
                    bonds.push(Bond::new(s, Site::new(x, y + 1)));
                }
            }
        }
        Volume::new(sites, bonds).expect("rectangles are hole-free")
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    pub fn n_sites(&self) -> usize {
        self.sites.len()
    }

    pub fn n_bonds(&self) -> usize {
        self.bonds.len()
    }

    pub fn contains_site(&self, s: Site) -> bool {
        self.site_index.contains_key(&s)
    }

    pub fn contains_bond(&self, b: Bond) -> bool {
        self.bond_index.contains_key(&b)
    }

    pub fn site_index(&self, s: Site) -> Option<usize> {
        self.site_index.get(&s).copied()
    }

    pub fn bond_position(&self, b: Bond) -> Option<usize> {
        self.bond_index.get(&b).copied()
    }

    /// Sites of the volume all four of whose incident lattice bonds belong
    /// to the volume.
    pub fn core_sites(&self) -> Vec<Site> {
        self.sites
            .iter()
            .copied()
            .filter(|s| s.incident_bonds().iter().all(|b| self.contains_bond(*b)))
            .collect()
    }

    /// Bonds of the volume with both endpoints core sites. A finite
    /// configuration whose boundary stays inside the volume is a subset of
    /// these bonds.
    pub fn core_bonds(&self) -> Vec<Bond> {
        let core: HashSet<Site> = self.core_sites().into_iter().collect();
        self.bonds
            .iter()
            .copied()
            .filter(|b| b.endpoints().iter().all(|s| core.contains(s)))
            .collect()
    }

    pub fn boundary_counts(&self) -> BoundaryCounts {
        let covered: HashSet<Site> = self
            .bonds
            .iter()
            .flat_map(|b| b.endpoints())
            .collect();
        let mut incidence_pairs = 0;
        let mut external = HashSet::new();
        for &s in &self.sites {
            for b in s.incident_bonds() {
                if !self.contains_bond(b) {
                    if covered.contains(&s) {
                        incidence_pairs += 1;
                    }
                    external.insert(b);
                }
            }
        }
        BoundaryCounts { incidence_pairs, external_bonds: external.len() }
    }

    /// Shape key invariant under translation, for memoization.
    pub fn canonical_key(&self) -> VolumeKey {
        let (mut mx, mut my) = (i32::MAX, i32::MAX);
        for s in &self.sites {
            mx = mx.min(s.x);
            my = my.min(s.y);
        }
        if self.sites.is_empty() {
            return VolumeKey { sites: Vec::new(), bonds: Vec::new() };
        }
        let sites = self.sites.iter().map(|s| (s.x - mx, s.y - my)).collect();
        let bonds = self
            .bonds
            .iter()
            .map(|b| {
                let (px, py) = b.midpoint_doubled();
                (px - 2 * mx, py - 2 * my)
            })
            .collect();
        VolumeKey { sites, bonds }
    }
}

/// Translation-invariant identity of a volume shape.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct VolumeKey {
    sites: Vec<(i32, i32)>,
    bonds: Vec<(i32, i32)>,
}

/// True iff `bonds` are internal to `sites` and the complement of the
/// subgraph in the full lattice is connected.
pub fn is_volume(sites: &[Site], bonds: &[Bond]) -> bool {
    Volume::new_strict(sites.to_vec(), bonds.to_vec()).is_ok()
}

/// Flood fill in a bounding box padded by one, with the border ring acting
/// as the node at infinity.
fn complement_connected(site_set: &HashSet<Site>) -> bool {
    if site_set.is_empty() {
        return true;
    }
    let min_x = site_set.iter().map(|s| s.x).min().unwrap() - 1;
    let max_x = site_set.iter().map(|s| s.x).max().unwrap() + 1;
    let min_y = site_set.iter().map(|s| s.y).min().unwrap() - 1;
    let max_y = site_set.iter().map(|s| s.y).max().unwrap() + 1;

    let mut complement = Vec::new();
    for x in min_x..=max_x {
        for y in min_y..=max_y {
            let s = Site::new(x, y);
            if !site_set.contains(&s) {
                complement.push(s);
            }
        }
    }
    if complement.is_empty() {
        return true;
    }
    let index: HashMap<Site, usize> = complement.iter().enumerate().map(|(i, &s)| (s, i)).collect();
    let mut seen = vec![false; complement.len()];
    // Seed from the border ring (all border sites are complement sites).
    let mut stack: Vec<usize> = complement
        .iter()
        .enumerate()
        .filter(|(_, s)| s.x == min_x || s.x == max_x || s.y == min_y || s.y == max_y)
        .map(|(i, _)| i)
        .collect();
    for &i in &stack {
        seen[i] = true;
    }
    while let Some(i) = stack.pop() {
        for n in complement[i].neighbours() {
            if let Some(&j) = index.get(&n) {
                if !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
    }
    seen.iter().all(|&v| v)
}

/// Serializable description of a volume, used by CLI configs.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum VolumeSpec {
    Window { n: u32 },
    Rect { w: u32, h: u32 },
    Explicit { sites: Vec<(i32, i32)>, bonds: Vec<((i32, i32), (i32, i32))> },
}

impl VolumeSpec {
    pub fn build(&self) -> Result<Volume, VolumeError> {
        match self {
            VolumeSpec::Window { n } => Ok(Volume::window(*n)),
            VolumeSpec::Rect { w, h } => Ok(Volume::rect(*w, *h)),
            VolumeSpec::Explicit { sites, bonds } => {
                let sites: Vec<Site> = sites.iter().map(|&(x, y)| Site::new(x, y)).collect();
                let bonds: Vec<Bond> = bonds
                    .iter()
                    .map(|&((ax, ay), (bx, by))| Bond::new(Site::new(ax, ay), Site::new(bx, by)))
                    .collect();
                Volume::new_strict(sites, bonds)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_counts() {
        for n in 0..5u32 {
            let v = Volume::window(n);
            let side = 2 * n as usize + 1;
            assert_eq!(v.n_sites(), side * side);
            assert_eq!(v.n_bonds(), 2 * side * (side - 1));
        }
    }

    #[test]
    fn rect_examples() {
        let v = Volume::rect(1, 2);
        assert_eq!((v.n_sites(), v.n_bonds()), (2, 1));
        let v = Volume::rect(2, 2);
        assert_eq!((v.n_sites(), v.n_bonds()), (4, 4));
        let v = Volume::rect(3, 3);
        let w = Volume::window(1);
        assert_eq!(v.canonical_key(), w.canonical_key());
    }

    #[test]
    fn co_adjacency_cases() {
        let s = Site::new;
        let b = |u, v| Bond::new(u, v);
        // opposite edges of one plaquette
        assert!(co_adjacent(b(s(0, 0), s(1, 0)), b(s(0, 1), s(1, 1))));
        // two edges sharing a corner
        assert!(co_adjacent(b(s(0, 0), s(1, 0)), b(s(1, 0), s(1, 1))));
        // collinear consecutive bonds share no unit square
        assert!(!co_adjacent(b(s(0, 0), s(1, 0)), b(s(1, 0), s(2, 0))));
        // irreflexive
        assert!(!co_adjacent(b(s(0, 0), s(1, 0)), b(s(0, 0), s(1, 0))));
    }

    #[test]
    fn co_neighbour_count_is_six() {
        let bonds = [
            Bond::new(Site::new(0, 0), Site::new(1, 0)),
            Bond::new(Site::new(3, -2), Site::new(3, -1)),
        ];
        for b in bonds {
            let n = b.co_neighbours();
            assert_eq!(n.len(), 6);
            for m in &n {
                assert!(co_adjacent(b, *m));
            }
        }
    }

    #[test]
    fn windows_are_volumes() {
        for n in 0..4 {
            let v = Volume::window(n);
            assert!(is_volume(v.sites(), v.bonds()));
        }
    }

    #[test]
    fn ring_with_excluded_centre_is_not_a_volume() {
        let w = Volume::window(1);
        let centre = Site::new(0, 0);
        let sites: Vec<Site> = w.sites().iter().copied().filter(|&s| s != centre).collect();
        let bonds: Vec<Bond> = w
            .bonds()
            .iter()
            .copied()
            .filter(|b| !b.touches(centre))
            .collect();
        assert!(!is_volume(&sites, &bonds));
    }

    #[test]
    fn single_bond_is_a_volume() {
        let u = Site::new(0, 0);
        let v = Site::new(1, 0);
        assert!(is_volume(&[u, v], &[Bond::new(u, v)]));
    }

    #[test]
    fn boundary_counts_examples() {
        let v = Volume::window(1);
        let c = v.boundary_counts();
        assert_eq!(c.incidence_pairs, 12);
        assert_eq!(c.external_bonds, 12);

        let u = Site::new(0, 0);
        let w = Site::new(1, 0);
        let v = Volume::new(vec![u, w], vec![Bond::new(u, w)]).unwrap();
        let c = v.boundary_counts();
        assert_eq!(c.incidence_pairs, 6);
        assert_eq!(c.external_bonds, 6);

        let v = Volume::window(0);
        let c = v.boundary_counts();
        assert_eq!(c.incidence_pairs, 0);
        assert_eq!(c.external_bonds, 4);
    }

    #[test]
    fn core_bonds_of_window2_are_window1_bonds() {
        let v = Volume::window(2);
        let inner = Volume::window(1);
        let mut core = v.core_bonds();
        core.sort_unstable();
        assert_eq!(core, inner.bonds());
    }

    #[test]
    fn volume_spec_roundtrip() {
        let spec = VolumeSpec::Window { n: 2 };
        let s = serde_json::to_string(&spec).unwrap();
        let back: VolumeSpec = serde_json::from_str(&s).unwrap();
        assert_eq!(spec, back);
        assert_eq!(back.build().unwrap(), Volume::window(2));
    }
}
