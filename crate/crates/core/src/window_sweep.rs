//! Bitmask contour extraction specialized to window pairs, for the
//! exhaustive boundary-class sweeps (2^24 configurations on the n=1
//! pair). Produces compact contour summaries; cross-validated against the
//! general extraction in tests.

use crate::biased_rc::WindowPair;
use crate::contours::{Contour, ContourKind};
use crate::lattice::{co_adjacent, Bond, Site};

/// A contour as seen by the sweep: pair count, kind, and the bond set as a
/// mask over the outer window's bonds.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CompactContour {
    pub kind: ContourKind,
    pub pair_count: u32,
    pub bond_mask: u64,
    /// encoded pairs: site_index << 8 | bond_index, sorted
    pub pair_codes: Vec<u32>,
}

impl CompactContour {
    /// Expands the compact form back into a full contour.
    pub fn to_contour(&self, sweeper: &WindowSweeper) -> Contour {
        let pairs: Vec<(Site, Bond)> = self
            .pair_codes
            .iter()
            .map(|&code| {
                let site = sweeper.sites[(code >> 8) as usize];
                let bond = sweeper.bonds[(code & 0xff) as usize];
                (site, bond)
            })
            .collect();
        Contour::from_parts(pairs, self.kind)
    }
}

pub struct WindowSweeper {
    pub pair: WindowPair,
    sites: Vec<Site>,
    bonds: Vec<Bond>,
    /// per bond: the two endpoint site indices
    ends: Vec<[u8; 2]>,
    /// per site: incident window-bond indices (0xff = the incident lattice
    /// bond leaves the window)
    site_bonds: Vec<[u8; 4]>,
    /// per site: true if some incident lattice bond leaves the window
    has_outside: Vec<bool>,
    /// co-adjacency over window bonds
    co_adj: Vec<u64>,
    /// ranking for the outer-group rule: bond with the largest doubled
    /// midpoint
    rank: Vec<u32>,
    /// grid for the surround test: (2n+3)+2 pad per side
    grid_min: i32,
    grid_side: i32,
    /// bond index between grid neighbours, 0xff if outside the window
    grid_bond_right: Vec<u8>,
    grid_bond_up: Vec<u8>,
}

impl WindowSweeper {
    pub fn new(n: u32) -> WindowSweeper {
        let pair = WindowPair::new(n);
        let sites: Vec<Site> = pair.outer.sites().to_vec();
        let bonds: Vec<Bond> = pair.outer.bonds().to_vec();
        assert!(bonds.len() <= 64, "window sweeps use 64-bit bond masks");
        let site_index = |s: Site| pair.outer.site_index(s);
        let bond_index = |b: Bond| pair.outer.bond_position(b);

        let ends: Vec<[u8; 2]> = bonds
            .iter()
            .map(|b| {
                let [u, v] = b.endpoints();
                [site_index(u).unwrap() as u8, site_index(v).unwrap() as u8]
            })
            .collect();
        let mut site_bonds = vec![[0xffu8; 4]; sites.len()];
        let mut has_outside = vec![false; sites.len()];
        for (i, &s) in sites.iter().enumerate() {
            for (d, b) in s.incident_bonds().into_iter().enumerate() {
                match bond_index(b) {
                    Some(bi) => site_bonds[i][d] = bi as u8,
                    None => has_outside[i] = true,
                }
            }
        }
        let mut co_adj = vec![0u64; bonds.len()];
        for i in 0..bonds.len() {
            for j in 0..bonds.len() {
                if i != j && co_adjacent(bonds[i], bonds[j]) {
                    co_adj[i] |= 1 << j;
                }
            }
        }
        // midpoint ranking, lexicographic
        let mut order: Vec<usize> = (0..bonds.len()).collect();
        order.sort_by_key(|&i| bonds[i].midpoint_doubled());
        let mut rank = vec![0u32; bonds.len()];
        for (pos, &i) in order.iter().enumerate() {
            rank[i] = pos as u32;
        }

        // surround-test grid
        let half = n as i32 + 1;
        let grid_min = -half - 1;
        let grid_side = 2 * (half + 1) + 1;
        let cell = |x: i32, y: i32| ((y - grid_min) * grid_side + (x - grid_min)) as usize;
        let mut grid_bond_right = vec![0xffu8; (grid_side * grid_side) as usize];
        let mut grid_bond_up = vec![0xffu8; (grid_side * grid_side) as usize];
        for y in grid_min..grid_min + grid_side {
            for x in grid_min..grid_min + grid_side {
                let s = Site::new(x, y);
                if x + 1 < grid_min + grid_side {
                    if let Some(bi) = bond_index(Bond::new(s, Site::new(x + 1, y))) {
                        grid_bond_right[cell(x, y)] = bi as u8;
                    }
                }
                if y + 1 < grid_min + grid_side {
                    if let Some(bi) = bond_index(Bond::new(s, Site::new(x, y + 1))) {
                        grid_bond_up[cell(x, y)] = bi as u8;
                    }
                }
            }
        }

        WindowSweeper {
            pair,
            sites,
            bonds,
            ends,
            site_bonds,
            has_outside,
            co_adj,
            rank,
            grid_min,
            grid_side,
            grid_bond_right,
            grid_bond_up,
        }
    }

    pub fn n_bonds(&self) -> usize {
        self.bonds.len()
    }

    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    pub fn bond_mask_of(&self, list: &[Bond]) -> u64 {
        let mut m = 0u64;
        for b in list {
            m |= 1 << self.pair.outer.bond_position(*b).expect("bond of the outer window");
        }
        m
    }

    /// Extracts the compact contours of a configuration of the window.
    /// `cofinite` selects the ordered-class reading (everything outside the
    /// window present).
    pub fn extract(&self, present: u64, cofinite: bool, out: &mut Vec<CompactContour>) {
        out.clear();
        let n_sites = self.sites.len();
        let n_bonds = self.bonds.len();
        // union-find over sites plus a virtual infinity node
        let mut parent: Vec<u8> = (0..=n_sites as u8).collect();
        let inf = n_sites as u8;
        fn find(parent: &mut [u8], mut x: u8) -> u8 {
            while parent[x as usize] != x {
                let gp = parent[parent[x as usize] as usize];
                parent[x as usize] = gp;
                x = gp;
            }
            x
        }
        let mut live = vec![false; n_sites];
        for bi in 0..n_bonds {
            if present >> bi & 1 == 1 {
                let [u, v] = self.ends[bi];
                live[u as usize] = true;
                live[v as usize] = true;
                let (ru, rv) = (find(&mut parent, u), find(&mut parent, v));
                if ru != rv {
                    parent[ru as usize] = rv;
                }
            }
        }
        if cofinite {
            for i in 0..n_sites {
                if self.has_outside[i] {
                    live[i] = true;
                    let (ri, rinf) = (find(&mut parent, i as u8), find(&mut parent, inf));
                    if ri != rinf {
                        parent[ri as usize] = rinf;
                    }
                }
            }
        }

        // bucket boundary pairs by component root
        let mut bucket_roots: Vec<u8> = Vec::new();
        let mut bucket_pairs: Vec<Vec<u32>> = Vec::new();
        let mut bucket_bonds: Vec<u64> = Vec::new();
        for i in 0..n_sites {
            if !live[i] {
                continue;
            }
            for d in 0..4 {
                let bi = self.site_bonds[i][d];
                if bi == 0xff {
                    // a lattice bond leaving the window: absent in the
                    // finite reading (impossible for in-class configs),
                    // present in the cofinite one
                    debug_assert!(cofinite, "finite sweep configs must stay inside the core");
                    continue;
                }
                if present >> bi & 1 == 1 {
                    continue;
                }
                let root = find(&mut parent, i as u8);
                let slot = match bucket_roots.iter().position(|&r| r == root) {
                    Some(s) => s,
                    None => {
                        bucket_roots.push(root);
                        bucket_pairs.push(Vec::new());
                        bucket_bonds.push(0);
                        bucket_roots.len() - 1
                    }
                };
                bucket_pairs[slot].push((i as u32) << 8 | bi as u32);
                bucket_bonds[slot] |= 1 << bi;
            }
        }

        let inf_root = find(&mut parent, inf);
        for slot in 0..bucket_roots.len() {
            let from_infinite = cofinite && bucket_roots[slot] == inf_root;
            let all_bonds = bucket_bonds[slot];
            // outer group: the one holding the max-rank bond of the bucket
            let mut best_rank = 0u32;
            let mut best_bond = 0usize;
            let mut bits = all_bonds;
            while bits != 0 {
                let b = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                if self.rank[b] >= best_rank {
                    best_rank = self.rank[b];
                    best_bond = b;
                }
            }
            // split by co-adjacency
            let mut remaining = all_bonds;
            while remaining != 0 {
                let seed = remaining.trailing_zeros() as usize;
                let mut group = 1u64 << seed;
                loop {
                    let mut grown = group;
                    let mut gb = group;
                    while gb != 0 {
                        let b = gb.trailing_zeros() as usize;
                        gb &= gb - 1;
                        grown |= self.co_adj[b] & remaining;
                    }
                    if grown == group {
                        break;
                    }
                    group = grown;
                }
                remaining &= !group;
                let kind = if from_infinite {
                    ContourKind::Order
                } else if group >> best_bond & 1 == 1 {
                    ContourKind::Disorder
                } else {
                    ContourKind::Order
                };
                let mut codes: Vec<u32> = bucket_pairs[slot]
                    .iter()
                    .copied()
                    .filter(|&code| group >> (code & 0xff) & 1 == 1)
                    .collect();
                codes.sort_unstable();
                out.push(CompactContour {
                    kind,
                    pair_count: codes.len() as u32,
                    bond_mask: group,
                    pair_codes: codes,
                });
            }
        }
    }

    /// True iff removing the masked bonds cuts the origin from infinity.
    pub fn surrounds_origin(&self, bond_mask: u64) -> bool {
        let side = self.grid_side;
        let cells = (side * side) as usize;
        let origin = ((-self.grid_min) * side + (-self.grid_min)) as usize;
        let mut seen = vec![false; cells];
        let mut stack = vec![origin];
        seen[origin] = true;
        while let Some(c) = stack.pop() {
            let x = c as i32 % side;
            let y = c as i32 / side;
            if x == 0 || y == 0 || x == side - 1 || y == side - 1 {
                return false; // reached the rim: not surrounded
            }
            // right
            let b = self.grid_bond_right[c];
            if b == 0xff || bond_mask >> b & 1 == 0 {
                let nc = c + 1;
                if !seen[nc] {
                    seen[nc] = true;
                    stack.push(nc);
                }
            }
            // left
            let lc = c - 1;
            let b = self.grid_bond_right[lc];
            if b == 0xff || bond_mask >> b & 1 == 0 {
                if !seen[lc] {
                    seen[lc] = true;
                    stack.push(lc);
                }
            }
            // up
            let b = self.grid_bond_up[c];
            if b == 0xff || bond_mask >> b & 1 == 0 {
                let nc = c + side as usize;
                if !seen[nc] {
                    seen[nc] = true;
                    stack.push(nc);
                }
            }
            // down
            let dc = c - side as usize;
            let b = self.grid_bond_up[dc];
            if b == 0xff || bond_mask >> b & 1 == 0 {
                if !seen[dc] {
                    seen[dc] = true;
                    stack.push(dc);
                }
            }
        }
        true
    }
}
