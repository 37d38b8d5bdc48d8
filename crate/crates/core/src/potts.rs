//! The (q,r)-Potts spin model: q interacting visible colours plus r
//! non-interacting invisible ones. Exact partition functions by
//! enumeration, with free and homogeneous visible boundary conditions.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::{Bond, Site, Volume};
use crate::logsum::{LogSum, LogValue};

pub const DEFAULT_ENUMERATION_CAP: u64 = 1 << 26;

#[derive(Debug, Error, PartialEq)]
pub enum PottsError {
    #[error("invalid parameters: {0}")]
    BadParams(String),
    #[error("colour {0} out of range 1..={1}")]
    ColourOutOfRange(u32, u32),
    #[error("colour {0} is not visible (q = {1})")]
    NotVisible(u32, u32),
    #[error("enumeration of {states} states exceeds cap {cap}")]
    CapExceeded { states: u64, cap: u64 },
    #[error("spin operations need integer q and r, got q={0}, r={1}")]
    NonIntegerColours(f64, f64),
}

/// Model parameters. q and r are kept as reals: the random-cluster and
/// contour layers are defined for any q > 0, r >= 0. Spin-side operations
/// demand exact integers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub q: f64,
    pub r: f64,
    pub beta: f64,
}

impl ModelParams {
    pub fn new(q: f64, r: f64, beta: f64) -> Result<ModelParams, PottsError> {
        if !(q > 0.0) || !q.is_finite() {
            return Err(PottsError::BadParams(format!("params.q must be > 0, got {q}")));
        }
        if !(r >= 0.0) || !r.is_finite() {
            return Err(PottsError::BadParams(format!("params.r must be >= 0, got {r}")));
        }
        if !(beta >= 0.0) || !beta.is_finite() {
            return Err(PottsError::BadParams(format!("params.beta must be >= 0, got {beta}")));
        }
        Ok(ModelParams { q, r, beta })
    }

    /// p_beta = 1 - e^{-beta}.
    pub fn p(&self) -> f64 {
        -(-self.beta).exp_m1()
    }

    pub fn qr(&self) -> f64 {
        self.q + self.r
    }

    /// Integer (q, r) if both are exact integers.
    pub fn integer_colours(&self) -> Result<(u32, u32), PottsError> {
        let qi = self.q.round();
        let ri = self.r.round();
        if (self.q - qi).abs() > 0.0 || (self.r - ri).abs() > 0.0 || qi < 1.0 || ri < 0.0 {
            return Err(PottsError::NonIntegerColours(self.q, self.r));
        }
        Ok((qi as u32, ri as u32))
    }
}

/// An assignment of colours 1..=q+r to every site of a volume, stored in
/// the volume's site order. Colours <= q are visible.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpinConfig {
    colours: Vec<u32>,
}

impl SpinConfig {
    pub fn new(volume: &Volume, colours: Vec<u32>, n_colours: u32) -> Result<SpinConfig, PottsError> {
        if colours.len() != volume.n_sites() {
            return Err(PottsError::BadParams(format!(
                "spin configuration covers {} sites, volume has {}",
                colours.len(),
                volume.n_sites()
            )));
        }
        for &c in &colours {
            if c < 1 || c > n_colours {
                return Err(PottsError::ColourOutOfRange(c, n_colours));
            }
        }
        Ok(SpinConfig { colours })
    }

    pub fn constant(volume: &Volume, colour: u32) -> SpinConfig {
        SpinConfig { colours: vec![colour; volume.n_sites()] }
    }

    pub fn colour_at(&self, volume: &Volume, s: Site) -> u32 {
        self.colours[volume.site_index(s).expect("site not in volume")]
    }

    pub fn colours(&self) -> &[u32] {
        &self.colours
    }

    pub fn colours_mut(&mut self) -> &mut [u32] {
        &mut self.colours
    }
}

/// Interior energy: minus the number of volume bonds whose endpoints share
/// a visible colour. Invisible colours do not contribute.
pub fn energy_interior(volume: &Volume, sigma: &SpinConfig, q: u32) -> i64 {
    let mut matches = 0i64;
    for b in volume.bonds() {
        let [u, v] = b.endpoints();
        let cu = sigma.colour_at(volume, u);
        let cv = sigma.colour_at(volume, v);
        if cu == cv && cu <= q {
            matches += 1;
        }
    }
    -matches
}

/// Boundary energy against the homogeneous configuration in which every
/// site outside the volume has visible colour k.
pub fn energy_boundary(volume: &Volume, sigma: &SpinConfig, k: u32, q: u32) -> Result<i64, PottsError> {
    if k < 1 || k > q {
        return Err(PottsError::NotVisible(k, q));
    }
    let mut matches = 0i64;
    for (i, &s) in volume.sites().iter().enumerate() {
        if sigma.colours[i] != k {
            continue;
        }
        for b in s.incident_bonds() {
            let o = b.other(s);
            if !volume.contains_site(o) {
                matches += 1;
            }
        }
    }
    Ok(-matches)
}

fn check_cap(n_colours: u32, n_sites: usize, cap: u64) -> Result<(), PottsError> {
    let mut states: u64 = 1;
    for _ in 0..n_sites {
        states = states.saturating_mul(n_colours as u64);
        if states > cap {
            return Err(PottsError::CapExceeded { states, cap });
        }
    }
    Ok(())
}

/// Walks every colouring of the volume, handing (interior matches,
/// boundary matches with omega^k) to the sink. Boundary matches are only
/// tracked when `boundary_k` is set.
fn enumerate_energies<F: FnMut(i64, i64)>(
    volume: &Volume,
    q: u32,
    n_colours: u32,
    boundary_k: Option<u32>,
    mut sink: F,
) {
    let n = volume.n_sites();
    // Precompute per-site external degree and bond endpoint indices.
    let ext_deg: Vec<i64> = volume
        .sites()
        .iter()
        .map(|s| {
            s.incident_bonds()
                .iter()
                .filter(|b| !volume.contains_site(b.other(*s)))
                .count() as i64
        })
        .collect();
    let bond_idx: Vec<(usize, usize)> = volume
        .bonds()
        .iter()
        .map(|b| {
            let [u, v] = b.endpoints();
            (volume.site_index(u).unwrap(), volume.site_index(v).unwrap())
        })
        .collect();

    let mut colours = vec![1u32; n];
    loop {
        let mut interior = 0i64;
        for &(iu, iv) in &bond_idx {
            let cu = colours[iu];
            if cu == colours[iv] && cu <= q {
                interior += 1;
            }
        }
        let mut boundary = 0i64;
        if let Some(k) = boundary_k {
            for i in 0..n {
                if colours[i] == k {
                    boundary += ext_deg[i];
                }
            }
        }
        sink(-interior, -boundary);

        // next colouring (mixed-radix increment)
        let mut pos = 0;
        loop {
            if pos == n {
                return;
            }
            colours[pos] += 1;
            if colours[pos] <= n_colours {
                break;
            }
            colours[pos] = 1;
            pos += 1;
        }
    }
}

/// log of the free-boundary partition function, exact by enumeration.
pub fn log_partition_free(volume: &Volume, params: &ModelParams, cap: u64) -> Result<LogValue, PottsError> {
    log_partition_free_graph(volume.sites(), volume.bonds(), params, cap)
}

/// Free-boundary partition function on an arbitrary finite graph. The
/// spin/bond identity holds for any finite graph, not just volumes.
pub fn log_partition_free_graph(
    sites: &[Site],
    bonds: &[Bond],
    params: &ModelParams,
    cap: u64,
) -> Result<LogValue, PottsError> {
    let (q, r) = params.integer_colours()?;
    let n_colours = q + r;
    check_cap(n_colours, sites.len(), cap)?;
    let index: std::collections::HashMap<Site, usize> =
        sites.iter().enumerate().map(|(i, &s)| (s, i)).collect();
    let bond_idx: Vec<(usize, usize)> = bonds
        .iter()
        .map(|b| {
            let [u, v] = b.endpoints();
            (index[&u], index[&v])
        })
        .collect();
    // Exact class counts per energy level keep the log-sum short and sharp.
    let mut counts: std::collections::BTreeMap<i64, u64> = std::collections::BTreeMap::new();
    let mut colours = vec![1u32; sites.len()];
    'outer: loop {
        let mut matches = 0i64;
        for &(iu, iv) in &bond_idx {
            let cu = colours[iu];
            if cu == colours[iv] && cu <= q {
                matches += 1;
            }
        }
        *counts.entry(-matches).or_insert(0) += 1;
        let mut pos = 0;
        loop {
            if pos == colours.len() {
                break 'outer;
            }
            colours[pos] += 1;
            if colours[pos] <= n_colours {
                break;
            }
            colours[pos] = 1;
            pos += 1;
        }
    }
    let mut acc = LogSum::new();
    for (h, c) in counts {
        acc.add_ln((c as f64).ln() - params.beta * h as f64);
    }
    Ok(acc.total())
}

/// log of the partition function with homogeneous visible boundary colour k.
pub fn log_partition_homogeneous(
    volume: &Volume,
    params: &ModelParams,
    k: u32,
    cap: u64,
) -> Result<LogValue, PottsError> {
    let (q, r) = params.integer_colours()?;
    if k < 1 || k > q {
        return Err(PottsError::NotVisible(k, q));
    }
    let n_colours = q + r;
    check_cap(n_colours, volume.n_sites(), cap)?;
    let mut counts: std::collections::BTreeMap<i64, u64> = std::collections::BTreeMap::new();
    enumerate_energies(volume, q, n_colours, Some(k), |h_int, h_bound| {
        *counts.entry(h_int + h_bound).or_insert(0) += 1;
    });
    let mut acc = LogSum::new();
    for (h, c) in counts {
        acc.add_ln((c as f64).ln() - params.beta * h as f64);
    }
    Ok(acc.total())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Volume;

    fn params(q: f64, r: f64, beta: f64) -> ModelParams {
        ModelParams::new(q, r, beta).unwrap()
    }

    #[test]
    fn p_beta_consistency() {
        let p = params(2.0, 1.0, 2f64.ln());
        assert!((p.p() - 0.5).abs() < 1e-15);
        assert!((params(1.0, 0.0, 0.0).p()).abs() < 1e-15);
    }

    #[test]
    fn energy_interior_examples() {
        let v = Volume::rect(2, 2);
        let all1 = SpinConfig::constant(&v, 1);
        assert_eq!(energy_interior(&v, &all1, 2), -4);
        let invis = SpinConfig::constant(&v, 3);
        assert_eq!(energy_interior(&v, &invis, 2), 0);

        let v12 = Volume::rect(1, 2);
        let mixed = SpinConfig::new(&v12, vec![1, 2], 3).unwrap();
        assert_eq!(energy_interior(&v12, &mixed, 2), 0);
    }

    #[test]
    fn energy_boundary_examples() {
        let v = Volume::window(0);
        let k = 1;
        let same = SpinConfig::constant(&v, k);
        assert_eq!(energy_boundary(&v, &same, k, 2).unwrap(), -4);
        let invis = SpinConfig::constant(&v, 3);
        assert_eq!(energy_boundary(&v, &invis, k, 2).unwrap(), 0);
        let other = SpinConfig::constant(&v, 2);
        assert_eq!(energy_boundary(&v, &other, k, 2).unwrap(), 0);
        assert!(energy_boundary(&v, &same, 3, 2).is_err());
    }

    #[test]
    fn partition_free_examples() {
        let cap = DEFAULT_ENUMERATION_CAP;
        let single = Volume::window(0);
        let p = params(2.0, 1.0, 0.7);
        let z = log_partition_free(&single, &p, cap).unwrap();
        assert!((z.ln() - 3f64.ln()).abs() < 1e-12);

        // 1x2, q=2, r=1, beta = ln 2: two matched-visible pairs weigh 2, the
        // other seven configurations weigh 1.
        let v = Volume::rect(1, 2);
        let p = params(2.0, 1.0, 2f64.ln());
        let z = log_partition_free(&v, &p, cap).unwrap();
        assert!((z.ln() - 11f64.ln()).abs() < 1e-12);

        let p = params(1.0, 0.0, 1.3);
        let z = log_partition_free(&v, &p, cap).unwrap();
        assert!((z.ln() - 1.3).abs() < 1e-12);
    }

    #[test]
    fn partition_homogeneous_examples() {
        let cap = DEFAULT_ENUMERATION_CAP;
        let v = Volume::window(0);
        let p = params(2.0, 1.0, 2f64.ln());
        let z1 = log_partition_homogeneous(&v, &p, 1, cap).unwrap();
        assert!((z1.ln() - 18f64.ln()).abs() < 1e-12);
        let z2 = log_partition_homogeneous(&v, &p, 2, cap).unwrap();
        assert_eq!(z1, z2);

        let p = params(1.0, 0.0, 0.9);
        let z = log_partition_homogeneous(&v, &p, 1, cap).unwrap();
        assert!((z.ln() - 4.0 * 0.9).abs() < 1e-12);
    }

    #[test]
    fn homogeneous_matches_manual_decomposition() {
        // Z^{omega^k} = sum over configs of e^{-beta(H_int + H_bound)}.
        let v = Volume::rect(1, 2);
        let p = params(2.0, 1.0, 0.8);
        let cap = DEFAULT_ENUMERATION_CAP;
        let z = log_partition_homogeneous(&v, &p, 1, cap).unwrap();
        let mut direct = 0.0f64;
        for c0 in 1..=3u32 {
            for c1 in 1..=3u32 {
                let sigma = SpinConfig::new(&v, vec![c0, c1], 3).unwrap();
                let h = energy_interior(&v, &sigma, 2) + energy_boundary(&v, &sigma, 1, 2).unwrap();
                direct += (-p.beta * h as f64).exp();
            }
        }
        assert!((z.ln() - direct.ln()).abs() < 1e-12);
    }

    #[test]
    fn monotone_in_beta() {
        let v = Volume::rect(2, 2);
        let cap = DEFAULT_ENUMERATION_CAP;
        let mut last_free = f64::NEG_INFINITY;
        let mut last_hom = f64::NEG_INFINITY;
        for i in 0..8 {
            let beta = 0.25 * i as f64;
            let p = params(3.0, 2.0, beta);
            let zf = log_partition_free(&v, &p, cap).unwrap().ln();
            let zh = log_partition_homogeneous(&v, &p, 1, cap).unwrap().ln();
            assert!(zf >= last_free - 1e-12);
            assert!(zh >= last_hom - 1e-12);
            last_free = zf;
            last_hom = zh;
        }
    }

    #[test]
    fn cap_is_enforced() {
        let v = Volume::window(2);
        let p = params(2.0, 1.0, 1.0);
        let err = log_partition_free(&v, &p, 1 << 10).unwrap_err();
        assert!(matches!(err, PottsError::CapExceeded { .. }));
    }
}
