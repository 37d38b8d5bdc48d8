//! The joint spin-bond measure coupling the (q,r)-Potts distribution to
//! the biased random-cluster distribution, and its two conditional
//! samplers. Composing the conditionals gives the cluster Monte Carlo
//! update.

use rand::Rng;

use crate::biased_rc::{component_counts, BondConfig};
use crate::lattice::Volume;
use crate::logsum::LogValue;
use crate::potts::{ModelParams, PottsError, SpinConfig};
use crate::unionfind::UnionFind;

/// A spin configuration paired with a bond configuration on one volume.
#[derive(Clone, Debug)]
pub struct JointConfig {
    pub sigma: SpinConfig,
    pub x: BondConfig,
}

/// Compatibility: every present bond joins equal visible colours.
pub fn is_compatible(volume: &Volume, sigma: &SpinConfig, x: &BondConfig, q: u32) -> bool {
    x.iter().all(|b| {
        let [u, v] = b.endpoints();
        let cu = sigma.colour_at(volume, u);
        cu == sigma.colour_at(volume, v) && cu <= q
    })
}

/// The joint weight pi(sigma, X): e^{beta |B|} times p_beta per present
/// bond and (1 - p_beta) per absent bond when compatible, zero otherwise.
pub fn joint_log_weight(
    volume: &Volume,
    sigma: &SpinConfig,
    x: &BondConfig,
    params: &ModelParams,
) -> Result<LogValue, PottsError> {
    let (q, _) = params.integer_colours()?;
    if !is_compatible(volume, sigma, x, q) {
        return Ok(LogValue::ZERO);
    }
    let p = params.p();
    let n_in = x.len() as i64;
    let n_out = volume.n_bonds() as i64 - n_in;
    Ok(LogValue::from_ln(params.beta * volume.n_bonds() as f64)
        * LogValue::from_value(p).powi(n_in)
        * LogValue::from_value(1.0 - p).powi(n_out))
}

/// Number of spin configurations compatible with X:
/// q^{kappa1} (q+r)^{kappa0}.
pub fn compatible_count(volume: &Volume, x: &BondConfig, q: u32, r: u32) -> Option<u128> {
    let counts = component_counts(volume.sites(), x);
    let mut total: u128 = 1;
    for _ in 0..counts.kappa1 {
        total = total.checked_mul(q as u128)?;
    }
    for _ in 0..counts.kappa0 {
        total = total.checked_mul((q + r) as u128)?;
    }
    Some(total)
}

/// Conditional bond sampler: each bond with equal visible endpoint colours
/// is included independently with probability p_beta.
pub fn sample_bonds_given_spins<R: Rng>(
    volume: &Volume,
    sigma: &SpinConfig,
    params: &ModelParams,
    rng: &mut R,
) -> Result<BondConfig, PottsError> {
    let (q, _) = params.integer_colours()?;
    let p = params.p();
    let mut x = BondConfig::empty();
    for &b in volume.bonds() {
        let [u, v] = b.endpoints();
        let cu = sigma.colour_at(volume, u);
        if cu == sigma.colour_at(volume, v) && cu <= q && rng.gen_bool(p) {
            x.insert(b);
        }
    }
    Ok(x)
}

/// Conditional spin sampler: each non-singleton component draws one
/// uniform visible colour; each isolated site draws uniformly among all
/// q + r colours.
pub fn sample_spins_given_bonds<R: Rng>(
    volume: &Volume,
    x: &BondConfig,
    params: &ModelParams,
    rng: &mut R,
) -> Result<SpinConfig, PottsError> {
    let (q, r) = params.integer_colours()?;
    let n = volume.n_sites();
    let mut uf = UnionFind::new(n);
    let mut covered = vec![false; n];
    for b in x.iter() {
        let [u, v] = b.endpoints();
        let iu = volume.site_index(u).expect("bond inside volume");
        let iv = volume.site_index(v).expect("bond inside volume");
        uf.union(iu, iv);
        covered[iu] = true;
        covered[iv] = true;
    }
    let mut root_colour: Vec<Option<u32>> = vec![None; n];
    let mut colours = vec![0u32; n];
    for i in 0..n {
        if !covered[i] {
            colours[i] = rng.gen_range(1..=q + r);
            continue;
        }
        let root = uf.find(i);
        let c = *root_colour[root].get_or_insert_with(|| rng.gen_range(1..=q));
        colours[i] = c;
    }
    Ok(SpinConfig::new(volume, colours, q + r)?)
}

/// Boundary handling for the cluster update.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClusterBoundary {
    Free,
    /// a frame of colour k outside the volume; frame-connected clusters
    /// are forced to k
    Colour(u32),
}

/// One cluster update: bonds given spins, then spins given bonds. Leaves
/// the Boltzmann distribution of the volume invariant.
pub fn cluster_step<R: Rng>(
    volume: &Volume,
    sigma: &SpinConfig,
    params: &ModelParams,
    boundary: ClusterBoundary,
    rng: &mut R,
) -> Result<SpinConfig, PottsError> {
    let (q, r) = params.integer_colours()?;
    if let ClusterBoundary::Colour(k) = boundary {
        if k < 1 || k > q {
            return Err(PottsError::NotVisible(k, q));
        }
    }
    let p = params.p();
    let n = volume.n_sites();
    // frame node at index n
    let mut uf = UnionFind::new(n + 1);
    let mut covered = vec![false; n];

    for &b in volume.bonds() {
        let [u, v] = b.endpoints();
        let cu = sigma.colour_at(volume, u);
        if cu == sigma.colour_at(volume, v) && cu <= q && rng.gen_bool(p) {
            let iu = volume.site_index(u).unwrap();
            let iv = volume.site_index(v).unwrap();
            uf.union(iu, iv);
            covered[iu] = true;
            covered[iv] = true;
        }
    }
    if let ClusterBoundary::Colour(k) = boundary {
        for (i, &s) in volume.sites().iter().enumerate() {
            if sigma.colours()[i] != k {
                continue;
            }
            for b in s.incident_bonds() {
                if !volume.contains_site(b.other(s)) && rng.gen_bool(p) {
                    uf.union(i, n);
                    covered[i] = true;
                }
            }
        }
    }

    let frame_root = uf.find(n);
    let mut root_colour: Vec<Option<u32>> = vec![None; n + 1];
    if let ClusterBoundary::Colour(k) = boundary {
        root_colour[frame_root] = Some(k);
    }
    let mut colours = vec![0u32; n];
    for i in 0..n {
        if !covered[i] {
            colours[i] = rng.gen_range(1..=q + r);
            continue;
        }
        let root = uf.find(i);
        let c = *root_colour[root].get_or_insert_with(|| rng.gen_range(1..=q));
        colours[i] = c;
    }
    Ok(SpinConfig::new(volume, colours, q + r)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{Bond, Site};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn single_bond_volume() -> Volume {
        let u = Site::new(0, 0);
        let v = Site::new(1, 0);
        Volume::new(vec![u, v], vec![Bond::new(u, v)]).unwrap()
    }

    #[test]
    fn joint_weight_examples() {
        let vol = single_bond_volume();
        let params = ModelParams::new(2.0, 1.0, 0.9).unwrap();
        let b = vol.bonds()[0];

        let matched = SpinConfig::new(&vol, vec![1, 1], 3).unwrap();
        let x = BondConfig::from_bonds([b]);
        let w = joint_log_weight(&vol, &matched, &x, &params).unwrap();
        assert!((w.ln() - 0.9f64.exp_m1().ln()).abs() < 1e-12);

        let mismatched = SpinConfig::new(&vol, vec![1, 2], 3).unwrap();
        assert!(joint_log_weight(&vol, &mismatched, &x, &params).unwrap().is_zero());

        let w = joint_log_weight(&vol, &mismatched, &BondConfig::empty(), &params).unwrap();
        assert!((w.ln() - 0.0).abs() < 1e-12);
    }

    #[test]
    fn compatible_count_examples() {
        let vol = single_bond_volume();
        let b = vol.bonds()[0];
        assert_eq!(compatible_count(&vol, &BondConfig::from_bonds([b]), 2, 1), Some(2));
        assert_eq!(compatible_count(&vol, &BondConfig::empty(), 2, 1), Some(9));

        let path = Volume::rect(3, 1);
        let first = path.bonds()[0];
        assert_eq!(compatible_count(&path, &BondConfig::from_bonds([first]), 2, 1), Some(6));
    }

    #[test]
    fn compatible_count_matches_exhaustive_sigma_enumeration() {
        let vol = Volume::rect(2, 2);
        let (q, r) = (2u32, 1u32);
        let n = vol.n_bonds();
        for mask in 0u64..(1 << n) {
            let x = BondConfig::from_bonds(
                (0..n).filter(|i| mask >> i & 1 == 1).map(|i| vol.bonds()[i]),
            );
            let mut count = 0u128;
            let mut colours = vec![1u32; vol.n_sites()];
            'outer: loop {
                let sigma = SpinConfig::new(&vol, colours.clone(), q + r).unwrap();
                if is_compatible(&vol, &sigma, &x, q) {
                    count += 1;
                }
                let mut pos = 0;
                loop {
                    if pos == colours.len() {
                        break 'outer;
                    }
                    colours[pos] += 1;
                    if colours[pos] <= q + r {
                        break;
                    }
                    colours[pos] = 1;
                    pos += 1;
                }
            }
            assert_eq!(compatible_count(&vol, &x, q, r), Some(count));
        }
    }

    #[test]
    fn bond_sampler_respects_limits() {
        let vol = single_bond_volume();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let matched = SpinConfig::new(&vol, vec![1, 1], 3).unwrap();
        let mismatched = SpinConfig::new(&vol, vec![1, 2], 3).unwrap();
        let invisible = SpinConfig::new(&vol, vec![3, 3], 3).unwrap();

        // beta = 0: never include
        let p0 = ModelParams::new(2.0, 1.0, 0.0).unwrap();
        for _ in 0..50 {
            assert!(sample_bonds_given_spins(&vol, &matched, &p0, &mut rng).unwrap().is_empty());
        }
        // large beta: essentially always include matched-visible bonds
        let phot = ModelParams::new(2.0, 1.0, 30.0).unwrap();
        let x = sample_bonds_given_spins(&vol, &matched, &phot, &mut rng).unwrap();
        assert_eq!(x.len(), 1);
        assert!(sample_bonds_given_spins(&vol, &mismatched, &phot, &mut rng).unwrap().is_empty());
        assert!(sample_bonds_given_spins(&vol, &invisible, &phot, &mut rng).unwrap().is_empty());
    }

    #[test]
    fn bond_sampler_frequency() {
        let vol = single_bond_volume();
        let params = ModelParams::new(2.0, 1.0, 2f64.ln()).unwrap();
        let sigma = SpinConfig::new(&vol, vec![1, 1], 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 100_000;
        let mut hits = 0u64;
        for _ in 0..n {
            if sample_bonds_given_spins(&vol, &sigma, &params, &mut rng).unwrap().len() == 1 {
                hits += 1;
            }
        }
        // binomial 3-sigma window around p = 1/2
        let mean = 0.5 * n as f64;
        let sd = (n as f64 * 0.25).sqrt();
        assert!((hits as f64 - mean).abs() < 3.0 * sd, "hits = {hits}");
    }

    #[test]
    fn spin_sampler_frequency() {
        let vol = single_bond_volume();
        let params = ModelParams::new(2.0, 1.0, 2f64.ln()).unwrap();
        let b = vol.bonds()[0];
        let x = BondConfig::from_bonds([b]);
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let n = 100_000;
        let mut ones = 0u64;
        for _ in 0..n {
            let sigma = sample_spins_given_bonds(&vol, &x, &params, &mut rng).unwrap();
            let c = sigma.colours();
            assert_eq!(c[0], c[1]);
            assert!(c[0] <= 2, "components take visible colours");
            if c[0] == 1 {
                ones += 1;
            }
        }
        let mean = 0.5 * n as f64;
        let sd = (n as f64 * 0.25).sqrt();
        assert!((ones as f64 - mean).abs() < 3.0 * sd);
    }

    #[test]
    fn spin_sampler_empty_bonds_gives_uniform() {
        let vol = single_bond_volume();
        let params = ModelParams::new(2.0, 1.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let n = 90_000;
        let mut counts = [0u64; 3];
        for _ in 0..n {
            let sigma = sample_spins_given_bonds(&vol, &BondConfig::empty(), &params, &mut rng).unwrap();
            counts[(sigma.colours()[0] - 1) as usize] += 1;
        }
        let mean = n as f64 / 3.0;
        let sd = (n as f64 * (1.0 / 3.0) * (2.0 / 3.0)).sqrt();
        for c in counts {
            assert!((c as f64 - mean).abs() < 4.0 * sd, "counts = {counts:?}");
        }
    }

    #[test]
    fn cluster_step_at_beta_zero_is_uniform() {
        let vol = Volume::rect(2, 2);
        let params = ModelParams::new(2.0, 1.0, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(45);
        let start = SpinConfig::constant(&vol, 1);
        let mut counts = [0u64; 3];
        let n = 60_000;
        for _ in 0..n {
            let next = cluster_step(&vol, &start, &params, ClusterBoundary::Free, &mut rng).unwrap();
            counts[(next.colours()[0] - 1) as usize] += 1;
        }
        let mean = n as f64 / 3.0;
        let sd = (n as f64 * (1.0 / 3.0) * (2.0 / 3.0)).sqrt();
        for c in counts {
            assert!((c as f64 - mean).abs() < 4.0 * sd, "counts = {counts:?}");
        }
    }

    #[test]
    fn cluster_step_long_run_matches_boltzmann() {
        // single bond, q=2, r=1, beta=ln2: P(sigma = (1,1)) = 2/11
        let vol = single_bond_volume();
        let params = ModelParams::new(2.0, 1.0, 2f64.ln()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(46);
        let mut sigma = SpinConfig::constant(&vol, 1);
        let n = 200_000;
        let mut hits = 0u64;
        for _ in 0..n {
            sigma = cluster_step(&vol, &sigma, &params, ClusterBoundary::Free, &mut rng).unwrap();
            if sigma.colours() == [1, 1] {
                hits += 1;
            }
        }
        let p = 2.0 / 11.0;
        let mean = p * n as f64;
        let sd = (n as f64 * p * (1.0 - p)).sqrt();
        // correlated samples: generous window
        assert!((hits as f64 - mean).abs() < 6.0 * sd, "hits = {hits}, mean = {mean}");
    }
}
