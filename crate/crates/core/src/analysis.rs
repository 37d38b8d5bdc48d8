//! Closed-form energy curves and transition-point formulas, pressure
//! tables joining exact finite-volume values with the contour-model
//! estimates, bimodality detection for energy histograms, and exact
//! verification of positive correlation and stochastic domination for the
//! biased random-cluster measures.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::biased_rc::{log_partition_bc, BoundaryClass, RcError, WindowPair};
use crate::contour_model::{g_and_f_estimates, CmError, EnumerationCaps, TruncationParams};
use crate::contours::Energies;
use crate::lattice::{Bond, Site};
use crate::mc::Histogram;
use crate::potts::ModelParams;
use crate::unionfind::UnionFind;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Rc(#[from] RcError),
    #[error(transparent)]
    Cm(#[from] CmError),
    #[error("empty histogram")]
    EmptyHistogram,
    #[error("{0}")]
    Invalid(String),
}

/// The closed forms of the transition point and the latent-heat
/// asymptote.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ClosedForms {
    /// log(1 + sqrt(q+r)): crossing point of the two energy curves
    pub beta_c: f64,
    /// 2 + 2/sqrt(q+r)
    pub latent_heat_asymptote: f64,
}

impl ClosedForms {
    pub fn new(q: f64, r: f64) -> ClosedForms {
        let qr = q + r;
        ClosedForms { beta_c: (1.0 + qr.sqrt()).ln(), latent_heat_asymptote: 2.0 + 2.0 / qr.sqrt() }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PressureRow {
    pub beta: f64,
    pub e_order: f64,
    pub e_disorder: f64,
    /// F(beta) = max(-e(B), -e(empty))
    pub big_f: f64,
    pub f_order: f64,
    pub f_disorder: f64,
    /// exact finite-volume random-cluster pressure per bond, when enumerable
    pub f_rc: Option<f64>,
    pub margin_flag: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PressureTable {
    pub q: f64,
    pub r: f64,
    pub tau: f64,
    pub closed_forms: ClosedForms,
    pub rows: Vec<PressureRow>,
}

/// Energy curves alone (no contour estimates): one row per beta.
pub fn energy_curves(q: f64, r: f64, betas: &[f64]) -> Vec<(f64, Energies, f64)> {
    betas
        .iter()
        .map(|&beta| {
            let params = ModelParams::new(q, r, beta.max(1e-300)).expect("valid params");
            let e = Energies::new(&params);
            let f = (-e.e_order).max(-e.e_disorder);
            (beta, e, f)
        })
        .collect()
}

/// Joins the closed-form curves, the truncated contour-model pressures on
/// a window, and the exact finite-volume pressure from the disordered
/// window-pair enumeration. Rows violating
/// f_rc >= max(f_o, f_d) - tolerance are flagged.
pub fn pressure_table(
    q: f64,
    r: f64,
    betas: &[f64],
    tau: f64,
    caps: &EnumerationCaps,
    exact_pair_n: Option<u32>,
    cap: u64,
) -> Result<PressureTable, AnalysisError> {
    let mut rows = Vec::new();
    for &beta in betas {
        if beta <= 0.0 {
            return Err(AnalysisError::Invalid("pressure table needs beta > 0".into()));
        }
        let params = ModelParams::new(q, r, beta).map_err(|e| AnalysisError::Invalid(e.to_string()))?;
        let e = Energies::new(&params);
        let big_f = (-e.e_order).max(-e.e_disorder);
        let gf = g_and_f_estimates(&params, TruncationParams::new(tau), caps, 1)?;
        let row1 = &gf[0];
        let f_rc = match exact_pair_n {
            Some(n) => {
                let pair = WindowPair::new(n);
                let z = log_partition_bc(&pair, params.p(), q, r, BoundaryClass::Disordered, cap)?;
                Some(z.ln() / pair.outer.n_bonds() as f64)
            }
            None => None,
        };
        let margin_flag = match f_rc {
            Some(frc) => frc - row1.f_order.max(row1.f_disorder) + 1e-9 < 0.0,
            None => false,
        };
        rows.push(PressureRow {
            beta,
            e_order: e.e_order,
            e_disorder: e.e_disorder,
            big_f,
            f_order: row1.f_order,
            f_disorder: row1.f_disorder,
            f_rc,
            margin_flag,
        });
    }
    Ok(PressureTable { q, r, tau, closed_forms: ClosedForms::new(q, r), rows })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Bimodal,
    Unimodal,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BimodalityReport {
    pub verdict: Verdict,
    /// centres of the two leading modes (one entry if unimodal)
    pub mode_locations: Vec<f64>,
    /// min between the modes divided by the larger mode height
    pub dip_ratio: f64,
}

/// Smooths with a width-3 moving average, finds local maxima and compares
/// the dip between the two leading modes against the threshold.
pub fn detect_bimodality(h: &Histogram, dip_threshold: f64) -> Result<BimodalityReport, AnalysisError> {
    if h.total() == 0 {
        return Err(AnalysisError::EmptyHistogram);
    }
    let n = h.counts.len();
    let smooth: Vec<f64> = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(1);
            let hi = (i + 1).min(n - 1);
            let mut s = 0.0;
            for j in lo..=hi {
                s += h.counts[j] as f64;
            }
            s / (hi - lo + 1) as f64
        })
        .collect();
    let centres = h.centres();

    // local maxima, collapsing plateaus to their first bin; maxima below
    // 5% of the tallest are sampling noise, not modes
    let tallest = smooth.iter().copied().fold(0.0f64, f64::max);
    let floor = 0.05 * tallest;
    let mut maxima: Vec<usize> = Vec::new();
    for i in 0..n {
        if smooth[i] <= floor {
            continue;
        }
        let left_ok = i == 0 || smooth[i] > smooth[i - 1];
        let right_ok = i + 1 >= n || smooth[i] >= smooth[i + 1];
        if left_ok && right_ok {
            maxima.push(i);
        }
    }
    if maxima.len() < 2 {
        let peak = (0..n).max_by(|&a, &b| smooth[a].partial_cmp(&smooth[b]).unwrap()).unwrap();
        return Ok(BimodalityReport {
            verdict: Verdict::Unimodal,
            mode_locations: vec![centres[peak]],
            dip_ratio: 1.0,
        });
    }
    // two tallest maxima
    let mut sorted = maxima.clone();
    sorted.sort_by(|&a, &b| smooth[b].partial_cmp(&smooth[a]).unwrap());
    let (m1, m2) = (sorted[0].min(sorted[1]), sorted[0].max(sorted[1]));
    if m2 - m1 < 2 {
        return Ok(BimodalityReport {
            verdict: Verdict::Unimodal,
            mode_locations: vec![centres[sorted[0]]],
            dip_ratio: 1.0,
        });
    }
    let dip = (m1 + 1..m2).map(|i| smooth[i]).fold(f64::INFINITY, f64::min);
    let tall = smooth[m1].max(smooth[m2]);
    let dip_ratio = (dip / tall).clamp(0.0, 1.0);
    Ok(BimodalityReport {
        verdict: if dip_ratio < dip_threshold { Verdict::Bimodal } else { Verdict::Unimodal },
        mode_locations: vec![centres[m1], centres[m2]],
        dip_ratio,
    })
}

/// Exhaustive check of the lattice condition
/// mu(X v Y) mu(X ^ Y) >= mu(X) mu(Y) for the biased random-cluster
/// weights on a graph of at most `max_bonds` bonds. Returns the most
/// negative slack over all configuration pairs (probabilities normalized).
pub fn fkg_exact_check(
    sites: &[Site],
    bonds: &[Bond],
    p: f64,
    q: f64,
    r: f64,
) -> Result<f64, AnalysisError> {
    let n = bonds.len();
    if n > 12 {
        return Err(AnalysisError::Invalid(format!("fkg check capped at 12 bonds, got {n}")));
    }
    let mut sweep = crate::biased_rc::KappaSweep::new(sites, bonds);
    let n_masks = 1usize << n;
    let mut weights = vec![0.0f64; n_masks];
    let mut total = 0.0;
    for mask in 0..n_masks {
        let counts = sweep.kappa((0..n).filter(|i| mask >> i & 1 == 1));
        let w = p.powi(mask.count_ones() as i32)
            * (1.0 - p).powi((n as u32 - mask.count_ones()) as i32)
            * (q + r).powi(counts.kappa0 as i32)
            * q.powi(counts.kappa1 as i32);
        weights[mask] = w;
        total += w;
    }
    for w in &mut weights {
        *w /= total;
    }
    let mut min_slack = f64::INFINITY;
    for a in 0..n_masks {
        for b in a..n_masks {
            let slack = weights[a | b] * weights[a & b] - weights[a] * weights[b];
            if slack < min_slack {
                min_slack = slack;
            }
        }
    }
    Ok(min_slack)
}

/// All monotone Boolean functions on n bits (truth tables as bitmasks over
/// the 2^n inputs).
pub fn monotone_functions(n_bits: usize) -> Vec<u64> {
    assert!(n_bits <= 4, "monotone sweep implemented up to 4 bits");
    let n_inputs = 1usize << n_bits;
    let mut out = Vec::new();
    'candidate: for table in 0u64..(1 << n_inputs) {
        for x in 0..n_inputs {
            for y in 0..n_inputs {
                if x & y == x && x != y {
                    // x <= y pointwise
                    let fx = table >> x & 1;
                    let fy = table >> y & 1;
                    if fx > fy {
                        continue 'candidate;
                    }
                }
            }
        }
        out.push(table);
    }
    out
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DominationReport {
    pub n_monotone_functions: usize,
    /// E_disord[f] <= E_free[f] <= E_ord[f] for all monotone f
    pub chain_holds: bool,
    pub min_chain_slack: f64,
    /// p1 <= p2 implies E_{p1}[f] <= E_{p2}[f] within each boundary class
    pub p_monotone_holds: bool,
    pub min_p_slack: f64,
}

/// Marginal distribution of the free spoke bonds of the n=0 window pair
/// under one boundary class.
fn spoke_marginal(pair: &WindowPair, p: f64, q: f64, r: f64, bc: BoundaryClass) -> Vec<f64> {
    let spokes: Vec<Bond> = pair.non_ring.clone();
    let n_spokes = spokes.len();
    let all_bonds = pair.outer.bonds();
    let spoke_pos: Vec<usize> =
        spokes.iter().map(|b| all_bonds.iter().position(|x| x == b).unwrap()).collect();
    let ring_pos: Vec<usize> =
        pair.ring.iter().map(|b| all_bonds.iter().position(|x| x == b).unwrap()).collect();

    let mut sweep = crate::biased_rc::KappaSweep::new(pair.outer.sites(), all_bonds);
    let n = all_bonds.len();
    let mut marginal = vec![0.0f64; 1 << n_spokes];
    for mask in 0u64..(1u64 << n) {
        // class membership
        let ring_all_present = ring_pos.iter().all(|&i| mask >> i & 1 == 1);
        let outside_inner_empty = (0..n).all(|i| {
            mask >> i & 1 == 0 || pair.inner.contains_bond(all_bonds[i])
        });
        let ok = match bc {
            BoundaryClass::Plain => true,
            BoundaryClass::Ordered => ring_all_present,
            BoundaryClass::Disordered => outside_inner_empty,
        };
        if !ok {
            continue;
        }
        let counts = sweep.kappa((0..n).filter(|i| mask >> i & 1 == 1));
        let w = p.powi(mask.count_ones() as i32)
            * (1.0 - p).powi((n as u32 - mask.count_ones()) as i32)
            * (q + r).powi(counts.kappa0 as i32)
            * q.powi(counts.kappa1 as i32);
        let mut key = 0usize;
        for (j, &pos) in spoke_pos.iter().enumerate() {
            if mask >> pos & 1 == 1 {
                key |= 1 << j;
            }
        }
        marginal[key] += w;
    }
    let total: f64 = marginal.iter().sum();
    for m in &mut marginal {
        *m /= total;
    }
    marginal
}

fn expectation(marginal: &[f64], table: u64) -> f64 {
    marginal
        .iter()
        .enumerate()
        .map(|(mask, &w)| if table >> mask & 1 == 1 { w } else { 0.0 })
        .sum()
}

/// Exact stochastic-domination verification on the n=0 window pair: the
/// chain disordered <= free <= ordered and monotonicity in p, swept over
/// every monotone Boolean function of the four free spoke bonds.
pub fn domination_exact_check(
    p1: f64,
    p2: f64,
    q: f64,
    r: f64,
) -> Result<DominationReport, AnalysisError> {
    if !(0.0 < p1 && p1 <= p2 && p2 < 1.0) {
        return Err(AnalysisError::Invalid("need 0 < p1 <= p2 < 1".into()));
    }
    let pair = WindowPair::new(0);
    let tables = monotone_functions(4);

    let mut min_chain_slack = f64::INFINITY;
    let mut min_p_slack = f64::INFINITY;
    for &p in &[p1, p2] {
        let dis = spoke_marginal(&pair, p, q, r, BoundaryClass::Disordered);
        let free = spoke_marginal(&pair, p, q, r, BoundaryClass::Plain);
        let ord = spoke_marginal(&pair, p, q, r, BoundaryClass::Ordered);
        for &t in &tables {
            let (ed, ef, eo) = (expectation(&dis, t), expectation(&free, t), expectation(&ord, t));
            min_chain_slack = min_chain_slack.min(ef - ed).min(eo - ef);
        }
    }
    for bc in [BoundaryClass::Disordered, BoundaryClass::Plain, BoundaryClass::Ordered] {
        let lo = spoke_marginal(&pair, p1, q, r, bc);
        let hi = spoke_marginal(&pair, p2, q, r, bc);
        for &t in &tables {
            min_p_slack = min_p_slack.min(expectation(&hi, t) - expectation(&lo, t));
        }
    }
    Ok(DominationReport {
        n_monotone_functions: tables.len(),
        chain_holds: min_chain_slack >= -1e-12,
        min_chain_slack,
        p_monotone_holds: min_p_slack >= -1e-12,
        min_p_slack,
    })
}

/// Largest connected cluster fraction of a bond configuration; helper for
/// reports.
pub fn largest_cluster_fraction(n_sites: usize, edges: &[(usize, usize)]) -> f64 {
    if n_sites == 0 {
        return 0.0;
    }
    let mut uf = UnionFind::new(n_sites);
    for &(u, v) in edges {
        uf.union(u, v);
    }
    let mut best = 0;
    for s in 0..n_sites {
        best = best.max(uf.class_size(s));
    }
    best as f64 / n_sites as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mc::histogram;

    #[test]
    fn closed_forms_examples() {
        let cf = ClosedForms::new(2.0, 98.0);
        assert!((cf.beta_c - 11f64.ln()).abs() < 1e-12);
        assert!((cf.latent_heat_asymptote - 2.2).abs() < 1e-12);

        // e(B) = e(empty) exactly at beta_c
        for (q, r) in [(2.0, 1.0), (2.0, 30.0), (1.0, 3.0), (3.0, 2.0), (1.0, 0.5)] {
            let cf = ClosedForms::new(q, r);
            let e = Energies::new(&ModelParams::new(q, r, cf.beta_c).unwrap());
            assert!((e.e_order - e.e_disorder).abs() < 1e-12);
        }
    }

    #[test]
    fn energy_curve_values() {
        let rows = energy_curves(2.0, 2.0, &[2f64.ln()]);
        let (_, e, f) = rows[0];
        assert!((e.e_order - 2f64.ln()).abs() < 1e-12);
        assert!(e.e_disorder.abs() < 1e-12);
        assert!(f.abs() < 1e-12);
    }

    #[test]
    fn slope_jump_matches_latent_heat_asymptote() {
        for (q, r) in [(2.0, 30.0), (1.0, 3.0), (3.0, 97.0)] {
            let cf = ClosedForms::new(q, r);
            // d(-e_B)/dbeta - d(-e_empty)/dbeta at beta_c
            let jump = 1.0 / cf.beta_c.exp_m1() + 1.0;
            assert!((2.0 * jump - cf.latent_heat_asymptote).abs() < 1e-12);
        }
    }

    #[test]
    fn bimodality_on_synthetic_data() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let mut two: Vec<f64> = Vec::new();
        for _ in 0..20000 {
            let centre = if rng.gen_bool(0.5) { -2.0 } else { 2.0 };
            two.push(centre + rng.gen_range(-0.5..0.5));
        }
        let h = histogram(&two, 40).unwrap();
        let rep = detect_bimodality(&h, 0.7).unwrap();
        assert_eq!(rep.verdict, Verdict::Bimodal);
        assert_eq!(rep.mode_locations.len(), 2);

        let one: Vec<f64> = (0..20000).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let h = histogram(&one, 40).unwrap();
        let rep = detect_bimodality(&h, 0.7).unwrap();
        assert_eq!(rep.verdict, Verdict::Unimodal);
    }

    #[test]
    fn fkg_on_path3_example() {
        // events {b1 present} and {b2 present} are positively correlated
        let a = Site::new(0, 0);
        let b = Site::new(1, 0);
        let c = Site::new(2, 0);
        let sites = vec![a, b, c];
        let bonds = vec![Bond::new(a, b), Bond::new(b, c)];
        let slack = fkg_exact_check(&sites, &bonds, 0.5, 2.0, 1.0).unwrap();
        assert!(slack >= -1e-12);

        // the quoted probabilities: phi(both) vs phi(b1) phi(b2)
        let z = 10.25;
        assert!(0.5 / z >= (2.0 / z) * (2.0 / z));
    }

    #[test]
    fn fkg_product_measure_is_tight() {
        // q = 1, r = 0: independent bonds, lattice condition with equality
        let v = crate::lattice::Volume::rect(2, 2);
        let slack = fkg_exact_check(v.sites(), v.bonds(), 0.3, 1.0, 0.0).unwrap();
        assert!(slack.abs() < 1e-15);
    }

    #[test]
    fn monotone_function_counts() {
        // Dedekind numbers for 0..4 bits
        assert_eq!(monotone_functions(0).len(), 2);
        assert_eq!(monotone_functions(1).len(), 3);
        assert_eq!(monotone_functions(2).len(), 6);
        assert_eq!(monotone_functions(3).len(), 20);
        assert_eq!(monotone_functions(4).len(), 168);
    }

    #[test]
    fn domination_chain_holds() {
        let rep = domination_exact_check(0.3, 0.7, 2.0, 5.0).unwrap();
        assert_eq!(rep.n_monotone_functions, 168);
        assert!(rep.chain_holds, "min chain slack {}", rep.min_chain_slack);
        assert!(rep.p_monotone_holds, "min p slack {}", rep.min_p_slack);
    }

    #[test]
    fn pressure_table_margins() {
        let caps = EnumerationCaps::default();
        let cf = ClosedForms::new(2.0, 30.0);
        let betas = [cf.beta_c - 0.5, cf.beta_c, cf.beta_c + 0.5];
        let table = pressure_table(2.0, 30.0, &betas, 2.0, &caps, Some(0), 1 << 22).unwrap();
        for row in &table.rows {
            assert!(!row.margin_flag, "margin flag fired at beta {}", row.beta);
            // F = max of the curves
            assert!((row.big_f - (-row.e_order).max(-row.e_disorder)).abs() < 1e-15);
        }
    }
}
