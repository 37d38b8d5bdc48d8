//! The desk-scale verification suite behind `qrpotts verify`: every
//! partition-function identity, contour equivalence, coupling marginal and
//! sampler fixed point at quick scale, each reported as a named check.

use qrpotts::analysis;
use qrpotts::biased_rc::{self, BoundaryClass, WindowPair};
use qrpotts::contour_model::{
    abstract_log_partition, enumerate_contours, xi_weight_function, y_direct, CmError,
    RcEvaluator,
};
use qrpotts::contours::{
    self, extract_contours, geometry, Config, ContourFamily, ContourKind, Energies,
};
use qrpotts::coupling;
use qrpotts::lattice::{Bond, Site, Volume};
use qrpotts::logsum::LogSum;
use qrpotts::mc::{exact, SimGraph};
use qrpotts::potts::{self, ModelParams};

use crate::config::RunConfig;
use crate::manifest::CheckResult;

fn pass(name: &str, detail: String) -> CheckResult {
    CheckResult { name: name.into(), pass: true, detail, complete: true }
}

fn fail(name: &str, detail: String) -> CheckResult {
    CheckResult { name: name.into(), pass: false, detail, complete: true }
}

fn incomplete(name: &str, detail: String) -> CheckResult {
    CheckResult { name: name.into(), pass: false, detail, complete: false }
}

fn from_residual(name: &str, residual: f64, tol: f64) -> CheckResult {
    if residual.is_finite() && residual <= tol {
        pass(name, format!("max residual {residual:.3e} <= {tol:.1e}"))
    } else {
        fail(name, format!("max residual {residual:.3e} exceeds {tol:.1e}"))
    }
}

fn cm_result(name: &str, err: &CmError) -> CheckResult {
    match err {
        CmError::VolumeCapExceeded { .. } | CmError::FamilyCapExceeded { .. } => {
            incomplete(name, format!("incomplete enumeration: {err}"))
        }
        _ => fail(name, err.to_string()),
    }
}

/// Runs the whole suite; order is stable so failures are reproducible.
pub fn run_all(cfg: &RunConfig) -> Vec<CheckResult> {
    let mut out = Vec::new();
    let params = match cfg.model_params() {
        Ok(p) => p,
        Err(e) => return vec![fail("params", e.to_string())],
    };
    out.push(check_potts_rc_plain(cfg, &params));
    out.push(check_bc_reduction_n0(cfg, &params));
    out.push(check_bc_reduction_n1(cfg, &params));
    out.push(check_bond_site_identities(cfg));
    out.push(check_contour_roundtrip());
    out.push(check_lemma_contour_model(cfg, &params));
    out.push(check_xi_closed_form(cfg));
    out.push(check_coupling_marginals(&params));
    out.push(check_kernel_fixed_points(&params));
    out.push(check_fkg(&params));
    out.push(check_domination(&params));
    out.push(check_closed_forms());
    out
}

fn small_graphs() -> Vec<(Vec<Site>, Vec<Bond>)> {
    let s = Site::new;
    let single = {
        let (a, b) = (s(0, 0), s(1, 0));
        (vec![a, b], vec![Bond::new(a, b)])
    };
    let path3 = {
        let (a, b, c) = (s(0, 0), s(1, 0), s(2, 0));
        (vec![a, b, c], vec![Bond::new(a, b), Bond::new(b, c)])
    };
    let square = {
        let v = Volume::rect(2, 2);
        (v.sites().to_vec(), v.bonds().to_vec())
    };
    vec![single, path3, square]
}

fn check_potts_rc_plain(cfg: &RunConfig, params: &ModelParams) -> CheckResult {
    let name = "potts_rc_plain";
    if params.integer_colours().is_err() {
        return pass(name, "skipped: needs integer colours".into());
    }
    let mut worst: f64 = 0.0;
    for (sites, bonds) in small_graphs() {
        let lhs = match potts::log_partition_free_graph(&sites, &bonds, params, cfg.enumeration_cap) {
            Ok(v) => v,
            Err(e) => return incomplete(name, e.to_string()),
        };
        let z_rc = match biased_rc::log_partition(
            &sites,
            &bonds,
            params.p(),
            params.q,
            params.r,
            cfg.enumeration_cap,
        ) {
            Ok(v) => v,
            Err(e) => return incomplete(name, e.to_string()),
        };
        let mut rhs = params.beta * bonds.len() as f64 + z_rc.ln();
        if cfg.corrupt.as_deref() == Some("rc-weight") {
            rhs += 1e-3;
        }
        worst = worst.max((lhs.ln() - rhs).abs());
    }
    from_residual(name, worst, 1e-10)
}

fn check_bc_reduction_n0(cfg: &RunConfig, params: &ModelParams) -> CheckResult {
    let name = "bc_reduction_n0";
    if params.integer_colours().is_err() {
        return pass(name, "skipped: needs integer colours".into());
    }
    let pair = WindowPair::new(0);
    let (sites, bonds) = (vec![Site::new(0, 0), Site::new(1, 0)], vec![Bond::new(
        Site::new(0, 0),
        Site::new(1, 0),
    )]);
    match biased_rc::identity_checks(params, (&sites, &bonds), &pair, cfg.enumeration_cap) {
        Ok(report) => from_residual(name, report.max_residual(), 1e-12),
        Err(e) => incomplete(name, e.to_string()),
    }
}

fn check_bc_reduction_n1(cfg: &RunConfig, params: &ModelParams) -> CheckResult {
    let name = "bc_reduction_n1";
    let (q, r) = match params.integer_colours() {
        Ok(v) => v,
        Err(_) => return pass(name, "skipped: needs integer colours".into()),
    };
    if (q + r).pow(9) as u64 > cfg.enumeration_cap {
        return incomplete(name, format!("(q+r)^9 spin states exceed cap {}", cfg.enumeration_cap));
    }
    let pair = WindowPair::new(1);
    let lhs = match potts::log_partition_free(&pair.inner, params, cfg.enumeration_cap) {
        Ok(v) => v,
        Err(e) => return incomplete(name, e.to_string()),
    };
    let z = match biased_rc::log_partition_bc(
        &pair,
        params.p(),
        params.q,
        params.r,
        BoundaryClass::Disordered,
        cfg.enumeration_cap,
    ) {
        Ok(v) => v,
        Err(e) => return incomplete(name, e.to_string()),
    };
    let extra_sites = (pair.outer.n_sites() - pair.inner.n_sites()) as f64;
    let rhs = -extra_sites * params.qr().ln() + params.beta * pair.outer.n_bonds() as f64 + z.ln();
    let mut worst = (lhs.ln() - rhs).abs();
    let mut detail = format!("disordered residual {worst:.3e}");

    if cfg.full && params.beta > 0.0 {
        let lhs = match potts::log_partition_homogeneous(&pair.inner, params, 1, cfg.enumeration_cap) {
            Ok(v) => v,
            Err(e) => return incomplete(name, e.to_string()),
        };
        let z = match biased_rc::log_partition_bc(
            &pair,
            params.p(),
            params.q,
            params.r,
            BoundaryClass::Ordered,
            cfg.enumeration_cap,
        ) {
            Ok(v) => v,
            Err(e) => return incomplete(name, e.to_string()),
        };
        let rhs = -params.q.ln() - pair.ring.len() as f64 * params.beta.exp_m1().ln()
            + params.beta * pair.outer.n_bonds() as f64
            + z.ln();
        let ordered = (lhs.ln() - rhs).abs();
        detail = format!("{detail}, ordered residual {ordered:.3e}");
        worst = worst.max(ordered);
    }
    if worst <= 1e-9 {
        pass(name, detail)
    } else {
        fail(name, detail)
    }
}

fn check_bond_site_identities(cfg: &RunConfig) -> CheckResult {
    let name = "bond_site_identities";
    let pair = WindowPair::new(0);
    let mut tested = 0u64;
    // disordered class at n=0: only the empty configuration
    let empty = std::collections::BTreeSet::new();
    match contours::bond_site_identity_check(&pair, &empty, BoundaryClass::Disordered) {
        Ok(true) => tested += 1,
        Ok(false) => return fail(name, "disordered identity fails at n=0, X=empty".into()),
        Err(e) => return fail(name, e.to_string()),
    }
    // ordered class at n=0: all 16 configurations over the spokes
    let free = &pair.non_ring;
    for mask in 0u64..(1 << free.len()) {
        let mut x: std::collections::BTreeSet<Bond> = pair.ring.iter().copied().collect();
        for (i, &b) in free.iter().enumerate() {
            if mask >> i & 1 == 1 {
                x.insert(b);
            }
        }
        match contours::bond_site_identity_check(&pair, &x, BoundaryClass::Ordered) {
            Ok(true) => tested += 1,
            Ok(false) => return fail(name, format!("ordered identity fails at n=0, mask {mask}")),
            Err(e) => return fail(name, e.to_string()),
        }
    }
    // disordered class at n=1: all 4096 configurations
    let pair1 = WindowPair::new(1);
    let inner = &pair1.inner_bonds;
    for mask in 0u64..(1 << inner.len()) {
        let x: std::collections::BTreeSet<Bond> =
            (0..inner.len()).filter(|i| mask >> i & 1 == 1).map(|i| inner[i]).collect();
        match contours::bond_site_identity_check(&pair1, &x, BoundaryClass::Disordered) {
            Ok(true) => tested += 1,
            Ok(false) => return fail(name, format!("disordered identity fails at n=1, mask {mask}")),
            Err(e) => return fail(name, e.to_string()),
        }
    }
    let _ = cfg;
    pass(name, format!("{tested} configurations, all identities exact"))
}

fn check_contour_roundtrip() -> CheckResult {
    use rand::Rng;
    use rand::SeedableRng;
    let name = "contour_roundtrip";
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2024);
    let v4 = Volume::rect(4, 4);
    let v6 = Volume::rect(6, 6);
    let mut tested = 0u64;
    for _ in 0..2000 {
        let x: std::collections::BTreeSet<Bond> =
            v4.bonds().iter().copied().filter(|_| rng.gen_bool(0.5)).collect();
        let cfg = Config::Finite(x);
        let family = match ContourFamily::new(extract_contours(&cfg)) {
            Ok(f) => f,
            Err(e) => return fail(name, e.to_string()),
        };
        if family.is_empty() {
            continue;
        }
        match contours::reconstruct(&family, ContourKind::Disorder) {
            Ok(rebuilt) if rebuilt == cfg => tested += 1,
            Ok(_) => return fail(name, "finite roundtrip mismatch".into()),
            Err(e) => return fail(name, e.to_string()),
        }
    }
    for _ in 0..500 {
        let absent: std::collections::BTreeSet<Bond> =
            v6.bonds().iter().copied().filter(|_| rng.gen_bool(0.35)).collect();
        if absent.is_empty() {
            continue;
        }
        let cfg = Config::Cofinite(absent);
        let family = ContourFamily::new(extract_contours(&cfg)).expect("extracted families");
        match contours::reconstruct(&family, ContourKind::Order) {
            Ok(rebuilt) if rebuilt == cfg => tested += 1,
            Ok(_) => return fail(name, "cofinite roundtrip mismatch".into()),
            Err(e) => return fail(name, e.to_string()),
        }
    }
    pass(name, format!("{tested} random configurations rebuilt exactly"))
}

fn check_lemma_contour_model(cfg: &RunConfig, params: &ModelParams) -> CheckResult {
    let name = "lemma_contour_model";
    let caps = cfg.caps;
    let evaluator = RcEvaluator::new(*params, caps);
    let mut worst: f64 = 0.0;
    for vol in [Volume::rect(2, 2), Volume::rect(2, 3), Volume::rect(3, 3)] {
        let list = match enumerate_contours(&vol, &caps) {
            Ok(l) => l,
            Err(e) => return cm_result(name, &e),
        };
        for kind in [ContourKind::Disorder, ContourKind::Order] {
            if !list.complete_for(kind) {
                return incomplete(name, format!("{kind:?} enumeration incomplete"));
            }
            let xi = match xi_weight_function(kind, &list, &evaluator) {
                Ok(w) => w,
                Err(e) => return cm_result(name, &e),
            };
            let z = match abstract_log_partition(&xi, &caps) {
                Ok(v) => v,
                Err(e) => return cm_result(name, &e),
            };
            let y = match y_direct(&vol, params, kind, &caps) {
                Ok(v) => v,
                Err(e) => return cm_result(name, &e),
            };
            worst = worst.max((z.ln() - y.ln()).abs());
        }
    }
    from_residual(name, worst, 1e-9)
}

fn check_xi_closed_form(cfg: &RunConfig) -> CheckResult {
    let name = "xi_closed_form";
    let b = Bond::new(Site::new(0, 0), Site::new(1, 0));
    let order = &extract_contours(&Config::cofinite([b]))[0];
    let geo = geometry(order);
    let mut worst: f64 = 0.0;
    for (q, r, beta) in [(2.0, 1.0, 0.7), (2.0, 30.0, 1.9179), (1.0, 3.0, 1.2), (3.0, 2.0, 1.5)] {
        let p = ModelParams::new(q, r, beta).expect("grid params");
        let evaluator = RcEvaluator::new(p, cfg.caps);
        match evaluator.xi_order(order, &geo) {
            Ok(xi) => worst = worst.max((xi.value() - 1.0 / beta.exp_m1()).abs()),
            Err(e) => return cm_result(name, &e),
        }
    }
    from_residual(name, worst, 1e-12)
}

fn check_coupling_marginals(params: &ModelParams) -> CheckResult {
    let name = "coupling_marginals";
    let (q, r) = match params.integer_colours() {
        Ok(v) => v,
        Err(_) => return pass(name, "skipped: needs integer colours".into()),
    };
    let n_colours = q + r;
    let mut worst: f64 = 0.0;
    for (sites, bonds) in small_graphs() {
        let vol = Volume::new(sites, bonds).expect("small graphs are valid");
        let n = vol.n_bonds();
        let states = exact::spin_states(vol.n_sites(), n_colours);
        // sum over X of pi(sigma, X) = e^{-beta H_int(sigma)}
        for colours in &states {
            let sigma = potts::SpinConfig::new(&vol, colours.clone(), n_colours).unwrap();
            let mut acc = LogSum::new();
            for mask in 0u64..(1 << n) {
                let x = biased_rc::BondConfig::from_bonds(
                    (0..n).filter(|i| mask >> i & 1 == 1).map(|i| vol.bonds()[i]),
                );
                acc.add(coupling::joint_log_weight(&vol, &sigma, &x, params).unwrap());
            }
            let h = potts::energy_interior(&vol, &sigma, q) as f64;
            worst = worst.max((acc.total().ln() - (-params.beta * h)).abs());
        }
        // sum over sigma of pi(sigma, X) = e^{beta |B|} w_RC(X)
        for mask in 0u64..(1 << n) {
            let x = biased_rc::BondConfig::from_bonds(
                (0..n).filter(|i| mask >> i & 1 == 1).map(|i| vol.bonds()[i]),
            );
            let mut acc = LogSum::new();
            for colours in &states {
                let sigma = potts::SpinConfig::new(&vol, colours.clone(), n_colours).unwrap();
                acc.add(coupling::joint_log_weight(&vol, &sigma, &x, params).unwrap());
            }
            let rc = biased_rc::rc_log_weight(vol.sites(), vol.bonds(), &x, params.p(), params.q, params.r)
                .unwrap();
            let expect = params.beta * n as f64 + rc.ln();
            worst = worst.max((acc.total().ln() - expect).abs());
            // compatible spin count matches the weight formula
            let count = coupling::compatible_count(&vol, &x, q, r).unwrap();
            let direct = states
                .iter()
                .filter(|colours| {
                    let sigma = potts::SpinConfig::new(&vol, (*colours).clone(), n_colours).unwrap();
                    coupling::is_compatible(&vol, &sigma, &x, q)
                })
                .count() as u128;
            if count != direct {
                return fail(name, format!("compatible count {count} != {direct}"));
            }
        }
    }
    from_residual(name, worst, 1e-12)
}

fn check_kernel_fixed_points(params: &ModelParams) -> CheckResult {
    let name = "kernel_fixed_points";
    let (q, r) = match params.integer_colours() {
        Ok(v) => v,
        Err(_) => return pass(name, "skipped: needs integer colours".into()),
    };
    let n_colours = q + r;
    let tol = 1e-12;
    let mut worst: f64 = 0.0;

    // Metropolis on the 1x2 volume
    {
        let graph = SimGraph::from_volume(&Volume::rect(1, 2));
        let states = exact::spin_states(2, n_colours);
        let weights = exact::boltzmann_weights(&graph, &states, params, q, None);
        let total: f64 = weights.iter().sum();
        let pi: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let k = exact::metropolis_kernel(&graph, &states, params, q, n_colours, None);
        worst = worst.max(fixed_point_error(&pi, &k));
        worst = worst.max(detailed_balance_error(&pi, &k));
    }
    // cluster update on the single bond, free and coloured boundary
    {
        let graph = SimGraph::from_volume(&Volume::rect(1, 2));
        let states = exact::spin_states(2, n_colours);
        let weights = exact::boltzmann_weights(&graph, &states, params, q, None);
        let total: f64 = weights.iter().sum();
        let pi: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let k = exact::cluster_kernel(&graph, &states, params, q, n_colours, None);
        worst = worst.max(fixed_point_error(&pi, &k));
        worst = worst.max(detailed_balance_error(&pi, &k));

        let graph0 = SimGraph::from_volume(&Volume::window(0));
        let states0 = exact::spin_states(1, n_colours);
        let w0 = exact::boltzmann_weights(&graph0, &states0, params, q, Some(1));
        let t0: f64 = w0.iter().sum();
        let pi0: Vec<f64> = w0.iter().map(|w| w / t0).collect();
        let k0 = exact::cluster_kernel(&graph0, &states0, params, q, n_colours, Some(1));
        worst = worst.max(fixed_point_error(&pi0, &k0));
    }
    // heat bath on the n=0 ordered pair: exact single-bond refresh kernel
    {
        let pair = WindowPair::new(0);
        let free = pair.non_ring.clone();
        let all: Vec<Bond> = pair.ring.iter().chain(free.iter()).copied().collect();
        let mut sweep = biased_rc::KappaSweep::new(pair.outer.sites(), &all);
        let n_free = free.len();
        let n_ring = pair.ring.len();
        let p = params.p();
        let weight = |mask: u64, sweep: &mut biased_rc::KappaSweep| -> f64 {
            let present = (0..n_ring).chain((0..n_free).filter(|i| mask >> i & 1 == 1).map(|i| i + n_ring));
            let counts = sweep.kappa(present);
            let nx = n_ring as u32 + mask.count_ones();
            p.powi(nx as i32)
                * (1.0 - p).powi(all.len() as i32 - nx as i32)
                * params.qr().powi(counts.kappa0 as i32)
                * params.q.powi(counts.kappa1 as i32)
        };
        let n_states = 1usize << n_free;
        let weights: Vec<f64> = (0..n_states as u64).map(|m| weight(m, &mut sweep)).collect();
        let total: f64 = weights.iter().sum();
        let pi: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let mut kernel = vec![vec![0.0; n_states]; n_states];
        for s in 0..n_states {
            for j in 0..n_free {
                let with = s | (1 << j);
                let without = s & !(1 << j);
                let (ww, wo) = (weights[with], weights[without]);
                let p_with = ww / (ww + wo);
                kernel[s][with] += p_with / n_free as f64;
                kernel[s][without] += (1.0 - p_with) / n_free as f64;
            }
        }
        worst = worst.max(fixed_point_error(&pi, &kernel));
        worst = worst.max(detailed_balance_error(&pi, &kernel));
    }

    from_residual(name, worst, tol)
}

fn fixed_point_error(pi: &[f64], kernel: &[Vec<f64>]) -> f64 {
    let n = pi.len();
    let mut worst: f64 = 0.0;
    for j in 0..n {
        let mut out = 0.0;
        for i in 0..n {
            out += pi[i] * kernel[i][j];
        }
        worst = worst.max((out - pi[j]).abs());
    }
    // rows must be stochastic too
    for row in kernel {
        let s: f64 = row.iter().sum();
        worst = worst.max((s - 1.0).abs());
    }
    worst
}

fn detailed_balance_error(pi: &[f64], kernel: &[Vec<f64>]) -> f64 {
    let n = pi.len();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            worst = worst.max((pi[i] * kernel[i][j] - pi[j] * kernel[j][i]).abs());
        }
    }
    worst
}

fn check_fkg(params: &ModelParams) -> CheckResult {
    let name = "fkg_lattice_condition";
    let mut worst = f64::INFINITY;
    for (sites, bonds) in small_graphs() {
        for &(p, q, r) in
            &[(params.p(), params.q.max(1.0), params.r), (0.3, 1.0, 4.0), (0.7, 2.5, 0.5)]
        {
            match analysis::fkg_exact_check(&sites, &bonds, p, q, r) {
                Ok(slack) => worst = worst.min(slack),
                Err(e) => return fail(name, e.to_string()),
            }
        }
    }
    if worst >= -1e-12 {
        pass(name, format!("min slack {worst:.3e}"))
    } else {
        fail(name, format!("lattice condition violated: slack {worst:.3e}"))
    }
}

fn check_domination(params: &ModelParams) -> CheckResult {
    let name = "stochastic_domination";
    let q = params.q.max(1.0);
    match analysis::domination_exact_check(0.3, 0.7, q, params.r) {
        Ok(rep) => {
            if rep.chain_holds && rep.p_monotone_holds {
                pass(
                    name,
                    format!(
                        "{} monotone functions, chain slack {:.3e}, p slack {:.3e}",
                        rep.n_monotone_functions, rep.min_chain_slack, rep.min_p_slack
                    ),
                )
            } else {
                fail(name, format!("chain {}, p-monotone {}", rep.chain_holds, rep.p_monotone_holds))
            }
        }
        Err(e) => fail(name, e.to_string()),
    }
}

fn check_closed_forms() -> CheckResult {
    let name = "closed_forms";
    let mut worst: f64 = 0.0;
    for (q, r) in [(2.0, 1.0), (2.0, 30.0), (2.0, 98.0), (1.0, 3.0), (3.0, 2.0)] {
        let cf = analysis::ClosedForms::new(q, r);
        worst = worst.max((cf.beta_c - (1.0 + (q + r).sqrt()).ln()).abs());
        worst = worst.max((cf.latent_heat_asymptote - (2.0 + 2.0 / (q + r).sqrt())).abs());
        let e = Energies::new(&ModelParams::new(q, r, cf.beta_c).expect("valid"));
        worst = worst.max((e.e_order - e.e_disorder).abs());
    }
    from_residual(name, worst, 1e-12)
}
