use qrpotts::contour_model::*;
use qrpotts::contours::ContourKind;
use qrpotts::lattice::{Bond, Site, Volume};
use qrpotts::potts::ModelParams;

#[test]
fn lemma_identity_across_params_and_shapes() {
    let caps = EnumerationCaps::default();
    let l_shape = {
        // L-shaped volume: 2x3 plus a 2x1 arm
        let mut sites = Vec::new();
        let mut bonds = Vec::new();
        for x in 0..2 {
            for y in 0..3 {
                sites.push(Site::new(x, y));
            }
        }
        for x in 2..4 {
            sites.push(Site::new(x, 0));
        }
        for &s in &sites {
            for b in s.incident_bonds() {
                let o = b.other(s);
                if sites.contains(&o) {
                    bonds.push(b);
                }
            }
        }
        Volume::new(sites, bonds).unwrap()
    };
    for (q, r, beta) in [(2.0, 1.0, 0.9), (1.0, 3.0, 1.3861), (3.0, 2.0, 0.5), (2.0, 30.0, 1.9179), (1.5, 2.5, 1.1)] {
        let params = ModelParams::new(q, r, beta).unwrap();
        let evaluator = RcEvaluator::new(params, caps);
        for vol in [Volume::rect(2, 2), Volume::rect(2, 3), Volume::rect(3, 3), l_shape.clone()] {
            let list = enumerate_contours(&vol, &caps).unwrap();
            for kind in [ContourKind::Disorder, ContourKind::Order] {
                let xi = xi_weight_function(kind, &list, &evaluator).unwrap();
                let z = abstract_log_partition(&xi, &caps).unwrap();
                let y = y_direct(&vol, &params, kind, &caps).unwrap();
                assert!(
                    (z.ln() - y.ln()).abs() < 1e-10,
                    "{kind:?} q={q} r={r} beta={beta} bonds={}: {} vs {}",
                    vol.n_bonds(), z.ln(), y.ln()
                );
            }
        }
    }
}

#[test]
fn zrc_equals_direct_window_sums() {
    // the evaluator's contour-form Z agrees with e^{-|B| e} Y on windows
    use qrpotts::contours::Energies;
    let caps = EnumerationCaps::default();
    for (q, r, beta) in [(2.0, 1.0, 0.7), (1.0, 3.0, 1.2)] {
        let params = ModelParams::new(q, r, beta).unwrap();
        let e = Energies::new(&params);
        let evaluator = RcEvaluator::new(params, caps);
        let vol = Volume::window(1);
        let zd = evaluator.z_disord(&vol).unwrap();
        let yd = y_direct(&vol, &params, ContourKind::Disorder, &caps).unwrap();
        assert!((zd.ln() - (yd.ln() - vol.n_bonds() as f64 * e.e_disorder)).abs() < 1e-10);
        let zo = evaluator.z_ord(&vol).unwrap();
        let yo = y_direct(&vol, &params, ContourKind::Order, &caps).unwrap();
        assert!((zo.ln() - (yo.ln() - vol.n_bonds() as f64 * e.e_order)).abs() < 1e-10);
    }
}
