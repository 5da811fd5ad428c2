mod common;

use std::f64::consts::PI;
use std::sync::OnceLock;

use borelk::geometry::{
    a_l, cut_disc_eta, estimate_h_bounds, forbidden_directions, h_polar, h_value, plan_covering, tau_l, wrap,
    CoveringOptions, HBoundEstimates, HBoundOptions,
};
use borelk::Complex64;
use common::*;
use proptest::prelude::*;

fn m_grid() -> Vec<f64> {
    (-40..=40).map(|j| 0.25 * f64::from(j)).collect()
}

fn bounds_at_03() -> &'static HBoundEstimates {
    static EST: OnceLock<HBoundEstimates> = OnceLock::new();
    EST.get_or_init(|| {
        let s = desk_spec();
        let forb = forbidden_directions(&s, &m_grid(), -8..=8, 0.05).unwrap();
        estimate_h_bounds(&s, 0.3, 0.05, 0.5, &m_grid(), 1.0, &forb, &HBoundOptions::default()).unwrap()
    })
}

#[test]
fn a_l_of_constant_quotient() {
    let s = desk_spec();
    let ln2 = 2f64.ln();
    for m in [-3.0, 0.0, 0.7, 12.0] {
        assert!((a_l(&s, m, 0).unwrap() - Complex64::new(ln2, 0.0)).norm() < 1e-15);
        assert!((a_l(&s, m, 1).unwrap() - Complex64::new(ln2, 2.0 * PI)).norm() < 1e-14);
        let q = s.q.eval_im(m);
        let rd = s.r_d.eval_im(m);
        assert!((q - a_l(&s, m, 0).unwrap().exp() * rd).norm() <= 1e-13 * q.norm());
    }
}

#[test]
fn tau_0_is_the_positive_root_of_h() {
    let s = desk_spec();
    let tau0 = tau_l(&s, 0.0, 0).unwrap();
    assert!(tau0.im.abs() < 1e-15);
    assert!((tau0.re - (2f64.ln() / 0.75).powf(4.0 / 3.0)).abs() < 1e-14);
    // Bisection on H(r, 0) along the positive axis.
    let f = |r: f64| h_value(&s, Complex64::new(r, 0.0), 0.0).unwrap().re;
    let (mut lo, mut hi) = (0.5, 1.5);
    assert!(f(lo) * f(hi) < 0.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if f(lo) * f(mid) <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    assert!((lo - tau0.re).abs() < 1e-12);
    assert!((tau0.re - 0.900).abs() < 5e-4);
}

#[test]
fn h_vanishes_at_singularities_and_tends_to_q_minus_rd() {
    let s = desk_spec();
    for m in [-2.0, 0.0, 1.5] {
        for l in -2..=2 {
            let t = tau_l(&s, m, l).unwrap();
            if t.im == 0.0 && t.re < 0.0 {
                continue;
            }
            assert!(h_value(&s, t, m).unwrap().norm() <= 1e-12 * s.q.eval_im(m).norm(), "l={l}");
        }
        let small = h_value(&s, Complex64::new(1e-300, 0.0), m).unwrap();
        assert!((small - (s.q.eval_im(m) - s.r_d.eval_im(m))).norm() < 1e-14);
    }
}

#[test]
fn forbidden_set_is_degenerate_at_zero_for_l0() {
    let s = desk_spec();
    let f = forbidden_directions(&s, &m_grid(), 0..=1, 0.0).unwrap();
    assert_eq!(f[0].lo, 0.0);
    assert_eq!(f[0].hi, 0.0);
    assert!(f[0].blocking);
    let want = (2.0 * PI).atan2(2f64.ln()) / 0.75;
    assert!((f[1].lo - want).abs() < 1e-14 && (f[1].hi - want).abs() < 1e-14);
    assert!(want > PI / 2.0 && !f[1].blocking);
    assert!(forbidden_directions(&s, &m_grid(), std::ops::RangeInclusive::new(1, 0), 0.05).unwrap().is_empty());
}

#[test]
fn desk_covering_avoids_zero_on_both_sides() {
    let s = desk_spec();
    let cov = plan_covering(&s, &m_grid(), &CoveringOptions::default()).unwrap();
    assert!(cov.passed(), "{:?}", cov.checks);
    assert_eq!(cov.directions.len(), 3);
    let signs: Vec<bool> = cov.directions.iter().map(|d| *d > 0.0).collect();
    assert!(signs.contains(&true) && signs.contains(&false));
    for d in &cov.directions {
        assert!(d.abs() > 0.05 && d.abs() < PI / 2.0);
    }
}

#[test]
fn oversized_rho_is_reduced_with_a_warning() {
    let s = desk_spec();
    let tau0 = tau_l(&s, 0.0, 0).unwrap().norm();
    let opts = CoveringOptions { rho: 2.0 * tau0, ..CoveringOptions::default() };
    let cov = plan_covering(&s, &m_grid(), &opts).unwrap();
    assert!(cov.rho < tau0);
    assert!(!cov.warnings.is_empty());
}

#[test]
fn cut_disc_minimum_matches_closed_form() {
    // With Q = c R_D, |H|/|Q| = |1 - e^{k τ^k}/c|, smallest at τ = ρ on the positive axis.
    let mut s = desk_spec();
    let (k, rho) = (s.k, 0.2f64);
    let eta = cut_disc_eta(&s, rho, &m_grid(), 40, 181);
    assert!((eta - (1.0 - (k * rho.powf(k)).exp() / 2.0)).abs() < 1e-12, "eta = {eta}");
    assert!(eta < 0.5);
    s.q = borelk::problem::ComplexPolynomial::from_real(&[-4.0, 0.0, 4.0]).unwrap();
    let eta4 = cut_disc_eta(&s, rho, &m_grid(), 40, 181);
    assert!((eta4 - (1.0 - (k * rho.powf(k)).exp() / 4.0)).abs() < 1e-12);
    assert!(eta4 >= 0.5);
}

#[test]
fn h_bounds_positive_off_the_forbidden_set() {
    let s = desk_spec();
    let forb = forbidden_directions(&s, &m_grid(), -8..=8, 0.05).unwrap();
    let est = bounds_at_03();
    assert!(est.a_h > 0.0 && est.b_h > 0.0);
    assert!(est.margins.iter().all(|m| m.margin > 0.0), "{:?}", est.margins);
    assert!(estimate_h_bounds(&s, 0.0, 0.05, 0.5, &m_grid(), 1.0, &forb, &HBoundOptions::default()).is_err());
}

proptest! {
    #[test]
    fn q_equals_exp_a_l_times_r_d(m in -30.0f64..30.0, l in -5i32..=5, c in 1.2f64..5.0, shift in -0.9f64..0.9) {
        let mut s = desk_spec();
        s.q = borelk::problem::ComplexPolynomial::new(vec![
            Complex64::new(-c, shift), Complex64::new(0.3, 0.0), Complex64::new(c, -shift),
        ]).unwrap();
        let q = s.q.eval_im(m);
        let rd = s.r_d.eval_im(m);
        let a = a_l(&s, m, l).unwrap();
        prop_assert!((q - a.exp() * rd).norm() <= 1e-12 * q.norm());
        let tau = tau_l(&s, m, l).unwrap();
        let lhs = tau.powf(s.k) * (s.alpha_d * s.k);
        prop_assert!((lhs - a).norm() <= 1e-12 * a.norm());
    }

    #[test]
    fn covering_properties_hold(varsigma in 3usize..6, overlap in 0.05f64..0.3, rho in 0.2f64..0.8) {
        let s = desk_spec();
        let opts = CoveringOptions { varsigma, overlap, rho, clearance: 0.2, ..CoveringOptions::default() };
        let cov = match plan_covering(&s, &m_grid(), &opts) {
            Ok(c) => c,
            Err(_) => return Ok(()),
        };
        prop_assert!(cov.passed());
        for i in 0..720 {
            let a = -PI + PI * f64::from(i) / 360.0 + 1e-3;
            let n = cov.eps_sectors.iter().filter(|e| e.contains_arg(a)).count();
            prop_assert!((1..=2).contains(&n), "multiplicity {} at {}", n, a);
        }
        for p in 0..varsigma {
            let b = cov.overlap_direction(p);
            prop_assert!(cov.eps_sectors[p].contains_arg(b) && cov.eps_sectors[(p + 1) % varsigma].contains_arg(b));
            let e = &cov.eps_sectors[p];
            for i in 0..9 {
                let ea = e.direction + 0.49 * e.aperture * (f64::from(i) / 4.0 - 1.0);
                for j in 0..5 {
                    let ta = 0.49 * cov.time_sector.aperture * (f64::from(j) / 2.0 - 1.0);
                    prop_assert!(wrap(ea + ta - cov.directions[p]).abs() < 0.5 * cov.theta);
                }
            }
        }
    }

    #[test]
    fn h_bound_holds_between_samples(r in 0.0f64..25.0, frac in -1.0f64..1.0, m in -10.0f64..10.0) {
        let s = desk_spec();
        let est = bounds_at_03();
        let g = 0.3 + 0.05 * frac;
        let h = h_polar(&s, r, g, m).norm();
        let bound = est.a_h * s.q.eval_im(m).norm() * (est.b_h * s.alpha_d * r.powf(s.k)).exp();
        // Off-sample points may dip slightly below the sampled minimum.
        prop_assert!(h >= 0.95 * bound, "|H| {} bound {}", h, bound);
    }
}
