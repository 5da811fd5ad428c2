mod common;

use borelk::analysis::{
    asymptotic_coefficients, difference_paths, direct_differences, fit_with_scan, fourier_sum, gevrey_fit,
    laplace_line, linear_fit, lobatto_angles, reconstruct_u, ArcData, SweepRow,
};
use borelk::checks;
use borelk::geometry::CoveringData;
use borelk::transforms::{BorelGrid, LaplaceOptions};
use borelk::Complex64;
use common::*;
use proptest::prelude::*;

/// `Γ(4/3)`.
const GAMMA_4_3: f64 = 0.892_979_511_569_249_2;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn prof(m: f64) -> f64 {
    (1.0 + m.abs()).powf(-2.5) * (-m.abs()).exp()
}

fn u_of(w: &BorelGrid, cov: &CoveringData, p: usize, t: Complex64, z: Complex64, eps: Complex64) -> Complex64 {
    let v = reconstruct_u(w, cov, p, t, z, eps, 0.5, &LaplaceOptions::default()).unwrap().value;
    c(v[0], v[1])
}

/// Composite Simpson rule on `[a, b]` with `n` (even) intervals.
fn simpson(f: impl Fn(f64) -> Complex64, a: f64, b: f64, n: usize) -> Complex64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + h * i as f64) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * (h / 3.0)
}

/// The affine solution `c_f F_1(m) τ / (Γ(4/3) H(τ, m))` separates into
/// `-(m²+1)^{-1} F_1(m)` and `τ / (2 - e^{k τ^k})`, so `u` is a product of
/// an m-sum and a one-dimensional integral, computed here in `v = r^{1/4}`.
fn affine_oracle(gamma: f64, t: Complex64, z: Complex64, eps: Complex64, mgrid: &borelk::mesh::MGrid) -> Complex64 {
    let k = 0.75;
    let cf = 0.1;
    let tt = eps * t;
    let radial = simpson(
        |v| {
            if v == 0.0 {
                return c(0.0, 0.0);
            }
            let tau = Complex64::from_polar(v.powi(4), gamma);
            let g = tau / (2.0 - (tau.powf(k) * k).exp());
            g / v * (-(tau / tt).powf(k)).exp() * 3.0
        },
        0.0,
        3.0,
        60_000,
    );
    let s = mgrid.dm() / (2.0 * std::f64::consts::PI).sqrt();
    let msum: Complex64 =
        mgrid.nodes().iter().map(|&m| (c(0.0, 1.0) * z * m).exp() * (-prof(m) / (m * m + 1.0))).sum::<Complex64>() * s;
    radial * msum * (cf / GAMMA_4_3)
}

#[test]
fn affine_reconstruction_matches_separable_oracle() {
    let mut pl = small_pipeline(affine_spec());
    let cov = pl.geometry().unwrap().clone();
    let p = 0;
    let gamma = cov.directions[p];
    let eps = Complex64::from_polar(0.05, gamma);
    let w = pl.solve(p, eps).unwrap();
    for (t, z) in [(c(0.5, 0.0), c(0.0, 0.0)), (c(0.3, 0.0), c(0.7, 0.0)), (c(0.8, 0.0), c(-1.0, 0.3))] {
        let got = u_of(&w, &cov, p, t, z, eps);
        let want = affine_oracle(gamma, t, z, eps, &w.mgrid);
        assert!(rel(got, want) <= 1e-5, "t={t} z={z}: {got} vs {want}");
    }
}

#[test]
fn reconstruction_is_linear_in_the_forcing_constant() {
    let mut a = small_pipeline(affine_spec());
    let mut spec = affine_spec();
    spec.cf = [0.3, -0.2];
    let mut b = small_pipeline(spec);
    let cov = a.geometry().unwrap().clone();
    b.geometry().unwrap();
    let eps = Complex64::from_polar(0.04, cov.directions[1]);
    let ua = u_of(&a.solve(1, eps).unwrap(), &cov, 1, c(0.5, 0.0), c(0.2, 0.1), eps);
    let ub = u_of(&b.solve(1, eps).unwrap(), &cov, 1, c(0.5, 0.0), c(0.2, 0.1), eps);
    assert!(rel(ub, ua * c(3.0, -2.0)) <= 1e-12);
}

#[test]
fn solution_vanishes_at_small_times() {
    let mut pl = small_pipeline(desk_spec());
    let cov = pl.geometry().unwrap().clone();
    let eps = Complex64::from_polar(0.05, cov.directions[0]);
    let w = pl.solve(0, eps).unwrap();
    let z = c(0.3, 0.0);
    let big = [0.25, 0.5, 0.75].iter().map(|&t| u_of(&w, &cov, 0, c(t, 0.0), z, eps).norm()).fold(0.0, f64::max);
    assert!(big > 0.0);
    assert!(u_of(&w, &cov, 0, c(1e-3, 0.0), z, eps).norm() <= 1e-2 * big);
    assert_eq!(u_of(&w.zeros_like(), &cov, 0, c(0.5, 0.0), z, eps), c(0.0, 0.0));
}

#[test]
fn equal_rays_give_zero_paths() {
    let w = sample_grid(0.2, 0.4, 0.3);
    let arc = ArcData::from_rays(0.25, &[(0.2, w.clone()), (0.2, w.clone())]).unwrap();
    let zs = [c(0.0, 0.0), c(1.0, 0.2)];
    let d = difference_paths(&w, &w, &arc, c(0.03, 0.0), &zs, &LaplaceOptions::default(), 16).unwrap();
    for j in 0..zs.len() {
        assert_eq!(d.direct[j], [0.0, 0.0]);
        assert_eq!(d.i3[j], [0.0, 0.0]);
        assert_eq!([d.i1[j][0] + d.i2[j][0], d.i1[j][1] + d.i2[j][1]], [0.0, 0.0]);
    }
    assert!(d.worst_excess <= 0.0);
}

#[test]
fn entire_function_paths_are_consistent() {
    // τ e^{-τ} g(m) is entire in τ, so the arc closes the contour between rays.
    let f = |tau: Complex64, m: f64| tau * (-tau).exp() * prof(m);
    let grid = |g: f64| BorelGrid::from_fn(g, small_mesh(), small_mgrid(), meta(), c(0.04, 0.0), f);
    let (g0, g1) = (-0.4, 0.3);
    let rays: Vec<(f64, BorelGrid)> = lobatto_angles(g0, g1, 9).into_iter().map(|a| (a, grid(a))).collect();
    let arc = ArcData::from_rays(0.25, &rays).unwrap();
    let zs = [c(0.0, 0.0), c(0.8, 0.2), c(-1.5, -0.3)];
    let d = difference_paths(&grid(g0), &grid(g1), &arc, c(0.03, 0.0), &zs, &LaplaceOptions::default(), 16).unwrap();
    let size = |v: &[[f64; 2]]| v.iter().map(|x| x[0].hypot(x[1])).fold(0.0, f64::max);
    // Both rays give the same u, so the direct difference and the mismatch are
    // measured against the size of the pieces, at the accuracy of the small mesh.
    let scale = size(&d.i1).max(size(&d.i3));
    assert!(scale > 0.0);
    assert!(size(&d.direct) <= 1e-5 * scale);
    assert!(d.max_mismatch <= 1e-5 * scale);
}

#[test]
fn outer_ray_piece_decays_exponentially_in_rho_over_eps() {
    let gamma = 0.3;
    let w = BorelGrid::from_fn(gamma, small_mesh(), small_mgrid(), meta(), c(0.04, 0.0), |tau, m| {
        tau * (-tau).exp() * prof(m)
    });
    let half_rho: f64 = 0.25;
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for j in 0..10 {
        let e = 0.01 + 0.01 * f64::from(j);
        let t = Complex64::from_polar(e, gamma);
        let line = laplace_line(&w, t, half_rho, f64::INFINITY, &LaplaceOptions::default()).unwrap();
        let i1 = fourier_sum(&line.values, &w.mgrid, &[c(0.2, 0.0)])[0];
        x.push((half_rho / e).powf(0.75));
        y.push(i1.norm().ln());
    }
    let (_, slope, r2) = linear_fit(&x, &y);
    assert!(slope < 0.0, "slope {slope}");
    assert!(r2 >= 0.99, "R^2 {r2}");
}

#[test]
fn same_side_affine_rays_agree_to_the_noise_floor() {
    let spec = affine_spec();
    let opts = borelk::solver::SolverOptions::default();
    let solve = |g: f64| {
        let ops = ray(&spec, g);
        let st = ops.at_eps(&spec, c(0.05, 0.0), &opts).unwrap();
        borelk::solver::solve_fixed_point(&spec, &ops, &st, &opts).unwrap().0
    };
    let (wp, wq) = (solve(-0.5), solve(-1.5));
    let eps = Complex64::from_polar(0.05, -1.0);
    let ts = [c(0.3, 0.0), c(0.6, 0.0)];
    let zs = [c(0.0, 0.0), c(1.0, 0.2)];
    let lo = LaplaceOptions::default();
    let diff = direct_differences(&wp, &wq, eps, &ts, &zs, &lo).unwrap();
    let size: f64 = ts
        .iter()
        .map(|&t| {
            let line = laplace_line(&wp, eps * t, 0.0, f64::INFINITY, &lo).unwrap();
            fourier_sum(&line.values, &wp.mgrid, &zs).iter().map(|v| v.norm()).fold(0.0, f64::max)
        })
        .fold(0.0, f64::max);
    let worst = diff.iter().copied().fold(0.0, f64::max);
    assert!(size > 0.0);
    assert!(worst <= 1e-6 * size, "{worst:.3e} vs {size:.3e}");
}

#[test]
fn empty_inputs_give_empty_tables() {
    let w = sample_grid(0.2, 0.4, 0.3);
    let opts = LaplaceOptions::default();
    assert!(direct_differences(&w, &w, c(0.05, 0.0), &[], &[c(0.0, 0.0)], &opts).unwrap().is_empty());
    assert!(gevrey_fit(&[], 0.75, (0.5, 1.0)).is_err());
}

fn synthetic_rows(f: impl Fn(f64) -> f64) -> Vec<SweepRow> {
    (0..12)
        .map(|i| {
            let e = 0.03 + 0.09 * f64::from(i) / 11.0;
            SweepRow {
                eps_abs: e,
                eps_arg: 0.0,
                supdiff: f(e),
                noise_floor: 0.0,
                above_noise: true,
                path_mismatch: 0.0,
                path_excess: -1.0,
                error: None,
            }
        })
        .collect()
}

#[test]
fn synthetic_gevrey_data_is_recovered() {
    let rows = synthetic_rows(|e| (5.0 - 2.0 * e.powf(-0.75)).exp());
    let fit = gevrey_fit(&rows, 0.75, (0.5, 1.0)).unwrap();
    assert!((fit.k_p / 5f64.exp() - 1.0).abs() < 1e-9);
    assert!((fit.m_p - 2.0).abs() < 1e-10);
    assert!((fit.r2 - 1.0).abs() < 1e-12);
    assert!((fit.kappa_hat - 0.75).abs() < 5e-4);
    assert!(checks::flatness(Some(&fit), None, &rows).passed);
}

#[test]
fn constant_sweep_is_not_flat() {
    let rows = synthetic_rows(|_| 1e-3);
    let fit = gevrey_fit(&rows, 0.75, (0.5, 1.0)).unwrap();
    assert!(fit.m_p.abs() < 1e-12);
    assert!(!checks::flatness(Some(&fit), None, &rows).passed);
    assert!(!checks::flatness(None, Some("only 2 rows"), &rows).passed);
}

#[test]
fn asymptotic_coefficients_of_simple_families() {
    let eps: Vec<Complex64> = (0..8).map(|j| Complex64::from_polar(0.05, -1.0 + 0.25 * f64::from(j))).collect();
    let g = vec![c(1.0, 2.0), c(-0.5, 0.0), c(0.0, 3.0)];
    let constant: Vec<Vec<Complex64>> = eps.iter().map(|_| g.clone()).collect();
    let fit = asymptotic_coefficients(&eps, &constant, 3, 0.75, 2.0, 1e12).unwrap();
    for s in 0..g.len() {
        assert!((c(fit.coeffs[0][s][0], fit.coeffs[0][s][1]) - g[s]).norm() < 1e-12);
        assert!(c(fit.coeffs[1][s][0], fit.coeffs[1][s][1]).norm() < 1e-9);
    }
    assert!(!fit.aperture_ok);
    let linear: Vec<Vec<Complex64>> = eps.iter().map(|e| g.iter().map(|v| v * e).collect()).collect();
    let fit = asymptotic_coefficients(&eps, &linear, 3, 0.75, 2.0, 1e12).unwrap();
    for s in 0..g.len() {
        assert!(c(fit.coeffs[0][s][0], fit.coeffs[0][s][1]).norm() < 1e-13);
        assert!((c(fit.coeffs[1][s][0], fit.coeffs[1][s][1]) - g[s]).norm() < 1e-10);
    }
    assert!(asymptotic_coefficients(&eps[..5], &linear[..5], 3, 0.75, 2.0, 1e12).is_err());
}

proptest! {
    #[test]
    fn linear_fit_recovers_lines(a in -5.0f64..5.0, b in -5.0f64..5.0) {
        let x: Vec<f64> = (0..7).map(|i| f64::from(i) * 0.3 + 1.0).collect();
        let y: Vec<f64> = x.iter().map(|v| a + b * v).collect();
        let (fa, fb, r2) = linear_fit(&x, &y);
        prop_assert!((fa - a).abs() < 1e-10 && (fb - b).abs() < 1e-10);
        prop_assert!(b.abs() < 1e-8 || (r2 - 1.0).abs() < 1e-10);
    }

    #[test]
    fn fit_scan_peaks_at_the_true_order(kappa in 0.6f64..0.9, m in 0.5f64..3.0) {
        let e: Vec<f64> = (0..12).map(|i| 0.03 + 0.01 * f64::from(i)).collect();
        let y: Vec<f64> = e.iter().map(|v| 1.0 - m * v.powf(-kappa)).collect();
        let fit = fit_with_scan(&e, &y, 0.75, (0.5, 1.0)).unwrap();
        prop_assert!((fit.kappa_hat - kappa).abs() < 1e-3, "{} vs {}", fit.kappa_hat, kappa);
    }

    #[test]
    fn reconstruction_is_linear_in_w(a in -2.0f64..2.0, b in -2.0f64..2.0, x in -2.0f64..2.0, y in -0.4f64..0.4) {
        let cov = plan();
        let g = cov.directions[0];
        let w1 = sample_grid(g, 0.3, 0.2);
        let w2 = sample_grid(g, 1.7, -0.6);
        let eps = Complex64::from_polar(0.05, g);
        let (t, z) = (c(0.5, 0.0), c(x, y));
        let (ca, cb) = (c(a, 0.0), c(0.0, b));
        let lhs = u_of(&w1.scaled(ca).add(&w2.scaled(cb)), &cov, 0, t, z, eps);
        let rhs = u_of(&w1, &cov, 0, t, z, eps) * ca + u_of(&w2, &cov, 0, t, z, eps) * cb;
        let scale = u_of(&w1, &cov, 0, t, z, eps).norm() + u_of(&w2, &cov, 0, t, z, eps).norm();
        prop_assert!((lhs - rhs).norm() <= 1e-12 * scale * (a.abs() + b.abs() + 1.0));
    }
}

fn plan() -> CoveringData {
    use std::sync::OnceLock;
    static COV: OnceLock<CoveringData> = OnceLock::new();
    COV.get_or_init(|| small_pipeline(desk_spec()).geometry().unwrap().clone()).clone()
}
