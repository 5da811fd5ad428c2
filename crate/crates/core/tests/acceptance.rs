//! Acceptance criteria 1-11 on the desk problem, one line per criterion.
//!
//! Closed forms and reference constants are computed here, not taken from the
//! library: Beta values from the finite product for integer second argument,
//! Gamma values at `n/k` tabulated to 20 digits, Tahara coefficients from a
//! dense linear solve, Gaussian Fourier pairs in closed form, and the flatness
//! fits from a separate least-squares routine.

use std::path::PathBuf;
use std::time::Instant;

use borelk::analysis::{difference_paths, fit_with_scan, gevrey_fit, SweepGrid, SweepRow};
use borelk::cli::{Pipeline, RunConfig};
use borelk::convolution::{c_k, exp_neg_kappa_ck, kernel_matrix, kernel_on_mesh_exact, KernelParams, QuadOptions};
use borelk::problem::tahara_coefficients;
use borelk::solver::residual;
use borelk::transforms::{convolve_extended, fourier_inverse, laplace_k, BorelGrid, LaplaceOptions, MLine};
use borelk::Complex64;
use nalgebra::{DMatrix, DVector};

const K: f64 = 0.75;

/// `Γ(n/k)` for `k = 3/4`, `n = 1..5`.
const GAMMA_N_OVER_K: [f64; 5] =
    [0.892_979_511_569_249_2, 1.504_575_488_251_556, 6.0, 40.128_955_828_544_04, 389.034_926_246_180_1];
/// `Γ(1/k - 1) = Γ(1/3)`.
const GAMMA_ONE_THIRD: f64 = 2.678_938_534_707_747_6;

struct Outcome {
    id: u8,
    passed: bool,
    measured: String,
    detail: String,
    secs: f64,
}

fn run(id: u8, f: impl FnOnce() -> (bool, String, String)) -> Outcome {
    let t = Instant::now();
    let (passed, measured, detail) = f();
    Outcome { id, passed, measured, detail, secs: t.elapsed().as_secs_f64() }
}

fn rel(a: Complex64, b: Complex64) -> f64 {
    (a - b).norm() / b.norm()
}

/// `B(a, n) = (n-1)! / (a (a+1) ... (a+n-1))`.
fn beta_int(a: f64, n: u32) -> f64 {
    let num: f64 = (1..n).map(f64::from).product();
    let den: f64 = (0..n).map(|j| a + f64::from(j)).product();
    num / den
}

fn polar(r: f64, g: f64, a: f64) -> Complex64 {
    if r == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    Complex64::from_polar(r.powf(a), g * a)
}

fn lin_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    let icpt = my - slope * mx;
    let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - icpt - slope * a).powi(2)).sum();
    let ss_tot: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    (icpt, slope, 1.0 - ss_res / ss_tot)
}

fn desk_pipeline() -> Pipeline {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs/desk_run.toml");
    let cfg = RunConfig::load(&path).expect("desk config loads");
    Pipeline::new(cfg).expect("desk pipeline builds")
}

fn beta_oracle(w: &BorelGrid, quad: &QuadOptions) -> (bool, String, String) {
    let mesh = &w.mesh;
    let g = w.gamma;
    let pairs = [(1.0 / K - 2.0, 0u32), (2.0, 0), (0.5, 1)];
    let (mut exact_err, mut grid_err): (f64, f64) = (0.0, 0.0);
    for (g2, g3) in pairs {
        let params = KernelParams::new(g2, f64::from(g3), K).unwrap();
        let mat = kernel_matrix(mesh, g, &params, quad);
        for a in 0..3u32 {
            let b = beta_int(g2 + 1.0, g3 + a + 1);
            let expo = K * (g2 + f64::from(g3) + f64::from(a) + 2.0);
            let exact: Vec<Complex64> = mesh.nodes().iter().map(|&r| b * polar(r, g, expo)).collect();
            let sampled = kernel_on_mesh_exact(
                mesh,
                g,
                |t| if t.norm() == 0.0 { t } else { t.powf(K * f64::from(a)) },
                &params,
                quad,
            );
            let f: Vec<Complex64> = mesh.nodes().iter().map(|&r| polar(r, g, K * f64::from(a))).collect();
            for (i, ex) in exact.iter().enumerate() {
                if ex.norm() > 0.0 {
                    exact_err = exact_err.max(rel(sampled[i], *ex));
                }
                let via_grid: Complex64 = (0..mesh.len()).map(|j| mat.at(i, j) * f[j]).sum();
                let p = i / mesh.order();
                let scale =
                    exact[p * mesh.order()..(p + 1) * mesh.order()].iter().map(|v| v.norm()).fold(0.0, f64::max);
                grid_err = grid_err.max((via_grid - ex).norm() / scale);
            }
        }
    }
    (
        exact_err <= 1e-8 && grid_err <= 1e-8,
        format!("{exact_err:.2e} / {grid_err:.2e}"),
        format!("{} nodes, 3 kernels x 3 powers; exact samples / through the grid", mesh.len()),
    )
}

fn laplace_monomials() -> (bool, String, String) {
    let opts = LaplaceOptions::default();
    let mut worst: f64 = 0.0;
    for j in 0..10 {
        let t = Complex64::from_polar(0.1 + 0.2 * f64::from(j), -1.2 + 2.4 * f64::from(j) / 9.0);
        for n in 1..=5i32 {
            let v =
                laplace_k(|r| Complex64::new(r.powi(n) / GAMMA_N_OVER_K[n as usize - 1], 0.0), 0.0, K, t, None, &opts)
                    .expect("admissible T");
            worst = worst.max(rel(v.value, t.powi(n)));
        }
    }
    (worst <= 1e-6, format!("{worst:.2e}"), "n = 1..5, 10 values of T".into())
}

/// `falling(a, δ) = rising_k(a, δ) + Σ_p A_p rising_k(a, p)` solved on `δ-1` exponents.
fn tahara_oracle(delta: usize, exps: &[f64]) -> Vec<f64> {
    let falling = |a: f64, n: usize| (0..n).map(|j| a - j as f64).product::<f64>();
    let rising = |a: f64, n: usize| (0..n).map(|j| a + j as f64 * K).product::<f64>();
    let n = delta - 1;
    let m = DMatrix::from_fn(n, n, |i, p| rising(exps[i], p + 1));
    let rhs = DVector::from_fn(n, |i, _| falling(exps[i], delta) - rising(exps[i], delta));
    m.lu().solve(&rhs).expect("distinct exponents").iter().copied().collect()
}

fn tahara() -> (bool, String, String) {
    let a21 = tahara_coefficients(2, K)[0];
    let exact = a21 == -(K + 1.0);
    let mut worst: f64 = 0.0;
    let falling = |a: f64, n: usize| (0..n).map(|j| a - j as f64).product::<f64>();
    let rising = |a: f64, n: usize| (0..n).map(|j| a + j as f64 * K).product::<f64>();
    for delta in 2..=4usize {
        let lib = tahara_coefficients(delta as u32, K);
        let oracle = tahara_oracle(delta, &[1.3, 2.9, 4.7]);
        for (a, b) in lib.iter().zip(&oracle) {
            worst = worst.max((a - b).abs() / b.abs().max(1.0));
        }
        for a in [1.0, 2.2, 3.75, 6.1, 9.4] {
            let rhs = rising(a, delta) + lib.iter().enumerate().map(|(p, c)| c * rising(a, p + 1)).sum::<f64>();
            worst = worst.max((falling(a, delta) - rhs).abs() / falling(a, delta).abs());
        }
    }
    (
        exact && worst <= 1e-10,
        format!("{worst:.2e}"),
        format!("A_(2,1) = {a21} (exact: {exact}), delta <= 4 against the linear-solve oracle"),
    )
}

fn fourier(w: &BorelGrid) -> (bool, String, String) {
    let (g, beta, mu) = (w.mgrid, w.meta.beta, w.meta.mu);
    let gauss = MLine::from_fn(g, |m| Complex64::new((-0.5 * m * m).exp(), 0.0));
    let prof_fn = |m: f64| (1.0 + m.abs()).powf(-mu) * (-beta * m.abs()).exp();
    let profile = MLine::from_fn(g, |m| Complex64::new(prof_fn(m), 0.0));
    let im_profile = MLine::from_fn(g, |m| Complex64::new(0.0, m * prof_fn(m)));
    let inv = |f: &MLine, z: Complex64| fourier_inverse(f, z, beta, mu, 1.0).unwrap().value;
    let s = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    let conv_g = convolve_extended(&gauss, &gauss).scaled(Complex64::new(s, 0.0));
    let conv_p = convolve_extended(&profile, &profile).scaled(Complex64::new(s, 0.0));
    let mut worst: f64 = 0.0;
    let h = 1e-3;
    for z in [Complex64::new(0.0, 0.0), Complex64::new(0.4, 0.1), Complex64::new(-1.1, 0.0), Complex64::new(1.7, -0.2)]
    {
        // Closed forms: F^{-1}(e^{-m^2/2}) = e^{-z^2/2}, and its Gaussian self-convolution gives e^{-z^2}.
        worst = worst.max((inv(&conv_g, z) - (-z * z).exp()).norm() / (-z * z).exp().norm());
        // The transform of the even profile is flat at 0, so the derivative is compared away from it.
        if z.re != 0.0 {
            let central = (inv(&profile, z + h) - inv(&profile, z - h)) / (2.0 * h);
            worst = worst.max(rel(inv(&im_profile, z), central));
        }
        let pz = inv(&profile, z);
        worst = worst.max(rel(inv(&conv_p, z), pz * pz));
    }
    (worst <= 1e-5, format!("{worst:.2e}"), format!("{} m-nodes, derivative and convolution", g.n))
}

fn contraction(pl: &Pipeline) -> (bool, String, String) {
    let rep = &pl.report;
    let mut max_ratio: f64 = 0.0;
    let mut max_iter = 0;
    let mut ok = !rep.solves.is_empty() && pl.cfg.solver.tol <= 1e-10;
    let mut slowest: f64 = 0.0;
    for s in &rep.solves {
        let ledger_ok = rep.rays.iter().any(|r| r.sector == s.sector && r.ledger.passed);
        let d = &s.trace.diffs;
        let ratios: Vec<f64> = d.windows(2).filter(|w| w[0] > 0.0).map(|w| w[1] / w[0]).collect();
        max_ratio = ratios.iter().copied().fold(max_ratio, f64::max);
        max_iter = max_iter.max(d.len());
        slowest = slowest.max(s.trace.wall_ms.iter().sum::<f64>() / 1e3);
        ok &= ledger_ok && s.trace.converged && d.last().is_some_and(|&x| x <= pl.cfg.solver.tol);
    }
    ok &= max_iter <= 40 && max_ratio <= 0.6 && slowest < 120.0;
    (
        ok,
        format!("{max_ratio:.3}"),
        format!("{} solves, max {max_iter} iterations, slowest {slowest:.1}s", rep.solves.len()),
    )
}

fn residuals(solved: &[(usize, Complex64, BorelGrid)], pl: &Pipeline) -> (bool, String, String) {
    let n_psi = pl.cfg.solver.n_psi.unwrap_or(0);
    let n = solved.len();
    let ends: Vec<_> = solved.iter().take(2).chain(solved.iter().skip(n.saturating_sub(2))).collect();
    let worst = ends
        .iter()
        .map(|(_, eps, w)| residual(w, &pl.spec, *eps, n_psi, &pl.cfg.solver).expect("residual evaluates"))
        .fold(0.0, f64::max);
    (worst <= 1e-6, format!("{worst:.2e}"), format!("{} solutions at the smallest and largest |eps|", ends.len()))
}

fn ball(solved: &[(usize, Complex64, BorelGrid)], pl: &Pipeline) -> (bool, String, String) {
    let mut worst: f64 = 0.0;
    let mut ok = !solved.is_empty();
    for (p, _, w) in solved {
        let ray = pl.report.rays.iter().find(|r| r.sector == *p).expect("ray report");
        match ray.ledger.varpi {
            Some(v) => worst = worst.max(w.norm_f() / v),
            None => ok = false,
        }
    }
    (ok && worst <= 1.0, format!("{worst:.3}"), "max norm_F(w)/varpi".into())
}

fn paths(pl: &mut Pipeline, eps_list: &[Complex64]) -> (bool, String, String) {
    let cov = pl.geometry().unwrap().clone();
    let p = pl.cfg.sweep.pair % cov.varsigma;
    let q = (p + 1) % cov.varsigma;
    let sw = pl.cfg.sweep.clone();
    let sigma = pl.report.sigma_prime.expect("sweep ran");
    let grid = SweepGrid::new(sigma, sw.n_t, sw.z_re[0], sw.z_re[1], sw.n_re, &[0.0, 0.5 * sw.beta_prime]);
    let mut lopts = pl.cfg.laplace.clone();
    lopts.delta1 = lopts.delta1.min(0.5 * pl.report.delta1.unwrap());
    let mut worst: f64 = f64::NEG_INFINITY;
    let mut count = 0;
    for &eps in eps_list {
        let w_p = pl.solve(p, eps).unwrap();
        let w_q = pl.solve(q, eps).unwrap();
        let arc = pl.arc(eps).unwrap();
        for &t in &grid.ts {
            let d = difference_paths(&w_p, &w_q, &arc, eps * t, &grid.zs, &lopts, sw.arc_nodes).unwrap();
            for j in 0..grid.zs.len() {
                let c = |v: [f64; 2]| Complex64::new(v[0], v[1]);
                let sum = c(d.i1[j]) + c(d.i2[j]) + c(d.i3[j]);
                let direct = c(d.direct[j]);
                worst = worst.max((sum - direct).norm() - (1e-6 * direct.norm() + 1e-12));
                count += 1;
            }
        }
    }
    (
        count == eps_list.len() * 64 && worst <= 0.0,
        format!("{worst:.2e}"),
        format!("{count} points; excess over 1e-6 |direct| + 1e-12"),
    )
}

fn flat_points(rows: &[SweepRow]) -> (Vec<f64>, Vec<f64>) {
    rows.iter().filter(|r| r.error.is_none() && r.above_noise).map(|r| (r.eps_abs, r.supdiff.ln())).unzip()
}

fn flatness(rows: &[SweepRow]) -> (bool, String, String) {
    let (e, y) = flat_points(rows);
    let x: Vec<f64> = e.iter().map(|v| v.powf(-K)).collect();
    let (icpt, slope, r2) = lin_fit(&x, &y);
    let m_p = -slope;
    let lo = rows.iter().map(|r| r.eps_abs).fold(f64::INFINITY, f64::min);
    let hi = rows.iter().map(|r| r.eps_abs).fold(0.0, f64::max);
    let full = rows.len() == 10 && rows.iter().all(|r| r.error.is_none()) && lo >= 0.01 - 1e-15 && hi <= 0.1 + 1e-15;
    (
        full && r2 >= 0.99 && m_p > 0.0,
        format!("R^2 {r2:.6}"),
        format!("{} rows above noise, M_p {m_p:.4}, K_p {:.4e}", x.len(), icpt.exp()),
    )
}

/// `κ` maximizing the R^2 of `log y` against `|ε|^{-κ}` on a 0.0005 grid.
fn scan_kappa(e: &[f64], y: &[f64]) -> f64 {
    (0..=1000)
        .map(|i| 0.5 + 0.0005 * f64::from(i))
        .map(|kap| {
            let x: Vec<f64> = e.iter().map(|v| v.powf(-kap)).collect();
            (kap, lin_fit(&x, y).2)
        })
        .fold((0.0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a })
        .0
}

fn order(rows: &[SweepRow]) -> (bool, String, String) {
    let fit = gevrey_fit(rows, K, (0.5, 1.0)).expect("desk fit");
    let (e, y) = flat_points(rows);
    let own = scan_kappa(&e, &y);
    let eps: Vec<f64> = (0..10).map(|i| 0.01 * 10f64.powf(f64::from(i) / 9.0)).collect();
    let ys: Vec<f64> = eps.iter().map(|v| 5.0 - 2.0 / v.powf(0.75)).collect();
    let syn = fit_with_scan(&eps, &ys, K, (0.5, 1.0)).expect("synthetic fit");
    let syn_ok = (syn.kappa_hat - 0.75).abs() < 5e-4
        && (syn.k_p / 5f64.exp() - 1.0).abs() < 1e-3
        && (syn.m_p / 2.0 - 1.0).abs() < 1e-3;
    let desk_ok = (fit.kappa_hat - K).abs() <= 0.1 && (own - K).abs() <= 0.1 && (fit.kappa_hat - own).abs() <= 0.01;
    (
        syn_ok && desk_ok,
        format!("{:.4}", fit.kappa_hat),
        format!("own scan {own:.4}; synthetic kappa {:.6}, K {:.4}, M {:.5}", syn.kappa_hat, syn.k_p, syn.m_p),
    )
}

fn envelope(w: &BorelGrid, pl: &Pipeline, sector: usize) -> (bool, String, String) {
    let meta = w.meta;
    let kappa = pl.spec.levels[0].kappa;
    let k1 = pl.report.rays.iter().find(|r| r.sector == sector).expect("ray").h_bounds.k1;
    let prof = |m: f64| (1.0 + m.abs()).powf(-meta.mu) * (-meta.beta * m.abs()).exp();
    let f = BorelGrid::from_fn(w.gamma, w.mesh.clone(), w.mgrid, meta, w.eps, |tau, m| {
        if tau.norm() == 0.0 {
            return tau;
        }
        let tk = tau.powf(K);
        tk * (meta.nu * tk).exp() * prof(m)
    });
    let opts = &pl.cfg.solver;
    let out = exp_neg_kappa_ck(&f, kappa, opts.exp_tol, opts.p_max, &opts.quad).expect("series converges").value;

    // Same series summed term by term through c_k.
    let mut term = f.clone();
    let mut sum = f.clone();
    for p in 1..=opts.p_max {
        term = c_k(&term, &opts.quad).unwrap().scaled(Complex64::new(-kappa / p as f64, 0.0));
        sum = sum.add(&term);
        if term.max_abs() <= 1e-16 * sum.max_abs() {
            break;
        }
    }
    let series_gap = out.sub(&sum).max_abs() / sum.max_abs();

    let radii = w.mesh.nodes();
    let ms = w.mgrid.nodes();
    let nm = ms.len();
    let env = |i: usize| {
        let rk = radii[i / nm].powf(K);
        rk * (meta.nu * rk).exp() * prof(ms[i % nm])
    };
    let c2 =
        f.values.iter().enumerate().filter(|(i, _)| env(*i) > 0.0).map(|(i, v)| v.norm() / env(i)).fold(0.0, f64::max);
    let growth = kappa * k1 * K / GAMMA_ONE_THIRD;
    let worst = out
        .values
        .iter()
        .enumerate()
        .filter(|(i, _)| env(*i) > 0.0)
        .map(|(i, v)| v.norm() / (c2 * env(i) * (growth * radii[i / nm].powf(K)).exp()))
        .fold(0.0, f64::max);
    (
        k1 > 0.0 && worst <= 1.0 && series_gap <= 1e-10,
        format!("{worst:.6}"),
        format!("K1 {k1:.4}, C2 {c2:.4}, gap to the term-by-term series {series_gap:.1e}"),
    )
}

#[test]
fn acceptance_criteria() {
    let t0 = Instant::now();
    let mut pl = desk_pipeline();
    pl.validate().expect("desk problem validates");
    pl.geometry().expect("desk covering");
    for p in pl.needed_sectors().unwrap() {
        pl.ledger(p).expect("ledger");
    }
    let eps_list = pl.sweep_eps().unwrap();
    let sweep = pl.flatness().expect("sweep").to_vec();
    let setup = t0.elapsed().as_secs_f64();

    let cov = pl.geometry().unwrap().clone();
    let p = pl.cfg.sweep.pair % cov.varsigma;
    let q = (p + 1) % cov.varsigma;
    let mut solved = Vec::new();
    for &eps in &eps_list {
        for s in [p, q] {
            solved.push((s, eps, pl.solve(s, eps).unwrap()));
        }
    }
    let w0 = solved[0].2.clone();

    let mut out = vec![
        run(1, || beta_oracle(&w0, &pl.cfg.solver.quad)),
        run(2, laplace_monomials),
        run(3, tahara),
        run(4, || fourier(&w0)),
        run(5, || contraction(&pl)),
        run(6, || residuals(&solved, &pl)),
        run(7, || ball(&solved, &pl)),
    ];
    out.push(run(8, || paths(&mut pl, &eps_list)));
    out.push(run(9, || flatness(&sweep)));
    out.push(run(10, || order(&sweep)));
    out.push(run(11, || envelope(&w0, &pl, p)));

    let limits = [5.0, 5.0, 1.0, 5.0, f64::INFINITY, 60.0, f64::INFINITY, f64::INFINITY, f64::INFINITY, 60.0, 60.0];
    println!("desk run setup (solves, ledgers, sweep): {setup:.1}s");
    for o in &mut out {
        let limit = limits[o.id as usize - 1];
        if o.secs >= limit {
            o.passed = false;
            o.detail.push_str(&format!("; over the {limit}s budget"));
        }
        println!(
            "criterion {:>2}: {} | {} | {:.2}s | {}",
            o.id,
            if o.passed { "PASS" } else { "FAIL" },
            o.measured,
            o.secs,
            o.detail
        );
    }
    let mut above: Vec<(f64, f64)> =
        sweep.iter().filter(|r| r.error.is_none() && r.above_noise).map(|r| (r.eps_abs, r.supdiff)).collect();
    above.sort_by(|a, b| a.0.total_cmp(&b.0));
    let monotone = above.windows(2).all(|w| w[0].1 < w[1].1);
    println!("sup-differences above the noise floor strictly decrease as |eps| shrinks: {monotone}");
    let sweep_secs = pl.timings.values().sum::<f64>();
    println!("sweep wall time {sweep_secs:.1}s (budget 1800s)");
    let failed: Vec<u8> = out.iter().filter(|o| !o.passed).map(|o| o.id).collect();
    assert!(sweep_secs < 1800.0, "sweep exceeded its time budget");
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
    assert!(monotone, "{above:?}");
}
