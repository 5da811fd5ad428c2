//! Fixed-point solution of the Borel-plane convolution equation on one ray.
//!
//! The map is
//! `H_ε(w) = Σ_l ε^{Δ_l-d_l+δ_l} c_l R_l(im)/H · Σ_n A_{l,n}(ε) [lead + Tahara kernels](exp(-κ_l C_k) w)
//!         + c_12 N(w, w)/H + c_f ψ/H`
//! with `H(τ, m) = Q(im) - exp(α_D k τ^k) R_D(im)`.

use std::sync::Arc;
use std::time::Instant;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::convolution::{
    c_k_matrix, conv_power_kernel, exp_neg_kappa_ck, exp_neg_kappa_matrix, kernel_matrix, nonlinear_product,
    nonlinear_product_once, KernelParams, NonlinearRule, QuadOptions,
};
use crate::error::{Error, Result};
use crate::geometry::h_polar;
use crate::linalg::CMat;
use crate::mesh::{MGrid, RadialMesh};
use crate::problem::{d_lk, default_n_psi, forcing_psi, tahara_coefficients, ComplexPolynomial, ProblemSpec};
use crate::special::{gamma, polar_pow};
use crate::transforms::{m_weights, norm_f, radial_weights, BorelGrid, GridMeta};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const SQRT_2PI: f64 = 2.506_628_274_631_000_7;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub exp_tol: f64,
    pub p_max: usize,
    /// Nodes with `|H| < h_floor |Q(im)|` are rejected.
    pub h_floor: f64,
    pub quad: QuadOptions,
    /// Number of geometric forcing terms; `None` picks it from `psi_tail_tol`.
    pub n_psi: Option<usize>,
    pub psi_tail_tol: f64,
    /// Consecutive ratios above 1 that count as divergence.
    pub divergence_window: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 60,
            exp_tol: 1e-12,
            p_max: 60,
            h_floor: 1e-14,
            quad: QuadOptions::default(),
            n_psi: None,
            psi_tail_tol: 1e-12,
            divergence_window: 3,
        }
    }
}

/// One kernel of a level term, kept separately for the smallness ledger.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KernelNorm {
    pub n: u32,
    /// `None` for the leading kernel, `Some(p)` for a Tahara correction.
    pub p: Option<u32>,
    /// Scalar in front of the kernel (`k^δ/Γ(..)` or `A_{δ,p} k^p/Γ(..)`).
    pub scale: f64,
    /// Weighted operator norm of `R_l/H · K · exp(-κ C_k)` on the grid.
    pub norm: f64,
}

#[derive(Debug, Clone)]
struct LevelOps {
    exponent: i64,
    coeff: Complex64,
    /// `R_l(im_j)`.
    r_im: Vec<Complex64>,
    /// Fused `Σ_kernels scale · K · E_l` with its `A_{l,n}` per index `n`.
    fused: Vec<(ComplexPolynomial, CMat)>,
    norms: Vec<KernelNorm>,
    exp_terms: usize,
    exp_tail: f64,
}

/// Precomputed operators on one ray.
#[derive(Debug, Clone)]
pub struct RayOperators {
    pub template: BorelGrid,
    /// `H(τ_i, m_j)`, row-major like the grid.
    pub h: Vec<Complex64>,
    pub q_im: Vec<Complex64>,
    levels: Vec<LevelOps>,
    rule: NonlinearRule,
    pub c_matrix: CMat,
    pub n_psi: usize,
    pub build_ms: f64,
}

/// Series statistics of `exp(-κ_l C_k)` per level.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExpReport {
    pub l: usize,
    pub terms: usize,
    pub tail: f64,
}

impl RayOperators {
    pub fn new(
        spec: &ProblemSpec,
        gamma_dir: f64,
        mesh: Arc<RadialMesh>,
        mgrid: MGrid,
        meta: GridMeta,
        opts: &SolverOptions,
    ) -> Result<Self> {
        let t0 = Instant::now();
        let k = spec.k;
        let template = BorelGrid::zeros(gamma_dir, mesh.clone(), mgrid, meta, ZERO);
        let ms = mgrid.nodes();
        let nm = ms.len();
        let radii = mesh.nodes();
        let q_im: Vec<Complex64> = ms.iter().map(|&m| spec.q.eval_im(m)).collect();
        let mut h = Vec::with_capacity(radii.len() * nm);
        for &r in radii {
            for (j, &m) in ms.iter().enumerate() {
                let v = h_polar(spec, r, gamma_dir, m);
                if v.norm() < opts.h_floor * q_im[j].norm() {
                    return Err(Error::Numerical(format!(
                        "|H| = {:.3e} below floor at tau = {r:.4} e^(i {gamma_dir:.4}), m = {m:.4}",
                        v.norm()
                    )));
                }
                h.push(v);
            }
        }
        let c_matrix = c_k_matrix(&mesh, gamma_dir, k, &opts.quad)?;
        let wr = radial_weights(radii, k, meta.nu);
        let mut levels = Vec::with_capacity(spec.levels.len());
        for (idx, lv) in spec.levels.iter().enumerate() {
            let l = idx + 1;
            let dlk = d_lk(spec, l)?;
            let exp = exp_neg_kappa_matrix(&c_matrix, lv.kappa, opts.exp_tol, opts.p_max)?;
            let r_im: Vec<Complex64> = ms.iter().map(|&m| spec.r_levels[idx].eval_im(m)).collect();
            // sup_j |R_l(im_j)/H(τ_i, m_j)| per radial node.
            let rh: Vec<f64> = (0..radii.len())
                .map(|i| (0..nm).map(|j| (r_im[j] / h[i * nm + j]).norm()).fold(0.0, f64::max))
                .collect();
            let delta = lv.delta;
            let tahara = tahara_coefficients(delta, k);
            let mut fused = Vec::new();
            let mut norms = Vec::new();
            for (&n, a_poly) in lv.index_set().iter() {
                let base = (n as f64 + dlk) / k;
                let mut parts: Vec<(Option<u32>, f64, KernelParams)> = vec![(
                    None,
                    k.powi(delta as i32) / gamma(base),
                    KernelParams::new(base - 1.0, delta as f64 - 1.0, k)?,
                )];
                for (pi, &a) in tahara.iter().enumerate() {
                    let p = pi as u32 + 1;
                    let g2 = base + delta as f64 - p as f64 - 1.0;
                    parts.push((
                        Some(p),
                        a * k.powi(p as i32) / gamma(base + delta as f64 - p as f64),
                        KernelParams::new(g2, p as f64 - 1.0, k)?,
                    ));
                }
                let mut g = CMat::zeros(radii.len(), radii.len());
                for (p, scale, params) in parts {
                    let ke = kernel_matrix(&mesh, gamma_dir, &params, &opts.quad).matmul(&exp.value);
                    norms.push(KernelNorm { n, p, scale, norm: weighted_norm(&ke, &wr, &rh) });
                    g.axpy(Complex64::new(scale, 0.0), &ke);
                }
                fused.push(((*a_poly).clone(), g));
            }
            levels.push(LevelOps {
                exponent: lv.eps_exponent(),
                coeff: lv.coefficient(),
                r_im,
                fused,
                norms,
                exp_terms: exp.terms,
                exp_tail: exp.tail_estimate,
            });
        }
        let rule = NonlinearRule::new(&mesh, k, &opts.quad);
        let n_psi = opts.n_psi.unwrap_or_else(|| default_n_psi(spec, radii, meta.nu, opts.psi_tail_tol));
        Ok(Self { template, h, q_im, levels, rule, c_matrix, n_psi, build_ms: t0.elapsed().as_secs_f64() * 1e3 })
    }

    pub fn gamma(&self) -> f64 {
        self.template.gamma
    }

    pub fn exp_reports(&self) -> Vec<ExpReport> {
        self.levels
            .iter()
            .enumerate()
            .map(|(i, l)| ExpReport { l: i + 1, terms: l.exp_terms, tail: l.exp_tail })
            .collect()
    }

    pub fn kernel_norms(&self) -> Vec<Vec<KernelNorm>> {
        self.levels.iter().map(|l| l.norms.clone()).collect()
    }

    /// The ε-dependent parts of the map.
    pub fn at_eps(&self, spec: &ProblemSpec, eps: Complex64, opts: &SolverOptions) -> Result<EpsOperators> {
        let n = self.template.nr();
        let mut level_mats = Vec::with_capacity(self.levels.len());
        for lv in &self.levels {
            let scal = eps.powi(lv.exponent as i32) * lv.coeff;
            let mut m = CMat::zeros(n, n);
            for (a, g) in &lv.fused {
                m.axpy(scal * a.eval(eps), g);
            }
            level_mats.push(m);
        }
        let mut template = self.template.clone();
        template.eps = eps;
        let psi = forcing_psi(spec, &template, self.n_psi, opts.psi_tail_tol);
        let cf = spec.cf();
        let forcing = template.with_values(psi.psi.values.iter().zip(&self.h).map(|(p, h)| cf * p / h).collect());
        Ok(EpsOperators {
            eps,
            level_mats,
            forcing,
            psi: psi.psi,
            psi_tail: psi.tail_bound,
            psi_tail_warning: psi.tail_warning,
        })
    }
}

/// `max_{i} w_r(i) rh(i) Σ_{i'} |M_{ii'}| / w_r(i')`.
fn weighted_norm(m: &CMat, wr: &[f64], rh: &[f64]) -> f64 {
    (0..m.rows)
        .map(|i| {
            let s: f64 = m.row(i).iter().zip(wr).map(|(v, w)| v.norm() / w).sum();
            wr[i] * rh[i] * s
        })
        .fold(0.0, f64::max)
}

/// Operators of `H_ε` for one value of `ε`.
#[derive(Debug, Clone)]
pub struct EpsOperators {
    pub eps: Complex64,
    level_mats: Vec<CMat>,
    /// `c_f ψ / H`.
    pub forcing: BorelGrid,
    pub psi: BorelGrid,
    pub psi_tail: f64,
    pub psi_tail_warning: bool,
}

/// `H_ε(w)`.
pub fn apply_h_eps(w: &BorelGrid, spec: &ProblemSpec, ops: &RayOperators, state: &EpsOperators) -> BorelGrid {
    let nm = w.nm();
    let mut out = state.forcing.values.clone();
    let wm = w.to_cmat();
    for (lv, m) in ops.levels.iter().zip(&state.level_mats) {
        let y = m.matmul(&wm);
        out.par_chunks_mut(nm).enumerate().for_each(|(i, row)| {
            for (j, o) in row.iter_mut().enumerate() {
                *o += y.data[i * nm + j] * lv.r_im[j] / ops.h[i * nm + j];
            }
        });
    }
    let c12 = spec.c12();
    if c12 != ZERO {
        let nl = nonlinear_product(w, w, &spec.q1, &spec.q2, &ops.rule);
        for ((o, v), h) in out.iter_mut().zip(&nl.values).zip(&ops.h) {
            *o += c12 * v / h;
        }
    }
    let mut res = w.with_values(out);
    res.eps = state.eps;
    res
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct IterationTrace {
    /// `norm_F(w_j)` after each step.
    pub norms: Vec<f64>,
    /// `norm_F(w_j - w_{j-1})`.
    pub diffs: Vec<f64>,
    /// `diffs[j] / diffs[j-1]`.
    pub ratios: Vec<f64>,
    pub converged: bool,
    #[serde(skip)]
    pub wall_ms: Vec<f64>,
}

impl IterationTrace {
    pub fn iterations(&self) -> usize {
        self.diffs.len()
    }

    pub fn max_ratio(&self) -> f64 {
        self.ratios.iter().copied().fold(0.0, f64::max)
    }
}

/// Picard iteration from `w_0 = 0` until
/// `norm_F(w_{j+1} - w_j) ≤ tol · max(1, norm_F(w_j))`.
pub fn solve_fixed_point(
    spec: &ProblemSpec,
    ops: &RayOperators,
    state: &EpsOperators,
    opts: &SolverOptions,
) -> Result<(BorelGrid, IterationTrace)> {
    let mut w = ops.template.zeros_like();
    w.eps = state.eps;
    let mut trace = IterationTrace::default();
    let mut above = 0usize;
    for _ in 0..opts.max_iter {
        let t = Instant::now();
        let next = apply_h_eps(&w, spec, ops, state);
        let diff = norm_f(&next.sub(&w)).value;
        let prev_norm = norm_f(&w).value;
        let norm = norm_f(&next).value;
        if !diff.is_finite() || !norm.is_finite() {
            return Err(Error::Divergence("non-finite iterate".into()));
        }
        if let Some(&last) = trace.diffs.last() {
            let ratio = if last > 0.0 { diff / last } else { 0.0 };
            trace.ratios.push(ratio);
            above = if ratio > 1.0 { above + 1 } else { 0 };
        }
        trace.diffs.push(diff);
        trace.norms.push(norm);
        trace.wall_ms.push(t.elapsed().as_secs_f64() * 1e3);
        w = next;
        if diff <= opts.tol * prev_norm.max(1.0) {
            trace.converged = true;
            return Ok((w, trace));
        }
        if above >= opts.divergence_window {
            return Err(Error::Divergence(format!(
                "contraction ratio above 1 for {above} consecutive iterations (last {:.3})",
                trace.ratios.last().unwrap()
            )));
        }
    }
    Err(Error::Numerical(format!(
        "no convergence within {} iterations (last difference {:.3e})",
        opts.max_iter,
        trace.diffs.last().copied().unwrap_or(f64::NAN)
    )))
}

/// Relative residual of the raw convolution equation,
/// `norm_F(Q w - e^{α_D k τ^k} R_D w - RHS) / norm_F(Q w)`, assembled from
/// the kernels directly rather than from the fused operators.
pub fn residual(w: &BorelGrid, spec: &ProblemSpec, eps: Complex64, n_psi: usize, opts: &SolverOptions) -> Result<f64> {
    let k = spec.k;
    let ms = w.mgrid.nodes();
    let nm = ms.len();
    let radii = w.mesh.nodes().to_vec();
    let mut lhs = vec![ZERO; w.values.len()];
    let mut qw = vec![ZERO; w.values.len()];
    for (i, &r) in radii.iter().enumerate() {
        let e = (polar_pow(r, w.gamma, k) * (spec.alpha_d * k)).exp();
        for (j, &m) in ms.iter().enumerate() {
            let v = w.values[i * nm + j];
            qw[i * nm + j] = spec.q.eval_im(m) * v;
            lhs[i * nm + j] = qw[i * nm + j] - e * spec.r_d.eval_im(m) * v;
        }
    }
    for (idx, lv) in spec.levels.iter().enumerate() {
        let l = idx + 1;
        let dlk = d_lk(spec, l)?;
        let ew = exp_neg_kappa_ck(w, lv.kappa, opts.exp_tol, opts.p_max, &opts.quad)?.value;
        let scal = eps.powi(lv.eps_exponent() as i32) * lv.coefficient();
        let tahara = tahara_coefficients(lv.delta, k);
        let delta = lv.delta as f64;
        for term in &lv.terms {
            let a = term.a.eval(eps);
            let base = (term.n as f64 + dlk) / k;
            let lead = conv_power_kernel(&ew, &KernelParams::new(base - 1.0, delta - 1.0, k)?, &opts.quad)
                .scaled(Complex64::new(k.powf(delta) / gamma(base), 0.0));
            let mut total = lead;
            for (pi, &ap) in tahara.iter().enumerate() {
                let p = (pi + 1) as f64;
                let part = conv_power_kernel(&ew, &KernelParams::new(base + delta - p - 1.0, p - 1.0, k)?, &opts.quad)
                    .scaled(Complex64::new(ap * k.powf(p) / gamma(base + delta - p), 0.0));
                total = total.add(&part);
            }
            for (i, _) in radii.iter().enumerate() {
                for (j, &m) in ms.iter().enumerate() {
                    lhs[i * nm + j] -= scal * a * spec.r_levels[idx].eval_im(m) * total.values[i * nm + j];
                }
            }
        }
    }
    let c12 = spec.c12();
    if c12 != ZERO {
        let nl = nonlinear_product_once(w, w, &spec.q1, &spec.q2, &opts.quad);
        for (o, v) in lhs.iter_mut().zip(&nl.values) {
            *o -= c12 * v;
        }
    }
    let mut template = w.clone();
    template.eps = eps;
    let psi = forcing_psi(spec, &template, n_psi, opts.psi_tail_tol);
    let cf = spec.cf();
    for (o, p) in lhs.iter_mut().zip(&psi.psi.values) {
        *o -= cf * p;
    }
    let num = norm_f(&w.with_values(lhs)).value;
    let den = norm_f(&w.with_values(qw)).value;
    if den == 0.0 {
        return Ok(num);
    }
    Ok(num / den)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LevelLedger {
    pub l: usize,
    pub eps_factor: f64,
    pub coeff_abs: f64,
    pub kernels: Vec<KernelNorm>,
    /// `sup_ε |A_{l,n}(ε)|` per kernel row.
    pub sup_a: Vec<f64>,
    /// Contribution per unit `ϖ`.
    pub rate: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SmallnessLedger {
    pub levels: Vec<LevelLedger>,
    pub c3: f64,
    pub kf: f64,
    pub eta2: f64,
    pub min_q: f64,
    pub k1: f64,
    /// Sum of level rates.
    pub linear_rate: f64,
    /// Coefficient of `ϖ²` in the inclusion condition.
    pub quadratic: f64,
    /// Constant term of the inclusion condition.
    pub forcing_term: f64,
    /// Smallest `ϖ` solving the inclusion condition, if any.
    pub varpi_root: Option<f64>,
    pub candidates: Vec<VarpiCheck>,
    pub varpi: Option<f64>,
    pub lhs_inclusion: Option<f64>,
    pub lhs_shrink: Option<f64>,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VarpiCheck {
    pub varpi: f64,
    pub lhs_inclusion: f64,
    pub lhs_shrink: f64,
    pub passed: bool,
}

/// Separable bound for the nonlinear term:
/// `norm_F(N(w_1, w_2)/Q) ≤ C_3 (2π)^{-1/2} norm_F(w_1) norm_F(w_2)`.
pub fn nonlinear_constant(spec: &ProblemSpec, template: &BorelGrid, quad: &QuadOptions) -> f64 {
    let k = spec.k;
    let mesh = &template.mesh;
    let meta = template.meta;
    let wr = radial_weights(mesh.nodes(), k, meta.nu);
    let ms = template.mgrid.nodes();
    let wm = m_weights(&ms, meta.beta, meta.mu);
    let nm = ms.len();
    let c = nm / 2;
    let dm = template.mgrid.dm();
    // m part: Δm Σ_{m_1} |Q_1(i(m-m_1))| |Q_2(im_1)| / (w_m(m-m_1) w_m(m_1)) · w_m(m)/|Q(im)|.
    let m_part = (0..nm)
        .map(|j| {
            let mut s = 0.0;
            for l in 0..nm {
                let idx = j as isize - l as isize + c as isize;
                if idx < 0 || idx >= nm as isize {
                    continue;
                }
                let a = idx as usize;
                s += spec.q1.eval_im(ms[a]).norm() * spec.q2.eval_im(ms[l]).norm() / (wm[a] * wm[l]);
            }
            dm * s * wm[j] / spec.q.eval_im(ms[j]).norm()
        })
        .fold(0.0, f64::max);
    let rule = NonlinearRule::new(mesh, k, quad);
    let r_part = rule.stencil_sums(&wr).iter().zip(&wr).map(|(s, w)| s * w).fold(0.0, f64::max);
    m_part * r_part
}

/// Evaluates both smallness conditions over the candidates and the smallest root.
pub fn smallness_ledger(
    spec: &ProblemSpec,
    ops: &RayOperators,
    eta2: f64,
    k1: f64,
    candidates: &[f64],
    quad: &QuadOptions,
) -> SmallnessLedger {
    let mut levels = Vec::new();
    let mut linear_rate = 0.0;
    for (idx, (lv, kn)) in spec.levels.iter().zip(ops.kernel_norms()).enumerate() {
        let eps_factor = spec.eps0.powi(lv.eps_exponent() as i32);
        let coeff_abs = lv.coefficient().norm();
        let sup_a: Vec<f64> = kn
            .iter()
            .map(|kk| {
                lv.terms
                    .iter()
                    .find(|t| t.n == kk.n)
                    .map(|t| t.a.coeffs().iter().enumerate().map(|(j, c)| c.norm() * spec.eps0.powi(j as i32)).sum())
                    .unwrap_or(0.0)
            })
            .collect();
        let rate =
            eps_factor * coeff_abs * kn.iter().zip(&sup_a).map(|(kk, a)| a * kk.scale.abs() * kk.norm).sum::<f64>();
        linear_rate += rate;
        levels.push(LevelLedger { l: idx + 1, eps_factor, coeff_abs, kernels: kn, sup_a, rate });
    }
    let eta = eta2.min(0.5);
    let ms = ops.template.mgrid.nodes();
    let min_q = ms.iter().map(|&m| spec.q.eval_im(m).norm()).fold(f64::INFINITY, f64::min);
    let c3 = nonlinear_constant(spec, &ops.template, quad);
    let kf = forcing_constant(spec, &ops.template, ops.n_psi);
    let quadratic = spec.c12().norm() * c3 / (SQRT_2PI * eta);
    let forcing_term = spec.cf().norm() * kf / (eta * min_q);
    let eval = |v: f64| {
        let incl = linear_rate * v + quadratic * v * v + forcing_term;
        let shrink = linear_rate + 2.0 * quadratic * v;
        VarpiCheck { varpi: v, lhs_inclusion: incl, lhs_shrink: shrink, passed: incl <= v && shrink <= 0.5 }
    };
    // Smallest root of quadratic ϖ² + (linear_rate - 1) ϖ + forcing_term = 0.
    let b = 1.0 - linear_rate;
    let varpi_root = if b <= 0.0 {
        None
    } else if quadratic == 0.0 {
        Some(forcing_term / b)
    } else {
        let disc = b * b - 4.0 * quadratic * forcing_term;
        (disc >= 0.0).then(|| 2.0 * forcing_term / (b + disc.sqrt()))
    };
    let mut checks: Vec<VarpiCheck> = candidates.iter().map(|&v| eval(v)).collect();
    if let Some(r) = varpi_root {
        let v = if r > 0.0 { r * (1.0 + 1e-12) } else { f64::MIN_POSITIVE };
        checks.push(eval(v));
    }
    checks.sort_by(|a, b| a.varpi.total_cmp(&b.varpi));
    let best = checks.iter().find(|c| c.passed).cloned();
    SmallnessLedger {
        levels,
        c3,
        kf,
        eta2,
        min_q,
        k1,
        linear_rate,
        quadratic,
        forcing_term,
        varpi_root,
        candidates: checks,
        varpi: best.as_ref().map(|c| c.varpi),
        lhs_inclusion: best.as_ref().map(|c| c.lhs_inclusion),
        lhs_shrink: best.as_ref().map(|c| c.lhs_shrink),
        passed: best.is_some(),
    }
}

/// `Σ_n sup_ε |P_n(ε)| · norm_F(F_n τ^n / Γ(n/k))`.
pub fn forcing_constant(spec: &ProblemSpec, template: &BorelGrid, n_psi: usize) -> f64 {
    let k = spec.k;
    spec.forcing
        .expanded(n_psi)
        .iter()
        .map(|mode| {
            let sup_p: f64 =
                mode.eps_poly.coeffs().iter().enumerate().map(|(j, c)| c.norm() * spec.eps0.powi(j as i32)).sum();
            let g = gamma(mode.n as f64 / k);
            let grid = BorelGrid::from_fn(
                template.gamma,
                template.mesh.clone(),
                template.mgrid,
                template.meta,
                ZERO,
                |tau, m| mode.profile(m) * tau.powi(mode.n as i32) / g,
            );
            sup_p * norm_f(&grid).value
        })
        .sum()
}

/// Fits `w(ε)` at `n` points on the circle `|ε - center| = radius` by a
/// degree-3 polynomial in `ε` and returns the weighted residual.
pub fn eps_smoothness(samples: &[(Complex64, BorelGrid)]) -> Result<f64> {
    let n = samples.len();
    if n < 5 {
        return Err(Error::InvalidInput("need at least 5 samples for a degree-3 fit".into()));
    }
    let center = samples.iter().map(|s| s.0).sum::<Complex64>() / n as f64;
    let a = nalgebra::DMatrix::from_fn(n, 4, |i, j| {
        let z = samples[i].0 - center;
        let z = z.powi(j as i32);
        nalgebra::Complex::new(z.re, z.im)
    });
    let svd = a.clone().svd(true, true);
    let len = samples[0].1.values.len();
    let mut fitted: Vec<Vec<Complex64>> = vec![vec![ZERO; len]; n];
    for v in 0..len {
        let b = nalgebra::DVector::from_fn(n, |i, _| {
            let x = samples[i].1.values[v];
            nalgebra::Complex::new(x.re, x.im)
        });
        let coef = svd.solve(&b, 1e-14).map_err(|e| Error::Numerical(e.to_string()))?;
        let fit = &a * coef;
        for (i, f) in fitted.iter_mut().enumerate() {
            f[v] = Complex64::new(fit[i].re, fit[i].im);
        }
    }
    let mut worst: f64 = 0.0;
    for (s, f) in samples.iter().zip(&fitted) {
        let resid = s.1.with_values(s.1.values.iter().zip(f).map(|(x, y)| x - y).collect());
        worst = worst.max(norm_f(&resid).value);
    }
    Ok(worst)
}
