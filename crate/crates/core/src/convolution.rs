//! Weakly singular convolution kernels along a ray, the operator `C_k`, the
//! Moebius operator `exp(-κ C_k)` and the nonlinear Fourier–Borel product.
//!
//! Every kernel acts on functions of the radial variable through
//! `K f(τ) = τ^{k(γ2+γ3+2)} ∫_0^1 (1-u)^{γ2} u^{γ3} f(τ u^{1/k}) du`,
//! which is `τ^k ∫_0^{τ^k} (τ^k-s)^{γ2} s^{γ3} f(s^{1/k}) ds` after `s = τ^k u`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::CMat;
use crate::mesh::{RadialMesh, Stencil};
use crate::problem::ComplexPolynomial;
use crate::quadrature::{gauss_jacobi, gauss_legendre, Rule};
use crate::special::{gamma, polar_pow};
use crate::transforms::BorelGrid;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Exponents of a convolution kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub gamma2: f64,
    pub gamma3: f64,
    pub k: f64,
    /// Whether `k(γ2+γ3+2)` is a nonnegative integer.
    pub integral: bool,
}

impl KernelParams {
    pub fn new(gamma2: f64, gamma3: f64, k: f64) -> Result<Self> {
        if !(gamma2 > -1.0) {
            return Err(Error::InvalidInput(format!("gamma2 = {gamma2} must exceed -1")));
        }
        if !(gamma3 >= 0.0) {
            return Err(Error::InvalidInput(format!("gamma3 = {gamma3} must be nonnegative")));
        }
        let e = k * (gamma2 + gamma3 + 2.0);
        let integral = e >= -1e-12 && (e - e.round()).abs() < 1e-9;
        Ok(Self { gamma2, gamma3, k, integral })
    }

    /// Exponent of the prefactor `τ^{k(γ2+γ3+2)}`.
    pub fn prefactor_exponent(&self) -> f64 {
        self.k * (self.gamma2 + self.gamma3 + 2.0)
    }

    /// Parameters of `C_k`.
    pub fn c_k(k: f64) -> Result<Self> {
        Self::new(1.0 / k - 2.0, 0.0, k)
    }
}

/// Node counts for the kernel quadratures.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadOptions {
    /// Gauss–Jacobi nodes on each half of a split `[0, 1]` and on the
    /// segment next to the origin.
    pub gj_nodes: usize,
    /// Gauss–Jacobi nodes on the segment ending at the target.
    pub near_nodes: usize,
    /// Power `q` of the substitution `u = u_1 v^q` near the origin; `None`
    /// derives it from `k`.
    pub subst_power: Option<f64>,
    /// Gauss nodes per segment of the nonlinear `u`-integral.
    pub nl_nodes: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self { gj_nodes: 16, near_nodes: 24, subst_power: None, nl_nodes: 8 }
    }
}

impl QuadOptions {
    /// The substitution power: the numerator of `k` when `k` is a small
    /// rational, which makes `u^{1/k}` a polynomial in `v`; 3 otherwise.
    pub fn power(&self, k: f64) -> f64 {
        if let Some(q) = self.subst_power {
            return q;
        }
        for den in 1..=12u32 {
            let num = (k * den as f64).round();
            if num >= 1.0 && (k - num / den as f64).abs() < 1e-12 {
                return num;
            }
        }
        3.0
    }
}

/// Kernel value at a single point with `f` evaluated exactly, using the split
/// rule at `u = 1/2` with Gauss–Jacobi weights at both ends.
pub fn conv_power_kernel_fn(
    f: impl Fn(Complex64) -> Complex64,
    tau: Complex64,
    params: &KernelParams,
    nodes: usize,
) -> Complex64 {
    let (g2, g3, k) = (params.gamma2, params.gamma3, params.k);
    let (r, th) = (tau.norm(), tau.arg());
    if r == 0.0 {
        return ZERO;
    }
    let at = |u: f64| f(Complex64::from_polar(r * u.powf(1.0 / k), th));
    let left = gauss_jacobi(nodes, 0.0, g3);
    let right = gauss_jacobi(nodes, g2, 0.0);
    let mut acc = ZERO;
    // [0, 1/2]: weight u^{γ3}, u = (1+x)/4.
    let sl = 0.25f64.powf(g3 + 1.0);
    for (x, w) in left.nodes.iter().zip(&left.weights) {
        let u = 0.25 * (1.0 + x);
        acc += at(u) * (w * sl * (1.0 - u).powf(g2));
    }
    // [1/2, 1]: weight (1-u)^{γ2}, u = 3/4 + x/4.
    let sr = 0.25f64.powf(g2 + 1.0);
    for (x, w) in right.nodes.iter().zip(&right.weights) {
        let u = 0.75 + 0.25 * x;
        acc += at(u) * (w * sr * u.powf(g3));
    }
    acc * polar_pow(r, th, params.prefactor_exponent())
}

/// Precomputed rules shared by all targets of one kernel.
struct KernelRules {
    subst: Rule,
    near: Rule,
    split_right: Rule,
    q: f64,
}

impl KernelRules {
    fn new(params: &KernelParams, opts: &QuadOptions) -> Self {
        let q = opts.power(params.k);
        Self {
            subst: gauss_jacobi(opts.gj_nodes, 0.0, q * params.gamma3 + q - 1.0),
            near: gauss_jacobi(opts.near_nodes, params.gamma2, 0.0),
            split_right: gauss_jacobi(opts.gj_nodes, params.gamma2, 0.0),
            q,
        }
    }
}

/// A quadrature point of the radial kernel rule: either a mesh node or an
/// off-node radius whose value must be interpolated.
#[derive(Debug, Clone, Copy)]
enum Point {
    Node(usize),
    Radius(f64),
}

/// Points and real weights with
/// `∫_0^1 (1-u)^{γ2} u^{γ3} f(r u^{1/k}) du ≈ Σ c_i f(ρ_i)`
/// for a target radius `r` inside panel `panel`.
fn volterra_points(
    mesh: &RadialMesh,
    r: f64,
    panel: usize,
    params: &KernelParams,
    rules: &KernelRules,
) -> Vec<(Point, f64)> {
    let (g2, g3, k) = (params.gamma2, params.gamma3, params.k);
    let q = rules.q;
    let edges = mesh.edges();
    let at = |u: f64| Point::Radius(r * u.powf(1.0 / k));
    let mut out = Vec::new();
    // ∫_0^{u1}: u = u1 v^q, weight v^{qγ3+q-1} on [0, 1].
    let subst_segment = |u1: f64, out: &mut Vec<(Point, f64)>| {
        let scale = q * u1.powf(g3 + 1.0) * 0.5f64.powf(q * g3 + q);
        for (x, w) in rules.subst.nodes.iter().zip(&rules.subst.weights) {
            let v = 0.5 * (1.0 + x);
            let u = u1 * v.powf(q);
            out.push((at(u), w * scale * (1.0 - u).powf(g2)));
        }
    };
    // ∫_{us}^1: weight (1-u)^{γ2}.
    let near_segment = |us: f64, rule: &Rule, out: &mut Vec<(Point, f64)>| {
        let h = 0.5 * (1.0 - us);
        let scale = h.powf(g2 + 1.0);
        for (x, w) in rule.nodes.iter().zip(&rule.weights) {
            let u = us + h * (1.0 + x);
            out.push((at(u), w * scale * u.powf(g3)));
        }
    };
    // The near segment starts at edge `b`, at least one panel width below r.
    let mut b = panel.saturating_sub(1);
    while b >= 2 && r - edges[b] < edges[b] - edges[b - 1] {
        b -= 1;
    }
    if b <= 1 {
        subst_segment(0.5, &mut out);
        near_segment(0.5, &rules.split_right, &mut out);
        return out;
    }
    subst_segment((edges[1] / r).powf(k), &mut out);
    let order = mesh.order();
    for j in order..b * order {
        let rho = mesh.nodes()[j];
        let u = (rho / r).powf(k);
        let wt = mesh.weights()[j] * (1.0 - u).powf(g2) * u.powf(g3) * k * u / rho;
        out.push((Point::Node(j), wt));
    }
    near_segment((edges[b] / r).powf(k), &rules.near, &mut out);
    out
}

/// Dense matrix of the kernel on the nodes of `mesh` along direction `gamma`.
pub fn kernel_matrix(mesh: &RadialMesh, gamma_dir: f64, params: &KernelParams, opts: &QuadOptions) -> CMat {
    let n = mesh.len();
    let rules = KernelRules::new(params, opts);
    let e = params.prefactor_exponent();
    let rows: Vec<Vec<Complex64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let r = mesh.nodes()[i];
            let mut row = vec![0.0; n];
            for (pt, w) in volterra_points(mesh, r, i / mesh.order(), params, &rules) {
                match pt {
                    Point::Node(j) => row[j] += w,
                    Point::Radius(rho) => {
                        let s = mesh.stencil(rho);
                        for (q, &c) in s.weights.iter().enumerate() {
                            row[s.start + q] += w * c;
                        }
                    }
                }
            }
            let pre = polar_pow(r, gamma_dir, e);
            row.into_iter().map(|x| pre * x).collect()
        })
        .collect();
    let mut m = CMat::zeros(n, n);
    for (i, row) in rows.into_iter().enumerate() {
        m.data[i * n..(i + 1) * n].copy_from_slice(&row);
    }
    m
}

/// The rule of [`kernel_matrix`] applied to a function known in closed form:
/// `f` is evaluated at every quadrature point instead of being interpolated
/// from mesh nodes. Returns the kernel at each mesh node.
pub fn kernel_on_mesh_exact(
    mesh: &RadialMesh,
    gamma_dir: f64,
    f: impl Fn(Complex64) -> Complex64 + Sync,
    params: &KernelParams,
    opts: &QuadOptions,
) -> Vec<Complex64> {
    let rules = KernelRules::new(params, opts);
    let e = params.prefactor_exponent();
    (0..mesh.len())
        .into_par_iter()
        .map(|i| {
            let r = mesh.nodes()[i];
            let sum: Complex64 = volterra_points(mesh, r, i / mesh.order(), params, &rules)
                .into_iter()
                .map(|(pt, w)| {
                    let rho = match pt {
                        Point::Node(j) => mesh.nodes()[j],
                        Point::Radius(rho) => rho,
                    };
                    f(Complex64::from_polar(rho, gamma_dir)) * w
                })
                .sum();
            sum * polar_pow(r, gamma_dir, e)
        })
        .collect()
}

/// `C_k` as a matrix: `(k / Γ(1/k - 1))` times the kernel with `γ2 = 1/k - 2`, `γ3 = 0`.
pub fn c_k_matrix(mesh: &RadialMesh, gamma_dir: f64, k: f64, opts: &QuadOptions) -> Result<CMat> {
    let params = KernelParams::c_k(k)?;
    let mut m = kernel_matrix(mesh, gamma_dir, &params, opts);
    m.scale(Complex64::new(k / gamma(1.0 / k - 1.0), 0.0));
    Ok(m)
}

/// Applies a radial matrix to every m-column of a grid.
pub fn apply_radial(m: &CMat, w: &BorelGrid) -> BorelGrid {
    w.from_cmat(m.matmul(&w.to_cmat()))
}

/// Kernel applied to a grid, output on the same nodes.
pub fn conv_power_kernel(w: &BorelGrid, params: &KernelParams, opts: &QuadOptions) -> BorelGrid {
    apply_radial(&kernel_matrix(&w.mesh, w.gamma, params, opts), w)
}

/// `C_k w` on a grid.
pub fn c_k(w: &BorelGrid, opts: &QuadOptions) -> Result<BorelGrid> {
    Ok(apply_radial(&c_k_matrix(&w.mesh, w.gamma, w.meta.k, opts)?, w))
}

/// Outcome of a truncated `exp(-κ C_k)` series.
#[derive(Debug, Clone)]
pub struct ExpSeries<T> {
    pub value: T,
    /// Index of the last term added.
    pub terms: usize,
    /// Max-modulus of every term, starting with `p = 0`.
    pub term_maxima: Vec<f64>,
    /// Geometric estimate of the neglected tail.
    pub tail_estimate: f64,
}

fn tail_from(maxima: &[f64]) -> f64 {
    match maxima {
        [.., a, b] if *a > 0.0 => {
            let ratio = b / a;
            if ratio < 1.0 {
                b * ratio / (1.0 - ratio)
            } else {
                f64::INFINITY
            }
        }
        [b] => *b,
        _ => 0.0,
    }
}

/// `Σ_p (-κ)^p / p! · C^p` for a matrix `C`, summed until the newest term
/// drops below `tol` times the accumulated sum.
pub fn exp_neg_kappa_matrix(c: &CMat, kappa: f64, tol: f64, p_max: usize) -> Result<ExpSeries<CMat>> {
    let n = c.rows;
    let mut acc = CMat::identity(n);
    let mut term = CMat::identity(n);
    let mut maxima = vec![1.0];
    if kappa == 0.0 {
        return Ok(ExpSeries { value: acc, terms: 0, term_maxima: maxima, tail_estimate: 0.0 });
    }
    for p in 1..=p_max {
        term = term.matmul(c);
        term.scale(Complex64::new(-kappa / p as f64, 0.0));
        acc.axpy(Complex64::new(1.0, 0.0), &term);
        let tm = term.max_abs();
        maxima.push(tm);
        if tm <= tol * acc.max_abs() {
            let tail = tail_from(&maxima);
            return Ok(ExpSeries { value: acc, terms: p, term_maxima: maxima, tail_estimate: tail });
        }
    }
    Err(Error::Numerical(format!("exp(-kappa C_k) series did not reach tol {tol} within {p_max} terms")))
}

/// `exp(-κ C_k) w` on a grid by direct summation of the series applied to `w`.
pub fn exp_neg_kappa_ck(
    w: &BorelGrid,
    kappa: f64,
    tol: f64,
    p_max: usize,
    opts: &QuadOptions,
) -> Result<ExpSeries<BorelGrid>> {
    if kappa < 0.0 {
        return Err(Error::InvalidInput("kappa must be nonnegative".into()));
    }
    let base = w.max_abs();
    if kappa == 0.0 || base == 0.0 {
        return Ok(ExpSeries { value: w.clone(), terms: 0, term_maxima: vec![base], tail_estimate: 0.0 });
    }
    let c = c_k_matrix(&w.mesh, w.gamma, w.meta.k, opts)?;
    let mut acc = w.to_cmat();
    let mut term = w.to_cmat();
    let mut maxima = vec![base];
    for p in 1..=p_max {
        term = c.matmul(&term);
        term.scale(Complex64::new(-kappa / p as f64, 0.0));
        acc.axpy(Complex64::new(1.0, 0.0), &term);
        let tm = term.max_abs();
        maxima.push(tm);
        if tm <= tol * acc.max_abs() {
            let tail = tail_from(&maxima);
            return Ok(ExpSeries { value: w.from_cmat(acc), terms: p, term_maxima: maxima, tail_estimate: tail });
        }
    }
    Err(Error::Numerical(format!("exp(-kappa C_k) series did not reach tol {tol} within {p_max} terms")))
}

/// Envelope `|τ|^k e^{ν|τ|^k} (1+|m|)^{-μ} e^{-β|m|}` at one node.
const DISCRETIZATION_FLOOR: f64 = 1e-8;

fn envelope(r: f64, m: f64, k: f64, nu: f64, beta: f64, mu: f64) -> f64 {
    let rk = r.powf(k);
    rk * (nu * rk).exp() * (1.0 + m.abs()).powf(-mu) * (-beta * m.abs()).exp()
}

/// Empirical `K_1`: the smallest constant for which
/// `|C_k^N f| ≤ C_2 (k K_1/Γ(1/k-1))^N |τ|^{k(N+1)} e^{ν|τ|^k} (1+|m|)^{-μ} e^{-β|m|}`
/// holds on every sample for `N = 1..4`, times the safety factor 1.1.
/// Values within `DISCRETIZATION_FLOOR` of the largest value on their panel are
/// discounted by that amount.
pub fn estimate_k1(samples: &[BorelGrid], opts: &QuadOptions) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InvalidInput("K1 estimation needs at least one sample".into()));
    }
    let mut k1: f64 = 0.0;
    for f in samples {
        let (k, nu, beta, mu) = (f.meta.k, f.meta.nu, f.meta.beta, f.meta.mu);
        let ms = f.mgrid.nodes();
        let radii = f.mesh.nodes();
        let nm = ms.len();
        let env: Vec<f64> =
            (0..f.values.len()).map(|idx| envelope(radii[idx / nm], ms[idx % nm], k, nu, beta, mu)).collect();
        let c2 = f.values.iter().zip(&env).map(|(v, e)| v.norm() / e).fold(0.0, f64::max);
        if c2 == 0.0 {
            continue;
        }
        let scale = k / gamma(1.0 / k - 1.0);
        let c = c_k_matrix(&f.mesh, f.gamma, k, opts)?;
        let mut g = f.to_cmat();
        let order = f.mesh.order();
        for n in 1..=4 {
            g = c.matmul(&g);
            // Interpolation error level of each panel; values below it carry no information.
            let floor: Vec<f64> = g
                .data
                .chunks(order * nm)
                .map(|panel| DISCRETIZATION_FLOOR * panel.iter().map(|v| v.norm()).fold(0.0, f64::max))
                .collect();
            let ratio = g
                .data
                .iter()
                .enumerate()
                .map(|(idx, v)| {
                    let rk = radii[idx / nm].powf(k);
                    let above = (v.norm() - floor[idx / (order * nm)]).max(0.0);
                    above / (c2 * scale.powi(n) * env[idx] * rk.powi(n))
                })
                .fold(0.0, f64::max);
            k1 = k1.max(ratio.powf(1.0 / n as f64));
        }
    }
    Ok(1.1 * k1)
}

/// One `u`-node of the nonlinear rule: weight and the two interpolation
/// stencils at radii `r(1-u)^{1/k}` and `r u^{1/k}`.
#[derive(Debug, Clone)]
struct ProductNode {
    weight: f64,
    a: Stencil,
    b: Stencil,
}

/// Quadrature for `∫_0^1 F(u) du / (u(1-u))` per target node, where
/// `F(u) = Σ_{m_1} Q_1 w(r(1-u)^{1/k}, m-m_1) Q_2 w(r u^{1/k}, m_1) Δm`.
#[derive(Debug, Clone)]
pub struct NonlinearRule {
    nodes: Vec<Vec<ProductNode>>,
}

impl NonlinearRule {
    pub fn new(mesh: &RadialMesh, k: f64, opts: &QuadOptions) -> Self {
        let q = opts.power(k);
        let gl = gauss_legendre(opts.nl_nodes);
        let nodes = mesh
            .nodes()
            .par_iter()
            .map(|&r| {
                let mut out = Vec::new();
                // Breakpoints on (0, 1/2] from the panels crossed by r u^{1/k}.
                let mut bps: Vec<f64> =
                    mesh.edges().iter().skip(1).map(|&e| (e / r).powf(k)).filter(|&u| u < 0.5 * (1.0 - 1e-9)).collect();
                bps.push(0.5);
                let mut half = Vec::new();
                // First segment: u = b1 v^q, du/u = q dv/v.
                let b1 = bps[0];
                for (x, w) in gl.nodes.iter().zip(&gl.weights) {
                    let v = 0.5 * (1.0 + x);
                    let u = b1 * v.powf(q);
                    half.push((u, 0.5 * w * q / (v * (1.0 - u))));
                }
                for s in bps.windows(2) {
                    let h = 0.5 * (s[1] - s[0]);
                    for (x, w) in gl.nodes.iter().zip(&gl.weights) {
                        let u = s[0] + h * (1.0 + x);
                        half.push((u, w * h / (u * (1.0 - u))));
                    }
                }
                for &(u, wt) in &half {
                    // u and its mirror 1-u carry the same weight.
                    for uu in [u, 1.0 - u] {
                        let a = mesh.stencil(r * (1.0 - uu).powf(1.0 / k));
                        let b = mesh.stencil(r * uu.powf(1.0 / k));
                        out.push(ProductNode { weight: wt, a, b });
                    }
                }
                out
            })
            .collect();
        Self { nodes }
    }

    pub fn total_nodes(&self) -> usize {
        self.nodes.iter().map(|v| v.len()).sum()
    }

    /// Per target, `Σ_q |weight_q| S_a(q) S_b(q)` with
    /// `S(q) = Σ_c |stencil_c| / weight_r(node_c)`: the radial factor of a
    /// bound on the product in terms of weighted sup norms.
    pub fn stencil_sums(&self, weight_r: &[f64]) -> Vec<f64> {
        let s = |st: &Stencil| -> f64 {
            st.weights.iter().enumerate().map(|(q, c)| c.abs() / weight_r[st.start + q]).sum()
        };
        self.nodes.iter().map(|nodes| nodes.iter().map(|n| n.weight.abs() * s(&n.a) * s(&n.b)).sum()).collect()
    }
}

fn gather(values: &[Complex64], nm: usize, s: &Stencil, weights_m: &[Complex64], out: &mut [Complex64]) {
    out.iter_mut().for_each(|o| *o = ZERO);
    for (q, &c) in s.weights.iter().enumerate() {
        let row = &values[(s.start + q) * nm..(s.start + q + 1) * nm];
        for (o, v) in out.iter_mut().zip(row) {
            *o += v * c;
        }
    }
    for (o, w) in out.iter_mut().zip(weights_m) {
        *o *= w;
    }
}

/// `acc[j] += scale Σ_l a[j - l + c] b[l]` with zero extension.
fn conv_accumulate(a: &[Complex64], b: &[Complex64], scale: f64, acc: &mut [Complex64]) {
    let n = a.len();
    let c = n / 2;
    for (l, &bl) in b.iter().enumerate() {
        if bl == ZERO {
            continue;
        }
        let f = bl * scale;
        // j ranges over indices with 0 <= j - l + c < n.
        let lo = l.saturating_sub(c);
        let hi = (l + n - c).min(n);
        let shift = c as isize - l as isize;
        let src = &a[(lo as isize + shift) as usize..(hi as isize + shift) as usize];
        for (o, &x) in acc[lo..hi].iter_mut().zip(src) {
            *o += x * f;
        }
    }
}

/// `(2π)^{-1/2} ∫_0^1 ∫ Q_1(i(m-m_1)) w_1(r(1-u)^{1/k}, m-m_1) Q_2(i m_1) w_2(r u^{1/k}, m_1) dm_1 du/(u(1-u))`
/// on the nodes of `w1`, which equals the `s`-form
/// `τ^k (2π)^{-1/2} ∫_0^{τ^k} ∫ ... ds dm_1 / ((τ^k-s)s)`.
pub fn nonlinear_product(
    w1: &BorelGrid,
    w2: &BorelGrid,
    q1: &ComplexPolynomial,
    q2: &ComplexPolynomial,
    rule: &NonlinearRule,
) -> BorelGrid {
    assert!(w1.same_layout(w2), "factors must share a grid");
    let nm = w1.nm();
    let ms = w1.mgrid.nodes();
    let q1m: Vec<Complex64> = ms.iter().map(|&m| q1.eval_im(m)).collect();
    let q2m: Vec<Complex64> = ms.iter().map(|&m| q2.eval_im(m)).collect();
    let scale = w1.mgrid.dm() / (2.0 * std::f64::consts::PI).sqrt();
    let rows: Vec<Vec<Complex64>> = rule
        .nodes
        .par_iter()
        .map(|nodes| {
            let mut acc = vec![ZERO; nm];
            let mut a = vec![ZERO; nm];
            let mut b = vec![ZERO; nm];
            for node in nodes {
                gather(&w1.values, nm, &node.a, &q1m, &mut a);
                gather(&w2.values, nm, &node.b, &q2m, &mut b);
                conv_accumulate(&a, &b, node.weight * scale, &mut acc);
            }
            acc
        })
        .collect();
    w1.with_values(rows.concat())
}

/// Convenience wrapper that builds the rule on the fly.
pub fn nonlinear_product_once(
    w1: &BorelGrid,
    w2: &BorelGrid,
    q1: &ComplexPolynomial,
    q2: &ComplexPolynomial,
    opts: &QuadOptions,
) -> BorelGrid {
    let rule = NonlinearRule::new(&w1.mesh, w1.meta.k, opts);
    nonlinear_product(w1, w2, q1, q2, &rule)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_accumulate_matches_naive() {
        let n = 7;
        let a: Vec<Complex64> = (0..n).map(|i| Complex64::new(i as f64, 1.0)).collect();
        let b: Vec<Complex64> = (0..n).map(|i| Complex64::new(1.0, -(i as f64))).collect();
        let mut acc = vec![ZERO; n];
        conv_accumulate(&a, &b, 1.0, &mut acc);
        let c = n / 2;
        for j in 0..n {
            let mut s = ZERO;
            for l in 0..n {
                let idx = j as isize - l as isize + c as isize;
                if (0..n as isize).contains(&idx) {
                    s += a[idx as usize] * b[l];
                }
            }
            assert!((s - acc[j]).norm() < 1e-12);
        }
    }

    #[test]
    fn power_from_rational_k() {
        let o = QuadOptions::default();
        assert_eq!(o.power(0.75), 3.0);
        assert_eq!(o.power(2.0 / 3.0), 2.0);
        assert_eq!(o.power(0.7123), 3.0);
    }
}
