//! Laplace and Borel transforms of order `k`, inverse Fourier transform, the
//! two weighted sup-norms and the discretized Borel-plane grid.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::CMat;
use crate::mesh::{MGrid, RadialMesh};
use crate::quadrature::{gauss_legendre, Rule};
use crate::special::gamma;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Weight parameters of the Borel-plane norm, plus the cut-disc radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridMeta {
    pub k: f64,
    pub nu: f64,
    pub beta: f64,
    pub mu: f64,
    pub rho: f64,
}

/// Values `w(r_i e^{iγ}, m_j)` on a ray, stored row-major (radial index first).
#[derive(Debug, Clone)]
pub struct BorelGrid {
    pub gamma: f64,
    pub mesh: Arc<RadialMesh>,
    pub mgrid: MGrid,
    pub meta: GridMeta,
    pub eps: Complex64,
    pub values: Vec<Complex64>,
}

/// A norm value together with whether the maximum sat on the grid boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormValue {
    pub value: f64,
    pub at_boundary: bool,
}

impl BorelGrid {
    pub fn zeros(gamma: f64, mesh: Arc<RadialMesh>, mgrid: MGrid, meta: GridMeta, eps: Complex64) -> Self {
        let n = mesh.len() * mgrid.n;
        Self { gamma, mesh, mgrid, meta, eps, values: vec![ZERO; n] }
    }

    pub fn from_fn(
        gamma: f64,
        mesh: Arc<RadialMesh>,
        mgrid: MGrid,
        meta: GridMeta,
        eps: Complex64,
        f: impl Fn(Complex64, f64) -> Complex64,
    ) -> Self {
        let mut g = Self::zeros(gamma, mesh, mgrid, meta, eps);
        let ms = g.mgrid.nodes();
        let nm = ms.len();
        for i in 0..g.nr() {
            let tau = g.tau(i);
            for (j, &m) in ms.iter().enumerate() {
                g.values[i * nm + j] = f(tau, m);
            }
        }
        g
    }

    pub fn zeros_like(&self) -> Self {
        Self { values: vec![ZERO; self.values.len()], ..self.clone() }
    }

    pub fn with_values(&self, values: Vec<Complex64>) -> Self {
        assert_eq!(values.len(), self.values.len());
        Self { values, ..self.clone() }
    }

    pub fn nr(&self) -> usize {
        self.mesh.len()
    }

    pub fn nm(&self) -> usize {
        self.mgrid.n
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> Complex64 {
        self.values[i * self.mgrid.n + j]
    }

    pub fn row(&self, i: usize) -> &[Complex64] {
        let nm = self.nm();
        &self.values[i * nm..(i + 1) * nm]
    }

    /// Node `τ_i = r_i e^{iγ}`.
    pub fn tau(&self, i: usize) -> Complex64 {
        Complex64::from_polar(self.mesh.nodes()[i], self.gamma)
    }

    pub fn to_cmat(&self) -> CMat {
        CMat { rows: self.nr(), cols: self.nm(), data: self.values.clone() }
    }

    pub fn from_cmat(&self, m: CMat) -> Self {
        assert_eq!((m.rows, m.cols), (self.nr(), self.nm()));
        self.with_values(m.data)
    }

    pub fn same_layout(&self, other: &BorelGrid) -> bool {
        self.values.len() == other.values.len()
            && self.gamma == other.gamma
            && self.mgrid == other.mgrid
            && self.mesh.nodes() == other.mesh.nodes()
    }

    pub fn sub(&self, other: &BorelGrid) -> Self {
        assert!(self.same_layout(other), "grids differ in layout");
        self.with_values(self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect())
    }

    pub fn add(&self, other: &BorelGrid) -> Self {
        assert!(self.same_layout(other), "grids differ in layout");
        self.with_values(self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect())
    }

    pub fn scaled(&self, a: Complex64) -> Self {
        self.with_values(self.values.iter().map(|v| v * a).collect())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Radial part `(1+r^{2k})/r^k e^{-ν r^k}` of the norm weight.
    pub fn radial_weights(&self) -> Vec<f64> {
        radial_weights(self.mesh.nodes(), self.meta.k, self.meta.nu)
    }

    /// Fourier part `(1+|m|)^μ e^{β|m|}` of the norm weight.
    pub fn m_weights(&self) -> Vec<f64> {
        m_weights(&self.mgrid.nodes(), self.meta.beta, self.meta.mu)
    }

    pub fn norm_f(&self) -> f64 {
        norm_f(self).value
    }

    /// Values at radius `r` along the ray for every `m_j`, by panel interpolation.
    pub fn interpolate(&self, r: f64) -> Vec<Complex64> {
        let s = self.mesh.stencil(r);
        let nm = self.nm();
        let mut out = vec![ZERO; nm];
        for (q, &w) in s.weights.iter().enumerate() {
            let row = &self.values[(s.start + q) * nm..(s.start + q + 1) * nm];
            for (o, v) in out.iter_mut().zip(row) {
                *o += v * w;
            }
        }
        out
    }

    /// The m-slice at radial node `i`.
    pub fn m_line(&self, i: usize) -> MLine {
        MLine { mgrid: self.mgrid, values: self.row(i).to_vec() }
    }

    /// Writes `<stem>.csv` (metadata header, then `r,m,re,im` rows) and a
    /// companion `<stem>.json` with the mesh and grid layout.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join(format!("{stem}.csv")))?);
        writeln!(f, "gamma,k,nu,beta,mu,rho,eps_re,eps_im")?;
        let m = &self.meta;
        writeln!(
            f,
            "{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
            self.gamma, m.k, m.nu, m.beta, m.mu, m.rho, self.eps.re, self.eps.im
        )?;
        writeln!(f, "r,m,re,im")?;
        let ms = self.mgrid.nodes();
        for (i, &r) in self.mesh.nodes().iter().enumerate() {
            for (j, &mj) in ms.iter().enumerate() {
                let v = self.at(i, j);
                writeln!(f, "{r:e},{mj:e},{:e},{:e}", v.re, v.im)?;
            }
        }
        f.flush()?;
        let layout = GridLayout {
            edges: self.mesh.edges().to_vec(),
            order: self.mesh.order(),
            power: self.mesh.power(),
            mgrid: self.mgrid,
        };
        let json = serde_json::to_string_pretty(&layout).map_err(|e| Error::Parse(e.to_string()))?;
        std::fs::write(dir.join(format!("{stem}.json")), json)?;
        Ok(())
    }

    /// Reads a grid written by [`BorelGrid::save`].
    pub fn load(dir: &Path, stem: &str) -> Result<Self> {
        let layout: GridLayout = serde_json::from_str(&std::fs::read_to_string(dir.join(format!("{stem}.json")))?)
            .map_err(|e| Error::Parse(e.to_string()))?;
        let mesh = Arc::new(RadialMesh::from_edges(layout.edges, layout.order, layout.power)?);
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_path(dir.join(format!("{stem}.csv")))
            .map_err(|e| Error::Parse(e.to_string()))?;
        let mut records = rdr.records();
        let mut next = || -> Result<csv::StringRecord> {
            records
                .next()
                .ok_or_else(|| Error::Parse("truncated grid file".into()))?
                .map_err(|e| Error::Parse(e.to_string()))
        };
        next()?;
        let meta_row = next()?;
        let nums: Vec<f64> = meta_row
            .iter()
            .map(|s| s.trim().parse::<f64>().map_err(|e| Error::Parse(e.to_string())))
            .collect::<Result<_>>()?;
        if nums.len() != 8 {
            return Err(Error::Parse("metadata row needs 8 fields".into()));
        }
        next()?;
        let meta = GridMeta { k: nums[1], nu: nums[2], beta: nums[3], mu: nums[4], rho: nums[5] };
        let mut grid = Self::zeros(nums[0], mesh, layout.mgrid, meta, Complex64::new(nums[6], nums[7]));
        for slot in grid.values.iter_mut() {
            let rec = next()?;
            let re: f64 = rec[2].trim().parse().map_err(|e: std::num::ParseFloatError| Error::Parse(e.to_string()))?;
            let im: f64 = rec[3].trim().parse().map_err(|e: std::num::ParseFloatError| Error::Parse(e.to_string()))?;
            *slot = Complex64::new(re, im);
        }
        Ok(grid)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct GridLayout {
    edges: Vec<f64>,
    order: usize,
    power: f64,
    mgrid: MGrid,
}

pub fn radial_weights(radii: &[f64], k: f64, nu: f64) -> Vec<f64> {
    radii
        .iter()
        .map(|&r| {
            let rk = r.powf(k);
            (1.0 + rk * rk) / rk * (-nu * rk).exp()
        })
        .collect()
}

pub fn m_weights(ms: &[f64], beta: f64, mu: f64) -> Vec<f64> {
    ms.iter().map(|&m| (1.0 + m.abs()).powf(mu) * (beta * m.abs()).exp()).collect()
}

/// Weighted sup-norm on the Borel plane:
/// `max (1+|m|)^μ (1+|τ|^{2k})/|τ|^k e^{β|m| - ν|τ|^k} |w|` over the nodes.
pub fn norm_f(w: &BorelGrid) -> NormValue {
    let wr = w.radial_weights();
    let wm = w.m_weights();
    let nm = w.nm();
    let mut best = 0.0;
    let mut arg = (0, 0);
    for (i, a) in wr.iter().enumerate() {
        for (j, b) in wm.iter().enumerate() {
            let v = a * b * w.values[i * nm + j].norm();
            if v > best {
                best = v;
                arg = (i, j);
            }
        }
    }
    let at_boundary = best > 0.0 && (arg.0 + 1 == w.nr() || arg.1 == 0 || arg.1 + 1 == nm);
    NormValue { value: best, at_boundary }
}

/// A function of `m` sampled on the Fourier grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MLine {
    pub mgrid: MGrid,
    pub values: Vec<Complex64>,
}

impl MLine {
    pub fn from_fn(mgrid: MGrid, f: impl Fn(f64) -> Complex64) -> Self {
        Self { mgrid, values: mgrid.nodes().into_iter().map(f).collect() }
    }

    pub fn scaled(&self, a: Complex64) -> Self {
        Self { mgrid: self.mgrid, values: self.values.iter().map(|v| v * a).collect() }
    }
}

/// `max (1+|m|)^μ e^{β|m|} |f(m)|` over the nodes.
pub fn norm_beta_mu(f: &MLine, beta: f64, mu: f64) -> NormValue {
    let ms = f.mgrid.nodes();
    let mut best = 0.0;
    let mut arg = 0;
    for (j, (&m, v)) in ms.iter().zip(&f.values).enumerate() {
        let x = (1.0 + m.abs()).powf(mu) * (beta * m.abs()).exp() * v.norm();
        if x > best {
            best = x;
            arg = j;
        }
    }
    let at_boundary = best > 0.0 && (arg == 0 || arg + 1 == ms.len());
    NormValue { value: best, at_boundary }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FourierValue {
    pub value: Complex64,
    /// Bound on the neglected `|m| > M_max` contribution given `decay_norm`.
    pub tail_bound: f64,
}

/// Trapezoid approximation of `(2π)^{-1/2} ∫ f(m) e^{izm} dm`.
///
/// `beta` is the decay rate of `f`; `decay_norm` is `‖f‖_(β,μ)` used for the
/// tail bound with exponent `mu`.
pub fn fourier_inverse(f: &MLine, z: Complex64, beta: f64, mu: f64, decay_norm: f64) -> Result<FourierValue> {
    if z.im.abs() >= beta {
        return Err(Error::InvalidInput(format!("|Im z| = {} must be below beta = {beta}", z.im.abs())));
    }
    let dm = f.mgrid.dm();
    let ms = f.mgrid.nodes();
    let mut acc = ZERO;
    for (&m, v) in ms.iter().zip(&f.values) {
        acc += v * (Complex64::i() * z * m).exp();
    }
    let s = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    let gap = beta - z.im.abs();
    let big_m = f.mgrid.m_max;
    let tail = s * 2.0 * decay_norm * (-gap * big_m).exp() / (gap * (1.0 + big_m).powf(mu));
    Ok(FourierValue { value: acc * dm * s, tail_bound: tail })
}

/// Discrete convolution `(f*g)(m_j) = Δm Σ f(m_j - m_l) g(m_l)` on the grid
/// extended to `[-2M, 2M]` with zero extension outside the grid.
pub fn convolve_extended(f: &MLine, g: &MLine) -> MLine {
    assert_eq!(f.mgrid, g.mgrid);
    let n = f.mgrid.n;
    let dm = f.mgrid.dm();
    let mut out = vec![ZERO; 2 * n - 1];
    for (a, fa) in f.values.iter().enumerate() {
        for (b, gb) in g.values.iter().enumerate() {
            out[a + b] += fa * gb;
        }
    }
    for v in &mut out {
        *v *= dm;
    }
    let ext = MGrid { m_max: 2.0 * f.mgrid.m_max, n: 2 * n - 1 };
    MLine { mgrid: ext, values: out }
}

/// Formal Borel transform of order `k`: `a_j ↦ a_j / Γ(1 + j/k)`.
pub fn borel_k(coeffs: &[Complex64], k: f64) -> Vec<Complex64> {
    coeffs.iter().enumerate().map(|(j, a)| a / gamma(1.0 + j as f64 / k)).collect()
}

/// Quadrature controls for Laplace integrals along a ray.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct LaplaceOptions {
    /// Required admissibility `cos(k(γ - arg T)) ≥ delta1`.
    pub delta1: f64,
    /// Gauss–Legendre points per subinterval.
    pub nodes: usize,
    /// Subinterval length in the variable `x = (r/|T|)^k`.
    pub dx: f64,
    /// Integration stops once the kernel has decayed by `e^{-cutoff}`.
    pub cutoff: f64,
    /// Lower integration limit as a multiple of `|T|` when starting at 0.
    pub r_lo_factor: f64,
    /// Accepted truncation bound.
    pub tol: f64,
}

impl Default for LaplaceOptions {
    fn default() -> Self {
        Self { delta1: 1e-3, nodes: 12, dx: 1.0, cutoff: 45.0, r_lo_factor: 1e-14, tol: 1e-10 }
    }
}

impl LaplaceOptions {
    pub fn doubled(&self) -> Self {
        Self { nodes: 2 * self.nodes, dx: 0.5 * self.dx, cutoff: self.cutoff + 10.0, ..self.clone() }
    }
}

/// Growth envelope `|w(r)| ≤ norm · r^k e^{ν r^k} / (1 + r^{2k})` used for
/// truncation bounds.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Envelope {
    pub norm: f64,
    pub nu: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LaplaceValue {
    pub value: Complex64,
    pub truncation_bound: f64,
    pub nodes: usize,
}

/// Quadrature nodes `(r_q, c_q)` such that `Σ c_q w(r_q)` approximates
/// `k ∫_a^b w(r e^{iγ}) e^{-(r e^{iγ}/T)^k} dr/r`, plus the radius where
/// integration stopped.
#[derive(Debug, Clone)]
pub struct RayQuadrature {
    pub radii: Vec<f64>,
    pub weights: Vec<Complex64>,
    pub r_end: f64,
    pub cos_factor: f64,
}

/// Admissibility factor `cos(k(γ - arg T))`.
pub fn admissibility(gamma: f64, k: f64, t: Complex64) -> f64 {
    (k * (gamma - t.arg())).cos()
}

/// Builds the Laplace quadrature on `[a, b]` along direction `gamma`.
///
/// Subintervals follow the decay of the kernel: geometric (ratio 4) below `|T|`, then
/// steps of `dx` in `(r/|T|)^k`, split further at every entry of `edges`.
pub fn ray_quadrature(
    gamma: f64,
    k: f64,
    t: Complex64,
    a: f64,
    b: f64,
    edges: &[f64],
    opts: &LaplaceOptions,
) -> Result<RayQuadrature> {
    let c = admissibility(gamma, k, t);
    if !(c >= opts.delta1) || c <= 0.0 {
        return Err(Error::Inadmissible(format!(
            "cos(k(gamma - arg T)) = {c:.4} below delta1 = {} for gamma = {gamma}, arg T = {}",
            opts.delta1,
            t.arg()
        )));
    }
    let tm = t.norm();
    let x_of = |r: f64| (r / tm).powf(k);
    let r_of = |x: f64| tm * x.powf(1.0 / k);
    let lo = if a > 0.0 { a } else { opts.r_lo_factor * tm };
    let x_end = x_of(lo).max(0.0) + opts.cutoff / c;
    let hi = b.min(r_of(x_end));
    let mut pts = vec![lo];
    if hi > lo {
        let mut r = lo;
        while x_of(r) < 1.0 {
            r *= 4.0;
            if r >= hi {
                break;
            }
            pts.push(r);
        }
        let mut x = x_of(*pts.last().unwrap()).max(1.0).floor();
        loop {
            x += opts.dx;
            let r = r_of(x);
            if r >= hi {
                break;
            }
            if r > *pts.last().unwrap() {
                pts.push(r);
            }
        }
        pts.extend(edges.iter().copied().filter(|&e| e > lo && e < hi));
        pts.push(hi);
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup_by(|x, y| (*x - *y).abs() <= 1e-14 * y.abs());
    let rule = gauss_legendre(opts.nodes);
    let mut radii = Vec::with_capacity(pts.len() * opts.nodes);
    let mut weights = Vec::with_capacity(pts.len() * opts.nodes);
    let phase = Complex64::from_polar(1.0, k * (gamma - t.arg()));
    for w in pts.windows(2) {
        push_interval(&rule, w[0], w[1], |r, wt| {
            let x = x_of(r);
            radii.push(r);
            weights.push(k * wt / r * (-(phase * x)).exp());
        });
    }
    Ok(RayQuadrature { radii, weights, r_end: hi, cos_factor: c })
}

fn push_interval(rule: &Rule, a: f64, b: f64, mut f: impl FnMut(f64, f64)) {
    let h = 0.5 * (b - a);
    for (x, w) in rule.nodes.iter().zip(&rule.weights) {
        f(a + h * (1.0 + x), w * h);
    }
}

/// Bound on `k ∫_R^∞ |w| e^{-Re (u/T)^k} dr/r` under the envelope.
pub fn laplace_tail_bound(env: &Envelope, k: f64, t: Complex64, cos_factor: f64, r_end: f64) -> f64 {
    let rate = cos_factor / t.norm().powf(k) - env.nu;
    if rate <= 0.0 {
        return f64::INFINITY;
    }
    let rk = r_end.powf(k);
    env.norm * (-rate * rk).exp() / (rate * (1.0 + rk * rk))
}

/// Order-`k` Laplace transform `k ∫_0^∞ w(u) e^{-(u/T)^k} du/u` along the
/// ray `arg u = gamma`, with `w` given as a function of the radius.
pub fn laplace_k(
    w: impl Fn(f64) -> Complex64,
    gamma: f64,
    k: f64,
    t: Complex64,
    envelope: Option<Envelope>,
    opts: &LaplaceOptions,
) -> Result<LaplaceValue> {
    if let Some(env) = envelope {
        let limit = (opts.delta1 / env.nu).powf(1.0 / k);
        if env.nu > 0.0 && t.norm() >= limit {
            return Err(Error::Inadmissible(format!("|T| = {} exceeds the radius bound {limit}", t.norm())));
        }
    }
    let quad = ray_quadrature(gamma, k, t, 0.0, f64::INFINITY, &[], opts)?;
    let value = quad.radii.iter().zip(&quad.weights).map(|(&r, c)| c * w(r)).sum();
    let truncation_bound = match envelope {
        Some(env) => laplace_tail_bound(&env, k, t, quad.cos_factor, quad.r_end),
        None => 0.0,
    };
    if truncation_bound > opts.tol {
        return Err(Error::Numerical(format!("Laplace truncation bound {truncation_bound:e} exceeds tolerance")));
    }
    Ok(LaplaceValue { value, truncation_bound, nodes: quad.radii.len() })
}

/// Laplace transform paired with the formal Borel transform:
/// `ε^{-k} ∫_0^∞ B(u) e^{-(u/ε)^k} k u^{k-1} du`, so that
/// `u^n / Γ(1 + n/k) ↦ ε^n`.
pub fn laplace_borel(
    b: impl Fn(f64) -> Complex64,
    gamma: f64,
    k: f64,
    eps: Complex64,
    opts: &LaplaceOptions,
) -> Result<LaplaceValue> {
    let scale = Complex64::from_polar(1.0, k * (gamma - eps.arg())) / eps.norm().powf(k);
    laplace_k(|r| b(r) * scale * r.powf(k), gamma, k, eps, None, opts)
}

/// Laplace transform of every m-slice of a grid over `[a, b]` along the grid's ray.
pub fn laplace_grid(grid: &BorelGrid, t: Complex64, a: f64, b: f64, opts: &LaplaceOptions) -> Result<Vec<Complex64>> {
    let quad = ray_quadrature(grid.gamma, grid.meta.k, t, a, b.min(grid.mesh.r_max()), grid.mesh.edges(), opts)?;
    Ok(apply_ray_quadrature(grid, &quad))
}

pub fn apply_ray_quadrature(grid: &BorelGrid, quad: &RayQuadrature) -> Vec<Complex64> {
    let nm = grid.nm();
    let mut out = vec![ZERO; nm];
    for (&r, &c) in quad.radii.iter().zip(&quad.weights) {
        let s = grid.mesh.stencil(r);
        for (q, &w) in s.weights.iter().enumerate() {
            let f = c * w;
            let row = &grid.values[(s.start + q) * nm..(s.start + q + 1) * nm];
            for (o, v) in out.iter_mut().zip(row) {
                *o += v * f;
            }
        }
    }
    out
}
