//! Reconstruction of the sectorial solutions from Borel-plane grids,
//! neighbouring differences, flatness sweeps and Gevrey fits.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{wrap, CoveringData};
use crate::mesh::{MGrid, Stencil};
use crate::quadrature::gauss_legendre;
use crate::transforms::{
    admissibility, apply_ray_quadrature, laplace_tail_bound, norm_f, ray_quadrature, BorelGrid, Envelope,
    LaplaceOptions,
};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

fn inv_sqrt_2pi() -> f64 {
    1.0 / (2.0 * std::f64::consts::PI).sqrt()
}

/// `k ∫_a^b w(r e^{iγ}, m) e^{-(r e^{iγ}/T)^k} dr/r` for every `m`, with the
/// truncation bound when the integral stops before the kernel has decayed.
#[derive(Debug, Clone)]
pub struct LaplaceLine {
    pub values: Vec<Complex64>,
    pub truncation_bound: f64,
}

pub fn laplace_line(w: &BorelGrid, t: Complex64, a: f64, b: f64, opts: &LaplaceOptions) -> Result<LaplaceLine> {
    let k = w.meta.k;
    let b = b.min(w.mesh.r_max());
    let quad = ray_quadrature(w.gamma, k, t, a, b, w.mesh.edges(), opts)?;
    let values = apply_ray_quadrature(w, &quad);
    let truncation_bound = if quad.r_end < b * (1.0 - 1e-12) || b < w.mesh.r_max() {
        0.0
    } else {
        laplace_tail_bound(&Envelope { norm: norm_f(w).value, nu: w.meta.nu }, k, t, quad.cos_factor, quad.r_end)
    };
    if truncation_bound > opts.tol {
        return Err(Error::Numerical(format!(
            "Laplace truncation bound {truncation_bound:.3e} at R = {:.3} exceeds {}",
            quad.r_end, opts.tol
        )));
    }
    Ok(LaplaceLine { values, truncation_bound })
}

/// `(2π)^{-1/2} Σ_m Δm f(m) e^{izm}` for several `z`.
pub fn fourier_sum(values: &[Complex64], mgrid: &MGrid, zs: &[Complex64]) -> Vec<Complex64> {
    let ms = mgrid.nodes();
    let s = mgrid.dm() * inv_sqrt_2pi();
    zs.iter()
        .map(|&z| ms.iter().zip(values).map(|(&m, v)| v * (Complex64::i() * z * m).exp()).sum::<Complex64>() * s)
        .collect()
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct UValue {
    pub value: [f64; 2],
    pub truncation_bound: f64,
}

/// `u_p(t, z, ε) = k (2π)^{-1/2} ∫∫ w(u, m) e^{-(u/(εt))^k} e^{izm} du/u dm`
/// along the grid's ray.
pub fn reconstruct_u(
    w: &BorelGrid,
    covering: &CoveringData,
    p: usize,
    t: Complex64,
    z: Complex64,
    eps: Complex64,
    beta_prime: f64,
    opts: &LaplaceOptions,
) -> Result<UValue> {
    if z.im.abs() >= beta_prime || beta_prime >= w.meta.beta {
        return Err(Error::InvalidInput(format!("need |Im z| < beta' < beta, got z = {z}, beta' = {beta_prime}")));
    }
    let et = eps * t;
    let d = covering.directions[p];
    if wrap(et.arg() - d).abs() >= 0.5 * covering.theta {
        return Err(Error::Inadmissible(format!("eps t = {et} lies outside the sector of direction {d:.4}")));
    }
    if et == ZERO {
        return Ok(UValue { value: [0.0, 0.0], truncation_bound: 0.0 });
    }
    let line = laplace_line(w, et, 0.0, f64::INFINITY, opts)?;
    let v = fourier_sum(&line.values, &w.mgrid, &[z])[0];
    Ok(UValue { value: [v.re, v.im], truncation_bound: line.truncation_bound })
}

/// Values of `w` on the arc `R e^{iθ}`, `θ ∈ [θ_0, θ_1]`, sampled at
/// Chebyshev–Lobatto angles and interpolated barycentrically in `θ`.
#[derive(Debug, Clone)]
pub struct ArcData {
    pub radius: f64,
    pub theta0: f64,
    pub theta1: f64,
    pub angles: Vec<f64>,
    /// `values[j][m]`.
    pub values: Vec<Vec<Complex64>>,
    pub mgrid: MGrid,
    pub k: f64,
}

/// Chebyshev–Lobatto angles on `[a, b]`, ascending.
pub fn lobatto_angles(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|j| {
            let x = -(std::f64::consts::PI * j as f64 / (n - 1) as f64).cos();
            a + 0.5 * (b - a) * (1.0 + x)
        })
        .collect()
}

/// Value of a ray grid at its edge `r`, read from the panel that ends there.
pub fn value_at_edge(w: &BorelGrid, r: f64) -> Result<Vec<Complex64>> {
    let idx = w
        .mesh
        .edges()
        .iter()
        .position(|&e| (e - r).abs() <= 1e-12 * r)
        .ok_or_else(|| Error::InvalidInput(format!("{r} is not a mesh edge")))?;
    if idx == 0 {
        return Err(Error::InvalidInput("edge at the origin".into()));
    }
    let s = w.mesh.stencil_in(idx - 1, r);
    Ok(combine(w, &s))
}

fn combine(w: &BorelGrid, s: &Stencil) -> Vec<Complex64> {
    let nm = w.nm();
    let mut out = vec![ZERO; nm];
    for (q, &c) in s.weights.iter().enumerate() {
        for (o, v) in out.iter_mut().zip(w.row(s.start + q)) {
            *o += v * c;
        }
    }
    out
}

impl ArcData {
    /// Builds the arc from short-ray solutions `(θ_j, w_j)` whose meshes end at `radius`.
    pub fn from_rays(radius: f64, rays: &[(f64, BorelGrid)]) -> Result<Self> {
        if rays.len() < 2 {
            return Err(Error::InvalidInput("an arc needs at least two rays".into()));
        }
        let mut values = Vec::with_capacity(rays.len());
        for (_, w) in rays {
            values.push(value_at_edge(w, radius)?);
        }
        Ok(Self {
            radius,
            theta0: rays[0].0,
            theta1: rays[rays.len() - 1].0,
            angles: rays.iter().map(|r| r.0).collect(),
            values,
            mgrid: rays[0].1.mgrid,
            k: rays[0].1.meta.k,
        })
    }

    /// Barycentric interpolation at angle `theta` (Chebyshev–Lobatto weights).
    pub fn at(&self, theta: f64) -> Vec<Complex64> {
        let n = self.angles.len();
        let nm = self.values[0].len();
        if let Some(j) = self.angles.iter().position(|&a| a == theta) {
            return self.values[j].clone();
        }
        let mut num = vec![ZERO; nm];
        let mut den = 0.0;
        for j in 0..n {
            let mut wj = if j % 2 == 0 { 1.0 } else { -1.0 };
            if j == 0 || j == n - 1 {
                wj *= 0.5;
            }
            let c = wj / (theta - self.angles[j]);
            den += c;
            for (o, v) in num.iter_mut().zip(&self.values[j]) {
                *o += v * c;
            }
        }
        num.iter().map(|v| v / den).collect()
    }

    /// `k i ∫_{θ_0}^{θ_1} w(R e^{iθ}, m) e^{-(R e^{iθ}/T)^k} dθ` for every `m`.
    pub fn integral(&self, t: Complex64, nodes: usize) -> Vec<Complex64> {
        let k = self.k;
        let x0 = (self.radius / t.norm()).powf(k);
        let span = self.theta1 - self.theta0;
        let pieces = ((span.abs() * k * x0.max(1.0)).ceil() as usize).max(2);
        let rule = gauss_legendre(nodes);
        let nm = self.values[0].len();
        let mut out = vec![ZERO; nm];
        let h = span / pieces as f64;
        for piece in 0..pieces {
            let a = self.theta0 + h * piece as f64;
            for (x, wq) in rule.nodes.iter().zip(&rule.weights) {
                let th = a + 0.5 * h * (1.0 + x);
                let phase = Complex64::from_polar(x0, k * (th - t.arg()));
                let f = Complex64::i() * k * (-phase).exp() * (0.5 * h * wq);
                for (o, v) in out.iter_mut().zip(self.at(th)) {
                    *o += v * f;
                }
            }
        }
        out
    }
}

/// The three pieces of `u_{p+1} - u_p` and the direct difference, per `z`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathDecomposition {
    pub i1: Vec<[f64; 2]>,
    pub i2: Vec<[f64; 2]>,
    pub i3: Vec<[f64; 2]>,
    pub direct: Vec<[f64; 2]>,
    /// `max_z |I_1 + I_2 + I_3 - direct| - (1e-6 |direct| + 1e-12)`; nonpositive on success.
    pub worst_excess: f64,
    pub max_mismatch: f64,
}

fn pair(z: Complex64) -> [f64; 2] {
    [z.re, z.im]
}

/// Splits `u_{p+1} - u_p` at radius `ρ/2 = arc.radius`: the outer parts of
/// both rays and the arc between them.
pub fn difference_paths(
    w_p: &BorelGrid,
    w_q: &BorelGrid,
    arc: &ArcData,
    t: Complex64,
    zs: &[Complex64],
    opts: &LaplaceOptions,
    arc_nodes: usize,
) -> Result<PathDecomposition> {
    let r = arc.radius;
    let outer_q = laplace_line(w_q, t, r, f64::INFINITY, opts)?;
    let outer_p = laplace_line(w_p, t, r, f64::INFINITY, opts)?;
    let inner_q = laplace_line(w_q, t, 0.0, r, opts)?;
    let inner_p = laplace_line(w_p, t, 0.0, r, opts)?;
    let arc_line = arc.integral(t, arc_nodes);
    let mg = &w_p.mgrid;
    let i1 = fourier_sum(&outer_q.values, mg, zs);
    let i2: Vec<Complex64> = fourier_sum(&outer_p.values, mg, zs).into_iter().map(|v| -v).collect();
    let i3 = fourier_sum(&arc_line, mg, zs);
    let full_q: Vec<Complex64> = inner_q.values.iter().zip(&outer_q.values).map(|(a, b)| a + b).collect();
    let full_p: Vec<Complex64> = inner_p.values.iter().zip(&outer_p.values).map(|(a, b)| a + b).collect();
    let diff: Vec<Complex64> = full_q.iter().zip(&full_p).map(|(a, b)| a - b).collect();
    let direct = fourier_sum(&diff, mg, zs);
    let mut worst = f64::NEG_INFINITY;
    let mut max_mismatch: f64 = 0.0;
    for j in 0..zs.len() {
        let mismatch = (i1[j] + i2[j] + i3[j] - direct[j]).norm();
        max_mismatch = max_mismatch.max(mismatch);
        worst = worst.max(mismatch - (1e-6 * direct[j].norm() + 1e-12));
    }
    Ok(PathDecomposition {
        i1: i1.into_iter().map(pair).collect(),
        i2: i2.into_iter().map(pair).collect(),
        i3: i3.into_iter().map(pair).collect(),
        direct: direct.into_iter().map(pair).collect(),
        worst_excess: worst,
        max_mismatch,
    })
}

/// `|u_{p+1} - u_p|` from full-ray Laplace lines for every `(t, z)`.
pub fn direct_differences(
    w_p: &BorelGrid,
    w_q: &BorelGrid,
    eps: Complex64,
    ts: &[Complex64],
    zs: &[Complex64],
    opts: &LaplaceOptions,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(ts.len() * zs.len());
    for &t in ts {
        let a = laplace_line(w_q, eps * t, 0.0, f64::INFINITY, opts)?;
        let b = laplace_line(w_p, eps * t, 0.0, f64::INFINITY, opts)?;
        let d: Vec<Complex64> = a.values.iter().zip(&b.values).map(|(x, y)| x - y).collect();
        out.extend(fourier_sum(&d, &w_p.mgrid, zs).into_iter().map(|v| v.norm()));
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub eps_abs: f64,
    pub eps_arg: f64,
    pub supdiff: f64,
    /// Ten times the change of the sup under a refined Laplace quadrature.
    pub noise_floor: f64,
    pub above_noise: bool,
    /// Largest `|I_1 + I_2 + I_3 - direct|` over the `(t, z)` grid.
    pub path_mismatch: f64,
    /// Largest excess over `1e-6 |direct| + 1e-12`; nonpositive when consistent.
    pub path_excess: f64,
    /// Set when the solves for this ε failed; the row is then missing.
    #[serde(default)]
    pub error: Option<String>,
}

impl SweepRow {
    pub fn missing(eps: Complex64, error: String) -> Self {
        Self {
            eps_abs: eps.norm(),
            eps_arg: eps.arg(),
            supdiff: f64::NAN,
            noise_floor: f64::NAN,
            above_noise: false,
            path_mismatch: f64::NAN,
            path_excess: f64::NAN,
            error: Some(error),
        }
    }
}

/// Sample grids for the sup over `(t, z)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepGrid {
    pub ts: Vec<Complex64>,
    pub zs: Vec<Complex64>,
}

impl SweepGrid {
    /// `t_j = σ' j / n_t` on the positive axis, `z` on `n_re` real parts in
    /// `[re_lo, re_hi]` times the imaginary levels.
    pub fn new(sigma: f64, n_t: usize, re_lo: f64, re_hi: f64, n_re: usize, im_levels: &[f64]) -> Self {
        let ts = (1..=n_t).map(|j| Complex64::new(sigma * j as f64 / n_t as f64, 0.0)).collect();
        let mut zs = Vec::new();
        for &im in im_levels {
            for i in 0..n_re {
                let re = if n_re == 1 { re_lo } else { re_lo + (re_hi - re_lo) * i as f64 / (n_re - 1) as f64 };
                zs.push(Complex64::new(re, im));
            }
        }
        Self { ts, zs }
    }
}

/// One sweep point: sup of the difference over the grid, its noise floor and
/// the path-decomposition consistency.
pub fn sweep_point(
    w_p: &BorelGrid,
    w_q: &BorelGrid,
    arc: &ArcData,
    eps: Complex64,
    grid: &SweepGrid,
    opts: &LaplaceOptions,
    arc_nodes: usize,
) -> Result<SweepRow> {
    let normal = direct_differences(w_p, w_q, eps, &grid.ts, &grid.zs, opts)?;
    let refined = direct_differences(w_p, w_q, eps, &grid.ts, &grid.zs, &opts.doubled())?;
    let supdiff = normal.iter().copied().fold(0.0, f64::max);
    let change = normal.iter().zip(&refined).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let noise_floor = 10.0 * change;
    let mut path_mismatch: f64 = 0.0;
    let mut path_excess = f64::NEG_INFINITY;
    for &t in &grid.ts {
        let d = difference_paths(w_p, w_q, arc, eps * t, &grid.zs, opts, arc_nodes)?;
        path_mismatch = path_mismatch.max(d.max_mismatch);
        path_excess = path_excess.max(d.worst_excess);
    }
    Ok(SweepRow {
        eps_abs: eps.norm(),
        eps_arg: eps.arg(),
        supdiff,
        noise_floor,
        above_noise: supdiff > noise_floor,
        path_mismatch,
        path_excess,
        error: None,
    })
}

/// `σ' = 0.5 (δ_1/(δ_2 + ν ε_0^k))^{1/k}`.
pub fn sigma_prime(delta1: f64, delta2: f64, nu: f64, eps0: f64, k: f64) -> f64 {
    0.5 * (delta1 / (delta2 + nu * eps0.powf(k))).powf(1.0 / k)
}

/// Smallest admissibility factor `cos(k(γ - arg(εt)))` over both rays.
pub fn admissibility_margin(gammas: &[f64], k: f64, eps_arg: f64, t_args: &[f64]) -> f64 {
    let mut m = f64::INFINITY;
    for &g in gammas {
        for &ta in t_args {
            m = m.min(admissibility(g, k, Complex64::from_polar(1.0, eps_arg + ta)));
        }
    }
    m
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScanPoint {
    pub kappa: f64,
    pub r2: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GevreyFit {
    pub log_k: f64,
    pub k_p: f64,
    pub m_p: f64,
    pub r2: f64,
    pub kappa_hat: f64,
    pub r2_at_kappa_hat: f64,
    pub scan: Vec<ScanPoint>,
    pub points: usize,
}

/// Least squares `y = a + b x`; returns `(a, b, R²)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let b = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let a = my - b * mx;
    let ss_res: f64 = x.iter().zip(y).map(|(u, v)| (v - a - b * u).powi(2)).sum();
    let r2 = if syy > 0.0 { 1.0 - ss_res / syy } else { 0.0 };
    (a, b, r2)
}

/// Fits `log(supdiff) ≈ log K - M |ε|^{-k}` on rows above the noise floor and
/// scans the exponent over `kappa_range`.
pub fn gevrey_fit(rows: &[SweepRow], k: f64, kappa_range: (f64, f64)) -> Result<GevreyFit> {
    let used: Vec<&SweepRow> = rows.iter().filter(|r| r.error.is_none() && r.above_noise && r.supdiff > 0.0).collect();
    if used.len() < 6 {
        return Err(Error::Numerical(format!("only {} sweep rows above the noise floor", used.len())));
    }
    let e: Vec<f64> = used.iter().map(|r| r.eps_abs).collect();
    let y: Vec<f64> = used.iter().map(|r| r.supdiff.ln()).collect();
    fit_with_scan(&e, &y, k, kappa_range)
}

/// Same fit on raw `(|ε|, log y)` data.
pub fn fit_with_scan(eps_abs: &[f64], log_y: &[f64], k: f64, kappa_range: (f64, f64)) -> Result<GevreyFit> {
    let quality = |kappa: f64| {
        let x: Vec<f64> = eps_abs.iter().map(|e| e.powf(-kappa)).collect();
        linear_fit(&x, log_y).2
    };
    let x: Vec<f64> = eps_abs.iter().map(|e| e.powf(-k)).collect();
    let (a, b, r2) = linear_fit(&x, log_y);
    let (lo, hi) = kappa_range;
    if !(hi > lo && lo > 0.0) {
        return Err(Error::InvalidInput(format!("bad kappa range ({lo}, {hi})")));
    }
    let n = 101;
    let scan: Vec<ScanPoint> = (0..n)
        .map(|i| {
            let kappa = lo + (hi - lo) * i as f64 / (n - 1) as f64;
            ScanPoint { kappa, r2: quality(kappa) }
        })
        .collect();
    let best = scan.iter().enumerate().max_by(|a, b| a.1.r2.total_cmp(&b.1.r2)).unwrap().0;
    let h = (hi - lo) / (n - 1) as f64;
    let (mut a_lo, mut a_hi) = ((lo + h * (best as f64 - 1.0)).max(lo), (lo + h * (best as f64 + 1.0)).min(hi));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = a_hi - g * (a_hi - a_lo);
    let mut d = a_lo + g * (a_hi - a_lo);
    for _ in 0..80 {
        if quality(c) > quality(d) {
            a_hi = d;
        } else {
            a_lo = c;
        }
        c = a_hi - g * (a_hi - a_lo);
        d = a_lo + g * (a_hi - a_lo);
    }
    let kappa_hat = 0.5 * (a_lo + a_hi);
    Ok(GevreyFit {
        log_k: a,
        k_p: a.exp(),
        m_p: -b,
        r2,
        kappa_hat,
        r2_at_kappa_hat: quality(kappa_hat),
        scan,
        points: eps_abs.len(),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AsymptoticFit {
    /// `coeffs[m][s]`: coefficient of `ε^m` at sample point `s`.
    pub coeffs: Vec<Vec<[f64; 2]>>,
    pub condition: f64,
    pub growth_c: f64,
    pub growth_m: f64,
    /// Whether the sector of the samples is wider than `π/k`.
    pub aperture_ok: bool,
}

/// Least-squares polynomial in `ε` of order `n` through `(ε_s, u_s)` at
/// each point, and a Gevrey growth fit `|h_m| ≤ C M^m Γ(1 + m/k)`.
pub fn asymptotic_coefficients(
    eps: &[Complex64],
    values: &[Vec<Complex64>],
    n: usize,
    k: f64,
    aperture: f64,
    max_condition: f64,
) -> Result<AsymptoticFit> {
    if eps.len() < 2 * n || values.len() != eps.len() {
        return Err(Error::InvalidInput(format!("need at least {} samples, got {}", 2 * n, eps.len())));
    }
    let rows = eps.len();
    let scale = eps.iter().map(|e| e.norm()).fold(0.0, f64::max);
    let a = nalgebra::DMatrix::from_fn(rows, n, |i, j| {
        let z = (eps[i] / scale).powi(j as i32);
        nalgebra::Complex::new(z.re, z.im)
    });
    let svd = a.clone().svd(true, true);
    let sv = &svd.singular_values;
    let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if condition > max_condition {
        return Err(Error::Numerical(format!("Vandermonde condition {condition:.3e} exceeds {max_condition:.1e}")));
    }
    let points = values[0].len();
    let mut coeffs = vec![vec![[0.0, 0.0]; points]; n];
    for s in 0..points {
        let b = nalgebra::DVector::from_fn(rows, |i, _| nalgebra::Complex::new(values[i][s].re, values[i][s].im));
        let c = svd.solve(&b, 0.0).map_err(|e| Error::Numerical(e.to_string()))?;
        for m in 0..n {
            let v = c[m] / scale.powi(m as i32);
            coeffs[m][s] = [v.re, v.im];
        }
    }
    let mags: Vec<f64> = coeffs.iter().map(|row| row.iter().map(|c| c[0].hypot(c[1])).fold(0.0, f64::max)).collect();
    let (ms, ls): (Vec<f64>, Vec<f64>) = mags
        .iter()
        .enumerate()
        .filter(|(_, &h)| h > 0.0)
        .map(|(m, &h)| (m as f64, (h / crate::special::gamma(1.0 + m as f64 / k)).ln()))
        .unzip();
    let growth_m = if ms.len() >= 2 { linear_fit(&ms, &ls).1.exp() } else { 1.0 };
    let growth_c = mags
        .iter()
        .enumerate()
        .map(|(m, &h)| h / (growth_m.powi(m as i32) * crate::special::gamma(1.0 + m as f64 / k)))
        .fold(0.0, f64::max);
    Ok(AsymptoticFit { coeffs, condition, growth_c, growth_m, aperture_ok: aperture > std::f64::consts::PI / k })
}
