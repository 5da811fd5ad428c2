//! Problem data, hypothesis checks and the Borel-plane forcing term.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{gamma, ln_gamma};
use crate::transforms::BorelGrid;

/// Upper bound on the size of each index set `I_l`.
pub const MAX_INDEX_SET: usize = 16;

fn c(z: [f64; 2]) -> Complex64 {
    Complex64::new(z[0], z[1])
}

/// Polynomial with complex coefficients in ascending degree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<[f64; 2]>", into = "Vec<[f64; 2]>")]
pub struct ComplexPolynomial {
    coeffs: Vec<Complex64>,
}

impl TryFrom<Vec<[f64; 2]>> for ComplexPolynomial {
    type Error = Error;
    fn try_from(raw: Vec<[f64; 2]>) -> Result<Self> {
        Self::new(raw.into_iter().map(c).collect())
    }
}

impl From<ComplexPolynomial> for Vec<[f64; 2]> {
    fn from(p: ComplexPolynomial) -> Self {
        p.coeffs.iter().map(|z| [z.re, z.im]).collect()
    }
}

impl ComplexPolynomial {
    /// Builds a polynomial; the leading coefficient must be nonzero.
    pub fn new(coeffs: Vec<Complex64>) -> Result<Self> {
        match coeffs.last() {
            None => Err(Error::Parse("polynomial needs at least one coefficient".into())),
            Some(z) if *z == Complex64::new(0.0, 0.0) && coeffs.len() > 1 => {
                Err(Error::Parse("leading polynomial coefficient must be nonzero".into()))
            }
            _ => Ok(Self { coeffs }),
        }
    }

    pub fn from_real(coeffs: &[f64]) -> Result<Self> {
        Self::new(coeffs.iter().map(|&x| Complex64::new(x, 0.0)).collect())
    }

    pub fn constant(value: Complex64) -> Self {
        Self { coeffs: vec![value] }
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn leading(&self) -> Complex64 {
        *self.coeffs.last().unwrap()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|z| *z == Complex64::new(0.0, 0.0))
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        self.coeffs.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &a| acc * z + a)
    }

    /// Value at `i m`.
    pub fn eval_im(&self, m: f64) -> Complex64 {
        self.eval(Complex64::new(0.0, m))
    }

    /// `Σ |a_j| r^j`, an upper bound for `sup_{|z| ≤ r} |P(z)|`.
    pub fn abs_bound(&self, r: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, a| acc * r + a.norm())
    }
}

/// One level `l` of the equation: coefficient, integer exponents, Moebius
/// shift and the ε-polynomials `A_{l,n}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Level {
    pub c: [f64; 2],
    pub d: u32,
    pub delta: u32,
    pub big_delta: u32,
    pub kappa: f64,
    pub terms: Vec<LevelTerm>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelTerm {
    pub n: u32,
    pub a: ComplexPolynomial,
}

impl Level {
    pub fn coefficient(&self) -> Complex64 {
        c(self.c)
    }

    /// Exponent of ε in front of the level.
    pub fn eps_exponent(&self) -> i64 {
        self.big_delta as i64 - self.d as i64 + self.delta as i64
    }

    pub fn index_set(&self) -> BTreeMap<u32, &ComplexPolynomial> {
        self.terms.iter().map(|t| (t.n, &t.a)).collect()
    }
}

/// Modal factor of a forcing profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Modal {
    #[default]
    None,
    Cos {
        omega: f64,
    },
    Sin {
        omega: f64,
    },
}

impl Modal {
    pub fn eval(&self, m: f64) -> f64 {
        match *self {
            Modal::None => 1.0,
            Modal::Cos { omega } => (omega * m).cos(),
            Modal::Sin { omega } => (omega * m).sin(),
        }
    }
}

/// `F_n(m, ε) = P(ε) · amplitude · (1+|m|)^{-mu} e^{-beta |m|} · modal(m)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForcingMode {
    pub n: u32,
    pub amplitude: [f64; 2],
    pub mu: f64,
    pub beta: f64,
    #[serde(default)]
    pub modal: Modal,
    #[serde(default = "unit_poly")]
    pub eps_poly: ComplexPolynomial,
}

fn unit_poly() -> ComplexPolynomial {
    ComplexPolynomial::constant(Complex64::new(1.0, 0.0))
}

impl ForcingMode {
    pub fn profile(&self, m: f64) -> Complex64 {
        let a = m.abs();
        c(self.amplitude) * ((1.0 + a).powf(-self.mu) * (-self.beta * a).exp() * self.modal.eval(m))
    }

    pub fn value(&self, m: f64, eps: Complex64) -> Complex64 {
        self.eps_poly.eval(eps) * self.profile(m)
    }
}

/// Geometric family `F_n = amplitude T_0^{-n} (1+|m|)^{-mu} e^{-beta|m|}`, `n ≥ 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometricForcing {
    pub amplitude: f64,
    pub mu: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForcingSpec {
    pub k0: f64,
    pub t0: f64,
    pub beta: f64,
    pub mu: f64,
    #[serde(default)]
    pub modes: Vec<ForcingMode>,
    #[serde(default)]
    pub geometric: Option<GeometricForcing>,
}

impl ForcingSpec {
    /// The explicit modes followed by the first `n_psi` geometric terms.
    pub fn expanded(&self, n_psi: usize) -> Vec<ForcingMode> {
        let mut out = self.modes.clone();
        if let Some(g) = &self.geometric {
            for n in 1..=n_psi {
                out.push(ForcingMode {
                    n: n as u32,
                    amplitude: [g.amplitude * self.t0.powi(-(n as i32)), 0.0],
                    mu: g.mu,
                    beta: g.beta,
                    modal: Modal::None,
                    eps_poly: unit_poly(),
                });
            }
        }
        out
    }
}

/// Complete data of the singularly perturbed problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub k: f64,
    pub alpha_d: f64,
    pub eps0: f64,
    pub c12: [f64; 2],
    pub cf: [f64; 2],
    pub q: ComplexPolynomial,
    pub q1: ComplexPolynomial,
    pub q2: ComplexPolynomial,
    /// `R_1, ..., R_{D-1}`.
    pub r_levels: Vec<ComplexPolynomial>,
    pub r_d: ComplexPolynomial,
    pub levels: Vec<Level>,
    pub forcing: ForcingSpec,
}

impl ProblemSpec {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// Number of terms `D` (levels plus the leading exponential term).
    pub fn big_d(&self) -> usize {
        self.levels.len() + 1
    }

    pub fn c12(&self) -> Complex64 {
        c(self.c12)
    }

    pub fn cf(&self) -> Complex64 {
        c(self.cf)
    }

    /// True when neither the equation nor the forcing depends on ε.
    pub fn is_eps_independent(&self, n_psi: usize) -> bool {
        self.levels.iter().all(|l| l.eps_exponent() == 0 && l.terms.iter().all(|t| t.a.degree() == 0))
            && self.forcing.expanded(n_psi).iter().all(|f| f.eps_poly.degree() == 0)
    }
}

/// `d_{l,k} = d_l - δ_l (k+1)`, required positive.
pub fn d_lk(spec: &ProblemSpec, l: usize) -> Result<f64> {
    let level = spec
        .levels
        .get(l.checked_sub(1).ok_or_else(|| Error::InvalidInput("levels start at 1".into()))?)
        .ok_or_else(|| Error::InvalidInput(format!("no level {l}")))?;
    let v = level.d as f64 - level.delta as f64 * (spec.k + 1.0);
    if v > 0.0 {
        Ok(v)
    } else {
        Err(Error::Hypothesis(format!("level {l}: d_l - delta_l (k+1) = {v} is not positive")))
    }
}

/// Coefficients `A_{δ,p}`, `p = 1..δ-1`, with
/// `T^{δ(k+1)} ∂_T^δ = (T^{k+1}∂_T)^δ + Σ_p A_{δ,p} T^{k(δ-p)} (T^{k+1}∂_T)^p`.
///
/// On `T^a` the identity reads
/// `a(a-1)...(a-δ+1) = Π_{j<δ}(a+jk) + Σ_p A_{δ,p} Π_{j<p}(a+jk)`,
/// so the coefficients are the expansion of the falling factorial in the
/// Newton basis `Π_{j<p}(a+jk)`, computed by repeated division.
pub fn tahara_coefficients(delta: u32, k: f64) -> Vec<f64> {
    let d = delta as usize;
    if d <= 1 {
        return Vec::new();
    }
    // Falling factorial in the monomial basis, ascending degree.
    let mut poly = vec![1.0];
    for j in 0..d {
        poly = mul_linear(&poly, -(j as f64));
    }
    // Synthetic division by (a + 0k), (a + 1k), ... gives the Newton coordinates.
    let mut coords = Vec::with_capacity(d + 1);
    let mut cur = poly;
    for j in 0..=d {
        let root = -(j as f64) * k;
        let (q, r) = divide_linear(&cur, root);
        coords.push(r);
        cur = q;
        if cur.is_empty() {
            break;
        }
    }
    coords.resize(d + 1, 0.0);
    coords[1..d].to_vec()
}

fn mul_linear(p: &[f64], c0: f64) -> Vec<f64> {
    let mut out = vec![0.0; p.len() + 1];
    for (i, &a) in p.iter().enumerate() {
        out[i] += a * c0;
        out[i + 1] += a;
    }
    out
}

/// Divides `p(a)` by `(a - root)`; returns quotient and remainder.
fn divide_linear(p: &[f64], root: f64) -> (Vec<f64>, f64) {
    let n = p.len();
    if n == 1 {
        return (Vec::new(), p[0]);
    }
    let mut q = vec![0.0; n - 1];
    let mut carry = 0.0;
    for i in (1..n).rev() {
        carry = p[i] + carry * root;
        q[i - 1] = carry;
    }
    (q, p[0] + carry * root)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// Passed checks may still carry a warning.
    pub warning: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnnulusReport {
    pub r1: f64,
    pub r2: f64,
    pub direction: f64,
    pub half_aperture: f64,
    /// Ratio of leading coefficients, the `|m| → ∞` limit.
    pub limit: [f64; 2],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
    pub annulus: Option<AnnulusReport>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    fn push(&mut self, name: &str, passed: bool, detail: String) {
        self.checks.push(Check { name: name.into(), passed, warning: false, detail });
    }
}

/// Checks every hypothesis on the data. Fails hard only when `k ∉ (1/2, 1)`.
pub fn validate_spec(spec: &ProblemSpec, m_grid: &[f64]) -> Result<ValidationReport> {
    let k = spec.k;
    if !(k > 0.5 && k < 1.0) {
        return Err(Error::Hypothesis(format!("k = {k} must lie in (1/2, 1)")));
    }
    if m_grid.is_empty() {
        return Err(Error::InvalidInput("empty m-grid".into()));
    }
    let mut rep = ValidationReport { checks: Vec::new(), annulus: None };
    let symmetric = {
        let mut s: Vec<f64> = m_grid.to_vec();
        s.sort_by(f64::total_cmp);
        s.iter().zip(s.iter().rev()).all(|(a, b)| (a + b).abs() <= 1e-12 * a.abs().max(1.0))
    };
    rep.push("m-grid symmetric", symmetric, format!("{} nodes", m_grid.len()));

    rep.push("D >= 2", !spec.levels.is_empty(), format!("D = {}", spec.big_d()));
    rep.push(
        "R_l given for every level",
        spec.r_levels.len() == spec.levels.len(),
        format!("{} polynomials for {} levels", spec.r_levels.len(), spec.levels.len()),
    );
    rep.push("alpha_D > 0", spec.alpha_d > 0.0, format!("alpha_D = {}", spec.alpha_d));
    rep.push("eps_0 > 0", spec.eps0 > 0.0, format!("eps_0 = {}", spec.eps0));

    let mut prev_delta = 0u32;
    for (i, lv) in spec.levels.iter().enumerate() {
        let l = i + 1;
        let dlk = lv.d as f64 - lv.delta as f64 * (k + 1.0);
        rep.push(
            &format!("level {l}: d_l > delta_l (k+1)"),
            dlk > 0.0,
            format!("d_l = {}, delta_l = {}, d_lk = {dlk}", lv.d, lv.delta),
        );
        rep.push(
            &format!("level {l}: Delta_l - d_l + delta_l >= 0"),
            lv.eps_exponent() >= 0,
            format!("exponent {}", lv.eps_exponent()),
        );
        rep.push(&format!("level {l}: kappa_l > 0"), lv.kappa > 0.0, format!("kappa_l = {}", lv.kappa));
        let delta_ok = if l == 1 { lv.delta == 1 } else { lv.delta > prev_delta };
        rep.push(
            &format!("level {l}: delta ordering"),
            delta_ok,
            format!("delta_{l} = {} (previous {prev_delta})", lv.delta),
        );
        prev_delta = lv.delta;
        let distinct = lv.index_set().len() == lv.terms.len();
        rep.push(
            &format!("level {l}: index set"),
            !lv.terms.is_empty() && lv.terms.len() <= MAX_INDEX_SET && distinct,
            format!("|I_l| = {} (cap {MAX_INDEX_SET}), distinct = {distinct}", lv.terms.len()),
        );
        if dlk > 0.0 {
            let bad: Vec<u32> = lv
                .terms
                .iter()
                .map(|t| t.n)
                .filter(|&n| {
                    let total = n as f64 + dlk + k * lv.delta as f64;
                    (total - total.round()).abs() > 1e-9
                })
                .collect();
            let check = Check {
                name: format!("level {l}: kernel integrality"),
                passed: true,
                warning: !bad.is_empty(),
                detail: if bad.is_empty() {
                    "n + d_lk + k delta_l is an integer for every n".into()
                } else {
                    format!("non-integer n + d_lk + k delta_l for n in {bad:?}")
                },
            };
            rep.checks.push(check);
        }
    }

    let dq = spec.q.degree();
    let drd = spec.r_d.degree();
    rep.push("deg Q = deg R_D", dq == drd, format!("deg Q = {dq}, deg R_D = {drd}"));
    let max_rl = spec.r_levels.iter().map(|r| r.degree()).max().unwrap_or(0);
    rep.push("deg R_D >= deg R_l", drd >= max_rl, format!("max deg R_l = {max_rl}"));
    rep.push(
        "deg R_D >= deg Q1, deg Q2",
        drd >= spec.q1.degree() && drd >= spec.q2.degree(),
        format!("deg Q1 = {}, deg Q2 = {}", spec.q1.degree(), spec.q2.degree()),
    );

    let scale_q = spec.q.coeffs().iter().map(|z| z.norm()).fold(0.0, f64::max);
    let scale_r = spec.r_d.coeffs().iter().map(|z| z.norm()).fold(0.0, f64::max);
    let q_zero =
        m_grid.iter().find(|&&m| spec.q.eval_im(m).norm() <= 1e-12 * scale_q * (1.0 + m.abs()).powi(dq as i32));
    rep.push(
        "Q(im) != 0",
        q_zero.is_none(),
        q_zero.map_or("no zero on the grid".into(), |m| format!("Q vanishes at m = {m}")),
    );
    let r_zero =
        m_grid.iter().find(|&&m| spec.r_d.eval_im(m).norm() <= 1e-12 * scale_r * (1.0 + m.abs()).powi(drd as i32));
    rep.push(
        "R_D(im) != 0",
        r_zero.is_none(),
        r_zero.map_or("no zero on the grid".into(), |m| format!("R_D vanishes at m = {m}")),
    );

    if q_zero.is_none() && r_zero.is_none() {
        let mut ratios: Vec<Complex64> = m_grid.iter().map(|&m| spec.q.eval_im(m) / spec.r_d.eval_im(m)).collect();
        let limit = if dq == drd { spec.q.leading() / spec.r_d.leading() } else { Complex64::new(f64::NAN, f64::NAN) };
        if limit.is_finite() {
            ratios.push(limit);
        }
        let r1 = ratios.iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min);
        let r2 = ratios.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let args: Vec<f64> = ratios.iter().map(|z| z.arg()).collect();
        let lo = args.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = args.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let ann = AnnulusReport {
            r1,
            r2,
            direction: 0.5 * (lo + hi),
            half_aperture: 0.5 * (hi - lo),
            limit: [limit.re, limit.im],
        };
        rep.push(
            "Q(im)/R_D(im) in annulus with r1 > 1",
            r1 > 1.0 && limit.is_finite(),
            format!("r1 = {r1}, r2 = {r2}, d = {}, eta = {}", ann.direction, ann.half_aperture),
        );
        rep.annulus = Some(ann);
    }

    let f = &spec.forcing;
    let need_mu = spec.q1.degree().max(spec.q2.degree()) as f64 + 1.0;
    rep.push("mu > max(deg Q1, deg Q2) + 1", f.mu > need_mu, format!("mu = {}, bound {need_mu}", f.mu));
    rep.push(
        "K_0, T_0, beta > 0",
        f.k0 > 0.0 && f.t0 > 0.0 && f.beta > 0.0,
        format!("K_0 = {}, T_0 = {}, beta = {}", f.k0, f.t0, f.beta),
    );
    let modes = f.expanded(default_n_psi_probe(spec));
    for mode in &modes {
        let decay_ok = mode.mu >= f.mu && mode.beta >= f.beta;
        let norm = m_grid
            .iter()
            .map(|&m| {
                let a = m.abs();
                (1.0 + a).powf(f.mu) * (f.beta * a).exp() * mode.profile(m).norm()
            })
            .fold(0.0, f64::max)
            * mode.eps_poly.abs_bound(spec.eps0);
        let bound = f.k0 * f.t0.powi(-(mode.n as i32));
        rep.push(
            &format!("forcing n = {}: profile bound", mode.n),
            decay_ok && norm <= bound * (1.0 + 1e-12) && mode.n >= 1,
            format!("||F_n|| = {norm:.6e} <= K_0 T_0^-n = {bound:.6e}, mu' = {}, beta' = {}", mode.mu, mode.beta),
        );
    }
    Ok(rep)
}

fn default_n_psi_probe(spec: &ProblemSpec) -> usize {
    if spec.forcing.geometric.is_some() {
        8
    } else {
        0
    }
}

/// Result of [`forcing_psi`].
#[derive(Debug, Clone)]
pub struct ForcingGrid {
    pub psi: BorelGrid,
    pub n_psi: usize,
    /// Weighted-norm bound of the neglected geometric tail on the grid.
    pub tail_bound: f64,
    pub tail_warning: bool,
}

/// Weighted tail `sup_r (1+r^{2k})/r^k e^{-ν r^k} Σ_{n>N} a T_0^{-n} r^n / Γ(n/k)`.
pub fn geometric_tail(spec: &ProblemSpec, n_psi: usize, radii: &[f64], nu: f64) -> f64 {
    let Some(g) = &spec.forcing.geometric else {
        return 0.0;
    };
    let k = spec.k;
    radii
        .iter()
        .filter(|&&r| r > 0.0)
        .map(|&r| {
            let rk = r.powf(k);
            let weight = (1.0 + rk * rk) / rk * (-nu * rk).exp();
            let mut sum = 0.0;
            for n in n_psi + 1..n_psi + 600 {
                let nf = n as f64;
                let term = (g.amplitude.ln() + nf * (r / spec.forcing.t0).ln() - ln_gamma(nf / k)).exp();
                sum += term;
                if term < 1e-18 * sum && nf / k > 2.0 * r / spec.forcing.t0 {
                    break;
                }
            }
            weight * sum
        })
        .fold(0.0, f64::max)
}

/// Smallest truncation `N_ψ` whose weighted geometric tail is below `tol`.
pub fn default_n_psi(spec: &ProblemSpec, radii: &[f64], nu: f64, tol: f64) -> usize {
    if spec.forcing.geometric.is_none() {
        return 0;
    }
    (1..2000).find(|&n| geometric_tail(spec, n, radii, nu) < tol).unwrap_or(2000)
}

/// `ψ(τ, m, ε) = Σ_n F_n(m, ε) τ^n / Γ(n/k)` on the nodes of `template`.
pub fn forcing_psi(spec: &ProblemSpec, template: &BorelGrid, n_psi: usize, tail_tol: f64) -> ForcingGrid {
    let modes = spec.forcing.expanded(n_psi);
    let mut psi = template.zeros_like();
    let ms = template.mgrid.nodes();
    let nm = ms.len();
    for mode in &modes {
        let fm: Vec<Complex64> = ms.iter().map(|&m| mode.value(m, template.eps)).collect();
        let g = gamma(mode.n as f64 / spec.k);
        for (i, &r) in template.mesh.nodes().iter().enumerate() {
            let tn = Complex64::from_polar(r.powi(mode.n as i32), mode.n as f64 * template.gamma) / g;
            let row = &mut psi.values[i * nm..(i + 1) * nm];
            for (v, f) in row.iter_mut().zip(&fm) {
                *v += f * tn;
            }
        }
    }
    let tail_bound = geometric_tail(spec, n_psi, template.mesh.nodes(), template.meta.nu);
    ForcingGrid { psi, n_psi, tail_bound, tail_warning: tail_bound > tail_tol }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_eval_on_imaginary_axis() {
        let q = ComplexPolynomial::from_real(&[-2.0, 0.0, 2.0]).unwrap();
        assert_eq!(q.eval_im(1.5), Complex64::new(-2.0 - 4.5, 0.0));
        assert_eq!(q.degree(), 2);
    }

    #[test]
    fn zero_leading_coefficient_rejected() {
        assert!(ComplexPolynomial::from_real(&[1.0, 0.0]).is_err());
    }

    #[test]
    fn tahara_small_cases() {
        assert!(tahara_coefficients(1, 0.75).is_empty());
        let a = tahara_coefficients(2, 0.75);
        assert_eq!(a.len(), 1);
        assert!((a[0] + 1.75).abs() < 1e-14);
    }
}
