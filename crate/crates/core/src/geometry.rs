//! Singular locus of the Borel symbol, forbidden directions, good coverings
//! and sampled lower bounds for `H(τ, m) = Q(im) - exp(α_D k τ^k) R_D(im)`.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{Check, ProblemSpec};
use crate::special::{cpow, gamma, polar_pow};

/// Wraps an angle into `(-π, π]`.
pub fn wrap(a: f64) -> f64 {
    let mut x = a.rem_euclid(2.0 * PI);
    if x > PI {
        x -= 2.0 * PI;
    }
    x
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sector {
    pub direction: f64,
    pub aperture: f64,
    /// `f64::INFINITY` for unbounded sectors.
    pub radius: f64,
}

impl Sector {
    pub fn new(direction: f64, aperture: f64, radius: f64) -> Result<Self> {
        if !(aperture > 0.0) || !(radius > 0.0) {
            return Err(Error::InvalidInput(format!(
                "sector needs positive aperture and radius, got {aperture}, {radius}"
            )));
        }
        Ok(Self { direction, aperture, radius })
    }

    pub fn contains_arg(&self, arg: f64) -> bool {
        wrap(arg - self.direction).abs() < 0.5 * self.aperture
    }

    pub fn contains(&self, z: Complex64) -> bool {
        z.norm() > 0.0 && z.norm() < self.radius && self.contains_arg(z.arg())
    }
}

fn ratio(spec: &ProblemSpec, m: f64) -> Result<Complex64> {
    let q = spec.q.eval_im(m);
    let rd = spec.r_d.eval_im(m);
    let scale = spec.q.abs_bound(m.abs()).max(spec.r_d.abs_bound(m.abs())).max(f64::MIN_POSITIVE);
    if q.norm() <= 1e-14 * scale || rd.norm() <= 1e-14 * scale {
        return Err(Error::Hypothesis(format!("Q(im) or R_D(im) vanishes at m = {m}")));
    }
    Ok(q / rd)
}

/// `a_l(m) = log|Q(im)/R_D(im)| + i arg(Q(im)/R_D(im)) + 2lπi`.
pub fn a_l(spec: &ProblemSpec, m: f64, l: i32) -> Result<Complex64> {
    let z = ratio(spec, m)?;
    Ok(Complex64::new(z.norm().ln(), z.arg() + 2.0 * PI * l as f64))
}

/// The root `τ_l(m)` of `H(·, m)` with `α_D k τ^k = a_l(m)` on the principal branch.
pub fn tau_l(spec: &ProblemSpec, m: f64, l: i32) -> Result<Complex64> {
    let a = a_l(spec, m, l)?;
    if a.re <= 0.0 {
        return Err(Error::Hypothesis(format!(
            "|Q(im)/R_D(im)| = {} <= 1 at m = {m}: arg a_l leaves (-pi/2, pi/2)",
            a.re.exp()
        )));
    }
    let k = spec.k;
    Ok(Complex64::from_polar((a.norm() / (spec.alpha_d * k)).powf(1.0 / k), a.arg() / k))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SingularityRow {
    pub l: i32,
    pub m: f64,
    pub tau: [f64; 2],
}

pub fn singularity_table(spec: &ProblemSpec, m_grid: &[f64], l_max: i32) -> Result<Vec<SingularityRow>> {
    let mut rows = Vec::new();
    for l in -l_max..=l_max {
        for &m in m_grid {
            let t = tau_l(spec, m, l)?;
            rows.push(SingularityRow { l, m, tau: [t.re, t.im] });
        }
    }
    Ok(rows)
}

/// Closed interval of forbidden ray arguments coming from one branch `l`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ForbiddenInterval {
    pub l: i32,
    pub lo: f64,
    pub hi: f64,
    /// Whether the interval meets `(-π/2, π/2)`, where Borel directions live.
    pub blocking: bool,
}

impl ForbiddenInterval {
    pub fn contains(&self, a: f64) -> bool {
        a >= self.lo && a <= self.hi
    }

    pub fn distance(&self, a: f64) -> f64 {
        if self.contains(a) {
            0.0
        } else {
            (self.lo - a).abs().min((a - self.hi).abs())
        }
    }
}

/// `{arg(a_l(m))/k}` over the grid for `l` in `l_range`, dilated by `margin`.
pub fn forbidden_directions(
    spec: &ProblemSpec,
    m_grid: &[f64],
    l_range: std::ops::RangeInclusive<i32>,
    margin: f64,
) -> Result<Vec<ForbiddenInterval>> {
    let mut out = Vec::new();
    for l in l_range {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &m in m_grid {
            let a = a_l(spec, m, l)?.arg() / spec.k;
            lo = lo.min(a);
            hi = hi.max(a);
        }
        if lo.is_finite() {
            let (lo, hi) = (lo - margin, hi + margin);
            out.push(ForbiddenInterval { l, lo, hi, blocking: hi > -FRAC_PI_2 && lo < FRAC_PI_2 });
        }
    }
    Ok(out)
}

/// `H(τ, m) = Q(im) - exp(α_D k τ^k) R_D(im)`.
pub fn h_value(spec: &ProblemSpec, tau: Complex64, m: f64) -> Result<Complex64> {
    if tau.im == 0.0 && tau.re < 0.0 {
        return Err(Error::InvalidInput(format!("tau = {tau} lies on the cut")));
    }
    let e = (cpow(tau, spec.k) * (spec.alpha_d * spec.k)).exp();
    Ok(spec.q.eval_im(m) - e * spec.r_d.eval_im(m))
}

/// `H` on a ray point given in polar form.
pub fn h_polar(spec: &ProblemSpec, r: f64, gamma_dir: f64, m: f64) -> Complex64 {
    let e = (polar_pow(r, gamma_dir, spec.k) * (spec.alpha_d * spec.k)).exp();
    spec.q.eval_im(m) - e * spec.r_d.eval_im(m)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CoveringOptions {
    pub varsigma: usize,
    /// Aperture of the Laplace sectors; defaults to `π/k + 0.1`.
    pub theta: Option<f64>,
    pub r_t: f64,
    /// Aperture of the time sector around direction 0.
    pub time_aperture: f64,
    pub rho: f64,
    /// Angular width of each pairwise overlap `E_p ∩ E_{p+1}`.
    pub overlap: f64,
    pub l_max: i32,
    pub forbidden_margin: f64,
    /// Extra distance kept between a direction and any forbidden interval.
    pub clearance: f64,
    /// Distance kept from `±π/2`.
    pub edge_margin: f64,
    /// Half aperture of the Borel sectors `S_d`.
    pub borel_half_width: f64,
    /// Directions imposed instead of the automatic choice, one per sector.
    pub directions: Option<Vec<f64>>,
}

impl Default for CoveringOptions {
    fn default() -> Self {
        Self {
            varsigma: 3,
            theta: None,
            r_t: 1.0,
            time_aperture: 0.1,
            rho: 0.5,
            overlap: 0.2,
            l_max: 8,
            forbidden_margin: 0.05,
            clearance: 0.45,
            edge_margin: 0.07,
            borel_half_width: 0.05,
            directions: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoveringData {
    pub varsigma: usize,
    pub eps_sectors: Vec<Sector>,
    pub directions: Vec<f64>,
    pub borel_sectors: Vec<Sector>,
    pub time_sector: Sector,
    pub rho: f64,
    pub theta: f64,
    pub forbidden: Vec<ForbiddenInterval>,
    pub checks: Vec<Check>,
    pub warnings: Vec<String>,
}

impl CoveringData {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// Bisector of the overlap `E_p ∩ E_{p+1}`.
    pub fn overlap_direction(&self, p: usize) -> f64 {
        let a = self.eps_sectors[p].direction;
        let b = self.eps_sectors[(p + 1) % self.varsigma].direction;
        wrap(a + 0.5 * wrap(b - a))
    }
}

fn check(name: &str, passed: bool, detail: String) -> Check {
    Check { name: name.into(), passed, warning: false, detail }
}

/// Chooses the covering, directions and radii and verifies them by sampling.
pub fn plan_covering(spec: &ProblemSpec, m_grid: &[f64], opts: &CoveringOptions) -> Result<CoveringData> {
    let k = spec.k;
    let s = opts.varsigma;
    if s < 2 {
        return Err(Error::InvalidInput("varsigma must be at least 2".into()));
    }
    let theta = opts.theta.unwrap_or(PI / k + 0.1);
    if theta <= PI / k {
        return Err(Error::InvalidInput(format!("theta = {theta} must exceed pi/k = {}", PI / k)));
    }
    let aperture = 2.0 * PI / s as f64 + opts.overlap;
    if opts.overlap <= 0.0 || opts.overlap >= 2.0 * PI / s as f64 {
        return Err(Error::InvalidInput("overlap must lie in (0, 2pi/varsigma)".into()));
    }
    let mut warnings = Vec::new();
    let forbidden = forbidden_directions(spec, m_grid, -opts.l_max..=opts.l_max, opts.forbidden_margin)?;

    // Admissible arguments: (-π/2, π/2) shrunk by the edge margin, minus
    // blocking intervals widened by the clearance.
    let lo_edge = -FRAC_PI_2 + opts.edge_margin;
    let hi_edge = FRAC_PI_2 - opts.edge_margin;
    let mut banned: Vec<(f64, f64)> =
        forbidden.iter().filter(|f| f.blocking).map(|f| (f.lo - opts.clearance, f.hi + opts.clearance)).collect();
    banned.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut gaps = Vec::new();
    let mut start = lo_edge;
    for &(a, b) in &banned {
        if a > start {
            gaps.push((start, a.min(hi_edge)));
        }
        start = start.max(b);
    }
    if start < hi_edge {
        gaps.push((start, hi_edge));
    }
    gaps.retain(|g| g.1 > g.0);
    if gaps.is_empty() && opts.directions.is_none() {
        return Err(Error::Inadmissible("no gap of admissible directions in (-pi/2, pi/2)".into()));
    }

    let mut eps_sectors = Vec::with_capacity(s);
    let mut directions = Vec::with_capacity(s);
    for p in 0..s {
        let phi = wrap(2.0 * PI * p as f64 / s as f64);
        eps_sectors.push(Sector::new(phi, aperture, spec.eps0)?);
        // Nearest admissible argument; ties go to the smaller one.
        let mut best = (f64::INFINITY, 0.0);
        for &(a, b) in &gaps {
            let x = phi.clamp(a, b);
            let dist = (x - phi).abs();
            if dist < best.0 - 1e-12 {
                best = (dist, x);
            }
        }
        let d = match &opts.directions {
            Some(forced) => *forced
                .get(p)
                .ok_or_else(|| Error::InvalidInput(format!("{} forced directions for {s} sectors", forced.len())))?,
            None => best.1,
        };
        let reach = wrap(phi - d).abs() + 0.5 * aperture + 0.5 * opts.time_aperture;
        if reach >= 0.5 * theta {
            return Err(Error::Inadmissible(format!(
                "direction {d:.4} for sector {p} cannot reach arguments of eps*t: needs {reach:.4} < theta/2 = {:.4}",
                0.5 * theta
            )));
        }
        directions.push(d);
    }

    // Cut-disc radius below every |τ_l|.
    let mut min_tau = f64::INFINITY;
    for l in -opts.l_max..=opts.l_max {
        for &m in m_grid {
            min_tau = min_tau.min(tau_l(spec, m, l)?.norm());
        }
    }
    let mut rho = opts.rho;
    if rho >= 0.9 * min_tau {
        let new = 0.9 * min_tau;
        warnings.push(format!("rho = {rho} reduced to {new:.6} below min |tau_l| = {min_tau:.6}"));
        rho = new;
    }

    let borel_sectors: Vec<Sector> = directions
        .iter()
        .map(|&d| Sector::new(d, 2.0 * opts.borel_half_width, f64::INFINITY))
        .collect::<Result<_>>()?;
    let time_sector = Sector::new(0.0, opts.time_aperture, opts.r_t)?;

    let mut checks = Vec::new();
    // Cyclic pairwise overlaps.
    let mut min_overlap = f64::INFINITY;
    for p in 0..s {
        let a = &eps_sectors[p];
        let b = &eps_sectors[(p + 1) % s];
        let width = 0.5 * (a.aperture + b.aperture) - wrap(b.direction - a.direction).abs();
        min_overlap = min_overlap.min(width);
    }
    checks.push(check("pairwise overlaps nonempty", min_overlap > 0.0, format!("min overlap width {min_overlap:.4}")));
    // Triple intersections and union, sampled on the circle.
    let samples = 3600;
    let mut max_cover = 0usize;
    let mut min_cover = usize::MAX;
    for i in 0..samples {
        let a = -PI + 2.0 * PI * (i as f64 + 0.5) / samples as f64;
        let c = eps_sectors.iter().filter(|e| e.contains_arg(a)).count();
        max_cover = max_cover.max(c);
        min_cover = min_cover.min(c);
    }
    checks.push(check("no triple intersections", max_cover <= 2, format!("max multiplicity {max_cover}")));
    checks.push(check("union covers punctured disc", min_cover >= 1, format!("min multiplicity {min_cover}")));
    // Singularities stay outside S_d and the cut disc.
    let mut clear = true;
    let mut detail = String::from("all tau_l outside");
    for (p, sec) in borel_sectors.iter().enumerate() {
        for l in -opts.l_max..=opts.l_max {
            for &m in m_grid {
                let t = tau_l(spec, m, l)?;
                if sec.contains_arg(t.arg()) || t.norm() <= rho {
                    clear = false;
                    detail = format!("tau_{l}(m = {m}) = {t} meets S_d{p} or the cut disc");
                }
            }
        }
    }
    checks.push(check("tau_l outside S_d and D(0, rho)", clear, detail));
    // ε t membership in the Laplace sectors.
    let mut worst: f64 = 0.0;
    let mut inside = true;
    for (p, e) in eps_sectors.iter().enumerate() {
        for i in 0..41 {
            let ae = e.direction + e.aperture * (i as f64 / 40.0 - 0.5) * (1.0 - 1e-9);
            for j in 0..11 {
                let at = time_sector.aperture * (j as f64 / 10.0 - 0.5) * (1.0 - 1e-9);
                let off = wrap(ae + at - directions[p]).abs();
                worst = worst.max(off);
                inside &= off < 0.5 * theta;
            }
        }
        inside &= spec.eps0 * opts.r_t <= spec.eps0 * time_sector.radius;
    }
    checks.push(check(
        "eps*t in S_(d_p, theta, eps0 r_T)",
        inside,
        format!("max |arg(eps t) - d_p| = {worst:.4} vs theta/2 = {:.4}", 0.5 * theta),
    ));
    Ok(CoveringData {
        varsigma: s,
        eps_sectors,
        directions,
        borel_sectors,
        time_sector,
        rho,
        theta,
        forbidden,
        checks,
        warnings,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct HBoundOptions {
    pub r_max: f64,
    pub n_r: usize,
    /// Ray angles sampled across the Borel sector.
    pub n_angles: usize,
    /// Radii above this fraction of `r_max` fix the exponential slope.
    pub tail_fraction: f64,
    /// Factor applied to the largest admissible slope.
    pub b_safety: f64,
    /// Smallest acceptable `A_{H,d}`.
    pub a_floor: f64,
    pub n_disc_r: usize,
    pub n_disc_angles: usize,
}

impl Default for HBoundOptions {
    fn default() -> Self {
        Self {
            r_max: 25.0,
            n_r: 200,
            n_angles: 5,
            tail_fraction: 0.5,
            b_safety: 0.9,
            a_floor: 1e-8,
            n_disc_r: 40,
            n_disc_angles: 181,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LevelMargin {
    pub l: usize,
    pub margin: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HBoundEstimates {
    pub direction: f64,
    pub half_width: f64,
    pub a_h: f64,
    pub b_h: f64,
    pub b_max: f64,
    /// `min |H|/|Q(im)|` over the cut disc of radius `ρ`.
    pub eta_disc: f64,
    /// `min |H|/|Q(im)|` over the cut disc and the sampled sector.
    pub eta2: f64,
    pub k1: f64,
    pub margins: Vec<LevelMargin>,
    /// Whether `B_{H,d} α_D > κ_l K_1 k/Γ(1/k-1)` for every level.
    pub prerequisite: bool,
    pub samples: usize,
}

/// `min |H(τ,m)|/|Q(im)|` over `D(0,ρ)` minus the negative axis, sampled.
pub fn cut_disc_eta(spec: &ProblemSpec, rho: f64, m_grid: &[f64], n_r: usize, n_angles: usize) -> f64 {
    let mut eta = f64::INFINITY;
    for i in 1..=n_r {
        let r = rho * i as f64 / n_r as f64;
        for j in 0..n_angles {
            let th = -PI + 2.0 * PI * (j as f64 + 0.5) / n_angles as f64;
            for &m in m_grid {
                let h = h_polar(spec, r, th, m);
                eta = eta.min(h.norm() / spec.q.eval_im(m).norm());
            }
        }
    }
    eta
}

/// Samples `|H|/|Q(im)|` on the Borel sector and the cut disc and fits
/// `|H| ≥ A |Q(im)| e^{B α_D |τ|^k}`.
pub fn estimate_h_bounds(
    spec: &ProblemSpec,
    direction: f64,
    half_width: f64,
    rho: f64,
    m_grid: &[f64],
    k1: f64,
    forbidden: &[ForbiddenInterval],
    opts: &HBoundOptions,
) -> Result<HBoundEstimates> {
    let k = spec.k;
    let alpha = spec.alpha_d;
    for f in forbidden.iter().filter(|f| f.blocking) {
        if f.hi >= direction - half_width && f.lo <= direction + half_width {
            return Err(Error::Inadmissible(format!(
                "sector {direction:.4} +/- {half_width:.4} meets forbidden interval [{:.4}, {:.4}] (l = {})",
                f.lo, f.hi, f.l
            )));
        }
    }
    let angles: Vec<f64> = if opts.n_angles <= 1 {
        vec![direction]
    } else {
        (0..opts.n_angles)
            .map(|j| direction - half_width + 2.0 * half_width * j as f64 / (opts.n_angles - 1) as f64)
            .collect()
    };
    let radii: Vec<f64> = (1..=opts.n_r).map(|i| opts.r_max * (i as f64 / opts.n_r as f64).powi(2)).collect();
    let mut samples = Vec::with_capacity(angles.len() * radii.len() * m_grid.len());
    for &g in &angles {
        for &r in &radii {
            for &m in m_grid {
                let ratio = h_polar(spec, r, g, m).norm() / spec.q.eval_im(m).norm();
                samples.push((r, ratio));
            }
        }
    }
    let r_tail = opts.tail_fraction * opts.r_max;
    let b_max = samples
        .iter()
        .filter(|(r, _)| *r >= r_tail)
        .map(|(r, q)| q.ln() / (alpha * r.powf(k)))
        .fold(f64::INFINITY, f64::min);
    if !(b_max > 0.0) {
        return Err(Error::Inadmissible(format!("|H| does not grow along direction {direction:.4}: slope {b_max}")));
    }
    let b_h = opts.b_safety * b_max;
    let a_h = samples.iter().map(|(r, q)| q / (b_h * alpha * r.powf(k)).exp()).fold(f64::INFINITY, f64::min);
    if !(a_h > opts.a_floor) {
        return Err(Error::Inadmissible(format!(
            "A_H = {a_h:.3e} on direction {direction:.4}: too close to a singular ray"
        )));
    }
    let eta_disc = cut_disc_eta(spec, rho, m_grid, opts.n_disc_r, opts.n_disc_angles);
    let eta_ray = samples.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
    let ck = k / gamma(1.0 / k - 1.0);
    let margins: Vec<LevelMargin> = spec
        .levels
        .iter()
        .enumerate()
        .map(|(i, lv)| LevelMargin { l: i + 1, margin: b_h * alpha - lv.kappa * k1 * ck })
        .collect();
    let prerequisite = margins.iter().all(|m| m.margin > 0.0);
    Ok(HBoundEstimates {
        direction,
        half_width,
        a_h,
        b_h,
        b_max,
        eta_disc,
        eta2: eta_disc.min(eta_ray),
        k1,
        margins,
        prerequisite,
        samples: samples.len(),
    })
}
