//! Run configuration, the staged pipeline and the command-line front end.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use clap::{Parser, Subcommand};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    admissibility_margin, asymptotic_coefficients, fit_with_scan, fourier_sum, gevrey_fit, laplace_line,
    lobatto_angles, reconstruct_u, sigma_prime, sweep_point, value_at_edge, ArcData, AsymptoticFit, GevreyFit,
    SweepGrid, SweepRow,
};
use crate::checks::{self, Criterion};
use crate::convolution::estimate_k1;
use crate::error::{Error, Result};
use crate::geometry::{
    estimate_h_bounds, plan_covering, CoveringData, CoveringOptions, HBoundEstimates, HBoundOptions,
};
use crate::mesh::{MGrid, MeshSpec, RadialMesh};
use crate::problem::{validate_spec, ProblemSpec, ValidationReport};
use crate::solver::{
    residual, smallness_ledger, solve_fixed_point, ExpReport, IterationTrace, RayOperators, SmallnessLedger,
    SolverOptions,
};
use crate::transforms::{BorelGrid, GridMeta, LaplaceOptions};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    pub mesh: MeshSpec,
    pub m_max: f64,
    pub n_m: usize,
    pub nu: f64,
    pub beta: f64,
    pub mu: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            mesh: MeshSpec {
                r_max: 25.0,
                first_panel: 0.1,
                ratio: 1.2,
                max_width: 2.5,
                order: 10,
                fine_until: 1.5,
                power: 4.0,
                inner_panels: 4,
                breakpoints: Vec::new(),
            },
            m_max: 55.3,
            n_m: 129,
            nu: 0.5,
            beta: 1.0,
            mu: 2.5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct LedgerConfig {
    pub varpi_candidates: Vec<f64>,
}

impl Default for LedgerConfig {
    fn default() -> Self {
        Self { varpi_candidates: vec![1e-3, 1e-2, 0.1, 0.5, 1.0] }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    /// Index `p` of the overlap `E_p ∩ E_{p+1}`.
    pub pair: usize,
    pub eps_min: f64,
    pub eps_max: f64,
    pub count: usize,
    /// Argument of ε; defaults to the bisector of the overlap.
    pub eps_arg: Option<f64>,
    pub n_t: usize,
    pub z_re: [f64; 2],
    pub n_re: usize,
    pub beta_prime: f64,
    pub delta2: f64,
    pub arc_angles: usize,
    pub arc_nodes: usize,
    /// Relative mismatch allowed between the arc and the long rays at `ρ/2`.
    pub disc_tol: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            pair: 0,
            eps_min: 0.01,
            eps_max: 0.1,
            count: 10,
            eps_arg: None,
            n_t: 8,
            z_re: [-2.0, 2.0],
            n_re: 4,
            beta_prime: 0.5,
            delta2: 0.2,
            arc_angles: 25,
            arc_nodes: 16,
            disc_tol: 1e-8,
        }
    }
}

impl SweepConfig {
    /// Log-spaced `|ε|` values, ascending.
    pub fn eps_abs(&self) -> Vec<f64> {
        match self.count {
            0 => Vec::new(),
            1 => vec![self.eps_min],
            n => (0..n).map(|i| self.eps_min * (self.eps_max / self.eps_min).powf(i as f64 / (n - 1) as f64)).collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub kappa_lo: f64,
    pub kappa_hi: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self { kappa_lo: 0.5, kappa_hi: 1.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct AsymptoticConfig {
    pub enabled: bool,
    pub sector: usize,
    pub order: usize,
    pub samples: usize,
    pub eps_min: f64,
    pub eps_max: f64,
    /// Sample times as fractions of `σ'`.
    pub t_fractions: Vec<f64>,
    pub z: Vec<[f64; 2]>,
    pub max_condition: f64,
}

impl Default for AsymptoticConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            sector: 0,
            order: 6,
            samples: 12,
            eps_min: 0.02,
            eps_max: 0.1,
            t_fractions: vec![0.5, 1.0],
            z: vec![[0.0, 0.0], [1.0, 0.0]],
            max_condition: 1e12,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReconstructPoint {
    pub sector: usize,
    pub eps: [f64; 2],
    pub t: [f64; 2],
    pub z: [f64; 2],
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ReconstructConfig {
    pub points: Vec<ReconstructPoint>,
}

/// Everything a run needs besides the problem file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    /// Problem file, relative to the config file.
    pub problem: PathBuf,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub covering: CoveringOptions,
    #[serde(default)]
    pub h_bounds: HBoundOptions,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub laplace: LaplaceOptions,
    #[serde(default)]
    pub ledger: LedgerConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default)]
    pub asymptotic: AsymptoticConfig,
    #[serde(default)]
    pub reconstruct: ReconstructConfig,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Reads the config and resolves the problem path against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = Self::from_toml_str(&std::fs::read_to_string(path)?)?;
        if cfg.problem.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.problem = dir.join(&cfg.problem);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let tol_ok = |x: f64| x > 0.0 && x < 1.0;
        let g = &self.grid;
        let mut bad = Vec::new();
        if !(g.m_max > 0.0 && g.n_m >= 3 && g.nu > 0.0 && g.beta > 0.0) {
            bad.push("grid sizes and weights must be positive");
        }
        if !(tol_ok(self.solver.tol) && tol_ok(self.solver.exp_tol) && tol_ok(self.laplace.tol)) {
            bad.push("tolerances must lie in (0, 1)");
        }
        if self.solver.max_iter == 0 || self.laplace.nodes == 0 {
            bad.push("iteration and node counts must be positive");
        }
        let s = &self.sweep;
        if s.count > 0 && !(s.eps_min > 0.0 && s.eps_max >= s.eps_min) {
            bad.push("sweep needs 0 < eps_min <= eps_max");
        }
        if !(s.beta_prime > 0.0 && s.beta_prime < g.beta) {
            bad.push("beta_prime must lie in (0, beta)");
        }
        if s.n_t == 0 || s.n_re == 0 || s.arc_angles < 3 {
            bad.push("sweep grids need positive sizes and at least 3 arc angles");
        }
        if bad.is_empty() {
            g.mesh.validate()
        } else {
            Err(Error::InvalidInput(bad.join("; ")))
        }
    }
}

/// Summary of one fixed-point solve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    pub sector: usize,
    pub direction: f64,
    pub eps: [f64; 2],
    pub trace: IterationTrace,
    pub iterations: usize,
    pub max_ratio: f64,
    pub norm_f: f64,
    pub residual: f64,
    pub varpi: Option<f64>,
    pub within_ball: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RayReport {
    pub sector: usize,
    pub direction: f64,
    pub nr: usize,
    pub h_bounds: HBoundEstimates,
    pub ledger: SmallnessLedger,
    pub exp_series: Vec<ExpReport>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArcReport {
    pub pair: usize,
    pub radius: f64,
    pub angles: Vec<f64>,
    /// Relative mismatch at `ρ/2` against the long rays at both ends.
    pub endpoint_mismatch: [f64; 2],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UReport {
    pub sector: usize,
    pub eps: [f64; 2],
    pub t: [f64; 2],
    pub z: [f64; 2],
    pub u: [f64; 2],
    pub truncation_bound: f64,
}

/// Machine-readable summary of a run. Wall-clock times are kept out of it
/// so that repeated runs produce identical files.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RunReport {
    pub problem: String,
    pub validation: Option<ValidationReport>,
    pub covering: Option<CoveringData>,
    pub rays: Vec<RayReport>,
    pub solves: Vec<SolveReport>,
    pub arc: Option<ArcReport>,
    pub sigma_prime: Option<f64>,
    pub delta1: Option<f64>,
    pub sweep: Vec<SweepRow>,
    pub fit: Option<GevreyFit>,
    pub synthetic_fit: Option<GevreyFit>,
    pub asymptotic: Option<AsymptoticFit>,
    pub asymptotic_error: Option<String>,
    pub fit_error: Option<String>,
    pub reconstruct: Vec<UReport>,
    pub criteria: Vec<Criterion>,
    pub failed_stage: Option<String>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct EpsKey(u64, u64);

impl EpsKey {
    fn of(eps: Complex64) -> Self {
        Self(eps.re.to_bits(), eps.im.to_bits())
    }
}

struct RayState {
    ops: RayOperators,
    varpi: Option<f64>,
    passed: bool,
    solves: BTreeMap<EpsKey, BorelGrid>,
}

/// Stage-by-stage driver. Each stage stores its results in `report`.
pub struct Pipeline {
    pub cfg: RunConfig,
    pub spec: ProblemSpec,
    pub mgrid: MGrid,
    pub report: RunReport,
    /// Wall time per stage in seconds.
    pub timings: BTreeMap<String, f64>,
    /// Run past failed covering checks and smallness ledgers.
    pub force: bool,
    mesh: Option<Arc<RadialMesh>>,
    meta: Option<GridMeta>,
    rays: BTreeMap<usize, RayState>,
    arc: Option<ArcData>,
    eps_independent: bool,
}

fn c2(z: Complex64) -> [f64; 2] {
    [z.re, z.im]
}

fn cx(z: [f64; 2]) -> Complex64 {
    Complex64::new(z[0], z[1])
}

impl Pipeline {
    pub fn new(cfg: RunConfig) -> Result<Self> {
        cfg.validate()?;
        let spec = ProblemSpec::load(&cfg.problem)?;
        Self::with_spec(cfg, spec)
    }

    pub fn with_spec(cfg: RunConfig, spec: ProblemSpec) -> Result<Self> {
        cfg.validate()?;
        let mgrid = MGrid::new(cfg.grid.m_max, cfg.grid.n_m)?;
        let report = RunReport { problem: cfg.problem.display().to_string(), ..Default::default() };
        Ok(Self {
            cfg,
            spec,
            mgrid,
            report,
            timings: BTreeMap::new(),
            force: false,
            mesh: None,
            meta: None,
            rays: BTreeMap::new(),
            arc: None,
            eps_independent: false,
        })
    }

    fn timed<T>(&mut self, name: &str, f: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        let t = Instant::now();
        let out = f(self);
        *self.timings.entry(name.to_string()).or_insert(0.0) += t.elapsed().as_secs_f64();
        if let Err(e) = &out {
            if self.report.failed_stage.is_none() {
                self.report.failed_stage = Some(name.to_string());
                self.report.failure = Some(e.to_string());
            }
        }
        out
    }

    pub fn validate(&mut self) -> Result<&ValidationReport> {
        self.timed("validate", |s| {
            let rep = validate_spec(&s.spec, &s.mgrid.nodes())?;
            let failed = rep.failures().iter().map(|c| format!("{}: {}", c.name, c.detail)).collect::<Vec<_>>();
            s.report.validation = Some(rep);
            if failed.is_empty() {
                Ok(())
            } else {
                Err(Error::Hypothesis(failed.join("; ")))
            }
        })?;
        Ok(self.report.validation.as_ref().unwrap())
    }

    pub fn geometry(&mut self) -> Result<&CoveringData> {
        if self.report.covering.is_none() {
            self.timed("geometry", |s| {
                let cov = plan_covering(&s.spec, &s.mgrid.nodes(), &s.cfg.covering)?;
                if !cov.passed() && !s.force {
                    let f: Vec<String> =
                        cov.checks.iter().filter(|c| !c.passed).map(|c| format!("{}: {}", c.name, c.detail)).collect();
                    s.report.covering = Some(cov);
                    return Err(Error::Inadmissible(f.join("; ")));
                }
                let mut mesh_spec = s.cfg.grid.mesh.clone();
                mesh_spec.breakpoints.push(0.5 * cov.rho);
                s.mesh = Some(Arc::new(RadialMesh::new(&mesh_spec)?));
                let g = &s.cfg.grid;
                s.meta = Some(GridMeta { k: s.spec.k, nu: g.nu, beta: g.beta, mu: g.mu, rho: cov.rho });
                let n_psi = s.cfg.solver.n_psi.unwrap_or(0);
                s.eps_independent = s.spec.is_eps_independent(n_psi);
                s.report.covering = Some(cov);
                Ok(())
            })?;
        }
        Ok(self.report.covering.as_ref().unwrap())
    }

    fn covering(&self) -> &CoveringData {
        self.report.covering.as_ref().expect("geometry stage has run")
    }

    /// Sectors whose rays the configured stages need.
    pub fn needed_sectors(&mut self) -> Result<Vec<usize>> {
        let s = self.geometry()?.varsigma;
        let mut out = vec![self.cfg.sweep.pair % s, (self.cfg.sweep.pair + 1) % s];
        if self.cfg.asymptotic.enabled {
            out.push(self.cfg.asymptotic.sector % s);
        }
        out.extend(self.cfg.reconstruct.points.iter().map(|p| p.sector % s));
        out.sort();
        out.dedup();
        Ok(out)
    }

    /// Builds the operators on ray `p`, the `H` bounds and the smallness ledger.
    pub fn ledger(&mut self, p: usize) -> Result<&RayReport> {
        if !self.rays.contains_key(&p) {
            self.geometry()?;
            let cov = self.covering().clone();
            if p >= cov.varsigma {
                return Err(Error::InvalidInput(format!("sector {p} out of range")));
            }
            let ops = self.timed("solve", |s| {
                RayOperators::new(
                    &s.spec,
                    cov.directions[p],
                    s.mesh.clone().unwrap(),
                    s.mgrid,
                    s.meta.unwrap(),
                    &s.cfg.solver,
                )
            })?;
            self.timed("ledger", |s| s.build_ray(p, ops))?;
        }
        Ok(self.report.rays.iter().find(|r| r.sector == p).unwrap())
    }

    fn build_ray(&mut self, p: usize, ops: RayOperators) -> Result<()> {
        let cov = self.covering().clone();
        let d = cov.directions[p];
        let mesh = self.mesh.clone().unwrap();
        let meta = self.meta.unwrap();
        let k = self.spec.k;
        let env = BorelGrid::from_fn(d, mesh, self.mgrid, meta, Complex64::new(0.0, 0.0), |tau, m| {
            let tk = crate::special::cpow(tau, k);
            tk * (meta.nu * tk).exp() * (1.0 + m.abs()).powf(-meta.mu) * (-meta.beta * m.abs()).exp()
        });
        let k1 = estimate_k1(&[env], &self.cfg.solver.quad)?;
        let ms = self.mgrid.nodes();
        let hb = estimate_h_bounds(
            &self.spec,
            d,
            self.cfg.covering.borel_half_width,
            cov.rho,
            &ms,
            k1,
            &cov.forbidden,
            &self.cfg.h_bounds,
        )?;
        let ledger =
            smallness_ledger(&self.spec, &ops, hb.eta2, k1, &self.cfg.ledger.varpi_candidates, &self.cfg.solver.quad);
        let rep = RayReport {
            sector: p,
            direction: d,
            nr: ops.template.nr(),
            h_bounds: hb,
            exp_series: ops.exp_reports(),
            ledger: ledger.clone(),
        };
        self.report.rays.push(rep);
        self.report.rays.sort_by_key(|r| r.sector);
        self.rays.insert(p, RayState { ops, varpi: ledger.varpi, passed: ledger.passed, solves: BTreeMap::new() });
        Ok(())
    }

    /// Solves on ray `p` at `eps`, reusing an earlier solve when the problem
    /// does not depend on ε.
    pub fn solve(&mut self, p: usize, eps: Complex64) -> Result<BorelGrid> {
        self.ledger(p)?;
        let key = if self.eps_independent { EpsKey(0, 0) } else { EpsKey::of(eps) };
        if let Some(w) = self.rays[&p].solves.get(&key) {
            return Ok(w.clone());
        }
        self.timed("solve", |s| {
            if !s.rays[&p].passed && !s.force {
                return Err(Error::Inadmissible(format!(
                    "smallness ledger fails on ray {p}; pass --force to iterate anyway"
                )));
            }
            let st = &s.rays[&p];
            let state = st.ops.at_eps(&s.spec, eps, &s.cfg.solver)?;
            let (w, trace) = solve_fixed_point(&s.spec, &st.ops, &state, &s.cfg.solver)?;
            let res = residual(&w, &s.spec, eps, st.ops.n_psi, &s.cfg.solver)?;
            let norm = w.norm_f();
            let varpi = st.varpi;
            s.report.solves.push(SolveReport {
                sector: p,
                direction: st.ops.gamma(),
                eps: c2(eps),
                iterations: trace.iterations(),
                max_ratio: trace.max_ratio(),
                trace,
                norm_f: norm,
                residual: res,
                varpi,
                within_ball: varpi.is_some_and(|v| norm <= v),
            });
            s.rays.get_mut(&p).unwrap().solves.insert(key, w.clone());
            Ok(w)
        })
    }

    /// Sweep values of ε, ascending in modulus.
    pub fn sweep_eps(&mut self) -> Result<Vec<Complex64>> {
        let cov = self.geometry()?.clone();
        let sw = &self.cfg.sweep;
        let p = sw.pair % cov.varsigma;
        let q = (p + 1) % cov.varsigma;
        let arg = sw.eps_arg.unwrap_or_else(|| cov.overlap_direction(p));
        let eps: Vec<Complex64> = sw.eps_abs().into_iter().map(|r| Complex64::from_polar(r, arg)).collect();
        for e in &eps {
            if !cov.eps_sectors[p].contains(*e) || !cov.eps_sectors[q].contains(*e) {
                return Err(Error::Inadmissible(format!("eps = {e} is not in the overlap of sectors {p} and {q}")));
            }
        }
        Ok(eps)
    }

    /// Short-ray solves on the arc of radius `ρ/2` between the pair's directions.
    pub fn arc(&mut self, eps: Complex64) -> Result<ArcData> {
        if let (Some(a), true) = (&self.arc, self.eps_independent) {
            return Ok(a.clone());
        }
        let cov = self.geometry()?.clone();
        let p = self.cfg.sweep.pair % cov.varsigma;
        let q = (p + 1) % cov.varsigma;
        let w_p = self.solve(p, eps)?;
        let w_q = self.solve(q, eps)?;
        self.timed("arc", |s| {
            let radius = 0.5 * cov.rho;
            let short = Arc::new(s.mesh.as_ref().unwrap().truncated(radius)?);
            let mut opts = s.cfg.solver.clone();
            opts.n_psi = Some(s.rays[&p].ops.n_psi);
            let mut rays = Vec::new();
            for th in lobatto_angles(cov.directions[p], cov.directions[q], s.cfg.sweep.arc_angles) {
                let ops = RayOperators::new(&s.spec, th, short.clone(), s.mgrid, s.meta.unwrap(), &opts)?;
                let state = ops.at_eps(&s.spec, eps, &opts)?;
                let (w, _) = solve_fixed_point(&s.spec, &ops, &state, &opts)?;
                rays.push((th, w));
            }
            let arc = ArcData::from_rays(radius, &rays)?;
            let mut mismatch = [0.0; 2];
            for (slot, (w, j)) in [(&w_p, 0), (&w_q, rays.len() - 1)].into_iter().enumerate() {
                let long = value_at_edge(w, radius)?;
                let scale = long.iter().map(|v| v.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
                let diff = long.iter().zip(&arc.values[j]).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
                mismatch[slot] = diff / scale;
            }
            s.report.arc = Some(ArcReport { pair: p, radius, angles: arc.angles.clone(), endpoint_mismatch: mismatch });
            if mismatch.iter().any(|&m| !(m <= s.cfg.sweep.disc_tol)) {
                return Err(Error::Numerical(format!(
                    "rays and arc disagree on the common disc: relative mismatch {:.3e}, {:.3e}",
                    mismatch[0], mismatch[1]
                )));
            }
            s.arc = Some(arc.clone());
            Ok(arc)
        })
    }

    /// Runs the flatness sweep over the configured ε values.
    pub fn flatness(&mut self) -> Result<&[SweepRow]> {
        let eps_list = self.sweep_eps()?;
        let cov = self.covering().clone();
        let p = self.cfg.sweep.pair % cov.varsigma;
        let q = (p + 1) % cov.varsigma;
        let k = self.spec.k;
        let sw = self.cfg.sweep.clone();
        let arg = eps_list.first().map(|e| e.arg()).unwrap_or(0.0);
        let delta1 = admissibility_margin(&[cov.directions[p], cov.directions[q]], k, arg, &[0.0]);
        let sigma = sigma_prime(delta1, sw.delta2, self.cfg.grid.nu, self.spec.eps0, k);
        self.report.delta1 = Some(delta1);
        self.report.sigma_prime = Some(sigma);
        let grid = SweepGrid::new(sigma, sw.n_t, sw.z_re[0], sw.z_re[1], sw.n_re, &[0.0, 0.5 * sw.beta_prime]);
        let mut lopts = self.cfg.laplace.clone();
        lopts.delta1 = lopts.delta1.min(0.5 * delta1);
        self.report.sweep.clear();
        for eps in eps_list {
            let failed_before = self.report.failed_stage.is_some();
            let row = (|| {
                let w_p = self.solve(p, eps)?;
                let w_q = self.solve(q, eps)?;
                let arc = self.arc(eps)?;
                self.timed("flatness", |_| sweep_point(&w_p, &w_q, &arc, eps, &grid, &lopts, sw.arc_nodes))
            })();
            let row = row.unwrap_or_else(|e| {
                if !failed_before {
                    self.report.failed_stage = None;
                    self.report.failure = None;
                }
                SweepRow::missing(eps, e.to_string())
            });
            self.report.sweep.push(row);
        }
        Ok(&self.report.sweep)
    }

    /// Gevrey fit of the sweep and the synthetic inversion check.
    pub fn fit(&mut self) -> Result<&GevreyFit> {
        let k = self.spec.k;
        let range = (self.cfg.fit.kappa_lo, self.cfg.fit.kappa_hi);
        self.timed("fit", |s| {
            let eps: Vec<f64> = (0..10).map(|i| 0.01 * 10f64.powf(i as f64 / 9.0)).collect();
            let y: Vec<f64> = eps.iter().map(|e| 5.0 - 2.0 / e.powf(0.75)).collect();
            s.report.synthetic_fit = Some(fit_with_scan(&eps, &y, 0.75, range)?);
            match gevrey_fit(&s.report.sweep, k, range) {
                Ok(f) => {
                    s.report.fit = Some(f);
                    s.report.fit_error = None;
                    Ok(())
                }
                Err(e) => {
                    s.report.fit = None;
                    s.report.fit_error = Some(e.to_string());
                    Err(e)
                }
            }
        })?;
        Ok(self.report.fit.as_ref().unwrap())
    }

    /// Least-squares ε-expansion of `u` along the bisector of `E_{p_0}`.
    pub fn asymptotics(&mut self) -> Result<()> {
        let cfg = self.cfg.asymptotic.clone();
        if !cfg.enabled {
            return Ok(());
        }
        let cov = self.geometry()?.clone();
        let p0 = cfg.sector % cov.varsigma;
        let sigma = self.report.sigma_prime.unwrap_or(0.5);
        let dir = cov.eps_sectors[p0].direction;
        let n = cfg.samples.max(2);
        let eps: Vec<Complex64> = (0..n)
            .map(|i| Complex64::from_polar(cfg.eps_min + (cfg.eps_max - cfg.eps_min) * i as f64 / (n - 1) as f64, dir))
            .collect();
        let zs: Vec<Complex64> = cfg.z.iter().map(|&z| cx(z)).collect();
        let mut values = Vec::with_capacity(n);
        for &e in &eps {
            let w = self.solve(p0, e)?;
            let lopts = self.cfg.laplace.clone();
            let row = self.timed("asymptotic", |_| {
                let mut row = Vec::new();
                for &f in &cfg.t_fractions {
                    let line = laplace_line(&w, e * (f * sigma), 0.0, f64::INFINITY, &lopts)?;
                    row.extend(fourier_sum(&line.values, &w.mgrid, &zs));
                }
                Ok(row)
            })?;
            values.push(row);
        }
        match asymptotic_coefficients(
            &eps,
            &values,
            cfg.order,
            self.spec.k,
            cov.eps_sectors[p0].aperture,
            cfg.max_condition,
        ) {
            Ok(fit) => self.report.asymptotic = Some(fit),
            Err(e) => self.report.asymptotic_error = Some(e.to_string()),
        }
        Ok(())
    }

    /// Evaluates `u_p` at the configured points.
    pub fn reconstruct(&mut self) -> Result<&[UReport]> {
        let points = self.cfg.reconstruct.points.clone();
        let cov = self.geometry()?.clone();
        self.report.reconstruct.clear();
        for pt in points {
            let p = pt.sector % cov.varsigma;
            let eps = cx(pt.eps);
            let w = self.solve(p, eps)?;
            let lopts = self.cfg.laplace.clone();
            let beta_prime = self.cfg.sweep.beta_prime;
            let u =
                self.timed("reconstruct", |_| reconstruct_u(&w, &cov, p, cx(pt.t), cx(pt.z), eps, beta_prime, &lopts))?;
            self.report.reconstruct.push(UReport {
                sector: p,
                eps: pt.eps,
                t: pt.t,
                z: pt.z,
                u: u.value,
                truncation_bound: u.truncation_bound,
            });
        }
        Ok(&self.report.reconstruct)
    }

    /// All stages in order, then the acceptance criteria.
    pub fn run_all(&mut self) -> Result<()> {
        self.validate()?;
        self.geometry()?;
        for p in self.needed_sectors()? {
            self.ledger(p)?;
        }
        self.flatness()?;
        let failed_before = self.report.failed_stage.is_some();
        if self.fit().is_err() && !failed_before {
            self.report.failed_stage = None;
            self.report.failure = None;
        }
        self.asymptotics()?;
        self.reconstruct()?;
        self.evaluate_criteria();
        Ok(())
    }

    /// Fills `report.criteria` from the run data and the standalone checks.
    pub fn evaluate_criteria(&mut self) {
        let t = Instant::now();
        let mut out = Vec::new();
        let k = self.spec.k;
        let gamma = self.covering().directions[self.cfg.sweep.pair % self.covering().varsigma];
        let mesh = self.mesh.clone().unwrap();
        out.push(checks::beta_oracle(&mesh, gamma, k, &self.cfg.solver.quad));
        out.push(checks::laplace_monomials(k));
        out.push(checks::tahara_identity(k));
        out.push(checks::fourier_identities(&self.mgrid, self.cfg.grid.beta, self.cfg.grid.mu));
        out.push(checks::contraction(&self.report.solves, &self.report.rays, self.cfg.solver.tol));
        out.push(checks::residuals(&self.report.solves));
        out.push(checks::ball_containment(&self.report.solves));
        out.push(checks::path_consistency(&self.report.sweep));
        out.push(checks::flatness(self.report.fit.as_ref(), self.report.fit_error.as_deref(), &self.report.sweep));
        out.push(checks::order_identification(self.report.fit.as_ref(), self.report.synthetic_fit.as_ref(), k));
        let kappa = self.spec.levels.first().map(|l| l.kappa).unwrap_or(0.0);
        let k1 = self.report.rays.iter().find(|r| r.direction == gamma).map(|r| r.h_bounds.k1);
        out.push(checks::exp_envelope(&mesh, gamma, self.mgrid, self.meta.unwrap(), kappa, k1, &self.cfg.solver));
        self.report.criteria = out;
        *self.timings.entry("criteria".into()).or_insert(0.0) += t.elapsed().as_secs_f64();
    }

    /// Writes every artifact produced so far.
    pub fn write_artifacts(&self, out: &Path) -> Result<()> {
        std::fs::create_dir_all(out)?;
        let r = &self.report;
        write_json(out, "report.json", r)?;
        if let Some(v) = &r.validation {
            write_json(out, "validation.json", v)?;
        }
        if let Some(c) = &r.covering {
            write_json(out, "covering.json", c)?;
        }
        for ray in &r.rays {
            write_json(out, &format!("ledger_p{}.json", ray.sector), ray)?;
        }
        if !r.solves.is_empty() {
            write_json(out, "traces.json", &r.solves)?;
        }
        for (p, st) in &self.rays {
            for (i, w) in st.solves.values().enumerate() {
                w.save(out, &format!("w_p{p}_{i}"))?;
            }
        }
        if let Some(a) = &r.arc {
            write_json(out, "arc.json", a)?;
        }
        if !r.sweep.is_empty() {
            let k = self.spec.k;
            let mut f = csv_writer(out, "sweep.csv")?;
            f.write_record(["eps_abs", "eps_arg", "supdiff"]).map_err(csv_err)?;
            for row in &r.sweep {
                f.write_record([fmt(row.eps_abs), fmt(row.eps_arg), fmt(row.supdiff)]).map_err(csv_err)?;
            }
            f.flush()?;
            let mut f = csv_writer(out, "sweep_detail.csv")?;
            f.write_record([
                "eps_abs",
                "eps_arg",
                "supdiff",
                "noise_floor",
                "above_noise",
                "path_mismatch",
                "path_excess",
                "error",
            ])
            .map_err(csv_err)?;
            for row in &r.sweep {
                f.write_record([
                    fmt(row.eps_abs),
                    fmt(row.eps_arg),
                    fmt(row.supdiff),
                    fmt(row.noise_floor),
                    row.above_noise.to_string(),
                    fmt(row.path_mismatch),
                    fmt(row.path_excess),
                    row.error.clone().unwrap_or_default(),
                ])
                .map_err(csv_err)?;
            }
            f.flush()?;
            let mut f = csv_writer(out, "flatness_plot.csv")?;
            f.write_record(["eps_pow_minus_k", "log_supdiff"]).map_err(csv_err)?;
            for row in &r.sweep {
                f.write_record([fmt(row.eps_abs.powf(-k)), fmt(row.supdiff.ln())]).map_err(csv_err)?;
            }
            f.flush()?;
        }
        if r.fit.is_some() || r.synthetic_fit.is_some() || r.fit_error.is_some() {
            #[derive(Serialize)]
            struct FitFile<'a> {
                fit: &'a Option<GevreyFit>,
                synthetic: &'a Option<GevreyFit>,
                error: &'a Option<String>,
            }
            write_json(out, "fit.json", &FitFile { fit: &r.fit, synthetic: &r.synthetic_fit, error: &r.fit_error })?;
        }
        if r.asymptotic.is_some() || r.asymptotic_error.is_some() {
            write_json(out, "asymptotic.json", &(&r.asymptotic, &r.asymptotic_error))?;
        }
        if !r.reconstruct.is_empty() {
            let mut f = csv_writer(out, "reconstruct.csv")?;
            f.write_record([
                "sector",
                "eps_re",
                "eps_im",
                "t_re",
                "t_im",
                "z_re",
                "z_im",
                "u_re",
                "u_im",
                "truncation_bound",
            ])
            .map_err(csv_err)?;
            for u in &r.reconstruct {
                f.write_record([
                    u.sector.to_string(),
                    fmt(u.eps[0]),
                    fmt(u.eps[1]),
                    fmt(u.t[0]),
                    fmt(u.t[1]),
                    fmt(u.z[0]),
                    fmt(u.z[1]),
                    fmt(u.u[0]),
                    fmt(u.u[1]),
                    fmt(u.truncation_bound),
                ])
                .map_err(csv_err)?;
            }
            f.flush()?;
        }
        if !r.criteria.is_empty() {
            write_json(out, "criteria.json", &r.criteria)?;
        }
        write_json(out, "timings.json", &self.timings)
    }
}

fn fmt(x: f64) -> String {
    format!("{x:.17e}")
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

fn csv_writer(dir: &Path, name: &str) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(dir.join(name)).map_err(csv_err)
}

fn write_json<T: Serialize + ?Sized>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Parse(e.to_string()))?;
    let mut f = std::fs::File::create(dir.join(name))?;
    f.write_all(text.as_bytes())?;
    f.write_all(b"\n")?;
    Ok(())
}

#[derive(Debug, Parser)]
#[command(
    name = "borelk",
    version,
    about = "Borel-Laplace summation toolkit for singularly perturbed convolution equations"
)]
pub struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true, default_value = "borelk.toml")]
    pub config: PathBuf,
    /// Output directory for artifacts.
    #[arg(long, global = true, default_value = "borelk-out")]
    pub out: PathBuf,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    pub workers: usize,
    /// Overwrite artifacts of an earlier run.
    #[arg(long, global = true)]
    pub force: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, clap::Args, PartialEq)]
pub struct SolveArgs {
    /// Sector index `p` whose direction is solved.
    #[arg(long)]
    pub sector: Option<usize>,
    /// Real part of ε.
    #[arg(long, requires = "sector", allow_hyphen_values = true)]
    pub eps_re: Option<f64>,
    /// Imaginary part of ε.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub eps_im: f64,
    /// Overrides the solver tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Overrides the iteration limit.
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Overrides the number of m-nodes.
    #[arg(long)]
    pub n_m: Option<usize>,
    /// Overrides the Gauss order per radial panel.
    #[arg(long)]
    pub order: Option<usize>,
}

#[derive(Debug, Clone, Subcommand, PartialEq)]
pub enum Command {
    /// Check the hypotheses on the problem data.
    Validate,
    /// Plan the covering, directions and cut-disc radius.
    Geometry,
    /// Build the ray operators and the smallness ledger.
    Ledger,
    /// Solve the fixed-point equation; without flags, on both rays of the sweep pair at every sweep ε.
    Solve(SolveArgs),
    /// Evaluate the sectorial solutions at the configured points.
    Reconstruct,
    /// Sweep the neighbouring differences over ε.
    Flatness,
    /// Fit the flatness sweep (reads sweep.csv from the output directory when present).
    Fit,
    /// Run every stage and evaluate the acceptance criteria.
    Pipeline,
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    if cli.workers > 0 {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.workers).build_global();
    }
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                2
            } else {
                1
            }
        }
    }
}

fn execute(cli: &Cli) -> Result<i32> {
    let mut cfg = RunConfig::load(&cli.config)?;
    if let Command::Solve(a) = &cli.command {
        if let Some(t) = a.tol {
            cfg.solver.tol = t;
        }
        if let Some(m) = a.max_iter {
            cfg.solver.max_iter = m;
        }
        if let Some(n) = a.n_m {
            cfg.grid.n_m = n;
        }
        if let Some(o) = a.order {
            cfg.grid.mesh.order = o;
        }
    }
    if cli.out.join("report.json").exists() && !cli.force && cli.command != Command::Fit {
        return Err(Error::InvalidInput(format!(
            "{} already holds a run; pass --force to overwrite",
            cli.out.display()
        )));
    }
    let mut pl = Pipeline::new(cfg)?;
    pl.force = cli.force;
    let result = stage(&mut pl, cli);
    let written = pl.write_artifacts(&cli.out);
    match (&result, &pl.report.failed_stage) {
        (Err(e), Some(s)) => eprintln!("stage {s} failed: {e}"),
        (Err(e), None) => eprintln!("failed: {e}"),
        _ => {}
    }
    written?;
    let code = result?;
    for c in &pl.report.criteria {
        println!("criterion {:>2} {:<4} {}: {}", c.id, if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    Ok(code)
}

fn stage(pl: &mut Pipeline, cli: &Cli) -> Result<i32> {
    let passed = pl.validate().map(|r| r.passed());
    match passed {
        Ok(true) => {}
        Ok(false) => return Ok(2),
        Err(e) if e.is_validation() => {
            eprintln!("validation failed: {e}");
            return Ok(2);
        }
        Err(e) => return Err(e),
    }
    match &cli.command {
        Command::Validate => {}
        Command::Geometry => {
            pl.geometry()?;
        }
        Command::Ledger => {
            for p in pl.needed_sectors()? {
                pl.ledger(p)?;
            }
        }
        Command::Solve(a) => {
            let s = pl.geometry()?.varsigma;
            match (a.sector, a.eps_re) {
                (Some(p), Some(re)) => {
                    pl.solve(p, Complex64::new(re, a.eps_im))?;
                }
                (Some(p), None) => {
                    for e in pl.sweep_eps()? {
                        pl.solve(p, e)?;
                    }
                }
                _ => {
                    let pair = pl.cfg.sweep.pair % s;
                    for e in pl.sweep_eps()? {
                        pl.solve(pair, e)?;
                        pl.solve((pair + 1) % s, e)?;
                    }
                }
            }
        }
        Command::Reconstruct => {
            pl.reconstruct()?;
        }
        Command::Flatness => {
            pl.flatness()?;
        }
        Command::Fit => {
            let path = cli.out.join("sweep_detail.csv");
            if path.exists() {
                pl.report.sweep = read_sweep(&path)?;
            } else {
                pl.flatness()?;
            }
            pl.fit()?;
        }
        Command::Pipeline => {
            pl.run_all()?;
            if pl.report.criteria.iter().any(|c| !c.passed) {
                return Ok(1);
            }
        }
    }
    Ok(0)
}

/// Reads `sweep_detail.csv` back into sweep rows.
pub fn read_sweep(path: &Path) -> Result<Vec<SweepRow>> {
    let mut rdr = csv::Reader::from_path(path).map_err(csv_err)?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let num = |i: usize| -> Result<f64> {
            rec[i].parse().map_err(|e: std::num::ParseFloatError| Error::Parse(e.to_string()))
        };
        rows.push(SweepRow {
            eps_abs: num(0)?,
            eps_arg: num(1)?,
            supdiff: num(2)?,
            noise_floor: num(3)?,
            above_noise: &rec[4] == "true",
            path_mismatch: num(5)?,
            path_excess: num(6)?,
            error: rec.get(7).filter(|e| !e.is_empty()).map(str::to_string),
        });
    }
    Ok(rows)
}
