#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use borelk::cli::{Pipeline, RunConfig};
use borelk::mesh::{MGrid, MeshSpec, RadialMesh};
use borelk::problem::ProblemSpec;
use borelk::solver::{RayOperators, SolverOptions};
use borelk::transforms::{BorelGrid, GridMeta};
use borelk::Complex64;

pub fn manifest() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

pub fn data(name: &str) -> PathBuf {
    manifest().join("tests/data").join(name)
}

pub fn desk_spec() -> ProblemSpec {
    ProblemSpec::load(&manifest().join("configs/desk_problem.toml")).unwrap()
}

/// Desk data with `c_12 = 0` and every `c_l = 0`.
pub fn affine_spec() -> ProblemSpec {
    let mut s = desk_spec();
    s.c12 = [0.0, 0.0];
    for lv in &mut s.levels {
        lv.c = [0.0, 0.0];
    }
    s
}

pub fn small_config() -> RunConfig {
    RunConfig::load(&data("small_run.toml")).unwrap()
}

pub fn small_pipeline(spec: ProblemSpec) -> Pipeline {
    Pipeline::with_spec(small_config(), spec).unwrap()
}

pub fn small_mesh() -> Arc<RadialMesh> {
    Arc::new(
        RadialMesh::new(&MeshSpec {
            r_max: 12.0,
            first_panel: 0.1,
            ratio: 1.3,
            max_width: 2.0,
            order: 8,
            fine_until: 1.0,
            power: 4.0,
            inner_panels: 3,
            breakpoints: vec![0.25],
        })
        .unwrap(),
    )
}

pub fn small_mgrid() -> MGrid {
    MGrid::new(30.0, 41).unwrap()
}

pub fn meta() -> GridMeta {
    GridMeta { k: 0.75, nu: 0.5, beta: 1.0, mu: 2.5, rho: 0.5 }
}

pub fn zero_grid(gamma: f64) -> BorelGrid {
    BorelGrid::zeros(gamma, small_mesh(), small_mgrid(), meta(), Complex64::new(0.05, 0.0))
}

/// Smooth grid inside the weighted space: `τ^k e^{-|τ|} g(m)` times a phase.
pub fn sample_grid(gamma: f64, phase: f64, shift: f64) -> BorelGrid {
    let m = meta();
    BorelGrid::from_fn(gamma, small_mesh(), small_mgrid(), m, Complex64::new(0.05, 0.0), |tau, mm| {
        if tau.norm() == 0.0 {
            return tau;
        }
        let prof = (1.0 + mm.abs()).powf(-m.mu) * (-m.beta * mm.abs()).exp();
        tau.powf(m.k) * (-tau.norm()).exp() * prof * Complex64::from_polar(1.0 + shift * mm.cos(), phase)
    })
}

pub fn ray(spec: &ProblemSpec, gamma: f64) -> RayOperators {
    RayOperators::new(spec, gamma, small_mesh(), small_mgrid(), meta(), &SolverOptions::default()).unwrap()
}

pub fn rel(a: Complex64, b: Complex64) -> f64 {
    (a - b).norm() / b.norm()
}
