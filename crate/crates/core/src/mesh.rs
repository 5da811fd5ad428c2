//! Radial panel meshes along a ray and the uniform Fourier grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre;

/// Panel layout for the radial variable on `[0, r_max]`.
///
/// The first panel is `[0, first_panel]`. Panels keep that width up to
/// `fine_until`; beyond it widths grow by `ratio` but never exceed
/// `max_width`. Extra breakpoints are inserted as panel edges. Inside each
/// panel the nodes are Gauss points in `x = r^{1/power}`; the first panel
/// is split into `inner_panels` panels of equal width in `x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshSpec {
    pub r_max: f64,
    pub first_panel: f64,
    pub ratio: f64,
    pub max_width: f64,
    pub order: usize,
    #[serde(default)]
    pub fine_until: f64,
    #[serde(default = "one")]
    pub power: f64,
    #[serde(default)]
    pub inner_panels: usize,
    #[serde(default)]
    pub breakpoints: Vec<f64>,
}

fn one() -> f64 {
    1.0
}

impl MeshSpec {
    /// Geometric grading from `1e-4 r_max` with 60 panels of 8 nodes.
    pub fn geometric(r_max: f64) -> Self {
        let r_min = 1e-4 * r_max;
        Self {
            r_max,
            first_panel: r_min,
            ratio: (r_max / r_min).powf(1.0 / 59.0),
            max_width: f64::INFINITY,
            order: 8,
            fine_until: 0.0,
            power: 1.0,
            inner_panels: 0,
            breakpoints: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.r_max > 0.0
            && self.first_panel > 0.0
            && self.first_panel <= self.r_max
            && self.ratio >= 1.0
            && self.max_width > 0.0
            && self.order >= 2
            && self.power >= 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("bad mesh layout {self:?}")))
        }
    }

    pub fn edges(&self) -> Result<Vec<f64>> {
        self.validate()?;
        let mut edges = vec![0.0, self.first_panel.min(self.r_max)];
        let mut width = self.first_panel;
        while *edges.last().unwrap() < self.r_max * (1.0 - 1e-12) {
            let last = *edges.last().unwrap();
            if last >= self.fine_until * (1.0 - 1e-12) {
                width = (width * self.ratio).min(self.max_width);
            }
            let next = last + width;
            if next >= self.r_max * (1.0 - 1e-9) {
                edges.push(self.r_max);
            } else {
                edges.push(next);
            }
        }
        *edges.last_mut().unwrap() = self.r_max;
        let x1 = edges[1].powf(1.0 / self.power);
        for j in 1..self.inner_panels {
            edges.push((x1 * j as f64 / self.inner_panels as f64).powf(self.power));
        }
        for &b in &self.breakpoints {
            if b > 0.0 && b < self.r_max && !edges.iter().any(|&e| (e - b).abs() <= 1e-12 * b) {
                edges.push(b);
            }
        }
        edges.sort_by(f64::total_cmp);
        Ok(edges)
    }
}

/// Interpolation stencil: weights for the `len` consecutive nodes starting at `start`.
#[derive(Debug, Clone)]
pub struct Stencil {
    pub start: usize,
    pub weights: Vec<f64>,
}

/// Panel mesh with Gauss–Legendre nodes in `x = r^{1/power}` and barycentric
/// Lagrange interpolation in `x` per panel.
///
/// With `power = q`, functions of the form `r^{j/q}` are polynomials in `x`.
#[derive(Debug, Clone)]
pub struct RadialMesh {
    edges: Vec<f64>,
    order: usize,
    power: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    reference: Vec<f64>,
    bary: Vec<f64>,
}

impl RadialMesh {
    pub fn new(spec: &MeshSpec) -> Result<Self> {
        Self::from_edges(spec.edges()?, spec.order, spec.power)
    }

    pub fn from_edges(edges: Vec<f64>, order: usize, power: f64) -> Result<Self> {
        if edges.len() < 2 || edges[0] != 0.0 || edges.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput("mesh edges must start at 0 and increase".into()));
        }
        if !(power >= 1.0) || order < 2 {
            return Err(Error::InvalidInput(format!("bad mesh order {order} or power {power}")));
        }
        let rule = gauss_legendre(order);
        let reference = rule.nodes.clone();
        let bary: Vec<f64> = (0..order)
            .map(|j| {
                let prod: f64 = (0..order).filter(|&i| i != j).map(|i| reference[j] - reference[i]).product();
                1.0 / prod
            })
            .collect();
        let mut nodes = Vec::with_capacity((edges.len() - 1) * order);
        let mut weights = Vec::with_capacity(nodes.capacity());
        for w in edges.windows(2) {
            let (a, b) = (w[0].powf(1.0 / power), w[1].powf(1.0 / power));
            for (&x, &wx) in reference.iter().zip(&rule.weights) {
                let xx = a + 0.5 * (b - a) * (1.0 + x);
                nodes.push(xx.powf(power));
                weights.push(wx * 0.5 * (b - a) * power * xx.powf(power - 1.0));
            }
        }
        Ok(Self { edges, order, power, nodes, weights, reference, bary })
    }

    pub fn power(&self) -> f64 {
        self.power
    }

    /// Composite Gauss weights for `∫ f(r) dr` over each panel, aligned with `nodes`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn panels(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn r_max(&self) -> f64 {
        *self.edges.last().unwrap()
    }

    /// Index of the panel containing `r`, clamped to the mesh.
    pub fn panel_of(&self, r: f64) -> usize {
        let n = self.panels();
        match self.edges.binary_search_by(|e| e.total_cmp(&r)) {
            Ok(i) => i.min(n - 1),
            Err(i) => i.saturating_sub(1).min(n - 1),
        }
    }

    /// Nodes of panel `p` as a slice of the global node list.
    pub fn panel_nodes(&self, p: usize) -> &[f64] {
        &self.nodes[p * self.order..(p + 1) * self.order]
    }

    /// Lagrange weights on the panel containing `r`.
    pub fn stencil(&self, r: f64) -> Stencil {
        self.stencil_in(self.panel_of(r), r)
    }

    /// Lagrange weights on panel `p`, extrapolating if `r` lies outside it.
    pub fn stencil_in(&self, p: usize, r: f64) -> Stencil {
        let inv = 1.0 / self.power;
        let (a, b) = (self.edges[p].powf(inv), self.edges[p + 1].powf(inv));
        let x = 2.0 * (r.max(0.0).powf(inv) - a) / (b - a) - 1.0;
        let mut weights = vec![0.0; self.order];
        if let Some(j) = self.reference.iter().position(|&xj| xj == x) {
            weights[j] = 1.0;
        } else {
            let mut total = 0.0;
            for j in 0..self.order {
                let t = self.bary[j] / (x - self.reference[j]);
                weights[j] = t;
                total += t;
            }
            for w in &mut weights {
                *w /= total;
            }
        }
        Stencil { start: p * self.order, weights }
    }

    /// The mesh restricted to panels below the edge `r_cut`.
    pub fn truncated(&self, r_cut: f64) -> Result<Self> {
        let idx = self
            .edges
            .iter()
            .position(|&e| (e - r_cut).abs() <= 1e-12 * r_cut.max(1e-300))
            .ok_or_else(|| Error::InvalidInput(format!("{r_cut} is not a mesh edge")))?;
        if idx == 0 {
            return Err(Error::InvalidInput("cannot truncate at the origin".into()));
        }
        Self::from_edges(self.edges[..=idx].to_vec(), self.order, self.power)
    }
}

/// Uniform symmetric grid `m_j = -M_max + j Δm`, `j = 0..n`, with `n` odd.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MGrid {
    pub m_max: f64,
    pub n: usize,
}

impl MGrid {
    pub fn new(m_max: f64, n: usize) -> Result<Self> {
        if !(m_max > 0.0) || n < 3 || n % 2 == 0 {
            return Err(Error::InvalidInput(format!(
                "m-grid needs M_max > 0 and an odd node count >= 3, got ({m_max}, {n})"
            )));
        }
        Ok(Self { m_max, n })
    }

    pub fn dm(&self) -> f64 {
        2.0 * self.m_max / (self.n - 1) as f64
    }

    pub fn center(&self) -> usize {
        self.n / 2
    }

    pub fn node(&self, j: usize) -> f64 {
        if j == self.center() {
            0.0
        } else {
            (j as f64 - self.center() as f64) * self.dm()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.node(j)).collect()
    }

    /// Grid of `n` nodes whose edge satisfies `e^{-decay M_max} = tail`.
    pub fn for_decay(decay: f64, tail: f64, n: usize) -> Result<Self> {
        if !(decay > 0.0) {
            return Err(Error::InvalidInput("decay rate must be positive".into()));
        }
        Self::new(-tail.ln() / decay, n)
    }
}
