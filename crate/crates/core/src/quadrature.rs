//! Gauss–Legendre and Gauss–Jacobi rules.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::special::ln_gamma;

/// Nodes and weights of a quadrature rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    /// Integrates `f` against the rule's weight on `[-1, 1]`.
    pub fn apply(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Gauss–Legendre rule with `n` points, Newton-refined from Chebyshev guesses.
pub fn gauss_legendre(n: usize) -> Rule {
    assert!(n >= 1, "rule needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Rule { nodes, weights }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for j in 2..=n {
        let jf = j as f64;
        let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Gauss–Jacobi rule for the weight `(1-x)^alpha (1+x)^beta` on `[-1, 1]`
/// via the Golub–Welsch eigenvalue method.
pub fn gauss_jacobi(n: usize, alpha: f64, beta: f64) -> Rule {
    assert!(n >= 1, "rule needs at least one node");
    assert!(alpha > -1.0 && beta > -1.0, "Jacobi exponents must exceed -1");
    if alpha == 0.0 && beta == 0.0 {
        return gauss_legendre(n);
    }
    let ab = alpha + beta;
    let mut j = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        let fi = i as f64;
        let diag = if i == 0 {
            (beta - alpha) / (ab + 2.0)
        } else {
            let s = 2.0 * fi + ab;
            (beta * beta - alpha * alpha) / (s * (s + 2.0))
        };
        j[(i, i)] = diag;
        if i + 1 < n {
            let m = fi + 1.0;
            let b2 = if i == 0 {
                4.0 * (1.0 + alpha) * (1.0 + beta) / ((2.0 + ab).powi(2) * (3.0 + ab))
            } else {
                let s = 2.0 * m + ab;
                4.0 * m * (m + alpha) * (m + beta) * (m + ab) / (s * s * (s + 1.0) * (s - 1.0))
            };
            let b = b2.sqrt();
            j[(i, i + 1)] = b;
            j[(i + 1, i)] = b;
        }
    }
    let mu0 =
        ((ab + 1.0) * std::f64::consts::LN_2 + ln_gamma(alpha + 1.0) + ln_gamma(beta + 1.0) - ln_gamma(ab + 2.0)).exp();
    let eig = SymmetricEigen::new(j);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], mu0 * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    Rule { nodes: pairs.iter().map(|p| p.0).collect(), weights: pairs.iter().map(|p| p.1).collect() }
}

/// A rule mapped to an interval, with weights absorbing the Jacobian and the
/// endpoint weight `(b-x)^alpha (x-a)^beta`.
#[derive(Debug, Clone)]
pub struct MappedRule {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Maps a Jacobi rule for exponents `(alpha, beta)` to `[a, b]` so that
/// `sum w_q f(x_q) ≈ ∫_a^b (b-x)^alpha (x-a)^beta f(x) dx`.
pub fn map_jacobi(rule: &Rule, a: f64, b: f64, alpha: f64, beta: f64) -> MappedRule {
    let h = 0.5 * (b - a);
    let scale = h.powf(alpha + beta + 1.0);
    MappedRule {
        points: rule.nodes.iter().map(|&x| a + h * (1.0 + x)).collect(),
        weights: rule.weights.iter().map(|&w| w * scale).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::beta as beta_fn;

    #[test]
    fn legendre_integrates_polynomials() {
        let r = gauss_legendre(10);
        for p in 0..20 {
            let exact = if p % 2 == 0 { 2.0 / (p as f64 + 1.0) } else { 0.0 };
            let got = r.apply(|x| x.powi(p));
            assert!((got - exact).abs() < 1e-14, "degree {p}: {got} vs {exact}");
        }
    }

    #[test]
    fn jacobi_moments_match_beta() {
        for &(a, b) in &[(-0.5, 0.3), (-2.0 / 3.0, 0.0), (2.0, 1.5), (0.0, -0.25)] {
            let r = gauss_jacobi(16, a, b);
            for p in 0..12 {
                // ∫_{-1}^{1} (1-x)^a (1+x)^b ((1+x)/2)^p dx = 2^{a+b+1} B(b+p+1, a+1)
                let exact = 2f64.powf(a + b + 1.0) * beta_fn(b + p as f64 + 1.0, a + 1.0);
                let got = r.apply(|x| ((1.0 + x) / 2.0).powi(p));
                assert!((got - exact).abs() < 1e-13 * exact.abs().max(1.0), "({a},{b}) p={p}");
            }
        }
    }
}
