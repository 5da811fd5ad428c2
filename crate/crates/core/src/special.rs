//! Real special functions and principal-branch complex powers.

use num_complex::Complex64;
use statrs::function::gamma as sg;

pub fn gamma(x: f64) -> f64 {
    sg::gamma(x)
}

pub fn ln_gamma(x: f64) -> f64 {
    sg::ln_gamma(x)
}

/// Euler Beta function for positive arguments.
pub fn beta(a: f64, b: f64) -> f64 {
    (ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)).exp()
}

/// `z^a` on the principal branch of the logarithm.
pub fn cpow(z: Complex64, a: f64) -> Complex64 {
    if z == Complex64::new(0.0, 0.0) {
        return if a == 0.0 { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) };
    }
    (z.ln() * a).exp()
}

/// `(r e^{iγ})^a` computed from polar data, avoiding a round trip through `atan2`.
pub fn polar_pow(r: f64, gamma: f64, a: f64) -> Complex64 {
    if r == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    Complex64::from_polar(r.powf(a), a * gamma)
}

/// Falling factorial `a(a-1)...(a-n+1)`.
pub fn falling(a: f64, n: usize) -> f64 {
    (0..n).fold(1.0, |acc, j| acc * (a - j as f64))
}

/// Product `a(a+k)(a+2k)...(a+(n-1)k)`.
pub fn k_rising(a: f64, k: f64, n: usize) -> f64 {
    (0..n).fold(1.0, |acc, j| acc * (a + j as f64 * k))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_half_integer() {
        let expect = std::f64::consts::PI.sqrt() * 0.75;
        assert!((gamma(2.5) - expect).abs() < 1e-13);
    }

    #[test]
    fn cpow_branch() {
        let z = Complex64::from_polar(2.0, 3.0);
        let w = cpow(z, 0.75);
        assert!((w.arg() - 2.25).abs() < 1e-14);
        assert!((w.norm() - 2f64.powf(0.75)).abs() < 1e-14);
        let p = polar_pow(2.0, 3.0, 0.75);
        assert!((p - w).norm() < 1e-14);
    }

    #[test]
    fn beta_symmetric() {
        assert!((beta(2.0, 3.0) - 1.0 / 12.0).abs() < 1e-15);
        assert!((beta(0.3, 1.7) - beta(1.7, 0.3)).abs() < 1e-15);
    }
}
