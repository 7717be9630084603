//! Principal symbol of the horizontal Lamé part and parameter-ellipticity scan.

use std::f64::consts::PI;

use serde::Serialize;

use super::b1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SymbolEigs {
    pub lambda1: f64,
    pub lambda2: f64,
    /// −𝒜₂,#(k): [[μ|k|² + μ'k₁², μ'k₁k₂], [μ'k₁k₂, μ|k|² + μ'k₂²]].
    pub matrix: [[f64; 2]; 2],
}

/// Symbol eigenvalues for an already scaled frequency `kt = 2πk`.
pub fn lame_symbol_eigs_scaled(kt: [f64; 2], mu: f64, mu_prime: f64) -> SymbolEigs {
    let k2 = kt[0] * kt[0] + kt[1] * kt[1];
    SymbolEigs {
        lambda1: (mu + mu_prime) * k2,
        lambda2: mu * k2,
        matrix: [
            [mu * k2 + mu_prime * kt[0] * kt[0], mu_prime * kt[0] * kt[1]],
            [mu_prime * kt[0] * kt[1], mu * k2 + mu_prime * kt[1] * kt[1]],
        ],
    }
}

pub fn lame_symbol_eigs(k: (i64, i64), mu: f64, mu_prime: f64) -> SymbolEigs {
    lame_symbol_eigs_scaled([2.0 * PI * k.0 as f64, 2.0 * PI * k.1 as f64], mu, mu_prime)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EllipticityReport {
    pub kmax: i64,
    pub min_lambda1: f64,
    pub min_lambda2: f64,
    /// |k| at which the smaller eigenvalue is attained.
    pub argmin_norm: f64,
    pub min_b1: f64,
    pub ok: bool,
    pub message: String,
}

pub fn symbol_ellipticity_report(mu: f64, mu_prime: f64, kmax: i64) -> EllipticityReport {
    let mut min1 = f64::INFINITY;
    let mut min2 = f64::INFINITY;
    let mut best = f64::INFINITY;
    let mut argmin = 0.0;
    for k1 in -kmax..=kmax {
        for k2 in -kmax..=kmax {
            let r2 = (k1 * k1 + k2 * k2) as f64;
            if r2 == 0.0 || r2 > (kmax * kmax) as f64 {
                continue;
            }
            let e = lame_symbol_eigs((k1, k2), mu, mu_prime);
            min1 = min1.min(e.lambda1);
            min2 = min2.min(e.lambda2);
            let lo = e.lambda1.min(e.lambda2);
            if lo < best {
                best = lo;
                argmin = r2.sqrt();
            }
        }
    }
    let min_b1 = (0..=100).map(|i| b1(i as f64 / 100.0)).fold(f64::INFINITY, f64::min);
    let sym_ok = min1 > 0.0 && min2 > 0.0;
    let b_ok = min_b1 > 0.0;
    let message = if sym_ok && b_ok {
        "horizontal symbol and vertical coefficient are positive".to_string()
    } else if !sym_ok {
        format!(
            "symbol eigenvalue (mu + mu') |k|^2 = {min1:.6e} is not positive: requires mu > 0 and mu + mu' > 0 (mu = {mu}, mu' = {mu_prime})"
        )
    } else {
        format!("vertical coefficient b1 has minimum {min_b1:.6e}")
    };
    EllipticityReport {
        kmax,
        min_lambda1: min1,
        min_lambda2: min2,
        argmin_norm: argmin,
        min_b1,
        ok: sym_ok && b_ok,
        message,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transforms::DELTA;

    #[test]
    fn unit_frequency() {
        let e = lame_symbol_eigs_scaled([1.0, 0.0], 1.0, 1.0);
        assert_eq!((e.lambda1, e.lambda2), (2.0, 1.0));
        let e = lame_symbol_eigs((0, 0), 1.0, 1.0);
        assert_eq!((e.lambda1, e.lambda2), (0.0, 0.0));
    }

    #[test]
    fn scans() {
        let r = symbol_ellipticity_report(1.0, 1.0, 8);
        assert!(r.ok);
        assert_eq!(r.argmin_norm, 1.0);
        assert!((r.min_b1 - (-2.0f64).exp() / (DELTA * DELTA)).abs() < 1e-12);
        assert!(symbol_ellipticity_report(1.0, -0.5, 8).ok);
        let bad = symbol_ellipticity_report(1.0, -1.5, 8);
        assert!(!bad.ok);
        assert!(bad.min_lambda1 < 0.0);
    }
}
