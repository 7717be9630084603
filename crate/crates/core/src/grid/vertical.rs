//! Vertical discretization on [0, 1]: Legendre–Gauss–Lobatto collocation.
//!
//! Nodes include both endpoints (z = 0 is the bottom boundary, z = 1 the top).
//! The quadrature weights are the Gauss–Lobatto weights, exact for polynomials
//! of degree 2N - 1, and together with the differentiation matrix they satisfy
//! the summation-by-parts identity `W D + Dᵀ W = diag(-1, 0, …, 0, 1)`.

/// Legendre polynomial values `P_0..=P_n` at `x`.
fn legendre_all(n: usize, x: f64) -> Vec<f64> {
    let mut p = vec![0.0; n + 1];
    p[0] = 1.0;
    if n >= 1 {
        p[1] = x;
    }
    for k in 2..=n {
        let kf = k as f64;
        p[k] = ((2.0 * kf - 1.0) * x * p[k - 1] - (kf - 1.0) * p[k - 2]) / kf;
    }
    p
}

/// Gauss–Lobatto nodes and weights on [-1, 1], ascending.
pub fn lobatto_nodes(npts: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(npts >= 2);
    let n = npts - 1;
    let nf = n as f64;
    let mut x: Vec<f64> = (0..=n)
        .map(|j| -(std::f64::consts::PI * j as f64 / nf).cos())
        .collect();
    for xi in x.iter_mut().take(n).skip(1) {
        for _ in 0..100 {
            let p = legendre_all(n, *xi);
            let step = (*xi * p[n] - p[n - 1]) / ((nf + 1.0) * p[n]);
            *xi -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
    }
    x[0] = -1.0;
    x[n] = 1.0;
    let w = x
        .iter()
        .map(|&xi| {
            let pn = legendre_all(n, xi)[n];
            2.0 / (nf * (nf + 1.0) * pn * pn)
        })
        .collect();
    (x, w)
}

/// Gauss–Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(npts: usize) -> (Vec<f64>, Vec<f64>) {
    let n = npts;
    let nf = n as f64;
    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        for _ in 0..100 {
            let p = legendre_all(n, x);
            let dp = nf * (x * p[n] - p[n - 1]) / (x * x - 1.0);
            let step = p[n] / dp;
            x -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        let p = legendre_all(n, x);
        let dp = nf * (x * p[n] - p[n - 1]) / (x * x - 1.0);
        nodes.push(x);
        weights.push(2.0 / ((1.0 - x * x) * dp * dp));
    }
    (nodes, weights)
}

/// Barycentric weights for interpolation through `nodes`.
pub fn barycentric_weights(nodes: &[f64]) -> Vec<f64> {
    let n = nodes.len();
    let mut lam = vec![1.0; n];
    for j in 0..n {
        for k in 0..n {
            if k != j {
                lam[j] /= nodes[j] - nodes[k];
            }
        }
    }
    let scale = lam.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    lam.iter().map(|v| v / scale).collect()
}

/// Values of all Lagrange basis polynomials through `nodes` at `t`.
pub fn lagrange_basis(nodes: &[f64], bary: &[f64], t: f64) -> Vec<f64> {
    if let Some(j) = nodes.iter().position(|&z| z == t) {
        let mut e = vec![0.0; nodes.len()];
        e[j] = 1.0;
        return e;
    }
    let terms: Vec<f64> = nodes
        .iter()
        .zip(bary)
        .map(|(&z, &l)| l / (t - z))
        .collect();
    let denom: f64 = terms.iter().sum();
    terms.iter().map(|v| v / denom).collect()
}

/// Collocation data for the vertical direction.
#[derive(Debug, Clone)]
pub struct Vertical {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// Row-major `n × n` first-derivative matrix.
    pub diff: Vec<f64>,
    /// Row-major `n × n` matrix for `f ↦ ∫_0^{z_i} f`.
    pub integ: Vec<f64>,
    pub bary: Vec<f64>,
}

impl Vertical {
    pub fn new(npts: usize) -> Self {
        let (x, w) = lobatto_nodes(npts);
        let mut nodes: Vec<f64> = x.iter().map(|xi| 0.5 * (xi + 1.0)).collect();
        nodes[0] = 0.0;
        nodes[npts - 1] = 1.0;
        let mut weights: Vec<f64> = w.iter().map(|wi| 0.5 * wi).collect();
        let total: f64 = weights.iter().sum();
        for wi in weights.iter_mut() {
            *wi /= total;
        }
        let bary = barycentric_weights(&nodes);

        let n = npts;
        let mut diff = vec![0.0; n * n];
        for i in 0..n {
            let mut rowsum = 0.0;
            for j in 0..n {
                if i != j {
                    let d = (bary[j] / bary[i]) / (nodes[i] - nodes[j]);
                    diff[i * n + j] = d;
                    rowsum += d;
                }
            }
            diff[i * n + i] = -rowsum;
        }

        // ∫_0^{z_i} ℓ_j by Gauss–Legendre on [0, z_i]
        let (gx, gw) = gauss_legendre(n + 1);
        let mut integ = vec![0.0; n * n];
        for i in 1..n {
            let zi = nodes[i];
            for (xq, wq) in gx.iter().zip(&gw) {
                let t = 0.5 * zi * (xq + 1.0);
                let ell = lagrange_basis(&nodes, &bary, t);
                for j in 0..n {
                    integ[i * n + j] += 0.5 * zi * wq * ell[j];
                }
            }
        }
        integ[(n - 1) * n..].copy_from_slice(&weights);

        Self {
            nodes,
            weights,
            diff,
            integ,
            bary,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn d(&self, i: usize, j: usize) -> f64 {
        self.diff[i * self.len() + j]
    }

    /// Symmetric stiffness `K = Dᵀ W diag(β) D` for a coefficient sampled at the nodes.
    pub fn stiffness(&self, beta: &[f64]) -> Vec<f64> {
        let n = self.len();
        let mut k = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let mut s = 0.0;
                for q in 0..n {
                    s += self.d(q, i) * self.weights[q] * beta[q] * self.d(q, j);
                }
                k[i * n + j] = s;
                k[j * n + i] = s;
            }
        }
        k
    }

    /// Divergence-form operator `f ↦ ∂z(β ∂z f)` with a homogeneous Neumann
    /// condition at z = 0 built in weakly (summation by parts) and the
    /// Dirichlet row at z = 1 zeroed. Row-major `n × n`.
    pub fn divergence_form(&self, beta: &[f64]) -> Vec<f64> {
        let n = self.len();
        let k = self.stiffness(beta);
        let mut l = vec![0.0; n * n];
        for i in 0..n - 1 {
            for j in 0..n {
                l[i * n + j] = -k[i * n + j] / self.weights[i];
            }
        }
        l
    }

    pub fn apply(&self, mat: &[f64], f: &[f64], out: &mut [f64]) {
        let n = self.len();
        for i in 0..n {
            let row = &mat[i * n..(i + 1) * n];
            out[i] = row.iter().zip(f).map(|(a, b)| a * b).sum();
        }
    }

    pub fn average(&self, f: &[f64]) -> f64 {
        self.weights.iter().zip(f).map(|(w, v)| w * v).sum()
    }

    /// Interpolate nodal values to an arbitrary `t` in [0, 1].
    pub fn interpolate(&self, f: &[f64], t: f64) -> f64 {
        lagrange_basis(&self.nodes, &self.bary, t)
            .iter()
            .zip(f)
            .map(|(l, v)| l * v)
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_and_weights() {
        for n in 3..20 {
            let v = Vertical::new(n);
            assert_eq!(v.nodes[0], 0.0);
            assert_eq!(v.nodes[n - 1], 1.0);
            assert!((v.weights.iter().sum::<f64>() - 1.0).abs() < 1e-15);
            assert!(v.nodes.windows(2).all(|w| w[1] > w[0]));
        }
    }

    #[test]
    fn quadrature_degree() {
        // exact up to degree 2N - 1
        let v = Vertical::new(6);
        for p in 0..=9 {
            let f: Vec<f64> = v.nodes.iter().map(|z| z.powi(p)).collect();
            assert!((v.average(&f) - 1.0 / (p as f64 + 1.0)).abs() < 1e-14, "p={p}");
        }
    }

    #[test]
    fn summation_by_parts() {
        let v = Vertical::new(9);
        let n = v.len();
        for i in 0..n {
            for j in 0..n {
                let s = v.weights[i] * v.d(i, j) + v.d(j, i) * v.weights[j];
                let b = if i == j && i == 0 {
                    -1.0
                } else if i == j && i == n - 1 {
                    1.0
                } else {
                    0.0
                };
                assert!((s - b).abs() < 1e-12, "({i},{j}) {s}");
            }
        }
    }

    #[test]
    fn integration_matrix() {
        let v = Vertical::new(7);
        let n = v.len();
        let f: Vec<f64> = v.nodes.iter().map(|z| 3.0 * z * z + 1.0).collect();
        let mut out = vec![0.0; n];
        v.apply(&v.integ, &f, &mut out);
        for (z, o) in v.nodes.iter().zip(&out) {
            assert!((o - (z * z * z + z)).abs() < 1e-13);
        }
    }

    #[test]
    fn gauss_legendre_exact() {
        let (x, w) = gauss_legendre(5);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(8)).sum();
        assert!((s - 2.0 / 9.0).abs() < 1e-14);
    }
}
