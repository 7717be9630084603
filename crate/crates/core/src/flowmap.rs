//! The hydrostatic Lagrangian flow map X(t, ·) along the vertically averaged
//! velocity, its Jacobian, the cofactor inverse Z = [∇X]⁻¹ and the inverse map Y.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{wavenumber, Field2D, Field3D, Grid};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowTolerances {
    pub det_floor: f64,
    pub inv_tol: f64,
    pub max_iter: usize,
}

impl Default for FlowTolerances {
    fn default() -> Self {
        Self {
            det_floor: 0.1,
            inv_tol: 1e-10,
            max_iter: 50,
        }
    }
}

/// Flow map state. Matrix fields have four components `[m11, m12, m21, m22]`
/// with `m_ab = ∂X_a/∂y_b` for `grad`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowMap {
    /// X − y, periodic.
    pub disp: Field2D,
    pub grad: Field2D,
    pub z: Field2D,
    pub det: Field2D,
    pub t: f64,
    pub tol: FlowTolerances,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvertibilityReport {
    pub supnorm_dev: f64,
    pub min_det: f64,
    pub ok: bool,
}

fn identity_matrix_field(g: &Grid) -> Field2D {
    Field2D::from_fn(g, 4, |c, _, _| if c == 0 || c == 3 { 1.0 } else { 0.0 })
}

impl FlowMap {
    pub fn identity(g: &Grid) -> Self {
        Self::identity_with(g, FlowTolerances::default())
    }

    pub fn identity_with(g: &Grid, tol: FlowTolerances) -> Self {
        Self {
            disp: Field2D::zeros(g, 2),
            grad: identity_matrix_field(g),
            z: identity_matrix_field(g),
            det: Field2D::constant(g, 1.0),
            t: 0.0,
            tol,
        }
    }

    /// Absolute positions X(y) at the grid nodes (not wrapped).
    pub fn positions(&self, g: &Grid) -> Field2D {
        let mut p = self.disp.clone();
        for i in 0..g.nx {
            for j in 0..g.ny {
                p.set(0, i, j, g.x(i) + self.disp.get(0, i, j));
                p.set(1, i, j, g.y(j) + self.disp.get(1, i, j));
            }
        }
        p
    }

    /// Flow map from a displacement and its Jacobian at time `t`.
    pub fn from_parts(disp: Field2D, grad: Field2D, t: f64, tol: FlowTolerances) -> Result<Self> {
        if disp.ncomp != 2 || grad.ncomp != 4 || disp.nh() != grad.nh() {
            return Err(Error::ShapeMismatch("flow map needs a 2-vector displacement and a 4-component Jacobian".into()));
        }
        let z = grad.clone();
        let det = Field2D {
            ncomp: 1,
            data: vec![1.0; grad.nh()],
            ..grad.clone()
        };
        Self {
            disp,
            grad,
            z,
            det,
            t,
            tol,
        }
        .refresh()
    }

    /// Rebuild Z and det from `grad`, enforcing the determinant floor.
    fn refresh(mut self) -> Result<Self> {
        let (z, det) = inverse_jacobian(&self.grad)?;
        self.z = z;
        self.det = det;
        let min_det = self.det.min();
        if min_det < self.tol.det_floor {
            let r = check_invertibility(&self);
            return Err(Error::MapNoninvertible {
                min_det,
                deviation: r.supnorm_dev,
            });
        }
        Ok(self)
    }
}

/// Cofactor inverse of a 2×2 matrix field.
pub fn inverse_jacobian(grad: &Field2D) -> Result<(Field2D, Field2D)> {
    let n = grad.nh();
    let mut z = grad.clone();
    let mut det = Field2D {
        nx: grad.nx,
        ny: grad.ny,
        ncomp: 1,
        data: vec![0.0; n],
    };
    let (a, b, c, d) = (grad.comp(0), grad.comp(1), grad.comp(2), grad.comp(3));
    for p in 0..n {
        let dt = a[p] * d[p] - b[p] * c[p];
        if !(dt.abs() > 1e-14) {
            return Err(Error::SingularJacobian { node: p, det: dt });
        }
        det.data[p] = dt;
        z.data[p] = d[p] / dt;
        z.data[n + p] = -b[p] / dt;
        z.data[2 * n + p] = -c[p] / dt;
        z.data[3 * n + p] = a[p] / dt;
    }
    Ok((z, det))
}

/// Max over nodes of the induced ∞-norm (max row sum) of M − I.
pub fn matrix_field_deviation(m: &Field2D) -> f64 {
    let n = m.nh();
    let mut dev = 0.0f64;
    for p in 0..n {
        let r1 = (m.data[p] - 1.0).abs() + m.data[n + p].abs();
        let r2 = m.data[2 * n + p].abs() + (m.data[3 * n + p] - 1.0).abs();
        dev = dev.max(r1.max(r2));
    }
    dev
}

pub fn check_invertibility(fm: &FlowMap) -> InvertibilityReport {
    let supnorm_dev = matrix_field_deviation(&fm.grad);
    let min_det = fm.det.min();
    InvertibilityReport {
        supnorm_dev,
        min_det,
        ok: supnorm_dev <= 0.5 && min_det >= fm.tol.det_floor,
    }
}

/// Trigonometric interpolant of one or more horizontal slabs, evaluable at
/// arbitrary points. The Nyquist bins use a cosine so the interpolant is real.
#[derive(Debug, Clone)]
pub struct SpectralInterp {
    nx: usize,
    ny: usize,
    coeffs: Vec<Vec<Complex64>>,
}

impl SpectralInterp {
    pub fn new(g: &Grid, slabs: &[&[f64]]) -> Self {
        let s = 1.0 / g.nh() as f64;
        let coeffs = slabs
            .iter()
            .map(|f| g.fft().forward(f).into_iter().map(|c| c * s).collect())
            .collect();
        Self {
            nx: g.nx,
            ny: g.ny,
            coeffs,
        }
    }

    fn basis(n: usize, x: f64) -> Vec<Complex64> {
        (0..n)
            .map(|i| {
                if i == n / 2 {
                    Complex64::new((PI * n as f64 * x).cos(), 0.0)
                } else {
                    Complex64::from_polar(1.0, 2.0 * PI * wavenumber(i, n) as f64 * x)
                }
            })
            .collect()
    }

    /// Values of all interpolated slabs at `(x, y)`.
    pub fn eval(&self, x: f64, y: f64) -> Vec<f64> {
        let bx = Self::basis(self.nx, x);
        let by = Self::basis(self.ny, y);
        self.coeffs
            .iter()
            .map(|c| {
                let mut s = Complex64::new(0.0, 0.0);
                for (i, bxi) in bx.iter().enumerate() {
                    let row = &c[i * self.ny..(i + 1) * self.ny];
                    let inner: Complex64 = row.iter().zip(&by).map(|(a, b)| a * b).sum();
                    s += bxi * inner;
                }
                s.re
            })
            .collect()
    }
}

/// Evaluate every slab of `f` at the points `map` (a 2-vector field of positions).
pub fn compose_2d(g: &Grid, f: &Field2D, map: &Field2D) -> Result<Field2D> {
    check_map(g, map)?;
    let slabs: Vec<&[f64]> = (0..f.ncomp).map(|c| f.comp(c)).collect();
    let vals = eval_at_map(g, &slabs, map);
    let mut out = Field2D::zeros(g, f.ncomp);
    for (p, v) in vals.into_iter().enumerate() {
        for c in 0..f.ncomp {
            out.data[c * g.nh() + p] = v[c];
        }
    }
    Ok(out)
}

pub fn compose_3d(g: &Grid, f: &Field3D, map: &Field2D) -> Result<Field3D> {
    check_map(g, map)?;
    let mut slabs: Vec<&[f64]> = Vec::new();
    for c in 0..f.ncomp {
        for k in 0..f.nz {
            slabs.push(f.slab(c, k));
        }
    }
    let vals = eval_at_map(g, &slabs, map);
    let mut out = Field3D::zeros(g, f.ncomp);
    let nh = g.nh();
    for (p, v) in vals.into_iter().enumerate() {
        for (s, val) in v.into_iter().enumerate() {
            out.data[s * nh + p] = val;
        }
    }
    Ok(out)
}

fn check_map(g: &Grid, map: &Field2D) -> Result<()> {
    if map.ncomp != 2 || map.nx != g.nx || map.ny != g.ny {
        return Err(Error::ShapeMismatch("map must be a 2-vector field on the grid".into()));
    }
    Ok(())
}

fn eval_at_map(g: &Grid, slabs: &[&[f64]], map: &Field2D) -> Vec<Vec<f64>> {
    let interp = SpectralInterp::new(g, slabs);
    (0..g.nh())
        .into_par_iter()
        .map(|p| interp.eval(map.data[p], map.data[g.nh() + p]))
        .collect()
}

/// One classical RK4 step of dX/dt = v̄(X), d∇X/dt = (∇v̄)(X)·∇X for an
/// Eulerian velocity `vbar` frozen over the step.
pub fn advance_flow(g: &Grid, fm: &FlowMap, vbar: &Field2D, dt: f64) -> Result<FlowMap> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParams(format!("dt must be > 0, got {dt}")));
    }
    let d1 = g.derivs2(vbar.comp(0));
    let d2 = g.derivs2(vbar.comp(1));
    let interp = SpectralInterp::new(
        g,
        &[vbar.comp(0), vbar.comp(1), &d1[0], &d1[1], &d2[0], &d2[1]],
    );
    let nh = g.nh();
    let pos = fm.positions(g);
    let rhs = |x: f64, y: f64, m: &[f64; 4]| -> [f64; 6] {
        let v = interp.eval(x, y);
        // (∇v̄)_{ab} = ∂_b v̄_a
        let gv = [v[2], v[3], v[4], v[5]];
        [
            v[0],
            v[1],
            gv[0] * m[0] + gv[1] * m[2],
            gv[0] * m[1] + gv[1] * m[3],
            gv[2] * m[0] + gv[3] * m[2],
            gv[2] * m[1] + gv[3] * m[3],
        ]
    };
    let stepped: Vec<[f64; 6]> = (0..nh)
        .into_par_iter()
        .map(|p| {
            let s0 = [
                pos.data[p],
                pos.data[nh + p],
                fm.grad.data[p],
                fm.grad.data[nh + p],
                fm.grad.data[2 * nh + p],
                fm.grad.data[3 * nh + p],
            ];
            let f = |s: &[f64; 6]| rhs(s[0], s[1], &[s[2], s[3], s[4], s[5]]);
            let add = |s: &[f64; 6], k: &[f64; 6], h: f64| {
                let mut o = *s;
                for q in 0..6 {
                    o[q] += h * k[q];
                }
                o
            };
            let k1 = f(&s0);
            let k2 = f(&add(&s0, &k1, 0.5 * dt));
            let k3 = f(&add(&s0, &k2, 0.5 * dt));
            let k4 = f(&add(&s0, &k3, dt));
            let mut out = s0;
            for q in 0..6 {
                out[q] += dt / 6.0 * (k1[q] + 2.0 * k2[q] + 2.0 * k3[q] + k4[q]);
            }
            out
        })
        .collect();
    let mut next = fm.clone();
    for (p, s) in stepped.iter().enumerate() {
        let (i, j) = (p / g.ny, p % g.ny);
        next.disp.data[p] = s[0] - g.x(i);
        next.disp.data[nh + p] = s[1] - g.y(j);
        for q in 0..4 {
            next.grad.data[q * nh + p] = s[2 + q];
        }
    }
    next.t = fm.t + dt;
    next.refresh()
}

/// Lagrangian update used by the time stepper: with V̄(y) = v̄(X(y)) known in
/// Lagrangian coordinates, ∂t X = V̄ and ∂t ∇X = ∇_y V̄. Trapezoidal in time.
pub fn advance_lagrangian(
    g: &Grid,
    fm: &FlowMap,
    vbar_old: &Field2D,
    vbar_new: &Field2D,
    dt: f64,
) -> Result<FlowMap> {
    let mut next = fm.clone();
    let avg = vbar_old.add(vbar_new).scaled(0.5);
    next.disp.axpy(dt, &avg);
    for a in 0..2 {
        let gx = g.deriv(avg.comp(a), 1, 0);
        let gy = g.deriv(avg.comp(a), 0, 1);
        for (m, v) in next.grad.comp_mut(2 * a).iter_mut().zip(&gx) {
            *m += dt * v;
        }
        for (m, v) in next.grad.comp_mut(2 * a + 1).iter_mut().zip(&gy) {
            *m += dt * v;
        }
    }
    next.t = fm.t + dt;
    next.refresh()
}

fn wrap(v: f64) -> f64 {
    v - v.floor()
}

fn wrap_signed(v: f64) -> f64 {
    v - v.round()
}

/// Inverse map Y = X⁻¹ at the grid nodes, wrapped into [0,1)², by Newton
/// iteration on the trigonometric interpolant of X.
pub fn invert_map(g: &Grid, fm: &FlowMap) -> Result<Field2D> {
    let dx1 = g.derivs2(fm.disp.comp(0));
    let dx2 = g.derivs2(fm.disp.comp(1));
    let interp = SpectralInterp::new(
        g,
        &[fm.disp.comp(0), fm.disp.comp(1), &dx1[0], &dx1[1], &dx2[0], &dx2[1]],
    );
    let nh = g.nh();
    let tol = fm.tol;
    let results: Vec<Result<(f64, f64)>> = (0..nh)
        .into_par_iter()
        .map(|p| {
            let (tx, ty) = (g.x(p / g.ny), g.y(p % g.ny));
            let mut y1 = tx - fm.disp.data[p];
            let mut y2 = ty - fm.disp.data[nh + p];
            let mut res = f64::INFINITY;
            for it in 0..=tol.max_iter {
                let v = interp.eval(y1, y2);
                let r1 = wrap_signed(y1 + v[0] - tx);
                let r2 = wrap_signed(y2 + v[1] - ty);
                res = r1.hypot(r2);
                if res <= tol.inv_tol {
                    return Ok((wrap(y1), wrap(y2)));
                }
                if it == tol.max_iter {
                    break;
                }
                let (a, b, c, d) = (1.0 + v[2], v[3], v[4], 1.0 + v[5]);
                let det = a * d - b * c;
                if det.abs() < 1e-14 {
                    break;
                }
                y1 -= (d * r1 - b * r2) / det;
                y2 -= (-c * r1 + a * r2) / det;
            }
            Err(Error::InversionFailed {
                node: p,
                residual: res,
                iterations: tol.max_iter,
            })
        })
        .collect();
    let mut out = Field2D::zeros(g, 2);
    for (p, r) in results.into_iter().enumerate() {
        let (a, b) = r?;
        out.data[p] = a;
        out.data[nh + p] = b;
    }
    Ok(out)
}

/// max ‖X(Y(x)) − x‖ over the nodes, measured on the torus.
pub fn inversion_residual(g: &Grid, fm: &FlowMap, y: &Field2D) -> f64 {
    let d = compose_2d(g, &fm.disp, y).expect("shape checked");
    let nh = g.nh();
    let mut worst = 0.0f64;
    for p in 0..nh {
        let (tx, ty) = (g.x(p / g.ny), g.y(p % g.ny));
        let r1 = wrap_signed(y.data[p] + d.data[p] - tx);
        let r2 = wrap_signed(y.data[nh + p] + d.data[nh + p] - ty);
        worst = worst.max(r1.hypot(r2));
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;

    fn shear_map(g: &Grid, a: f64) -> FlowMap {
        let mut fm = FlowMap::identity(g);
        fm.disp = Field2D::from_fn(g, 2, |c, x, y| {
            if c == 0 {
                a * (2.0 * PI * y).sin()
            } else {
                0.5 * a * (2.0 * PI * x).cos()
            }
        });
        for c in 0..2 {
            let gx = g.deriv(fm.disp.comp(c), 1, 0);
            let gy = g.deriv(fm.disp.comp(c), 0, 1);
            for p in 0..g.nh() {
                fm.grad.data[(2 * c) * g.nh() + p] += gx[p];
                fm.grad.data[(2 * c + 1) * g.nh() + p] += gy[p];
            }
        }
        fm.refresh().unwrap()
    }

    #[test]
    fn cofactor_inverse() {
        let g = make_grid(4, 4, 3).unwrap();
        let mut m = identity_matrix_field(&g);
        m.comp_mut(0).iter_mut().for_each(|v| *v = 2.0);
        let (z, det) = inverse_jacobian(&m).unwrap();
        assert_eq!(z.get(0, 1, 1), 0.5);
        assert_eq!(z.get(3, 1, 1), 1.0);
        assert_eq!(det.get(0, 2, 2), 2.0);
        m.comp_mut(3).iter_mut().for_each(|v| *v = 0.0);
        assert!(matches!(inverse_jacobian(&m), Err(Error::SingularJacobian { .. })));
    }

    #[test]
    fn identity_report() {
        let g = make_grid(4, 4, 3).unwrap();
        let fm = FlowMap::identity(&g);
        let r = check_invertibility(&fm);
        assert_eq!(r.supnorm_dev, 0.0);
        assert_eq!(r.min_det, 1.0);
        assert!(r.ok);
        let mut bad = fm.clone();
        bad.grad.data[0] = 1.6;
        let r = check_invertibility(&bad);
        assert!(r.supnorm_dev >= 0.6 - 1e-15 && !r.ok);
    }

    #[test]
    fn translation() {
        let g = make_grid(8, 8, 3).unwrap();
        let v = Field2D::from_fn(&g, 2, |c, _, _| if c == 0 { 0.3 } else { -0.2 });
        let mut fm = FlowMap::identity(&g);
        for _ in 0..10 {
            fm = advance_flow(&g, &fm, &v, 0.1).unwrap();
        }
        for p in 0..g.nh() {
            assert!((fm.disp.data[p] - 0.3).abs() < 1e-13);
            assert!((fm.disp.data[g.nh() + p] + 0.2).abs() < 1e-13);
        }
        assert!(matrix_field_deviation(&fm.grad) < 1e-13);
        let y = invert_map(&g, &fm).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                assert!(wrap_signed(y.get(0, i, j) - (g.x(i) - 0.3)).abs() < 1e-12);
                assert!(wrap_signed(y.get(1, i, j) - (g.y(j) + 0.2)).abs() < 1e-12);
            }
        }
        let still = advance_flow(&g, &FlowMap::identity(&g), &Field2D::zeros(&g, 2), 0.1).unwrap();
        assert_eq!(still.disp, FlowMap::identity(&g).disp);
    }

    #[test]
    fn shift_composition() {
        let g = make_grid(8, 8, 3).unwrap();
        let f = Field2D::from_fn(&g, 1, |_, x, _| (2.0 * PI * x).sin());
        let map = Field2D::from_fn(&g, 2, |c, x, y| if c == 0 { x + 0.25 } else { y });
        let h = compose_2d(&g, &f, &map).unwrap();
        for i in 0..8 {
            assert!((h.get(0, i, 3) - (2.0 * PI * g.x(i)).cos()).abs() < 1e-12);
        }
    }

    #[test]
    fn roundtrip_small_deformation() {
        let g = make_grid(16, 16, 3).unwrap();
        let fm = shear_map(&g, 0.02);
        let y = invert_map(&g, &fm).unwrap();
        assert!(inversion_residual(&g, &fm, &y) <= 1e-10);
        let f = Field2D::from_fn(&g, 1, |_, x, y| (2.0 * PI * x).cos() * (2.0 * PI * y).sin());
        let fx = compose_2d(&g, &f, &fm.positions(&g)).unwrap();
        let back = compose_2d(&g, &fx, &y).unwrap();
        assert!(back.sub(&f).max_abs() < 1e-8);
    }

    #[test]
    fn rk4_step_halving() {
        let g = make_grid(16, 16, 3).unwrap();
        let v = Field2D::from_fn(&g, 2, |c, _, y| if c == 0 { 0.5 * (2.0 * PI * y).sin() } else { 0.0 });
        let coarse = advance_flow(&g, &FlowMap::identity(&g), &v, 1e-3).unwrap();
        let mut fine = FlowMap::identity(&g);
        for _ in 0..10 {
            fine = advance_flow(&g, &fine, &v, 1e-4).unwrap();
        }
        assert!(coarse.disp.sub(&fine.disp).max_abs() < 1e-10);
        assert!(coarse.grad.sub(&fine.grad).max_abs() < 1e-10);
    }
}
