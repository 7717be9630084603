use super::Grid;

/// Scalar or 2-vector field on the horizontal grid; component-major, y fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Field2D {
    pub nx: usize,
    pub ny: usize,
    pub ncomp: usize,
    pub data: Vec<f64>,
}

/// Scalar or 2-vector field on the full grid. Each (component, level) slab
/// is a contiguous `nx × ny` block.
#[derive(Debug, Clone, PartialEq)]
pub struct Field3D {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub ncomp: usize,
    pub data: Vec<f64>,
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

impl Field2D {
    pub fn zeros(g: &Grid, ncomp: usize) -> Self {
        Self {
            nx: g.nx,
            ny: g.ny,
            ncomp,
            data: vec![0.0; ncomp * g.nh()],
        }
    }

    pub fn constant(g: &Grid, value: f64) -> Self {
        Self {
            nx: g.nx,
            ny: g.ny,
            ncomp: 1,
            data: vec![value; g.nh()],
        }
    }

    pub fn from_fn(g: &Grid, ncomp: usize, f: impl Fn(usize, f64, f64) -> f64) -> Self {
        let mut out = Self::zeros(g, ncomp);
        for c in 0..ncomp {
            for i in 0..g.nx {
                for j in 0..g.ny {
                    out.data[(c * g.nx + i) * g.ny + j] = f(c, g.x(i), g.y(j));
                }
            }
        }
        out
    }

    pub fn from_slabs(g: &Grid, slabs: &[&[f64]]) -> Self {
        let mut data = Vec::with_capacity(slabs.len() * g.nh());
        for s in slabs {
            data.extend_from_slice(s);
        }
        Self {
            nx: g.nx,
            ny: g.ny,
            ncomp: slabs.len(),
            data,
        }
    }

    pub fn nh(&self) -> usize {
        self.nx * self.ny
    }

    pub fn comp(&self, c: usize) -> &[f64] {
        let n = self.nh();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn comp_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.nh();
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn get(&self, c: usize, i: usize, j: usize) -> f64 {
        self.data[(c * self.nx + i) * self.ny + j]
    }

    pub fn set(&mut self, c: usize, i: usize, j: usize, v: f64) {
        self.data[(c * self.nx + i) * self.ny + j] = v;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        max_abs(&self.data)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Mean over G (|G| = 1) of component `c`.
    pub fn mean(&self, c: usize) -> f64 {
        self.comp(c).iter().sum::<f64>() / self.nh() as f64
    }

    /// RMS norm over G, summed over components.
    pub fn l2(&self) -> f64 {
        (self.data.iter().map(|v| v * v).sum::<f64>() / self.nh() as f64).sqrt()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v = f(*v));
        out
    }

    pub fn scaled(&self, s: f64) -> Self {
        self.map(|v| v * s)
    }

    pub fn axpy(&mut self, a: f64, x: &Self) {
        debug_assert_eq!(self.data.len(), x.data.len());
        for (y, xv) in self.data.iter_mut().zip(&x.data) {
            *y += a * xv;
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.axpy(1.0, other);
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }
}

impl Field3D {
    pub fn zeros(g: &Grid, ncomp: usize) -> Self {
        Self {
            nx: g.nx,
            ny: g.ny,
            nz: g.nz,
            ncomp,
            data: vec![0.0; ncomp * g.nz * g.nh()],
        }
    }

    pub fn from_fn(g: &Grid, ncomp: usize, f: impl Fn(usize, f64, f64, f64) -> f64) -> Self {
        let mut out = Self::zeros(g, ncomp);
        for c in 0..ncomp {
            for k in 0..g.nz {
                let z = g.z(k);
                for i in 0..g.nx {
                    for j in 0..g.ny {
                        out.set(c, k, i, j, f(c, g.x(i), g.y(j), z));
                    }
                }
            }
        }
        out
    }

    /// Field whose every level equals `f`.
    pub fn extrude(g: &Grid, f: &Field2D) -> Self {
        let mut out = Self::zeros(g, f.ncomp);
        for c in 0..f.ncomp {
            for k in 0..g.nz {
                out.slab_mut(c, k).copy_from_slice(f.comp(c));
            }
        }
        out
    }

    pub fn nh(&self) -> usize {
        self.nx * self.ny
    }

    fn idx(&self, c: usize, k: usize, i: usize, j: usize) -> usize {
        ((c * self.nz + k) * self.nx + i) * self.ny + j
    }

    pub fn get(&self, c: usize, k: usize, i: usize, j: usize) -> f64 {
        self.data[self.idx(c, k, i, j)]
    }

    pub fn set(&mut self, c: usize, k: usize, i: usize, j: usize, v: f64) {
        let n = self.idx(c, k, i, j);
        self.data[n] = v;
    }

    pub fn slab(&self, c: usize, k: usize) -> &[f64] {
        let n = self.nh();
        let s = (c * self.nz + k) * n;
        &self.data[s..s + n]
    }

    pub fn slab_mut(&mut self, c: usize, k: usize) -> &mut [f64] {
        let n = self.nh();
        let s = (c * self.nz + k) * n;
        &mut self.data[s..s + n]
    }

    pub fn comp3(&self, c: usize) -> &[f64] {
        let n = self.nh() * self.nz;
        &self.data[c * n..(c + 1) * n]
    }

    /// Values of one vertical column.
    pub fn column(&self, c: usize, i: usize, j: usize) -> Vec<f64> {
        (0..self.nz).map(|k| self.get(c, k, i, j)).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        max_abs(&self.data)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v = f(*v));
        out
    }

    pub fn scaled(&self, s: f64) -> Self {
        self.map(|v| v * s)
    }

    pub fn axpy(&mut self, a: f64, x: &Self) {
        debug_assert_eq!(self.data.len(), x.data.len());
        for (y, xv) in self.data.iter_mut().zip(&x.data) {
            *y += a * xv;
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.axpy(1.0, other);
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    /// Quadrature inner product ∫_Ω f·h (horizontal mean, vertical weights).
    pub fn dot(&self, other: &Self, g: &Grid) -> f64 {
        let n = self.nh() as f64;
        let mut s = 0.0;
        for c in 0..self.ncomp {
            for k in 0..self.nz {
                let w = g.vert.weights[k];
                let a = self.slab(c, k);
                let b = other.slab(c, k);
                s += w * a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
            }
        }
        s / n
    }

    /// L²(Ω) norm by quadrature.
    pub fn l2(&self, g: &Grid) -> f64 {
        self.dot(self, g).max(0.0).sqrt()
    }

    pub fn vertical_average(&self, g: &Grid) -> Field2D {
        let mut out = Field2D::zeros(g, self.ncomp);
        for c in 0..self.ncomp {
            for k in 0..self.nz {
                let w = g.vert.weights[k];
                let s = self.slab(c, k);
                for (o, v) in out.comp_mut(c).iter_mut().zip(s) {
                    *o += w * v;
                }
            }
        }
        out
    }

    /// Apply a row-major `nz × nz` matrix along every column.
    pub fn apply_vertical(&self, g: &Grid, mat: &[f64]) -> Self {
        let nz = self.nz;
        let mut out = Self::zeros(g, self.ncomp);
        for c in 0..self.ncomp {
            for k in 0..nz {
                for q in 0..nz {
                    let m = mat[k * nz + q];
                    if m == 0.0 {
                        continue;
                    }
                    let n = self.nh();
                    let src = (c * nz + q) * n;
                    let dst = (c * nz + k) * n;
                    for p in 0..n {
                        out.data[dst + p] += m * self.data[src + p];
                    }
                }
            }
        }
        out
    }

    /// Multiply every level `k` by `s[k]`.
    pub fn scale_levels(&self, s: &[f64]) -> Self {
        let mut out = self.clone();
        for c in 0..self.ncomp {
            for (k, sk) in s.iter().enumerate() {
                out.slab_mut(c, k).iter_mut().for_each(|v| *v *= sk);
            }
        }
        out
    }

    /// Component `c` as a scalar field.
    pub fn component(&self, c: usize) -> Self {
        Self {
            nx: self.nx,
            ny: self.ny,
            nz: self.nz,
            ncomp: 1,
            data: self.comp3(c).to_vec(),
        }
    }
}
