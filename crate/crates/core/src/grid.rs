//! Uniform cartesian 3D grids, scalar/vector fields on them, and the
//! second-order stencil operators the solvers are built from.
//!
//! Storage order is x-fastest: linear index `i + nx*(j + ny*k)`.
//! All difference operators subtract neighbor values before scaling, so a
//! spatially constant field maps to exact floating-point zeros under
//! periodic boundaries.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Treatment of values outside the box.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    /// Indices wrap around each axis.
    Periodic,
    /// The field is taken to be zero outside the box; valid only when the
    /// data actually decays toward the faces.
    FreeDecay,
}

impl Boundary {
    pub fn name(self) -> &'static str {
        match self {
            Boundary::Periodic => "periodic",
            Boundary::FreeDecay => "free-decay",
        }
    }
}

/// Uniform grid with equal spacing `h` on all three axes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid3 {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    /// Cell spacing, same on every axis.
    pub h: f64,
    /// Physical coordinates of cell (0,0,0).
    pub origin: [f64; 3],
    pub boundary: Boundary,
}

impl Grid3 {
    /// Grid with an explicit origin.
    pub fn with_origin(
        nx: usize,
        ny: usize,
        nz: usize,
        h: f64,
        origin: [f64; 3],
        boundary: Boundary,
    ) -> Result<Self> {
        if nx < 3 || ny < 3 || nz < 3 {
            return Err(Error::InvalidParameter(format!(
                "grid must be at least 3 cells per axis, got {nx}x{ny}x{nz}"
            )));
        }
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::InvalidParameter(format!("grid spacing must be positive, got {h}")));
        }
        Ok(Grid3 { nx, ny, nz, h, origin, boundary })
    }

    /// Grid centered on the coordinate origin.
    pub fn centered(nx: usize, ny: usize, nz: usize, h: f64, boundary: Boundary) -> Result<Self> {
        let ox = -0.5 * h * (nx as f64 - 1.0);
        let oy = -0.5 * h * (ny as f64 - 1.0);
        let oz = -0.5 * h * (nz as f64 - 1.0);
        Self::with_origin(nx, ny, nz, h, [ox, oy, oz], boundary)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.nx * (j + self.ny * k)
    }

    /// Physical position of cell center (i,j,k).
    #[inline]
    pub fn pos(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        [
            self.origin[0] + self.h * i as f64,
            self.origin[1] + self.h * j as f64,
            self.origin[2] + self.h * k as f64,
        ]
    }

    /// Cell volume h^3.
    #[inline]
    pub fn cell_volume(&self) -> f64 {
        self.h * self.h * self.h
    }

    /// Index range of the inner 60% of an axis, used for norms that must
    /// ignore boundary-affected cells.
    pub fn interior_range(n: usize) -> std::ops::Range<usize> {
        let lo = n / 5;
        lo..(n - lo)
    }

    /// True if (i,j,k) lies in the inner 60% of every axis.
    #[inline]
    pub fn is_interior(&self, i: usize, j: usize, k: usize) -> bool {
        Self::interior_range(self.nx).contains(&i)
            && Self::interior_range(self.ny).contains(&j)
            && Self::interior_range(self.nz).contains(&k)
    }

    fn same_as(&self, other: &Grid3, what: &'static str) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(what))
        }
    }
}

/// Scalar values at cell centers.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField3 {
    grid: Grid3,
    data: Vec<f64>,
}

/// One vector per cell center, stored as three component planes.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField3 {
    grid: Grid3,
    comp: [Vec<f64>; 3],
}

impl ScalarField3 {
    pub fn constant(grid: Grid3, value: f64) -> Self {
        ScalarField3 { grid, data: vec![value; grid.len()] }
    }

    pub fn zeros(grid: Grid3) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn from_values(grid: Grid3, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::InvalidParameter(format!(
                "field data has {} values, grid has {} cells",
                data.len(),
                grid.len()
            )));
        }
        Ok(ScalarField3 { grid, data })
    }

    /// Build from a function of the physical cell-center position.
    pub fn from_fn(grid: Grid3, f: impl Fn(f64, f64, f64) -> f64) -> Self {
        let mut data = Vec::with_capacity(grid.len());
        for k in 0..grid.nz {
            for j in 0..grid.ny {
                for i in 0..grid.nx {
                    let [x, y, z] = grid.pos(i, j, k);
                    data.push(f(x, y, z));
                }
            }
        }
        ScalarField3 { grid, data }
    }

    /// Build from a function of the integer cell index.
    pub fn from_index_fn(grid: Grid3, f: impl Fn(usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(grid.len());
        for k in 0..grid.nz {
            for j in 0..grid.ny {
                for i in 0..grid.nx {
                    data.push(f(i, j, k));
                }
            }
        }
        ScalarField3 { grid, data }
    }

    #[inline]
    pub fn grid(&self) -> &Grid3 {
        &self.grid
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_values(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.grid.idx(i, j, k)]
    }

    /// Apply `f` to every value, producing a new field.
    pub fn map(&self, f: impl Fn(f64) -> f64 + Sync) -> Self {
        let mut out = vec![0.0; self.data.len()];
        out.par_iter_mut().zip(self.data.par_iter()).for_each(|(o, &v)| *o = f(v));
        ScalarField3 { grid: self.grid, data: out }
    }

    /// Combine two same-grid fields pointwise.
    pub fn zip_with(&self, other: &ScalarField3, f: impl Fn(f64, f64) -> f64 + Sync) -> Result<Self> {
        self.grid.same_as(&other.grid, "zip_with operands")?;
        let mut out = vec![0.0; self.data.len()];
        out.par_iter_mut()
            .zip(self.data.par_iter().zip(other.data.par_iter()))
            .for_each(|(o, (&a, &b))| *o = f(a, b));
        Ok(ScalarField3 { grid: self.grid, data: out })
    }

    pub fn add(&self, other: &ScalarField3) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &ScalarField3) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scaled(&self, s: f64) -> Self {
        self.map(|v| s * v)
    }

    /// self += s * other.
    pub fn axpy(&mut self, s: f64, other: &ScalarField3) -> Result<()> {
        self.grid.same_as(&other.grid, "axpy operands")?;
        self.data
            .par_iter_mut()
            .zip(other.data.par_iter())
            .for_each(|(a, &b)| *a += s * b);
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Max absolute value over all cells.
    pub fn linf(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, &v| m.max(v.abs()))
    }

    /// sqrt(sum v^2 h^3); physical L2 norm.
    pub fn l2(&self) -> f64 {
        let s: f64 = self.data.iter().map(|&v| v * v).sum();
        (s * self.grid.cell_volume()).sqrt()
    }

    /// sum |v| h^3; physical L1 norm.
    pub fn l1(&self) -> f64 {
        let s: f64 = self.data.iter().map(|&v| v.abs()).sum();
        s * self.grid.cell_volume()
    }

    /// sum v h^3; the discrete integral of the field.
    pub fn mass(&self) -> f64 {
        let s: f64 = self.data.iter().sum();
        s * self.grid.cell_volume()
    }

    /// Root-mean-square over all cells (scale-free companion to `linf`).
    pub fn rms(&self) -> f64 {
        let s: f64 = self.data.iter().map(|&v| v * v).sum();
        (s / self.data.len() as f64).sqrt()
    }

    fn interior_fold(&self, init: f64, f: impl Fn(f64, f64) -> f64) -> (f64, usize) {
        let g = &self.grid;
        let (ri, rj, rk) = (
            Grid3::interior_range(g.nx),
            Grid3::interior_range(g.ny),
            Grid3::interior_range(g.nz),
        );
        let mut acc = init;
        let mut count = 0usize;
        for k in rk.clone() {
            for j in rj.clone() {
                for i in ri.clone() {
                    acc = f(acc, self.data[g.idx(i, j, k)]);
                    count += 1;
                }
            }
        }
        (acc, count)
    }

    /// Max absolute value over the inner 60% of each axis.
    pub fn interior_linf(&self) -> f64 {
        self.interior_fold(0.0, |m, v| m.max(v.abs())).0
    }

    /// RMS over the inner 60% of each axis.
    pub fn interior_rms(&self) -> f64 {
        let (s, n) = self.interior_fold(0.0, |a, v| a + v * v);
        (s / n as f64).sqrt()
    }

    /// Max absolute value over cells on any box face.
    pub fn face_linf(&self) -> f64 {
        let g = &self.grid;
        let mut m = 0.0_f64;
        for k in 0..g.nz {
            for j in 0..g.ny {
                for i in 0..g.nx {
                    if i == 0 || j == 0 || k == 0 || i == g.nx - 1 || j == g.ny - 1 || k == g.nz - 1
                    {
                        m = m.max(self.data[g.idx(i, j, k)].abs());
                    }
                }
            }
        }
        m
    }
}

impl VectorField3 {
    pub fn zeros(grid: Grid3) -> Self {
        VectorField3 { grid, comp: [vec![0.0; grid.len()], vec![0.0; grid.len()], vec![0.0; grid.len()]] }
    }

    #[inline]
    pub fn grid(&self) -> &Grid3 {
        &self.grid
    }

    #[inline]
    pub fn component(&self, axis: usize) -> &[f64] {
        &self.comp[axis]
    }

    /// Pointwise scale every component by the same scalar field.
    pub fn scaled_by_field(&self, s: &ScalarField3) -> Result<Self> {
        self.grid.same_as(&s.grid, "vector scale operand")?;
        let mut out = self.clone();
        for a in 0..3 {
            out.comp[a]
                .par_iter_mut()
                .zip(s.data.par_iter())
                .for_each(|(v, &sv)| *v *= sv);
        }
        Ok(out)
    }

    /// Pointwise divide every component by the same scalar field.
    pub fn divided_by_field(&self, s: &ScalarField3) -> Result<Self> {
        self.grid.same_as(&s.grid, "vector divide operand")?;
        let mut out = self.clone();
        for a in 0..3 {
            out.comp[a]
                .par_iter_mut()
                .zip(s.data.par_iter())
                .for_each(|(v, &sv)| *v /= sv);
        }
        Ok(out)
    }

    /// Pointwise dot product with another vector field.
    pub fn dot(&self, other: &VectorField3) -> Result<ScalarField3> {
        self.grid.same_as(&other.grid, "dot operands")?;
        let mut data = vec![0.0; self.grid.len()];
        for a in 0..3 {
            data.par_iter_mut()
                .zip(self.comp[a].par_iter().zip(other.comp[a].par_iter()))
                .for_each(|(o, (&u, &v))| *o += u * v);
        }
        Ok(ScalarField3 { grid: self.grid, data })
    }
}

#[inline]
fn wrap(n: usize, i: usize, d: isize) -> usize {
    let m = n as isize;
    (((i as isize + d) % m + m) % m) as usize
}

/// Neighbor value along one axis; `None` means outside a free-decay box
/// (value zero by extension).
#[inline]
fn neighbor(
    data: &[f64],
    g: &Grid3,
    i: usize,
    j: usize,
    k: usize,
    axis: usize,
    d: isize,
) -> Option<f64> {
    let (n, c) = match axis {
        0 => (g.nx, i),
        1 => (g.ny, j),
        _ => (g.nz, k),
    };
    let shifted = c as isize + d;
    let idx_along = if shifted < 0 || shifted >= n as isize {
        match g.boundary {
            Boundary::Periodic => wrap(n, c, d),
            Boundary::FreeDecay => return None,
        }
    } else {
        shifted as usize
    };
    let (ii, jj, kk) = match axis {
        0 => (idx_along, j, k),
        1 => (i, idx_along, k),
        _ => (i, j, idx_along),
    };
    Some(data[g.idx(ii, jj, kk)])
}

/// Seven-point Laplacian, second order in h. Free-decay grids treat the
/// field as zero outside the box.
pub fn laplacian(c: &ScalarField3) -> ScalarField3 {
    let g = c.grid;
    let inv_h2 = 1.0 / (g.h * g.h);
    let data = &c.data;
    let plane = g.nx * g.ny;
    let mut out = vec![0.0; g.len()];
    out.par_chunks_mut(plane).enumerate().for_each(|(k, slab)| {
        for j in 0..g.ny {
            for i in 0..g.nx {
                let center = data[g.idx(i, j, k)];
                let mut acc = 0.0;
                for axis in 0..3 {
                    for d in [-1_isize, 1] {
                        let v = neighbor(data, &g, i, j, k, axis, d).unwrap_or(0.0);
                        acc += v - center;
                    }
                }
                slab[i + g.nx * j] = acc * inv_h2;
            }
        }
    });
    ScalarField3 { grid: g, data: out }
}

/// Central-difference gradient, second order in h.
pub fn gradient(c: &ScalarField3) -> VectorField3 {
    let g = c.grid;
    let inv_2h = 1.0 / (2.0 * g.h);
    let data = &c.data;
    let mut out = VectorField3::zeros(g);
    let plane = g.nx * g.ny;
    for axis in 0..3 {
        out.comp[axis]
            .par_chunks_mut(plane)
            .enumerate()
            .for_each(|(k, slab)| {
                for j in 0..g.ny {
                    for i in 0..g.nx {
                        let p = neighbor(data, &g, i, j, k, axis, 1).unwrap_or(0.0);
                        let m = neighbor(data, &g, i, j, k, axis, -1).unwrap_or(0.0);
                        slab[i + g.nx * j] = (p - m) * inv_2h;
                    }
                }
            });
    }
    out
}

/// Central-difference divergence of a cell-centered vector field.
pub fn divergence(v: &VectorField3) -> ScalarField3 {
    let g = v.grid;
    let inv_2h = 1.0 / (2.0 * g.h);
    let plane = g.nx * g.ny;
    let mut out = vec![0.0; g.len()];
    out.par_chunks_mut(plane).enumerate().for_each(|(k, slab)| {
        for j in 0..g.ny {
            for i in 0..g.nx {
                let mut acc = 0.0;
                for axis in 0..3 {
                    let p = neighbor(&v.comp[axis], &g, i, j, k, axis, 1).unwrap_or(0.0);
                    let m = neighbor(&v.comp[axis], &g, i, j, k, axis, -1).unwrap_or(0.0);
                    acc += p - m;
                }
                slab[i + g.nx * j] = acc * inv_2h;
            }
        }
    });
    ScalarField3 { grid: g, data: out }
}

/// How the diffusivity is averaged onto cell faces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FaceAverage {
    #[default]
    Arithmetic,
    Harmonic,
}

impl FaceAverage {
    #[inline]
    fn combine(self, a: f64, b: f64) -> f64 {
        match self {
            FaceAverage::Arithmetic => 0.5 * (a + b),
            FaceAverage::Harmonic => {
                let s = a + b;
                if s > 0.0 {
                    2.0 * a * b / s
                } else {
                    0.0
                }
            }
        }
    }
}

/// Conservative flux form of div(D grad c) given the diffusivity sampled at
/// cell centers. `d_ghost` is the diffusivity of the zero-extended exterior,
/// used only on free-decay grids. On periodic grids the discrete integral of
/// the result telescopes to zero.
pub fn div_d_grad(
    c: &ScalarField3,
    d: &ScalarField3,
    d_ghost: f64,
    avg: FaceAverage,
) -> Result<ScalarField3> {
    c.grid.same_as(&d.grid, "div_d_grad concentration vs diffusivity")?;
    let g = c.grid;
    let inv_h2 = 1.0 / (g.h * g.h);
    let cd = &c.data;
    let dd = &d.data;
    let plane = g.nx * g.ny;
    let mut out = vec![0.0; g.len()];
    out.par_chunks_mut(plane).enumerate().for_each(|(k, slab)| {
        for j in 0..g.ny {
            for i in 0..g.nx {
                let c0 = cd[g.idx(i, j, k)];
                let d0 = dd[g.idx(i, j, k)];
                let mut acc = 0.0;
                for axis in 0..3 {
                    for dir in [-1_isize, 1] {
                        let (cn, dn) = match neighbor(cd, &g, i, j, k, axis, dir) {
                            Some(cv) => {
                                let dv = neighbor(dd, &g, i, j, k, axis, dir)
                                    .expect("same grid, same wrap");
                                (cv, dv)
                            }
                            None => (0.0, d_ghost),
                        };
                        acc += avg.combine(d0, dn) * (cn - c0);
                    }
                }
                slab[i + g.nx * j] = acc * inv_h2;
            }
        }
    });
    Ok(ScalarField3 { grid: g, data: out })
}
