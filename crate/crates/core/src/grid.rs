//! Uniform periodic grid on the torus `[-π, π)^d`, grid functions, the
//! discrete inner product and the finite-difference operators.
//!
//! Nodes are stored row-major with axis 0 fastest: the node with multi-index
//! `(i0, i1, i2)` lives at flat index `i0 + L*i1 + L*L*i2` and has coordinates
//! `(-π + i0*h, -π + i1*h, -π + i2*h)`.

use std::f64::consts::PI;
use std::io::{BufRead, Write};
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::fmt::g17;

/// Largest spatial dimension supported.
pub const MAX_DIM: usize = 3;

/// The periodic square grid `hZ^d ∩ [-π, π)^d` with `L` nodes per axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    dim: usize,
    nodes_per_axis: usize,
    spacing: f64,
}

impl Grid {
    pub fn new(dim: usize, nodes_per_axis: usize) -> Result<Self> {
        if !(1..=MAX_DIM).contains(&dim) {
            return Err(Error::InvalidGrid(format!("dimension {dim} not in 1..=3")));
        }
        if nodes_per_axis < 4 || !nodes_per_axis.is_multiple_of(2) {
            return Err(Error::InvalidGrid(format!(
                "nodes per axis must be even and at least 4, got {nodes_per_axis}"
            )));
        }
        Ok(Self {
            dim,
            nodes_per_axis,
            spacing: 2.0 * PI / nodes_per_axis as f64,
        })
    }

    /// One-dimensional grid with `L` nodes.
    pub fn line(nodes: usize) -> Result<Self> {
        Self::new(1, nodes)
    }

    /// One-dimensional grid with `h = 2π·2^{-k}`.
    pub fn dyadic(k: u32) -> Result<Self> {
        Self::line(1usize << k)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nodes_per_axis(&self) -> usize {
        self.nodes_per_axis
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// `h^d`, the weight of one node in the discrete inner product.
    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(self.dim as i32)
    }

    /// Total number of nodes, `L^d`.
    pub fn len(&self) -> usize {
        self.nodes_per_axis.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Coordinate of node index `i` along one axis.
    pub fn coordinate(&self, i: usize) -> f64 {
        -PI + i as f64 * self.spacing
    }

    pub fn multi_index(&self, flat: usize) -> [usize; MAX_DIM] {
        let l = self.nodes_per_axis;
        let mut idx = [0; MAX_DIM];
        let mut rest = flat;
        for slot in idx.iter_mut().take(self.dim) {
            *slot = rest % l;
            rest /= l;
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        let l = self.nodes_per_axis;
        idx.iter()
            .take(self.dim)
            .rev()
            .fold(0, |acc, &i| acc * l + (i % l))
    }

    /// Coordinates of the node at `flat`; unused axes are zero.
    pub fn node(&self, flat: usize) -> [f64; MAX_DIM] {
        let idx = self.multi_index(flat);
        let mut x = [0.0; MAX_DIM];
        for a in 0..self.dim {
            x[a] = self.coordinate(idx[a]);
        }
        x
    }

    /// Flat index of the node reached from `flat` by moving `offset` cells along `axis`.
    pub fn shift(&self, flat: usize, axis: usize, offset: isize) -> usize {
        let l = self.nodes_per_axis as isize;
        let stride = self.nodes_per_axis.pow(axis as u32);
        let i = ((flat / stride) % self.nodes_per_axis) as isize;
        let j = (i + offset).rem_euclid(l) as usize;
        flat - (i as usize) * stride + j * stride
    }

    /// Sample an arbitrary function of the node coordinates.
    pub fn sample(&self, f: impl Fn(&[f64]) -> f64) -> GridFunction {
        let values = (0..self.len())
            .map(|n| {
                let x = self.node(n);
                f(&x[..self.dim])
            })
            .collect();
        GridFunction {
            grid: *self,
            values,
        }
    }

    fn ensure_same(&self, other: &Grid) -> Result<()> {
        if self != other {
            return Err(Error::GridMismatch(format!(
                "d={} L={} vs d={} L={}",
                self.dim, self.nodes_per_axis, other.dim, other.nodes_per_axis
            )));
        }
        Ok(())
    }
}

/// Real values on the nodes of a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: Grid,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidInput(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("grid value at node {i}")));
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.len()],
        }
    }

    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Pointwise product.
    pub fn mul(&self, other: &GridFunction) -> Result<Self> {
        self.grid.ensure_same(&other.grid)?;
        Ok(Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a * b)
                .collect(),
        })
    }

    /// `self - other`.
    pub fn sub(&self, other: &GridFunction) -> Result<Self> {
        self.grid.ensure_same(&other.grid)?;
        Ok(Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }

    /// `(u, 1)_h`.
    pub fn mass(&self) -> f64 {
        self.grid.cell_volume() * self.values.iter().sum::<f64>()
    }

    /// `‖u‖_h`.
    pub fn norm(&self) -> f64 {
        (self.grid.cell_volume() * self.values.iter().map(|v| v * v).sum::<f64>()).sqrt()
    }

    /// `‖u⁻‖_h` with `u⁻ = -min(u, 0)`.
    pub fn negative_part_norm(&self) -> f64 {
        let s: f64 = self
            .values
            .iter()
            .filter(|v| **v < 0.0)
            .map(|v| v * v)
            .sum();
        (self.grid.cell_volume() * s).sqrt()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// CSV dump with columns `index,x,value`; for `d > 1` the `x` column holds
    /// the axis-0 coordinate.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "index,x,value")?;
        for (n, v) in self.values.iter().enumerate() {
            let x = self.grid.node(n)[0];
            writeln!(w, "{},{},{}", n, g17(x), g17(*v))?;
        }
        Ok(())
    }

    /// Parse a one-dimensional `index,x,value` dump.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut values = Vec::new();
        let mut xs = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let line_no = lineno + 1;
            if lineno == 0 {
                if line.trim() != "index,x,value" {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!("unexpected header {line:?}"),
                    });
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 3 {
                return Err(Error::Parse {
                    line: line_no,
                    message: "expected 3 columns".into(),
                });
            }
            let parse_err = |what: &str| Error::Parse {
                line: line_no,
                message: format!("bad {what}"),
            };
            let idx: usize = cols[0].parse().map_err(|_| parse_err("index"))?;
            if idx != values.len() {
                return Err(parse_err("index order"));
            }
            xs.push(cols[1].parse::<f64>().map_err(|_| parse_err("x"))?);
            values.push(cols[2].parse::<f64>().map_err(|_| parse_err("value"))?);
        }
        let grid = Grid::line(values.len())?;
        for (i, x) in xs.iter().enumerate() {
            if (x - grid.coordinate(i)).abs() > 1e-9 {
                return Err(Error::Parse {
                    line: i + 2,
                    message: "coordinate does not match a uniform periodic grid".into(),
                });
            }
        }
        GridFunction::new(grid, values)
    }
}

/// `(u, v)_h = Σ_x h^d u(x) v(x)`.
pub fn inner_product(u: &GridFunction, v: &GridFunction) -> Result<f64> {
    u.grid.ensure_same(&v.grid)?;
    Ok(u.grid.cell_volume()
        * u.values
            .iter()
            .zip(&v.values)
            .map(|(a, b)| a * b)
            .sum::<f64>())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StencilKind {
    FirstDerivative,
    SecondDerivative,
}

/// A one-axis finite-difference stencil. Coefficients are dimensionless; the
/// `1/h` or `1/h²` factor is applied when the stencil is used.
#[derive(Debug, Clone, PartialEq)]
pub struct Stencil {
    kind: StencilKind,
    offsets: Vec<isize>,
    coefficients: Vec<f64>,
    order: u32,
}

impl Stencil {
    /// Build a stencil, checking consistency: first-derivative stencils
    /// annihilate constants and differentiate `x` exactly; second-derivative
    /// stencils are symmetric and reproduce `(x²)'' = 2`.
    pub fn new(
        kind: StencilKind,
        offsets: Vec<isize>,
        coefficients: Vec<f64>,
        order: u32,
    ) -> Result<Self> {
        if offsets.len() != coefficients.len() || offsets.is_empty() {
            return Err(Error::InvalidInput(
                "stencil offsets and coefficients must be nonempty and equally long".into(),
            ));
        }
        let sum: f64 = coefficients.iter().sum();
        let moment = |p: i32| -> f64 {
            offsets
                .iter()
                .zip(&coefficients)
                .map(|(&o, &c)| c * (o as f64).powi(p))
                .sum()
        };
        let tol = 1e-12;
        if sum.abs() > tol {
            return Err(Error::InvalidInput(
                "stencil coefficients must sum to 0".into(),
            ));
        }
        match kind {
            StencilKind::FirstDerivative => {
                if (moment(1) - 1.0).abs() > tol {
                    return Err(Error::InvalidInput(
                        "first-derivative stencil must reproduce d/dx x = 1".into(),
                    ));
                }
            }
            StencilKind::SecondDerivative => {
                for (&o, &c) in offsets.iter().zip(&coefficients) {
                    let mirror = offsets
                        .iter()
                        .position(|&q| q == -o)
                        .map(|j| coefficients[j]);
                    if mirror.is_none_or(|m| (m - c).abs() > tol) {
                        return Err(Error::InvalidInput(
                            "second-derivative stencil must be symmetric".into(),
                        ));
                    }
                }
                if (moment(2) - 2.0).abs() > tol {
                    return Err(Error::InvalidInput(
                        "second-derivative stencil must reproduce (x²)'' = 2".into(),
                    ));
                }
            }
        }
        Ok(Self {
            kind,
            offsets,
            coefficients,
            order,
        })
    }

    /// `(f(x+h) - f(x-h)) / 2h`.
    pub fn centered_first() -> Self {
        Self::new(
            StencilKind::FirstDerivative,
            vec![-1, 1],
            vec![-0.5, 0.5],
            2,
        )
        .expect("centered stencil is consistent")
    }

    /// `(f(x+h) - f(x)) / h`, the factor of the 3-point Laplacian.
    pub fn forward_first() -> Self {
        Self::new(StencilKind::FirstDerivative, vec![0, 1], vec![-1.0, 1.0], 1)
            .expect("forward stencil is consistent")
    }

    /// `(f(x+h) - 2f(x) + f(x-h)) / h²`.
    pub fn three_point_second() -> Self {
        Self::new(
            StencilKind::SecondDerivative,
            vec![-1, 0, 1],
            vec![1.0, -2.0, 1.0],
            2,
        )
        .expect("3-point stencil is consistent")
    }

    pub fn kind(&self) -> StencilKind {
        self.kind
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn offsets(&self) -> &[isize] {
        &self.offsets
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    /// Periodic convolution of `u` with this stencil along `axis`, scaled by
    /// `1/h` or `1/h²` according to the kind.
    pub fn apply_along(&self, u: &GridFunction, axis: usize) -> Result<GridFunction> {
        let grid = u.grid;
        if axis >= grid.dim {
            return Err(Error::InvalidInput(format!("axis {axis} out of range")));
        }
        let scale = match self.kind {
            StencilKind::FirstDerivative => 1.0 / grid.spacing,
            StencilKind::SecondDerivative => 1.0 / (grid.spacing * grid.spacing),
        };
        let values = (0..grid.len())
            .map(|n| {
                scale
                    * self
                        .offsets
                        .iter()
                        .zip(&self.coefficients)
                        .map(|(&o, &c)| c * u.values[grid.shift(n, axis, o)])
                        .sum::<f64>()
            })
            .collect();
        Ok(GridFunction { grid, values })
    }
}

/// Sample a one-dimensional closed form on the nodes.
pub fn interpolate_fn(grid: &Grid, f: impl Fn(f64) -> f64) -> GridFunction {
    grid.sample(|x| f(x[0]))
}

/// Discrete gradient: one component per axis.
pub fn apply_gradient(stencil: &Stencil, u: &GridFunction) -> Result<Vec<GridFunction>> {
    if stencil.kind != StencilKind::FirstDerivative {
        return Err(Error::WrongStencilKind {
            expected: "first-derivative",
        });
    }
    (0..u.grid.dim).map(|a| stencil.apply_along(u, a)).collect()
}

/// Discrete Laplacian `Σ_ℓ D²_ℓ` with the symmetric 3-point stencil.
pub fn apply_laplacian(u: &GridFunction) -> GridFunction {
    let grid = u.grid;
    let inv_h2 = 1.0 / (grid.spacing * grid.spacing);
    let mut out = vec![0.0; grid.len()];
    if grid.dim == 1 {
        laplacian_1d(&u.values, grid.spacing, &mut out);
    } else {
        for (n, o) in out.iter_mut().enumerate() {
            let mut acc = -2.0 * grid.dim as f64 * u.values[n];
            for a in 0..grid.dim {
                acc += u.values[grid.shift(n, a, 1)] + u.values[grid.shift(n, a, -1)];
            }
            *o = acc * inv_h2;
        }
    }
    GridFunction { grid, values: out }
}

/// 3-point periodic Laplacian of a one-dimensional array.
pub(crate) fn laplacian_1d(u: &[f64], h: f64, out: &mut [f64]) {
    let l = u.len();
    let inv_h2 = 1.0 / (h * h);
    for i in 0..l {
        let left = u[(i + l - 1) % l];
        let right = u[(i + 1) % l];
        out[i] = (left - 2.0 * u[i] + right) * inv_h2;
    }
}

/// Map a per-axis FFT bin to its frequency in `-L/2 .. L/2-1`.
pub fn bin_frequency(bin: usize, nodes: usize) -> i64 {
    if bin < nodes / 2 {
        bin as i64
    } else {
        bin as i64 - nodes as i64
    }
}

/// Discrete Fourier coefficients `v̂(ξ) = h^d Σ_x u(x) e^{-i x·ξ}`, stored in
/// FFT bin order with the same row-major layout as the nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    grid: Grid,
    coeffs: Vec<Complex64>,
}

impl Spectrum {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    /// Frequency vector of storage slot `flat`.
    pub fn frequency(&self, flat: usize) -> [i64; MAX_DIM] {
        let idx = self.grid.multi_index(flat);
        let mut xi = [0; MAX_DIM];
        for a in 0..self.grid.dim {
            xi[a] = bin_frequency(idx[a], self.grid.nodes_per_axis);
        }
        xi
    }

    /// Coefficient at frequency `xi` (components in `-L/2 .. L/2-1`).
    pub fn get(&self, xi: &[i64]) -> Complex64 {
        let l = self.grid.nodes_per_axis as i64;
        let idx: Vec<usize> = xi.iter().map(|&k| k.rem_euclid(l) as usize).collect();
        self.coeffs[self.grid.flat_index(&idx)]
    }

    /// `Σ_ξ |v̂(ξ)|²`.
    pub fn energy(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }
}

fn plan(len: usize, forward: bool) -> Arc<dyn Fft<f64>> {
    let mut planner = FftPlanner::new();
    if forward {
        planner.plan_fft_forward(len)
    } else {
        planner.plan_fft_inverse(len)
    }
}

/// In-place unnormalised DFT along every axis.
fn transform_axes(grid: &Grid, data: &mut [Complex64], forward: bool) {
    let l = grid.nodes_per_axis;
    let fft = plan(l, forward);
    let mut line = vec![Complex64::new(0.0, 0.0); l];
    for axis in 0..grid.dim {
        let stride = l.pow(axis as u32);
        let lines = grid.len() / l;
        for k in 0..lines {
            // Start of the k-th line along `axis`.
            let low = k % stride;
            let high = k / stride;
            let start = low + high * stride * l;
            for (i, slot) in line.iter_mut().enumerate() {
                *slot = data[start + i * stride];
            }
            fft.process(&mut line);
            for (i, v) in line.iter().enumerate() {
                data[start + i * stride] = *v;
            }
        }
    }
}

/// Parity sign `(-1)^{Σ ξ}` of storage slot `flat`, equal to `e^{iπ Σ ξ}`.
fn parity(grid: &Grid, flat: usize) -> f64 {
    let idx = grid.multi_index(flat);
    if idx[..grid.dim].iter().sum::<usize>() % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

pub fn forward_fft(u: &GridFunction) -> Spectrum {
    let grid = u.grid;
    let mut data: Vec<Complex64> = u.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    transform_axes(&grid, &mut data, true);
    let w = grid.cell_volume();
    for (n, c) in data.iter_mut().enumerate() {
        // Nodes start at -π, hence the e^{iπξ} phase.
        *c *= w * parity(&grid, n);
    }
    Spectrum { grid, coeffs: data }
}

/// Inverse of [`forward_fft`]: `u(x) = (2π)^{-d} Σ_ξ v̂(ξ) e^{i x·ξ}`, real part.
pub fn inverse_fft(s: &Spectrum) -> GridFunction {
    let grid = s.grid;
    let mut data: Vec<Complex64> = s
        .coeffs
        .iter()
        .enumerate()
        .map(|(n, c)| c * parity(&grid, n))
        .collect();
    transform_axes(&grid, &mut data, false);
    let scale = (2.0 * PI).powi(-(grid.dim as i32));
    GridFunction {
        grid,
        values: data.iter().map(|c| c.re * scale).collect(),
    }
}
