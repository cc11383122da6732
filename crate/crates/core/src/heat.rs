//! Continuous and discrete heat evolutions.
//!
//! The continuous flow `P^z` multiplies Fourier coefficients by
//! `e^{-|ξ|²z/2}`; the discrete flow `P_h^z` multiplies the discrete Fourier
//! coefficients by `e^{-P(h,ξ)z}` where `P(h,ξ)` is the symbol of `-½Δ_h`.
//! Both are evaluated exactly in Fourier space, so there is no time-stepping
//! error. Backward flows of test functions and forward flows of densities are
//! the same semigroup.

use std::io::Write;

use crate::error::{Error, Result};
use crate::fmt::g17;
use crate::grid::{apply_gradient, forward_fft, inverse_fft, Grid, GridFunction, Stencil};
use crate::test_function::TestFunction;

/// `ξ ↦ P(h, ξ)` on the frequency set of a grid, in FFT storage order.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralSymbol {
    grid: Grid,
    values: Vec<f64>,
}

impl SpectralSymbol {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Values in FFT storage order (same layout as [`crate::grid::Spectrum`]).
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `P(h, ξ)` for a frequency vector with components in `-L/2 .. L/2-1`.
    pub fn at(&self, xi: &[i64]) -> f64 {
        let h = self.grid.spacing();
        xi.iter()
            .take(self.grid.dim())
            .map(|&k| symbol_1d(h, k))
            .sum()
    }

    /// CSV dump `xi,P` (one-dimensional grids, frequencies ascending).
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        if self.grid.dim() != 1 {
            return Err(Error::InvalidGrid("symbol dump is one-dimensional".into()));
        }
        writeln!(w, "xi,P")?;
        let l = self.grid.nodes_per_axis() as i64;
        for xi in -l / 2..l / 2 {
            writeln!(w, "{},{}", xi, g17(self.at(&[xi])))?;
        }
        Ok(())
    }
}

#[inline]
fn symbol_1d(h: f64, xi: i64) -> f64 {
    (1.0 - (h * xi as f64).cos()) / (h * h)
}

/// Symbol of `-½Δ_h` for the 3-point Laplacian: `Σ_ℓ (1 - cos(hξ_ℓ))/h²`.
pub fn laplacian_symbol(grid: &Grid) -> SpectralSymbol {
    let h = grid.spacing();
    let l = grid.nodes_per_axis();
    let values = (0..grid.len())
        .map(|n| {
            let idx = grid.multi_index(n);
            idx[..grid.dim()]
                .iter()
                .map(|&b| symbol_1d(h, crate::grid::bin_frequency(b, l)))
                .sum()
        })
        .collect();
    SpectralSymbol {
        grid: *grid,
        values,
    }
}

fn check_span(z: f64) -> Result<()> {
    if !z.is_finite() || z < 0.0 {
        return Err(Error::NegativeSpan(z));
    }
    Ok(())
}

/// `P^z φ`: damp each coefficient by `e^{-ξ²z/2}`.
pub fn continuous_backward_flow(phi: &TestFunction, z: f64) -> Result<TestFunction> {
    check_span(z)?;
    phi.map_coefficients(&format!("P^{z}({})", phi.label()), |xi| {
        (-0.5 * (xi * xi) as f64 * z).exp()
    })
}

fn spectral_flow(u: &GridFunction, z: f64) -> Result<GridFunction> {
    check_span(z)?;
    if z == 0.0 {
        return Ok(u.clone());
    }
    let symbol = laplacian_symbol(u.grid());
    let mut s = forward_fft(u);
    for (c, p) in s.coeffs_mut().iter_mut().zip(symbol.values()) {
        *c *= (-p * z).exp();
    }
    Ok(inverse_fft(&s))
}

/// `P_h^z φ_h`, the exact solution of `∂_t φ_h = -½Δ_h φ_h` run backwards over span `z`.
pub fn discrete_backward_flow(phi_h: &GridFunction, z: f64) -> Result<GridFunction> {
    spectral_flow(phi_h, z)
}

/// Exact solution of `∂_t ρ = ½Δ_h ρ` after time `z`.
pub fn discrete_forward_flow(rho_h: &GridFunction, z: f64) -> Result<GridFunction> {
    spectral_flow(rho_h, z)
}

/// `‖I_h P^z φ - P_h^z I_h φ‖_h`.
pub fn backward_flow_error(phi: &TestFunction, grid: &Grid, z: f64) -> Result<f64> {
    let continuous = continuous_backward_flow(phi, z)?.series_on(grid)?;
    let discrete = discrete_backward_flow(&phi.interpolate(grid)?, z)?;
    Ok(continuous.sub(&discrete)?.norm())
}

/// `‖∇_h P_h^z I_hφ₁ · ∇_h P_h^z I_hφ₂ - I_h(∇P^zφ₁ · ∇P^zφ₂)‖_h`.
pub fn gradient_product_error(
    phi1: &TestFunction,
    phi2: &TestFunction,
    grid: &Grid,
    z: f64,
) -> Result<f64> {
    let stencil = Stencil::centered_first();
    let discrete_grad = |phi: &TestFunction| -> Result<GridFunction> {
        let flowed = discrete_backward_flow(&phi.interpolate(grid)?, z)?;
        Ok(apply_gradient(&stencil, &flowed)?.remove(0))
    };
    let exact_grad = |phi: &TestFunction| -> Result<GridFunction> {
        continuous_backward_flow(phi, z)?.series_derivative_on(grid)
    };
    let discrete = discrete_grad(phi1)?.mul(&discrete_grad(phi2)?)?;
    let exact = exact_grad(phi1)?.mul(&exact_grad(phi2)?)?;
    Ok(discrete.sub(&exact)?.norm())
}

/// `‖I_h ∇P^zφ - ∇_h P_h^z I_hφ‖_h`.
pub fn gradient_flow_error(phi: &TestFunction, grid: &Grid, z: f64) -> Result<f64> {
    let flowed = discrete_backward_flow(&phi.interpolate(grid)?, z)?;
    let discrete = apply_gradient(&Stencil::centered_first(), &flowed)?.remove(0);
    let exact = continuous_backward_flow(phi, z)?.series_derivative_on(grid)?;
    Ok(discrete.sub(&exact)?.norm())
}
