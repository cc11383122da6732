//! Smooth periodic test functions on the one-dimensional torus.
//!
//! A [`TestFunction`] carries a truncated Fourier series
//! `φ(x) ≈ Σ_{|ξ|≤K} c_ξ e^{iξx}` and a fast evaluator. Closed forms evaluate
//! through their closure; functions that only exist as a series (heat-flowed
//! functions, derived products) evaluate through a cubic Hermite table of the
//! series and its exact derivative on a fine periodic grid.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction};

/// Default Fourier bandwidth `K`.
pub const DEFAULT_BANDWIDTH: usize = 256;
/// Default tolerance between closure and series.
pub const DEFAULT_TAIL_TOLERANCE: f64 = 1e-12;
/// Cells of the evaluation table.
const TABLE_CELLS: usize = 8192;

type Closure = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct TestFunction {
    inner: Arc<Inner>,
}

struct Inner {
    label: String,
    bandwidth: usize,
    /// `c_ξ` for `ξ = -K..=K`, stored at index `ξ + K`.
    coeffs: Vec<Complex64>,
    closed_form: Option<Closure>,
    table: HermiteTable,
    tail_error: f64,
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TestFunction")
            .field("label", &self.inner.label)
            .field("bandwidth", &self.inner.bandwidth)
            .field("tail_error", &self.inner.tail_error)
            .finish()
    }
}

/// Wrap any real `x` into `[-π, π)`.
pub fn wrap_angle(x: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let mut y = x - two_pi * ((x + PI) / two_pi).floor();
    if y >= PI {
        y -= two_pi;
    }
    if y < -PI {
        y = -PI;
    }
    y
}

impl TestFunction {
    /// Closed form with the default bandwidth.
    pub fn from_fn(label: &str, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self::from_fn_with_bandwidth(label, f, DEFAULT_BANDWIDTH)
    }

    /// Closed form; coefficients come from an FFT of `4K` equispaced samples.
    pub fn from_fn_with_bandwidth(
        label: &str,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        bandwidth: usize,
    ) -> Self {
        let f: Closure = Arc::new(f);
        let coeffs = project(&*f, bandwidth);
        let table = HermiteTable::from_coefficients(&coeffs, bandwidth);
        let tail_error = sup_deviation(&*f, &coeffs, bandwidth);
        Self {
            inner: Arc::new(Inner {
                label: label.to_string(),
                bandwidth,
                coeffs,
                closed_form: Some(f),
                table,
                tail_error,
            }),
        }
    }

    /// Series-only function from coefficients `c_ξ`, `ξ = -K..=K`.
    pub fn from_coefficients(label: &str, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() % 2 != 1 {
            return Err(Error::InvalidInput(
                "coefficient array must have odd length 2K+1".into(),
            ));
        }
        let bandwidth = coeffs.len() / 2;
        for k in 0..=bandwidth {
            let a = coeffs[bandwidth + k];
            let b = coeffs[bandwidth - k];
            if (a - b.conj()).norm() > 1e-12 * (1.0 + a.norm()) {
                return Err(Error::InvalidInput(
                    "coefficients must satisfy c(-ξ) = conj(c(ξ))".into(),
                ));
            }
        }
        let table = HermiteTable::from_coefficients(&coeffs, bandwidth);
        Ok(Self {
            inner: Arc::new(Inner {
                label: label.to_string(),
                bandwidth,
                coeffs,
                closed_form: None,
                table,
                tail_error: 0.0,
            }),
        })
    }

    pub fn label(&self) -> &str {
        &self.inner.label
    }

    pub fn bandwidth(&self) -> usize {
        self.inner.bandwidth
    }

    /// Sup over a `10K`-point sample of `|closure - series|` (zero for series-only functions).
    pub fn tail_error(&self) -> f64 {
        self.inner.tail_error
    }

    pub fn has_closed_form(&self) -> bool {
        self.inner.closed_form.is_some()
    }

    /// `c_ξ`, zero outside the band.
    pub fn coefficient(&self, xi: i64) -> Complex64 {
        let k = self.inner.bandwidth as i64;
        if xi.abs() > k {
            Complex64::new(0.0, 0.0)
        } else {
            self.inner.coeffs[(xi + k) as usize]
        }
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.inner.coeffs
    }

    /// `φ(x)`.
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match &self.inner.closed_form {
            Some(f) => f(x),
            None => self.inner.table.value(x),
        }
    }

    /// `φ'(x)` of the truncated series.
    #[inline]
    pub fn derivative(&self, x: f64) -> f64 {
        self.inner.table.derivative(x)
    }

    /// Tabulated value of the truncated series, cheaper than `eval` for
    /// closures that are expensive to evaluate.
    #[inline]
    pub fn eval_tabulated(&self, x: f64) -> f64 {
        self.inner.table.value(x)
    }

    /// Same underlying function: shared storage or identical series.
    pub fn same_as(&self, other: &TestFunction) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner) || self.inner.coeffs == other.inner.coeffs
    }

    /// Exact evaluation of the truncated series.
    pub fn series(&self, x: f64) -> f64 {
        series_sum(&self.inner.coeffs, self.inner.bandwidth, x, false)
    }

    /// Exact derivative of the truncated series.
    pub fn series_derivative(&self, x: f64) -> f64 {
        series_sum(&self.inner.coeffs, self.inner.bandwidth, x, true)
    }

    /// `I_h φ`, exact nodal values.
    pub fn interpolate(&self, grid: &Grid) -> Result<GridFunction> {
        ensure_line(grid)?;
        Ok(grid.sample(|x| self.eval(x[0])))
    }

    /// Nodal values of the truncated series.
    pub fn series_on(&self, grid: &Grid) -> Result<GridFunction> {
        ensure_line(grid)?;
        Ok(grid.sample(|x| self.series(x[0])))
    }

    /// Nodal values of the exact derivative of the truncated series.
    pub fn series_derivative_on(&self, grid: &Grid) -> Result<GridFunction> {
        ensure_line(grid)?;
        Ok(grid.sample(|x| self.series_derivative(x[0])))
    }

    /// Multiply each coefficient by `m(ξ)`.
    pub fn map_coefficients(&self, label: &str, m: impl Fn(i64) -> f64) -> Result<Self> {
        let k = self.inner.bandwidth as i64;
        let coeffs = self
            .inner
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| c * m(i as i64 - k))
            .collect();
        Self::from_coefficients(label, coeffs)
    }

    /// `a·φ`, keeping the closed form when there is one.
    pub fn scaled(&self, a: f64) -> Self {
        match &self.inner.closed_form {
            Some(f) => {
                let f = f.clone();
                Self::from_fn_with_bandwidth(
                    &format!("{}*{a}", self.label()),
                    move |x| a * f(x),
                    self.inner.bandwidth,
                )
            }
            None => self
                .map_coefficients(&format!("{}*{a}", self.label()), |_| a)
                .expect("scaling preserves conjugate symmetry"),
        }
    }

    /// `‖φ‖_{L²(T)}` computed from the series.
    pub fn l2_norm(&self) -> f64 {
        (2.0 * PI * self.inner.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>()).sqrt()
    }

    /// `φ / ‖φ‖_{L²}`.
    pub fn normalized_l2(&self) -> Result<Self> {
        let n = self.l2_norm();
        if n == 0.0 {
            return Err(Error::InvalidInput(
                "cannot normalise the zero function".into(),
            ));
        }
        Ok(self.scaled(1.0 / n))
    }

    /// `φ²`, re-projected to the same bandwidth.
    pub fn squared(&self) -> Self {
        let me = self.clone();
        Self::from_fn_with_bandwidth(
            &format!("({})^2", self.label()),
            move |x| {
                let v = me.eval(x);
                v * v
            },
            self.inner.bandwidth,
        )
    }

    /// `|φ'|²`, re-projected to the same bandwidth.
    pub fn gradient_squared(&self) -> Self {
        let me = self.clone();
        Self::from_fn_with_bandwidth(
            &format!("|d/dx {}|^2", self.label()),
            move |x| {
                let v = me.series_derivative(x);
                v * v
            },
            self.inner.bandwidth,
        )
    }

    /// Pointwise product, re-projected to the bandwidth of `self`.
    pub fn product(&self, other: &TestFunction) -> Self {
        let a = self.clone();
        let b = other.clone();
        Self::from_fn_with_bandwidth(
            &format!("({})*({})", self.label(), other.label()),
            move |x| a.eval(x) * b.eval(x),
            self.inner.bandwidth,
        )
    }

    /// Check the closure/series agreement invariant.
    pub fn check_tail(&self, tolerance: f64) -> Result<()> {
        if self.inner.tail_error > tolerance {
            return Err(Error::InvalidInput(format!(
                "test function {} deviates from its series by {:e} > {:e}",
                self.label(),
                self.inner.tail_error,
                tolerance
            )));
        }
        Ok(())
    }
}

fn ensure_line(grid: &Grid) -> Result<()> {
    if grid.dim() != 1 {
        return Err(Error::InvalidGrid(
            "test functions live on the one-dimensional torus".into(),
        ));
    }
    Ok(())
}

/// `c_ξ = n^{-1} Σ_j f(x_j) e^{-iξx_j}` on `n = 4K` samples `x_j = -π + 2πj/n`.
fn project(f: &dyn Fn(f64) -> f64, bandwidth: usize) -> Vec<Complex64> {
    let n = 4 * bandwidth.max(1);
    let mut buf: Vec<Complex64> = (0..n)
        .map(|j| Complex64::new(f(-PI + 2.0 * PI * j as f64 / n as f64), 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let k = bandwidth as i64;
    let mut coeffs: Vec<Complex64> = (-k..=k)
        .map(|xi| {
            let c = buf[xi.rem_euclid(n as i64) as usize] / n as f64;
            if xi % 2 == 0 {
                c
            } else {
                -c
            }
        })
        .collect();
    // Exact conjugate symmetry for a real function.
    for i in 0..bandwidth {
        let j = 2 * bandwidth - i;
        let avg = 0.5 * (coeffs[i] + coeffs[j].conj());
        coeffs[i] = avg;
        coeffs[j] = avg.conj();
    }
    coeffs[bandwidth].im = 0.0;
    coeffs
}

fn series_sum(coeffs: &[Complex64], bandwidth: usize, x: f64, derivative: bool) -> f64 {
    let rot = Complex64::from_polar(1.0, x);
    let mut phase = rot;
    let mut acc = if derivative {
        0.0
    } else {
        coeffs[bandwidth].re
    };
    for xi in 1..=bandwidth {
        let c = coeffs[bandwidth + xi];
        let term = c * phase;
        acc += if derivative {
            // d/dx of 2 Re(c e^{iξx}) = -2ξ Im(c e^{iξx})
            -2.0 * xi as f64 * term.im
        } else {
            2.0 * term.re
        };
        phase *= rot;
        if xi % 64 == 0 {
            phase = Complex64::from_polar(1.0, (xi + 1) as f64 * x);
        }
    }
    acc
}

fn sup_deviation(f: &dyn Fn(f64) -> f64, coeffs: &[Complex64], bandwidth: usize) -> f64 {
    let n = 10 * bandwidth.max(1);
    (0..n)
        .map(|j| {
            // Offset by half a cell so the sample avoids the projection nodes.
            let x = -PI + 2.0 * PI * (j as f64 + 0.5) / n as f64;
            (f(x) - series_sum(coeffs, bandwidth, x, false)).abs()
        })
        .fold(0.0, f64::max)
}

/// Cubic Hermite interpolation of a periodic function from exact nodal values
/// and derivatives.
struct HermiteTable {
    values: Vec<f64>,
    slopes: Vec<f64>,
    inv_step: f64,
    step: f64,
}

impl HermiteTable {
    fn from_coefficients(coeffs: &[Complex64], bandwidth: usize) -> Self {
        let n = TABLE_CELLS.max(4 * bandwidth);
        let mut vals = vec![Complex64::new(0.0, 0.0); n];
        let mut ders = vec![Complex64::new(0.0, 0.0); n];
        let k = bandwidth as i64;
        for xi in -k..=k {
            let c = coeffs[(xi + k) as usize];
            // x_j = -π + 2πj/n contributes the phase (-1)^ξ.
            let c = if xi % 2 == 0 { c } else { -c };
            let slot = xi.rem_euclid(n as i64) as usize;
            vals[slot] += c;
            ders[slot] += c * Complex64::new(0.0, xi as f64);
        }
        let ifft = FftPlanner::new().plan_fft_inverse(n);
        ifft.process(&mut vals);
        ifft.process(&mut ders);
        let step = 2.0 * PI / n as f64;
        Self {
            values: vals.iter().map(|c| c.re).collect(),
            slopes: ders.iter().map(|c| c.re).collect(),
            inv_step: 1.0 / step,
            step,
        }
    }

    #[inline]
    fn locate(&self, x: f64) -> (usize, usize, f64) {
        let n = self.values.len();
        let s = (wrap_angle(x) + PI) * self.inv_step;
        let i = (s.floor() as usize).min(n - 1);
        let t = s - i as f64;
        (i, if i + 1 == n { 0 } else { i + 1 }, t)
    }

    #[inline]
    fn value(&self, x: f64) -> f64 {
        let (i, j, t) = self.locate(x);
        let (p0, p1) = (self.values[i], self.values[j]);
        let (m0, m1) = (self.slopes[i] * self.step, self.slopes[j] * self.step);
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * p0
            + (t3 - 2.0 * t2 + t) * m0
            + (-2.0 * t3 + 3.0 * t2) * p1
            + (t3 - t2) * m1
    }

    #[inline]
    fn derivative(&self, x: f64) -> f64 {
        let (i, j, t) = self.locate(x);
        let (p0, p1) = (self.values[i], self.values[j]);
        let (m0, m1) = (self.slopes[i] * self.step, self.slopes[j] * self.step);
        let t2 = t * t;
        let d = (6.0 * t2 - 6.0 * t) * p0
            + (3.0 * t2 - 4.0 * t + 1.0) * m0
            + (-6.0 * t2 + 6.0 * t) * p1
            + (3.0 * t2 - 2.0 * t) * m1;
        d * self.inv_step
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bump() -> TestFunction {
        TestFunction::from_fn("bump", |x| {
            3.0 - 2.0 * (-(x / 2.0).sin().powi(6) / 0.05).exp()
        })
    }

    #[test]
    fn cosine_has_two_modes() {
        let c = TestFunction::from_fn("cos", f64::cos);
        assert!((c.coefficient(1) - Complex64::new(0.5, 0.0)).norm() < 1e-15);
        assert!((c.coefficient(-1) - Complex64::new(0.5, 0.0)).norm() < 1e-15);
        assert!(c.coefficient(0).norm() < 1e-15);
        assert!(c.coefficient(300).norm() == 0.0);
        assert!(c.tail_error() < 1e-13);
        assert!((c.l2_norm() - PI.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn closure_and_series_agree() {
        let f = bump();
        f.check_tail(DEFAULT_TAIL_TOLERANCE).unwrap();
        for j in 0..100 {
            let x = -PI + 0.0628 * j as f64;
            assert!((f.series(x) - f.eval(x)).abs() < 1e-12);
        }
    }

    #[test]
    fn table_reproduces_series() {
        let f = bump();
        let flowed = f
            .map_coefficients("flowed", |xi| (-(xi * xi) as f64 * 0.05).exp())
            .unwrap();
        for j in 0..257 {
            let x = -PI + 0.0245 * j as f64 + 1e-3;
            assert!((flowed.eval(x) - flowed.series(x)).abs() < 1e-10);
            assert!((flowed.derivative(x) - flowed.series_derivative(x)).abs() < 1e-8);
        }
    }

    #[test]
    fn derivative_of_sine() {
        let s = TestFunction::from_fn("sin", f64::sin);
        for j in 0..50 {
            let x = -3.0 + 0.12 * j as f64;
            assert!((s.derivative(x) - x.cos()).abs() < 1e-10);
            assert!((s.series_derivative(x) - x.cos()).abs() < 1e-13);
        }
    }

    #[test]
    fn rejects_non_real_coefficients() {
        let coeffs = vec![
            Complex64::new(0.0, 1.0),
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 1.0),
        ];
        assert!(TestFunction::from_coefficients("bad", coeffs).is_err());
        assert!(
            TestFunction::from_coefficients("even", vec![Complex64::new(1.0, 0.0); 2]).is_err()
        );
    }

    #[test]
    fn squares_and_products() {
        let c = TestFunction::from_fn("cos", f64::cos);
        let c2 = c.squared();
        assert!((c2.coefficient(0).re - 0.5).abs() < 1e-14);
        assert!((c2.coefficient(2).re - 0.25).abs() < 1e-14);
        let s = TestFunction::from_fn("sin", f64::sin);
        let p = c.product(&s);
        // sin·cos = sin(2x)/2 → c_2 = -i/4.
        assert!((p.coefficient(2) - Complex64::new(0.0, -0.25)).norm() < 1e-14);
        let g = s.gradient_squared();
        assert!((g.eval(0.3) - 0.3f64.cos().powi(2)).abs() < 1e-10);
    }

    #[test]
    fn normalisation() {
        let f = bump().normalized_l2().unwrap();
        assert!((f.l2_norm() - 1.0).abs() < 1e-12);
        let zero = TestFunction::from_fn("zero", |_| 0.0);
        assert!(zero.normalized_l2().is_err());
    }

    #[test]
    fn wrap_angle_range() {
        for &x in &[PI, -PI, 3.0 * PI, -3.0 * PI + 1e-9, 100.0, -1e-300] {
            let y = wrap_angle(x);
            assert!((-PI..PI).contains(&y), "{x} -> {y}");
        }
        assert!((wrap_angle(PI - 1e-6 + 1e-5) - (-PI + 9e-6)).abs() < 1e-12);
    }
}
