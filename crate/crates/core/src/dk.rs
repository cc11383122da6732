//! Finite-difference Dean–Kawasaki dynamics on the one-dimensional periodic
//! grid, integrated with a Crank–Nicolson first step followed by BDF2.
//!
//! The semi-discrete system is
//!
//! ```text
//! dρ_h(x) = ½Δ_h ρ_h(x) dt
//!         + N^{-1/2} h^{-1/2} [√ρ⁺(x+h) dβ(x+h) - √ρ⁺(x-h) dβ(x-h)] / 2h
//! ```
//!
//! with one standard Brownian motion per node. The noise is a discrete
//! divergence, so `(ρ_h, 1)_h` is conserved, and its quadratic variation
//! against test functions is `N^{-1}(ρ⁺, ∂_hφ₁ ∂_hφ₂)_h dt`.
//!
//! Implicit solves are diagonal in Fourier space and are done by FFT.

use std::io::Write;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::fmt::g17;
use crate::grid::{laplacian_1d, Grid, GridFunction};
use crate::heat::{discrete_forward_flow, laplacian_symbol};
use crate::particles::InitialPlacement;
use crate::rng::{StreamKey, Subsystem};

/// Which stochastic model is integrated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Model {
    /// Noise amplitude `√ρ_h⁺` of the current random density.
    Nonlinear,
    /// Noise amplitude `√ρ̄_h⁺` frozen at the mean-field solution.
    Linearised,
    /// No noise.
    Deterministic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeConfig {
    pub dt: f64,
    pub model: Model,
    pub seed: u64,
    /// Use the implicit coefficient `(2/3)Δt·Δ_h` as printed instead of the
    /// diffusion-consistent `(2/3)Δt·½Δ_h`.
    pub paper_literal_bdf2: bool,
    /// Let the linearised model draw from the nonlinear model's noise stream.
    pub shared_noise_stream: bool,
}

impl SchemeConfig {
    pub fn new(dt: f64, model: Model, seed: u64) -> Result<Self> {
        let cfg = Self {
            dt,
            model,
            seed,
            paper_literal_bdf2: false,
            shared_noise_stream: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.dt.is_finite() || self.dt <= 0.0 {
            return Err(Error::InvalidTimestep(self.dt));
        }
        Ok(())
    }

    /// Number of steps needed to reach `t`, which must lie on the step lattice.
    pub fn steps_to(&self, t: f64) -> Result<usize> {
        if !t.is_finite() || t < 0.0 {
            return Err(Error::NegativeSpan(t));
        }
        let n = (t / self.dt).round();
        if (t - n * self.dt).abs() > 1e-12 * t.max(1.0) {
            return Err(Error::OffLattice {
                time: t,
                dt: self.dt,
            });
        }
        Ok(n as usize)
    }

    fn noise_subsystem(&self) -> Option<Subsystem> {
        match self.model {
            Model::Nonlinear => Some(Subsystem::DkNoise),
            Model::Linearised if self.shared_noise_stream => Some(Subsystem::DkNoise),
            Model::Linearised => Some(Subsystem::LinearisedNoise),
            Model::Deterministic => None,
        }
    }
}

/// State of the two-step scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct DkState {
    rho: GridFunction,
    rho_prev: GridFunction,
    noise_prev: GridFunction,
    clock: f64,
    step_index: usize,
    particles: usize,
}

impl DkState {
    pub fn new(rho0: GridFunction, particles: usize) -> Result<Self> {
        if rho0.grid().dim() != 1 {
            return Err(Error::InvalidGrid(
                "the Dean–Kawasaki integrator is one-dimensional".into(),
            ));
        }
        if particles == 0 {
            return Err(Error::InvalidInput(
                "particle count must be positive".into(),
            ));
        }
        let zeros = GridFunction::zeros(*rho0.grid());
        Ok(Self {
            rho_prev: rho0.clone(),
            rho: rho0,
            noise_prev: zeros,
            clock: 0.0,
            step_index: 0,
            particles,
        })
    }

    pub fn from_placement(placement: &InitialPlacement) -> Result<Self> {
        Self::new(placement.matched_density().clone(), placement.particles())
    }

    pub fn rho(&self) -> &GridFunction {
        &self.rho
    }

    pub fn rho_prev(&self) -> &GridFunction {
        &self.rho_prev
    }

    pub fn noise_prev(&self) -> &GridFunction {
        &self.noise_prev
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn step_index(&self) -> usize {
        self.step_index
    }

    pub fn particles(&self) -> usize {
        self.particles
    }

    fn reset(&mut self, rho0: &GridFunction) {
        self.rho.values_mut().copy_from_slice(rho0.values());
        self.rho_prev.values_mut().copy_from_slice(rho0.values());
        self.noise_prev.values_mut().fill(0.0);
        self.clock = 0.0;
        self.step_index = 0;
    }
}

/// Nodal noise contribution of one step:
/// `out(x) = N^{-1/2} h^{-1/2} [√ρ⁺(x+h) dW(x+h) - √ρ⁺(x-h) dW(x-h)] / 2h`.
pub fn assemble_noise(
    rho_for_amplitude: &GridFunction,
    particles: usize,
    dw: &GridFunction,
) -> Result<GridFunction> {
    if rho_for_amplitude.grid() != dw.grid() {
        return Err(Error::GridMismatch("amplitude and increments".into()));
    }
    let grid = *dw.grid();
    if grid.dim() != 1 {
        return Err(Error::InvalidGrid(
            "noise assembly is one-dimensional".into(),
        ));
    }
    let amp: Vec<f64> = rho_for_amplitude
        .values()
        .iter()
        .map(|r| r.max(0.0).sqrt())
        .collect();
    let mut out = vec![0.0; grid.len()];
    assemble_noise_into(&amp, dw.values(), noise_scale(&grid, particles), &mut out);
    GridFunction::new(grid, out)
}

fn noise_scale(grid: &Grid, particles: usize) -> f64 {
    let h = grid.spacing();
    1.0 / ((particles as f64).sqrt() * h.sqrt() * 2.0 * h)
}

fn assemble_noise_into(amp: &[f64], dw: &[f64], scale: f64, out: &mut [f64]) {
    let l = amp.len();
    for (i, o) in out.iter_mut().enumerate() {
        let right = (i + 1) % l;
        let left = (i + l - 1) % l;
        *o = scale * (amp[right] * dw[right] - amp[left] * dw[left]);
    }
}

/// Mean-field density `ρ̄_h(mΔt)` on the step lattice and its noise amplitude.
#[derive(Debug, Clone)]
pub struct MeanField {
    dt: f64,
    densities: Vec<GridFunction>,
    amplitudes: Vec<Vec<f64>>,
}

impl MeanField {
    pub fn compute(rho0: &GridFunction, dt: f64, steps: usize) -> Result<Self> {
        let mut densities = Vec::with_capacity(steps + 1);
        for m in 0..=steps {
            densities.push(discrete_forward_flow(rho0, m as f64 * dt)?);
        }
        let amplitudes = densities
            .iter()
            .map(|d| d.values().iter().map(|r| r.max(0.0).sqrt()).collect())
            .collect();
        Ok(Self {
            dt,
            densities,
            amplitudes,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps(&self) -> usize {
        self.densities.len() - 1
    }

    pub fn density(&self, step: usize) -> &GridFunction {
        &self.densities[step]
    }

    fn amplitude(&self, step: usize) -> Result<&[f64]> {
        self.amplitudes
            .get(step)
            .map(|a| a.as_slice())
            .ok_or_else(|| Error::InvalidInput(format!("mean field not available at step {step}")))
    }
}

/// Running diagnostics of one trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryMonitor {
    /// `sup_t ‖ρ_h⁻(t)‖_h`.
    pub sup_neg_norm: f64,
    /// `min_t min_x ρ_h(t, x)`.
    pub min_density: f64,
    /// `max_t |(ρ_h(t),1)_h - (ρ_h(0),1)_h| / |(ρ_h(0),1)_h|`.
    pub mass_drift: f64,
    initial_mass: f64,
}

impl TrajectoryMonitor {
    fn start(rho0: &GridFunction) -> Self {
        let mut m = Self {
            sup_neg_norm: 0.0,
            min_density: f64::INFINITY,
            mass_drift: 0.0,
            initial_mass: rho0.mass(),
        };
        m.observe(rho0.values(), rho0.grid().spacing())
            .expect("initial density is finite");
        m
    }

    fn observe(&mut self, rho: &[f64], h: f64) -> Result<()> {
        let mut sum = 0.0;
        let mut neg = 0.0;
        let mut min = f64::INFINITY;
        for &v in rho {
            sum += v;
            if v < 0.0 {
                neg += v * v;
            }
            min = min.min(v);
        }
        if !sum.is_finite() || min.is_nan() {
            return Err(Error::NonFinite("density left the finite range".into()));
        }
        let mass = h * sum;
        self.sup_neg_norm = self.sup_neg_norm.max((h * neg).sqrt());
        self.min_density = self.min_density.min(min);
        let denom = if self.initial_mass != 0.0 {
            self.initial_mass.abs()
        } else {
            1.0
        };
        self.mass_drift = self
            .mass_drift
            .max((mass - self.initial_mass).abs() / denom);
        Ok(())
    }

    pub fn any_negative(&self) -> bool {
        self.min_density < 0.0
    }
}

pub const MONITOR_HEADER: &str = "realization,sup_neg_norm,min_density,mass_drift";

/// Write monitor rows `realization,sup_neg_norm,min_density,mass_drift`.
pub fn write_monitor_csv<W: Write>(monitors: &[TrajectoryMonitor], mut w: W) -> Result<()> {
    writeln!(w, "{MONITOR_HEADER}")?;
    for (r, m) in monitors.iter().enumerate() {
        writeln!(
            w,
            "{},{},{},{}",
            r,
            g17(m.sup_neg_norm),
            g17(m.min_density),
            g17(m.mass_drift)
        )?;
    }
    Ok(())
}

/// One-step integrator holding FFT plans, solve symbols and work buffers.
pub struct DkStepper {
    grid: Grid,
    cfg: SchemeConfig,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    first_solve: Vec<f64>,
    bdf2_solve: Vec<f64>,
    buf: Vec<Complex64>,
    scratch: Vec<Complex64>,
    dw: Vec<f64>,
    amp: Vec<f64>,
    noise: Vec<f64>,
    rhs: Vec<f64>,
    mean_field: Option<Arc<MeanField>>,
}

impl DkStepper {
    pub fn new(grid: Grid, cfg: SchemeConfig, mean_field: Option<Arc<MeanField>>) -> Result<Self> {
        cfg.validate()?;
        if grid.dim() != 1 {
            return Err(Error::InvalidGrid(
                "the Dean–Kawasaki integrator is one-dimensional".into(),
            ));
        }
        if cfg.model == Model::Linearised && mean_field.is_none() {
            return Err(Error::InvalidInput(
                "the linearised model needs a mean field".into(),
            ));
        }
        if let Some(mf) = &mean_field {
            if (mf.dt - cfg.dt).abs() > 1e-15 || mf.density(0).grid() != &grid {
                return Err(Error::InvalidInput(
                    "mean field does not match the scheme".into(),
                ));
            }
        }
        let l = grid.len();
        // P(h,ξ) is the symbol of -½Δ_h; λ = 2P is the symbol of -Δ_h.
        let symbol = laplacian_symbol(&grid);
        let dt = cfg.dt;
        let norm = 1.0 / l as f64;
        let first_solve = symbol
            .values()
            .iter()
            .map(|p| norm / (1.0 + 0.5 * dt * p))
            .collect();
        let bdf2_factor = if cfg.paper_literal_bdf2 { 2.0 } else { 1.0 };
        let bdf2_solve = symbol
            .values()
            .iter()
            .map(|p| norm / (1.0 + 2.0 / 3.0 * dt * bdf2_factor * p))
            .collect();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(l);
        let inverse = planner.plan_fft_inverse(l);
        let scratch_len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        Ok(Self {
            grid,
            cfg,
            forward,
            inverse,
            first_solve,
            bdf2_solve,
            buf: vec![Complex64::new(0.0, 0.0); l],
            scratch: vec![Complex64::new(0.0, 0.0); scratch_len],
            dw: vec![0.0; l],
            amp: vec![0.0; l],
            noise: vec![0.0; l],
            rhs: vec![0.0; l],
            mean_field,
        })
    }

    pub fn config(&self) -> &SchemeConfig {
        &self.cfg
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Solve `(1 + c·P(h,ξ)) ρ̂ = r̂` given the reciprocal symbol, in place on `rhs`.
    fn solve(&mut self, reciprocal: &[f64], out: &mut [f64]) {
        for (b, &r) in self.buf.iter_mut().zip(&self.rhs) {
            *b = Complex64::new(r, 0.0);
        }
        self.forward
            .process_with_scratch(&mut self.buf, &mut self.scratch);
        for (b, &s) in self.buf.iter_mut().zip(reciprocal) {
            *b *= s;
        }
        self.inverse
            .process_with_scratch(&mut self.buf, &mut self.scratch);
        for (o, b) in out.iter_mut().zip(&self.buf) {
            *o = b.re;
        }
    }

    fn draw_increments(&mut self, rng: &mut ChaCha8Rng) {
        let sd = self.cfg.dt.sqrt();
        for w in self.dw.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *w = sd * z;
        }
    }

    /// Noise of the step starting at `state`, built from `self.dw`, into `self.noise`.
    fn build_noise(&mut self, state: &DkState) -> Result<()> {
        match self.cfg.model {
            Model::Deterministic => {
                self.noise.fill(0.0);
                return Ok(());
            }
            Model::Nonlinear => {
                for (a, r) in self.amp.iter_mut().zip(state.rho.values()) {
                    *a = r.max(0.0).sqrt();
                }
            }
            Model::Linearised => {
                let mf = self.mean_field.as_ref().expect("checked in new");
                self.amp.copy_from_slice(mf.amplitude(state.step_index)?);
            }
        }
        let scale = noise_scale(&self.grid, state.particles);
        assemble_noise_into(&self.amp, &self.dw, scale, &mut self.noise);
        Ok(())
    }

    fn check_state(&self, state: &DkState) -> Result<()> {
        if state.rho.grid() != &self.grid {
            return Err(Error::GridMismatch("state and stepper".into()));
        }
        Ok(())
    }

    /// `ρ¹ = ρ⁰ + (¼Δ_hρ¹ + ¼Δ_hρ⁰)Δt + noise⁰` with explicit noise.
    pub fn first_step_with_increment(&mut self, state: &mut DkState, dw: &[f64]) -> Result<()> {
        self.check_state(state)?;
        if state.step_index != 0 {
            return Err(Error::InvalidInput(
                "first step requires step index 0".into(),
            ));
        }
        self.dw.copy_from_slice(dw);
        self.first_step_inner(state)
    }

    fn first_step_inner(&mut self, state: &mut DkState) -> Result<()> {
        self.build_noise(state)?;
        let h = self.grid.spacing();
        laplacian_1d(state.rho.values(), h, &mut self.rhs);
        let quarter = 0.25 * self.cfg.dt;
        for ((r, &rho), &n) in self.rhs.iter_mut().zip(state.rho.values()).zip(&self.noise) {
            *r = rho + quarter * *r + n;
        }
        let reciprocal = std::mem::take(&mut self.first_solve);
        std::mem::swap(&mut state.rho_prev, &mut state.rho);
        self.solve(&reciprocal, state.rho.values_mut());
        self.first_solve = reciprocal;
        state.noise_prev.values_mut().copy_from_slice(&self.noise);
        state.clock += self.cfg.dt;
        state.step_index = 1;
        Ok(())
    }

    /// `ρ^{m+1} = 4/3 ρ^m - 1/3 ρ^{m-1} + 2/3 Δt ½Δ_h ρ^{m+1} - 1/3 noise^{m-1,m} + noise^{m,m+1}`.
    pub fn bdf2_step_with_increment(&mut self, state: &mut DkState, dw: &[f64]) -> Result<()> {
        self.check_state(state)?;
        if state.step_index == 0 {
            return Err(Error::InvalidInput(
                "BDF2 step requires a previous step".into(),
            ));
        }
        self.dw.copy_from_slice(dw);
        self.bdf2_step_inner(state)
    }

    fn bdf2_step_inner(&mut self, state: &mut DkState) -> Result<()> {
        self.build_noise(state)?;
        for (((r, &now), &prev), (&np, &n)) in self
            .rhs
            .iter_mut()
            .zip(state.rho.values())
            .zip(state.rho_prev.values())
            .zip(state.noise_prev.values().iter().zip(&self.noise))
        {
            *r = (4.0 * now - prev - np) / 3.0 + n;
        }
        let reciprocal = std::mem::take(&mut self.bdf2_solve);
        // rho_prev now holds ρ^{m-1}; overwrite it with ρ^{m+1} and swap.
        self.solve(&reciprocal, state.rho_prev.values_mut());
        self.bdf2_solve = reciprocal;
        std::mem::swap(&mut state.rho_prev, &mut state.rho);
        state.noise_prev.values_mut().copy_from_slice(&self.noise);
        state.clock += self.cfg.dt;
        state.step_index += 1;
        Ok(())
    }

    /// Advance one step, drawing increments from `rng` (ignored by the deterministic model).
    pub fn step(&mut self, state: &mut DkState, rng: Option<&mut ChaCha8Rng>) -> Result<()> {
        self.check_state(state)?;
        match (self.cfg.model, rng) {
            (Model::Deterministic, _) => self.dw.fill(0.0),
            (_, Some(rng)) => self.draw_increments(rng),
            (_, None) => {
                return Err(Error::InvalidInput(
                    "stochastic models need a random stream".into(),
                ))
            }
        }
        if state.step_index == 0 {
            self.first_step_inner(state)
        } else {
            self.bdf2_step_inner(state)
        }
    }
}

/// Reusable driver for many realizations on one placement.
pub struct DkRunner {
    stepper: DkStepper,
    rho0: GridFunction,
    state: DkState,
}

impl DkRunner {
    /// `horizon` is the time up to which the linearised mean field is tabulated.
    pub fn new(placement: &InitialPlacement, cfg: SchemeConfig, horizon: f64) -> Result<Self> {
        let steps = cfg.steps_to(horizon)?;
        let mean_field = if cfg.model == Model::Linearised {
            Some(Arc::new(MeanField::compute(
                placement.matched_density(),
                cfg.dt,
                steps,
            )?))
        } else {
            None
        };
        Self::with_mean_field(placement, cfg, mean_field)
    }

    pub fn with_mean_field(
        placement: &InitialPlacement,
        cfg: SchemeConfig,
        mean_field: Option<Arc<MeanField>>,
    ) -> Result<Self> {
        let stepper = DkStepper::new(*placement.grid(), cfg, mean_field)?;
        let state = DkState::from_placement(placement)?;
        Ok(Self {
            stepper,
            rho0: placement.matched_density().clone(),
            state,
        })
    }

    pub fn config(&self) -> &SchemeConfig {
        &self.stepper.cfg
    }

    /// Run realization `realization` for `steps` steps, calling `observe(step, ρ_h)`
    /// after every step including step 0.
    pub fn run(
        &mut self,
        realization: u64,
        steps: usize,
        mut observe: impl FnMut(usize, &GridFunction),
    ) -> Result<TrajectoryMonitor> {
        self.state.reset(&self.rho0);
        let mut rng = self
            .stepper
            .cfg
            .noise_subsystem()
            .map(|s| StreamKey::new(self.stepper.cfg.seed, realization, s).rng());
        let mut monitor = TrajectoryMonitor::start(&self.rho0);
        let h = self.rho0.grid().spacing();
        observe(0, &self.state.rho);
        for m in 1..=steps {
            self.stepper.step(&mut self.state, rng.as_mut())?;
            monitor.observe(self.state.rho.values(), h)?;
            observe(m, &self.state.rho);
        }
        Ok(monitor)
    }
}

/// Snapshots of one realization at the requested times plus its monitor.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub snapshots: Vec<(f64, GridFunction)>,
    pub monitor: TrajectoryMonitor,
}

/// Simulate realization `realization` from the matched initial density and
/// record `ρ_h` at each of `record_times` (sorted, on the step lattice).
pub fn run_trajectory(
    placement: &InitialPlacement,
    cfg: &SchemeConfig,
    record_times: &[f64],
    realization: u64,
) -> Result<Trajectory> {
    cfg.validate()?;
    if record_times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidInput("record times must be sorted".into()));
    }
    let steps: Vec<usize> = record_times
        .iter()
        .map(|&t| cfg.steps_to(t))
        .collect::<Result<_>>()?;
    let horizon = record_times.last().copied().unwrap_or(0.0);
    let mut runner = DkRunner::new(placement, cfg.clone(), horizon)?;
    let last = steps.last().copied().unwrap_or(0);
    let mut snapshots = Vec::with_capacity(steps.len());
    let dt = cfg.dt;
    let monitor = runner.run(realization, last, |m, rho| {
        for &s in steps.iter().filter(|&&s| s == m) {
            snapshots.push((s as f64 * dt, rho.clone()));
        }
    })?;
    Ok(Trajectory { snapshots, monitor })
}

/// `E[ρ_h(t)]`, the discrete heat flow of the matched initial density.
pub fn expected_dk(placement: &InitialPlacement, t: f64) -> Result<GridFunction> {
    discrete_forward_flow(placement.matched_density(), t)
}

/// Summary of negative-part monitors over many realizations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NegativePartReport {
    pub realizations: usize,
    pub mean_sup_neg_norm: f64,
    pub max_sup_neg_norm: f64,
    /// Fraction of realizations with a negative node at some time.
    pub fraction_negative: f64,
    /// `exp(-ρ_min √(N h^d) / √ρ_max)`, the shape of the theoretical bound.
    pub envelope: f64,
    /// `h ≥ N^{-1/d}`.
    pub scaling_regime: bool,
}

pub fn negative_part_report(
    monitors: &[TrajectoryMonitor],
    particles: usize,
    grid: &Grid,
    rho_min: f64,
    rho_max: f64,
) -> Result<NegativePartReport> {
    if monitors.is_empty() {
        return Err(Error::InvalidInput(
            "negative-part report needs at least one realization".into(),
        ));
    }
    let m = monitors.len() as f64;
    let n = particles as f64;
    let d = grid.dim() as i32;
    let h = grid.spacing();
    Ok(NegativePartReport {
        realizations: monitors.len(),
        mean_sup_neg_norm: monitors.iter().map(|x| x.sup_neg_norm).sum::<f64>() / m,
        max_sup_neg_norm: monitors.iter().map(|x| x.sup_neg_norm).fold(0.0, f64::max),
        fraction_negative: monitors.iter().filter(|x| x.any_negative()).count() as f64 / m,
        envelope: (-rho_min * (n * h.powi(d)).sqrt() / rho_max.sqrt()).exp(),
        scaling_regime: h >= n.powf(-1.0 / d as f64),
    })
}

/// Frozen-state single-step check of the noise quadratic variation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticVariation {
    /// Sample mean of `(noise, φ₁)_h (noise, φ₂)_h`.
    pub sample: f64,
    pub stderr: f64,
    /// `N^{-1} Δt (ρ⁺, ∇_hφ₁ ∇_hφ₂)_h`.
    pub predicted: f64,
    pub samples: usize,
}

impl QuadraticVariation {
    pub fn z_score(&self) -> f64 {
        (self.sample - self.predicted) / self.stderr
    }
}

/// Draw `samples` independent noise increments on the frozen density `rho`
/// and compare the empirical covariance of the two tested increments with
/// its closed form.
pub fn quadratic_variation(
    rho: &GridFunction,
    particles: usize,
    phi1: &GridFunction,
    phi2: &GridFunction,
    dt: f64,
    samples: usize,
    seed: u64,
) -> Result<QuadraticVariation> {
    if samples < 2 {
        return Err(Error::InvalidInput(
            "at least two samples are needed".into(),
        ));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidTimestep(dt));
    }
    let grid = *rho.grid();
    if phi1.grid() != &grid || phi2.grid() != &grid {
        return Err(Error::GridMismatch("density and test functions".into()));
    }
    let stencil = crate::grid::Stencil::centered_first();
    let g1 = crate::grid::apply_gradient(&stencil, phi1)?.remove(0);
    let g2 = crate::grid::apply_gradient(&stencil, phi2)?.remove(0);
    let predicted = crate::grid::inner_product(&rho.map(|v| v.max(0.0)), &g1.mul(&g2)?)? * dt
        / particles as f64;
    let mut rng = StreamKey::new(seed, 0, Subsystem::Auxiliary).rng();
    let mut dw = GridFunction::zeros(grid);
    let mut acc = crate::stats::RunningMoments::new();
    let sd = dt.sqrt();
    for _ in 0..samples {
        for w in dw.values_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *w = sd * z;
        }
        let noise = assemble_noise(rho, particles, &dw)?;
        let a = crate::grid::inner_product(&noise, phi1)?;
        let b = crate::grid::inner_product(&noise, phi2)?;
        acc.push(a * b);
    }
    Ok(QuadraticVariation {
        sample: acc.mean(),
        stderr: acc.stderr(),
        predicted,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{apply_gradient, inner_product, interpolate_fn, Stencil};
    use crate::heat::laplacian_symbol;
    use crate::test_function::TestFunction;

    fn bump() -> TestFunction {
        TestFunction::from_fn("bump", |x| {
            3.0 - 2.0 * (-(x / 2.0).sin().powi(6) / 0.05).exp()
        })
    }

    fn deterministic(dt: f64) -> SchemeConfig {
        SchemeConfig::new(dt, Model::Deterministic, 0).unwrap()
    }

    #[test]
    fn noise_examples() {
        let g = Grid::line(8).unwrap();
        let dw = interpolate_fn(&g, |x| 0.01 * (3.0 * x).sin() + 0.02);
        let neg = GridFunction::constant(g, -1.0);
        assert_eq!(assemble_noise(&neg, 10, &dw).unwrap().sup_norm(), 0.0);
        let pos = interpolate_fn(&g, |x| 1.0 + 0.5 * x.cos());
        let zero = GridFunction::zeros(g);
        assert_eq!(assemble_noise(&pos, 10, &zero).unwrap().sup_norm(), 0.0);
        let out = assemble_noise(&pos, 10, &dw).unwrap();
        assert!(out.mass().abs() < 1e-15);
        // Direct formula at node 3.
        let h = g.spacing();
        let a = |i: usize| pos.values()[i].sqrt() * dw.values()[i];
        let expect = (a(4) - a(2)) / (10f64.sqrt() * h.sqrt() * 2.0 * h);
        assert!((out.values()[3] - expect).abs() < 1e-15);
    }

    #[test]
    fn noise_pairing_matches_gradient_form() {
        // (noise, φ)_h = -N^{-1/2} h^{1/2} Σ_y √ρ⁺(y) ∂_hφ(y) dW(y).
        let g = Grid::line(16).unwrap();
        let rho = interpolate_fn(&g, |x| 1.0 + 0.5 * x.sin());
        let dw = interpolate_fn(&g, |x| (5.0 * x).cos() * 0.03);
        let phi = interpolate_fn(&g, |x| (x.cos()).exp());
        let noise = assemble_noise(&rho, 100, &dw).unwrap();
        let lhs = inner_product(&noise, &phi).unwrap();
        let grad = apply_gradient(&Stencil::centered_first(), &phi)
            .unwrap()
            .remove(0);
        let h = g.spacing();
        let rhs: f64 = -(h.sqrt() / 10.0)
            * (0..16)
                .map(|y| rho.values()[y].sqrt() * grad.values()[y] * dw.values()[y])
                .sum::<f64>();
        assert!((lhs - rhs).abs() < 1e-14);
    }

    #[test]
    fn first_step_eigenmode() {
        let g = Grid::line(16).unwrap();
        let dt = 0.01;
        let mut stepper = DkStepper::new(g, deterministic(dt), None).unwrap();
        let cos = interpolate_fn(&g, f64::cos);
        let mut state = DkState::new(cos.clone(), 10).unwrap();
        stepper.step(&mut state, None).unwrap();
        let h = g.spacing();
        let lambda = (2.0 - 2.0 * h.cos()) / (h * h);
        let factor = (1.0 - 0.25 * dt * lambda) / (1.0 + 0.25 * dt * lambda);
        for (a, b) in state.rho().values().iter().zip(cos.values()) {
            assert!((a - factor * b).abs() < 1e-14);
        }
        assert_eq!(state.step_index(), 1);
        assert!((state.clock() - dt).abs() < 1e-15);
    }

    #[test]
    fn first_step_matches_dense_solve() {
        // Dense Gaussian elimination of (I - ¼Δt Δ_h) ρ¹ = (I + ¼Δt Δ_h) ρ⁰ + noise.
        let g = Grid::line(8).unwrap();
        let dt = 0.05;
        let rho0 = interpolate_fn(&g, |x| 1.0 + 0.3 * (2.0 * x).sin() + 0.1 * x.cos());
        let dw: Vec<f64> = (0..8).map(|i| 0.01 * ((i * 7 % 5) as f64 - 2.0)).collect();
        let cfg = SchemeConfig::new(dt, Model::Nonlinear, 0).unwrap();
        let mut stepper = DkStepper::new(g, cfg, None).unwrap();
        let mut state = DkState::new(rho0.clone(), 50).unwrap();
        stepper.first_step_with_increment(&mut state, &dw).unwrap();

        let h = g.spacing();
        let noise = assemble_noise(&rho0, 50, &GridFunction::new(g, dw).unwrap()).unwrap();
        let lap0 = crate::grid::apply_laplacian(&rho0);
        let mut a = vec![vec![0.0; 9]; 8];
        for i in 0..8 {
            let c = 0.25 * dt / (h * h);
            a[i][i] = 1.0 + 2.0 * c;
            a[i][(i + 1) % 8] -= c;
            a[i][(i + 7) % 8] -= c;
            a[i][8] = rho0.values()[i] + 0.25 * dt * lap0.values()[i] + noise.values()[i];
        }
        for col in 0..8 {
            let piv = (col..8)
                .max_by(|&p, &q| a[p][col].abs().total_cmp(&a[q][col].abs()))
                .unwrap();
            a.swap(col, piv);
            for row in 0..8 {
                if row != col {
                    let f = a[row][col] / a[col][col];
                    for k in col..9 {
                        a[row][k] -= f * a[col][k];
                    }
                }
            }
        }
        for i in 0..8 {
            assert!((a[i][8] / a[i][i] - state.rho().values()[i]).abs() < 1e-13);
        }
        assert_eq!(state.noise_prev(), &noise);
        assert_eq!(state.rho_prev(), &rho0);
    }

    #[test]
    fn constant_density_is_stationary_without_noise() {
        let g = Grid::line(16).unwrap();
        let mut stepper = DkStepper::new(g, deterministic(0.001), None).unwrap();
        let mut state = DkState::new(GridFunction::constant(g, 0.7), 10).unwrap();
        for _ in 0..50 {
            stepper.step(&mut state, None).unwrap();
        }
        assert!(state.rho().values().iter().all(|v| (v - 0.7).abs() < 1e-14));
    }

    #[test]
    fn bdf2_temporal_order() {
        let g = Grid::line(32).unwrap();
        let cos = interpolate_fn(&g, f64::cos);
        let exact = discrete_forward_flow(&cos, 0.4).unwrap();
        let errs: Vec<f64> = [4e-3, 2e-3, 1e-3]
            .iter()
            .map(|&dt| {
                let cfg = deterministic(dt);
                let steps = cfg.steps_to(0.4).unwrap();
                let mut stepper = DkStepper::new(g, cfg, None).unwrap();
                let mut state = DkState::new(cos.clone(), 1).unwrap();
                for _ in 0..steps {
                    stepper.step(&mut state, None).unwrap();
                }
                state.rho().sub(&exact).unwrap().sup_norm()
            })
            .collect();
        for w in errs.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!((order - 2.0).abs() < 0.2, "order {order}, errors {errs:?}");
        }
    }

    #[test]
    fn literal_bdf2_uses_doubled_diffusion() {
        let g = Grid::line(16).unwrap();
        let cos = interpolate_fn(&g, f64::cos);
        let mut cfg = deterministic(0.01);
        cfg.paper_literal_bdf2 = true;
        let mut stepper = DkStepper::new(g, cfg, None).unwrap();
        let mut state = DkState::new(cos.clone(), 1).unwrap();
        stepper.step(&mut state, None).unwrap();
        let r1 = state.rho().values()[0] / cos.values()[0];
        stepper.step(&mut state, None).unwrap();
        let r2 = state.rho().values()[0] / cos.values()[0];
        let p = laplacian_symbol(&g).at(&[1]);
        let expect = (4.0 * r1 - 1.0) / 3.0 / (1.0 + 2.0 / 3.0 * 0.01 * 2.0 * p);
        assert!((r2 - expect).abs() < 1e-14);
    }

    #[test]
    fn noisy_trajectory_conserves_mass() {
        let g = Grid::line(64).unwrap();
        let placement = crate::particles::place_particles(&bump(), &g, 8211).unwrap();
        let cfg = SchemeConfig::new(0.001, Model::Nonlinear, 42).unwrap();
        let traj = run_trajectory(&placement, &cfg, &[0.0, 0.32, 0.4], 0).unwrap();
        assert_eq!(traj.snapshots.len(), 3);
        assert!(traj.monitor.mass_drift < 1e-10);
        assert!((traj.snapshots[2].1.mass() - 1.0).abs() < 1e-10);
        assert_eq!(traj.snapshots[0].1, *placement.matched_density());
        assert!(traj.snapshots[2].1 != traj.snapshots[1].1);
    }

    #[test]
    fn record_times_must_be_on_lattice() {
        let g = Grid::line(8).unwrap();
        let placement = crate::particles::place_particles(&bump(), &g, 100).unwrap();
        let cfg = SchemeConfig::new(0.001, Model::Nonlinear, 1).unwrap();
        assert!(matches!(
            run_trajectory(&placement, &cfg, &[0.0005], 0),
            Err(Error::OffLattice { .. })
        ));
        assert!(run_trajectory(&placement, &cfg, &[0.2, 0.1], 0).is_err());
        assert!(SchemeConfig::new(0.0, Model::Nonlinear, 1).is_err());
        let only_initial = run_trajectory(&placement, &cfg, &[0.0], 0).unwrap();
        assert_eq!(only_initial.monitor.sup_neg_norm, 0.0);
        assert_eq!(only_initial.snapshots[0].1, *placement.matched_density());
    }

    #[test]
    fn deterministic_trajectory_tracks_heat_flow() {
        let g = Grid::line(64).unwrap();
        let placement = crate::particles::place_particles(&bump(), &g, 8211).unwrap();
        let traj = run_trajectory(&placement, &deterministic(0.001), &[0.4], 0).unwrap();
        let exact = expected_dk(&placement, 0.4).unwrap();
        assert!(traj.snapshots[0].1.sub(&exact).unwrap().sup_norm() < 1e-5);
    }

    #[test]
    fn linearised_with_constant_mean_field() {
        let g = Grid::line(8).unwrap();
        let counts = vec![5; 8];
        let placement = InitialPlacement::from_counts(g, counts).unwrap();
        let mf = MeanField::compute(placement.matched_density(), 0.001, 3).unwrap();
        let c = placement.matched_density().values()[0];
        assert!(mf
            .amplitude(2)
            .unwrap()
            .iter()
            .all(|a| (a - c.sqrt()).abs() < 1e-14));
        let cfg = SchemeConfig::new(0.001, Model::Linearised, 3).unwrap();
        assert!(DkStepper::new(g, cfg.clone(), None).is_err());
        let traj = run_trajectory(&placement, &cfg, &[0.003], 0).unwrap();
        assert!(traj.monitor.mass_drift < 1e-12);
    }

    #[test]
    fn streams_differ_between_models_unless_shared() {
        let g = Grid::line(16).unwrap();
        let placement = crate::particles::place_particles(&bump(), &g, 1000).unwrap();
        let nl = SchemeConfig::new(0.001, Model::Nonlinear, 5).unwrap();
        let mut lin = nl.clone();
        lin.model = Model::Linearised;
        let a = run_trajectory(&placement, &nl, &[0.001], 0).unwrap();
        let b = run_trajectory(&placement, &lin, &[0.001], 0).unwrap();
        assert_ne!(a.snapshots[0].1, b.snapshots[0].1);
        lin.shared_noise_stream = true;
        let c = run_trajectory(&placement, &lin, &[0.001], 0).unwrap();
        // First step: amplitudes agree (ρ̄(0) = ρ(0)), so shared streams coincide.
        assert!(a.snapshots[0].1.sub(&c.snapshots[0].1).unwrap().sup_norm() < 1e-14);
    }

    #[test]
    fn negative_part_summary() {
        let g = Grid::line(64).unwrap();
        let mut m = TrajectoryMonitor::start(&GridFunction::constant(g, 1.0));
        let r = negative_part_report(&[m; 3], 1000, &g, 1.0, 3.0).unwrap();
        assert_eq!(r.mean_sup_neg_norm, 0.0);
        assert_eq!(r.fraction_negative, 0.0);
        assert!(r.scaling_regime);
        m.observe(&[-0.5; 64], g.spacing()).unwrap();
        let r = negative_part_report(
            &[m, TrajectoryMonitor::start(&GridFunction::constant(g, 1.0))],
            10,
            &g,
            1.0,
            3.0,
        )
        .unwrap();
        assert_eq!(r.fraction_negative, 0.5);
        assert!(r.max_sup_neg_norm > 0.0);
        // h = 0.098 < 10^{-1}? No: 10^{-1} = 0.1 > h.
        assert!(!r.scaling_regime);
        assert!(negative_part_report(&[], 10, &g, 1.0, 3.0).is_err());
    }

    #[test]
    fn monitor_csv() {
        let g = Grid::line(8).unwrap();
        let m = TrajectoryMonitor::start(&GridFunction::constant(g, 1.0));
        let mut out = Vec::new();
        write_monitor_csv(&[m], &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(
            text,
            "realization,sup_neg_norm,min_density,mass_drift\n0,0,1,0\n"
        );
    }
}
