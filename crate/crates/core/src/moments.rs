//! Monte Carlo estimation of centred product moments
//! `E[Π_m (A_m - E A_m)^{j_m}]` of paired observables, centred on exact
//! expectations, plus closed-form second-moment oracles.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;

use crate::dk::{DkRunner, MeanField, Model, SchemeConfig};
use crate::error::{Error, Result};
use crate::grid::{apply_gradient, inner_product, GridFunction, Stencil};
use crate::heat::{discrete_backward_flow, discrete_forward_flow};
use crate::particles::{
    expected_pairing, particle_moment_oracle, InitialPlacement, ParticleEnsemble,
};
use crate::stats::RunningMoments;
use crate::test_function::TestFunction;

/// Realizations per accumulation block. Blocks are reduced in index order, so
/// results do not depend on how blocks are scheduled across workers.
const BLOCK: u64 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Particles,
    /// Closed-form moments of the particle system; no sampling.
    ParticlesExact,
    Dk,
    DkLinearised,
    /// The Dean–Kawasaki scheme with the noise switched off.
    DkDeterministic,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Particles,
        ModelKind::ParticlesExact,
        ModelKind::Dk,
        ModelKind::DkLinearised,
        ModelKind::DkDeterministic,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            ModelKind::Particles => "particles",
            ModelKind::ParticlesExact => "particles-exact",
            ModelKind::Dk => "dk",
            ModelKind::DkLinearised => "dk-linearised",
            ModelKind::DkDeterministic => "dk-deterministic",
        }
    }

    fn scheme_model(self) -> Option<Model> {
        match self {
            ModelKind::Particles | ModelKind::ParticlesExact => None,
            ModelKind::Dk => Some(Model::Nonlinear),
            ModelKind::DkLinearised => Some(Model::Linearised),
            ModelKind::DkDeterministic => Some(Model::Deterministic),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|m| m.tag() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown model {s:?}")))
    }
}

/// One factor `(A - E A)^{exponent}` with `A` the pairing at `time`.
#[derive(Debug, Clone)]
pub struct Observable {
    pub time: f64,
    pub exponent: u32,
    pub phi: TestFunction,
}

#[derive(Debug, Clone)]
pub struct MomentSpec {
    entries: Vec<Observable>,
}

impl MomentSpec {
    pub fn new(entries: Vec<Observable>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidInput(
                "a moment needs at least one observable".into(),
            ));
        }
        if entries.iter().map(|e| e.exponent).sum::<u32>() == 0 {
            return Err(Error::InvalidInput(
                "total moment order must be at least 1".into(),
            ));
        }
        if let Some(e) = entries.iter().find(|e| !e.time.is_finite() || e.time < 0.0) {
            return Err(Error::NegativeSpan(e.time));
        }
        Ok(Self { entries })
    }

    /// The two-observable moment `(j1, j2)` at times `(t1, t2)`.
    pub fn pair(
        j1: u32,
        t1: f64,
        phi1: &TestFunction,
        j2: u32,
        t2: f64,
        phi2: &TestFunction,
    ) -> Result<Self> {
        Self::new(vec![
            Observable {
                time: t1,
                exponent: j1,
                phi: phi1.clone(),
            },
            Observable {
                time: t2,
                exponent: j2,
                phi: phi2.clone(),
            },
        ])
    }

    pub fn entries(&self) -> &[Observable] {
        &self.entries
    }

    pub fn order(&self) -> u32 {
        self.entries.iter().map(|e| e.exponent).sum()
    }

    pub fn exponents(&self) -> Vec<u32> {
        self.entries.iter().map(|e| e.exponent).collect()
    }

    pub fn times(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.time).collect()
    }

    pub fn same_as(&self, other: &MomentSpec) -> bool {
        self.entries.len() == other.entries.len()
            && self
                .entries
                .iter()
                .zip(&other.entries)
                .all(|(a, b)| a.time == b.time && a.exponent == b.exponent && a.phi.same_as(&b.phi))
    }
}

/// Shared inputs of a moment computation.
#[derive(Debug, Clone)]
pub struct MomentSetup {
    pub placement: InitialPlacement,
    pub dt: f64,
    pub seed: u64,
    /// Worker threads; 0 uses the global pool.
    pub workers: usize,
    pub paper_literal_bdf2: bool,
}

impl MomentSetup {
    pub fn new(placement: InitialPlacement, dt: f64, seed: u64) -> Self {
        Self {
            placement,
            dt,
            seed,
            workers: 0,
            paper_literal_bdf2: false,
        }
    }

    fn scheme(&self, model: Model) -> Result<SchemeConfig> {
        let mut cfg = SchemeConfig::new(self.dt, model, self.seed)?;
        cfg.paper_literal_bdf2 = self.paper_literal_bdf2;
        Ok(cfg)
    }
}

#[derive(Debug, Clone)]
pub struct MomentEstimate {
    pub model: ModelKind,
    pub spec: MomentSpec,
    pub mean: f64,
    pub stderr: f64,
    pub realizations: usize,
    pub h: f64,
    pub particles: usize,
}

/// Distinct `(time, φ)` pairings needed by a batch of specs.
struct Plan {
    times: Vec<f64>,
    /// `(time index, φ)` per distinct pairing.
    pairings: Vec<(usize, TestFunction)>,
    /// Per spec, per entry: pairing index.
    layout: Vec<Vec<usize>>,
    centers: Vec<f64>,
}

impl Plan {
    fn build(specs: &[MomentSpec]) -> Self {
        let mut times: Vec<f64> = specs.iter().flat_map(|s| s.times()).collect();
        times.sort_by(f64::total_cmp);
        times.dedup();
        let mut pairings: Vec<(usize, TestFunction)> = Vec::new();
        let layout = specs
            .iter()
            .map(|s| {
                s.entries
                    .iter()
                    .map(|e| {
                        let ti = times
                            .iter()
                            .position(|&t| t == e.time)
                            .expect("collected above");
                        match pairings
                            .iter()
                            .position(|(t, p)| *t == ti && p.same_as(&e.phi))
                        {
                            Some(i) => i,
                            None => {
                                pairings.push((ti, e.phi.clone()));
                                pairings.len() - 1
                            }
                        }
                    })
                    .collect()
            })
            .collect();
        Self {
            times,
            pairings,
            layout,
            centers: Vec::new(),
        }
    }

    fn statistics(&self, specs: &[MomentSpec], values: &[f64], out: &mut [f64]) {
        for ((spec, idx), o) in specs.iter().zip(&self.layout).zip(out.iter_mut()) {
            *o = spec
                .entries
                .iter()
                .zip(idx)
                .map(|(e, &i)| (values[i] - self.centers[i]).powi(e.exponent as i32))
                .product();
        }
    }
}

pub fn estimate_moment(
    setup: &MomentSetup,
    model: ModelKind,
    spec: &MomentSpec,
    realizations: usize,
) -> Result<MomentEstimate> {
    Ok(estimate_moments(setup, model, std::slice::from_ref(spec), realizations)?.remove(0))
}

/// Closed-form particle moment for specs of total order at most 3.
pub fn exact_particle_moment(placement: &InitialPlacement, spec: &MomentSpec) -> Result<f64> {
    let factors: Vec<(&TestFunction, f64)> = spec
        .entries()
        .iter()
        .flat_map(|e| std::iter::repeat_n((&e.phi, e.time), e.exponent as usize))
        .collect();
    particle_moment_oracle(placement, &factors)
}

/// Estimate several moments from the same set of trajectories.
/// `ParticlesExact` returns closed forms with zero standard error.
pub fn estimate_moments(
    setup: &MomentSetup,
    model: ModelKind,
    specs: &[MomentSpec],
    realizations: usize,
) -> Result<Vec<MomentEstimate>> {
    if realizations < 2 {
        return Err(Error::InvalidInput(format!(
            "at least 2 realizations are needed for a standard error, got {realizations}"
        )));
    }
    if specs.is_empty() {
        return Ok(Vec::new());
    }
    if model == ModelKind::ParticlesExact {
        return specs
            .iter()
            .map(|spec| {
                Ok(MomentEstimate {
                    model,
                    spec: spec.clone(),
                    mean: exact_particle_moment(&setup.placement, spec)?,
                    stderr: 0.0,
                    realizations: 0,
                    h: setup.placement.grid().spacing(),
                    particles: setup.placement.particles(),
                })
            })
            .collect();
    }
    let mut plan = Plan::build(specs);
    let placement = &setup.placement;
    let grid = *placement.grid();
    let accumulators = match model.scheme_model() {
        None => {
            plan.centers = plan
                .pairings
                .iter()
                .map(|(ti, phi)| expected_pairing(placement, phi, plan.times[*ti]))
                .collect::<Result<_>>()?;
            run_blocks(
                setup.workers,
                realizations,
                specs.len(),
                || Ok(()),
                |_, r, vals| {
                    let mut ens = ParticleEnsemble::seeded(placement, setup.seed, r);
                    for (ti, &t) in plan.times.iter().enumerate() {
                        ens.advance((t - ens.clock()).max(0.0))?;
                        for (k, (pt, phi)) in plan.pairings.iter().enumerate() {
                            if *pt == ti {
                                vals[k] = ens.pair_with(phi);
                            }
                        }
                    }
                    Ok(())
                },
                &plan,
                specs,
            )?
        }
        Some(scheme_model) => {
            let cfg = setup.scheme(scheme_model)?;
            let steps: Vec<usize> = plan
                .times
                .iter()
                .map(|&t| cfg.steps_to(t))
                .collect::<Result<_>>()?;
            let last = *steps.last().expect("specs are non-empty");
            let nodal: Vec<GridFunction> = plan
                .pairings
                .iter()
                .map(|(_, phi)| phi.interpolate(&grid))
                .collect::<Result<_>>()?;
            let h = grid.spacing();
            let pair_steps: Vec<usize> = plan.pairings.iter().map(|(ti, _)| steps[*ti]).collect();
            let pairing = |rho: &GridFunction, k: usize| -> f64 {
                h * rho
                    .values()
                    .iter()
                    .zip(nodal[k].values())
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
            };
            // The scheme is linear with mean-zero noise, so its expectation is
            // the noise-free trajectory.
            let mut mean_cfg = cfg.clone();
            mean_cfg.model = Model::Deterministic;
            plan.centers = vec![0.0; plan.pairings.len()];
            DkRunner::with_mean_field(placement, mean_cfg, None)?.run(0, last, |m, rho| {
                for (k, &s) in pair_steps.iter().enumerate() {
                    if s == m {
                        plan.centers[k] = pairing(rho, k);
                    }
                }
            })?;
            let mean_field = if scheme_model == Model::Linearised {
                Some(Arc::new(MeanField::compute(
                    placement.matched_density(),
                    cfg.dt,
                    last,
                )?))
            } else {
                None
            };
            run_blocks(
                setup.workers,
                realizations,
                specs.len(),
                || DkRunner::with_mean_field(placement, cfg.clone(), mean_field.clone()),
                |runner, r, vals| {
                    runner.run(r, last, |m, rho| {
                        for (k, &s) in pair_steps.iter().enumerate() {
                            if s == m {
                                vals[k] = pairing(rho, k);
                            }
                        }
                    })?;
                    Ok(())
                },
                &plan,
                specs,
            )?
        }
    };
    Ok(specs
        .iter()
        .zip(accumulators)
        .map(|(spec, acc)| MomentEstimate {
            model,
            spec: spec.clone(),
            mean: acc.mean(),
            stderr: acc.stderr(),
            realizations,
            h: grid.spacing(),
            particles: placement.particles(),
        })
        .collect())
}

/// Run realizations `0..m` in fixed blocks on `workers` threads and reduce the
/// per-spec statistics in block order.
fn run_blocks<W, I, F>(
    workers: usize,
    m: usize,
    n_specs: usize,
    init: I,
    realize: F,
    plan: &Plan,
    specs: &[MomentSpec],
) -> Result<Vec<RunningMoments>>
where
    I: Fn() -> Result<W> + Sync,
    F: Fn(&mut W, u64, &mut [f64]) -> Result<()> + Sync,
{
    let m = m as u64;
    let blocks = m.div_ceil(BLOCK);
    let work = || -> Result<Vec<Vec<RunningMoments>>> {
        (0..blocks)
            .into_par_iter()
            .map_init(
                || init().map(|w| (w, vec![0.0; plan.pairings.len()], vec![0.0; n_specs])),
                |state, b| {
                    let (worker, vals, stats) = state
                        .as_mut()
                        .map_err(|e| Error::InvalidInput(e.to_string()))?;
                    let mut acc = vec![RunningMoments::new(); n_specs];
                    for r in b * BLOCK..((b + 1) * BLOCK).min(m) {
                        realize(worker, r, vals)?;
                        plan.statistics(specs, vals, stats);
                        for (a, &s) in acc.iter_mut().zip(stats.iter()) {
                            a.push(s);
                        }
                    }
                    Ok(acc)
                },
            )
            .collect()
    };
    let partials = if workers == 0 {
        work()?
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::InvalidInput(e.to_string()))?
            .install(work)?
    };
    let mut total = vec![RunningMoments::new(); n_specs];
    for block in &partials {
        for (t, b) in total.iter_mut().zip(block) {
            t.merge(b);
        }
    }
    Ok(total)
}

/// `N^{-1} ∫_0^{min(t1,t2)} (ρ̄_h(t), ∂_hφ₁^t ∂_hφ₂^t)_h dt` with
/// `φ_i^t = P_h^{t_i - t} I_hφ_i`, the covariance of the two centred pairings
/// when `ρ_h⁺` is replaced by its mean. Composite Simpson on the `dt` lattice.
pub fn dk_covariance_oracle(
    placement: &InitialPlacement,
    phi1: &TestFunction,
    t1: f64,
    phi2: &TestFunction,
    t2: f64,
    dt: f64,
) -> Result<f64> {
    let cfg = SchemeConfig::new(dt, Model::Deterministic, 0)?;
    let s = t1.min(t2);
    let n = cfg.steps_to(s)?;
    cfg.steps_to(t1.max(t2))?;
    let grid = *placement.grid();
    let stencil = Stencil::centered_first();
    let (p1, p2) = (phi1.interpolate(&grid)?, phi2.interpolate(&grid)?);
    let integrand = |k: usize| -> Result<f64> {
        let t = k as f64 * dt;
        let rho = discrete_forward_flow(placement.matched_density(), t)?.map(|v| v.max(0.0));
        let g1 = apply_gradient(&stencil, &discrete_backward_flow(&p1, t1 - t)?)?.remove(0);
        let g2 = apply_gradient(&stencil, &discrete_backward_flow(&p2, t2 - t)?)?.remove(0);
        inner_product(&rho, &g1.mul(&g2)?)
    };
    let f: Vec<f64> = (0..=n).map(integrand).collect::<Result<_>>()?;
    Ok(composite_simpson(&f, dt) / placement.particles() as f64)
}

/// Second moment `(2, 0)` of a single pairing at time `t`.
pub fn dk_second_moment_oracle(
    placement: &InitialPlacement,
    phi: &TestFunction,
    t: f64,
    dt: f64,
) -> Result<f64> {
    dk_covariance_oracle(placement, phi, t, phi, t, dt)
}

/// Simpson's rule on equally spaced samples, closing with the 3/8 rule on the
/// last three intervals when their number is odd.
pub fn composite_simpson(f: &[f64], dx: f64) -> f64 {
    let n = f.len().saturating_sub(1);
    match n {
        0 => 0.0,
        1 => 0.5 * dx * (f[0] + f[1]),
        _ => {
            let even = if n.is_multiple_of(2) { n } else { n - 3 };
            let mut sum = 0.0;
            for i in (0..even).step_by(2) {
                sum += dx / 3.0 * (f[i] + 4.0 * f[i + 1] + f[i + 2]);
            }
            if even < n {
                let i = even;
                sum += 3.0 * dx / 8.0 * (f[i] + 3.0 * f[i + 1] + 3.0 * f[i + 2] + f[i + 3]);
            }
            sum
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentDifference {
    pub diff: f64,
    pub combined_stderr: f64,
    pub significant: bool,
}

/// `|mean_a - mean_b|` with `√(se_a² + se_b²)`; significant above 3 combined errors.
pub fn moment_difference(a: &MomentEstimate, b: &MomentEstimate) -> Result<MomentDifference> {
    if !a.spec.same_as(&b.spec) {
        return Err(Error::SpecMismatch(format!(
            "exponents {:?} at {:?} vs {:?} at {:?}",
            a.spec.exponents(),
            a.spec.times(),
            b.spec.exponents(),
            b.spec.times()
        )));
    }
    let diff = (a.mean - b.mean).abs();
    let combined_stderr = a.stderr.hypot(b.stderr);
    Ok(MomentDifference {
        diff,
        combined_stderr,
        significant: diff > 3.0 * combined_stderr,
    })
}
