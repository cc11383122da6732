//! Exact simulation of independent Brownian particles on the torus and the
//! closed-form expectations of their empirical-measure pairings.

use std::io::Write;

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::fmt::g17;
use crate::grid::{Grid, GridFunction};
use crate::heat::continuous_backward_flow;
use crate::rng::{StreamKey, Subsystem};
use crate::test_function::{wrap_angle, TestFunction};

/// Initial particle counts per grid node and the matching discrete density.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialPlacement {
    grid: Grid,
    counts: Vec<usize>,
    particles: usize,
    matched_density: GridFunction,
}

impl InitialPlacement {
    /// Build from explicit counts; `ρ_{0,h}(x) = counts(x) / (N h^d)`.
    pub fn from_counts(grid: Grid, counts: Vec<usize>) -> Result<Self> {
        if counts.len() != grid.len() {
            return Err(Error::InvalidInput(format!(
                "expected {} counts, got {}",
                grid.len(),
                counts.len()
            )));
        }
        let particles: usize = counts.iter().sum();
        if particles == 0 {
            return Err(Error::InvalidInput(
                "placement needs at least one particle".into(),
            ));
        }
        let scale = 1.0 / (particles as f64 * grid.cell_volume());
        let matched_density =
            GridFunction::new(grid, counts.iter().map(|&c| c as f64 * scale).collect())?;
        Ok(Self {
            grid,
            counts,
            particles,
            matched_density,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn particles(&self) -> usize {
        self.particles
    }

    pub fn matched_density(&self) -> &GridFunction {
        &self.matched_density
    }

    /// `⟨μ₀^N, η⟩ = N^{-1} Σ_x counts(x) η(x)` for values `η` at the nodes.
    pub fn pair_nodal(&self, eta: &GridFunction) -> f64 {
        self.counts
            .iter()
            .zip(eta.values())
            .map(|(&c, &v)| c as f64 * v)
            .sum::<f64>()
            / self.particles as f64
    }
}

/// Apportion `n` particles to the nodes proportionally to `rho0(node)` by the
/// largest-remainder rule (ties go to the lower node index). Nodes left empty
/// take one particle from the fullest node, so every node is occupied.
pub fn place_particles(rho0: &TestFunction, grid: &Grid, n: usize) -> Result<InitialPlacement> {
    let weights = rho0.interpolate(grid)?;
    if let Some(i) = weights.values().iter().position(|&w| w <= 0.0) {
        return Err(Error::InvalidInput(format!(
            "initial density must be positive at every node (node {i})"
        )));
    }
    let nodes = grid.len();
    if n < nodes {
        return Err(Error::Placement {
            particles: n,
            nodes,
        });
    }
    let total: f64 = weights.values().iter().sum();
    let quotas: Vec<f64> = weights
        .values()
        .iter()
        .map(|w| n as f64 * w / total)
        .collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..nodes).collect();
    // Stable sort keeps lower indices first among equal remainders.
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - counts[a] as f64;
        let rb = quotas[b] - counts[b] as f64;
        rb.partial_cmp(&ra).expect("finite quotas")
    });
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    while let Some(empty) = counts.iter().position(|&c| c == 0) {
        let fullest = (0..nodes)
            .max_by(|&a, &b| counts[a].cmp(&counts[b]).then(b.cmp(&a)))
            .expect("nonempty grid");
        counts[fullest] -= 1;
        counts[empty] += 1;
    }
    InitialPlacement::from_counts(*grid, counts)
}

/// `N` Brownian particles on `[-π, π)^d`, driven by their own random stream.
#[derive(Debug, Clone)]
pub struct ParticleEnsemble {
    dim: usize,
    positions: Vec<f64>,
    clock: f64,
    rng: ChaCha8Rng,
}

impl ParticleEnsemble {
    /// Particles at the nodes of `placement`, in node order.
    pub fn from_placement(placement: &InitialPlacement, key: StreamKey) -> Self {
        let grid = placement.grid;
        let dim = grid.dim();
        let mut positions = Vec::with_capacity(placement.particles * dim);
        for (node, &c) in placement.counts.iter().enumerate() {
            let x = grid.node(node);
            for _ in 0..c {
                positions.extend_from_slice(&x[..dim]);
            }
        }
        Self {
            dim,
            positions,
            clock: 0.0,
            rng: key.rng(),
        }
    }

    /// Particles at arbitrary positions (wrapped into the torus).
    pub fn from_positions(dim: usize, positions: Vec<f64>, key: StreamKey) -> Result<Self> {
        if dim == 0 || positions.is_empty() || !positions.len().is_multiple_of(dim) {
            return Err(Error::InvalidInput(
                "positions must hold N >= 1 points of dimension d".into(),
            ));
        }
        Ok(Self {
            dim,
            positions: positions.into_iter().map(wrap_angle).collect(),
            clock: 0.0,
            rng: key.rng(),
        })
    }

    /// Convenience constructor keyed by `(seed, realization)`.
    pub fn seeded(placement: &InitialPlacement, seed: u64, realization: u64) -> Self {
        Self::from_placement(
            placement,
            StreamKey::new(seed, realization, Subsystem::Particles),
        )
    }

    pub fn len(&self) -> usize {
        self.positions.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    /// Add an independent `N(0, dt)` increment to every coordinate and wrap.
    /// Exact in law for any `dt`; `dt = 0` leaves the ensemble untouched.
    pub fn advance(&mut self, dt: f64) -> Result<()> {
        if !dt.is_finite() || dt < 0.0 {
            return Err(Error::InvalidTimestep(dt));
        }
        if dt == 0.0 {
            return Ok(());
        }
        let sd = dt.sqrt();
        for x in self.positions.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut self.rng);
            *x = wrap_angle(*x + sd * z);
        }
        self.clock += dt;
        Ok(())
    }

    /// Move particle `k` along axis 0 by a prescribed increment.
    pub fn displace(&mut self, k: usize, increment: f64) {
        let i = k * self.dim;
        self.positions[i] = wrap_angle(self.positions[i] + increment);
    }

    /// `⟨μ^N, φ⟩ = N^{-1} Σ_k φ(w_k)` (one-dimensional).
    pub fn pair_with(&self, phi: &TestFunction) -> f64 {
        debug_assert_eq!(self.dim, 1);
        self.positions
            .iter()
            .map(|&x| phi.eval_tabulated(x))
            .sum::<f64>()
            / self.len() as f64
    }

    /// Rows of the snapshot CSV `realization,time,particle,x`.
    pub fn write_snapshot<W: Write>(&self, realization: u64, mut w: W) -> Result<()> {
        for (k, x) in self.positions.chunks(self.dim).enumerate() {
            writeln!(w, "{},{},{},{}", realization, g17(self.clock), k, g17(x[0]))?;
        }
        Ok(())
    }
}

pub const SNAPSHOT_HEADER: &str = "realization,time,particle,x";

fn check_time(t: f64) -> Result<()> {
    if !t.is_finite() || t < 0.0 {
        return Err(Error::NegativeSpan(t));
    }
    Ok(())
}

/// `E⟨μ_t^N, φ⟩ = ⟨μ₀^N, P^t φ⟩`.
pub fn expected_pairing(placement: &InitialPlacement, phi: &TestFunction, t: f64) -> Result<f64> {
    check_time(t)?;
    let flowed = continuous_backward_flow(phi, t)?;
    Ok(placement.pair_nodal(&flowed.series_on(&placement.grid)?))
}

/// `Var⟨μ_t^N, φ⟩ = N^{-2} Σ_k [P^t(φ²)(w_k) - (P^tφ(w_k))²]`, exact for
/// independent particles started from deterministic positions.
pub fn particle_variance_oracle(
    placement: &InitialPlacement,
    phi: &TestFunction,
    t: f64,
) -> Result<f64> {
    particle_covariance_oracle(placement, phi, t, phi, t)
}

/// `Cov(⟨μ_{t1}^N, φ₁⟩, ⟨μ_{t2}^N, φ₂⟩)` for any pair of times.
///
/// With `s = min(t1, t2)` the later observable is first pulled back to time
/// `s` by the heat semigroup, multiplied by the earlier one, and the product
/// flowed back to time zero.
pub fn particle_covariance_oracle(
    placement: &InitialPlacement,
    phi1: &TestFunction,
    t1: f64,
    phi2: &TestFunction,
    t2: f64,
) -> Result<f64> {
    check_time(t1)?;
    check_time(t2)?;
    let ((early, te), (late, tl)) = if t1 <= t2 {
        ((phi1, t1), (phi2, t2))
    } else {
        ((phi2, t2), (phi1, t1))
    };
    let pulled = continuous_backward_flow(late, tl - te)?;
    let joint = continuous_backward_flow(&early.product(&pulled), te)?;
    let grid = placement.grid;
    let second = joint.series_on(&grid)?;
    let m1 = continuous_backward_flow(phi1, t1)?.series_on(&grid)?;
    let m2 = continuous_backward_flow(phi2, t2)?.series_on(&grid)?;
    let per_node = GridFunction::new(
        grid,
        second
            .values()
            .iter()
            .zip(m1.values().iter().zip(m2.values()))
            .map(|(s, (a, b))| s - a * b)
            .collect(),
    )?;
    Ok(placement.pair_nodal(&per_node) / placement.particles as f64)
}

/// `E[Π_i f_i(w(t_i))]` per start node, by nested backward flows over the
/// time-sorted factors.
fn joint_expectation(grid: &Grid, factors: &[(&TestFunction, f64)]) -> Result<GridFunction> {
    let mut sorted: Vec<(&TestFunction, f64)> = factors.to_vec();
    sorted.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (&(last, t_last), rest) = sorted.split_last().expect("at least one factor");
    let mut acc = last.clone();
    let mut t = t_last;
    for &(f, s) in rest.iter().rev() {
        acc = f.product(&continuous_backward_flow(&acc, t - s)?);
        t = s;
    }
    continuous_backward_flow(&acc, t)?.series_on(grid)
}

/// Exact centred moment `E[Π_i (X_i - E X_i)]` of pairings
/// `X_i = ⟨μ_{t_i}^N, f_i⟩`, for one to three factors.
///
/// Independent particles contribute their own mixed central moments, so a
/// moment of order `k ≤ 3` is `N^{1-k}` times the average per-particle moment.
pub fn particle_moment_oracle(
    placement: &InitialPlacement,
    factors: &[(&TestFunction, f64)],
) -> Result<f64> {
    for &(_, t) in factors {
        check_time(t)?;
    }
    let grid = placement.grid;
    let mean = |i: usize| joint_expectation(&grid, &factors[i..=i]);
    let per_node = match factors.len() {
        1 => return Ok(0.0),
        2 => {
            let (ab, a, b) = (joint_expectation(&grid, factors)?, mean(0)?, mean(1)?);
            combine(&[&ab, &a, &b], |v| v[0] - v[1] * v[2])
        }
        3 => {
            let abc = joint_expectation(&grid, factors)?;
            let pair = |i: usize, j: usize| joint_expectation(&grid, &[factors[i], factors[j]]);
            let (bc, ac, ab) = (pair(1, 2)?, pair(0, 2)?, pair(0, 1)?);
            let (a, b, c) = (mean(0)?, mean(1)?, mean(2)?);
            combine(&[&abc, &bc, &ac, &ab, &a, &b, &c], |v| {
                v[0] - v[4] * v[1] - v[5] * v[2] - v[6] * v[3] + 2.0 * v[4] * v[5] * v[6]
            })
        }
        k => {
            return Err(Error::InvalidInput(format!(
                "exact particle moments are available up to order 3, got {k}"
            )))
        }
    };
    let n = placement.particles as f64;
    let scale = n.powi(factors.len() as i32 - 1);
    Ok(placement.pair_nodal(&GridFunction::new(grid, per_node)?) / scale)
}

fn combine(fs: &[&GridFunction], f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut v = vec![0.0; fs.len()];
    (0..fs[0].values().len())
        .map(|i| {
            for (slot, g) in v.iter_mut().zip(fs) {
                *slot = g.values()[i];
            }
            f(&v)
        })
        .collect()
}
