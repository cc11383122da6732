//! Sweeps over `h` or `N`, convergence reports with fitted log-log slopes,
//! negative-part studies and the figure presets.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::config::{ExperimentConfig, Scale};
use crate::dk::{
    expected_dk, negative_part_report, run_trajectory, write_monitor_csv, DkRunner, Model,
    NegativePartReport, SchemeConfig, TrajectoryMonitor,
};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::heat::{backward_flow_error, gradient_product_error};
use crate::moments::{
    estimate_moments, moment_difference, ModelKind, MomentEstimate, MomentSetup, MomentSpec,
};
use crate::particles::{place_particles, ParticleEnsemble, SNAPSHOT_HEADER};
use crate::profiles::Profile;
use crate::report::{
    parse_convergence_csv, write_convergence_csv, write_moment_csv, write_slope_csv, Axis,
    ConvergenceRow, FitStatus, MomentRow, NegativePartRow, SlopeRow,
};
use crate::stats::{fit_loglog, SlopeFit};
use crate::svg::convergence_svg;
use crate::test_function::TestFunction;

/// Rows of one moment for one model (against a reference, or alone) along a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub axis: Axis,
    pub j1: u32,
    pub j2: u32,
    pub model: ModelKind,
    pub reference: Option<ModelKind>,
    pub rows: Vec<ConvergenceRow>,
    /// Fit over significant rows; `None` when fewer than three are significant.
    pub fit: Option<SlopeFit>,
}

impl ConvergenceReport {
    pub fn from_rows(rows: Vec<ConvergenceRow>) -> Result<Self> {
        let first = *rows
            .first()
            .ok_or_else(|| Error::InvalidInput("a convergence report needs rows".into()))?;
        if rows.iter().any(|r| {
            r.axis != first.axis
                || r.j1 != first.j1
                || r.j2 != first.j2
                || r.model != first.model
                || r.reference != first.reference
        }) {
            return Err(Error::InvalidInput(
                "convergence rows mix different series".into(),
            ));
        }
        let (xs, ys): (Vec<f64>, Vec<f64>) = rows
            .iter()
            .filter(|r| r.significant)
            .map(|r| (r.value, r.diff))
            .unzip();
        let fit = if xs.len() >= 3 {
            Some(fit_loglog(&xs, &ys)?)
        } else {
            None
        };
        Ok(Self {
            axis: first.axis,
            j1: first.j1,
            j2: first.j2,
            model: first.model,
            reference: first.reference,
            rows,
            fit,
        })
    }

    pub fn significant_rows(&self) -> usize {
        self.rows.iter().filter(|r| r.significant).count()
    }

    pub fn status(&self) -> FitStatus {
        if self.fit.is_some() {
            FitStatus::Fitted
        } else {
            FitStatus::NoiseLimited
        }
    }

    pub fn slope(&self) -> Option<f64> {
        self.fit.map(|f| f.slope)
    }

    pub fn slope_row(&self) -> SlopeRow {
        SlopeRow {
            axis: self.axis,
            j1: self.j1,
            j2: self.j2,
            model: self.model,
            reference: self.reference,
            rows: self.rows.len(),
            significant_rows: self.significant_rows(),
            slope: self.fit.map(|f| f.slope),
            half_width: self.fit.map(|f| f.half_width),
            status: self.status(),
        }
    }
}

/// Group flat rows into reports, keeping first-appearance order.
pub fn reports_from_rows(rows: &[ConvergenceRow]) -> Result<Vec<ConvergenceReport>> {
    let mut groups: Vec<Vec<ConvergenceRow>> = Vec::new();
    for r in rows {
        match groups.iter_mut().find(|g| {
            let f = &g[0];
            f.axis == r.axis
                && f.j1 == r.j1
                && f.j2 == r.j2
                && f.model == r.model
                && f.reference == r.reference
        }) {
            Some(g) => g.push(*r),
            None => groups.push(vec![*r]),
        }
    }
    groups
        .into_iter()
        .map(ConvergenceReport::from_rows)
        .collect()
}

/// Everything a moment sweep needs apart from the sweep points.
#[derive(Debug, Clone)]
pub struct SweepPlan {
    pub profile: Profile,
    pub phi1: TestFunction,
    pub phi2: TestFunction,
    pub t1: f64,
    pub t2: f64,
    pub moments: Vec<(u32, u32)>,
    pub models: Vec<ModelKind>,
    pub dt: f64,
    pub realizations: usize,
    pub seed: u64,
    pub workers: usize,
    pub paper_literal_bdf2: bool,
}

impl SweepPlan {
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        let diagnostics = cfg.validate();
        if let Some(e) = diagnostics.errors().next() {
            return Err(Error::InvalidInput(e.message.clone()));
        }
        let t1 = cfg.times[0];
        let t2 = cfg.times.get(1).copied().unwrap_or(t1);
        let (phi1, phi2) = cfg.rho0.observables(t1, cfg.normalize_l2)?;
        Ok(Self {
            profile: cfg.rho0,
            phi1,
            phi2,
            t1,
            t2,
            moments: cfg.moments.clone(),
            models: cfg.models.clone(),
            dt: cfg.dt,
            realizations: cfg.m,
            seed: cfg.seed,
            workers: cfg.workers,
            paper_literal_bdf2: cfg.paper_literal_bdf2,
        })
    }

    pub fn specs(&self) -> Result<Vec<MomentSpec>> {
        self.moments
            .iter()
            .map(|&(j1, j2)| MomentSpec::pair(j1, self.t1, &self.phi1, j2, self.t2, &self.phi2))
            .collect()
    }

    fn setup(&self, l: usize, n: usize) -> Result<MomentSetup> {
        let grid = Grid::line(l)?;
        let placement = place_particles(&self.profile.test_function(), &grid, n)?;
        let mut setup = MomentSetup::new(placement, self.dt, self.seed);
        setup.workers = self.workers;
        setup.paper_literal_bdf2 = self.paper_literal_bdf2;
        Ok(setup)
    }

    /// Estimates for every model at one `(L, N)` point.
    pub fn estimate_point(&self, l: usize, n: usize) -> Result<Vec<MomentEstimate>> {
        let setup = self.setup(l, n)?;
        let specs = self.specs()?;
        let mut out = Vec::new();
        for &model in &self.models {
            out.extend(estimate_moments(&setup, model, &specs, self.realizations)?);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub estimates: Vec<MomentEstimate>,
    /// `|M^model - M^ref|` per moment, with the exact particle moments as
    /// reference when selected and the sampled ones otherwise.
    pub differences: Vec<ConvergenceReport>,
    /// `|M^model|` per moment and model.
    pub magnitudes: Vec<ConvergenceReport>,
}

impl SweepOutcome {
    pub fn moment_rows(&self) -> Result<Vec<MomentRow>> {
        self.estimates
            .iter()
            .map(MomentRow::from_estimate)
            .collect()
    }

    pub fn convergence_rows(&self) -> Vec<ConvergenceRow> {
        self.differences
            .iter()
            .chain(&self.magnitudes)
            .flat_map(|r| r.rows.iter().copied())
            .collect()
    }

    pub fn slope_rows(&self) -> Vec<SlopeRow> {
        self.differences
            .iter()
            .chain(&self.magnitudes)
            .map(ConvergenceReport::slope_row)
            .collect()
    }

    pub fn difference(&self, j1: u32, j2: u32, model: ModelKind) -> Option<&ConvergenceReport> {
        self.differences
            .iter()
            .find(|r| r.j1 == j1 && r.j2 == j2 && r.model == model)
    }

    pub fn magnitude(&self, j1: u32, j2: u32, model: ModelKind) -> Option<&ConvergenceReport> {
        self.magnitudes
            .iter()
            .find(|r| r.j1 == j1 && r.j2 == j2 && r.model == model)
    }
}

/// Run the plan at each `(L, N)` point, sorted by the swept quantity.
pub fn sweep(plan: &SweepPlan, axis: Axis, points: &[(usize, usize)]) -> Result<SweepOutcome> {
    sweep_with_progress(plan, axis, points, |_| {})
}

pub fn sweep_with_progress(
    plan: &SweepPlan,
    axis: Axis,
    points: &[(usize, usize)],
    mut progress: impl FnMut(&str),
) -> Result<SweepOutcome> {
    if points.is_empty() {
        return Err(Error::InvalidInput(
            "a sweep needs at least one point".into(),
        ));
    }
    let value = |&(l, n): &(usize, usize)| -> Result<f64> {
        Ok(match axis {
            Axis::H => Grid::line(l)?.spacing(),
            Axis::N => n as f64,
        })
    };
    let values: Vec<f64> = points.iter().map(value).collect::<Result<_>>()?;
    if values.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidInput("sweep values must be distinct".into()));
    }
    if !(values.windows(2).all(|w| w[0] < w[1]) || values.windows(2).all(|w| w[0] > w[1])) {
        return Err(Error::InvalidInput("sweep values must be sorted".into()));
    }
    for &(l, n) in points {
        if n < l {
            return Err(Error::Placement {
                particles: n,
                nodes: l,
            });
        }
    }
    let mut estimates = Vec::new();
    let mut per_point = Vec::new();
    for (&(l, n), &v) in points.iter().zip(&values) {
        progress(&format!("L = {l}, N = {n}"));
        let ests = plan.estimate_point(l, n)?;
        per_point.push((v, ests.clone()));
        estimates.extend(ests);
    }
    let mut difference_rows = Vec::new();
    let mut magnitude_rows = Vec::new();
    let find =
        |ests: &[MomentEstimate], model: ModelKind, j: (u32, u32)| -> Option<MomentEstimate> {
            ests.iter()
                .find(|e| e.model == model && e.spec.exponents() == [j.0, j.1])
                .cloned()
        };
    let reference_model = if plan.models.contains(&ModelKind::ParticlesExact) {
        ModelKind::ParticlesExact
    } else {
        ModelKind::Particles
    };
    for &j in &plan.moments {
        for &model in &plan.models {
            for (v, ests) in &per_point {
                let est = find(ests, model, j).expect("estimated above");
                magnitude_rows.push(ConvergenceRow {
                    axis,
                    value: *v,
                    j1: j.0,
                    j2: j.1,
                    model,
                    reference: None,
                    diff: est.mean.abs(),
                    stderr: est.stderr,
                    significant: est.mean.abs() > 3.0 * est.stderr,
                });
                if model == reference_model {
                    continue;
                }
                if let Some(reference) = find(ests, reference_model, j) {
                    let d = moment_difference(&est, &reference)?;
                    difference_rows.push(ConvergenceRow {
                        axis,
                        value: *v,
                        j1: j.0,
                        j2: j.1,
                        model,
                        reference: Some(reference_model),
                        diff: d.diff,
                        stderr: d.combined_stderr,
                        significant: d.significant,
                    });
                }
            }
        }
    }
    Ok(SweepOutcome {
        estimates,
        differences: reports_from_rows(&difference_rows)?,
        magnitudes: reports_from_rows(&magnitude_rows)?,
    })
}

/// Deterministic discretisation errors at `h = 2π/L`: the backward heat flow
/// error and the gradient-product error for `(φ, φ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateStudy {
    pub h: Vec<f64>,
    pub flow_error: Vec<f64>,
    pub gradient_error: Vec<f64>,
    pub flow_fit: SlopeFit,
    pub gradient_fit: SlopeFit,
}

pub fn deterministic_rates(phi: &TestFunction, z: f64, ls: &[usize]) -> Result<RateStudy> {
    let mut h = Vec::new();
    let mut flow_error = Vec::new();
    let mut gradient_error = Vec::new();
    for &l in ls {
        let grid = Grid::line(l)?;
        h.push(grid.spacing());
        flow_error.push(backward_flow_error(phi, &grid, z)?);
        gradient_error.push(gradient_product_error(phi, phi, &grid, z)?);
    }
    Ok(RateStudy {
        flow_fit: fit_loglog(&h, &flow_error)?,
        gradient_fit: fit_loglog(&h, &gradient_error)?,
        h,
        flow_error,
        gradient_error,
    })
}

/// Shared settings of a negative-part study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonitorPlan {
    pub profile: Profile,
    pub l: usize,
    pub dt: f64,
    pub t: f64,
    pub realizations: usize,
    pub seed: u64,
    pub workers: usize,
}

/// Monitors of the nonlinear trajectories of `plan` with `n` particles.
pub fn monitor_realizations(plan: &MonitorPlan, n: usize) -> Result<Vec<TrajectoryMonitor>> {
    let grid = Grid::line(plan.l)?;
    let placement = place_particles(&plan.profile.test_function(), &grid, n)?;
    let cfg = SchemeConfig::new(plan.dt, Model::Nonlinear, plan.seed)?;
    let steps = cfg.steps_to(plan.t)?;
    let t = plan.t;
    let work = || -> Result<Vec<TrajectoryMonitor>> {
        (0..plan.realizations as u64)
            .into_par_iter()
            .map_init(
                || DkRunner::new(&placement, cfg.clone(), t),
                |runner, r| {
                    let runner = runner
                        .as_mut()
                        .map_err(|e| Error::InvalidInput(e.to_string()))?;
                    runner.run(r, steps, |_, _| {})
                },
            )
            .collect()
    };
    if plan.workers == 0 {
        work()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(plan.workers)
            .build()
            .map_err(|e| Error::InvalidInput(e.to_string()))?
            .install(work)
    }
}

/// Negative-part summaries along an `N` sweep at fixed `L`.
pub fn negative_part_sweep(
    plan: &MonitorPlan,
    ns: &[usize],
) -> Result<Vec<(NegativePartRow, Vec<TrajectoryMonitor>)>> {
    let grid = Grid::line(plan.l)?;
    let (lo, hi) = plan.profile.bounds();
    ns.iter()
        .map(|&n| {
            let monitors = monitor_realizations(plan, n)?;
            let report: NegativePartReport = negative_part_report(&monitors, n, &grid, lo, hi)?;
            Ok((
                NegativePartRow {
                    n,
                    h: grid.spacing(),
                    report,
                },
                monitors,
            ))
        })
        .collect()
}

pub const PRESETS: [&str; 5] = [
    "fig2-sample",
    "fig3-conv-h",
    "fig4-sample",
    "fig5-conv-n",
    "fig6-linearised",
];

#[derive(Debug, Clone)]
pub struct PresetOptions {
    pub scale: Scale,
    pub seed: u64,
    pub workers: usize,
    pub out: PathBuf,
    pub paper_literal_bdf2: bool,
    pub normalize_l2: bool,
    /// Overrides the preset's realization count.
    pub realizations: Option<usize>,
}

impl Default for PresetOptions {
    fn default() -> Self {
        Self {
            scale: Scale::Desk,
            seed: 0,
            workers: 0,
            out: PathBuf::from("out"),
            paper_literal_bdf2: false,
            normalize_l2: false,
            realizations: None,
        }
    }
}

/// Full preset name for a name or its short form (`fig3` for `fig3-conv-h`).
pub fn canonical_preset(name: &str) -> Option<&'static str> {
    PRESETS
        .iter()
        .copied()
        .find(|p| *p == name || p.split('-').next() == Some(name))
}

/// One panel of a preset: its name and configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub name: String,
    pub axis: Option<Axis>,
    pub config: ExperimentConfig,
}

const H_SWEEP: [usize; 5] = [8, 16, 32, 64, 128];

/// Panel configurations of a preset at the requested scale.
pub fn preset_panels(name: &str, opts: &PresetOptions) -> Result<Vec<Panel>> {
    let name = canonical_preset(name).ok_or_else(|| {
        Error::InvalidInput(format!(
            "unknown preset {name:?}; expected one of {}",
            PRESETS.join(", ")
        ))
    })?;
    let desk = opts.scale == Scale::Desk;
    let base = ExperimentConfig {
        preset: Some(name.to_string()),
        seed: opts.seed,
        workers: opts.workers,
        out: opts.out.clone(),
        scale: opts.scale,
        paper_literal_bdf2: opts.paper_literal_bdf2,
        normalize_l2: opts.normalize_l2,
        ..Default::default()
    };
    let second = opts
        .realizations
        .unwrap_or(if desk { 50_000 } else { 200_000 });
    let third = opts
        .realizations
        .unwrap_or(if desk { 200_000 } else { 800_000 });
    let panel = |name: &str, axis: Option<Axis>, config: ExperimentConfig| Panel {
        name: name.to_string(),
        axis,
        config,
    };
    let sample = |rho0: Profile, n: usize| ExperimentConfig {
        rho0,
        n: vec![n],
        l: vec![128],
        times: vec![0.4],
        moments: vec![(1, 0)],
        models: vec![ModelKind::Particles, ModelKind::Dk],
        m: 2,
        ..base.clone()
    };
    Ok(match name {
        "fig2-sample" => vec![panel("sample", None, sample(Profile::Cusp, 8137))],
        "fig4-sample" => vec![panel("sample", None, sample(Profile::Bump, 8211))],
        "fig3-conv-h" => {
            let conv = |rho0: Profile, n: usize| ExperimentConfig {
                rho0,
                n: vec![n],
                l: H_SWEEP.to_vec(),
                times: vec![0.4, 0.32],
                moments: vec![(2, 0), (1, 1)],
                models: vec![
                    ModelKind::Particles,
                    ModelKind::ParticlesExact,
                    ModelKind::Dk,
                ],
                m: second,
                ..base.clone()
            };
            vec![
                panel(
                    "top",
                    Some(Axis::H),
                    conv(Profile::Bump, if desk { 8192 } else { 8211 }),
                ),
                panel(
                    "bottom",
                    Some(Axis::H),
                    conv(Profile::Cusp, if desk { 8192 } else { 524_291 }),
                ),
            ]
        }
        "fig5-conv-n" => {
            let ns: Vec<usize> = if desk {
                (10..=14).map(|k| 1 << k).collect()
            } else {
                (10..=16).map(|k| 1 << k).collect()
            };
            vec![panel(
                "n-sweep",
                Some(Axis::N),
                ExperimentConfig {
                    rho0: Profile::Bump,
                    n: ns,
                    l: vec![64],
                    times: vec![0.4, 0.32],
                    moments: vec![(1, 0), (2, 0), (1, 1), (2, 1)],
                    models: vec![
                        ModelKind::Particles,
                        ModelKind::ParticlesExact,
                        ModelKind::Dk,
                    ],
                    m: third,
                    ..base.clone()
                },
            )]
        }
        "fig6-linearised" => [2011usize, 4096]
            .iter()
            .map(|&n| {
                panel(
                    &format!("n{n}"),
                    Some(Axis::H),
                    ExperimentConfig {
                        rho0: Profile::NarrowBump,
                        n: vec![n],
                        l: H_SWEEP.to_vec(),
                        times: vec![0.4, 0.2],
                        moments: vec![(2, 0), (1, 1), (2, 1)],
                        models: vec![
                            ModelKind::Particles,
                            ModelKind::ParticlesExact,
                            ModelKind::Dk,
                            ModelKind::DkLinearised,
                        ],
                        m: third,
                        ..base.clone()
                    },
                )
            })
            .collect(),
        _ => unreachable!("canonical preset names are matched above"),
    })
}

/// Sweep points of a panel in the order of its axis.
pub fn panel_points(cfg: &ExperimentConfig, axis: Axis) -> Vec<(usize, usize)> {
    match axis {
        Axis::H => cfg.l.iter().map(|&l| (l, cfg.n[0])).collect(),
        Axis::N => cfg.n.iter().map(|&n| (cfg.l[0], n)).collect(),
    }
}

#[derive(Debug, Clone)]
pub struct PanelOutcome {
    pub panel: Panel,
    pub sweep: Option<SweepOutcome>,
}

#[derive(Debug, Clone)]
pub struct PresetOutcome {
    pub dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub panels: Vec<PanelOutcome>,
}

fn write_file(path: &Path, bytes: &[u8], files: &mut Vec<PathBuf>) -> Result<()> {
    fs::write(path, bytes)?;
    files.push(path.to_path_buf());
    Ok(())
}

/// Write the tables and plot of a finished sweep into `dir` with `prefix`.
pub fn write_sweep(
    dir: &Path,
    prefix: &str,
    title: &str,
    outcome: &SweepOutcome,
    files: &mut Vec<PathBuf>,
) -> Result<()> {
    let mut buf = Vec::new();
    write_moment_csv(&outcome.moment_rows()?, &mut buf)?;
    write_file(&dir.join(format!("{prefix}moments.csv")), &buf, files)?;
    let mut buf = Vec::new();
    write_convergence_csv(&outcome.convergence_rows(), &mut buf)?;
    let conv_path = dir.join(format!("{prefix}convergence.csv"));
    write_file(&conv_path, &buf, files)?;
    let mut buf = Vec::new();
    write_slope_csv(&outcome.slope_rows(), &mut buf)?;
    write_file(&dir.join(format!("{prefix}slopes.csv")), &buf, files)?;
    // The plot is drawn from the table as written, not from in-memory results.
    let parsed = parse_convergence_csv(&fs::read_to_string(&conv_path)?)?;
    let axis = parsed.first().map_or(Axis::H, |r| r.axis);
    let diffs: Vec<ConvergenceRow> = parsed
        .iter()
        .filter(|r| r.reference.is_some())
        .copied()
        .collect();
    let mags: Vec<ConvergenceRow> = parsed
        .iter()
        .filter(|r| r.reference.is_none())
        .copied()
        .collect();
    if !diffs.is_empty() {
        let svg = convergence_svg(&format!("{title}: moment differences"), axis.tag(), &diffs);
        write_file(
            &dir.join(format!("{prefix}differences.svg")),
            svg.as_bytes(),
            files,
        )?;
    }
    if !mags.is_empty() {
        let svg = convergence_svg(&format!("{title}: moment magnitudes"), axis.tag(), &mags);
        write_file(
            &dir.join(format!("{prefix}magnitudes.svg")),
            svg.as_bytes(),
            files,
        )?;
    }
    Ok(())
}

/// Single-realization snapshots for a sample panel.
pub fn write_sample(
    dir: &Path,
    prefix: &str,
    cfg: &ExperimentConfig,
    files: &mut Vec<PathBuf>,
) -> Result<()> {
    let grid = Grid::line(cfg.l[0])?;
    let n = cfg.n[0];
    let placement = place_particles(&cfg.rho0.test_function(), &grid, n)?;
    let t = cfg.times[0];
    let mut scheme = SchemeConfig::new(cfg.dt, Model::Nonlinear, cfg.seed)?;
    scheme.paper_literal_bdf2 = cfg.paper_literal_bdf2;
    let traj = run_trajectory(&placement, &scheme, &[0.0, t], 0)?;
    let mut buf = Vec::new();
    traj.snapshots[0].1.write_csv(&mut buf)?;
    write_file(&dir.join(format!("{prefix}initial.csv")), &buf, files)?;
    let mut buf = Vec::new();
    expected_dk(&placement, t)?.write_csv(&mut buf)?;
    write_file(&dir.join(format!("{prefix}mean.csv")), &buf, files)?;
    let mut buf = Vec::new();
    traj.snapshots[1].1.write_csv(&mut buf)?;
    write_file(&dir.join(format!("{prefix}dk.csv")), &buf, files)?;
    let mut buf = Vec::new();
    write_monitor_csv(&[traj.monitor], &mut buf)?;
    write_file(&dir.join(format!("{prefix}monitor.csv")), &buf, files)?;
    let (phi1, phi2) = cfg.rho0.observables(t, cfg.normalize_l2)?;
    for (name, phi) in [("phi1", &phi1), ("phi2", &phi2)] {
        let mut buf = Vec::new();
        phi.interpolate(&grid)?.write_csv(&mut buf)?;
        write_file(&dir.join(format!("{prefix}{name}.csv")), &buf, files)?;
    }
    let mut ens = ParticleEnsemble::seeded(&placement, cfg.seed, 0);
    ens.advance(t)?;
    let mut buf = Vec::new();
    use std::io::Write;
    writeln!(buf, "{SNAPSHOT_HEADER}")?;
    ens.write_snapshot(0, &mut buf)?;
    write_file(&dir.join(format!("{prefix}particles.csv")), &buf, files)?;
    Ok(())
}

/// Run a named preset, writing its artifacts under `opts.out/name`.
pub fn run_preset(name: &str, opts: &PresetOptions) -> Result<PresetOutcome> {
    run_preset_with_progress(name, opts, |_| {})
}

pub fn run_preset_with_progress(
    name: &str,
    opts: &PresetOptions,
    mut progress: impl FnMut(&str),
) -> Result<PresetOutcome> {
    let panels = preset_panels(name, opts)?;
    let name = canonical_preset(name).expect("resolved by preset_panels");
    for p in &panels {
        let d = p.config.validate();
        let first = d.errors().next().cloned();
        if let Some(e) = first {
            return Err(Error::InvalidInput(format!(
                "{name}/{}: {}",
                p.name, e.message
            )));
        }
    }
    let dir = opts.out.join(name);
    fs::create_dir_all(&dir)?;
    let mut files = Vec::new();
    let mut outcomes = Vec::new();
    for p in panels {
        let prefix = format!("{}_", p.name);
        write_file(
            &dir.join(format!("{prefix}config.txt")),
            p.config.to_text().as_bytes(),
            &mut files,
        )?;
        let sweep_outcome = match p.axis {
            None => {
                progress(&format!("{name}/{}: sample trajectory", p.name));
                write_sample(&dir, &prefix, &p.config, &mut files)?;
                None
            }
            Some(axis) => {
                let plan = SweepPlan::from_config(&p.config)?;
                let points = panel_points(&p.config, axis);
                let outcome = sweep_with_progress(&plan, axis, &points, |m| {
                    progress(&format!("{name}/{}: {m}", p.name))
                })?;
                write_sweep(
                    &dir,
                    &prefix,
                    &format!("{name} {}", p.name),
                    &outcome,
                    &mut files,
                )?;
                Some(outcome)
            }
        };
        outcomes.push(PanelOutcome {
            panel: p,
            sweep: sweep_outcome,
        });
    }
    Ok(PresetOutcome {
        dir,
        files,
        panels: outcomes,
    })
}
