//! Acceptance checks, one PASS/FAIL line per criterion.

use std::time::{Duration, Instant};

use dkfd_core::dk::{expected_dk, quadratic_variation, DkRunner, Model, SchemeConfig};
use dkfd_core::experiment::{
    deterministic_rates, negative_part_sweep, panel_points, preset_panels, sweep, MonitorPlan,
    PresetOptions, SweepPlan,
};
use dkfd_core::heat::continuous_backward_flow;
use dkfd_core::moments::{
    dk_second_moment_oracle, estimate_moments, moment_difference, ModelKind, MomentEstimate,
    MomentSetup, MomentSpec,
};
use dkfd_core::particles::{particle_variance_oracle, place_particles, InitialPlacement};
use dkfd_core::profiles::Profile;
use dkfd_core::report::Axis;
use dkfd_core::stats::fit_loglog;
use dkfd_core::{Grid, Result, TestFunction};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Result<Outcome> {
    Ok(Outcome {
        pass,
        detail: detail.into(),
    })
}

fn bump_placement(l: usize, n: usize) -> Result<InitialPlacement> {
    place_particles(&Profile::Bump.test_function(), &Grid::line(l)?, n)
}

fn within_time(elapsed: Duration, limit: f64) -> bool {
    elapsed.as_secs_f64() < limit
}

/// Relative h² constant of the gradient-product error of the bump at z = 0.4.
fn relative_rate_constant() -> Result<f64> {
    let phi = Profile::Bump.test_function();
    let ls: Vec<usize> = (3..=8).map(|k| 1 << k).collect();
    let study = deterministic_rates(&phi, 0.4, &ls)?;
    let scale = continuous_backward_flow(&phi, 0.4)?
        .gradient_squared()
        .interpolate(&Grid::line(256)?)?
        .norm();
    Ok(study.gradient_fit.prefactor() / scale)
}

fn criterion_1() -> Result<Outcome> {
    let start = Instant::now();
    let phi = Profile::Bump.test_function();
    let ls: Vec<usize> = (3..=8).map(|k| 1 << k).collect();
    let study = deterministic_rates(&phi, 0.4, &ls)?;
    let elapsed = start.elapsed();
    let (a, b) = (study.flow_fit.slope, study.gradient_fit.slope);
    outcome(
        (a - 2.0).abs() <= 0.2 && (b - 2.0).abs() <= 0.2 && within_time(elapsed, 1.0),
        format!("deterministic h² rates: backward flow slope {a:.3}, gradient product slope {b:.3}, {elapsed:.2?}"),
    )
}

fn criterion_2() -> Result<Outcome> {
    let start = Instant::now();
    let placement = bump_placement(64, 8192)?;
    let cfg = SchemeConfig::new(0.001, Model::Nonlinear, 2)?;
    let mut runner = DkRunner::new(&placement, cfg, 0.4)?;
    let mut worst: f64 = 0.0;
    for r in 0..100 {
        let monitor = runner.run(r, 400, |_, _| {})?;
        worst = worst.max(monitor.mass_drift);
    }
    let elapsed = start.elapsed();
    outcome(
        worst < 1e-10 && within_time(elapsed, 10.0),
        format!(
            "mass conservation: max relative drift {worst:.2e} over 100 × 400 steps, {elapsed:.2?}"
        ),
    )
}

fn criterion_3() -> Result<Outcome> {
    let placement = bump_placement(64, 8192)?;
    let setup = MomentSetup::new(placement, 0.001, 3);
    let (phi1, phi2) = Profile::Bump.observables(0.4, false)?;
    let specs = [
        MomentSpec::pair(1, 0.4, &phi1, 0, 0.32, &phi2)?,
        MomentSpec::pair(0, 0.4, &phi1, 1, 0.32, &phi2)?,
    ];
    let mut worst: f64 = 0.0;
    for model in [ModelKind::Particles, ModelKind::Dk] {
        for e in estimate_moments(&setup, model, &specs, 10_000)? {
            worst = worst.max(e.mean.abs() / e.stderr);
        }
    }
    outcome(
        worst <= 4.0,
        format!("first moments: largest |mean|/stderr {worst:.2} over (1,0), (0,1) for particles and dk at M = 10⁴"),
    )
}

fn criterion_4() -> Result<Outcome> {
    let start = Instant::now();
    let placement = bump_placement(64, 8192)?;
    let h = placement.grid().spacing();
    let setup = MomentSetup::new(placement.clone(), 0.001, 4);
    let phi = Profile::Bump.primary_observable();
    let spec = [MomentSpec::pair(2, 0.4, &phi, 0, 0.4, &phi)?];
    let m = 50_000;
    let particles = &estimate_moments(&setup, ModelKind::Particles, &spec, m)?[0];
    let dk = &estimate_moments(&setup, ModelKind::Dk, &spec, m)?[0];
    let p_oracle = particle_variance_oracle(&placement, &phi, 0.4)?;
    let d_oracle = dk_second_moment_oracle(&placement, &phi, 0.4, 0.001)?;
    let band = 5.0 * relative_rate_constant()? * h * h * d_oracle.abs();
    let p_dev = (particles.mean - p_oracle).abs();
    let d_dev = (dk.mean - d_oracle).abs();
    let elapsed = start.elapsed();
    outcome(
        p_dev <= 4.0 * particles.stderr && d_dev <= (4.0 * dk.stderr).max(band) && within_time(elapsed, 120.0),
        format!(
            "second-moment oracles: particles {:.4e} vs {p_oracle:.4e} ({:.2}σ), dk {:.4e} vs {d_oracle:.4e} (deviation {d_dev:.2e}, allowed {:.2e}), {elapsed:.1?}",
            particles.mean,
            p_dev / particles.stderr,
            dk.mean,
            (4.0 * dk.stderr).max(band)
        ),
    )
}

fn criterion_5() -> Result<Outcome> {
    let start = Instant::now();
    let grid = Grid::line(64)?;
    let rho = Profile::Bump.test_function().interpolate(&grid)?;
    let fs = [
        TestFunction::from_fn("cos", f64::cos),
        Profile::Bump.primary_observable(),
        TestFunction::from_fn("sin2", |x| (2.0 * x).sin()),
    ];
    let mut zs = Vec::new();
    for (seed, (a, b)) in [(0, 0), (0, 1), (2, 2)].into_iter().enumerate() {
        let qv = quadratic_variation(
            &rho,
            8192,
            &fs[a].interpolate(&grid)?,
            &fs[b].interpolate(&grid)?,
            0.001,
            100_000,
            seed as u64,
        )?;
        zs.push(qv.z_score());
    }
    let elapsed = start.elapsed();
    outcome(
        zs.iter().all(|z| z.abs() <= 4.0) && within_time(elapsed, 60.0),
        format!(
            "quadratic variation: z-scores {} at M = 10⁵, {elapsed:.1?}",
            zs.iter()
                .map(|z| format!("{z:.2}"))
                .collect::<Vec<_>>()
                .join(", ")
        ),
    )
}

fn criterion_6() -> Result<Outcome> {
    let start = Instant::now();
    let opts = PresetOptions {
        realizations: Some(50_000),
        ..Default::default()
    };
    let panel = preset_panels("fig3-conv-h", &opts)?
        .into_iter()
        .find(|p| p.config.rho0 == Profile::Cusp)
        .expect("cusp panel");
    let mut cfg = panel.config;
    cfg.l = (3..=6).map(|k| 1 << k).collect();
    cfg.n = vec![8192];
    let plan = SweepPlan::from_config(&cfg)?;
    let out = sweep(&plan, Axis::H, &panel_points(&cfg, Axis::H))?;
    let mut pass = true;
    let mut parts = Vec::new();
    for (j1, j2) in [(2, 0), (1, 1)] {
        let r = out.difference(j1, j2, ModelKind::Dk).expect("swept");
        match r.slope() {
            Some(s) => {
                pass &= (1.5..=2.5).contains(&s);
                parts.push(format!(
                    "({j1},{j2}) slope {s:.3} over {} rows [{}]",
                    r.significant_rows(),
                    r.rows
                        .iter()
                        .map(|x| format!("{:.2e}±{:.1e}", x.diff, x.stderr))
                        .collect::<Vec<_>>()
                        .join(" ")
                ));
            }
            None => {
                pass = false;
                parts.push(format!(
                    "({j1},{j2}) noise-limited ({} significant rows)",
                    r.significant_rows()
                ));
            }
        }
    }
    outcome(
        pass,
        format!(
            "h-convergence against exact Brownian moments, N = 8192, M = 5·10⁴: {}, {:.0?}",
            parts.join("; "),
            start.elapsed()
        ),
    )
}

fn criterion_7() -> Result<Outcome> {
    let start = Instant::now();
    let panel = preset_panels("fig5-conv-n", &PresetOptions::default())?.remove(0);
    let cfg = panel.config;
    let plan = SweepPlan::from_config(&cfg)?;
    let out = sweep(&plan, Axis::N, &panel_points(&cfg, Axis::N))?;
    let mut pass = true;
    let mut parts = Vec::new();
    for &(j1, j2) in &cfg.moments {
        let expected = -f64::from(j1 + j2) / 2.0;
        for model in [ModelKind::Particles, ModelKind::Dk] {
            let r = out.magnitude(j1, j2, model).expect("swept");
            match r.slope() {
                Some(s) => {
                    pass &= (s - expected).abs() <= 0.3;
                    parts.push(format!("({j1},{j2}) {model} {s:.2} (want {expected:.1})"));
                }
                None => {
                    pass = false;
                    parts.push(format!("({j1},{j2}) {model} noise-limited"));
                }
            }
        }
    }
    outcome(
        pass,
        format!(
            "N-decay at h = {:.6}, M = {}: {}, {:.0?}",
            Grid::line(cfg.l[0])?.spacing(),
            cfg.m,
            parts.join("; "),
            start.elapsed()
        ),
    )
}

fn find(ests: &[MomentEstimate], model: ModelKind, j: [u32; 2]) -> &MomentEstimate {
    ests.iter()
        .find(|e| e.model == model && e.spec.exponents() == j)
        .expect("estimated")
}

fn criterion_8() -> Result<Outcome> {
    let start = Instant::now();
    let panel = preset_panels("fig6-linearised", &PresetOptions::default())?
        .into_iter()
        .find(|p| p.config.n == [2011])
        .expect("N = 2011 panel");
    let mut cfg = panel.config;
    cfg.moments = vec![(2, 0), (2, 1)];
    let plan = SweepPlan::from_config(&cfg)?;
    let mut checked = Vec::new();
    for &l in &cfg.l {
        let ests = plan.estimate_point(l, cfg.n[0])?;
        let reference = |j| find(&ests, ModelKind::ParticlesExact, j);
        let nl21 = moment_difference(find(&ests, ModelKind::Dk, [2, 1]), reference([2, 1]))?;
        let lin21 = moment_difference(
            find(&ests, ModelKind::DkLinearised, [2, 1]),
            reference([2, 1]),
        )?;
        if !(nl21.significant || lin21.significant) {
            continue;
        }
        let second = moment_difference(
            find(&ests, ModelKind::DkLinearised, [2, 0]),
            find(&ests, ModelKind::Dk, [2, 0]),
        )?;
        let h = Grid::line(l)?.spacing();
        checked.push((
            h,
            lin21.diff >= 1.5 * nl21.diff && second.diff <= 4.0 * second.combined_stderr,
            format!(
                "h = {h:.4}: (2,1) linearised {:.2e}, nonlinear {:.2e}; (2,0) gap {:.1}σ",
                lin21.diff,
                nl21.diff,
                second.diff / second.combined_stderr
            ),
        ));
        if checked.len() == 2 {
            break;
        }
    }
    let pass = checked.len() == 2 && checked.iter().all(|c| c.1);
    let detail = if checked.is_empty() {
        "no significant h".to_string()
    } else {
        checked
            .iter()
            .map(|c| c.2.clone())
            .collect::<Vec<_>>()
            .join("; ")
    };
    outcome(
        pass,
        format!(
            "linearised vs nonlinear, N = 2011, M = {}: {detail}, {:.0?}",
            cfg.m,
            start.elapsed()
        ),
    )
}

fn criterion_9() -> Result<Outcome> {
    let start = Instant::now();
    let l = 64;
    let h = Grid::line(l)?.spacing();
    let ns = [1024, 2048, 4096, 8192];
    let (rho_min, _) = Profile::Bump.bounds();
    let plan = MonitorPlan {
        profile: Profile::Bump,
        l,
        dt: 0.001,
        t: 0.4,
        realizations: 1000,
        seed: 9,
        workers: 0,
    };
    let rows = negative_part_sweep(&plan, &ns)?;
    let fractions: Vec<f64> = rows.iter().map(|r| r.0.report.fraction_negative).collect();
    let means: Vec<f64> = rows.iter().map(|r| r.0.report.mean_sup_neg_norm).collect();
    let monotone = means.windows(2).all(|w| w[1] <= w[0]);
    let regime = rho_min >= 1.0 && ns.iter().all(|&n| n as f64 * h >= 50.0);
    outcome(
        regime && fractions.iter().all(|&f| f < 1e-2) && monotone,
        format!(
            "negative part, h = {h:.4}, N = {ns:?}, M = 10³: fractions {fractions:?}, mean sup‖ρ⁻‖ {:?}, {:.0?}",
            means.iter().map(|m| format!("{m:.2e}")).collect::<Vec<_>>(),
            start.elapsed()
        ),
    )
}

fn criterion_10() -> Result<Outcome> {
    let start = Instant::now();
    let placement = bump_placement(64, 8192)?;
    let exact = expected_dk(&placement, 0.4)?;
    let dts = [0.004, 0.002, 0.001];
    let mut errors = Vec::new();
    for &dt in &dts {
        let cfg = SchemeConfig::new(dt, Model::Deterministic, 0)?;
        let steps = cfg.steps_to(0.4)?;
        let mut runner = DkRunner::new(&placement, cfg, 0.4)?;
        let mut last = None;
        runner.run(0, steps, |m, rho| {
            if m == steps {
                last = Some(rho.clone());
            }
        })?;
        errors.push(last.expect("final step").sub(&exact)?.norm());
    }
    let fit = fit_loglog(&dts, &errors)?;
    let elapsed = start.elapsed();
    outcome(
        (fit.slope - 2.0).abs() <= 0.2 && within_time(elapsed, 1.0),
        format!(
            "BDF2 temporal order {:.3} over Δt = 4, 2, 1 ·10⁻³, {elapsed:.2?}",
            fit.slope
        ),
    )
}

fn main() {
    let only: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    type Check = fn() -> Result<Outcome>;
    let criteria: [(usize, Check); 10] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
        (10, criterion_10),
    ];
    let mut failed = 0;
    let mut errored = 0;
    for (k, run) in criteria {
        if !only.is_empty() && !only.contains(&k) {
            continue;
        }
        match run() {
            Ok(o) => {
                if !o.pass {
                    failed += 1;
                }
                println!(
                    "{} criterion {k}: {}",
                    if o.pass { "PASS" } else { "FAIL" },
                    o.detail
                );
            }
            Err(e) => {
                errored += 1;
                println!("FAIL criterion {k}: error {e}");
            }
        }
    }
    println!("acceptance: {failed} failed, {errored} errored");
    if errored > 0 {
        std::process::exit(1);
    }
}
