use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dkfd_core::config::{ExperimentConfig, Scale};
use dkfd_core::experiment::{
    negative_part_sweep, panel_points, run_preset_with_progress, sweep_with_progress, write_sample,
    write_sweep, MonitorPlan, PresetOptions, SweepPlan,
};
use dkfd_core::moments::ModelKind;
use dkfd_core::report::{
    write_moment_csv, write_negative_part_csv, Axis, MomentRow, NegativePartRow,
};
use dkfd_core::{dk::write_monitor_csv, Error};

#[derive(Parser)]
#[command(
    name = "dkfd",
    version,
    about = "Dean-Kawasaki finite-difference simulations and moment studies"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Flat key = value configuration file.
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, value_parser = parse_scale)]
    scale: Option<Scale>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Monte Carlo realizations.
    #[arg(long, short)]
    m: Option<usize>,
    #[arg(long)]
    paper_literal_bdf2: bool,
    #[arg(long)]
    normalize_l2: bool,
}

#[derive(Subcommand)]
enum Command {
    /// One DK trajectory with its particle counterpart and observables.
    Simulate(Common),
    /// Centred moments at the first (L, N) of the configuration.
    Moments(Common),
    /// Moment differences along the configured L values.
    SweepH(Common),
    /// Moment magnitudes and differences along the configured N values.
    SweepN(Common),
    /// Nonlinear against linearised DK along the configured L values.
    CompareLinearised(Common),
    /// Negative-part monitors along the configured N values at the first L.
    NegativePart(Common),
    /// Reproduce a figure preset (fig2-sample, fig3-conv-h, fig4-sample, fig5-conv-n, fig6-linearised).
    Run {
        preset: String,
        #[command(flatten)]
        common: Common,
    },
    /// Check a configuration without simulating.
    Validate(Common),
}

fn parse_scale(s: &str) -> Result<Scale, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Numerical(String),
    Other(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::NonFinite(_) => Failure::Numerical(e.to_string()),
            Error::Config { .. }
            | Error::InvalidInput(_)
            | Error::OffLattice { .. }
            | Error::Placement { .. } => Failure::Config(e.to_string()),
            _ => Failure::Other(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Other(e.to_string())
    }
}

fn load(common: &Common) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
            ExperimentConfig::parse(&text)
                .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(w) = common.workers {
        cfg.workers = w;
    }
    if let Some(s) = common.scale {
        cfg.scale = s;
    }
    if let Some(out) = &common.out {
        cfg.out = out.clone();
    }
    if let Some(m) = common.m {
        cfg.m = m;
    }
    cfg.paper_literal_bdf2 |= common.paper_literal_bdf2;
    cfg.normalize_l2 |= common.normalize_l2;
    Ok(cfg)
}

fn checked(cfg: &ExperimentConfig) -> Result<(), Failure> {
    let d = cfg.validate();
    for w in d.warnings() {
        eprintln!("warning: {}", w.message);
    }
    if d.is_ok() {
        Ok(())
    } else {
        Err(Failure::Config(
            d.errors()
                .map(|e| e.message.as_str())
                .collect::<Vec<_>>()
                .join("; "),
        ))
    }
}

fn prepare_out(cfg: &ExperimentConfig) -> Result<PathBuf, Failure> {
    fs::create_dir_all(&cfg.out)?;
    fs::write(cfg.out.join("config.txt"), cfg.to_text())?;
    Ok(cfg.out.clone())
}

fn report(files: &[PathBuf]) {
    for f in files {
        println!("wrote {}", f.display());
    }
}

fn run_sweep(cfg: &ExperimentConfig, axis: Axis) -> Result<(), Failure> {
    checked(cfg)?;
    let out = prepare_out(cfg)?;
    let plan = SweepPlan::from_config(cfg)?;
    let outcome = sweep_with_progress(&plan, axis, &panel_points(cfg, axis), |m| eprintln!("{m}"))?;
    let mut files = Vec::new();
    write_sweep(&out, "", &format!("{} sweep", axis), &outcome, &mut files)?;
    for row in outcome.slope_rows() {
        let reference = row.reference.map(|r| format!(" - {r}")).unwrap_or_default();
        match row.slope {
            Some(s) => println!(
                "({},{}) |{}{}|: slope {:.3} ± {:.3} over {} of {} rows",
                row.j1,
                row.j2,
                row.model,
                reference,
                s,
                row.half_width.unwrap_or(f64::NAN),
                row.significant_rows,
                row.rows
            ),
            None => println!(
                "({},{}) |{}{}|: noise-limited ({} of {} rows significant)",
                row.j1, row.j2, row.model, reference, row.significant_rows, row.rows
            ),
        }
    }
    report(&files);
    Ok(())
}

fn write_to(
    path: &Path,
    f: impl FnOnce(&mut Vec<u8>) -> dkfd_core::Result<()>,
) -> Result<PathBuf, Failure> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    fs::write(path, buf)?;
    Ok(path.to_path_buf())
}

fn execute(command: Command) -> Result<(), Failure> {
    match command {
        Command::Validate(common) => {
            let cfg = load(&common)?;
            let d = cfg.validate();
            print!("{d}");
            if d.is_ok() {
                println!("ok");
                Ok(())
            } else {
                Err(Failure::Config(format!("{} error(s)", d.errors().count())))
            }
        }
        Command::Simulate(common) => {
            let cfg = load(&common)?;
            checked(&cfg)?;
            let out = prepare_out(&cfg)?;
            let mut files = Vec::new();
            write_sample(&out, "", &cfg, &mut files)?;
            report(&files);
            Ok(())
        }
        Command::Moments(common) => {
            let cfg = load(&common)?;
            checked(&cfg)?;
            let out = prepare_out(&cfg)?;
            let plan = SweepPlan::from_config(&cfg)?;
            let estimates = plan.estimate_point(cfg.l[0], cfg.n[0])?;
            let rows: Vec<MomentRow> = estimates
                .iter()
                .map(MomentRow::from_estimate)
                .collect::<Result<_, _>>()?;
            for r in &rows {
                println!(
                    "({},{}) {}: {:e} ± {:e}",
                    r.j1, r.j2, r.model, r.mean, r.stderr
                );
            }
            let path = write_to(&out.join("moments.csv"), |b| write_moment_csv(&rows, b))?;
            report(&[path]);
            Ok(())
        }
        Command::SweepH(common) => run_sweep(&load(&common)?, Axis::H),
        Command::SweepN(common) => run_sweep(&load(&common)?, Axis::N),
        Command::CompareLinearised(common) => {
            let mut cfg = load(&common)?;
            cfg.models = vec![ModelKind::Particles, ModelKind::Dk, ModelKind::DkLinearised];
            run_sweep(&cfg, Axis::H)
        }
        Command::NegativePart(common) => {
            let cfg = load(&common)?;
            checked(&cfg)?;
            let out = prepare_out(&cfg)?;
            let t = cfg.times.iter().copied().fold(0.0, f64::max);
            let plan = MonitorPlan {
                profile: cfg.rho0,
                l: cfg.l[0],
                dt: cfg.dt,
                t,
                realizations: cfg.m,
                seed: cfg.seed,
                workers: cfg.workers,
            };
            let results = negative_part_sweep(&plan, &cfg.n)?;
            let mut files = Vec::new();
            for (row, monitors) in &results {
                let r = &row.report;
                println!(
                    "N = {}: mean sup|ρ⁻| {:e}, fraction negative {}, envelope {:e}{}",
                    row.n,
                    r.mean_sup_neg_norm,
                    r.fraction_negative,
                    r.envelope,
                    if r.scaling_regime {
                        ""
                    } else {
                        " (outside scaling regime)"
                    }
                );
                files.push(write_to(
                    &out.join(format!("monitor_n{}.csv", row.n)),
                    |b| write_monitor_csv(monitors, b),
                )?);
            }
            let rows: Vec<NegativePartRow> = results.into_iter().map(|(r, _)| r).collect();
            files.push(write_to(&out.join("negative_part.csv"), |b| {
                write_negative_part_csv(&rows, b)
            })?);
            report(&files);
            Ok(())
        }
        Command::Run { preset, common } => {
            let base = load(&common)?;
            let opts = PresetOptions {
                scale: base.scale,
                seed: base.seed,
                workers: base.workers,
                out: base.out,
                paper_literal_bdf2: base.paper_literal_bdf2,
                normalize_l2: base.normalize_l2,
                realizations: common.m,
            };
            let outcome = run_preset_with_progress(&preset, &opts, |m| eprintln!("{m}"))?;
            for panel in &outcome.panels {
                if let Some(sweep) = &panel.sweep {
                    for row in sweep.slope_rows() {
                        let slope = row
                            .slope
                            .map(|s| format!("{s:.3}"))
                            .unwrap_or_else(|| "noise-limited".into());
                        let reference =
                            row.reference.map(|r| format!(" - {r}")).unwrap_or_default();
                        println!(
                            "{} ({},{}) |{}{}|: {slope}",
                            panel.panel.name, row.j1, row.j2, row.model, reference
                        );
                    }
                }
            }
            report(&outcome.files);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("configuration error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(m)) => {
            eprintln!("numerical failure: {m}");
            ExitCode::from(3)
        }
        Err(Failure::Other(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
