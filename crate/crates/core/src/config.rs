//! Flat `key = value` experiment configuration with `#` comments.
//!
//! ```text
//! # convergence in h
//! rho0 = bump
//! n = 8192
//! l = 8, 16, 32, 64
//! times = 0.4, 0.32
//! moments = 2,0; 1,1
//! models = particles, dk
//! m = 50000
//! ```

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::dk::Model;
use crate::dk::SchemeConfig;
use crate::error::{Error, Result};
use crate::fmt::g17;
use crate::grid::Grid;
use crate::moments::ModelKind;
use crate::profiles::Profile;

/// Smallest spacing below which the finite-difference error stops dominating
/// Monte Carlo noise, `2π·2^{-7}`.
pub const H_FLOOR: f64 = 2.0 * std::f64::consts::PI / 128.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scale {
    Paper,
    #[default]
    Desk,
}

impl Scale {
    pub fn tag(self) -> &'static str {
        match self {
            Scale::Paper => "paper",
            Scale::Desk => "desk",
        }
    }
}

impl FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Scale::Paper),
            "desk" => Ok(Scale::Desk),
            _ => Err(Error::InvalidInput(format!("unknown scale {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub preset: Option<String>,
    pub rho0: Profile,
    pub n: Vec<usize>,
    pub l: Vec<usize>,
    pub dt: f64,
    pub times: Vec<f64>,
    pub moments: Vec<(u32, u32)>,
    pub models: Vec<ModelKind>,
    pub m: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub workers: usize,
    pub scale: Scale,
    pub paper_literal_bdf2: bool,
    pub normalize_l2: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            preset: None,
            rho0: Profile::Bump,
            n: vec![8192],
            l: vec![64],
            dt: 0.001,
            times: vec![0.4, 0.32],
            moments: vec![(2, 0), (1, 1)],
            models: vec![ModelKind::Particles, ModelKind::Dk],
            m: 50_000,
            seed: 0,
            out: PathBuf::from("out"),
            workers: 0,
            scale: Scale::Desk,
            paper_literal_bdf2: false,
            normalize_l2: false,
        }
    }
}

const KEYS: [&str; 15] = [
    "preset",
    "rho0",
    "n",
    "l",
    "dt",
    "times",
    "moments",
    "models",
    "m",
    "seed",
    "out",
    "workers",
    "scale",
    "paper_literal_bdf2",
    "normalize_l2",
];

fn config_err(line: usize, message: impl Into<String>) -> Error {
    Error::Config {
        line,
        message: message.into(),
    }
}

fn scalar<T: FromStr>(line: usize, key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| config_err(line, format!("{key}: cannot parse {v:?}")))
}

fn list<T: FromStr>(line: usize, key: &str, v: &str) -> Result<Vec<T>> {
    let items: Vec<T> = v
        .split(',')
        .map(|s| scalar(line, key, s.trim()))
        .collect::<Result<_>>()?;
    if items.is_empty() {
        return Err(config_err(line, format!("{key}: empty list")));
    }
    Ok(items)
}

fn boolean(line: usize, key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(config_err(
            line,
            format!("{key}: expected true or false, got {v:?}"),
        )),
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen: Vec<&str> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| {
                config_err(line, format!("expected `key = value`, got {content:?}"))
            })?;
            let key = key.trim();
            let value = value.trim();
            let known = KEYS
                .iter()
                .find(|k| **k == key)
                .ok_or_else(|| config_err(line, format!("unknown key {key:?}")))?;
            if seen.contains(known) {
                return Err(config_err(line, format!("duplicate key {key:?}")));
            }
            seen.push(known);
            if value.is_empty() {
                return Err(config_err(line, format!("{key}: missing value")));
            }
            match key {
                "preset" => cfg.preset = Some(value.to_string()),
                "rho0" => {
                    cfg.rho0 = value
                        .parse()
                        .map_err(|e: Error| config_err(line, e.to_string()))?
                }
                "n" => cfg.n = list(line, key, value)?,
                "l" => cfg.l = list(line, key, value)?,
                "dt" => cfg.dt = scalar(line, key, value)?,
                "times" => cfg.times = list(line, key, value)?,
                "moments" => {
                    cfg.moments = value
                        .split(';')
                        .map(|pair| {
                            let js: Vec<u32> = list(line, key, pair.trim())?;
                            match js.as_slice() {
                                [a] => Ok((*a, 0)),
                                [a, b] => Ok((*a, *b)),
                                _ => Err(config_err(line, format!("moments: bad entry {pair:?}"))),
                            }
                        })
                        .collect::<Result<_>>()?
                }
                "models" => {
                    cfg.models = value
                        .split(',')
                        .map(|s| {
                            s.trim()
                                .parse()
                                .map_err(|e: Error| config_err(line, e.to_string()))
                        })
                        .collect::<Result<_>>()?
                }
                "m" => cfg.m = scalar(line, key, value)?,
                "seed" => cfg.seed = scalar(line, key, value)?,
                "out" => cfg.out = PathBuf::from(value),
                "workers" => cfg.workers = scalar(line, key, value)?,
                "scale" => {
                    cfg.scale = value
                        .parse()
                        .map_err(|e: Error| config_err(line, e.to_string()))?
                }
                "paper_literal_bdf2" => cfg.paper_literal_bdf2 = boolean(line, key, value)?,
                "normalize_l2" => cfg.normalize_l2 = boolean(line, key, value)?,
                _ => unreachable!("key list checked above"),
            }
        }
        Ok(cfg)
    }

    /// The configuration in the same format `parse` reads.
    pub fn to_text(&self) -> String {
        let join = |v: Vec<String>, sep: &str| v.join(sep);
        let mut out = String::new();
        if let Some(p) = &self.preset {
            out.push_str(&format!("preset = {p}\n"));
        }
        out.push_str(&format!("rho0 = {}\n", self.rho0));
        out.push_str(&format!(
            "n = {}\n",
            join(self.n.iter().map(|v| v.to_string()).collect(), ", ")
        ));
        out.push_str(&format!(
            "l = {}\n",
            join(self.l.iter().map(|v| v.to_string()).collect(), ", ")
        ));
        out.push_str(&format!("dt = {}\n", g17(self.dt)));
        out.push_str(&format!(
            "times = {}\n",
            join(self.times.iter().map(|&v| g17(v)).collect(), ", ")
        ));
        out.push_str(&format!(
            "moments = {}\n",
            join(
                self.moments
                    .iter()
                    .map(|(a, b)| format!("{a},{b}"))
                    .collect(),
                "; "
            )
        ));
        out.push_str(&format!(
            "models = {}\n",
            join(
                self.models.iter().map(|m| m.tag().to_string()).collect(),
                ", "
            )
        ));
        out.push_str(&format!("m = {}\n", self.m));
        out.push_str(&format!("seed = {}\n", self.seed));
        out.push_str(&format!("out = {}\n", self.out.display()));
        out.push_str(&format!("workers = {}\n", self.workers));
        out.push_str(&format!("scale = {}\n", self.scale.tag()));
        out.push_str(&format!(
            "paper_literal_bdf2 = {}\n",
            self.paper_literal_bdf2
        ));
        out.push_str(&format!("normalize_l2 = {}\n", self.normalize_l2));
        out
    }

    pub fn validate(&self) -> Diagnostics {
        let mut d = Diagnostics::default();
        let scheme = SchemeConfig {
            dt: self.dt,
            model: Model::Deterministic,
            seed: self.seed,
            paper_literal_bdf2: self.paper_literal_bdf2,
            shared_noise_stream: false,
        };
        match scheme.validate() {
            Err(e) => d.error(e.to_string()),
            Ok(()) => {
                for &t in &self.times {
                    match scheme.steps_to(t) {
                        Ok(steps) => d.note(format!("T = {}: {steps} steps", g17(t))),
                        Err(e) => d.error(e.to_string()),
                    }
                }
            }
        }
        if self.times.is_empty() {
            d.error("at least one observation time is required");
        }
        for &(j1, j2) in &self.moments {
            if j1 + j2 == 0 {
                d.error(format!("moment ({j1},{j2}) has order 0"));
            }
            if j2 > 0 && self.times.len() < 2 {
                d.error(format!("moment ({j1},{j2}) needs a second time"));
            }
        }
        if self.models.contains(&ModelKind::ParticlesExact) {
            if let Some(&(j1, j2)) = self.moments.iter().find(|&&(j1, j2)| j1 + j2 > 3) {
                d.error(format!(
                    "moment ({j1},{j2}): exact particle moments stop at order 3"
                ));
            }
        }
        if self.m < 2 {
            d.error(format!(
                "m = {} realizations: at least 2 are needed",
                self.m
            ));
        }
        if self.models.is_empty() {
            d.error("no models selected");
        }
        for &l in &self.l {
            let grid = match Grid::line(l) {
                Ok(g) => g,
                Err(e) => {
                    d.error(e.to_string());
                    continue;
                }
            };
            let h = grid.spacing();
            if h < H_FLOOR * (1.0 - 1e-12) {
                d.warning(format!(
                    "L = {l}: h = {} is below 2π·2^-7 ≈ {}; Monte Carlo noise may dominate the discretisation error",
                    g17(h),
                    g17(H_FLOOR)
                ));
            }
            for &n in &self.n {
                if n < l {
                    d.error(format!("N = {n} is smaller than the {l} grid nodes"));
                } else if h < 1.0 / n as f64 {
                    d.warning(format!(
                        "L = {l}, N = {n}: h < N^-1, outside the scaling regime"
                    ));
                }
            }
        }
        d
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Note,
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub severity: Severity,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    pub items: Vec<Diagnostic>,
}

impl Diagnostics {
    fn push(&mut self, severity: Severity, message: impl Into<String>) {
        self.items.push(Diagnostic {
            severity,
            message: message.into(),
        });
    }

    fn note(&mut self, m: impl Into<String>) {
        self.push(Severity::Note, m)
    }

    fn warning(&mut self, m: impl Into<String>) {
        self.push(Severity::Warning, m)
    }

    fn error(&mut self, m: impl Into<String>) {
        self.push(Severity::Error, m)
    }

    pub fn is_ok(&self) -> bool {
        !self.items.iter().any(|d| d.severity == Severity::Error)
    }

    pub fn errors(&self) -> impl Iterator<Item = &Diagnostic> {
        self.items.iter().filter(|d| d.severity == Severity::Error)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &Diagnostic> {
        self.items
            .iter()
            .filter(|d| d.severity == Severity::Warning)
    }
}

impl fmt::Display for Diagnostics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for d in &self.items {
            let tag = match d.severity {
                Severity::Note => "note",
                Severity::Warning => "warning",
                Severity::Error => "error",
            };
            writeln!(f, "{tag}: {}", d.message)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_all_keys() {
        let text = "# comment\n\
                    preset = fig3-conv-h\n\
                    rho0 = cusp   # trailing\n\
                    n = 1024, 2048\n\
                    l = 8,16\n\
                    dt = 0.002\n\
                    times = 0.4, 0.2\n\
                    moments = 2,0; 1,1; 1\n\
                    models = particles, dk-linearised\n\
                    m = 100\n\
                    seed = 9\n\
                    out = results/x\n\
                    workers = 3\n\
                    scale = paper\n\
                    paper_literal_bdf2 = true\n\
                    normalize_l2 = yes\n";
        let cfg = ExperimentConfig::parse(text).unwrap();
        assert_eq!(cfg.preset.as_deref(), Some("fig3-conv-h"));
        assert_eq!(cfg.rho0, Profile::Cusp);
        assert_eq!(cfg.n, vec![1024, 2048]);
        assert_eq!(cfg.l, vec![8, 16]);
        assert_eq!(cfg.moments, vec![(2, 0), (1, 1), (1, 0)]);
        assert_eq!(
            cfg.models,
            vec![ModelKind::Particles, ModelKind::DkLinearised]
        );
        assert_eq!(cfg.scale, Scale::Paper);
        assert!(cfg.paper_literal_bdf2 && cfg.normalize_l2);
        assert_eq!(ExperimentConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn default_round_trips() {
        let cfg = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::parse(&cfg.to_text()).unwrap(), cfg);
        assert_eq!(ExperimentConfig::parse("").unwrap(), cfg);
    }

    #[test]
    fn parse_errors_carry_lines() {
        let cases = [
            ("n = 5\nbogus = 1\n", 2),
            ("n = x\n", 1),
            ("\n\nn\n", 3),
            ("n = 1\nn = 2\n", 2),
            ("moments = 1,2,3\n", 1),
            ("models = walkers\n", 1),
            ("paper_literal_bdf2 = maybe\n", 1),
            ("l =\n", 1),
        ];
        for (text, expect) in cases {
            match ExperimentConfig::parse(text) {
                Err(Error::Config { line, .. }) => assert_eq!(line, expect, "{text:?}"),
                other => panic!("{text:?}: {other:?}"),
            }
        }
    }

    #[test]
    fn validation_examples() {
        let mut cfg = ExperimentConfig {
            times: vec![0.4],
            moments: vec![(2, 0)],
            ..Default::default()
        };
        let d = cfg.validate();
        assert!(d.is_ok(), "{d}");
        assert!(d.items.iter().any(|x| x.message.contains("400 steps")));

        cfg.l = vec![256];
        assert_eq!(cfg.validate().warnings().count(), 1);

        cfg.n = vec![100];
        assert!(cfg
            .validate()
            .errors()
            .any(|e| e.message.contains("smaller than the 256 grid nodes")));

        let exact = ExperimentConfig {
            moments: vec![(2, 0), (3, 1)],
            models: vec![ModelKind::ParticlesExact, ModelKind::Dk],
            ..Default::default()
        };
        assert!(exact
            .validate()
            .errors()
            .any(|e| e.message.contains("order 3")));

        let bad = ExperimentConfig {
            dt: 0.0007,
            l: vec![7],
            m: 1,
            ..Default::default()
        };
        let d = bad.validate();
        assert!(d.errors().count() >= 3, "{d}");
    }

    #[test]
    fn floor_is_not_flagged() {
        let cfg = ExperimentConfig {
            l: vec![128],
            n: vec![524_291],
            ..Default::default()
        };
        assert_eq!(cfg.validate().warnings().count(), 0);
    }
}
