//! CSV tables written by experiments and their parsers.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use csv::{ReaderBuilder, StringRecord};

use crate::dk::NegativePartReport;
use crate::error::{Error, Result};
use crate::fmt::g17;
use crate::moments::{ModelKind, MomentEstimate};

pub const MOMENT_HEADER: &str = "model,j1,j2,T1,T2,h,N,M,mean,stderr";
pub const CONVERGENCE_HEADER: &str = "axis,value,j1,j2,model,reference,diff,stderr,significant";
pub const SLOPE_HEADER: &str =
    "axis,j1,j2,model,reference,rows,significant_rows,slope,half_width,status";
pub const MONITOR_HEADER: &str = crate::dk::MONITOR_HEADER;
pub const NEGATIVE_PART_HEADER: &str =
    "N,h,realizations,mean_sup_neg_norm,max_sup_neg_norm,fraction_negative,envelope,scaling_regime";

/// Sweep parameter of a convergence table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    H,
    N,
}

impl Axis {
    pub fn tag(self) -> &'static str {
        match self {
            Axis::H => "h",
            Axis::N => "N",
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "h" => Ok(Axis::H),
            "N" => Ok(Axis::N),
            _ => Err(Error::InvalidInput(format!("unknown axis {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentRow {
    pub model: ModelKind,
    pub j1: u32,
    pub j2: u32,
    pub t1: f64,
    pub t2: f64,
    pub h: f64,
    pub n: usize,
    pub m: usize,
    pub mean: f64,
    pub stderr: f64,
}

impl MomentRow {
    /// Flatten an estimate with one or two observables.
    pub fn from_estimate(e: &MomentEstimate) -> Result<Self> {
        let entries = e.spec.entries();
        let (j1, t1, j2, t2) = match entries {
            [a] => (a.exponent, a.time, 0, a.time),
            [a, b] => (a.exponent, a.time, b.exponent, b.time),
            _ => {
                return Err(Error::InvalidInput(
                    "moment table rows hold at most two observables".into(),
                ))
            }
        };
        Ok(Self {
            model: e.model,
            j1,
            j2,
            t1,
            t2,
            h: e.h,
            n: e.particles,
            m: e.realizations,
            mean: e.mean,
            stderr: e.stderr,
        })
    }
}

/// One point of a convergence table. `reference` is the model subtracted, or
/// `None` when the row holds the magnitude of `model`'s moment itself.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub axis: Axis,
    pub value: f64,
    pub j1: u32,
    pub j2: u32,
    pub model: ModelKind,
    pub reference: Option<ModelKind>,
    pub diff: f64,
    pub stderr: f64,
    pub significant: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitStatus {
    Fitted,
    NoiseLimited,
}

impl FitStatus {
    pub fn tag(self) -> &'static str {
        match self {
            FitStatus::Fitted => "fitted",
            FitStatus::NoiseLimited => "noise-limited",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeRow {
    pub axis: Axis,
    pub j1: u32,
    pub j2: u32,
    pub model: ModelKind,
    pub reference: Option<ModelKind>,
    pub rows: usize,
    pub significant_rows: usize,
    pub slope: Option<f64>,
    pub half_width: Option<f64>,
    pub status: FitStatus,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonitorRow {
    pub realization: u64,
    pub sup_neg_norm: f64,
    pub min_density: f64,
    pub mass_drift: f64,
}

fn reference_tag(r: Option<ModelKind>) -> &'static str {
    r.map_or("none", ModelKind::tag)
}

fn opt(v: Option<f64>) -> String {
    v.map(g17).unwrap_or_default()
}

pub fn write_moment_csv<W: Write>(rows: &[MomentRow], mut w: W) -> Result<()> {
    writeln!(w, "{MOMENT_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            r.model,
            r.j1,
            r.j2,
            g17(r.t1),
            g17(r.t2),
            g17(r.h),
            r.n,
            r.m,
            g17(r.mean),
            g17(r.stderr)
        )?;
    }
    Ok(())
}

pub fn write_convergence_csv<W: Write>(rows: &[ConvergenceRow], mut w: W) -> Result<()> {
    writeln!(w, "{CONVERGENCE_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            r.axis,
            g17(r.value),
            r.j1,
            r.j2,
            r.model,
            reference_tag(r.reference),
            g17(r.diff),
            g17(r.stderr),
            r.significant
        )?;
    }
    Ok(())
}

pub fn write_slope_csv<W: Write>(rows: &[SlopeRow], mut w: W) -> Result<()> {
    writeln!(w, "{SLOPE_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            r.axis,
            r.j1,
            r.j2,
            r.model,
            reference_tag(r.reference),
            r.rows,
            r.significant_rows,
            opt(r.slope),
            opt(r.half_width),
            r.status.tag()
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NegativePartRow {
    pub n: usize,
    pub h: f64,
    pub report: NegativePartReport,
}

pub fn write_negative_part_csv<W: Write>(rows: &[NegativePartRow], mut w: W) -> Result<()> {
    writeln!(w, "{NEGATIVE_PART_HEADER}")?;
    for r in rows {
        let p = &r.report;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.n,
            g17(r.h),
            p.realizations,
            g17(p.mean_sup_neg_norm),
            g17(p.max_sup_neg_norm),
            g17(p.fraction_negative),
            g17(p.envelope),
            p.scaling_regime
        )?;
    }
    Ok(())
}

fn parse_err(line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        line: line as usize,
        message: message.into(),
    }
}

struct Fields<'a> {
    record: &'a StringRecord,
    line: u64,
    names: &'a [&'a str],
}

impl Fields<'_> {
    fn get<T: FromStr>(&self, i: usize) -> Result<T> {
        let raw = &self.record[i];
        raw.parse().map_err(|_| {
            parse_err(
                self.line,
                format!("{}: cannot parse {raw:?}", self.names[i]),
            )
        })
    }

    fn optional(&self, i: usize) -> Result<Option<f64>> {
        if self.record[i].is_empty() {
            Ok(None)
        } else {
            self.get(i).map(Some)
        }
    }

    fn model(&self, i: usize) -> Result<ModelKind> {
        self.record[i]
            .parse()
            .map_err(|e: Error| parse_err(self.line, e.to_string()))
    }

    fn reference(&self, i: usize) -> Result<Option<ModelKind>> {
        match &self.record[i] {
            "none" => Ok(None),
            _ => self.model(i).map(Some),
        }
    }

    fn axis(&self, i: usize) -> Result<Axis> {
        self.record[i]
            .parse()
            .map_err(|e: Error| parse_err(self.line, e.to_string()))
    }
}

fn read_rows<T>(
    text: &str,
    header: &str,
    mut row: impl FnMut(&Fields<'_>) -> Result<T>,
) -> Result<Vec<T>> {
    let names: Vec<&str> = header.split(',').collect();
    let mut reader = ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let found = reader
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    if found.iter().ne(names.iter().copied()) {
        return Err(parse_err(1, format!("expected header {header:?}")));
    }
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        out.push(row(&Fields {
            record: &record,
            line,
            names: &names,
        })?);
    }
    Ok(out)
}

pub fn parse_moment_csv(text: &str) -> Result<Vec<MomentRow>> {
    read_rows(text, MOMENT_HEADER, |f| {
        Ok(MomentRow {
            model: f.model(0)?,
            j1: f.get(1)?,
            j2: f.get(2)?,
            t1: f.get(3)?,
            t2: f.get(4)?,
            h: f.get(5)?,
            n: f.get(6)?,
            m: f.get(7)?,
            mean: f.get(8)?,
            stderr: f.get(9)?,
        })
    })
}

pub fn parse_convergence_csv(text: &str) -> Result<Vec<ConvergenceRow>> {
    read_rows(text, CONVERGENCE_HEADER, |f| {
        Ok(ConvergenceRow {
            axis: f.axis(0)?,
            value: f.get(1)?,
            j1: f.get(2)?,
            j2: f.get(3)?,
            model: f.model(4)?,
            reference: f.reference(5)?,
            diff: f.get(6)?,
            stderr: f.get(7)?,
            significant: f.get(8)?,
        })
    })
}

pub fn parse_slope_csv(text: &str) -> Result<Vec<SlopeRow>> {
    read_rows(text, SLOPE_HEADER, |f| {
        let status = match &f.record[9] {
            "fitted" => FitStatus::Fitted,
            "noise-limited" => FitStatus::NoiseLimited,
            other => return Err(parse_err(f.line, format!("unknown status {other:?}"))),
        };
        Ok(SlopeRow {
            axis: f.axis(0)?,
            j1: f.get(1)?,
            j2: f.get(2)?,
            model: f.model(3)?,
            reference: f.reference(4)?,
            rows: f.get(5)?,
            significant_rows: f.get(6)?,
            slope: f.optional(7)?,
            half_width: f.optional(8)?,
            status,
        })
    })
}

pub fn parse_negative_part_csv(text: &str) -> Result<Vec<NegativePartRow>> {
    read_rows(text, NEGATIVE_PART_HEADER, |f| {
        Ok(NegativePartRow {
            n: f.get(0)?,
            h: f.get(1)?,
            report: NegativePartReport {
                realizations: f.get(2)?,
                mean_sup_neg_norm: f.get(3)?,
                max_sup_neg_norm: f.get(4)?,
                fraction_negative: f.get(5)?,
                envelope: f.get(6)?,
                scaling_regime: f.get(7)?,
            },
        })
    })
}

pub fn parse_monitor_csv(text: &str) -> Result<Vec<MonitorRow>> {
    read_rows(text, MONITOR_HEADER, |f| {
        Ok(MonitorRow {
            realization: f.get(0)?,
            sup_neg_norm: f.get(1)?,
            min_density: f.get(2)?,
            mass_drift: f.get(3)?,
        })
    })
}
