//! Text formats shared by the library and the command-line tool.
//!
//! * population/sample CSV: header `x1[,x2[,x3]][,x_star][,p]`, one record
//!   per row; probabilities accept decimals or exact rationals (`1/12`); a
//!   missing `p` column means the uniform distribution, kept exact.
//! * joint pmf CSV: header `x1,x2,x3,p`; supports are read off the listed
//!   values, missing combinations carry probability zero.
//! * model files: fixed field order, 15 significant digits, so outputs diff
//!   cleanly.
//! * generator spec files: `kind` plus the component distributions.
//!
//! All formats are UTF-8 with LF line endings; `#` starts a comment. Writers
//! are deterministic functions of their inputs.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::assign::{AdditiveComponents, AssignmentMap};
use crate::kotlarski::{CfError, Sample2};
use crate::population::{
    canonical, LatentPopulation, LatentValue, ObservedTuple, PopulationError, Record,
};
use crate::prob::Prob;
use crate::spectral3::{ComponentModel3, JointPMF3, SpectralError};
use crate::synth::{GaussianSpec, SynthError, ThreeMeasSpec, TwoMeasSpec};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Population(#[from] PopulationError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Cf(#[from] CfError),
}

fn perr<T>(line: usize, msg: impl Into<String>) -> Result<T, IoError> {
    Err(IoError::Parse {
        line,
        msg: msg.into(),
    })
}

/// Numbered, comment-stripped, nonblank lines.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, raw)| {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            None
        } else {
            Some((i + 1, line))
        }
    })
}

fn parse_f64(line: usize, tok: &str) -> Result<f64, IoError> {
    match tok.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => perr(line, format!("expected a finite number, found {tok:?}")),
    }
}

/// Probability token: `a/b` exact rational or a decimal.
fn parse_prob(line: usize, tok: &str) -> Result<Prob, IoError> {
    if let Some((n, d)) = tok.split_once('/') {
        let n: i64 = n
            .trim()
            .parse()
            .map_err(|_| IoError::Parse {
                line,
                msg: format!("bad rational numerator {n:?}"),
            })?;
        let d: i64 = d
            .trim()
            .parse()
            .map_err(|_| IoError::Parse {
                line,
                msg: format!("bad rational denominator {d:?}"),
            })?;
        if d == 0 {
            return perr(line, "rational with zero denominator");
        }
        Ok(Prob::exact(n, d))
    } else {
        Ok(Prob::from_f64(parse_f64(line, tok)?))
    }
}

fn fmt_value(v: f64) -> String {
    format!("{v}")
}

fn fmt_15(v: f64) -> String {
    format!("{v:.14e}")
}

// ---------------------------------------------------------------------------
// Population / sample CSV

/// Parsed population file: rows in input order plus the column layout.
#[derive(Clone, Debug)]
pub struct PopulationFile {
    pub dims: usize,
    pub has_x_star: bool,
    pub has_p: bool,
    pub rows: Vec<FileRow>,
}

#[derive(Clone, Debug)]
pub struct FileRow {
    pub x: Vec<f64>,
    pub x_star: Option<f64>,
    pub p: Option<Prob>,
}

pub fn parse_population(text: &str) -> Result<PopulationFile, IoError> {
    let mut lines = content_lines(text);
    let (hline, header) = match lines.next() {
        Some(h) => h,
        None => return perr(1, "empty file"),
    };
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let dims = cols.iter().take_while(|c| c.starts_with('x') && c != &&"x_star").count();
    let expect_x: Vec<String> = (1..=dims).map(|i| format!("x{i}")).collect();
    if dims == 0 || dims > 3 || cols[..dims] != expect_x[..] {
        return perr(
            hline,
            format!("header must start with x1[,x2[,x3]], found {header:?}"),
        );
    }
    let mut rest = cols[dims..].iter();
    let mut has_x_star = false;
    let mut has_p = false;
    match (rest.next(), rest.next(), rest.next()) {
        (None, _, _) => {}
        (Some(&"x_star"), None, _) => has_x_star = true,
        (Some(&"p"), None, _) => has_p = true,
        (Some(&"x_star"), Some(&"p"), None) => {
            has_x_star = true;
            has_p = true;
        }
        _ => return perr(hline, format!("unrecognized trailing columns in {header:?}")),
    }
    let width = dims + usize::from(has_x_star) + usize::from(has_p);
    let mut rows = Vec::new();
    for (ln, line) in lines {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != width {
            return perr(
                ln,
                format!("expected {width} fields, found {}", fields.len()),
            );
        }
        let x: Vec<f64> = fields[..dims]
            .iter()
            .map(|f| parse_f64(ln, f))
            .collect::<Result<_, _>>()?;
        let x_star = if has_x_star {
            Some(parse_f64(ln, fields[dims])?)
        } else {
            None
        };
        let p = if has_p {
            Some(parse_prob(ln, fields[width - 1])?)
        } else {
            None
        };
        rows.push(FileRow { x, x_star, p });
    }
    if rows.is_empty() {
        return perr(hline, "no data rows");
    }
    Ok(PopulationFile {
        dims,
        has_x_star,
        has_p,
        rows,
    })
}

impl PopulationFile {
    /// Records in input order; a missing probability column is the exact
    /// uniform distribution.
    pub fn to_population(&self) -> Result<LatentPopulation, IoError> {
        let n = self.rows.len() as i64;
        let records = self
            .rows
            .iter()
            .map(|r| {
                Ok(Record {
                    x: ObservedTuple::new(r.x.clone())?,
                    x_star: r.x_star.map(LatentValue::scalar),
                    p: r.p.unwrap_or(Prob::exact(1, n)),
                })
            })
            .collect::<Result<Vec<_>, PopulationError>>()?;
        Ok(LatentPopulation::from_records(records)?)
    }

    pub fn to_sample2(&self) -> Result<Sample2, IoError> {
        if self.dims != 2 {
            return perr(1, format!("expected 2 observed columns, found {}", self.dims));
        }
        let n = self.rows.len() as f64;
        let points: Vec<(f64, f64)> = self.rows.iter().map(|r| (r.x[0], r.x[1])).collect();
        let weights: Vec<f64> = self
            .rows
            .iter()
            .map(|r| r.p.map(|p| p.value()).unwrap_or(1.0 / n))
            .collect();
        Ok(Sample2::new(points, weights)?)
    }

    /// Interpret a 3-column file as a joint pmf: supports are the sorted
    /// distinct values, missing cells are zero, repeated cells rejected.
    pub fn to_pmf3(&self) -> Result<JointPMF3, IoError> {
        if self.dims != 3 {
            return perr(1, format!("expected 3 observed columns, found {}", self.dims));
        }
        let mut shared: Vec<f64> = Vec::new();
        let mut third: Vec<f64> = Vec::new();
        for r in &self.rows {
            shared.push(canonical(r.x[0]));
            shared.push(canonical(r.x[1]));
            third.push(canonical(r.x[2]));
        }
        shared.sort_by(f64::total_cmp);
        shared.dedup_by(|a, b| a.to_bits() == b.to_bits());
        third.sort_by(f64::total_cmp);
        third.dedup_by(|a, b| a.to_bits() == b.to_bits());
        let (k, l) = (shared.len(), third.len());
        let idx = |vals: &[f64], v: f64| vals.iter().position(|s| s.to_bits() == canonical(v).to_bits());
        let mut probs = vec![0.0f64; k * k * l];
        let mut seen = vec![false; k * k * l];
        for r in &self.rows {
            let (i, j, t) = match (idx(&shared, r.x[0]), idx(&shared, r.x[1]), idx(&third, r.x[2])) {
                (Some(i), Some(j), Some(t)) => (i, j, t),
                _ => return perr(1, "internal: support index"),
            };
            let flat = (i * k + j) * l + t;
            if seen[flat] {
                return perr(
                    1,
                    format!("cell ({}, {}, {}) listed twice", r.x[0], r.x[1], r.x[2]),
                );
            }
            seen[flat] = true;
            probs[flat] = r.p.map(|p| p.value()).unwrap_or(1.0 / self.rows.len() as f64);
        }
        Ok(JointPMF3::new(shared, third, probs)?)
    }
}

/// Serialize a population with its latent values and probabilities.
pub fn write_population(pop: &LatentPopulation) -> String {
    let dims = pop.records()[0].x.len();
    let has_x_star = pop.records().iter().any(|r| r.x_star.is_some());
    let mut out = String::new();
    for i in 1..=dims {
        if i > 1 {
            out.push(',');
        }
        out.push_str(&format!("x{i}"));
    }
    if has_x_star {
        out.push_str(",x_star");
    }
    out.push_str(",p\n");
    for r in pop.records() {
        let mut fields: Vec<String> = r.x.values().iter().map(|v| fmt_value(*v)).collect();
        if has_x_star {
            fields.push(match r.x_star {
                Some(LatentValue::Scalar(v)) => fmt_value(v),
                Some(LatentValue::Label(k)) => fmt_value(k as f64),
                None => String::new(),
            });
        }
        fields.push(r.p.to_string());
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

/// Serialize a joint pmf as the 3-column CSV (positive cells only).
pub fn write_pmf3(pmf: &JointPMF3) -> String {
    let mut out = String::from("x1,x2,x3,p\n");
    for i in 0..pmf.k() {
        for j in 0..pmf.k() {
            for t in 0..pmf.l() {
                let p = pmf.prob(i, j, t);
                if p > 0.0 {
                    out.push_str(&format!(
                        "{},{},{},{}\n",
                        fmt_value(pmf.support()[i]),
                        fmt_value(pmf.support()[j]),
                        fmt_value(pmf.support3()[t]),
                        fmt_value(p)
                    ));
                }
            }
        }
    }
    out
}

/// Input rows with the assigned latent column and diagnostics appended.
/// Row order is preserved; the assigned column is renamed when the input
/// already carries an `x_star` column.
pub fn write_assigned_csv(file: &PopulationFile, map: &AssignmentMap) -> Result<String, IoError> {
    let assigned_name = if file.has_x_star {
        "x_star_assigned"
    } else {
        "x_star"
    };
    let with_group = file
        .rows
        .first()
        .map(|r| {
            ObservedTuple::new(r.x.clone())
                .ok()
                .and_then(|t| map.get(&t).map(|a| a.group.is_some()))
                .unwrap_or(false)
        })
        .unwrap_or(false);
    let mut out = String::new();
    for i in 1..=file.dims {
        if i > 1 {
            out.push(',');
        }
        out.push_str(&format!("x{i}"));
    }
    if file.has_x_star {
        out.push_str(",x_star");
    }
    if file.has_p {
        out.push_str(",p");
    }
    out.push_str(&format!(",{assigned_name},posterior"));
    if with_group {
        out.push_str(",group");
    }
    out.push('\n');
    for r in &file.rows {
        let tuple = ObservedTuple::new(r.x.clone())?;
        let a = match map.get(&tuple) {
            Some(a) => a,
            None => return perr(1, format!("no assignment for tuple {tuple}")),
        };
        let mut fields: Vec<String> = r.x.iter().map(|v| fmt_value(*v)).collect();
        if file.has_x_star {
            fields.push(r.x_star.map(fmt_value).unwrap_or_default());
        }
        if file.has_p {
            fields.push(r.p.map(|p| p.to_string()).unwrap_or_default());
        }
        fields.push(match a.latent {
            LatentValue::Scalar(v) => fmt_value(v),
            LatentValue::Label(k) => fmt_value(k as f64),
        });
        fields.push(fmt_value(a.posterior));
        if with_group {
            fields.push(format!("{}", a.group.unwrap_or(0)));
        }
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    Ok(out)
}

/// Density output: `x,f` rows plus the truncation window as a comment.
pub fn write_density(density: &crate::kotlarski::DensityGrid) -> String {
    let mut out = format!(
        "# window [{}, {}]\nx,f\n",
        fmt_value(density.window.0),
        fmt_value(density.window.1)
    );
    for (x, f) in density.xs.iter().zip(&density.values) {
        out.push_str(&format!("{},{}\n", fmt_value(*x), fmt_15(*f)));
    }
    out
}

// ---------------------------------------------------------------------------
// Component-model files

const MODEL3_HEADER: &str = "latentid model3 v1";
const MODEL2_HEADER: &str = "latentid model2 v1";
const SYNTH_HEADER: &str = "latentid synth v1";

/// Fixed-order text form of a three-measurement model.
pub fn write_model3(spec: &ThreeMeasSpec) -> String {
    let m = &spec.model;
    let (k, l) = (m.k(), m.l());
    let mut out = format!("{MODEL3_HEADER}\nk {k}\nl {l}\n");
    let row = |vals: Vec<f64>| -> String {
        vals.iter().map(|v| fmt_15(*v)).collect::<Vec<_>>().join(" ")
    };
    out.push_str(&format!(
        "support {}\n",
        spec.support.iter().map(|v| fmt_value(*v)).collect::<Vec<_>>().join(" ")
    ));
    out.push_str(&format!(
        "support3 {}\n",
        spec.support3.iter().map(|v| fmt_value(*v)).collect::<Vec<_>>().join(" ")
    ));
    out.push_str(&format!(
        "latent {}\n",
        row(m.latent_probs.iter().copied().collect())
    ));
    for (name, mat, rows) in [("m1", &m.m1, k), ("m2", &m.m2, k), ("m3", &m.m3, l)] {
        for i in 0..rows {
            out.push_str(&format!(
                "{name} {}\n",
                row((0..k).map(|j| mat[(i, j)]).collect())
            ));
        }
    }
    out
}

pub fn parse_model3(text: &str) -> Result<ThreeMeasSpec, IoError> {
    let mut lines = content_lines(text);
    match lines.next() {
        Some((_, l)) if l == MODEL3_HEADER => {}
        Some((ln, l)) => return perr(ln, format!("expected {MODEL3_HEADER:?}, found {l:?}")),
        None => return perr(1, "empty file"),
    }
    let mut expect_scalar = |name: &str| -> Result<usize, IoError> {
        match lines.next() {
            Some((ln, l)) => {
                let mut toks = l.split_whitespace();
                if toks.next() != Some(name) {
                    return perr(ln, format!("expected {name}"));
                }
                let v: usize = toks
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or(IoError::Parse {
                        line: ln,
                        msg: format!("bad {name}"),
                    })?;
                Ok(v)
            }
            None => perr(1, format!("missing {name}")),
        }
    };
    let k = expect_scalar("k")?;
    let l = expect_scalar("l")?;
    let mut expect_row = |name: &str, len: usize| -> Result<Vec<f64>, IoError> {
        match lines.next() {
            Some((ln, line)) => {
                let mut toks = line.split_whitespace();
                if toks.next() != Some(name) {
                    return perr(ln, format!("expected a {name} line, found {line:?}"));
                }
                let vals: Vec<f64> = toks
                    .map(|t| parse_f64(ln, t))
                    .collect::<Result<_, _>>()?;
                if vals.len() != len {
                    return perr(ln, format!("{name}: expected {len} values"));
                }
                Ok(vals)
            }
            None => perr(1, format!("missing {name} line")),
        }
    };
    let support = expect_row("support", k)?;
    let support3 = expect_row("support3", l)?;
    let latent = expect_row("latent", k)?;
    let mut read_mat = |name: &str, rows: usize| -> Result<DMatrix<f64>, IoError> {
        let mut data = Vec::with_capacity(rows * k);
        for _ in 0..rows {
            data.extend(expect_row(name, k)?);
        }
        Ok(DMatrix::from_row_slice(rows, k, &data))
    };
    let m1 = read_mat("m1", k)?;
    let m2 = read_mat("m2", k)?;
    let m3 = read_mat("m3", l)?;
    let model = ComponentModel3::new(DVector::from_vec(latent), m1, m2, m3)?;
    Ok(ThreeMeasSpec {
        support,
        support3,
        model,
    })
}

/// Fixed-order text form of the additive-model components.
pub fn write_model2(c: &AdditiveComponents) -> String {
    let mut out = format!("{MODEL2_HEADER}\n");
    for (e, p) in &c.eps1 {
        out.push_str(&format!("eps1 {} {}\n", fmt_value(*e), p));
    }
    for (xs, v, p) in &c.joint_latent_eps2 {
        out.push_str(&format!("joint {} {} {}\n", fmt_value(*xs), fmt_value(*v), p));
    }
    out
}

pub fn parse_model2(text: &str) -> Result<AdditiveComponents, IoError> {
    let mut lines = content_lines(text);
    match lines.next() {
        Some((_, l)) if l == MODEL2_HEADER => {}
        Some((ln, l)) => return perr(ln, format!("expected {MODEL2_HEADER:?}, found {l:?}")),
        None => return perr(1, "empty file"),
    }
    let mut eps1 = Vec::new();
    let mut joint = Vec::new();
    for (ln, line) in lines {
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["eps1", e, p] => eps1.push((parse_f64(ln, e)?, parse_prob(ln, p)?)),
            ["joint", xs, v, p] => joint.push((
                parse_f64(ln, xs)?,
                parse_f64(ln, v)?,
                parse_prob(ln, p)?,
            )),
            _ => return perr(ln, format!("unrecognized line {line:?}")),
        }
    }
    if eps1.is_empty() || joint.is_empty() {
        return perr(1, "model needs eps1 and joint entries");
    }
    Ok(AdditiveComponents {
        eps1,
        joint_latent_eps2: joint,
    })
}

// ---------------------------------------------------------------------------
// Generator spec files

/// A parsed generator spec.
#[derive(Clone, Debug)]
pub enum SynthSpec {
    TwoMeas(TwoMeasSpec),
    ThreeMeas(ThreeMeasSpec),
    Random3 { k: usize, l: usize, leaves: bool },
    Gaussian2(GaussianSpec),
}

pub fn parse_synth_spec(text: &str) -> Result<SynthSpec, IoError> {
    let mut lines = content_lines(text).peekable();
    match lines.next() {
        Some((_, l)) if l == SYNTH_HEADER => {}
        Some((ln, l)) => return perr(ln, format!("expected {SYNTH_HEADER:?}, found {l:?}")),
        None => return perr(1, "empty file"),
    }
    let kind = match lines.next() {
        Some((ln, l)) => match l.split_whitespace().collect::<Vec<_>>().as_slice() {
            ["kind", k] => k.to_string(),
            _ => return perr(ln, format!("expected kind, found {l:?}")),
        },
        None => return perr(1, "missing kind"),
    };
    // Remaining lines as (keyword, tokens).
    let mut entries: Vec<(usize, Vec<String>)> = Vec::new();
    for (ln, line) in lines {
        entries.push((ln, line.split_whitespace().map(String::from).collect()));
    }
    let find_scalar = |name: &str| -> Option<&(usize, Vec<String>)> {
        entries.iter().find(|(_, t)| t[0] == name)
    };
    match kind.as_str() {
        "two-meas" => {
            let mut latent = Vec::new();
            let mut eps1 = Vec::new();
            let mut eps2: BTreeMap<u64, Vec<(f64, Prob)>> = BTreeMap::new();
            for (ln, toks) in &entries {
                match toks.iter().map(String::as_str).collect::<Vec<_>>().as_slice() {
                    ["latent", v, p] => latent.push((parse_f64(*ln, v)?, parse_prob(*ln, p)?)),
                    ["eps1", v, p] => eps1.push((parse_f64(*ln, v)?, parse_prob(*ln, p)?)),
                    ["eps2", xs, v, p] => {
                        let xs = canonical(parse_f64(*ln, xs)?);
                        eps2.entry(xs.to_bits())
                            .or_default()
                            .push((parse_f64(*ln, v)?, parse_prob(*ln, p)?));
                    }
                    _ => return perr(*ln, "unrecognized two-meas line"),
                }
            }
            let eps2_given: Vec<Vec<(f64, Prob)>> = latent
                .iter()
                .map(|(xs, _)| {
                    eps2.get(&canonical(*xs).to_bits())
                        .cloned()
                        .ok_or(IoError::Parse {
                            line: 1,
                            msg: format!("no eps2 entries for latent value {xs}"),
                        })
                })
                .collect::<Result<_, _>>()?;
            Ok(SynthSpec::TwoMeas(TwoMeasSpec::new(latent, eps1, eps2_given)?))
        }
        "three-meas" => {
            let mut support = Vec::new();
            let mut support3 = Vec::new();
            let mut latent = Vec::new();
            let mut m1 = Vec::new();
            let mut m2 = Vec::new();
            let mut m3 = Vec::new();
            for (ln, toks) in &entries {
                let vals = |toks: &[String]| -> Result<Vec<f64>, IoError> {
                    toks.iter()
                        .map(|t| parse_prob(*ln, t).map(|p| p.value()))
                        .collect()
                };
                match toks[0].as_str() {
                    "support" => support = vals(&toks[1..])?,
                    "support3" => support3 = vals(&toks[1..])?,
                    "latent" => latent = vals(&toks[1..])?,
                    "m1" => m1.push(vals(&toks[1..])?),
                    "m2" => m2.push(vals(&toks[1..])?),
                    "m3" => m3.push(vals(&toks[1..])?),
                    _ => return perr(*ln, "unrecognized three-meas line"),
                }
            }
            let k = support.len();
            let l = support3.len();
            if latent.len() != k || m1.len() != k || m2.len() != k || m3.len() != l {
                return perr(1, "three-meas spec has inconsistent sizes");
            }
            let flat = |rows: &[Vec<f64>]| -> Result<Vec<f64>, IoError> {
                let mut out = Vec::new();
                for r in rows {
                    if r.len() != k {
                        return perr(1, "matrix row width mismatch");
                    }
                    out.extend(r);
                }
                Ok(out)
            };
            let model = ComponentModel3::new(
                DVector::from_vec(latent),
                DMatrix::from_row_slice(k, k, &flat(&m1)?),
                DMatrix::from_row_slice(k, k, &flat(&m2)?),
                DMatrix::from_row_slice(l, k, &flat(&m3)?),
            )?;
            Ok(SynthSpec::ThreeMeas(ThreeMeasSpec {
                support,
                support3,
                model,
            }))
        }
        "random3" => {
            let get = |name: &str| -> Result<usize, IoError> {
                match find_scalar(name) {
                    Some((ln, toks)) if toks.len() == 2 => {
                        toks[1].parse().map_err(|_| IoError::Parse {
                            line: *ln,
                            msg: format!("bad {name}"),
                        })
                    }
                    _ => perr(1, format!("missing {name}")),
                }
            };
            let leaves = match find_scalar("leaves") {
                Some((_, toks)) if toks.len() == 2 => toks[1] == "true",
                _ => false,
            };
            Ok(SynthSpec::Random3 {
                k: get("k")?,
                l: get("l")?,
                leaves,
            })
        }
        "gaussian2" => {
            let get = |name: &str, default: f64| -> Result<f64, IoError> {
                match find_scalar(name) {
                    Some((ln, toks)) if toks.len() == 2 => parse_f64(*ln, &toks[1]),
                    _ => Ok(default),
                }
            };
            Ok(SynthSpec::Gaussian2(GaussianSpec {
                sigma_latent: get("sigma_latent", 1.0)?,
                sigma_eps1: get("sigma_eps1", 0.5)?,
                sigma_eps2: get("sigma_eps2", 0.5)?,
                step: get("step", 0.05)?,
                half_width: get("half_width", 5.0)?,
            }))
        }
        other => perr(1, format!("unknown kind {other:?}")),
    }
}

/// Serialize a two-measurement generator spec.
pub fn write_two_meas_spec(spec: &TwoMeasSpec) -> String {
    let mut out = format!("{SYNTH_HEADER}\nkind two-meas\n");
    for (v, p) in &spec.latent {
        out.push_str(&format!("latent {} {}\n", fmt_value(*v), p));
    }
    for (v, p) in &spec.eps1 {
        out.push_str(&format!("eps1 {} {}\n", fmt_value(*v), p));
    }
    for ((xs, _), pmf) in spec.latent.iter().zip(&spec.eps2_given) {
        for (v, p) in pmf {
            out.push_str(&format!(
                "eps2 {} {} {}\n",
                fmt_value(*xs),
                fmt_value(*v),
                p
            ));
        }
    }
    out
}

/// Serialize a sample of `(x1, x2)` pairs.
pub fn write_sample2(sample: &Sample2) -> String {
    let mut out = String::from("x1,x2,p\n");
    for ((x1, x2), w) in sample.points().iter().zip(sample.weights()) {
        out.push_str(&format!(
            "{},{},{}\n",
            fmt_value(*x1),
            fmt_value(*x2),
            fmt_value(*w)
        ));
    }
    out
}
