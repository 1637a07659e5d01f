//! Finite populations of (observed tuple, latent value) records.
//!
//! A population is a finite list of records, each carrying an observed tuple
//! `x`, an optional latent value `x*`, and a probability. The central
//! structural condition is that observed tuples are pairwise distinct, so
//! the map from observables to unobservables is a function; [`check_leaves`]
//! reports whether it holds and which record pairs collide when it does not.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

use crate::prob::Prob;

/// Significant decimal digits retained when canonicalizing observed values.
const CANONICAL_DIGITS: i32 = 12;

#[derive(Debug, Error)]
pub enum PopulationError {
    #[error("non-finite value in observed tuple")]
    NonFiniteValue,
    #[error("bad distribution: {0}")]
    BadDistribution(String),
    #[error("observed tuples are not pairwise distinct ({} collisions)", .0.collisions.len())]
    LeavesViolation(LeavesReport),
}

/// Round to `CANONICAL_DIGITS` significant decimal digits, mapping -0.0 to 0.0.
///
/// File input and lattice arithmetic introduce sub-picoscale noise; comparing
/// canonicalized values keeps tuple distinctness deterministic at desk scale.
pub(crate) fn canonical(x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let magnitude = x.abs().log10().floor() as i32;
    let scale = 10f64.powi(CANONICAL_DIGITS - 1 - magnitude);
    let r = (x * scale).round() / scale;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

/// Observed values of one record, canonicalized on construction.
///
/// Equality, ordering, and hashing are exact componentwise operations on the
/// canonical values, so tuples behave as map keys.
#[derive(Clone, Debug)]
pub struct ObservedTuple {
    values: Vec<f64>,
}

impl ObservedTuple {
    pub fn new(values: Vec<f64>) -> Result<Self, PopulationError> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(PopulationError::NonFiniteValue);
        }
        Ok(ObservedTuple {
            values: values.into_iter().map(canonical).collect(),
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn key(&self) -> impl Iterator<Item = u64> + '_ {
        self.values.iter().map(|v| v.to_bits())
    }
}

impl PartialEq for ObservedTuple {
    fn eq(&self, other: &Self) -> bool {
        self.values.len() == other.values.len() && self.key().eq(other.key())
    }
}

impl Eq for ObservedTuple {}

impl std::hash::Hash for ObservedTuple {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        for k in self.key() {
            k.hash(state);
        }
    }
}

impl PartialOrd for ObservedTuple {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ObservedTuple {
    fn cmp(&self, other: &Self) -> Ordering {
        for (a, b) in self.values.iter().zip(&other.values) {
            match a.total_cmp(b) {
                Ordering::Equal => {}
                ord => return ord,
            }
        }
        self.values.len().cmp(&other.values.len())
    }
}

impl fmt::Display for ObservedTuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, v) in self.values.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, ")")
    }
}

/// A latent value: a real scalar in the additive setting, or an integer
/// label into a support set in the discrete setting.
#[derive(Clone, Copy, Debug)]
pub enum LatentValue {
    Scalar(f64),
    Label(usize),
}

impl LatentValue {
    pub fn scalar(x: f64) -> Self {
        LatentValue::Scalar(canonical(x))
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            LatentValue::Scalar(x) => Some(*x),
            LatentValue::Label(_) => None,
        }
    }
}

impl PartialEq for LatentValue {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (LatentValue::Scalar(a), LatentValue::Scalar(b)) => {
                canonical(*a).to_bits() == canonical(*b).to_bits()
            }
            (LatentValue::Label(a), LatentValue::Label(b)) => a == b,
            _ => false,
        }
    }
}

impl Eq for LatentValue {}

impl PartialOrd for LatentValue {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for LatentValue {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (LatentValue::Scalar(a), LatentValue::Scalar(b)) => canonical(*a).total_cmp(&canonical(*b)),
            (LatentValue::Label(a), LatentValue::Label(b)) => a.cmp(b),
            (LatentValue::Scalar(_), LatentValue::Label(_)) => Ordering::Less,
            (LatentValue::Label(_), LatentValue::Scalar(_)) => Ordering::Greater,
        }
    }
}

impl fmt::Display for LatentValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LatentValue::Scalar(x) => write!(f, "{x}"),
            LatentValue::Label(k) => write!(f, "#{k}"),
        }
    }
}

/// One population record: observed tuple, latent value when known, weight.
#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub x: ObservedTuple,
    pub x_star: Option<LatentValue>,
    pub p: Prob,
}

/// A finite population of records with positive probabilities summing to one.
///
/// Distinctness of observed tuples is deliberately *not* enforced here:
/// populations violating it are constructible so the violation can be
/// detected and reported by [`check_leaves`]. Records with a known latent
/// value must be pairwise distinct as (tuple, latent) pairs; records with an
/// unknown latent may repeat an observed tuple, which is exactly the
/// researcher's view of such a violation.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentPopulation {
    records: Vec<Record>,
}

impl LatentPopulation {
    /// Build from records in the given order.
    pub fn from_records(records: Vec<Record>) -> Result<Self, PopulationError> {
        if records.is_empty() {
            return Err(PopulationError::BadDistribution("empty population".into()));
        }
        if let Some(r) = records.iter().find(|r| !r.p.is_positive()) {
            return Err(PopulationError::BadDistribution(format!(
                "nonpositive probability {} at tuple {}",
                r.p, r.x
            )));
        }
        let probs: Vec<Prob> = records.iter().map(|r| r.p).collect();
        if !Prob::sums_to_one(&probs, 1e-12) {
            return Err(PopulationError::BadDistribution(format!(
                "probabilities sum to {}, not 1",
                Prob::sum(&probs).value()
            )));
        }
        // Fully identified duplicate records are construction mistakes.
        let mut seen: std::collections::HashSet<(ObservedTuple, u8, u64)> = Default::default();
        for r in &records {
            if let Some(x_star) = r.x_star {
                let (variant, tag) = match x_star {
                    LatentValue::Scalar(v) => (0u8, canonical(v).to_bits()),
                    LatentValue::Label(k) => (1u8, k as u64),
                };
                if !seen.insert((r.x.clone(), variant, tag)) {
                    return Err(PopulationError::BadDistribution(format!(
                        "duplicate record ({}, {})",
                        r.x, x_star
                    )));
                }
            }
        }
        Ok(LatentPopulation { records })
    }

    /// Number of records (the population size).
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }
}

/// Collision report from [`check_leaves`].
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LeavesReport {
    pub holds: bool,
    /// Every pair (i, j), i < j, of record indices with equal observed tuples.
    pub collisions: Vec<(usize, usize)>,
}

impl fmt::Display for LeavesReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.holds {
            write!(f, "observed tuples pairwise distinct")
        } else {
            write!(f, "{} colliding record pairs", self.collisions.len())
        }
    }
}

/// Check that observed tuples are pairwise distinct.
///
/// Collisions are listed for every pair of records sharing a tuple,
/// including pairs whose latent values differ — those are precisely the
/// populations in which the latent value cannot be read off the observables.
pub fn check_leaves(pop: &LatentPopulation) -> LeavesReport {
    let mut groups: HashMap<&ObservedTuple, Vec<usize>> = HashMap::new();
    for (i, r) in pop.records().iter().enumerate() {
        groups.entry(&r.x).or_default().push(i);
    }
    let mut collisions = Vec::new();
    for indices in groups.values() {
        for a in 0..indices.len() {
            for b in a + 1..indices.len() {
                collisions.push((indices[a], indices[b]));
            }
        }
    }
    collisions.sort_unstable();
    LeavesReport {
        holds: collisions.is_empty(),
        collisions,
    }
}

/// Probability mass function over distinct observed tuples.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservedPMF {
    support: Vec<ObservedTuple>,
    probs: Vec<Prob>,
}

impl ObservedPMF {
    pub fn new(support: Vec<ObservedTuple>, probs: Vec<Prob>) -> Result<Self, PopulationError> {
        if support.len() != probs.len() || support.is_empty() {
            return Err(PopulationError::BadDistribution(
                "support/probability length mismatch".into(),
            ));
        }
        let mut seen = HashMap::new();
        for (i, t) in support.iter().enumerate() {
            if let Some(j) = seen.insert(t.clone(), i) {
                return Err(PopulationError::BadDistribution(format!(
                    "support tuples {j} and {i} coincide: {t}"
                )));
            }
        }
        if probs.iter().any(|p| !p.is_positive()) {
            return Err(PopulationError::BadDistribution(
                "nonpositive probability".into(),
            ));
        }
        if !Prob::sums_to_one(&probs, 1e-12) {
            return Err(PopulationError::BadDistribution(
                "probabilities do not sum to 1".into(),
            ));
        }
        Ok(ObservedPMF { support, probs })
    }

    pub fn support(&self) -> &[ObservedTuple] {
        &self.support
    }

    pub fn probs(&self) -> &[Prob] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }
}

/// Marginal pmf of the observed tuples.
///
/// Requires pairwise-distinct tuples: each support point then has exactly one
/// source record and carries that record's probability unchanged. Aggregating
/// across records that share a tuple would mix distinct latent values, which
/// is the failure this error reports.
pub fn marginal_pmf(pop: &LatentPopulation) -> Result<ObservedPMF, PopulationError> {
    let report = check_leaves(pop);
    if !report.holds {
        return Err(PopulationError::LeavesViolation(report));
    }
    ObservedPMF::new(
        pop.records().iter().map(|r| r.x.clone()).collect(),
        pop.records().iter().map(|r| r.p).collect(),
    )
}

/// Build a population from (tuple, latent, probability) triples, sorted into
/// canonical order (lexicographic by observed tuple, then latent value).
pub fn population_from_joint(
    triples: Vec<(ObservedTuple, LatentValue, Prob)>,
) -> Result<LatentPopulation, PopulationError> {
    let mut records: Vec<Record> = triples
        .into_iter()
        .map(|(x, x_star, p)| Record {
            x,
            x_star: Some(x_star),
            p,
        })
        .collect();
    records.sort_by(|a, b| a.x.cmp(&b.x).then_with(|| a.x_star.cmp(&b.x_star)));
    LatentPopulation::from_records(records)
}
