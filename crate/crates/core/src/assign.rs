//! Observation-level assignment: map each observed tuple to its unique
//! latent value using an identified model.
//!
//! Three routes: the posterior mode under a discrete three-measurement
//! model (degenerate whenever the population's observed tuples are
//! distinct), within-group means for the additive two-measurement model,
//! and residuals of a weighted least-squares fit.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::exec;
use crate::linalg;
use crate::population::{
    check_leaves, LatentPopulation, LatentValue, ObservedTuple, PopulationError,
};
use crate::prob::{rat_from_f64, Prob, Rat};
use crate::spectral3::{verify_fit, ComponentModel3, JointPMF3};

#[derive(Debug, Error)]
pub enum AssignError {
    #[error("latent value not unique for {} observed tuple(s): {detail}", tuples.len())]
    AmbiguousAssignment {
        tuples: Vec<ObservedTuple>,
        detail: String,
    },
    #[error("no component combination factors observation {tuple} with probability {p}")]
    NoFactorization { tuple: ObservedTuple, p: f64 },
    #[error("observation {tuple} lies outside the model support")]
    OffSupport { tuple: ObservedTuple },
    #[error("observation {tuple} has zero probability under the model")]
    ZeroPosterior { tuple: ObservedTuple },
    #[error("design matrix singular: smallest singular value {min_sv:.3e}")]
    SingularDesign { min_sv: f64 },
    #[error("model does not fit the pmf: reconstruction error {max_abs_err:.3e}")]
    PoorFit { max_abs_err: f64 },
    #[error(transparent)]
    Population(#[from] PopulationError),
}

/// One assignment: the latent value, the posterior mass it received (1 when
/// the assignment is degenerate), and the group index for group-mean mode.
#[derive(Clone, Debug, PartialEq)]
pub struct Assignment {
    pub latent: LatentValue,
    pub posterior: f64,
    pub group: Option<usize>,
}

/// Function from observed tuples to latent values, with diagnostics.
/// Keys are pairwise distinct and held in canonical (sorted) order.
#[derive(Clone, Debug, PartialEq)]
pub struct AssignmentMap {
    entries: Vec<(ObservedTuple, Assignment)>,
}

impl AssignmentMap {
    fn from_entries(mut entries: Vec<(ObservedTuple, Assignment)>) -> Self {
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        debug_assert!(entries.windows(2).all(|w| w[0].0 != w[1].0));
        AssignmentMap { entries }
    }

    pub fn get(&self, tuple: &ObservedTuple) -> Option<&Assignment> {
        self.entries
            .binary_search_by(|(t, _)| t.cmp(tuple))
            .ok()
            .map(|i| &self.entries[i].1)
    }

    pub fn iter(&self) -> impl Iterator<Item = &(ObservedTuple, Assignment)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Assignments under a discrete three-measurement model: posterior mode of
/// the latent class given `(x1, x2, x3)`.
///
/// Preconditions enforced here: the model reconstructs the pmf within
/// `fit_tol`, and the population's observed tuples are pairwise distinct.
/// An assignment whose posterior is not degenerate (mode mass below
/// `1 - 1e-9`) means two latent classes generate the same observable — the
/// distribution-level counterpart of duplicate observations — and every such
/// tuple is reported.
pub fn assign_discrete3(
    pmf: &JointPMF3,
    model: &ComponentModel3,
    pop: &LatentPopulation,
    fit_tol: f64,
) -> Result<AssignmentMap, AssignError> {
    let fit = verify_fit(pmf, model, fit_tol);
    if !fit.ok {
        return Err(AssignError::PoorFit {
            max_abs_err: fit.max_abs_err,
        });
    }
    let leaves = check_leaves(pop);
    if !leaves.holds {
        let mut tuples: Vec<ObservedTuple> = leaves
            .collisions
            .iter()
            .map(|&(i, _)| pop.records()[i].x.clone())
            .collect();
        tuples.dedup();
        return Err(AssignError::AmbiguousAssignment {
            tuples,
            detail: "population repeats observed tuples".into(),
        });
    }

    let records = pop.records();
    let results = exec::map_indexed(records.len(), |idx| {
        let tuple = &records[idx].x;
        assign_one_discrete3(pmf, model, tuple)
    });

    let mut entries = Vec::with_capacity(records.len());
    let mut ambiguous: Vec<(ObservedTuple, f64)> = Vec::new();
    for (record, res) in records.iter().zip(results) {
        match res? {
            One::Assigned(a) => entries.push((record.x.clone(), a)),
            One::Ambiguous(mass) => ambiguous.push((record.x.clone(), mass)),
        }
    }
    if !ambiguous.is_empty() {
        let detail = ambiguous
            .iter()
            .map(|(t, m)| format!("{t} mode mass {m:.6}"))
            .collect::<Vec<_>>()
            .join("; ");
        return Err(AssignError::AmbiguousAssignment {
            tuples: ambiguous.into_iter().map(|(t, _)| t).collect(),
            detail,
        });
    }
    Ok(AssignmentMap::from_entries(entries))
}

enum One {
    Assigned(Assignment),
    Ambiguous(f64),
}

fn assign_one_discrete3(
    pmf: &JointPMF3,
    model: &ComponentModel3,
    tuple: &ObservedTuple,
) -> Result<One, AssignError> {
    let v = tuple.values();
    if v.len() != 3 {
        return Err(AssignError::OffSupport { tuple: tuple.clone() });
    }
    let (i, j, l) = match (pmf.index_of(v[0]), pmf.index_of(v[1]), pmf.index_of3(v[2])) {
        (Some(i), Some(j), Some(l)) => (i, j, l),
        _ => return Err(AssignError::OffSupport { tuple: tuple.clone() }),
    };
    let k = model.k();
    let mut weights = vec![0.0; k];
    let mut total = 0.0;
    for c in 0..k {
        let w = model.m1[(i, c)] * model.m2[(j, c)] * model.m3[(l, c)] * model.latent_probs[c];
        weights[c] = w;
        total += w;
    }
    if total <= 0.0 {
        return Err(AssignError::ZeroPosterior { tuple: tuple.clone() });
    }
    let mut best = 0;
    for c in 1..k {
        if weights[c] > weights[best] {
            best = c;
        }
    }
    let mass = weights[best] / total;
    if mass < 1.0 - 1e-9 {
        return Ok(One::Ambiguous(mass));
    }
    Ok(One::Assigned(Assignment {
        latent: LatentValue::scalar(pmf.support()[best]),
        posterior: mass,
        group: None,
    }))
}

/// Identified components of the additive two-measurement model: the first
/// error's pmf and the joint pmf of (latent, second error).
#[derive(Clone, Debug, PartialEq)]
pub struct AdditiveComponents {
    pub eps1: Vec<(f64, Prob)>,
    pub joint_latent_eps2: Vec<(f64, f64, Prob)>,
}

/// Group-mean assignment for the additive model.
///
/// Each observation `(x1, x2)` with probability `p` is matched to the unique
/// component combination `(e, x*, v)` satisfying `x1 = x* + e`,
/// `x2 = x* + v`, and `f_eps1(e) * f_joint(x*, v) = p`; observations sharing
/// `(x*, e)` form a group, and the group's weighted mean of `x2` — equal to
/// the latent value because the second error has zero conditional mean — is
/// the assigned value. The mean is computed in exact rational arithmetic
/// whenever the probabilities and coordinates allow it.
pub fn assign_group_mean(
    pop2: &LatentPopulation,
    components: &AdditiveComponents,
) -> Result<AssignmentMap, AssignError> {
    let leaves = check_leaves(pop2);
    if !leaves.holds {
        let mut tuples: Vec<ObservedTuple> = leaves
            .collisions
            .iter()
            .map(|&(i, _)| pop2.records()[i].x.clone())
            .collect();
        tuples.dedup();
        return Err(AssignError::AmbiguousAssignment {
            tuples,
            detail: "population repeats observed tuples".into(),
        });
    }

    // Candidate match per record.
    struct Match {
        tuple: ObservedTuple,
        x2: f64,
        p: Prob,
        group_key: (u64, u64), // canonical bits of (x*, e)
        latent: f64,
    }
    let mut matches: Vec<Match> = Vec::with_capacity(pop2.len());
    let mut ambiguous = Vec::new();
    for record in pop2.records() {
        let v = record.x.values();
        if v.len() != 2 {
            return Err(AssignError::OffSupport {
                tuple: record.x.clone(),
            });
        }
        let (x1, x2) = (v[0], v[1]);
        let mut found: Vec<(f64, f64, f64)> = Vec::new(); // (e, x*, v)
        for (e, pe) in &components.eps1 {
            let xs = x1 - e;
            let vv = x2 - xs;
            for (jxs, jv, pj) in &components.joint_latent_eps2 {
                if same_value(*jxs, xs) && same_value(*jv, vv) {
                    let product = pe.mul(pj);
                    if probs_match(&product, &record.p) {
                        found.push((*e, xs, vv));
                    }
                }
            }
        }
        match found.len() {
            0 => {
                return Err(AssignError::NoFactorization {
                    tuple: record.x.clone(),
                    p: record.p.value(),
                })
            }
            1 => {
                let (e, xs, _) = found[0];
                matches.push(Match {
                    tuple: record.x.clone(),
                    x2,
                    p: record.p,
                    group_key: (
                        crate::population::canonical(xs).to_bits(),
                        crate::population::canonical(e).to_bits(),
                    ),
                    latent: xs,
                });
            }
            _ => ambiguous.push(record.x.clone()),
        }
    }
    if !ambiguous.is_empty() {
        return Err(AssignError::AmbiguousAssignment {
            tuples: ambiguous,
            detail: "multiple component combinations match".into(),
        });
    }

    // Deterministic group numbering: sort the keys.
    let mut keys: Vec<(u64, u64)> = matches.iter().map(|m| m.group_key).collect();
    keys.sort_unstable();
    keys.dedup();
    let key_index: HashMap<(u64, u64), usize> =
        keys.iter().enumerate().map(|(i, k)| (*k, i)).collect();

    // Weighted mean of x2 per group, exact where possible.
    let mut groups: HashMap<(u64, u64), Vec<&Match>> = HashMap::new();
    for m in &matches {
        groups.entry(m.group_key).or_default().push(m);
    }
    let mut group_mean: HashMap<(u64, u64), f64> = HashMap::new();
    for (key, members) in &groups {
        group_mean.insert(*key, weighted_mean(members.iter().map(|m| (m.x2, m.p))));
    }

    let entries = matches
        .iter()
        .map(|m| {
            let mean = group_mean[&m.group_key];
            debug_assert!((mean - m.latent).abs() < 1e-9);
            (
                m.tuple.clone(),
                Assignment {
                    latent: LatentValue::scalar(mean),
                    posterior: 1.0,
                    group: Some(key_index[&m.group_key]),
                },
            )
        })
        .collect();
    Ok(AssignmentMap::from_entries(entries))
}

// Tuple coordinates are canonicalized to twelve significant digits, so a
// reconstructed component value can sit a rounding step away from the
// support value it names; component supports are far apart compared to that.
fn same_value(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

fn probs_match(a: &Prob, b: &Prob) -> bool {
    match (a.rat(), b.rat()) {
        (Some(x), Some(y)) => x == y,
        _ => {
            let (x, y) = (a.value(), b.value());
            (x - y).abs() <= 1e-9 * x.abs().max(y.abs()).max(1e-300)
        }
    }
}

/// Weighted mean, exact when every weight carries a rational and every value
/// converts to one.
fn weighted_mean<'a>(items: impl Iterator<Item = (f64, Prob)> + Clone) -> f64 {
    let exact: Option<(Rat, Rat)> =
        items
            .clone()
            .try_fold((Rat::new(0, 1), Rat::new(0, 1)), |(num, den), (x, p)| {
                let rx = rat_from_f64(x)?;
                let rp = p.rat()?;
                let term = num_traits::CheckedMul::checked_mul(&rx, &rp)?;
                Some((
                    num_traits::CheckedAdd::checked_add(&num, &term)?,
                    num_traits::CheckedAdd::checked_add(&den, &rp)?,
                ))
            });
    if let Some((num, den)) = exact {
        if den != Rat::new(0, 1) {
            let mean = num / den;
            return num_traits::ToPrimitive::to_f64(&mean)
                .unwrap_or(*mean.numer() as f64 / *mean.denom() as f64);
        }
    }
    let (mut num, mut den) = (0.0, 0.0);
    for (x, p) in items {
        num += p.value() * x;
        den += p.value();
    }
    num / den
}

/// Weighted least-squares population: rows of `(y, regressors)` with
/// positive weights (normalized on construction).
#[derive(Clone, Debug)]
pub struct RegressionProblem {
    rows: Vec<(f64, Vec<f64>)>,
    weights: Vec<f64>,
}

impl RegressionProblem {
    pub fn new(rows: Vec<(f64, Vec<f64>)>, weights: Vec<f64>) -> Result<Self, AssignError> {
        if rows.is_empty() || rows.len() != weights.len() {
            return Err(AssignError::Population(PopulationError::BadDistribution(
                "empty regression population or weight mismatch".into(),
            )));
        }
        let dim = rows[0].1.len();
        if dim == 0 || rows.iter().any(|(y, w)| !y.is_finite() || w.len() != dim) {
            return Err(AssignError::Population(PopulationError::BadDistribution(
                "inconsistent regressor dimensions".into(),
            )));
        }
        if weights.iter().any(|w| !(*w > 0.0)) {
            return Err(AssignError::Population(PopulationError::BadDistribution(
                "weights must be positive".into(),
            )));
        }
        let total: f64 = weights.iter().sum();
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(RegressionProblem { rows, weights })
    }

    pub fn rows(&self) -> &[(f64, Vec<f64>)] {
        &self.rows
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// Solve the weighted normal equations and assign each observation its
/// residual as the latent value.
///
/// The recovered residuals are orthogonal to the regressors under the
/// population weights, which is the defining moment condition.
pub fn ols_residual_assign(
    prob: &RegressionProblem,
) -> Result<(Vec<f64>, AssignmentMap), AssignError> {
    let d = prob.rows[0].1.len();
    let mut m = DMatrix::<f64>::zeros(d, d);
    let mut rhs = DVector::<f64>::zeros(d);
    for ((y, w), p) in prob.rows.iter().zip(&prob.weights) {
        for a in 0..d {
            rhs[a] += p * w[a] * y;
            for b in 0..d {
                m[(a, b)] += p * w[a] * w[b];
            }
        }
    }
    let min_sv = linalg::smallest_singular_value(&m);
    if min_sv < 1e-10 {
        return Err(AssignError::SingularDesign { min_sv });
    }
    let beta = linalg::solve(&m, &DMatrix::from_column_slice(d, 1, rhs.as_slice()))
        .ok_or(AssignError::SingularDesign { min_sv })?;
    let beta: Vec<f64> = beta.column(0).iter().copied().collect();

    let mut entries: Vec<(ObservedTuple, Assignment)> = Vec::with_capacity(prob.rows.len());
    let mut seen = std::collections::HashSet::new();
    for (y, w) in &prob.rows {
        let eta: f64 = y - w.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>();
        let mut vals = vec![*y];
        vals.extend_from_slice(w);
        let tuple = ObservedTuple::new(vals)?;
        // Identical rows get identical residuals; keep one entry so the map
        // stays a function.
        if seen.insert(tuple.clone()) {
            entries.push((
                tuple,
                Assignment {
                    latent: LatentValue::scalar(eta),
                    posterior: 1.0,
                    group: None,
                },
            ));
        }
    }
    Ok((beta, AssignmentMap::from_entries(entries)))
}
